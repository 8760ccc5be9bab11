#include "cli.hpp"

#include "ufm/check_suite.hpp"
#include "ufm/closed_form.hpp"
#include "ufm/nc_metrics.hpp"
#include "ufm/spectral.hpp"
#include "ufm/theory.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

namespace ufmlab {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Config

namespace {

void reject_unknown_keys(const json &obj, std::initializer_list<const char *> allowed,
                         const std::string &where) {
    if (!obj.is_object())
        throw ufm::ConfigError(where + " must be an object");
    for (const auto &item : obj.items()) {
        const bool known = std::any_of(allowed.begin(), allowed.end(),
                                       [&](const char *k) { return item.key() == k; });
        if (!known)
            throw ufm::ConfigError("unknown key '" + item.key() + "' in " + where);
    }
}

template <class T>
void read_field(const json &obj, const char *key, T &dst, const std::string &where,
                bool required = false) {
    const auto it = obj.find(key);
    if (it == obj.end()) {
        if (required)
            throw ufm::ConfigError("missing required key '" + std::string(key) + "' in " +
                                   where);
        return;
    }
    try {
        if constexpr (std::is_integral_v<T>) {
            if (!it->is_number_integer())
                throw ufm::ConfigError(where + "." + key + " must be an integer");
            if constexpr (std::is_unsigned_v<T>) {
                if (!it->is_number_unsigned())
                    throw ufm::ConfigError(where + "." + key + " must be nonnegative");
            }
        } else if constexpr (std::is_floating_point_v<T>) {
            if (!it->is_number())
                throw ufm::ConfigError(where + "." + key + " must be a number");
        }
        dst = it->get<T>();
    } catch (const json::exception &e) {
        throw ufm::ConfigError(where + "." + key + ": " + e.what());
    }
}

} // namespace

bool RunConfig::wants(const std::string &format) const {
    return std::find(formats.begin(), formats.end(), format) != formats.end();
}

void RunConfig::validate() const {
    problem.validate();
    optimizer.validate();
    for (const auto &f : formats)
        if (f != "json" && f != "csv")
            throw ufm::ConfigError("unsupported output format '" + f + "' (use json, csv)");
    for (double d : sweep_deltas)
        if (!(d >= 0.0 && d < 1.0))
            throw ufm::ConfigError("sweep delta outside [0, 1)");
    if (!(sweep_eps_relative > 0.0 && sweep_eps_relative < 1.0))
        throw ufm::ConfigError("sweep.eps_relative must lie in (0, 1)");
}

RunConfig parse_run_config(const json &doc) {
    reject_unknown_keys(doc, {"problem", "optimizer", "output", "sweep", "spectrum"}, "config");
    RunConfig cfg;
    if (!doc.contains("problem"))
        throw ufm::ConfigError("missing required section 'problem'");

    const json &p = doc.at("problem");
    reject_unknown_keys(p, {"k", "n", "d", "delta", "lambda_w", "lambda_h", "lambda_b"},
                        "problem");
    read_field(p, "k", cfg.problem.K, "problem", true);
    read_field(p, "n", cfg.problem.n, "problem", true);
    read_field(p, "d", cfg.problem.d, "problem", true);
    read_field(p, "delta", cfg.problem.delta, "problem", true);
    read_field(p, "lambda_w", cfg.problem.lambda_w, "problem", true);
    read_field(p, "lambda_h", cfg.problem.lambda_h, "problem", true);
    cfg.problem.lambda_b = cfg.problem.lambda_w;
    read_field(p, "lambda_b", cfg.problem.lambda_b, "problem");

    if (doc.contains("optimizer")) {
        const json &o = doc.at("optimizer");
        reject_unknown_keys(o,
                            {"learning_rate", "momentum", "max_iters", "loss_tol",
                             "record_every", "init_scale", "seed"},
                            "optimizer");
        read_field(o, "learning_rate", cfg.optimizer.learning_rate, "optimizer");
        read_field(o, "momentum", cfg.optimizer.momentum, "optimizer");
        read_field(o, "max_iters", cfg.optimizer.max_iters, "optimizer");
        read_field(o, "loss_tol", cfg.optimizer.loss_tol, "optimizer");
        read_field(o, "record_every", cfg.optimizer.record_every, "optimizer");
        read_field(o, "init_scale", cfg.optimizer.init_scale, "optimizer");
        read_field(o, "seed", cfg.optimizer.seed, "optimizer");
    }
    if (doc.contains("output")) {
        const json &o = doc.at("output");
        reject_unknown_keys(o, {"directory", "formats"}, "output");
        read_field(o, "directory", cfg.output_directory, "output");
        read_field(o, "formats", cfg.formats, "output");
    }
    if (doc.contains("sweep")) {
        const json &s = doc.at("sweep");
        reject_unknown_keys(s, {"deltas", "eps_relative"}, "sweep");
        read_field(s, "deltas", cfg.sweep_deltas, "sweep");
        read_field(s, "eps_relative", cfg.sweep_eps_relative, "sweep");
    }
    if (doc.contains("spectrum")) {
        const json &s = doc.at("spectrum");
        reject_unknown_keys(s, {"embedding_seed"}, "spectrum");
        if (s.contains("embedding_seed") && !s.at("embedding_seed").is_null()) {
            std::uint64_t seed = 0;
            read_field(s, "embedding_seed", seed, "spectrum");
            cfg.embedding_seed = seed;
        }
    }
    cfg.validate();
    return cfg;
}

RunConfig load_run_config(const fs::path &path) {
    std::ifstream in(path);
    if (!in)
        throw ufm::ConfigError("cannot open config file " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error &e) {
        throw ufm::ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
    }
    return parse_run_config(doc);
}

ojson to_json(const RunConfig &cfg) {
    ojson j;
    j["problem"] = {{"k", cfg.problem.K},
                    {"n", cfg.problem.n},
                    {"d", cfg.problem.d},
                    {"delta", cfg.problem.delta},
                    {"lambda_w", cfg.problem.lambda_w},
                    {"lambda_h", cfg.problem.lambda_h},
                    {"lambda_b", cfg.problem.lambda_b}};
    j["optimizer"] = {{"learning_rate", cfg.optimizer.learning_rate},
                      {"momentum", cfg.optimizer.momentum},
                      {"max_iters", cfg.optimizer.max_iters},
                      {"loss_tol", cfg.optimizer.loss_tol},
                      {"record_every", cfg.optimizer.record_every},
                      {"init_scale", cfg.optimizer.init_scale},
                      {"seed", cfg.optimizer.seed}};
    j["output"] = {{"directory", cfg.output_directory}, {"formats", cfg.formats}};
    j["sweep"] = {{"deltas", cfg.sweep_deltas}, {"eps_relative", cfg.sweep_eps_relative}};
    j["spectrum"] = {{"embedding_seed", cfg.embedding_seed ? ojson(*cfg.embedding_seed)
                                                           : ojson(nullptr)}};
    return j;
}

// ---------------------------------------------------------------------------
// Files

std::string format_number(double v) {
    if (std::isnan(v))
        return "nan";
    if (std::isinf(v))
        return v > 0 ? "inf" : "-inf";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

namespace {

std::vector<std::string> split_csv_line(const std::string &line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ','))
        cells.push_back(cell);
    if (!line.empty() && line.back() == ',')
        cells.emplace_back();
    return cells;
}

std::string trim(std::string s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos)
        return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

double parse_double(const std::string &text, const std::string &where) {
    const std::string t = trim(text);
    double v = 0.0;
    const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
    if (t.empty() || res.ec != std::errc() || res.ptr != t.data() + t.size())
        throw ufm::ConfigError(where + ": cannot parse number '" + t + "'");
    return v;
}

} // namespace

ufm::Matrix read_matrix_csv(const fs::path &path) {
    std::ifstream in(path);
    if (!in)
        throw ufm::ConfigError("cannot open matrix file " + path.string());
    std::vector<std::vector<double>> rows;
    std::string line;
    long lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty())
            continue;
        std::vector<double> row;
        for (const auto &cell : split_csv_line(line))
            row.push_back(parse_double(cell, path.string() + ":" + std::to_string(lineno)));
        if (!rows.empty() && row.size() != rows.front().size())
            throw ufm::ConfigError(path.string() + ":" + std::to_string(lineno) +
                                   ": ragged row");
        rows.push_back(std::move(row));
    }
    if (rows.empty())
        throw ufm::ConfigError("matrix file " + path.string() + " is empty");
    ufm::Matrix m(static_cast<Eigen::Index>(rows.size()),
                  static_cast<Eigen::Index>(rows.front().size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows[i].size(); ++j)
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    return m;
}

void write_matrix_csv(const fs::path &path, const ufm::Matrix &m) {
    std::ofstream out(path);
    if (!out)
        throw ufm::ConfigError("cannot write " + path.string());
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j)
            out << (j ? "," : "") << format_number(m(i, j));
        out << '\n';
    }
}

std::vector<int> read_labels(const fs::path &path) {
    std::ifstream in(path);
    if (!in)
        throw ufm::ConfigError("cannot open label file " + path.string());
    std::vector<int> labels;
    std::string line;
    long lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty())
            continue;
        int v = 0;
        const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
        if (res.ec != std::errc() || res.ptr != t.data() + t.size() || v < 1)
            throw ufm::ConfigError(path.string() + ":" + std::to_string(lineno) +
                                   ": labels must be positive integers (1-based)");
        labels.push_back(v - 1);
    }
    return labels;
}

ufm::LogitDataset load_logit_dataset(const fs::path &logits, const fs::path &labels) {
    ufm::LogitDataset ds{read_matrix_csv(logits).transpose(), read_labels(labels)};
    if (static_cast<Eigen::Index>(ds.labels.size()) != ds.logits.cols())
        throw ufm::ConfigError("logits file has " + std::to_string(ds.logits.cols()) +
                               " samples but labels file has " +
                               std::to_string(ds.labels.size()));
    if (ds.logits.rows() < 2)
        throw ufm::ConfigError("logits need at least two classes per sample");
    for (int y : ds.labels)
        if (y >= ds.logits.rows())
            throw ufm::ConfigError("label " + std::to_string(y + 1) + " exceeds class count " +
                                   std::to_string(ds.logits.rows()));
    if (!ds.logits.allFinite())
        throw ufm::ConfigError("logits file contains non-finite values");
    return ds;
}

void write_trajectory_csv(std::ostream &os, const ufm::Trajectory &traj) {
    os << kTrajectoryHeader << '\n';
    for (const auto &r : traj.rows)
        os << r.iter << ',' << format_number(r.loss) << ',' << format_number(r.nc1) << ','
           << format_number(r.nc2) << ',' << format_number(r.nc3) << ','
           << format_number(r.w_norm) << ',' << format_number(r.h_mean_norm) << ','
           << format_number(r.grad_norm) << ',' << format_number(r.loss_gap) << '\n';
}

void write_sweep_csv(std::ostream &os, const std::vector<ufm::SweepRow> &rows) {
    os << kSweepHeader << '\n';
    for (const auto &r : rows)
        os << format_number(r.delta) << ',' << format_number(r.a_delta) << ','
           << format_number(r.w_norm) << ',' << format_number(r.kappa_h) << ','
           << format_number(r.kappa_w) << ','
           << (r.iters_to_eps ? std::to_string(*r.iters_to_eps) : std::string("nan")) << ','
           << format_number(r.nc1) << ',' << format_number(r.nc2) << ','
           << format_number(r.nc3) << '\n';
}

void write_reliability_csv(std::ostream &os, const std::vector<ufm::ReliabilityBin> &bins) {
    os << kReliabilityHeader << '\n';
    for (const auto &b : bins)
        os << format_number(b.lower) << ',' << format_number(b.upper) << ','
           << format_number(b.mean_confidence) << ',' << format_number(b.accuracy) << ','
           << b.count << '\n';
}

// ---------------------------------------------------------------------------
// Subcommands

namespace {

ojson number_or_null(double v) { return std::isfinite(v) ? ojson(v) : ojson(nullptr); }

ojson matrix_json(const ufm::Matrix &m) {
    ojson rows = ojson::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        ojson row = ojson::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j)
            row.push_back(m(i, j));
        rows.push_back(row);
    }
    return rows;
}

ojson spectrum_json(const ufm::SpectrumReport &r) {
    ojson pairs = ojson::array();
    for (const auto &e : r.eigenpairs)
        pairs.push_back({{"value", e.value}, {"multiplicity", e.multiplicity}});
    return {{"source", ufm::to_string(r.source)},
            {"dimension", r.dimension()},
            {"eigenpairs", pairs},
            {"condition_number", number_or_null(r.condition_number)},
            {"min_eigenvalue", r.min_eigenvalue},
            {"degenerate", r.degenerate},
            {"note", r.note}};
}

ojson report_header(const char *command, const RunConfig &cfg) {
    ojson j;
    j["format_version"] = kFormatVersion;
    j["command"] = command;
    j["config"] = to_json(cfg);
    return j;
}

void write_json(const fs::path &path, const ojson &j) {
    std::ofstream out(path);
    if (!out)
        throw ufm::ConfigError("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

void write_text(const fs::path &path, const std::string &text) {
    std::ofstream out(path);
    if (!out)
        throw ufm::ConfigError("cannot write " + path.string());
    out << text;
}

fs::path prepare_dir(const std::string &dir) {
    fs::path p(dir);
    std::error_code ec;
    fs::create_directories(p, ec);
    if (ec)
        throw ufm::ConfigError("cannot create output directory " + dir + ": " + ec.message());
    return p;
}

const char *regime_name(const ufm::ProblemConfig &cfg) {
    return cfg.interior() ? "interior" : "boundary";
}

ojson nc_json(const ufm::ModelState &s, const ufm::ProblemConfig &cfg) {
    const auto fs_ = ufm::FeatureSet::balanced(s.H, cfg.K, cfg.n);
    const auto c1 = ufm::nc1(fs_);
    ojson j;
    j["nc1"] = c1.status == ufm::MetricStatus::between_vanishes ? ojson(nullptr)
                                                                 : ojson(c1.value);
    j["nc1_degenerate"] = c1.status != ufm::MetricStatus::ok;
    try {
        j["nc2"] = ufm::nc2(s.W, fs_);
        j["nc3"] = ufm::nc3(s.W, fs_);
    } catch (const std::domain_error &) {
        j["nc2"] = nullptr;
        j["nc3"] = nullptr;
    }
    return j;
}

int cmd_solve(const RunConfig &cfg, std::ostream &out) {
    const auto &pc = cfg.problem;
    const ufm::ModelState s = ufm::global_minimizer(pc);
    const auto probs = ufm::class_probabilities(pc);
    const ufm::Matrix mean_logits = ufm::mean_logit_matrix(pc);
    const ufm::Matrix class_means = s.H(Eigen::all, Eigen::seqN(0, pc.K, pc.n));

    ojson j = report_header("solve", cfg);
    j["regime"] = regime_name(pc);
    j["regime_threshold"] = pc.regime_threshold();
    j["a_delta"] = ufm::logit_scale(pc);
    j["p_t"] = probs.p_t;
    j["p_n"] = probs.p_n;
    j["w_norm"] = s.W.norm();
    j["h_bar_norm"] = class_means.norm();
    j["optimal_loss"] = ufm::ufm_loss(s, pc);
    j["stationarity_residual"] = ufm::ufm_gradient(s, pc).norm();
    j["product_residual"] = (s.W.transpose() * class_means - mean_logits).norm();
    j["duality_gap"] = ufm::duality_gap(s.W, class_means, pc);
    j["mean_logit_matrix"] = matrix_json(mean_logits);
    j["metrics"] = nc_json(s, pc);

    const fs::path dir = prepare_dir(cfg.output_directory);
    if (cfg.wants("json"))
        write_json(dir / "solve.json", j);
    out << "solve: a_delta=" << format_number(j["a_delta"].get<double>())
        << " stationarity_residual=" << format_number(j["stationarity_residual"].get<double>())
        << " -> " << (dir / "solve.json").string() << '\n';
    return kSuccess;
}

int cmd_optimize(const RunConfig &cfg, std::ostream &out) {
    const auto &pc = cfg.problem;
    const ufm::Trajectory traj = ufm::run(pc, cfg.optimizer);
    const auto &last = traj.rows.back();
    const ufm::Matrix class_means =
        ufm::class_statistics(ufm::FeatureSet::balanced(traj.final_state.H, pc.K, pc.n))
            .class_means;

    ojson j = report_header("optimize", cfg);
    j["regime"] = regime_name(pc);
    j["converged"] = traj.converged;
    j["iterations"] = traj.iterations;
    j["optimal_loss"] = traj.optimal_loss;
    j["final"] = {{"loss", last.loss},
                  {"loss_gap", last.loss_gap},
                  {"nc1", number_or_null(last.nc1)},
                  {"nc2", number_or_null(last.nc2)},
                  {"nc3", number_or_null(last.nc3)},
                  {"w_norm", last.w_norm},
                  {"h_mean_norm", last.h_mean_norm},
                  {"grad_norm", traj.final_grad_norm},
                  {"logit_deviation", last.logit_deviation},
                  {"duality_gap", ufm::duality_gap(traj.final_state.W, class_means, pc)},
                  {"logit_spread", ufm::logit_spread(traj.final_state, pc)}};

    const fs::path dir = prepare_dir(cfg.output_directory);
    if (cfg.wants("csv")) {
        std::ostringstream csv;
        write_trajectory_csv(csv, traj);
        write_text(dir / "trajectory.csv", csv.str());
    }
    if (cfg.wants("json"))
        write_json(dir / "optimize.json", j);
    out << "optimize: " << (traj.converged ? "converged" : "stopped") << " after "
        << traj.iterations << " iterations, loss_gap=" << format_number(last.loss_gap) << '\n';
    return kSuccess;
}

int cmd_spectrum(const RunConfig &cfg, std::ostream &out) {
    const auto &pc = cfg.problem;
    const ufm::Matrix P = ufm::partial_orthogonal(pc.d, pc.K, cfg.embedding_seed);
    const ufm::ModelState s = ufm::global_minimizer(pc, P);
    const auto probs = ufm::class_probabilities(pc);

    const auto feat_a = ufm::analytic_feature_hessian_spectrum(pc);
    const auto feat_n = ufm::numeric_spectrum(ufm::numeric_hessian_features(s, pc));
    const auto cls_a = ufm::analytic_classifier_hessian_spectrum(pc);
    const auto cls_n = ufm::numeric_spectrum(ufm::numeric_hessian_classifier(s, pc));
    const auto feat_cmp = ufm::compare_spectra(feat_a, feat_n);
    const auto cls_cmp = ufm::compare_spectra(cls_a, cls_n);

    ojson j = report_header("spectrum", cfg);
    j["regime"] = regime_name(pc);
    j["p_t"] = probs.p_t;
    j["p_n"] = probs.p_n;
    j["kappa_analytic"] = pc.K * probs.p_t;
    j["kappa_formula"] =
        pc.interior() ? ojson(pc.K - (pc.K - 1) * pc.regime_threshold()) : ojson(nullptr);
    j["feature_hessian"] = {{"analytic", spectrum_json(feat_a)},
                            {"numeric", spectrum_json(feat_n)},
                            {"multiplicities_match", feat_cmp.multiplicities_match},
                            {"max_relative_deviation",
                             number_or_null(feat_cmp.max_relative_deviation)}};
    j["classifier_hessian"] = {{"analytic", spectrum_json(cls_a)},
                               {"numeric", spectrum_json(cls_n)},
                               {"multiplicities_match", cls_cmp.multiplicities_match},
                               {"max_relative_deviation",
                                number_or_null(cls_cmp.max_relative_deviation)}};
    j["max_relative_deviation"] = number_or_null(
        std::max(feat_cmp.max_relative_deviation, cls_cmp.max_relative_deviation));

    const fs::path dir = prepare_dir(cfg.output_directory);
    if (cfg.wants("json"))
        write_json(dir / "spectrum.json", j);
    out << "spectrum: kappa_analytic=" << format_number(pc.K * probs.p_t)
        << " kappa_h(numeric)=" << format_number(feat_n.condition_number)
        << " kappa_w(numeric)=" << format_number(cls_n.condition_number) << '\n';
    return kSuccess;
}

int cmd_sweep(const RunConfig &cfg, std::ostream &out) {
    if (cfg.sweep_deltas.empty())
        throw ufm::ConfigError("sweep needs deltas (--deltas or sweep.deltas)");
    const auto rows = ufm::delta_sweep(cfg.problem, cfg.sweep_deltas, cfg.optimizer,
                                       {cfg.sweep_eps_relative});
    ojson j = report_header("sweep", cfg);
    ojson arr = ojson::array();
    for (const auto &r : rows)
        arr.push_back({{"delta", r.delta},
                       {"a_delta", r.a_delta},
                       {"w_norm", r.w_norm},
                       {"h_bar_norm", r.h_bar_norm},
                       {"kappa_h", number_or_null(r.kappa_h)},
                       {"kappa_w", number_or_null(r.kappa_w)},
                       {"iters_to_eps", r.iters_to_eps ? ojson(*r.iters_to_eps) : ojson(nullptr)},
                       {"nc1", number_or_null(r.nc1)},
                       {"nc2", number_or_null(r.nc2)},
                       {"nc3", number_or_null(r.nc3)},
                       {"boundary", r.boundary}});
    j["rows"] = arr;

    const fs::path dir = prepare_dir(cfg.output_directory);
    if (cfg.wants("csv")) {
        std::ostringstream csv;
        write_sweep_csv(csv, rows);
        write_text(dir / "sweep.csv", csv.str());
    }
    if (cfg.wants("json"))
        write_json(dir / "sweep.json", j);
    out << "sweep: " << rows.size() << " rows\n";
    return kSuccess;
}

struct CalibrateArgs {
    std::string logits;
    std::string labels;
    int bins = 20;
    bool fit_temperature = false;
    double holdout_fraction = 0.0;
    std::string out_dir = "ufmlab-out";
};

int cmd_calibrate(const CalibrateArgs &args, std::ostream &out) {
    if (args.bins < 1)
        throw ufm::ConfigError("--bins must be positive");
    if (!(args.holdout_fraction >= 0.0 && args.holdout_fraction < 1.0))
        throw ufm::ConfigError("--holdout-fraction must lie in [0, 1)");
    if (args.holdout_fraction > 0.0 && !args.fit_temperature)
        throw ufm::ConfigError("--holdout-fraction requires --fit-temperature");

    const ufm::LogitDataset all = load_logit_dataset(args.logits, args.labels);
    ufm::LogitDataset eval = all;
    std::optional<ufm::LogitDataset> fit_set;
    if (args.fit_temperature) {
        if (args.holdout_fraction > 0.0) {
            const auto M = all.size();
            const auto held = static_cast<Eigen::Index>(
                std::ceil(args.holdout_fraction * static_cast<double>(M)));
            if (held < 1 || held >= M)
                throw ufm::ConfigError("holdout split leaves an empty part");
            const auto kept = M - held;
            eval = {all.logits.leftCols(kept),
                    std::vector<int>(all.labels.begin(), all.labels.begin() + kept)};
            fit_set = ufm::LogitDataset{all.logits.rightCols(held),
                                        std::vector<int>(all.labels.begin() + kept,
                                                         all.labels.end())};
        } else {
            fit_set = all;
        }
    }
    const ufm::CalibrationReport r =
        ufm::calibrate(eval, args.bins, fit_set ? &*fit_set : nullptr);

    ojson j;
    j["format_version"] = kFormatVersion;
    j["command"] = "calibrate";
    j["inputs"] = {{"logits", args.logits},
                   {"labels", args.labels},
                   {"bins", args.bins},
                   {"fit_temperature", args.fit_temperature},
                   {"holdout_fraction", args.holdout_fraction}};
    j["samples"] = eval.size();
    j["classes"] = eval.classes();
    j["ece"] = r.ece;
    j["ece_before"] = r.ece_before;
    j["temperature"] = r.temperature ? ojson(*r.temperature) : ojson(nullptr);
    j["nll_before"] = r.nll_before;
    j["nll_after"] = r.nll_after;
    j["mean_entropy"] = r.mean_entropy;
    j["accuracy"] = r.accuracy;
    ojson bins = ojson::array();
    for (const auto &b : r.bins)
        bins.push_back({{"lower", b.lower},
                        {"upper", b.upper},
                        {"mean_confidence", b.mean_confidence},
                        {"accuracy", b.accuracy},
                        {"count", b.count}});
    j["bins"] = bins;

    const fs::path dir = prepare_dir(args.out_dir);
    write_json(dir / "calibration.json", j);
    std::ostringstream csv;
    write_reliability_csv(csv, r.bins);
    write_text(dir / "reliability.csv", csv.str());
    out << "calibrate: ece=" << format_number(r.ece) << " accuracy=" << format_number(r.accuracy);
    if (r.temperature)
        out << " T=" << format_number(*r.temperature);
    out << '\n';
    return kSuccess;
}

int cmd_check(double perturbation, std::uint64_t seed, std::ostream &out) {
    ufm::CheckOptions opts;
    opts.perturbation = perturbation;
    opts.seed = seed;
    const auto results = ufm::run_theory_checks(opts);
    std::size_t passed = 0;
    for (const auto &r : results) {
        out << (r.passed ? "PASS " : "FAIL ") << r.name << ": " << r.detail << '\n';
        passed += r.passed ? 1 : 0;
    }
    out << passed << "/" << results.size() << " checks passed\n";
    return passed == results.size() ? kSuccess : kCheckFailed;
}

} // namespace

int run_cli(int argc, const char *const *argv, std::ostream &out, std::ostream &err) {
    CLI::App app{"Unconstrained feature model laboratory: closed-form minimizers, Hessian "
                 "spectra, neural-collapse metrics and calibration"};
    app.name("ufmlab");
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir;
    std::uint64_t seed = 0;
    std::vector<double> deltas;

    const auto add_common = [&](CLI::App *sub) {
        sub->add_option("--config", config_path, "JSON run configuration")->required();
        sub->add_option("--out", out_dir, "output directory (overrides output.directory)");
        sub->add_option("--seed", seed, "override optimizer.seed");
    };
    CLI::App *solve = app.add_subcommand("solve", "closed-form global minimizer report");
    add_common(solve);
    CLI::App *optimize = app.add_subcommand("optimize", "gradient descent trajectory");
    add_common(optimize);
    CLI::App *spectrum = app.add_subcommand("spectrum", "analytic vs numeric Hessian spectra");
    add_common(spectrum);
    CLI::App *sweep = app.add_subcommand("sweep", "smoothing-parameter sweep table");
    add_common(sweep);
    sweep->add_option("--deltas", deltas, "comma-separated smoothing values")->delimiter(',');

    CalibrateArgs cal;
    CLI::App *calibrate = app.add_subcommand("calibrate", "ECE, reliability bins, temperature");
    calibrate->add_option("--logits", cal.logits, "CSV, one sample per line")->required();
    calibrate->add_option("--labels", cal.labels, "one 1-based label per line")->required();
    calibrate->add_option("--bins", cal.bins, "number of equal-width bins")
        ->capture_default_str();
    calibrate->add_flag("--fit-temperature", cal.fit_temperature, "fit T by NLL");
    calibrate->add_option("--holdout-fraction", cal.holdout_fraction,
                          "fit T on this trailing fraction, evaluate on the rest");
    calibrate->add_option("--out", cal.out_dir, "output directory")->capture_default_str();

    double perturbation = 0.0;
    std::uint64_t check_seed = 2024;
    CLI::App *check = app.add_subcommand("check", "run the numerical theory checks");
    check->add_option("--perturb", perturbation, "perturb every inspected optimum (fixture)");
    check->add_option("--seed", check_seed, "random seed")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kSuccess : kConfigError;
    }

    try {
        if (calibrate->parsed())
            return cmd_calibrate(cal, out);
        if (check->parsed())
            return cmd_check(perturbation, check_seed, out);

        RunConfig cfg = load_run_config(config_path);
        CLI::App *used = app.get_subcommands().front();
        if (used->count("--seed") > 0)
            cfg.optimizer.seed = seed;
        if (!out_dir.empty())
            cfg.output_directory = out_dir;
        if (!deltas.empty())
            cfg.sweep_deltas = deltas;
        cfg.validate();

        if (solve->parsed())
            return cmd_solve(cfg, out);
        if (optimize->parsed())
            return cmd_optimize(cfg, out);
        if (spectrum->parsed())
            return cmd_spectrum(cfg, out);
        if (sweep->parsed())
            return cmd_sweep(cfg, out);
    } catch (const ufm::ConfigError &e) {
        err << "configuration error: " << e.what() << '\n';
        return kConfigError;
    } catch (const ufm::NumericalError &e) {
        err << "numerical failure: " << e.what() << '\n';
        return kNumericalFailure;
    } catch (const std::invalid_argument &e) {
        err << "invalid input: " << e.what() << '\n';
        return kConfigError;
    } catch (const std::exception &e) {
        err << "numerical failure: " << e.what() << '\n';
        return kNumericalFailure;
    }
    return kConfigError;
}

} // namespace ufmlab
