#include "cli.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

class CliTest : public ::testing::Test {
  protected:
    void SetUp() override {
        const auto *info = ::testing::UnitTest::GetInstance()->current_test_info();
        dir_ = fs::temp_directory_path() /
               (std::string("ufmlab_") + info->test_suite_name() + "_" + info->name());
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    fs::path write(const std::string &name, const std::string &text) {
        const fs::path p = dir_ / name;
        std::ofstream(p) << text;
        return p;
    }

    fs::path config(const json &problem, json extra = json::object()) {
        extra["problem"] = problem;
        if (!extra.contains("output"))
            extra["output"] = {{"directory", (dir_ / "out").string()}};
        return write("config.json", extra.dump());
    }

    int run(std::vector<std::string> args) {
        args.insert(args.begin(), "ufmlab");
        std::vector<const char *> argv;
        for (const auto &a : args)
            argv.push_back(a.c_str());
        out_.str("");
        err_.str("");
        return ufmlab::run_cli(static_cast<int>(argv.size()), argv.data(), out_, err_);
    }

    json read_json(const fs::path &p) {
        std::ifstream in(p);
        return json::parse(in);
    }

    static std::string slurp(const fs::path &p) {
        std::ifstream in(p);
        std::stringstream ss;
        ss << in.rdbuf();
        return ss.str();
    }

    static json small_problem(double delta = 0.1) {
        return {{"k", 3}, {"n", 2}, {"d", 4}, {"delta", delta},
                {"lambda_w", 5e-3}, {"lambda_h", 5e-3}, {"lambda_b", 5e-3}};
    }

    fs::path dir_;
    std::ostringstream out_, err_;
};

} // namespace

TEST_F(CliTest, HelpAndUsageErrors) {
    EXPECT_EQ(run({"--help"}), 0);
    EXPECT_NE(out_.str().find("solve"), std::string::npos);
    EXPECT_EQ(run({}), ufmlab::kConfigError);
    EXPECT_EQ(run({"bogus"}), ufmlab::kConfigError);
    EXPECT_EQ(run({"solve"}), ufmlab::kConfigError);
    EXPECT_EQ(run({"solve", "--config", (dir_ / "missing.json").string()}),
              ufmlab::kConfigError);
}

TEST_F(CliTest, RejectsUnknownAndInvalidKeys) {
    json p = small_problem();
    p["lambda"] = 1.0;
    EXPECT_EQ(run({"solve", "--config", config(p).string()}), ufmlab::kConfigError);
    EXPECT_NE(err_.str().find("lambda"), std::string::npos);

    p = small_problem();
    p["d"] = 2;
    EXPECT_EQ(run({"solve", "--config", config(p).string()}), ufmlab::kConfigError);

    p = small_problem();
    p["k"] = "three";
    EXPECT_EQ(run({"solve", "--config", config(p).string()}), ufmlab::kConfigError);

    write("bad.json", "{not json");
    EXPECT_EQ(run({"solve", "--config", (dir_ / "bad.json").string()}), ufmlab::kConfigError);
}

TEST_F(CliTest, SolveReportsClosedForm) {
    ASSERT_EQ(run({"solve", "--config", config(small_problem()).string()}), 0) << err_.str();
    const json r = read_json(dir_ / "out" / "solve.json");
    EXPECT_EQ(r["format_version"], 1);
    EXPECT_EQ(r["regime"], "interior");
    EXPECT_GT(r["a_delta"].get<double>(), 0.0);
    EXPECT_LT(r["stationarity_residual"].get<double>(), 1e-8);
    EXPECT_EQ(r["mean_logit_matrix"].size(), 3u);
}

TEST_F(CliTest, SolveBoundaryRegime) {
    ASSERT_EQ(run({"solve", "--config", config(small_problem(0.99)).string()}), 0);
    const json r = read_json(dir_ / "out" / "solve.json");
    EXPECT_EQ(r["regime"], "boundary");
    EXPECT_EQ(r["a_delta"].get<double>(), 0.0);
    EXPECT_EQ(r["w_norm"].get<double>(), 0.0);
    EXPECT_EQ(r["h_bar_norm"].get<double>(), 0.0);
}

TEST_F(CliTest, OptimizeIsDeterministic) {
    const json opt = {{"optimizer", {{"max_iters", 400}, {"record_every", 50}, {"seed", 3}}}};
    const auto cfg = config(small_problem(), opt).string();
    ASSERT_EQ(run({"optimize", "--config", cfg, "--out", (dir_ / "a").string()}), 0) << err_.str();
    ASSERT_EQ(run({"optimize", "--config", cfg, "--out", (dir_ / "b").string()}), 0);
    const std::string csv = slurp(dir_ / "a" / "trajectory.csv");
    EXPECT_EQ(csv, slurp(dir_ / "b" / "trajectory.csv"));
    EXPECT_EQ(csv.substr(0, csv.find('\n')), ufmlab::kTrajectoryHeader);
    EXPECT_EQ(slurp(dir_ / "a" / "optimize.json").size() > 0, true);

    ASSERT_EQ(run({"optimize", "--config", cfg, "--out", (dir_ / "c").string(), "--seed", "4"}),
              0);
    EXPECT_NE(csv, slurp(dir_ / "c" / "trajectory.csv"));
}

TEST_F(CliTest, OptimizeDivergenceExitsWithNumericalFailure) {
    const json opt = {{"optimizer", {{"learning_rate", 500.0}, {"init_scale", 3.0}}}};
    EXPECT_EQ(run({"optimize", "--config", config(small_problem(), opt).string()}),
              ufmlab::kNumericalFailure);
    EXPECT_NE(err_.str().find("diverged"), std::string::npos);
}

TEST_F(CliTest, SpectrumAgreesWithAnalytic) {
    json p = small_problem();
    p["k"] = 4;
    p["d"] = 6;
    const json extra = {{"spectrum", {{"embedding_seed", 5}}}};
    ASSERT_EQ(run({"spectrum", "--config", config(p, extra).string()}), 0) << err_.str();
    const json r = read_json(dir_ / "out" / "spectrum.json");
    EXPECT_LT(r["max_relative_deviation"].get<double>(), 1e-6);
    EXPECT_TRUE(r["feature_hessian"]["multiplicities_match"].get<bool>());
    EXPECT_TRUE(r["classifier_hessian"]["multiplicities_match"].get<bool>());
    EXPECT_NEAR(r["kappa_analytic"].get<double>(), r["kappa_formula"].get<double>(), 1e-10);
}

TEST_F(CliTest, SweepWritesTable) {
    const json extra = {{"optimizer", {{"max_iters", 500}, {"record_every", 10}}}};
    ASSERT_EQ(run({"sweep", "--config", config(small_problem(), extra).string(), "--deltas",
                   "0,0.1,0.99"}),
              0)
        << err_.str();
    const std::string csv = slurp(dir_ / "out" / "sweep.csv");
    EXPECT_EQ(csv.substr(0, csv.find('\n')), ufmlab::kSweepHeader);
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);
    const json r = read_json(dir_ / "out" / "sweep.json");
    EXPECT_TRUE(r["rows"][2]["boundary"].get<bool>());
    EXPECT_TRUE(r["rows"][2]["kappa_h"].is_null());

    EXPECT_EQ(run({"sweep", "--config", config(small_problem()).string()}), ufmlab::kConfigError);
}

TEST_F(CliTest, CalibrateWithHoldout) {
    const auto logits = write("logits.csv", "2.0,0.1,0.3\n0.1,1.5,-0.2\n-1.0,0.2,0.8\n"
                                            "3.0,0.0,0.0\n0.5,0.4,0.3\n0.0,2.0,1.0\n");
    const auto labels = write("labels.txt", "1\n2\n3\n2\n1\n2\n");
    const auto out = (dir_ / "cal").string();
    ASSERT_EQ(run({"calibrate", "--logits", logits.string(), "--labels", labels.string(),
                   "--bins", "5", "--out", out}),
              0)
        << err_.str();
    json r = read_json(dir_ / "cal" / "calibration.json");
    EXPECT_EQ(r["samples"], 6);
    EXPECT_TRUE(r["temperature"].is_null());
    EXPECT_EQ(r["bins"].size(), 5u);
    const std::string csv = slurp(dir_ / "cal" / "reliability.csv");
    EXPECT_EQ(csv.substr(0, csv.find('\n')), ufmlab::kReliabilityHeader);

    ASSERT_EQ(run({"calibrate", "--logits", logits.string(), "--labels", labels.string(),
                   "--fit-temperature", "--holdout-fraction", "0.5", "--out", out}),
              0)
        << err_.str();
    r = read_json(dir_ / "cal" / "calibration.json");
    EXPECT_EQ(r["samples"], 3);
    EXPECT_GT(r["temperature"].get<double>(), 0.0);

    EXPECT_EQ(run({"calibrate", "--logits", logits.string(), "--labels", labels.string(),
                   "--holdout-fraction", "0.5"}),
              ufmlab::kConfigError);
}

TEST_F(CliTest, CalibrateRejectsBadFiles) {
    const auto logits = write("logits.csv", "1,2\n3,4\n");
    EXPECT_EQ(run({"calibrate", "--logits", logits.string(), "--labels",
                   write("l1.txt", "1\n3\n").string()}),
              ufmlab::kConfigError);
    EXPECT_EQ(run({"calibrate", "--logits", logits.string(), "--labels",
                   write("l2.txt", "1\n").string()}),
              ufmlab::kConfigError);
    EXPECT_EQ(run({"calibrate", "--logits", write("ragged.csv", "1,2\n3\n").string(),
                   "--labels", write("l3.txt", "1\n2\n").string()}),
              ufmlab::kConfigError);
    EXPECT_EQ(run({"calibrate", "--logits", write("text.csv", "1,x\n").string(), "--labels",
                   write("l4.txt", "1\n").string()}),
              ufmlab::kConfigError);
}

TEST_F(CliTest, CheckExitCodes) {
    EXPECT_EQ(run({"check"}), 0) << out_.str();
    EXPECT_NE(out_.str().find("PASS self_duality"), std::string::npos);
    EXPECT_EQ(run({"check", "--perturb", "1e-3"}), ufmlab::kCheckFailed);
    EXPECT_NE(out_.str().find("FAIL"), std::string::npos);
}

TEST(FormatNumber, RoundTrips) {
    EXPECT_EQ(ufmlab::format_number(0.1), "0.1");
    EXPECT_EQ(ufmlab::format_number(std::nan("")), "nan");
    const double v = 1.0 / 3.0;
    EXPECT_EQ(std::stod(ufmlab::format_number(v)), v);
}
