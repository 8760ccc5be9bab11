#pragma once

#include "ufm/calibration.hpp"
#include "ufm/descent.hpp"
#include "ufm/problem.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace ufmlab {

inline constexpr int kFormatVersion = 1;

enum ExitCode : int {
    kSuccess = 0,
    kCheckFailed = 1,
    kConfigError = 2,
    kNumericalFailure = 3,
};

/// Parsed configuration file. Every section is validated before use.
struct RunConfig {
    ufm::ProblemConfig problem;
    ufm::OptimizerConfig optimizer;
    std::string output_directory = "ufmlab-out";
    std::vector<std::string> formats{"json", "csv"};
    std::vector<double> sweep_deltas;
    double sweep_eps_relative = 1e-4;
    std::optional<std::uint64_t> embedding_seed; // seeded P for `spectrum`

    bool wants(const std::string &format) const;
    void validate() const;
};

RunConfig parse_run_config(const nlohmann::json &doc);
RunConfig load_run_config(const std::filesystem::path &path);
nlohmann::ordered_json to_json(const RunConfig &cfg);

/// Headerless comma-separated matrix, one row per line.
ufm::Matrix read_matrix_csv(const std::filesystem::path &path);
void write_matrix_csv(const std::filesystem::path &path, const ufm::Matrix &m);

/// One 1-based class index per line; returned zero-based.
std::vector<int> read_labels(const std::filesystem::path &path);

/// Logits file holds one sample per line (M x K); labels one per line.
ufm::LogitDataset load_logit_dataset(const std::filesystem::path &logits,
                                     const std::filesystem::path &labels);

/// Shortest round-trip decimal text; "nan" for NaN.
std::string format_number(double v);

inline constexpr const char *kTrajectoryHeader =
    "iter,loss,nc1,nc2,nc3,w_norm,h_mean_norm,grad_norm,loss_gap";
inline constexpr const char *kSweepHeader =
    "delta,a_delta,w_norm,kappa_h,kappa_w,iters_to_eps,nc1,nc2,nc3";
inline constexpr const char *kReliabilityHeader =
    "bin_lower,bin_upper,confidence,accuracy,count";

void write_trajectory_csv(std::ostream &os, const ufm::Trajectory &traj);
void write_sweep_csv(std::ostream &os, const std::vector<ufm::SweepRow> &rows);
void write_reliability_csv(std::ostream &os, const std::vector<ufm::ReliabilityBin> &bins);

/// Entry point shared by the executable and the tests. Returns the exit code.
int run_cli(int argc, const char *const *argv, std::ostream &out, std::ostream &err);

} // namespace ufmlab
