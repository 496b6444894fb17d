#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace stmd::cli {

/// Process exit codes.
enum ExitCode : int {
  kSuccess = 0,
  kCheckFailed = 1,  // a verification ran and reported a violation
  kUsageError = 2,
  kNumericError = 3,
};

struct TrainArgs {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::string> output_dir;
  std::optional<std::string> resume;
};

struct SampleArgs {
  std::string checkpoint;
  std::optional<int> n_inf;
  std::optional<int> n_mf;
  long n = 2048;
  std::uint64_t seed = 0;
  std::optional<std::string> mask;
  std::optional<std::string> observation;
  std::optional<std::string> output_dir;
  bool raw_params = false;  // sample with the live parameters instead of the EMA
};

struct EvalArgs {
  std::vector<std::string> checkpoints;
  std::optional<std::string> config_path;
  std::vector<std::string> overrides;
  std::optional<long> n;
  std::optional<int> replicates;
  std::optional<std::string> nfe;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> output_dir;
};

struct BoundsArgs {
  std::optional<std::string> checkpoint;
  bool analytic = false;
  std::optional<std::string> config_path;
  std::vector<std::string> overrides;
  long n = 2048;
  int replicates = 4;
  int grid = 64;
  int draws = 4096;
  int pairs = 1024;
  std::uint64_t seed = 0;
  std::optional<std::string> output_dir;
};

struct ThresholdArgs {
  double m2 = 0.0;
  int d = 2;
  double eps1 = 0.0;
};

struct GradsArgs {
  int nets = 50;
  double tol = 1e-6;
  std::uint64_t seed = 0;
};

int cmd_train(const TrainArgs& args);
int cmd_sample(const SampleArgs& args);
int cmd_eval(const EvalArgs& args);
int cmd_verify_bounds(const BoundsArgs& args);
int cmd_threshold(const ThresholdArgs& args);
int cmd_check_grads(const GradsArgs& args);

/// "1,0;0,1" -> rows separated by ';', entries by ','.
std::vector<std::vector<double>> parse_matrix(const std::string& text);

}  // namespace stmd::cli
