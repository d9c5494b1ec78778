#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "tdcosim/cosim.hpp"

namespace tdcosim::cli {

enum ExitCode : int { kOk = 0, kNotConverged = 1, kInputError = 2 };

/// A feeder given as `path@bus` or `synth:N@bus`.
struct FeederArg {
  std::string source;
  BusId bus = 0;
};

FeederArg parse_feeder_arg(const std::string& text);

struct RunConfig {
  std::filesystem::path case_path;
  std::vector<FeederArg> feeders;
  std::vector<std::filesystem::path> loadshapes;
  double eps = 1e-4;
  int max_rounds = 50;
  int start_min = 0;
  int horizon_min = 60;
  int ed_interval_min = 5;
  int pf_interval_min = 1;
  std::filesystem::path out_dir;  ///< empty: no files written
  bool decoupled = false;
  bool no_dispatch = false;
  bool serial = false;
  double alpha = 0.0;
  std::vector<double> alphas{0.0, 0.05, 0.10, 0.15};
  std::uint64_t seed = 1;
  int jobs = 0;
  FailPolicy on_fail = FailPolicy::Abort;
};

struct SynthConfig {
  int nodes = 100;
  double p_mw = 52.1;
  double q_mvar = 11.7;
  double base_kv = 34.5;
  PhaseMix mix{0.6, 0.2, 0.2};
  std::uint64_t seed = 1;
  double alpha = 0.0;
  std::string id = "synth";
  std::filesystem::path output;  ///< empty: print to out
};

int cmd_snapshot(const RunConfig& cfg, std::ostream& out, std::ostream& err);
int cmd_timeseries(const RunConfig& cfg, std::ostream& out, std::ostream& err);
int cmd_sweep_unbalance(const RunConfig& cfg, std::ostream& out, std::ostream& err);
int cmd_validate(const std::vector<std::filesystem::path>& paths, std::ostream& out, std::ostream& err);
int cmd_synth(const SynthConfig& cfg, std::ostream& out, std::ostream& err);

/// Full front end: parses argv, dispatches to a subcommand, maps errors to
/// exit codes. TDCOSIM_JOBS overrides --jobs.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace tdcosim::cli
