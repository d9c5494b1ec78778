#pragma once

#include <span>
#include <vector>

#include "tdcosim/dsolve.hpp"

namespace tdcosim {

/// One job of a coupling round: a feeder and the head voltage it is driven with.
struct FeederJob {
  BusId pcc = 0;
  const Feeder* feeder = nullptr;
  PhaseVoltages head_v;
};

/// Reference implementation: solves the jobs one after another.
std::vector<FeederSolution> solve_feeders_serial(std::span<const FeederJob> jobs, const SweepOptions& opt);

/// OpenMP version. Each job writes only its own slot, so results are
/// identical to the serial version. `threads` <= 0 uses the OpenMP default.
/// The first failure (in job order) is rethrown after the parallel region,
/// prefixed with its PCC bus.
std::vector<FeederSolution> solve_feeders_parallel(std::span<const FeederJob> jobs, const SweepOptions& opt,
                                                   int threads = 0);

}  // namespace tdcosim
