#include "tdcosim/feeder_round.hpp"

#include <exception>
#include <string>

#include "tdcosim/error.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace tdcosim {

namespace {

FeederSolution solve_one(const FeederJob& job, const SweepOptions& opt) {
  const std::string where = "PCC bus " + std::to_string(job.pcc) + ": ";
  try {
    return sweep_solve(*job.feeder, job.head_v, opt);
  } catch (const ConvergenceError& e) {
    throw ConvergenceError(where + e.what(), e.history());
  } catch (const VoltageCollapseError& e) {
    throw VoltageCollapseError(where + e.what());
  } catch (const NumericalError& e) {
    throw NumericalError(where + e.what());
  } catch (const InputError& e) {
    throw InputError(where + e.what());
  }
}

}  // namespace

std::vector<FeederSolution> solve_feeders_serial(std::span<const FeederJob> jobs, const SweepOptions& opt) {
  std::vector<FeederSolution> out;
  out.reserve(jobs.size());
  for (const auto& job : jobs) out.push_back(solve_one(job, opt));
  return out;
}

std::vector<FeederSolution> solve_feeders_parallel(std::span<const FeederJob> jobs, const SweepOptions& opt,
                                                   int threads) {
  const auto n = static_cast<long>(jobs.size());
  std::vector<FeederSolution> out(jobs.size());
  std::vector<std::exception_ptr> errors(jobs.size());
#ifdef _OPENMP
  const int nt = threads > 0 ? threads : omp_get_max_threads();
#pragma omp parallel for schedule(dynamic, 1) num_threads(nt) if (nt != 1 && n > 1)
#else
  (void)threads;
#endif
  for (long k = 0; k < n; ++k) {
    const auto i = static_cast<std::size_t>(k);
    try {
      out[i] = solve_one(jobs[i], opt);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

}  // namespace tdcosim
