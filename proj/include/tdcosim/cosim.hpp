#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "tdcosim/dsolve.hpp"
#include "tdcosim/ed.hpp"
#include "tdcosim/error.hpp"
#include "tdcosim/loadshape.hpp"
#include "tdcosim/netmodel.hpp"
#include "tdcosim/tsolve.hpp"

namespace tdcosim {

/// A feeder bound to the transmission bus it hangs from.
struct PccFeeder {
  BusId bus = 0;
  Feeder feeder;
  std::optional<std::string> loadshape_id;
};

enum class FeederExecution { Serial, Parallel };

struct CouplingOptions {
  double eps = 1e-4;  ///< per-phase |V| change between rounds, pu
  int max_rounds = 50;
  SequenceOptions sequence;
  SweepOptions sweep;
  FeederExecution execution = FeederExecution::Parallel;
  int threads = 0;  ///< <= 0: OpenMP default
};

/// What crossed one PCC in one coupling round.
struct BoundaryState {
  BusId pcc = 0;
  PhaseVoltages v_abc_sent;     ///< transmission → distribution, pu
  PhasePowers s_abc_returned;   ///< distribution → transmission, MVA
  int iteration = 0;
};

/// One row of the coupling trace: one PCC in one round.
struct CouplingRound {
  int iteration = 0;
  BusId pcc = 0;
  std::array<double, 3> v_transmission{};  ///< |V| per phase from this round's transmission solve
  std::array<double, 3> v_distribution{};  ///< |V| per phase the feeder power in use was computed at
  double mismatch = 0.0;  ///< max over phases of | |V^k| − |V^{k−1}| |; infinite in round 1
  double cross = 0.0;     ///< max over phases of |v_transmission − v_distribution|
};

struct CouplingTrace {
  std::vector<BusId> pccs;
  std::vector<CouplingRound> rounds;  ///< round-major, PCC order inside a round
  std::vector<BoundaryState> boundary;
  std::vector<int> iterations_to_converge;  ///< aligned with pccs
  int overall_iterations = 0;
  bool converged = false;

  int iterations_for(BusId pcc) const;
};

/// Raised when the coupling loop runs out of rounds; carries the full trace.
class CouplingError : public ConvergenceError {
 public:
  CouplingError(const std::string& what, CouplingTrace trace, std::vector<double> history)
      : ConvergenceError(what, std::move(history)), trace_(std::move(trace)) {}
  const CouplingTrace& trace() const { return trace_; }

 private:
  CouplingTrace trace_;
};

struct CoupledState {
  SequenceSolution transmission;
  std::vector<FeederSolution> feeders;  ///< aligned with trace.pccs
  std::vector<PhasePowers> pcc_load;    ///< MVA injected into the transmission model, aligned with pccs
};

struct StepResult {
  CoupledState state;
  CouplingTrace trace;
};

/// Sets generator p_set from a dispatch given in MW. `c` may be per-unit.
TransmissionCase apply_dispatch(const TransmissionCase& c, const DispatchResult& d);

/// Iterates transmission and feeder solves at one instant until every PCC
/// phase-voltage magnitude changes by less than eps between rounds.
/// `c` must be per-unit with a Feeder attachment at every PCC bus. When
/// `dispatch` is given its p_set (MW) replaces the generator setpoints.
StepResult couple_step(const TransmissionCase& c, const std::vector<PccFeeder>& feeders,
                       const DispatchResult* dispatch, const CouplingOptions& opt = {},
                       const SequenceSolution* warm_start = nullptr);

enum class FailPolicy { Abort, Continue };

struct TimeseriesOptions {
  int start_min = 0;
  int horizon_min = 60;
  int ed_interval_min = 5;
  int pf_interval_min = 1;
  CouplingOptions coupling;
  FailPolicy on_fail = FailPolicy::Abort;
  bool retain_feeder_solutions = false;
};

/// Boundary summary of one PCC at one time step.
struct PccSample {
  BusId bus = 0;
  PhaseVoltages v_transmission;  ///< pu
  PhaseVoltages v_distribution;  ///< pu; head voltage of the feeder solution in effect
  PhasePowers s_load;            ///< MVA
};

struct DispatchRecord {
  int minute = 0;
  double demand_mw = 0.0;
  DispatchResult result;
};

struct TimeStep {
  int minute = 0;
  bool converged = false;
  bool dispatched = false;  ///< a dispatch ran at this minute
  int dispatch_index = -1;  ///< index into CosimResult::dispatches in effect
  SequenceSolution transmission;
  std::vector<PccSample> pcc;
  CouplingTrace trace;
  std::vector<FeederSolution> feeders;  ///< only with retain_feeder_solutions
  double wall_seconds = 0.0;
  std::string error;
};

struct CosimResult {
  bool decoupled = false;
  bool aborted = false;
  std::vector<TimeStep> steps;
  std::vector<DispatchRecord> dispatches;

  std::size_t converged_steps() const;
  double mean_step_seconds() const;
};

/// Forecast demand (MW) at `minute`: scaled lumped loads plus scaled nominal
/// feeder demand. Losses are left to the slack bus.
double forecast_demand(const TransmissionCase& c, const std::vector<PccFeeder>& feeders, const LoadshapeSet& shapes,
                       int minute);

/// ED every ed_interval minutes, coupled load flow every pf_interval minutes.
/// Time advances only after a step converges; a failed step aborts the run
/// unless on_fail is Continue.
CosimResult run_timeseries(const TransmissionCase& c, const std::vector<PccFeeder>& feeders,
                           const LoadshapeSet& shapes, const TimeseriesOptions& opt);

/// Transmission-only run at the ED cadence with every feeder replaced by its
/// nominal per-phase aggregate demand scaled by its loadshape.
CosimResult run_decoupled_baseline(const TransmissionCase& c, const std::vector<PccFeeder>& feeders,
                                   const LoadshapeSet& shapes, const TimeseriesOptions& opt);

/// Coupled vs decoupled PCC voltages, minute by minute (baseline held between
/// its solves).
struct ComparisonRow {
  int minute = 0;
  BusId pcc = 0;
  int phase = 0;
  double v_coupled = 0.0;
  double v_decoupled = 0.0;
};

struct Comparison {
  std::vector<ComparisonRow> rows;
  /// max | |V_coupled| − |V_decoupled| | over minutes where both models solved.
  double max_abs_diff_common = 0.0;
};

Comparison compare_runs(const CosimResult& coupled, const CosimResult& decoupled);

struct UnbalanceRow {
  double alpha = 0.0;
  std::vector<int> iterations;  ///< per PCC, aligned with UnbalanceTable::pccs; -1 on failure
  int overall = -1;
  std::string error;
};

struct UnbalanceTable {
  std::vector<BusId> pccs;
  std::vector<UnbalanceRow> rows;
};

/// Coupling iteration counts per PCC and overall for each unbalance level.
/// Rows are independent and run concurrently when execution is Parallel.
UnbalanceTable sweep_unbalance(const TransmissionCase& c, const std::vector<PccFeeder>& feeders,
                               const std::vector<double>& alphas, const CouplingOptions& opt = {});

/// Replaces the load at each feeder bus by a Feeder attachment.
TransmissionCase attach_feeders(const TransmissionCase& c, const std::vector<PccFeeder>& feeders);

}  // namespace tdcosim
