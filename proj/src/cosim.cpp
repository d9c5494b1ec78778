#include "tdcosim/cosim.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <limits>
#include <sstream>

#include "tdcosim/feeder_round.hpp"

namespace tdcosim {

int CouplingTrace::iterations_for(BusId pcc) const {
  for (std::size_t k = 0; k < pccs.size(); ++k) {
    if (pccs[k] == pcc) return iterations_to_converge[k];
  }
  throw InputError("no PCC at bus " + std::to_string(pcc));
}

std::size_t CosimResult::converged_steps() const {
  return static_cast<std::size_t>(std::count_if(steps.begin(), steps.end(), [](const TimeStep& s) { return s.converged; }));
}

double CosimResult::mean_step_seconds() const {
  if (steps.empty()) return 0.0;
  double total = 0.0;
  for (const auto& s : steps) total += s.wall_seconds;
  return total / static_cast<double>(steps.size());
}

namespace {

double power_to_mw(const TransmissionCase& c) { return c.power_unit == PowerUnit::PerUnit ? c.base_mva : 1.0; }

std::array<double, 3> magnitudes(const PhaseVoltages& v) {
  return {std::abs(v[0]), std::abs(v[1]), std::abs(v[2])};
}

Feeder scaled(const Feeder& f, double m) {
  Feeder out = f;
  if (m != 1.0) {
    for (auto& ld : out.loads) ld.s = m * ld.s;
  }
  return out;
}

void check_pccs(const TransmissionCase& c, const std::vector<PccFeeder>& feeders) {
  for (std::size_t k = 0; k < feeders.size(); ++k) {
    const BusId bus = feeders[k].bus;
    const bool attached = std::any_of(c.loads.begin(), c.loads.end(),
                                      [bus](const LoadAttachment& l) { return l.bus == bus && l.is_feeder(); });
    if (!attached) throw InputError("bus " + std::to_string(bus) + " has no feeder attachment");
    for (std::size_t j = 0; j < k; ++j) {
      if (feeders[j].bus == bus) throw InputError("two feeders bound to bus " + std::to_string(bus));
    }
  }
}

}  // namespace

TransmissionCase apply_dispatch(const TransmissionCase& c, const DispatchResult& d) {
  if (d.p_set.size() != c.generators.size()) throw InputError("dispatch does not match the generator list");
  TransmissionCase out = c;
  const double k = 1.0 / power_to_mw(c);
  for (std::size_t i = 0; i < out.generators.size(); ++i) out.generators[i].p_set = d.p_set[i] * k;
  return out;
}

TransmissionCase attach_feeders(const TransmissionCase& c, const std::vector<PccFeeder>& feeders) {
  TransmissionCase out = c;
  for (const auto& pf : feeders) {
    std::erase_if(out.loads, [&pf](const LoadAttachment& l) { return l.bus == pf.bus; });
    LoadAttachment la;
    la.bus = pf.bus;
    la.kind = FeederRef{pf.feeder.id};
    la.loadshape_id = pf.loadshape_id;
    out.loads.push_back(la);
  }
  return out;
}

StepResult couple_step(const TransmissionCase& c, const std::vector<PccFeeder>& feeders,
                       const DispatchResult* dispatch, const CouplingOptions& opt,
                       const SequenceSolution* warm_start) {
  if (!(opt.eps > 0.0)) throw InputError("coupling tolerance eps must be positive");
  if (opt.max_rounds < 1) throw InputError("max_rounds must be at least 1");
  if (!c.is_per_unit()) throw InputError("couple_step expects a per-unit case");
  check_pccs(c, feeders);

  const TransmissionCase tc = dispatch ? apply_dispatch(c, *dispatch) : c;
  const SequenceYBus ybus = build_sequence_ybus(tc);
  const std::size_t np = feeders.size();

  StepResult out;
  CouplingTrace& trace = out.trace;
  for (const auto& pf : feeders) trace.pccs.push_back(pf.bus);
  trace.iterations_to_converge.assign(np, 0);

  // Round-1 bootstrap: nominal per-phase demand seen at 1.0 pu.
  std::vector<PhasePowers> load(np);
  std::vector<PhaseVoltages> v_dist(np, balanced_phase_voltages(1.0));
  for (std::size_t k = 0; k < np; ++k) load[k] = feeders[k].feeder.phase_load();
  std::vector<std::array<double, 3>> prev(np);
  std::vector<int> last_unsettled(np, 1);
  std::vector<FeederSolution> feeder_solutions;
  std::vector<double> history;

  SequenceSolution sol;
  const SequenceSolution* warm = warm_start;
  for (int round = 1; round <= opt.max_rounds; ++round) {
    std::vector<PccLoad> pcc_loads;
    pcc_loads.reserve(np);
    for (std::size_t k = 0; k < np; ++k) pcc_loads.push_back({feeders[k].bus, (1.0 / tc.base_mva) * load[k]});
    sol = solve_three_sequence(tc, ybus, pcc_loads, opt.sequence, warm);
    warm = &sol;

    bool settled = round > 1;
    double worst = 0.0;
    std::vector<PhaseVoltages> v_sent(np);
    for (std::size_t k = 0; k < np; ++k) {
      v_sent[k] = sol.phase_voltages(feeders[k].bus);
      CouplingRound row;
      row.iteration = round;
      row.pcc = feeders[k].bus;
      row.v_transmission = magnitudes(v_sent[k]);
      row.v_distribution = magnitudes(v_dist[k]);
      row.mismatch = std::numeric_limits<double>::infinity();
      if (round > 1) {
        row.mismatch = 0.0;
        for (std::size_t p = 0; p < 3; ++p) {
          row.mismatch = std::max(row.mismatch, std::abs(row.v_transmission[p] - prev[k][p]));
        }
      }
      for (std::size_t p = 0; p < 3; ++p) {
        row.cross = std::max(row.cross, std::abs(row.v_transmission[p] - row.v_distribution[p]));
      }
      if (!(row.mismatch < opt.eps)) {
        settled = false;
        last_unsettled[k] = round;
      }
      worst = std::max(worst, row.mismatch);
      prev[k] = row.v_transmission;
      trace.rounds.push_back(row);
    }
    history.push_back(worst);

    if (settled) {
      trace.converged = true;
      trace.overall_iterations = round;
      for (std::size_t k = 0; k < np; ++k) trace.iterations_to_converge[k] = last_unsettled[k] + 1;
      out.state.transmission = std::move(sol);
      out.state.feeders = std::move(feeder_solutions);
      out.state.pcc_load = load;
      return out;
    }
    if (round == opt.max_rounds) break;

    std::vector<FeederJob> jobs;
    jobs.reserve(np);
    for (std::size_t k = 0; k < np; ++k) jobs.push_back({feeders[k].bus, &feeders[k].feeder, v_sent[k]});
    feeder_solutions = opt.execution == FeederExecution::Parallel ? solve_feeders_parallel(jobs, opt.sweep, opt.threads)
                                                                  : solve_feeders_serial(jobs, opt.sweep);
    for (std::size_t k = 0; k < np; ++k) {
      load[k] = head_power(feeder_solutions[k]);
      v_dist[k] = v_sent[k];
      trace.boundary.push_back({feeders[k].bus, v_sent[k], load[k], round});
    }
  }
  trace.overall_iterations = opt.max_rounds;
  std::ostringstream os;
  os << "PCC coupling did not converge in " << opt.max_rounds << " rounds (last max |dV| " << history.back()
     << " pu, eps " << opt.eps << ")";
  throw CouplingError(os.str(), trace, history);
}

double forecast_demand(const TransmissionCase& c, const std::vector<PccFeeder>& feeders, const LoadshapeSet& shapes,
                       int minute) {
  const double k = power_to_mw(c);
  double demand = 0.0;
  for (const auto& l : c.loads) {
    if (const auto* lumped = std::get_if<LumpedLoad>(&l.kind)) {
      demand += lumped->p * k * shapes.multiplier(l.loadshape_id, minute);
    }
  }
  for (const auto& pf : feeders) {
    demand += pf.feeder.total_load().real() * shapes.multiplier(pf.loadshape_id, minute);
  }
  return demand;
}

namespace {

void check_window(const TransmissionCase& c, const std::vector<PccFeeder>& feeders, const LoadshapeSet& shapes,
                  const TimeseriesOptions& opt) {
  if (opt.horizon_min <= 0) throw InputError("time window must be positive");
  if (opt.pf_interval_min <= 0 || opt.ed_interval_min <= 0) throw InputError("intervals must be positive");
  if (opt.ed_interval_min % opt.pf_interval_min != 0) {
    throw InputError("power-flow interval must divide the dispatch interval");
  }
  for (const auto& l : c.loads) {
    if (!shapes.covers(l.loadshape_id, opt.start_min, opt.horizon_min)) {
      throw InputError("loadshape for bus " + std::to_string(l.bus) + " does not cover the time window");
    }
  }
  for (const auto& pf : feeders) {
    if (!shapes.covers(pf.loadshape_id, opt.start_min, opt.horizon_min)) {
      throw InputError("loadshape for feeder at bus " + std::to_string(pf.bus) + " does not cover the time window");
    }
  }
}

TransmissionCase scaled_case(const TransmissionCase& c, const LoadshapeSet& shapes, int minute) {
  TransmissionCase out = c;
  for (auto& l : out.loads) {
    if (auto* lumped = std::get_if<LumpedLoad>(&l.kind)) {
      const double m = shapes.multiplier(l.loadshape_id, minute);
      lumped->p *= m;
      lumped->q *= m;
    }
  }
  return out;
}

std::vector<Generator> generators_mw(const TransmissionCase& c) {
  std::vector<Generator> g = c.generators;
  if (c.power_unit == PowerUnit::PerUnit) {
    const double k = c.base_mva;
    for (auto& x : g) {
      x.p_min *= k;
      x.p_max *= k;
      x.q_min *= k;
      x.q_max *= k;
      x.p_set *= k;
      x.q_set *= k;
      x.cost.a /= k * k;
      x.cost.b /= k;
    }
  }
  return g;
}

}  // namespace

CosimResult run_timeseries(const TransmissionCase& c, const std::vector<PccFeeder>& feeders,
                           const LoadshapeSet& shapes, const TimeseriesOptions& opt) {
  check_window(c, feeders, shapes, opt);
  check_pccs(c, feeders);
  const std::vector<Generator> gens = generators_mw(c);

  CosimResult result;
  std::optional<SequenceSolution> previous;
  for (int t = opt.start_min; t < opt.start_min + opt.horizon_min; t += opt.pf_interval_min) {
    TimeStep step;
    step.minute = t;
    if (t % opt.ed_interval_min == 0 || result.dispatches.empty()) {
      const double demand = forecast_demand(c, feeders, shapes, t);
      result.dispatches.push_back({t, demand, dispatch(gens, demand)});
      step.dispatched = true;
    }
    step.dispatch_index = static_cast<int>(result.dispatches.size()) - 1;

    const TransmissionCase tc = scaled_case(c, shapes, t);
    std::vector<PccFeeder> fs;
    fs.reserve(feeders.size());
    for (const auto& pf : feeders) {
      fs.push_back({pf.bus, scaled(pf.feeder, shapes.multiplier(pf.loadshape_id, t)), pf.loadshape_id});
    }

    const auto t0 = std::chrono::steady_clock::now();
    try {
      StepResult sr = couple_step(tc, fs, &result.dispatches.back().result, opt.coupling,
                                  previous ? &*previous : nullptr);
      step.converged = true;
      for (std::size_t k = 0; k < fs.size(); ++k) {
        step.pcc.push_back({fs[k].bus, sr.state.transmission.phase_voltages(fs[k].bus),
                            sr.state.feeders.empty() ? balanced_phase_voltages(1.0) : sr.state.feeders[k].head_voltage,
                            sr.state.pcc_load[k]});
      }
      step.transmission = sr.state.transmission;
      step.trace = std::move(sr.trace);
      if (opt.retain_feeder_solutions) step.feeders = std::move(sr.state.feeders);
      previous = step.transmission;
    } catch (const CouplingError& e) {
      step.trace = e.trace();
      step.error = e.what();
    } catch (const NumericalError& e) {
      step.error = e.what();
    }
    step.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool failed = !step.converged;
    result.steps.push_back(std::move(step));
    if (failed && opt.on_fail == FailPolicy::Abort) {
      result.aborted = true;
      break;
    }
  }
  return result;
}

CosimResult run_decoupled_baseline(const TransmissionCase& c, const std::vector<PccFeeder>& feeders,
                                   const LoadshapeSet& shapes, const TimeseriesOptions& opt) {
  check_window(c, feeders, shapes, opt);
  if (!c.is_per_unit()) throw InputError("run_decoupled_baseline expects a per-unit case");
  const std::vector<Generator> gens = generators_mw(c);

  CosimResult result;
  result.decoupled = true;
  std::optional<SequenceSolution> previous;
  for (int t = opt.start_min; t < opt.start_min + opt.horizon_min; t += opt.ed_interval_min) {
    TimeStep step;
    step.minute = t;
    const double demand = forecast_demand(c, feeders, shapes, t);
    result.dispatches.push_back({t, demand, dispatch(gens, demand)});
    step.dispatched = true;
    step.dispatch_index = static_cast<int>(result.dispatches.size()) - 1;

    const TransmissionCase tc = apply_dispatch(scaled_case(c, shapes, t), result.dispatches.back().result);
    std::vector<PccLoad> loads;
    std::vector<PhasePowers> mva;
    for (const auto& pf : feeders) {
      mva.push_back(shapes.multiplier(pf.loadshape_id, t) * pf.feeder.phase_load());
      loads.push_back({pf.bus, (1.0 / tc.base_mva) * mva.back()});
    }
    const auto t0 = std::chrono::steady_clock::now();
    try {
      step.transmission = solve_three_sequence(tc, build_sequence_ybus(tc), loads, opt.coupling.sequence,
                                               previous ? &*previous : nullptr);
      step.converged = true;
      for (std::size_t k = 0; k < feeders.size(); ++k) {
        const PhaseVoltages v = step.transmission.phase_voltages(feeders[k].bus);
        step.pcc.push_back({feeders[k].bus, v, v, mva[k]});
      }
      previous = step.transmission;
    } catch (const NumericalError& e) {
      step.error = e.what();
    }
    step.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool failed = !step.converged;
    result.steps.push_back(std::move(step));
    if (failed && opt.on_fail == FailPolicy::Abort) {
      result.aborted = true;
      break;
    }
  }
  return result;
}

Comparison compare_runs(const CosimResult& coupled, const CosimResult& decoupled) {
  Comparison out;
  for (const auto& step : coupled.steps) {
    if (!step.converged) continue;
    const TimeStep* held = nullptr;
    for (const auto& b : decoupled.steps) {
      if (b.converged && b.minute <= step.minute && (!held || b.minute > held->minute)) held = &b;
    }
    if (!held) continue;
    for (const auto& sample : step.pcc) {
      const auto it = std::find_if(held->pcc.begin(), held->pcc.end(),
                                   [&sample](const PccSample& s) { return s.bus == sample.bus; });
      if (it == held->pcc.end()) continue;
      for (int p = 0; p < 3; ++p) {
        ComparisonRow row;
        row.minute = step.minute;
        row.pcc = sample.bus;
        row.phase = p;
        row.v_coupled = std::abs(sample.v_transmission[static_cast<std::size_t>(p)]);
        row.v_decoupled = std::abs(it->v_transmission[static_cast<std::size_t>(p)]);
        if (held->minute == step.minute) {
          out.max_abs_diff_common = std::max(out.max_abs_diff_common, std::abs(row.v_coupled - row.v_decoupled));
        }
        out.rows.push_back(row);
      }
    }
  }
  return out;
}

UnbalanceTable sweep_unbalance(const TransmissionCase& c, const std::vector<PccFeeder>& feeders,
                               const std::vector<double>& alphas, const CouplingOptions& opt) {
  for (double a : alphas) {
    if (!(a >= 0.0 && a <= 0.5)) throw InputError("unbalance alpha must lie in [0, 0.5], got " + std::to_string(a));
  }
  UnbalanceTable table;
  for (const auto& pf : feeders) table.pccs.push_back(pf.bus);
  table.rows.resize(alphas.size());

  auto run_row = [&](std::size_t r) {
    UnbalanceRow& row = table.rows[r];
    row.alpha = alphas[r];
    row.iterations.assign(feeders.size(), -1);
    try {
      std::vector<PccFeeder> fs;
      for (const auto& pf : feeders) fs.push_back({pf.bus, apply_unbalance(pf.feeder, alphas[r]), pf.loadshape_id});
      const StepResult sr = couple_step(c, fs, nullptr, opt);
      row.iterations = sr.trace.iterations_to_converge;
      row.overall = sr.trace.overall_iterations;
    } catch (const std::exception& e) {
      row.error = e.what();
    }
  };

  const auto n = static_cast<long>(alphas.size());
  if (opt.execution == FeederExecution::Parallel) {
#pragma omp parallel for schedule(dynamic, 1) if (n > 1)
    for (long r = 0; r < n; ++r) run_row(static_cast<std::size_t>(r));
  } else {
    for (long r = 0; r < n; ++r) run_row(static_cast<std::size_t>(r));
  }
  return table;
}

}  // namespace tdcosim
