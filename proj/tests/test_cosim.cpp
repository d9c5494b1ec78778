#include <doctest.h>

#include <algorithm>

#include "fixtures.hpp"
#include "tdcosim/cosim.hpp"
#include "tdcosim/error.hpp"
#include "tdcosim/feeder_round.hpp"

using namespace tdcosim;

namespace {

constexpr double kEps = 1e-4;

CouplingOptions opts(FeederExecution ex = FeederExecution::Parallel) {
  CouplingOptions o;
  o.eps = kEps;
  o.execution = ex;
  return o;
}

double vmag(const SequenceSolution& s, BusId b, int p) { return std::abs(s.phase_voltages(b)[static_cast<std::size_t>(p)]); }

}  // namespace

TEST_CASE("balanced single feeder converges quickly with equal phases") {
  const auto sys = fixture::case9_with_feeders({6}, 200);
  const auto r = couple_step(sys.pu, sys.feeders, nullptr, opts());
  CHECK(r.trace.converged);
  CHECK(r.trace.overall_iterations <= 4);
  CHECK(r.trace.overall_iterations >= 2);
  CHECK(r.trace.iterations_for(6) == r.trace.overall_iterations);
  const auto v = r.state.transmission.phase_voltages(6);
  CHECK(std::abs(std::abs(v[0]) - std::abs(v[1])) < 1e-6);
  CHECK(std::abs(std::abs(v[0]) - std::abs(v[2])) < 1e-6);
  // Final round: both sides agree within eps.
  const auto& last = r.trace.rounds.back();
  CHECK(last.cross < kEps);
  CHECK(last.mismatch < kEps);
  CHECK(std::isinf(r.trace.rounds.front().mismatch));
}

TEST_CASE("zero-load feeder settles in two rounds at the no-load solution") {
  const auto sys = fixture::case9_with_feeders({6}, 50, 0.0, 0.0);
  const auto r = couple_step(sys.pu, sys.feeders, nullptr, opts());
  CHECK(r.trace.overall_iterations == 2);
  CHECK(r.trace.iterations_for(6) == 2);
  const auto ref = solve_three_sequence(sys.pu, {{6, PhasePowers{}}});
  CHECK((r.state.transmission.v1 - ref.v1).cwiseAbs().maxCoeff() < 1e-10);
  CHECK(r.state.transmission.v2.cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("multi-feeder coupling") {
  const auto sys = fixture::case9_with_feeders({5, 6, 8}, 150, 0.15);
  const auto par = couple_step(sys.pu, sys.feeders, nullptr, opts(FeederExecution::Parallel));
  const auto ser = couple_step(sys.pu, sys.feeders, nullptr, opts(FeederExecution::Serial));

  SUBCASE("overall N is the max of per-PCC N") {
    const auto& n = par.trace.iterations_to_converge;
    CHECK(par.trace.overall_iterations == *std::max_element(n.begin(), n.end()));
    CHECK(par.trace.overall_iterations <= 12);
  }
  SUBCASE("serial and parallel rounds are bit-identical") {
    CHECK(par.trace.iterations_to_converge == ser.trace.iterations_to_converge);
    CHECK(par.state.transmission.v0 == ser.state.transmission.v0);
    CHECK(par.state.transmission.v1 == ser.state.transmission.v1);
    CHECK(par.state.transmission.v2 == ser.state.transmission.v2);
    REQUIRE(par.state.feeders.size() == 3);
    for (std::size_t k = 0; k < 3; ++k) CHECK(par.state.feeders[k].voltages == ser.state.feeders[k].voltages);
  }
  SUBCASE("converged state is a fixed point") {
    // Re-solving each feeder at the final PCC voltage changes neither side
    // by more than eps.
    for (std::size_t k = 0; k < 3; ++k) {
      const BusId b = sys.feeders[k].bus;
      const auto fs = sweep_solve(sys.feeders[k].feeder, par.state.transmission.phase_voltages(b));
      const PhasePowers s = head_power(fs);
      const PhasePowers& used = par.state.pcc_load[k];
      for (std::size_t p = 0; p < 3; ++p) CHECK(std::abs(s[p] - used[p]) < 1e-2 * std::abs(used[p]));
      std::vector<PccLoad> loads;
      for (std::size_t j = 0; j < 3; ++j) {
        loads.push_back({sys.feeders[j].bus, (1.0 / sys.pu.base_mva) * par.state.pcc_load[j]});
      }
      loads[k].s_pu = (1.0 / sys.pu.base_mva) * s;
      const auto again = solve_three_sequence(sys.pu, loads);
      for (int p = 0; p < 3; ++p) CHECK(std::abs(vmag(again, b, p) - vmag(par.state.transmission, b, p)) < kEps);
    }
  }
  SUBCASE("unbalance shows up in the negative sequence") {
    CHECK(par.state.transmission.v2.cwiseAbs().maxCoeff() > 1e-5);
  }
}

TEST_CASE("coupling failure carries the trace") {
  const auto sys = fixture::case9_with_feeders({5, 6}, 60, 0.1);
  auto o = opts();
  o.max_rounds = 2;
  try {
    couple_step(sys.pu, sys.feeders, nullptr, o);
    FAIL("expected CouplingError");
  } catch (const CouplingError& e) {
    CHECK_FALSE(e.trace().converged);
    CHECK(e.trace().rounds.size() == 4);
    CHECK(e.trace().overall_iterations == 2);
    CHECK(e.history().size() == 2);
  }
}

TEST_CASE("bad coupling inputs") {
  const auto sys = fixture::case9_with_feeders({6}, 20);
  auto o = opts();
  o.eps = 0.0;
  CHECK_THROWS_AS(couple_step(sys.pu, sys.feeders, nullptr, o), InputError);
  CHECK_THROWS_AS(couple_step(fixture::case9_mw(), sys.feeders, nullptr, opts()), InputError);
  auto moved = sys.feeders;
  moved[0].bus = 5;  // bus 5 still carries its lumped load
  CHECK_THROWS_AS(couple_step(sys.pu, moved, nullptr, opts()), InputError);
}

TEST_CASE("unbalance sweep") {
  const auto sys = fixture::case9_with_feeders({5, 6, 8}, 120);
  const std::vector<double> alphas{0.0, 0.05, 0.10, 0.15};
  const auto table = sweep_unbalance(sys.pu, sys.feeders, alphas, opts());
  const auto serial = sweep_unbalance(sys.pu, sys.feeders, alphas, opts(FeederExecution::Serial));
  REQUIRE(table.rows.size() == 4);
  CHECK(table.pccs == std::vector<BusId>{5, 6, 8});
  for (std::size_t r = 0; r < 4; ++r) {
    CHECK(table.rows[r].error.empty());
    CHECK(table.rows[r].alpha == alphas[r]);
    CHECK(table.rows[r].overall ==
          *std::max_element(table.rows[r].iterations.begin(), table.rows[r].iterations.end()));
    CHECK(table.rows[r].iterations == serial.rows[r].iterations);
    if (r > 0) {
      for (std::size_t k = 0; k < 3; ++k) CHECK(table.rows[r].iterations[k] >= table.rows[r - 1].iterations[k]);
    }
  }
  CHECK_THROWS_AS(sweep_unbalance(sys.pu, sys.feeders, {0.7}, opts()), InputError);
}

TEST_CASE("time series") {
  const auto sys = fixture::case9_with_feeders({6}, 60);
  const auto shapes = fixture::flat_shapes();
  TimeseriesOptions o;
  o.start_min = 0;
  o.horizon_min = 60;
  o.coupling = opts();

  SUBCASE("cadence") {
    const auto r = run_timeseries(sys.pu, sys.feeders, shapes, o);
    CHECK(r.steps.size() == 60);
    CHECK(r.dispatches.size() == 12);
    CHECK(r.converged_steps() == 60);
    for (std::size_t i = 0; i < r.steps.size(); ++i) {
      CHECK(r.steps[i].minute == static_cast<int>(i));
      CHECK(r.steps[i].dispatched == (i % 5 == 0));
      CHECK(r.steps[i].dispatch_index == static_cast<int>(i / 5));
    }
    for (std::size_t d = 0; d < r.dispatches.size(); ++d) CHECK(r.dispatches[d].minute == static_cast<int>(5 * d));
  }
  SUBCASE("flat loadshape reproduces the snapshot") {
    o.horizon_min = 3;
    const auto r = run_timeseries(sys.pu, sys.feeders, shapes, o);
    const double demand = forecast_demand(sys.pu, sys.feeders, shapes, 0);
    const auto d = r.dispatches.front().result;
    const auto snap = couple_step(sys.pu, sys.feeders, &d, o.coupling);
    CHECK(r.dispatches.front().demand_mw == doctest::Approx(demand));
    for (const auto& step : r.steps) {
      for (int p = 0; p < 3; ++p) {
        CHECK(std::abs(std::abs(step.pcc[0].v_transmission[static_cast<std::size_t>(p)]) - vmag(snap.state.transmission, 6, p)) <
              1e-6);
      }
    }
    CHECK(r.steps[0].trace.overall_iterations == snap.trace.overall_iterations);
  }
  SUBCASE("failure policies") {
    o.horizon_min = 10;
    o.coupling.max_rounds = 1;
    const auto aborted = run_timeseries(sys.pu, sys.feeders, shapes, o);
    CHECK(aborted.aborted);
    CHECK(aborted.steps.size() == 1);
    CHECK_FALSE(aborted.steps[0].converged);
    CHECK_FALSE(aborted.steps[0].error.empty());
    CHECK(aborted.steps[0].trace.rounds.size() == 1);
    o.on_fail = FailPolicy::Continue;
    const auto cont = run_timeseries(sys.pu, sys.feeders, shapes, o);
    CHECK_FALSE(cont.aborted);
    CHECK(cont.steps.size() == 10);
    CHECK(cont.converged_steps() == 0);
  }
  SUBCASE("window checks") {
    o.horizon_min = 0;
    CHECK_THROWS_AS(run_timeseries(sys.pu, sys.feeders, shapes, o), InputError);
    o.horizon_min = 10;
    o.ed_interval_min = 7;
    o.pf_interval_min = 2;
    CHECK_THROWS_AS(run_timeseries(sys.pu, sys.feeders, shapes, o), InputError);
    o.ed_interval_min = 5;
    o.pf_interval_min = 1;
    o.start_min = 1435;
    CHECK_THROWS_AS(run_timeseries(sys.pu, sys.feeders, shapes, o), InputError);
  }
}

TEST_CASE("decoupled baseline") {
  const auto shapes = fixture::flat_shapes();
  TimeseriesOptions o;
  o.horizon_min = 10;
  o.coupling = opts();

  SUBCASE("lossy feeder differs measurably") {
    const auto sys = fixture::case9_with_feeders({6}, 60);
    const auto coupled = run_timeseries(sys.pu, sys.feeders, shapes, o);
    const auto base = run_decoupled_baseline(sys.pu, sys.feeders, shapes, o);
    CHECK(base.decoupled);
    CHECK(base.steps.size() == 2);
    CHECK(base.dispatches.size() == 2);
    const auto cmp = compare_runs(coupled, base);
    CHECK(cmp.rows.size() == 30);
    CHECK(cmp.max_abs_diff_common > 1e-5);
  }
  SUBCASE("zero-load feeder coincides") {
    const auto sys = fixture::case9_with_feeders({6}, 60, 0.0, 0.0);
    const auto coupled = run_timeseries(sys.pu, sys.feeders, shapes, o);
    const auto base = run_decoupled_baseline(sys.pu, sys.feeders, shapes, o);
    const auto cmp = compare_runs(coupled, base);
    CHECK(cmp.max_abs_diff_common < kEps);
    for (const auto& row : cmp.rows) CHECK(std::abs(row.v_coupled - row.v_decoupled) < kEps);
  }
}

TEST_CASE("compare_runs holds the baseline between its solves") {
  CosimResult coupled, base;
  auto sample = [](double mag) {
    PccSample s;
    s.bus = 6;
    s.v_transmission = balanced_phase_voltages(mag);
    return s;
  };
  for (int t = 0; t < 4; ++t) {
    TimeStep st;
    st.minute = t;
    st.converged = t != 2;
    st.pcc = {sample(1.0 + 0.01 * t)};
    coupled.steps.push_back(st);
  }
  for (int t : {0, 3}) {
    TimeStep st;
    st.minute = t;
    st.converged = true;
    st.pcc = {sample(1.0)};
    base.steps.push_back(st);
  }
  const auto cmp = compare_runs(coupled, base);
  CHECK(cmp.rows.size() == 9);  // minutes 0, 1, 3
  CHECK(cmp.rows[3].minute == 1);
  CHECK(cmp.rows[3].v_decoupled == doctest::Approx(1.0));
  CHECK(cmp.max_abs_diff_common == doctest::Approx(0.03));
}

TEST_CASE("feeder rounds: serial and parallel agree, failures name the PCC") {
  const auto sys = fixture::case9_with_feeders({5, 6, 8}, 80, 0.1);
  std::vector<FeederJob> jobs;
  for (const auto& pf : sys.feeders) jobs.push_back({pf.bus, &pf.feeder, balanced_phase_voltages(1.01, -0.05)});
  const auto a = solve_feeders_serial(jobs, {});
  const auto b = solve_feeders_parallel(jobs, {}, 3);
  REQUIRE(a.size() == 3);
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK(a[k].voltages == b[k].voltages);
    CHECK(head_power(a[k]) == head_power(b[k]));
  }
  jobs[1].head_v = balanced_phase_voltages(0.2);
  try {
    solve_feeders_parallel(jobs, {}, 3);
    FAIL("expected a failure");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("6") != std::string::npos);
  }
}
