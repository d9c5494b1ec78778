#include <doctest.h>

#include "oracles.hpp"
#include "tdcosim/error.hpp"
#include "tdcosim/io.hpp"
#include "tdcosim/tsolve.hpp"

using namespace tdcosim;
using oracle::C;

namespace {

TransmissionCase case9_pu() { return to_per_unit(io::load_case(TDCOSIM_SOURCE_DIR "/data/case9.td").transmission); }

TransmissionCase two_bus(Complex z, double p_load, double q_load) {
  TransmissionCase c;
  c.power_unit = PowerUnit::PerUnit;
  c.buses = {{1, BusKind::Slack, 100.0, 1.0, 0.0}, {2, BusKind::PQ, 100.0, 1.0, 0.0}};
  Branch br;
  br.from = 1;
  br.to = 2;
  br.z1 = br.z2 = z;
  br.z0 = 3.0 * z;
  c.branches.push_back(br);
  Generator g;
  g.bus = 1;
  g.p_max = 10;
  g.q_min = -10;
  g.q_max = 10;
  g.z2 = C(0, 0.1);
  g.z0 = C(0, 0.05);
  c.generators.push_back(g);
  if (p_load != 0.0 || q_load != 0.0) c.loads.push_back({2, LumpedLoad{p_load, q_load}, {}});
  return c;
}

double max_abs(const ComplexVector& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

}  // namespace

TEST_CASE("two-bus assembly") {
  const auto y = build_sequence_ybus(two_bus(C(0, 0.1), 0, 0));
  CHECK(std::abs(y.y1.coeff(0, 1) - C(0, 10)) < 1e-12);
  CHECK(std::abs(y.y1.coeff(1, 0) - C(0, 10)) < 1e-12);
  CHECK(std::abs(y.y1.coeff(0, 0) - C(0, -10)) < 1e-12);
  CHECK(y.couplings.empty());
}

TEST_CASE("9-bus positive-sequence Y-bus matches naive stamping") {
  const auto c = case9_pu();
  const auto y = build_sequence_ybus(c);
  const Eigen::MatrixXcd dense(y.y1);
  const auto ref = oracle::dense_ybus(c);
  CHECK((dense - ref).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((dense - dense.transpose()).cwiseAbs().maxCoeff() < 1e-12);
  // Row sums are the shunt admittances.
  for (int i = 0; i < y.size(); ++i) {
    double bsh = 0.0;
    for (const auto& br : c.branches) {
      if (c.bus_index(br.from) == i || c.bus_index(br.to) == i) bsh += br.b1_shunt / 2.0;
    }
    CHECK(std::abs(dense.row(i).sum() - C(0, bsh)) < 1e-10);
  }
}

TEST_CASE("zero-sequence paths") {
  auto c = case9_pu();
  SUBCASE("open transformer has no zero-sequence element") {
    c.branches[0].zero_seq_path = ZeroSeqPath::Open;
    const auto y = build_sequence_ybus(c);
    CHECK(y.y0.coeff(0, 3) == C{});
    CHECK(y.y0.coeff(0, 0) == C{});
    // Bus 1 floats in zero sequence: no injection → v0 = 0 there.
    ComplexVector i0 = ComplexVector::Zero(9);
    i0(5) = C(0.01, -0.02);
    const ComplexVector v0 = solve_zero(y, i0);
    CHECK(v0(0) == C{});
    CHECK(std::abs(v0(5)) > 0.0);
    // An injection into the floating bus is a diagnostic.
    i0(0) = C(0.1, 0.0);
    CHECK_THROWS_AS(solve_zero(y, i0), SingularNetworkError);
  }
  SUBCASE("grounded transformer is a shunt on the high side") {
    const auto y = build_sequence_ybus(c);
    CHECK(y.y0.coeff(0, 3) == C{});
    CHECK(std::abs(y.y0.coeff(3, 3)) > std::abs(1.0 / c.branches[0].z0) * 0.99);
  }
}

TEST_CASE("islanded positive sequence is a diagnostic naming the component") {
  auto c = case9_pu();
  c.branches.erase(c.branches.begin());  // 1-4
  try {
    build_sequence_ybus(c);
    FAIL("expected SingularNetworkError");
  } catch (const SingularNetworkError& e) {
    CHECK(std::string(e.what()).find("{1}") != std::string::npos);
  }
}

TEST_CASE("no-load two-bus system converges in one evaluation") {
  const auto c = two_bus(C(0, 0.1), 0, 0);
  const auto y = build_sequence_ybus(c);
  const auto r = nr_positive_sequence(y, c, ComplexVector::Zero(2));
  CHECK(r.iterations == 1);
  CHECK(std::abs(r.v(1) - C(1, 0)) < 1e-15);
}

TEST_CASE("two-bus load matches a Gauss-Seidel oracle") {
  const auto c = two_bus(C(0, 0.1), 1.0, 0.0);
  const auto y = build_sequence_ybus(c);
  const auto r = nr_positive_sequence(y, c, ComplexVector::Zero(2));
  // V2 = (S2*/V2* − Y21 V1) / Y22 with S2 = −1.
  const C y22 = 1.0 / C(0, 0.1), y21 = -y22;
  C v2(1, 0);
  for (int it = 0; it < 500; ++it) v2 = (std::conj(C(-1.0, 0.0)) / std::conj(v2) - y21 * C(1, 0)) / y22;
  CHECK(std::abs(r.v(1) - v2) < 1e-8);
  CHECK(r.mismatch < 1e-8);
}

TEST_CASE("9-bus balanced: three-sequence equals the rectangular oracle") {
  const auto c = case9_pu();
  const auto sol = solve_three_sequence(c, {});
  const auto ref = oracle::power_flow(c);
  for (int i = 0; i < 9; ++i) {
    CHECK(std::abs(sol.v1(i) - ref[static_cast<std::size_t>(i)]) < 1e-8);
  }
  CHECK(max_abs(sol.v0) < 1e-10);
  CHECK(max_abs(sol.v2) < 1e-10);
  CHECK(sol.mismatch < 1e-8);
  // Bus 6 sits near the classic 1.013 pu.
  CHECK(std::abs(sol.v1(c.bus_index(6))) == doctest::Approx(1.0127).epsilon(2e-3));
}

TEST_CASE("NR mismatch has a quadratic tail") {
  const auto c = case9_pu();
  const auto y = build_sequence_ybus(c);
  NrOptions opt;
  opt.tol = 1e-13;
  const auto r = nr_positive_sequence(y, c, ComplexVector::Zero(9), opt);
  REQUIRE(r.history.size() >= 3);
  const auto n = r.history.size();
  CHECK(r.history[n - 1] < r.history[n - 2]);
  CHECK(r.history[n - 2] < r.history[n - 3]);
}

TEST_CASE("NR non-convergence carries the history") {
  auto c = two_bus(C(0, 0.1), 8.0, 2.0);  // beyond the nose of the PV curve
  const auto y = build_sequence_ybus(c);
  try {
    nr_positive_sequence(y, c, ComplexVector::Zero(2));
    FAIL("expected an error");
  } catch (const ConvergenceError& e) {
    CHECK(e.history().size() == 30);
  } catch (const NumericalError&) {
    // singular Jacobian is also an acceptable diagnostic
  }
}

TEST_CASE("Q-limit switching") {
  auto c = case9_pu();
  c.generators[2].q_max = 0.0;
  c.generators[2].q_min = -0.05;
  const auto y = build_sequence_ybus(c);
  const auto r = nr_positive_sequence(y, c, ComplexVector::Zero(9));
  bool switched_3 = false;
  for (auto b : r.switched_to_pq) switched_3 |= b == 3;
  CHECK(switched_3);
  CHECK(std::abs(r.v(2)) != doctest::Approx(1.025));
}

TEST_CASE("linear sequence solves") {
  const auto c = case9_pu();
  const auto y = build_sequence_ybus(c);
  CHECK(max_abs(solve_negative(y, ComplexVector::Zero(9))) == 0.0);
  CHECK(max_abs(solve_zero(y, ComplexVector::Zero(9))) == 0.0);

  ComplexVector i = ComplexVector::Zero(9);
  i(c.bus_index(6)) = C(0.05, -0.02);
  const ComplexVector v2 = solve_negative(y, i);
  const Eigen::MatrixXcd y2(y.y2);
  CHECK((y2 * v2 - i).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((v2 - y2.fullPivLu().solve(i)).cwiseAbs().maxCoeff() < 1e-10);
  const ComplexVector v0 = solve_zero(y, i);
  const Eigen::MatrixXcd y0(y.y0);
  CHECK((y0 * v0 - i).cwiseAbs().maxCoeff() < 1e-10);
  // Generator buses sit behind delta windings in zero sequence.
  CHECK(v0(0) == C{});

  const auto c2 = two_bus(C(0, 0.1), 0, 0);
  const auto yb = build_sequence_ybus(c2);
  ComplexVector i2(2);
  i2 << C(0, 0), C(0.1, 0.05);
  // Hand 2×2: [[1/z2g + 1/z, −1/z], [−1/z, 1/z]]
  const C a11 = 1.0 / C(0, 0.1) + 1.0 / C(0, 0.1), a12 = -1.0 / C(0, 0.1), a22 = 1.0 / C(0, 0.1);
  const C det = a11 * a22 - a12 * a12;
  const C x1 = (-a12 * i2(1)) / det, x2 = (a11 * i2(1)) / det;
  const ComplexVector got = solve_negative(yb, i2);
  CHECK(std::abs(got(0) - x1) < 1e-12);
  CHECK(std::abs(got(1) - x2) < 1e-12);
}

TEST_CASE("compensation currents") {
  const auto c = to_per_unit(io::load_case(TDCOSIM_SOURCE_DIR "/tests/data/two_bus_untransposed.td").transmission);
  auto y = build_sequence_ybus(c);
  REQUIRE(y.couplings.size() == 1);
  ComplexVector v0(2), v1(2), v2(2);
  v0 << C(0.01, 0.0), C(0.02, -0.01);
  v1 << C(1.0, 0.0), C(0.95, -0.05);
  v2 << C(0.0, 0.01), C(0.015, 0.005);
  const auto base = compensation_currents(y.couplings, v0, v1, v2);

  SUBCASE("linear in the coupling block") {
    auto doubled = y.couplings;
    for (auto& row : doubled[0].block) {
      for (auto& x : row) x *= 2.0;
    }
    const auto twice = compensation_currents(doubled, v0, v1, v2);
    for (std::size_t s = 0; s < 3; ++s) CHECK((twice[s] - 2.0 * base[s]).cwiseAbs().maxCoeff() < 1e-15);
  }
  SUBCASE("equals the off-diagonal block times cross-sequence voltage drops") {
    const std::array<C, 3> dv{v0(0) - v0(1), v1(0) - v1(1), v2(0) - v2(1)};
    for (std::size_t s = 0; s < 3; ++s) {
      C ic{};
      for (std::size_t t = 0; t < 3; ++t) {
        if (t != s) ic += y.couplings[0].block[s][t] * dv[t];
      }
      CHECK(std::abs(base[s](0) + ic) < 1e-15);
      CHECK(std::abs(base[s](1) - ic) < 1e-15);
    }
  }
  SUBCASE("transposed lines give none") {
    const auto none = compensation_currents({}, v0, v1, v2);
    for (std::size_t s = 0; s < 3; ++s) CHECK(max_abs(none[s]) == 0.0);
  }
}

TEST_CASE("compensation fixed point equals the fully coupled solve") {
  const auto c = to_per_unit(io::load_case(TDCOSIM_SOURCE_DIR "/tests/data/two_bus_untransposed.td").transmission);
  const std::vector<PccLoad> pcc{{2, PhasePowers{{C(0.12, 0.05), C(0.08, 0.03), C(0.1, 0.02)}}}};
  SequenceOptions opt;
  opt.tol = 1e-12;
  opt.max_passes = 100;
  const auto sol = solve_three_sequence(c, pcc, opt);
  const auto ref = oracle::coupled_sequence_flow(c, pcc);
  for (int i = 0; i < 2; ++i) {
    CHECK(std::abs(sol.v0(i) - ref[static_cast<std::size_t>(i)][0]) < 1e-8);
    CHECK(std::abs(sol.v1(i) - ref[static_cast<std::size_t>(i)][1]) < 1e-8);
    CHECK(std::abs(sol.v2(i) - ref[static_cast<std::size_t>(i)][2]) < 1e-8);
  }
}

TEST_CASE("PCC load to injections") {
  const PhaseVoltages v = balanced_phase_voltages(1.0);
  SUBCASE("balanced") {
    const PhasePowers s{{C(0.1, 0.03), C(0.1, 0.03), C(0.1, 0.03)}};
    const auto inj = pcc_load_to_injections(6, s, v);
    CHECK(std::abs(inj.s1 - C(0.1, 0.03)) < 1e-15);
    CHECK(std::abs(inj.i2) < 1e-15);
    CHECK(std::abs(inj.i0) < 1e-15);
  }
  SUBCASE("unbalanced alpha = 0.15") {
    const C m(0.1, 0.03);
    const PhasePowers s{{1.15 * m, 0.925 * m, 0.925 * m}};
    const auto inj = pcc_load_to_injections(6, s, v);
    std::array<C, 3> iabc;
    for (int p = 0; p < 3; ++p) iabc[static_cast<std::size_t>(p)] = std::conj(s[p] / v[p]);
    const auto i012 = oracle::to_sequence(iabc);
    CHECK(std::abs(inj.i2 - i012[2]) < 1e-15);
    CHECK(std::abs(inj.i0 - i012[0]) < 1e-15);
    CHECK(std::abs(inj.i2) > 1e-3);
  }
  SUBCASE("zero power") {
    const auto inj = pcc_load_to_injections(6, PhasePowers{}, v);
    CHECK(inj.s1 == C{});
    CHECK(inj.i2 == C{});
    CHECK(inj.i0 == C{});
  }
}

TEST_CASE("9-bus with an unbalanced PCC load at bus 6") {
  auto c = case9_pu();
  std::erase_if(c.loads, [](const LoadAttachment& l) { return l.bus == 6; });
  const C per_phase = C(0.517, 0.123) / 3.0;
  SUBCASE("balanced PCC load equals the lumped-load solution") {
    const auto sol = solve_three_sequence(c, {{6, PhasePowers{{per_phase, per_phase, per_phase}}}});
    auto lumped = c;
    lumped.loads.push_back({6, LumpedLoad{0.517, 0.123}, {}});
    const auto ref = oracle::power_flow(lumped);
    for (int i = 0; i < 9; ++i) CHECK(std::abs(sol.v1(i) - ref[static_cast<std::size_t>(i)]) < 1e-8);
    CHECK(max_abs(sol.v2) < 1e-10);
  }
  SUBCASE("unbalanced load matches the coupled oracle and conserves power") {
    const std::vector<PccLoad> pcc{{6, PhasePowers{{1.15 * per_phase, 0.925 * per_phase, 0.925 * per_phase}}}};
    const auto sol = solve_three_sequence(c, pcc);
    CHECK(sol.mismatch < 1e-8);
    CHECK(max_abs(sol.v2) > 1e-5);
    const auto ref = oracle::coupled_sequence_flow(c, pcc);
    for (int i = 0; i < 9; ++i) {
      for (int s = 0; s < 3; ++s) {
        const ComplexVector& v = s == 0 ? sol.v0 : (s == 1 ? sol.v1 : sol.v2);
        CHECK(std::abs(v(i) - ref[static_cast<std::size_t>(i)][static_cast<std::size_t>(s)]) < 1e-8);
      }
    }
    // Power balance at the PCC and at the transit buses.
    const auto y = build_sequence_ybus(c);
    const auto inj = pcc_load_to_injections(6, pcc[0].s_pu, sol.phase_voltages(6));
    const ComplexVector s1 = bus_injections(y.y1, sol.v1);
    CHECK(std::abs(s1(c.bus_index(6)) + 3.0 * inj.s1) < 1e-8);
    for (BusId b : {4, 7, 9}) CHECK(std::abs(s1(c.bus_index(b))) < 1e-8);
    const ComplexVector i2 = y.y2 * sol.v2;
    CHECK(std::abs(i2(c.bus_index(6)) + 3.0 * inj.i2) < 1e-8);
    CHECK(std::abs(i2(c.bus_index(5))) < 1e-8);
  }
}
