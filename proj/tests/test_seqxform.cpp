#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "tdcosim/error.hpp"
#include "tdcosim/seqxform.hpp"

using namespace tdcosim;
using oracle::C;

namespace {

const double kDeg = oracle::kPi / 180.0;

double max_diff(const std::array<C, 3>& x, const std::array<C, 3>& y) {
  double d = 0.0;
  for (std::size_t i = 0; i < 3; ++i) d = std::max(d, std::abs(x[i] - y[i]));
  return d;
}

std::array<C, 3> arr(const auto& t) { return {t[0], t[1], t[2]}; }

PhaseVoltages random_phase(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  return PhaseVoltages{{C(u(rng), u(rng)), C(u(rng), u(rng)), C(u(rng), u(rng))}};
}

}  // namespace

TEST_CASE("balanced positive set maps to pure positive sequence") {
  const PhaseVoltages v{{std::polar(1.0, 0.0), std::polar(1.0, -120 * kDeg), std::polar(1.0, 120 * kDeg)}};
  const SequenceVoltages s = phase_to_sequence(v);
  CHECK(std::abs(s[seq::kZero]) < 1e-15);
  CHECK(std::abs(s[seq::kPositive] - C(1.0, 0.0)) < 1e-15);
  CHECK(std::abs(s[seq::kNegative]) < 1e-15);
}

TEST_CASE("common-mode set maps to zero sequence") {
  const PhaseVoltages v{{C(1, 0), C(1, 0), C(1, 0)}};
  const SequenceVoltages s = phase_to_sequence(v);
  CHECK(std::abs(s[0] - C(1, 0)) < 1e-15);
  CHECK(std::abs(s[1]) < 1e-15);
  CHECK(std::abs(s[2]) < 1e-15);
}

TEST_CASE("unbalanced set matches a dense matrix multiply") {
  const std::array<C, 3> vabc{std::polar(1.02, 0.0), std::polar(0.98, -118 * kDeg), std::polar(1.00, 121 * kDeg)};
  const auto got = phase_to_sequence(PhaseVoltages{vabc});
  CHECK(max_diff(arr(got), oracle::to_sequence(vabc)) < 1e-15);
}

TEST_CASE("inverse transform of simple sets") {
  const PhaseVoltages p = sequence_to_phase(SequenceVoltages{{C{}, C(1, 0), C{}}});
  CHECK(std::abs(p[0] - std::polar(1.0, 0.0)) < 1e-15);
  CHECK(std::abs(p[1] - std::polar(1.0, -120 * kDeg)) < 1e-15);
  CHECK(std::abs(p[2] - std::polar(1.0, 120 * kDeg)) < 1e-15);
  const PhaseVoltages z = sequence_to_phase(SequenceVoltages{});
  for (int i = 0; i < 3; ++i) CHECK(z[i] == C{});
}

TEST_CASE("fortescue matrices are inverse to each other") {
  const auto a = fortescue_matrix();
  const auto ai = fortescue_inverse();
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) {
      C sum{};
      for (int k = 0; k < 3; ++k) sum += a[r][k] * ai[k][c];
      CHECK(std::abs(sum - C(r == c ? 1.0 : 0.0, 0.0)) < 1e-15);
    }
    CHECK(a[r][0] == C(1.0, 0.0));
  }
  CHECK(std::abs(rotation_a() - std::polar(1.0, 120 * kDeg)) < 1e-15);
}

TEST_CASE("property: round trip, linearity and power invariance") {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int trial = 0; trial < 2000; ++trial) {
    const PhaseVoltages v = random_phase(rng);
    const PhaseVoltages w = random_phase(rng);
    CHECK(max_diff(arr(sequence_to_phase(phase_to_sequence(v))), arr(v)) < 1e-12);
    const SequenceVoltages s{{C(u(rng), u(rng)), C(u(rng), u(rng)), C(u(rng), u(rng))}};
    CHECK(max_diff(arr(phase_to_sequence(sequence_to_phase(s))), arr(s)) < 1e-12);
    CHECK(max_diff(arr(phase_to_sequence(v + w)), arr(phase_to_sequence(v) + phase_to_sequence(w))) < 1e-12);

    const PhaseCurrents i{{C(u(rng), u(rng)), C(u(rng), u(rng)), C(u(rng), u(rng))}};
    C s_abc{};
    for (int p = 0; p < 3; ++p) s_abc += v[p] * std::conj(i[p]);
    const SequenceVoltages v012 = phase_to_sequence(v);
    const SequenceCurrents i012 = phase_to_sequence(i);
    C s_012{};
    for (int q = 0; q < 3; ++q) s_012 += v012[q] * std::conj(i012[q]);
    CHECK(std::abs(s_abc - 3.0 * s_012) < 1e-10);
  }
}

TEST_CASE("phase currents from power") {
  const PhaseVoltages v = balanced_phase_voltages(1.0);
  const PhasePowers s{{C(1, 0), C(1, 0), C(1, 0)}};
  const PhaseCurrents i = phase_currents_from_power(s, v);
  for (int p = 0; p < 3; ++p) CHECK(std::abs(i[p] - v[p]) < 1e-15);

  const PhaseCurrents z = phase_currents_from_power(PhasePowers{}, v);
  for (int p = 0; p < 3; ++p) CHECK(z[p] == C{});

  const PhaseVoltages vu{{std::polar(1.03, 0.02), std::polar(0.97, -2.1), std::polar(1.01, 2.05)}};
  const PhasePowers su{{C(0.4, 0.1), C(0.25, -0.05), C(0.33, 0.2)}};
  const PhaseCurrents iu = phase_currents_from_power(su, vu);
  for (int p = 0; p < 3; ++p) {
    const C hand = std::conj(su[p]) / std::conj(vu[p]);
    CHECK(std::abs(iu[p] - hand) < 1e-15);
  }
}

TEST_CASE("degenerate voltage names the phase") {
  PhaseVoltages v = balanced_phase_voltages(1.0);
  v[1] = C(1e-7, 0.0);
  try {
    phase_currents_from_power(PhasePowers{{C(1, 0), C(1, 0), C(1, 0)}}, v);
    FAIL("expected DegenerateVoltageError");
  } catch (const DegenerateVoltageError& e) {
    CHECK(e.phase() == 1);
    CHECK(std::string(e.what()).find('b') != std::string::npos);
  }
}
