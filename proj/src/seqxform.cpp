#include "tdcosim/seqxform.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "tdcosim/error.hpp"

namespace tdcosim {

namespace {

using Matrix3 = std::array<std::array<Complex, 3>, 3>;

std::array<Complex, 3> multiply(const Matrix3& m, const std::array<Complex, 3>& x) {
  std::array<Complex, 3> y{};
  for (std::size_t r = 0; r < 3; ++r) {
    y[r] = m[r][0] * x[0] + m[r][1] * x[1] + m[r][2] * x[2];
  }
  return y;
}

// Cached at first use; both matrices are constants of the convention.
const Matrix3& forward() {
  static const Matrix3 m = fortescue_matrix();
  return m;
}
const Matrix3& inverse() {
  static const Matrix3 m = fortescue_inverse();
  return m;
}

}  // namespace

Complex rotation_a() { return std::polar(1.0, 2.0 * std::numbers::pi / 3.0); }

Matrix3 fortescue_matrix() {
  const Complex a = rotation_a();
  const Complex a2 = a * a;
  return {{{1.0, 1.0, 1.0}, {1.0, a2, a}, {1.0, a, a2}}};
}

Matrix3 fortescue_inverse() {
  const Complex a = rotation_a();
  const Complex a2 = a * a;
  const double k = 1.0 / 3.0;
  return {{{k, k, k}, {k, k * a, k * a2}, {k, k * a2, k * a}}};
}

SequenceVoltages phase_to_sequence(const PhaseVoltages& v) {
  SequenceVoltages out;
  out.v = multiply(inverse(), v.v);
  return out;
}

PhaseVoltages sequence_to_phase(const SequenceVoltages& v) {
  PhaseVoltages out;
  out.v = multiply(forward(), v.v);
  return out;
}

SequenceCurrents phase_to_sequence(const PhaseCurrents& i) {
  SequenceCurrents out;
  out.v = multiply(inverse(), i.v);
  return out;
}

PhaseCurrents sequence_to_phase(const SequenceCurrents& i) {
  PhaseCurrents out;
  out.v = multiply(forward(), i.v);
  return out;
}

PhaseCurrents phase_currents_from_power(const PhasePowers& s, const PhaseVoltages& v) {
  static constexpr char kNames[] = {'a', 'b', 'c'};
  PhaseCurrents i;
  for (std::size_t p = 0; p < 3; ++p) {
    if (std::abs(v[p]) < kVoltageFloor) {
      throw DegenerateVoltageError(std::string("degenerate voltage on phase ") + kNames[p] + ": |v| = " +
                                       std::to_string(std::abs(v[p])) + " pu",
                                   static_cast<int>(p));
    }
    i[p] = std::conj(s[p] / v[p]);
  }
  return i;
}

PhaseVoltages balanced_phase_voltages(double magnitude, double angle_rad) {
  const double shift = 2.0 * std::numbers::pi / 3.0;
  return {std::polar(magnitude, angle_rad), std::polar(magnitude, angle_rad - shift),
          std::polar(magnitude, angle_rad + shift)};
}

}  // namespace tdcosim
