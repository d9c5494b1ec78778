#pragma once

#include <array>
#include <complex>
#include <cstddef>

namespace tdcosim {

using Complex = std::complex<double>;

/// Three complex values tagged with the frame they live in, so phase and
/// sequence quantities cannot be mixed up silently.
template <class Tag>
struct Triple {
  std::array<Complex, 3> v{};

  Triple() = default;
  Triple(Complex x0, Complex x1, Complex x2) : v{x0, x1, x2} {}
  Triple(const std::array<Complex, 3>& a) : v(a) {}

  Complex& operator[](std::size_t i) { return v[i]; }
  const Complex& operator[](std::size_t i) const { return v[i]; }

  Triple& operator+=(const Triple& o) {
    for (std::size_t i = 0; i < 3; ++i) v[i] += o.v[i];
    return *this;
  }
  friend Triple operator+(Triple a, const Triple& b) { return a += b; }
  friend Triple operator*(double k, Triple a) {
    for (auto& x : a.v) x *= k;
    return a;
  }
  friend bool operator==(const Triple&, const Triple&) = default;
};

struct PhaseVoltageTag {};
struct SequenceVoltageTag {};
struct PhaseCurrentTag {};
struct SequenceCurrentTag {};
struct PhasePowerTag {};

/// va, vb, vc in per-unit of the line-to-neutral base. Index 0, 1, 2 = a, b, c.
using PhaseVoltages = Triple<PhaseVoltageTag>;
/// v0, v1, v2 (zero, positive, negative). Index matches the sequence number.
using SequenceVoltages = Triple<SequenceVoltageTag>;
using PhaseCurrents = Triple<PhaseCurrentTag>;
using SequenceCurrents = Triple<SequenceCurrentTag>;
/// Complex power per phase, P + jQ. Units are set by the owner (MVA or pu).
using PhasePowers = Triple<PhasePowerTag>;

namespace seq {
inline constexpr std::size_t kZero = 0;
inline constexpr std::size_t kPositive = 1;
inline constexpr std::size_t kNegative = 2;
}  // namespace seq

/// Phase currents are not computed below this voltage magnitude (pu).
inline constexpr double kVoltageFloor = 1e-6;

/// The rotation operator a = 1∠120°.
Complex rotation_a();

/// Fortescue matrix A (abc = A·012); first column all ones.
std::array<std::array<Complex, 3>, 3> fortescue_matrix();
/// A⁻¹ = (1/3)·[[1,1,1],[1,a,a²],[1,a²,a]].
std::array<std::array<Complex, 3>, 3> fortescue_inverse();

SequenceVoltages phase_to_sequence(const PhaseVoltages& v);
PhaseVoltages sequence_to_phase(const SequenceVoltages& v);
SequenceCurrents phase_to_sequence(const PhaseCurrents& i);
PhaseCurrents sequence_to_phase(const SequenceCurrents& i);

/// i_p = conj(s_p / v_p). Throws DegenerateVoltageError when |v_p| is below
/// kVoltageFloor.
PhaseCurrents phase_currents_from_power(const PhasePowers& s, const PhaseVoltages& v);

/// A balanced positive-sequence set with the given magnitude and angle of phase a.
PhaseVoltages balanced_phase_voltages(double magnitude, double angle_rad = 0.0);

}  // namespace tdcosim
