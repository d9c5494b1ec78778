#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "tdcosim/netmodel.hpp"
#include "tdcosim/seqxform.hpp"

namespace tdcosim {

/// Bit set over phases a (bit 0), b (bit 1), c (bit 2).
class PhaseSet {
 public:
  constexpr PhaseSet() = default;
  constexpr explicit PhaseSet(std::uint8_t bits) : bits_(bits & 7u) {}
  static constexpr PhaseSet abc() { return PhaseSet(7); }
  static constexpr PhaseSet single(int p) { return PhaseSet(static_cast<std::uint8_t>(1u << p)); }

  constexpr bool has(int p) const { return (bits_ >> p) & 1u; }
  constexpr int count() const { return (bits_ & 1) + ((bits_ >> 1) & 1) + ((bits_ >> 2) & 1); }
  constexpr bool empty() const { return bits_ == 0; }
  constexpr bool subset_of(PhaseSet o) const { return (bits_ & ~o.bits_) == 0; }
  constexpr std::uint8_t bits() const { return bits_; }
  constexpr bool operator==(const PhaseSet&) const = default;

  /// "abc", "ab", "c", ...
  std::string str() const;
  /// Parses letters a/b/c in any order; throws InputError on anything else.
  static PhaseSet parse(const std::string& s);

 private:
  std::uint8_t bits_ = 0;
};

using PhaseMatrix = std::array<std::array<Complex, 3>, 3>;

struct FeederNode {
  int id = 0;
  PhaseSet phases = PhaseSet::abc();

  bool operator==(const FeederNode&) const = default;
};

struct FeederLine {
  int from = 0;  ///< node id, closer to the head
  int to = 0;
  PhaseSet phases = PhaseSet::abc();
  PhaseMatrix z_abc{};  ///< ohm, entries of absent phases ignored

  bool operator==(const FeederLine&) const = default;
};

struct PhaseLoad {
  int node = 0;
  PhasePowers s;  ///< MVA per phase (P + jQ)

  bool operator==(const PhaseLoad&) const = default;
};

struct Feeder {
  std::string id;
  double base_kv = 0.0;  ///< line-to-line
  double base_mva = 100.0;
  int head = 0;  ///< node id of the substation head
  std::vector<FeederNode> nodes;
  std::vector<FeederLine> lines;
  std::vector<PhaseLoad> loads;

  int node_index(int id) const;
  double impedance_base() const { return base_kv * base_kv / base_mva; }
  /// Sum of all load powers (MVA), no losses.
  Complex total_load() const;
  /// Per-phase sum of load powers (MVA).
  PhasePowers phase_load() const;

  bool operator==(const Feeder&) const = default;
};

/// Radiality, phase consistency, impedance symmetry, load placement.
std::vector<Violation> validate_feeder(const Feeder& f);

struct SweepOptions {
  double tol = 1e-6;  ///< max per-phase |ΔV| between sweeps, pu
  int max_iter = 100;
};

struct FeederSolution {
  std::vector<int> node_ids;
  std::vector<PhaseVoltages> voltages;     ///< pu, absent phases are zero
  std::vector<PhaseCurrents> line_currents;  ///< pu, same order as Feeder::lines, from → to
  PhaseVoltages head_voltage;              ///< pu, the voltage the feeder was driven with
  PhaseCurrents head_current;              ///< pu, leaving the head into the feeder
  double base_mva = 0.0;
  int iterations = 0;
  bool converged = false;
  double last_delta = 0.0;

  const PhaseVoltages& voltage(int node_id) const;
};

/// Backward/forward sweep with constant-PQ wye loads. Throws
/// ConvergenceError after max_iter sweeps and VoltageCollapseError when a
/// present phase drops below 0.5 pu.
FeederSolution sweep_solve(const Feeder& f, const PhaseVoltages& head_v, const SweepOptions& opt = {});

/// Complex power per phase entering the feeder at the head, in MVA.
PhasePowers head_power(const FeederSolution& sol);

/// Reshapes every three-phase load to phase a: (1+α)·p̄, b and c: (1−α/2)·p̄,
/// where p̄ is the load's mean per-phase power. Per-node totals are kept.
Feeder apply_unbalance(const Feeder& f, double alpha);

/// Fractions of load points by phase count; normalized internally.
struct PhaseMix {
  double three_phase = 1.0;
  double two_phase = 0.0;
  double single_phase = 0.0;
};

struct SynthFeederSpec {
  int nodes = 2;
  Complex total_load{1.0, 0.2};  ///< MVA
  double base_kv = 34.5;
  double base_mva = 100.0;
  PhaseMix mix;
  std::uint64_t seed = 1;
  double target_drop = 0.04;  ///< head-to-worst-node drop at full load, pu
  std::string id = "synth";
};

/// Deterministic radial feeder with a three-phase backbone and one- and
/// two-phase laterals emitted as phase-rotated triplets, so the feeder is
/// exactly balanced until apply_unbalance is used. Impedances are scaled to
/// reach `target_drop` at nominal head voltage.
Feeder synth_feeder(const SynthFeederSpec& spec);

}  // namespace tdcosim
