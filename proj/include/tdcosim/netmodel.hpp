#pragma once

#include <array>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "tdcosim/seqxform.hpp"

namespace tdcosim {

using BusId = int;

enum class BusKind { Slack, PV, PQ };

struct Bus {
  BusId id = 0;
  BusKind kind = BusKind::PQ;
  double base_kv = 0.0;
  double v_setpoint = 1.0;      ///< pu; used for Slack and PV
  double angle_setpoint = 0.0;  ///< rad; used for Slack

  bool operator==(const Bus&) const = default;
};

/// How a branch appears in the zero-sequence network.
///   Through:  series z0 between the buses (lines, grounded-wye/grounded-wye).
///   Grounded: delta on the `from` side, grounded wye on the `to` side; a
///             shunt 1/z0 at `to` and nothing at `from`.
///   Open:     no zero-sequence element at all.
enum class ZeroSeqPath { Through, Grounded, Open };

/// Off-diagonal part of a branch's series sequence admittance block, indexed
/// [row sequence][column sequence] with 0/1/2 = zero/positive/negative. The
/// diagonal is ignored.
using SequenceCoupling = std::array<std::array<Complex, 3>, 3>;

struct Branch {
  BusId from = 0;
  BusId to = 0;
  Complex z1{0.0, 0.0};
  Complex z2{0.0, 0.0};  ///< defaults to z1 when read without an explicit value
  Complex z0{0.0, 0.0};
  double b1_shunt = 0.0;  ///< total line charging, split half per end
  double b0_shunt = 0.0;
  double tap = 1.0;  ///< off-nominal ratio on the `from` side
  ZeroSeqPath zero_seq_path = ZeroSeqPath::Through;
  bool untransposed = false;
  std::optional<SequenceCoupling> coupling;  ///< only when untransposed

  bool operator==(const Branch&) const = default;
};

struct CostCurve {
  double a = 0.0;  ///< $/MW²h (or per pu² when normalized)
  double b = 0.0;  ///< $/MWh
  double c = 0.0;  ///< $/h

  bool operator==(const CostCurve&) const = default;
};

struct Generator {
  BusId bus = 0;
  double p_min = 0.0;
  double p_max = 0.0;
  double q_min = 0.0;
  double q_max = 0.0;
  CostCurve cost;
  double p_set = 0.0;
  double q_set = 0.0;
  /// Negative-sequence machine impedance to ground; without it the machine
  /// does not appear in the negative-sequence network.
  std::optional<Complex> z2;
  /// Zero-sequence grounding impedance; absent means an ungrounded machine.
  std::optional<Complex> z0;

  bool operator==(const Generator&) const = default;
};

struct LumpedLoad {
  double p = 0.0;
  double q = 0.0;

  bool operator==(const LumpedLoad&) const = default;
};

struct FeederRef {
  std::string feeder_id;

  bool operator==(const FeederRef&) const = default;
};

struct LoadAttachment {
  BusId bus = 0;
  std::variant<LumpedLoad, FeederRef> kind;
  std::optional<std::string> loadshape_id;

  bool is_feeder() const { return std::holds_alternative<FeederRef>(kind); }

  bool operator==(const LoadAttachment&) const = default;
};

enum class PowerUnit { MW, PerUnit };
enum class ImpedanceUnit { Ohm, PerUnit };

struct TransmissionCase {
  double base_mva = 100.0;
  /// Units of generator/load powers and cost coefficients.
  PowerUnit power_unit = PowerUnit::MW;
  /// Units of branch impedances (ohm, with shunts in siemens) or per-unit.
  ImpedanceUnit impedance_unit = ImpedanceUnit::PerUnit;
  std::vector<Bus> buses;
  std::vector<Branch> branches;
  std::vector<Generator> generators;
  std::vector<LoadAttachment> loads;

  /// Position of a bus in `buses`, or -1.
  int bus_index(BusId id) const;
  const Bus& bus(BusId id) const;
  bool is_per_unit() const {
    return power_unit == PowerUnit::PerUnit && impedance_unit == ImpedanceUnit::PerUnit;
  }

  bool operator==(const TransmissionCase&) const = default;
};

/// Kind of element a violation refers to, so callers holding source
/// locations can point at it.
enum class Element { None, Bus, Branch, Generator, Load, Node, Line };

struct Violation {
  std::string what;
  Element element = Element::None;
  int index = -1;  ///< position in the owning collection
};

/// Checks every structural invariant of the case. Violations are returned as
/// data; an empty list means the case is usable.
std::vector<Violation> validate_case(const TransmissionCase& c);

/// Returns the case with every power, cost and impedance on the system base.
/// Already-normalized quantities are left untouched.
TransmissionCase to_per_unit(const TransmissionCase& raw);

/// Inverse of to_per_unit: powers in MW/MVAr, impedances in ohm (shunts in S)
/// referred to the `from` bus voltage base.
TransmissionCase to_physical(const TransmissionCase& c);

/// Series sequence impedances and coupling block derived from a 3×3 phase
/// impedance matrix (same units in, same units out).
struct SequenceImpedances {
  Complex z0, z1, z2;
  SequenceCoupling coupling{};
};
SequenceImpedances sequence_impedances_from_phase(const std::array<std::array<Complex, 3>, 3>& zabc);

std::string to_string(BusKind k);
std::string to_string(ZeroSeqPath p);

}  // namespace tdcosim
