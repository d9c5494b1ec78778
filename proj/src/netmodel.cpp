#include "tdcosim/netmodel.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "tdcosim/error.hpp"

namespace tdcosim {

int TransmissionCase::bus_index(BusId id) const {
  for (std::size_t i = 0; i < buses.size(); ++i) {
    if (buses[i].id == id) return static_cast<int>(i);
  }
  return -1;
}

const Bus& TransmissionCase::bus(BusId id) const {
  const int i = bus_index(id);
  if (i < 0) throw InputError("unknown bus " + std::to_string(id));
  return buses[static_cast<std::size_t>(i)];
}

std::string to_string(BusKind k) {
  switch (k) {
    case BusKind::Slack: return "slack";
    case BusKind::PV: return "pv";
    case BusKind::PQ: return "pq";
  }
  return "?";
}

std::string to_string(ZeroSeqPath p) {
  switch (p) {
    case ZeroSeqPath::Through: return "through";
    case ZeroSeqPath::Grounded: return "grounded";
    case ZeroSeqPath::Open: return "open";
  }
  return "?";
}

namespace {

std::string branch_label(const Branch& br) {
  return "branch " + std::to_string(br.from) + "-" + std::to_string(br.to);
}

}  // namespace

std::vector<Violation> validate_case(const TransmissionCase& c) {
  std::vector<Violation> out;
  Element element = Element::None;
  int index = -1;
  auto add = [&](std::string s) { out.push_back({std::move(s), element, index}); };

  if (!(c.base_mva > 0.0)) add("base_mva must be positive");
  if (c.buses.empty()) add("case has no buses");

  std::set<BusId> ids;
  std::vector<BusId> slacks;
  for (const auto& b : c.buses) {
    element = Element::Bus;
    index = static_cast<int>(&b - c.buses.data());
    if (!ids.insert(b.id).second) add("duplicate bus id " + std::to_string(b.id));
    if (!(b.base_kv > 0.0)) add("bus " + std::to_string(b.id) + ": base_kv must be positive");
    if (b.kind != BusKind::PQ && !(b.v_setpoint > 0.0)) {
      add("bus " + std::to_string(b.id) + ": v_setpoint must be positive");
    }
    if (b.kind == BusKind::Slack) slacks.push_back(b.id);
  }
  element = Element::None;
  index = -1;
  if (slacks.size() != 1) {
    std::ostringstream os;
    os << "expected exactly one slack bus, found " << slacks.size();
    if (!slacks.empty()) {
      os << " (buses";
      for (auto id : slacks) os << ' ' << id;
      os << ')';
    }
    add(os.str());
  }

  for (const auto& br : c.branches) {
    element = Element::Branch;
    index = static_cast<int>(&br - c.branches.data());
    const bool from_ok = ids.count(br.from) > 0;
    const bool to_ok = ids.count(br.to) > 0;
    if (!from_ok) add(branch_label(br) + ": from bus " + std::to_string(br.from) + " does not exist");
    if (!to_ok) add(branch_label(br) + ": to bus " + std::to_string(br.to) + " does not exist");
    if (br.from == br.to) add(branch_label(br) + ": from and to are the same bus");
    if (!(std::abs(br.z1) > 0.0)) add(branch_label(br) + ": |z1| must be positive");
    if (!(std::abs(br.z2) > 0.0)) add(branch_label(br) + ": |z2| must be positive");
    if (br.zero_seq_path != ZeroSeqPath::Open && !(std::abs(br.z0) > 0.0)) {
      add(branch_label(br) + ": |z0| must be positive");
    }
    if (!(br.tap > 0.0)) add(branch_label(br) + ": tap must be positive");
    if (br.coupling && !br.untransposed) {
      add(branch_label(br) + ": coupling block given but the line is not flagged untransposed");
    }
  }

  for (const auto& g : c.generators) {
    element = Element::Generator;
    index = static_cast<int>(&g - c.generators.data());
    const std::string label = "generator at bus " + std::to_string(g.bus);
    if (!ids.count(g.bus)) add(label + ": bus does not exist");
    if (g.p_min > g.p_max) add(label + ": p_min > p_max");
    if (g.p_set < g.p_min || g.p_set > g.p_max) add(label + ": p_set outside [p_min, p_max]");
    if (g.q_min > g.q_max) add(label + ": q_min > q_max");
    if (g.cost.a < 0.0) add(label + ": cost coefficient a must be non-negative");
  }

  std::set<BusId> feeder_buses;
  for (const auto& l : c.loads) {
    element = Element::Load;
    index = static_cast<int>(&l - c.loads.data());
    const std::string label = "load at bus " + std::to_string(l.bus);
    if (!ids.count(l.bus)) add(label + ": bus does not exist");
    if (l.is_feeder() && !feeder_buses.insert(l.bus).second) {
      add(label + ": more than one feeder attached");
    }
  }

  element = Element::None;
  index = -1;
  // Connectivity over branches whose both ends exist.
  if (!c.buses.empty()) {
    std::map<BusId, std::vector<BusId>> adj;
    for (const auto& b : c.buses) adj[b.id];
    for (const auto& br : c.branches) {
      if (ids.count(br.from) && ids.count(br.to)) {
        adj[br.from].push_back(br.to);
        adj[br.to].push_back(br.from);
      }
    }
    std::set<BusId> seen{c.buses.front().id};
    std::vector<BusId> stack{c.buses.front().id};
    while (!stack.empty()) {
      const BusId u = stack.back();
      stack.pop_back();
      for (BusId w : adj[u]) {
        if (seen.insert(w).second) stack.push_back(w);
      }
    }
    if (seen.size() != ids.size()) {
      std::ostringstream os;
      os << "network is not connected; unreachable buses:";
      for (BusId id : ids) {
        if (!seen.count(id)) os << ' ' << id;
      }
      add(os.str());
    }
  }
  return out;
}

namespace {

void check_bases(const TransmissionCase& c) {
  if (!(c.base_mva > 0.0)) {
    throw InputError("per-unit conversion needs a positive base_mva, got " + std::to_string(c.base_mva));
  }
  for (const auto& b : c.buses) {
    if (!(b.base_kv > 0.0)) {
      throw InputError("per-unit conversion needs a positive base_kv at bus " + std::to_string(b.id));
    }
  }
}

double impedance_base(const TransmissionCase& c, BusId bus) {
  const double kv = c.bus(bus).base_kv;
  return kv * kv / c.base_mva;
}

// Scales every power-like quantity. `k` multiplies MW to get the target unit.
void scale_powers(TransmissionCase& c, double k) {
  for (auto& g : c.generators) {
    g.p_min *= k;
    g.p_max *= k;
    g.q_min *= k;
    g.q_max *= k;
    g.p_set *= k;
    g.q_set *= k;
    // C(P) = aP² + bP + c must be invariant under P' = kP.
    g.cost.a /= k * k;
    g.cost.b /= k;
  }
  for (auto& l : c.loads) {
    if (auto* lumped = std::get_if<LumpedLoad>(&l.kind)) {
      lumped->p *= k;
      lumped->q *= k;
    }
  }
}

// Multiplies impedances by `kz` and admittances by 1/kz; kz depends on the bus.
template <class ScaleFor>
void scale_impedances(TransmissionCase& c, ScaleFor scale_for) {
  for (auto& br : c.branches) {
    const double kz = scale_for(br.from);
    br.z1 *= kz;
    br.z2 *= kz;
    br.z0 *= kz;
    br.b1_shunt /= kz;
    br.b0_shunt /= kz;
    if (br.coupling) {
      for (auto& row : *br.coupling) {
        for (auto& y : row) y /= kz;
      }
    }
  }
  for (auto& g : c.generators) {
    const double kz = scale_for(g.bus);
    if (g.z2) *g.z2 *= kz;
    if (g.z0) *g.z0 *= kz;
  }
}

}  // namespace

TransmissionCase to_per_unit(const TransmissionCase& raw) {
  check_bases(raw);
  TransmissionCase c = raw;
  if (c.power_unit == PowerUnit::MW) {
    scale_powers(c, 1.0 / c.base_mva);
    c.power_unit = PowerUnit::PerUnit;
  }
  if (c.impedance_unit == ImpedanceUnit::Ohm) {
    scale_impedances(c, [&raw](BusId b) { return 1.0 / impedance_base(raw, b); });
    c.impedance_unit = ImpedanceUnit::PerUnit;
  }
  return c;
}

TransmissionCase to_physical(const TransmissionCase& raw) {
  check_bases(raw);
  TransmissionCase c = raw;
  if (c.power_unit == PowerUnit::PerUnit) {
    scale_powers(c, c.base_mva);
    c.power_unit = PowerUnit::MW;
  }
  if (c.impedance_unit == ImpedanceUnit::PerUnit) {
    scale_impedances(c, [&raw](BusId b) { return impedance_base(raw, b); });
    c.impedance_unit = ImpedanceUnit::Ohm;
  }
  return c;
}

SequenceImpedances sequence_impedances_from_phase(const std::array<std::array<Complex, 3>, 3>& zabc) {
  Eigen::Matrix3cd z;
  Eigen::Matrix3cd a;
  Eigen::Matrix3cd a_inv;
  const auto fa = fortescue_matrix();
  const auto fi = fortescue_inverse();
  for (int r = 0; r < 3; ++r) {
    for (int k = 0; k < 3; ++k) {
      z(r, k) = zabc[r][k];
      a(r, k) = fa[r][k];
      a_inv(r, k) = fi[r][k];
    }
  }
  const Eigen::Matrix3cd y012 = (a_inv * z * a).inverse();
  SequenceImpedances out;
  out.z0 = 1.0 / y012(0, 0);
  out.z1 = 1.0 / y012(1, 1);
  out.z2 = 1.0 / y012(2, 2);
  for (int r = 0; r < 3; ++r) {
    for (int k = 0; k < 3; ++k) {
      out.coupling[r][k] = (r == k) ? Complex{} : y012(r, k);
    }
  }
  return out;
}

}  // namespace tdcosim
