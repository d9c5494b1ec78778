#pragma once

#include <vector>

#include "tdcosim/cosim.hpp"
#include "tdcosim/io.hpp"

namespace fixture {

// A case9 system with synthetic feeders replacing the lumped loads at `buses`.
struct System {
  tdcosim::TransmissionCase pu;
  std::vector<tdcosim::PccFeeder> feeders;
};

inline tdcosim::TransmissionCase case9_mw() {
  return tdcosim::io::load_case(TDCOSIM_SOURCE_DIR "/data/case9.td").transmission;
}

inline tdcosim::Complex lumped_mva(const tdcosim::TransmissionCase& c, tdcosim::BusId bus) {
  tdcosim::Complex s{};
  for (const auto& l : c.loads) {
    if (l.bus != bus) continue;
    if (const auto* p = std::get_if<tdcosim::LumpedLoad>(&l.kind)) s += tdcosim::Complex(p->p, p->q);
  }
  return s;
}

inline System case9_with_feeders(const std::vector<tdcosim::BusId>& buses, int nodes, double alpha = 0.0,
                                 double load_scale = 1.0, std::uint64_t seed = 1) {
  using namespace tdcosim;
  const TransmissionCase mw = case9_mw();
  System s;
  for (BusId b : buses) {
    SynthFeederSpec spec;
    spec.nodes = nodes;
    spec.total_load = lumped_mva(mw, b);
    spec.mix = {0.6, 0.2, 0.2};
    spec.seed = seed;
    spec.id = "synth_bus" + std::to_string(b);
    Feeder f = synth_feeder(spec);
    for (auto& l : f.loads) l.s = load_scale * l.s;
    if (alpha != 0.0) f = apply_unbalance(f, alpha);
    s.feeders.push_back({b, std::move(f), std::nullopt});
  }
  s.pu = to_per_unit(attach_feeders(mw, s.feeders));
  return s;
}

inline tdcosim::LoadshapeSet flat_shapes(int minutes = 1440, double m = 1.0) {
  tdcosim::LoadshapeSet set;
  tdcosim::LoadshapeSeries flat;
  flat.id = "flat";
  flat.samples.assign(static_cast<std::size_t>(minutes), m);
  set.shapes["flat"] = flat;
  set.default_id = "flat";
  return set;
}

}  // namespace fixture
