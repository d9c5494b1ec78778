#include "tdcosim/dsolve.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "tdcosim/error.hpp"

namespace tdcosim {

std::string PhaseSet::str() const {
  std::string s;
  for (int p = 0; p < 3; ++p) {
    if (has(p)) s += static_cast<char>('a' + p);
  }
  return s;
}

PhaseSet PhaseSet::parse(const std::string& s) {
  std::uint8_t bits = 0;
  for (char ch : s) {
    if (ch < 'a' || ch > 'c') throw InputError("invalid phase letter '" + std::string(1, ch) + "'");
    const auto bit = static_cast<std::uint8_t>(1u << (ch - 'a'));
    if (bits & bit) throw InputError("phase '" + std::string(1, ch) + "' repeated");
    bits |= bit;
  }
  if (bits == 0) throw InputError("empty phase set");
  return PhaseSet(bits);
}

int Feeder::node_index(int id) const {
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (nodes[i].id == id) return static_cast<int>(i);
  }
  return -1;
}

Complex Feeder::total_load() const {
  Complex s{};
  for (const auto& l : loads) s += l.s[0] + l.s[1] + l.s[2];
  return s;
}

PhasePowers Feeder::phase_load() const {
  PhasePowers s;
  for (const auto& l : loads) s += l.s;
  return s;
}

const PhaseVoltages& FeederSolution::voltage(int node_id) const {
  const auto it = std::find(node_ids.begin(), node_ids.end(), node_id);
  if (it == node_ids.end()) throw InputError("unknown feeder node " + std::to_string(node_id));
  return voltages[static_cast<std::size_t>(it - node_ids.begin())];
}

namespace {

// BFS orientation of a radial feeder from its head.
struct Topology {
  std::vector<int> order;        // node indices, head first
  std::vector<int> parent_line;  // per node index, -1 at head
  std::vector<int> parent_node;
  std::vector<int> downstream;   // per line: node index on the far side from the head
};

Topology orient(const Feeder& f) {
  const int n = static_cast<int>(f.nodes.size());
  const int head = f.node_index(f.head);
  if (head < 0) throw InputError("feeder head node " + std::to_string(f.head) + " does not exist");
  if (static_cast<int>(f.lines.size()) != n - 1) {
    throw InputError("feeder is not radial: " + std::to_string(f.lines.size()) + " lines for " + std::to_string(n) +
                     " nodes");
  }
  std::vector<std::vector<std::pair<int, int>>> adj(static_cast<std::size_t>(n));
  for (std::size_t l = 0; l < f.lines.size(); ++l) {
    const int a = f.node_index(f.lines[l].from);
    const int b = f.node_index(f.lines[l].to);
    if (a < 0 || b < 0) throw InputError("feeder line references an unknown node");
    adj[static_cast<std::size_t>(a)].emplace_back(b, static_cast<int>(l));
    adj[static_cast<std::size_t>(b)].emplace_back(a, static_cast<int>(l));
  }
  Topology t;
  t.parent_line.assign(static_cast<std::size_t>(n), -1);
  t.parent_node.assign(static_cast<std::size_t>(n), -1);
  t.downstream.assign(f.lines.size(), -1);
  std::vector<char> seen(static_cast<std::size_t>(n), 0);
  t.order.push_back(head);
  seen[static_cast<std::size_t>(head)] = 1;
  for (std::size_t k = 0; k < t.order.size(); ++k) {
    const int u = t.order[k];
    for (auto [w, l] : adj[static_cast<std::size_t>(u)]) {
      if (seen[static_cast<std::size_t>(w)]) continue;
      seen[static_cast<std::size_t>(w)] = 1;
      t.parent_line[static_cast<std::size_t>(w)] = l;
      t.parent_node[static_cast<std::size_t>(w)] = u;
      t.downstream[static_cast<std::size_t>(l)] = w;
      t.order.push_back(w);
    }
  }
  if (static_cast<int>(t.order.size()) != n) throw InputError("feeder is not connected");
  return t;
}

bool close(Complex a, Complex b) { return std::abs(a - b) <= 1e-12 * std::max({1.0, std::abs(a), std::abs(b)}); }

}  // namespace

std::vector<Violation> validate_feeder(const Feeder& f) {
  std::vector<Violation> out;
  Element element = Element::None;
  int index = -1;
  auto add = [&](std::string s) { out.push_back({std::move(s), element, index}); };
  if (!(f.base_kv > 0.0)) add("base_kv must be positive");
  if (!(f.base_mva > 0.0)) add("base_mva must be positive");
  if (f.nodes.empty()) {
    add("feeder has no nodes");
    return out;
  }

  std::map<int, int> node_index;
  for (std::size_t i = 0; i < f.nodes.size(); ++i) {
    element = Element::Node;
    index = static_cast<int>(i);
    if (!node_index.emplace(f.nodes[i].id, static_cast<int>(i)).second) {
      add("duplicate node id " + std::to_string(f.nodes[i].id));
    }
    if (f.nodes[i].phases.empty()) add("node " + std::to_string(f.nodes[i].id) + " has no phases");
  }
  element = Element::None;
  index = -1;
  if (!node_index.count(f.head)) add("head node " + std::to_string(f.head) + " does not exist");

  // Union-find to catch loops; on a loop, report the path closing it.
  std::vector<int> uf(f.nodes.size());
  std::iota(uf.begin(), uf.end(), 0);
  auto find = [&uf](int x) {
    while (uf[static_cast<std::size_t>(x)] != x) x = uf[static_cast<std::size_t>(x)] = uf[static_cast<std::size_t>(uf[static_cast<std::size_t>(x)])];
    return x;
  };
  std::vector<std::vector<int>> forest(f.nodes.size());
  for (const auto& ln : f.lines) {
    element = Element::Line;
    index = static_cast<int>(&ln - f.lines.data());
    const std::string label = "line " + std::to_string(ln.from) + "-" + std::to_string(ln.to);
    const auto fi = node_index.find(ln.from);
    const auto ti = node_index.find(ln.to);
    if (fi == node_index.end() || ti == node_index.end()) {
      add(label + ": references an unknown node");
      continue;
    }
    if (ln.phases.empty()) add(label + ": no phases");
    const PhaseSet np = f.nodes[static_cast<std::size_t>(fi->second)].phases;
    const PhaseSet tp = f.nodes[static_cast<std::size_t>(ti->second)].phases;
    if (!ln.phases.subset_of(np) || !ln.phases.subset_of(tp)) {
      add(label + ": phases " + ln.phases.str() + " not present at both end nodes");
    }
    for (int p = 0; p < 3; ++p) {
      if (!ln.phases.has(p)) continue;
      if (!(std::abs(ln.z_abc[p][p]) > 0.0)) add(label + ": zero self impedance on phase " + std::string(1, 'a' + p));
      for (int q = 0; q < 3; ++q) {
        if (ln.phases.has(q) && !close(ln.z_abc[p][q], ln.z_abc[q][p])) {
          add(label + ": impedance matrix is not symmetric");
          p = q = 3;
        }
      }
    }
    const int a = find(fi->second);
    const int b = find(ti->second);
    if (a == b) {
      // BFS in the forest from `from` to `to` names the loop.
      const int src = fi->second;
      const int dst = ti->second;
      std::vector<int> prev(f.nodes.size(), -2);
      std::vector<int> queue{src};
      prev[static_cast<std::size_t>(src)] = -1;
      for (std::size_t k = 0; k < queue.size(); ++k) {
        for (int w : forest[static_cast<std::size_t>(queue[k])]) {
          if (prev[static_cast<std::size_t>(w)] == -2) {
            prev[static_cast<std::size_t>(w)] = queue[k];
            queue.push_back(w);
          }
        }
      }
      std::ostringstream os;
      os << "feeder is not radial: loop through nodes";
      for (int x = dst; x >= 0; x = prev[static_cast<std::size_t>(x)]) os << ' ' << f.nodes[static_cast<std::size_t>(x)].id;
      add(os.str());
      continue;
    }
    uf[static_cast<std::size_t>(a)] = b;
    forest[static_cast<std::size_t>(fi->second)].push_back(ti->second);
    forest[static_cast<std::size_t>(ti->second)].push_back(fi->second);
  }

  if (out.empty()) {
    try {
      const Topology t = orient(f);
      for (std::size_t i = 0; i < f.nodes.size(); ++i) {
        const int l = t.parent_line[i];
        element = Element::Node;
        index = static_cast<int>(i);
        if (l >= 0 && !f.nodes[i].phases.subset_of(f.lines[static_cast<std::size_t>(l)].phases)) {
          add("node " + std::to_string(f.nodes[i].id) + ": phases " + f.nodes[i].phases.str() +
              " exceed the supplying line's phases " + f.lines[static_cast<std::size_t>(l)].phases.str());
        }
      }
    } catch (const InputError& e) {
      element = Element::None;
      index = -1;
      add(e.what());
    }
  }

  for (const auto& ld : f.loads) {
    element = Element::Load;
    index = static_cast<int>(&ld - f.loads.data());
    const auto it = node_index.find(ld.node);
    if (it == node_index.end()) {
      add("load at unknown node " + std::to_string(ld.node));
      continue;
    }
    const PhaseSet ph = f.nodes[static_cast<std::size_t>(it->second)].phases;
    for (int p = 0; p < 3; ++p) {
      if (!ph.has(p) && ld.s[static_cast<std::size_t>(p)] != Complex{}) {
        add("load at node " + std::to_string(ld.node) + " uses absent phase " + std::string(1, 'a' + p));
      }
    }
  }
  return out;
}

FeederSolution sweep_solve(const Feeder& f, const PhaseVoltages& head_v, const SweepOptions& opt) {
  for (int p = 0; p < 3; ++p) {
    const double m = std::abs(head_v[static_cast<std::size_t>(p)]);
    if (!(m > 0.5 && m < 1.5)) {
      throw InputError("head voltage magnitude on phase " + std::string(1, 'a' + p) + " outside (0.5, 1.5) pu: " +
                       std::to_string(m));
    }
  }
  const Topology topo = orient(f);
  const std::size_t n = f.nodes.size();
  const double zbase = f.impedance_base();
  const double sbase_phase = f.base_mva / 3.0;

  std::vector<PhaseMatrix> z(f.lines.size());
  for (std::size_t l = 0; l < f.lines.size(); ++l) {
    for (int p = 0; p < 3; ++p) {
      for (int q = 0; q < 3; ++q) {
        const bool present = f.lines[l].phases.has(p) && f.lines[l].phases.has(q);
        z[l][p][q] = present ? f.lines[l].z_abc[p][q] / zbase : Complex{};
      }
    }
  }
  // Per-node load in pu of the per-phase base.
  std::vector<PhasePowers> load(n);
  for (const auto& ld : f.loads) {
    const int i = f.node_index(ld.node);
    if (i < 0) throw InputError("load at unknown node " + std::to_string(ld.node));
    load[static_cast<std::size_t>(i)] += (1.0 / sbase_phase) * ld.s;
  }

  FeederSolution sol;
  sol.base_mva = f.base_mva;
  sol.node_ids.reserve(n);
  for (const auto& nd : f.nodes) sol.node_ids.push_back(nd.id);
  sol.voltages.assign(n, PhaseVoltages{});
  for (std::size_t i = 0; i < n; ++i) {
    for (int p = 0; p < 3; ++p) {
      if (f.nodes[i].phases.has(p)) sol.voltages[i][static_cast<std::size_t>(p)] = head_v[static_cast<std::size_t>(p)];
    }
  }
  sol.line_currents.assign(f.lines.size(), PhaseCurrents{});
  std::vector<PhaseCurrents> accumulated(n);

  auto backward = [&]() {
    for (std::size_t i = 0; i < n; ++i) {
      PhaseCurrents il;
      for (std::size_t p = 0; p < 3; ++p) {
        if (load[i][p] != Complex{}) il[p] = std::conj(load[i][p] / sol.voltages[i][p]);
      }
      accumulated[i] = il;
    }
    for (std::size_t k = n; k-- > 1;) {
      const auto u = static_cast<std::size_t>(topo.order[k]);
      const int l = topo.parent_line[u];
      sol.line_currents[static_cast<std::size_t>(l)] = accumulated[u];
      accumulated[static_cast<std::size_t>(topo.parent_node[u])] += accumulated[u];
    }
  };

  std::vector<double> history;
  for (int it = 1; it <= opt.max_iter; ++it) {
    backward();
    double delta = 0.0;
    double vmin = 2.0;
    for (std::size_t k = 1; k < n; ++k) {
      const auto u = static_cast<std::size_t>(topo.order[k]);
      const auto l = static_cast<std::size_t>(topo.parent_line[u]);
      const auto& parent_v = sol.voltages[static_cast<std::size_t>(topo.parent_node[u])];
      const auto& cur = sol.line_currents[l];
      for (int p = 0; p < 3; ++p) {
        if (!f.nodes[u].phases.has(p)) continue;
        Complex drop{};
        for (int q = 0; q < 3; ++q) drop += z[l][p][q] * cur[static_cast<std::size_t>(q)];
        const Complex v_new = parent_v[static_cast<std::size_t>(p)] - drop;
        delta = std::max(delta, std::abs(v_new - sol.voltages[u][static_cast<std::size_t>(p)]));
        sol.voltages[u][static_cast<std::size_t>(p)] = v_new;
        vmin = std::min(vmin, std::abs(v_new));
      }
    }
    history.push_back(delta);
    sol.iterations = it;
    sol.last_delta = delta;
    if (vmin < 0.5) {
      throw VoltageCollapseError("feeder " + f.id + ": voltage collapse at sweep " + std::to_string(it) +
                                 " (min |V| = " + std::to_string(vmin) + " pu)");
    }
    if (delta < opt.tol) {
      sol.converged = true;
      break;
    }
  }
  if (!sol.converged) {
    std::ostringstream os;
    os << "feeder " << f.id << ": sweep did not converge in " << opt.max_iter << " sweeps (last dV " << sol.last_delta
       << " pu)";
    throw ConvergenceError(os.str(), history);
  }
  // Currents consistent with the final voltages.
  backward();
  sol.head_current = accumulated[static_cast<std::size_t>(topo.order.front())];
  sol.head_voltage = head_v;
  return sol;
}

PhasePowers head_power(const FeederSolution& sol) {
  if (!sol.converged) throw InputError("head_power needs a converged feeder solution");
  PhasePowers s;
  const double k = sol.base_mva / 3.0;
  for (std::size_t p = 0; p < 3; ++p) s[p] = k * sol.head_voltage[p] * std::conj(sol.head_current[p]);
  return s;
}

Feeder apply_unbalance(const Feeder& f, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 0.5)) {
    throw InputError("unbalance alpha must lie in [0, 0.5], got " + std::to_string(alpha));
  }
  Feeder out = f;
  if (alpha == 0.0) return out;
  for (auto& ld : out.loads) {
    const bool three_phase = ld.s[0] != Complex{} && ld.s[1] != Complex{} && ld.s[2] != Complex{};
    if (!three_phase) continue;
    const Complex mean = (ld.s[0] + ld.s[1] + ld.s[2]) / 3.0;
    ld.s[0] = (1.0 + alpha) * mean;
    ld.s[1] = (1.0 - alpha / 2.0) * mean;
    ld.s[2] = (1.0 - alpha / 2.0) * mean;
  }
  return out;
}

namespace {

PhaseMatrix circulant(Complex self, Complex mutual, PhaseSet phases, double length) {
  PhaseMatrix z{};
  for (int p = 0; p < 3; ++p) {
    for (int q = 0; q < 3; ++q) {
      if (phases.has(p) && phases.has(q)) z[p][q] = length * (p == q ? self : mutual);
    }
  }
  return z;
}

double max_drop(const Feeder& f) {
  SweepOptions opt;
  opt.tol = 1e-9;
  opt.max_iter = 200;
  const FeederSolution sol = sweep_solve(f, balanced_phase_voltages(1.0), opt);
  double vmin = 1.0;
  for (std::size_t i = 0; i < f.nodes.size(); ++i) {
    for (int p = 0; p < 3; ++p) {
      if (f.nodes[i].phases.has(p)) vmin = std::min(vmin, std::abs(sol.voltages[i][static_cast<std::size_t>(p)]));
    }
  }
  return 1.0 - vmin;
}

void scale_impedance(Feeder& f, double k) {
  for (auto& ln : f.lines) {
    for (auto& row : ln.z_abc) {
      for (auto& x : row) x *= k;
    }
  }
}

}  // namespace

Feeder synth_feeder(const SynthFeederSpec& spec) {
  if (spec.nodes < 2) throw InputError("synthetic feeder needs at least 2 nodes");
  if (!(spec.total_load.real() > 0.0)) throw InputError("synthetic feeder needs a positive total load");
  if (!(spec.base_kv > 0.0) || !(spec.base_mva > 0.0)) throw InputError("synthetic feeder bases must be positive");
  const double mix_sum = spec.mix.three_phase + spec.mix.two_phase + spec.mix.single_phase;
  if (spec.mix.three_phase < 0 || spec.mix.two_phase < 0 || spec.mix.single_phase < 0 || !(mix_sum > 0.0)) {
    throw InputError("phase mix fractions must be non-negative with a positive sum");
  }
  if (!(spec.target_drop > 0.0 && spec.target_drop < 0.3)) throw InputError("target drop must lie in (0, 0.3)");

  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

  // Overhead 34.5 kV class conductor, ohm/km.
  const Complex z_self{0.25, 0.75};
  const Complex z_mutual{0.08, 0.35};

  Feeder f;
  f.id = spec.id;
  f.base_kv = spec.base_kv;
  f.base_mva = spec.base_mva;
  f.head = 0;

  const int backbone = spec.nodes <= 4 ? spec.nodes : std::max(2, spec.nodes / 4);
  for (int i = 0; i < backbone; ++i) f.nodes.push_back({i, PhaseSet::abc()});
  for (int i = 1; i < backbone; ++i) {
    const int lo = std::max(0, i - 3);
    const int parent = lo + static_cast<int>(unit(rng) * (i - lo));
    f.lines.push_back({parent, i, PhaseSet::abc(), circulant(z_self, z_mutual, PhaseSet::abc(), uniform(0.3, 1.5))});
  }

  // A load point is a set of nodes sharing one weight.
  struct LoadPoint {
    std::vector<int> nodes;
    std::vector<PhaseSet> phases;
  };
  std::vector<LoadPoint> points;
  std::vector<char> has_child(static_cast<std::size_t>(backbone), 0);
  for (const auto& ln : f.lines) has_child[static_cast<std::size_t>(ln.from)] = 1;

  int next = backbone;
  int remaining = spec.nodes - backbone;
  while (remaining > 0) {
    const double draw = unit(rng) * mix_sum;
    int kind = 3;
    if (draw >= spec.mix.three_phase) kind = draw < spec.mix.three_phase + spec.mix.two_phase ? 2 : 1;
    if (kind != 3 && remaining < 3) kind = 3;
    const int parent = 1 + static_cast<int>(unit(rng) * (backbone - 1));
    has_child[static_cast<std::size_t>(parent)] = 1;
    const double length = uniform(0.1, 0.6);
    LoadPoint lp;
    if (kind == 3) {
      f.nodes.push_back({next, PhaseSet::abc()});
      f.lines.push_back({parent, next, PhaseSet::abc(), circulant(z_self, z_mutual, PhaseSet::abc(), length)});
      lp.nodes.push_back(next);
      lp.phases.push_back(PhaseSet::abc());
      ++next;
      --remaining;
    } else {
      for (int r = 0; r < 3; ++r) {
        const PhaseSet ph = kind == 1 ? PhaseSet::single(r)
                                      : PhaseSet(static_cast<std::uint8_t>((1u << r) | (1u << ((r + 1) % 3))));
        f.nodes.push_back({next, ph});
        f.lines.push_back({parent, next, ph, circulant(z_self, z_mutual, ph, length)});
        lp.nodes.push_back(next);
        lp.phases.push_back(ph);
        ++next;
      }
      remaining -= 3;
    }
    points.push_back(std::move(lp));
  }
  for (int i = 1; i < backbone; ++i) {
    if (!has_child[static_cast<std::size_t>(i)]) points.push_back({{i}, {PhaseSet::abc()}});
  }
  if (points.empty()) throw InputError("synthetic feeder has no load points");

  std::vector<double> weight(points.size());
  for (auto& w : weight) w = uniform(0.5, 1.5);
  const double wsum = std::accumulate(weight.begin(), weight.end(), 0.0);
  for (std::size_t k = 0; k < points.size(); ++k) {
    const Complex s_point = spec.total_load * (weight[k] / wsum);
    const auto& lp = points[k];
    const Complex per_node = s_point / static_cast<double>(lp.nodes.size());
    for (std::size_t m = 0; m < lp.nodes.size(); ++m) {
      PhaseLoad ld;
      ld.node = lp.nodes[m];
      const Complex per_phase = per_node / static_cast<double>(lp.phases[m].count());
      for (int p = 0; p < 3; ++p) {
        if (lp.phases[m].has(p)) ld.s[static_cast<std::size_t>(p)] = per_phase;
      }
      f.loads.push_back(ld);
    }
  }

  // Scale impedances toward the target drop; the drop is close to linear in z.
  for (int attempt = 0; attempt < 60; ++attempt) {
    double drop = 0.0;
    try {
      drop = max_drop(f);
    } catch (const NumericalError&) {
      scale_impedance(f, 0.25);
      continue;
    }
    if (std::abs(drop - spec.target_drop) < 1e-3 * spec.target_drop) break;
    const double k = std::clamp(spec.target_drop / drop, 0.1, 10.0);
    scale_impedance(f, k);
  }
  return f;
}

}  // namespace tdcosim
