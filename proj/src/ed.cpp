#include "tdcosim/ed.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "tdcosim/error.hpp"

namespace tdcosim {

namespace {

constexpr int kMaxBisection = 200;

double output_at(const Generator& g, double lambda) {
  if (g.cost.a > 0.0) return std::clamp((lambda - g.cost.b) / (2.0 * g.cost.a), g.p_min, g.p_max);
  return lambda > g.cost.b ? g.p_max : g.p_min;
}

double total_at(std::span<const Generator> gens, double lambda) {
  double s = 0.0;
  for (const auto& g : gens) s += output_at(g, lambda);
  return s;
}

}  // namespace

DispatchResult dispatch(std::span<const Generator> generators, double demand) {
  if (generators.empty()) throw InputError("dispatch needs at least one generator");
  double p_min = 0.0;
  double p_max = 0.0;
  for (const auto& g : generators) {
    if (g.cost.a < 0.0) throw InputError("cost coefficient a must be non-negative");
    p_min += g.p_min;
    p_max += g.p_max;
  }
  // Sums of limits carry rounding; a demand within it of a bound is that bound.
  const double slack = 1e-12 * std::max(1.0, std::abs(p_max));
  if (!std::isfinite(demand) || demand < p_min - slack || demand > p_max + slack) {
    std::ostringstream os;
    os << "demand " << demand << " outside the feasible range [" << p_min << ", " << p_max << "]";
    throw InputError(os.str());
  }
  demand = std::clamp(demand, p_min, p_max);

  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (const auto& g : generators) {
    lo = std::min(lo, g.cost.b);
    hi = std::max(hi, g.cost.b + 2.0 * g.cost.a * g.p_max);
  }
  // With p_min > 0 the lower end may already overshoot only if demand = Σp_min.
  for (int it = 0; it < kMaxBisection && hi - lo > 0.0; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (total_at(generators, mid) < demand) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  const double lambda = demand >= p_max ? hi : (demand <= p_min ? lo : 0.5 * (lo + hi));

  DispatchResult res;
  res.lambda = lambda;
  res.p_set.resize(generators.size());
  const double tie = 1e-9 * std::max(1.0, std::abs(lambda));
  double assigned = 0.0;
  std::vector<std::size_t> flat;  // linear-cost units priced at λ
  for (std::size_t i = 0; i < generators.size(); ++i) {
    const auto& g = generators[i];
    if (g.cost.a == 0.0 && std::abs(g.cost.b - lambda) <= tie) {
      res.p_set[i] = g.p_min;
      flat.push_back(i);
    } else {
      res.p_set[i] = output_at(g, lambda);
    }
    assigned += res.p_set[i];
  }
  // Linear units at the margin take up what is left, in input order.
  double residual = demand - assigned;
  for (std::size_t i : flat) {
    const auto& g = generators[i];
    const double take = std::clamp(residual, 0.0, g.p_max - g.p_min);
    res.p_set[i] += take;
    residual -= take;
  }

  for (std::size_t i = 0; i < generators.size(); ++i) {
    const auto& g = generators[i];
    const double eps = 1e-9 * std::max(1.0, std::abs(g.p_max));
    if (res.p_set[i] <= g.p_min + eps || res.p_set[i] >= g.p_max - eps) res.binding.push_back(static_cast<int>(i));
  }
  return res;
}

}  // namespace tdcosim
