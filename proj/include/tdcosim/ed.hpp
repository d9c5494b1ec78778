#pragma once

#include <span>
#include <vector>

#include "tdcosim/netmodel.hpp"

namespace tdcosim {

struct DispatchResult {
  std::vector<double> p_set;  ///< per generator, same order as the input
  double lambda = 0.0;        ///< system marginal cost
  std::vector<int> binding;   ///< indices of generators sitting at a limit
};

/// Lossless equal-incremental-cost dispatch of quadratic cost curves
/// C(P) = aP² + bP + c subject to p_min ≤ P ≤ p_max, by bisection on λ.
/// Units are whatever the generators carry (MW and $/MWh in practice).
/// Throws InputError when demand lies outside [Σp_min, Σp_max].
DispatchResult dispatch(std::span<const Generator> generators, double demand);

/// dC/dP at the given output.
inline double marginal_cost(const Generator& g, double p) { return g.cost.b + 2.0 * g.cost.a * p; }

}  // namespace tdcosim
