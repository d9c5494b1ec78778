#include <doctest.h>

#include <numeric>
#include <random>

#include "tdcosim/ed.hpp"
#include "tdcosim/error.hpp"

using namespace tdcosim;

namespace {

Generator gen(double a, double b, double pmin, double pmax) {
  Generator g;
  g.cost = {a, b, 0.0};
  g.p_min = pmin;
  g.p_max = pmax;
  return g;
}

double total(const DispatchResult& r) { return std::accumulate(r.p_set.begin(), r.p_set.end(), 0.0); }

// KKT conditions of min Σ C_i(P_i) s.t. Σ P_i = D, P_min ≤ P_i ≤ P_max.
void check_kkt(const std::vector<Generator>& g, const DispatchResult& r, double demand) {
  CHECK(std::abs(total(r) - demand) < 1e-6);
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double p = r.p_set[i];
    CHECK(p >= g[i].p_min);
    CHECK(p <= g[i].p_max);
    const double mc = marginal_cost(g[i], p);
    if (p > g[i].p_min + 1e-9 && p < g[i].p_max - 1e-9) {
      CHECK(std::abs(mc - r.lambda) < 1e-6);
    } else if (p >= g[i].p_max - 1e-9) {
      CHECK(mc <= r.lambda + 1e-6);
    } else {
      CHECK(mc >= r.lambda - 1e-6);
    }
  }
}

}  // namespace

TEST_CASE("two-unit hand solution") {
  // 10 + 0.02 P1 = 10 + 0.04 P2, P1 + P2 = 300 → (200, 100), λ = 14.
  const std::vector<Generator> g{gen(0.01, 10, 0, 500), gen(0.02, 10, 0, 500)};
  const auto r = dispatch(g, 300.0);
  CHECK(r.p_set[0] == doctest::Approx(200.0).epsilon(1e-9));
  CHECK(r.p_set[1] == doctest::Approx(100.0).epsilon(1e-9));
  CHECK(r.lambda == doctest::Approx(14.0).epsilon(1e-9));
  CHECK(r.binding.empty());
  check_kkt(g, r, 300.0);
}

TEST_CASE("binding limit") {
  // Unconstrained optimum would give unit 0 200 MW; capped at 150, unit 1 takes 150 → λ = 10 + 0.04·150 = 16.
  const std::vector<Generator> g{gen(0.01, 10, 0, 150), gen(0.02, 10, 0, 500)};
  const auto r = dispatch(g, 300.0);
  CHECK(r.p_set[0] == doctest::Approx(150.0).epsilon(1e-12));
  CHECK(r.p_set[1] == doctest::Approx(150.0).epsilon(1e-9));
  CHECK(r.lambda == doctest::Approx(16.0).epsilon(1e-9));
  REQUIRE(r.binding.size() == 1);
  CHECK(r.binding[0] == 0);
  check_kkt(g, r, 300.0);
}

TEST_CASE("boundaries and single unit") {
  const std::vector<Generator> g{gen(0.01, 10, 20, 150), gen(0.02, 12, 30, 200)};
  const auto hi = dispatch(g, 350.0);
  CHECK(hi.p_set[0] == 150.0);
  CHECK(hi.p_set[1] == 200.0);
  const auto lo = dispatch(g, 50.0);
  CHECK(lo.p_set[0] == 20.0);
  CHECK(lo.p_set[1] == 30.0);
  const std::vector<Generator> one{gen(0.05, 3, 0, 100)};
  CHECK(dispatch(one, 42.0).p_set[0] == doctest::Approx(42.0).epsilon(1e-12));
}

TEST_CASE("infeasible demand names the feasible range") {
  const std::vector<Generator> g{gen(0.01, 10, 20, 150), gen(0.02, 12, 30, 200)};
  try {
    dispatch(g, 400.0);
    FAIL("expected InputError");
  } catch (const InputError& e) {
    const std::string w = e.what();
    CHECK(w.find("50") != std::string::npos);
    CHECK(w.find("350") != std::string::npos);
  }
  CHECK_THROWS_AS(dispatch(g, 10.0), InputError);
}

TEST_CASE("linear units take the residual") {
  const std::vector<Generator> g{gen(0.0, 20, 0, 100), gen(0.01, 10, 0, 400)};
  const auto r = dispatch(g, 500.0);
  CHECK(r.p_set[1] == doctest::Approx(400.0));
  CHECK(r.p_set[0] == doctest::Approx(100.0).epsilon(1e-6));
  const auto r2 = dispatch(g, 450.0);
  CHECK(r2.p_set[1] == doctest::Approx(400.0).epsilon(1e-6));
  CHECK(r2.p_set[0] == doctest::Approx(50.0).epsilon(1e-6));
  CHECK(r2.lambda == doctest::Approx(20.0).epsilon(1e-6));
  check_kkt(g, r2, 450.0);
}

TEST_CASE("property: KKT and monotone lambda on random fleets") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> ua(0.001, 0.1), ub(1.0, 30.0), umin(0.0, 50.0), uspan(20.0, 300.0), uf(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<Generator> g;
    const int n = 1 + static_cast<int>(uf(rng) * 6);
    double lo = 0, hi = 0;
    for (int i = 0; i < n; ++i) {
      const double pmin = umin(rng);
      g.push_back(gen(ua(rng), ub(rng), pmin, pmin + uspan(rng)));
      lo += g.back().p_min;
      hi += g.back().p_max;
    }
    double last_lambda = -1e300;
    for (int k = 0; k <= 10; ++k) {
      const double d = lo + (hi - lo) * k / 10.0;
      const auto r = dispatch(g, d);
      check_kkt(g, r, d);
      CHECK(r.lambda >= last_lambda - 1e-9);
      last_lambda = r.lambda;
    }
  }
}
