#include "tdcosim/tsolve.hpp"

#include <Eigen/SparseLU>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "tdcosim/error.hpp"

namespace tdcosim {

namespace {

constexpr Complex kJ{0.0, 1.0};

int find_index(const std::vector<BusId>& ids, BusId id) {
  const auto it = std::find(ids.begin(), ids.end(), id);
  return it == ids.end() ? -1 : static_cast<int>(it - ids.begin());
}

using Triplets = std::vector<Eigen::Triplet<Complex>>;

void stamp_series(Triplets& t, int f, int k, Complex y, double b_total, double tap) {
  const Complex ysh = kJ * (b_total / 2.0);
  t.emplace_back(f, f, (y + ysh) / (tap * tap));
  t.emplace_back(k, k, y + ysh);
  t.emplace_back(f, k, -y / tap);
  t.emplace_back(k, f, -y / tap);
}

SparseY assemble(int n, const Triplets& t) {
  SparseY y(n, n);
  y.setFromTriplets(t.begin(), t.end());
  y.makeCompressed();
  return y;
}

// Connected components over nonzero off-diagonal entries.
std::vector<std::vector<int>> components(const SparseY& y) {
  const int n = static_cast<int>(y.rows());
  std::vector<std::vector<int>> adj(static_cast<std::size_t>(n));
  for (int col = 0; col < y.outerSize(); ++col) {
    for (SparseY::InnerIterator it(y, col); it; ++it) {
      if (it.row() != it.col() && std::abs(it.value()) > 0.0) {
        adj[static_cast<std::size_t>(it.row())].push_back(static_cast<int>(it.col()));
      }
    }
  }
  std::vector<int> label(static_cast<std::size_t>(n), -1);
  std::vector<std::vector<int>> out;
  for (int s = 0; s < n; ++s) {
    if (label[static_cast<std::size_t>(s)] >= 0) continue;
    out.emplace_back();
    std::vector<int> stack{s};
    label[static_cast<std::size_t>(s)] = static_cast<int>(out.size() - 1);
    while (!stack.empty()) {
      const int u = stack.back();
      stack.pop_back();
      out.back().push_back(u);
      for (int w : adj[static_cast<std::size_t>(u)]) {
        if (label[static_cast<std::size_t>(w)] < 0) {
          label[static_cast<std::size_t>(w)] = label[static_cast<std::size_t>(s)];
          stack.push_back(w);
        }
      }
    }
    std::sort(out.back().begin(), out.back().end());
  }
  return out;
}

std::string describe(const std::vector<int>& comp, const std::vector<BusId>& ids) {
  std::ostringstream os;
  os << "{";
  for (std::size_t i = 0; i < comp.size(); ++i) {
    os << (i ? ", " : "") << ids[static_cast<std::size_t>(comp[i])];
  }
  os << "}";
  return os.str();
}

}  // namespace

int SequenceYBus::index_of(BusId id) const { return find_index(bus_ids, id); }
int SequenceSolution::index_of(BusId id) const { return find_index(bus_ids, id); }

SequenceVoltages SequenceSolution::sequence_voltages(BusId id) const {
  const int i = index_of(id);
  if (i < 0) throw InputError("unknown bus " + std::to_string(id));
  return {v0(i), v1(i), v2(i)};
}

PhaseVoltages SequenceSolution::phase_voltages(BusId id) const {
  return sequence_to_phase(sequence_voltages(id));
}

SequenceYBus build_sequence_ybus(const TransmissionCase& c) {
  if (!c.is_per_unit()) throw InputError("build_sequence_ybus expects a per-unit case");
  SequenceYBus out;
  for (const auto& b : c.buses) out.bus_ids.push_back(b.id);
  const int n = out.size();
  Triplets t0, t1, t2;
  for (const auto& br : c.branches) {
    const int f = out.index_of(br.from);
    const int k = out.index_of(br.to);
    if (f < 0 || k < 0) throw InputError("branch references an unknown bus");
    stamp_series(t1, f, k, 1.0 / br.z1, br.b1_shunt, br.tap);
    stamp_series(t2, f, k, 1.0 / br.z2, br.b1_shunt, br.tap);
    switch (br.zero_seq_path) {
      case ZeroSeqPath::Through:
        stamp_series(t0, f, k, 1.0 / br.z0, br.b0_shunt, br.tap);
        break;
      case ZeroSeqPath::Grounded:
        t0.emplace_back(k, k, 1.0 / br.z0);
        break;
      case ZeroSeqPath::Open:
        break;
    }
    if (br.untransposed && br.coupling) out.couplings.push_back({f, k, *br.coupling});
  }
  for (const auto& g : c.generators) {
    const int i = out.index_of(g.bus);
    if (g.z2) t2.emplace_back(i, i, 1.0 / *g.z2);
    if (g.z0) t0.emplace_back(i, i, 1.0 / *g.z0);
  }
  out.y0 = assemble(n, t0);
  out.y1 = assemble(n, t1);
  out.y2 = assemble(n, t2);

  const auto comps = components(out.y1);
  if (comps.size() > 1) {
    std::ostringstream os;
    os << "positive-sequence network has " << comps.size() << " islands:";
    for (const auto& comp : comps) os << ' ' << describe(comp, out.bus_ids);
    throw SingularNetworkError(os.str());
  }
  return out;
}

ComplexVector bus_injections(const SparseY& y, const ComplexVector& v) {
  const ComplexVector i = y * v;
  return v.cwiseProduct(i.conjugate());
}

PositiveSequenceResult nr_positive_sequence(const SequenceYBus& y, const TransmissionCase& c,
                                            const ComplexVector& extra_load, const NrOptions& opt,
                                            const ComplexVector* warm_start) {
  if (!(opt.tol > 0.0)) throw InputError("NR tolerance must be positive");
  const int n = y.size();
  if (extra_load.size() != n) throw InputError("extra_load has the wrong length");

  std::vector<BusKind> kind(static_cast<std::size_t>(n));
  ComplexVector s_spec = -extra_load;
  Eigen::VectorXd q_min = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd q_max = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd q_load = Eigen::VectorXd::Zero(n);
  for (int i = 0; i < n; ++i) kind[static_cast<std::size_t>(i)] = c.buses[static_cast<std::size_t>(i)].kind;
  for (const auto& g : c.generators) {
    const int i = y.index_of(g.bus);
    if (kind[static_cast<std::size_t>(i)] == BusKind::PQ) {
      s_spec(i) += Complex(g.p_set, g.q_set);
    } else {
      s_spec(i) += g.p_set;
    }
    q_min(i) += g.q_min;
    q_max(i) += g.q_max;
  }
  for (const auto& l : c.loads) {
    if (const auto* lumped = std::get_if<LumpedLoad>(&l.kind)) {
      const int i = y.index_of(l.bus);
      s_spec(i) -= Complex(lumped->p, lumped->q);
    }
  }
  q_load = (-extra_load).imag();
  for (const auto& l : c.loads) {
    if (const auto* lumped = std::get_if<LumpedLoad>(&l.kind)) {
      q_load(y.index_of(l.bus)) += lumped->q;
    }
  }

  Eigen::VectorXd vm(n);
  Eigen::VectorXd va(n);
  for (int i = 0; i < n; ++i) {
    const auto& b = c.buses[static_cast<std::size_t>(i)];
    if (warm_start) {
      vm(i) = std::abs((*warm_start)(i));
      va(i) = std::arg((*warm_start)(i));
    } else {
      vm(i) = 1.0;
      va(i) = 0.0;
    }
    if (b.kind != BusKind::PQ) vm(i) = b.v_setpoint;
    if (b.kind == BusKind::Slack) va(i) = b.angle_setpoint;
  }

  PositiveSequenceResult res;
  for (int round = 0;; ++round) {
    std::vector<int> pv, pq, pvpq;
    for (int i = 0; i < n; ++i) {
      switch (kind[static_cast<std::size_t>(i)]) {
        case BusKind::PV: pv.push_back(i); break;
        case BusKind::PQ: pq.push_back(i); break;
        case BusKind::Slack: break;
      }
    }
    pvpq = pv;
    pvpq.insert(pvpq.end(), pq.begin(), pq.end());
    const int npvpq = static_cast<int>(pvpq.size());
    const int npq = static_cast<int>(pq.size());
    const Eigen::MatrixXcd ydense(y.y1);

    res.history.clear();
    bool converged = false;
    for (int it = 1; it <= opt.max_iter; ++it) {
      ComplexVector v(n);
      for (int i = 0; i < n; ++i) v(i) = std::polar(vm(i), va(i));
      const ComplexVector ibus = ydense * v;
      const ComplexVector mis = v.cwiseProduct(ibus.conjugate()) - s_spec;
      Eigen::VectorXd f(npvpq + npq);
      for (int r = 0; r < npvpq; ++r) f(r) = mis(pvpq[static_cast<std::size_t>(r)]).real();
      for (int r = 0; r < npq; ++r) f(npvpq + r) = mis(pq[static_cast<std::size_t>(r)]).imag();
      const double norm = f.size() ? f.cwiseAbs().maxCoeff() : 0.0;
      res.history.push_back(norm);
      res.iterations = it;
      res.mismatch = norm;
      res.v = v;
      if (norm < opt.tol) {
        converged = true;
        break;
      }
      if (it == opt.max_iter) break;

      // dS/dθ and dS/d|V| in polar form.
      const ComplexVector vnorm = v.cwiseQuotient(vm.cast<Complex>());
      const Eigen::MatrixXcd dva =
          kJ * v.asDiagonal() * (Eigen::MatrixXcd(ibus.asDiagonal()) - ydense * v.asDiagonal()).conjugate();
      const Eigen::MatrixXcd dvm = v.asDiagonal() * (ydense * vnorm.asDiagonal()).conjugate() +
                                   Eigen::MatrixXcd(ibus.conjugate().asDiagonal()) * vnorm.asDiagonal();
      Eigen::MatrixXd jac(npvpq + npq, npvpq + npq);
      for (int r = 0; r < npvpq; ++r) {
        const int br = pvpq[static_cast<std::size_t>(r)];
        for (int k = 0; k < npvpq; ++k) jac(r, k) = dva(br, pvpq[static_cast<std::size_t>(k)]).real();
        for (int k = 0; k < npq; ++k) jac(r, npvpq + k) = dvm(br, pq[static_cast<std::size_t>(k)]).real();
      }
      for (int r = 0; r < npq; ++r) {
        const int br = pq[static_cast<std::size_t>(r)];
        for (int k = 0; k < npvpq; ++k) jac(npvpq + r, k) = dva(br, pvpq[static_cast<std::size_t>(k)]).imag();
        for (int k = 0; k < npq; ++k) jac(npvpq + r, npvpq + k) = dvm(br, pq[static_cast<std::size_t>(k)]).imag();
      }
      Eigen::FullPivLU<Eigen::MatrixXd> lu(jac);
      if (!lu.isInvertible()) {
        throw NumericalError("singular Jacobian at NR iteration " + std::to_string(it));
      }
      const Eigen::VectorXd dx = -lu.solve(f);
      for (int r = 0; r < npvpq; ++r) va(pvpq[static_cast<std::size_t>(r)]) += dx(r);
      for (int r = 0; r < npq; ++r) vm(pq[static_cast<std::size_t>(r)]) += dx(npvpq + r);
    }
    if (!converged) {
      std::ostringstream os;
      os << "positive-sequence NR did not converge in " << opt.max_iter << " iterations (mismatch "
         << res.mismatch << " pu)";
      throw ConvergenceError(os.str(), res.history);
    }

    if (!opt.enforce_q_limits || round >= opt.max_q_switches || pv.empty()) break;
    // Reactive output needed at each PV bus = injected Q + local reactive demand.
    const ComplexVector s_calc = bus_injections(y.y1, res.v);
    bool switched = false;
    for (int i : pv) {
      const double qg = s_calc(i).imag() + q_load(i);
      double limit = 0.0;
      if (qg > q_max(i) + 1e-9) {
        limit = q_max(i);
      } else if (qg < q_min(i) - 1e-9) {
        limit = q_min(i);
      } else {
        continue;
      }
      kind[static_cast<std::size_t>(i)] = BusKind::PQ;
      s_spec(i) = Complex(s_spec(i).real(), limit - q_load(i));
      res.switched_to_pq.push_back(y.bus_ids[static_cast<std::size_t>(i)]);
      switched = true;
    }
    if (!switched) break;
    for (int i = 0; i < n; ++i) {
      vm(i) = std::abs(res.v(i));
      va(i) = std::arg(res.v(i));
    }
  }
  return res;
}

ComplexVector solve_sequence_network(const SparseY& y, const ComplexVector& injection,
                                     const std::vector<BusId>& bus_ids) {
  const int n = static_cast<int>(y.rows());
  if (injection.size() != n) throw InputError("injection vector has the wrong length");
  ComplexVector v = ComplexVector::Zero(n);
  const Eigen::MatrixXcd ydense(y);
  const double scale = std::max(1.0, ydense.cwiseAbs().maxCoeff());

  for (const auto& comp : components(y)) {
    const int m = static_cast<int>(comp.size());
    Eigen::MatrixXcd sub(m, m);
    ComplexVector rhs(m);
    for (int r = 0; r < m; ++r) {
      for (int k = 0; k < m; ++k) sub(r, k) = ydense(comp[static_cast<std::size_t>(r)], comp[static_cast<std::size_t>(k)]);
      rhs(r) = injection(comp[static_cast<std::size_t>(r)]);
    }
    Eigen::FullPivLU<Eigen::MatrixXcd> lu(sub);
    lu.setThreshold(1e-12);
    const bool floating = lu.rank() < m || sub.cwiseAbs().maxCoeff() < 1e-12 * scale;
    if (floating) {
      if (rhs.cwiseAbs().maxCoeff() > 0.0) {
        throw SingularNetworkError("sequence network component " + describe(comp, bus_ids) +
                                   " has no ground path but carries an injection");
      }
      continue;
    }
    const ComplexVector x = lu.solve(rhs);
    for (int r = 0; r < m; ++r) v(comp[static_cast<std::size_t>(r)]) = x(r);
  }
  return v;
}

ComplexVector solve_negative(const SequenceYBus& y, const ComplexVector& i2) {
  return solve_sequence_network(y.y2, i2, y.bus_ids);
}

ComplexVector solve_zero(const SequenceYBus& y, const ComplexVector& i0) {
  return solve_sequence_network(y.y0, i0, y.bus_ids);
}

SequenceInjections compensation_currents(const std::vector<SequenceYBus::CoupledBranch>& couplings,
                                         const ComplexVector& v0, const ComplexVector& v1,
                                         const ComplexVector& v2) {
  const auto n = v1.size();
  SequenceInjections out{ComplexVector::Zero(n), ComplexVector::Zero(n), ComplexVector::Zero(n)};
  const ComplexVector* v[3] = {&v0, &v1, &v2};
  for (const auto& cb : couplings) {
    Complex dv[3];
    for (int t = 0; t < 3; ++t) dv[t] = (*v[t])(cb.from) - (*v[t])(cb.to);
    for (std::size_t s = 0; s < 3; ++s) {
      Complex ic{};
      for (std::size_t t = 0; t < 3; ++t) {
        if (t != s) ic += cb.block[s][t] * dv[t];
      }
      // Coupling current leaves `from` and enters `to`.
      out[s](cb.from) -= ic;
      out[s](cb.to) += ic;
    }
  }
  return out;
}

PccInjection pcc_load_to_injections(BusId bus, const PhasePowers& s_pu, const PhaseVoltages& v_pcc) {
  const PhaseCurrents i_abc = phase_currents_from_power(s_pu, v_pcc);
  const SequenceCurrents i012 = phase_to_sequence(i_abc);
  const SequenceVoltages v012 = phase_to_sequence(v_pcc);
  PccInjection out;
  out.bus = bus;
  out.s1 = v012[seq::kPositive] * std::conj(i012[seq::kPositive]);
  out.i2 = i012[seq::kNegative];
  out.i0 = i012[seq::kZero];
  return out;
}

SequenceSolution solve_three_sequence(const TransmissionCase& c, const SequenceYBus& y,
                                      const std::vector<PccLoad>& pcc_loads, const SequenceOptions& opt,
                                      const SequenceSolution* warm_start) {
  const int n = y.size();
  SequenceSolution sol;
  sol.bus_ids = y.bus_ids;
  if (warm_start) {
    sol.v0 = warm_start->v0;
    sol.v1 = warm_start->v1;
    sol.v2 = warm_start->v2;
  } else {
    sol.v0 = ComplexVector::Zero(n);
    sol.v2 = ComplexVector::Zero(n);
    sol.v1 = ComplexVector::Ones(n);
    for (int i = 0; i < n; ++i) {
      const auto& b = c.buses[static_cast<std::size_t>(i)];
      if (b.kind != BusKind::PQ) sol.v1(i) = b.v_setpoint;
      if (b.kind == BusKind::Slack) sol.v1(i) = std::polar(b.v_setpoint, b.angle_setpoint);
    }
  }

  std::vector<double> history;
  for (int pass = 1; pass <= opt.max_passes; ++pass) {
    SequenceInjections comp = compensation_currents(y.couplings, sol.v0, sol.v1, sol.v2);
    ComplexVector extra = ComplexVector::Zero(n);
    ComplexVector i2 = comp.i2;
    ComplexVector i0 = comp.i0;
    for (int i = 0; i < n; ++i) extra(i) -= sol.v1(i) * std::conj(comp.i1(i));
    for (const auto& load : pcc_loads) {
      const int b = y.index_of(load.bus);
      if (b < 0) throw InputError("PCC load at unknown bus " + std::to_string(load.bus));
      const PhaseVoltages v_abc = sequence_to_phase(SequenceVoltages{sol.v0(b), sol.v1(b), sol.v2(b)});
      const PccInjection inj = pcc_load_to_injections(load.bus, load.s_pu, v_abc);
      extra(b) += 3.0 * inj.s1;
      i2(b) -= 3.0 * inj.i2;
      i0(b) -= 3.0 * inj.i0;
    }

    const PositiveSequenceResult pos = nr_positive_sequence(y, c, extra, opt.nr, &sol.v1);
    ComplexVector v2;
    ComplexVector v0;
    // Negative and zero sequence share nothing and may run side by side.
#pragma omp parallel sections if (n > 256)
    {
#pragma omp section
      v2 = solve_negative(y, i2);
#pragma omp section
      v0 = solve_zero(y, i0);
    }

    const double delta = std::max({(pos.v - sol.v1).cwiseAbs().maxCoeff(), (v2 - sol.v2).cwiseAbs().maxCoeff(),
                                   (v0 - sol.v0).cwiseAbs().maxCoeff()});
    history.push_back(delta);
    sol.v1 = pos.v;
    sol.v2 = v2;
    sol.v0 = v0;
    sol.mismatch = pos.mismatch;
    sol.iterations = pos.iterations;
    sol.passes = pass;
    if (delta < opt.tol) return sol;
  }
  throw ConvergenceError("three-sequence passes did not converge in " + std::to_string(opt.max_passes) + " passes",
                         history);
}

SequenceSolution solve_three_sequence(const TransmissionCase& c, const std::vector<PccLoad>& pcc_loads,
                                      const SequenceOptions& opt) {
  return solve_three_sequence(c, build_sequence_ybus(c), pcc_loads, opt);
}

}  // namespace tdcosim
