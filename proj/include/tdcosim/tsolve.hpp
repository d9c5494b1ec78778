#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <optional>
#include <vector>

#include "tdcosim/netmodel.hpp"
#include "tdcosim/seqxform.hpp"

namespace tdcosim {

using ComplexVector = Eigen::VectorXcd;
using SparseY = Eigen::SparseMatrix<Complex>;

/// Per-sequence bus admittance matrices. Bus order follows case.buses.
struct SequenceYBus {
  struct CoupledBranch {
    int from = 0;  ///< bus index
    int to = 0;
    SequenceCoupling block{};
  };

  SparseY y0, y1, y2;
  std::vector<CoupledBranch> couplings;
  std::vector<BusId> bus_ids;

  int size() const { return static_cast<int>(bus_ids.size()); }
  int index_of(BusId id) const;
};

/// Assembles the three sequence networks. Expects a per-unit case. Throws
/// SingularNetworkError when the positive-sequence network splits into
/// islands.
SequenceYBus build_sequence_ybus(const TransmissionCase& c);

struct NrOptions {
  double tol = 1e-8;  ///< max |ΔP|, |ΔQ| in pu
  int max_iter = 30;
  bool enforce_q_limits = true;
  int max_q_switches = 5;
};

struct PositiveSequenceResult {
  ComplexVector v;
  double mismatch = 0.0;
  int iterations = 0;  ///< mismatch evaluations in the final solve
  std::vector<double> history;
  std::vector<BusId> switched_to_pq;
};

/// Newton–Raphson in polar form on the positive-sequence network.
/// `extra_load` is additional constant-PQ demand per bus index (pu, system
/// base), e.g. the positive-sequence part of PCC loads. `warm_start` replaces
/// the flat start.
PositiveSequenceResult nr_positive_sequence(const SequenceYBus& y, const TransmissionCase& c,
                                            const ComplexVector& extra_load, const NrOptions& opt = {},
                                            const ComplexVector* warm_start = nullptr);

/// Solves y·v = i for one sequence network. Buses in components without any
/// path to ground get v = 0 when the component carries no injection;
/// otherwise SingularNetworkError is thrown.
ComplexVector solve_sequence_network(const SparseY& y, const ComplexVector& injection,
                                     const std::vector<BusId>& bus_ids);

ComplexVector solve_negative(const SequenceYBus& y, const ComplexVector& i2);
ComplexVector solve_zero(const SequenceYBus& y, const ComplexVector& i0);

/// Per-sequence current injections (index 0/1/2) per bus.
struct SequenceInjections {
  ComplexVector i0, i1, i2;

  ComplexVector& operator[](std::size_t s) { return s == 0 ? i0 : (s == 1 ? i1 : i2); }
  const ComplexVector& operator[](std::size_t s) const { return s == 0 ? i0 : (s == 1 ? i1 : i2); }
};

/// Injections replacing the off-diagonal sequence coupling of untransposed
/// branches, evaluated at the given sequence voltages.
SequenceInjections compensation_currents(const std::vector<SequenceYBus::CoupledBranch>& couplings,
                                         const ComplexVector& v0, const ComplexVector& v1,
                                         const ComplexVector& v2);

/// Sequence-network view of one unbalanced PCC load. All values are in the
/// phase frame on the system base: s_p = S_p / base_mva, i_p = conj(s_p/v_p),
/// s1 = v1·conj(i1). A balanced load gives s1 = total/3 and i2 = i0 = 0. The
/// sequence networks see three times these (3·s1 as PQ demand, −3·i2 and
/// −3·i0 as injections).
struct PccInjection {
  BusId bus = 0;
  Complex s1;
  Complex i2;
  Complex i0;
};

PccInjection pcc_load_to_injections(BusId bus, const PhasePowers& s_pu, const PhaseVoltages& v_pcc);

struct PccLoad {
  BusId bus = 0;
  PhasePowers s_pu;  ///< per-phase power on the system base
};

struct SequenceOptions {
  NrOptions nr;
  double tol = 1e-9;  ///< max change of any sequence voltage between passes
  int max_passes = 20;
};

struct SequenceSolution {
  std::vector<BusId> bus_ids;
  ComplexVector v0, v1, v2;
  double mismatch = 0.0;  ///< final NR mismatch
  int iterations = 0;     ///< NR iterations of the final pass
  int passes = 0;         ///< sequence passes

  int index_of(BusId id) const;
  SequenceVoltages sequence_voltages(BusId id) const;
  PhaseVoltages phase_voltages(BusId id) const;
};

/// Decoupled three-sequence power flow: NR on the positive sequence, direct
/// solves on negative and zero, with PCC injections and compensation currents
/// refreshed each pass.
SequenceSolution solve_three_sequence(const TransmissionCase& c, const SequenceYBus& y,
                                      const std::vector<PccLoad>& pcc_loads, const SequenceOptions& opt = {},
                                      const SequenceSolution* warm_start = nullptr);

SequenceSolution solve_three_sequence(const TransmissionCase& c, const std::vector<PccLoad>& pcc_loads,
                                      const SequenceOptions& opt = {});

/// Net complex power injected at each bus, S = V·conj(Y·V).
ComplexVector bus_injections(const SparseY& y, const ComplexVector& v);

}  // namespace tdcosim
