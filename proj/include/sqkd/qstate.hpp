#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "sqkd/errors.hpp"
#include "sqkd/rng.hpp"

namespace sqkd {

using cplx = std::complex<double>;

// Numerical contract, shared by every operation in this header.
inline constexpr double kNormTol = 1e-9;        // state norm after any unitary
inline constexpr double kUnitaryTol = 1e-10;    // ||U'U - I||_max at construction
inline constexpr double kHermTol = 1e-10;       // hermiticity of density matrices
inline constexpr double kTraceTol = 1e-9;       // trace of density matrices
inline constexpr double kPsdTol = 1e-9;         // eigenvalue floor (>= -kPsdTol)
inline constexpr double kImpossibleProb = 1e-15;  // outcomes below this never sample
inline constexpr double kDropTol = 1e-9;        // residual mass when discarding a qubit
inline constexpr double kDumpTol = 1e-12;       // amplitude cutoff in debug dumps
inline constexpr std::size_t kDefaultMaxTotalDim = std::size_t{1} << 24;

enum class Basis { Z, X };

// Single-qubit preparation states. X+ = (|0>+|1>)/sqrt2, X- = (|0>-|1>)/sqrt2.
enum class BasisState { Z0, Z1, XPlus, XMinus };

inline Basis basis_of(BasisState s) {
  return (s == BasisState::Z0 || s == BasisState::Z1) ? Basis::Z : Basis::X;
}

inline int bit_of(BasisState s) {
  return (s == BasisState::Z1 || s == BasisState::XMinus) ? 1 : 0;
}

inline BasisState make_basis_state(Basis b, int bit) {
  if (b == Basis::Z) return bit ? BasisState::Z1 : BasisState::Z0;
  return bit ? BasisState::XMinus : BasisState::XPlus;
}

inline std::pair<cplx, cplx> ket(BasisState s) {
  const double r = 1.0 / std::sqrt(2.0);
  switch (s) {
    case BasisState::Z0: return {1.0, 0.0};
    case BasisState::Z1: return {0.0, 1.0};
    case BasisState::XPlus: return {r, r};
    default: return {r, -r};
  }
}

/**
 * Shape of a simulated register: one probe of arbitrary finite dimension,
 * `num_qubits` protocol qubits, and an optional all-qubit measurement register
 * held by the receiving party.
 *
 * Subsystem ids: 0 = probe, 1..N = protocol qubits, N+1..N+r = register bits.
 *
 * Global index convention: the probe digit varies slowest, then qubit 1
 * (qubit N is the fastest qubit), then register bit 1..r fastest of all:
 *   index = (probe * 2^N + qubit_bits) * 2^r + register_bits.
 */
struct SubsystemLayout {
  std::size_t probe_dim = 1;
  std::size_t num_qubits = 0;
  std::size_t bob_register_len = 0;
  std::size_t max_total_dim = kDefaultMaxTotalDim;

  std::size_t n_subsystems() const { return 1 + num_qubits + bob_register_len; }

  std::size_t two_level_count() const { return num_qubits + bob_register_len; }

  std::size_t dim_of(std::size_t sub) const {
    check_sub(sub);
    return sub == 0 ? probe_dim : 2;
  }

  // Bit position of a two-level subsystem inside the global index.
  std::size_t shift_of(std::size_t sub) const {
    check_sub(sub);
    if (sub == 0) throw dimension_error("shift_of: probe is not a two-level subsystem");
    if (sub <= num_qubits) return bob_register_len + (num_qubits - sub);
    return bob_register_len - (sub - num_qubits);
  }

  std::size_t stride_of(std::size_t sub) const {
    check_sub(sub);
    if (sub == 0) return std::size_t{1} << two_level_count();
    return std::size_t{1} << shift_of(sub);
  }

  std::size_t total_dim() const {
    return probe_dim << two_level_count();
  }

  std::size_t probe_of(std::size_t index) const { return index >> two_level_count(); }

  int bit_at(std::size_t index, std::size_t sub) const {
    return static_cast<int>((index >> shift_of(sub)) & 1u);
  }

  void validate() const {
    if (probe_dim == 0) throw dimension_error("layout: probe_dim must be >= 1");
    if (two_level_count() > 40)
      throw dimension_error("layout: more than 40 two-level subsystems");
    // Overflow-safe cap check.
    std::size_t block = std::size_t{1} << two_level_count();
    if (probe_dim > max_total_dim / block)
      throw dimension_error("layout: total dimension " + std::to_string(probe_dim) + "*2^" +
                            std::to_string(two_level_count()) + " exceeds cap " +
                            std::to_string(max_total_dim));
  }

  bool operator==(const SubsystemLayout& o) const {
    return probe_dim == o.probe_dim && num_qubits == o.num_qubits &&
           bob_register_len == o.bob_register_len;
  }

 private:
  void check_sub(std::size_t sub) const {
    if (sub >= n_subsystems())
      throw dimension_error("subsystem id " + std::to_string(sub) + " out of range");
  }
};

/** Dense exact statevector over a SubsystemLayout. */
struct StateVector {
  SubsystemLayout layout;
  std::vector<cplx> amp;

  static StateVector zero(const SubsystemLayout& lay) {
    lay.validate();
    StateVector s;
    s.layout = lay;
    s.amp.assign(lay.total_dim(), cplx{0.0, 0.0});
    return s;
  }

  std::size_t total_dim() const { return amp.size(); }

  double norm_sq() const {
    double n = 0.0;
    for (const cplx& a : amp) n += std::norm(a);
    return n;
  }

  void check_norm(const char* where) const {
    double n = norm_sq();
    if (std::abs(n - 1.0) > kNormTol)
      throw numeric_error(std::string(where) + ": state norm^2 drifted to " + std::to_string(n));
  }

  void renormalize() {
    double n = std::sqrt(norm_sq());
    if (n <= 0.0) throw numeric_error("renormalize: zero state");
    for (cplx& a : amp) a /= n;
  }
};

/**
 * Product-state preparation: probe in |probe_index>, qubit k in qubits[k-1],
 * register (if any) in |0...0>.
 */
inline StateVector prepare(const SubsystemLayout& layout, std::size_t probe_index,
                           const std::vector<BasisState>& qubits) {
  if (qubits.size() != layout.num_qubits)
    throw dimension_error("prepare: expected " + std::to_string(layout.num_qubits) +
                          " qubit states, got " + std::to_string(qubits.size()));
  if (probe_index >= layout.probe_dim)
    throw dimension_error("prepare: probe index out of range");
  StateVector s = StateVector::zero(layout);
  const std::size_t n = layout.num_qubits;
  const std::size_t r = layout.bob_register_len;
  // Walk all qubit bit patterns; register bits stay 0.
  const std::size_t patterns = std::size_t{1} << n;
  for (std::size_t q = 0; q < patterns; ++q) {
    cplx c{1.0, 0.0};
    for (std::size_t k = 0; k < n; ++k) {
      int bit = static_cast<int>((q >> (n - 1 - k)) & 1u);  // qubit k+1
      auto [c0, c1] = ket(qubits[k]);
      c *= bit ? c1 : c0;
      if (c == cplx{0.0, 0.0}) break;
    }
    if (c != cplx{0.0, 0.0}) s.amp[(probe_index << n | q) << r] = c;
  }
  return s;
}

/** Square complex matrix checked unitary (||U'U - I||_max <= 1e-10) at construction. */
class UnitaryMatrix {
 public:
  explicit UnitaryMatrix(Eigen::MatrixXcd m) : m_(std::move(m)) {
    if (m_.rows() != m_.cols()) throw dimension_error("unitary: matrix not square");
    if (m_.rows() == 0) throw dimension_error("unitary: empty matrix");
    Eigen::MatrixXcd gram = m_.adjoint() * m_;
    gram -= Eigen::MatrixXcd::Identity(m_.rows(), m_.cols());
    double worst = gram.cwiseAbs().maxCoeff();
    if (worst > kUnitaryTol)
      throw numeric_error("unitary: ||U'U - I||_max = " + std::to_string(worst));
  }

  std::size_t dim() const { return static_cast<std::size_t>(m_.rows()); }
  const Eigen::MatrixXcd& mat() const { return m_; }

  UnitaryMatrix adjoint() const { return UnitaryMatrix(m_.adjoint()); }

  static UnitaryMatrix identity(std::size_t d) {
    return UnitaryMatrix(Eigen::MatrixXcd::Identity(d, d));
  }

 private:
  Eigen::MatrixXcd m_;
};

namespace detail {

// A digit of the global index: `dim` values at the given stride. Subsystems
// are axes, but so are finer slices (e.g. one factor of a composite probe).
struct Axis {
  std::size_t dim, stride;
};

// Calls fn(base) for every combination of the given axes' digits.
template <typename Fn>
void for_each_combo(const std::vector<Axis>& axes, Fn&& fn) {
  std::vector<std::size_t> ctr(axes.size(), 0);
  std::size_t base = 0;
  for (;;) {
    fn(base);
    std::size_t ax = axes.size();
    for (;;) {
      if (ax == 0) return;
      --ax;
      base += axes[ax].stride;
      if (++ctr[ax] < axes[ax].dim) break;
      base -= axes[ax].dim * axes[ax].stride;
      ctr[ax] = 0;
    }
  }
}

// Axes of all subsystems NOT listed in `targets` (dim-1 subsystems skipped).
inline std::vector<Axis> complement_axes(const SubsystemLayout& lay,
                                         const std::vector<std::size_t>& targets) {
  std::vector<Axis> rest;
  for (std::size_t sub = 0; sub < lay.n_subsystems(); ++sub) {
    bool is_target = false;
    for (std::size_t t : targets)
      if (t == sub) is_target = true;
    if (!is_target && lay.dim_of(sub) > 1) rest.push_back({lay.dim_of(sub), lay.stride_of(sub)});
  }
  return rest;
}

// Calls fn(base_index) for every setting of the subsystems NOT listed in
// `targets`, with all target digits at 0.
template <typename Fn>
void for_each_base(const SubsystemLayout& lay, const std::vector<std::size_t>& targets, Fn&& fn) {
  for_each_combo(complement_axes(lay, targets), std::forward<Fn>(fn));
}

// Dense-matrix application on explicit target axes (first axis is the slowest
// matrix digit). `rest` must be exactly the complementary axes of the space.
inline void apply_unitary_axes(StateVector& state, const UnitaryMatrix& u,
                               const std::vector<Axis>& targets, const std::vector<Axis>& rest) {
  std::size_t dim = 1;
  for (const Axis& a : targets) dim *= a.dim;
  if (dim != u.dim()) throw dimension_error("apply_unitary_axes: matrix/axes dim mismatch");
  std::vector<std::size_t> offsets(dim);
  for (std::size_t t = 0; t < dim; ++t) {
    std::size_t rem = t, off = 0;
    for (std::size_t i = targets.size(); i > 0; --i) {
      off += (rem % targets[i - 1].dim) * targets[i - 1].stride;
      rem /= targets[i - 1].dim;
    }
    offsets[t] = off;
  }
  Eigen::VectorXcd in(dim), out(dim);
  for_each_combo(rest, [&](std::size_t base) {
    for (std::size_t t = 0; t < dim; ++t)
      in[static_cast<Eigen::Index>(t)] = state.amp[base + offsets[t]];
    out.noalias() = u.mat() * in;
    for (std::size_t t = 0; t < dim; ++t)
      state.amp[base + offsets[t]] = out[static_cast<Eigen::Index>(t)];
  });
  state.check_norm("apply_unitary_axes");
}

}  // namespace detail

/**
 * Applies `u` to the ordered subsystem list `targets` (first entry is the
 * slowest digit of the matrix index). Matrix dimension must equal the product
 * of the target dimensions. Norm is re-checked afterwards.
 */
inline void apply_unitary(StateVector& state, const UnitaryMatrix& u,
                          const std::vector<std::size_t>& targets) {
  const SubsystemLayout& lay = state.layout;
  if (targets.empty()) throw dimension_error("apply_unitary: no targets");
  std::size_t dim = 1;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    for (std::size_t j = i + 1; j < targets.size(); ++j)
      if (targets[i] == targets[j]) throw dimension_error("apply_unitary: duplicate target");
    dim *= lay.dim_of(targets[i]);
  }
  if (dim != u.dim())
    throw dimension_error("apply_unitary: matrix dim " + std::to_string(u.dim()) +
                          " != target space dim " + std::to_string(dim));

  std::vector<detail::Axis> target_axes;
  for (std::size_t t : targets) target_axes.push_back({lay.dim_of(t), lay.stride_of(t)});
  detail::apply_unitary_axes(state, u, target_axes, detail::complement_axes(lay, targets));
}

/**
 * Relabels global basis indices: amp'[perm(i)] = amp[i]. `perm` must be a
 * bijection on [0, total_dim); anything else is an error, checked in full.
 */
inline void apply_basis_permutation(StateVector& state,
                                    const std::function<std::size_t(std::size_t)>& perm) {
  const std::size_t dim = state.total_dim();
  std::vector<cplx> out(dim, cplx{0.0, 0.0});
  std::vector<bool> seen(dim, false);
  for (std::size_t i = 0; i < dim; ++i) {
    std::size_t j = perm(i);
    if (j >= dim)
      throw domain_error("basis permutation: image " + std::to_string(j) + " out of range");
    if (seen[j]) throw domain_error("basis permutation: not injective at " + std::to_string(j));
    seen[j] = true;
    out[j] = state.amp[i];
  }
  state.amp = std::move(out);
  state.check_norm("apply_basis_permutation");
}

inline void apply_basis_permutation(StateVector& state, const std::vector<std::size_t>& perm) {
  if (perm.size() != state.total_dim())
    throw dimension_error("basis permutation: size mismatch");
  apply_basis_permutation(state, [&perm](std::size_t i) { return perm[i]; });
}

namespace detail {

// Samples 0 with probability p0 (two-outcome Born rule). Probabilities below
// kImpossibleProb are treated as exactly impossible and never sampled.
inline int sample_two(double p0, Rng& rng) {
  if (p0 < kImpossibleProb) return 1;
  if (1.0 - p0 < kImpossibleProb) return 0;
  return rng.uniform() < p0 ? 0 : 1;
}

// Measures the two-level subsystem `sub` in `basis`; returns 0/1 (X: 0 = '+').
inline int measure_two_level(StateVector& state, std::size_t sub, Basis basis, Rng& rng) {
  const SubsystemLayout& lay = state.layout;
  const std::size_t stride = lay.stride_of(sub);
  double p0 = 0.0;
  const double r = 1.0 / std::sqrt(2.0);
  for_each_base(lay, {sub}, [&](std::size_t base) {
    const cplx a0 = state.amp[base];
    const cplx a1 = state.amp[base + stride];
    p0 += (basis == Basis::Z) ? std::norm(a0) : std::norm((a0 + a1) * r);
  });
  int outcome = sample_two(p0, rng);
  // Collapse & renormalize.
  const double p = outcome == 0 ? p0 : 1.0 - p0;
  const double inv = 1.0 / std::sqrt(p);
  for_each_base(lay, {sub}, [&](std::size_t base) {
    cplx& a0 = state.amp[base];
    cplx& a1 = state.amp[base + stride];
    if (basis == Basis::Z) {
      if (outcome == 0) {
        a0 *= inv;
        a1 = 0.0;
      } else {
        a0 = 0.0;
        a1 *= inv;
      }
    } else {
      const double sgn = outcome == 0 ? 1.0 : -1.0;
      cplx comp = (a0 + sgn * a1) * r;  // <x_outcome | pair>
      comp *= inv;
      a0 = comp * r;
      a1 = sgn * comp * r;
    }
  });
  return outcome;
}

}  // namespace detail

/** Born-rule measurement of protocol qubit `qubit_index` (1-based) in Z or X. */
inline int measure_qubit(StateVector& state, std::size_t qubit_index, Basis basis, Rng& rng) {
  if (qubit_index < 1 || qubit_index > state.layout.num_qubits)
    throw dimension_error("measure_qubit: index out of range");
  return detail::measure_two_level(state, qubit_index, basis, rng);
}

/** Z measurement of register bit `slot` (1-based). */
inline int measure_register_qubit(StateVector& state, std::size_t slot, Rng& rng) {
  if (slot < 1 || slot > state.layout.bob_register_len)
    throw dimension_error("measure_register_qubit: slot out of range");
  return detail::measure_two_level(state, state.layout.num_qubits + slot, Basis::Z, rng);
}

/** Standard-basis measurement of the probe; returns its digit. */
inline std::size_t measure_probe(StateVector& state, Rng& rng) {
  const SubsystemLayout& lay = state.layout;
  const std::size_t block = std::size_t{1} << lay.two_level_count();
  std::vector<double> p(lay.probe_dim, 0.0);
  for (std::size_t d = 0; d < lay.probe_dim; ++d)
    for (std::size_t i = d * block; i < (d + 1) * block; ++i) p[d] += std::norm(state.amp[i]);
  // Sample among outcomes with probability >= kImpossibleProb.
  double mass = 0.0;
  for (double v : p) mass += v >= kImpossibleProb ? v : 0.0;
  const double u = rng.uniform() * mass;
  std::size_t outcome = lay.probe_dim;  // sentinel
  double acc = 0.0;
  for (std::size_t d = 0; d < lay.probe_dim; ++d) {
    if (p[d] < kImpossibleProb) continue;
    outcome = d;  // floating-point fallback: last eligible outcome wins
    acc += p[d];
    if (u < acc) break;
  }
  if (outcome == lay.probe_dim) throw numeric_error("measure_probe: no eligible outcome");
  const double inv = 1.0 / std::sqrt(p[outcome]);
  for (std::size_t d = 0; d < lay.probe_dim; ++d)
    for (std::size_t i = d * block; i < (d + 1) * block; ++i)
      state.amp[i] = d == outcome ? state.amp[i] * inv : cplx{0.0, 0.0};
  return outcome;
}

/**
 * Removes protocol qubit `qubit_index` that is (up to kDropTol mass) in the
 * given product state — e.g. right after measuring it. Purely a bookkeeping
 * shrink: higher-numbered qubits are renumbered down by one.
 */
inline void drop_qubit(StateVector& state, std::size_t qubit_index, BasisState observed) {
  const SubsystemLayout& lay = state.layout;
  if (qubit_index < 1 || qubit_index > lay.num_qubits)
    throw dimension_error("drop_qubit: index out of range");
  const std::size_t stride = lay.stride_of(qubit_index);
  const double r = 1.0 / std::sqrt(2.0);

  SubsystemLayout nlay = lay;
  nlay.num_qubits -= 1;
  std::vector<cplx> out(nlay.total_dim());
  std::size_t w = 0;
  double kept = 0.0;
  detail::for_each_base(lay, {qubit_index}, [&](std::size_t base) {
    const cplx a0 = state.amp[base];
    const cplx a1 = state.amp[base + stride];
    cplx c;
    switch (observed) {
      case BasisState::Z0: c = a0; break;
      case BasisState::Z1: c = a1; break;
      case BasisState::XPlus: c = (a0 + a1) * r; break;
      default: c = (a0 - a1) * r; break;
    }
    out[w++] = c;
    kept += std::norm(c);
  });
  if (std::abs(kept - 1.0) > kDropTol)
    throw numeric_error("drop_qubit: qubit not in the claimed product state (kept mass " +
                        std::to_string(kept) + ")");
  // for_each_base walks bases in ascending order and the dropped qubit's bit
  // is the only removed digit, so `out` is already in the new index order.
  state.layout = nlay;
  state.amp = std::move(out);
  state.renormalize();
}

/** Hermitian, unit-trace, PSD matrix (all checked at construction). */
class DensityMatrix {
 public:
  explicit DensityMatrix(Eigen::MatrixXcd m) : m_(std::move(m)) {
    if (m_.rows() != m_.cols()) throw dimension_error("density: matrix not square");
    double herm = (m_ - m_.adjoint()).cwiseAbs().maxCoeff();
    if (herm > kHermTol) throw numeric_error("density: not hermitian, dev " + std::to_string(herm));
    double tr = m_.trace().real();
    if (std::abs(tr - 1.0) > kTraceTol)
      throw numeric_error("density: trace " + std::to_string(tr));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(m_, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < -kPsdTol)
      throw numeric_error("density: negative eigenvalue " +
                          std::to_string(es.eigenvalues().minCoeff()));
  }

  std::size_t dim() const { return static_cast<std::size_t>(m_.rows()); }
  const Eigen::MatrixXcd& mat() const { return m_; }

 private:
  Eigen::MatrixXcd m_;
};

/**
 * Partial trace onto the ordered subsystem list `keep` (first entry slowest,
 * same digit convention as apply_unitary).
 */
inline DensityMatrix reduced_density(const StateVector& state,
                                     const std::vector<std::size_t>& keep) {
  const SubsystemLayout& lay = state.layout;
  if (keep.empty()) throw dimension_error("reduced_density: nothing kept");
  std::size_t dim = 1;
  for (std::size_t i = 0; i < keep.size(); ++i) {
    for (std::size_t j = i + 1; j < keep.size(); ++j)
      if (keep[i] == keep[j]) throw dimension_error("reduced_density: duplicate subsystem");
    dim *= lay.dim_of(keep[i]);
  }
  std::vector<std::size_t> offsets(dim);
  for (std::size_t t = 0; t < dim; ++t) {
    std::size_t rem = t, off = 0;
    for (std::size_t i = keep.size(); i > 0; --i) {
      std::size_t d = lay.dim_of(keep[i - 1]);
      off += (rem % d) * lay.stride_of(keep[i - 1]);
      rem /= d;
    }
    offsets[t] = off;
  }
  Eigen::MatrixXcd rho = Eigen::MatrixXcd::Zero(dim, dim);
  Eigen::VectorXcd v(dim);
  detail::for_each_base(lay, keep, [&](std::size_t base) {
    for (std::size_t t = 0; t < dim; ++t) v[static_cast<Eigen::Index>(t)] = state.amp[base + offsets[t]];
    rho.noalias() += v * v.adjoint();
  });
  return DensityMatrix(std::move(rho));
}

/** (1/2) * trace norm of (a - b); 0 iff the states are indistinguishable. */
inline double trace_distance(const DensityMatrix& a, const DensityMatrix& b) {
  if (a.dim() != b.dim()) throw dimension_error("trace_distance: dimension mismatch");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(a.mat() - b.mat(), Eigen::EigenvaluesOnly);
  return 0.5 * es.eigenvalues().cwiseAbs().sum();
}

/** Sparse debug dump: layout plus all amplitudes with |amp| > 1e-12. */
inline nlohmann::json to_debug_json(const StateVector& state) {
  nlohmann::json ents = nlohmann::json::array();
  for (std::size_t i = 0; i < state.total_dim(); ++i) {
    if (std::abs(state.amp[i]) > kDumpTol)
      ents.push_back({i, state.amp[i].real(), state.amp[i].imag()});
  }
  return nlohmann::json{{"layout",
                         {{"probe_dim", state.layout.probe_dim},
                          {"num_qubits", state.layout.num_qubits},
                          {"bob_register_len", state.layout.bob_register_len}}},
                        {"amplitudes", ents}};
}

}  // namespace sqkd
