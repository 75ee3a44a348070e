#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <memory>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "sqkd/errors.hpp"
#include "sqkd/qstate.hpp"
#include "sqkd/rng.hpp"

namespace sqkd {

enum class ProtocolKind { Mock, P1, P1Prime, P2 };

inline std::string to_string(ProtocolKind k) {
  switch (k) {
    case ProtocolKind::Mock: return "mock";
    case ProtocolKind::P1: return "p1";
    case ProtocolKind::P1Prime: return "p1prime";
    default: return "p2";
  }
}

/**
 * How a per-round attack spreads over the whole-register sequential run.
 * Block: everything forward at step 1, everything backward at step N+1
 * (one unitary pair bracketing the run). PerQubit: step k carries round k's
 * forward action and round k-1's backward action (the one-qubit-in-flight
 * restriction). Both compose to the same total operator for attacks whose
 * per-round pieces act on disjoint subsystems.
 */
enum class SeqEncoding { Block, PerQubit };

/**
 * The classical data that has been publicly announced by the end of a run.
 * Attacks may read nothing else: secret bits (Alice's raw bits, Bob's
 * measurement results, the sifted string) never appear here. All positions
 * are 1-based round numbers.
 */
struct EveView {
  ProtocolKind protocol = ProtocolKind::Mock;
  std::size_t num_rounds = 0;
  std::size_t n = 0;
  std::vector<std::size_t> alice_z_positions;      // where Alice used the computational basis
  std::vector<std::size_t> bob_measured_positions; // rounds Bob measured (ascending)
  std::vector<std::size_t> bob_ctrl_positions;     // rounds Bob reflected, ascending
  std::vector<std::size_t> reflect_order;          // randomization protocols: return order
  std::vector<std::size_t> test_positions;         // announced check positions
  std::vector<int> test_values_bob;                // Bob's announced check values
  std::vector<std::size_t> info_index_q;           // announced index tuple (1-based into v)
  bool aborted = false;
};

/** What the attack walks away with after its final probe measurement. */
struct EveRecord {
  long long probe_outcome = -1;  // standard-basis probe result, -1 if none
  std::string guesses;           // per-round '0'/'1'/'?', or empty
  std::map<std::string, std::string> metadata;
};

/** Loads {"dim": d, "entries": [[re, im], ...]} (row-major, d*d entries). */
inline UnitaryMatrix load_unitary_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open unitary file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw config_error("unitary file " + path + ": " + e.what());
  }
  if (!j.contains("dim") || !j.contains("entries"))
    throw config_error("unitary file " + path + ": need fields 'dim' and 'entries'");
  const std::size_t d = j["dim"].get<std::size_t>();
  const auto& ents = j["entries"];
  if (!ents.is_array() || ents.size() != d * d)
    throw config_error("unitary file " + path + ": expected " + std::to_string(d * d) +
                       " entries");
  Eigen::MatrixXcd m(d, d);
  for (std::size_t i = 0; i < d * d; ++i) {
    const auto& e = ents[i];
    if (!e.is_array() || e.size() != 2)
      throw config_error("unitary file " + path + ": entry " + std::to_string(i) +
                         " is not [re, im]");
    m(static_cast<Eigen::Index>(i / d), static_cast<Eigen::Index>(i % d)) =
        cplx{e[0].get<double>(), e[1].get<double>()};
  }
  return UnitaryMatrix(std::move(m));  // unitarity checked here
}

/** Composite probe dimension for d-per-round attacks, saturating at SIZE_MAX. */
inline std::size_t pow_saturating(std::size_t base, std::size_t exp) {
  std::size_t p = 1;
  for (std::size_t i = 0; i < exp; ++i) {
    if (base != 0 && p > std::numeric_limits<std::size_t>::max() / base)
      return std::numeric_limits<std::size_t>::max();
    p *= base;
  }
  return p;
}

// --- local two-party gates used by the built-in attacks -------------------
// Local round space: subsystem 0 = Eve's probe (slow), subsystem 1 = transit
// qubit (fast); basis index = probe*2 + qubit.

/** Controlled-X with the transit qubit as control and the probe as target. */
inline UnitaryMatrix cnot_qubit_to_probe() {
  Eigen::MatrixXcd m = Eigen::MatrixXcd::Zero(4, 4);
  m(0, 0) = 1;  // |p=0,q=0> -> |0,0>
  m(3, 1) = 1;  // |p=0,q=1> -> |1,1>
  m(2, 2) = 1;  // |p=1,q=0> -> |1,0>
  m(1, 3) = 1;  // |p=1,q=1> -> |0,1>
  return UnitaryMatrix(std::move(m));
}

/** Probe rotation by 2*theta conditioned on the transit qubit being |1>. */
inline UnitaryMatrix controlled_probe_rotation(double theta) {
  const double c = std::cos(theta), s = std::sin(theta);
  Eigen::MatrixXcd m = Eigen::MatrixXcd::Zero(4, 4);
  m(0, 0) = 1;
  m(2, 2) = 1;
  m(1, 1) = c;
  m(3, 1) = s;
  m(1, 3) = -s;
  m(3, 3) = c;
  return UnitaryMatrix(std::move(m));
}

/**
 * Per-run mutable attack state. The protocol executors drive it through one
 * of two engines:
 *
 *  - round-local ("factored") engine: each round lives in its own little
 *    (probe x qubit) state; the executor calls the *_local hooks and, once
 *    all announcements are out, hands leftover round states to the session
 *    (absorb_round) so `finalize` can measure the probes.
 *
 *  - whole-register ("joint") engine: one big state whose probe digit is the
 *    composite of all per-round probes; hooks receive the subsystem ids of
 *    the protocol qubits. `returns[k-1]` says whether round k's qubit comes
 *    back to Alice (always true except mock-protocol measured rounds).
 *
 * joint_backward_block is the randomization-protocol return path: the
 * reflected qubits arrive as one block in an order Eve cannot map back to
 * rounds, so implementations must act on the block in a way that does not
 * depend on which entry came from which round (e.g. a function of the
 * block's total weight). The per-round pairing hooks are unavailable there.
 *
 * Sessions receive announced data only (EveView); executors never pass
 * secret bits through this interface.
 */
class AttackSession {
 public:
  explicit AttackSession(std::size_t rounds) : rounds_(rounds) {}
  virtual ~AttackSession() = default;

  virtual void set_sequential_encoding(SeqEncoding) {}

  // --- round-local engine ---
  virtual void forward_local(StateVector&, std::size_t /*round*/, Rng&) {}
  virtual void backward_local(StateVector&, std::size_t /*round*/, Rng&) {}
  // Mock protocol only: the qubit will not come back.
  virtual void no_return_local(StateVector&, std::size_t /*round*/, Rng&) {}
  void absorb_round(std::size_t round, StateVector state) {
    kept_.emplace(round, std::move(state));
  }
  virtual EveRecord finalize(const EveView& view, Rng& rng);

  // --- whole-register engine ---
  virtual void joint_forward(StateVector&, const std::vector<std::size_t>& /*qubit_subs*/) {}
  // Sequential schedule, k = 1..N+1; step k fires just before round k's
  // qubit reaches Bob, step N+1 after the last qubit came back.
  virtual void joint_step(StateVector&, std::size_t /*k*/,
                          const std::vector<std::size_t>& /*qubit_subs*/,
                          const std::vector<bool>& /*returns*/) {}
  // Parallel schedule return pass with per-round pairing intact.
  virtual void joint_backward_paired(StateVector&, const std::vector<std::size_t>& /*qubit_subs*/,
                                     const std::vector<bool>& /*returns*/) {}
  // Randomization-protocol return pass: subsystem ids in arrival order.
  virtual void joint_backward_block(StateVector&, const std::vector<std::size_t>& /*subs_in_order*/) {}
  virtual EveRecord finalize_joint(StateVector& state, const EveView& view, Rng& rng);

  // Structured large-N path (weight-counter attacks): the executor computes
  // the probe value classically and parks it here.
  void record_classical_probe(long long v) { classical_probe_ = v; }

 protected:
  std::size_t rounds_;
  std::map<std::size_t, StateVector> kept_;  // per-round leftover states
  std::map<std::size_t, int> recorded_;      // bits measured mid-run
  std::optional<long long> classical_probe_;
};

/**
 * Immutable attack description + session factory. Capability queries tell
 * the executors which engines can run this attack.
 */
class Attack {
 public:
  virtual ~Attack() = default;
  virtual std::string name() const = 0;
  virtual std::string describe() const { return name(); }

  // Round-local engine support: the attack touches each round through local
  // (probe x qubit) operations only.
  virtual bool local() const = 0;
  virtual std::size_t local_probe_dim() const { return 1; }
  // True when the attack never touches returning qubits. Only such local
  // attacks may run round-locally on the randomization protocols, whose
  // random return order makes per-round backward pairing physically
  // unavailable to Eve.
  virtual bool backward_trivial() const = 0;

  // Whole-register engine support.
  virtual bool joint() const = 0;
  virtual std::size_t joint_probe_dim(std::size_t n_rounds) const {
    (void)n_rounds;
    return 1;
  }

  // Structured classical path for counter attacks at large N.
  virtual bool counter_sampler() const { return false; }

  // When true, per-round probe bits double as bit guesses for the rounds.
  virtual bool probe_bits_are_guesses() const { return false; }

  virtual std::unique_ptr<AttackSession> make_session(std::size_t rounds) const = 0;
};

// --- default finalize implementations --------------------------------------

inline EveRecord AttackSession::finalize(const EveView& view, Rng& rng) {
  (void)view;
  EveRecord rec;
  if (classical_probe_) {
    rec.probe_outcome = *classical_probe_;
    return rec;
  }
  // Measure each round's leftover probe; merge with bits recorded mid-run.
  std::string guesses(rounds_, '?');
  bool any = false;
  for (std::size_t k = 1; k <= rounds_; ++k) {
    if (auto rit = recorded_.find(k); rit != recorded_.end()) {
      guesses[k - 1] = rit->second ? '1' : '0';
      any = true;
      continue;
    }
    auto kit = kept_.find(k);
    if (kit == kept_.end() || kit->second.layout.probe_dim < 2) continue;
    guesses[k - 1] = measure_probe(kit->second, rng) ? '1' : '0';
    any = true;
  }
  if (any) rec.guesses = std::move(guesses);
  return rec;
}

inline EveRecord AttackSession::finalize_joint(StateVector& state, const EveView& view, Rng& rng) {
  (void)view;
  EveRecord rec;
  if (state.layout.probe_dim < 2) return rec;
  rec.probe_outcome = static_cast<long long>(measure_probe(state, rng));
  return rec;
}

// --- built-in attacks -------------------------------------------------------

class NoAttack final : public Attack {
 public:
  std::string name() const override { return "no_attack"; }
  bool local() const override { return true; }
  bool backward_trivial() const override { return true; }
  bool joint() const override { return true; }
  std::unique_ptr<AttackSession> make_session(std::size_t rounds) const override {
    return std::make_unique<AttackSession>(rounds);
  }
};

namespace detail {

/**
 * Shared machinery for attacks built from one fixed forward (and optionally
 * backward) unitary per round on (probe x qubit). Provides the mechanical
 * lift to the whole-register engine: round k's probe becomes factor k of a
 * composite probe digit of dimension d^N (factor 1 slowest), and the local
 * matrices act on the (probe-factor k, qubit k) axis pair.
 */
class LocalUnitarySession : public AttackSession {
 public:
  LocalUnitarySession(std::size_t rounds, std::size_t probe_dim,
                      std::optional<UnitaryMatrix> fwd, std::optional<UnitaryMatrix> bwd)
      : AttackSession(rounds), d_(probe_dim), fwd_(std::move(fwd)), bwd_(std::move(bwd)) {}

  void set_sequential_encoding(SeqEncoding enc) override { enc_ = enc; }

  void forward_local(StateVector& st, std::size_t, Rng&) override {
    if (fwd_) apply_unitary(st, *fwd_, {0, 1});
  }
  void backward_local(StateVector& st, std::size_t, Rng&) override {
    if (bwd_) apply_unitary(st, *bwd_, {0, 1});
  }

  void joint_forward(StateVector& st, const std::vector<std::size_t>& qubit_subs) override {
    if (!fwd_) return;
    for (std::size_t k = 1; k <= qubit_subs.size(); ++k) apply_pair(st, *fwd_, k, qubit_subs);
  }

  void joint_step(StateVector& st, std::size_t k, const std::vector<std::size_t>& qubit_subs,
                  const std::vector<bool>& returns) override {
    const std::size_t n = qubit_subs.size();
    if (enc_ == SeqEncoding::Block) {
      if (k == 1) joint_forward(st, qubit_subs);
      if (k == n + 1) joint_backward_paired(st, qubit_subs, returns);
      return;
    }
    if (k >= 2 && bwd_ && returns[k - 2]) apply_pair(st, *bwd_, k - 1, qubit_subs);
    if (k <= n && fwd_) apply_pair(st, *fwd_, k, qubit_subs);
  }

  void joint_backward_paired(StateVector& st, const std::vector<std::size_t>& qubit_subs,
                             const std::vector<bool>& returns) override {
    if (!bwd_) return;
    for (std::size_t k = 1; k <= qubit_subs.size(); ++k)
      if (returns[k - 1]) apply_pair(st, *bwd_, k, qubit_subs);
  }

  void joint_backward_block(StateVector&, const std::vector<std::size_t>&) override {
    if (bwd_)
      throw config_error(
          "per-round attack with a backward hook cannot act on a randomly reordered block");
  }

  EveRecord finalize_joint(StateVector& state, const EveView& view, Rng& rng) override {
    EveRecord rec = AttackSession::finalize_joint(state, view, rng);
    if (rec.probe_outcome >= 0 && d_ == 2) {
      // Composite probe digit: factor k of round k sits at bit (N-k).
      const auto p = static_cast<unsigned long long>(rec.probe_outcome);
      std::string guesses(rounds_, '?');
      for (std::size_t k = 1; k <= rounds_; ++k)
        guesses[k - 1] = ((p >> (rounds_ - k)) & 1u) ? '1' : '0';
      rec.guesses = std::move(guesses);
    }
    return rec;
  }

 private:
  // Applies m to (probe factor k, qubit of round k). Factor k has dimension
  // d_ and stride d_^(N-k) * 2^(current two-level count).
  void apply_pair(StateVector& st, const UnitaryMatrix& m, std::size_t k,
                  const std::vector<std::size_t>& qubit_subs) {
    if (d_ == 1) {
      apply_unitary(st, m, {qubit_subs[k - 1]});
      return;
    }
    const SubsystemLayout& lay = st.layout;
    const std::size_t n = qubit_subs.size();
    auto probe_stride = [&](std::size_t factor) {
      std::size_t s = std::size_t{1} << lay.two_level_count();
      for (std::size_t i = 0; i < n - factor; ++i) s *= d_;
      return s;
    };
    std::vector<sqkd::detail::Axis> targets = {{d_, probe_stride(k)},
                                               {2, lay.stride_of(qubit_subs[k - 1])}};
    std::vector<sqkd::detail::Axis> rest;
    for (std::size_t f = 1; f <= n; ++f)
      if (f != k) rest.push_back({d_, probe_stride(f)});
    for (std::size_t sub = 1; sub < lay.n_subsystems(); ++sub)
      if (sub != qubit_subs[k - 1]) rest.push_back({2, lay.stride_of(sub)});
    sqkd::detail::apply_unitary_axes(st, m, targets, rest);
  }

  std::size_t d_;
  std::optional<UnitaryMatrix> fwd_, bwd_;
  SeqEncoding enc_ = SeqEncoding::Block;
};

}  // namespace detail

/** Copies the transit bit into a fresh probe qubit; undoes it on return. */
class CnotMirrorAttack final : public Attack {
 public:
  std::string name() const override { return "cnot_mirror"; }
  bool local() const override { return true; }
  std::size_t local_probe_dim() const override { return 2; }
  bool backward_trivial() const override { return false; }
  bool joint() const override { return true; }
  std::size_t joint_probe_dim(std::size_t n_rounds) const override {
    return pow_saturating(2, n_rounds);
  }
  bool probe_bits_are_guesses() const override { return true; }

  std::unique_ptr<AttackSession> make_session(std::size_t rounds) const override {
    struct Session final : detail::LocalUnitarySession {
      explicit Session(std::size_t rounds)
          : LocalUnitarySession(rounds, 2, cnot_qubit_to_probe(), cnot_qubit_to_probe()) {}
      // A qubit that stays with Bob was measured; Eve reads her copy at once.
      void no_return_local(StateVector& st, std::size_t round, Rng& rng) override {
        recorded_[round] = static_cast<int>(measure_probe(st, rng));
      }
    };
    return std::make_unique<Session>(rounds);
  }
};

/** Copies the transit bit into a fresh probe qubit and keeps it. */
class CnotForwardOnlyAttack final : public Attack {
 public:
  std::string name() const override { return "cnot_forward_only"; }
  bool local() const override { return true; }
  std::size_t local_probe_dim() const override { return 2; }
  bool backward_trivial() const override { return true; }
  bool joint() const override { return true; }
  std::size_t joint_probe_dim(std::size_t n_rounds) const override {
    return pow_saturating(2, n_rounds);
  }
  bool probe_bits_are_guesses() const override { return true; }

  std::unique_ptr<AttackSession> make_session(std::size_t rounds) const override {
    return std::make_unique<detail::LocalUnitarySession>(rounds, 2, cnot_qubit_to_probe(),
                                                         std::nullopt);
  }
};

/**
 * Measures each transit qubit in the computational basis on the way in and
 * passes the collapsed qubit on. The whole-register form carries the copy in
 * a probe qubit instead and reads it at the end (deferred measurement —
 * same statistics, unitary until finalize).
 */
class InterceptResendZAttack final : public Attack {
 public:
  std::string name() const override { return "intercept_resend_z"; }
  bool local() const override { return true; }
  std::size_t local_probe_dim() const override { return 1; }
  bool backward_trivial() const override { return true; }
  bool joint() const override { return true; }
  std::size_t joint_probe_dim(std::size_t n_rounds) const override {
    return pow_saturating(2, n_rounds);
  }
  bool probe_bits_are_guesses() const override { return true; }

  std::unique_ptr<AttackSession> make_session(std::size_t rounds) const override {
    struct Session final : detail::LocalUnitarySession {
      explicit Session(std::size_t rounds)
          : LocalUnitarySession(rounds, 2, cnot_qubit_to_probe(), std::nullopt) {}
      void forward_local(StateVector& st, std::size_t round, Rng& rng) override {
        recorded_[round] = measure_qubit(st, 1, Basis::Z, rng);
      }
    };
    return std::make_unique<Session>(rounds);
  }
};

/** Coupling of tunable strength: probe rotates by 2*theta when the bit is 1. */
class RotationProbeAttack final : public Attack {
 public:
  explicit RotationProbeAttack(double theta) : theta_(theta) {
    if (theta < 0.0 || theta > std::numbers::pi / 2.0 + 1e-12)
      throw config_error("rotation_probe: theta must lie in [0, pi/2]");
  }
  std::string name() const override { return "rotation_probe"; }
  std::string describe() const override {
    return "rotation_probe(theta=" + std::to_string(theta_) + ")";
  }
  bool local() const override { return true; }
  std::size_t local_probe_dim() const override { return 2; }
  bool backward_trivial() const override { return true; }
  bool joint() const override { return true; }
  std::size_t joint_probe_dim(std::size_t n_rounds) const override {
    return pow_saturating(2, n_rounds);
  }
  bool probe_bits_are_guesses() const override { return true; }
  double theta() const { return theta_; }

  std::unique_ptr<AttackSession> make_session(std::size_t rounds) const override {
    return std::make_unique<detail::LocalUnitarySession>(
        rounds, 2, controlled_probe_rotation(theta_), std::nullopt);
  }

 private:
  double theta_;
};

/**
 * Weight-counter attack: one probe of dimension N+1 accumulates the Hamming
 * weight of everything that passes on the way in and sheds the weight of
 * whatever block comes back, both modulo N+1. Both passes are
 * computational-basis permutations shifting only the counter, which is what
 * makes the large-N classical sampling path exact for this attack.
 */
class HammingWeightAttack final : public Attack {
 public:
  std::string name() const override { return "hamming_weight"; }
  bool local() const override { return false; }
  bool backward_trivial() const override { return false; }
  bool joint() const override { return true; }
  std::size_t joint_probe_dim(std::size_t n_rounds) const override { return n_rounds + 1; }
  bool counter_sampler() const override { return true; }

  std::unique_ptr<AttackSession> make_session(std::size_t rounds) const override {
    struct Session final : AttackSession {
      using AttackSession::AttackSession;

      static void shift_probe_by_weight(StateVector& st, const std::vector<std::size_t>& subs,
                                        bool subtract) {
        const SubsystemLayout lay = st.layout;
        const std::size_t d = lay.probe_dim;
        const std::size_t tl = lay.two_level_count();
        const std::size_t block = std::size_t{1} << tl;
        apply_basis_permutation(st, [&lay, &subs, d, tl, block, subtract](std::size_t idx) {
          std::size_t w = 0;
          for (std::size_t s : subs) w += static_cast<std::size_t>(lay.bit_at(idx, s));
          w %= d;
          const std::size_t p = idx >> tl;
          const std::size_t np = subtract ? (p + d - w) % d : (p + w) % d;
          return np * block + (idx & (block - 1));
        });
      }

      void joint_forward(StateVector& st, const std::vector<std::size_t>& qubit_subs) override {
        shift_probe_by_weight(st, qubit_subs, false);
      }

      void joint_backward_block(StateVector& st,
                                const std::vector<std::size_t>& subs_in_order) override {
        shift_probe_by_weight(st, subs_in_order, true);
      }

      void joint_backward_paired(StateVector& st, const std::vector<std::size_t>& qubit_subs,
                                 const std::vector<bool>& returns) override {
        std::vector<std::size_t> returned;
        for (std::size_t k = 1; k <= qubit_subs.size(); ++k)
          if (returns[k - 1]) returned.push_back(qubit_subs[k - 1]);
        shift_probe_by_weight(st, returned, true);
      }

      void joint_step(StateVector& st, std::size_t k, const std::vector<std::size_t>& qubit_subs,
                      const std::vector<bool>& returns) override {
        if (k == 1) joint_forward(st, qubit_subs);
        if (k == rounds_ + 1) joint_backward_paired(st, qubit_subs, returns);
      }
    };
    return std::make_unique<Session>(rounds);
  }
};

/** User-supplied per-round attack: forward/backward unitaries from JSON. */
class UserLocalAttack final : public Attack {
 public:
  UserLocalAttack(std::size_t probe_dim, const std::string& forward_file,
                  const std::string& backward_file)
      : d_(probe_dim) {
    if (d_ < 1) throw config_error("user_local: probe_dim must be >= 1");
    if (forward_file.empty()) throw config_error("user_local: forward unitary file required");
    fwd_ = load_unitary_json(forward_file);
    if (fwd_->dim() != d_ * 2)
      throw config_error("user_local: forward unitary must have dim probe_dim*2");
    if (!backward_file.empty()) {
      bwd_ = load_unitary_json(backward_file);
      if (bwd_->dim() != d_ * 2)
        throw config_error("user_local: backward unitary must have dim probe_dim*2");
    }
  }

  std::string name() const override { return "user_local"; }
  bool local() const override { return true; }
  std::size_t local_probe_dim() const override { return d_; }
  bool backward_trivial() const override { return !bwd_.has_value(); }
  bool joint() const override { return true; }
  std::size_t joint_probe_dim(std::size_t n_rounds) const override {
    return pow_saturating(d_, n_rounds);
  }
  bool probe_bits_are_guesses() const override { return d_ == 2; }

  std::unique_ptr<AttackSession> make_session(std::size_t rounds) const override {
    return std::make_unique<detail::LocalUnitarySession>(rounds, d_, fwd_, bwd_);
  }

 private:
  std::size_t d_;
  std::optional<UnitaryMatrix> fwd_, bwd_;
};

// --- factory ----------------------------------------------------------------

struct AttackConfig {
  std::string name = "no_attack";
  double theta = std::numbers::pi / 2.0;  // rotation_probe
  std::size_t probe_dim = 2;              // user_local
  std::string forward_file, backward_file;
};

inline std::unique_ptr<Attack> make_attack(const AttackConfig& cfg) {
  if (cfg.name == "no_attack") return std::make_unique<NoAttack>();
  if (cfg.name == "cnot_mirror") return std::make_unique<CnotMirrorAttack>();
  if (cfg.name == "cnot_forward_only") return std::make_unique<CnotForwardOnlyAttack>();
  if (cfg.name == "intercept_resend_z") return std::make_unique<InterceptResendZAttack>();
  if (cfg.name == "rotation_probe") return std::make_unique<RotationProbeAttack>(cfg.theta);
  if (cfg.name == "hamming_weight") return std::make_unique<HammingWeightAttack>();
  if (cfg.name == "user_local")
    return std::make_unique<UserLocalAttack>(cfg.probe_dim, cfg.forward_file, cfg.backward_file);
  throw config_error("unknown attack: " + cfg.name);
}

}  // namespace sqkd
