#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "sqkd/adversary.hpp"
#include "sqkd/errors.hpp"
#include "sqkd/qstate.hpp"
#include "sqkd/rng.hpp"

namespace sqkd {

enum class Action { Sift, Ctrl };
enum class Schedule { Parallel, Sequential };
enum class BobModel { Immediate, Register };
enum class Engine { Auto, Factored, Joint, Sampler };
enum class AbortReason { CtrlErrorRate, TestErrorRate, InsufficientBalancedBits };
enum class RunStatus { Completed, Aborted };

inline std::string to_string(AbortReason r) {
  switch (r) {
    case AbortReason::CtrlErrorRate: return "CtrlErrorRate";
    case AbortReason::TestErrorRate: return "TestErrorRate";
    default: return "InsufficientBalancedBits";
  }
}

inline std::string to_string(Engine e) {
  switch (e) {
    case Engine::Auto: return "auto";
    case Engine::Factored: return "factored";
    case Engine::Joint: return "joint";
    default: return "sampler";
  }
}

/** Error-correction/privacy-amplification interface stub; never executed. */
struct PostProcessingPlan {
  std::size_t rank_R;
  std::size_t key_len_l;
  PostProcessingPlan(std::size_t rank, std::size_t key_len) : rank_R(rank), key_len_l(key_len) {
    if (key_len_l > rank_R)
      throw config_error("post-processing plan: key length must not exceed code rank");
  }
};

struct ProtocolParams {
  std::size_t n = 4;        // secret-seed length, even
  double delta = 0.5;       // round-count margin
  double epsilon = 0.1;     // balanced-selection window halfwidth (x2/n)
  std::optional<double> delta_prime;  // analysis-only midpoint parameter
  double p_ctrl_threshold = 0.0;
  double p_test_threshold = 0.0;
  Schedule schedule = Schedule::Parallel;
  SeqEncoding seq_encoding = SeqEncoding::Block;
  BobModel bob_model = BobModel::Immediate;
  Engine engine = Engine::Auto;
  std::optional<std::size_t> rounds_override;  // model studies only; replaces the derived count
  std::size_t max_total_dim = kDefaultMaxTotalDim;

  std::size_t rounds() const {
    if (rounds_override) return *rounds_override;
    return static_cast<std::size_t>(std::ceil(8.0 * static_cast<double>(n) * (1.0 + delta) - 1e-9));
  }

  std::size_t balanced_h() const {
    return static_cast<std::size_t>(
        std::floor((1.0 + epsilon) * static_cast<double>(n) / 2.0 + 1e-9));
  }

  double delta_prime_or_default() const {
    return delta_prime ? *delta_prime : (epsilon + delta) / 2.0;
  }

  void validate(ProtocolKind kind) const {
    if (n == 0 || n % 2 != 0) throw config_error("params: n must be a positive even integer");
    if (delta <= 0.0) throw config_error("params: delta must be > 0");
    if (epsilon < 0.0 || epsilon > 1.0) throw config_error("params: epsilon must lie in [0,1]");
    if (kind == ProtocolKind::P1Prime && epsilon >= delta)
      throw config_error("params: epsilon must be < delta for the balanced-selection protocol");
    if (p_ctrl_threshold < 0.0 || p_ctrl_threshold > 1.0 || p_test_threshold < 0.0 ||
        p_test_threshold > 1.0)
      throw config_error("params: thresholds must lie in [0,1]");
    if (rounds_override && *rounds_override == 0)
      throw config_error("params: rounds_override must be positive");
    if (delta_prime && (*delta_prime <= epsilon || *delta_prime >= delta))
      throw config_error("params: delta_prime must satisfy epsilon < delta_prime < delta");
  }
};

struct CtrlResult {
  std::size_t position = 0;  // 1-based round
  Basis basis = Basis::Z;
  int sent = 0;
  int received = 0;
};

/** Full classical record of one run (public announcements AND private bits). */
struct Transcript {
  ProtocolKind protocol = ProtocolKind::Mock;
  std::size_t num_rounds = 0;
  std::size_t n = 0;
  std::vector<Basis> alice_bases;           // length N
  std::vector<int> alice_bits;              // length N
  std::vector<Action> bob_actions;          // length N
  std::vector<std::size_t> reflect_order_s; // randomization protocols: return order
  std::vector<std::size_t> measured_set_m;  // Bob's measured rounds, ascending
  std::vector<int> bob_measured_bits;       // aligned with measured_set_m
  std::vector<CtrlResult> ctrl_results;     // Alice's checks on reflected qubits
  std::vector<std::size_t> test_positions;  // announced check sample, ascending
  std::vector<int> test_values_bob;
  std::vector<std::size_t> balanced_set_E;  // 1-based indices into v, ascending
  std::vector<std::size_t> v_positions;     // remaining sifted rounds, ascending
  std::string sift_string_v;                // Alice's bits at v_positions
  std::vector<std::size_t> info_index_q;    // 1-based indices into v
  std::string info_string_y;                // Alice's secret-seed value
  std::optional<AbortReason> abort;
};

struct Outcome {
  RunStatus status = RunStatus::Completed;
  std::optional<AbortReason> abort_reason;
  std::string alice_info;
  std::string bob_info;
  std::size_t z_ctrl_count = 0, z_ctrl_err = 0;
  std::size_t x_ctrl_count = 0, x_ctrl_err = 0;
  std::size_t test_count = 0, test_err = 0;
  Transcript transcript;
  EveRecord eve_record;

  double ctrl_err_z_rate() const {
    return z_ctrl_count ? static_cast<double>(z_ctrl_err) / static_cast<double>(z_ctrl_count) : 0.0;
  }
  double ctrl_err_x_rate() const {
    return x_ctrl_count ? static_cast<double>(x_ctrl_err) / static_cast<double>(x_ctrl_count) : 0.0;
  }
  double test_err_rate() const {
    return test_count ? static_cast<double>(test_err) / static_cast<double>(test_count) : 0.0;
  }
};

// --- secret-seed selection --------------------------------------------------

/**
 * Uniform draw from the balanced-weight string set: n-bit strings whose
 * weight w satisfies |2w - n| <= epsilon*n. Samples the weight by its exact
 * string count, then a uniform string of that weight.
 */
inline std::string sample_info_string(std::size_t n, double epsilon, Rng& rng) {
  if (n == 0 || epsilon < 0.0 || epsilon > 1.0)
    throw domain_error("sample_info_string: need n >= 1 and epsilon in [0,1]");
  const auto in_window = [n, epsilon](std::size_t w) {
    const double dev = std::abs(2.0 * static_cast<double>(w) - static_cast<double>(n));
    return dev <= epsilon * static_cast<double>(n) + 1e-9;
  };
  std::vector<std::size_t> weights;
  for (std::size_t w = 0; w <= n; ++w)
    if (in_window(w)) weights.push_back(w);
  if (weights.empty()) throw domain_error("sample_info_string: empty weight window");

  if (n <= 62) {
    // Exact path: weight drawn by its string count (all counts and their sum
    // fit u64 up to n = 62), then a uniform string of that weight.
    std::vector<std::uint64_t> counts(weights.size());
    std::uint64_t total = 0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
      std::uint64_t c = 1;
      for (std::size_t j = 0; j < weights[i]; ++j) c = c * (n - j) / (j + 1);
      counts[i] = c;
      total += c;
    }
    std::uint64_t u = rng.uniform_index(total);
    std::size_t w = weights.back();
    for (std::size_t i = 0; i < weights.size(); ++i) {
      if (u < counts[i]) {
        w = weights[i];
        break;
      }
      u -= counts[i];
    }
    std::string y(n, '0');
    for (std::size_t pos : rng.sample_without_replacement(n, w)) y[pos] = '1';
    return y;
  }

  // Large n: rejection from the uniform n-bit distribution, still exactly
  // uniform over the window. The window always contains the mode, so the
  // acceptance rate is at worst ~1/sqrt(n).
  for (;;) {
    std::string y(n, '0');
    std::size_t w = 0;
    for (std::size_t i = 0; i < n; ++i)
      if (rng.bernoulli(0.5)) {
        y[i] = '1';
        ++w;
      }
    if (in_window(w)) return y;
  }
}

struct Step7Selection {
  std::vector<std::size_t> balanced_set_E;  // 1-based into v, ascending
  std::string y;
  std::vector<std::size_t> q;  // 1-based into v, |q| = n, v_q = y on Alice's side
};

/**
 * Balanced-selection step over Alice's sifted string v: E = positions of the
 * first h zeros and first h ones of v; y uniform over the balanced-weight
 * set; q a uniform ordered selection of positions in E with x_q = y.
 * Throws nothing; empty optional means the run must abort (not enough zeros
 * or ones in v).
 */
inline std::optional<Step7Selection> select_info_step7prime(const std::string& v, std::size_t n,
                                                            double epsilon, Rng& rng) {
  const std::size_t h = static_cast<std::size_t>(
      std::floor((1.0 + epsilon) * static_cast<double>(n) / 2.0 + 1e-9));
  std::vector<std::size_t> zeros, ones;  // 1-based indices into v
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (v[i] == '0' && zeros.size() < h) zeros.push_back(i + 1);
    if (v[i] == '1' && ones.size() < h) ones.push_back(i + 1);
  }
  if (zeros.size() < h || ones.size() < h) return std::nullopt;

  Step7Selection sel;
  sel.balanced_set_E.reserve(2 * h);
  sel.balanced_set_E.insert(sel.balanced_set_E.end(), zeros.begin(), zeros.end());
  sel.balanced_set_E.insert(sel.balanced_set_E.end(), ones.begin(), ones.end());
  std::sort(sel.balanced_set_E.begin(), sel.balanced_set_E.end());

  sel.y = sample_info_string(n, epsilon, rng);

  // Uniform ordered selection with value constraint: pre-shuffle each value
  // class, then consume positions as y dictates. Every admissible tuple has
  // the same probability.
  rng.shuffle(zeros);
  rng.shuffle(ones);
  std::size_t zi = 0, oi = 0;
  sel.q.reserve(n);
  for (char c : sel.y) sel.q.push_back(c == '0' ? zeros[zi++] : ones[oi++]);
  return sel;
}

// --- run machinery ----------------------------------------------------------

namespace detail {

/** Non-throwing feasibility check for a whole-register state. */
inline bool joint_fits(std::size_t probe_dim, std::size_t num_qubits, std::size_t reg_len,
                       std::size_t cap) {
  const std::size_t shift = num_qubits + reg_len;
  if (shift >= static_cast<std::size_t>(std::numeric_limits<std::size_t>::digits)) return false;
  return probe_dim >= 1 && probe_dim <= (cap >> shift);
}

struct RoundDraws {
  std::vector<Basis> bases;
  std::vector<int> bits;
  std::vector<Action> actions;
};

/** Alice's and Bob's coin flips for all rounds, in round order. */
inline RoundDraws draw_rounds(std::size_t N, Rng& rng) {
  RoundDraws d;
  d.bases.reserve(N);
  d.bits.reserve(N);
  d.actions.reserve(N);
  for (std::size_t k = 0; k < N; ++k) {
    d.bases.push_back(rng.bernoulli(0.5) ? Basis::X : Basis::Z);
    d.bits.push_back(rng.bernoulli(0.5) ? 1 : 0);
    d.actions.push_back(rng.bernoulli(0.5) ? Action::Ctrl : Action::Sift);
  }
  return d;
}

/** Intermediate per-run record the engines fill before the classical phase. */
struct QuantumPhase {
  std::map<std::size_t, int> bob_bits;          // round -> Bob's measured bit
  std::vector<CtrlResult> ctrl_results;         // Alice's reflected-qubit checks
  std::vector<std::size_t> reflect_order_s;     // randomization protocols
  std::size_t z_ctrl_count = 0, z_ctrl_err = 0;
  std::size_t x_ctrl_count = 0, x_ctrl_err = 0;
};

inline void tally_ctrl(QuantumPhase& q, std::size_t round, Basis basis, int sent, int received) {
  q.ctrl_results.push_back({round, basis, sent, received});
  if (basis == Basis::Z) {
    ++q.z_ctrl_count;
    if (received != sent) ++q.z_ctrl_err;
  } else {
    ++q.x_ctrl_count;
    if (received != sent) ++q.x_ctrl_err;
  }
}

/**
 * Classical steps shared by all protocols: error-rate checks, check-bit
 * sampling, sifted-string assembly and secret-seed selection. Announces
 * into the transcript and the public view in protocol order; runs the
 * attack's final measurement last.
 */
inline Outcome classical_phase(ProtocolKind kind, const ProtocolParams& params,
                               const RoundDraws& draws, QuantumPhase&& q,
                               AttackSession& session, Rng& rng,
                               StateVector* joint_state = nullptr) {
  const std::size_t N = draws.bases.size();
  Outcome out;
  Transcript& tr = out.transcript;
  tr.protocol = kind;
  tr.num_rounds = N;
  tr.n = params.n;
  tr.alice_bases = draws.bases;
  tr.alice_bits = draws.bits;
  tr.bob_actions = draws.actions;
  tr.reflect_order_s = q.reflect_order_s;
  for (const auto& [round, bit] : q.bob_bits) {
    tr.measured_set_m.push_back(round);
    tr.bob_measured_bits.push_back(bit);
  }
  tr.ctrl_results = q.ctrl_results;
  out.z_ctrl_count = q.z_ctrl_count;
  out.z_ctrl_err = q.z_ctrl_err;
  out.x_ctrl_count = q.x_ctrl_count;
  out.x_ctrl_err = q.x_ctrl_err;

  EveView view;
  view.protocol = kind;
  view.num_rounds = N;
  view.n = params.n;
  for (std::size_t k = 1; k <= N; ++k) {
    if (draws.bases[k - 1] == Basis::Z) view.alice_z_positions.push_back(k);
    if (draws.actions[k - 1] == Action::Sift)
      view.bob_measured_positions.push_back(k);
    else
      view.bob_ctrl_positions.push_back(k);
  }
  view.reflect_order = q.reflect_order_s;

  auto finish = [&](std::optional<AbortReason> reason) {
    if (reason) {
      tr.abort = reason;
      out.status = RunStatus::Aborted;
      out.abort_reason = reason;
      view.aborted = true;
    }
    out.eve_record = joint_state ? session.finalize_joint(*joint_state, view, rng)
                                 : session.finalize(view, rng);
    return std::move(out);
  };

  // Reflected-qubit error check (computational and Hadamard rates separately).
  const double zr = out.ctrl_err_z_rate(), xr = out.ctrl_err_x_rate();
  if (zr > params.p_ctrl_threshold || xr > params.p_ctrl_threshold)
    return finish(AbortReason::CtrlErrorRate);

  // Check-bit sampling over the sifted pool.
  std::vector<std::size_t> sift;  // rounds where Alice used Z and Bob measured
  for (std::size_t k = 1; k <= N; ++k)
    if (draws.bases[k - 1] == Basis::Z && draws.actions[k - 1] == Action::Sift)
      sift.push_back(k);
  if (sift.size() < params.n) return finish(AbortReason::InsufficientBalancedBits);

  std::vector<std::size_t> test_idx = rng.sample_without_replacement(sift.size(), params.n);
  std::sort(test_idx.begin(), test_idx.end());
  std::vector<bool> in_test(sift.size(), false);
  for (std::size_t i : test_idx) in_test[i] = true;
  out.test_count = params.n;
  for (std::size_t i : test_idx) {
    const std::size_t pos = sift[i];
    const int bob = q.bob_bits.at(pos);
    tr.test_positions.push_back(pos);
    tr.test_values_bob.push_back(bob);
    if (bob != draws.bits[pos - 1]) ++out.test_err;
  }
  view.test_positions = tr.test_positions;
  view.test_values_bob = tr.test_values_bob;
  if (out.test_err_rate() > params.p_test_threshold) return finish(AbortReason::TestErrorRate);

  // Remaining sifted string v (Alice's sent bits; Bob holds his measured ones).
  std::string v_alice, v_bob;
  for (std::size_t i = 0; i < sift.size(); ++i) {
    if (in_test[i]) continue;
    tr.v_positions.push_back(sift[i]);
    v_alice.push_back(draws.bits[sift[i] - 1] ? '1' : '0');
    v_bob.push_back(q.bob_bits.at(sift[i]) ? '1' : '0');
  }
  tr.sift_string_v = v_alice;

  // Secret-seed selection.
  if (kind == ProtocolKind::P1Prime) {
    auto sel = select_info_step7prime(v_alice, params.n, params.epsilon, rng);
    if (!sel) return finish(AbortReason::InsufficientBalancedBits);
    tr.balanced_set_E = sel->balanced_set_E;
    tr.info_index_q = sel->q;
    tr.info_string_y = sel->y;
    out.alice_info = sel->y;
    for (std::size_t qi : sel->q) out.bob_info.push_back(v_bob[qi - 1]);
  } else {
    if (v_alice.size() < params.n) return finish(AbortReason::InsufficientBalancedBits);
    for (std::size_t i = 1; i <= params.n; ++i) tr.info_index_q.push_back(i);
    out.alice_info = v_alice.substr(0, params.n);
    out.bob_info = v_bob.substr(0, params.n);
    tr.info_string_y = out.alice_info;
  }
  view.info_index_q = tr.info_index_q;

  return finish(std::nullopt);
}

// --- round-local engine -----------------------------------------------------

/**
 * Runs the protocol one round at a time in a (probe x single qubit[, register
 * bit]) state. Exact whenever the attack acts round-locally; the
 * randomization protocols additionally require the attack to ignore
 * returning qubits, because Eve cannot pair a randomly reordered return with
 * her per-round probes.
 */
inline Outcome run_factored(ProtocolKind kind, const ProtocolParams& params, const Attack& attack,
                            Rng& rng) {
  const std::size_t N = params.rounds();
  auto session = attack.make_session(N);
  RoundDraws draws;
  draws.bases.resize(N);
  draws.bits.resize(N);
  draws.actions.resize(N);
  QuantumPhase q;
  std::map<std::size_t, StateVector> pending;

  const bool use_register =
      kind == ProtocolKind::P2 && params.bob_model == BobModel::Register;
  const std::size_t probe_dim = std::max<std::size_t>(attack.local_probe_dim(), 1);

  for (std::size_t k = 1; k <= N; ++k) {
    const Basis basis = rng.bernoulli(0.5) ? Basis::X : Basis::Z;
    const int bit = rng.bernoulli(0.5) ? 1 : 0;
    const Action action = rng.bernoulli(0.5) ? Action::Ctrl : Action::Sift;
    draws.bases[k - 1] = basis;
    draws.bits[k - 1] = bit;
    draws.actions[k - 1] = action;

    const bool reg_round = use_register && action == Action::Sift;
    SubsystemLayout lay{probe_dim, 1, reg_round ? std::size_t{1} : std::size_t{0},
                        params.max_total_dim};
    StateVector st = prepare(lay, 0, {make_basis_state(basis, bit)});
    session->forward_local(st, k, rng);

    switch (kind) {
      case ProtocolKind::Mock:
        if (action == Action::Sift) {
          q.bob_bits[k] = measure_qubit(st, 1, Basis::Z, rng);
          session->no_return_local(st, k, rng);
        } else {
          session->backward_local(st, k, rng);
          const int got = measure_qubit(st, 1, basis, rng);
          tally_ctrl(q, k, basis, bit, got);
        }
        break;
      case ProtocolKind::P1:
      case ProtocolKind::P1Prime:
        if (action == Action::Sift) {
          q.bob_bits[k] = measure_qubit(st, 1, Basis::Z, rng);
        } else {
          // Reflected unseen (the attack never touches returns here); Alice
          // measures it in her basis once the return order is public.
          const int got = measure_qubit(st, 1, basis, rng);
          tally_ctrl(q, k, basis, bit, got);
        }
        break;
      case ProtocolKind::P2:
        if (action == Action::Sift) {
          if (use_register)
            apply_unitary(st, cnot_qubit_to_probe(), {2, 1});  // copy qubit into the register bit
          else
            q.bob_bits[k] = measure_qubit(st, 1, Basis::Z, rng);
        }
        session->backward_local(st, k, rng);
        {
          const int got = measure_qubit(st, 1, basis, rng);
          if (action == Action::Ctrl) tally_ctrl(q, k, basis, bit, got);
        }
        if (reg_round) q.bob_bits[k] = measure_register_qubit(st, 1, rng);
        break;
    }
    pending.emplace(k, std::move(st));
  }

  if (kind == ProtocolKind::P1 || kind == ProtocolKind::P1Prime) {
    for (std::size_t k = 1; k <= N; ++k)
      if (draws.actions[k - 1] == Action::Ctrl) q.reflect_order_s.push_back(k);
    rng.shuffle(q.reflect_order_s);
  }

  for (auto& [round, st] : pending) session->absorb_round(round, std::move(st));
  return classical_phase(kind, params, draws, std::move(q), *session, rng);
}

// --- whole-register engine ----------------------------------------------------

/** Runs one trial with every round in a single composite state. */
inline Outcome run_joint(ProtocolKind kind, const ProtocolParams& params, const Attack& attack,
                         Rng& rng) {
  if (kind == ProtocolKind::Mock)
    throw config_error("the mock protocol runs round-by-round only");
  if (!attack.joint())
    throw config_error("attack " + attack.name() + " has no whole-register form");
  const std::size_t N = params.rounds();
  RoundDraws draws = draw_rounds(N, rng);
  QuantumPhase q;

  std::vector<std::size_t> sift_rounds, ctrl_rounds;
  for (std::size_t k = 1; k <= N; ++k)
    (draws.actions[k - 1] == Action::Sift ? sift_rounds : ctrl_rounds).push_back(k);

  const bool p1_family = kind == ProtocolKind::P1 || kind == ProtocolKind::P1Prime;
  if (p1_family) {
    q.reflect_order_s = ctrl_rounds;
    rng.shuffle(q.reflect_order_s);
  }

  const bool use_register = kind == ProtocolKind::P2 && params.bob_model == BobModel::Register;
  const std::size_t reg_len = use_register ? sift_rounds.size() : 0;
  const std::size_t probe_dim = std::max<std::size_t>(attack.joint_probe_dim(N), 1);
  SubsystemLayout lay{probe_dim, N, reg_len, params.max_total_dim};

  std::vector<BasisState> qubits(N);
  for (std::size_t k = 1; k <= N; ++k)
    qubits[k - 1] = make_basis_state(draws.bases[k - 1], draws.bits[k - 1]);
  StateVector st = prepare(lay, 0, qubits);

  auto session = attack.make_session(N);
  session->set_sequential_encoding(params.seq_encoding);
  std::vector<std::size_t> qubit_subs(N);
  for (std::size_t k = 0; k < N; ++k) qubit_subs[k] = k + 1;

  if (p1_family) {
    // Forward attack, Bob's measurements, then the return-block attack.
    session->joint_forward(st, qubit_subs);
    std::vector<std::size_t> cur(N + 1);
    for (std::size_t k = 0; k <= N; ++k) cur[k] = k;
    for (std::size_t k : sift_rounds) {
      const int bit = measure_qubit(st, cur[k], Basis::Z, rng);
      q.bob_bits[k] = bit;
      drop_qubit(st, cur[k], bit ? BasisState::Z1 : BasisState::Z0);
      for (std::size_t j = k + 1; j <= N; ++j) --cur[j];
    }
    std::vector<std::size_t> returned_subs;
    returned_subs.reserve(q.reflect_order_s.size());
    for (std::size_t k : q.reflect_order_s) returned_subs.push_back(cur[k]);
    session->joint_backward_block(st, returned_subs);
    for (std::size_t k : ctrl_rounds) {
      const Basis basis = draws.bases[k - 1];
      const int got = measure_qubit(st, cur[k], basis, rng);
      tally_ctrl(q, k, basis, draws.bits[k - 1], got);
    }
  } else {
    // Measure-resend protocol: Bob acts on each qubit between attack steps.
    std::vector<bool> returns(N, true);
    std::vector<std::size_t> reg_slot(N + 1, 0);
    for (std::size_t i = 0; i < sift_rounds.size(); ++i) reg_slot[sift_rounds[i]] = i + 1;

    auto bob_process = [&](std::size_t k) {
      if (draws.actions[k - 1] != Action::Sift) return;
      if (use_register)
        apply_unitary(st, cnot_qubit_to_probe(), {N + reg_slot[k], k});
      else
        q.bob_bits[k] = measure_qubit(st, k, Basis::Z, rng);
    };

    if (params.schedule == Schedule::Parallel) {
      session->joint_forward(st, qubit_subs);
      for (std::size_t k = 1; k <= N; ++k) bob_process(k);
      session->joint_backward_paired(st, qubit_subs, returns);
    } else {
      for (std::size_t k = 1; k <= N; ++k) {
        session->joint_step(st, k, qubit_subs, returns);
        bob_process(k);
      }
      session->joint_step(st, N + 1, qubit_subs, returns);
    }

    if (use_register)
      for (std::size_t k : sift_rounds) q.bob_bits[k] = measure_register_qubit(st, reg_slot[k], rng);
    for (std::size_t k = 1; k <= N; ++k) {
      const Basis basis = draws.bases[k - 1];
      const int got = measure_qubit(st, k, basis, rng);
      if (draws.actions[k - 1] == Action::Ctrl) tally_ctrl(q, k, basis, draws.bits[k - 1], got);
    }
  }

  return classical_phase(kind, params, draws, std::move(q), *session, rng, &st);
}

// --- structured classical path ------------------------------------------------

/**
 * Large-N path for counter attacks on the randomization protocols. Valid
 * because both attack passes are computational-basis permutations acting
 * only on the counter digit: Bob's measured bits follow the attack-free
 * distribution (Alice's bit at a computational-basis round, a fair coin at a
 * Hadamard round), the reflected qubits come back exactly as sent, and the
 * counter deterministically holds the measured block's weight. The
 * whole-register engine reproduces this distribution wherever both fit; the
 * cross-check lives in the test suite.
 */
inline Outcome run_sampler(ProtocolKind kind, const ProtocolParams& params, const Attack& attack,
                           Rng& rng) {
  if (kind != ProtocolKind::P1 && kind != ProtocolKind::P1Prime)
    throw config_error("the classical sampling path covers the randomization protocols only");
  if (!attack.counter_sampler())
    throw config_error("attack " + attack.name() + " has no classical sampling form");
  const std::size_t N = params.rounds();
  RoundDraws draws = draw_rounds(N, rng);
  QuantumPhase q;

  for (std::size_t k = 1; k <= N; ++k)
    if (draws.actions[k - 1] == Action::Ctrl) q.reflect_order_s.push_back(k);
  rng.shuffle(q.reflect_order_s);

  long long weight = 0;
  for (std::size_t k = 1; k <= N; ++k) {
    if (draws.actions[k - 1] != Action::Sift) continue;
    const int bit =
        draws.bases[k - 1] == Basis::Z ? draws.bits[k - 1] : (rng.bernoulli(0.5) ? 1 : 0);
    q.bob_bits[k] = bit;
    weight += bit;
  }
  for (std::size_t k = 1; k <= N; ++k) {
    if (draws.actions[k - 1] != Action::Ctrl) continue;
    tally_ctrl(q, k, draws.bases[k - 1], draws.bits[k - 1], draws.bits[k - 1]);
  }

  auto session = attack.make_session(N);
  session->record_classical_probe(weight % static_cast<long long>(N + 1));
  return classical_phase(kind, params, draws, std::move(q), *session, rng);
}

}  // namespace detail

/** Picks an engine the (protocol, attack) pair supports. */
inline Engine resolve_engine(ProtocolKind kind, const ProtocolParams& params,
                             const Attack& attack) {
  const std::size_t N = params.rounds();
  const bool p1_family = kind == ProtocolKind::P1 || kind == ProtocolKind::P1Prime;
  const std::size_t reg_len =
      (kind == ProtocolKind::P2 && params.bob_model == BobModel::Register) ? (N + 1) / 2 + 1 : 0;

  auto factored_ok = [&] {
    if (!attack.local()) return false;
    if (p1_family && !attack.backward_trivial()) return false;
    return true;
  };
  auto joint_ok = [&] {
    return kind != ProtocolKind::Mock && attack.joint() &&
           detail::joint_fits(attack.joint_probe_dim(N), N, reg_len, params.max_total_dim);
  };
  auto sampler_ok = [&] { return p1_family && attack.counter_sampler(); };

  switch (params.engine) {
    case Engine::Factored:
      if (!factored_ok())
        throw config_error("attack " + attack.name() + " cannot run round-locally on " +
                           to_string(kind));
      return Engine::Factored;
    case Engine::Joint:
      if (kind == ProtocolKind::Mock)
        throw config_error("the mock protocol runs round-by-round only");
      if (!attack.joint())
        throw config_error("attack " + attack.name() + " has no whole-register form");
      return Engine::Joint;
    case Engine::Sampler:
      if (!sampler_ok())
        throw config_error("no classical sampling path for attack " + attack.name() + " on " +
                           to_string(kind));
      return Engine::Sampler;
    case Engine::Auto:
      if (factored_ok()) return Engine::Factored;
      if (joint_ok()) return Engine::Joint;
      if (sampler_ok()) return Engine::Sampler;
      throw config_error("no engine can run attack " + attack.name() + " on " + to_string(kind) +
                         " at " + std::to_string(N) + " rounds within the memory budget");
  }
  throw config_error("unreachable engine state");
}

inline Outcome run_protocol(ProtocolKind kind, const ProtocolParams& params, const Attack& attack,
                            Rng& rng) {
  params.validate(kind);
  switch (resolve_engine(kind, params, attack)) {
    case Engine::Factored: return detail::run_factored(kind, params, attack, rng);
    case Engine::Joint: return detail::run_joint(kind, params, attack, rng);
    default: return detail::run_sampler(kind, params, attack, rng);
  }
}

inline Outcome run_mock(const ProtocolParams& params, const Attack& attack, Rng& rng) {
  return run_protocol(ProtocolKind::Mock, params, attack, rng);
}
inline Outcome run_protocol1(const ProtocolParams& params, const Attack& attack, Rng& rng) {
  return run_protocol(ProtocolKind::P1, params, attack, rng);
}
inline Outcome run_protocol1_prime(const ProtocolParams& params, const Attack& attack, Rng& rng) {
  return run_protocol(ProtocolKind::P1Prime, params, attack, rng);
}
inline Outcome run_protocol2(const ProtocolParams& params, const Attack& attack, Rng& rng) {
  return run_protocol(ProtocolKind::P2, params, attack, rng);
}

/**
 * Eve's reduced probe state after an undisturbed measure-resend run on the
 * computational input `input_bits`, with Bob measuring the rounds in `m`
 * (kept unitary via the register model, so no sampling is involved).
 */
inline DensityMatrix probe_state_for_input(const ProtocolParams& params, const Attack& attack,
                                           const std::vector<int>& input_bits,
                                           const std::vector<std::size_t>& m) {
  const std::size_t N = params.rounds();
  if (input_bits.size() != N)
    throw dimension_error("probe_state_for_input: need one bit per round");
  for (std::size_t k : m)
    if (k < 1 || k > N) throw dimension_error("probe_state_for_input: bad measured position");
  if (!attack.joint())
    throw config_error("attack " + attack.name() + " has no whole-register form");

  SubsystemLayout lay{std::max<std::size_t>(attack.joint_probe_dim(N), 1), N, m.size(),
                      params.max_total_dim};
  std::vector<BasisState> qubits(N);
  for (std::size_t k = 0; k < N; ++k)
    qubits[k] = input_bits[k] ? BasisState::Z1 : BasisState::Z0;
  StateVector st = prepare(lay, 0, qubits);

  auto session = attack.make_session(N);
  session->set_sequential_encoding(params.seq_encoding);
  std::vector<std::size_t> qubit_subs(N);
  for (std::size_t k = 0; k < N; ++k) qubit_subs[k] = k + 1;
  std::vector<bool> returns(N, true);

  session->joint_forward(st, qubit_subs);
  for (std::size_t i = 0; i < m.size(); ++i)
    apply_unitary(st, cnot_qubit_to_probe(), {N + 1 + i, m[i]});
  session->joint_backward_paired(st, qubit_subs, returns);
  return reduced_density(st, {0});
}

// --- serialization ------------------------------------------------------------

inline nlohmann::json transcript_to_json(const Transcript& tr) {
  nlohmann::json j;
  j["protocol"] = to_string(tr.protocol);
  j["num_rounds"] = tr.num_rounds;
  j["n"] = tr.n;
  auto bases = nlohmann::json::array();
  for (Basis b : tr.alice_bases) bases.push_back(b == Basis::Z ? "Z" : "X");
  j["alice_bases"] = std::move(bases);
  j["alice_bits"] = tr.alice_bits;
  auto actions = nlohmann::json::array();
  for (Action a : tr.bob_actions) actions.push_back(a == Action::Sift ? "SIFT" : "CTRL");
  j["bob_actions"] = std::move(actions);
  j["reflect_order_s"] = tr.reflect_order_s;
  j["measured_set_m"] = tr.measured_set_m;
  j["bob_measured_bits"] = tr.bob_measured_bits;
  auto ctrl = nlohmann::json::array();
  for (const CtrlResult& c : tr.ctrl_results)
    ctrl.push_back({{"position", c.position},
                    {"basis", c.basis == Basis::Z ? "Z" : "X"},
                    {"sent", c.sent},
                    {"received", c.received}});
  j["ctrl_results"] = std::move(ctrl);
  j["test_positions"] = tr.test_positions;
  j["test_values_bob"] = tr.test_values_bob;
  j["balanced_set_E"] = tr.balanced_set_E;
  j["v_positions"] = tr.v_positions;
  j["sift_string_v"] = tr.sift_string_v;
  j["info_index_q"] = tr.info_index_q;
  j["info_string_y"] = tr.info_string_y;
  j["abort"] = tr.abort ? nlohmann::json(to_string(*tr.abort)) : nlohmann::json(nullptr);
  return j;
}

}  // namespace sqkd
