// Acceptance battery: one line per criterion, nonzero exit if any fail.
#include <atomic>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <mutex>
#include <numbers>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "sqkd/harness.hpp"

using namespace sqkd;

namespace {

struct Check {
  bool ok = true;
  std::string detail;
  void require(bool cond, const std::string& why) {
    if (!cond) {
      ok = false;
      if (!detail.empty()) detail += "; ";
      detail += why;
    }
  }
  void note(const std::string& msg) {
    if (!detail.empty()) detail += "; ";
    detail += msg;
  }
};

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

template <typename F>
void parallel_trials(std::size_t count, F&& fn) {
  std::atomic<std::size_t> next{0};
  std::mutex err_mu;
  std::exception_ptr err;
  auto work = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= count) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mu);
        if (!err) err = std::current_exception();
        next.store(count);
        return;
      }
    }
  };
  std::size_t workers = std::thread::hardware_concurrency();
  if (workers == 0) workers = 1;
  workers = std::min(workers, count);
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  if (err) std::rethrow_exception(err);
}

std::uint64_t trial_seed(std::uint64_t master, std::size_t i) {
  return Rng::mix64(master ^ (0x9e3779b97f4a7c15ull * (static_cast<std::uint64_t>(i) + 1)));
}

ExperimentConfig experiment(ProtocolKind kind, std::size_t n, double delta, double epsilon,
                            const std::string& attack, std::size_t trials, std::uint64_t seed) {
  ExperimentConfig cfg;
  cfg.protocol = kind;
  cfg.params.n = n;
  cfg.params.delta = delta;
  cfg.params.epsilon = epsilon;
  cfg.attack.name = attack;
  cfg.trials = trials;
  cfg.master_seed = seed;
  return cfg;
}

// 1. The copy attack on the measure-only mock protocol is invisible and total.
Check criterion1() {
  Check c;
  Summary s = run_experiment(experiment(ProtocolKind::Mock, 4, 0.5, 0.25, "cnot_mirror", 1000, 41));
  c.require(s.z_ctrl_errs == 0 && s.x_ctrl_errs == 0, "ctrl errors nonzero");
  c.require(s.test_errs == 0, "test errors nonzero");
  c.require(s.sift_guessed > 0, "no sift guesses recorded");
  c.require(s.sift_accuracy == 1.0, "sift accuracy " + fmt(s.sift_accuracy) + " != 1");
  c.note("sifted bits guessed " + std::to_string(s.sift_guessed) + ", accuracy 1.0, errors 0");
  return c;
}

double max_pairwise_probe_distance(const Attack& attack, std::size_t N,
                                   const std::vector<std::size_t>& m) {
  ProtocolParams p;
  p.rounds_override = N;
  std::vector<DensityMatrix> probes;
  probes.reserve(std::size_t{1} << N);
  for (std::size_t bits = 0; bits < (std::size_t{1} << N); ++bits) {
    std::vector<int> input(N);
    for (std::size_t k = 0; k < N; ++k) input[k] = static_cast<int>((bits >> (N - 1 - k)) & 1u);
    probes.push_back(probe_state_for_input(p, attack, input, m));
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < probes.size(); ++i)
    for (std::size_t j = i + 1; j < probes.size(); ++j)
      worst = std::max(worst, trace_distance(probes[i], probes[j]));
  return worst;
}

// 2. Zero-error attacks on the measure-resend protocol learn nothing about the
//    computational inputs; the one-way copy probe disturbs the check basis.
Check criterion2() {
  Check c;
  NoAttack none;
  CnotMirrorAttack mirror;
  HammingWeightAttack hamming;

  double worst = 0.0;
  const std::vector<std::vector<std::size_t>> m_sets6 = {
      {}, {1, 2, 3, 4, 5, 6}, {1, 3, 5}, {2, 6}};
  const std::vector<const Attack*> zero_error = {&none, &mirror, &hamming};
  for (const Attack* atk : zero_error) {
    for (const auto& m : m_sets6)
      worst = std::max(worst, max_pairwise_probe_distance(*atk, 6, m));
    for (std::size_t mask = 0; mask < 8; ++mask) {
      std::vector<std::size_t> m;
      for (std::size_t k = 0; k < 3; ++k)
        if (mask & (std::size_t{1} << k)) m.push_back(k + 1);
      worst = std::max(worst, max_pairwise_probe_distance(*atk, 3, m));
    }
  }
  c.require(worst < 1e-9, "probe states depend on the input: max distance " + fmt(worst));

  Summary s = run_experiment(
      experiment(ProtocolKind::P2, 4, 0.5, 0.25, "cnot_forward_only", 250, 43));
  c.require(s.x_ctrl_bits >= 2000,
            "only " + std::to_string(s.x_ctrl_bits) + " check-basis control bits");
  const double rate = s.pooled_x_ctrl_rate();
  c.require(std::abs(rate - 0.5) <= 0.05, "one-way copy X-ctrl rate " + fmt(rate));
  c.note("max probe distance " + fmt(worst) + ", one-way copy X-ctrl rate " + fmt(rate) + " on " +
         std::to_string(s.x_ctrl_bits) + " bits");
  return c;
}

// 3. The weight-counter probe reads the sifted weight exactly, silently, and
//    without changing Bob's outcome distribution.
Check criterion3() {
  Check c;
  ProtocolParams p;
  p.n = 2;
  p.delta = 0.0625;  // 17 rounds: the full register state stays affordable
  HammingWeightAttack hamming;
  NoAttack none;
  const std::size_t trials = 1000;

  std::vector<Outcome> attacked(trials);
  parallel_trials(trials, [&](std::size_t i) {
    Rng rng(trial_seed(3001, i));
    attacked[i] = run_protocol1(p, hamming, rng);
  });
  std::vector<Outcome> baseline(trials);
  parallel_trials(trials, [&](std::size_t i) {
    Rng rng(trial_seed(3002, i));
    baseline[i] = run_protocol1(p, none, rng);
  });

  std::size_t bad_probe = 0, err_bits = 0;
  std::map<std::pair<std::size_t, long long>, std::array<std::uint64_t, 2>> cells;
  for (std::size_t which = 0; which < 2; ++which) {
    for (const Outcome& out : (which == 0 ? attacked : baseline)) {
      long long weight = 0;
      for (int b : out.transcript.bob_measured_bits) weight += b;
      if (which == 0) {
        err_bits += out.z_ctrl_err + out.x_ctrl_err + out.test_err;
        if (out.eve_record.probe_outcome != weight % 18) ++bad_probe;
      }
      ++cells[{out.transcript.bob_measured_bits.size(), weight}][which];
    }
  }
  c.require(err_bits == 0, std::to_string(err_bits) + " channel errors");
  c.require(bad_probe == 0, std::to_string(bad_probe) + " trials with probe != sifted weight");

  std::vector<std::uint64_t> obs_a, obs_b;
  for (const auto& [key, counts] : cells) {
    obs_a.push_back(counts[0]);
    obs_b.push_back(counts[1]);
  }
  const double pval = chi_square_two_sample(obs_a, obs_b).p_value;
  c.require(pval > 0.001, "Bob outcome distribution shifted (p " + fmt(pval) + ")");
  c.note("probe = sifted weight in 1000/1000 register-state runs, errors 0, distribution p " +
         fmt(pval));
  return c;
}

// 4. Weight leakage: closed form == exhaustive mutual information, with the
//    stated ceiling and large-n limit.
Check criterion4() {
  Check c;
  c.require(leak_bound(4.0) <= 0.293, "leak ceiling " + fmt(leak_bound(4.0)));
  double worst = 0.0;
  for (std::size_t n = 1; n <= 4; ++n)
    worst = std::max(worst, std::abs(leak_exact(n, 4) - leak_exhaustive_mi(n, 4)));
  c.require(worst <= 1e-9, "closed form vs enumeration differ by " + fmt(worst));
  const double tail = std::abs(leak_exact(1000, 4) - 0.292481);
  c.require(tail <= 1e-3, "large-n leak off by " + fmt(tail));
  c.note("ceiling " + fmt(leak_bound(4.0)) + ", enum gap " + fmt(worst) + ", large-n gap " +
         fmt(tail));
  return c;
}

// 5. Balanced-set entropy: the gap to n bits obeys the exponential tail bound
//    wherever the bound applies, and the central binomial matches Stirling.
Check criterion5() {
  Check c;
  double worst = -1.0;
  std::size_t checked = 0;
  for (double eps : {0.3, 0.5, 1.0}) {
    const double n_min = std::log(16.0) / (eps * eps);
    for (std::size_t n = 2; n <= 200; n += 2) {
      if (static_cast<double>(n) <= n_min) continue;
      const double gap = static_cast<double>(n) - info_set_entropy(n, eps);
      worst = std::max(worst, gap - entropy_gap_bound(n, eps));
      ++checked;
    }
  }
  c.require(checked > 200, "only " + std::to_string(checked) + " (n, eps) points in domain");
  c.require(worst <= 0.0, "entropy gap exceeds its bound by " + fmt(worst));
  const double stirling = std::abs(log2_mpz(binomial_z(1024, 512)) - entropy_eps0_asymptote(1024));
  c.require(stirling < 0.01, "central binomial vs asymptote " + fmt(stirling));
  c.note(std::to_string(checked) + " points, worst slack " + fmt(-worst) + ", Stirling gap " +
         fmt(stirling));
  return c;
}

// 6. The binomial-entropy quadrature approximation is tight at n=20, p=1/2.
Check criterion6() {
  Check c;
  const double diff = std::abs(binomial_entropy_exact(20, 0.5) - binomial_entropy_approx(20, 0.5));
  c.require(diff < 3.4e-4, "entropy approximation off by " + fmt(diff));
  c.note("exact vs approximation differ by " + fmt(diff));
  return c;
}

// 7. Selection combinatorics: exhaustive recounts and exact rational identities
//    all hold, with nothing silently skipped at the default budget.
Check criterion7() {
  Check c;
  VerifyResult v = run_verify(VerifyScope::Combinatorics);
  c.require(v.all_satisfied, "a combinatorial identity failed");
  std::size_t ran = 0;
  for (const BoundReport& r : v.reports) {
    c.require(!r.skipped, r.name + "(" + r.params + ") skipped");
    ++ran;
  }
  c.note(std::to_string(ran) + " exhaustive checks, all exact");
  return c;
}

// 8. Abort probability stays under its closed-form bound, and the underlying
//    concentration inequalities hold empirically.
Check criterion8() {
  Check c;
  Summary s = run_experiment(experiment(ProtocolKind::P1Prime, 16, 0.5, 0.1, "no_attack", 10000, 47));
  const double bound = abort_bound(16, 0.5, 0.3, 0.1);
  const double sigma = std::sqrt(bound * (1.0 - bound) / 10000.0);
  c.require(s.abort_rate <= bound + 3.0 * sigma,
            "abort rate " + fmt(s.abort_rate) + " above bound " + fmt(bound));
  VerifyResult v = run_verify(VerifyScope::Hoeffding);
  c.require(v.all_satisfied, "a concentration bound failed empirically");
  c.note("abort rate " + fmt(s.abort_rate) + " <= bound " + fmt(bound) + ", tails within bounds");
  return c;
}

// 9. Model equivalences: deferred-register Bob matches immediate-measure Bob in
//    distribution, and the sequential block encoding reproduces the parallel
//    run bit for bit.
Check criterion9() {
  Check c;
  const std::size_t trials = 10000;
  auto run_model = [&](BobModel model, std::uint64_t master) {
    ProtocolParams p;
    p.n = 2;
    p.delta = 0.0625;
    p.bob_model = model;
    RotationProbeAttack probe(std::numbers::pi / 4.0);
    std::vector<std::uint64_t> keys(trials);
    parallel_trials(trials, [&](std::size_t i) {
      Rng rng(trial_seed(master, i));
      Outcome out = run_protocol2(p, probe, rng);
      keys[i] = (out.status == RunStatus::Completed ? 1u : 0u) * 10000u +
                static_cast<std::uint64_t>(out.x_ctrl_err) * 100u +
                static_cast<std::uint64_t>(out.x_ctrl_count);
    });
    return keys;
  };
  const auto ka = run_model(BobModel::Immediate, 9001);
  const auto kb = run_model(BobModel::Register, 9002);
  std::map<std::uint64_t, std::array<std::uint64_t, 2>> cells;
  for (std::uint64_t k : ka) ++cells[k][0];
  for (std::uint64_t k : kb) ++cells[k][1];
  std::vector<std::uint64_t> obs_a, obs_b;
  for (const auto& [key, counts] : cells) {
    obs_a.push_back(counts[0]);
    obs_b.push_back(counts[1]);
  }
  const double pval = chi_square_two_sample(obs_a, obs_b).p_value;
  c.require(pval > 0.001, "Bob models diverge (p " + fmt(pval) + ")");

  CnotMirrorAttack mirror;
  std::size_t agree = 0;
  for (std::uint64_t seed = 1; seed <= 200; ++seed) {
    ProtocolParams p;
    p.n = 2;
    p.delta = 0.5;
    p.rounds_override = 4;
    p.engine = Engine::Joint;
    p.p_ctrl_threshold = 1.0;
    p.p_test_threshold = 1.0;

    p.schedule = Schedule::Parallel;
    Rng r1(seed);
    Outcome a = run_protocol2(p, mirror, r1);

    p.schedule = Schedule::Sequential;
    p.seq_encoding = SeqEncoding::Block;
    Rng r2(seed);
    Outcome b = run_protocol2(p, mirror, r2);
    if (transcript_to_json(a.transcript) == transcript_to_json(b.transcript) &&
        a.eve_record.guesses == b.eve_record.guesses)
      ++agree;
  }
  c.require(agree == 200, std::to_string(200 - agree) + " schedule-encoding mismatches");
  c.note("Bob models agree (p " + fmt(pval) + "), block encoding exact in 200/200 runs");
  return c;
}

// 10. Honest runs: every protocol completes cleanly with matching keys and the
//     expected round-category split.
Check criterion10() {
  Check c;
  for (ProtocolKind kind :
       {ProtocolKind::Mock, ProtocolKind::P1, ProtocolKind::P1Prime, ProtocolKind::P2}) {
    Summary s = run_experiment(
        experiment(kind, 8, 2.0, 0.25, "no_attack", 400, 51 + static_cast<std::uint64_t>(kind)));
    const std::string tag = to_string(kind);
    c.require(s.z_ctrl_errs == 0 && s.x_ctrl_errs == 0 && s.test_errs == 0, tag + ": errors");
    c.require(s.completed == s.trials, tag + ": " + std::to_string(s.trials - s.completed) +
                                           " aborts at 192 rounds");
    c.require(s.key_match_rate == 1.0, tag + ": key mismatch");
    const double expect = static_cast<double>(s.total_rounds) / 4.0;
    const double sigma = std::sqrt(static_cast<double>(s.total_rounds) * 3.0 / 16.0);
    for (std::size_t cat : {s.cat_z_sift, s.cat_z_ctrl, s.cat_x_sift, s.cat_x_ctrl})
      c.require(std::abs(static_cast<double>(cat) - expect) <= 3.0 * sigma,
                tag + ": category count " + std::to_string(cat) + " vs " + fmt(expect));
  }
  c.note("4 protocols x 400 trials, zero errors, all keys match, categories within 3 sigma");
  return c;
}

}  // namespace

int main() {
  struct Entry {
    const char* label;
    std::function<Check()> fn;
  };
  const std::vector<Entry> entries = {
      {"copy attack on the measure-only protocol is invisible and total", criterion1},
      {"zero-error probes carry no input information; one-way copy is loud", criterion2},
      {"weight-counter probe reads the sifted weight without a trace", criterion3},
      {"weight-leakage closed form matches exhaustive mutual information", criterion4},
      {"balanced-set entropy gap obeys its exponential bound", criterion5},
      {"binomial entropy approximation is within stated tolerance", criterion6},
      {"selection combinatorics verified by exhaustive enumeration", criterion7},
      {"abort probability and concentration bounds hold empirically", criterion8},
      {"register model and sequential encoding reproduce reference runs", criterion9},
      {"honest runs are clean with balanced round categories", criterion10},
  };

  bool all_ok = true;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    Check c;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      c = entries[i].fn();
    } catch (const std::exception& e) {
      c.ok = false;
      c.detail = std::string("exception: ") + e.what();
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("[%s] criterion %zu: %s (%s; %.1fs)\n", c.ok ? "PASS" : "FAIL", i + 1,
                entries[i].label, c.detail.c_str(), secs);
    std::fflush(stdout);
    all_ok = all_ok && c.ok;
  }
  std::printf("%s\n", all_ok ? "acceptance: all criteria satisfied"
                             : "acceptance: at least one criterion failed");
  return all_ok ? 0 : 1;
}
