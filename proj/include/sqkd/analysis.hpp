#pragma once

#include <gmpxx.h>

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "sqkd/errors.hpp"
#include "sqkd/rng.hpp"
#include "sqkd/stats.hpp"

namespace sqkd {

inline constexpr std::size_t kDefaultEnumerationCap = 10'000'000;

// ---------------------------------------------------------------------------
// Exact integer combinatorics (GMP). All closed forms below have independent
// exhaustive counterparts in the verification battery and the test suite.
// ---------------------------------------------------------------------------

inline mpz_class factorial_z(unsigned long n) {
  mpz_class r;
  mpz_fac_ui(r.get_mpz_t(), n);
  return r;
}

inline mpz_class binomial_z(unsigned long n, unsigned long k) {
  mpz_class r;
  mpz_bin_uiui(r.get_mpz_t(), n, k);  // 0 when k > n
  return r;
}

/** Number of ordered k-tuples of distinct elements from a set of size e. */
inline mpz_class perm_count(unsigned long e, unsigned long k) {
  if (k > e) throw domain_error("perm_count: k > set size");
  mpz_class r = 1;
  for (unsigned long i = 0; i < k; ++i) r *= static_cast<unsigned long>(e - i);
  return r;
}

/**
 * Number of ordered index tuples q (n slots, distinct indices from a balanced
 * pool of h zeros and h ones) that realize a target string of weight wy:
 * h!^2 / ((h-n+wy)! (h-wy)!). Zero when the target is unrealizable.
 */
inline mpz_class q_count(unsigned long h, unsigned long n, unsigned long wy) {
  if (n > 2 * h) throw domain_error("q_count: n > 2h");
  if (wy > n) throw domain_error("q_count: weight > n");
  if (wy > h || n - wy > h) return 0;
  return perm_count(h, wy) * perm_count(h, n - wy);
}

/** Number of balanced pool strings consistent with a fixed placement: C(2h-n, h-wy). */
inline mpz_class x_count(unsigned long h, unsigned long n, unsigned long wy) {
  if (n > 2 * h) throw domain_error("x_count: n > 2h");
  if (wy > n) throw domain_error("x_count: weight > n");
  if (wy > h || n - wy > h) return 0;
  return binomial_z(2 * h - n, h - wy);
}

/** Exact conditional probability of any given balanced pool string: h!^2/(2h)!. */
inline mpq_class p_x_given_selection(unsigned long h) {
  mpq_class r(factorial_z(h) * factorial_z(h), factorial_z(2 * h));
  r.canonicalize();
  return r;
}

/** Exact conditional probability of any given index tuple: (2h-n)!/(2h)!. */
inline mpq_class p_q_given_y(unsigned long h, unsigned long n) {
  if (n > 2 * h) throw domain_error("p_q_given_y: n > 2h");
  mpq_class r(factorial_z(2 * h - n), factorial_z(2 * h));
  r.canonicalize();
  return r;
}

inline double log2_mpz(const mpz_class& z) {
  if (z <= 0) throw domain_error("log2_mpz: nonpositive argument");
  signed long exp2 = 0;
  double d = mpz_get_d_2exp(&exp2, z.get_mpz_t());
  return std::log2(d) + static_cast<double>(exp2);
}

// ---------------------------------------------------------------------------
// Balanced info-string sets ("within-window" strings).
// ---------------------------------------------------------------------------

/**
 * True when an n-bit string of weight w lies in the balanced window
 * |w/n - 1/2| <= epsilon/2. A 1e-9 slack absorbs binary representation noise
 * of epsilon at exact integer boundaries.
 */
inline bool in_info_window(std::size_t n, double epsilon, std::size_t w) {
  if (n == 0) throw domain_error("in_info_window: n = 0");
  if (w > n) throw domain_error("in_info_window: w > n");
  if (epsilon < 0.0) throw domain_error("in_info_window: negative epsilon");
  const double lhs = std::abs(2.0 * static_cast<double>(w) - static_cast<double>(n));
  return lhs <= epsilon * static_cast<double>(n) + 1e-9;
}

/** Exact size of the balanced window set. */
inline mpz_class info_set_size(std::size_t n, double epsilon) {
  mpz_class total = 0;
  for (std::size_t w = 0; w <= n; ++w)
    if (in_info_window(n, epsilon, w)) total += binomial_z(n, w);
  return total;
}

/** lg |window set|, exact count then one log. */
inline double info_set_entropy(std::size_t n, double epsilon) {
  mpz_class size = info_set_size(n, epsilon);
  if (size == 0) throw domain_error("info_set_entropy: empty window");
  return log2_mpz(size);
}

/**
 * Closed-form ceiling on n - lg|window set|: (3/ln2) exp(-epsilon^2 n / 2).
 * Only valid for n > ln(16)/epsilon^2; outside that it is a domain error.
 */
inline double entropy_gap_bound(std::size_t n, double epsilon) {
  if (epsilon <= 0.0) throw domain_error("entropy_gap_bound: epsilon must be positive");
  const double n_min = std::log(16.0) / (epsilon * epsilon);
  if (static_cast<double>(n) <= n_min)
    throw domain_error("entropy_gap_bound: n <= ln(16)/eps^2 = " + std::to_string(n_min));
  return (3.0 / std::log(2.0)) * std::exp(-epsilon * epsilon * static_cast<double>(n) / 2.0);
}

/** Large-n closed form of lg C(n, n/2): n - lg(n)/2 - (lg(pi) - 1)/2. Even n only. */
inline double entropy_eps0_asymptote(std::size_t n) {
  if (n == 0 || n % 2 != 0) throw domain_error("entropy_eps0_asymptote: n must be even > 0");
  return static_cast<double>(n) - 0.5 * std::log2(static_cast<double>(n)) -
         0.5 * (std::log2(std::numbers::pi) - 1.0);
}

// ---------------------------------------------------------------------------
// Entropies and mutual information.
// ---------------------------------------------------------------------------

/** Shannon entropy in bits of an explicit distribution (must sum to 1 +- 1e-9). */
inline double entropy_bits(const std::vector<double>& p) {
  double sum = 0.0, h = 0.0;
  for (double v : p) {
    if (v < -1e-12) throw domain_error("entropy_bits: negative probability");
    sum += v;
    if (v > 0.0) h -= v * std::log2(v);
  }
  if (std::abs(sum - 1.0) > 1e-9) throw domain_error("entropy_bits: probabilities sum to " + std::to_string(sum));
  return h;
}

/** Exact-summation entropy of Binomial(n, p), evaluated in log space. */
inline double binomial_entropy_exact(std::size_t n, double p) {
  if (p < 0.0 || p > 1.0) throw domain_error("binomial_entropy_exact: p outside [0,1]");
  if (p == 0.0 || p == 1.0 || n == 0) return 0.0;
  const double lp = std::log(p), lq = std::log1p(-p);
  double h = 0.0;
  for (std::size_t k = 0; k <= n; ++k) {
    const double lpmf = std::lgamma(static_cast<double>(n) + 1.0) -
                        std::lgamma(static_cast<double>(k) + 1.0) -
                        std::lgamma(static_cast<double>(n - k) + 1.0) +
                        static_cast<double>(k) * lp + static_cast<double>(n - k) * lq;
    h -= std::exp(lpmf) * (lpmf / std::log(2.0));
  }
  return h;
}

/** Gaussian-limit approximation lg sqrt(2 pi e p(1-p) n) of the same entropy. */
inline double binomial_entropy_approx(std::size_t n, double p) {
  if (n == 0 || p <= 0.0 || p >= 1.0)
    throw domain_error("binomial_entropy_approx: need n >= 1, p in (0,1)");
  return 0.5 * std::log2(2.0 * std::numbers::pi * std::numbers::e * p * (1.0 - p) *
                         static_cast<double>(n));
}

/** Closed-form ceiling on the weight-counter leak: (1/2) lg(1 + 1/(k-2)). */
inline double leak_bound(double k) {
  if (k <= 2.0) throw domain_error("leak_bound: k must exceed 2");
  return 0.5 * std::log2(1.0 + 1.0 / (k - 2.0));
}

/** Exact leak at finite size: H(Bin(kn-n,1/2)) - H(Bin(kn-2n,1/2)). */
inline double leak_exact(std::size_t n, std::size_t k) {
  if (n == 0) throw domain_error("leak_exact: n = 0");
  if (k < 2) throw domain_error("leak_exact: k < 2");
  return binomial_entropy_exact(k * n - n, 0.5) - binomial_entropy_exact(k * n - 2 * n, 0.5);
}

// ---------------------------------------------------------------------------
// Exact joint distributions (rational probabilities).
// ---------------------------------------------------------------------------

/** Two-variable discrete joint with exact rational cell probabilities. */
class JointDistribution {
 public:
  JointDistribution(std::size_t rows, std::size_t cols, std::vector<mpq_class> cells)
      : rows_(rows), cols_(cols), p_(std::move(cells)) {
    if (rows_ == 0 || cols_ == 0 || p_.size() != rows_ * cols_)
      throw dimension_error("joint: bad shape");
    mpq_class sum = 0;
    for (const mpq_class& c : p_) {
      if (c < 0) throw domain_error("joint: negative cell");
      sum += c;
    }
    if (sum != 1) throw domain_error("joint: cells do not sum to 1 exactly");
  }

  static JointDistribution from_counts(std::size_t rows, std::size_t cols,
                                       const std::vector<std::uint64_t>& counts) {
    if (counts.size() != rows * cols) throw dimension_error("joint: counts shape");
    mpz_class total = 0;
    for (std::uint64_t c : counts) total += mpz_class(static_cast<unsigned long>(c));
    if (total == 0) throw domain_error("joint: empty counts");
    std::vector<mpq_class> cells(counts.size());
    for (std::size_t i = 0; i < counts.size(); ++i) {
      cells[i] = mpq_class(mpz_class(static_cast<unsigned long>(counts[i])), total);
      cells[i].canonicalize();
    }
    return JointDistribution(rows, cols, std::move(cells));
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  const mpq_class& at(std::size_t r, std::size_t c) const { return p_[r * cols_ + c]; }

  mpq_class row_marginal(std::size_t r) const {
    mpq_class s = 0;
    for (std::size_t c = 0; c < cols_; ++c) s += at(r, c);
    return s;
  }

  mpq_class col_marginal(std::size_t c) const {
    mpq_class s = 0;
    for (std::size_t r = 0; r < rows_; ++r) s += at(r, c);
    return s;
  }

  /** Exact independence: p(r,c) == p(r) p(c) for every cell, in rationals. */
  bool exactly_independent() const {
    std::vector<mpq_class> rm(rows_), cm(cols_);
    for (std::size_t r = 0; r < rows_; ++r) rm[r] = row_marginal(r);
    for (std::size_t c = 0; c < cols_; ++c) cm[c] = col_marginal(c);
    for (std::size_t r = 0; r < rows_; ++r)
      for (std::size_t c = 0; c < cols_; ++c)
        if (at(r, c) != rm[r] * cm[c]) return false;
    return true;
  }

 private:
  std::size_t rows_, cols_;
  std::vector<mpq_class> p_;
};

/** I(R;C) in bits. Probabilities are exact; only the logs are floating point. */
inline double mutual_information(const JointDistribution& j) {
  // Exact independence short-circuits to exactly 0 — no rounding residue.
  if (j.exactly_independent()) return 0.0;
  std::vector<double> rm(j.rows()), cm(j.cols());
  for (std::size_t r = 0; r < j.rows(); ++r) rm[r] = j.row_marginal(r).get_d();
  for (std::size_t c = 0; c < j.cols(); ++c) cm[c] = j.col_marginal(c).get_d();
  double mi = 0.0;
  for (std::size_t r = 0; r < j.rows(); ++r)
    for (std::size_t c = 0; c < j.cols(); ++c) {
      const double p = j.at(r, c).get_d();
      if (p > 0.0) mi += p * std::log2(p / (rm[r] * cm[c]));
    }
  return mi;
}

/**
 * Brute-force counterpart of leak_exact: enumerate every bit string of the
 * kn-n non-checked positions, tabulate (first-n-bits value, total weight),
 * and measure the mutual information of that exact joint.
 */
inline double leak_exhaustive_mi(std::size_t n, std::size_t k,
                                 std::size_t cap = kDefaultEnumerationCap) {
  if (n == 0 || k < 2) throw domain_error("leak_exhaustive_mi: need n >= 1, k >= 2");
  const std::size_t m = k * n - n;
  if (m >= 63 || (std::size_t{1} << m) > cap)
    throw cap_error("leak_exhaustive_mi: 2^" + std::to_string(m) + " strings exceed cap");
  const std::size_t rows = std::size_t{1} << n;
  const std::size_t cols = m + 1;
  std::vector<std::uint64_t> counts(rows * cols, 0);
  const std::uint64_t strings = std::uint64_t{1} << m;
  for (std::uint64_t s = 0; s < strings; ++s) {
    const std::size_t x = static_cast<std::size_t>(s >> (m - n));
    const std::size_t w = static_cast<std::size_t>(__builtin_popcountll(s));
    ++counts[x * cols + w];
  }
  return mutual_information(JointDistribution::from_counts(rows, cols, counts));
}

// ---------------------------------------------------------------------------
// Concentration bounds.
// ---------------------------------------------------------------------------

/** The two exponents of the completion-failure bound. */
inline std::pair<double, double> abort_bound_exponents(double delta, double delta_prime,
                                                       double epsilon) {
  if (!(epsilon >= 0.0 && epsilon < delta_prime && delta_prime < delta))
    throw domain_error("abort bound: need 0 <= epsilon < delta_prime < delta");
  const double k1 = (delta_prime - delta) * (delta_prime - delta) / (8.0 * (1.0 + delta) * (1.0 + delta));
  const double k2 = (2.0 * delta_prime - epsilon) * (2.0 * delta_prime - epsilon) /
                    (2.0 * (1.0 + 2.0 * delta_prime) * (1.0 + 2.0 * delta_prime));
  return {k1, k2};
}

/**
 * Upper bound on the probability that an honest run fails to complete:
 * e^{-k1 n} + 2 e^{-k2 n} - 2 e^{-(k1+k2) n}.
 */
inline double abort_bound(std::size_t n, double delta, double delta_prime, double epsilon) {
  if (n == 0) throw domain_error("abort_bound: n = 0");
  auto [k1, k2] = abort_bound_exponents(delta, delta_prime, epsilon);
  const double a = std::exp(-k1 * static_cast<double>(n));
  const double b = std::exp(-k2 * static_cast<double>(n));
  return a + 2.0 * b - 2.0 * a * b;
}

/** Tail bound on a mean of n i.i.d. [0,1] samples deviating by kappa. */
inline double hoeffding_bound(double kappa, std::size_t n, bool two_sided) {
  if (kappa <= 0.0 || n == 0) throw domain_error("hoeffding_bound: need kappa > 0, n >= 1");
  const double one = std::exp(-2.0 * kappa * kappa * static_cast<double>(n));
  return two_sided ? std::min(1.0, 2.0 * one) : one;
}

// ---------------------------------------------------------------------------
// Index-tuple independence verification (exact rationals, full enumeration).
// ---------------------------------------------------------------------------

struct QIndependenceReport {
  bool independent = false;       // exact rational independence of (y, q)
  bool q_rate_matches = false;    // every p(q|y) equals (2h-n)!/(2h)!
  bool x_rate_matches = false;    // every p(x|y) equals h!^2/(2h)!
  double mi_bits = -1.0;          // exactly 0 when independent
  std::size_t n_x = 0, n_y = 0, n_q = 0;
};

/**
 * Enumerates the full (pool string x, info string y, index tuple q) model for
 * a balanced pool of h zeros and h ones and checks, in exact rationals, that
 * the announced tuple q carries no information about y:
 *   p(q | y) = (2h-n)!/(2h)!  for every q and y, hence I(Y;Q) = 0.
 */
inline QIndependenceReport verify_q_independence(std::size_t h, std::size_t n, double epsilon,
                                                 std::size_t cap = kDefaultEnumerationCap) {
  if (h == 0 || n == 0 || n > 2 * h) throw domain_error("verify_q_independence: bad h/n");
  const std::size_t e = 2 * h;

  // Pool strings of weight h over e positions.
  std::vector<std::uint32_t> xs;
  for (std::uint32_t s = 0; s < (1u << e); ++s)
    if (static_cast<std::size_t>(__builtin_popcount(s)) == h) xs.push_back(s);

  // Window info strings.
  std::vector<std::uint32_t> ys;
  for (std::uint32_t s = 0; s < (1u << n); ++s)
    if (in_info_window(n, epsilon, static_cast<std::size_t>(__builtin_popcount(s)))) ys.push_back(s);
  if (ys.empty()) throw domain_error("verify_q_independence: empty window");

  // Ordered index tuples over the pool.
  std::vector<std::vector<std::size_t>> qs;
  {
    std::vector<std::size_t> cur;
    std::vector<bool> used(e, false);
    std::function<void()> rec = [&]() {
      if (cur.size() == n) {
        qs.push_back(cur);
        return;
      }
      for (std::size_t i = 0; i < e; ++i) {
        if (used[i]) continue;
        used[i] = true;
        cur.push_back(i);
        rec();
        cur.pop_back();
        used[i] = false;
      }
    };
    rec();
  }

  const std::size_t work = xs.size() * ys.size() * qs.size();
  if (work > cap)
    throw cap_error("verify_q_independence: " + std::to_string(work) +
                    " (x,y,q) triples exceed cap " + std::to_string(cap));

  QIndependenceReport rep;
  rep.n_x = xs.size();
  rep.n_y = ys.size();
  rep.n_q = qs.size();

  const mpq_class px(1, static_cast<unsigned long>(xs.size()));
  const mpq_class py(1, static_cast<unsigned long>(ys.size()));
  std::vector<mpq_class> joint_yq(ys.size() * qs.size(), mpq_class(0));
  std::vector<mpq_class> joint_xy(xs.size() * ys.size(), mpq_class(0));

  for (std::size_t xi = 0; xi < xs.size(); ++xi) {
    for (std::size_t yi = 0; yi < ys.size(); ++yi) {
      const std::size_t wy = static_cast<std::size_t>(__builtin_popcount(ys[yi]));
      const mpz_class nq = q_count(h, n, wy);
      if (nq == 0) continue;  // unrealizable pairing; never happens for window y
      mpq_class mass = px * py / mpq_class(nq);
      for (std::size_t qi = 0; qi < qs.size(); ++qi) {
        // Does tuple q read string y out of pool x?
        bool match = true;
        for (std::size_t slot = 0; slot < n && match; ++slot) {
          const int xbit = (xs[xi] >> (e - 1 - qs[qi][slot])) & 1;
          const int ybit = (ys[yi] >> (n - 1 - slot)) & 1;
          match = xbit == ybit;
        }
        if (match) {
          joint_yq[yi * qs.size() + qi] += mass;
          joint_xy[xi * ys.size() + yi] += mass;
        }
      }
    }
  }

  const mpq_class expected_q = p_q_given_y(h, n);
  const mpq_class expected_x = p_x_given_selection(h);
  rep.q_rate_matches = true;
  for (std::size_t yi = 0; yi < ys.size(); ++yi)
    for (std::size_t qi = 0; qi < qs.size(); ++qi)
      if (joint_yq[yi * qs.size() + qi] != py * expected_q) rep.q_rate_matches = false;
  rep.x_rate_matches = true;
  for (std::size_t xi = 0; xi < xs.size(); ++xi)
    for (std::size_t yi = 0; yi < ys.size(); ++yi)
      if (joint_xy[xi * ys.size() + yi] != py * expected_x) rep.x_rate_matches = false;

  JointDistribution j(ys.size(), qs.size(), std::move(joint_yq));
  rep.independent = j.exactly_independent();
  rep.mi_bits = mutual_information(j);  // exactly 0.0 when independent
  return rep;
}

// ---------------------------------------------------------------------------
// Empirical mutual information.
// ---------------------------------------------------------------------------

struct MiEstimate {
  double plugin_bits = 0.0;
  double corrected_bits = 0.0;  // Miller-Madow
  double ci_lo = 0.0, ci_hi = 0.0;
  std::size_t samples = 0;
};

namespace detail {

inline double plugin_mi_bits(const std::vector<std::pair<std::uint64_t, std::uint64_t>>& s) {
  std::map<std::uint64_t, std::uint64_t> ca, cb;
  std::map<std::pair<std::uint64_t, std::uint64_t>, std::uint64_t> cab;
  for (const auto& [a, b] : s) {
    ++ca[a];
    ++cb[b];
    ++cab[{a, b}];
  }
  // Integer-count ratios keep structural zeros exact: a constant marginal
  // gives c_ab * m == c_a * c_b for every cell.
  const double m = static_cast<double>(s.size());
  double mi = 0.0;
  for (const auto& [k, c] : cab) {
    const double ratio = (static_cast<double>(c) * m) /
                         (static_cast<double>(ca[k.first]) * static_cast<double>(cb[k.second]));
    mi += (static_cast<double>(c) / m) * std::log2(ratio);
  }
  return mi;
}

inline double miller_madow_mi_bits(const std::vector<std::pair<std::uint64_t, std::uint64_t>>& s) {
  std::map<std::uint64_t, int> ka, kb;
  std::map<std::pair<std::uint64_t, std::uint64_t>, int> kab;
  for (const auto& [a, b] : s) {
    ka[a] = 1;
    kb[b] = 1;
    kab[{a, b}] = 1;
  }
  const double m = static_cast<double>(s.size());
  const double corr = (static_cast<double>(ka.size()) - 1.0 + static_cast<double>(kb.size()) -
                       1.0 - (static_cast<double>(kab.size()) - 1.0)) /
                      (2.0 * m * std::log(2.0));
  return plugin_mi_bits(s) + corr;
}

}  // namespace detail

/**
 * Plug-in MI estimate over observed (a, b) pairs with Miller-Madow bias
 * correction and a seeded percentile-bootstrap 99% CI (1000 resamples).
 */
inline MiEstimate empirical_mi(const std::vector<std::pair<std::uint64_t, std::uint64_t>>& samples,
                               Rng& rng, std::size_t n_resamples = 1000) {
  if (samples.size() < 2) throw domain_error("empirical_mi: need at least 2 samples");
  MiEstimate est;
  est.samples = samples.size();
  est.plugin_bits = detail::plugin_mi_bits(samples);
  est.corrected_bits = detail::miller_madow_mi_bits(samples);
  ConfidenceInterval ci = bootstrap_ci(
      samples, [](const auto& re) { return detail::miller_madow_mi_bits(re); }, rng, n_resamples);
  est.ci_lo = ci.lo;
  est.ci_hi = ci.hi;
  return est;
}

// ---------------------------------------------------------------------------
// Reporting.
// ---------------------------------------------------------------------------

struct BoundReport {
  std::string name;
  std::string params;
  double computed = 0.0;
  double bound = 0.0;
  std::string relation;  // "<=", ">=", or "==" (with tolerance)
  double tolerance = 0.0;
  bool satisfied = false;
  bool skipped = false;  // enumeration cap exceeded; not a failure
  std::string note;
};

inline BoundReport make_report(std::string name, std::string params, double computed,
                               std::string relation, double bound, double tolerance = 0.0) {
  BoundReport r;
  r.name = std::move(name);
  r.params = std::move(params);
  r.computed = computed;
  r.bound = bound;
  r.relation = std::move(relation);
  r.tolerance = tolerance;
  if (r.relation == "<=")
    r.satisfied = computed <= bound + tolerance;
  else if (r.relation == ">=")
    r.satisfied = computed >= bound - tolerance;
  else if (r.relation == "==")
    r.satisfied = std::abs(computed - bound) <= tolerance;
  else
    throw config_error("make_report: unknown relation " + r.relation);
  return r;
}

}  // namespace sqkd
