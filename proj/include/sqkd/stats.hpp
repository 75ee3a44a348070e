#pragma once

#include <algorithm>
#include <boost/math/special_functions/gamma.hpp>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "sqkd/errors.hpp"
#include "sqkd/rng.hpp"

namespace sqkd {

struct ConfidenceInterval {
  double lo = 0.0;
  double hi = 0.0;
};

// z for a two-sided 99% interval.
inline constexpr double kZ99 = 2.5758293035489004;

/** Wilson score interval for a binomial proportion. */
inline ConfidenceInterval wilson_ci(std::uint64_t successes, std::uint64_t trials,
                                    double z = kZ99) {
  if (trials == 0) return {0.0, 1.0};
  if (successes > trials) throw domain_error("wilson_ci: successes > trials");
  const double n = static_cast<double>(trials);
  const double p = static_cast<double>(successes) / n;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / n;
  const double center = (p + z2 / (2.0 * n)) / denom;
  const double half = z * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / denom;
  return {std::max(0.0, center - half), std::min(1.0, center + half)};
}

/** Survival function of the chi-square distribution with `df` degrees of freedom. */
inline double chi_square_sf(double x, double df) {
  if (x < 0.0 || df <= 0.0) throw domain_error("chi_square_sf: bad arguments");
  return boost::math::gamma_q(df / 2.0, x / 2.0);
}

struct ChiSquareResult {
  double statistic = 0.0;
  double df = 0.0;
  double p_value = 1.0;
  std::size_t pooled_cells = 0;  // cells after deterministic rare-cell pooling
};

/**
 * Goodness-of-fit test of observed counts against expected probabilities.
 * Cells whose expected count falls below `min_expected` are pooled (in index
 * order) into a single trailing bucket so the chi-square approximation holds.
 */
inline ChiSquareResult chi_square_gof(const std::vector<std::uint64_t>& observed,
                                      const std::vector<double>& expected_probs,
                                      double min_expected = 5.0) {
  if (observed.size() != expected_probs.size() || observed.empty())
    throw dimension_error("chi_square_gof: size mismatch");
  double total = 0.0;
  for (std::uint64_t c : observed) total += static_cast<double>(c);
  if (total == 0.0) throw domain_error("chi_square_gof: no observations");

  std::vector<double> obs, exp;
  double pool_obs = 0.0, pool_exp = 0.0;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    const double e = expected_probs[i] * total;
    if (e < min_expected) {
      pool_obs += static_cast<double>(observed[i]);
      pool_exp += e;
    } else {
      obs.push_back(static_cast<double>(observed[i]));
      exp.push_back(e);
    }
  }
  if (pool_exp > 0.0) {
    obs.push_back(pool_obs);
    exp.push_back(pool_exp);
  }
  if (obs.size() < 2) throw domain_error("chi_square_gof: fewer than 2 usable cells");
  double stat = 0.0;
  for (std::size_t i = 0; i < obs.size(); ++i) {
    const double d = obs[i] - exp[i];
    stat += d * d / exp[i];
  }
  const double df = static_cast<double>(obs.size() - 1);
  return {stat, df, chi_square_sf(stat, df), obs.size()};
}

/**
 * Two-sample homogeneity test: were `a` and `b` drawn from the same discrete
 * distribution? Rare cells (pooled expected < min_expected in either sample)
 * are merged in index order.
 */
inline ChiSquareResult chi_square_two_sample(const std::vector<std::uint64_t>& a,
                                             const std::vector<std::uint64_t>& b,
                                             double min_expected = 5.0) {
  if (a.size() != b.size() || a.empty())
    throw dimension_error("chi_square_two_sample: size mismatch");
  double na = 0.0, nb = 0.0;
  for (std::uint64_t c : a) na += static_cast<double>(c);
  for (std::uint64_t c : b) nb += static_cast<double>(c);
  if (na == 0.0 || nb == 0.0) throw domain_error("chi_square_two_sample: empty sample");
  const double total = na + nb;

  // Pool cells so that both expected counts clear the floor.
  std::vector<double> ca, cb;
  double pa = 0.0, pb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double frac = (static_cast<double>(a[i]) + static_cast<double>(b[i])) / total;
    if (frac * na < min_expected || frac * nb < min_expected) {
      pa += static_cast<double>(a[i]);
      pb += static_cast<double>(b[i]);
    } else {
      ca.push_back(static_cast<double>(a[i]));
      cb.push_back(static_cast<double>(b[i]));
    }
  }
  if (pa + pb > 0.0) {
    ca.push_back(pa);
    cb.push_back(pb);
  }
  if (ca.size() < 2) throw domain_error("chi_square_two_sample: fewer than 2 usable cells");
  double stat = 0.0;
  for (std::size_t i = 0; i < ca.size(); ++i) {
    const double frac = (ca[i] + cb[i]) / total;
    const double ea = frac * na, eb = frac * nb;
    if (ea > 0.0) stat += (ca[i] - ea) * (ca[i] - ea) / ea;
    if (eb > 0.0) stat += (cb[i] - eb) * (cb[i] - eb) / eb;
  }
  const double df = static_cast<double>(ca.size() - 1);
  return {stat, df, chi_square_sf(stat, df), ca.size()};
}

/**
 * Percentile bootstrap interval for a statistic of i.i.d. samples.
 * Deterministic given the Rng; 1000 resamples and 99% coverage by default.
 */
template <typename Sample, typename Statistic>
ConfidenceInterval bootstrap_ci(const std::vector<Sample>& samples, Statistic&& stat, Rng& rng,
                                std::size_t n_resamples = 1000, double coverage = 0.99) {
  if (samples.empty()) throw domain_error("bootstrap_ci: no samples");
  std::vector<double> values(n_resamples);
  std::vector<Sample> resample(samples.size());
  for (std::size_t r = 0; r < n_resamples; ++r) {
    for (std::size_t i = 0; i < samples.size(); ++i)
      resample[i] = samples[rng.uniform_index(samples.size())];
    values[r] = stat(resample);
  }
  std::sort(values.begin(), values.end());
  const double alpha = (1.0 - coverage) / 2.0;
  auto pick = [&](double q) {
    double idx = q * static_cast<double>(n_resamples - 1);
    std::size_t i = static_cast<std::size_t>(idx);
    return values[i];
  };
  return {pick(alpha), pick(1.0 - alpha)};
}

}  // namespace sqkd
