#pragma once

// Hypothesis tests used by the cohort comparisons.
//
// Rank tests use midranks for ties. Exact p-values are computed from the
// permutation distribution of the statistic on doubled ranks, so every
// comparison is in integers and an exact p-value is count / total.
//
// One-tailed p-values are taken in the direction the data point to.

#include <adaptest/common.hpp>
#include <adaptest/distributions.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace adaptest::stats {

enum class Tails { one, two };

inline std::string to_string(Tails t) { return t == Tails::one ? "one" : "two"; }

struct TestResult {
  std::string method;
  double statistic = 0.0;
  double p_value = 1.0;
  Tails tails = Tails::two;
  std::vector<std::size_t> n;
  bool exact = false;
  std::optional<double> df;
  std::optional<double> df2;
  std::uint64_t extreme_count = 0;  // exact tests: p = extreme_count / total_count
  std::uint64_t total_count = 0;
  std::string notes;
};

struct DegenerateData : Error {
  using Error::Error;
};

// Exact enumeration limits.
inline constexpr std::size_t kMannWhitneyExactMaxTotal = 12;
inline constexpr std::size_t kWilcoxonExactMaxPairs = 20;
inline constexpr std::size_t kKruskalExactMaxTotal = 12;

// ---------------------------------------------------------------------------
// Ranking

struct Ranking {
  std::vector<double> ranks;            // midranks, 1-based
  std::vector<std::size_t> tie_sizes;   // sizes of tie groups with t > 1
  double tie_sum() const {              // sum of t^3 - t
    double s = 0.0;
    for (auto t : tie_sizes) s += static_cast<double>(t) * t * t - static_cast<double>(t);
    return s;
  }
  /// Ranks times two; always integral.
  std::vector<std::int64_t> doubled() const {
    std::vector<std::int64_t> out;
    out.reserve(ranks.size());
    for (double r : ranks) out.push_back(std::llround(2.0 * r));
    return out;
  }
};

inline Ranking rank_with_ties(std::span<const double> values) {
  std::vector<std::size_t> idx(values.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return values[a] < values[b]; });
  Ranking r;
  r.ranks.assign(values.size(), 0.0);
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && values[idx[j + 1]] == values[idx[i]]) ++j;
    double mid = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t m = i; m <= j; ++m) r.ranks[idx[m]] = mid;
    if (j > i) r.tie_sizes.push_back(j - i + 1);
    i = j + 1;
  }
  return r;
}

namespace detail {

inline double mean(std::span<const double> v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

inline double sum_sq_dev(std::span<const double> v, double m) {
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s;
}

inline double clamp_p(double p) { return std::clamp(p, 0.0, 1.0); }

/// Tail count of an integer-valued null distribution around `center2` (twice the mean).
inline std::uint64_t tail_count(const std::map<std::int64_t, std::uint64_t>& dist, std::int64_t obs, std::int64_t center2,
                                Tails tails) {
  std::uint64_t count = 0;
  std::int64_t dev = std::llabs(2 * obs - center2);
  bool low = 2 * obs <= center2;
  for (const auto& [v, c] : dist) {
    if (tails == Tails::two) {
      if (std::llabs(2 * v - center2) >= dev) count += c;
    } else if (low ? v <= obs : v >= obs) {
      count += c;
    }
  }
  return count;
}

inline double normal_p(double z, Tails tails) {
  return clamp_p(tails == Tails::two ? 2.0 * dist::normal_sf(std::fabs(z)) : dist::normal_sf(std::fabs(z)));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// D'Agostino-Pearson omnibus normality test

struct NormalityComponents {
  double skewness = 0.0;  // sqrt(b1)
  double kurtosis = 0.0;  // b2
  double z_skew = 0.0;
  double z_kurt = 0.0;
};

inline NormalityComponents dagostino_components(std::span<const double> x) {
  const double n = static_cast<double>(x.size());
  if (x.size() < 8) throw Error("D'Agostino-Pearson test needs n >= 8");
  double m = detail::mean(x);
  double m2 = 0.0, m3 = 0.0, m4 = 0.0;
  for (double v : x) {
    double d = v - m;
    m2 += d * d;
    m3 += d * d * d;
    m4 += d * d * d * d;
  }
  m2 /= n;
  m3 /= n;
  m4 /= n;
  if (m2 <= 0.0) throw DegenerateData("D'Agostino-Pearson test: zero variance");

  NormalityComponents c;
  c.skewness = m3 / std::pow(m2, 1.5);
  c.kurtosis = m4 / (m2 * m2);

  // D'Agostino skewness transform.
  double y = c.skewness * std::sqrt((n + 1) * (n + 3) / (6.0 * (n - 2)));
  double beta2 = 3.0 * (n * n + 27 * n - 70) * (n + 1) * (n + 3) / ((n - 2) * (n + 5) * (n + 7) * (n + 9));
  double w2 = -1.0 + std::sqrt(2.0 * (beta2 - 1.0));
  double delta = 1.0 / std::sqrt(0.5 * std::log(w2));
  double alpha = std::sqrt(2.0 / (w2 - 1.0));
  c.z_skew = delta * std::asinh(y / alpha);

  // Anscombe-Glynn kurtosis transform.
  double e = 3.0 * (n - 1) / (n + 1);
  double var_b2 = 24.0 * n * (n - 2) * (n - 3) / ((n + 1) * (n + 1) * (n + 3) * (n + 5));
  double xk = (c.kurtosis - e) / std::sqrt(var_b2);
  double sqrt_beta1 = 6.0 * (n * n - 5 * n + 2) / ((n + 7) * (n + 9)) *
                      std::sqrt(6.0 * (n + 3) * (n + 5) / (n * (n - 2) * (n - 3)));
  double a = 6.0 + 8.0 / sqrt_beta1 * (2.0 / sqrt_beta1 + std::sqrt(1.0 + 4.0 / (sqrt_beta1 * sqrt_beta1)));
  double term1 = 1.0 - 2.0 / (9.0 * a);
  double denom = 1.0 + xk * std::sqrt(2.0 / (a - 4.0));
  double term2 = std::cbrt((1.0 - 2.0 / a) / denom);
  c.z_kurt = (term1 - term2) / std::sqrt(2.0 / (9.0 * a));
  return c;
}

inline TestResult dagostino_pearson_k2(std::span<const double> sample) {
  auto c = dagostino_components(sample);
  TestResult r;
  r.method = "D'Agostino-Pearson K2";
  r.statistic = c.z_skew * c.z_skew + c.z_kurt * c.z_kurt;
  r.p_value = detail::clamp_p(dist::chi2_sf(r.statistic, 2.0));
  r.df = 2.0;
  r.n = {sample.size()};
  return r;
}

// ---------------------------------------------------------------------------
// Mann-Whitney U

/// Number of size-k subsets of `weights` per subset sum.
inline std::map<std::int64_t, std::uint64_t> subset_sum_distribution(std::span<const std::int64_t> weights,
                                                                    std::size_t k) {
  std::int64_t total = std::accumulate(weights.begin(), weights.end(), std::int64_t{0});
  std::vector<std::vector<std::uint64_t>> dp(k + 1, std::vector<std::uint64_t>(static_cast<std::size_t>(total) + 1, 0));
  dp[0][0] = 1;
  for (auto w : weights)
    for (std::size_t j = k; j >= 1; --j)
      for (std::int64_t s = total; s >= w; --s)
        dp[j][static_cast<std::size_t>(s)] += dp[j - 1][static_cast<std::size_t>(s - w)];
  std::map<std::int64_t, std::uint64_t> out;
  for (std::int64_t s = 0; s <= total; ++s)
    if (dp[k][static_cast<std::size_t>(s)]) out[s] = dp[k][static_cast<std::size_t>(s)];
  return out;
}

inline TestResult mann_whitney_u(std::span<const double> a, std::span<const double> b, Tails tails = Tails::two) {
  if (a.empty() || b.empty()) throw Error("Mann-Whitney test needs two non-empty groups");
  std::vector<double> all(a.begin(), a.end());
  all.insert(all.end(), b.begin(), b.end());
  const std::size_t na = a.size(), nb = b.size(), n = all.size();
  auto rk = rank_with_ties(all);
  auto r2 = rk.doubled();
  std::int64_t obs2 = std::accumulate(r2.begin(), r2.begin() + static_cast<std::ptrdiff_t>(na), std::int64_t{0});

  double ua = 0.5 * static_cast<double>(obs2) - 0.5 * static_cast<double>(na * (na + 1));
  double ub = static_cast<double>(na * nb) - ua;

  TestResult r;
  r.method = "Mann-Whitney U";
  r.statistic = std::min(ua, ub);
  r.tails = tails;
  r.n = {na, nb};
  if (!rk.tie_sizes.empty()) r.notes = "midranks for ties";

  if (n <= kMannWhitneyExactMaxTotal) {
    auto dist = subset_sum_distribution(r2, na);
    std::int64_t center2 = static_cast<std::int64_t>(2 * na * (n + 1));  // twice E[2 R_a]
    r.exact = true;
    r.extreme_count = detail::tail_count(dist, obs2, center2, tails);
    for (const auto& [v, c] : dist) r.total_count += c;
    r.p_value = static_cast<double>(r.extreme_count) / static_cast<double>(r.total_count);
    return r;
  }

  double nn = static_cast<double>(n);
  double mu = 0.5 * static_cast<double>(na * nb);
  double var = static_cast<double>(na * nb) / 12.0 * ((nn + 1.0) - rk.tie_sum() / (nn * (nn - 1.0)));
  if (var <= 0.0) {
    r.p_value = 1.0;
    r.notes = "all observations tied";
    return r;
  }
  double z = std::max(0.0, std::fabs(ua - mu) - 0.5) / std::sqrt(var);
  r.p_value = detail::normal_p(z, tails);
  r.notes += std::string(r.notes.empty() ? "" : "; ") + "normal approximation, tie-corrected, continuity-corrected";
  return r;
}

// ---------------------------------------------------------------------------
// Wilcoxon signed-rank

/// Number of sign assignments per doubled positive-rank sum.
inline std::map<std::int64_t, std::uint64_t> signed_rank_distribution(std::span<const std::int64_t> doubled_ranks) {
  std::int64_t total = std::accumulate(doubled_ranks.begin(), doubled_ranks.end(), std::int64_t{0});
  std::vector<std::uint64_t> dp(static_cast<std::size_t>(total) + 1, 0);
  dp[0] = 1;
  for (auto w : doubled_ranks)
    for (std::int64_t s = total; s >= w; --s) dp[static_cast<std::size_t>(s)] += dp[static_cast<std::size_t>(s - w)];
  std::map<std::int64_t, std::uint64_t> out;
  for (std::int64_t s = 0; s <= total; ++s)
    if (dp[static_cast<std::size_t>(s)]) out[s] = dp[static_cast<std::size_t>(s)];
  return out;
}

/// Signed-rank test on paired differences. Zero differences are dropped.
inline TestResult wilcoxon_signed_rank(std::span<const double> diffs, Tails tails = Tails::two) {
  std::vector<double> nz;
  for (double d : diffs)
    if (d != 0.0) nz.push_back(d);
  if (nz.empty()) throw DegenerateData("Wilcoxon signed-rank test: all differences are zero");
  std::size_t dropped = diffs.size() - nz.size();

  std::vector<double> mags;
  for (double d : nz) mags.push_back(std::fabs(d));
  auto rk = rank_with_ties(mags);
  auto r2 = rk.doubled();
  std::int64_t wplus2 = 0, total2 = 0;
  for (std::size_t i = 0; i < nz.size(); ++i) {
    total2 += r2[i];
    if (nz[i] > 0) wplus2 += r2[i];
  }

  TestResult r;
  r.method = "Wilcoxon signed-rank";
  r.statistic = 0.5 * static_cast<double>(std::min(wplus2, total2 - wplus2));
  r.tails = tails;
  r.n = {nz.size()};
  if (dropped) r.notes = std::to_string(dropped) + " zero difference(s) dropped";
  if (!rk.tie_sizes.empty()) r.notes += std::string(r.notes.empty() ? "" : "; ") + "midranks for ties";

  if (nz.size() <= kWilcoxonExactMaxPairs) {
    auto dist = signed_rank_distribution(r2);
    r.exact = true;
    r.extreme_count = detail::tail_count(dist, wplus2, total2, tails);
    r.total_count = std::uint64_t{1} << nz.size();
    r.p_value = static_cast<double>(r.extreme_count) / static_cast<double>(r.total_count);
    return r;
  }

  double n = static_cast<double>(nz.size());
  double mu = n * (n + 1.0) / 4.0;
  double var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - rk.tie_sum() / 48.0;
  double z = std::max(0.0, std::fabs(0.5 * static_cast<double>(wplus2) - mu) - 0.5) / std::sqrt(var);
  r.p_value = detail::normal_p(z, tails);
  r.notes += std::string(r.notes.empty() ? "" : "; ") + "normal approximation, continuity-corrected";
  return r;
}

inline TestResult wilcoxon_signed_rank(std::span<const double> x, std::span<const double> y, Tails tails = Tails::two) {
  if (x.size() != y.size()) throw Error("Wilcoxon signed-rank test: samples must be paired");
  std::vector<double> d(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) d[i] = y[i] - x[i];
  return wilcoxon_signed_rank(d, tails);
}

/// Largest integer w with P(W <= w) <= alpha (one tail) or alpha / 2 (two
/// tails) for n untied nonzero pairs. Empty when no such w exists.
inline std::optional<int> wilcoxon_critical_value(std::size_t n, double alpha, Tails tails = Tails::one) {
  std::vector<std::int64_t> r2(n);
  for (std::size_t i = 0; i < n; ++i) r2[i] = 2 * static_cast<std::int64_t>(i + 1);
  auto dist = signed_rank_distribution(r2);
  double total = std::ldexp(1.0, static_cast<int>(n));
  double level = tails == Tails::one ? alpha : alpha / 2.0;
  std::optional<int> best;
  std::uint64_t cum = 0;
  for (const auto& [v2, c] : dist) {
    cum += c;
    if (static_cast<double>(cum) / total <= level) best = static_cast<int>(v2 / 2);
    else break;
  }
  return best;
}

// ---------------------------------------------------------------------------
// Kruskal-Wallis H

namespace detail {

// Distribution of sum_g (2R_g)^2 * (L / n_g) over all labeled assignments of
// items to groups of the given sizes, memoized on the set of used items.
class KruskalEnumerator {
 public:
  KruskalEnumerator(std::vector<std::int64_t> r2, std::vector<std::size_t> sizes)
      : r2_(std::move(r2)), sizes_(std::move(sizes)) {
    lcm_ = 1;
    for (auto s : sizes_) lcm_ = std::lcm(lcm_, static_cast<std::int64_t>(s));
    prefix_.push_back(0);
    for (auto s : sizes_) prefix_.push_back(prefix_.back() + s);
    memo_.resize(std::size_t{1} << r2_.size());
    done_.assign(memo_.size(), false);
  }

  std::int64_t statistic(const std::vector<std::vector<std::size_t>>& groups) const {
    std::int64_t t = 0;
    for (const auto& g : groups) {
      std::int64_t s = 0;
      for (auto i : g) s += r2_[i];
      t += s * s * (lcm_ / static_cast<std::int64_t>(g.size()));
    }
    return t;
  }

  const std::map<std::int64_t, std::uint64_t>& distribution(std::uint32_t used = 0) {
    if (done_[used]) return memo_[used];
    auto& out = memo_[used];
    std::size_t taken = static_cast<std::size_t>(std::popcount(used));
    std::size_t g = static_cast<std::size_t>(std::find(prefix_.begin(), prefix_.end(), taken) - prefix_.begin());
    std::uint32_t all = (std::uint32_t{1} << r2_.size()) - 1;
    std::uint32_t free = all & ~used;
    if (g + 1 >= sizes_.size()) {
      out[contribution(free, g)] = 1;
    } else {
      for (std::uint32_t sub = free;; sub = (sub - 1) & free) {
        if (static_cast<std::size_t>(std::popcount(sub)) == sizes_[g]) {
          std::int64_t c = contribution(sub, g);
          for (const auto& [v, n] : distribution(used | sub)) out[v + c] += n;
        }
        if (sub == 0) break;
      }
    }
    done_[used] = true;
    return out;
  }

 private:
  std::int64_t contribution(std::uint32_t members, std::size_t g) const {
    std::int64_t s = 0;
    for (std::size_t i = 0; i < r2_.size(); ++i)
      if (members >> i & 1u) s += r2_[i];
    return s * s * (lcm_ / static_cast<std::int64_t>(sizes_[g]));
  }

  std::vector<std::int64_t> r2_;
  std::vector<std::size_t> sizes_;
  std::vector<std::size_t> prefix_;
  std::int64_t lcm_ = 1;
  std::vector<std::map<std::int64_t, std::uint64_t>> memo_;
  std::vector<bool> done_;
};

}  // namespace detail

inline TestResult kruskal_wallis(const std::vector<std::vector<double>>& groups) {
  if (groups.size() < 2) throw Error("Kruskal-Wallis test needs at least 2 groups");
  std::vector<double> all;
  std::vector<std::size_t> sizes;
  for (const auto& g : groups) {
    if (g.empty()) throw Error("Kruskal-Wallis test: empty group");
    all.insert(all.end(), g.begin(), g.end());
    sizes.push_back(g.size());
  }
  const double n = static_cast<double>(all.size());
  auto rk = rank_with_ties(all);

  TestResult r;
  r.method = "Kruskal-Wallis H";
  r.n = sizes;
  r.df = static_cast<double>(groups.size() - 1);

  double correction = 1.0 - rk.tie_sum() / (n * n * n - n);
  const bool exact = all.size() <= kKruskalExactMaxTotal;
  if (correction <= 0.0 && !exact) {
    r.statistic = 0.0;
    r.p_value = 1.0;
    r.notes = "degenerate: all observations identical";
    return r;
  }

  double sum = 0.0;
  std::size_t off = 0;
  for (auto s : sizes) {
    double rs = std::accumulate(rk.ranks.begin() + static_cast<std::ptrdiff_t>(off),
                                rk.ranks.begin() + static_cast<std::ptrdiff_t>(off + s), 0.0);
    sum += rs * rs / static_cast<double>(s);
    off += s;
  }
  if (correction > 0.0) r.statistic = (12.0 / (n * (n + 1.0)) * sum - 3.0 * (n + 1.0)) / correction;
  if (r.statistic < 0.0) r.statistic = 0.0;  // rounding
  if (!rk.tie_sizes.empty()) r.notes = correction > 0.0 ? "tie-corrected" : "all observations identical";

  if (exact) {
    detail::KruskalEnumerator en(rk.doubled(), sizes);
    std::vector<std::vector<std::size_t>> observed;
    std::size_t i = 0;
    for (auto s : sizes) {
      observed.emplace_back();
      for (std::size_t m = 0; m < s; ++m) observed.back().push_back(i++);
    }
    std::int64_t obs = en.statistic(observed);
    r.exact = true;
    for (const auto& [v, c] : en.distribution()) {
      r.total_count += c;
      if (v >= obs) r.extreme_count += c;
    }
    r.p_value = static_cast<double>(r.extreme_count) / static_cast<double>(r.total_count);
    return r;
  }
  r.p_value = detail::clamp_p(dist::chi2_sf(r.statistic, *r.df));
  r.notes += std::string(r.notes.empty() ? "" : "; ") + "chi-square approximation";
  return r;
}

// ---------------------------------------------------------------------------
// Parametric tests

/// Pooled-variance two-sample t-test; statistic is for mean(a) - mean(b).
inline TestResult t_test_unpaired(std::span<const double> a, std::span<const double> b, Tails tails = Tails::two) {
  if (a.size() < 2 || b.size() < 2) throw Error("t-test needs at least 2 observations per group");
  double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  double ma = detail::mean(a), mb = detail::mean(b);
  double df = na + nb - 2.0;
  double pooled = (detail::sum_sq_dev(a, ma) + detail::sum_sq_dev(b, mb)) / df;
  if (pooled <= 0.0) throw DegenerateData("t-test: zero pooled variance");
  TestResult r;
  r.method = "unpaired t-test";
  r.statistic = (ma - mb) / std::sqrt(pooled * (1.0 / na + 1.0 / nb));
  r.df = df;
  r.tails = tails;
  r.n = {a.size(), b.size()};
  double two = dist::t_two_sided(r.statistic, df);
  r.p_value = detail::clamp_p(tails == Tails::two ? two : 0.5 * two);
  return r;
}

inline TestResult anova_oneway(const std::vector<std::vector<double>>& groups) {
  if (groups.size() < 2) throw Error("ANOVA needs at least 2 groups");
  double grand = 0.0, n = 0.0;
  for (const auto& g : groups) {
    if (g.size() < 2) throw Error("ANOVA needs at least 2 observations per group");
    grand += std::accumulate(g.begin(), g.end(), 0.0);
    n += static_cast<double>(g.size());
  }
  grand /= n;
  double ssb = 0.0, ssw = 0.0;
  for (const auto& g : groups) {
    double m = detail::mean(g);
    ssb += static_cast<double>(g.size()) * (m - grand) * (m - grand);
    ssw += detail::sum_sq_dev(g, m);
  }
  double k = static_cast<double>(groups.size());
  if (ssw <= 0.0) throw DegenerateData("ANOVA: zero within-group variance");
  TestResult r;
  r.method = "one-way ANOVA";
  r.df = k - 1.0;
  r.df2 = n - k;
  r.statistic = (ssb / *r.df) / (ssw / *r.df2);
  r.p_value = detail::clamp_p(dist::f_sf(r.statistic, *r.df, *r.df2));
  for (const auto& g : groups) r.n.push_back(g.size());
  return r;
}

/// Pooled two-proportion z-test; statistic is for p1 - p2.
inline TestResult z_two_proportions(std::uint64_t x1, std::uint64_t n1, std::uint64_t x2, std::uint64_t n2,
                                    Tails tails = Tails::two) {
  if (n1 == 0 || n2 == 0) throw Error("z-test: empty sample");
  if (x1 > n1 || x2 > n2) throw Error("z-test: successes exceed sample size");
  double p1 = static_cast<double>(x1) / static_cast<double>(n1);
  double p2 = static_cast<double>(x2) / static_cast<double>(n2);
  double pooled = static_cast<double>(x1 + x2) / static_cast<double>(n1 + n2);
  if (pooled <= 0.0 || pooled >= 1.0) throw DegenerateData("z-test: pooled proportion is 0 or 1");
  double se = std::sqrt(pooled * (1.0 - pooled) * (1.0 / static_cast<double>(n1) + 1.0 / static_cast<double>(n2)));
  TestResult r;
  r.method = "two-proportion z-test";
  r.statistic = (p1 - p2) / se;
  r.tails = tails;
  r.n = {n1, n2};
  r.p_value = detail::normal_p(r.statistic, tails);
  return r;
}

}  // namespace adaptest::stats
