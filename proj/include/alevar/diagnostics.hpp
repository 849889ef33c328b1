#ifndef ALEVAR_DIAGNOSTICS_HPP
#define ALEVAR_DIAGNOSTICS_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "alevar/data.hpp"
#include "alevar/resampling.hpp"
#include "alevar/rng.hpp"
#include "alevar/stats.hpp"

namespace alevar {

struct DecompositionInput {
  double psi_hat = 0.0;
  double mean_true_d = 0.0;
  double r_rem = 0.0;
};

struct DecompositionReport {
  double var_total = 0.0;
  double eif_term = 0.0;
  double var_rem = 0.0;
  double cross_term = 0.0;
  double closure_gap = 0.0;
  double gap_mc_se = 0.0;  // batched MC standard error of the gap estimate
};

inline constexpr int kMcBatches = 20;

// Monte Carlo verification of the variance decomposition: the total sampling
// variance against the influence term, the remainder variance, and twice the
// covariance.  The closure gap is itself an MC estimate; its SE comes from
// 20-batch means of the per-replicate gap contribution.
inline DecompositionReport decomposition_oracle(
    const std::vector<DecompositionInput>& reps) {
  if (reps.size() < 100)
    throw InvalidSizeError("decomposition_oracle: need >= 100 replicates");
  std::size_t r = reps.size();
  std::vector<double> psi(r), d(r), rem(r);
  for (std::size_t i = 0; i < r; ++i) {
    psi[i] = reps[i].psi_hat;
    d[i] = reps[i].mean_true_d;
    rem[i] = reps[i].r_rem;
  }
  DecompositionReport out;
  out.var_total = sample_variance(psi);
  out.eif_term = sample_variance(d);
  out.var_rem = sample_variance(rem);
  out.cross_term = 2.0 * sample_covariance(d, rem);
  out.closure_gap = out.var_total - (out.eif_term + out.var_rem + out.cross_term);

  // Per-batch closure gaps.
  std::vector<double> gaps;
  std::size_t per = r / kMcBatches;
  if (per >= 5) {
    for (int b = 0; b < kMcBatches; ++b) {
      std::span<const double> ps(psi.data() + b * per, per);
      std::span<const double> dd(d.data() + b * per, per);
      std::span<const double> rr(rem.data() + b * per, per);
      gaps.push_back(sample_variance(ps) - sample_variance(dd) - sample_variance(rr) -
                     2.0 * sample_covariance(dd, rr));
    }
    out.gap_mc_se = std::sqrt(sample_variance(gaps) / static_cast<double>(gaps.size()));
  }
  return out;
}

enum class Regime { strong_decay, near_boundary, inconclusive };

inline std::string to_string(Regime r) {
  switch (r) {
    case Regime::strong_decay:
      return "strong-decay";
    case Regime::near_boundary:
      return "near-boundary";
    default:
      return "inconclusive";
  }
}

struct RegimeVerdict {
  Regime verdict = Regime::inconclusive;
  std::vector<std::pair<std::size_t, double>> rho_by_n;
  double trend_statistic = 0.0;  // relative decrease of rho-1, smallest to largest n
};

// Constancy-of-rho diagnostic.  Strong decay: rho at the largest n is close
// to 1 and rho-1 has dropped by at least half.  Near boundary: rho-1 stays
// above the threshold at every n (it may still drift down toward its limit).
inline RegimeVerdict regime_classify(
    const std::vector<std::pair<std::size_t, double>>& rho_by_n,
    double threshold = 0.05) {
  RegimeVerdict v;
  v.rho_by_n = rho_by_n;
  if (rho_by_n.size() < 3) return v;
  for (std::size_t i = 1; i < rho_by_n.size(); ++i)
    if (rho_by_n[i].first <= rho_by_n[i - 1].first)
      throw InvalidSizeError("regime_classify: sample sizes must be strictly ascending");

  double first_ex = rho_by_n.front().second - 1.0;
  double last_ex = rho_by_n.back().second - 1.0;
  double decrease = first_ex != 0.0 ? 1.0 - last_ex / first_ex : 0.0;
  v.trend_statistic = decrease;

  bool all_above = true;
  for (const auto& [n, rho] : rho_by_n)
    if (rho - 1.0 <= threshold) all_above = false;

  if (last_ex < threshold && decrease >= 0.5)
    v.verdict = Regime::strong_decay;
  else if (all_above)
    v.verdict = Regime::near_boundary;
  return v;
}

// 1-D Wasserstein-2 distance via the quantile coupling on a common grid of
// min(|a|, |b|, 4096) quantiles.
inline double mallows2_1d(std::span<const double> sample_a,
                          std::span<const double> sample_b,
                          std::size_t max_grid = 4096) {
  if (sample_a.empty() || sample_b.empty())
    throw InvalidSizeError("mallows2_1d: empty sample");
  std::vector<double> a(sample_a.begin(), sample_a.end());
  std::vector<double> b(sample_b.begin(), sample_b.end());
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::size_t k = std::min({a.size(), b.size(), max_grid});
  KahanSum s;
  for (std::size_t i = 0; i < k; ++i) {
    double p = (static_cast<double>(i) + 0.5) / static_cast<double>(k);
    double qa = empirical_quantile_sorted(a, p);
    double qb = empirical_quantile_sorted(b, p);
    s.add((qa - qb) * (qa - qb));
  }
  return std::sqrt(s.value() / static_cast<double>(k));
}

// Empirical content of the bootstrap consistency condition: the distance
// between B bootstrap pivots sqrt(n)(psi* - psi_hat) on one dataset and
// `reps` Monte Carlo pivots sqrt(n)(psi_hat - psi0) across fresh datasets.
inline double bootstrap_consistency_check(
    const Dataset& data, const std::function<double(const Dataset&)>& estimate_fn,
    const std::function<Dataset(SplitRng)>& gen_fn, double psi0, std::size_t b_count,
    std::size_t reps, SplitRng rng) {
  double root_n = std::sqrt(static_cast<double>(data.size()));
  double psi_hat = estimate_fn(data);
  auto boot = pairs_bootstrap(estimate_fn, data, b_count, rng.split(1));
  std::vector<double> boot_pivots(boot.replicates.size());
  for (std::size_t i = 0; i < boot.replicates.size(); ++i)
    boot_pivots[i] = root_n * (boot.replicates[i] - psi_hat);

  std::vector<double> mc_pivots(reps);
  SplitRng mc = rng.split(2);
  for (std::size_t r = 0; r < reps; ++r) {
    Dataset fresh = gen_fn(mc.split(r));
    mc_pivots[r] = root_n * (estimate_fn(fresh) - psi0);
  }
  return mallows2_1d(boot_pivots, mc_pivots);
}

struct CnSummary {
  std::size_t n = 0;
  double mean_cn = 0.0;
  double var_cn = 0.0;
};

// Per-sample-size Monte Carlo mean and variance of C_n.
inline std::vector<CnSummary> cn_tracker(
    const std::vector<std::pair<std::size_t, std::vector<double>>>& records) {
  if (records.size() < 2) throw InvalidSizeError("cn_tracker: need >= 2 sample sizes");
  std::vector<CnSummary> out;
  for (const auto& [n, values] : records) {
    CnSummary s;
    s.n = n;
    s.mean_cn = mean(values);
    s.var_cn = values.size() >= 2 ? sample_variance(values) : 0.0;
    out.push_back(s);
  }
  return out;
}

}  // namespace alevar

#endif
