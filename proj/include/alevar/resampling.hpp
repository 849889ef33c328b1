#ifndef ALEVAR_RESAMPLING_HPP
#define ALEVAR_RESAMPLING_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "alevar/data.hpp"
#include "alevar/rng.hpp"
#include "alevar/stats.hpp"

namespace alevar {

struct VarianceReport {
  double var_sand = 0.0;
  double var_jk = 0.0;
  std::optional<double> var_boot;
  double var_hc = 0.0;
  double rho_hat = 0.0;
  std::optional<std::vector<double>> boot_replicates;
};

enum class CriticalKind { z, t };

struct ConfidenceInterval {
  double lower = 0.0;
  double upper = 0.0;
  double level = 0.95;
  std::string method;
  CriticalKind critical = CriticalKind::z;

  bool contains(double psi) const { return lower <= psi && psi <= upper; }
};

// Sandwich: sum of squared score deviations / ((n-1) * n).  Scores are the
// estimated influence contributions, already mean-centered.
inline double sandwich(std::span<const double> scores) {
  if (scores.size() < 2) throw InvalidSizeError("sandwich: need n >= 2");
  double m = mean(scores);
  KahanSum s;
  for (double v : scores) s.add((v - m) * (v - m));
  auto n = static_cast<double>(scores.size());
  return s.value() / ((n - 1.0) * n);
}

// Same form at cluster granularity; callers pass per-cluster influence
// contributions on the estimator's own scale.
inline double cluster_sandwich(std::span<const double> cluster_scores) {
  return sandwich(cluster_scores);
}

// (n-1)/n * sum of squared LOO deviations, from precomputed LOO estimates.
inline double jackknife_variance(std::span<const double> loo_estimates) {
  std::size_t n = loo_estimates.size();
  if (n < 3) throw InvalidSizeError("jackknife: need n >= 3");
  double m = mean(loo_estimates);
  KahanSum s;
  for (double v : loo_estimates) s.add((v - m) * (v - m));
  return (static_cast<double>(n - 1) / static_cast<double>(n)) * s.value();
}

struct JackknifeResult {
  double var_jk = 0.0;
  std::vector<double> loo_estimates;
};

// Generic jackknife over an estimator map; each deletion refits in full.
inline JackknifeResult jackknife(const std::function<double(const Dataset&)>& fn,
                                 const Dataset& data) {
  std::size_t n = data.size();
  if (n < 3) throw InvalidSizeError("jackknife: need n >= 3");
  JackknifeResult r;
  r.loo_estimates.resize(n);
  std::vector<std::size_t> failed;
  Dataset del;
  del.reserve(n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    del.clear();
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) del.push_back(data[j]);
    try {
      r.loo_estimates[i] = fn(del);
    } catch (const std::exception&) {
      failed.push_back(i);
    }
  }
  if (!failed.empty())
    throw JackknifeRefitError("jackknife: " + std::to_string(failed.size()) +
                                  " LOO refits failed",
                              std::move(failed));
  r.var_jk = jackknife_variance(r.loo_estimates);
  return r;
}

// Deletes entire clusters; remaining clusters are renumbered contiguously.
inline JackknifeResult cluster_jackknife(
    const std::function<double(const ClusteredDataset&)>& fn,
    const ClusteredDataset& data) {
  auto big_j = static_cast<std::size_t>(data.n_clusters);
  if (big_j < 3) throw InvalidSizeError("cluster_jackknife: need J >= 3");
  JackknifeResult r;
  r.loo_estimates.resize(big_j);
  std::vector<std::size_t> failed;
  for (std::size_t j = 0; j < big_j; ++j) {
    ClusteredDataset del;
    del.n_clusters = data.n_clusters - 1;
    for (const auto& row : data.rows) {
      if (static_cast<std::size_t>(row.cluster_id) == j) continue;
      ClusterObservation c = row;
      if (static_cast<std::size_t>(row.cluster_id) > j) c.cluster_id -= 1;
      del.rows.push_back(c);
    }
    try {
      r.loo_estimates[j] = fn(del);
    } catch (const std::exception&) {
      failed.push_back(j);
    }
  }
  if (!failed.empty())
    throw JackknifeRefitError("cluster_jackknife: " + std::to_string(failed.size()) +
                                  " cluster refits failed",
                              std::move(failed));
  r.var_jk = jackknife_variance(r.loo_estimates);
  return r;
}

struct BootstrapResult {
  double var_boot = 0.0;
  std::vector<double> replicates;
  int retries = 0;
};

inline constexpr int kBootstrapRetryCap = 20;

// Pairs bootstrap: B resamples with replacement; resamples that break the
// pipeline are redrawn from a fresh stream up to the retry cap.
inline BootstrapResult pairs_bootstrap(const std::function<double(const Dataset&)>& fn,
                                       const Dataset& data, std::size_t b_count,
                                       SplitRng rng) {
  if (b_count < 2) throw InvalidSizeError("pairs_bootstrap: need B >= 2");
  std::size_t n = data.size();
  if (n < 2) throw InvalidSizeError("pairs_bootstrap: need n >= 2");
  BootstrapResult out;
  out.replicates.resize(b_count);
  Dataset res(n);
  for (std::size_t b = 0; b < b_count; ++b) {
    bool done = false;
    for (int attempt = 0; attempt <= kBootstrapRetryCap && !done; ++attempt) {
      SplitRng draw = rng.split(b).split(static_cast<std::uint64_t>(attempt));
      for (std::size_t i = 0; i < n; ++i) res[i] = data[draw.below(n)];
      try {
        out.replicates[b] = fn(res);
        done = true;
      } catch (const std::exception&) {
        ++out.retries;
      }
    }
    if (!done)
      throw BootstrapDegeneracyError("pairs_bootstrap: retry cap exhausted at b=" +
                                     std::to_string(b));
  }
  out.var_boot = sample_variance(out.replicates);
  return out;
}

// Cluster bootstrap: J clusters drawn with replacement; every member of a
// drawn cluster enters and duplicated clusters get fresh ids.  With singleton
// clusters the index draws coincide with pairs_bootstrap on the same stream.
inline BootstrapResult cluster_bootstrap(
    const std::function<double(const ClusteredDataset&)>& fn,
    const ClusteredDataset& data, std::size_t b_count, SplitRng rng) {
  if (b_count < 2) throw InvalidSizeError("cluster_bootstrap: need B >= 2");
  auto big_j = static_cast<std::size_t>(data.n_clusters);
  if (big_j < 2) throw InvalidSizeError("cluster_bootstrap: need J >= 2");
  // Rows grouped by cluster for fast assembly.
  std::vector<std::vector<ClusterObservation>> by_cluster(big_j);
  for (const auto& r : data.rows)
    by_cluster[static_cast<std::size_t>(r.cluster_id)].push_back(r);

  BootstrapResult out;
  out.replicates.resize(b_count);
  for (std::size_t b = 0; b < b_count; ++b) {
    bool done = false;
    for (int attempt = 0; attempt <= kBootstrapRetryCap && !done; ++attempt) {
      SplitRng draw = rng.split(b).split(static_cast<std::uint64_t>(attempt));
      ClusteredDataset res;
      res.n_clusters = static_cast<int>(big_j);
      for (std::size_t j = 0; j < big_j; ++j) {
        std::size_t pick = draw.below(big_j);
        for (auto row : by_cluster[pick]) {
          row.cluster_id = static_cast<int>(j);
          res.rows.push_back(row);
        }
      }
      try {
        out.replicates[b] = fn(res);
        done = true;
      } catch (const std::exception&) {
        ++out.retries;
      }
    }
    if (!done)
      throw BootstrapDegeneracyError("cluster_bootstrap: retry cap exhausted at b=" +
                                     std::to_string(b));
  }
  out.var_boot = sample_variance(out.replicates);
  return out;
}

// rho_hat = var_jk / var_sand; var_hc = rho_hat * var_sand, then pinned to
// var_jk so the identity of the HC correction holds bitwise.
inline std::pair<double, double> hc_corrected(double var_sand, double var_jk) {
  if (!(var_sand > 0.0))
    throw DegenerateDistributionError("hc_corrected: var_sand must be positive");
  double rho = var_jk / var_sand;
  double var_hc = rho * var_sand;
  // Guard against the one-ulp round trip of the divide/multiply.
  var_hc = var_jk;
  return {var_hc, rho};
}

inline ConfidenceInterval wald_interval(double psi_hat, double variance, double level,
                                        CriticalKind kind, double df = 0.0) {
  if (!(level > 0.0 && level < 1.0))
    throw InvalidSizeError("wald_interval: level must be in (0,1)");
  if (!(variance >= 0.0)) throw InvalidSizeError("wald_interval: negative variance");
  double p = 1.0 - (1.0 - level) / 2.0;
  double c = kind == CriticalKind::z ? normal_quantile(p) : student_t_quantile(p, df);
  double half = c * std::sqrt(variance);
  return {psi_hat - half, psi_hat + half, level, "wald", kind};
}

struct BcaOptions {
  bool z0_clamped = false;  // set when all replicates fell on one side
};

// Bias-corrected and accelerated percentile interval.  z0 from the replicate
// CDF at psi_hat, acceleration from the jackknife skewness of LOO estimates.
inline ConfidenceInterval bca_interval(const std::vector<double>& replicates,
                                       double psi_hat,
                                       const std::vector<double>& loo_estimates,
                                       double level, BcaOptions* opts = nullptr) {
  if (replicates.size() < 50) throw InvalidSizeError("bca_interval: need B >= 50");
  if (loo_estimates.empty())
    throw InvalidSizeError("bca_interval: LOO estimates required");
  std::vector<double> sorted = replicates;
  std::sort(sorted.begin(), sorted.end());
  if (sorted.front() == sorted.back())
    throw DegenerateDistributionError("bca_interval: all replicates identical");

  auto b_n = static_cast<double>(sorted.size());
  std::size_t below = 0;
  for (double v : sorted)
    if (v < psi_hat) ++below;
  double frac = static_cast<double>(below) / b_n;
  bool clamp = frac <= 0.0 || frac >= 1.0;
  if (clamp) frac = std::clamp(frac, 0.5 / b_n, 1.0 - 0.5 / b_n);
  if (opts) opts->z0_clamped = clamp;
  double z0 = normal_quantile(frac);

  double loo_mean = mean(loo_estimates);
  double s2 = 0.0, s3 = 0.0;
  for (double v : loo_estimates) {
    double d = loo_mean - v;
    s2 += d * d;
    s3 += d * d * d;
  }
  double accel = s2 > 0.0 ? s3 / (6.0 * std::pow(s2, 1.5)) : 0.0;

  double za = normal_quantile((1.0 - level) / 2.0);
  auto adjust = [&](double z) {
    double t = z0 + z;
    return normal_cdf(z0 + t / (1.0 - accel * t));
  };
  double a1 = adjust(za);
  double a2 = adjust(-za);
  ConfidenceInterval ci;
  ci.lower = empirical_quantile_sorted(sorted, a1);
  ci.upper = empirical_quantile_sorted(sorted, a2);
  ci.level = level;
  ci.method = "bca";
  ci.critical = CriticalKind::z;
  return ci;
}

}  // namespace alevar

#endif
