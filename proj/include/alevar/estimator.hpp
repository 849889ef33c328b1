#ifndef ALEVAR_ESTIMATOR_HPP
#define ALEVAR_ESTIMATOR_HPP

#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "alevar/data.hpp"
#include "alevar/nuisance.hpp"

namespace alevar {

inline constexpr double kPropensityGuard = 1e-6;

struct EstimateResult {
  double psi_hat = 0.0;
  std::vector<double> scores;  // mean-centered influence contributions
  std::optional<std::vector<double>> cluster_scores;  // per-cluster sums
};

struct RemainderOracle {
  double r_rem = 0.0;
  double mean_true_d = 0.0;
  std::vector<double> true_scores;
};

struct LooPerturbations {
  std::vector<double> deltas;
  std::vector<double> b_values;
  double c_n = 0.0;
};

namespace detail {

inline double aipw_summand(const Observation& o, const NuisancePair& nuis, double g) {
  double q1 = nuis.predict_q(1, o.w);
  double q0 = nuis.predict_q(0, o.w);
  return q1 - q0 + o.a / g * (o.y - q1) - (1 - o.a) / (1.0 - g) * (o.y - q0);
}

inline void check_positivity(const Dataset& data, const NuisancePair& nuis,
                             std::vector<double>& g_out) {
  g_out.resize(data.size());
  std::vector<std::size_t> bad;
  for (std::size_t i = 0; i < data.size(); ++i) {
    g_out[i] = nuis.predict_g(data[i].w);
    if (!(g_out[i] > kPropensityGuard && g_out[i] < 1.0 - kPropensityGuard))
      bad.push_back(i);
  }
  if (!bad.empty())
    throw PositivityError("aipw: propensity outside guard for " +
                              std::to_string(bad.size()) + " rows",
                          std::move(bad));
}

}  // namespace detail

inline EstimateResult aipw(const Dataset& data, const NuisancePair& nuis) {
  if (data.size() < 2) throw InvalidSizeError("aipw: need n >= 2");
  std::vector<double> g;
  detail::check_positivity(data, nuis, g);
  EstimateResult r;
  r.scores.resize(data.size());
  KahanSum sum;
  for (std::size_t i = 0; i < data.size(); ++i) {
    r.scores[i] = detail::aipw_summand(data[i], nuis, g[i]);
    sum.add(r.scores[i]);
  }
  r.psi_hat = sum.value() / static_cast<double>(data.size());
  for (double& s : r.scores) s -= r.psi_hat;
  return r;
}

inline EstimateResult aipw_clustered(const ClusteredDataset& data,
                                     const NuisancePair& nuis) {
  EstimateResult r = aipw(data.units(), nuis);
  std::vector<double> cs(static_cast<std::size_t>(data.n_clusters), 0.0);
  for (std::size_t i = 0; i < data.rows.size(); ++i)
    cs[static_cast<std::size_t>(data.rows[i].cluster_id)] += r.scores[i];
  r.cluster_scores = std::move(cs);
  return r;
}

// D*(O) evaluated at the truth.
inline double true_eif(const Observation& o, const DgpTruth& truth) {
  double g = truth.g0(o.w);
  double q1 = truth.q0(1, o.w);
  double q0 = truth.q0(0, o.w);
  return q1 - q0 + o.a / g * (o.y - q1) - (1 - o.a) / (1.0 - g) * (o.y - q0) -
         truth.psi0;
}

// Exact realized remainder: psi_hat - psi0 = mean_true_d + r_rem by identity.
inline RemainderOracle remainder_oracle(const EstimateResult& result,
                                        const Dataset& data, const DgpTruth& truth) {
  RemainderOracle ro;
  ro.true_scores.resize(data.size());
  KahanSum s;
  for (std::size_t i = 0; i < data.size(); ++i) {
    ro.true_scores[i] = true_eif(data[i], truth);
    s.add(ro.true_scores[i]);
  }
  ro.mean_true_d = s.value() / static_cast<double>(data.size());
  ro.r_rem = result.psi_hat - truth.psi0 - ro.mean_true_d;
  return ro;
}

// The full estimation pipeline as a pure function of a dataset, one of three
// nuisance modes.  Keeps `truth` and the injection config by pointer/value;
// callers own the truth object.
struct AipwPipeline {
  NuisanceMode mode = NuisanceMode::fitted;
  const DgpTruth* truth = nullptr;
  NearBoundaryConfig nb;

  NuisancePair nuisances(const Dataset& data) const {
    switch (mode) {
      case NuisanceMode::fitted:
        return fitted_nuisances(data);
      case NuisanceMode::oracle:
        return oracle_nuisances(*truth);
      case NuisanceMode::near_boundary:
        return near_boundary_nuisances(data, *truth, nb);
    }
    return {};
  }

  EstimateResult run(const Dataset& data) const { return aipw(data, nuisances(data)); }
  double estimate(const Dataset& data) const { return run(data).psi_hat; }
};

struct ClusterAipwPipeline {
  NuisanceMode mode = NuisanceMode::oracle;
  const DgpTruth* truth = nullptr;
  NearBoundaryConfig nb;

  NuisancePair nuisances(const ClusteredDataset& data) const {
    switch (mode) {
      case NuisanceMode::fitted:
        return fitted_nuisances(data.units());
      case NuisanceMode::oracle:
        return oracle_nuisances(*truth);
      case NuisanceMode::near_boundary:
        return cluster_near_boundary_nuisances(data, *truth, nb);
    }
    return {};
  }

  EstimateResult run(const ClusteredDataset& data) const {
    return aipw_clustered(data, nuisances(data));
  }
  double estimate(const ClusteredDataset& data) const { return run(data).psi_hat; }
};

// ---- Fast leave-one-out estimates -----------------------------------------
//
// All three modes admit O(n) or O(n^2) LOO paths without refitting from
// scratch: OLS by rank-one downdate, logistic by warm-started Newton, and the
// oracle/perturbed modes by precomputed sums (the outcome shift enters every
// summand linearly).

namespace detail {

// phi_j = base_j + shift_q * lin_j for a common propensity surface.
struct ShiftDecomposition {
  std::vector<double> base;
  std::vector<double> lin;
  double base_sum = 0.0;
  double lin_sum = 0.0;
};

inline ShiftDecomposition shift_decomposition(const Dataset& data,
                                              const DgpTruth& truth,
                                              double shift_logit_g) {
  ShiftDecomposition sd;
  sd.base.resize(data.size());
  sd.lin.resize(data.size());
  KahanSum bs, ls;
  for (std::size_t j = 0; j < data.size(); ++j) {
    const auto& o = data[j];
    double g = expit(truth.logit_g0(o.w) + shift_logit_g);
    double q1 = truth.q0(1, o.w);
    double q0 = truth.q0(0, o.w);
    sd.base[j] =
        q1 - q0 + o.a / g * (o.y - q1) - (1 - o.a) / (1.0 - g) * (o.y - q0);
    sd.lin[j] = (1 - o.a) / (1.0 - g) - o.a / g;
    bs.add(sd.base[j]);
    ls.add(sd.lin[j]);
  }
  sd.base_sum = bs.value();
  sd.lin_sum = ls.value();
  return sd;
}

}  // namespace detail

// Leave-one-out AIPW estimates for the i.i.d. pipeline.  Matches a naive
// "delete row, rerun pipeline" loop to solver tolerance; any per-index refit
// failure is reported with the failing indices.
inline std::vector<double> aipw_loo_estimates(const Dataset& data,
                                              const AipwPipeline& pipe) {
  std::size_t n = data.size();
  if (n < 3) throw InvalidSizeError("aipw_loo_estimates: need n >= 3");
  std::vector<double> loo(n);

  if (pipe.mode == NuisanceMode::oracle) {
    NuisancePair np = oracle_nuisances(*pipe.truth);
    std::vector<double> g;
    detail::check_positivity(data, np, g);
    KahanSum sum;
    std::vector<double> phi(n);
    for (std::size_t i = 0; i < n; ++i) {
      phi[i] = detail::aipw_summand(data[i], np, g[i]);
      sum.add(phi[i]);
    }
    for (std::size_t i = 0; i < n; ++i)
      loo[i] = (sum.value() - phi[i]) / static_cast<double>(n - 1);
    return loo;
  }

  if (pipe.mode == NuisanceMode::near_boundary) {
    double n4 = std::pow(static_cast<double>(n - 1), -0.25);
    auto sd = detail::shift_decomposition(data, *pipe.truth,
                                          pipe.nb.lambda_g * n4);
    // Amplitude sums for the deleted sample.
    double h_sum = 0.0;
    std::vector<double> h(n);
    for (std::size_t i = 0; i < n; ++i) {
      h[i] = (data[i].w * data[i].w - 1.0) / std::sqrt(2.0);
      h_sum += h[i];
    }
    double inv = 1.0 / static_cast<double>(n - 1);
    double root = std::sqrt(static_cast<double>(n - 1));
    for (std::size_t i = 0; i < n; ++i) {
      double eps = (h_sum - h[i]) / root;
      double shift = pipe.nb.lambda_q * eps * n4;
      loo[i] = (sd.base_sum - sd.base[i] + shift * (sd.lin_sum - sd.lin[i])) * inv;
    }
    return loo;
  }

  // Fitted mode: rank-one OLS downdate + warm-started logistic refit.
  LinearFit ols = fit_ols(data);
  LogisticFit logit = fit_logistic(data);
  std::vector<std::size_t> failed;
  for (std::size_t i = 0; i < n; ++i) {
    try {
      LinearFit qi = loo_downdate_ols(ols, data, i);
      LogisticFit gi = loo_refit_logistic(data, i, logit);
      KahanSum sum;
      std::size_t bad = 0;
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        double g = gi.predict(data[j].w);
        if (!(g > kPropensityGuard && g < 1.0 - kPropensityGuard)) {
          ++bad;
          break;
        }
        double q1 = qi.predict(1, data[j].w);
        double q0 = qi.predict(0, data[j].w);
        const auto& o = data[j];
        sum.add(q1 - q0 + o.a / g * (o.y - q1) -
                (1 - o.a) / (1.0 - g) * (o.y - q0));
      }
      if (bad) {
        failed.push_back(i);
        continue;
      }
      loo[i] = sum.value() / static_cast<double>(n - 1);
    } catch (const std::exception&) {
      failed.push_back(i);
    }
  }
  if (!failed.empty())
    throw JackknifeRefitError("aipw_loo_estimates: " + std::to_string(failed.size()) +
                                  " LOO refits failed",
                              std::move(failed));
  return loo;
}

// Leave-one-cluster-out estimates for the clustered pipeline.
inline std::vector<double> aipw_loco_estimates(const ClusteredDataset& data,
                                               const ClusterAipwPipeline& pipe) {
  std::size_t big_j = static_cast<std::size_t>(data.n_clusters);
  if (big_j < 3) throw InvalidSizeError("aipw_loco_estimates: need J >= 3");
  std::vector<double> loo(big_j);
  Dataset units = data.units();
  std::size_t n = units.size();

  if (pipe.mode == NuisanceMode::oracle || pipe.mode == NuisanceMode::near_boundary) {
    double j4 = std::pow(static_cast<double>(big_j - 1), -0.25);
    double shift_g = pipe.mode == NuisanceMode::near_boundary
                         ? pipe.nb.lambda_g * j4
                         : 0.0;
    auto sd = detail::shift_decomposition(units, *pipe.truth, shift_g);
    // Per-cluster sums of base, lin, residual, and member counts.
    std::vector<double> cb(big_j, 0.0), cl(big_j, 0.0), cr(big_j, 0.0);
    std::vector<std::size_t> cn(big_j, 0);
    const DgpTruth& t = *pipe.truth;
    for (std::size_t i = 0; i < data.rows.size(); ++i) {
      auto j = static_cast<std::size_t>(data.rows[i].cluster_id);
      cb[j] += sd.base[i];
      cl[j] += sd.lin[i];
      cr[j] += units[i].y - t.q0(units[i].a, units[i].w);
      cn[j] += 1;
    }
    double tot2 = t.sigma_b * t.sigma_b + t.sigma_eps * t.sigma_eps;
    double base_sd = std::sqrt(static_cast<double>(t.m) * tot2);
    double r_sum = 0.0;
    for (double v : cr) r_sum += v;
    for (std::size_t j = 0; j < big_j; ++j) {
      double shift = 0.0;
      if (pipe.mode == NuisanceMode::near_boundary) {
        double eps = (r_sum - cr[j]) / base_sd /
                     std::sqrt(static_cast<double>(big_j - 1));
        shift = pipe.nb.lambda_q * eps * j4;
      }
      double denom = static_cast<double>(n - cn[j]);
      loo[j] = (sd.base_sum - cb[j] + shift * (sd.lin_sum - cl[j])) / denom;
    }
    return loo;
  }

  // Fitted mode: refit from scratch per deleted cluster (J is small).
  std::vector<std::size_t> failed;
  for (std::size_t j = 0; j < big_j; ++j) {
    ClusteredDataset del;
    del.n_clusters = data.n_clusters - 1;
    for (const auto& r : data.rows) {
      if (static_cast<std::size_t>(r.cluster_id) == j) continue;
      ClusterObservation c = r;
      if (static_cast<std::size_t>(r.cluster_id) > j) c.cluster_id -= 1;
      del.rows.push_back(c);
    }
    try {
      loo[j] = pipe.estimate(del);
    } catch (const std::exception&) {
      failed.push_back(j);
    }
  }
  if (!failed.empty())
    throw JackknifeRefitError("aipw_loco_estimates: " + std::to_string(failed.size()) +
                                  " cluster refits failed",
                              std::move(failed));
  return loo;
}

// LOO residuals delta_i, remainder perturbations b_i, and the tracker
// C_n = (n-1) * sum(delta_i^2).
inline LooPerturbations loo_perturbations(const Dataset& data, const DgpTruth& truth,
                                          double psi_hat,
                                          const std::vector<double>& loo_estimates) {
  std::size_t n = data.size();
  if (loo_estimates.size() != n)
    throw InvalidSizeError("loo_perturbations: size mismatch");
  std::vector<double> d_true(n);
  KahanSum ds;
  for (std::size_t i = 0; i < n; ++i) {
    d_true[i] = true_eif(data[i], truth);
    ds.add(d_true[i]);
  }
  double d_sum = ds.value();
  double r_full = psi_hat - truth.psi0 - d_sum / static_cast<double>(n);

  LooPerturbations lp;
  lp.deltas.resize(n);
  lp.b_values.resize(n);
  KahanSum c;
  for (std::size_t i = 0; i < n; ++i) {
    lp.deltas[i] = (loo_estimates[i] - psi_hat) + d_true[i] / static_cast<double>(n);
    double mean_loo_d = (d_sum - d_true[i]) / static_cast<double>(n - 1);
    double r_loo = loo_estimates[i] - truth.psi0 - mean_loo_d;
    lp.b_values[i] = r_loo - r_full;
    c.add(lp.deltas[i] * lp.deltas[i]);
  }
  lp.c_n = static_cast<double>(n - 1) * c.value();
  return lp;
}

}  // namespace alevar

#endif
