#ifndef ALEVAR_DGP_HPP
#define ALEVAR_DGP_HPP

#include <cmath>
#include <cstddef>
#include <utility>

#include "alevar/data.hpp"
#include "alevar/rng.hpp"

namespace alevar {

// n i.i.d. observations: W ~ N(0,1), A|W ~ Bern(expit(gw*W)),
// Y = q0(A,W) + eps with eps ~ N(0, sigma_eps^2).
inline Dataset gen_aipw_iid(std::size_t n, const DgpTruth& truth, SplitRng rng) {
  if (n < 2) throw InvalidSizeError("gen_aipw_iid: n must be >= 2");
  Dataset d(n);
  for (std::size_t i = 0; i < n; ++i) {
    double w = rng.normal();
    int a = rng.bernoulli(truth.g0(w)) ? 1 : 0;
    double y = truth.q0(a, w) + truth.sigma_eps * rng.normal();
    d[i] = Observation{w, a, y};
  }
  return d;
}

// J balanced clusters of m units; a shared intercept b_j ~ N(0, sigma_b^2)
// is added to every outcome in cluster j.
inline ClusteredDataset gen_clustered(std::size_t j_clusters, const DgpTruth& truth,
                                      SplitRng rng) {
  if (j_clusters < 2) throw InvalidSizeError("gen_clustered: need >= 2 clusters");
  if (truth.m < 1) throw InvalidSizeError("gen_clustered: cluster size m must be >= 1");
  ClusteredDataset cd;
  cd.n_clusters = static_cast<int>(j_clusters);
  cd.rows.reserve(j_clusters * static_cast<std::size_t>(truth.m));
  for (std::size_t j = 0; j < j_clusters; ++j) {
    double bj = truth.sigma_b * rng.normal();
    for (int k = 0; k < truth.m; ++k) {
      double w = rng.normal();
      int a = rng.bernoulli(truth.g0(w)) ? 1 : 0;
      double y = truth.q0(a, w) + bj + truth.sigma_eps * rng.normal();
      cd.rows.push_back({static_cast<int>(j), k, Observation{w, a, y}});
    }
  }
  return cd;
}

// Data-driven perturbation amplitudes: both mean-zero, unit-variance in the
// limit, and asymptotically uncorrelated.
inline std::pair<double, double> perturbation_amplitudes(const Dataset& data,
                                                         const DgpTruth& truth) {
  if (data.empty()) throw InvalidSizeError("perturbation_amplitudes: empty dataset");
  double sq = 0.0, sg = 0.0;
  for (const auto& o : data) {
    double g = truth.g0(o.w);
    sq += o.w;
    sg += (o.a - g) / std::sqrt(g * (1.0 - g));
  }
  double root_n = std::sqrt(static_cast<double>(data.size()));
  return {sq / root_n, sg / root_n};
}

// Amplitude driving the synthetic near-boundary outcome perturbation.
// Uses h(W) = (W^2 - 1)/sqrt(2): mean zero, unit variance, and orthogonal to
// the EIF (whose W-dependent part is linear in W), so the injected remainder
// carries no first-order cross term with the influence average.
inline double near_boundary_amplitude(const Dataset& data) {
  if (data.empty()) throw InvalidSizeError("near_boundary_amplitude: empty dataset");
  double s = 0.0;
  for (const auto& o : data) s += (o.w * o.w - 1.0) / std::sqrt(2.0);
  return s / std::sqrt(static_cast<double>(data.size()));
}

// Cluster-level amplitude from cluster sums of true outcome residuals,
// normalized by the zero-ICC baseline SD sqrt(m * (sigma_b^2 + sigma_eps^2)).
// Its variance is 1 + (m-1)*ICC, so the injected remainder variance grows
// with both ICC and cluster size.
inline double cluster_near_boundary_amplitude(const ClusteredDataset& data,
                                              const DgpTruth& truth) {
  if (data.rows.empty())
    throw InvalidSizeError("cluster_near_boundary_amplitude: empty dataset");
  std::vector<double> sums(static_cast<std::size_t>(data.n_clusters), 0.0);
  for (const auto& r : data.rows)
    sums[static_cast<std::size_t>(r.cluster_id)] += r.obs.y - truth.q0(r.obs.a, r.obs.w);
  double tot2 = truth.sigma_b * truth.sigma_b + truth.sigma_eps * truth.sigma_eps;
  double base_sd = std::sqrt(static_cast<double>(truth.m) * tot2);
  double s = 0.0;
  for (double v : sums) s += v / base_sd;
  return s / std::sqrt(static_cast<double>(data.n_clusters));
}

}  // namespace alevar

#endif
