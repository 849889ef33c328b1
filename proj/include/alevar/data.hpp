#ifndef ALEVAR_DATA_HPP
#define ALEVAR_DATA_HPP

#include <cmath>
#include <cstddef>
#include <vector>

#include "alevar/errors.hpp"
#include "alevar/stats.hpp"

namespace alevar {

struct Observation {
  double w = 0.0;  // covariate
  int a = 0;       // treatment, 0/1
  double y = 0.0;  // outcome
};

using Dataset = std::vector<Observation>;

struct ClusterObservation {
  int cluster_id = 0;
  int member_index = 0;
  Observation obs;
};

struct ClusteredDataset {
  std::vector<ClusterObservation> rows;
  int n_clusters = 0;

  Dataset units() const {
    Dataset d;
    d.reserve(rows.size());
    for (const auto& r : rows) d.push_back(r.obs);
    return d;
  }
};

// The generating mechanism; powers all truth-aware oracles.
struct DgpTruth {
  // Outcome regression Y = b0 + ba*A + bw*W + baw*A*W + cluster effect + noise.
  double b0 = 0.5;
  double ba = 0.4;
  double bw = 0.3;
  double baw = 0.15;
  // Propensity logit slope: A | W ~ Bern(expit(gw * W)).
  double gw = 0.3;
  double sigma_eps = 0.5;
  double sigma_b = 0.0;  // cluster random-intercept SD
  int m = 1;             // balanced cluster size
  double psi0 = 0.4;     // analytic ATE implied by the coefficients (= ba)

  double q0(int a, double w) const {
    return b0 + ba * a + bw * w + baw * a * w;
  }
  double logit_g0(double w) const { return gw * w; }
  double g0(double w) const { return expit(gw * w); }

  double icc() const {
    double tot = sigma_b * sigma_b + sigma_eps * sigma_eps;
    return tot > 0.0 ? sigma_b * sigma_b / tot : 0.0;
  }

  // Set sigma_b so that the implied ICC equals `rho`, holding total
  // residual variance sigma_b^2 + sigma_eps^2 fixed.
  void set_icc(double rho, double sigma_total) {
    if (!(rho >= 0.0 && rho < 1.0)) throw ConfigError("icc must be in [0,1)");
    sigma_b = sigma_total * std::sqrt(rho);
    sigma_eps = sigma_total * std::sqrt(1.0 - rho);
  }
};

// Synthetic near-boundary injection scale constants.  lambda_q = lambda_g = 0
// reduces the pipeline exactly to the unperturbed oracle path.
struct NearBoundaryConfig {
  double lambda_q = 0.0;
  double lambda_g = 0.0;
  bool enabled = false;
};

}  // namespace alevar

#endif
