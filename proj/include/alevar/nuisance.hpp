#ifndef ALEVAR_NUISANCE_HPP
#define ALEVAR_NUISANCE_HPP

#include <Eigen/Dense>
#include <cmath>
#include <cstddef>
#include <vector>

#include "alevar/data.hpp"
#include "alevar/dgp.hpp"

namespace alevar {

// Outcome regression lm(Y ~ A * W): design (1, A, W, A*W).
struct LinearFit {
  Eigen::Vector4d coefficients = Eigen::Vector4d::Zero();
  Eigen::Matrix4d gram_inverse = Eigen::Matrix4d::Zero();  // (X'X)^{-1}
  Eigen::Vector4d xty = Eigen::Vector4d::Zero();
  std::size_t n_used = 0;

  double predict(int a, double w) const {
    return coefficients[0] + coefficients[1] * a + coefficients[2] * w +
           coefficients[3] * a * w;
  }
};

// Propensity glm(A ~ W + W^2): design (1, W, W^2).
struct LogisticFit {
  Eigen::Vector3d coefficients = Eigen::Vector3d::Zero();
  bool converged = false;
  int iterations = 0;

  double predict(double w) const {
    return expit(coefficients[0] + coefficients[1] * w + coefficients[2] * w * w);
  }
};

inline Eigen::Vector4d ols_row(const Observation& o) {
  return Eigen::Vector4d(1.0, static_cast<double>(o.a), o.w,
                         static_cast<double>(o.a) * o.w);
}

inline LinearFit fit_ols(const Dataset& data) {
  if (data.size() < 5) throw InvalidSizeError("fit_ols: need n >= 5");
  Eigen::Matrix4d gram = Eigen::Matrix4d::Zero();
  Eigen::Vector4d xty = Eigen::Vector4d::Zero();
  for (const auto& o : data) {
    Eigen::Vector4d x = ols_row(o);
    gram.noalias() += x * x.transpose();
    xty.noalias() += x * o.y;
  }
  Eigen::FullPivLU<Eigen::Matrix4d> lu(gram);
  lu.setThreshold(1e-10);
  if (lu.rank() < 4) throw SingularDesignError("fit_ols: rank-deficient design");
  LinearFit fit;
  fit.gram_inverse = lu.inverse();
  fit.xty = xty;
  fit.coefficients = fit.gram_inverse * xty;
  fit.n_used = data.size();
  return fit;
}

// Rank-one inverse update: coefficients after deleting row i, in O(p^2).
inline LinearFit loo_downdate_ols(const LinearFit& fit, const Dataset& data,
                                  std::size_t i) {
  if (fit.n_used < 6) throw InvalidSizeError("loo_downdate_ols: need n_used >= 6");
  if (i >= data.size()) throw std::out_of_range("loo_downdate_ols: index out of range");
  Eigen::Vector4d x = ols_row(data[i]);
  Eigen::Vector4d ax = fit.gram_inverse * x;
  double h = x.dot(ax);  // leverage
  if (h >= 1.0 - 1e-10)
    throw SingularDowndateError("loo_downdate_ols: removal makes design singular");
  LinearFit out;
  out.gram_inverse = fit.gram_inverse + (ax * ax.transpose()) / (1.0 - h);
  out.xty = fit.xty - x * data[i].y;
  out.coefficients = out.gram_inverse * out.xty;
  out.n_used = fit.n_used - 1;
  return out;
}

namespace detail {

struct LogisticScoreHess {
  Eigen::Vector3d score;
  Eigen::Matrix3d hess;  // negative of the log-likelihood Hessian
  double loglik;
};

inline LogisticScoreHess logistic_score(const Dataset& data, std::size_t skip,
                                        const Eigen::Vector3d& beta) {
  LogisticScoreHess r{Eigen::Vector3d::Zero(), Eigen::Matrix3d::Zero(), 0.0};
  for (std::size_t k = 0; k < data.size(); ++k) {
    if (k == skip) continue;
    const auto& o = data[k];
    Eigen::Vector3d x(1.0, o.w, o.w * o.w);
    double eta = beta.dot(x);
    double p = expit(eta);
    r.score.noalias() += x * (o.a - p);
    r.hess.noalias() += x * x.transpose() * (p * (1.0 - p));
    r.loglik += o.a * eta - std::log1p(std::exp(eta));
  }
  return r;
}

inline double logistic_loglik(const Dataset& data, std::size_t skip,
                              const Eigen::Vector3d& beta) {
  double ll = 0.0;
  for (std::size_t k = 0; k < data.size(); ++k) {
    if (k == skip) continue;
    const auto& o = data[k];
    double eta = beta[0] + beta[1] * o.w + beta[2] * o.w * o.w;
    ll += o.a * eta - std::log1p(std::exp(eta));
  }
  return ll;
}

constexpr std::size_t kNoSkip = static_cast<std::size_t>(-1);

inline LogisticFit logistic_newton(const Dataset& data, std::size_t skip,
                                   Eigen::Vector3d beta, double tol, int max_iter) {
  int both = 0;
  for (std::size_t k = 0; k < data.size(); ++k) {
    if (k == skip) continue;
    both |= data[k].a ? 1 : 2;
  }
  if (both != 3)
    throw DegenerateResponseError("fit_logistic: single treatment class");

  LogisticFit fit;
  double ll = logistic_loglik(data, skip, beta);
  for (int it = 0; it < max_iter; ++it) {
    // Coefficients this large mean saturated probabilities: (quasi-)separated
    // data, where the likelihood has no interior maximum.
    if (beta.lpNorm<Eigen::Infinity>() > 50.0) {
      std::vector<double> last(beta.data(), beta.data() + 3);
      throw NonConvergenceError("fit_logistic: diverging coefficients (separation)",
                                std::move(last), it);
    }
    auto sh = logistic_score(data, skip, beta);
    if (sh.score.lpNorm<Eigen::Infinity>() < tol) {
      fit.coefficients = beta;
      fit.converged = true;
      fit.iterations = it;
      return fit;
    }
    Eigen::Vector3d step = sh.hess.ldlt().solve(sh.score);
    // A negligible full Newton step means the optimum is resolved to machine
    // precision even when the score sits above `tol` (rounding floor).
    if (step.norm() < 1e-7 * (1.0 + beta.norm())) {
      fit.coefficients = beta;
      fit.converged = true;
      fit.iterations = it;
      return fit;
    }
    // Step-halving on likelihood decrease.
    double scale = 1.0;
    int halvings = 0;
    Eigen::Vector3d trial = beta + step;
    double ll_trial = logistic_loglik(data, skip, trial);
    while (ll_trial < ll && halvings < 30) {
      scale *= 0.5;
      ++halvings;
      trial = beta + scale * step;
      ll_trial = logistic_loglik(data, skip, trial);
    }
    beta = trial;
    ll = ll_trial;
  }
  std::vector<double> last(beta.data(), beta.data() + 3);
  throw NonConvergenceError("fit_logistic: no convergence (possible separation)",
                            std::move(last), max_iter);
}

}  // namespace detail

// Score inf-norm tolerance: the achievable floor is ~1e-8 at n in the
// hundreds (LDLT solve precision), so anything tighter stalls in halving.
inline LogisticFit fit_logistic(const Dataset& data, double tol = 1e-6,
                                int max_iter = 50) {
  return detail::logistic_newton(data, detail::kNoSkip, Eigen::Vector3d::Zero(), tol,
                                 max_iter);
}

// Full Newton refit on data minus row i, warm-started from the full-data fit.
inline LogisticFit loo_refit_logistic(const Dataset& data, std::size_t i,
                                      const LogisticFit& warm, double tol = 1e-6,
                                      int max_iter = 50) {
  if (i >= data.size())
    throw std::out_of_range("loo_refit_logistic: index out of range");
  return detail::logistic_newton(data, i, warm.coefficients, tol, max_iter);
}

enum class NuisanceMode { fitted, oracle, near_boundary };

// One of three nuisance sources behind a common prediction surface.
struct NuisancePair {
  NuisanceMode mode = NuisanceMode::oracle;
  LinearFit q;
  LogisticFit g;
  const DgpTruth* truth = nullptr;
  double shift_q = 0.0;        // additive outcome-regression perturbation
  double shift_logit_g = 0.0;  // additive logit-propensity perturbation

  double predict_q(int a, double w) const {
    switch (mode) {
      case NuisanceMode::fitted:
        return q.predict(a, w);
      case NuisanceMode::oracle:
        return truth->q0(a, w);
      case NuisanceMode::near_boundary:
        return truth->q0(a, w) + shift_q;
    }
    return 0.0;
  }

  double predict_g(double w) const {
    switch (mode) {
      case NuisanceMode::fitted:
        return g.predict(w);
      case NuisanceMode::oracle:
        return expit(truth->logit_g0(w));
      case NuisanceMode::near_boundary:
        return expit(truth->logit_g0(w) + shift_logit_g);
    }
    return 0.5;
  }
};

inline NuisancePair fitted_nuisances(const Dataset& data) {
  NuisancePair np;
  np.mode = NuisanceMode::fitted;
  np.q = fit_ols(data);
  np.g = fit_logistic(data);
  return np;
}

inline NuisancePair oracle_nuisances(const DgpTruth& truth) {
  NuisancePair np;
  np.mode = NuisanceMode::oracle;
  np.truth = &truth;
  return np;
}

// Synthetic near-boundary nuisances: the outcome regression is shifted by a
// data-driven amplitude scaled to n^{-1/4}; the propensity logit is shifted
// deterministically at the same rate.  Each deletion or resample perturbs the
// amplitude by O(n^{-1/2}), so within-sample resampling sees the remainder.
inline NuisancePair near_boundary_nuisances(const Dataset& data, const DgpTruth& truth,
                                            const NearBoundaryConfig& nb) {
  NuisancePair np;
  np.mode = NuisanceMode::near_boundary;
  np.truth = &truth;
  double n4 = std::pow(static_cast<double>(data.size()), -0.25);
  np.shift_q = nb.lambda_q * near_boundary_amplitude(data) * n4;
  np.shift_logit_g = nb.lambda_g * n4;
  return np;
}

inline NuisancePair cluster_near_boundary_nuisances(const ClusteredDataset& data,
                                                    const DgpTruth& truth,
                                                    const NearBoundaryConfig& nb) {
  NuisancePair np;
  np.mode = NuisanceMode::near_boundary;
  np.truth = &truth;
  double j4 = std::pow(static_cast<double>(data.n_clusters), -0.25);
  np.shift_q = nb.lambda_q * cluster_near_boundary_amplitude(data, truth) * j4;
  np.shift_logit_g = nb.lambda_g * j4;
  return np;
}

}  // namespace alevar

#endif
