#ifndef ALEVAR_CALIBRATION_HPP
#define ALEVAR_CALIBRATION_HPP

#include <Eigen/Dense>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "alevar/dgp.hpp"
#include "alevar/estimator.hpp"
#include "alevar/stats.hpp"

namespace alevar {

// Gauss-Hermite nodes/weights (probabilists' convention: integrates against
// the standard normal density), via the Golub-Welsch eigendecomposition.
struct GaussHermite {
  std::vector<double> nodes;
  std::vector<double> weights;

  explicit GaussHermite(int order = 64) {
    Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(order, order);
    for (int i = 1; i < order; ++i) {
      double off = std::sqrt(static_cast<double>(i));
      jacobi(i, i - 1) = off;
      jacobi(i - 1, i) = off;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(jacobi);
    for (int i = 0; i < order; ++i) {
      nodes.push_back(es.eigenvalues()[i]);
      double v = es.eigenvectors()(0, i);
      weights.push_back(v * v);
    }
  }

  template <typename F>
  double expect(F f) const {
    double s = 0.0;
    for (std::size_t i = 0; i < nodes.size(); ++i) s += weights[i] * f(nodes[i]);
    return s;
  }
};

// Var(D*) by quadrature over W: the CATE variance plus the inverse-variance
// weighting term.
inline double sigma2_eif_quadrature(const DgpTruth& truth) {
  GaussHermite gh;
  double resid2 = truth.sigma_eps * truth.sigma_eps + truth.sigma_b * truth.sigma_b;
  double tau_mean = gh.expect([&](double w) { return truth.ba + truth.baw * w; });
  double tau_var = gh.expect([&](double w) {
    double d = truth.ba + truth.baw * w - tau_mean;
    return d * d;
  });
  double weight_term = gh.expect([&](double w) {
    double g = truth.g0(w);
    return 1.0 / (g * (1.0 - g));
  });
  return tau_var + resid2 * weight_term;
}

// Bilinear remainder coefficient for a logit-space propensity shift u:
// kappa(u) = E_W[(1-g0)/(1-g~) - g0/g~] / u, g~ = expit(logit g0 + u).
inline double kappa_quadrature(const DgpTruth& truth, double u) {
  GaussHermite gh;
  double e = gh.expect([&](double w) {
    double g0 = truth.g0(w);
    double gt = expit(truth.logit_g0(w) + u);
    return (1.0 - g0) / (1.0 - gt) - g0 / gt;
  });
  return e / u;
}

// Brute-force c_R: n * Var(realized remainder) across fresh replicates of the
// near-boundary pipeline at the reference sample size.
inline double c_r_monte_carlo(const DgpTruth& truth, const NearBoundaryConfig& nb,
                              std::size_t n_ref, std::size_t reps, SplitRng rng) {
  AipwPipeline pipe{NuisanceMode::near_boundary, &truth, nb};
  std::vector<double> rem(reps);
  for (std::size_t r = 0; r < reps; ++r) {
    Dataset data = gen_aipw_iid(n_ref, truth, rng.split(r));
    EstimateResult est = pipe.run(data);
    rem[r] = remainder_oracle(est, data, truth).r_rem;
  }
  return static_cast<double>(n_ref) * sample_variance(rem);
}

struct Calibration {
  int schema_version = 1;
  double lambda_q = 0.0;
  double lambda_g = 0.0;
  std::size_t n_ref = 1000;
  double kappa = 0.0;
  double sigma2_eif = 0.0;
  double c_r = 0.0;           // brute-force Monte Carlo value (the constant used)
  double c_r_analytic = 0.0;  // lambda_q^2 lambda_g^2 kappa^2 cross-check
};

// Defaults chosen so that c_R / sigma2_EIF is close to 0.3.
inline constexpr double kDefaultLambdaQ = 0.30;
inline constexpr double kDefaultLambdaG = 1.85;

inline Calibration calibrate(const DgpTruth& truth, const NearBoundaryConfig& nb,
                             std::size_t n_ref, std::size_t reps, SplitRng rng) {
  Calibration c;
  c.lambda_q = nb.lambda_q;
  c.lambda_g = nb.lambda_g;
  c.n_ref = n_ref;
  double u_ref = nb.lambda_g * std::pow(static_cast<double>(n_ref), -0.25);
  c.kappa = kappa_quadrature(truth, u_ref);
  c.sigma2_eif = sigma2_eif_quadrature(truth);
  c.c_r_analytic = nb.lambda_q * nb.lambda_q * nb.lambda_g * nb.lambda_g *
                   c.kappa * c.kappa;
  c.c_r = c_r_monte_carlo(truth, nb, n_ref, reps, rng);
  return c;
}

inline void write_calibration(const Calibration& c, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write calibration file: " + path);
  out.precision(17);
  out << "schema_version=" << c.schema_version << "\n"
      << "lambda_q=" << c.lambda_q << "\n"
      << "lambda_g=" << c.lambda_g << "\n"
      << "n_ref=" << c.n_ref << "\n"
      << "kappa=" << c.kappa << "\n"
      << "sigma2_eif=" << c.sigma2_eif << "\n"
      << "c_r=" << c.c_r << "\n"
      << "c_r_analytic=" << c.c_r_analytic << "\n";
}

inline Calibration read_calibration(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read calibration file: " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  Calibration c;
  auto need = [&](const std::string& k) {
    auto it = kv.find(k);
    if (it == kv.end()) throw ConfigError("calibration file missing key: " + k);
    return it->second;
  };
  c.schema_version = std::stoi(need("schema_version"));
  if (c.schema_version != 1)
    throw ConfigError("unsupported calibration schema version");
  c.lambda_q = std::stod(need("lambda_q"));
  c.lambda_g = std::stod(need("lambda_g"));
  c.n_ref = static_cast<std::size_t>(std::stoull(need("n_ref")));
  c.kappa = std::stod(need("kappa"));
  c.sigma2_eif = std::stod(need("sigma2_eif"));
  c.c_r = std::stod(need("c_r"));
  c.c_r_analytic = std::stod(need("c_r_analytic"));
  return c;
}

}  // namespace alevar

#endif
