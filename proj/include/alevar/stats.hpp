#ifndef ALEVAR_STATS_HPP
#define ALEVAR_STATS_HPP

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "alevar/errors.hpp"

namespace alevar {

inline double expit(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double logit(double p) { return std::log(p / (1.0 - p)); }

// Compensated (Kahan) accumulator; keeps parallel-invariant reductions exact
// enough that re-ordering at the replicate level cannot change emitted digits.
class KahanSum {
 public:
  void add(double x) {
    double y = x - c_;
    double t = s_ + y;
    c_ = (t - s_) - y;
    s_ = t;
  }
  double value() const { return s_; }

 private:
  double s_ = 0.0;
  double c_ = 0.0;
};

inline double mean(std::span<const double> x) {
  KahanSum s;
  for (double v : x) s.add(v);
  return s.value() / static_cast<double>(x.size());
}

// Unbiased sample variance (divisor n-1).
inline double sample_variance(std::span<const double> x) {
  if (x.size() < 2) throw InvalidSizeError("sample_variance: need n >= 2");
  double m = mean(x);
  KahanSum s;
  for (double v : x) s.add((v - m) * (v - m));
  return s.value() / static_cast<double>(x.size() - 1);
}

inline double sample_covariance(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2)
    throw InvalidSizeError("sample_covariance: need equal sizes, n >= 2");
  double mx = mean(x), my = mean(y);
  KahanSum s;
  for (std::size_t i = 0; i < x.size(); ++i) s.add((x[i] - mx) * (y[i] - my));
  return s.value() / static_cast<double>(x.size() - 1);
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

inline double normal_pdf(double x) {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * 3.14159265358979323846);
}

// Inverse normal CDF by bisection on erfc-based CDF, to 1e-10 in x.
inline double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw InvalidSizeError("normal_quantile: p must be in (0,1)");
  double lo = -40.0, hi = 40.0;
  while (hi - lo > 1e-12) {
    double mid = 0.5 * (lo + hi);
    if (normal_cdf(mid) < p)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

namespace detail {

// log of the Student-t density normalizing constant, via lgamma.
inline double t_log_norm(double df) {
  return std::lgamma(0.5 * (df + 1.0)) - std::lgamma(0.5 * df) -
         0.5 * std::log(df * 3.14159265358979323846);
}

inline double t_pdf(double x, double df, double log_norm) {
  return std::exp(log_norm - 0.5 * (df + 1.0) * std::log1p(x * x / df));
}

// Adaptive Simpson on [a,b].
inline double simpson(double a, double b, double fa, double fm, double fb, double df,
                      double log_norm, double eps, int depth) {
  double m = 0.5 * (a + b);
  double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  double flm = t_pdf(lm, df, log_norm), frm = t_pdf(rm, df, log_norm);
  double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  if (depth <= 0 || std::fabs(left + right - whole) < 15.0 * eps)
    return left + right + (left + right - whole) / 15.0;
  return simpson(a, m, fa, flm, fm, df, log_norm, eps * 0.5, depth - 1) +
         simpson(m, b, fm, frm, fb, df, log_norm, eps * 0.5, depth - 1);
}

}  // namespace detail

// Student-t CDF by adaptive Simpson integration of the density.
inline double student_t_cdf(double x, double df) {
  if (df <= 0) throw InvalidSizeError("student_t_cdf: df must be positive");
  double ln = detail::t_log_norm(df);
  if (x < 0) return 1.0 - student_t_cdf(-x, df);
  double a = 0.0, b = x;
  double fa = detail::t_pdf(a, df, ln), fb = detail::t_pdf(b, df, ln);
  double fm = detail::t_pdf(0.5 * (a + b), df, ln);
  return 0.5 + detail::simpson(a, b, fa, fm, fb, df, ln, 1e-13, 48);
}

inline double student_t_quantile(double p, double df) {
  if (!(p > 0.0 && p < 1.0)) throw InvalidSizeError("student_t_quantile: p must be in (0,1)");
  if (p == 0.5) return 0.0;
  double lo = -400.0, hi = 400.0;
  while (hi - lo > 1e-11) {
    double mid = 0.5 * (lo + hi);
    if (student_t_cdf(mid, df) < p)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

// Empirical quantile with linear interpolation between order statistics.
// `sorted` must be ascending.
inline double empirical_quantile_sorted(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw InvalidSizeError("empirical_quantile: empty sample");
  std::size_t n = sorted.size();
  if (n == 1) return sorted[0];
  double h = p * static_cast<double>(n - 1);
  std::size_t lo = static_cast<std::size_t>(h);
  if (lo >= n - 1) return sorted[n - 1];
  double frac = h - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

}  // namespace alevar

#endif
