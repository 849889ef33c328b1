// Acceptance gate: one line per criterion, PASS or FAIL with measured values.
// Every tolerance is pinned here; constants with a stated oracle come from the
// calibration file written at suite start (never inlined).

#include <chrono>
#include <cstdio>
#include <iostream>
#include <sstream>
#include <vector>

#include "alevar/calibration.hpp"
#include "alevar/diagnostics.hpp"
#include "alevar/harness.hpp"

using namespace alevar;

namespace {

int g_failures = 0;

void verdict(int idx, const std::string& name, bool pass, const std::string& detail) {
  std::cout << "criterion " << idx << " (" << name << "): "
            << (pass ? "PASS" : "FAIL") << " — " << detail << "\n"
            << std::flush;
  if (!pass) ++g_failures;
}

std::string fmt(double v) { return format_real(v); }

// Reference coverage/MCSD/rho targets for the strong-decay study.
struct Table2Row {
  std::size_t n;
  double mcsd, cp_sand, cp_jk, rho;
};
const std::vector<Table2Row> kTable2{
    {200, 0.070, 0.964, 0.968, 1.040},
    {500, 0.045, 0.946, 0.946, 1.014},
    {1000, 0.031, 0.960, 0.960, 1.007},
    {2000, 0.023, 0.958, 0.958, 1.003},
};

void criterion1() {
  StudyConfig cfg;
  cfg.study_kind = StudyKind::aipw_strong_decay;
  cfg.sizes = {200, 500, 1000, 2000};
  cfg.reps = 500;
  cfg.base_seed = 2024;
  StudyReport rep = run_study(cfg);
  bool pass = true;
  std::ostringstream os;
  double prev_rho = 1e9;
  for (std::size_t i = 0; i < rep.rows.size(); ++i) {
    const auto& row = rep.rows[i];
    const auto& ref = kTable2[i];
    bool ok = std::fabs(row.bias) <= 0.005 &&
              std::fabs(row.mcsd - ref.mcsd) <= 0.20 * ref.mcsd &&
              std::fabs(row.cp_sand - ref.cp_sand) <= 0.03 &&
              std::fabs(row.cp_jk - ref.cp_jk) <= 0.03 &&
              std::fabs(row.rho_hat - ref.rho) <= 0.03 && row.rho_hat < prev_rho;
    prev_rho = row.rho_hat;
    pass = pass && ok;
    os << " n=" << row.size << "[bias=" << fmt(row.bias) << " mcsd=" << fmt(row.mcsd)
       << " cps=" << fmt(row.cp_sand) << " cpj=" << fmt(row.cp_jk)
       << " rho=" << fmt(row.rho_hat) << (ok ? "" : " <-off") << "]";
  }
  verdict(1, "table-2 strong decay", pass, os.str());
}

void criterion2(const Calibration& cal) {
  StudyConfig cfg;
  cfg.study_kind = StudyKind::near_boundary;
  cfg.sizes = {500, 1000, 2000};
  cfg.reps = 500;
  cfg.lambda_q = cal.lambda_q;
  cfg.lambda_g = cal.lambda_g;
  StudyReport rep = run_study(cfg);
  double target = 1.0 + cal.c_r / cal.sigma2_eif;
  bool pass = true;
  std::ostringstream os;
  for (const auto& row : rep.rows) {
    bool ok = row.cp_sand <= 0.93 && row.cp_jk >= 0.92 && row.cp_jk <= 0.98;
    pass = pass && ok;
    os << " n=" << row.size << "[cps=" << fmt(row.cp_sand)
       << " cpj=" << fmt(row.cp_jk) << " rho=" << fmt(row.rho_hat)
       << (ok ? "" : " <-off") << "]";
  }
  double rho2000 = rep.rows.back().rho_hat;
  bool rho_ok = std::fabs(rho2000 - target) <= 0.08;
  pass = pass && rho_ok;
  os << " rho(2000)=" << fmt(rho2000) << " target=" << fmt(target)
     << (rho_ok ? "" : " <-off");
  verdict(2, "near-boundary signature", pass, os.str());
}

void criterion3(const Calibration& cal) {
  const std::size_t n = 1000, reps = 2000;
  DgpTruth truth;
  bool pass = true;
  std::ostringstream os;
  for (auto mode : {NuisanceMode::fitted, NuisanceMode::near_boundary}) {
    AipwPipeline pipe{mode, &truth,
                      NearBoundaryConfig{cal.lambda_q, cal.lambda_g, true}};
    std::vector<DecompositionInput> in;
    SplitRng rng(2024);
    std::uint64_t stream = mode == NuisanceMode::fitted ? 11 : 12;
    for (std::size_t r = 0; r < reps; ++r) {
      Dataset data = gen_aipw_iid(n, truth, rng.split(stream).split(r));
      EstimateResult est = pipe.run(data);
      RemainderOracle ro = remainder_oracle(est, data, truth);
      in.push_back({est.psi_hat, ro.mean_true_d, ro.r_rem});
    }
    DecompositionReport d = decomposition_oracle(in);
    // The realized remainder is the exact residual psi_hat - psi0 - mean D*,
    // so closure holds as an algebraic identity and both the gap and its
    // batch SE are rounding noise; give the check a machine-precision floor
    // relative to the total variance so noise-vs-noise can't flip it.
    double tol = std::max(3.0 * d.gap_mc_se, 1e-12 * d.var_total);
    bool closed = std::fabs(d.closure_gap) <= tol;
    pass = pass && closed;
    os << (mode == NuisanceMode::fitted ? " fitted[" : " nearb[")
       << "gap=" << fmt(d.closure_gap) << " 3se=" << fmt(3.0 * d.gap_mc_se)
       << (closed ? "" : " <-off");
    if (mode == NuisanceMode::near_boundary) {
      double nvr = static_cast<double>(n) * d.var_rem;
      bool cr_ok = std::fabs(nvr - cal.c_r) <= 0.15 * cal.c_r;
      pass = pass && cr_ok;
      os << " n*var_rem=" << fmt(nvr) << " c_r=" << fmt(cal.c_r)
         << (cr_ok ? "" : " <-off");
    }
    os << "]";
  }
  verdict(3, "decomposition closure", pass, os.str());
}

void criterion4() {
  bool pass = true;
  std::ostringstream os;
  SplitRng rng(99);

  // HC == JK bitwise on 1000 random inputs.
  bool hc_ok = true;
  for (int i = 0; i < 1000; ++i) {
    double vs = std::exp(rng.normal()), vj = std::exp(rng.normal());
    auto [hc, rho] = hc_corrected(vs, vj);
    (void)rho;
    if (hc != vj) hc_ok = false;
  }
  pass = pass && hc_ok;
  os << " hc_eq_jk=" << (hc_ok ? "ok" : "broken");

  // Jackknife of the mean equals s^2/n to 1e-12 on 100 random datasets.
  auto mean_fn = [](const Dataset& d) {
    double s = 0.0;
    for (const auto& o : d) s += o.y;
    return s / static_cast<double>(d.size());
  };
  double worst_jk = 0.0;
  for (int r = 0; r < 100; ++r) {
    SplitRng rr = rng.split(r);
    std::size_t m = 5 + rr.below(60);
    Dataset d(m);
    std::vector<double> v(m);
    for (std::size_t i = 0; i < m; ++i) {
      v[i] = 2.0 * rr.normal();
      d[i] = {0.0, 0, v[i]};
    }
    double got = jackknife(mean_fn, d).var_jk;
    double want = sample_variance(v) / static_cast<double>(m);
    worst_jk = std::max(worst_jk, std::fabs(got - want));
  }
  bool jk_ok = worst_jk <= 1e-12;
  pass = pass && jk_ok;
  os << " jk_mean_err=" << fmt(worst_jk);

  // LOO downdate vs naive refit <= 1e-8 on all indices of 20 datasets.
  DgpTruth truth;
  double worst_dd = 0.0;
  for (int r = 0; r < 20; ++r) {
    Dataset d = gen_aipw_iid(60, truth, rng.split(1000 + r));
    LinearFit full = fit_ols(d);
    for (std::size_t i = 0; i < d.size(); ++i) {
      LinearFit fast = loo_downdate_ols(full, d, i);
      Dataset del;
      for (std::size_t j = 0; j < d.size(); ++j)
        if (j != i) del.push_back(d[j]);
      LinearFit slow = fit_ols(del);
      for (int k = 0; k < 4; ++k)
        worst_dd = std::max(worst_dd,
                            std::fabs(fast.coefficients[k] - slow.coefficients[k]));
    }
  }
  bool dd_ok = worst_dd <= 1e-8;
  pass = pass && dd_ok;
  os << " downdate_err=" << fmt(worst_dd);

  // Score centering <= 1e-10.
  double worst_center = 0.0;
  for (int r = 0; r < 20; ++r) {
    Dataset d = gen_aipw_iid(300, truth, rng.split(2000 + r));
    AipwPipeline pipe{NuisanceMode::fitted, &truth, {}};
    EstimateResult est = pipe.run(d);
    double s = 0.0;
    for (double v : est.scores) s += v;
    worst_center = std::max(worst_center, std::fabs(s));
  }
  bool center_ok = worst_center <= 1e-10;
  pass = pass && center_ok;
  os << " center_err=" << fmt(worst_center);

  verdict(4, "exact identities", pass, os.str());
}

void criterion5(const Calibration& cal) {
  bool pass = true;
  std::ostringstream os;

  // Near boundary: mean C_n within c_r +/- 25%, Var(C_n) decreasing in n.
  StudyConfig nb;
  nb.study_kind = StudyKind::near_boundary;
  nb.sizes = {500, 1000};
  nb.reps = 200;
  nb.track_cn = true;
  nb.lambda_q = cal.lambda_q;
  nb.lambda_g = cal.lambda_g;
  StudyReport nbr = run_study(nb);
  for (const auto& row : nbr.rows) {
    bool ok = std::fabs(row.mean_cn - cal.c_r) <= 0.25 * cal.c_r;
    pass = pass && ok;
    os << " nb n=" << row.size << "[mean_cn=" << fmt(row.mean_cn)
       << " var_cn=" << fmt(row.var_cn) << (ok ? "" : " <-off") << "]";
  }
  bool var_dec = nbr.rows[1].var_cn < nbr.rows[0].var_cn;
  pass = pass && var_dec;
  os << " var_cn_decreasing=" << (var_dec ? "yes" : "no");

  // Strong decay: mean C_n decreasing toward 0.
  StudyConfig sd;
  sd.study_kind = StudyKind::aipw_strong_decay;
  sd.sizes = {500, 1000};
  sd.reps = 200;
  sd.track_cn = true;
  StudyReport sdr = run_study(sd);
  bool sd_dec = sdr.rows[1].mean_cn < sdr.rows[0].mean_cn && sdr.rows[1].mean_cn > 0.0;
  pass = pass && sd_dec;
  os << " sd mean_cn " << fmt(sdr.rows[0].mean_cn) << "->" << fmt(sdr.rows[1].mean_cn)
     << (sd_dec ? "" : " <-off");
  verdict(5, "c_n stabilization", pass, os.str());
}

void criterion6() {
  StudyConfig cfg;
  cfg.study_kind = StudyKind::aipw_strong_decay;
  cfg.sizes = {1000};
  cfg.reps = 200;
  cfg.boot_b = 500;
  StudyReport rep = run_study(cfg);
  double ratio = rep.rows[0].mean_var_jk / rep.rows[0].mean_var_boot;
  bool pass = std::fabs(ratio - 1.0) <= 0.10;
  verdict(6, "jackknife-bootstrap first-order equivalence", pass,
          "mean var_jk / mean var_boot = " + fmt(ratio));
}

void criterion7() {
  StudyConfig cfg;
  cfg.study_kind = StudyKind::clustered_icc_sweep;
  cfg.sizes = {30};
  cfg.icc_values = {0.01, 0.05, 0.10, 0.20};
  cfg.cluster_size = 40;
  cfg.reps = 300;
  StudyReport rep = run_study(cfg);
  bool pass = true;
  std::ostringstream os;
  double prev = -1e18;
  os << " gaps:";
  for (const auto& row : rep.rows) {
    double gap = row.mean_var_jk - row.mean_var_sand;
    os << " " << fmt(gap);
    if (gap <= prev) pass = false;
    prev = gap;
  }

  // Gap also grows with cluster size m at fixed ICC = 0.10.
  StudyConfig small = cfg;
  small.icc_values = {0.10};
  small.cluster_size = 10;
  StudyReport small_rep = run_study(small);
  double gap_m10 =
      small_rep.rows[0].mean_var_jk - small_rep.rows[0].mean_var_sand;
  double gap_m40 = rep.rows[2].mean_var_jk - rep.rows[2].mean_var_sand;
  bool m_ok = gap_m40 > gap_m10;
  pass = pass && m_ok;
  os << " m10=" << fmt(gap_m10) << " m40=" << fmt(gap_m40)
     << (m_ok ? "" : " <-off");
  verdict(7, "icc amplification", pass, os.str());
}

void criterion8() {
  // Distance shrinks with n for the sample-mean functional.
  StudyConfig cfg;
  cfg.study_kind = StudyKind::bootstrap_consistency;
  cfg.sizes = {200, 2000};
  // The pivot-bank / bootstrap sample sizes set a distance floor ~B^{-1/2}
  // that does not shrink with n; B must be large enough that the O(n^{-1/2})
  // consistency signal at n=200 sits above it (0.05 vs a ~0.03 floor).
  cfg.reps = 40;
  cfg.boot_b = 2000;
  StudyReport rep = run_study(cfg);
  bool shrink = rep.rows[1].mean_d2 < rep.rows[0].mean_d2;

  // Metric properties.
  SplitRng rng(77);
  std::vector<double> a(2000), b(2000), c(2000);
  for (auto& x : a) x = rng.normal();
  for (auto& x : b) x = 1.3 * rng.normal() + 0.2;
  for (auto& x : c) x = 0.6 * rng.normal() - 0.5;
  bool sym = std::fabs(mallows2_1d(a, b) - mallows2_1d(b, a)) <= 1e-12;
  bool ident = mallows2_1d(a, a) == 0.0;
  bool tri = mallows2_1d(a, c) <= mallows2_1d(a, b) + mallows2_1d(b, c) + 1e-9;
  bool pass = shrink && sym && ident && tri;
  verdict(8, "bootstrap consistency diagnostic", pass,
          "d2(200)=" + fmt(rep.rows[0].mean_d2) +
              " d2(2000)=" + fmt(rep.rows[1].mean_d2) +
              " metric=" + (sym && ident && tri ? "ok" : "broken"));
}

void criterion9() {
  // Identical CSV bytes across worker counts.
  auto csv_for = [](std::size_t workers) {
    StudyConfig cfg;
    cfg.study_kind = StudyKind::aipw_strong_decay;
    cfg.sizes = {200, 500};
    cfg.reps = 50;
    cfg.worker_count = workers;
    std::ostringstream os;
    write_csv(run_study(cfg), os);
    return os.str();
  };
  std::string w1 = csv_for(1), w4 = csv_for(4), w8 = csv_for(8);
  bool det = w1 == w4 && w1 == w8;

  // OLS LOO downdate at least 5x faster than naive refits at n = 2000.
  DgpTruth truth;
  Dataset d = gen_aipw_iid(2000, truth, SplitRng(123));
  LinearFit full = fit_ols(d);
  using clock = std::chrono::steady_clock;

  auto t0 = clock::now();
  double sink = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i)
    sink += loo_downdate_ols(full, d, i).coefficients[1];
  double fast_per = std::chrono::duration<double>(clock::now() - t0).count() /
                    static_cast<double>(d.size());

  const std::size_t naive_count = 100;
  auto t1 = clock::now();
  for (std::size_t i = 0; i < naive_count; ++i) {
    Dataset del;
    del.reserve(d.size() - 1);
    for (std::size_t j = 0; j < d.size(); ++j)
      if (j != i) del.push_back(d[j]);
    sink += fit_ols(del).coefficients[1];
  }
  double naive_per = std::chrono::duration<double>(clock::now() - t1).count() /
                     static_cast<double>(naive_count);
  double speedup = naive_per / fast_per;
  bool fast = speedup >= 5.0;
  verdict(9, "determinism and performance", det && fast,
          std::string("bytes ") + (det ? "identical" : "DIFFER") +
              ", downdate speedup " + fmt(speedup) + "x (sink " +
              fmt(sink - sink) + ")");
}

}  // namespace

int main() {
  // Calibration constants come from the calibrate code path, via the file.
  DgpTruth truth;
  NearBoundaryConfig nb{kDefaultLambdaQ, kDefaultLambdaG, true};
  Calibration computed = calibrate(truth, nb, 1000, 4000, SplitRng(2024));
  const std::string cal_path = "acceptance_calibration.txt";
  write_calibration(computed, cal_path);
  Calibration cal = read_calibration(cal_path);
  std::cout << "calibration: kappa=" << fmt(cal.kappa)
            << " sigma2_eif=" << fmt(cal.sigma2_eif) << " c_r=" << fmt(cal.c_r)
            << " (analytic " << fmt(cal.c_r_analytic) << ")\n"
            << std::flush;

  try {
    criterion1();
    criterion2(cal);
    criterion3(cal);
    criterion4();
    criterion5(cal);
    criterion6();
    criterion7();
    criterion8();
    criterion9();
  } catch (const std::exception& e) {
    std::cout << "acceptance suite aborted: " << e.what() << "\n";
    return 1;
  }
  std::cout << (g_failures == 0 ? "all criteria PASS"
                                : std::to_string(g_failures) + " criteria FAIL")
            << "\n";
  return g_failures == 0 ? 0 : 1;
}
