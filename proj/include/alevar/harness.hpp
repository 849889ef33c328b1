#ifndef ALEVAR_HARNESS_HPP
#define ALEVAR_HARNESS_HPP

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "alevar/calibration.hpp"
#include "alevar/diagnostics.hpp"
#include "alevar/dgp.hpp"
#include "alevar/estimator.hpp"
#include "alevar/resampling.hpp"

namespace alevar {

enum class StudyKind {
  aipw_strong_decay,
  near_boundary,
  clustered_icc_sweep,
  bootstrap_consistency,
};

inline std::string to_string(StudyKind k) {
  switch (k) {
    case StudyKind::aipw_strong_decay:
      return "aipw-strong-decay";
    case StudyKind::near_boundary:
      return "near-boundary";
    case StudyKind::clustered_icc_sweep:
      return "clustered-icc-sweep";
    case StudyKind::bootstrap_consistency:
      return "bootstrap-consistency";
  }
  return "?";
}

inline StudyKind parse_study_kind(const std::string& s) {
  if (s == "aipw-strong-decay") return StudyKind::aipw_strong_decay;
  if (s == "near-boundary") return StudyKind::near_boundary;
  if (s == "clustered-icc-sweep") return StudyKind::clustered_icc_sweep;
  if (s == "bootstrap-consistency") return StudyKind::bootstrap_consistency;
  throw ConfigError("unknown study kind: " + s);
}

// Full-refit jackknife cost caps; larger requests are rejected with guidance.
inline constexpr std::size_t kMaxJackknifeN = 5000;
inline constexpr std::size_t kMaxJackknifeJ = 500;
inline constexpr double kMaxFailureFraction = 0.05;

struct StudyConfig {
  StudyKind study_kind = StudyKind::aipw_strong_decay;
  std::vector<std::size_t> sizes;      // n for unit studies, J for clustered
  std::vector<double> icc_values{0.0};
  std::size_t reps = 500;
  std::size_t boot_b = 0;  // 0 disables the bootstrap and BCa columns
  std::uint64_t base_seed = 2024;
  double alpha = 0.05;
  // "auto" resolves to z for unit studies, t(J-1) for clustered ones.
  std::string critical = "auto";
  double lambda_q = kDefaultLambdaQ;
  double lambda_g = kDefaultLambdaG;
  std::string output_path;
  std::string format = "csv";
  std::size_t worker_count = 1;
  int cluster_size = 40;       // m, clustered studies only
  double sigma_total = 0.5;    // total residual SD held fixed across the ICC grid
  bool track_cn = false;       // compute C_n per replicate
  std::string records_path;    // optional per-replicate records file

  bool clustered() const { return study_kind == StudyKind::clustered_icc_sweep; }

  CriticalKind resolved_critical() const {
    if (critical == "z") return CriticalKind::z;
    if (critical == "t") return CriticalKind::t;
    if (critical == "auto")
      return clustered() ? CriticalKind::t : CriticalKind::z;
    throw ConfigError("critical must be one of auto, z, t");
  }

  void validate() const {
    if (reps < 1) throw ConfigError("reps must be >= 1");
    if (sizes.empty()) throw ConfigError("sizes must be nonempty");
    for (std::size_t i = 1; i < sizes.size(); ++i)
      if (sizes[i] <= sizes[i - 1]) throw ConfigError("sizes must be strictly ascending");
    if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must be in (0,1)");
    if (boot_b == 1) throw ConfigError("boot must be 0 (off) or >= 2");
    if (worker_count < 1) throw ConfigError("workers must be >= 1");
    resolved_critical();
    if (icc_values.empty()) throw ConfigError("icc list must be nonempty");
    for (double r : icc_values)
      if (!(r >= 0.0 && r < 1.0)) throw ConfigError("icc must be in [0,1)");
    if (clustered()) {
      if (cluster_size < 1) throw ConfigError("cluster size m must be >= 1");
      if (sizes.back() > kMaxJackknifeJ)
        throw ConfigError("J > " + std::to_string(kMaxJackknifeJ) +
                          " exceeds the cluster-jackknife cap; shrink the grid");
    } else if (study_kind != StudyKind::bootstrap_consistency &&
               sizes.back() > kMaxJackknifeN) {
      throw ConfigError("n > " + std::to_string(kMaxJackknifeN) +
                        " exceeds the LOO jackknife cap; shrink the grid");
    }
    if (!(format == "csv" || format == "markdown"))
      throw ConfigError("format must be csv or markdown");
    if (!clustered() && !(icc_values.size() == 1 && icc_values[0] == 0.0))
      throw ConfigError("icc grid is only meaningful for clustered-icc-sweep");
  }

  std::string echo() const {
    std::ostringstream os;
    os << "study=" << to_string(study_kind) << " sizes=";
    for (std::size_t i = 0; i < sizes.size(); ++i)
      os << (i ? "," : "") << sizes[i];
    os << " icc=";
    for (std::size_t i = 0; i < icc_values.size(); ++i)
      os << (i ? "," : "") << icc_values[i];
    os << " reps=" << reps << " boot=" << boot_b << " seed=" << base_seed
       << " alpha=" << alpha << " critical=" << critical << " lambda_q=" << lambda_q
       << " lambda_g=" << lambda_g << " m=" << cluster_size
       << " workers=" << worker_count;
    return os.str();
  }
};

struct ReplicateRecord {
  std::size_t replicate_index = 0;
  bool failed = false;
  std::string failure_code;
  double psi_hat = std::numeric_limits<double>::quiet_NaN();
  double var_sand = std::numeric_limits<double>::quiet_NaN();
  double var_jk = std::numeric_limits<double>::quiet_NaN();
  double var_hc = std::numeric_limits<double>::quiet_NaN();
  double rho = std::numeric_limits<double>::quiet_NaN();
  std::optional<double> var_boot;
  bool in_sand = false;
  bool in_jk = false;
  bool in_hc = false;
  std::optional<bool> in_boot;
  std::optional<bool> in_bca;
  double mean_true_d = std::numeric_limits<double>::quiet_NaN();
  double r_rem = std::numeric_limits<double>::quiet_NaN();
  std::optional<double> c_n;
  std::optional<double> d2;  // bootstrap-consistency distance
};

struct ReportRow {
  std::size_t size = 0;
  double icc = 0.0;
  double bias = std::numeric_limits<double>::quiet_NaN();
  double mcsd = std::numeric_limits<double>::quiet_NaN();
  double cp_sand = std::numeric_limits<double>::quiet_NaN();
  double cp_jk = std::numeric_limits<double>::quiet_NaN();
  double cp_boot = std::numeric_limits<double>::quiet_NaN();
  double cp_bca = std::numeric_limits<double>::quiet_NaN();
  double cp_hc = std::numeric_limits<double>::quiet_NaN();
  double rho_hat = std::numeric_limits<double>::quiet_NaN();  // mean var_jk / mean var_sand
  std::size_t n_failures = 0;
  // Extra aggregates consumed by the diagnostics and acceptance checks; not
  // part of the CSV column contract.
  double mean_var_sand = std::numeric_limits<double>::quiet_NaN();
  double mean_var_jk = std::numeric_limits<double>::quiet_NaN();
  double mean_var_boot = std::numeric_limits<double>::quiet_NaN();
  double mean_cn = std::numeric_limits<double>::quiet_NaN();
  double var_cn = std::numeric_limits<double>::quiet_NaN();
  double mean_d2 = std::numeric_limits<double>::quiet_NaN();
};

struct StudyReport {
  std::vector<ReportRow> rows;
  std::string config_echo;
  std::string build_id = "alevar 0.1.0";
  double wall_seconds = 0.0;
  // Per-cell raw records, in grid order (sizes outer, icc inner).
  std::vector<std::vector<ReplicateRecord>> cell_records;
};

namespace detail {

inline std::string classify_failure(const std::exception& e) {
  if (dynamic_cast<const PositivityError*>(&e)) return "positivity";
  if (dynamic_cast<const NonConvergenceError*>(&e)) return "nonconvergence";
  if (dynamic_cast<const DegenerateResponseError*>(&e)) return "separation";
  if (dynamic_cast<const SingularDesignError*>(&e) ||
      dynamic_cast<const SingularDowndateError*>(&e))
    return "singular";
  if (dynamic_cast<const JackknifeRefitError*>(&e)) return "jackknife";
  if (dynamic_cast<const BootstrapDegeneracyError*>(&e)) return "bootstrap";
  if (dynamic_cast<const DegenerateDistributionError*>(&e)) return "degenerate";
  return "other";
}

// Simple replicate fan-out: workers pull indices from a shared counter; each
// result lands in its own slot, so aggregation order never depends on timing.
template <typename F>
void parallel_for(std::size_t count, std::size_t workers, F body) {
  if (workers <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  auto run = [&] {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= count) return;
      body(i);
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t + 1 < workers; ++t) pool.emplace_back(run);
  run();
  for (auto& th : pool) th.join();
}

// Wald CIs + coverage flags shared by the unit and clustered paths.
inline void fill_intervals(ReplicateRecord& rec, const StudyConfig& cfg, double psi0,
                           double df, const std::vector<double>& loo,
                           const std::optional<BootstrapResult>& boot) {
  double level = 1.0 - cfg.alpha;
  CriticalKind kind = cfg.resolved_critical();
  rec.in_sand = wald_interval(rec.psi_hat, rec.var_sand, level, kind, df).contains(psi0);
  rec.in_jk = wald_interval(rec.psi_hat, rec.var_jk, level, kind, df).contains(psi0);
  rec.in_hc = wald_interval(rec.psi_hat, rec.var_hc, level, kind, df).contains(psi0);
  if (boot) {
    rec.var_boot = boot->var_boot;
    rec.in_boot =
        wald_interval(rec.psi_hat, boot->var_boot, level, kind, df).contains(psi0);
    if (boot->replicates.size() >= 50)
      rec.in_bca =
          bca_interval(boot->replicates, rec.psi_hat, loo, level).contains(psi0);
  }
}

inline ReplicateRecord run_unit_replicate(const StudyConfig& cfg, const DgpTruth& truth,
                                          std::size_t n, std::size_t cell,
                                          std::size_t rep) {
  ReplicateRecord rec;
  rec.replicate_index = rep;
  SplitRng rng = SplitRng(cfg.base_seed).split(cell).split(rep);
  try {
    Dataset data = gen_aipw_iid(n, truth, rng.split(0));
    AipwPipeline pipe;
    pipe.truth = &truth;
    pipe.mode = cfg.study_kind == StudyKind::near_boundary
                    ? NuisanceMode::near_boundary
                    : NuisanceMode::fitted;
    pipe.nb = NearBoundaryConfig{cfg.lambda_q, cfg.lambda_g, true};

    EstimateResult est = pipe.run(data);
    rec.psi_hat = est.psi_hat;
    rec.var_sand = sandwich(est.scores);
    std::vector<double> loo = aipw_loo_estimates(data, pipe);
    rec.var_jk = jackknife_variance(loo);
    auto [var_hc, rho] = hc_corrected(rec.var_sand, rec.var_jk);
    rec.var_hc = var_hc;
    rec.rho = rho;

    std::optional<BootstrapResult> boot;
    if (cfg.boot_b >= 2)
      boot = pairs_bootstrap([&](const Dataset& d) { return pipe.estimate(d); }, data,
                             cfg.boot_b, rng.split(1));
    fill_intervals(rec, cfg, truth.psi0, static_cast<double>(n - 1), loo, boot);

    RemainderOracle ro = remainder_oracle(est, data, truth);
    rec.mean_true_d = ro.mean_true_d;
    rec.r_rem = ro.r_rem;
    if (cfg.track_cn)
      rec.c_n = loo_perturbations(data, truth, est.psi_hat, loo).c_n;
  } catch (const std::exception& e) {
    rec.failed = true;
    rec.failure_code = classify_failure(e);
  }
  return rec;
}

inline ReplicateRecord run_cluster_replicate(const StudyConfig& cfg,
                                             const DgpTruth& truth, std::size_t big_j,
                                             std::size_t cell, std::size_t rep) {
  ReplicateRecord rec;
  rec.replicate_index = rep;
  SplitRng rng = SplitRng(cfg.base_seed).split(cell).split(rep);
  try {
    ClusteredDataset data = gen_clustered(big_j, truth, rng.split(0));
    ClusterAipwPipeline pipe;
    pipe.truth = &truth;
    pipe.mode = NuisanceMode::near_boundary;
    pipe.nb = NearBoundaryConfig{cfg.lambda_q, cfg.lambda_g, true};

    EstimateResult est = pipe.run(data);
    rec.psi_hat = est.psi_hat;
    // Per-cluster score sums rescaled to the estimator's own sqrt(J) scale.
    double n = static_cast<double>(data.rows.size());
    std::vector<double> cs = *est.cluster_scores;
    for (double& v : cs) v *= static_cast<double>(big_j) / n;
    rec.var_sand = cluster_sandwich(cs);

    std::vector<double> loo = aipw_loco_estimates(data, pipe);
    rec.var_jk = jackknife_variance(loo);
    auto [var_hc, rho] = hc_corrected(rec.var_sand, rec.var_jk);
    rec.var_hc = var_hc;
    rec.rho = rho;

    std::optional<BootstrapResult> boot;
    if (cfg.boot_b >= 2)
      boot = cluster_bootstrap(
          [&](const ClusteredDataset& d) { return pipe.estimate(d); }, data, cfg.boot_b,
          rng.split(1));
    fill_intervals(rec, cfg, truth.psi0, static_cast<double>(big_j - 1), loo, boot);

    RemainderOracle ro = remainder_oracle(est, data.units(), truth);
    rec.mean_true_d = ro.mean_true_d;
    rec.r_rem = ro.r_rem;
  } catch (const std::exception& e) {
    rec.failed = true;
    rec.failure_code = classify_failure(e);
  }
  return rec;
}

// Cells of the study grid, in emission order.
struct GridCell {
  std::size_t size = 0;
  double icc = 0.0;
};

inline std::vector<GridCell> study_grid(const StudyConfig& cfg) {
  std::vector<GridCell> g;
  for (std::size_t n : cfg.sizes)
    for (double r : cfg.icc_values) g.push_back({n, r});
  return g;
}

inline ReportRow aggregate_cell(const GridCell& cell, const StudyConfig& cfg,
                                double psi0, const std::vector<ReplicateRecord>& recs) {
  ReportRow row;
  row.size = cell.size;
  row.icc = cell.icc;
  std::vector<double> psi, vs, vj, vb, cn;
  std::size_t in_s = 0, in_j = 0, in_h = 0, in_b = 0, in_a = 0;
  std::size_t boot_avail = 0, bca_avail = 0;
  std::map<std::string, std::size_t> fail_counts;
  for (const auto& r : recs) {
    if (r.failed) {
      ++row.n_failures;
      ++fail_counts[r.failure_code];
      continue;
    }
    psi.push_back(r.psi_hat);
    vs.push_back(r.var_sand);
    vj.push_back(r.var_jk);
    if (r.var_boot) vb.push_back(*r.var_boot);
    if (r.c_n) cn.push_back(*r.c_n);
    in_s += r.in_sand;
    in_j += r.in_jk;
    in_h += r.in_hc;
    if (r.in_boot) {
      ++boot_avail;
      in_b += *r.in_boot;
    }
    if (r.in_bca) {
      ++bca_avail;
      in_a += *r.in_bca;
    }
  }
  if (row.n_failures > kMaxFailureFraction * static_cast<double>(recs.size())) {
    std::ostringstream os;
    os << "cell size=" << cell.size << " icc=" << cell.icc << ": " << row.n_failures
       << "/" << recs.size() << " replicates failed (";
    bool first = true;
    for (const auto& [code, cnt] : fail_counts) {
      os << (first ? "" : ", ") << code << "=" << cnt;
      first = false;
    }
    os << ")";
    throw StudyAbortError(os.str());
  }
  if (psi.empty()) return row;
  auto frac = [](std::size_t k, std::size_t d) {
    return d ? static_cast<double>(k) / static_cast<double>(d)
             : std::numeric_limits<double>::quiet_NaN();
  };
  row.bias = mean(psi) - psi0;
  row.mcsd = psi.size() >= 2 ? std::sqrt(sample_variance(psi))
                             : std::numeric_limits<double>::quiet_NaN();
  row.cp_sand = frac(in_s, psi.size());
  row.cp_jk = frac(in_j, psi.size());
  row.cp_hc = frac(in_h, psi.size());
  row.cp_boot = frac(in_b, boot_avail);
  row.cp_bca = frac(in_a, bca_avail);
  row.mean_var_sand = mean(vs);
  row.mean_var_jk = mean(vj);
  row.rho_hat = row.mean_var_jk / row.mean_var_sand;
  if (!vb.empty()) row.mean_var_boot = mean(vb);
  if (!cn.empty()) {
    row.mean_cn = mean(cn);
    row.var_cn = cn.size() >= 2 ? sample_variance(cn) : 0.0;
  }
  (void)cfg;
  return row;
}

// Bootstrap-consistency study: per size, the mean Mallows-2 distance between
// one-dataset bootstrap pivots and a shared bank of fresh-data MC pivots, for
// the mean-covariate functional (true value 0).
inline ReportRow run_consistency_cell(const StudyConfig& cfg, std::size_t n,
                                      std::size_t cell, std::size_t workers) {
  auto estimate = [](const Dataset& d) {
    KahanSum s;
    for (const auto& o : d) s.add(o.w);
    return s.value() / static_cast<double>(d.size());
  };
  DgpTruth truth;
  SplitRng cell_rng = SplitRng(cfg.base_seed).split(cell);
  double root_n = std::sqrt(static_cast<double>(n));
  std::size_t b = cfg.boot_b >= 2 ? cfg.boot_b : 200;
  // The Mallows distance between two finite pivot samples has a noise floor
  // of order min(B, bank)^{-1/2}; keep the MC bank at least as large as B so
  // raising B actually raises the diagnostic's resolution.
  std::size_t mc_reps = std::max<std::size_t>(500, b);
  std::vector<double> mc_pivots(mc_reps);
  SplitRng mc = cell_rng.split(0xA11CE);
  for (std::size_t r = 0; r < mc_reps; ++r) {
    Dataset fresh = gen_aipw_iid(n, truth, mc.split(r));
    mc_pivots[r] = root_n * estimate(fresh);
  }

  std::size_t n_datasets = cfg.reps;
  std::vector<double> d2(n_datasets);
  std::vector<double> psi(n_datasets);
  parallel_for(n_datasets, workers, [&](std::size_t d) {
    SplitRng rng = cell_rng.split(d);
    Dataset data = gen_aipw_iid(n, truth, rng.split(0));
    double psi_hat = estimate(data);
    psi[d] = psi_hat;
    auto boot = pairs_bootstrap(estimate, data, b, rng.split(1));
    std::vector<double> pivots(boot.replicates.size());
    for (std::size_t i = 0; i < pivots.size(); ++i)
      pivots[i] = root_n * (boot.replicates[i] - psi_hat);
    d2[d] = mallows2_1d(pivots, mc_pivots);
  });

  ReportRow row;
  row.size = n;
  row.bias = mean(psi);
  row.mcsd = psi.size() >= 2 ? std::sqrt(sample_variance(psi))
                             : std::numeric_limits<double>::quiet_NaN();
  row.mean_d2 = mean(d2);
  return row;
}

}  // namespace detail

inline StudyReport run_study(const StudyConfig& cfg) {
  cfg.validate();
  auto t0 = std::chrono::steady_clock::now();
  StudyReport report;
  report.config_echo = cfg.echo();

  std::vector<detail::GridCell> grid = detail::study_grid(cfg);
  for (std::size_t c = 0; c < grid.size(); ++c) {
    const auto& cell = grid[c];
    if (cfg.study_kind == StudyKind::bootstrap_consistency) {
      report.rows.push_back(
          detail::run_consistency_cell(cfg, cell.size, c, cfg.worker_count));
      report.cell_records.emplace_back();
      continue;
    }
    DgpTruth truth;
    if (cfg.clustered()) {
      truth.m = cfg.cluster_size;
      truth.set_icc(cell.icc, cfg.sigma_total);
    }
    std::vector<ReplicateRecord> recs(cfg.reps);
    detail::parallel_for(cfg.reps, cfg.worker_count, [&](std::size_t r) {
      recs[r] = cfg.clustered()
                    ? detail::run_cluster_replicate(cfg, truth, cell.size, c, r)
                    : detail::run_unit_replicate(cfg, truth, cell.size, c, r);
    });
    report.rows.push_back(detail::aggregate_cell(cell, cfg, truth.psi0, recs));
    report.cell_records.push_back(std::move(recs));
  }
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

// ---- Report emission -------------------------------------------------------

inline std::string format_real(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

inline void write_csv(const StudyReport& report, std::ostream& out) {
  out << "size,icc,bias,mcsd,cp_sand,cp_jk,cp_boot,cp_bca,cp_hc,rho_hat,n_failures\n";
  for (const auto& r : report.rows)
    out << r.size << ',' << format_real(r.icc) << ',' << format_real(r.bias) << ','
        << format_real(r.mcsd) << ',' << format_real(r.cp_sand) << ','
        << format_real(r.cp_jk) << ',' << format_real(r.cp_boot) << ','
        << format_real(r.cp_bca) << ',' << format_real(r.cp_hc) << ','
        << format_real(r.rho_hat) << ',' << r.n_failures << "\n";
}

inline void write_markdown(const StudyReport& report, std::ostream& out) {
  out << "| $n$ | ICC | Bias | MCSD | CP(Sand) | CP(JK) | CP(Boot) | CP(BCa) | "
         "CP(HC) | $\\hat\\rho$ | Failures |\n";
  out << "|---|---|---|---|---|---|---|---|---|---|---|\n";
  for (const auto& r : report.rows)
    out << "| " << r.size << " | " << format_real(r.icc) << " | " << format_real(r.bias)
        << " | " << format_real(r.mcsd) << " | " << format_real(r.cp_sand) << " | "
        << format_real(r.cp_jk) << " | " << format_real(r.cp_boot) << " | "
        << format_real(r.cp_bca) << " | " << format_real(r.cp_hc) << " | "
        << format_real(r.rho_hat) << " | " << r.n_failures << " |\n";
}

inline void emit_report(const StudyReport& report, const std::string& format,
                        const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write report file: " + path);
  if (format == "csv")
    write_csv(report, out);
  else if (format == "markdown")
    write_markdown(report, out);
  else
    throw ConfigError("format must be csv or markdown");
}

// Parsed CSV row; used by the round-trip contract and diagnose.
inline std::vector<ReportRow> parse_csv(std::istream& in) {
  std::vector<ReportRow> rows;
  std::string line;
  if (!std::getline(in, line)) return rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string field;
    std::vector<std::string> f;
    while (std::getline(ls, field, ',')) f.push_back(field);
    if (f.size() != 11) throw ConfigError("malformed CSV row: " + line);
    ReportRow r;
    r.size = static_cast<std::size_t>(std::stoull(f[0]));
    r.icc = std::stod(f[1]);
    r.bias = std::stod(f[2]);
    r.mcsd = std::stod(f[3]);
    r.cp_sand = std::stod(f[4]);
    r.cp_jk = std::stod(f[5]);
    r.cp_boot = std::stod(f[6]);
    r.cp_bca = std::stod(f[7]);
    r.cp_hc = std::stod(f[8]);
    r.rho_hat = std::stod(f[9]);
    r.n_failures = static_cast<std::size_t>(std::stoull(f[10]));
    rows.push_back(r);
  }
  return rows;
}

// ---- Per-replicate records (full precision, for diagnose) ------------------

inline std::string format_full(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

struct StoredRecord {
  std::size_t size = 0;
  double icc = 0.0;
  ReplicateRecord rec;
};

inline void write_records(const StudyReport& report, const StudyConfig& cfg,
                          const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write records file: " + path);
  out << "size,icc,rep,failed,code,psi_hat,var_sand,var_jk,var_boot,mean_true_d,"
         "r_rem,c_n\n";
  auto grid = detail::study_grid(cfg);
  for (std::size_t c = 0; c < report.cell_records.size(); ++c) {
    for (const auto& r : report.cell_records[c]) {
      out << grid[c].size << ',' << format_full(grid[c].icc) << ','
          << r.replicate_index << ',' << (r.failed ? 1 : 0) << ',' << r.failure_code
          << ',' << format_full(r.psi_hat) << ',' << format_full(r.var_sand) << ','
          << format_full(r.var_jk) << ','
          << format_full(r.var_boot ? *r.var_boot
                                    : std::numeric_limits<double>::quiet_NaN())
          << ',' << format_full(r.mean_true_d) << ',' << format_full(r.r_rem) << ','
          << format_full(r.c_n ? *r.c_n : std::numeric_limits<double>::quiet_NaN())
          << "\n";
    }
  }
}

inline std::vector<StoredRecord> read_records(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read records file: " + path);
  std::vector<StoredRecord> out;
  std::string line;
  if (!std::getline(in, line)) return out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string field;
    std::vector<std::string> f;
    while (std::getline(ls, field, ',')) f.push_back(field);
    if (f.size() != 12) throw ConfigError("malformed records row: " + line);
    StoredRecord s;
    s.size = static_cast<std::size_t>(std::stoull(f[0]));
    s.icc = std::stod(f[1]);
    s.rec.replicate_index = static_cast<std::size_t>(std::stoull(f[2]));
    s.rec.failed = f[3] == "1";
    s.rec.failure_code = f[4];
    s.rec.psi_hat = std::stod(f[5]);
    s.rec.var_sand = std::stod(f[6]);
    s.rec.var_jk = std::stod(f[7]);
    double vb = std::stod(f[8]);
    if (!std::isnan(vb)) s.rec.var_boot = vb;
    s.rec.mean_true_d = std::stod(f[9]);
    s.rec.r_rem = std::stod(f[10]);
    double cn = std::stod(f[11]);
    if (!std::isnan(cn)) s.rec.c_n = cn;
    out.push_back(s);
  }
  return out;
}

// ---- Config-file ingestion -------------------------------------------------

inline std::map<std::string, std::string> parse_key_values(std::istream& in) {
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    auto strip = [](std::string s) {
      auto b = s.find_first_not_of(" \t\r");
      auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    auto eq = line.find('=');
    if (eq == std::string::npos) {
      if (!strip(line).empty()) throw ConfigError("malformed config line: " + line);
      continue;
    }
    std::string key = strip(line.substr(0, eq));
    std::string val = strip(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("malformed config line: " + line);
    kv[key] = val;
  }
  return kv;
}

namespace detail {

inline std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream is(s);
  std::string tok;
  while (std::getline(is, tok, ',')) out.push_back(tok);
  return out;
}

}  // namespace detail

inline void apply_config_entry(StudyConfig& cfg, const std::string& key,
                               const std::string& val) {
  try {
    if (key == "study")
      cfg.study_kind = parse_study_kind(val);
    else if (key == "sizes") {
      cfg.sizes.clear();
      for (const auto& t : detail::split_commas(val))
        cfg.sizes.push_back(static_cast<std::size_t>(std::stoull(t)));
    } else if (key == "icc") {
      cfg.icc_values.clear();
      for (const auto& t : detail::split_commas(val))
        cfg.icc_values.push_back(std::stod(t));
    } else if (key == "reps")
      cfg.reps = static_cast<std::size_t>(std::stoull(val));
    else if (key == "boot")
      cfg.boot_b = static_cast<std::size_t>(std::stoull(val));
    else if (key == "seed")
      cfg.base_seed = std::stoull(val);
    else if (key == "alpha")
      cfg.alpha = std::stod(val);
    else if (key == "critical")
      cfg.critical = val;
    else if (key == "lambda") {
      auto parts = detail::split_commas(val);
      if (parts.size() != 2) throw ConfigError("lambda expects lambda_q,lambda_g");
      cfg.lambda_q = std::stod(parts[0]);
      cfg.lambda_g = std::stod(parts[1]);
    } else if (key == "lambda_q")
      cfg.lambda_q = std::stod(val);
    else if (key == "lambda_g")
      cfg.lambda_g = std::stod(val);
    else if (key == "workers")
      cfg.worker_count = static_cast<std::size_t>(std::stoull(val));
    else if (key == "out")
      cfg.output_path = val;
    else if (key == "format")
      cfg.format = val;
    else if (key == "m")
      cfg.cluster_size = std::stoi(val);
    else if (key == "sigma_total")
      cfg.sigma_total = std::stod(val);
    else if (key == "track_cn")
      cfg.track_cn = val == "1" || val == "true";
    else if (key == "records")
      cfg.records_path = val;
    else
      throw ConfigError("unknown config key: " + key);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception&) {
    throw ConfigError("bad value for config key " + key + ": " + val);
  }
}

inline StudyConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file: " + path);
  StudyConfig cfg;
  for (const auto& [k, v] : parse_key_values(in)) apply_config_entry(cfg, k, v);
  return cfg;
}

}  // namespace alevar

#endif
