// alevar: Monte Carlo studies of refined variance estimators for AIPW.
//
//   alevar simulate  --study aipw-strong-decay --sizes 200,500 --reps 500 --out r.csv
//   alevar diagnose  --records recs.csv --mode regime
//   alevar calibrate --out calibration.txt
//
// Exit status: 0 success, 1 study abort, 2 config error.

#include <CLI11.hpp>
#include <iostream>
#include <sstream>

#include "alevar/calibration.hpp"
#include "alevar/diagnostics.hpp"
#include "alevar/harness.hpp"

namespace {

using namespace alevar;

int cmd_simulate(const StudyConfig& cfg) {
  StudyReport report = run_study(cfg);
  if (!cfg.output_path.empty()) {
    emit_report(report, cfg.format, cfg.output_path);
  } else {
    std::ostringstream os;
    if (cfg.format == "csv")
      write_csv(report, os);
    else
      write_markdown(report, os);
    std::cout << os.str();
  }
  if (!cfg.records_path.empty()) write_records(report, cfg, cfg.records_path);
  std::cerr << "# " << report.config_echo << "\n# wall " << report.wall_seconds
            << "s, build " << report.build_id << "\n";
  return 0;
}

int cmd_diagnose(const std::string& records_path, const std::string& mode) {
  auto stored = read_records(records_path);
  if (stored.empty()) throw ConfigError("records file has no rows");

  // Group successful records by size, ascending.
  std::map<std::size_t, std::vector<const ReplicateRecord*>> by_size;
  for (const auto& s : stored)
    if (!s.rec.failed) by_size[s.size].push_back(&s.rec);

  if (mode == "regime") {
    std::vector<std::pair<std::size_t, double>> rho;
    for (const auto& [n, recs] : by_size) {
      KahanSum js, ss;
      for (const auto* r : recs) {
        js.add(r->var_jk);
        ss.add(r->var_sand);
      }
      rho.emplace_back(n, js.value() / ss.value());
    }
    RegimeVerdict v = regime_classify(rho);
    for (const auto& [n, r] : v.rho_by_n)
      std::cout << "n=" << n << " rho_hat=" << format_real(r) << "\n";
    std::cout << "trend=" << format_real(v.trend_statistic)
              << " verdict=" << to_string(v.verdict) << "\n";
    return 0;
  }
  if (mode == "decomposition") {
    for (const auto& [n, recs] : by_size) {
      if (recs.size() < 100) continue;
      std::vector<DecompositionInput> in;
      for (const auto* r : recs)
        in.push_back({r->psi_hat, r->mean_true_d, r->r_rem});
      DecompositionReport d = decomposition_oracle(in);
      std::cout << "n=" << n << " var_total=" << format_real(d.var_total)
                << " eif_term=" << format_real(d.eif_term)
                << " var_rem=" << format_real(d.var_rem)
                << " cross_term=" << format_real(d.cross_term)
                << " closure_gap=" << format_real(d.closure_gap)
                << " gap_mc_se=" << format_real(d.gap_mc_se) << "\n";
    }
    return 0;
  }
  if (mode == "cn") {
    std::vector<std::pair<std::size_t, std::vector<double>>> grouped;
    for (const auto& [n, recs] : by_size) {
      std::vector<double> cn;
      for (const auto* r : recs)
        if (r->c_n) cn.push_back(*r->c_n);
      if (!cn.empty()) grouped.emplace_back(n, std::move(cn));
    }
    for (const auto& s : cn_tracker(grouped))
      std::cout << "n=" << s.n << " mean_cn=" << format_real(s.mean_cn)
                << " var_cn=" << format_real(s.var_cn) << "\n";
    return 0;
  }
  throw ConfigError("diagnose mode must be regime, decomposition, or cn");
}

int cmd_calibrate(const std::string& out, double lambda_q, double lambda_g,
                  std::size_t n_ref, std::size_t reps, std::uint64_t seed) {
  DgpTruth truth;
  NearBoundaryConfig nb{lambda_q, lambda_g, true};
  Calibration c = calibrate(truth, nb, n_ref, reps, SplitRng(seed));
  write_calibration(c, out);
  std::cerr << "# kappa=" << c.kappa << " sigma2_eif=" << c.sigma2_eif
            << " c_r=" << c.c_r << " c_r_analytic=" << c.c_r_analytic << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"refined variance estimators for AIPW: simulate / diagnose / calibrate"};
  app.require_subcommand(1);

  StudyConfig cfg;
  std::string config_path, sizes_str, icc_str, lambda_str;

  auto* sim = app.add_subcommand("simulate", "run a Monte Carlo study");
  sim->add_option("--config", config_path, "key=value config file");
  std::string study_str;
  sim->add_option("--study", study_str, "study kind");
  sim->add_option("--sizes", sizes_str, "comma-separated n (or J) grid");
  sim->add_option("--icc", icc_str, "comma-separated ICC grid (clustered)");
  sim->add_option("--reps", cfg.reps, "replicates per cell");
  sim->add_option("--boot", cfg.boot_b, "bootstrap resamples (0 = off)");
  sim->add_option("--seed", cfg.base_seed, "base seed");
  sim->add_option("--alpha", cfg.alpha, "nominal miscoverage");
  sim->add_option("--critical", cfg.critical, "critical values: auto, z, or t");
  sim->add_option("--lambda", lambda_str, "lambda_q,lambda_g injection scales");
  sim->add_option("--workers", cfg.worker_count, "worker threads");
  sim->add_option("--out", cfg.output_path, "report path (default stdout)");
  sim->add_option("--format", cfg.format, "csv or markdown");
  sim->add_option("--m", cfg.cluster_size, "cluster size (clustered)");
  sim->add_flag("--track-cn", cfg.track_cn, "record C_n per replicate");
  sim->add_option("--records", cfg.records_path, "per-replicate records output");

  auto* diag = app.add_subcommand("diagnose", "analyze stored replicate records");
  std::string records_path, mode = "regime";
  diag->add_option("--records", records_path, "records file from simulate")->required();
  diag->add_option("--mode", mode, "regime, decomposition, or cn");

  auto* cal = app.add_subcommand("calibrate", "write the calibration-oracle file");
  std::string cal_out = "calibration.txt";
  double cal_lq = kDefaultLambdaQ, cal_lg = kDefaultLambdaG;
  std::size_t cal_nref = 1000, cal_reps = 4000;
  std::uint64_t cal_seed = 2024;
  cal->add_option("--out", cal_out, "calibration file path");
  cal->add_option("--lambda", lambda_str, "lambda_q,lambda_g");
  cal->add_option("--n-ref", cal_nref, "reference sample size");
  cal->add_option("--reps", cal_reps, "Monte Carlo replicates for c_r");
  cal->add_option("--seed", cal_seed, "seed for the c_r Monte Carlo");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (sim->parsed()) {
      StudyConfig base = config_path.empty() ? StudyConfig{} : load_config_file(config_path);
      // Flags given on the command line override the config file.
      auto flag = [&](const std::string& name) { return sim->count("--" + name) > 0; };
      if (!flag("reps")) cfg.reps = base.reps;
      if (!flag("boot")) cfg.boot_b = base.boot_b;
      if (!flag("seed")) cfg.base_seed = base.base_seed;
      if (!flag("alpha")) cfg.alpha = base.alpha;
      if (!flag("critical")) cfg.critical = base.critical;
      if (!flag("workers")) cfg.worker_count = base.worker_count;
      if (!flag("out")) cfg.output_path = base.output_path;
      if (!flag("format")) cfg.format = base.format;
      if (!flag("m")) cfg.cluster_size = base.cluster_size;
      if (!flag("track-cn")) cfg.track_cn = base.track_cn;
      if (!flag("records")) cfg.records_path = base.records_path;
      cfg.study_kind = base.study_kind;
      cfg.sizes = base.sizes;
      cfg.icc_values = base.icc_values;
      cfg.lambda_q = base.lambda_q;
      cfg.lambda_g = base.lambda_g;
      cfg.sigma_total = base.sigma_total;
      if (!study_str.empty()) apply_config_entry(cfg, "study", study_str);
      if (!sizes_str.empty()) apply_config_entry(cfg, "sizes", sizes_str);
      if (!icc_str.empty()) apply_config_entry(cfg, "icc", icc_str);
      if (!lambda_str.empty()) apply_config_entry(cfg, "lambda", lambda_str);
      cfg.validate();
      return cmd_simulate(cfg);
    }
    if (diag->parsed()) return cmd_diagnose(records_path, mode);
    if (cal->parsed()) {
      if (!lambda_str.empty()) {
        StudyConfig tmp;
        apply_config_entry(tmp, "lambda", lambda_str);
        cal_lq = tmp.lambda_q;
        cal_lg = tmp.lambda_g;
      }
      return cmd_calibrate(cal_out, cal_lq, cal_lg, cal_nref, cal_reps, cal_seed);
    }
  } catch (const StudyAbortError& e) {
    std::cerr << "study aborted: " << e.what() << "\n";
    return 1;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
