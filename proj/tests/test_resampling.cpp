#include <catch2/catch_amalgamated.hpp>

#include "alevar/dgp.hpp"
#include "alevar/resampling.hpp"

using namespace alevar;

namespace {

double data_mean(const Dataset& d) {
  double s = 0.0;
  for (const auto& o : d) s += o.y;
  return s / static_cast<double>(d.size());
}

Dataset from_values(const std::vector<double>& v) {
  Dataset d(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) d[i] = {0.0, 0, v[i]};
  return d;
}

}  // namespace

TEST_CASE("sandwich on hand values") {
  std::vector<double> scores{-1.0, 0.0, 1.0};
  // sum dev^2 = 2, n = 3: 2 / (2*3) = 1/3.
  REQUIRE(sandwich(scores) == Catch::Approx(1.0 / 3.0).margin(1e-15));
  std::vector<double> one{1.0};
  REQUIRE_THROWS_AS(sandwich(one), InvalidSizeError);
}

TEST_CASE("jackknife of the mean equals s^2/n on hand values") {
  Dataset d = from_values({1, 2, 3, 4, 5});
  JackknifeResult r = jackknife(data_mean, d);
  REQUIRE(r.var_jk == Catch::Approx(0.5).margin(1e-14));  // 2.5 / 5
}

TEST_CASE("jackknife of the mean equals s^2/n on 100 random datasets") {
  SplitRng rng(101);
  for (int rep = 0; rep < 100; ++rep) {
    SplitRng r = rng.split(rep);
    std::size_t n = 5 + r.below(40);
    std::vector<double> v(n);
    for (auto& x : v) x = 3.0 * r.normal() + 1.0;
    JackknifeResult jk = jackknife(data_mean, from_values(v));
    double target = sample_variance(v) / static_cast<double>(n);
    REQUIRE(std::fabs(jk.var_jk - target) < 1e-12);
  }
}

TEST_CASE("jackknife surfaces per-index failures") {
  Dataset d = from_values({1, 2, 3, 4, 5});
  auto fragile = [](const Dataset& x) -> double {
    for (const auto& o : x)
      if (o.y == 1.0) return data_mean(x);
    throw std::runtime_error("needs the first point");
  };
  try {
    jackknife(fragile, d);
    FAIL("expected jackknife refit error");
  } catch (const JackknifeRefitError& e) {
    REQUIRE(e.failed_indices == std::vector<std::size_t>{0});
  }
}

TEST_CASE("hc correction is pinned to the jackknife, bitwise") {
  auto [var_hc, rho] = hc_corrected(2.0, 3.0);
  REQUIRE(rho == 1.5);
  REQUIRE(var_hc == 3.0);
  SplitRng rng(7);
  for (int i = 0; i < 1000; ++i) {
    double vs = std::exp(rng.normal());
    double vj = std::exp(rng.normal());
    auto [hc, rh] = hc_corrected(vs, vj);
    REQUIRE(hc == vj);  // exact bit equality
    REQUIRE(rh == vj / vs);
  }
  REQUIRE_THROWS_AS(hc_corrected(0.0, 1.0), DegenerateDistributionError);
}

TEST_CASE("wald interval half-widths use the right critical values") {
  ConfidenceInterval z = wald_interval(0.0, 1.0, 0.95, CriticalKind::z);
  REQUIRE(z.upper == Catch::Approx(1.959964).margin(1e-5));
  REQUIRE(z.lower == Catch::Approx(-1.959964).margin(1e-5));
  ConfidenceInterval t9 = wald_interval(0.0, 1.0, 0.95, CriticalKind::t, 9.0);
  REQUIRE(t9.upper == Catch::Approx(2.262157).margin(1e-4));
  REQUIRE(z.contains(0.0));
  REQUIRE_FALSE(z.contains(2.5));
  REQUIRE_THROWS_AS(wald_interval(0.0, -1.0, 0.95, CriticalKind::z),
                    InvalidSizeError);
}

TEST_CASE("bootstrap of the mean estimates s^2/n") {
  SplitRng rng(11);
  std::vector<double> v(200);
  SplitRng gen = rng.split(0);
  for (auto& x : v) x = 2.0 * gen.normal();
  Dataset d = from_values(v);
  BootstrapResult b = pairs_bootstrap(data_mean, d, 2000, rng.split(1));
  double target = sample_variance(v) / 200.0;
  REQUIRE(b.var_boot == Catch::Approx(target).margin(0.15 * target));
}

TEST_CASE("bootstrap is a pure function of (data, B, seed)") {
  DgpTruth t;
  Dataset d = gen_aipw_iid(100, t, SplitRng(13));
  BootstrapResult a = pairs_bootstrap(data_mean, d, 100, SplitRng(5));
  BootstrapResult b = pairs_bootstrap(data_mean, d, 100, SplitRng(5));
  BootstrapResult c = pairs_bootstrap(data_mean, d, 100, SplitRng(6));
  REQUIRE(a.var_boot == b.var_boot);
  REQUIRE(a.replicates == b.replicates);
  REQUIRE(a.var_boot != c.var_boot);
}

TEST_CASE("variance estimators are scale-equivariant") {
  DgpTruth t;
  Dataset d = gen_aipw_iid(80, t, SplitRng(17));
  Dataset scaled = d;
  for (auto& o : scaled) o.y *= 3.0;
  double c2 = 9.0;

  JackknifeResult jk = jackknife(data_mean, d);
  JackknifeResult jk3 = jackknife(data_mean, scaled);
  REQUIRE(jk3.var_jk == Catch::Approx(c2 * jk.var_jk).margin(1e-12));

  // Same seed draws the same indices, so the bootstrap scales exactly too.
  BootstrapResult b = pairs_bootstrap(data_mean, d, 300, SplitRng(3));
  BootstrapResult b3 = pairs_bootstrap(data_mean, scaled, 300, SplitRng(3));
  REQUIRE(b3.var_boot == Catch::Approx(c2 * b.var_boot).margin(1e-12 * c2));
}

TEST_CASE("singleton clusters reduce cluster resampling to the unit case") {
  DgpTruth t;
  Dataset d = gen_aipw_iid(40, t, SplitRng(19));
  ClusteredDataset cd;
  cd.n_clusters = static_cast<int>(d.size());
  for (std::size_t i = 0; i < d.size(); ++i)
    cd.rows.push_back({static_cast<int>(i), 0, d[i]});
  auto cluster_mean = [](const ClusteredDataset& x) {
    double s = 0.0;
    for (const auto& r : x.rows) s += r.obs.y;
    return s / static_cast<double>(x.rows.size());
  };

  JackknifeResult a = jackknife(data_mean, d);
  JackknifeResult b = cluster_jackknife(cluster_mean, cd);
  REQUIRE(a.var_jk == Catch::Approx(b.var_jk).margin(1e-14));

  BootstrapResult pb = pairs_bootstrap(data_mean, d, 200, SplitRng(23));
  BootstrapResult cb = cluster_bootstrap(cluster_mean, cd, 200, SplitRng(23));
  REQUIRE(pb.replicates == cb.replicates);  // identical index streams
}

TEST_CASE("bootstrap retries degenerate resamples and caps out") {
  Dataset d = from_values({1, 2, 3, 4, 5, 6, 7, 8, 9, 10});
  int calls = 0;
  auto flaky = [&calls](const Dataset& x) -> double {
    ++calls;
    if (calls % 3 == 0) throw std::runtime_error("flake");
    return data_mean(x);
  };
  BootstrapResult b = pairs_bootstrap(flaky, d, 50, SplitRng(29));
  REQUIRE(b.retries > 0);
  REQUIRE(b.replicates.size() == 50);

  auto always = [](const Dataset&) -> double { throw std::runtime_error("no"); };
  REQUIRE_THROWS_AS(pairs_bootstrap(always, d, 10, SplitRng(31)),
                    BootstrapDegeneracyError);
}

TEST_CASE("bca with symmetric replicates and zero acceleration is percentile") {
  // Replicates symmetric around psi_hat, loo estimates symmetric: z0 = 0,
  // accel = 0, so BCa collapses to the plain percentile interval.
  std::vector<double> reps;
  for (int i = 1; i <= 100; ++i) {
    reps.push_back(0.5 - 0.01 * i);
    reps.push_back(0.5 + 0.01 * i);
  }
  std::vector<double> loo{0.4, 0.45, 0.55, 0.6};
  ConfidenceInterval ci = bca_interval(reps, 0.5, loo, 0.95);
  std::vector<double> sorted = reps;
  std::sort(sorted.begin(), sorted.end());
  REQUIRE(ci.lower == Catch::Approx(empirical_quantile_sorted(sorted, 0.025)).margin(1e-9));
  REQUIRE(ci.upper == Catch::Approx(empirical_quantile_sorted(sorted, 0.975)).margin(1e-9));
}

TEST_CASE("bca clamps z0 when every replicate falls on one side") {
  std::vector<double> reps;
  for (int i = 0; i < 60; ++i) reps.push_back(1.0 + 0.01 * i);
  std::vector<double> loo{0.9, 1.0, 1.1};
  BcaOptions opts;
  ConfidenceInterval ci = bca_interval(reps, 5.0, loo, 0.95, &opts);
  REQUIRE(opts.z0_clamped);
  REQUIRE(ci.lower >= reps.front());
  REQUIRE(ci.upper <= 1.0 + 0.01 * 59 + 1e-12);
}

TEST_CASE("bca rejects degenerate inputs") {
  std::vector<double> flat(60, 2.0);
  std::vector<double> loo{1.0, 2.0, 3.0};
  REQUIRE_THROWS_AS(bca_interval(flat, 2.0, loo, 0.95),
                    DegenerateDistributionError);
  std::vector<double> few{1.0, 2.0};
  REQUIRE_THROWS_AS(bca_interval(few, 1.5, loo, 0.95), InvalidSizeError);
}

TEST_CASE("bca coverage on the normal mean is near nominal") {
  SplitRng rng(37);
  int hit = 0;
  const int reps = 200;
  for (int r = 0; r < reps; ++r) {
    SplitRng rr = rng.split(r);
    std::vector<double> v(60);
    for (auto& x : v) x = rr.normal();
    Dataset d = from_values(v);
    double psi = data_mean(d);
    BootstrapResult b = pairs_bootstrap(data_mean, d, 400, rr.split(1));
    JackknifeResult jk = jackknife(data_mean, d);
    ConfidenceInterval ci = bca_interval(b.replicates, psi, jk.loo_estimates, 0.95);
    hit += ci.contains(0.0);
  }
  double cp = hit / static_cast<double>(reps);
  REQUIRE(cp > 0.88);
  REQUIRE(cp <= 1.0);
}
