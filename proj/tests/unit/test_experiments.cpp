#include <cmath>
#include <sstream>

#include "doctest.h"
#include "pcprior/error.hpp"
#include "pcprior/experiments.hpp"

using namespace pcprior;

TEST_CASE("table rows") {
  CHECK(table_rho0(0.1, 0.1, RowReading::multiplier) == doctest::Approx(0.01));
  CHECK(table_rho0(0.1, 0.1, RowReading::absolute) == 0.1);
  CHECK(table_rho0(1.6, 1.0, RowReading::multiplier) == doctest::Approx(1.6));
  CHECK_THROWS_AS(table_rho0(0.0, 1.0, RowReading::multiplier), DomainError);
}

TEST_CASE("PC prior draws satisfy the calibration statements") {
  const PcHyper h = calibrate_pc(0.3, 0.1, 2.0, 0.2, 2);
  Rng rng(14);
  const int n = 50000;
  int below = 0, above = 0;
  for (int k = 0; k < n; ++k) {
    const MaternParams p = sample_pc_prior(h, rng);
    below += p.rho < h.rho0;
    above += p.sigma2 > h.sigma0 * h.sigma0;
  }
  CHECK(std::abs(double(below) / n - 0.1) < 4.0 * std::sqrt(0.09 / n));
  CHECK(std::abs(double(above) / n - 0.2) < 4.0 * std::sqrt(0.16 / n));
}

TEST_CASE("direct log posterior adds the prior and the log-scale Jacobian") {
  const Design d = Design::uniform_random(15, 2, 2);
  const Realization r = sample_grf(d, MaternParams{0.2, 1.0, 0.5, 2}, 1);
  const ExponentialGp gp(d, r.values);
  const PcHyper h = calibrate_pc(0.05, 0.05, 10.0, 0.05, 2);
  const LogDensity lp = direct_log_posterior(gp, h);
  const LogDensity lj = direct_log_posterior(gp, JeffreysRule{});
  const LogDensity lu = direct_log_posterior(gp, UniformRange{0.1, 1.0});
  for (double rho : {0.15, 0.6}) {
    for (double s2 : {0.5, 2.0}) {
      const Eigen::Vector2d x(std::log(rho), std::log(s2));
      const double ll = gp.evaluate(rho, s2).loglik;
      // density in (log rho, log sigma^2) from the density in (rho, sigma^2)
      CHECK(lp(x) == doctest::Approx(ll + pc_logdensity(rho, s2, h) + x(0) + x(1)).epsilon(1e-12));
      CHECK(lj(x) == doctest::Approx(ll + jeffreys_rule_logdensity(rho, std::sqrt(s2), d) + x(0) +
                                     std::log(0.5 * std::sqrt(s2)))
                         .epsilon(1e-10));
      CHECK(lu(x) == doctest::Approx(ll - 0.5 * x(1) + x(0) + std::log(0.5 * std::sqrt(s2))).epsilon(1e-12));
    }
  }
  CHECK(std::isinf(lu(Eigen::Vector2d(std::log(5.0), 0.0))));
}

TEST_CASE("coverage studies are reproducible and independent of the thread count") {
  const Design d = Design::uniform_random(12, 2, kCoverageDesignSeed);
  CoverageOptions o;
  o.replicates = 6;
  o.chain.iterations = 1500;
  o.chain.burn_in = 500;
  o.seed = 3;
  o.threads = 1;
  const PcHyper h = calibrate_pc(0.01, 0.05, 10.0, 0.05, 2);
  const CoverageCell a = coverage_study(h, MaternParams{0.1, 1.0, 0.5, 2}, d, o);
  o.threads = 3;
  const CoverageCell b = coverage_study(h, MaternParams{0.1, 1.0, 0.5, 2}, d, o);
  CHECK(a.to_json().dump() == b.to_json().dump());
  CHECK(a.fits() + a.failures == 6);
  CHECK(a.coverage_range >= 0.0);
  CHECK(a.coverage_range <= 1.0);
  CHECK(a.standard_error(0.95) == doctest::Approx(std::sqrt(0.95 * 0.05 / a.fits())));
  CHECK(a.length_se_range > 0.0);
  CHECK(a.length_se_range < a.mean_length_range);
  CHECK(a.median_length_range > 0.0);

  std::ostringstream out;
  write_cells_csv(out, {a});
  CHECK(out.str().rfind("prior,rho0,sigma0,lower,upper,rho_true", 0) == 0);
  CHECK(out.str().find("pc,0.01,10,,,0.1,1,6,") != std::string::npos);

  const CoverageCell s = self_calibration_study(h, d, o);
  CHECK(s.truth_from_prior);
  CHECK_THROWS_AS(coverage_study(h, MaternParams{0.1, 1.0, 1.5, 2}, d, o), DomainError);
}

TEST_CASE("tail correlation of a ridge-shaped sample") {
  Chain c;
  c.names = {"log_rho", "log_sigma2"};
  const int n = 5000;
  c.samples.resize(n, 2);
  Rng rng(1);
  for (int i = 0; i < n; ++i) {
    const double a = rng.normal();
    c.samples(i, 0) = a;
    c.samples(i, 1) = 2.0 * (0.9 * a + 0.1 * rng.normal());
  }
  CHECK(tail_correlation(c, 0.1) > 0.8);
  for (int i = 0; i < n; ++i) c.samples(i, 1) = rng.normal();
  CHECK(std::abs(tail_correlation(c, 0.1)) < 0.2);
}

TEST_CASE("manifests serialize deterministically") {
  StudyManifest m{"coverage", 7, {{"n", 25}}, config_json(RwConfig{}), {{"k", 1}}, {"a.csv"}};
  const nlohmann::json j = m.to_json();
  CHECK(j.at("study") == "coverage");
  CHECK(j.at("seed") == 7);
  CHECK(j.at("version") == kVersion);
  CHECK(j.at("chain").at("iterations") == 30000);
  CHECK(j.dump() == m.to_json().dump());
  CHECK(config_json(NonStatConfig{}).at("burn_in") == 2000);
  CHECK(config_json(ProbitConfig{}).contains("hyper_steps"));
}

TEST_CASE("synthetic non-stationary data") {
  SyntheticConfig c;
  c.grid_nodes = 20;
  c.sites = 50;
  const StudyGrids g = synthetic_grids(c);
  CHECK(g.grid.size() == 400);
  CHECK(g.basis.size() == 2);
  CHECK(g.basis.functions.colwise().mean().cwiseAbs().maxCoeff() < 1e-12);
  const NonStatData a = synthetic_dataset(c, 4), b = synthetic_dataset(c, 4), e = synthetic_dataset(c, 5);
  CHECK(a.y == b.y);
  CHECK(a.y != e.y);
  CHECK(a.sites == e.sites);
  CHECK(a.fixed.cols() == 2);
  CHECK((a.fixed.col(0).array() == 1.0).all());
  CHECK(c.to_json().at("sites") == 50);
}
