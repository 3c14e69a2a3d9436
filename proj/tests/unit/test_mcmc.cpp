#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>
#include <sstream>

#include "doctest.h"
#include "pcprior/error.hpp"
#include "pcprior/mcmc.hpp"
#include "pcprior/special.hpp"

using namespace pcprior;

TEST_CASE("equal-tailed intervals use interpolated order statistics") {
  std::vector<double> v;
  for (int i = 100; i >= 0; --i) v.push_back(i);
  const Interval ci = equal_tailed_ci(v, 0.9);
  CHECK(ci.lower == doctest::Approx(5.0));
  CHECK(ci.upper == doctest::Approx(95.0));
  CHECK(ci.length() == doctest::Approx(90.0));
  CHECK(ci.contains(50.0));
  CHECK(!ci.contains(99.0));
  CHECK(sorted_quantile({0.0, 1.0}, 0.25) == doctest::Approx(0.25));
  CHECK_THROWS_AS(equal_tailed_ci(std::vector<double>{1.0}, 0.95), InsufficientSamplesError);
  CHECK_THROWS_AS(equal_tailed_ci(v, 1.5), DomainError);
}

TEST_CASE("rw_metropolis recovers the moments of a correlated Gaussian") {
  Eigen::Vector2d mu(1.0, -2.0);
  Eigen::Matrix2d cov;
  cov << 1.0, 0.8, 0.8, 2.0;
  const Eigen::Matrix2d prec = cov.inverse();
  LogDensity lp = [&](const Eigen::VectorXd& x) {
    const Eigen::Vector2d d = x - mu;
    return -0.5 * d.dot(prec * d);
  };
  RwConfig cfg;
  cfg.iterations = 60000;
  cfg.burn_in = 10000;
  cfg.seed = 3;
  const Chain c = rw_metropolis(lp, Eigen::Vector2d(5.0, 5.0), cfg, {"a", "b"});
  CHECK(c.acceptance_rate > 0.15);
  CHECK(c.acceptance_rate < 0.45);
  const Eigen::VectorXd a = c.column("a"), b = c.column(1);
  // effective sample size of an adapted 2-d random walk is well above 2000 here
  const double ess = 2000.0;
  CHECK(std::abs(a.mean() - 1.0) < 4.0 * std::sqrt(1.0 / ess));
  CHECK(std::abs(b.mean() + 2.0) < 4.0 * std::sqrt(2.0 / ess));
  const double va = (a.array() - a.mean()).square().mean();
  const double vb = (b.array() - b.mean()).square().mean();
  const double cab = ((a.array() - a.mean()) * (b.array() - b.mean())).mean();
  CHECK(va == doctest::Approx(1.0).epsilon(0.15));
  CHECK(vb == doctest::Approx(2.0).epsilon(0.15));
  CHECK(cab == doctest::Approx(0.8).epsilon(0.2));

  const Chain again = rw_metropolis(lp, Eigen::Vector2d(5.0, 5.0), cfg, {"a", "b"});
  CHECK(again.samples == c.samples);
  CHECK(c.column_index("b") == 1);
  CHECK_THROWS_AS(c.column_index("z"), DomainError);

  std::ostringstream out;
  c.write_csv(out);
  CHECK(out.str().rfind("iteration,a,b\n", 0) == 0);
  CHECK(c.manifest().at("acceptance_rate").get<double>() == c.acceptance_rate);
}

TEST_CASE("rw_metropolis rejects bad configurations") {
  LogDensity flat = [](const Eigen::VectorXd&) { return 0.0; };
  RwConfig cfg;
  cfg.iterations = 10;
  cfg.burn_in = 10;
  CHECK_THROWS_AS(rw_metropolis(flat, Eigen::VectorXd::Zero(1), cfg), DomainError);
  cfg.burn_in = 2;
  LogDensity nowhere = [](const Eigen::VectorXd&) { return -std::numeric_limits<double>::infinity(); };
  CHECK_THROWS_AS(rw_metropolis(nowhere, Eigen::VectorXd::Zero(1), cfg), SamplerError);
}

TEST_CASE("map_estimate finds the mode of a smooth target") {
  LogDensity lp = [](const Eigen::VectorXd& x) {
    return -(x(0) - 1.5) * (x(0) - 1.5) - 4.0 * (x(1) + 0.5) * (x(1) + 0.5) - (x(0) - 1.5) * (x(1) + 0.5);
  };
  const MapResult r = map_estimate(lp, Eigen::Vector2d(0.0, 0.0));
  CHECK(r.converged);
  CHECK(r.x(0) == doctest::Approx(1.5).epsilon(1e-4));
  CHECK(r.x(1) == doctest::Approx(-0.5).epsilon(1e-4));
}

TEST_CASE("truncated normal draws respect their bounds and means") {
  Rng rng(31);
  for (double m : {-3.0, 0.0, 2.0}) {
    double s_above = 0.0, s_below = 0.0;
    const int n = 40000;
    for (int i = 0; i < n; ++i) {
      const double a = truncated_normal_above(m, 0.0, rng);
      const double b = truncated_normal_below(m, 0.0, rng);
      REQUIRE(a > 0.0);
      REQUIRE(b < 0.0);
      s_above += a;
      s_below += b;
    }
    // E[X | X > 0] = m + phi(m) / Phi(m) for X ~ N(m, 1)
    const double mills = normal_pdf(m) / normal_cdf(m);
    CHECK(s_above / n == doctest::Approx(m + mills).epsilon(0.02));
    CHECK(s_below / n == doctest::Approx(m - normal_pdf(m) / normal_cdf(-m)).epsilon(0.02));
  }
}

TEST_CASE("probit_gibbs with one location matches the quadrature posterior mean of p") {
  const int trials = 20, k = 14;
  const PcHyper prior = calibrate_pc(0.1, 0.05, 10.0, 0.05, 2);
  // u | sigma ~ N(0, sigma^2), sigma^2 from the PC prior
  boost::math::quadrature::exp_sinh<double> outer;
  auto inner = [&](double s2, int extra) {
    const double s = std::sqrt(s2);
    auto f = [&](double z) {
      const double p = normal_cdf(s * z);
      return normal_pdf(z) * std::pow(p, k + extra) * std::pow(1.0 - p, trials - k);
    };
    return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, -12.0, 12.0, 15, 1e-12);
  };
  auto marg = [&](int extra) {
    return outer.integrate([&](double s2) {
      return s2 > 0.0 ? std::exp(pc_variance_logdensity(s2, prior)) * inner(s2, extra) : 0.0;
    });
  };
  const double want = marg(1) / marg(0);

  Eigen::MatrixXd loc(1, 2);
  loc << 0.5, 0.5;
  ProbitConfig cfg;
  cfg.iterations = 22000;
  cfg.burn_in = 2000;
  cfg.latent_thin = 1;
  cfg.seed = 5;
  const Chain c = probit_gibbs(Eigen::VectorXi::Constant(1, k), trials, Design(loc), prior, cfg);
  double mean = 0.0;
  for (Eigen::Index i = 0; i < c.latent.rows(); ++i) mean += normal_cdf(c.latent(i, 0));
  mean /= static_cast<double>(c.latent.rows());
  CHECK(std::abs(mean - want) < 0.02);
  CHECK(c.names == std::vector<std::string>{"log_rho", "log_sigma2"});

  CHECK_THROWS_AS(probit_gibbs(Eigen::VectorXi::Constant(1, 30), trials, Design(loc), prior, cfg), DomainError);
}
