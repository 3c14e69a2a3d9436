#include <cmath>
#include <numbers>
#include <sstream>

#include "doctest.h"
#include "pcprior/error.hpp"
#include "pcprior/grf.hpp"
#include "pcprior/priors.hpp"

using namespace pcprior;

TEST_CASE("sample_grf reproduces the covariance by Monte Carlo") {
  Eigen::MatrixXd loc(4, 2);
  loc << 0, 0, 0.1, 0, 0.5, 0.5, 1, 1;
  const Design d(loc);
  const MaternParams p{0.4, 2.0, 0.5, 2};
  const Eigen::MatrixXd sigma = cov_matrix(d, p);
  const int n = 20000;
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(4, 4);
  Rng rng(8);
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd v = sample_grf(d, p, rng).values;
    acc += v * v.transpose();
  }
  acc /= n;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      // sd of the product estimator is at most sqrt(2) sigma2 / sqrt(n)
      CHECK(std::abs(acc(i, j) - sigma(i, j)) < 5.0 * std::sqrt(2.0) * p.sigma2 / std::sqrt(double(n)));
    }
}

TEST_CASE("sampling is deterministic in the seed") {
  const Design d = Design::uniform_random(10, 2, 3);
  const MaternParams p{0.3, 1.0, 1.0, 2};
  CHECK(sample_grf(d, p, 42).values == sample_grf(d, p, 42).values);
  CHECK(sample_grf(d, p, 42).values != sample_grf(d, p, 43).values);
  GeoModel g;
  g.beta0 = 3.0;
  g.beta1 = -1.0;
  g.covariate = Eigen::VectorXd::LinSpaced(10, 0.0, 1.0);
  g.nugget_sd = 0.2;
  g.field = p;
  CHECK(sample_geomodel(g, d, 5).values == sample_geomodel(g, d, 5).values);
  g.covariate.resize(3);
  CHECK_THROWS_AS(sample_geomodel(g, d, 5), DomainError);
}

TEST_CASE("gaussian_loglik against the dense formula") {
  const Design d = Design::uniform_random(15, 2, 9);
  const MaternParams p{0.25, 1.3, 1.5, 2};
  const Eigen::VectorXd y = sample_grf(d, p, 1).values;
  const double nug = 0.3;
  Eigen::MatrixXd s = cov_matrix(d, p);
  s.diagonal().array() += nug * nug;
  const double want = -0.5 * (15 * std::log(2.0 * std::numbers::pi) + std::log(s.determinant()) +
                              y.dot(s.inverse() * y));
  CHECK(gaussian_loglik(y, d, p, nug) == doctest::Approx(want).epsilon(1e-10));
}

TEST_CASE("ExponentialGp agrees with the generic likelihood and Jeffreys factor") {
  const Design d = Design::uniform_random(20, 2, 12);
  const Eigen::VectorXd y = sample_grf(d, MaternParams{0.3, 1.0, 0.5, 2}, 2).values;
  const ExponentialGp gp(d, y);
  for (double rho : {0.05, 0.3, 2.0}) {
    for (double s2 : {0.3, 1.0, 4.0}) {
      const auto e = gp.evaluate(rho, s2, true);
      REQUIRE(e.ok);
      CHECK(e.loglik == doctest::Approx(gaussian_loglik(y, d, MaternParams{rho, s2, 0.5, 2})).epsilon(1e-10));
      CHECK(e.jeffreys_logfactor == doctest::Approx(jeffreys_rule_logdensity(rho, 1.0, d)).epsilon(1e-10));
    }
  }
  CHECK(!gp.evaluate(-1.0, 1.0).ok);
  CHECK(!gp.evaluate(1.0, 0.0).ok);
}

TEST_CASE("realization CSV round trip") {
  const Design d = Design::uniform_random(6, 2, 1);
  const Realization r = sample_grf(d, MaternParams{0.3, 1.0, 0.5, 2}, 4);
  std::ostringstream out;
  r.write_csv(out);
  std::istringstream in(out.str());
  const Realization back = Realization::read_csv(in);
  CHECK(back.values == r.values);
  CHECK(back.design.locations() == r.design.locations());
  CHECK(r.manifest().contains("seed"));
  std::istringstream bad("x,y,value\n");
  CHECK_THROWS_AS(Realization::read_csv(bad), ParseError);
}
