#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <cmath>
#include <limits>
#include <numbers>

#include "doctest.h"
#include "pcprior/error.hpp"
#include "pcprior/matern.hpp"
#include "pcprior/priors.hpp"
#include "pcprior/rng.hpp"

using namespace pcprior;

namespace {

PcHyper random_hyper(Rng& rng, int dim) {
  return calibrate_pc(std::exp(-4.0 + 5.0 * rng.uniform()), 0.01 + 0.5 * rng.uniform(),
                      std::exp(-2.0 + 5.0 * rng.uniform()), 0.01 + 0.5 * rng.uniform(), dim);
}

double sphere_area(int dim) {
  return 2.0 * std::pow(std::numbers::pi, 0.5 * dim) / std::tgamma(0.5 * dim);
}

// Independent radial KLD integral on [0, inf); g - 1 - log g written with
// expm1 so the slowly decaying tail keeps its digits.
double kld_oracle(double kappa, double alpha, int dim) {
  boost::math::quadrature::exp_sinh<double> q;
  auto f = [&](double r) {
    if (!(r > 0.0)) return 0.0;
    const double t = alpha * std::log1p(kappa * kappa / (r * r));
    if (!std::isfinite(t)) return 0.0;
    return (std::expm1(-t) + t) * std::pow(r, dim - 1);
  };
  return 0.5 * sphere_area(dim) * q.integrate(f, 1e-14);
}

}  // namespace

TEST_CASE("calibrate_pc rates") {
  const PcHyper h = calibrate_pc(0.1, 0.05, 10.0, 0.05, 2);
  CHECK(h.lambda_range == doctest::Approx(0.299573227355399).epsilon(1e-14));
  CHECK(h.lambda_sigma == doctest::Approx(0.299573227355399).epsilon(1e-14));
  const PcHyper h1 = calibrate_pc(4.0, 0.5, 1.0, 0.5, 1);
  CHECK(h1.lambda_range == doctest::Approx(2.0 * std::log(2.0)));
  CHECK_THROWS_AS(calibrate_pc(0.0, 0.05, 1.0, 0.05, 2), DomainError);
  CHECK_THROWS_AS(calibrate_pc(1.0, 1.0, 1.0, 0.05, 2), DomainError);
  CHECK_THROWS_AS(calibrate_pc(1.0, 0.05, -1.0, 0.05, 2), DomainError);
  CHECK_THROWS_AS(calibrate_pc(1.0, 0.05, 1.0, 0.05, 4), DomainError);
}

TEST_CASE("PC marginals integrate to one and hit their tail probabilities") {
  Rng rng(17);
  boost::math::quadrature::tanh_sinh<double> finite;
  boost::math::quadrature::exp_sinh<double> tail;
  for (int trial = 0; trial < 20; ++trial) {
    const PcHyper h = random_hyper(rng, 1 + trial % 3);
    auto range = [&](double r) { return r > 0.0 ? std::exp(pc_range_logdensity(r, h)) : 0.0; };
    auto var = [&](double s2) { return s2 > 0.0 ? std::exp(pc_variance_logdensity(s2, h)) : 0.0; };
    const double below = finite.integrate(range, 0.0, h.rho0);
    const double above = tail.integrate([&](double t) { return range(h.rho0 + t); });
    CHECK(below == doctest::Approx(h.alpha_rho).epsilon(1e-9));
    CHECK(below + above == doctest::Approx(1.0).epsilon(1e-9));
    const double s02 = h.sigma0 * h.sigma0;
    const double over = tail.integrate([&](double t) { return var(s02 + t); });
    CHECK(over == doctest::Approx(h.alpha_sigma).epsilon(1e-9));
    CHECK(over + finite.integrate(var, 0.0, s02) == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("(kappa, tau) density pushed to (rho, sigma^2) by a numerical Jacobian") {
  Rng rng(23);
  for (int trial = 0; trial < 50; ++trial) {
    const int dim = 1 + trial % 3;
    const double nu = 0.3 + 2.0 * rng.uniform();
    const PcHyper h = random_hyper(rng, dim);
    const KappaTauHyper kt = kappa_tau_hyper(h, nu);
    const double rho = std::exp(-2.0 + 3.0 * rng.uniform());
    const double s2 = std::exp(-2.0 + 3.0 * rng.uniform());
    const double c = matern_variance_constant(nu, dim);
    auto kappa_of = [&](double r) { return std::sqrt(8.0 * nu) / r; };
    auto tau_of = [&](double r, double v) { return c / (v * std::pow(kappa_of(r), 2.0 * nu)); };
    const double er = 1e-6 * rho, ev = 1e-6 * s2;
    const double dk_dr = (kappa_of(rho + er) - kappa_of(rho - er)) / (2.0 * er);
    const double dt_dr = (tau_of(rho + er, s2) - tau_of(rho - er, s2)) / (2.0 * er);
    const double dt_dv = (tau_of(rho, s2 + ev) - tau_of(rho, s2 - ev)) / (2.0 * ev);
    const double dk_dv = 0.0;
    const double jac = std::abs(dk_dr * dt_dv - dk_dv * dt_dr);
    const double pushed =
        kappa_tau_logdensity(kappa_of(rho), tau_of(rho, s2), kt, nu, dim) + std::log(jac);
    CHECK(pushed == doctest::Approx(pc_logdensity(rho, s2, h)).epsilon(1e-7));
  }
}

TEST_CASE("kappa marginal is exponential in the distance kappa^{d/2}") {
  boost::math::quadrature::exp_sinh<double> q;
  for (int dim = 1; dim <= 3; ++dim) {
    const double lambda1 = 0.7;
    const double total = q.integrate([&](double k) { return k > 0 ? std::exp(pc_kappa_logdensity(k, lambda1, dim)) : 0.0; });
    CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
    // P(distance > t) = exp(-lambda1 t)
    const double t = 1.3;
    const double k_t = std::pow(t, 2.0 / dim);
    const double upper = q.integrate([&](double s) { return std::exp(pc_kappa_logdensity(k_t + s, lambda1, dim)); });
    CHECK(upper == doctest::Approx(std::exp(-lambda1 * pc_distance(k_t, dim))).epsilon(1e-9));
  }
}

TEST_CASE("scaled KLD") {
  CHECK(scaled_kld(1.0, 2.0, 2) == doctest::Approx(1.5 * std::numbers::pi).epsilon(1e-10));
  for (int dim = 1; dim <= 3; ++dim) {
    for (double alpha : {0.5 * dim + 0.5, 0.5 * dim + 1.0, 0.5 * dim + 2.5}) {
      const double base = scaled_kld(1.0, alpha, dim);
      CHECK(base == doctest::Approx(kld_oracle(1.0, alpha, dim)).epsilon(1e-8));
      for (double k : {0.1, 0.5, 2.0, 10.0})
        CHECK(scaled_kld(k, alpha, dim) / base == doctest::Approx(std::pow(k, dim)).epsilon(1e-9));
    }
  }
  CHECK_THROWS_AS(scaled_kld(1.0, 1.0, 2), DivergenceError);
  CHECK_THROWS_AS(scaled_kld(-1.0, 2.0, 2), DomainError);
}

TEST_CASE("discrete KLD approaches the scaled KLD as the box grows") {
  const double target = scaled_kld(1.0, 2.0, 2);
  double previous = std::numeric_limits<double>::infinity();
  for (double box : {25.0, 50.0, 100.0}) {
    const double k0 = 1.0 / (box * box);
    const int kmax = static_cast<int>(std::ceil(40.0 * box / (2.0 * std::numbers::pi)));
    const double v = std::pow(2.0 * std::numbers::pi / box, 2) * discrete_kld(1.0, k0, 2.0, 2, box, kmax);
    const double err = std::abs(v / target - 1.0);
    CHECK(err < previous);
    previous = err;
  }
  CHECK(previous < 0.02);
  CHECK(discrete_kld(1.0, 1.0, 2.0, 2, 10.0, 20) == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("Jeffreys' rule prior against a dense finite-difference oracle") {
  const Design d = Design::uniform_random(12, 2, 5);
  const int n = d.size();
  for (double rho : {0.05, 0.3, 1.5}) {
    auto corr = [&](double r) {
      Eigen::MatrixXd c(n, n);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) c(i, j) = std::exp(-2.0 * d.distance(i, j) / r);
      return c;
    };
    const double e = 1e-6 * rho;
    const Eigen::MatrixXd dc = (corr(rho + e) - corr(rho - e)) / (2.0 * e);
    const Eigen::MatrixXd u = dc * corr(rho).inverse();
    const double q = (u * u).trace() - u.trace() * u.trace() / n;
    const double sigma = 1.7;
    CHECK(jeffreys_rule_logdensity(rho, sigma, d) ==
          doctest::Approx(-std::log(sigma) + 0.5 * std::log(q)).epsilon(1e-6));
  }
  CHECK_THROWS_AS(jeffreys_rule_logdensity(0.1, 1.0, Design::uniform_random(1, 2, 1)), DomainError);
}

TEST_CASE("bounded priors and dispatch") {
  const UniformRange u{0.1, 2.0};
  CHECK(std::isinf(bounded_uniform_logdensity(3.0, 1.0, u)));
  CHECK(bounded_uniform_logdensity(1.0, 2.0, u) - bounded_uniform_logdensity(0.5, 1.0, u) ==
        doctest::Approx(-std::log(2.0)));
  const LogUniformRange lu{0.1, 2.0};
  CHECK(bounded_uniform_logdensity(1.0, 1.0, lu) - bounded_uniform_logdensity(0.5, 1.0, lu) ==
        doctest::Approx(-std::log(2.0)));

  const PcHyper h = calibrate_pc(0.1, 0.05, 10.0, 0.05, 2);
  // density in sigma: Jacobian 2 sigma from sigma^2
  CHECK(prior_logdensity_rho_sigma(h, 0.2, 1.5) ==
        doctest::Approx(pc_logdensity(0.2, 2.25, h) + std::log(3.0)));
  CHECK_THROWS_AS(prior_logdensity_rho_sigma(JeffreysRule{}, 0.2, 1.0), DomainError);
  CHECK_THROWS_AS(validate(UniformRange{2.0, 1.0}), DomainError);

  for (const PriorSpec& s : {PriorSpec{h}, PriorSpec{JeffreysRule{}}, PriorSpec{u}, PriorSpec{lu}}) {
    const PriorSpec back = prior_from_json(prior_to_json(s));
    CHECK(back.index() == s.index());
    CHECK(prior_name(back) == prior_name(s));
  }
  CHECK(std::get<PcHyper>(prior_from_json(prior_to_json(h))).lambda_range == h.lambda_range);
  CHECK_THROWS_AS(prior_from_json(nlohmann::json{{"kind", "pc"}}), ParseError);
}
