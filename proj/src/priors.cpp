#include "pcprior/priors.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "pcprior/error.hpp"
#include "pcprior/quadrature.hpp"
#include "pcprior/special.hpp"

namespace pcprior {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

bool positive(double x) { return x > 0.0 && std::isfinite(x); }
bool probability(double a) { return a > 0.0 && a < 1.0; }

void check_bounds(double lower, double upper) {
  require(positive(lower) && positive(upper), "range bounds must be positive");
  require(lower < upper, "range bounds must satisfy lower < upper");
}

// Half the surface area of the unit sphere in R^d.
double half_sphere_area(int dim) {
  switch (dim) {
    case 1:
      return 1.0;
    case 2:
      return std::numbers::pi;
    case 3:
      return 2.0 * std::numbers::pi;
  }
  throw DomainError("dim must be 1, 2 or 3");
}

}  // namespace

PcHyper calibrate_pc(double rho0, double alpha_rho, double sigma0, double alpha_sigma, int dim) {
  require(positive(rho0), "rho0 must be positive");
  require(positive(sigma0), "sigma0 must be positive");
  require(probability(alpha_rho), "alpha_rho must lie in (0,1)");
  require(probability(alpha_sigma), "alpha_sigma must lie in (0,1)");
  require(dim >= 1 && dim <= 3, "dim must be 1, 2 or 3");
  PcHyper h;
  h.rho0 = rho0;
  h.alpha_rho = alpha_rho;
  h.sigma0 = sigma0;
  h.alpha_sigma = alpha_sigma;
  h.dim = dim;
  h.lambda_range = -std::pow(rho0, 0.5 * dim) * std::log(alpha_rho);
  h.lambda_sigma = -std::log(alpha_sigma) / sigma0;
  return h;
}

double pc_range_logdensity(double rho, const PcHyper& hyper) {
  require(positive(rho), "rho must be positive");
  const double half_d = 0.5 * hyper.dim;
  const double log_rho = std::log(rho);
  return std::log(half_d * hyper.lambda_range) - (1.0 + half_d) * log_rho -
         hyper.lambda_range * std::exp(-half_d * log_rho);
}

double pc_variance_logdensity(double sigma2, const PcHyper& hyper) {
  require(positive(sigma2), "sigma2 must be positive");
  const double sigma = std::sqrt(sigma2);
  return std::log(0.5 * hyper.lambda_sigma) - std::log(sigma) - hyper.lambda_sigma * sigma;
}

double pc_logdensity(double rho, double sigma2, const PcHyper& hyper) {
  return pc_range_logdensity(rho, hyper) + pc_variance_logdensity(sigma2, hyper);
}

KappaTauHyper kappa_tau_hyper(const PcHyper& hyper, double nu) {
  require(positive(nu), "nu must be positive");
  KappaTauHyper k;
  k.lambda1 = hyper.lambda_range * std::pow(8.0 * nu, -0.25 * hyper.dim);
  k.lambda3 = hyper.lambda_sigma * std::sqrt(matern_variance_constant(nu, hyper.dim));
  return k;
}

double pc_kappa_logdensity(double kappa, double lambda1, int dim) {
  require(positive(kappa), "kappa must be positive");
  require(positive(lambda1), "lambda1 must be positive");
  const double half_d = 0.5 * dim;
  return std::log(lambda1 * half_d) + (half_d - 1.0) * std::log(kappa) -
         lambda1 * std::pow(kappa, half_d);
}

double kappa_tau_logdensity(double kappa, double tau, const KappaTauHyper& hyper, double nu,
                            int dim) {
  require(positive(kappa), "kappa must be positive");
  require(positive(tau), "tau must be positive");
  require(positive(hyper.lambda1) && positive(hyper.lambda3), "lambda1, lambda3 must be positive");
  const double half_d = 0.5 * dim;
  const double log_k = std::log(kappa);
  const double log_t = std::log(tau);
  return std::log(hyper.lambda1 * hyper.lambda3 * dim / 4.0) - 1.5 * log_t +
         (half_d - 1.0 - nu) * log_k - hyper.lambda1 * std::exp(half_d * log_k) -
         hyper.lambda3 * std::exp(-nu * log_k - 0.5 * log_t);
}

double pc_distance(double kappa, int dim) {
  require(kappa >= 0.0, "kappa must be nonnegative");
  return std::pow(kappa, 0.5 * dim);
}

std::string prior_name(const PriorSpec& spec) {
  struct {
    std::string operator()(const PcHyper&) const { return "pc"; }
    std::string operator()(const JeffreysRule&) const { return "jeffreys_rule"; }
    std::string operator()(const UniformRange&) const { return "uniform"; }
    std::string operator()(const LogUniformRange&) const { return "log_uniform"; }
  } v;
  return std::visit(v, spec);
}

void validate(const PriorSpec& spec) {
  if (const auto* pc = std::get_if<PcHyper>(&spec)) {
    calibrate_pc(pc->rho0, pc->alpha_rho, pc->sigma0, pc->alpha_sigma, pc->dim);
  } else if (const auto* u = std::get_if<UniformRange>(&spec)) {
    check_bounds(u->lower, u->upper);
  } else if (const auto* lu = std::get_if<LogUniformRange>(&spec)) {
    check_bounds(lu->lower, lu->upper);
  }
}

double jeffreys_range_logfactor(const Eigen::MatrixXd& chol_lower, const Eigen::MatrixXd& dcorr) {
  const auto n = static_cast<double>(chol_lower.rows());
  const auto tri = chol_lower.triangularView<Eigen::Lower>();
  // W = L^{-1} D L^{-T}; tr(U) = tr(W), tr(U^2) = ||W||_F^2.
  Eigen::MatrixXd w = tri.solve(dcorr);
  w = tri.solve(w.transpose().eval());
  const double tr = w.trace();
  const double tr2 = w.squaredNorm();
  const double q = tr2 - tr * tr / n;
  if (!(q > 0.0)) return kNegInf;
  return 0.5 * std::log(q);
}

double jeffreys_rule_logdensity(double rho, double sigma, const Design& design) {
  require(positive(rho), "rho must be positive");
  require(positive(sigma), "sigma must be positive");
  require(design.size() >= 2, "Jeffreys' rule prior needs at least two locations");
  const int n = design.size();
  Eigen::MatrixXd corr(n, n);
  Eigen::MatrixXd dcorr(n, n);
  const MaternParams unit{rho, 1.0, 0.5, design.dim()};
  for (int i = 0; i < n; ++i) {
    corr(i, i) = 1.0;
    dcorr(i, i) = 0.0;
    for (int j = i + 1; j < n; ++j) {
      const double h = design.distance(i, j);
      corr(i, j) = corr(j, i) = matern_cov(h, unit);
      dcorr(i, j) = dcorr(j, i) = dcov_drho(h, unit);
    }
  }
  const Eigen::MatrixXd l = cholesky_lower(corr, 1.0);
  return -std::log(sigma) + jeffreys_range_logfactor(l, dcorr);
}

double bounded_uniform_logdensity(double rho, double sigma, const UniformRange& spec) {
  if (!(rho >= spec.lower && rho <= spec.upper) || !(sigma > 0.0)) return kNegInf;
  return -std::log(sigma);
}

double bounded_uniform_logdensity(double rho, double sigma, const LogUniformRange& spec) {
  if (!(rho >= spec.lower && rho <= spec.upper) || !(sigma > 0.0)) return kNegInf;
  return -std::log(sigma) - std::log(rho);
}

double prior_logdensity_rho_sigma(const PriorSpec& spec, double rho, double sigma,
                                  const Design* design) {
  if (const auto* pc = std::get_if<PcHyper>(&spec)) {
    // density in sigma = density in sigma^2 times 2 sigma
    return pc_logdensity(rho, sigma * sigma, *pc) + std::log(2.0 * sigma);
  }
  if (std::holds_alternative<JeffreysRule>(spec)) {
    if (design == nullptr) throw DomainError("Jeffreys' rule prior needs a design");
    return jeffreys_rule_logdensity(rho, sigma, *design);
  }
  if (const auto* u = std::get_if<UniformRange>(&spec)) {
    return bounded_uniform_logdensity(rho, sigma, *u);
  }
  return bounded_uniform_logdensity(rho, sigma, std::get<LogUniformRange>(spec));
}

double scaled_kld(double kappa, double alpha, int dim) {
  require(positive(kappa), "kappa must be positive");
  require(dim >= 1 && dim <= 3, "scaled KLD is finite only for dim 1, 2 or 3");
  require(std::isfinite(alpha), "alpha must be finite");
  if (!(alpha > 0.5 * dim)) {
    throw DivergenceError("scaled KLD needs alpha > dim/2 (positive smoothness)");
  }
  const double k2 = kappa * kappa;
  auto integrand = [=](double r) {
    if (r <= 0.0) return 0.0;
    const double t = alpha * std::log1p(k2 / (r * r));
    return kld_term_from_log(t) * std::pow(r, dim - 1);
  };
  QuadratureOptions opts;
  opts.abs_tol = 0.0;
  opts.rel_tol = 1e-13;
  const double split1 = kappa;
  const double split2 = 10.0 * kappa;
  double total = integrate(integrand, 0.0, split1, opts).value;
  total += integrate(integrand, split1, split2, opts).value;
  // r = split2 / u maps [split2, inf) onto (0, 1]
  auto tail = [&](double u) {
    if (u <= 0.0) return 0.0;
    const double r = split2 / u;
    return integrand(r) * split2 / (u * u);
  };
  total += integrate(tail, 0.0, 1.0, opts).value;
  return half_sphere_area(dim) * total;
}

double discrete_kld(double kappa, double kappa0, double alpha, int dim, double box_length,
                    int kmax) {
  require(positive(kappa) && positive(kappa0), "kappa and kappa0 must be positive");
  require(positive(alpha), "alpha must be positive");
  require(positive(box_length), "box length must be positive");
  require(kmax >= 0, "kmax must be nonnegative");
  require(dim >= 1 && dim <= 3, "dim must be 1, 2 or 3");
  const double step = 2.0 * std::numbers::pi / box_length;
  const double k2 = kappa * kappa;
  const double k02 = kappa0 * kappa0;
  // Term for ratio lambda_k(kappa) / lambda_k(kappa0), which is the ratio
  // of spectral densities f_kappa / f_kappa0.
  auto term = [&](double w2) { return kld_term_from_log(alpha * std::log((k2 + w2) / (k02 + w2))); };
  double total = 0.0;
  // Sum over nonnegative index vectors with 2^(#nonzero) multiplicity.
  auto weight = [](int k) { return k == 0 ? 1.0 : 2.0; };
  if (dim == 1) {
    for (int a = 0; a <= kmax; ++a) total += weight(a) * term(std::pow(step * a, 2));
  } else if (dim == 2) {
    for (int a = 0; a <= kmax; ++a) {
      double row = 0.0;
      const double wa = std::pow(step * a, 2);
      for (int b = 0; b <= kmax; ++b) row += weight(b) * term(wa + std::pow(step * b, 2));
      total += weight(a) * row;
    }
  } else {
    for (int a = 0; a <= kmax; ++a) {
      const double wa = std::pow(step * a, 2);
      for (int b = 0; b <= kmax; ++b) {
        const double wab = wa + std::pow(step * b, 2);
        double row = 0.0;
        for (int c = 0; c <= kmax; ++c) row += weight(c) * term(wab + std::pow(step * c, 2));
        total += weight(a) * weight(b) * row;
      }
    }
  }
  return 0.5 * total;
}

nlohmann::json prior_to_json(const PriorSpec& spec) {
  nlohmann::json j;
  j["type"] = prior_name(spec);
  nlohmann::json h = nlohmann::json::object();
  if (const auto* pc = std::get_if<PcHyper>(&spec)) {
    h["rho0"] = pc->rho0;
    h["alpha_rho"] = pc->alpha_rho;
    h["sigma0"] = pc->sigma0;
    h["alpha_sigma"] = pc->alpha_sigma;
    h["dim"] = pc->dim;
    h["lambda_range"] = pc->lambda_range;
    h["lambda_sigma"] = pc->lambda_sigma;
  } else if (const auto* u = std::get_if<UniformRange>(&spec)) {
    h["lower"] = u->lower;
    h["upper"] = u->upper;
  } else if (const auto* lu = std::get_if<LogUniformRange>(&spec)) {
    h["lower"] = lu->lower;
    h["upper"] = lu->upper;
  }
  j["hyperparameters"] = h;
  return j;
}

PriorSpec prior_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("type")) throw ParseError("prior JSON needs a 'type' field");
  const std::string type = j.at("type").get<std::string>();
  const nlohmann::json h = j.value("hyperparameters", nlohmann::json::object());
  try {
    if (type == "pc") {
      return calibrate_pc(h.at("rho0").get<double>(), h.at("alpha_rho").get<double>(),
                          h.at("sigma0").get<double>(), h.at("alpha_sigma").get<double>(),
                          h.value("dim", 2));
    }
    if (type == "jeffreys_rule") return JeffreysRule{};
    if (type == "uniform" || type == "log_uniform") {
      const double lo = h.at("lower").get<double>();
      const double hi = h.at("upper").get<double>();
      check_bounds(lo, hi);
      if (type == "uniform") return UniformRange{lo, hi};
      return LogUniformRange{lo, hi};
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("prior JSON: ") + e.what());
  }
  throw ParseError("unknown prior type '" + type + "'");
}

}  // namespace pcprior
