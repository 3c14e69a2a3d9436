#pragma once

#include <Eigen/Dense>
#include <string>
#include <variant>

#include "json.hpp"
#include "pcprior/matern.hpp"

namespace pcprior {

/// Joint PC prior on (range, marginal variance), calibrated through
/// P(rho < rho0) = alpha_rho and P(sigma > sigma0) = alpha_sigma.
struct PcHyper {
  double rho0 = 0.1;
  double alpha_rho = 0.05;
  double sigma0 = 10.0;
  double alpha_sigma = 0.05;
  int dim = 2;
  double lambda_range = 0.0;  // -rho0^{d/2} log(alpha_rho)
  double lambda_sigma = 0.0;  // -log(alpha_sigma) / sigma0
};

PcHyper calibrate_pc(double rho0, double alpha_rho, double sigma0, double alpha_sigma, int dim);

/// log of (d lambda_range / 2) rho^{-1-d/2} exp(-lambda_range rho^{-d/2}).
double pc_range_logdensity(double rho, const PcHyper& hyper);
/// log of (lambda_sigma / 2) sigma^{-1} exp(-lambda_sigma sigma), a density in sigma^2.
double pc_variance_logdensity(double sigma2, const PcHyper& hyper);
/// Joint log-density in (rho, sigma^2); the sum of the two parts above.
double pc_logdensity(double rho, double sigma2, const PcHyper& hyper);

/// Rates of the PC prior in the SPDE parametrization: kappa has an
/// exponential prior on kappa^{d/2} with rate lambda1, and tau | kappa has
/// the precision PC prior with rate lambda3 / kappa^nu.
struct KappaTauHyper {
  double lambda1 = 1.0;
  double lambda3 = 1.0;
};

/// The (kappa, tau) rates that describe the same prior as `hyper` for smoothness nu.
KappaTauHyper kappa_tau_hyper(const PcHyper& hyper, double nu);

/// log of (lambda1 d / 2) kappa^{d/2-1} exp(-lambda1 kappa^{d/2}).
double pc_kappa_logdensity(double kappa, double lambda1, int dim);
/// log of (lambda1 lambda3 d / 4) tau^{-3/2} kappa^{d/2-1-nu}
///        exp(-lambda1 kappa^{d/2} - lambda3 kappa^{-nu} tau^{-1/2}).
double kappa_tau_logdensity(double kappa, double tau, const KappaTauHyper& hyper, double nu,
                            int dim);

/// Distance from the intrinsic base model kappa = 0, with unit constant.
double pc_distance(double kappa, int dim);

struct JeffreysRule {};

/// rho uniform on [lower, upper]; 1/sigma for the standard deviation.
struct UniformRange {
  double lower = 0.05;
  double upper = 2.0;
};

/// log rho uniform on [lower, upper]; 1/sigma for the standard deviation.
struct LogUniformRange {
  double lower = 0.05;
  double upper = 2.0;
};

using PriorSpec = std::variant<PcHyper, JeffreysRule, UniformRange, LogUniformRange>;

std::string prior_name(const PriorSpec& spec);
void validate(const PriorSpec& spec);

/// Jeffreys' rule prior for the exponential correlation model,
/// sigma^{-1} (tr(U^2) - tr(U)^2 / n)^{1/2} with U = (d Sigma / d rho) Sigma^{-1}.
/// Unnormalized; Sigma is the correlation matrix of the design.
double jeffreys_rule_logdensity(double rho, double sigma, const Design& design);

/// (1/2) log(tr(U^2) - tr(U)^2 / n) given the lower Cholesky factor of the
/// correlation matrix and its range derivative. Shared with the samplers.
double jeffreys_range_logfactor(const Eigen::MatrixXd& chol_lower, const Eigen::MatrixXd& dcorr);

double bounded_uniform_logdensity(double rho, double sigma, const UniformRange& spec);
double bounded_uniform_logdensity(double rho, double sigma, const LogUniformRange& spec);

/// Log-density in (rho, sigma) of any prior. Jeffreys needs the design.
double prior_logdensity_rho_sigma(const PriorSpec& spec, double rho, double sigma,
                                  const Design* design = nullptr);

/// Scaled KLD of a Matérn field from the intrinsic field:
/// (1/2) int_{R^d} [g - 1 - log g] dw, g = (|w|^2 / (kappa^2 + |w|^2))^alpha,
/// evaluated in radial form.
double scaled_kld(double kappa, double alpha, int dim);

/// KLD between the periodic fields on [-L/2, L/2]^d with kappa and kappa0,
/// truncated to |k_i| <= kmax. tau cancels.
double discrete_kld(double kappa, double kappa0, double alpha, int dim, double box_length,
                    int kmax);

nlohmann::json prior_to_json(const PriorSpec& spec);
PriorSpec prior_from_json(const nlohmann::json& j);

}  // namespace pcprior
