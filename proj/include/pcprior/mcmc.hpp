#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"
#include "pcprior/matern.hpp"
#include "pcprior/priors.hpp"
#include "pcprior/rng.hpp"

namespace pcprior {

/// MCMC output. `samples` holds every iteration (burn-in first) on the
/// sampler's unconstrained scale; `latent` optionally holds thinned
/// post-burn-in draws of a latent vector. Gaussian conditionals may also
/// record, per thinned draw, the mean and variance of each latent entry given
/// the hyperparameters in `latent_mean` and `latent_var`.
struct Chain {
  std::vector<std::string> names;
  Eigen::MatrixXd samples;
  int burn_in = 0;
  double acceptance_rate = 0.0;
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;
  std::vector<std::string> warnings;
  Eigen::MatrixXd latent;
  Eigen::MatrixXd latent_mean;
  Eigen::MatrixXd latent_var;

  int iterations() const { return static_cast<int>(samples.rows()); }
  int column_index(const std::string& name) const;
  /// Post-burn-in draws of one column.
  Eigen::VectorXd column(const std::string& name) const;
  Eigen::VectorXd column(int index) const;

  void write_csv(std::ostream& out) const;
  nlohmann::json manifest() const;
};

struct Interval {
  double lower = 0.0;
  double upper = 0.0;
  double level = 0.95;

  double length() const { return upper - lower; }
  bool contains(double x) const { return lower <= x && x <= upper; }
};

/// Equal-tailed interval from empirical quantiles at (1-level)/2 and
/// 1-(1-level)/2, interpolating linearly between order statistics.
Interval equal_tailed_ci(std::vector<double> samples, double level = 0.95);
Interval equal_tailed_ci(const Eigen::VectorXd& samples, double level = 0.95);

/// Quantile with linear interpolation between order statistics (sorted input).
double sorted_quantile(const std::vector<double>& sorted, double p);

using LogDensity = std::function<double(const Eigen::VectorXd&)>;

/// Gaussian random-walk proposal whose covariance and scale adapt while
/// `adapting` is set: empirical covariance of the visited states plus a
/// Robbins-Monro update of the log scale toward the target acceptance.
class AdaptiveProposal {
 public:
  AdaptiveProposal(const Eigen::VectorXd& initial_sd, double target_accept);

  Eigen::VectorXd propose(const Eigen::VectorXd& x, Rng& rng) const;
  /// Record the state after an accept/reject step with acceptance probability `accept_prob`.
  void update(const Eigen::VectorXd& x, double accept_prob);
  void freeze() { adapting_ = false; }
  bool adapting() const { return adapting_; }
  double scale() const { return std::exp(log_scale_); }
  const Eigen::MatrixXd& covariance() const { return cov_; }

 private:
  void refresh_factor();

  double target_;
  double log_scale_;
  bool adapting_ = true;
  bool empirical_ = false;
  long steps_ = 0;
  long count_ = 0;
  Eigen::VectorXd mean_;
  Eigen::MatrixXd m2_;
  Eigen::MatrixXd cov_;
  Eigen::MatrixXd chol_;
};

struct RwConfig {
  int iterations = 30000;
  int burn_in = 10000;
  double target_accept = 0.30;
  std::uint64_t seed = 1;
  std::uint64_t stream = 0;
  double initial_sd = 0.3;
};

/// Adaptive random-walk Metropolis. Adaptation runs during burn-in only;
/// the post-burn-in chain uses a fixed proposal.
Chain rw_metropolis(const LogDensity& logpost, const Eigen::VectorXd& init, const RwConfig& config,
                    std::vector<std::string> names = {});

struct MapOptions {
  double initial_step = 0.5;
  double tolerance = 1e-6;
  int max_evaluations = 2000;
};

struct MapResult {
  Eigen::VectorXd x;
  double value = 0.0;
  bool converged = false;
  int evaluations = 0;
};

/// Nelder-Mead maximizer. Converged when the simplex diameter drops below
/// the tolerance; otherwise the best vertex is returned with converged = false.
MapResult map_estimate(const LogDensity& logpost, const Eigen::VectorXd& init,
                       const MapOptions& options = {});

/// N(mean, 1) truncated to (lower, inf).
double truncated_normal_above(double mean, double lower, Rng& rng);
/// N(mean, 1) truncated to (-inf, upper).
double truncated_normal_below(double mean, double upper, Rng& rng);

struct ProbitConfig {
  int iterations = 30000;
  int burn_in = 10000;
  int hyper_steps = 2;  // Metropolis updates of (rho, sigma^2) per sweep
  double target_accept = 0.30;
  int latent_thin = 20;
  std::uint64_t seed = 1;
  std::uint64_t stream = 0;
};

/// Binomial(trials, Phi(u(s_i))) observations with u an exponential-covariance
/// field under the joint PC prior. Data augmentation with one latent normal
/// per Bernoulli trial; the field has an exact Gaussian full conditional and
/// (log rho, log sigma^2) take adaptive Metropolis steps given the field.
/// Chain columns are log_rho and log_sigma2; `latent` holds thinned field draws.
Chain probit_gibbs(const Eigen::VectorXi& counts, int trials, const Design& design,
                   const PcHyper& prior, const ProbitConfig& config);

}  // namespace pcprior
