#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "pcprior/grf.hpp"
#include "pcprior/matern.hpp"
#include "pcprior/mcmc.hpp"
#include "pcprior/nonstat.hpp"
#include "pcprior/priors.hpp"

namespace pcprior {

inline constexpr const char* kVersion = "0.1.0";

/// Seed of the regenerated 25-point coverage design on [0,1]^2.
inline constexpr std::uint64_t kCoverageDesignSeed = 20160301;

/// Everything needed to replay a study run.
struct StudyManifest {
  std::string study;
  std::uint64_t seed = 0;
  nlohmann::json design;
  nlohmann::json chain;
  nlohmann::json settings;
  std::vector<std::string> outputs;
  std::string version = kVersion;

  nlohmann::json to_json() const;
};

nlohmann::json config_json(const RwConfig& c);
nlohmann::json config_json(const ProbitConfig& c);
nlohmann::json config_json(const NonStatConfig& c);

/// Coverage of equal-tailed intervals for range and marginal variance.
struct CoverageCell {
  std::string prior;
  nlohmann::json hyper;
  MaternParams truth;
  bool truth_from_prior = false;  // self-calibration: each replicate draws its own truth
  int replicates = 0;             // requested
  int failures = 0;               // excluded from the tallies
  double coverage_range = 0.0;
  double coverage_variance = 0.0;
  double mean_length_range = 0.0;
  double mean_length_variance = 0.0;
  double length_se_range = 0.0;  // standard error of the mean length
  double length_se_variance = 0.0;
  double median_length_range = 0.0;
  double median_length_variance = 0.0;

  int fits() const { return replicates - failures; }
  /// Binomial standard error of a coverage estimate p from fits() trials.
  double standard_error(double p) const;
  nlohmann::json to_json() const;
};

void write_cells_csv(std::ostream& out, const std::vector<CoverageCell>& cells);

/// Table rows for the PC range threshold are either multiples of the true
/// range (rho0 = row * rho_T) or absolute values of rho0.
enum class RowReading { multiplier, absolute };

double table_rho0(double row, double rho_true, RowReading reading);

/// Log posterior of (log rho, log sigma^2) for a directly observed
/// exponential-covariance field, Jacobian included.
LogDensity direct_log_posterior(const ExponentialGp& gp, const PriorSpec& prior);

/// Starting point for the direct-observation sampler: the posterior mode
/// found from a moment-based guess, kept inside any range bounds.
Eigen::VectorXd direct_start(const ExponentialGp& gp, const Design& design, const PriorSpec& prior);

/// Adaptive Metropolis fit of (log rho, log sigma^2); columns log_rho, log_sigma2.
Chain fit_direct(const Realization& data, const PriorSpec& prior, const RwConfig& config);

struct CoverageOptions {
  int replicates = 200;
  RwConfig chain;  // seed and stream are replaced per replicate
  double level = 0.95;
  std::uint64_t seed = 1;
  int threads = 0;
};

/// Frequentist coverage under direct observation. Replicate r uses the data
/// stream (seed, r) for every prior, so cells with the same seed share data.
CoverageCell coverage_study(const PriorSpec& prior, const MaternParams& truth, const Design& design,
                            const CoverageOptions& options);

/// Coverage when (rho, sigma^2) are drawn from the PC prior itself for every
/// replicate. A correct pipeline attains the nominal level.
CoverageCell self_calibration_study(const PcHyper& prior, const Design& design, const CoverageOptions& options);

/// Draw (rho, sigma^2) from the joint PC prior by inversion.
MaternParams sample_pc_prior(const PcHyper& prior, Rng& rng);

struct RidgeSummary {
  Chain pc;
  Chain jeffreys;
  Interval log_rho_pc, log_sigma_pc;
  Interval log_rho_jeffreys, log_sigma_jeffreys;
  double upper_sigma_pc = 0.0;        // 97.5% posterior quantile of sigma
  double upper_sigma_jeffreys = 0.0;
  double tail_correlation_pc = 0.0;   // corr(log rho, log sigma) in the top decile of rho
  double tail_correlation_jeffreys = 0.0;

  void write_csv(std::ostream& out) const;
  void write_samples_csv(std::ostream& out) const;
};

/// Correlation of (log rho, log sigma) among the draws whose rho lies in the top decile.
double tail_correlation(const Chain& chain, double fraction = 0.1);

RidgeSummary ridge_study(const Realization& data, const PcHyper& pc, const RwConfig& config);

struct LogisticOptions {
  int replicates = 100;
  int trials = 20;
  ProbitConfig chain;  // seed and stream are replaced per replicate
  double level = 0.95;
  std::uint64_t seed = 1;
  int threads = 0;
};

/// Binomial(trials, Phi(u(s_i))) counts for a field drawn with `rng`.
Eigen::VectorXi sample_probit_counts(const Design& design, const MaternParams& truth, int trials, Rng& rng);

CoverageCell logistic_coverage_study(const PcHyper& prior, const MaternParams& truth, const Design& design,
                                     const LogisticOptions& options);

/// Synthetic analog of the non-stationary application: an "elevation" bump
/// and its gradient magnitude as covariates on [0, extent]^2.
struct SyntheticConfig {
  double extent = 10.0;
  int grid_nodes = 50;             // per side, for data generation and final fits
  int sites = 300;
  double bump_x = 4.0, bump_y = 6.0, bump_width = 2.5;
  double rho = 2.0;
  double sigma = 1.0;
  double sigma_n = 0.1;
  double beta0 = 1.0;
  double beta1 = 0.5;              // coefficient of elevation at the sites
  Eigen::VectorXd theta1;          // truth on log R; empty means zero
  Eigen::VectorXd theta2;          // truth on log S; empty means zero
  std::uint64_t design_seed = 20160301;

  NonStatPrior prior;
  NonStatConfig chain;

  // calibration
  bool calibrate = true;
  std::vector<double> lambda_grid{0.001, 0.003, 0.01, 0.03, 0.1, 0.3, 1};
  int calibration_datasets = 60;
  int calibration_grid_nodes = 25;
  NonStatConfig calibration_chain{3000, 1000, 10, 0.25, 1, 0};
  double level = 0.95;

  bool ablations = false;
  int threads = 0;

  nlohmann::json to_json() const;
};

/// Elevation and gradient covariates on a grid, centred.
BasisSet synthetic_covariates(const Grid& grid, const SyntheticConfig& config);
Eigen::MatrixXd synthetic_sites(const SyntheticConfig& config);

/// One dataset from the model with the configured truth on the data grid.
NonStatData synthetic_dataset(const SyntheticConfig& config, std::uint64_t seed);

struct ModelScore {
  std::string model;
  double lambda = 0.0;
  LooScores scores;
  double acceptance_rate = 0.0;
  std::vector<std::string> warnings;
};

struct SyntheticReport {
  Eigen::VectorXd stationary_map;  // log sigma_N, log rho, log sigma
  std::optional<CoverageCalibration> calibration;
  double lambda = 0.0;
  std::vector<ModelScore> models;  // stationary, nonstationary, then ablations

  const ModelScore& model(const std::string& name) const;
  void write_comparison_csv(std::ostream& out) const;
};

/// Grid and covariate bases for the fits and for the calibration datasets.
struct StudyGrids {
  Grid grid;
  BasisSet basis;
  Grid calibration_grid;
  BasisSet calibration_basis;
};

StudyGrids synthetic_grids(const SyntheticConfig& config);

/// Stationary fit and MAP, optional coverage calibration of lambda, the
/// non-stationary fit and leave-one-out scores for every model. The same
/// basis drives log R and log S. Only the prior, chain, calibration and
/// ablation settings of `config` are used.
SyntheticReport nonstat_study(const StudyGrids& grids, const NonStatData& data, const SyntheticConfig& config,
                              std::uint64_t seed);

SyntheticReport nonstat_synthetic_study(const SyntheticConfig& config, const NonStatData& data,
                                        std::uint64_t seed);

}  // namespace pcprior
