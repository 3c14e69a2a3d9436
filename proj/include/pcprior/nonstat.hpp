#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "pcprior/matern.hpp"
#include "pcprior/mcmc.hpp"
#include "pcprior/priors.hpp"
#include "pcprior/rng.hpp"

namespace pcprior {

using SparseMatrix = Eigen::SparseMatrix<double>;

/// Regular grid of square cells on a rectangle. Nodes sit at cell centres and
/// are numbered row-major (x fastest).
class Grid {
 public:
  Grid() = default;
  Grid(double x0, double x1, double y0, double y1, int nx, int ny);

  int nx() const { return nx_; }
  int ny() const { return ny_; }
  int size() const { return nx_ * ny_; }
  double h() const { return h_; }
  double x0() const { return x0_; }
  double x1() const { return x1_; }
  double y0() const { return y0_; }
  double y1() const { return y1_; }
  int index(int ix, int iy) const { return iy * nx_ + ix; }
  Eigen::Vector2d node(int k) const;
  Eigen::MatrixXd nodes() const;
  bool on_boundary(int k) const;
  /// Distance from node k to the nearest edge of the rectangle.
  double boundary_distance(int k) const;

  /// Unit-weight graph Laplacian of the 5-point stencil; Neumann edges simply
  /// lose their outside neighbour.
  SparseMatrix laplacian() const;
  /// Bilinear interpolation weights (sites x nodes). Sites closer to the edge
  /// than half a cell use the nearest row/column of nodes.
  SparseMatrix interpolation(const Eigen::MatrixXd& sites) const;

 private:
  double x0_ = 0.0, x1_ = 1.0, y0_ = 0.0, y1_ = 1.0;
  int nx_ = 8, ny_ = 8;
  double h_ = 0.125;
};

/// Covariate functions on the grid nodes, centred to zero domain mean, with
/// Gramian S_ij = <f_i, f_j> / <1, 1>.
struct BasisSet {
  std::vector<std::string> names;
  Eigen::MatrixXd functions;  // nodes x n
  Eigen::MatrixXd gramian;

  static BasisSet from_raw(const Eigen::MatrixXd& raw, std::vector<std::string> names = {});
  int size() const { return static_cast<int>(functions.cols()); }
  /// True when every function is identically zero.
  bool degenerate() const;
  Eigen::VectorXd field(const Eigen::VectorXd& theta) const;
};

/// Non-stationary field with log R = log(rho/sqrt 8) + F1 theta1 and
/// log S = log sigma + F2 theta2, nu = 1 in two dimensions.
struct NonStatModel {
  Grid grid;
  BasisSet range_basis;
  BasisSet sd_basis;
  Eigen::VectorXd theta1;
  Eigen::VectorXd theta2;
  double tau1 = 1.0;
  double tau2 = 1.0;
  MaternParams stationary{1.0, 1.0, 1.0, 2};
  double lambda1 = 20.0;
  double lambda2 = 20.0;

  void validate() const;
  Eigen::VectorXd log_range_field() const;
  Eigen::VectorXd log_sd_field() const;
};

/// Q_u = D_{1/S} (1/4pi) K (D_{R^-2} C)^{-1} K D_{1/S} with C = h^2 I and
/// K = D_{R^-2} C + G.
SparseMatrix build_precision(const NonStatModel& model);
/// log det Q_u, from one factorization of K.
double precision_logdet(const NonStatModel& model);
/// Same operator for constant R = rho/sqrt 8 and S = sigma, written out as
/// (k^4 h^4 I + 2 k^2 h^2 G + G^2) / (4 pi sigma^2 k^2 h^2).
SparseMatrix stationary_precision(const Grid& grid, double rho, double sigma);

/// Draw from N(0, Q^{-1}).
Eigen::VectorXd sample_gmrf(const SparseMatrix& q, Rng& rng);

/// log N(theta; 0, tau^{-1} S^{-1}).
double gprior_logdensity(const Eigen::VectorXd& theta, const Eigen::MatrixXd& gramian, double tau);
/// log of (lambda/2) tau^{-3/2} exp(-lambda tau^{-1/2}).
double pc_precision_logdensity(double tau, double lambda);
/// g-prior with tau integrated over its PC hyperprior (one-dimensional
/// quadrature). Infinite at theta = 0 when the block is non-empty.
double gprior_marginal_logdensity(const Eigen::VectorXd& theta, const Eigen::MatrixXd& gramian,
                                  double lambda);
/// Exact draw of tau | theta under the g-prior and its PC hyperprior.
double sample_gprior_precision(const Eigen::VectorXd& theta, const Eigen::MatrixXd& gramian,
                               double lambda, Rng& rng);

/// log pi(rho) + log pi(sigma^2) + log pi(theta1 | tau1) + log pi(tau1)
///   + log pi(theta2 | tau2) + log pi(tau2).
double nonstat_log_prior(const NonStatModel& model, const PcHyper& field_prior);

struct MaxEffectResult {
  double lambda = 0.0;
  double probability = 0.0;  // estimated exceedance probability at lambda
  bool at_boundary = false;  // root pinned at the edge of the search interval
  int draws = 0;
};

/// lambda such that P(max_s |sum_i theta_i f_i(s)| > bound) = alpha with
/// tau ~ PC(lambda) and theta | tau from the g-prior. Common random numbers
/// across the bisection; relative tolerance 1% in lambda.
MaxEffectResult max_effect_calibration(const BasisSet& basis, double bound, double alpha,
                                       int mc_draws, std::uint64_t seed);

/// CRPS of N(mu, sd^2) at y.
double crps_gaussian(double mu, double sd, double y);
/// CRPS of a weighted sample (energy form). Weights must sum to one.
double crps_sample(const std::vector<double>& values, const std::vector<double>& weights, double y);

/// Observations for the non-stationary sampler.
struct NonStatData {
  Eigen::MatrixXd sites;  // n x 2
  Eigen::VectorXd y;
  Eigen::MatrixXd fixed;  // n x p fixed-effect design; zero columns for none
};

struct NonStatPrior {
  PcHyper field = calibrate_pc(1.0, 0.05, 3.0, 0.05, 2);
  double sigma_n0 = 3.0;   // P(sigma_N > sigma_n0) = alpha_n
  double alpha_n = 0.05;
  double lambda1 = 20.0;
  double lambda2 = 20.0;
  bool range_effects = true;
  bool sd_effects = true;
  double beta_precision = 1e-4;
};

struct NonStatConfig {
  int iterations = 6000;
  int burn_in = 2000;
  int latent_thin = 10;
  double target_accept = 0.25;
  std::uint64_t seed = 1;
  std::uint64_t stream = 0;
};

/// Collapsed posterior of the non-stationary geostatistical model
/// y = X beta + A u + eps. The latent (u, beta) and the g-prior precisions are
/// integrated out of the hyperparameter target and drawn exactly afterwards.
/// Two factorizations are kept: the committed state and the last evaluation,
/// so a Metropolis rejection does not force a refactorization.
class NonStatPosterior {
 public:
  NonStatPosterior(Grid grid, BasisSet range_basis, BasisSet sd_basis, NonStatData data,
                   NonStatPrior prior);
  ~NonStatPosterior();
  NonStatPosterior(const NonStatPosterior&) = delete;
  NonStatPosterior& operator=(const NonStatPosterior&) = delete;

  /// Hyperparameter layout: log sigma_N, log rho, log sigma, theta1..., theta2...
  int dimension() const { return 3 + n1_ + n2_; }
  std::vector<std::string> hyper_names() const;
  /// Log prior density of the hyperparameters on the sampling scale, with the
  /// g-prior precisions integrated out.
  double log_prior(const Eigen::VectorXd& psi) const;
  /// log p(y | hyperparameters) with (u, beta) integrated out.
  double log_marginal_likelihood(const Eigen::VectorXd& psi);
  double log_posterior(const Eigen::VectorXd& psi);
  /// Make the most recent evaluation the committed state.
  void keep_last();
  const Eigen::VectorXd& current() const;
  /// Exact draw of (u, beta) given the committed hyperparameters.
  Eigen::VectorXd draw_latent(Rng& rng) const;
  /// X beta + A u at the observation sites.
  Eigen::VectorXd predictor(const Eigen::VectorXd& latent) const;
  /// Mean and variance of the linear predictor at the sites given the
  /// committed hyperparameters and all data.
  void predictor_moments(Eigen::VectorXd& mean, Eigen::VectorXd& var) const;
  NonStatModel model_at(const Eigen::VectorXd& psi) const;
  Eigen::VectorXd default_start() const;

  const Grid& grid() const { return grid_; }
  const NonStatData& data() const { return data_; }
  const NonStatPrior& prior() const { return prior_; }
  const SparseMatrix& observation_matrix() const { return a_; }
  int range_terms() const { return n1_; }
  int sd_terms() const { return n2_; }
  int fixed_effects() const { return p_; }
  const Eigen::MatrixXd& range_gramian() const { return range_basis_.gramian; }
  const Eigen::MatrixXd& sd_gramian() const { return sd_basis_.gramian; }
  /// Diagonal of the block-diagonal Gramian over (theta1, theta2).
  double gramian_diagonal(int i) const {
    return i < n1_ ? range_basis_.gramian(i, i) : sd_basis_.gramian(i - n1_, i - n1_);
  }

  /// Q_u at psi from the fixed-pattern assembly used by the sampler.
  SparseMatrix field_precision(const Eigen::VectorXd& psi) const;

 private:
  struct Slot;
  struct Pattern;
  bool factor(Slot& slot, const Eigen::VectorXd& psi);
  void build_pattern();
  void fields(const Eigen::VectorXd& psi, Eigen::VectorXd& lr, Eigen::VectorXd& ls) const;
  Eigen::VectorXd field_precision_values(const Eigen::VectorXd& mass, const Eigen::VectorXd& log_sd) const;

  Grid grid_;
  BasisSet range_basis_;
  BasisSet sd_basis_;
  NonStatData data_;
  NonStatPrior prior_;
  int n1_ = 0, n2_ = 0, p_ = 0;
  double lambda_n_ = 1.0;
  SparseMatrix a_;
  Eigen::VectorXd bty_;
  std::unique_ptr<Pattern> pat_;
  double yty_ = 0.0;
  std::unique_ptr<Slot> slots_[2];
  int current_ = 0;
  int last_ = 0;
};

/// Adaptive Metropolis on the collapsed target, then exact draws of
/// (u, beta, tau1, tau2). Columns: beta..., log_sigma_n, log_rho, log_sigma,
/// theta1_*, theta2_*, log_tau1, log_tau2 (blocks that are switched off are
/// omitted). `latent` holds thinned draws of the linear predictor at the sites
/// and `latent_mean`/`latent_var` its conditional moments at the same draws.
Chain nonstat_posterior(NonStatPosterior& posterior, const NonStatConfig& config,
                        const Eigen::VectorXd& start = {});

/// Mode of the collapsed hyperparameter posterior.
MapResult nonstat_map(NonStatPosterior& posterior, const Eigen::VectorXd& start = {});

struct LooPoint {
  double y = 0.0;
  double cpo = 0.0;
  double mean = 0.0;
  double sd = 0.0;
  double crps_gaussian = 0.0;
  double crps_sample = 0.0;
  double max_weight = 0.0;
};

struct LooScores {
  double log_score = 0.0;       // mean log CPO
  double crps_gaussian = 0.0;   // mean moment-matched CRPS
  double crps_sample = 0.0;     // mean sample-based CRPS
  std::vector<LooPoint> points;
  std::vector<std::string> warnings;
};

/// Leave-one-out scores from the thinned draws of a chain with a
/// `log_sigma_n` column. With conditional predictor moments each draw
/// contributes the exact Gaussian p(y_i | y_-i, hyperparameters) and the draws
/// are reweighted by its inverse; otherwise the posterior predictive is
/// reweighted by 1 / p(y_i | predictor draw).
LooScores loo_scores(const Chain& chain, const Eigen::VectorXd& y, int latent_thin,
                     double weight_warning = 0.2);

struct CoverageCalibrationRow {
  double lambda = 0.0;
  std::vector<double> coverage;  // one entry per theta component
  double worst = 0.0;
  int fits = 0;
  int failures = 0;
  bool qualifies = false;
};

struct CoverageCalibration {
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  std::vector<CoverageCalibrationRow> table;
  std::string table_csv() const;
};

struct CalibrationSetup {
  Grid grid;
  BasisSet range_basis;
  BasisSet sd_basis;
  Eigen::MatrixXd sites;
  double sigma_n = 0.1;  // stationary MAP
  double rho = 1.0;
  double sigma = 1.0;
  NonStatPrior prior;
  NonStatConfig chain;
};

/// Coverage of the theta intervals (against 0) over datasets simulated from the
/// stationary model. Candidates are tried in increasing order with
/// lambda1 = lambda2; the first whose worst component lies within 0.02 of
/// `level` is returned.
CoverageCalibration calibrate_by_coverage(const CalibrationSetup& setup,
                                          std::vector<double> lambda_grid, int n_datasets,
                                          double level, std::uint64_t seed, int threads = 0);

/// Per-component coverage of theta at a fixed lambda.
CoverageCalibrationRow theta_coverage(const CalibrationSetup& setup, double lambda, int n_datasets,
                                      double level, std::uint64_t seed, int threads = 0);

/// Rasters: header line "nx,ny,x0,x1,y0,y1", its values, then one row per node
/// with columns x, y and the named fields.
void write_raster(std::ostream& out, const Grid& grid, const std::vector<std::string>& names,
                  const Eigen::MatrixXd& fields);
struct Raster {
  Grid grid;
  std::vector<std::string> names;
  Eigen::MatrixXd fields;
};
Raster read_raster(std::istream& in);

/// Coordinate format, one "i,j,value" line per stored entry (0-based).
void write_coo(std::ostream& out, const SparseMatrix& m);

}  // namespace pcprior
