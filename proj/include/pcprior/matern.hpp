#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace pcprior {

/// Matérn field in the (range, marginal variance) parametrization. The
/// range is the distance at which correlation is roughly 0.13, i.e.
/// rho = sqrt(8 nu) / kappa.
struct MaternParams {
  double rho = 1.0;
  double sigma2 = 1.0;
  double nu = 0.5;
  int dim = 2;

  void validate() const;
};

/// Same field as the SPDE (kappa^2 - Laplacian)^{alpha/2} (sqrt(tau) u) = W.
struct SpdeParams {
  double kappa = 1.0;
  double tau = 1.0;
  double nu = 0.5;
  int dim = 2;

  double alpha() const { return nu + 0.5 * dim; }
  void validate() const;
};

/// Gamma(nu) / (Gamma(nu + d/2) (4 pi)^{d/2}); sigma2 = C / (kappa^{2 nu} tau).
double matern_variance_constant(double nu, int dim);

SpdeParams to_spde(const MaternParams& p);
MaternParams from_spde(const SpdeParams& s);

/// Matérn covariance at distance h >= 0.
double matern_cov(double h, const MaternParams& p);

/// d/d rho of the exponential (nu = 1/2) covariance at distance h.
double dcov_drho(double h, const MaternParams& p);

/// Observation locations in R^dim with cached pairwise distances.
class Design {
 public:
  Design() = default;
  /// One row per location, one column per coordinate (1 <= cols <= 3).
  explicit Design(Eigen::MatrixXd locations);

  int size() const { return static_cast<int>(locations_.rows()); }
  int dim() const { return static_cast<int>(locations_.cols()); }
  const Eigen::MatrixXd& locations() const { return locations_; }
  const Eigen::MatrixXd& distances() const { return distances_; }
  double distance(int i, int j) const { return distances_(i, j); }
  bool has_duplicates() const { return has_duplicates_; }

  /// n points uniform on [0,1]^dim.
  static Design uniform_random(int n, int dim, std::uint64_t seed);

  static Design read_csv(std::istream& in);
  static Design read_csv_file(const std::string& path);
  void write_csv(std::ostream& out) const;

 private:
  Eigen::MatrixXd locations_;
  Eigen::MatrixXd distances_;
  bool has_duplicates_ = false;
};

/// Sigma_ij = matern_cov(|s_i - s_j|) + nugget [i == j]. Throws
/// FactorizationError when duplicated locations meet a zero nugget.
Eigen::MatrixXd cov_matrix(const Design& design, const MaternParams& p, double nugget = 0.0);

/// Lower Cholesky factor. On failure a jitter of 1e-10 * scale is added to
/// the diagonal once; a second failure throws FactorizationError.
Eigen::MatrixXd cholesky_lower(const Eigen::MatrixXd& sigma, double scale);

}  // namespace pcprior
