#include "pcprior/matern.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <ostream>

#include "pcprior/csv.hpp"
#include "pcprior/error.hpp"
#include "pcprior/rng.hpp"
#include "pcprior/special.hpp"

namespace pcprior {
namespace {

void check_dim(int dim) { require(dim >= 1 && dim <= 3, "dim must be 1, 2 or 3"); }

bool positive(double x) { return x > 0.0 && std::isfinite(x); }

}  // namespace

void MaternParams::validate() const {
  require(positive(rho), "rho must be positive");
  require(positive(sigma2), "sigma2 must be positive");
  require(positive(nu), "nu must be positive");
  check_dim(dim);
}

void SpdeParams::validate() const {
  require(positive(kappa), "kappa must be positive");
  require(positive(tau), "tau must be positive");
  require(positive(nu), "nu must be positive");
  check_dim(dim);
}

double matern_variance_constant(double nu, int dim) {
  require(positive(nu), "nu must be positive");
  check_dim(dim);
  const double half_d = 0.5 * dim;
  return std::exp(std::lgamma(nu) - std::lgamma(nu + half_d) -
                  half_d * std::log(4.0 * std::numbers::pi));
}

SpdeParams to_spde(const MaternParams& p) {
  p.validate();
  SpdeParams s;
  s.nu = p.nu;
  s.dim = p.dim;
  s.kappa = std::sqrt(8.0 * p.nu) / p.rho;
  s.tau = std::exp(std::log(matern_variance_constant(p.nu, p.dim)) - std::log(p.sigma2) -
                   2.0 * p.nu * std::log(s.kappa));
  return s;
}

MaternParams from_spde(const SpdeParams& s) {
  s.validate();
  MaternParams p;
  p.nu = s.nu;
  p.dim = s.dim;
  p.rho = std::sqrt(8.0 * s.nu) / s.kappa;
  p.sigma2 = std::exp(std::log(matern_variance_constant(s.nu, s.dim)) -
                      2.0 * s.nu * std::log(s.kappa) - std::log(s.tau));
  return p;
}

double matern_cov(double h, const MaternParams& p) {
  require(h >= 0.0, "distance must be nonnegative");
  if (h == 0.0) return p.sigma2;
  const double x = std::sqrt(8.0 * p.nu) * h / p.rho;
  if (p.nu == 0.5) return p.sigma2 * std::exp(-x);
  const double log_c = p.nu * std::log(x) + std::log(bessel_k_scaled(p.nu, x)) - x -
                       std::lgamma(p.nu) - (p.nu - 1.0) * std::numbers::ln2;
  return p.sigma2 * std::exp(log_c);
}

double dcov_drho(double h, const MaternParams& p) {
  if (p.nu != 0.5) {
    throw UnsupportedSmoothnessError("dcov_drho is implemented for nu = 0.5 only");
  }
  require(h >= 0.0, "distance must be nonnegative");
  const double r = 2.0 * h / p.rho;
  return p.sigma2 * (r / p.rho) * std::exp(-r);
}

Design::Design(Eigen::MatrixXd locations) : locations_(std::move(locations)) {
  require(locations_.cols() >= 1 && locations_.cols() <= 3, "design dimension must be 1..3");
  require(locations_.allFinite(), "design coordinates must be finite");
  const Eigen::Index n = locations_.rows();
  distances_.setZero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double d = (locations_.row(i) - locations_.row(j)).norm();
      distances_(i, j) = d;
      distances_(j, i) = d;
      if (d == 0.0) has_duplicates_ = true;
    }
  }
}

Design Design::uniform_random(int n, int dim, std::uint64_t seed) {
  require(n >= 1, "design needs at least one point");
  Rng rng(seed, {0x6465736967ULL});
  Eigen::MatrixXd loc(n, dim);
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < dim; ++k) loc(i, k) = rng.uniform();
  }
  return Design(std::move(loc));
}

Design Design::read_csv(std::istream& in) {
  const csv::Table t = csv::read(in);
  if (t.rows.empty()) throw ParseError("design csv has no rows");
  const std::size_t d = t.rows.front().size();
  if (d < 1 || d > 3) throw ParseError("design csv must have 1 to 3 columns");
  Eigen::MatrixXd loc(t.rows.size(), d);
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    for (std::size_t k = 0; k < d; ++k) loc(i, k) = t.rows[i][k];
  }
  return Design(std::move(loc));
}

Design Design::read_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open design file " + path);
  return read_csv(in);
}

void Design::write_csv(std::ostream& out) const {
  static const char* names[] = {"x", "y", "z"};
  std::vector<std::string> header(names, names + dim());
  csv::write_header(out, header);
  std::vector<double> row(dim());
  for (int i = 0; i < size(); ++i) {
    for (int k = 0; k < dim(); ++k) row[k] = locations_(i, k);
    csv::write_row(out, row);
  }
}

Eigen::MatrixXd cov_matrix(const Design& design, const MaternParams& p, double nugget) {
  p.validate();
  require(nugget >= 0.0, "nugget must be nonnegative");
  if (design.has_duplicates() && nugget == 0.0) {
    throw FactorizationError("duplicated locations with zero nugget give a singular covariance");
  }
  const int n = design.size();
  Eigen::MatrixXd sigma(n, n);
  for (int i = 0; i < n; ++i) {
    sigma(i, i) = p.sigma2 + nugget;
    for (int j = i + 1; j < n; ++j) {
      const double c = matern_cov(design.distance(i, j), p);
      sigma(i, j) = c;
      sigma(j, i) = c;
    }
  }
  return sigma;
}

Eigen::MatrixXd cholesky_lower(const Eigen::MatrixXd& sigma, double scale) {
  Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  if (llt.info() == Eigen::Success) return llt.matrixL();
  Eigen::MatrixXd jittered = sigma;
  jittered.diagonal().array() += 1e-10 * scale;
  llt.compute(jittered);
  if (llt.info() != Eigen::Success) {
    throw FactorizationError("covariance matrix is not positive definite (after jitter)");
  }
  return llt.matrixL();
}

}  // namespace pcprior
