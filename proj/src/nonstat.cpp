#include "pcprior/nonstat.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <numbers>
#include <numeric>
#include <ostream>
#include <sstream>

#include "pcprior/csv.hpp"
#include "pcprior/error.hpp"
#include "pcprior/parallel.hpp"
#include "pcprior/quadrature.hpp"
#include "pcprior/special.hpp"

namespace pcprior {

namespace {

constexpr double kFourPi = 4.0 * std::numbers::pi;
using Llt = Eigen::SimplicialLLT<SparseMatrix, Eigen::Lower, Eigen::AMDOrdering<int>>;

SparseMatrix diagonal_matrix(const Eigen::VectorXd& d) {
  SparseMatrix m(d.size(), d.size());
  m.reserve(Eigen::VectorXi::Constant(d.size(), 1));
  for (Eigen::Index i = 0; i < d.size(); ++i) m.insert(i, i) = d(i);
  m.makeCompressed();
  return m;
}

// Diagonal of the lumped mass weighted by R^-2, and K = D + G.
struct Operator {
  Eigen::VectorXd mass;
  SparseMatrix k;
};

Operator assemble_operator(const SparseMatrix& g, const Eigen::VectorXd& log_range, double h) {
  Operator op;
  op.mass = (-2.0 * log_range.array()).exp() * (h * h);
  op.k = g + diagonal_matrix(op.mass);
  return op;
}

SparseMatrix precision_from_operator(const Operator& op, const Eigen::VectorXd& log_sd) {
  const Eigen::VectorXd minv = op.mass.cwiseInverse();
  SparseMatrix qv = op.k * (minv.asDiagonal() * op.k);
  const Eigen::VectorXd s = (-log_sd.array()).exp();
  SparseMatrix qu = s.asDiagonal() * qv * s.asDiagonal();
  qu *= 1.0 / kFourPi;
  qu.makeCompressed();
  return qu;
}

void check_fields(const Eigen::VectorXd& log_range, const Eigen::VectorXd& log_sd) {
  if (!log_range.allFinite() || !log_sd.allFinite())
    throw IndefiniteError("non-finite local range or standard deviation field");
  if ((log_range.array().abs() > 300.0).any() || (log_sd.array().abs() > 300.0).any())
    throw IndefiniteError("local range or standard deviation field out of floating-point range");
}

double log_det_from_llt(const Llt& llt) {
  const SparseMatrix& l = llt.matrixL().nestedExpression();
  double s = 0.0;
  for (Eigen::Index j = 0; j < l.outerSize(); ++j) {
    // the first stored entry of each column of L is its diagonal
    SparseMatrix::InnerIterator it(l, j);
    s += std::log(it.value());
  }
  return 2.0 * s;
}

Eigen::VectorXd draw_from_factor(const Llt& llt, Eigen::Index n, Rng& rng) {
  Eigen::VectorXd z(n);
  for (Eigen::Index i = 0; i < n; ++i) z(i) = rng.normal();
  const Eigen::VectorXd w = llt.matrixU().solve(z);
  return llt.permutationPinv() * w;
}

// Log-density in t = log s of s = tau^{-1/2} given the block theta, up to a constant.
struct ScaleConditional {
  double n, lambda, q;
  double phi(double t) const { return (1.0 - n) * t - lambda * std::exp(t) - 0.5 * q * std::exp(-2.0 * t); }
  double dphi(double t) const { return (1.0 - n) - lambda * std::exp(t) + q * std::exp(-2.0 * t); }
  double d2phi(double t) const { return -lambda * std::exp(t) - 2.0 * q * std::exp(-2.0 * t); }

  double mode() const {
    double lo = -1.0, hi = 1.0;
    while (dphi(lo) < 0.0) lo -= 2.0 * (1.0 - lo);
    while (dphi(hi) > 0.0) hi += 2.0 * (1.0 + hi);
    double t = 0.5 * (lo + hi);
    for (int it = 0; it < 200; ++it) {
      const double g = dphi(t);
      if (g > 0.0) lo = t; else hi = t;
      double next = t - g / d2phi(t);
      if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
      if (std::abs(next - t) < 1e-13 * (1.0 + std::abs(t))) return next;
      t = next;
      if (hi - lo < 1e-13 * (1.0 + std::abs(t))) break;
    }
    return t;
  }
};

ScaleConditional scale_conditional(const Eigen::VectorXd& theta, const Eigen::MatrixXd& gramian,
                                   double lambda) {
  require(lambda > 0.0 && std::isfinite(lambda), "lambda must be positive");
  require(gramian.rows() == theta.size() && gramian.cols() == theta.size(),
          "gramian size must match theta");
  const double q = theta.dot(gramian * theta);
  return {static_cast<double>(theta.size()), lambda, std::max(q, 1e-300)};
}

double gramian_logdet(const Eigen::MatrixXd& gramian) {
  Eigen::LLT<Eigen::MatrixXd> llt(gramian);
  if (llt.info() != Eigen::Success || (llt.matrixL().toDenseMatrix().diagonal().array() <= 0.0).any())
    throw DomainError("gramian is not positive definite");
  return 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
}

}  // namespace

// ---------------------------------------------------------------------------
// Grid

Grid::Grid(double x0, double x1, double y0, double y1, int nx, int ny)
    : x0_(x0), x1_(x1), y0_(y0), y1_(y1), nx_(nx), ny_(ny) {
  require(nx >= 8 && ny >= 8, "grid needs at least 8 nodes per side");
  require(std::isfinite(x0) && std::isfinite(x1) && x1 > x0, "grid x extent must be positive");
  require(std::isfinite(y0) && std::isfinite(y1) && y1 > y0, "grid y extent must be positive");
  h_ = (x1 - x0) / nx;
  const double hy = (y1 - y0) / ny;
  require(std::abs(h_ - hy) <= 1e-9 * h_, "grid cells must be square");
}

Eigen::Vector2d Grid::node(int k) const {
  require(k >= 0 && k < size(), "grid node out of range");
  return {x0_ + (k % nx_ + 0.5) * h_, y0_ + (k / nx_ + 0.5) * h_};
}

Eigen::MatrixXd Grid::nodes() const {
  Eigen::MatrixXd out(size(), 2);
  for (int k = 0; k < size(); ++k) out.row(k) = node(k).transpose();
  return out;
}

bool Grid::on_boundary(int k) const {
  const int ix = k % nx_, iy = k / nx_;
  return ix == 0 || iy == 0 || ix == nx_ - 1 || iy == ny_ - 1;
}

double Grid::boundary_distance(int k) const {
  const Eigen::Vector2d p = node(k);
  return std::min({p.x() - x0_, x1_ - p.x(), p.y() - y0_, y1_ - p.y()});
}

SparseMatrix Grid::laplacian() const {
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(static_cast<std::size_t>(size()) * 5);
  Eigen::VectorXd diag = Eigen::VectorXd::Zero(size());
  auto link = [&](int a, int b) {
    t.emplace_back(a, b, -1.0);
    t.emplace_back(b, a, -1.0);
    diag(a) += 1.0;
    diag(b) += 1.0;
  };
  for (int iy = 0; iy < ny_; ++iy) {
    for (int ix = 0; ix < nx_; ++ix) {
      if (ix + 1 < nx_) link(index(ix, iy), index(ix + 1, iy));
      if (iy + 1 < ny_) link(index(ix, iy), index(ix, iy + 1));
    }
  }
  for (int k = 0; k < size(); ++k) t.emplace_back(k, k, diag(k));
  SparseMatrix g(size(), size());
  g.setFromTriplets(t.begin(), t.end());
  return g;
}

SparseMatrix Grid::interpolation(const Eigen::MatrixXd& sites) const {
  require(sites.cols() == 2, "sites must have two columns");
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(static_cast<std::size_t>(sites.rows()) * 4);
  for (Eigen::Index r = 0; r < sites.rows(); ++r) {
    const double x = sites(r, 0), y = sites(r, 1);
    if (!(x >= x0_ && x <= x1_ && y >= y0_ && y <= y1_))
      throw DomainError("site " + std::to_string(r) + " lies outside the grid");
    const double gx = std::clamp((x - x0_) / h_ - 0.5, 0.0, nx_ - 1.0);
    const double gy = std::clamp((y - y0_) / h_ - 0.5, 0.0, ny_ - 1.0);
    const int ix = std::min(static_cast<int>(gx), nx_ - 2);
    const int iy = std::min(static_cast<int>(gy), ny_ - 2);
    const double fx = gx - ix, fy = gy - iy;
    t.emplace_back(r, index(ix, iy), (1 - fx) * (1 - fy));
    t.emplace_back(r, index(ix + 1, iy), fx * (1 - fy));
    t.emplace_back(r, index(ix, iy + 1), (1 - fx) * fy);
    t.emplace_back(r, index(ix + 1, iy + 1), fx * fy);
  }
  SparseMatrix a(sites.rows(), size());
  a.setFromTriplets(t.begin(), t.end());
  a.prune(0.0);
  return a;
}

// ---------------------------------------------------------------------------
// Bases and model

BasisSet BasisSet::from_raw(const Eigen::MatrixXd& raw, std::vector<std::string> names) {
  require(raw.allFinite(), "basis functions must be finite");
  BasisSet b;
  b.functions = raw.rowwise() - raw.colwise().mean();
  if (names.empty())
    for (Eigen::Index i = 0; i < raw.cols(); ++i) names.push_back("f" + std::to_string(i + 1));
  require(static_cast<Eigen::Index>(names.size()) == raw.cols(), "one name per basis function");
  b.names = std::move(names);
  b.gramian = raw.rows() > 0 ? Eigen::MatrixXd(b.functions.transpose() * b.functions / static_cast<double>(raw.rows()))
                             : Eigen::MatrixXd::Zero(raw.cols(), raw.cols());
  return b;
}

bool BasisSet::degenerate() const { return functions.size() == 0 || functions.cwiseAbs().maxCoeff() == 0.0; }

Eigen::VectorXd BasisSet::field(const Eigen::VectorXd& theta) const {
  require(theta.size() == functions.cols(), "theta length must match the basis");
  if (functions.cols() == 0) return Eigen::VectorXd::Zero(functions.rows());
  return functions * theta;
}

void NonStatModel::validate() const {
  stationary.validate();
  require(stationary.nu == 1.0 && stationary.dim == 2, "non-stationary model needs nu = 1 and d = 2");
  require(tau1 > 0.0 && tau2 > 0.0, "precisions must be positive");
  require(lambda1 > 0.0 && lambda2 > 0.0, "hyperprior rates must be positive");
  require(theta1.size() == range_basis.size() && theta2.size() == sd_basis.size(),
          "theta lengths must match the bases");
  require(range_basis.size() == 0 || range_basis.functions.rows() == grid.size(),
          "range basis must have one row per grid node");
  require(sd_basis.size() == 0 || sd_basis.functions.rows() == grid.size(),
          "sd basis must have one row per grid node");
}

Eigen::VectorXd NonStatModel::log_range_field() const {
  Eigen::VectorXd f = Eigen::VectorXd::Constant(grid.size(), std::log(stationary.rho / std::sqrt(8.0)));
  if (range_basis.size() > 0) f += range_basis.field(theta1);
  return f;
}

Eigen::VectorXd NonStatModel::log_sd_field() const {
  Eigen::VectorXd f = Eigen::VectorXd::Constant(grid.size(), 0.5 * std::log(stationary.sigma2));
  if (sd_basis.size() > 0) f += sd_basis.field(theta2);
  return f;
}

SparseMatrix build_precision(const NonStatModel& model) {
  model.validate();
  const Eigen::VectorXd lr = model.log_range_field(), ls = model.log_sd_field();
  check_fields(lr, ls);
  return precision_from_operator(assemble_operator(model.grid.laplacian(), lr, model.grid.h()), ls);
}

double precision_logdet(const NonStatModel& model) {
  model.validate();
  const Eigen::VectorXd lr = model.log_range_field(), ls = model.log_sd_field();
  check_fields(lr, ls);
  const Operator op = assemble_operator(model.grid.laplacian(), lr, model.grid.h());
  Llt llt(op.k);
  if (llt.info() != Eigen::Success) throw IndefiniteError("operator K is not positive definite");
  const double n = model.grid.size();
  return -n * std::log(kFourPi) + 2.0 * log_det_from_llt(llt) - op.mass.array().log().sum() -
         2.0 * ls.sum();
}

SparseMatrix stationary_precision(const Grid& grid, double rho, double sigma) {
  require(rho > 0.0 && sigma > 0.0, "rho and sigma must be positive");
  const double kappa = std::sqrt(8.0) / rho;
  const double a = kappa * kappa * grid.h() * grid.h();
  const SparseMatrix g = grid.laplacian();
  SparseMatrix id(grid.size(), grid.size());
  id.setIdentity();
  SparseMatrix q = (a * a) * id + (2.0 * a) * g + SparseMatrix(g * g);
  q *= 1.0 / (kFourPi * sigma * sigma * a);
  q.makeCompressed();
  return q;
}

Eigen::VectorXd sample_gmrf(const SparseMatrix& q, Rng& rng) {
  Llt llt(q);
  if (llt.info() != Eigen::Success) throw FactorizationError("precision matrix is not positive definite");
  return draw_from_factor(llt, q.rows(), rng);
}

// ---------------------------------------------------------------------------
// Priors on the non-stationary coefficients

double gprior_logdensity(const Eigen::VectorXd& theta, const Eigen::MatrixXd& gramian, double tau) {
  require(tau > 0.0 && std::isfinite(tau), "tau must be positive");
  require(gramian.rows() == theta.size() && gramian.cols() == theta.size(),
          "gramian size must match theta");
  const double n = static_cast<double>(theta.size());
  if (theta.size() == 0) return 0.0;
  const double logdet = gramian_logdet(gramian);
  const double q = theta.dot(gramian * theta);
  return 0.5 * n * std::log(tau) + 0.5 * logdet - 0.5 * tau * q - 0.5 * n * std::log(2.0 * std::numbers::pi);
}

double pc_precision_logdensity(double tau, double lambda) {
  require(tau > 0.0 && std::isfinite(tau), "tau must be positive");
  require(lambda > 0.0 && std::isfinite(lambda), "lambda must be positive");
  return std::log(0.5 * lambda) - 1.5 * std::log(tau) - lambda / std::sqrt(tau);
}

double gprior_marginal_logdensity(const Eigen::VectorXd& theta, const Eigen::MatrixXd& gramian,
                                  double lambda) {
  if (theta.size() == 0) return 0.0;
  const ScaleConditional c = scale_conditional(theta, gramian, lambda);
  if (theta.dot(gramian * theta) <= 0.0) return std::numeric_limits<double>::infinity();
  const double logdet = gramian_logdet(gramian);
  const double m = c.mode();
  const double peak = c.phi(m);
  const double step0 = 1.0 / std::sqrt(-c.d2phi(m));
  double left = step0, right = step0;
  while (c.phi(m - left) > peak - 60.0) left *= 2.0;
  while (c.phi(m + right) > peak - 60.0) right *= 2.0;
  QuadratureOptions opts;
  opts.abs_tol = 0.0;
  opts.rel_tol = 1e-10;
  const auto r = integrate([&](double t) { return std::exp(c.phi(t) - peak); }, m - left, m + right, opts);
  const double n = c.n;
  return std::log(lambda) + 0.5 * logdet - 0.5 * n * std::log(2.0 * std::numbers::pi) + peak + std::log(r.value);
}

double sample_gprior_precision(const Eigen::VectorXd& theta, const Eigen::MatrixXd& gramian,
                               double lambda, Rng& rng) {
  if (theta.size() == 0) {
    require(lambda > 0.0, "lambda must be positive");
    const double s = rng.exponential() / lambda;
    return 1.0 / (s * s);
  }
  const ScaleConditional c = scale_conditional(theta, gramian, lambda);
  const double m = c.mode();
  const double peak = c.phi(m);
  const double delta = 1.0 / std::sqrt(-c.d2phi(m));
  const double tl = m - delta, tr = m + delta;
  const double al = c.dphi(tl), ar = c.dphi(tr);
  const double fl = c.phi(tl) - peak, fr = c.phi(tr) - peak;
  const double wl = std::exp(fl) / al, wm = 2.0 * delta, wr = std::exp(fr) / -ar;
  for (int attempt = 0; attempt < 100000; ++attempt) {
    const double u = rng.uniform() * (wl + wm + wr);
    double t, env;
    if (u < wl) {
      t = tl - rng.exponential() / al;
      env = fl + al * (t - tl);
    } else if (u < wl + wm) {
      t = tl + 2.0 * delta * rng.uniform();
      env = 0.0;
    } else {
      t = tr + rng.exponential() / -ar;
      env = fr + ar * (t - tr);
    }
    if (std::log(rng.uniform()) < c.phi(t) - peak - env) return std::exp(-2.0 * t);
  }
  throw SamplerError("precision draw did not accept");
}

double nonstat_log_prior(const NonStatModel& model, const PcHyper& field_prior) {
  model.validate();
  double lp = pc_logdensity(model.stationary.rho, model.stationary.sigma2, field_prior);
  if (model.range_basis.size() > 0)
    lp += gprior_logdensity(model.theta1, model.range_basis.gramian, model.tau1) +
          pc_precision_logdensity(model.tau1, model.lambda1);
  if (model.sd_basis.size() > 0)
    lp += gprior_logdensity(model.theta2, model.sd_basis.gramian, model.tau2) +
          pc_precision_logdensity(model.tau2, model.lambda2);
  return lp;
}

MaxEffectResult max_effect_calibration(const BasisSet& basis, double bound, double alpha,
                                       int mc_draws, std::uint64_t seed) {
  require(bound > 0.0, "effect bound must be positive");
  require(alpha > 0.0 && alpha < 1.0, "alpha must lie in (0, 1)");
  require(mc_draws >= 100, "at least 100 Monte Carlo draws are needed");
  require(basis.size() > 0, "basis is empty");
  if (basis.degenerate()) throw NonBracketingError("basis functions are all zero; no effect can exceed the bound");
  Eigen::LLT<Eigen::MatrixXd> llt(basis.gramian);
  if (llt.info() != Eigen::Success) throw DomainError("gramian is not positive definite");
  const Eigen::MatrixXd lt = llt.matrixU();

  // Exceedance happens when E * M > lambda * bound with E ~ Exp(1) the scaled
  // tau^{-1/2} and M the largest absolute effect of the unit-scale theta.
  Rng rng(seed, {0x6d61786566ULL});
  std::vector<double> v(mc_draws);
  Eigen::VectorXd z(basis.size());
  for (int k = 0; k < mc_draws; ++k) {
    for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = rng.normal();
    const Eigen::VectorXd theta = lt.triangularView<Eigen::Upper>().solve(z);
    const double m = (basis.functions * theta).cwiseAbs().maxCoeff();
    v[k] = rng.exponential() * m / bound;
  }
  auto prob = [&](double lambda) {
    int c = 0;
    for (double x : v) c += x > lambda;
    return static_cast<double>(c) / mc_draws;
  };

  MaxEffectResult res;
  res.draws = mc_draws;
  double lo = 1e-8, hi = 1e8;
  if (prob(lo) < alpha)
    throw NonBracketingError("exceedance probability stays below alpha for every lambda");
  if (prob(hi) > alpha) {
    res.lambda = hi;
    res.probability = prob(hi);
    res.at_boundary = true;
    return res;
  }
  while (hi / lo > 1.01) {
    const double mid = std::sqrt(lo * hi);
    if (prob(mid) > alpha) lo = mid; else hi = mid;
  }
  res.lambda = std::sqrt(lo * hi);
  res.probability = prob(res.lambda);
  res.at_boundary = lo <= 1e-8 * 1.01 || hi >= 1e8 / 1.01;
  return res;
}

// ---------------------------------------------------------------------------
// Scores

double crps_gaussian(double mu, double sd, double y) {
  require(sd > 0.0 && std::isfinite(sd), "predictive sd must be positive");
  require(std::isfinite(mu) && std::isfinite(y), "crps arguments must be finite");
  const double z = (y - mu) / sd;
  return sd * (z * (2.0 * normal_cdf(z) - 1.0) + 2.0 * normal_pdf(z) - 1.0 / std::sqrt(std::numbers::pi));
}

double crps_sample(const std::vector<double>& values, const std::vector<double>& weights, double y) {
  require(!values.empty() && values.size() == weights.size(), "values and weights must match");
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return values[a] < values[b]; });
  double abs_dev = 0.0, pair = 0.0, wsum = 0.0, wxsum = 0.0;
  for (std::size_t k : order) {
    const double w = weights[k], x = values[k];
    abs_dev += w * std::abs(x - y);
    pair += w * (x * wsum - wxsum);
    wsum += w;
    wxsum += w * x;
  }
  // sum_{j,k} w_j w_k |x_j - x_k| = 2 * pair
  return abs_dev - pair;
}

// ---------------------------------------------------------------------------
// Collapsed posterior

// Fixed sparsity structure of K and of the posterior precision (lower
// triangles), with maps that refill their values without symbolic work.
struct NonStatPosterior::Pattern {
  SparseMatrix k;                   // lower triangle of G + D
  Eigen::VectorXd g_values;         // G on the pattern of k
  std::vector<int> k_diag;          // position of node i's diagonal in k
  SparseMatrix w;                   // lower entries of G D G as a linear map of D
  Eigen::VectorXd c_values;         // 2 G on the same entries
  std::vector<int> u_row, u_col;    // entry coordinates
  std::vector<int> u_diag;          // entry index of node i's diagonal
  SparseMatrix post;                // lower triangle of Q_u + B^T B / s^2 + beta block
  std::vector<int> u_pos;           // entry -> position in post
  std::vector<int> btb_pos;
  Eigen::VectorXd btb_values;
  std::vector<int> beta_pos;
};

namespace {

int find_entry(const SparseMatrix& m, int row, int col) {
  const int* begin = m.innerIndexPtr() + m.outerIndexPtr()[col];
  const int* end = m.innerIndexPtr() + m.outerIndexPtr()[col + 1];
  const int* it = std::lower_bound(begin, end, row);
  if (it == end || *it != row) throw std::logic_error("sparsity pattern lookup failed");
  return static_cast<int>(it - m.innerIndexPtr());
}

SparseMatrix lower_pattern(const std::vector<std::pair<int, int>>& entries, int n) {
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(entries.size());
  for (auto [i, j] : entries) t.emplace_back(std::max(i, j), std::min(i, j), 1.0);
  SparseMatrix m(n, n);
  m.setFromTriplets(t.begin(), t.end(), [](double a, double) { return a; });
  m.makeCompressed();
  return m;
}

}  // namespace

struct NonStatPosterior::Slot {
  SparseMatrix k;
  SparseMatrix post;
  Llt k_llt;
  Llt post_llt;
  bool k_analyzed = false;
  Eigen::VectorXd psi;
  Eigen::VectorXd b;
  double loglik = 0.0;
  bool ok = false;
};

NonStatPosterior::NonStatPosterior(Grid grid, BasisSet range_basis, BasisSet sd_basis, NonStatData data,
                                   NonStatPrior prior)
    : grid_(std::move(grid)),
      range_basis_(std::move(range_basis)),
      sd_basis_(std::move(sd_basis)),
      data_(std::move(data)),
      prior_(prior),
      slots_{std::make_unique<Slot>(), std::make_unique<Slot>()} {
  const Eigen::Index n = data_.y.size();
  require(n > 0, "no observations");
  require(data_.y.allFinite(), "observations must be finite");
  require(data_.sites.rows() == n && data_.sites.cols() == 2, "sites must be n x 2");
  if (data_.fixed.cols() > 0) require(data_.fixed.rows() == n, "fixed-effect design must have n rows");
  require(data_.fixed.allFinite(), "fixed-effect design must be finite");
  require(prior_.sigma_n0 > 0.0 && prior_.alpha_n > 0.0 && prior_.alpha_n < 1.0, "invalid nugget prior");
  require(prior_.lambda1 > 0.0 && prior_.lambda2 > 0.0, "hyperprior rates must be positive");
  require(prior_.beta_precision > 0.0, "beta prior precision must be positive");
  require(prior_.field.dim == 2, "field prior must be two-dimensional");
  if (prior_.range_effects && range_basis_.size() > 0 && !range_basis_.degenerate()) {
    require(range_basis_.functions.rows() == grid_.size(), "range basis must have one row per node");
    gramian_logdet(range_basis_.gramian);
    n1_ = range_basis_.size();
  }
  if (prior_.sd_effects && sd_basis_.size() > 0 && !sd_basis_.degenerate()) {
    require(sd_basis_.functions.rows() == grid_.size(), "sd basis must have one row per node");
    gramian_logdet(sd_basis_.gramian);
    n2_ = sd_basis_.size();
  }
  p_ = static_cast<int>(data_.fixed.cols());
  a_ = grid_.interpolation(data_.sites);
  build_pattern();
  yty_ = data_.y.squaredNorm();
  lambda_n_ = -std::log(prior_.alpha_n) / prior_.sigma_n0;
}

void NonStatPosterior::build_pattern() {
  pat_ = std::make_unique<Pattern>();
  Pattern& pt = *pat_;
  const int nn = grid_.size();
  const Eigen::Index n = data_.y.size();
  const SparseMatrix g = grid_.laplacian();

  std::vector<std::pair<int, int>> entries;
  for (int j = 0; j < nn; ++j)
    for (SparseMatrix::InnerIterator it(g, j); it; ++it) entries.emplace_back(it.row(), j);
  pt.k = lower_pattern(entries, nn);
  pt.g_values.resize(pt.k.nonZeros());
  for (int j = 0; j < nn; ++j)
    for (SparseMatrix::InnerIterator it(g, j); it; ++it)
      if (it.row() >= j) pt.g_values(find_entry(pt.k, it.row(), j)) = it.value();
  pt.k_diag.resize(nn);
  for (int i = 0; i < nn; ++i) pt.k_diag[i] = find_entry(pt.k, i, i);

  // entries of G^2, lower triangle
  entries.clear();
  for (int j = 0; j < nn; ++j)
    for (SparseMatrix::InnerIterator kt(g, j); kt; ++kt)
      for (SparseMatrix::InnerIterator it(g, kt.row()); it; ++it)
        if (it.row() >= j) entries.emplace_back(it.row(), j);
  const SparseMatrix u = lower_pattern(entries, nn);
  const int nu = static_cast<int>(u.nonZeros());
  pt.u_row.resize(nu);
  pt.u_col.resize(nu);
  for (int j = 0; j < nn; ++j)
    for (SparseMatrix::InnerIterator it(u, j); it; ++it) {
      const int e = static_cast<int>(&it.valueRef() - u.valuePtr());
      pt.u_row[e] = static_cast<int>(it.row());
      pt.u_col[e] = j;
    }
  std::vector<Eigen::Triplet<double>> wt;
  for (int j = 0; j < nn; ++j)
    for (SparseMatrix::InnerIterator kt(g, j); kt; ++kt)
      for (SparseMatrix::InnerIterator it(g, kt.row()); it; ++it)
        if (it.row() >= j)
          wt.emplace_back(find_entry(u, static_cast<int>(it.row()), j), static_cast<int>(kt.row()),
                          it.value() * kt.value());
  pt.w.resize(nu, nn);
  pt.w.setFromTriplets(wt.begin(), wt.end());
  pt.c_values = Eigen::VectorXd::Zero(nu);
  for (int j = 0; j < nn; ++j)
    for (SparseMatrix::InnerIterator it(g, j); it; ++it)
      if (it.row() >= j) pt.c_values(find_entry(u, static_cast<int>(it.row()), j)) = 2.0 * it.value();
  pt.u_diag.resize(nn);
  for (int i = 0; i < nn; ++i) pt.u_diag[i] = find_entry(u, i, i);

  // B = [A, X]
  std::vector<Eigen::Triplet<double>> t;
  for (int k = 0; k < a_.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(a_, k); it; ++it) t.emplace_back(it.row(), it.col(), it.value());
  for (int j = 0; j < p_; ++j)
    for (Eigen::Index i = 0; i < n; ++i) t.emplace_back(i, nn + j, data_.fixed(i, j));
  SparseMatrix b(n, nn + p_);
  b.setFromTriplets(t.begin(), t.end());
  const SparseMatrix btb = SparseMatrix(b.transpose() * b).triangularView<Eigen::Lower>();
  bty_ = b.transpose() * data_.y;

  for (int j = 0; j < btb.outerSize(); ++j)
    for (SparseMatrix::InnerIterator it(btb, j); it; ++it) entries.emplace_back(it.row(), j);
  for (int j = 0; j < p_; ++j) entries.emplace_back(nn + j, nn + j);
  pt.post = lower_pattern(entries, nn + p_);
  pt.u_pos.resize(nu);
  for (int e = 0; e < nu; ++e) pt.u_pos[e] = find_entry(pt.post, pt.u_row[e], pt.u_col[e]);
  for (int j = 0; j < btb.outerSize(); ++j)
    for (SparseMatrix::InnerIterator it(btb, j); it; ++it) {
      pt.btb_pos.push_back(find_entry(pt.post, static_cast<int>(it.row()), j));
      pt.btb_values.conservativeResize(pt.btb_values.size() + 1);
      pt.btb_values(pt.btb_values.size() - 1) = it.value();
    }
  for (int j = 0; j < p_; ++j) pt.beta_pos.push_back(find_entry(pt.post, nn + j, nn + j));
}

SparseMatrix NonStatPosterior::field_precision(const Eigen::VectorXd& psi) const {
  Eigen::VectorXd lr, ls;
  fields(psi, lr, ls);
  const Pattern& pt = *pat_;
  const Eigen::VectorXd mass = (-2.0 * lr.array()).exp() * (grid_.h() * grid_.h());
  const Eigen::VectorXd uv = field_precision_values(mass, ls);
  std::vector<Eigen::Triplet<double>> t;
  for (std::size_t e = 0; e < pt.u_row.size(); ++e) {
    t.emplace_back(pt.u_row[e], pt.u_col[e], uv(e));
    if (pt.u_row[e] != pt.u_col[e]) t.emplace_back(pt.u_col[e], pt.u_row[e], uv(e));
  }
  SparseMatrix q(grid_.size(), grid_.size());
  q.setFromTriplets(t.begin(), t.end());
  return q;
}

Eigen::VectorXd NonStatPosterior::field_precision_values(const Eigen::VectorXd& mass,
                                                         const Eigen::VectorXd& log_sd) const {
  const Pattern& pt = *pat_;
  Eigen::VectorXd v = pt.w * mass.cwiseInverse() + pt.c_values;
  for (int i = 0; i < grid_.size(); ++i) v(pt.u_diag[i]) += mass(i);
  const Eigen::VectorXd s = (-log_sd.array()).exp();
  for (Eigen::Index e = 0; e < v.size(); ++e) v(e) *= s(pt.u_row[e]) * s(pt.u_col[e]) / kFourPi;
  return v;
}

void NonStatPosterior::fields(const Eigen::VectorXd& psi, Eigen::VectorXd& lr, Eigen::VectorXd& ls) const {
  require(psi.size() == dimension(), "hyperparameter vector has the wrong length");
  const int nn = grid_.size();
  lr = Eigen::VectorXd::Constant(nn, psi(1) - 0.5 * std::log(8.0));
  ls = Eigen::VectorXd::Constant(nn, psi(2));
  if (n1_ > 0) lr += range_basis_.functions * psi.segment(3, n1_);
  if (n2_ > 0) ls += sd_basis_.functions * psi.segment(3 + n1_, n2_);
}

NonStatPosterior::~NonStatPosterior() = default;

std::vector<std::string> NonStatPosterior::hyper_names() const {
  std::vector<std::string> names{"log_sigma_n", "log_rho", "log_sigma"};
  for (int i = 0; i < n1_; ++i) names.push_back("theta1_" + range_basis_.names[i]);
  for (int i = 0; i < n2_; ++i) names.push_back("theta2_" + sd_basis_.names[i]);
  return names;
}

NonStatModel NonStatPosterior::model_at(const Eigen::VectorXd& psi) const {
  require(psi.size() == dimension(), "hyperparameter vector has the wrong length");
  NonStatModel m;
  m.grid = grid_;
  if (n1_ > 0) {
    m.range_basis = range_basis_;
    m.theta1 = psi.segment(3, n1_);
  }
  if (n2_ > 0) {
    m.sd_basis = sd_basis_;
    m.theta2 = psi.segment(3 + n1_, n2_);
  }
  m.stationary = MaternParams{std::exp(psi(1)), std::exp(2.0 * psi(2)), 1.0, 2};
  m.lambda1 = prior_.lambda1;
  m.lambda2 = prior_.lambda2;
  return m;
}

Eigen::VectorXd NonStatPosterior::default_start() const {
  const double mean = data_.y.mean();
  const double sd = std::sqrt(std::max((data_.y.array() - mean).square().mean(), 1e-12));
  Eigen::VectorXd psi(dimension());
  psi(0) = std::log(0.5 * sd);
  psi(1) = std::log(0.2 * std::min(grid_.x1() - grid_.x0(), grid_.y1() - grid_.y0()));
  psi(2) = std::log(sd);
  for (int i = 0; i < n1_; ++i) psi(3 + i) = 0.05 / std::sqrt(range_basis_.gramian(i, i));
  for (int i = 0; i < n2_; ++i) psi(3 + n1_ + i) = 0.05 / std::sqrt(sd_basis_.gramian(i, i));
  return psi;
}

bool NonStatPosterior::factor(Slot& s, const Eigen::VectorXd& psi) {
  s.psi = psi;
  s.ok = false;
  if (!psi.allFinite() || std::abs(psi(0)) > 30.0 || std::abs(psi(1)) > 30.0 || std::abs(psi(2)) > 30.0)
    return false;
  const double sigma_n2 = std::exp(2.0 * psi(0));
  const int nn = grid_.size();
  Eigen::VectorXd lr, ls;
  fields(psi, lr, ls);
  if (!lr.allFinite() || !ls.allFinite() || (lr.array().abs() > 30.0).any() || (ls.array().abs() > 30.0).any())
    return false;

  const Pattern& pt = *pat_;
  const Eigen::VectorXd mass = (-2.0 * lr.array()).exp() * (grid_.h() * grid_.h());
  if (!s.k_analyzed) {
    s.k = pt.k;
    s.post = pt.post;
    s.k_llt.analyzePattern(s.k);
    s.post_llt.analyzePattern(s.post);
    s.k_analyzed = true;
  }
  Eigen::Map<Eigen::VectorXd> kv(s.k.valuePtr(), s.k.nonZeros());
  kv = pt.g_values;
  for (int i = 0; i < nn; ++i) kv(pt.k_diag[i]) += mass(i);
  s.k_llt.factorize(s.k);
  if (s.k_llt.info() != Eigen::Success) return false;
  const double logdet_qu = -nn * std::log(kFourPi) + 2.0 * log_det_from_llt(s.k_llt) -
                           mass.array().log().sum() - 2.0 * ls.sum();

  const Eigen::VectorXd uv = field_precision_values(mass, ls);
  Eigen::Map<Eigen::VectorXd> pv(s.post.valuePtr(), s.post.nonZeros());
  pv.setZero();
  for (Eigen::Index e = 0; e < uv.size(); ++e) pv(pt.u_pos[e]) += uv(e);
  for (Eigen::Index e = 0; e < pt.btb_values.size(); ++e) pv(pt.btb_pos[e]) += pt.btb_values(e) / sigma_n2;
  for (int j = 0; j < p_; ++j) pv(pt.beta_pos[j]) += prior_.beta_precision;
  s.post_llt.factorize(s.post);
  if (s.post_llt.info() != Eigen::Success) return false;

  s.b = bty_ / sigma_n2;
  const Eigen::VectorXd mean = s.post_llt.solve(s.b);
  const double n = static_cast<double>(data_.y.size());
  const double logdet_prior = logdet_qu + p_ * std::log(prior_.beta_precision);
  s.loglik = -0.5 * n * std::log(2.0 * std::numbers::pi) - n * psi(0) + 0.5 * logdet_prior -
             0.5 * log_det_from_llt(s.post_llt) - 0.5 * yty_ / sigma_n2 + 0.5 * s.b.dot(mean);
  s.ok = std::isfinite(s.loglik);
  return s.ok;
}

double NonStatPosterior::log_marginal_likelihood(const Eigen::VectorXd& psi) {
  require(psi.size() == dimension(), "hyperparameter vector has the wrong length");
  last_ = 1 - current_;
  Slot& s = *slots_[last_];
  return factor(s, psi) ? s.loglik : -std::numeric_limits<double>::infinity();
}

double NonStatPosterior::log_prior(const Eigen::VectorXd& psi) const {
  require(psi.size() == dimension(), "hyperparameter vector has the wrong length");
  if (!psi.allFinite()) return -std::numeric_limits<double>::infinity();
  const double sigma_n = std::exp(psi(0)), rho = std::exp(psi(1)), sigma2 = std::exp(2.0 * psi(2));
  // densities on (log sigma_N, log rho, log sigma)
  double lp = std::log(lambda_n_) - lambda_n_ * sigma_n + psi(0);
  lp += pc_logdensity(rho, sigma2, prior_.field) + psi(1) + std::log(2.0) + 2.0 * psi(2);
  if (n1_ > 0) lp += gprior_marginal_logdensity(psi.segment(3, n1_), range_basis_.gramian, prior_.lambda1);
  if (n2_ > 0) lp += gprior_marginal_logdensity(psi.segment(3 + n1_, n2_), sd_basis_.gramian, prior_.lambda2);
  return lp;
}

double NonStatPosterior::log_posterior(const Eigen::VectorXd& psi) {
  const double lp = log_prior(psi);
  if (!std::isfinite(lp)) {
    last_ = 1 - current_;
    slots_[last_]->ok = false;
    return -std::numeric_limits<double>::infinity();
  }
  const double ll = log_marginal_likelihood(psi);
  return std::isfinite(ll) ? lp + ll : -std::numeric_limits<double>::infinity();
}

void NonStatPosterior::keep_last() {
  if (slots_[last_]->ok) current_ = last_;
}

Eigen::VectorXd NonStatPosterior::draw_latent(Rng& rng) const {
  const Slot& s = *slots_[current_];
  if (!s.ok) throw SamplerError("no valid factorization to draw the latent field from");
  const Eigen::VectorXd mean = s.post_llt.solve(s.b);
  return mean + draw_from_factor(s.post_llt, mean.size(), rng);
}

const Eigen::VectorXd& NonStatPosterior::current() const { return slots_[current_]->psi; }

Eigen::VectorXd NonStatPosterior::predictor(const Eigen::VectorXd& latent) const {
  const int nn = grid_.size();
  Eigen::VectorXd eta = a_ * latent.head(nn);
  if (p_ > 0) eta += data_.fixed * latent.tail(p_);
  return eta;
}

void NonStatPosterior::predictor_moments(Eigen::VectorXd& mean, Eigen::VectorXd& var) const {
  const Slot& s = *slots_[current_];
  if (!s.ok) throw SamplerError("no valid factorization for the predictor moments");
  const int nn = grid_.size();
  const Eigen::Index n = data_.y.size();
  mean = predictor(s.post_llt.solve(s.b));
  Eigen::MatrixXd wt = Eigen::MatrixXd::Zero(nn + p_, n);
  wt.topRows(nn) = Eigen::MatrixXd(a_.transpose());
  if (p_ > 0) wt.bottomRows(p_) = data_.fixed.transpose();
  const Eigen::MatrixXd z = s.post_llt.solve(wt);
  var = (wt.array() * z.array()).colwise().sum().transpose();
}

Chain nonstat_posterior(NonStatPosterior& post, const NonStatConfig& config, const Eigen::VectorXd& start) {
  require(config.iterations > 0 && config.burn_in >= 0 && config.burn_in < config.iterations,
          "burn-in must lie in [0, iterations)");
  require(config.latent_thin > 0, "latent thinning must be positive");
  const Eigen::VectorXd init = start.size() ? start : post.default_start();
  require(init.size() == post.dimension(), "start vector has the wrong length");
  const int d = post.dimension();
  const int p = post.fixed_effects();
  const int n1 = post.range_terms(), n2 = post.sd_terms();

  double current = post.log_posterior(init);
  if (!std::isfinite(current)) throw SamplerError("log posterior is not finite at the initial state");
  post.keep_last();
  Eigen::VectorXd x = init;

  Rng rng(config.seed, {config.stream});
  Rng draw_rng = rng.child({0x6c6174656e74ULL});
  Eigen::VectorXd sd(d);
  sd.head(3).setConstant(0.15);
  for (int i = 3; i < d; ++i) sd(i) = 0.15 / std::sqrt(post.gramian_diagonal(i - 3));
  AdaptiveProposal proposal(sd, config.target_accept);

  Chain chain;
  for (int j = 0; j < p; ++j) chain.names.push_back("beta" + std::to_string(j));
  for (const auto& n : post.hyper_names()) chain.names.push_back(n);
  if (n1 > 0) chain.names.emplace_back("log_tau1");
  if (n2 > 0) chain.names.emplace_back("log_tau2");
  chain.samples.resize(config.iterations, static_cast<Eigen::Index>(chain.names.size()));
  chain.burn_in = config.burn_in;
  chain.seed = config.seed;
  chain.stream = config.stream;
  const int kept = config.iterations - config.burn_in;
  chain.latent.resize((kept + config.latent_thin - 1) / config.latent_thin, post.data().y.size());
  chain.latent_mean.resizeLike(chain.latent);
  chain.latent_var.resizeLike(chain.latent);
  Eigen::VectorXd eta_mean, eta_var;

  long accepted_after = 0;
  int window_accepts = 0;
  for (int it = 0; it < config.iterations; ++it) {
    if (it == config.burn_in) proposal.freeze();
    const Eigen::VectorXd cand = proposal.propose(x, rng);
    const double lp = post.log_posterior(cand);
    const double a = std::isfinite(lp) ? (lp >= current ? 1.0 : std::exp(lp - current)) : 0.0;
    if (a > 0.0 && rng.uniform() < a) {
      post.keep_last();
      x = cand;
      current = lp;
      ++window_accepts;
      if (it >= config.burn_in) ++accepted_after;
    }
    if (it < config.burn_in) proposal.update(x, a);

    const Eigen::VectorXd latent = post.draw_latent(draw_rng);
    Eigen::Index c = 0;
    for (int j = 0; j < p; ++j) chain.samples(it, c++) = latent(post.grid().size() + j);
    for (int j = 0; j < d; ++j) chain.samples(it, c++) = x(j);
    if (n1 > 0)
      chain.samples(it, c++) =
          std::log(sample_gprior_precision(x.segment(3, n1), post.range_gramian(), post.prior().lambda1, draw_rng));
    if (n2 > 0)
      chain.samples(it, c++) = std::log(
          sample_gprior_precision(x.segment(3 + n1, n2), post.sd_gramian(), post.prior().lambda2, draw_rng));
    if (it >= config.burn_in && (it - config.burn_in) % config.latent_thin == 0) {
      const Eigen::Index row = (it - config.burn_in) / config.latent_thin;
      chain.latent.row(row) = post.predictor(latent).transpose();
      post.predictor_moments(eta_mean, eta_var);
      chain.latent_mean.row(row) = eta_mean.transpose();
      chain.latent_var.row(row) = eta_var.transpose();
    }
    if ((it + 1) % 100 == 0) {
      if (window_accepts == 0 && it < config.burn_in)
        chain.warnings.push_back("no proposal accepted in iterations " + std::to_string(it - 99) + "-" +
                                 std::to_string(it));
      window_accepts = 0;
    }
  }
  chain.acceptance_rate = static_cast<double>(accepted_after) / kept;
  return chain;
}

MapResult nonstat_map(NonStatPosterior& post, const Eigen::VectorXd& start) {
  const Eigen::VectorXd init = start.size() ? start : post.default_start();
  MapOptions opts;
  opts.initial_step = 0.3;
  return map_estimate([&](const Eigen::VectorXd& psi) { return post.log_posterior(psi); }, init, opts);
}

// ---------------------------------------------------------------------------
// Leave-one-out scores

LooScores loo_scores(const Chain& chain, const Eigen::VectorXd& y, int latent_thin, double weight_warning) {
  require(latent_thin > 0, "latent thinning must be positive");
  const Eigen::Index m = chain.latent.rows();
  require(m >= 2, "chain carries too few predictor draws");
  require(chain.latent.cols() == y.size(), "predictor draws do not match the data");
  const bool conditional = chain.latent_var.size() > 0;
  if (conditional)
    require(chain.latent_var.rows() == m && chain.latent_var.cols() == y.size() &&
                chain.latent_mean.rows() == m && chain.latent_mean.cols() == y.size(),
            "conditional predictor moments do not match the draws");
  const int col = chain.column_index("log_sigma_n");
  Eigen::VectorXd sn(m);
  for (Eigen::Index k = 0; k < m; ++k) {
    const Eigen::Index row = chain.burn_in + k * latent_thin;
    require(row < chain.samples.rows(), "latent thinning does not match the chain");
    sn(k) = std::exp(chain.samples(row, col));
  }

  LooScores out;
  out.points.resize(y.size());
  Rng rng(chain.seed, {chain.stream, 0x6c6f6fULL});
  std::vector<double> logw(m), w(m), draws(m), mu(m), sd(m);
  int flagged = 0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    for (Eigen::Index k = 0; k < m; ++k) {
      const double s2 = sn(k) * sn(k);
      if (conditional) {
        // remove observation i from the Gaussian conditional of eta_i
        const double v = chain.latent_var(k, i);
        const double prec = std::max(1.0 / v - 1.0 / s2, 1e-300);
        mu[k] = (chain.latent_mean(k, i) / v - y(i) / s2) / prec;
        sd[k] = std::sqrt(1.0 / prec + s2);
      } else {
        mu[k] = chain.latent(k, i);
        sd[k] = sn(k);
      }
      logw[k] = -normal_logpdf(y(i), mu[k], sd[k]);
    }
    const double mx = *std::max_element(logw.begin(), logw.end());
    double total = 0.0;
    for (Eigen::Index k = 0; k < m; ++k) total += (w[k] = std::exp(logw[k] - mx));
    LooPoint& pt = out.points[i];
    pt.y = y(i);
    // CPO = 1 / mean(1 / p)
    const double log_cpo = -(mx + std::log(total / static_cast<double>(m)));
    pt.cpo = std::exp(log_cpo);
    double mean = 0.0, second = 0.0, wmax = 0.0;
    for (Eigen::Index k = 0; k < m; ++k) {
      w[k] /= total;
      wmax = std::max(wmax, w[k]);
      mean += w[k] * mu[k];
      second += w[k] * (sd[k] * sd[k] + mu[k] * mu[k]);
      draws[k] = mu[k] + sd[k] * rng.normal();
    }
    pt.mean = mean;
    pt.sd = std::sqrt(std::max(second - mean * mean, 1e-300));
    pt.max_weight = wmax;
    pt.crps_gaussian = crps_gaussian(pt.mean, pt.sd, pt.y);
    pt.crps_sample = crps_sample(draws, w, pt.y);
    if (wmax > weight_warning) ++flagged;
    out.log_score += log_cpo;
    out.crps_gaussian += pt.crps_gaussian;
    out.crps_sample += pt.crps_sample;
  }
  const double n = static_cast<double>(y.size());
  out.log_score /= n;
  out.crps_gaussian /= n;
  out.crps_sample /= n;
  if (flagged > 0)
    out.warnings.push_back(std::to_string(flagged) + " of " + std::to_string(y.size()) +
                           " points have an importance weight above " + csv::format(weight_warning) +
                           "; their CPO estimates are unstable");
  return out;
}

// ---------------------------------------------------------------------------
// Coverage-based calibration

std::string CoverageCalibration::table_csv() const {
  std::ostringstream out;
  std::size_t width = 0;
  for (const auto& r : table) width = std::max(width, r.coverage.size());
  std::vector<std::string> header{"lambda"};
  for (std::size_t j = 0; j < width; ++j) header.push_back("coverage_theta" + std::to_string(j + 1));
  header.insert(header.end(), {"worst", "fits", "failures", "qualifies"});
  csv::write_header(out, header);
  for (const auto& r : table) {
    std::vector<double> row{r.lambda};
    for (std::size_t j = 0; j < width; ++j) row.push_back(j < r.coverage.size() ? r.coverage[j] : 1.0);
    row.insert(row.end(), {r.worst, static_cast<double>(r.fits), static_cast<double>(r.failures),
                           r.qualifies ? 1.0 : 0.0});
    csv::write_row(out, row);
  }
  return out.str();
}

CoverageCalibrationRow theta_coverage(const CalibrationSetup& setup, double lambda, int n_datasets,
                                      double level, std::uint64_t seed, int threads) {
  require(lambda > 0.0, "lambda must be positive");
  require(n_datasets > 0, "need at least one dataset");
  require(level > 0.0 && level < 1.0, "level must lie in (0, 1)");
  require(setup.sigma_n > 0.0 && setup.rho > 0.0 && setup.sigma > 0.0, "stationary parameters must be positive");

  NonStatModel truth;
  truth.grid = setup.grid;
  truth.stationary = MaternParams{setup.rho, setup.sigma * setup.sigma, 1.0, 2};
  const SparseMatrix q = build_precision(truth);
  Llt qllt(q);
  if (qllt.info() != Eigen::Success) throw FactorizationError("stationary precision is not positive definite");
  const SparseMatrix a = setup.grid.interpolation(setup.sites);

  NonStatPrior prior = setup.prior;
  prior.lambda1 = prior.lambda2 = lambda;
  const bool use1 = prior.range_effects && setup.range_basis.size() > 0 && !setup.range_basis.degenerate();
  const bool use2 = prior.sd_effects && setup.sd_basis.size() > 0 && !setup.sd_basis.degenerate();
  const int n1 = use1 ? setup.range_basis.size() : 0;
  const int n2 = use2 ? setup.sd_basis.size() : 0;
  const int comps = n1 + n2;

  CoverageCalibrationRow row;
  row.lambda = lambda;
  row.coverage.assign(comps, 1.0);
  if (comps == 0) {
    row.worst = 1.0;
    row.qualifies = true;
    return row;
  }

  std::vector<std::vector<int>> hits(n_datasets, std::vector<int>(comps, 0));
  std::vector<int> ok(n_datasets, 0);
  parallel_for(n_datasets, threads, [&](int ds) {
    Rng rng(seed, {0x64617461ULL, static_cast<std::uint64_t>(ds)});
    const Eigen::VectorXd u = draw_from_factor(qllt, q.rows(), rng);
    Eigen::VectorXd y = a * u;
    for (Eigen::Index i = 0; i < y.size(); ++i) y(i) += setup.sigma_n * rng.normal();
    NonStatData data{setup.sites, y, Eigen::MatrixXd(y.size(), 0)};
    try {
      NonStatPosterior post(setup.grid, setup.range_basis, setup.sd_basis, std::move(data), prior);
      Eigen::VectorXd start = post.default_start();
      start(0) = std::log(setup.sigma_n);
      start(1) = std::log(setup.rho);
      start(2) = std::log(setup.sigma);
      NonStatConfig cfg = setup.chain;
      cfg.seed = seed;
      cfg.stream = 0x666974000000ULL + static_cast<std::uint64_t>(ds);
      const Chain chain = nonstat_posterior(post, cfg, start);
      const int first = chain.column_index("log_sigma") + 1;
      for (int j = 0; j < comps; ++j) hits[ds][j] = equal_tailed_ci(chain.column(first + j), level).contains(0.0);
      ok[ds] = 1;
    } catch (const SamplerError&) {
    } catch (const FactorizationError&) {
    }
  });

  row.fits = std::accumulate(ok.begin(), ok.end(), 0);
  row.failures = n_datasets - row.fits;
  if (row.fits == 0) throw SamplerError("every calibration fit failed");
  for (int j = 0; j < comps; ++j) {
    int c = 0;
    for (int ds = 0; ds < n_datasets; ++ds) c += ok[ds] ? hits[ds][j] : 0;
    row.coverage[j] = static_cast<double>(c) / row.fits;
  }
  row.worst = *std::min_element(row.coverage.begin(), row.coverage.end());
  row.qualifies = row.worst >= level - 0.02 && row.worst <= std::min(level + 0.02, 1.0);
  return row;
}

CoverageCalibration calibrate_by_coverage(const CalibrationSetup& setup, std::vector<double> lambda_grid,
                                          int n_datasets, double level, std::uint64_t seed, int threads) {
  require(!lambda_grid.empty(), "lambda grid is empty");
  std::sort(lambda_grid.begin(), lambda_grid.end());
  CoverageCalibration out;
  for (double lambda : lambda_grid) {
    out.table.push_back(theta_coverage(setup, lambda, n_datasets, level, seed, threads));
    if (out.table.back().qualifies) {
      out.lambda1 = out.lambda2 = lambda;
      return out;
    }
  }
  throw CalibrationError("no lambda candidate reached the target coverage", out.table_csv());
}

// ---------------------------------------------------------------------------
// Text formats

void write_raster(std::ostream& out, const Grid& grid, const std::vector<std::string>& names,
                  const Eigen::MatrixXd& fields) {
  require(fields.rows() == grid.size(), "raster fields need one row per node");
  require(static_cast<Eigen::Index>(names.size()) == fields.cols(), "one name per raster field");
  csv::write_header(out, {"nx", "ny", "x0", "x1", "y0", "y1"});
  csv::write_row(out, {double(grid.nx()), double(grid.ny()), grid.x0(), grid.x1(), grid.y0(), grid.y1()});
  std::vector<std::string> header{"x", "y"};
  header.insert(header.end(), names.begin(), names.end());
  csv::write_header(out, header);
  std::vector<double> row(names.size() + 2);
  for (int k = 0; k < grid.size(); ++k) {
    const Eigen::Vector2d p = grid.node(k);
    row[0] = p.x();
    row[1] = p.y();
    for (Eigen::Index j = 0; j < fields.cols(); ++j) row[j + 2] = fields(k, j);
    csv::write_row(out, row);
  }
}

Raster read_raster(std::istream& in) {
  std::string line;
  std::string meta;
  for (int got = 0; got < 2 && std::getline(in, line);) {
    if (line.empty() || line[0] == '#') continue;
    meta += line + "\n";
    ++got;
  }
  std::istringstream ms(meta);
  const csv::Table head = csv::read(ms);
  if (head.rows.size() != 1 || head.rows[0].size() != 6) throw ParseError("raster header must hold nx,ny,x0,x1,y0,y1");
  const auto& h = head.rows[0];
  Raster r;
  try {
    r.grid = Grid(h[2], h[3], h[4], h[5], static_cast<int>(h[0]), static_cast<int>(h[1]));
  } catch (const DomainError& e) {
    throw ParseError(std::string("raster header: ") + e.what());
  }
  const csv::Table body = csv::read(in);
  if (body.header.size() < 2) throw ParseError("raster body needs x, y columns");
  if (static_cast<int>(body.rows.size()) != r.grid.size()) throw ParseError("raster row count does not match nx * ny");
  r.names.assign(body.header.begin() + 2, body.header.end());
  r.fields.resize(r.grid.size(), static_cast<Eigen::Index>(r.names.size()));
  for (int k = 0; k < r.grid.size(); ++k)
    for (std::size_t j = 0; j < r.names.size(); ++j) r.fields(k, j) = body.rows[k][j + 2];
  return r;
}

void write_coo(std::ostream& out, const SparseMatrix& m) {
  csv::write_header(out, {"i", "j", "value"});
  for (int k = 0; k < m.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(m, k); it; ++it)
      csv::write_row(out, {double(it.row()), double(it.col()), it.value()});
}

}  // namespace pcprior
