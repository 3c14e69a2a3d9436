#include "pcprior/grf.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <ostream>

#include "pcprior/csv.hpp"
#include "pcprior/error.hpp"
#include "pcprior/priors.hpp"

namespace pcprior {

void Realization::write_csv(std::ostream& out) const {
  static const char* names[] = {"x", "y", "z"};
  std::vector<std::string> header(names, names + design.dim());
  header.emplace_back("value");
  csv::write_header(out, header);
  std::vector<double> row(design.dim() + 1);
  for (int i = 0; i < design.size(); ++i) {
    for (int k = 0; k < design.dim(); ++k) row[k] = design.locations()(i, k);
    row[design.dim()] = values(i);
    csv::write_row(out, row);
  }
}

Realization Realization::read_csv(std::istream& in) {
  const csv::Table t = csv::read(in);
  if (t.rows.empty()) throw ParseError("realization csv has no rows");
  const std::size_t w = t.rows.front().size();
  if (w < 2 || w > 4) throw ParseError("realization csv needs 2 to 4 columns");
  const std::size_t d = w - 1;
  Eigen::MatrixXd loc(t.rows.size(), d);
  Eigen::VectorXd v(t.rows.size());
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    for (std::size_t k = 0; k < d; ++k) loc(i, k) = t.rows[i][k];
    v(i) = t.rows[i][d];
  }
  Realization r;
  r.design = Design(std::move(loc));
  r.values = std::move(v);
  return r;
}

Realization Realization::read_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open realization file " + path);
  return read_csv(in);
}

nlohmann::json Realization::manifest() const {
  return {{"seed", seed}, {"stream", stream}, {"n", design.size()}, {"dim", design.dim()}};
}

Realization sample_grf(const Design& design, const MaternParams& params, Rng& rng) {
  const Eigen::MatrixXd sigma = cov_matrix(design, params);
  const Eigen::MatrixXd l = cholesky_lower(sigma, params.sigma2);
  Eigen::VectorXd z(design.size());
  for (int i = 0; i < design.size(); ++i) z(i) = rng.normal();
  Realization r;
  r.design = design;
  r.values = l.triangularView<Eigen::Lower>() * z;
  r.seed = rng.seed();
  r.stream = rng.key();
  return r;
}

Realization sample_grf(const Design& design, const MaternParams& params, std::uint64_t seed) {
  Rng rng(seed);
  return sample_grf(design, params, rng);
}

Realization sample_geomodel(const GeoModel& model, const Design& design, Rng& rng) {
  require(model.nugget_sd >= 0.0, "nugget_sd must be nonnegative");
  require(model.covariate.size() == 0 || model.covariate.size() == design.size(),
          "covariate length must match the design");
  Realization r = sample_grf(design, model.field, rng);
  for (int i = 0; i < design.size(); ++i) {
    const double x = model.covariate.size() ? model.covariate(i) : 0.0;
    r.values(i) += model.beta0 + x * model.beta1 + model.nugget_sd * rng.normal();
  }
  return r;
}

Realization sample_geomodel(const GeoModel& model, const Design& design, std::uint64_t seed) {
  Rng rng(seed);
  return sample_geomodel(model, design, rng);
}

double gaussian_loglik(const Eigen::VectorXd& y, const Design& design, const MaternParams& params,
                       double nugget_sd) {
  require(y.size() == design.size(), "data length must match the design");
  require(nugget_sd >= 0.0, "nugget_sd must be nonnegative");
  const Eigen::MatrixXd sigma = cov_matrix(design, params, nugget_sd * nugget_sd);
  const Eigen::MatrixXd l = cholesky_lower(sigma, params.sigma2 + nugget_sd * nugget_sd);
  const Eigen::VectorXd w = l.triangularView<Eigen::Lower>().solve(y);
  const double logdet = 2.0 * l.diagonal().array().log().sum();
  const double n = static_cast<double>(y.size());
  return -0.5 * (n * std::log(2.0 * std::numbers::pi) + logdet + w.squaredNorm());
}

ExponentialGp::ExponentialGp(const Design& design, Eigen::VectorXd y)
    : neg2h_(-2.0 * design.distances()), h_(design.distances()), y_(std::move(y)) {
  require(y_.size() == design.size(), "data length must match the design");
  require(!design.has_duplicates(), "noise-free likelihood needs distinct locations");
}

ExponentialGp::Eval ExponentialGp::evaluate(double rho, double sigma2, bool with_jeffreys) const {
  Eval out;
  if (!(rho > 0.0) || !(sigma2 > 0.0) || !std::isfinite(rho) || !std::isfinite(sigma2)) return out;
  const Eigen::Index n = y_.size();
  Eigen::MatrixXd corr = (neg2h_.array() / rho).exp().matrix();
  Eigen::LLT<Eigen::MatrixXd> llt(corr);
  if (llt.info() != Eigen::Success) {
    corr.diagonal().array() += 1e-10;
    llt.compute(corr);
    if (llt.info() != Eigen::Success) return out;
  }
  const Eigen::MatrixXd& lmat = llt.matrixLLT();
  const auto l = lmat.triangularView<Eigen::Lower>();
  const Eigen::VectorXd w = l.solve(y_);
  const double logdet_corr = 2.0 * lmat.diagonal().array().log().sum();
  out.loglik = -0.5 * (static_cast<double>(n) * (std::log(2.0 * std::numbers::pi) + std::log(sigma2)) +
                       logdet_corr + w.squaredNorm() / sigma2);
  if (with_jeffreys) {
    // d corr / d rho = (2h / rho^2) corr
    Eigen::MatrixXd dcorr = (h_.array() * corr.array() * (2.0 / (rho * rho))).matrix();
    dcorr.diagonal().setZero();
    out.jeffreys_logfactor = jeffreys_range_logfactor(lmat, dcorr);
  }
  out.ok = std::isfinite(out.loglik);
  return out;
}

}  // namespace pcprior
