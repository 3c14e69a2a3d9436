#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <string>

#include "json.hpp"
#include "pcprior/matern.hpp"
#include "pcprior/rng.hpp"

namespace pcprior {

struct Realization {
  Design design;
  Eigen::VectorXd values;
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;  // key of the substream that produced the values

  void write_csv(std::ostream& out) const;
  static Realization read_csv(std::istream& in);
  static Realization read_csv_file(const std::string& path);
  nlohmann::json manifest() const;
};

/// y_i = beta0 + x_i beta1 + u(s_i) + eps_i, eps_i ~ N(0, nugget_sd^2).
struct GeoModel {
  double beta0 = 0.0;
  double beta1 = 0.0;
  Eigen::VectorXd covariate;
  double nugget_sd = 0.0;
  MaternParams field;
};

/// values = L z with Sigma = L L^T and z drawn from `rng`.
Realization sample_grf(const Design& design, const MaternParams& params, Rng& rng);
Realization sample_grf(const Design& design, const MaternParams& params, std::uint64_t seed);

Realization sample_geomodel(const GeoModel& model, const Design& design, Rng& rng);
Realization sample_geomodel(const GeoModel& model, const Design& design, std::uint64_t seed);

/// Multivariate normal log-density of y with covariance Sigma + nugget_sd^2 I.
double gaussian_loglik(const Eigen::VectorXd& y, const Design& design, const MaternParams& params,
                       double nugget_sd = 0.0);

/// Zero-mean exponential-covariance field observed without noise. Caches
/// the design so repeated evaluations cost one n x n Cholesky each.
class ExponentialGp {
 public:
  ExponentialGp(const Design& design, Eigen::VectorXd y);

  struct Eval {
    double loglik = 0.0;
    double jeffreys_logfactor = 0.0;  // (1/2) log(tr U^2 - tr(U)^2/n)
    bool ok = false;
  };

  Eval evaluate(double rho, double sigma2, bool with_jeffreys = false) const;

  int size() const { return static_cast<int>(y_.size()); }
  const Eigen::VectorXd& data() const { return y_; }

 private:
  Eigen::MatrixXd neg2h_;  // -2 |s_i - s_j|
  Eigen::MatrixXd h_;
  Eigen::VectorXd y_;
};

}  // namespace pcprior
