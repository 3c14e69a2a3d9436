#include "pcprior/mcmc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <ostream>

#include "pcprior/csv.hpp"
#include "pcprior/error.hpp"

namespace pcprior {

int Chain::column_index(const std::string& name) const {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return static_cast<int>(i);
  throw DomainError("chain has no column named " + name);
}

Eigen::VectorXd Chain::column(int index) const {
  require(index >= 0 && index < samples.cols(), "chain column index out of range");
  const Eigen::Index kept = samples.rows() - burn_in;
  if (kept <= 0) return {};
  return samples.col(index).tail(kept);
}

Eigen::VectorXd Chain::column(const std::string& name) const { return column(column_index(name)); }

void Chain::write_csv(std::ostream& out) const {
  std::vector<std::string> header{"iteration"};
  header.insert(header.end(), names.begin(), names.end());
  csv::write_header(out, header);
  std::vector<double> row(names.size() + 1);
  for (Eigen::Index i = 0; i < samples.rows(); ++i) {
    row[0] = static_cast<double>(i);
    for (Eigen::Index k = 0; k < samples.cols(); ++k) row[k + 1] = samples(i, k);
    csv::write_row(out, row);
  }
}

nlohmann::json Chain::manifest() const {
  return {{"names", names},
          {"iterations", iterations()},
          {"burn_in", burn_in},
          {"acceptance_rate", acceptance_rate},
          {"seed", seed},
          {"stream", stream},
          {"warnings", warnings}};
}

double sorted_quantile(const std::vector<double>& sorted, double p) {
  require(!sorted.empty(), "quantile of an empty sample");
  require(p >= 0.0 && p <= 1.0, "quantile level must lie in [0, 1]");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

Interval equal_tailed_ci(std::vector<double> samples, double level) {
  if (!(level > 0.0 && level <= 1.0)) throw DomainError("interval level must lie in (0, 1]");
  if (samples.size() < 100)
    throw InsufficientSamplesError("an interval needs at least 100 samples, got " +
                                   std::to_string(samples.size()));
  for (double s : samples)
    if (!std::isfinite(s)) throw DomainError("non-finite sample in interval computation");
  std::sort(samples.begin(), samples.end());
  const double a = 0.5 * (1.0 - level);
  return {sorted_quantile(samples, a), sorted_quantile(samples, 1.0 - a), level};
}

Interval equal_tailed_ci(const Eigen::VectorXd& samples, double level) {
  return equal_tailed_ci(std::vector<double>(samples.data(), samples.data() + samples.size()), level);
}

AdaptiveProposal::AdaptiveProposal(const Eigen::VectorXd& initial_sd, double target_accept)
    : target_(target_accept), log_scale_(0.0) {
  require(initial_sd.size() > 0, "proposal dimension must be positive");
  require((initial_sd.array() > 0.0).all(), "proposal standard deviations must be positive");
  require(target_accept > 0.0 && target_accept < 1.0, "target acceptance must lie in (0, 1)");
  const Eigen::Index d = initial_sd.size();
  mean_ = Eigen::VectorXd::Zero(d);
  m2_ = Eigen::MatrixXd::Zero(d, d);
  cov_ = initial_sd.array().square().matrix().asDiagonal();
  refresh_factor();
}

void AdaptiveProposal::refresh_factor() {
  Eigen::LLT<Eigen::MatrixXd> llt(cov_);
  if (llt.info() != Eigen::Success) {
    cov_.diagonal().array() += 1e-8 + 1e-6 * cov_.diagonal().maxCoeff();
    llt.compute(cov_);
    if (llt.info() != Eigen::Success) throw SamplerError("proposal covariance is not positive definite");
  }
  chol_ = llt.matrixL();
}

Eigen::VectorXd AdaptiveProposal::propose(const Eigen::VectorXd& x, Rng& rng) const {
  Eigen::VectorXd z(x.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = rng.normal();
  return x + std::exp(log_scale_) * (chol_ * z);
}

void AdaptiveProposal::update(const Eigen::VectorXd& x, double accept_prob) {
  if (!adapting_) return;
  ++steps_;
  const double gamma = std::pow(static_cast<double>(steps_) + 10.0, -0.6);
  log_scale_ += gamma * (accept_prob - target_);
  log_scale_ = std::clamp(log_scale_, -12.0, 6.0);

  ++count_;
  const Eigen::VectorXd delta = x - mean_;
  mean_ += delta / static_cast<double>(count_);
  m2_ += delta * (x - mean_).transpose();

  const Eigen::Index d = x.size();
  if (count_ < 100 + 10 * d || count_ % 100 != 0) return;
  Eigen::MatrixXd emp = m2_ / static_cast<double>(count_ - 1);
  emp.diagonal().array() += 1e-10;
  const Eigen::MatrixXd prev = cov_;
  const double prev_log_scale = log_scale_;
  if (!empirical_) {
    // keep the overall proposal size when leaving the initial diagonal covariance
    const double ratio = prev.trace() / std::max(emp.trace(), 1e-300);
    log_scale_ += 0.5 * std::log(std::clamp(ratio, 1e-12, 1e12));
  }
  cov_ = emp;
  try {
    refresh_factor();
    empirical_ = true;
  } catch (const SamplerError&) {
    cov_ = prev;
    log_scale_ = prev_log_scale;
    refresh_factor();
  }
}

namespace {

double accept_probability(double log_ratio) {
  if (std::isnan(log_ratio)) return 0.0;
  return log_ratio >= 0.0 ? 1.0 : std::exp(log_ratio);
}

void check_run_lengths(int iterations, int burn_in) {
  require(iterations > 0, "iterations must be positive");
  require(burn_in >= 0 && burn_in < iterations, "burn-in must lie in [0, iterations)");
}

}  // namespace

Chain rw_metropolis(const LogDensity& logpost, const Eigen::VectorXd& init, const RwConfig& config,
                    std::vector<std::string> names) {
  check_run_lengths(config.iterations, config.burn_in);
  require(config.initial_sd > 0.0, "initial proposal sd must be positive");
  const Eigen::Index d = init.size();
  require(d > 0, "initial state is empty");
  if (names.empty())
    for (Eigen::Index k = 0; k < d; ++k) names.push_back("x" + std::to_string(k));
  require(static_cast<Eigen::Index>(names.size()) == d, "one name per parameter is required");

  double current_lp = logpost(init);
  if (!std::isfinite(current_lp)) throw SamplerError("log posterior is not finite at the initial state");

  Rng rng(config.seed, {config.stream});
  AdaptiveProposal proposal(Eigen::VectorXd::Constant(d, config.initial_sd), config.target_accept);

  Chain chain;
  chain.names = std::move(names);
  chain.samples.resize(config.iterations, d);
  chain.burn_in = config.burn_in;
  chain.seed = config.seed;
  chain.stream = config.stream;

  Eigen::VectorXd x = init;
  long accepted_after = 0;
  int window_accepts = 0;
  for (int it = 0; it < config.iterations; ++it) {
    if (it == config.burn_in) proposal.freeze();
    const Eigen::VectorXd cand = proposal.propose(x, rng);
    const double lp = logpost(cand);
    const double a = std::isfinite(lp) ? accept_probability(lp - current_lp) : 0.0;
    const bool accept = a > 0.0 && rng.uniform() < a;
    if (accept) {
      x = cand;
      current_lp = lp;
      ++window_accepts;
      if (it >= config.burn_in) ++accepted_after;
    }
    if (it < config.burn_in) proposal.update(x, a);
    chain.samples.row(it) = x.transpose();
    if ((it + 1) % 100 == 0) {
      if (window_accepts == 0 && it < config.burn_in)
        chain.warnings.push_back("no proposal accepted in iterations " + std::to_string(it - 99) + "-" +
                                 std::to_string(it));
      window_accepts = 0;
    }
  }
  chain.acceptance_rate =
      static_cast<double>(accepted_after) / static_cast<double>(config.iterations - config.burn_in);
  return chain;
}

MapResult map_estimate(const LogDensity& logpost, const Eigen::VectorXd& init,
                       const MapOptions& options) {
  const Eigen::Index d = init.size();
  require(d > 0, "initial point is empty");
  require(options.initial_step > 0.0 && options.tolerance > 0.0 && options.max_evaluations > d,
          "invalid optimizer options");
  MapResult res;
  auto f = [&](const Eigen::VectorXd& x) {
    ++res.evaluations;
    const double v = logpost(x);
    return std::isfinite(v) ? -v : std::numeric_limits<double>::infinity();
  };

  std::vector<Eigen::VectorXd> pts(d + 1, init);
  std::vector<double> vals(d + 1);
  for (Eigen::Index k = 0; k < d; ++k) pts[k + 1](k) += options.initial_step;
  for (Eigen::Index k = 0; k <= d; ++k) vals[k] = f(pts[k]);
  if (!std::isfinite(vals[0])) throw SamplerError("log posterior is not finite at the optimizer start");

  std::vector<int> order(d + 1);
  while (true) {
    for (int k = 0; k <= d; ++k) order[k] = k;
    std::sort(order.begin(), order.end(), [&](int a, int b) { return vals[a] < vals[b]; });
    const int best = order.front(), worst = order.back(), second = order[d - 1];
    double diameter = 0.0;
    for (int k = 0; k <= d; ++k) diameter = std::max(diameter, (pts[k] - pts[best]).norm());
    if (diameter < options.tolerance) {
      res.converged = true;
      break;
    }
    if (res.evaluations >= options.max_evaluations) break;

    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(d);
    for (int k = 0; k <= d; ++k)
      if (k != worst) centroid += pts[k];
    centroid /= static_cast<double>(d);

    const Eigen::VectorXd xr = centroid + (centroid - pts[worst]);
    const double fr = f(xr);
    if (fr < vals[best]) {
      const Eigen::VectorXd xe = centroid + 2.0 * (centroid - pts[worst]);
      const double fe = f(xe);
      if (fe < fr) {
        pts[worst] = xe;
        vals[worst] = fe;
      } else {
        pts[worst] = xr;
        vals[worst] = fr;
      }
      continue;
    }
    if (fr < vals[second]) {
      pts[worst] = xr;
      vals[worst] = fr;
      continue;
    }
    const bool outside = fr < vals[worst];
    const Eigen::VectorXd xc =
        outside ? Eigen::VectorXd(centroid + 0.5 * (xr - centroid))
                : Eigen::VectorXd(centroid + 0.5 * (pts[worst] - centroid));
    const double fc = f(xc);
    if (fc < (outside ? fr : vals[worst])) {
      pts[worst] = xc;
      vals[worst] = fc;
      continue;
    }
    for (int k = 0; k <= d; ++k) {
      if (k == best) continue;
      pts[k] = pts[best] + 0.5 * (pts[k] - pts[best]);
      vals[k] = f(pts[k]);
    }
  }
  const auto it = std::min_element(vals.begin(), vals.end());
  res.x = pts[it - vals.begin()];
  res.value = -*it;
  return res;
}

double truncated_normal_above(double mean, double lower, Rng& rng) {
  const double a = lower - mean;
  if (a < 0.45) {
    while (true) {
      const double z = rng.normal();
      if (z > a) return mean + z;
    }
  }
  const double rate = 0.5 * (a + std::sqrt(a * a + 4.0));
  while (true) {
    const double z = a + rng.exponential() / rate;
    const double diff = z - rate;
    if (rng.uniform() < std::exp(-0.5 * diff * diff)) return mean + z;
  }
}

double truncated_normal_below(double mean, double upper, Rng& rng) {
  return -truncated_normal_above(-mean, -upper, rng);
}

namespace {

// Cholesky of the exponential correlation matrix, one jitter retry.
bool exp_corr_cholesky(const Eigen::MatrixXd& h, double rho, Eigen::MatrixXd& lower) {
  Eigen::MatrixXd corr = (h.array() * (-2.0 / rho)).exp().matrix();
  Eigen::LLT<Eigen::MatrixXd> llt(corr);
  if (llt.info() != Eigen::Success) {
    corr.diagonal().array() += 1e-10;
    llt.compute(corr);
    if (llt.info() != Eigen::Success) return false;
  }
  lower = llt.matrixL();
  return true;
}

// log N(u; 0, sigma2 R) given the lower factor of R.
double field_loglik(const Eigen::MatrixXd& lower, const Eigen::VectorXd& u, double sigma2) {
  const Eigen::VectorXd w = lower.triangularView<Eigen::Lower>().solve(u);
  const double n = static_cast<double>(u.size());
  return -0.5 * (n * (std::log(2.0 * std::numbers::pi) + std::log(sigma2)) +
                 2.0 * lower.diagonal().array().log().sum() + w.squaredNorm() / sigma2);
}

double log_hyper_prior(double log_rho, double log_sigma2, const PcHyper& prior) {
  // density in (log rho, log sigma^2)
  return pc_logdensity(std::exp(log_rho), std::exp(log_sigma2), prior) + log_rho + log_sigma2;
}

}  // namespace

Chain probit_gibbs(const Eigen::VectorXi& counts, int trials, const Design& design,
                   const PcHyper& prior, const ProbitConfig& config) {
  check_run_lengths(config.iterations, config.burn_in);
  require(trials > 0, "trials must be positive");
  require(counts.size() == design.size(), "counts length must match the design");
  require((counts.array() >= 0).all() && (counts.array() <= trials).all(),
          "counts must lie in [0, trials]");
  require(config.hyper_steps > 0 && config.latent_thin > 0, "invalid sampler settings");
  require(!design.has_duplicates(), "probit field needs distinct locations");

  const int n = design.size();
  const Eigen::MatrixXd& h = design.distances();
  Rng rng(config.seed, {config.stream});

  std::vector<double> offdiag;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) offdiag.push_back(h(i, j));
  double log_rho = 0.0;
  if (!offdiag.empty()) {
    std::nth_element(offdiag.begin(), offdiag.begin() + offdiag.size() / 2, offdiag.end());
    log_rho = std::log(offdiag[offdiag.size() / 2]);
  }
  double log_sigma2 = 0.0;

  Eigen::MatrixXd lower;
  if (!exp_corr_cholesky(h, std::exp(log_rho), lower))
    throw FactorizationError("initial correlation matrix is not positive definite");

  Eigen::VectorXd u = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd zsum(n);
  AdaptiveProposal proposal(Eigen::VectorXd::Constant(2, 0.3), config.target_accept);

  Chain chain;
  chain.names = {"log_rho", "log_sigma2"};
  chain.samples.resize(config.iterations, 2);
  chain.burn_in = config.burn_in;
  chain.seed = config.seed;
  chain.stream = config.stream;
  const int kept = config.iterations - config.burn_in;
  chain.latent.resize((kept + config.latent_thin - 1) / config.latent_thin, n);

  const double t = static_cast<double>(trials);
  long accepted_after = 0;
  int window_accepts = 0;
  Eigen::MatrixXd cand_lower;
  for (int it = 0; it < config.iterations; ++it) {
    if (it == config.burn_in) proposal.freeze();

    for (int i = 0; i < n; ++i) {
      double s = 0.0;
      for (int j = 0; j < trials; ++j)
        s += j < counts(i) ? truncated_normal_above(u(i), 0.0, rng) : truncated_normal_below(u(i), 0.0, rng);
      zsum(i) = s;
    }

    // u = sigma L v with v | z having precision I + t sigma^2 L^T L.
    const double sigma = std::exp(0.5 * log_sigma2);
    const Eigen::MatrixXd sl = sigma * lower;
    Eigen::MatrixXd prec = t * (sl.transpose() * sl);
    prec.diagonal().array() += 1.0;
    Eigen::LLT<Eigen::MatrixXd> pllt(prec);
    if (pllt.info() != Eigen::Success) throw SamplerError("field conditional precision is not positive definite");
    Eigen::VectorXd eps(n);
    for (int i = 0; i < n; ++i) eps(i) = rng.normal();
    const Eigen::VectorXd mean_v = pllt.solve(sl.transpose() * zsum);
    const Eigen::VectorXd v = mean_v + pllt.matrixU().solve(eps);
    u = sl * v;

    double current = field_loglik(lower, u, std::exp(log_sigma2)) + log_hyper_prior(log_rho, log_sigma2, prior);
    for (int step = 0; step < config.hyper_steps; ++step) {
      const Eigen::Vector2d x(log_rho, log_sigma2);
      const Eigen::VectorXd cand = proposal.propose(x, rng);
      double a = 0.0;
      double lp = -std::numeric_limits<double>::infinity();
      if (std::isfinite(cand(0)) && std::isfinite(cand(1)) && std::abs(cand(0)) < 50.0 &&
          std::abs(cand(1)) < 50.0 && exp_corr_cholesky(h, std::exp(cand(0)), cand_lower)) {
        lp = field_loglik(cand_lower, u, std::exp(cand(1))) + log_hyper_prior(cand(0), cand(1), prior);
        if (std::isfinite(lp)) a = accept_probability(lp - current);
      }
      if (a > 0.0 && rng.uniform() < a) {
        log_rho = cand(0);
        log_sigma2 = cand(1);
        lower.swap(cand_lower);
        current = lp;
        ++window_accepts;
        if (it >= config.burn_in) ++accepted_after;
      }
      if (it < config.burn_in) proposal.update(Eigen::Vector2d(log_rho, log_sigma2), a);
    }

    chain.samples(it, 0) = log_rho;
    chain.samples(it, 1) = log_sigma2;
    if (it >= config.burn_in && (it - config.burn_in) % config.latent_thin == 0)
      chain.latent.row((it - config.burn_in) / config.latent_thin) = u.transpose();
    if ((it + 1) % 100 == 0) {
      if (window_accepts == 0 && it < config.burn_in)
        chain.warnings.push_back("no hyperparameter proposal accepted in iterations " +
                                 std::to_string(it - 99) + "-" + std::to_string(it));
      window_accepts = 0;
    }
  }
  chain.acceptance_rate = static_cast<double>(accepted_after) /
                          (static_cast<double>(kept) * static_cast<double>(config.hyper_steps));
  return chain;
}

}  // namespace pcprior
