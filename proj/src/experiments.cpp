#include "pcprior/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

#include "pcprior/csv.hpp"
#include "pcprior/error.hpp"
#include "pcprior/parallel.hpp"
#include "pcprior/special.hpp"

namespace pcprior {

namespace {

constexpr std::uint64_t kDataTag = 0x64617461ULL;
constexpr std::uint64_t kChainTag = 0x636861696eULL;
constexpr std::uint64_t kTruthTag = 0x7472757468ULL;

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

nlohmann::json params_json(const MaternParams& p) {
  return {{"rho", p.rho}, {"sigma2", p.sigma2}, {"nu", p.nu}, {"dim", p.dim}};
}

Eigen::VectorXd exp_of(const Eigen::VectorXd& v) { return v.array().exp().matrix(); }

// Tallies of one replicate.
struct Outcome {
  bool ok = false;
  bool hit_range = false;
  bool hit_variance = false;
  double length_range = 0.0;
  double length_variance = 0.0;
};

Outcome score_chain(const Chain& chain, const MaternParams& truth, double level) {
  Outcome o;
  const Interval r = equal_tailed_ci(exp_of(chain.column("log_rho")), level);
  const Interval v = equal_tailed_ci(exp_of(chain.column("log_sigma2")), level);
  o.ok = true;
  o.hit_range = r.contains(truth.rho);
  o.hit_variance = v.contains(truth.sigma2);
  o.length_range = r.length();
  o.length_variance = v.length();
  return o;
}

struct LengthSummary {
  double mean = 0.0, se = 0.0, median = 0.0;
};

LengthSummary summarize(std::vector<double> v) {
  LengthSummary s;
  const double n = static_cast<double>(v.size());
  for (double x : v) s.mean += x / n;
  double ss = 0.0;
  for (double x : v) ss += (x - s.mean) * (x - s.mean);
  s.se = v.size() > 1 ? std::sqrt(ss / (n - 1.0) / n) : std::numeric_limits<double>::infinity();
  std::sort(v.begin(), v.end());
  s.median = sorted_quantile(v, 0.5);
  return s;
}

void tally(CoverageCell& cell, const std::vector<Outcome>& outcomes) {
  int hr = 0, hv = 0;
  std::vector<double> lr, lv;
  for (const auto& o : outcomes) {
    if (!o.ok) continue;
    hr += o.hit_range;
    hv += o.hit_variance;
    lr.push_back(o.length_range);
    lv.push_back(o.length_variance);
  }
  const int ok = static_cast<int>(lr.size());
  cell.replicates = static_cast<int>(outcomes.size());
  cell.failures = cell.replicates - ok;
  if (ok == 0) throw SamplerError("every replicate failed");
  cell.coverage_range = static_cast<double>(hr) / ok;
  cell.coverage_variance = static_cast<double>(hv) / ok;
  const LengthSummary r = summarize(std::move(lr)), v = summarize(std::move(lv));
  cell.mean_length_range = r.mean;
  cell.mean_length_variance = v.mean;
  cell.length_se_range = r.se;
  cell.length_se_variance = v.se;
  cell.median_length_range = r.median;
  cell.median_length_variance = v.median;
}

void check_options(int replicates, double level) {
  require(replicates > 0, "need at least one replicate");
  require(level > 0.0 && level < 1.0, "level must lie in (0, 1)");
}

}  // namespace

nlohmann::json config_json(const RwConfig& c) {
  return {{"iterations", c.iterations}, {"burn_in", c.burn_in}, {"target_accept", c.target_accept},
          {"initial_sd", c.initial_sd}};
}

nlohmann::json config_json(const ProbitConfig& c) {
  return {{"iterations", c.iterations}, {"burn_in", c.burn_in}, {"hyper_steps", c.hyper_steps},
          {"target_accept", c.target_accept}, {"latent_thin", c.latent_thin}};
}

nlohmann::json config_json(const NonStatConfig& c) {
  return {{"iterations", c.iterations}, {"burn_in", c.burn_in}, {"latent_thin", c.latent_thin},
          {"target_accept", c.target_accept}};
}

nlohmann::json StudyManifest::to_json() const {
  return {{"study", study},   {"seed", seed},         {"design", design}, {"chain", chain},
          {"settings", settings}, {"outputs", outputs}, {"version", version}};
}

double CoverageCell::standard_error(double p) const {
  const int n = fits();
  return n > 0 ? std::sqrt(std::max(p * (1.0 - p), 0.0) / n) : std::numeric_limits<double>::infinity();
}

nlohmann::json CoverageCell::to_json() const {
  nlohmann::json j{{"prior", prior},
                   {"hyper", hyper},
                   {"replicates", replicates},
                   {"failures", failures},
                   {"coverage_range", coverage_range},
                   {"coverage_variance", coverage_variance},
                   {"mean_length_range", mean_length_range},
                   {"mean_length_variance", mean_length_variance},
                   {"length_se_range", length_se_range},
                   {"length_se_variance", length_se_variance},
                   {"median_length_range", median_length_range},
                   {"median_length_variance", median_length_variance},
                   {"se_range", standard_error(coverage_range)},
                   {"se_variance", standard_error(coverage_variance)}};
  if (truth_from_prior)
    j["truth"] = "prior";
  else
    j["truth"] = params_json(truth);
  return j;
}

void write_cells_csv(std::ostream& out, const std::vector<CoverageCell>& cells) {
  out << "prior,rho0,sigma0,lower,upper,rho_true,sigma2_true,replicates,failures,coverage_range,"
         "length_range,coverage_variance,length_variance,length_se_range,length_se_variance\n";
  const auto num = [](const nlohmann::json& h, const char* key) {
    return h.contains(key) ? csv::format(h.at(key).get<double>()) : std::string();
  };
  for (const auto& c : cells) {
    out << c.prior << ',' << num(c.hyper, "rho0") << ',' << num(c.hyper, "sigma0") << ','
        << num(c.hyper, "lower") << ',' << num(c.hyper, "upper") << ','
        << (c.truth_from_prior ? std::string() : csv::format(c.truth.rho)) << ','
        << (c.truth_from_prior ? std::string() : csv::format(c.truth.sigma2)) << ',' << c.replicates << ','
        << c.failures << ',' << csv::format(c.coverage_range) << ',' << csv::format(c.mean_length_range) << ','
        << csv::format(c.coverage_variance) << ',' << csv::format(c.mean_length_variance) << ','
        << csv::format(c.length_se_range) << ',' << csv::format(c.length_se_variance) << '\n';
  }
}

double table_rho0(double row, double rho_true, RowReading reading) {
  require(row > 0.0 && rho_true > 0.0, "table row and true range must be positive");
  return reading == RowReading::multiplier ? row * rho_true : row;
}

// ---------------------------------------------------------------------------
// Direct observation

LogDensity direct_log_posterior(const ExponentialGp& gp, const PriorSpec& prior) {
  validate(prior);
  const bool jeffreys = std::holds_alternative<JeffreysRule>(prior);
  return [&gp, prior, jeffreys](const Eigen::VectorXd& x) {
    const double rho = std::exp(x(0));
    const double sigma2 = std::exp(x(1));
    const double sigma = std::sqrt(sigma2);
    if (!(rho > 0.0 && sigma2 > 0.0) || !std::isfinite(rho) || !std::isfinite(sigma2)) return kNegInf;
    double lp;
    if (jeffreys) {
      lp = -std::log(sigma);
    } else {
      lp = prior_logdensity_rho_sigma(prior, rho, sigma);
      if (!std::isfinite(lp)) return kNegInf;
    }
    const ExponentialGp::Eval ev = gp.evaluate(rho, sigma2, jeffreys);
    if (!ev.ok) return kNegInf;
    if (jeffreys) {
      if (!std::isfinite(ev.jeffreys_logfactor)) return kNegInf;
      lp += ev.jeffreys_logfactor;
    }
    // d(rho, sigma) = rho (sigma / 2) d(log rho, log sigma^2)
    return ev.loglik + lp + x(0) + std::log(0.5 * sigma);
  };
}

Eigen::VectorXd direct_start(const ExponentialGp& gp, const Design& design, const PriorSpec& prior) {
  const Eigen::VectorXd& y = gp.data();
  const double s2 = std::max(y.squaredNorm() / static_cast<double>(y.size()), 1e-8);
  std::vector<double> d;
  for (int i = 0; i < design.size(); ++i)
    for (int j = 0; j < i; ++j) d.push_back(design.distance(i, j));
  std::sort(d.begin(), d.end());
  double rho = d.empty() ? 1.0 : std::max(sorted_quantile(d, 0.5), 1e-6);
  auto clamp_to = [&](double lo, double hi) {
    const double a = std::log(lo), b = std::log(hi);
    rho = std::exp(std::clamp(std::log(rho), a + 0.02 * (b - a), b - 0.02 * (b - a)));
  };
  if (const auto* u = std::get_if<UniformRange>(&prior)) clamp_to(u->lower, u->upper);
  if (const auto* u = std::get_if<LogUniformRange>(&prior)) clamp_to(u->lower, u->upper);
  Eigen::VectorXd x0(2);
  x0 << std::log(rho), std::log(s2);

  const LogDensity lp = direct_log_posterior(gp, prior);
  if (!std::isfinite(lp(x0))) return x0;
  MapOptions opts;
  opts.max_evaluations = 400;
  opts.tolerance = 1e-3;
  const MapResult m = map_estimate(lp, x0, opts);
  // keep the start away from the far end of the likelihood ridge
  if (std::isfinite(m.value) && m.x.allFinite() && std::abs(m.x(0) - x0(0)) < 8.0 && std::abs(m.x(1) - x0(1)) < 8.0)
    return m.x;
  return x0;
}

Chain fit_direct(const Realization& data, const PriorSpec& prior, const RwConfig& config) {
  require(data.design.size() >= 2, "need at least two locations");
  const ExponentialGp gp(data.design, data.values);
  const LogDensity lp = direct_log_posterior(gp, prior);
  const Eigen::VectorXd x0 = direct_start(gp, data.design, prior);
  return rw_metropolis(lp, x0, config, {"log_rho", "log_sigma2"});
}

CoverageCell coverage_study(const PriorSpec& prior, const MaternParams& truth, const Design& design,
                            const CoverageOptions& options) {
  check_options(options.replicates, options.level);
  require(design.size() >= 2, "need at least two locations");
  validate(prior);
  truth.validate();
  require(truth.nu == 0.5, "coverage studies use the exponential covariance (nu = 0.5)");

  std::vector<Outcome> outcomes(options.replicates);
  parallel_for(options.replicates, options.threads, [&](int r) {
    Rng rng(options.seed, {kDataTag, static_cast<std::uint64_t>(r)});
    try {
      const Realization data = sample_grf(design, truth, rng);
      RwConfig cfg = options.chain;
      cfg.seed = options.seed;
      cfg.stream = kChainTag ^ (static_cast<std::uint64_t>(r) << 20);
      outcomes[r] = score_chain(fit_direct(data, prior, cfg), truth, options.level);
    } catch (const SamplerError&) {
    } catch (const FactorizationError&) {
    }
  });

  CoverageCell cell;
  cell.prior = prior_name(prior);
  cell.hyper = prior_to_json(prior).at("hyperparameters");
  cell.truth = truth;
  tally(cell, outcomes);
  return cell;
}

MaternParams sample_pc_prior(const PcHyper& prior, Rng& rng) {
  // P(rho < r) = exp(-lambda r^{-d/2}) and sigma ~ Exp(lambda_sigma)
  const double e = rng.exponential();
  const double rho = std::pow(e / prior.lambda_range, -2.0 / prior.dim);
  const double sigma = rng.exponential() / prior.lambda_sigma;
  return MaternParams{rho, sigma * sigma, 0.5, prior.dim};
}

CoverageCell self_calibration_study(const PcHyper& prior, const Design& design, const CoverageOptions& options) {
  check_options(options.replicates, options.level);
  validate(PriorSpec{prior});
  require(design.dim() == prior.dim, "prior and design dimensions differ");

  std::vector<Outcome> outcomes(options.replicates);
  parallel_for(options.replicates, options.threads, [&](int r) {
    Rng truth_rng(options.seed, {kTruthTag, static_cast<std::uint64_t>(r)});
    const MaternParams truth = sample_pc_prior(prior, truth_rng);
    Rng rng(options.seed, {kDataTag, static_cast<std::uint64_t>(r)});
    try {
      const Realization data = sample_grf(design, truth, rng);
      RwConfig cfg = options.chain;
      cfg.seed = options.seed;
      cfg.stream = kChainTag ^ (static_cast<std::uint64_t>(r) << 20);
      outcomes[r] = score_chain(fit_direct(data, PriorSpec{prior}, cfg), truth, options.level);
    } catch (const SamplerError&) {
    } catch (const FactorizationError&) {
    }
  });

  CoverageCell cell;
  cell.prior = "pc";
  cell.hyper = prior_to_json(PriorSpec{prior}).at("hyperparameters");
  cell.truth_from_prior = true;
  tally(cell, outcomes);
  return cell;
}

// ---------------------------------------------------------------------------
// Ridge

double tail_correlation(const Chain& chain, double fraction) {
  require(fraction > 0.0 && fraction <= 1.0, "fraction must lie in (0, 1]");
  const Eigen::VectorXd lr = chain.column("log_rho");
  const Eigen::VectorXd ls = 0.5 * chain.column("log_sigma2");
  std::vector<Eigen::Index> idx(lr.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return lr(a) > lr(b); });
  const auto m = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(idx.size())));
  require(m >= 3, "too few draws in the tail");
  double ma = 0.0, mb = 0.0;
  for (std::size_t k = 0; k < m; ++k) {
    ma += lr(idx[k]);
    mb += ls(idx[k]);
  }
  ma /= m;
  mb /= m;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t k = 0; k < m; ++k) {
    const double a = lr(idx[k]) - ma, b = ls(idx[k]) - mb;
    sab += a * b;
    saa += a * a;
    sbb += b * b;
  }
  if (saa <= 0.0 || sbb <= 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

RidgeSummary ridge_study(const Realization& data, const PcHyper& pc, const RwConfig& config) {
  RidgeSummary s;
  RwConfig cfg = config;
  cfg.stream = config.stream * 2;
  s.pc = fit_direct(data, PriorSpec{pc}, cfg);
  cfg.stream = config.stream * 2 + 1;
  s.jeffreys = fit_direct(data, PriorSpec{JeffreysRule{}}, cfg);

  auto summarize = [](const Chain& c, Interval& lr, Interval& ls, double& upper, double& corr) {
    lr = equal_tailed_ci(c.column("log_rho"), 0.95);
    const Eigen::VectorXd log_sigma = 0.5 * c.column("log_sigma2");
    ls = equal_tailed_ci(log_sigma, 0.95);
    upper = std::exp(ls.upper);
    corr = tail_correlation(c);
  };
  summarize(s.pc, s.log_rho_pc, s.log_sigma_pc, s.upper_sigma_pc, s.tail_correlation_pc);
  summarize(s.jeffreys, s.log_rho_jeffreys, s.log_sigma_jeffreys, s.upper_sigma_jeffreys,
            s.tail_correlation_jeffreys);
  return s;
}

void RidgeSummary::write_csv(std::ostream& out) const {
  out << "prior,log_rho_lower,log_rho_upper,log_sigma_lower,log_sigma_upper,sigma_upper,tail_correlation,"
         "acceptance_rate\n";
  auto row = [&](const char* name, const Interval& lr, const Interval& ls, double up, double corr, const Chain& c) {
    out << name << ',' << csv::format(lr.lower) << ',' << csv::format(lr.upper) << ',' << csv::format(ls.lower)
        << ',' << csv::format(ls.upper) << ',' << csv::format(up) << ',' << csv::format(corr) << ','
        << csv::format(c.acceptance_rate) << '\n';
  };
  row("pc", log_rho_pc, log_sigma_pc, upper_sigma_pc, tail_correlation_pc, pc);
  row("jeffreys", log_rho_jeffreys, log_sigma_jeffreys, upper_sigma_jeffreys, tail_correlation_jeffreys, jeffreys);
}

void RidgeSummary::write_samples_csv(std::ostream& out) const {
  out << "prior,log_rho,log_sigma\n";
  auto dump = [&](const char* name, const Chain& c) {
    const Eigen::VectorXd lr = c.column("log_rho");
    const Eigen::VectorXd ls2 = c.column("log_sigma2");
    for (Eigen::Index k = 0; k < lr.size(); ++k)
      out << name << ',' << csv::format(lr(k)) << ',' << csv::format(0.5 * ls2(k)) << '\n';
  };
  dump("pc", pc);
  dump("jeffreys", jeffreys);
}

// ---------------------------------------------------------------------------
// Logistic

Eigen::VectorXi sample_probit_counts(const Design& design, const MaternParams& truth, int trials, Rng& rng) {
  require(trials > 0, "trials must be positive");
  const Realization u = sample_grf(design, truth, rng);
  Eigen::VectorXi counts(design.size());
  for (int i = 0; i < design.size(); ++i) {
    const double p = normal_cdf(u.values(i));
    int c = 0;
    for (int t = 0; t < trials; ++t) c += rng.uniform() < p;
    counts(i) = c;
  }
  return counts;
}

CoverageCell logistic_coverage_study(const PcHyper& prior, const MaternParams& truth, const Design& design,
                                     const LogisticOptions& options) {
  check_options(options.replicates, options.level);
  validate(PriorSpec{prior});
  truth.validate();
  require(truth.nu == 0.5, "the probit study uses the exponential covariance (nu = 0.5)");

  std::vector<Outcome> outcomes(options.replicates);
  parallel_for(options.replicates, options.threads, [&](int r) {
    Rng rng(options.seed, {kDataTag, static_cast<std::uint64_t>(r)});
    try {
      const Eigen::VectorXi counts = sample_probit_counts(design, truth, options.trials, rng);
      ProbitConfig cfg = options.chain;
      cfg.seed = options.seed;
      cfg.stream = kChainTag ^ (static_cast<std::uint64_t>(r) << 20);
      outcomes[r] = score_chain(probit_gibbs(counts, options.trials, design, prior, cfg), truth, options.level);
    } catch (const SamplerError&) {
    } catch (const FactorizationError&) {
    }
  });

  CoverageCell cell;
  cell.prior = "pc";
  cell.hyper = prior_to_json(PriorSpec{prior}).at("hyperparameters");
  cell.truth = truth;
  tally(cell, outcomes);
  return cell;
}

// ---------------------------------------------------------------------------
// Non-stationary synthetic analog

nlohmann::json SyntheticConfig::to_json() const {
  auto vec = [](const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  return {{"extent", extent},
          {"grid_nodes", grid_nodes},
          {"sites", sites},
          {"bump", {bump_x, bump_y, bump_width}},
          {"rho", rho},
          {"sigma", sigma},
          {"sigma_n", sigma_n},
          {"beta", {beta0, beta1}},
          {"theta1", vec(theta1)},
          {"theta2", vec(theta2)},
          {"design_seed", design_seed},
          {"prior",
           {{"rho0", prior.field.rho0},
            {"alpha_rho", prior.field.alpha_rho},
            {"sigma0", prior.field.sigma0},
            {"alpha_sigma", prior.field.alpha_sigma},
            {"sigma_n0", prior.sigma_n0},
            {"alpha_n", prior.alpha_n},
            {"lambda1", prior.lambda1},
            {"lambda2", prior.lambda2}}},
          {"chain", config_json(chain)},
          {"calibrate", calibrate},
          {"lambda_grid", lambda_grid},
          {"calibration_datasets", calibration_datasets},
          {"calibration_grid_nodes", calibration_grid_nodes},
          {"calibration_chain", config_json(calibration_chain)},
          {"level", level},
          {"ablations", ablations}};
}

namespace {

Grid synthetic_grid(const SyntheticConfig& c, int nodes) { return Grid(0.0, c.extent, 0.0, c.extent, nodes, nodes); }

double bump(const SyntheticConfig& c, double x, double y) {
  const double dx = x - c.bump_x, dy = y - c.bump_y;
  return std::exp(-(dx * dx + dy * dy) / (2.0 * c.bump_width * c.bump_width));
}

}  // namespace

BasisSet synthetic_covariates(const Grid& grid, const SyntheticConfig& config) {
  require(config.bump_width > 0.0, "bump width must be positive");
  Eigen::MatrixXd raw(grid.size(), 2);
  for (int k = 0; k < grid.size(); ++k) {
    const Eigen::Vector2d p = grid.node(k);
    const double e = bump(config, p.x(), p.y());
    const double r = std::hypot(p.x() - config.bump_x, p.y() - config.bump_y);
    raw(k, 0) = e;
    raw(k, 1) = e * r / (config.bump_width * config.bump_width);  // |grad e|
  }
  return BasisSet::from_raw(raw, {"elevation", "gradient"});
}

Eigen::MatrixXd synthetic_sites(const SyntheticConfig& config) {
  require(config.sites > 0 && config.extent > 0.0, "need a positive number of sites and a positive extent");
  Rng rng(config.design_seed, {0x7369746573ULL});
  Eigen::MatrixXd s(config.sites, 2);
  for (int i = 0; i < config.sites; ++i) {
    s(i, 0) = config.extent * rng.uniform();
    s(i, 1) = config.extent * rng.uniform();
  }
  return s;
}

NonStatData synthetic_dataset(const SyntheticConfig& config, std::uint64_t seed) {
  require(config.sigma_n > 0.0, "nugget sd must be positive");
  NonStatModel truth;
  truth.grid = synthetic_grid(config, config.grid_nodes);
  truth.range_basis = synthetic_covariates(truth.grid, config);
  truth.sd_basis = truth.range_basis;
  truth.theta1 = config.theta1.size() ? config.theta1 : Eigen::VectorXd::Zero(2);
  truth.theta2 = config.theta2.size() ? config.theta2 : Eigen::VectorXd::Zero(2);
  truth.stationary = MaternParams{config.rho, config.sigma * config.sigma, 1.0, 2};
  const SparseMatrix q = build_precision(truth);

  Rng rng(seed, {kDataTag});
  const Eigen::VectorXd u = sample_gmrf(q, rng);
  NonStatData data;
  data.sites = synthetic_sites(config);
  const SparseMatrix a = truth.grid.interpolation(data.sites);
  data.fixed.resize(config.sites, 2);
  for (int i = 0; i < config.sites; ++i) {
    data.fixed(i, 0) = 1.0;
    data.fixed(i, 1) = bump(config, data.sites(i, 0), data.sites(i, 1));
  }
  data.y = a * u + config.beta0 * data.fixed.col(0) + config.beta1 * data.fixed.col(1);
  for (int i = 0; i < config.sites; ++i) data.y(i) += config.sigma_n * rng.normal();
  return data;
}

const ModelScore& SyntheticReport::model(const std::string& name) const {
  for (const auto& m : models)
    if (m.model == name) return m;
  throw DomainError("no model named " + name);
}

void SyntheticReport::write_comparison_csv(std::ostream& out) const {
  out << "model,lambda,log_score,crps_gaussian,crps_sample,acceptance_rate\n";
  for (const auto& m : models)
    out << m.model << ',' << csv::format(m.lambda) << ',' << csv::format(m.scores.log_score) << ','
        << csv::format(m.scores.crps_gaussian) << ',' << csv::format(m.scores.crps_sample) << ','
        << csv::format(m.acceptance_rate) << '\n';
}

StudyGrids synthetic_grids(const SyntheticConfig& config) {
  StudyGrids g{synthetic_grid(config, config.grid_nodes), {}, synthetic_grid(config, config.calibration_grid_nodes), {}};
  g.basis = synthetic_covariates(g.grid, config);
  g.calibration_basis = synthetic_covariates(g.calibration_grid, config);
  return g;
}

SyntheticReport nonstat_synthetic_study(const SyntheticConfig& config, const NonStatData& data, std::uint64_t seed) {
  return nonstat_study(synthetic_grids(config), data, config, seed);
}

SyntheticReport nonstat_study(const StudyGrids& grids, const NonStatData& data, const SyntheticConfig& config,
                              std::uint64_t seed) {
  const Grid& grid = grids.grid;
  const BasisSet& basis = grids.basis;
  SyntheticReport report;
  std::uint64_t stream = 0;

  auto fit = [&](const std::string& name, NonStatPrior prior, const Eigen::VectorXd& start) {
    NonStatPosterior post(grid, basis, basis, data, prior);
    Eigen::VectorXd x0 = post.default_start();
    x0.head(3) = start.head(3);
    NonStatConfig cfg = config.chain;
    cfg.seed = seed;
    cfg.stream = ++stream;
    const Chain chain = nonstat_posterior(post, cfg, x0);
    ModelScore m;
    m.model = name;
    m.lambda = post.range_terms() + post.sd_terms() > 0 ? prior.lambda1 : 0.0;
    m.scores = loo_scores(chain, data.y, cfg.latent_thin);
    m.acceptance_rate = chain.acceptance_rate;
    m.warnings = chain.warnings;
    m.warnings.insert(m.warnings.end(), m.scores.warnings.begin(), m.scores.warnings.end());
    report.models.push_back(std::move(m));
  };

  NonStatPrior stationary = config.prior;
  stationary.range_effects = stationary.sd_effects = false;
  {
    NonStatPosterior post(grid, basis, basis, data, stationary);
    const MapResult map = nonstat_map(post);
    if (!std::isfinite(map.value)) throw SamplerError("stationary MAP search failed");
    report.stationary_map = map.x.head(3);
  }
  fit("stationary", stationary, report.stationary_map);

  NonStatPrior prior = config.prior;
  if (config.calibrate) {
    CalibrationSetup setup{grids.calibration_grid,
                           grids.calibration_basis,
                           grids.calibration_basis,
                           data.sites,
                           std::exp(report.stationary_map(0)),
                           std::exp(report.stationary_map(1)),
                           std::exp(report.stationary_map(2)),
                           config.prior,
                           config.calibration_chain};
    report.calibration = calibrate_by_coverage(setup, config.lambda_grid, config.calibration_datasets,
                                               config.level, seed, config.threads);
    prior.lambda1 = report.calibration->lambda1;
    prior.lambda2 = report.calibration->lambda2;
  }
  report.lambda = prior.lambda1;
  fit("nonstationary", prior, report.stationary_map);

  if (config.ablations) {
    NonStatPrior no_range = prior;
    no_range.range_effects = false;
    fit("no_range_covariates", no_range, report.stationary_map);
    NonStatPrior no_sd = prior;
    no_sd.sd_effects = false;
    fit("no_sd_covariates", no_sd, report.stationary_map);
  }
  return report;
}

}  // namespace pcprior
