// pcprior: command-line front end for the PC prior library.

#include <CLI11.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "pcprior/csv.hpp"
#include "pcprior/error.hpp"
#include "pcprior/experiments.hpp"
#include "pcprior/grf.hpp"
#include "pcprior/matern.hpp"
#include "pcprior/mcmc.hpp"
#include "pcprior/nonstat.hpp"
#include "pcprior/parallel.hpp"
#include "pcprior/priors.hpp"

namespace fs = std::filesystem;
using namespace pcprior;

namespace {

constexpr int kUsage = 2;
constexpr int kValidation = 3;
constexpr int kNumerical = 4;
constexpr int kCheckFailed = 5;

struct CheckFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Common {
  std::string out;
  int threads = 0;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* app, Common& c, bool stochastic) {
  app->add_option("--out", c.out, "Output directory (default: $PCPRIOR_OUT or the working directory)");
  app->add_option("--threads", c.threads, "Worker threads for replicate loops; 1 runs sequentially")
      ->check(CLI::NonNegativeNumber);
  if (stochastic) app->add_option("--seed", c.seed, "Master seed of every random stream")->required();
}

fs::path out_dir(const Common& c) {
  std::string dir = c.out;
  if (dir.empty()) {
    const char* env = std::getenv("PCPRIOR_OUT");
    dir = env && *env ? env : ".";
  }
  fs::create_directories(dir);
  return fs::path(dir);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << text;
}

void write_manifest(const fs::path& dir, StudyManifest m, const Common& c) {
  m.settings["threads"] = c.threads;
  write_text(dir / (m.study + "_manifest.json"), m.to_json().dump(2) + "\n");
}

// Prior flags shared by density, fit and coverage.
struct PriorArgs {
  std::string type = "pc";
  double rho0 = 0.1, alpha_rho = 0.05, sigma0 = 10.0, alpha_sigma = 0.05;
  double lower = 0.05, upper = 2.0;
  int dim = 2;

  void add(CLI::App* app, bool with_type = true) {
    if (with_type)
      app->add_option("--prior", type, "Prior: pc, jeffreys, uniform (rho uniform) or loguniform (log rho uniform)")
          ->check(CLI::IsMember({"pc", "jeffreys", "uniform", "loguniform"}));
    app->add_option("--rho0", rho0, "PC prior: range threshold with P(rho < rho0) = alpha-rho");
    app->add_option("--alpha-rho", alpha_rho, "PC prior: tail probability below rho0");
    app->add_option("--sigma0", sigma0, "PC prior: standard deviation threshold with P(sigma > sigma0) = alpha-sigma");
    app->add_option("--alpha-sigma", alpha_sigma, "PC prior: tail probability above sigma0");
    if (with_type) {
      app->add_option("--lower", lower, "Bounded priors: lower range limit A");
      app->add_option("--upper", upper, "Bounded priors: upper range limit B");
    }
  }

  PcHyper pc() const {
    if (!(rho0 > 0.0)) throw DomainError("--rho0 must be positive");
    if (!(sigma0 > 0.0)) throw DomainError("--sigma0 must be positive");
    if (!(alpha_rho > 0.0 && alpha_rho < 1.0)) throw DomainError("--alpha-rho must lie in (0, 1)");
    if (!(alpha_sigma > 0.0 && alpha_sigma < 1.0)) throw DomainError("--alpha-sigma must lie in (0, 1)");
    return calibrate_pc(rho0, alpha_rho, sigma0, alpha_sigma, dim);
  }

  PriorSpec spec() const {
    if (type == "pc") return pc();
    if (type == "jeffreys") return JeffreysRule{};
    if (!(lower > 0.0 && upper > lower)) throw DomainError("--lower and --upper must satisfy 0 < lower < upper");
    if (type == "uniform") return UniformRange{lower, upper};
    return LogUniformRange{lower, upper};
  }
};

struct DesignArgs {
  std::string file;
  int n = 25;
  int dim = 2;
  std::uint64_t seed = kCoverageDesignSeed;

  void add(CLI::App* app) {
    app->add_option("--design", file, "Design CSV (one row per location: x[,y[,z]]); default is a random design");
    app->add_option("--n", n, "Random design: number of locations")->check(CLI::PositiveNumber);
    app->add_option("--dim", dim, "Spatial dimension")->check(CLI::Range(1, 3));
    app->add_option("--design-seed", seed, "Random design: seed of the uniform locations on [0,1]^dim");
  }

  Design build() const {
    if (!file.empty()) return Design::read_csv_file(file);
    return Design::uniform_random(n, dim, seed);
  }

  nlohmann::json to_json() const {
    if (!file.empty()) return {{"file", file}};
    return {{"uniform_random", {{"n", n}, {"dim", dim}, {"seed", seed}}}};
  }
};

struct ChainArgs {
  RwConfig rw;
  void add(CLI::App* app) {
    app->add_option("--iterations", rw.iterations, "MCMC iterations including burn-in")->check(CLI::PositiveNumber);
    app->add_option("--burn-in", rw.burn_in, "Burn-in iterations (proposal adapts only here)")
        ->check(CLI::NonNegativeNumber);
    app->add_option("--target-accept", rw.target_accept, "Target acceptance rate of the adaptive proposal");
  }
};

void require_flag(bool ok, const std::string& what) {
  if (!ok) throw DomainError(what);
}

std::vector<double> checked_list(const std::vector<double>& v, const char* flag) {
  for (double x : v)
    if (!(x > 0.0) || !std::isfinite(x)) throw DomainError(std::string(flag) + " values must be positive");
  return v;
}

struct Expect {
  std::vector<double> range, variance;
  void add(CLI::App* app) {
    app->add_option("--expect-range", range, "With --check: allowed [low high] for every range coverage")
        ->expected(2);
    app->add_option("--expect-variance", variance, "With --check: allowed [low high] for every variance coverage")
        ->expected(2);
  }
  void verify(const std::vector<CoverageCell>& cells) const {
    for (const auto& c : cells) {
      if (range.size() == 2 && (c.coverage_range < range[0] || c.coverage_range > range[1]))
        throw CheckFailure("range coverage " + csv::format(c.coverage_range) + " outside [" +
                           csv::format(range[0]) + ", " + csv::format(range[1]) + "]");
      if (variance.size() == 2 && (c.coverage_variance < variance[0] || c.coverage_variance > variance[1]))
        throw CheckFailure("variance coverage " + csv::format(c.coverage_variance) + " outside [" +
                           csv::format(variance[0]) + ", " + csv::format(variance[1]) + "]");
    }
  }
};

RowReading parse_reading(const std::string& s) { return s == "absolute" ? RowReading::absolute : RowReading::multiplier; }

void print_cells(const std::vector<CoverageCell>& cells) {
  std::ostringstream s;
  write_cells_csv(s, cells);
  std::cout << s.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PC priors for Matern Gaussian random fields: calibration, densities, simulation, fitting and "
               "simulation studies"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  // calibrate ---------------------------------------------------------------
  Common cal_c;
  PriorArgs cal_p;
  double cal_nu = 1.0;
  auto* cal = app.add_subcommand("calibrate", "PC prior rates from tail-probability statements on range and sd");
  cal_p.add(cal, false);
  cal->add_option("--dim", cal_p.dim, "Spatial dimension d")->check(CLI::Range(1, 3));
  cal->add_option("--nu", cal_nu, "Smoothness used for the equivalent (kappa, tau) rates");
  add_common(cal, cal_c, false);

  // density -----------------------------------------------------------------
  Common den_c;
  PriorArgs den_p;
  DesignArgs den_d;
  std::vector<double> den_rho, den_sigma;
  std::string den_points;
  auto* den = app.add_subcommand("density", "Evaluate a prior log-density in (rho, sigma) at given points");
  den_p.add(den);
  den_d.add(den);
  den->add_option("--rho", den_rho, "Range values");
  den->add_option("--sigma", den_sigma, "Marginal standard deviations (one per --rho, or a single value)");
  den->add_option("--points", den_points, "CSV with columns rho,sigma instead of --rho/--sigma");
  add_common(den, den_c, false);

  // simulate ----------------------------------------------------------------
  Common sim_c;
  DesignArgs sim_d;
  double sim_rho = 0.1, sim_sigma2 = 1.0, sim_nu = 0.5, sim_nugget = 0.0, sim_b0 = 0.0, sim_b1 = 0.0;
  std::string sim_covariate;
  int sim_reps = 1;
  auto* sim = app.add_subcommand("simulate", "Exact Gaussian random field (or geostatistical model) realizations");
  sim_d.add(sim);
  sim->add_option("--rho", sim_rho, "Range");
  sim->add_option("--sigma2", sim_sigma2, "Marginal variance");
  sim->add_option("--nu", sim_nu, "Smoothness");
  sim->add_option("--nugget-sd", sim_nugget, "Observation noise standard deviation");
  sim->add_option("--beta0", sim_b0, "Intercept");
  sim->add_option("--beta1", sim_b1, "Covariate coefficient");
  sim->add_option("--covariate", sim_covariate, "CSV with one covariate value per location (single column)");
  sim->add_option("--replicates", sim_reps, "Number of realizations (files realization_<k>.csv)")
      ->check(CLI::PositiveNumber);
  add_common(sim, sim_c, true);

  // fit ---------------------------------------------------------------------
  Common fit_c;
  PriorArgs fit_p;
  ChainArgs fit_ch;
  std::string fit_data;
  double fit_level = 0.95;
  auto* fit = app.add_subcommand("fit", "Posterior of (log rho, log sigma^2) for a directly observed field");
  fit->add_option("--data", fit_data, "Realization CSV (coordinates, then value)")->required();
  fit_p.add(fit);
  fit_ch.add(fit);
  fit->add_option("--level", fit_level, "Credible level of the reported equal-tailed intervals");
  add_common(fit, fit_c, true);

  // kld-check ---------------------------------------------------------------
  Common kld_c;
  int kld_dim = 2;
  double kld_alpha = 2.0;
  std::vector<double> kld_kappas{0.1, 0.5, 2.0, 10.0};
  std::vector<double> kld_boxes{50.0, 100.0, 200.0};
  bool kld_check = false;
  auto* kld = app.add_subcommand("kld-check", "Numerical checks of the Kullback-Leibler distance derivation");
  kld->add_option("--dim", kld_dim, "Spatial dimension")->check(CLI::Range(1, 3));
  kld->add_option("--alpha", kld_alpha, "SPDE exponent alpha = nu + d/2");
  kld->add_option("--kappa", kld_kappas, "kappa values for the kappa^d scaling law");
  kld->add_option("--box", kld_boxes, "Periodic box lengths L for the discrete sum (kappa0 = 1/L^2)");
  kld->add_flag("--check", kld_check, "Exit with status 5 when the scaling law is off by more than 1e-6");
  add_common(kld, kld_c, false);

  // coverage ----------------------------------------------------------------
  Common cov_c;
  PriorArgs cov_p;
  DesignArgs cov_d;
  ChainArgs cov_ch;
  Expect cov_e;
  std::vector<double> cov_rows{0.1}, cov_sigma0s{10.0}, cov_rho_true{0.1};
  std::string cov_reading = "multiplier";
  int cov_reps = 200;
  bool cov_check = false;
  bool cov_self = false;
  auto* cov = app.add_subcommand("coverage", "Frequentist coverage of credible intervals under direct observation");
  cov_p.add(cov);
  cov_d.add(cov);
  cov_ch.add(cov);
  cov->add_option("--rows", cov_rows, "PC prior: range-threshold table rows (see --row-reading)");
  cov->add_option("--sigma0s", cov_sigma0s, "PC prior: sd thresholds, one table column each");
  cov->add_option("--rho-true", cov_rho_true, "True ranges (true variance is 1)");
  cov->add_option("--row-reading", cov_reading, "multiplier: rho0 = row * true range; absolute: rho0 = row")
      ->check(CLI::IsMember({"multiplier", "absolute"}));
  cov->add_option("--replicates", cov_reps, "Simulated datasets per cell")->check(CLI::PositiveNumber);
  cov->add_flag("--self-calibration", cov_self, "Draw the truth from the PC prior for every replicate");
  cov->add_flag("--check", cov_check, "Exit with status 5 when a configured expectation fails");
  cov_e.add(cov);
  add_common(cov, cov_c, true);

  // ridge -------------------------------------------------------------------
  Common rid_c;
  PriorArgs rid_p;
  DesignArgs rid_d;
  ChainArgs rid_ch;
  std::string rid_data;
  double rid_rho = 1.0;
  bool rid_check = false;
  auto* rid = app.add_subcommand("ridge", "Joint posterior of range and sd under the PC and Jeffreys' rule priors");
  rid_p.add(rid, false);
  rid_d.add(rid);
  rid_ch.add(rid);
  rid->add_option("--data", rid_data, "Realization CSV; default simulates one at --rho-true");
  rid->add_option("--rho-true", rid_rho, "True range of the simulated realization (variance 1)");
  rid->add_flag("--check", rid_check,
                "Exit with status 5 unless the Jeffreys upper sd limit exceeds the PC one and the tail "
                "correlation under Jeffreys exceeds 0.8");
  add_common(rid, rid_c, true);

  // logistic ----------------------------------------------------------------
  Common log_c;
  PriorArgs log_p;
  DesignArgs log_d;
  Expect log_e;
  LogisticOptions log_o;
  std::vector<double> log_rows{0.1}, log_sigma0s{10.0};
  double log_rho = 0.1;
  std::string log_reading = "multiplier";
  bool log_check = false;
  auto* lg = app.add_subcommand("logistic", "Coverage for binomial counts with a probit link on the field");
  log_p.add(lg, false);
  log_d.add(lg);
  lg->add_option("--rows", log_rows, "Range-threshold table rows (see --row-reading)");
  lg->add_option("--sigma0s", log_sigma0s, "Sd thresholds, one table column each");
  lg->add_option("--rho-true", log_rho, "True range (true variance is 1)");
  lg->add_option("--row-reading", log_reading, "multiplier: rho0 = row * true range; absolute: rho0 = row")
      ->check(CLI::IsMember({"multiplier", "absolute"}));
  lg->add_option("--replicates", log_o.replicates, "Simulated datasets per cell")->check(CLI::PositiveNumber);
  lg->add_option("--trials", log_o.trials, "Binomial trials per location")->check(CLI::PositiveNumber);
  lg->add_option("--iterations", log_o.chain.iterations, "Gibbs sweeps including burn-in");
  lg->add_option("--burn-in", log_o.chain.burn_in, "Burn-in sweeps");
  lg->add_flag("--check", log_check, "Exit with status 5 when a configured expectation fails");
  log_e.add(lg);
  add_common(lg, log_c, true);

  // nonstat -----------------------------------------------------------------
  Common ns_c;
  SyntheticConfig ns;
  std::string ns_phase = "all";
  std::optional<double> ns_lambda;
  std::vector<double> ns_theta1, ns_theta2;
  std::string ns_data, ns_covariates, ns_export;
  double ns_rho0 = 1.0, ns_sigma0 = 3.0;
  bool ns_check = false;
  auto* nst = app.add_subcommand("nonstat", "Non-stationary model with covariates in the range and sd fields");
  nst->add_option("--phase", ns_phase,
                  "calibrate: coverage calibration of lambda only; score: fits and leave-one-out scores with "
                  "--lambda; all: both")
      ->check(CLI::IsMember({"calibrate", "score", "all"}));
  nst->add_option("--lambda", ns_lambda, "Hyperprior rate for both coefficient blocks (skips calibration)");
  nst->add_option("--lambda-grid", ns.lambda_grid, "Candidate rates for calibration");
  nst->add_option("--calibration-datasets", ns.calibration_datasets, "Stationary datasets per candidate");
  nst->add_option("--calibration-grid", ns.calibration_grid_nodes, "Nodes per side of the calibration grid");
  nst->add_option("--calibration-iterations", ns.calibration_chain.iterations, "MCMC iterations per calibration fit");
  nst->add_option("--calibration-burn-in", ns.calibration_chain.burn_in, "Burn-in per calibration fit");
  nst->add_option("--grid", ns.grid_nodes, "Nodes per side of the synthetic grid");
  nst->add_option("--extent", ns.extent, "Side length of the square domain");
  nst->add_option("--sites", ns.sites, "Number of synthetic observation sites");
  nst->add_option("--rho", ns.rho, "Synthetic truth: range");
  nst->add_option("--sigma", ns.sigma, "Synthetic truth: marginal sd");
  nst->add_option("--sigma-n", ns.sigma_n, "Synthetic truth: nugget sd");
  nst->add_option("--theta1", ns_theta1, "Synthetic truth: elevation and gradient effects on log range")->expected(2);
  nst->add_option("--theta2", ns_theta2, "Synthetic truth: elevation and gradient effects on log sd")->expected(2);
  nst->add_option("--iterations", ns.chain.iterations, "MCMC iterations of the final fits");
  nst->add_option("--burn-in", ns.chain.burn_in, "Burn-in of the final fits");
  nst->add_option("--prior-rho0", ns_rho0, "PC prior: P(rho < rho0) = 0.05");
  nst->add_option("--prior-sigma0", ns_sigma0, "PC prior: P(sigma > sigma0) = 0.05");
  nst->add_option("--prior-sigma-n0", ns.prior.sigma_n0, "Nugget prior: P(sigma_N > sigma_n0) = 0.05");
  nst->add_flag("--ablations", ns.ablations, "Also fit without the range covariates and without the sd covariates");
  nst->add_option("--data", ns_data, "Observation CSV x,y,value[,fixed covariates...] instead of synthetic data");
  nst->add_option("--covariates", ns_covariates, "Covariate raster for --data (grid header, then x,y,fields)");
  nst->add_option("--export", ns_export,
                  "Also write the covariate raster and the stationary precision at the MAP (COO) to the output "
                  "directory");
  nst->add_flag("--check", ns_check, "Exit with status 5 unless the non-stationary CRPS beats the stationary one");
  add_common(nst, ns_c, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsage;
  }

  try {
    if (cal->parsed()) {
      const PcHyper h = cal_p.pc();
      const KappaTauHyper kt = kappa_tau_hyper(h, cal_nu);
      std::cout << "lambda_range=" << csv::format(h.lambda_range) << "\n"
                << "lambda_sigma=" << csv::format(h.lambda_sigma) << "\n"
                << "lambda_kappa=" << csv::format(kt.lambda1) << "\n"
                << "lambda_tau=" << csv::format(kt.lambda3) << "\n";
      StudyManifest m{"calibrate", 0, {}, {}, prior_to_json(h), {}};
      m.settings["nu"] = cal_nu;
      write_manifest(out_dir(cal_c), m, cal_c);
      return 0;
    }

    if (den->parsed()) {
      std::vector<double> rho = den_rho, sigma = den_sigma;
      if (!den_points.empty()) {
        const csv::Table t = csv::read_file(den_points);
        const int rc = t.column("rho"), sc = t.column("sigma");
        for (const auto& r : t.rows) {
          rho.push_back(r[rc]);
          sigma.push_back(r[sc]);
        }
      }
      require_flag(!rho.empty(), "--rho or --points is required");
      if (sigma.size() == 1) sigma.resize(rho.size(), sigma[0]);
      require_flag(sigma.size() == rho.size(), "--sigma needs one value or one per --rho");
      for (double r : rho) require_flag(r > 0.0 && std::isfinite(r), "--rho must be positive (got " + csv::format(r) + ")");
      for (double s : sigma)
        require_flag(s > 0.0 && std::isfinite(s), "--sigma must be positive (got " + csv::format(s) + ")");
      den_p.dim = den_d.dim;
      const PriorSpec spec = den_p.spec();
      std::optional<Design> design;
      if (std::holds_alternative<JeffreysRule>(spec)) design = den_d.build();
      std::ostringstream s;
      csv::write_header(s, {"rho", "sigma", "logdensity"});
      for (std::size_t k = 0; k < rho.size(); ++k)
        csv::write_row(s, {rho[k], sigma[k], prior_logdensity_rho_sigma(spec, rho[k], sigma[k],
                                                                          design ? &*design : nullptr)});
      std::cout << s.str();
      const fs::path dir = out_dir(den_c);
      write_text(dir / "density.csv", s.str());
      StudyManifest m{"density", 0, design ? den_d.to_json() : nlohmann::json(), {}, prior_to_json(spec),
                      {"density.csv"}};
      write_manifest(dir, m, den_c);
      return 0;
    }

    if (sim->parsed()) {
      const Design design = sim_d.build();
      MaternParams p{sim_rho, sim_sigma2, sim_nu, design.dim()};
      p.validate();
      require_flag(sim_nugget >= 0.0, "--nugget-sd must be nonnegative");
      GeoModel gm;
      gm.beta0 = sim_b0;
      gm.beta1 = sim_b1;
      gm.nugget_sd = sim_nugget;
      gm.field = p;
      gm.covariate = Eigen::VectorXd::Zero(design.size());
      if (!sim_covariate.empty()) {
        const csv::Table t = csv::read_file(sim_covariate);
        require_flag(static_cast<int>(t.rows.size()) == design.size(), "--covariate needs one row per location");
        for (int i = 0; i < design.size(); ++i) gm.covariate(i) = t.rows[i].at(0);
      }
      const fs::path dir = out_dir(sim_c);
      StudyManifest m{"simulate", *sim_c.seed, sim_d.to_json(), {}, {}, {}};
      m.settings = {{"rho", sim_rho}, {"sigma2", sim_sigma2}, {"nu", sim_nu}, {"nugget_sd", sim_nugget},
                    {"beta0", sim_b0}, {"beta1", sim_b1}, {"replicates", sim_reps}};
      for (int k = 0; k < sim_reps; ++k) {
        Rng rng(*sim_c.seed, {static_cast<std::uint64_t>(k)});
        const Realization r = sample_geomodel(gm, design, rng);
        std::ostringstream s;
        r.write_csv(s);
        const std::string name = sim_reps == 1 ? "realization.csv" : "realization_" + std::to_string(k) + ".csv";
        write_text(dir / name, s.str());
        m.outputs.push_back(name);
      }
      write_manifest(dir, m, sim_c);
      return 0;
    }

    if (fit->parsed()) {
      const Realization data = Realization::read_csv_file(fit_data);
      fit_p.dim = data.design.dim();
      const PriorSpec spec = fit_p.spec();
      RwConfig cfg = fit_ch.rw;
      cfg.seed = *fit_c.seed;
      const Chain chain = fit_direct(data, spec, cfg);
      const fs::path dir = out_dir(fit_c);
      std::ostringstream s;
      chain.write_csv(s);
      write_text(dir / "chain.csv", s.str());
      std::ostringstream sum;
      csv::write_header(sum, {"parameter_index", "lower", "upper", "mean"});
      std::cout << "parameter,lower,upper,mean\n";
      const char* names[] = {"rho", "sigma2"};
      for (int j = 0; j < 2; ++j) {
        const Eigen::VectorXd v = chain.column(j).array().exp().matrix();
        const Interval ci = equal_tailed_ci(v, fit_level);
        csv::write_row(sum, {double(j), ci.lower, ci.upper, v.mean()});
        std::cout << names[j] << ',' << csv::format(ci.lower) << ',' << csv::format(ci.upper) << ','
                  << csv::format(v.mean()) << "\n";
      }
      write_text(dir / "summary.csv", sum.str());
      for (const auto& w : chain.warnings) std::cerr << "warning: " << w << "\n";
      StudyManifest m{"fit", *fit_c.seed, {{"data", fit_data}}, config_json(cfg), prior_to_json(spec),
                      {"chain.csv", "summary.csv"}};
      m.settings["chain"] = chain.manifest();
      m.settings["level"] = fit_level;
      write_manifest(dir, m, fit_c);
      return 0;
    }

    if (kld->parsed()) {
      const double base = scaled_kld(1.0, kld_alpha, kld_dim);
      std::ostringstream s;
      s << "quantity,kappa,box_length,value,reference,relative_error\n";
      double worst = 0.0;
      for (double k : checked_list(kld_kappas, "--kappa")) {
        const double ratio = scaled_kld(k, kld_alpha, kld_dim) / base;
        const double target = std::pow(k, kld_dim);
        const double rel = std::abs(ratio / target - 1.0);
        worst = std::max(worst, rel);
        s << "scaling," << csv::format(k) << ",," << csv::format(ratio) << ',' << csv::format(target) << ','
          << csv::format(rel) << '\n';
      }
      for (double box : checked_list(kld_boxes, "--box")) {
        const double k0 = 1.0 / (box * box);
        const int kmax = static_cast<int>(std::ceil(40.0 * box / (2.0 * M_PI)));
        const double v = std::pow(2.0 * M_PI / box, kld_dim) * discrete_kld(1.0, k0, kld_alpha, kld_dim, box, kmax);
        s << "discrete,1," << csv::format(box) << ',' << csv::format(v) << ',' << csv::format(base) << ','
          << csv::format(std::abs(v / base - 1.0)) << '\n';
      }
      std::cout << "scaled_kld(1)=" << csv::format(base) << "\n"
                << "max_scaling_relative_error=" << csv::format(worst) << "\n"
                << s.str();
      const fs::path dir = out_dir(kld_c);
      write_text(dir / "kld_check.csv", s.str());
      StudyManifest m{"kld-check", 0, {}, {}, {{"dim", kld_dim}, {"alpha", kld_alpha}}, {"kld_check.csv"}};
      write_manifest(dir, m, kld_c);
      if (kld_check && !(worst < 1e-6)) throw CheckFailure("kappa^d scaling law violated");
      return 0;
    }

    if (cov->parsed()) {
      const Design design = cov_d.build();
      cov_p.dim = design.dim();
      CoverageOptions o;
      o.replicates = cov_reps;
      o.chain = cov_ch.rw;
      o.seed = *cov_c.seed;
      o.threads = cov_c.threads;
      std::vector<CoverageCell> cells;
      if (cov_self) {
        cells.push_back(self_calibration_study(cov_p.pc(), design, o));
      } else {
        for (double rt : checked_list(cov_rho_true, "--rho-true")) {
          const MaternParams truth{rt, 1.0, 0.5, design.dim()};
          if (cov_p.type == "pc") {
            for (double row : checked_list(cov_rows, "--rows"))
              for (double s0 : checked_list(cov_sigma0s, "--sigma0s")) {
                PriorArgs a = cov_p;
                a.rho0 = table_rho0(row, rt, parse_reading(cov_reading));
                a.sigma0 = s0;
                cells.push_back(coverage_study(a.spec(), truth, design, o));
              }
          } else {
            cells.push_back(coverage_study(cov_p.spec(), truth, design, o));
          }
        }
      }
      print_cells(cells);
      const fs::path dir = out_dir(cov_c);
      std::ostringstream s;
      write_cells_csv(s, cells);
      write_text(dir / "coverage.csv", s.str());
      StudyManifest m{"coverage", o.seed, cov_d.to_json(), config_json(o.chain), {}, {"coverage.csv"}};
      m.settings = {{"prior", cov_p.type}, {"rows", cov_rows}, {"sigma0s", cov_sigma0s}, {"rho_true", cov_rho_true},
                    {"row_reading", cov_reading}, {"replicates", cov_reps}, {"self_calibration", cov_self},
                    {"lower", cov_p.lower}, {"upper", cov_p.upper}};
      write_manifest(dir, m, cov_c);
      if (cov_check) cov_e.verify(cells);
      return 0;
    }

    if (rid->parsed()) {
      const fs::path dir = out_dir(rid_c);
      Realization data;
      nlohmann::json design_json;
      if (!rid_data.empty()) {
        data = Realization::read_csv_file(rid_data);
        design_json = {{"data", rid_data}};
      } else {
        const Design design = rid_d.build();
        Rng rng(*rid_c.seed, {0});
        data = sample_grf(design, MaternParams{rid_rho, 1.0, 0.5, design.dim()}, rng);
        design_json = rid_d.to_json();
        std::ostringstream s;
        data.write_csv(s);
        write_text(dir / "ridge_realization.csv", s.str());
      }
      rid_p.dim = data.design.dim();
      RwConfig cfg = rid_ch.rw;
      cfg.seed = *rid_c.seed;
      cfg.stream = 1;
      const RidgeSummary r = ridge_study(data, rid_p.pc(), cfg);
      std::ostringstream s, samples;
      r.write_csv(s);
      r.write_samples_csv(samples);
      std::cout << s.str();
      write_text(dir / "ridge_summary.csv", s.str());
      write_text(dir / "ridge_samples.csv", samples.str());
      StudyManifest m{"ridge", *rid_c.seed, design_json, config_json(cfg), prior_to_json(rid_p.pc()),
                      {"ridge_summary.csv", "ridge_samples.csv"}};
      m.settings["rho_true"] = rid_rho;
      write_manifest(dir, m, rid_c);
      if (rid_check) {
        if (!(r.upper_sigma_jeffreys > r.upper_sigma_pc))
          throw CheckFailure("Jeffreys upper sd limit does not exceed the PC one");
        if (!(r.tail_correlation_jeffreys > 0.8)) throw CheckFailure("tail correlation under Jeffreys is not above 0.8");
      }
      return 0;
    }

    if (lg->parsed()) {
      const Design design = log_d.build();
      log_p.dim = design.dim();
      log_o.seed = *log_c.seed;
      log_o.threads = log_c.threads;
      const MaternParams truth{log_rho, 1.0, 0.5, design.dim()};
      std::vector<CoverageCell> cells;
      for (double row : checked_list(log_rows, "--rows"))
        for (double s0 : checked_list(log_sigma0s, "--sigma0s")) {
          PriorArgs a = log_p;
          a.rho0 = table_rho0(row, log_rho, parse_reading(log_reading));
          a.sigma0 = s0;
          cells.push_back(logistic_coverage_study(a.pc(), truth, design, log_o));
        }
      print_cells(cells);
      const fs::path dir = out_dir(log_c);
      std::ostringstream s;
      write_cells_csv(s, cells);
      write_text(dir / "logistic.csv", s.str());
      StudyManifest m{"logistic", log_o.seed, log_d.to_json(), config_json(log_o.chain), {}, {"logistic.csv"}};
      m.settings = {{"rows", log_rows}, {"sigma0s", log_sigma0s}, {"rho_true", log_rho}, {"row_reading", log_reading},
                    {"replicates", log_o.replicates}, {"trials", log_o.trials}};
      write_manifest(dir, m, log_c);
      if (log_check) log_e.verify(cells);
      return 0;
    }

    if (nst->parsed()) {
      if (!ns_theta1.empty()) ns.theta1 = Eigen::Map<Eigen::VectorXd>(ns_theta1.data(), 2);
      if (!ns_theta2.empty()) ns.theta2 = Eigen::Map<Eigen::VectorXd>(ns_theta2.data(), 2);
      ns.prior.field = calibrate_pc(ns_rho0, 0.05, ns_sigma0, 0.05, 2);
      ns.threads = ns_c.threads;
      require_flag(ns_phase != "score" || ns_lambda, "--phase score needs --lambda");
      ns.calibrate = ns_phase != "score" && !ns_lambda;
      if (ns_lambda) {
        require_flag(*ns_lambda > 0.0, "--lambda must be positive");
        ns.prior.lambda1 = ns.prior.lambda2 = *ns_lambda;
      }
      const fs::path dir = out_dir(ns_c);
      const std::uint64_t seed = *ns_c.seed;

      StudyGrids grids;
      NonStatData data;
      std::vector<std::string> covariate_names{"elevation", "gradient"};
      if (!ns_data.empty()) {
        require_flag(!ns_covariates.empty(), "--data needs --covariates");
        std::ifstream rf(ns_covariates);
        if (!rf) throw ParseError("cannot open " + ns_covariates);
        const Raster raster = read_raster(rf);
        grids.grid = grids.calibration_grid = raster.grid;
        grids.basis = grids.calibration_basis = BasisSet::from_raw(raster.fields, raster.names);
        covariate_names = raster.names;
        const csv::Table t = csv::read_file(ns_data);
        require_flag(t.header.size() >= 3, "--data needs columns x,y,value");
        const auto n = static_cast<Eigen::Index>(t.rows.size());
        data.sites.resize(n, 2);
        data.y.resize(n);
        data.fixed.resize(n, 1 + static_cast<Eigen::Index>(t.header.size()) - 3);
        for (Eigen::Index i = 0; i < n; ++i) {
          data.sites(i, 0) = t.rows[i][0];
          data.sites(i, 1) = t.rows[i][1];
          data.y(i) = t.rows[i][2];
          data.fixed(i, 0) = 1.0;
          for (std::size_t j = 3; j < t.header.size(); ++j) data.fixed(i, j - 2) = t.rows[i][j];
        }
      } else {
        grids = synthetic_grids(ns);
        data = synthetic_dataset(ns, seed);
        std::ostringstream s;
        csv::write_header(s, {"x", "y", "value", "elevation"});
        for (Eigen::Index i = 0; i < data.y.size(); ++i)
          csv::write_row(s, {data.sites(i, 0), data.sites(i, 1), data.y(i), data.fixed(i, 1)});
        write_text(dir / "nonstat_data.csv", s.str());
      }

      StudyManifest m{"nonstat", seed, {}, config_json(ns.chain), ns.to_json(), {}};
      if (!ns_data.empty()) m.design = {{"data", ns_data}, {"covariates", ns_covariates}};
      else m.outputs.push_back("nonstat_data.csv");

      if (!ns_export.empty()) {
        std::ostringstream r;
        write_raster(r, grids.grid, covariate_names, grids.basis.functions);
        write_text(dir / (ns_export + "_covariates.csv"), r.str());
        m.outputs.push_back(ns_export + "_covariates.csv");
      }

      if (ns_phase == "calibrate") {
        NonStatPrior stationary = ns.prior;
        stationary.range_effects = stationary.sd_effects = false;
        NonStatPosterior post(grids.grid, grids.basis, grids.basis, data, stationary);
        const MapResult map = nonstat_map(post);
        CalibrationSetup setup{grids.calibration_grid, grids.calibration_basis, grids.calibration_basis, data.sites,
                               std::exp(map.x(0)), std::exp(map.x(1)), std::exp(map.x(2)), ns.prior,
                               ns.calibration_chain};
        std::cout << "stationary_map sigma_n=" << csv::format(setup.sigma_n) << " rho=" << csv::format(setup.rho)
                  << " sigma=" << csv::format(setup.sigma) << "\n";
        try {
          const CoverageCalibration c =
              calibrate_by_coverage(setup, ns.lambda_grid, ns.calibration_datasets, ns.level, seed, ns.threads);
          write_text(dir / "calibration.csv", c.table_csv());
          std::cout << c.table_csv() << "lambda=" << csv::format(c.lambda1) << "\n";
        } catch (const CalibrationError& e) {
          write_text(dir / "calibration.csv", e.table());
          std::cerr << e.table();
          throw;
        }
        m.outputs.push_back("calibration.csv");
        write_manifest(dir, m, ns_c);
        return 0;
      }

      SyntheticReport report;
      try {
        report = nonstat_study(grids, data, ns, seed);
      } catch (const CalibrationError& e) {
        write_text(dir / "calibration.csv", e.table());
        std::cerr << e.table();
        throw;
      }
      std::ostringstream s;
      report.write_comparison_csv(s);
      std::cout << s.str();
      write_text(dir / "comparison.csv", s.str());
      m.outputs.push_back("comparison.csv");
      if (report.calibration) {
        write_text(dir / "calibration.csv", report.calibration->table_csv());
        m.outputs.push_back("calibration.csv");
      }
      if (!ns_export.empty()) {
        NonStatModel sm;
        sm.grid = grids.grid;
        sm.stationary = MaternParams{std::exp(report.stationary_map(1)), std::exp(2.0 * report.stationary_map(2)), 1.0, 2};
        std::ostringstream q;
        write_coo(q, build_precision(sm));
        write_text(dir / (ns_export + "_precision.coo"), q.str());
        m.outputs.push_back(ns_export + "_precision.coo");
      }
      m.settings["selected_lambda"] = report.lambda;
      for (const auto& mod : report.models)
        for (const auto& w : mod.warnings) std::cerr << "warning (" << mod.model << "): " << w << "\n";
      write_manifest(dir, m, ns_c);
      if (ns_check && !(report.model("nonstationary").scores.crps_gaussian < report.model("stationary").scores.crps_gaussian))
        throw CheckFailure("non-stationary CRPS does not beat the stationary CRPS");
      return 0;
    }
  } catch (const CheckFailure& e) {
    std::cerr << "check failed: " << e.what() << "\n";
    return kCheckFailed;
  } catch (const CalibrationError& e) {
    std::cerr << "calibration failed: " << e.what() << "\n";
    return kNumerical;
  } catch (const DomainError& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return kValidation;
  } catch (const UnsupportedSmoothnessError& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return kValidation;
  } catch (const InsufficientSamplesError& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return kValidation;
  } catch (const pcprior::ParseError& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return kValidation;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return kValidation;
  } catch (const std::exception& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kNumerical;
  }
  return kUsage;
}
