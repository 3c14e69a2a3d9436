#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "pcprior/error.hpp"
#include "pcprior/experiments.hpp"

namespace py = pybind11;
using namespace pcprior;

namespace {

Design make_design(const Eigen::MatrixXd& locations) { return Design(locations); }

py::dict chain_dict(const Chain& c) {
  py::dict d;
  d["names"] = c.names;
  d["samples"] = c.samples;
  d["burn_in"] = c.burn_in;
  d["acceptance_rate"] = c.acceptance_rate;
  d["warnings"] = c.warnings;
  return d;
}

py::dict cell_dict(const CoverageCell& c) {
  py::dict d;
  d["prior"] = c.prior;
  d["replicates"] = c.replicates;
  d["failures"] = c.failures;
  d["coverage_range"] = c.coverage_range;
  d["coverage_variance"] = c.coverage_variance;
  d["mean_length_range"] = c.mean_length_range;
  d["mean_length_variance"] = c.mean_length_variance;
  d["length_se_range"] = c.length_se_range;
  d["length_se_variance"] = c.length_se_variance;
  return d;
}

}  // namespace

PYBIND11_MODULE(_pcprior, m) {
  m.doc() = "PC priors for Matern Gaussian random fields";
  m.attr("__version__") = kVersion;

  py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);
  py::register_exception<DivergenceError>(m, "DivergenceError", PyExc_ArithmeticError);
  py::register_exception<SamplerError>(m, "SamplerError", PyExc_RuntimeError);

  py::class_<PcHyper>(m, "PcHyper")
      .def_readonly("rho0", &PcHyper::rho0)
      .def_readonly("alpha_rho", &PcHyper::alpha_rho)
      .def_readonly("sigma0", &PcHyper::sigma0)
      .def_readonly("alpha_sigma", &PcHyper::alpha_sigma)
      .def_readonly("dim", &PcHyper::dim)
      .def_readonly("lambda_range", &PcHyper::lambda_range)
      .def_readonly("lambda_sigma", &PcHyper::lambda_sigma)
      .def("__repr__", [](const PcHyper& h) {
        std::ostringstream s;
        s << "PcHyper(rho0=" << h.rho0 << ", alpha_rho=" << h.alpha_rho << ", sigma0=" << h.sigma0
          << ", alpha_sigma=" << h.alpha_sigma << ", dim=" << h.dim << ")";
        return s.str();
      });
  py::class_<JeffreysRule>(m, "JeffreysRule").def(py::init<>());
  py::class_<UniformRange>(m, "UniformRange")
      .def(py::init<double, double>(), py::arg("lower"), py::arg("upper"))
      .def_readonly("lower", &UniformRange::lower)
      .def_readonly("upper", &UniformRange::upper);
  py::class_<LogUniformRange>(m, "LogUniformRange")
      .def(py::init<double, double>(), py::arg("lower"), py::arg("upper"))
      .def_readonly("lower", &LogUniformRange::lower)
      .def_readonly("upper", &LogUniformRange::upper);

  m.def("calibrate_pc", &calibrate_pc, py::arg("rho0"), py::arg("alpha_rho"), py::arg("sigma0"),
        py::arg("alpha_sigma"), py::arg("dim") = 2,
        "Rates of the joint PC prior from P(rho < rho0) = alpha_rho and P(sigma > sigma0) = alpha_sigma.");
  m.def("pc_logdensity", &pc_logdensity, py::arg("rho"), py::arg("sigma2"), py::arg("hyper"),
        "Log density of the joint PC prior in (rho, sigma^2).");
  m.def("pc_range_logdensity", &pc_range_logdensity, py::arg("rho"), py::arg("hyper"));
  m.def("pc_variance_logdensity", &pc_variance_logdensity, py::arg("sigma2"), py::arg("hyper"));
  m.def("scaled_kld", &scaled_kld, py::arg("kappa"), py::arg("alpha"), py::arg("dim"));
  m.def("matern_cov", [](double h, double rho, double sigma2, double nu, int dim) {
    return matern_cov(h, MaternParams{rho, sigma2, nu, dim});
  }, py::arg("h"), py::arg("rho"), py::arg("sigma2") = 1.0, py::arg("nu") = 0.5, py::arg("dim") = 2);
  m.def("crps_gaussian", &crps_gaussian, py::arg("mu"), py::arg("sd"), py::arg("y"));

  m.def("uniform_design", [](int n, int dim, std::uint64_t seed) {
    return Design::uniform_random(n, dim, seed).locations();
  }, py::arg("n"), py::arg("dim") = 2, py::arg("seed") = kCoverageDesignSeed,
        "n locations uniform on [0,1]^dim; the default seed gives the coverage design.");
  m.def("sample_grf", [](const Eigen::MatrixXd& locations, double rho, double sigma2, double nu, std::uint64_t seed) {
    const Design d = make_design(locations);
    return sample_grf(d, MaternParams{rho, sigma2, nu, d.dim()}, seed).values;
  }, py::arg("locations"), py::arg("rho"), py::arg("sigma2") = 1.0, py::arg("nu") = 0.5, py::arg("seed") = 1);

  m.def("fit_direct", [](const Eigen::MatrixXd& locations, const Eigen::VectorXd& values, const PriorSpec& prior,
                         int iterations, int burn_in, std::uint64_t seed) {
    Realization data{make_design(locations), values, seed, 0};
    RwConfig cfg;
    cfg.iterations = iterations;
    cfg.burn_in = burn_in;
    cfg.seed = seed;
    py::gil_scoped_release release;
    Chain c = fit_direct(data, prior, cfg);
    py::gil_scoped_acquire acquire;
    return chain_dict(c);
  }, py::arg("locations"), py::arg("values"), py::arg("prior"), py::arg("iterations") = 30000,
        py::arg("burn_in") = 10000, py::arg("seed") = 1,
        "Adaptive Metropolis fit of (log rho, log sigma^2) for a directly observed exponential field.");

  m.def("coverage_study", [](const PriorSpec& prior, double rho_true, const Eigen::MatrixXd& locations,
                             int replicates, int iterations, int burn_in, std::uint64_t seed, int threads) {
    CoverageOptions o;
    o.replicates = replicates;
    o.chain.iterations = iterations;
    o.chain.burn_in = burn_in;
    o.seed = seed;
    o.threads = threads;
    CoverageCell c;
    {
      py::gil_scoped_release release;
      c = coverage_study(prior, MaternParams{rho_true, 1.0, 0.5, static_cast<int>(locations.cols())},
                         make_design(locations), o);
    }
    return cell_dict(c);
  }, py::arg("prior"), py::arg("rho_true"), py::arg("locations"), py::arg("replicates") = 200,
        py::arg("iterations") = 30000, py::arg("burn_in") = 10000, py::arg("seed") = 1, py::arg("threads") = 0);
}
