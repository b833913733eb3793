#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "depthbnn/config.hpp"
#include "depthbnn/dist.hpp"
#include "depthbnn/errors.hpp"
#include "depthbnn/report.hpp"
#include "depthbnn/spiral.hpp"
#include "depthbnn/trainer.hpp"

namespace py = pybind11;
using namespace depthbnn;

namespace {

TrainConfig config_from_kwargs(const py::kwargs& kwargs) {
  TrainConfig c;
  for (const auto& [k, v] : kwargs) {
    apply_setting(c, py::str(k).cast<std::string>(), py::str(v).cast<std::string>());
  }
  c.validate();
  return c;
}

py::dict history_columns(const RunResult& r) {
  std::vector<int> epoch, support;
  std::vector<double> train_vfe, val_vfe, mean, stddev;
  for (const auto& e : r.history) {
    epoch.push_back(e.epoch);
    train_vfe.push_back(e.train_vfe);
    val_vfe.push_back(e.val_vfe.value_or(std::numeric_limits<double>::quiet_NaN()));
    mean.push_back(e.depth_mean);
    stddev.push_back(e.depth_std);
    support.push_back(e.support_size);
  }
  py::dict d;
  d["epoch"] = epoch;
  d["train_vfe"] = train_vfe;
  d["val_vfe"] = val_vfe;
  d["depth_mean"] = mean;
  d["depth_std"] = stddev;
  d["support_size"] = support;
  return d;
}

}  // namespace

PYBIND11_MODULE(_depthbnn, m) {
  m.doc() = "Variational depth estimation for unbounded-depth Bayesian networks";

  py::register_exception<ParameterError>(m, "ParameterError", PyExc_ValueError);
  py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);
  py::register_exception<ContractViolation>(m, "ContractViolation", PyExc_RuntimeError);
  py::register_exception<RunawayDepth>(m, "RunawayDepth", PyExc_RuntimeError);

  py::class_<TruncNormalDepth>(m, "TruncNormalDepth")
      .def(py::init([](double mu, double sigma, double lower_q, double upper_q) {
             TruncNormalDepth d{mu, sigma, lower_q, upper_q};
             d.validate();
             return d;
           }),
           py::arg("mu"), py::arg("sigma"), py::arg("lower_q") = 0.0, py::arg("upper_q") = 1.0)
      .def_readonly("mu", &TruncNormalDepth::mu)
      .def_readonly("sigma", &TruncNormalDepth::sigma)
      .def_readonly("lower_q", &TruncNormalDepth::lower_q)
      .def_readonly("upper_q", &TruncNormalDepth::upper_q);

  py::class_<PoissonDepth>(m, "PoissonDepth")
      .def(py::init([](double rate, double upper_q) {
             PoissonDepth d{rate, upper_q};
             d.validate();
             return d;
           }),
           py::arg("rate"), py::arg("upper_q") = 1.0)
      .def_readonly("rate", &PoissonDepth::rate)
      .def_readonly("upper_q", &PoissonDepth::upper_q);

  py::class_<DepthPMF>(m, "DepthPMF")
      .def_property_readonly("lo", [](const DepthPMF& p) { return p.support.lo; })
      .def_property_readonly("hi", [](const DepthPMF& p) { return p.support.hi; })
      .def_readonly("probs", &DepthPMF::probs)
      .def("prob", &DepthPMF::prob)
      .def("mean", &DepthPMF::mean)
      .def("stddev", &DepthPMF::stddev);

  m.def("support", [](const DepthLaw& d) { return std::pair{depth_support(d).lo, depth_support(d).hi}; },
        "Inclusive (lo, hi) depth range of a law");
  m.def("pmf", [](const DepthLaw& d) { return depth_pmf(d); });
  m.def("log_pmf", &untruncated_depth_log_pmf, py::arg("law"), py::arg("depth"),
        "Log-pmf of the law without quantile truncation");
  m.def("depth_kl", &depth_kl, py::arg("q"), py::arg("prior"));
  m.def("gaussian_kl",
        [](double q_mean, double q_std, double p_mean, double p_std) {
          return gaussian_kl({q_mean, q_std, p_mean, p_std});
        },
        py::arg("q_mean"), py::arg("q_std"), py::arg("p_mean"), py::arg("p_std"));

  py::class_<LabeledDataset>(m, "Dataset")
      .def_readonly("xs", &LabeledDataset::xs)
      .def_readonly("ys", &LabeledDataset::ys)
      .def_readonly("radius", &LabeledDataset::radius)
      .def_readonly("omega", &LabeledDataset::omega)
      .def_readonly("checksum", &LabeledDataset::checksum)
      .def("__len__", &LabeledDataset::size);

  m.def("generate_spiral",
        [](double omega, int n, std::uint64_t seed, double noise_var) {
          return generate({omega, n, seed, noise_var});
        },
        py::arg("omega"), py::arg("n"), py::arg("seed"), py::arg("noise_var") = 4e-4);
  m.def("radius_ks", [](const std::vector<double>& r) { return radius_distribution_check(r); },
        "KS statistic of the squared radii against U[0,1]");

  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init(&config_from_kwargs), "Defaults overridden by keyword arguments")
      .def_static("from_text", &parse_train_config)
      .def("set", [](TrainConfig& c, const std::string& k, const std::string& v) { apply_setting(c, k, v); })
      .def("to_text", [](const TrainConfig& c) { return to_text(c); })
      .def("hash", &config_hash)
      .def_readwrite("epochs", &TrainConfig::epochs)
      .def_readwrite("seed", &TrainConfig::seed)
      .def_readwrite("omega", &TrainConfig::omega)
      .def_property(
          "prior_kind", [](const TrainConfig& c) { return to_string(c.prior_kind); },
          [](TrainConfig& c, const std::string& s) { c.prior_kind = parse_depth_kind(s); });

  py::class_<RunResult>(m, "RunResult")
      .def_readonly("best_val_vfe", &RunResult::best_val_vfe)
      .def_readonly("best_epoch", &RunResult::best_epoch)
      .def_readonly("test_accuracy", &RunResult::test_accuracy)
      .def_readonly("depth_posterior_mean", &RunResult::depth_posterior_mean)
      .def_readonly("depth_posterior_std", &RunResult::depth_posterior_std)
      .def_readonly("depth_posterior", &RunResult::depth_posterior)
      .def_property_readonly("history", &history_columns);

  m.def(
      "train",
      [](const TrainConfig& c, const std::optional<std::filesystem::path>& output) {
        c.validate();
        RunResult r;
        {
          py::gil_scoped_release release;
          r = train(c, generate_splits(c.omega, c.seed, c.n_train, c.n_val, c.n_test, c.noise_var));
          if (output) write_run_artifacts(*output, c, r);
        }
        return r;
      },
      py::arg("config"), py::arg("output") = py::none(), "Train one model; optionally write its artifacts");

  m.def("moving_average_nonincreasing_fraction",
        [](const std::vector<double>& v, std::size_t w) { return moving_average_nonincreasing_fraction(v, w); },
        py::arg("values"), py::arg("window"));
}
