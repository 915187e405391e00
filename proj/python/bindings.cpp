#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "egcnn/aspect.hpp"
#include "egcnn/cli.hpp"
#include "egcnn/errors.hpp"
#include "egcnn/eval.hpp"
#include "egcnn/multidomain.hpp"
#include "egcnn/text.hpp"

namespace py = pybind11;
using namespace egcnn;

namespace {

Tensor to_tensor(const Eigen::MatrixXd& m) { return multidomain::from_eigen(m); }

Eigen::MatrixXd to_matrix(const Tensor& t) { return multidomain::to_eigen(t); }

// Runs a CLI command and returns (exit code, stdout, stderr).
py::tuple run_cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  int code;
  {
    py::gil_scoped_release release;
    code = cli::run(args, out, err);
  }
  return py::make_tuple(code, out.str(), err.str());
}

}  // namespace

PYBIND11_MODULE(_egcnn, m) {
  m.doc() = "Embedding-gated CNN helpfulness regression";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  auto contract = py::register_exception<ContractError>(m, "ContractError", base.ptr());
  py::register_exception<ShapeError>(m, "ShapeError", contract.ptr());
  py::register_exception<IndexError>(m, "IndexError", contract.ptr());
  py::register_exception<LabelError>(m, "LabelError", contract.ptr());
  py::register_exception<FormatError>(m, "FormatError", contract.ptr());
  py::register_exception<eval::UndefinedCorrelation>(m, "UndefinedCorrelation", contract.ptr());
  py::register_exception<TrainingError>(m, "TrainingError", base.ptr());

  m.def("tokenize", &text::tokenize, py::arg("text"));

  m.def("pearson",
        [](const std::vector<double>& p, const std::vector<double>& t) { return eval::pearson(p, t); },
        py::arg("pred"), py::arg("truth"));
  m.def("spearman",
        [](const std::vector<double>& p, const std::vector<double>& t) { return eval::spearman(p, t); },
        py::arg("pred"), py::arg("truth"));

  m.def("matrix_sqrt_psd", &multidomain::matrix_sqrt_psd, py::arg("m"));
  m.def("omega_update", &multidomain::omega_update, py::arg("w"), py::arg("ridge_eps") = 1e-6);
  m.def("trace_term", &multidomain::trace_term, py::arg("w"), py::arg("omega"),
        py::arg("ridge_eps") = 0.0);
  m.def("trace_gradient", &multidomain::trace_gradient, py::arg("w"), py::arg("omega"),
        py::arg("ridge_eps") = 0.0);

  m.def(
      "fit_aspects",
      [](const std::vector<std::vector<int>>& docs, std::size_t vocab_size, int aspects,
         double alpha, double beta, int iterations, std::uint64_t seed) {
        aspect::LdaConfig cfg{aspects, alpha, beta, iterations, seed};
        return to_matrix(aspect::fit_aspects(docs, vocab_size, cfg).phi);
      },
      py::arg("docs"), py::arg("vocab_size"), py::arg("aspects") = 100, py::arg("alpha") = 0.0,
      py::arg("beta") = 0.01, py::arg("iterations") = 200, py::arg("seed") = 1);
  m.def(
      "word_aspect_rep",
      [](const Eigen::MatrixXd& phi) { return to_matrix(aspect::word_aspect_rep(to_tensor(phi))); },
      py::arg("phi"));

  m.def(
      "grad_check",
      [](std::uint64_t seed, int m_len, int dim, int aspects, int channels, int domains) {
        cli::GradCheckSetup s;
        s.seed = seed;
        s.m = m_len;
        s.dim = dim;
        s.aspects = aspects;
        s.channels = channels;
        s.domains = domains;
        py::gil_scoped_release release;
        const auto r = cli::full_model_grad_check(s);
        return std::make_tuple(r.max_rel_error, r.checked, r.skipped);
      },
      py::arg("seed") = 1, py::arg("m") = 12, py::arg("dim") = 8, py::arg("aspects") = 6,
      py::arg("channels") = 8, py::arg("domains") = 3,
      "Full-model finite-difference check; returns (max_rel_error, checked, skipped).");

  m.def("run", &run_cli, py::arg("args"),
        "Runs an egcnn command line, e.g. run(['train', '--data', ...]). Returns (code, out, err).");
}
