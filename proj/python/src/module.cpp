#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "sgmlab/gmm.hpp"
#include "sgmlab/losses.hpp"
#include "sgmlab/ot.hpp"
#include "sgmlab/schedule.hpp"
#include "sgmlab/topology.hpp"

namespace py = pybind11;
using namespace sgmlab;

namespace {

ScoreConvention convention_from(const std::string& s) {
  if (s == "lebesgue") return ScoreConvention::lebesgue;
  if (s == "gamma") return ScoreConvention::gamma;
  throw InvalidArgument("convention must be 'lebesgue' or 'gamma'");
}

py::dict estimate_dict(const Estimate& e) {
  py::dict d;
  d["value"] = e.value;
  d["std_error"] = e.std_error;
  d["samples"] = e.samples;
  return d;
}

McConfig mc_config(std::size_t samples, std::uint64_t seed, bool antithetic) {
  McConfig mc;
  mc.samples = samples;
  mc.seed = seed;
  mc.antithetic = antithetic;
  return mc;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Score-based generative model diagnostics";

  py::register_exception<InvalidArgument>(m, "InvalidArgument", PyExc_ValueError);
  py::register_exception<NumericalFailure>(m, "NumericalFailure", PyExc_ArithmeticError);
  py::register_exception<UndefinedCorrelation>(m, "UndefinedCorrelation", PyExc_ValueError);

  py::class_<NoiseSchedule>(m, "NoiseSchedule")
      .def_property_readonly("kind", [](const NoiseSchedule& s) { return to_string(s.kind); })
      .def_readonly("times", &NoiseSchedule::times)
      .def_readonly("alphas", &NoiseSchedule::alphas)
      .def_readonly("steps", &NoiseSchedule::steps)
      .def_property_readonly("horizon", &NoiseSchedule::horizon)
      .def("__len__", &NoiseSchedule::size);
  m.def("uniform_schedule", &build_uniform_schedule, py::arg("horizon"), py::arg("steps"));
  m.def("cosine_schedule", &build_cosine_schedule, py::arg("steps"), py::arg("offset") = 0.008,
        py::arg("ratio_cap") = 0.999);
  m.def("lambda_atoms", [](const NoiseSchedule& s) {
    std::vector<std::pair<double, double>> out;
    for (const auto& a : lambda_measure(s).atoms) out.emplace_back(a.time, a.weight);
    return out;
  });

  py::class_<GmmSpec>(m, "GmmSpec")
      .def_readonly("weights", &GmmSpec::weights)
      .def_readonly("means", &GmmSpec::means)
      .def_readonly("sigma2", &GmmSpec::sigma2)
      .def_property_readonly("dim", &GmmSpec::dim)
      .def("second_moment", [](const GmmSpec& s) { return second_moment(s); });
  m.def("reference_gmm", &reference_gmm, py::arg("mean_seed") = 0);
  m.def("gmm_with_random_means", &gmm_with_random_means, py::arg("weights"), py::arg("dim"), py::arg("sigma"),
        py::arg("seed"));
  m.def(
      "sample_gmm",
      [](const GmmSpec& s, std::size_t n, std::uint64_t seed) { return sample_gmm(s, n, seed).points; },
      py::arg("spec"), py::arg("n"), py::arg("seed"));
  m.def(
      "true_score",
      [](const GmmSpec& s, double t, const PointMatrix& x, const std::string& convention) {
        return true_diffused_score(s, t, x, convention_from(convention));
      },
      py::arg("spec"), py::arg("t"), py::arg("x"), py::arg("convention") = "lebesgue");
  m.def(
      "empirical_score",
      [](const PointMatrix& data, double t, const PointMatrix& x, const std::string& convention) {
        Dataset d{data};
        return empirical_diffused_score(d, t, x, convention_from(convention));
      },
      py::arg("data"), py::arg("t"), py::arg("x"), py::arg("convention") = "lebesgue");

  m.def(
      "decompose",
      [](const py::object& score, const PointMatrix& data, const GmmSpec& spec, const NoiseSchedule& schedule,
         std::size_t samples, std::uint64_t seed, bool antithetic) {
        ScoreField field;
        if (score.is_none()) {
          field = [&spec](double t, const PointMatrix& x) {
            return PointMatrix(2.0 * true_diffused_score(spec, t, x, ScoreConvention::gamma));
          };
        } else {
          auto fn = score.cast<std::function<PointMatrix(double, const PointMatrix&)>>();
          field = [fn](double t, const PointMatrix& x) { return fn(t, x); };
        }
        Dataset d{data};
        const auto r = decompose(field, d, spec, lambda_measure(schedule), mc_config(samples, seed, antithetic));
        py::dict out;
        out["eps_s"] = estimate_dict(r.eps_s);
        out["dsm"] = estimate_dict(r.dsm);
        out["esm"] = estimate_dict(r.esm);
        out["gen_gap"] = estimate_dict(r.gen_gap);
        out["population"] = estimate_dict(r.population);
        out["c_t"] = estimate_dict(r.c_t);
        out["c_hat"] = estimate_dict(r.c_hat);
        out["delta_hat"] = estimate_dict(r.delta_hat);
        out["residual"] = estimate_dict(r.residual);
        return out;
      },
      py::arg("score"), py::arg("data"), py::arg("spec"), py::arg("schedule"), py::arg("samples") = 256,
      py::arg("seed") = 0, py::arg("antithetic") = false,
      "Score-error decomposition. `score(t, x)` returns 2 (grad log p + x); None uses the true score.");

  m.def(
      "w2",
      [](const PointMatrix& x, const PointMatrix& y) {
        py::gil_scoped_release release;
        return w2_exact(x, y).w2;
      },
      py::arg("x"), py::arg("y"));
  m.def(
      "correlations",
      [](const std::vector<double>& xs, const std::vector<double>& ys) {
        const auto c = correlations(xs, ys);
        return std::make_pair(c.pearson, c.spearman);
      },
      py::arg("xs"), py::arg("ys"), "Returns (pearson, spearman).");
  m.def("mst_lifetime_sum", &mst_lifetime_sum, py::arg("dist"));
  m.def("positive_magnitude", &positive_magnitude, py::arg("dist"), py::arg("r"));
  m.def("pseudometric_matrix", py::overload_cast<const LossMatrix&, int>(&pseudometric_matrix), py::arg("losses"),
        py::arg("threads") = 1);
}
