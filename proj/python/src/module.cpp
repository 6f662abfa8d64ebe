// Python bindings: JSON crosses the boundary as text, frames as numpy arrays.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <nlohmann/json.hpp>

#include "twinbeam/analysis.hpp"
#include "twinbeam/camera.hpp"
#include "twinbeam/config.hpp"
#include "twinbeam/errors.hpp"
#include "twinbeam/fitting.hpp"
#include "twinbeam/medium.hpp"
#include "twinbeam/sweep.hpp"

namespace py = pybind11;
using namespace twinbeam;
using nlohmann::json;

namespace {

ExperimentConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not JSON: ") + e.what());
  }
  return config_from_json(j);
}

std::string fit_text(const FitResult& f) {
  json params = json::object();
  for (std::size_t k = 0; k < f.names.size(); ++k) {
    params[f.names[k]] = {{"value", f.values[k]}, {"sigma", f.sigmas[k]}};
  }
  return json{{"parameters", params}, {"rss", f.rss}, {"r2", f.r2}, {"converged", f.converged},
              {"iterations", f.iterations}}
      .dump();
}

RealFrames frames_from(py::array_t<double, py::array::c_style | py::array::forcecast> a) {
  if (a.ndim() != 3) throw ContractError("frames must be a (frames, height, width) array");
  RealFrames f{static_cast<std::size_t>(a.shape(2)), static_cast<std::size_t>(a.shape(1)), {}};
  const auto per = f.pixels();
  const double* p = a.data();
  for (py::ssize_t r = 0; r < a.shape(0); ++r) f.frames.emplace_back(p + r * per, p + (r + 1) * per);
  return f;
}

std::vector<double> as_vector(py::array_t<double, py::array::c_style | py::array::forcecast> a) {
  return {a.data(), a.data() + a.size()};
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "twin-beam PDC simulation and analysis core";

  py::register_exception<ContractError>(m, "ContractError", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<NumericAbort>(m, "NumericAbort", PyExc_ArithmeticError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_IOError);
  py::register_exception<IoError>(m, "IoError", PyExc_IOError);
  py::register_exception<AnalysisError>(m, "AnalysisError", PyExc_RuntimeError);

  m.def("normalize_config", [](const std::string& text) { return to_json(parse_config(text)).dump(); },
        "Validate a config (JSON text) and return it with every default filled in.");
  m.def("config_hash", [](const std::string& text) { return config_hash(parse_config(text)); });
  m.def("peak_power_w", [](const std::string& text, double mw) { return peak_power_w(parse_config(text).pump, mw); });

  m.def(
      "simulate",
      [](const std::string& text, double mw, const std::string& out, std::size_t workers) {
        py::gil_scoped_release release;
        return to_json(cmd_simulate(parse_config(text), mw, out, workers, nullptr)).dump();
      },
      py::arg("config"), py::arg("power_mw"), py::arg("out"), py::arg("workers") = 1);
  m.def(
      "sweep",
      [](const std::string& text, const std::string& out, std::size_t workers) {
        py::gil_scoped_release release;
        const auto rep = cmd_sweep(parse_config(text), out, workers, nullptr);
        json j{{"metadata", rep.metadata}, {"fits", rep.fits}, {"records", json::array()}};
        for (const auto& r : rep.records) j["records"].push_back(to_json(r));
        return j.dump();
      },
      py::arg("config"), py::arg("out"), py::arg("workers") = 1);
  m.def(
      "analyze",
      [](const std::string& stack, const std::string& text, const std::string& out) {
        py::gil_scoped_release release;
        return to_json(cmd_analyze(stack, parse_config(text), out)).dump();
      },
      py::arg("stack"), py::arg("config"), py::arg("out"));

  m.def(
      "read_frame_stack",
      [](const std::string& path) {
        const auto s = read_frame_stack(path);
        py::array_t<std::uint16_t> a({s.frames.size(), s.height, s.width});
        auto* p = a.mutable_data();
        for (const auto& f : s.frames) p = std::copy(f.begin(), f.end(), p);
        json meta{{"camera", to_json(s.camera)}, {"center", {s.center.i, s.center.j}}, {"provenance", s.provenance}};
        return py::make_tuple(a, meta.dump());
      },
      "Frames as a (frames, height, width) uint16 array plus the sidecar as JSON text.");

  m.def(
      "g2",
      [](py::array_t<double, py::array::c_style | py::array::forcecast> frames) {
        const auto f = frames_from(frames);
        const auto e = g2_estimate(f, {0, f.width, 0, f.height});
        return py::make_tuple(e.g2_raw, e.mean_dn);
      },
      "Raw g2 of the frame-summed signal and the mean per pixel.");
  m.def("mode_count", &mode_count);
  m.def(
      "gamma_map",
      [](py::array_t<double, py::array::c_style | py::array::forcecast> frames, std::size_t si, std::size_t sj,
         std::size_t ci, std::size_t cj) {
        const auto f = frames_from(frames);
        const auto map = gamma_map(f, {si, sj}, {ci, cj});
        py::array_t<double> a({map.height, map.width});
        std::copy(map.gamma.begin(), map.gamma.end(), a.mutable_data());
        return a;
      },
      py::arg("frames"), py::arg("seed_i"), py::arg("seed_j"), py::arg("center_i"), py::arg("center_j"));
  m.def(
      "fwhm",
      [](py::array_t<double, py::array::c_style | py::array::forcecast> profile, double baseline) {
        return fwhm_of_section(as_vector(profile), baseline).pixels;
      },
      py::arg("profile"), py::arg("baseline") = 1.0);
  m.def("spearman", [](py::array_t<double> x, py::array_t<double> y) { return spearman(as_vector(x), as_vector(y)); });

  m.def(
      "fit_power_law",
      [](py::array_t<double> x, py::array_t<double> y, std::optional<double> fixed) {
        return fit_text(fit_power_law(as_vector(x), as_vector(y), fixed));
      },
      py::arg("x"), py::arg("y"), py::arg("fixed_exponent") = py::none());
  m.def("fit_sinh2",
        [](py::array_t<double> x, py::array_t<double> y) { return fit_text(fit_sinh2(as_vector(x), as_vector(y))); });

  m.def(
      "refractive_index",
      [](double wavelength_m, bool extraordinary) {
        return index(default_bbo(), wavelength_m, extraordinary ? Polarization::extraordinary_at_cut : Polarization::ordinary);
      },
      py::arg("wavelength_m"), py::arg("extraordinary") = false,
      "Default crystal; the extraordinary index is taken at the cut angle.");
}
