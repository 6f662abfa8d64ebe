#include "twinbeam/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <set>

#include "twinbeam/errors.hpp"

namespace twinbeam {

namespace {

using nlohmann::json;

// Reads keys from one JSON object and rejects the ones nobody asked for.
class SectionReader {
 public:
  SectionReader(const json& root, std::string name) : name_(std::move(name)) {
    if (root.contains(name_)) {
      node_ = root.at(name_);
      if (!node_.is_object()) throw ConfigError("section '" + name_ + "' must be an object");
    } else {
      node_ = json::object();
    }
  }
  SectionReader(std::string name, json node) : node_(std::move(node)), name_(std::move(name)) {
    if (!node_.is_object()) throw ConfigError("'" + name_ + "' must be an object");
  }

  template <typename T>
  T get(const std::string& key, const T& fallback) {
    seen_.insert(key);
    if (!node_.contains(key) || node_.at(key).is_null()) return fallback;
    try {
      return node_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError(name_ + "." + key + " has the wrong type");
    }
  }

  template <typename T>
  std::optional<T> optional(const std::string& key) {
    seen_.insert(key);
    if (!node_.contains(key) || node_.at(key).is_null()) return std::nullopt;
    try {
      return node_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError(name_ + "." + key + " has the wrong type");
    }
  }

  bool has(const std::string& key) const { return node_.contains(key) && !node_.at(key).is_null(); }
  const json& raw(const std::string& key) {
    seen_.insert(key);
    return node_.at(key);
  }

  void finish() const {
    for (const auto& [key, value] : node_.items()) {
      if (!seen_.count(key)) throw ConfigError("unknown key " + name_ + "." + key);
    }
  }

 private:
  json node_;
  std::string name_;
  std::set<std::string> seen_;
};

SellmeierCoefficients sellmeier_from(json node, const std::string& name,
                                     const SellmeierCoefficients& fallback) {
  SectionReader r(name, std::move(node));
  SellmeierCoefficients s;
  s.a = r.get("a", fallback.a);
  s.b = r.get("b_um2", fallback.b);
  s.c = r.get("c_um2", fallback.c);
  s.d = r.get("d_per_um2", fallback.d);
  s.min_wavelength_m = r.get("min_wavelength_m", fallback.min_wavelength_m);
  s.max_wavelength_m = r.get("max_wavelength_m", fallback.max_wavelength_m);
  r.finish();
  return s;
}

json sellmeier_json(const SellmeierCoefficients& s) {
  return {{"a", s.a},
          {"b_um2", s.b},
          {"c_um2", s.c},
          {"d_per_um2", s.d},
          {"min_wavelength_m", s.min_wavelength_m},
          {"max_wavelength_m", s.max_wavelength_m}};
}

template <typename Fn>
void rethrow_as_config(const std::string& what, Fn&& fn) {
  try {
    fn();
  } catch (const ContractError& e) {
    throw ConfigError(what + ": " + e.what());
  }
}

}  // namespace

void ExperimentConfig::validate() const {
  rethrow_as_config("medium", [&] { medium.validate(); });
  rethrow_as_config("lattice", [&] { lattice.validate(); });
  rethrow_as_config("camera", [&] { camera.validate(); });
  if (pump.mean_powers_mw.empty()) throw ConfigError("pump.mean_powers_mw must not be empty");
  for (std::size_t k = 0; k < pump.mean_powers_mw.size(); ++k) {
    if (!(pump.mean_powers_mw[k] >= 0.0)) throw ConfigError("pump powers must be non-negative");
    if (k > 0 && !(pump.mean_powers_mw[k] > pump.mean_powers_mw[k - 1])) {
      throw ConfigError("pump.mean_powers_mw must be strictly increasing");
    }
  }
  if (!(pump.waist_m > 0.0)) throw ConfigError("pump.waist_m must be positive");
  if (!(pump.duration_s > 0.0)) throw ConfigError("pump.duration_s must be positive");
  if (!(pump.rep_rate_hz > 0.0)) throw ConfigError("pump.rep_rate_hz must be positive");
  if (!(run.dz_m > 0.0)) throw ConfigError("run.dz_m must be positive");
  const double ratio = medium.length_m / run.dz_m;
  if (std::abs(ratio - std::round(ratio)) > 1e-9 * ratio || std::round(ratio) < 4.0) {
    throw ConfigError("medium.length_m / run.dz_m must be an integer >= 4");
  }
  if (run.realizations < 1) throw ConfigError("run.realizations must be >= 1");
  if (!(analysis.losses > 0.0 && analysis.losses <= 1.0)) {
    throw ConfigError("analysis.losses must lie in (0, 1]");
  }
  if (!(analysis.target_peak_mean_dn > 0.0)) {
    throw ConfigError("analysis.target_peak_mean_dn must be positive");
  }
}

ExperimentConfig config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("configuration must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    static const std::set<std::string> known{"medium", "lattice", "pump", "run",
                                             "camera", "analysis", "output_dir"};
    if (!known.count(key)) throw ConfigError("unknown section " + key);
  }
  ExperimentConfig c;

  SectionReader m(j, "medium");
  c.medium.length_m = m.get("length_m", c.medium.length_m);
  c.medium.cut_angle_rad = m.get("cut_angle_rad", c.medium.cut_angle_rad);
  c.medium.deff_m_per_v = m.get("deff_m_per_v", c.medium.deff_m_per_v);
  c.medium.pump_center_wavelength_m = m.get("pump_center_wavelength_m", c.medium.pump_center_wavelength_m);
  c.medium.signal_center_wavelength_m =
      m.get("signal_center_wavelength_m", c.medium.signal_center_wavelength_m);
  c.medium.walkoff_angle_rad = m.optional<double>("walkoff_angle_rad");
  c.medium.collinear_mismatch_per_m = m.optional<double>("collinear_mismatch_rad_per_m");
  if (m.has("sellmeier_o")) c.medium.sellmeier_o = sellmeier_from(m.raw("sellmeier_o"), "medium.sellmeier_o", c.medium.sellmeier_o);
  if (m.has("sellmeier_e")) c.medium.sellmeier_e = sellmeier_from(m.raw("sellmeier_e"), "medium.sellmeier_e", c.medium.sellmeier_e);
  m.finish();

  SectionReader l(j, "lattice");
  c.lattice.nx = l.get("nx", c.lattice.nx);
  c.lattice.ny = l.get("ny", c.lattice.ny);
  c.lattice.nt = l.get("nt", c.lattice.nt);
  c.lattice.dx = l.get("dx_m", c.lattice.dx);
  c.lattice.dy = l.get("dy_m", c.lattice.dy);
  c.lattice.dt = l.get("dt_s", c.lattice.dt);
  l.finish();

  SectionReader p(j, "pump");
  c.pump.waist_m = p.get("waist_m", c.pump.waist_m);
  c.pump.duration_s = p.get("duration_s", c.pump.duration_s);
  c.pump.chirp_per_s2 = p.get("chirp_per_s2", c.pump.chirp_per_s2);
  c.pump.mean_powers_mw = p.get("mean_powers_mw", c.pump.mean_powers_mw);
  c.pump.rep_rate_hz = p.get("rep_rate_hz", c.pump.rep_rate_hz);
  p.finish();

  SectionReader r(j, "run");
  c.run.dz_m = r.get("dz_m", c.run.dz_m);
  c.run.realizations = r.get("realizations", c.run.realizations);
  c.run.seed = r.get("seed", c.run.seed);
  c.run.dark_frames = r.get("dark_frames", c.run.dark_frames);
  r.finish();

  if (j.contains("camera")) {
    SectionReader cam(j, "camera");
    for (const auto& key : {"pixels_spectral", "pixels_angular", "lambda_min_m", "lambda_max_m",
                            "theta_min_rad", "theta_max_rad", "quantum_efficiency",
                            "electrons_per_dn", "dark_mean_dn", "dark_sigma_dn",
                            "em_excess_noise", "bit_depth", "optical_transmission"}) {
      cam.get<json>(key, {});
    }
    cam.finish();
    try {
      c.camera = camera_from_json(j.at("camera"));
    } catch (const nlohmann::json::exception&) {
      throw ConfigError("camera section has a value of the wrong type");
    }
  }

  SectionReader a(j, "analysis");
  auto& an = c.analysis;
  an.seed_offset_spectral_px = a.get("seed_offset_spectral_px", an.seed_offset_spectral_px);
  an.seed_offset_angular_px = a.get("seed_offset_angular_px", an.seed_offset_angular_px);
  an.seed_set_radius_px = a.get("seed_set_radius_px", an.seed_set_radius_px);
  an.arm_margin_px = a.get("arm_margin_px", an.arm_margin_px);
  an.auto_search_radius_px = a.get("auto_search_radius_px", an.auto_search_radius_px);
  an.cross_search_radius_px = a.get("cross_search_radius_px", an.cross_search_radius_px);
  an.section_half_width_px = a.get("section_half_width_px", an.section_half_width_px);
  an.fwhm_baseline = a.get("fwhm_baseline", an.fwhm_baseline);
  const auto axis = a.get<std::string>("width_axis", "spectral");
  if (axis == "spectral") {
    an.width_axis = WidthAxis::spectral;
  } else if (axis == "angular") {
    an.width_axis = WidthAxis::angular;
  } else {
    throw ConfigError("analysis.width_axis must be 'spectral' or 'angular'");
  }
  an.fit_cut_mw = a.optional<double>("fit_cut_mw");
  an.losses = a.get("losses", an.losses);
  an.auto_attenuation = a.get("auto_attenuation", an.auto_attenuation);
  an.target_peak_mean_dn = a.get("target_peak_mean_dn", an.target_peak_mean_dn);
  a.finish();

  if (j.contains("output_dir")) {
    if (!j.at("output_dir").is_string()) throw ConfigError("output_dir must be a string");
    c.output_dir = j.at("output_dir").get<std::string>();
  }
  c.validate();
  return c;
}

nlohmann::json to_json(const ExperimentConfig& c) {
  json medium{{"length_m", c.medium.length_m},
              {"cut_angle_rad", c.medium.cut_angle_rad},
              {"deff_m_per_v", c.medium.deff_m_per_v},
              {"pump_center_wavelength_m", c.medium.pump_center_wavelength_m},
              {"signal_center_wavelength_m", c.medium.signal_center_wavelength_m},
              {"sellmeier_o", sellmeier_json(c.medium.sellmeier_o)},
              {"sellmeier_e", sellmeier_json(c.medium.sellmeier_e)}};
  medium["walkoff_angle_rad"] =
      c.medium.walkoff_angle_rad ? json(*c.medium.walkoff_angle_rad) : json(nullptr);
  medium["collinear_mismatch_rad_per_m"] =
      c.medium.collinear_mismatch_per_m ? json(*c.medium.collinear_mismatch_per_m) : json(nullptr);
  const auto& an = c.analysis;
  json analysis{{"seed_offset_spectral_px", an.seed_offset_spectral_px},
                {"seed_offset_angular_px", an.seed_offset_angular_px},
                {"seed_set_radius_px", an.seed_set_radius_px},
                {"arm_margin_px", an.arm_margin_px},
                {"auto_search_radius_px", an.auto_search_radius_px},
                {"cross_search_radius_px", an.cross_search_radius_px},
                {"section_half_width_px", an.section_half_width_px},
                {"fwhm_baseline", an.fwhm_baseline},
                {"width_axis", an.width_axis == WidthAxis::spectral ? "spectral" : "angular"},
                {"fit_cut_mw", an.fit_cut_mw ? json(*an.fit_cut_mw) : json(nullptr)},
                {"losses", an.losses},
                {"auto_attenuation", an.auto_attenuation},
                {"target_peak_mean_dn", an.target_peak_mean_dn}};
  return {{"medium", medium},
          {"lattice",
           {{"nx", c.lattice.nx},
            {"ny", c.lattice.ny},
            {"nt", c.lattice.nt},
            {"dx_m", c.lattice.dx},
            {"dy_m", c.lattice.dy},
            {"dt_s", c.lattice.dt}}},
          {"pump",
           {{"waist_m", c.pump.waist_m},
            {"duration_s", c.pump.duration_s},
            {"chirp_per_s2", c.pump.chirp_per_s2},
            {"mean_powers_mw", c.pump.mean_powers_mw},
            {"rep_rate_hz", c.pump.rep_rate_hz}}},
          {"run",
           {{"dz_m", c.run.dz_m},
            {"realizations", c.run.realizations},
            {"seed", c.run.seed},
            {"dark_frames", c.run.dark_frames}}},
          {"camera", to_json(c.camera)},
          {"analysis", analysis},
          {"output_dir", c.output_dir}};
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

std::string config_hash(const ExperimentConfig& config) {
  auto j = to_json(config);
  j.erase("output_dir");  // where results go does not change them
  const std::string text = j.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

double gaussian_shape_factor() { return std::sqrt(std::numbers::pi / (4.0 * std::log(2.0))); }

double peak_power_w(const PumpSection& pump, double mean_power_mw) {
  return mean_power_mw * 1e-3 / (pump.rep_rate_hz * pump.duration_s * gaussian_shape_factor());
}

}  // namespace twinbeam
