#include "twinbeam/sweep.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <sstream>

#include "twinbeam/errors.hpp"
#include "twinbeam/fitting.hpp"

namespace twinbeam {

namespace {

using nlohmann::json;

json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double num_from(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return kNaN;
  return j.at(key).get<double>();
}

json stats_json(const SeedStats& s) {
  return {{"mean", num(s.mean)}, {"sigma", num(s.sigma)}, {"count", s.count}};
}

SeedStats stats_from(const json& j) {
  SeedStats s;
  s.mean = num_from(j, "mean");
  s.sigma = num_from(j, "sigma");
  s.count = j.value("count", std::size_t{0});
  return s;
}

json g2_json(const G2Estimate& g) {
  return {{"g2_raw", num(g.g2_raw)}, {"g2_corrected", num(g.g2_corrected)}, {"mean_dn", num(g.mean_dn)}};
}

G2Estimate g2_from(const json& j) {
  return {num_from(j, "g2_raw"), num_from(j, "g2_corrected"), num_from(j, "mean_dn")};
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    json j;
    in >> j;
    return j;
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what(), 0);
  }
}

double k_from_g2(double g2) { return (std::isfinite(g2) && g2 > 1.0) ? mode_count(g2) : kNaN; }

}  // namespace

SeedStats seed_stats(const std::vector<double>& values) {
  SeedStats s;
  std::vector<double> ok;
  for (double v : values) {
    if (std::isfinite(v)) ok.push_back(v);
  }
  s.count = ok.size();
  if (ok.empty()) return s;
  s.mean = std::accumulate(ok.begin(), ok.end(), 0.0) / static_cast<double>(ok.size());
  if (ok.size() > 1) {
    double v = 0.0;
    for (double x : ok) v += (x - s.mean) * (x - s.mean);
    s.sigma = std::sqrt(v / static_cast<double>(ok.size() - 1));
  } else {
    s.sigma = 0.0;
  }
  return s;
}

json to_json(const AnalysisFragment& f) {
  return {{"frames", f.frames},
          {"pixel_lambda_m", f.pixel_lambda_m},
          {"pixel_theta_rad", f.pixel_theta_rad},
          {"auto_spectral_px", stats_json(f.auto_spectral_px)},
          {"auto_angular_px", stats_json(f.auto_angular_px)},
          {"cross_spectral_px", stats_json(f.cross_spectral_px)},
          {"cross_angular_px", stats_json(f.cross_angular_px)},
          {"auto_peak_signal", stats_json(f.auto_peak_signal)},
          {"cross_peak_signal", stats_json(f.cross_peak_signal)},
          {"auto_peak_idler", stats_json(f.auto_peak_idler)},
          {"cross_peak_idler", stats_json(f.cross_peak_idler)},
          {"cross_offset_px", num(f.cross_offset_px)},
          {"g2_signal", g2_json(f.g2_signal)},
          {"g2_idler", g2_json(f.g2_idler)},
          {"k_signal", num(f.k_signal)},
          {"k_idler", num(f.k_idler)},
          {"k", num(f.k)},
          {"photons_detected", num(f.photons_detected)},
          {"photons_sem", num(f.photons_sem)},
          {"gamma_floor", num(f.gamma_floor)},
          {"dark_mean_dn", f.dark_mean_dn},
          {"dark_sigma_dn", f.dark_sigma_dn},
          {"warnings", f.warnings}};
}

AnalysisFragment fragment_from_json(const json& j) {
  AnalysisFragment f;
  f.frames = j.value("frames", std::size_t{0});
  f.pixel_lambda_m = num_from(j, "pixel_lambda_m");
  f.pixel_theta_rad = num_from(j, "pixel_theta_rad");
  f.auto_spectral_px = stats_from(j.at("auto_spectral_px"));
  f.auto_angular_px = stats_from(j.at("auto_angular_px"));
  f.cross_spectral_px = stats_from(j.at("cross_spectral_px"));
  f.cross_angular_px = stats_from(j.at("cross_angular_px"));
  f.auto_peak_signal = stats_from(j.at("auto_peak_signal"));
  f.cross_peak_signal = stats_from(j.at("cross_peak_signal"));
  f.auto_peak_idler = stats_from(j.at("auto_peak_idler"));
  f.cross_peak_idler = stats_from(j.at("cross_peak_idler"));
  f.cross_offset_px = num_from(j, "cross_offset_px");
  f.g2_signal = g2_from(j.at("g2_signal"));
  f.g2_idler = g2_from(j.at("g2_idler"));
  f.k_signal = num_from(j, "k_signal");
  f.k_idler = num_from(j, "k_idler");
  f.k = num_from(j, "k");
  f.photons_detected = num_from(j, "photons_detected");
  f.photons_sem = num_from(j, "photons_sem");
  f.gamma_floor = num_from(j, "gamma_floor");
  f.dark_mean_dn = num_from(j, "dark_mean_dn");
  f.dark_sigma_dn = num_from(j, "dark_sigma_dn");
  f.warnings = j.value("warnings", std::vector<std::string>{});
  return f;
}

AnalysisFragment analyze_stack(const FrameStack& stack, const DarkLevel& dark,
                               const AnalysisSection& an, CorrelationMap* primary_map) {
  if (stack.frames.size() < 2) throw ContractError("analysis needs at least two frames");
  AnalysisFragment out;
  out.frames = stack.frames.size();
  out.pixel_lambda_m = stack.camera.pixel_lambda();
  out.pixel_theta_rad = stack.camera.pixel_theta();
  out.dark_mean_dn = dark.mean_dn;
  out.dark_sigma_dn = dark.sigma_dn;

  const RealFrames frames = dark_subtract(stack, dark.mean_dn);
  const DetectorNoise noise = DetectorNoise::from_camera(stack.camera, dark.sigma_dn);
  GammaOptions go;
  go.auto_search_radius = an.auto_search_radius_px;
  go.cross_search_radius = an.cross_search_radius_px;
  go.section_half_width = an.section_half_width_px;
  go.pixel_lambda = out.pixel_lambda_m;
  go.pixel_theta = out.pixel_theta_rad;
  go.noise = noise;

  const Pixel c = stack.center;
  const auto off_i = static_cast<std::ptrdiff_t>(an.seed_offset_spectral_px);
  const auto off_j = static_cast<std::ptrdiff_t>(an.seed_offset_angular_px);
  const auto r = static_cast<std::ptrdiff_t>(an.seed_set_radius_px);
  std::vector<double> as, aa, cs, ca, offsets;
  for (Arm arm : {Arm::signal, Arm::idler}) {
    const std::ptrdiff_t sign = arm == Arm::signal ? -1 : 1;
    const std::ptrdiff_t bi = static_cast<std::ptrdiff_t>(c.i) + sign * off_i;
    const std::ptrdiff_t bj = static_cast<std::ptrdiff_t>(c.j) - sign * off_j;
    std::vector<double> auto_peaks, cross_peaks;
    for (std::ptrdiff_t dj = -r; dj <= r; ++dj) {
      for (std::ptrdiff_t di = -r; di <= r; ++di) {
        const std::ptrdiff_t si = bi + di, sj = bj + dj;
        std::ostringstream where;
        where << "seed (" << si << ", " << sj << ")";
        if (si < 0 || sj < 0 || si >= static_cast<std::ptrdiff_t>(stack.width) ||
            sj >= static_cast<std::ptrdiff_t>(stack.height)) {
          out.warnings.push_back(where.str() + " outside image");
          continue;
        }
        CorrelationMap map;
        try {
          map = gamma_map(frames, {static_cast<std::size_t>(si), static_cast<std::size_t>(sj)}, c, go);
        } catch (const ContractError& e) {
          out.warnings.push_back(where.str() + ": " + e.what());
          continue;
        }
        auto width = [&](const Section& s, std::vector<double>& into, const char* what) {
          try {
            into.push_back(fwhm_of_section(s, an.fwhm_baseline).pixels);
          } catch (const AnalysisError& e) {
            out.warnings.push_back(where.str() + " " + what + ": " + e.what());
          }
        };
        width(map.auto_spectral, as, "auto spectral");
        width(map.auto_angular, aa, "auto angular");
        width(map.cross_spectral, cs, "cross spectral");
        width(map.cross_angular, ca, "cross angular");
        auto_peaks.push_back(map.auto_peak.value);
        cross_peaks.push_back(map.cross_peak.value);
        const double di2 = static_cast<double>(map.cross_peak.pixel.i) - static_cast<double>(map.symmetric.i);
        const double dj2 = static_cast<double>(map.cross_peak.pixel.j) - static_cast<double>(map.symmetric.j);
        offsets.push_back(std::sqrt(di2 * di2 + dj2 * dj2));

        if (primary_map && arm == Arm::signal && di == 0 && dj == 0) *primary_map = map;
        if (arm == Arm::signal && di == 0 && dj == 0) {
          // Off-lobe mean of Gamma as a baseline quality number.
          const auto hw = static_cast<std::ptrdiff_t>(2 * an.section_half_width_px);
          double sum = 0.0;
          std::size_t n = 0;
          for (std::size_t j = 0; j < map.height; ++j) {
            for (std::size_t i = 0; i < map.width; ++i) {
              auto far = [&](Pixel p) {
                return std::max(std::abs(static_cast<std::ptrdiff_t>(i) - static_cast<std::ptrdiff_t>(p.i)),
                                std::abs(static_cast<std::ptrdiff_t>(j) - static_cast<std::ptrdiff_t>(p.j))) > hw;
              };
              if (map.flagged[j * map.width + i] || !far(map.auto_peak.pixel) || !far(map.cross_peak.pixel)) continue;
              sum += map.at(i, j);
              ++n;
            }
          }
          if (n > 0) out.gamma_floor = sum / static_cast<double>(n);
        }
      }
    }
    if (arm == Arm::signal) {
      out.auto_peak_signal = seed_stats(auto_peaks);
      out.cross_peak_signal = seed_stats(cross_peaks);
    } else {
      out.auto_peak_idler = seed_stats(auto_peaks);
      out.cross_peak_idler = seed_stats(cross_peaks);
    }
  }
  out.auto_spectral_px = seed_stats(as);
  out.auto_angular_px = seed_stats(aa);
  out.cross_spectral_px = seed_stats(cs);
  out.cross_angular_px = seed_stats(ca);
  out.cross_offset_px = seed_stats(offsets).mean;

  auto arm_g2 = [&](Arm arm, G2Estimate& into) {
    const Region region = arm_region(c, stack.width, stack.height, arm, an.arm_margin_px);
    try {
      into = g2_estimate(frames, region, noise);
    } catch (const std::exception& e) {
      into = {kNaN, kNaN, kNaN};
      out.warnings.push_back(std::string(arm == Arm::signal ? "signal" : "idler") + " g2: " + e.what());
    }
  };
  arm_g2(Arm::signal, out.g2_signal);
  arm_g2(Arm::idler, out.g2_idler);
  out.k_signal = k_from_g2(out.g2_signal.g2_corrected);
  out.k_idler = k_from_g2(out.g2_idler.g2_corrected);
  out.k = k_from_g2(0.5 * (out.g2_signal.g2_corrected + out.g2_idler.g2_corrected));

  // Calibrated photons in the whole frame, with the per-frame spread.
  const Region all{0, stack.width, 0, stack.height};
  std::vector<double> per_frame;
  per_frame.reserve(frames.frames.size());
  for (const auto& f : frames.frames) {
    per_frame.push_back(photons_from_dn(std::accumulate(f.begin(), f.end(), 0.0), stack.camera, an.losses));
  }
  const auto ps = seed_stats(per_frame);
  out.photons_detected = photons_from_dn(frames, stack.camera, an.losses, all);
  out.photons_sem = ps.sigma / std::sqrt(static_cast<double>(per_frame.size()));
  return out;
}

PowerRun simulate_power(const ExperimentConfig& config, double mean_power_mw, std::size_t workers) {
  config.validate();
  const auto& lat = config.lattice;
  const auto& medium = config.medium;
  const DispersionTable table = build_dispersion(medium, lat);

  PowerRun run;
  run.mean_power_mw = mean_power_mw;
  run.peak_power_w = peak_power_w(config.pump, mean_power_mw);
  RunConfig rc;
  rc.dz_m = config.run.dz_m;
  rc.pump = {pump_peak_amplitude(run.peak_power_w, config.pump.waist_m, lat, medium),
             config.pump.waist_m, config.pump.duration_s, config.pump.chirp_per_s2};
  rc.noise_seed = config.run.seed;
  rc.realizations = config.run.realizations;
  PropagationOptions options;
  options.workers = std::max<std::size_t>(1, workers);
  run.gain = nonlinear_coupling(medium, table) * rc.pump.peak_amplitude * medium.length_m;

  const double pump_in = photon_number(make_pump(lat, medium, rc.pump));
  const std::size_t n = rc.realizations;
  std::vector<Image> images(n);
  std::vector<double> photons(n), pump_out(n);
  std::vector<std::size_t> clipped(n);
  std::vector<PumpDistributions> dists(n);
  for_each_realization(
      medium, table, rc, options,
      [&](std::size_t i, PdcState&& s) {
        auto ff = far_field_map(s.a, medium, config.camera, {.vacuum_offset = 0.5});
        images[i] = std::move(ff.image);
        clipped[i] = ff.clipped_cells;
        photons[i] = photon_number(s.a, true);
        pump_out[i] = photon_number(s.b);
        dists[i] = pump_distributions(s.b);
        if (i == 0) run.first = std::move(s);
      },
      &run.monitors);

  // Ordered reductions keep results independent of the worker count.
  for (std::size_t i = 0; i < n; ++i) {
    if (i == 0) {
      run.pump_exit = dists[0];
    } else {
      for (std::size_t k = 0; k < dists[i].spectral_map.size(); ++k) {
        run.pump_exit.spectral_map[k] += dists[i].spectral_map[k];
      }
      for (std::size_t k = 0; k < dists[i].fluence.size(); ++k) run.pump_exit.fluence[k] += dists[i].fluence[k];
      run.pump_exit.samples += 1;
    }
    run.clipped_cells += clipped[i];
  }
  const auto ph = seed_stats(photons);
  run.lattice_photons = ph.mean;
  run.lattice_photons_sem = n > 1 ? ph.sigma / std::sqrt(static_cast<double>(n)) : 0.0;
  if (pump_in > 0.0) {
    double out_sum = 0.0;
    for (double v : pump_out) out_sum += v;
    run.conversion = 1.0 - out_sum / (static_cast<double>(n) * pump_in);
  }

  CameraSpec camera = config.camera;
  if (config.analysis.auto_attenuation) {
    Image mean(camera.pixels_spectral, camera.pixels_angular);
    for (const auto& img : images) {
      for (std::size_t k = 0; k < img.data.size(); ++k) mean.data[k] += img.data[k];
    }
    const double peak = *std::max_element(mean.data.begin(), mean.data.end()) / static_cast<double>(n);
    const double wanted = config.analysis.target_peak_mean_dn * camera.electrons_per_dn /
                          (camera.quantum_efficiency * peak);
    if (peak > 0.0) camera.optical_transmission = std::min(camera.optical_transmission, wanted);
  }
  run.transmission = camera.optical_transmission;

  const std::uint64_t det_base = config.run.seed + kDetectionSeedOffset;
  const std::uint64_t dark_base = config.run.seed + kDarkSeedOffset;
  const Pixel center = degenerate_pixel(medium, camera);
  run.stack.width = run.dark.width = camera.pixels_spectral;
  run.stack.height = run.dark.height = camera.pixels_angular;
  run.stack.camera = run.dark.camera = camera;
  run.stack.center = run.dark.center = center;
  run.stack.frames.resize(n);
  std::vector<std::size_t> saturated(n);
  parallel_for(n, options.workers, [&](std::size_t i) {
    auto d = detect(images[i], camera, det_base + i);
    saturated[i] = d.saturated_pixels;
    run.stack.frames[i] = std::move(d.frame);
  });
  for (auto s : saturated) run.saturated_pixels += s;
  const Image dark_light(camera.pixels_spectral, camera.pixels_angular);
  for (std::size_t k = 0; k < config.run.dark_frames; ++k) {
    run.dark.frames.push_back(detect(dark_light, camera, dark_base + k).frame);
  }

  const std::string hash = config_hash(config);
  run.stack.provenance = {{"config_hash", hash},
                          {"mean_power_mw", mean_power_mw},
                          {"vacuum_seed_first", config.run.seed},
                          {"realizations", n},
                          {"detection_seed_first", det_base},
                          {"optical_transmission", run.transmission},
                          {"clipped_cells", run.clipped_cells},
                          {"saturated_pixels", run.saturated_pixels}};
  run.dark.provenance = {{"config_hash", hash},
                         {"dark_seed_first", dark_base},
                         {"frames", config.run.dark_frames}};
  return run;
}

json to_json(const PowerRecord& r) {
  json j{{"mean_power_mw", r.mean_power_mw},
         {"peak_power_w", r.peak_power_w},
         {"gain", num(r.gain)},
         {"ok", r.ok},
         {"error", r.error},
         {"transmission", num(r.transmission)},
         {"lattice_photons", num(r.lattice_photons)},
         {"lattice_photons_sem", num(r.lattice_photons_sem)},
         {"conversion", num(r.conversion)},
         {"clipped_cells", r.clipped_cells},
         {"saturated_pixels", r.saturated_pixels}};
  if (r.ok) j["analysis"] = to_json(r.analysis);
  if (r.dip) {
    j["dip"] = {{"central_depth", num(r.dip->central_depth)},
                {"fwhm_m", r.dip->fwhm_m ? num(*r.dip->fwhm_m) : json(nullptr)},
                {"lateral_offset_m", num(r.dip->lateral_offset_m)}};
  }
  return j;
}

PowerRecord record_from_json(const json& j) {
  try {
    PowerRecord r;
    r.mean_power_mw = j.at("mean_power_mw").get<double>();
    r.peak_power_w = j.at("peak_power_w").get<double>();
    r.gain = num_from(j, "gain");
    r.ok = j.at("ok").get<bool>();
    r.error = j.value("error", std::string{});
    r.transmission = num_from(j, "transmission");
    r.lattice_photons = num_from(j, "lattice_photons");
    r.lattice_photons_sem = num_from(j, "lattice_photons_sem");
    r.conversion = num_from(j, "conversion");
    r.clipped_cells = j.value("clipped_cells", std::size_t{0});
    r.saturated_pixels = j.value("saturated_pixels", std::size_t{0});
    if (r.ok) r.analysis = fragment_from_json(j.at("analysis"));
    if (j.contains("dip")) {
      DipMetrics d;
      const auto& dj = j.at("dip");
      d.central_depth = num_from(dj, "central_depth");
      const double w = num_from(dj, "fwhm_m");
      if (std::isfinite(w)) d.fwhm_m = w;
      d.lateral_offset_m = num_from(dj, "lateral_offset_m");
      r.dip = d;
    }
    return r;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed report fragment: ") + e.what(), 0);
  }
}

namespace {

double width_of(const PowerRecord& r, WidthAxis axis) {
  if (!r.ok) return kNaN;
  return axis == WidthAxis::spectral ? r.analysis.auto_spectral_px.mean : r.analysis.auto_angular_px.mean;
}

json fit_json(const FitResult& f) {
  json params = json::object();
  for (std::size_t k = 0; k < f.names.size(); ++k) {
    params[f.names[k]] = {{"value", num(f.values[k])}, {"sigma", num(f.sigmas[k])}};
  }
  return {{"parameters", params}, {"rss", num(f.rss)}, {"r2", num(f.r2)},
          {"converged", f.converged}, {"iterations", f.iterations}};
}

}  // namespace

namespace {

json physics_config(const ExperimentConfig& config) {
  auto j = to_json(config);
  j.erase("output_dir");
  return j;
}

}  // namespace

SweepReport assemble_report(const ExperimentConfig& config, std::vector<PowerRecord> records) {
  SweepReport rep;
  rep.records = std::move(records);
  const auto axis = config.analysis.width_axis;
  rep.metadata = {{"config_hash", config_hash(config)},
                  {"config", physics_config(config)},
                  {"vacuum_seed_first", config.run.seed},
                  {"detection_seed_first", config.run.seed + kDetectionSeedOffset},
                  {"dark_seed_first", config.run.seed + kDarkSeedOffset},
                  {"peak_power_conversion",
                   {{"formula", "P_peak = P_mean / (rep_rate * duration * shape_factor)"},
                    {"pulse_shape", "gaussian"},
                    {"shape_factor", gaussian_shape_factor()},
                    {"rep_rate_hz", config.pump.rep_rate_hz},
                    {"duration_s", config.pump.duration_s}}},
                  {"em_excess_noise", config.camera.em_excess_noise},
                  {"width_axis", axis == WidthAxis::spectral ? "spectral" : "angular"}};

  // "First part" of the width curve: up to the maximum unless a cut is configured.
  std::vector<double> p, w;
  for (const auto& r : rep.records) {
    const double v = width_of(r, axis);
    if (std::isfinite(v) && r.mean_power_mw > 0.0) {
      p.push_back(r.mean_power_mw);
      w.push_back(v);
    }
  }
  double cut = kNaN;
  std::string cut_source;
  if (config.analysis.fit_cut_mw) {
    cut = *config.analysis.fit_cut_mw;
    cut_source = "configured";
  } else if (!w.empty()) {
    cut = p[static_cast<std::size_t>(std::max_element(w.begin(), w.end()) - w.begin())];
    cut_source = "width maximum";
  }
  rep.fits["fit_cut_mw"] = num(cut);
  rep.fits["fit_cut_source"] = cut_source;

  std::vector<double> fp, fw;
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (p[k] <= cut) {
      fp.push_back(p[k]);
      fw.push_back(w[k]);
    }
  }
  try {
    rep.fits["width_power_law"] = fit_json(fit_power_law(fp, fw));
  } catch (const std::exception& e) {
    rep.fits["width_power_law"] = {{"error", e.what()}};
  }
  try {
    rep.fits["width_fourth_root"] = fit_json(fit_power_law(fp, fw, 0.25));
  } catch (const std::exception& e) {
    rep.fits["width_fourth_root"] = {{"error", e.what()}};
  }
  // Interior maximum of the width curve.
  if (w.size() >= 3) {
    const auto top = static_cast<std::size_t>(std::max_element(w.begin(), w.end()) - w.begin());
    rep.fits["width_max_mw"] = p[top];
    rep.fits["width_interior_maximum"] = top > 0 && top + 1 < w.size();
  }

  // Photon growth against sqrt(P_peak), fitted on the same first part.
  std::vector<double> x, y, xa, ya;
  for (const auto& r : rep.records) {
    if (!r.ok || !std::isfinite(r.analysis.photons_detected)) continue;
    const double xv = std::sqrt(r.peak_power_w);
    xa.push_back(xv);
    ya.push_back(r.analysis.photons_detected);
    if (!(r.mean_power_mw > cut)) {
      x.push_back(xv);
      y.push_back(std::max(0.0, r.analysis.photons_detected));
    }
  }
  try {
    const auto f = fit_sinh2(x, y);
    auto fj = fit_json(f);
    json ratio = json::array();
    for (std::size_t k = 0; k < xa.size(); ++k) {
      ratio.push_back({{"sqrt_peak_power", xa[k]},
                       {"photons", ya[k]},
                       {"curve", sinh2_curve(f, xa[k])},
                       {"ratio", ya[k] / sinh2_curve(f, xa[k])}});
    }
    fj["data_over_curve"] = ratio;
    rep.fits["photons_sinh2"] = fj;
  } catch (const std::exception& e) {
    rep.fits["photons_sinh2"] = {{"error", e.what()}};
  }

  // Mode number against width.
  std::vector<double> kv, wv;
  for (const auto& r : rep.records) {
    const double wd = width_of(r, axis);
    if (r.ok && std::isfinite(r.analysis.k) && std::isfinite(wd)) {
      kv.push_back(r.analysis.k);
      wv.push_back(wd);
    }
  }
  rep.fits["k_width_spearman"] = kv.size() >= 3 ? num(spearman(kv, wv)) : json(nullptr);
  rep.fits["k_width_points"] = kv.size();
  return rep;
}

std::filesystem::path power_dir(const std::filesystem::path& out, double mean_power_mw) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "power_%08.3fmW", mean_power_mw);
  return out / buf;
}

namespace {

std::string fmt(double v) {
  if (!std::isfinite(v)) return "nan";
  std::ostringstream s;
  s << std::setprecision(12) << v;
  return s.str();
}

}  // namespace

void write_report(const SweepReport& rep, const std::filesystem::path& out) {
  std::filesystem::create_directories(out);
  json j{{"metadata", rep.metadata}, {"fits", rep.fits}, {"records", json::array()}};
  for (const auto& r : rep.records) j["records"].push_back(to_json(r));
  write_text(out / "report.json", j.dump(2) + "\n");

  std::ostringstream csv;
  csv << "mean_power_mw,peak_power_w,gain,ok,transmission,lattice_photons,photons_detected,"
         "photons_sem,conversion,auto_spectral_px,auto_angular_px,cross_spectral_px,"
         "cross_angular_px,auto_spectral_m,auto_angular_rad,auto_peak_signal,cross_peak_signal,"
         "auto_peak_idler,cross_peak_idler,g2_raw_signal,g2_corrected_signal,g2_raw_idler,"
         "g2_corrected_idler,k_signal,k_idler,k,gamma_floor,dip_depth,dip_fwhm_m,dip_offset_m,error\n";
  for (const auto& r : rep.records) {
    const auto& a = r.analysis;
    const bool ok = r.ok;
    auto v = [&](double x) { return ok ? fmt(x) : std::string("nan"); };
    csv << fmt(r.mean_power_mw) << ',' << fmt(r.peak_power_w) << ',' << fmt(r.gain) << ','
        << (ok ? 1 : 0) << ',' << fmt(r.transmission) << ',' << fmt(r.lattice_photons) << ','
        << v(a.photons_detected) << ',' << v(a.photons_sem) << ',' << fmt(r.conversion) << ','
        << v(a.auto_spectral_px.mean) << ',' << v(a.auto_angular_px.mean) << ','
        << v(a.cross_spectral_px.mean) << ',' << v(a.cross_angular_px.mean) << ','
        << v(a.auto_spectral_px.mean * a.pixel_lambda_m) << ','
        << v(a.auto_angular_px.mean * a.pixel_theta_rad) << ',' << v(a.auto_peak_signal.mean) << ','
        << v(a.cross_peak_signal.mean) << ',' << v(a.auto_peak_idler.mean) << ','
        << v(a.cross_peak_idler.mean) << ',' << v(a.g2_signal.g2_raw) << ','
        << v(a.g2_signal.g2_corrected) << ',' << v(a.g2_idler.g2_raw) << ','
        << v(a.g2_idler.g2_corrected) << ',' << v(a.k_signal) << ',' << v(a.k_idler) << ','
        << v(a.k) << ',' << v(a.gamma_floor) << ','
        << (r.dip ? fmt(r.dip->central_depth) : "nan") << ','
        << (r.dip && r.dip->fwhm_m ? fmt(*r.dip->fwhm_m) : "nan") << ','
        << (r.dip ? fmt(r.dip->lateral_offset_m) : "nan") << ",\"" << r.error << "\"\n";
  }
  write_text(out / "report.csv", csv.str());

  // Plot data: x,y,sigma columns.
  auto plot = [&](const std::string& name, auto&& row) {
    std::ostringstream s;
    s << "x,y,sigma\n";
    for (const auto& r : rep.records) {
      if (!r.ok) continue;
      const auto [x, y, e] = row(r);
      if (std::isfinite(y)) s << fmt(x) << ',' << fmt(y) << ',' << fmt(e) << '\n';
    }
    write_text(out / ("plot_" + name + ".csv"), s.str());
  };
  using T3 = std::tuple<double, double, double>;
  plot("fwhm_auto_spectral", [](const PowerRecord& r) {
    return T3{r.mean_power_mw, r.analysis.auto_spectral_px.mean * r.analysis.pixel_lambda_m,
              r.analysis.auto_spectral_px.sigma * r.analysis.pixel_lambda_m};
  });
  plot("fwhm_auto_angular", [](const PowerRecord& r) {
    return T3{r.mean_power_mw, r.analysis.auto_angular_px.mean * r.analysis.pixel_theta_rad,
              r.analysis.auto_angular_px.sigma * r.analysis.pixel_theta_rad};
  });
  plot("fwhm_cross_spectral", [](const PowerRecord& r) {
    return T3{r.mean_power_mw, r.analysis.cross_spectral_px.mean * r.analysis.pixel_lambda_m,
              r.analysis.cross_spectral_px.sigma * r.analysis.pixel_lambda_m};
  });
  plot("fwhm_cross_angular", [](const PowerRecord& r) {
    return T3{r.mean_power_mw, r.analysis.cross_angular_px.mean * r.analysis.pixel_theta_rad,
              r.analysis.cross_angular_px.sigma * r.analysis.pixel_theta_rad};
  });
  plot("photons", [](const PowerRecord& r) {
    return T3{std::sqrt(r.peak_power_w), r.analysis.photons_detected, r.analysis.photons_sem};
  });
  plot("peak_auto_signal", [](const PowerRecord& r) {
    return T3{r.mean_power_mw, r.analysis.auto_peak_signal.mean, r.analysis.auto_peak_signal.sigma};
  });
  plot("peak_cross_signal", [](const PowerRecord& r) {
    return T3{r.mean_power_mw, r.analysis.cross_peak_signal.mean, r.analysis.cross_peak_signal.sigma};
  });
  plot("peak_auto_idler", [](const PowerRecord& r) {
    return T3{r.mean_power_mw, r.analysis.auto_peak_idler.mean, r.analysis.auto_peak_idler.sigma};
  });
  plot("peak_cross_idler", [](const PowerRecord& r) {
    return T3{r.mean_power_mw, r.analysis.cross_peak_idler.mean, r.analysis.cross_peak_idler.sigma};
  });
  plot("modes", [](const PowerRecord& r) { return T3{r.mean_power_mw, r.analysis.k, 0.0}; });
  plot("dip_depth", [](const PowerRecord& r) {
    return T3{r.mean_power_mw, r.dip ? r.dip->central_depth : kNaN, 0.0};
  });
  plot("dip_fwhm", [](const PowerRecord& r) {
    return T3{r.mean_power_mw, r.dip && r.dip->fwhm_m ? *r.dip->fwhm_m : kNaN, 0.0};
  });

  // Fitted sinh^2 curve, dense.
  std::ostringstream curve;
  curve << "x,y,sigma\n";
  const auto& fs = rep.fits.contains("photons_sinh2") ? rep.fits.at("photons_sinh2") : json();
  if (fs.contains("parameters") && !rep.records.empty()) {
    FitResult f;
    f.names = {"A", "B"};
    f.values = {fs["parameters"]["A"]["value"].get<double>(), fs["parameters"]["B"]["value"].get<double>()};
    const double xmax = std::sqrt(rep.records.back().peak_power_w);
    for (int k = 0; k <= 200; ++k) {
      const double xv = xmax * k / 200.0;
      curve << fmt(xv) << ',' << fmt(sinh2_curve(f, xv)) << ",0\n";
    }
  }
  write_text(out / "plot_photons_fit.csv", curve.str());
}

namespace {

void write_correlation_map(const std::filesystem::path& dir, const CorrelationMap& map,
                           const AnalysisFragment& frag) {
  write_real_map(dir / "correlation_map.tbl", map.width, map.height, frag.pixel_lambda_m,
                 frag.pixel_theta_rad, map.gamma);
  auto pix = [](Pixel p) { return json{p.i, p.j}; };
  json j{{"width", map.width},
         {"height", map.height},
         {"seed_pixel", pix(map.seed)},
         {"symmetric_pixel", pix(map.symmetric)},
         {"auto_peak", {{"pixel", pix(map.auto_peak.pixel)}, {"value", map.auto_peak.value}}},
         {"cross_peak", {{"pixel", pix(map.cross_peak.pixel)}, {"value", map.cross_peak.value}}},
         {"flagged_pixels", std::count(map.flagged.begin(), map.flagged.end(), 1)}};
  auto sec = [](const Section& s) {
    return json{{"origin", s.origin}, {"peak_index", s.peak_index}, {"step", s.step}, {"profile", s.profile}};
  };
  j["sections"] = {{"auto_spectral", sec(map.auto_spectral)},
                   {"auto_angular", sec(map.auto_angular)},
                   {"cross_spectral", sec(map.cross_spectral)},
                   {"cross_angular", sec(map.cross_angular)}};
  write_text(dir / "correlation_map.json", j.dump(2) + "\n");
}

PowerRecord record_from_run(const PowerRun& run) {
  PowerRecord r;
  r.mean_power_mw = run.mean_power_mw;
  r.peak_power_w = run.peak_power_w;
  r.gain = run.gain;
  r.transmission = run.transmission;
  r.lattice_photons = run.lattice_photons;
  r.lattice_photons_sem = run.lattice_photons_sem;
  r.conversion = run.conversion;
  r.clipped_cells = run.clipped_cells;
  r.saturated_pixels = run.saturated_pixels;
  return r;
}

void write_run(const PowerRun& run, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_frame_stack(dir / "stack.tbf", run.stack);
  write_frame_stack(dir / "dark.tbf", run.dark);
  write_lattice(dir / "signal_exit.tbl", run.first.a);
  write_lattice(dir / "pump_exit.tbl", run.first.b);
  write_monitor_csv(dir / "monitors.csv", run.monitors);
}

PowerRecord analyze_run(const PowerRun& run, const ExperimentConfig& config,
                        const std::filesystem::path& dir) {
  PowerRecord rec = record_from_run(run);
  CorrelationMap map;
  if (config.run.realizations < 2) throw ConfigError("analysis needs run.realizations >= 2");
  rec.analysis = analyze_stack(run.stack, measure_dark(run.dark), config.analysis, &map);
  rec.ok = true;
  write_correlation_map(dir, map, rec.analysis);
  return rec;
}

}  // namespace

PowerRecord cmd_simulate(const ExperimentConfig& config, double mean_power_mw,
                         const std::filesystem::path& out, std::size_t workers, std::ostream* log) {
  const auto dir = power_dir(out, mean_power_mw);
  const PowerRun run = simulate_power(config, mean_power_mw, workers);
  write_run(run, dir);
  PowerRecord rec = analyze_run(run, config, dir);
  write_text(dir / "fragment.json", to_json(rec).dump(2) + "\n");
  if (log) *log << "simulated " << mean_power_mw << " mW -> " << dir.string() << '\n';
  return rec;
}

SweepReport cmd_sweep(const ExperimentConfig& config, const std::filesystem::path& out,
                      std::size_t workers, std::ostream* log) {
  config.validate();
  std::filesystem::create_directories(out);
  std::vector<PowerRecord> records;
  std::optional<PumpDistributions> reference;
  for (double mw : config.pump.mean_powers_mw) {
    const auto dir = power_dir(out, mw);
    PowerRecord rec;
    rec.mean_power_mw = mw;
    rec.peak_power_w = peak_power_w(config.pump, mw);
    try {
      const PowerRun run = simulate_power(config, mw, workers);
      write_run(run, dir);
      rec = analyze_run(run, config, dir);
      // The lowest power is the undepleted reference for the pump maps.
      if (!reference) reference = run.pump_exit;
      rec.dip = pump_profiles(run.pump_exit, *reference).dip;
    } catch (const NumericAbort& e) {
      rec.ok = false;
      std::ostringstream msg;
      msg << "numeric abort: " << e.what() << " (z = " << e.z() << " m, max |amplitude| = "
          << e.max_magnitude() << ")";
      rec.error = msg.str();
    } catch (const IoError&) {
      throw;
    } catch (const std::exception& e) {
      rec.ok = false;
      rec.error = e.what();
    }
    std::filesystem::create_directories(dir);
    write_text(dir / "fragment.json", to_json(rec).dump(2) + "\n");
    if (log) {
      *log << std::setw(9) << mw << " mW  " << (rec.ok ? "ok" : "FAILED: " + rec.error) << '\n';
      log->flush();
    }
    records.push_back(std::move(rec));
  }
  SweepReport rep = assemble_report(config, std::move(records));
  write_report(rep, out);
  return rep;
}

AnalysisFragment cmd_analyze(const std::filesystem::path& stack_path, const ExperimentConfig& config,
                             const std::filesystem::path& out) {
  const FrameStack stack = read_frame_stack(stack_path);
  if (stack.frames.size() < 2) throw ConfigError("analysis needs a stack with at least two frames");
  DarkLevel dark{stack.camera.dark_mean_dn, stack.camera.dark_sigma_dn};
  const auto dark_path = stack_path.parent_path() / "dark.tbf";
  if (std::filesystem::exists(dark_path) && std::filesystem::absolute(dark_path) != std::filesystem::absolute(stack_path)) {
    dark = measure_dark(read_frame_stack(dark_path));
  }
  CorrelationMap map;
  AnalysisFragment frag = analyze_stack(stack, dark, config.analysis, &map);
  std::filesystem::create_directories(out);
  write_correlation_map(out, map, frag);
  write_text(out / "analysis.json", to_json(frag).dump(2) + "\n");
  return frag;
}

SweepReport cmd_report(const ExperimentConfig& config, const std::filesystem::path& out) {
  std::vector<PowerRecord> records;
  for (double mw : config.pump.mean_powers_mw) {
    const auto path = power_dir(out, mw) / "fragment.json";
    if (!std::filesystem::exists(path)) {
      PowerRecord missing;
      missing.mean_power_mw = mw;
      missing.peak_power_w = peak_power_w(config.pump, mw);
      missing.error = "no fragment at " + path.string();
      records.push_back(missing);
      continue;
    }
    records.push_back(record_from_json(read_json(path)));
  }
  SweepReport rep = assemble_report(config, std::move(records));
  write_report(rep, out);
  return rep;
}

}  // namespace twinbeam
