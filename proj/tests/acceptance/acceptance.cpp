// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.
//
//   twinbeam_acceptance [desk-config] [scratch-dir]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "twinbeam/analysis.hpp"
#include "twinbeam/camera.hpp"
#include "twinbeam/config.hpp"
#include "twinbeam/errors.hpp"
#include "twinbeam/fitting.hpp"
#include "twinbeam/propagator.hpp"
#include "twinbeam/sweep.hpp"

using namespace twinbeam;
using nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

int failures = 0;

void report(int id, const std::string& name, bool pass, const std::string& detail) {
  std::cout << (pass ? "PASS" : "FAIL") << "  [" << id << "] " << name << ": " << detail << std::endl;
  if (!pass) ++failures;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string show(double v, int prec = 4) {
  std::ostringstream s;
  s.precision(prec);
  s << v;
  return s.str();
}

std::size_t workers() {
  if (const char* env = std::getenv("TWINBEAM_WORKERS")) {
    const long v = std::atol(env);
    if (v >= 1) return static_cast<std::size_t>(v);
  }
  return std::max(1U, std::thread::hardware_concurrency());
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// --- 1 ---------------------------------------------------------------------

void manley_rowe(const ExperimentConfig& desk) {
  const auto t0 = Clock::now();
  const auto& m = desk.medium;
  const LatticeSpec s{256, 1, 256, desk.lattice.dx, desk.lattice.dy, desk.lattice.dt};
  const auto table = build_dispersion(m, s);
  RunConfig rc;
  rc.dz_m = m.length_m / 64.0;
  const double top = desk.pump.mean_powers_mw.back();
  rc.pump = {pump_peak_amplitude(peak_power_w(desk.pump, top), desk.pump.waist_m, s, m), desk.pump.waist_m,
             desk.pump.duration_s, desk.pump.chirp_per_s2};
  const PdcState in{seed_vacuum(s, desk.run.seed), make_pump(s, m, rc.pump), 0.0};
  const double q0 = photon_number(in.a) + 2.0 * photon_number(in.b);
  const auto out = propagate(in, m, table, rc);
  const double q1 = photon_number(out.a) + 2.0 * photon_number(out.b);
  const double drift = std::abs(q1 - q0) / q0;
  const double t = seconds_since(t0);
  const double converted = photon_number(out.a, true);
  report(1, "Manley-Rowe charge, 256x1x256, 64 steps", drift <= 1e-6 && t < 30.0,
         "|dQ|/Q = " + show(drift) + " (<= 1e-6), " + show(t, 3) + " s (< 30 s), " + show(converted) +
             " photons converted at " + show(top) + " mW");
}

// --- 2 ---------------------------------------------------------------------

void unitarity(const ExperimentConfig& desk) {
  const auto& m = desk.medium;
  const auto& s = desk.lattice;
  const auto table = build_dispersion(m, s);
  PumpPulse p{pump_peak_amplitude(peak_power_w(desk.pump, desk.pump.mean_powers_mw.back()), desk.pump.waist_m, s, m),
              desk.pump.waist_m, desk.pump.duration_s, 0.0};
  PdcState st{seed_vacuum(s, 3), make_pump(s, m, p), 0.0};
  const double na = photon_number(st.a), nb = photon_number(st.b);
  PropagationOptions opt;
  opt.coupling = 0.0;
  SplitStepper stepper(m, table, desk.run.dz_m, opt);
  stepper.run(st, static_cast<std::size_t>(std::lround(m.length_m / desk.run.dz_m)), nullptr);
  const double ea = std::abs(photon_number(st.a) / na - 1.0);
  const double eb = std::abs(photon_number(st.b) / nb - 1.0);
  report(2, "linear step unitarity (sigma = 0)", ea <= 1e-12 && eb <= 1e-12,
         "signal " + show(ea) + ", pump " + show(eb) + " (<= 1e-12)");
}

// --- 3 ---------------------------------------------------------------------

double plane_wave_gain(const CrystalMedium& m, std::size_t steps, double g) {
  const LatticeSpec s{1, 1, 4, 1e-5, 1e-5, 1e-14};
  const auto table = build_dispersion(m, s);
  const double b0 = 1e3, seed = 1e-3;
  PropagationOptions opt;
  opt.linear = false;
  opt.coupling = g / (b0 * m.length_m);
  ComplexLattice a(s, Domain::spectral), b(s, Domain::spectral);
  a.at(0, 0, 1) = seed;
  b.at(0, 0, 0) = 2.0 * b0;  // constant b0 in real space
  PdcState st{from_spectral(a), from_spectral(b), 0.0};
  SplitStepper(m, table, m.length_m / static_cast<double>(steps), opt).run(st, steps, nullptr);
  return std::norm(to_spectral(st.a).at(0, 0, 1)) / (seed * seed);
}

void plane_wave() {
  auto m = default_bbo();
  m.collinear_mismatch_per_m = 0.0;
  const double g = 2.0, exact = std::cosh(g) * std::cosh(g);
  const double e512 = std::abs(plane_wave_gain(m, 512, g) / exact - 1.0);
  const double e256 = std::abs(plane_wave_gain(m, 256, g) / exact - 1.0);
  const double ratio = e256 / e512;
  report(3, "plane-wave amplifier vs cosh^2, g = 2", e512 <= 1e-4 && std::abs(ratio - 4.0) <= 0.5,
         "rel. error " + show(e512) + " at L/512 (<= 1e-4), error ratio " + show(ratio) + " (4 +- 0.5)");
}

// --- 4-7 -------------------------------------------------------------------

void desk_sweep(const ExperimentConfig& desk, const std::filesystem::path& out) {
  const auto t0 = Clock::now();
  std::cout << "running desk sweep (" << desk.pump.mean_powers_mw.size() << " powers x "
            << desk.run.realizations << " realizations, " << workers() << " workers) ..." << std::endl;
  const auto rep = cmd_sweep(desk, out, workers(), &std::cout);
  const double t = seconds_since(t0);
  const auto& f = rep.fits;
  const double cut = f.value("fit_cut_mw", kNaN);

  std::size_t undepleted = 0;
  for (const auto& r : rep.records) undepleted += (r.ok && r.mean_power_mw <= cut) ? 1 : 0;
  {
    const auto& fs = f.at("photons_sinh2");
    const double r2 = fs.contains("r2") && !fs.at("r2").is_null() ? fs.at("r2").get<double>() : kNaN;
    report(4, "sinh^2 photon growth below the width maximum",
           undepleted >= 5 && desk.run.realizations >= 200 && r2 > 0.99 && t < 1800.0,
           "R^2 = " + show(r2, 6) + " (> 0.99) on " + std::to_string(undepleted) + " powers <= " + show(cut) +
               " mW (>= 5), " + std::to_string(desk.run.realizations) + " realizations, sweep " + show(t, 4) +
               " s (< 1800 s)");
  }
  {
    const auto& pl = f.at("width_power_law");
    double p = kNaN, sp = kNaN;
    if (pl.contains("parameters")) {
      p = pl["parameters"]["p"]["value"].get<double>();
      sp = pl["parameters"]["p"]["sigma"].get<double>();
    }
    report(5, "fourth-root width scaling", std::abs(p - 0.25) <= 0.05,
           "free exponent " + show(p) + " +- " + show(sp, 2) + " (0.25 +- 0.05)");
  }
  {
    std::vector<const PowerRecord*> ok;
    for (const auto& r : rep.records) {
      if (r.ok) ok.push_back(&r);
    }
    const bool interior = f.value("width_interior_maximum", false);
    const double wmax_mw = f.value("width_max_mw", kNaN);
    double wmax = 0.0;
    for (const auto* r : ok) wmax = std::max(wmax, r->analysis.auto_spectral_px.mean);
    const double wlast = ok.empty() ? kNaN : ok.back()->analysis.auto_spectral_px.mean;
    const bool a = interior && wlast < wmax;

    bool b = true;
    std::string ratios;
    const auto& doc = f.at("photons_sinh2").value("data_over_curve", json::array());
    for (std::size_t k = doc.size() >= 3 ? doc.size() - 3 : 0; k < doc.size(); ++k) {
      const double rr = doc[k].at("ratio").get<double>();
      b = b && rr < 1.0;
      ratios += (ratios.empty() ? "" : ", ") + show(rr, 3);
    }
    b = b && doc.size() >= 3;

    bool c = ok.size() >= 3;
    std::string depths, widths;
    double prev = -1.0;
    for (std::size_t k = ok.size() >= 3 ? ok.size() - 3 : 0; k < ok.size(); ++k) {
      const auto& d = ok[k]->dip;
      const double depth = d ? d->central_depth : kNaN;
      const double w = d && d->fwhm_m ? *d->fwhm_m : kNaN;
      c = c && depth < -0.10 && std::isfinite(w) && w > prev;
      prev = w;
      depths += (depths.empty() ? "" : ", ") + show(depth, 3);
      widths += (widths.empty() ? "" : ", ") + show(w * 1e6, 4);
    }
    report(6, "depletion phenomenology", a && b && c,
           std::string("(a) ") + (a ? "ok" : "no") + ": width max at " + show(wmax_mw) + " mW, last " +
               show(wlast) + " < max " + show(wmax) + " px; (b) " + (b ? "ok" : "no") +
               ": data/curve at top powers " + ratios + " (< 1); (c) " + (c ? "ok" : "no") + ": depth " +
               depths + " (< -0.10), dip FWHM " + widths + " um (increasing)");
  }
  {
    const double rho = f.value("k_width_spearman", json()).is_number() ? f.at("k_width_spearman").get<double>() : kNaN;
    report(7, "complementarity of K and width", rho <= -0.8,
           "Spearman " + show(rho) + " over " + std::to_string(f.value("k_width_points", 0)) + " powers (<= -0.8)");
  }
}

// --- 8 ---------------------------------------------------------------------

RealFrames thermal(std::size_t w, std::size_t h, std::size_t n, double modes, double mean, std::uint64_t seed,
                   bool shared) {
  std::mt19937_64 rng(seed);
  std::gamma_distribution<double> intensity(modes, mean / modes);
  RealFrames f{w, h, {}};
  for (std::size_t r = 0; r < n; ++r) {
    std::vector<double> frame(w * h);
    if (shared) {
      std::fill(frame.begin(), frame.end(), intensity(rng));
    } else {
      for (auto& v : frame) v = intensity(rng);
    }
    f.frames.push_back(std::move(frame));
  }
  return f;
}

void statistics() {
  const std::size_t n = 10000;
  const auto single = g2_estimate(thermal(8, 8, n, 1.0, 500.0, 21, true), {0, 8, 0, 8});
  const double k1 = mode_count(single.g2_corrected);
  const auto ten = g2_estimate(thermal(8, 8, n, 10.0, 500.0, 22, true), {0, 8, 0, 8});

  const auto indep = thermal(32, 16, n, 1.0, 200.0, 23, false);
  const Pixel seed{12, 8};
  const auto map = gamma_map(indep, seed, {16, 8});
  double worst = 0.0;
  for (std::size_t j = 0; j < map.height; ++j) {
    for (std::size_t i = 0; i < map.width; ++i) {
      if (!(Pixel{i, j} == seed)) worst = std::max(worst, std::abs(map.at(i, j) - 1.0));
    }
  }
  const double bound = 5.0 / std::sqrt(static_cast<double>(n));
  const bool pass = std::abs(single.g2_corrected - 2.0) <= 0.05 && std::abs(k1 - 1.0) <= 0.05 &&
                    std::abs(ten.g2_corrected - 1.1) <= 0.01 && worst < bound;
  report(8, "statistics oracles, 1e4 frames", pass,
         "single mode g2 " + show(single.g2_corrected) + " K " + show(k1) + "; 10 modes g2 " +
             show(ten.g2_corrected, 5) + "; independent pixels max |Gamma - 1| " + show(worst, 3) + " (< " +
             show(bound, 3) + ")");
}

// --- 9 ---------------------------------------------------------------------

void fwhm_fixtures() {
  std::vector<double> g(61);
  for (std::size_t k = 0; k < g.size(); ++k) {
    const double x = static_cast<double>(k) - 30.0;
    g[k] = 1.0 + std::exp(-x * x / 50.0);
  }
  std::vector<double> tri(21, 1.0);
  for (int k = -3; k <= 3; ++k) tri[static_cast<std::size_t>(10 + k)] = 3.0 - 0.5 * std::abs(k);
  const double wg = fwhm_of_section(g).pixels, wt = fwhm_of_section(tri).pixels;
  report(9, "FWHM extraction", std::abs(wg - 11.774) <= 0.1 && wt == 4.0,
         "Gaussian sigma 5 px: " + show(wg, 6) + " (11.774 +- 0.1); triangle: " + show(wt, 17) + " (exactly 4)");
}

// --- 10 --------------------------------------------------------------------

void calibration() {
  CameraSpec cam;
  cam.pixels_spectral = 64;
  cam.pixels_angular = 64;
  cam.electrons_per_dn = 5.4;
  cam.quantum_efficiency = 0.9;
  double worst = 0.0;
  std::string detail;
  for (const double photons : {200.0, 2000.0, 20000.0}) {
    for (const bool em : {false, true}) {
      cam.em_excess_noise = em;
      const Image img(64, 64, photons);
      FrameStack stack;
      stack.width = 64;
      stack.height = 64;
      stack.camera = cam;
      stack.frames.push_back(detect(img, cam, 31).frame);
      const RealFrames frames = dark_subtract(stack, cam.dark_mean_dn);
      const double back = photons_from_dn(frames, cam, 1.0, {0, 64, 0, 64});
      worst = std::max(worst, std::abs(back / img.sum() - 1.0));
    }
    detail += (detail.empty() ? "" : ", ") + show(photons);
  }
  report(10, "detect -> photons_from_dn round trip", worst <= 0.02,
         "worst relative error " + show(worst, 3) + " (<= 0.02) over " + detail +
             " photons/pixel, with and without EM noise");
}

// --- 11 --------------------------------------------------------------------

void determinism(const std::filesystem::path& scratch) {
  json j{{"medium", {{"collinear_mismatch_rad_per_m", 0.0}, {"walkoff_angle_rad", 0.02}}},
         {"lattice", {{"nx", 32}, {"ny", 1}, {"nt", 64}, {"dx_m", 40e-6}, {"dy_m", 40e-6}, {"dt_s", 160e-15}}},
         {"pump", {{"duration_s", 2e-12}, {"mean_powers_mw", {5.0, 20.0, 60.0}}}},
         {"run", {{"dz_m", 2.5e-4}, {"realizations", 12}, {"seed", 77}, {"dark_frames", 12}}},
         {"camera",
          {{"pixels_spectral", 32}, {"pixels_angular", 8}, {"lambda_min_m", 695.46e-9},
           {"lambda_max_m", 700.53e-9}, {"theta_min_rad", -4.5e-3}, {"theta_max_rad", 4.5e-3}}},
         {"analysis", {{"seed_offset_spectral_px", 6}, {"section_half_width_px", 5}, {"cross_search_radius_px", 8}}}};
  const auto c = config_from_json(j);
  cmd_sweep(c, scratch / "det_a", 1, nullptr);
  cmd_sweep(c, scratch / "det_b", std::max<std::size_t>(2, workers()), nullptr);
  std::size_t compared = 0, differ = 0;
  for (const auto& e : std::filesystem::directory_iterator(scratch / "det_a")) {
    if (!e.is_regular_file()) continue;
    ++compared;
    differ += slurp(e.path()) != slurp(scratch / "det_b" / e.path().filename()) ? 1 : 0;
  }
  report(11, "repeat sweeps give identical report files", compared >= 3 && differ == 0,
         std::to_string(compared) + " report files compared, " + std::to_string(differ) + " differ");
}

}  // namespace

int main(int argc, char** argv) {
#ifdef TWINBEAM_DESK_CONFIG
  std::filesystem::path config_path = TWINBEAM_DESK_CONFIG;
#else
  std::filesystem::path config_path = "configs/desk.json";
#endif
  if (argc > 1) config_path = argv[1];
  const std::filesystem::path scratch =
      argc > 2 ? std::filesystem::path(argv[2]) : std::filesystem::temp_directory_path() / "twinbeam_acceptance";
  std::filesystem::remove_all(scratch);
  std::filesystem::create_directories(scratch);

  ExperimentConfig desk;
  try {
    desk = load_config(config_path);
  } catch (const std::exception& e) {
    std::cerr << "cannot load " << config_path << ": " << e.what() << '\n';
    return 2;
  }

  auto guarded = [](int id, const char* name, auto&& fn) {
    try {
      fn();
    } catch (const std::exception& e) {
      report(id, name, false, std::string("exception: ") + e.what());
    }
  };
  guarded(1, "Manley-Rowe charge", [&] { manley_rowe(desk); });
  guarded(2, "linear step unitarity", [&] { unitarity(desk); });
  guarded(3, "plane-wave amplifier", [] { plane_wave(); });
  guarded(8, "statistics oracles", [] { statistics(); });
  guarded(9, "FWHM extraction", [] { fwhm_fixtures(); });
  guarded(10, "calibration round trip", [] { calibration(); });
  guarded(11, "determinism", [&] { determinism(scratch); });
  try {
    desk_sweep(desk, scratch / "desk");
  } catch (const std::exception& e) {
    for (int id = 4; id <= 7; ++id) report(id, "desk sweep", false, std::string("exception: ") + e.what());
  }

  std::cout << (failures == 0 ? "all criteria pass" : std::to_string(failures) + " criteria fail") << std::endl;
  return failures == 0 ? 0 : 1;
}
