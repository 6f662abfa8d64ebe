#include <doctest.h>

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "helpers.hpp"
#include "twinbeam/analysis.hpp"
#include "twinbeam/errors.hpp"
#include "twinbeam/sweep.hpp"

using namespace twinbeam;
using nlohmann::json;

namespace {

// Small enough to run a whole sweep in a few seconds.
ExperimentConfig tiny(std::size_t realizations = 6) {
  json j{{"medium", {{"collinear_mismatch_rad_per_m", 0.0}, {"walkoff_angle_rad", 0.02}}},
         {"lattice", {{"nx", 32}, {"ny", 1}, {"nt", 64}, {"dx_m", 40e-6}, {"dy_m", 40e-6}, {"dt_s", 160e-15}}},
         {"pump", {{"duration_s", 2e-12}, {"mean_powers_mw", {5.0, 20.0, 60.0}}}},
         {"run", {{"dz_m", 2.5e-4}, {"realizations", realizations}, {"seed", 5}, {"dark_frames", 6}}},
         {"camera",
          {{"pixels_spectral", 32}, {"pixels_angular", 8}, {"lambda_min_m", 695.46e-9},
           {"lambda_max_m", 700.53e-9}, {"theta_min_rad", -4.5e-3}, {"theta_max_rad", 4.5e-3}}},
         {"analysis", {{"seed_offset_spectral_px", 6}, {"section_half_width_px", 5}, {"cross_search_radius_px", 8}}}};
  return config_from_json(j);
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST_CASE("sweep: power directories") {
  CHECK(power_dir("out", 20.0).filename() == "power_0020.000mW");
  CHECK(power_dir("out", 0.5).filename() == "power_0000.500mW");
}

TEST_CASE("sweep: seed statistics skip non-finite values") {
  const auto s = seed_stats({1.0, 3.0, kNaN, 5.0});
  CHECK(s.count == 3);
  CHECK(s.mean == doctest::Approx(3.0));
  CHECK(s.sigma == doctest::Approx(2.0));
  CHECK(seed_stats({}).count == 0);
  CHECK(std::isnan(seed_stats({}).mean));
}

TEST_CASE("sweep: one power is identical for any worker count") {
  const auto c = tiny();
  const auto a = simulate_power(c, 20.0, 1);
  const auto b = simulate_power(c, 20.0, 3);
  CHECK(a.stack.frames == b.stack.frames);
  CHECK(a.dark.frames == b.dark.frames);
  CHECK(a.lattice_photons == b.lattice_photons);
  CHECK(a.conversion == b.conversion);
  CHECK(a.pump_exit.fluence == b.pump_exit.fluence);
  CHECK(a.stack.frames.size() == 6);
  CHECK(a.dark.frames.size() == 6);
  CHECK(a.transmission <= 1.0);
  CHECK(a.gain > 0.0);
  CHECK(a.stack.provenance.at("config_hash") == config_hash(c));
  CHECK(a.stack.provenance.at("detection_seed_first").get<std::uint64_t>() == 5 + kDetectionSeedOffset);
}

TEST_CASE("sweep: fragment and record JSON round trip, NaN as null") {
  PowerRecord r;
  r.mean_power_mw = 12.0;
  r.peak_power_w = 3.4e6;
  r.gain = 1.5;
  r.ok = true;
  r.transmission = 0.25;
  r.lattice_photons = 100.0;
  r.analysis.frames = 10;
  r.analysis.pixel_lambda_m = 1e-10;
  r.analysis.pixel_theta_rad = 1e-4;
  r.analysis.auto_spectral_px = seed_stats({2.0, 3.0});
  r.analysis.k = kNaN;
  r.analysis.g2_signal = {1.5, 1.4, 200.0};
  r.analysis.warnings = {"w"};
  r.dip = DipMetrics{-0.1, std::nullopt, 2e-5};
  const json j = to_json(r);
  CHECK(j.at("analysis").at("k").is_null());
  CHECK(j.at("dip").at("fwhm_m").is_null());
  const auto back = record_from_json(json::parse(j.dump()));
  CHECK(to_json(back) == j);
  CHECK(std::isnan(back.analysis.k));
  CHECK_FALSE(back.dip->fwhm_m.has_value());
  CHECK(back.analysis.g2_signal.g2_corrected == 1.4);
  CHECK_THROWS_AS(record_from_json(json{{"ok", true}}), FormatError);
}

TEST_CASE("sweep: files, report rebuild and repeatability") {
  const auto c = tiny();
  const auto dir = testing::scratch_dir("sweep");
  std::ostringstream log;
  const auto rep = cmd_sweep(c, dir / "a", 2, &log);
  REQUIRE(rep.records.size() == 3);
  for (const auto& r : rep.records) CHECK_MESSAGE(r.ok, r.error);
  for (const char* f : {"report.json", "report.csv", "plot_photons.csv", "plot_fwhm_auto_spectral.csv"}) {
    CHECK(std::filesystem::exists(dir / "a" / f));
  }
  const auto p = power_dir(dir / "a", 20.0);
  for (const char* f : {"stack.tbf", "stack.tbf.json", "dark.tbf", "signal_exit.tbl", "pump_exit.tbl",
                        "monitors.csv", "correlation_map.tbl", "correlation_map.json", "fragment.json"}) {
    CHECK_MESSAGE(std::filesystem::exists(p / f), f);
  }
  CHECK(rep.metadata.at("config_hash") == config_hash(c));
  CHECK(rep.records.front().dip.has_value());
  CHECK(rep.records.front().dip->central_depth == 0.0);

  const auto csv = slurp(dir / "a" / "report.csv");
  const auto json_text = slurp(dir / "a" / "report.json");
  cmd_report(c, dir / "a");
  CHECK(slurp(dir / "a" / "report.csv") == csv);
  CHECK(slurp(dir / "a" / "report.json") == json_text);

  // same config and seed elsewhere: identical bytes
  cmd_sweep(c, dir / "b", 1, nullptr);
  CHECK(slurp(dir / "b" / "report.csv") == csv);
  CHECK(slurp(dir / "b" / "report.json") == json_text);

  // a missing fragment becomes a failed record, not an exception
  std::filesystem::remove(p / "fragment.json");
  const auto partial = cmd_report(c, dir / "a");
  CHECK_FALSE(partial.records[1].ok);
  CHECK(partial.records[0].ok);
}

TEST_CASE("sweep: too few realizations to analyze") {
  auto c = tiny(1);
  const auto dir = testing::scratch_dir("sweep_one");
  CHECK_THROWS_AS(cmd_simulate(c, 5.0, dir, 1, nullptr), ConfigError);
}

TEST_CASE("sweep: analyze a synthetic single-mode thermal stack") {
  // Every pixel of a frame scales with one exponential variate: g2 = 2, K = 1.
  FrameStack s;
  s.width = 32;
  s.height = 8;
  s.camera.pixels_spectral = 32;
  s.camera.pixels_angular = 8;
  s.camera.dark_mean_dn = 100.0;
  s.camera.dark_sigma_dn = 0.0;
  s.center = {16, 4};
  std::mt19937_64 rng(8);
  std::exponential_distribution<double> e(1.0);
  for (int f = 0; f < 4000; ++f) {
    const double level = e(rng);
    std::vector<std::uint16_t> frame(s.width * s.height);
    for (std::size_t j = 0; j < s.height; ++j) {
      for (std::size_t i = 0; i < s.width; ++i) {
        const double shape = 200.0 + 20.0 * static_cast<double>((i * 7 + j * 3) % 5);
        frame[j * s.width + i] = static_cast<std::uint16_t>(std::min(65535.0, std::round(100.0 + level * shape)));
      }
    }
    s.frames.push_back(std::move(frame));
  }
  const auto dir = testing::scratch_dir("analyze");
  write_frame_stack(dir / "stack.tbf", s);
  auto c = tiny();
  c.analysis.seed_offset_spectral_px = 6;
  const auto frag = cmd_analyze(dir / "stack.tbf", c, dir / "out");
  CHECK(frag.frames == 4000);
  CHECK(frag.g2_signal.g2_corrected == doctest::Approx(2.0).epsilon(0.05));
  CHECK(frag.k == doctest::Approx(1.0).epsilon(0.05));
  CHECK(std::filesystem::exists(dir / "out" / "analysis.json"));
  CHECK(std::filesystem::exists(dir / "out" / "correlation_map.tbl"));

  // a truncated copy is a format error
  const auto bytes = slurp(dir / "stack.tbf");
  std::ofstream(dir / "cut.tbf", std::ios::binary) << bytes.substr(0, bytes.size() / 2);
  std::filesystem::copy_file(dir / "stack.tbf.json", dir / "cut.tbf.json");
  CHECK_THROWS_AS(cmd_analyze(dir / "cut.tbf", c, dir / "out2"), FormatError);
  CHECK_THROWS_AS(cmd_analyze(dir / "absent.tbf", c, dir / "out3"), IoError);
}
