#include "twinbeam/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "twinbeam/errors.hpp"
#include "twinbeam/fft.hpp"

namespace twinbeam {

void RealFrames::validate() const {
  for (const auto& f : frames) {
    if (f.size() != pixels()) throw ContractError("frame dimensions differ within stack");
  }
}

RealFrames dark_subtract(const FrameStack& stack, double dark_dn) {
  return dark_subtract(stack, std::vector<double>(stack.width * stack.height, dark_dn));
}

RealFrames dark_subtract(const FrameStack& stack, const std::vector<double>& dark_map) {
  stack.validate();
  if (dark_map.size() != stack.width * stack.height) {
    throw ContractError("dark map dimensions do not match frames");
  }
  RealFrames out;
  out.width = stack.width;
  out.height = stack.height;
  out.frames.reserve(stack.frames.size());
  for (const auto& frame : stack.frames) {
    std::vector<double> f(frame.size());
    for (std::size_t k = 0; k < frame.size(); ++k) f[k] = static_cast<double>(frame[k]) - dark_map[k];
    out.frames.push_back(std::move(f));
  }
  return out;
}

DarkLevel measure_dark(const FrameStack& dark) {
  dark.validate();
  if (dark.frames.size() < 2) throw ContractError("need at least two dark frames");
  const std::size_t p = dark.width * dark.height;
  const double n = static_cast<double>(dark.frames.size());
  std::vector<double> mean(p, 0.0);
  for (const auto& f : dark.frames) {
    for (std::size_t k = 0; k < p; ++k) mean[k] += f[k];
  }
  for (auto& m : mean) m /= n;
  double var = 0.0;
  for (const auto& f : dark.frames) {
    for (std::size_t k = 0; k < p; ++k) {
      const double d = f[k] - mean[k];
      var += d * d;
    }
  }
  var /= (n - 1.0) * static_cast<double>(p);
  DarkLevel level;
  level.mean_dn = std::accumulate(mean.begin(), mean.end(), 0.0) / static_cast<double>(p);
  level.sigma_dn = std::sqrt(var);
  return level;
}

std::vector<double> frame_means(const RealFrames& frames) {
  frames.validate();
  if (frames.frames.empty()) throw ContractError("no frames");
  std::vector<double> mean(frames.pixels(), 0.0);
  for (const auto& f : frames.frames) {
    for (std::size_t k = 0; k < f.size(); ++k) mean[k] += f[k];
  }
  const double n = static_cast<double>(frames.frames.size());
  for (auto& m : mean) m /= n;
  return mean;
}

DetectorNoise DetectorNoise::from_camera(const CameraSpec& camera, double measured_dark_sigma_dn) {
  // The measured dark spread already contains the rounding noise.
  return {.dark_sigma_dn = measured_dark_sigma_dn,
          .electrons_per_dn = camera.electrons_per_dn,
          .excess_noise_factor = camera.excess_noise_factor(),
          .quantization_dn2 = 0.0};
}

double DetectorNoise::variance(double mean_dn) const noexcept {
  double v = dark_sigma_dn * dark_sigma_dn + quantization_dn2;
  if (electrons_per_dn > 0.0) v += excess_noise_factor * std::max(mean_dn, 0.0) / electrons_per_dn;
  return v;
}

namespace {

std::size_t lo(std::size_t c, std::size_t r) { return c > r ? c - r : 0; }
std::size_t hi(std::size_t c, std::size_t r, std::size_t n) { return std::min(n - 1, c + r); }

Section row_section(const std::vector<double>& g, std::size_t width, Pixel peak, std::size_t hw,
                    double step) {
  Section s;
  s.origin = lo(peak.i, hw);
  const std::size_t end = hi(peak.i, hw, width);
  for (std::size_t i = s.origin; i <= end; ++i) s.profile.push_back(g[peak.j * width + i]);
  s.peak_index = peak.i - s.origin;
  s.step = step;
  return s;
}

Section column_section(const std::vector<double>& g, std::size_t width, std::size_t height,
                       Pixel peak, std::size_t hw, double step) {
  Section s;
  s.origin = lo(peak.j, hw);
  const std::size_t end = hi(peak.j, hw, height);
  for (std::size_t j = s.origin; j <= end; ++j) s.profile.push_back(g[j * width + peak.i]);
  s.peak_index = peak.j - s.origin;
  s.step = step;
  return s;
}

double dist2(std::ptrdiff_t di, std::ptrdiff_t dj) {
  return static_cast<double>(di * di + dj * dj);
}

}  // namespace

CorrelationMap gamma_map(const RealFrames& frames, Pixel seed, Pixel center,
                         const GammaOptions& options) {
  frames.validate();
  if (frames.frames.size() < 2) throw ContractError("gamma_map needs at least two frames");
  const std::size_t w = frames.width;
  const std::size_t h = frames.height;
  if (seed.i >= w || seed.j >= h) throw ContractError("seed pixel outside image");
  if (center.i >= w || center.j >= h) throw ContractError("center pixel outside image");

  const auto mean = frame_means(frames);
  const std::size_t s = seed.j * w + seed.i;
  if (!(mean[s] > 0.0)) throw ContractError("mean intensity at seed pixel is not positive");

  std::vector<double> cross(w * h, 0.0);
  for (const auto& f : frames.frames) {
    const double is = f[s];
    for (std::size_t k = 0; k < f.size(); ++k) cross[k] += is * f[k];
  }
  const double n = static_cast<double>(frames.frames.size());

  CorrelationMap map;
  map.width = w;
  map.height = h;
  map.seed = seed;
  map.gamma.assign(w * h, 1.0);
  map.flagged.assign(w * h, 0);
  for (std::size_t k = 0; k < w * h; ++k) {
    if (mean[k] > 0.0) {
      map.gamma[k] = (cross[k] / n) / (mean[s] * mean[k]);
    } else {
      map.flagged[k] = 1;
    }
  }

  const auto si = static_cast<std::ptrdiff_t>(2 * center.i) - static_cast<std::ptrdiff_t>(seed.i);
  const auto sj = static_cast<std::ptrdiff_t>(2 * center.j) - static_cast<std::ptrdiff_t>(seed.j);
  if (si < 0 || sj < 0 || si >= static_cast<std::ptrdiff_t>(w) || sj >= static_cast<std::ptrdiff_t>(h)) {
    throw ContractError("symmetric point of the seed falls outside the image");
  }
  map.symmetric = {static_cast<std::size_t>(si), static_cast<std::size_t>(sj)};

  std::vector<double> g = map.gamma;
  if (options.noise) {
    g[s] = (cross[s] / n - options.noise->variance(mean[s])) / (mean[s] * mean[s]);
  }

  // Auto peak: neighbourhood maximum around the seed.
  map.auto_peak = {seed, g[s]};
  for (std::size_t j = lo(seed.j, options.auto_search_radius);
       j <= hi(seed.j, options.auto_search_radius, h); ++j) {
    for (std::size_t i = lo(seed.i, options.auto_search_radius);
         i <= hi(seed.i, options.auto_search_radius, w); ++i) {
      const std::size_t k = j * w + i;
      if (!map.flagged[k] && g[k] > map.auto_peak.value) map.auto_peak = {{i, j}, g[k]};
    }
  }

  // Cross peak: window around the symmetric point, restricted to pixels
  // nearer to it than to the seed so the auto lobe cannot win.
  bool found = false;
  const std::size_t r = options.cross_search_radius;
  for (std::size_t j = lo(map.symmetric.j, r); j <= hi(map.symmetric.j, r, h); ++j) {
    for (std::size_t i = lo(map.symmetric.i, r); i <= hi(map.symmetric.i, r, w); ++i) {
      const auto ii = static_cast<std::ptrdiff_t>(i);
      const auto jj = static_cast<std::ptrdiff_t>(j);
      const double to_sym = dist2(ii - si, jj - sj);
      const double to_seed = dist2(ii - static_cast<std::ptrdiff_t>(seed.i),
                                   jj - static_cast<std::ptrdiff_t>(seed.j));
      if (!(to_sym < to_seed)) continue;
      const std::size_t k = j * w + i;
      if (map.flagged[k]) continue;
      if (!found || g[k] > map.cross_peak.value) {
        map.cross_peak = {{i, j}, g[k]};
        found = true;
      }
    }
  }
  if (!found) map.cross_peak = {map.symmetric, g[map.symmetric.j * w + map.symmetric.i]};

  const std::size_t hw = options.section_half_width;
  map.auto_spectral = row_section(g, w, map.auto_peak.pixel, hw, options.pixel_lambda);
  map.auto_angular = column_section(g, w, h, map.auto_peak.pixel, hw, options.pixel_theta);
  map.cross_spectral = row_section(g, w, map.cross_peak.pixel, hw, options.pixel_lambda);
  map.cross_angular = column_section(g, w, h, map.cross_peak.pixel, hw, options.pixel_theta);
  return map;
}

Width fwhm_of_section(const std::vector<double>& profile, double baseline, double step) {
  if (profile.empty()) throw AnalysisError("no crossing: empty profile");
  std::vector<double> e(profile.size());
  for (std::size_t k = 0; k < e.size(); ++k) e[k] = profile[k] - baseline;
  const auto top = static_cast<std::size_t>(std::max_element(e.begin(), e.end()) - e.begin());
  if (!(e[top] > 0.0)) throw AnalysisError("no crossing: profile never exceeds the baseline");
  const double half = 0.5 * e[top];

  std::size_t l = top;
  while (l > 0 && e[l] >= half) --l;
  std::size_t r = top;
  while (r + 1 < e.size() && e[r] >= half) ++r;
  if (e[l] >= half || e[r] >= half) {
    throw AnalysisError("no crossing: lobe reaches the end of the profile");
  }
  for (std::size_t k = 0; k < e.size(); ++k) {
    if ((k < l || k > r) && e[k] >= half) {
      std::ostringstream msg;
      msg << "multiple lobes: sample " << k << " reaches " << e[k] << " against half maximum "
          << half << " of the lobe at " << top;
      throw AnalysisError(msg.str());
    }
  }
  const double xl = static_cast<double>(l) + (half - e[l]) / (e[l + 1] - e[l]);
  const double xr = static_cast<double>(r - 1) + (e[r - 1] - half) / (e[r - 1] - e[r]);
  const double px = xr - xl;
  return {px, px * step};
}

Width fwhm_of_section(const Section& section, double baseline) {
  return fwhm_of_section(section.profile, baseline, section.step);
}

Region arm_region(Pixel center, std::size_t width, std::size_t height, Arm arm, std::size_t margin) {
  Region r;
  r.j_begin = 0;
  r.j_end = height;
  if (arm == Arm::signal) {
    r.i_begin = 0;
    r.i_end = center.i > margin ? center.i - margin : 0;
  } else {
    r.i_begin = std::min(width, center.i + margin + 1);
    r.i_end = width;
  }
  return r;
}

G2Estimate g2_estimate(const RealFrames& frames, const Region& region, const DetectorNoise& noise) {
  frames.validate();
  if (frames.frames.size() < 2) throw ContractError("g2_estimate needs at least two frames");
  if (region.empty()) throw ContractError("g2_estimate: empty region");
  if (region.i_end > frames.width || region.j_end > frames.height) {
    throw ContractError("g2_estimate: region outside image");
  }
  const double n = static_cast<double>(frames.frames.size());
  G2Estimate out;
  for (std::size_t j = region.j_begin; j < region.j_end; ++j) {
    for (std::size_t i = region.i_begin; i < region.i_end; ++i) {
      const std::size_t k = j * frames.width + i;
      double m = 0.0;
      double m2 = 0.0;
      for (const auto& f : frames.frames) {
        m += f[k];
        m2 += f[k] * f[k];
      }
      m /= n;
      m2 /= n;
      if (!(m > 0.0)) {
        std::ostringstream msg;
        msg << "<I> <= 0 in region at pixel (" << i << ", " << j << ")";
        throw AnalysisError(msg.str());
      }
      out.g2_raw += m2 / (m * m);
      out.g2_corrected += (m2 - noise.variance(m)) / (m * m);
      out.mean_dn += m;
    }
  }
  const double count = static_cast<double>(region.size());
  out.g2_raw /= count;
  out.g2_corrected /= count;
  out.mean_dn /= count;
  return out;
}

double mode_count(double g2) {
  if (!(g2 > 1.0)) throw ContractError("super-Poissonian excess absent (g2 <= 1)");
  return 1.0 / (g2 - 1.0);
}

double photons_from_dn(double dn_excess, const CameraSpec& camera, double losses) {
  if (!(losses > 0.0 && losses <= 1.0)) throw ContractError("losses must lie in (0, 1]");
  const double throughput = camera.quantum_efficiency * losses * camera.optical_transmission;
  if (!(throughput > 0.0)) throw ContractError("nonpositive throughput");
  return dn_excess * camera.electrons_per_dn / throughput;
}

double photons_from_dn(const RealFrames& frames, const CameraSpec& camera, double losses,
                       const Region& region) {
  frames.validate();
  if (frames.frames.empty()) throw ContractError("no frames");
  if (region.empty() || region.i_end > frames.width || region.j_end > frames.height) {
    throw ContractError("photons_from_dn: bad region");
  }
  double total = 0.0;
  for (const auto& f : frames.frames) {
    for (std::size_t j = region.j_begin; j < region.j_end; ++j) {
      for (std::size_t i = region.i_begin; i < region.i_end; ++i) total += f[j * frames.width + i];
    }
  }
  return photons_from_dn(total / static_cast<double>(frames.frames.size()), camera, losses);
}

void PumpDistributions::add(const ComplexLattice& pump) {
  if (pump.domain() != Domain::real) throw ContractError("pump lattice must be in real domain");
  if (samples == 0) {
    spec = pump.spec();
    spectral_map.assign(spec.nx * spec.nt, 0.0);
    fluence.assign(spec.nx * spec.ny, 0.0);
  } else if (!(pump.spec() == spec)) {
    throw ContractError("pump distributions: spec mismatch");
  }
  const std::size_t nt = spec.nt;
  const std::size_t yc = spec.ny / 2;
  std::vector<cplx> line(nt);
  for (std::size_t ix = 0; ix < spec.nx; ++ix) {
    for (std::size_t it = 0; it < nt; ++it) line[it] = pump.at(ix, yc, it);
    fft::transform_inplace(line.data(), 1, 1, nt, fft::Direction::forward);
    for (std::size_t k = 0; k < nt; ++k) {
      // Ascending Omega: sample k holds frequency index k - nt/2.
      spectral_map[ix * nt + k] += std::norm(line[(k + nt / 2) % nt]) / static_cast<double>(nt);
    }
  }
  for (std::size_t iy = 0; iy < spec.ny; ++iy) {
    for (std::size_t ix = 0; ix < spec.nx; ++ix) {
      double sum = 0.0;
      for (std::size_t it = 0; it < nt; ++it) sum += std::norm(pump.at(ix, iy, it));
      fluence[iy * spec.nx + ix] += sum;
    }
  }
  ++samples;
}

PumpDistributions pump_distributions(const ComplexLattice& pump) {
  PumpDistributions d;
  d.add(pump);
  return d;
}

namespace {

std::vector<double> scaled(const std::vector<double>& v, double by) {
  std::vector<double> out(v.size());
  for (std::size_t k = 0; k < v.size(); ++k) out[k] = v[k] / by;
  return out;
}

double max_of(const std::vector<double>& v) { return *std::max_element(v.begin(), v.end()); }

double sum_of(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0); }

// Outer half-depth crossings of the connected region around `m` where the
// pump sits below the reference; ripple inside that region does not split it.
std::optional<double> depletion_width(const std::vector<double>& neg, std::size_t m, double dx) {
  if (!(neg[m] > 0.0)) return std::nullopt;
  const double half = 0.5 * neg[m];
  std::size_t l = m, r = m;
  while (l > 0 && neg[l - 1] > 0.0) --l;
  while (r + 1 < neg.size() && neg[r + 1] > 0.0) ++r;
  while (neg[l] < half) ++l;
  while (neg[r] < half) --r;
  if (l == 0 || r + 1 == neg.size()) return std::nullopt;
  const double xl = static_cast<double>(l) - (neg[l] - half) / (neg[l] - neg[l - 1]);
  const double xr = static_cast<double>(r) + (neg[r] - half) / (neg[r] - neg[r + 1]);
  return (xr - xl) * dx;
}

}  // namespace

PumpProfiles pump_profiles(const PumpDistributions& pump, const PumpDistributions& ref) {
  if (pump.samples == 0 || ref.samples == 0) throw ContractError("empty pump distributions");
  if (!(pump.spec == ref.spec)) throw ContractError("pump_profiles: spec mismatch");
  const auto& s = pump.spec;
  const double pmax = max_of(pump.spectral_map);
  const double rmax = max_of(ref.spectral_map);
  const double psum = sum_of(pump.fluence);
  const double rsum = sum_of(ref.fluence);
  if (!(pmax > 0.0 && rmax > 0.0 && psum > 0.0 && rsum > 0.0)) {
    throw ContractError("pump_profiles: empty pump");
  }

  PumpProfiles out;
  const auto pspec = scaled(pump.spectral_map, pmax);
  const auto rspec = scaled(ref.spectral_map, rmax);
  out.diff_spectral_map.resize(pspec.size());
  for (std::size_t k = 0; k < pspec.size(); ++k) out.diff_spectral_map[k] = pspec[k] - rspec[k];
  const auto pflu = scaled(pump.fluence, psum);
  const auto rflu = scaled(ref.fluence, rsum);
  out.diff_spatial_map.resize(pflu.size());
  for (std::size_t k = 0; k < pflu.size(); ++k) out.diff_spatial_map[k] = pflu[k] - rflu[k];

  const std::size_t yc = s.ny / 2;
  std::vector<double> row(s.nx), ref_row(s.nx);
  for (std::size_t ix = 0; ix < s.nx; ++ix) {
    row[ix] = pump.fluence[yc * s.nx + ix];
    ref_row[ix] = ref.fluence[yc * s.nx + ix];
  }
  out.spatial_section = scaled(row, sum_of(row) * s.dx);
  const auto ref_section = scaled(ref_row, sum_of(ref_row) * s.dx);
  const auto c = static_cast<std::size_t>(
      std::max_element(ref_section.begin(), ref_section.end()) - ref_section.begin());

  out.spectral_section.assign(pump.spectral_map.begin() + static_cast<std::ptrdiff_t>(c * s.nt),
                              pump.spectral_map.begin() + static_cast<std::ptrdiff_t>((c + 1) * s.nt));
  out.spectral_section = scaled(out.spectral_section, max_of(out.spectral_section));
  out.omega_axis.resize(s.nt);
  for (std::size_t k = 0; k < s.nt; ++k) {
    out.omega_axis[k] = (static_cast<double>(k) - static_cast<double>(s.nt / 2)) * s.domega();
  }
  out.x_axis = real_axis(s.nx, s.dx);

  std::vector<double> diff(s.nx), neg(s.nx);
  for (std::size_t ix = 0; ix < s.nx; ++ix) {
    diff[ix] = out.spatial_section[ix] - ref_section[ix];
    neg[ix] = -diff[ix];
  }
  out.dip.central_depth = diff[c] / ref_section[c];
  const auto m = static_cast<std::size_t>(std::min_element(diff.begin(), diff.end()) - diff.begin());
  out.dip.fwhm_m = depletion_width(neg, m, s.dx);
  double pos = static_cast<double>(m);
  if (m > 0 && m + 1 < s.nx) {
    const double a = diff[m - 1], b = diff[m], d = diff[m + 1];
    const double curv = a - 2.0 * b + d;
    if (curv > 0.0) pos += 0.5 * (a - d) / curv;
  }
  out.dip.lateral_offset_m = (pos - static_cast<double>(c)) * s.dx;
  return out;
}

PumpProfiles pump_profiles(const ComplexLattice& pump_exit, const ComplexLattice& reference) {
  if (!(pump_exit.spec() == reference.spec())) throw ContractError("pump_profiles: spec mismatch");
  return pump_profiles(pump_distributions(pump_exit), pump_distributions(reference));
}

namespace {

std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t k = 0; k < order.size();) {
    std::size_t e = k;
    while (e + 1 < order.size() && v[order[e + 1]] == v[order[k]]) ++e;
    const double avg = 0.5 * static_cast<double>(k + e) + 1.0;
    for (std::size_t q = k; q <= e; ++q) r[order[q]] = avg;
    k = e + 1;
  }
  return r;
}

}  // namespace

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw ContractError("spearman needs two equal series");
  const auto rx = ranks(x);
  const auto ry = ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = sum_of(rx) / n;
  const double my = sum_of(ry) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t k = 0; k < rx.size(); ++k) {
    sxy += (rx[k] - mx) * (ry[k] - my);
    sxx += (rx[k] - mx) * (rx[k] - mx);
    syy += (ry[k] - my) * (ry[k] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace twinbeam
