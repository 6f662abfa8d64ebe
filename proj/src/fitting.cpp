#include "twinbeam/fitting.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "twinbeam/errors.hpp"

namespace twinbeam {

namespace {

std::size_t find_name(const std::vector<std::string>& names, const std::string& name) {
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw ContractError("no fit parameter named " + name);
  return static_cast<std::size_t>(it - names.begin());
}

// Cholesky solve of the small SPD system A x = b (row-major n x n).
bool cholesky_solve(std::vector<double> a, std::vector<double> b, std::size_t n,
                    std::vector<double>& x) {
  for (std::size_t j = 0; j < n; ++j) {
    double d = a[j * n + j];
    for (std::size_t k = 0; k < j; ++k) d -= a[j * n + k] * a[j * n + k];
    if (!(d > 0.0)) return false;
    d = std::sqrt(d);
    a[j * n + j] = d;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a[i * n + j];
      for (std::size_t k = 0; k < j; ++k) s -= a[i * n + k] * a[j * n + k];
      a[i * n + j] = s / d;
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < i; ++k) b[i] -= a[i * n + k] * b[k];
    b[i] /= a[i * n + i];
  }
  for (std::size_t i = n; i-- > 0;) {
    for (std::size_t k = i + 1; k < n; ++k) b[i] -= a[k * n + i] * b[k];
    b[i] /= a[i * n + i];
  }
  x = std::move(b);
  return true;
}

double rss_of(const CurveModel& m, std::span<const double> x, std::span<const double> y,
              const std::vector<double>& p) {
  double s = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double r = y[k] - m.f(x[k], p);
    s += r * r;
  }
  return s;
}

double total_sum_squares(std::span<const double> y) {
  const double mean = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
  double tss = 0.0;
  for (double v : y) tss += (v - mean) * (v - mean);
  return tss;
}

double r_squared(double rss, std::span<const double> y) {
  const double tss = total_sum_squares(y);
  return tss > 0.0 ? 1.0 - rss / tss : (rss == 0.0 ? 1.0 : -INFINITY);
}

}  // namespace

double FitResult::value(const std::string& name) const { return values[find_name(names, name)]; }
double FitResult::sigma(const std::string& name) const { return sigmas[find_name(names, name)]; }

FitResult levenberg_marquardt(const CurveModel& model, std::span<const double> x,
                              std::span<const double> y, std::vector<double> p,
                              const LmOptions& options) {
  const std::size_t np = model.names.size();
  const std::size_t n = x.size();
  if (p.size() != np) throw ContractError("initial guess has the wrong number of parameters");
  if (y.size() != n) throw ContractError("x and y differ in length");
  if (n < np) throw AnalysisError("insufficient points");

  std::vector<double> jac(n * np), grad(np);
  auto fill = [&](const std::vector<double>& q, std::vector<double>& jtj, std::vector<double>& jtr) {
    jtj.assign(np * np, 0.0);
    jtr.assign(np, 0.0);
    for (std::size_t k = 0; k < n; ++k) {
      model.gradient(x[k], q, grad);
      const double r = y[k] - model.f(x[k], q);
      for (std::size_t a = 0; a < np; ++a) {
        jac[k * np + a] = grad[a];
        jtr[a] += grad[a] * r;
        for (std::size_t b = 0; b < np; ++b) jtj[a * np + b] += grad[a] * grad[b];
      }
    }
  };

  FitResult res;
  res.names = model.names;
  double rss = rss_of(model, x, y, p);
  if (!std::isfinite(rss)) throw AnalysisError("nonconvergence: model not finite at the initial guess");
  double lambda = 1e-3;
  std::vector<double> jtj, jtr, delta;
  fill(p, jtj, jtr);

  for (std::size_t it = 1; it <= options.max_iterations; ++it) {
    res.iterations = it;
    if (rss == 0.0) {
      res.converged = true;
      break;
    }
    std::vector<double> a = jtj;
    for (std::size_t k = 0; k < np; ++k) a[k * np + k] += lambda * std::max(jtj[k * np + k], 1e-300);
    if (!cholesky_solve(a, jtr, np, delta)) {
      lambda *= 10.0;
      continue;
    }
    std::vector<double> trial(np);
    double step = 0.0, norm = 0.0;
    for (std::size_t k = 0; k < np; ++k) {
      trial[k] = p[k] + delta[k];
      step += delta[k] * delta[k];
      norm += p[k] * p[k];
    }
    const bool tiny_step = std::sqrt(step) <= options.step_tolerance * (std::sqrt(norm) + 1e-300);
    const double trial_rss = rss_of(model, x, y, trial);
    if (std::isfinite(trial_rss) && trial_rss < rss) {
      const double change = (rss - trial_rss) / rss;
      p = std::move(trial);
      rss = trial_rss;
      fill(p, jtj, jtr);
      lambda = std::max(lambda / 10.0, 1e-15);
      if (tiny_step || change < options.rss_tolerance) {
        res.converged = true;
        break;
      }
    } else {
      if (tiny_step) {
        // No downhill step at machine resolution: accept if the gradient is
        // orthogonal to the residual (a stationary point).
        double worst = 0.0;
        for (std::size_t a2 = 0; a2 < np; ++a2) {
          const double col = std::sqrt(jtj[a2 * np + a2]);
          if (col > 0.0) worst = std::max(worst, std::abs(jtr[a2]) / (col * std::sqrt(rss)));
        }
        res.converged = worst < 1e-6;
        break;
      }
      lambda *= 10.0;
    }
  }

  res.values = p;
  res.rss = rss;
  res.r2 = r_squared(rss, y);
  res.sigmas.assign(np, 0.0);
  if (n > np) {
    const double s2 = rss / static_cast<double>(n - np);
    for (std::size_t k = 0; k < np; ++k) {
      std::vector<double> e(np, 0.0), col;
      e[k] = 1.0;
      if (cholesky_solve(jtj, e, np, col)) res.sigmas[k] = std::sqrt(std::max(0.0, s2 * col[k]));
    }
  }
  return res;
}

CurveModel power_law_model() {
  return {{"a", "p"},
          [](double x, std::span<const double> p) { return p[0] * std::pow(x, p[1]); },
          [](double x, std::span<const double> p, std::span<double> g) {
            const double xp = std::pow(x, p[1]);
            g[0] = xp;
            g[1] = p[0] * xp * std::log(x);
          }};
}

CurveModel sinh2_model() {
  return {{"A", "B"},
          [](double x, std::span<const double> p) {
            const double s = std::sinh(p[1] * x);
            return p[0] * s * s;
          },
          [](double x, std::span<const double> p, std::span<double> g) {
            const double s = std::sinh(p[1] * x);
            g[0] = s * s;
            g[1] = p[0] * x * std::sinh(2.0 * p[1] * x);
          }};
}

CurveModel gaussian_model() {
  return {{"offset", "height", "x0", "sigma"},
          [](double x, std::span<const double> p) {
            const double u = (x - p[2]) / p[3];
            return p[0] + p[1] * std::exp(-0.5 * u * u);
          },
          [](double x, std::span<const double> p, std::span<double> g) {
            const double d = x - p[2];
            const double u = d / p[3];
            const double e = std::exp(-0.5 * u * u);
            g[0] = 1.0;
            g[1] = e;
            g[2] = p[1] * e * d / (p[3] * p[3]);
            g[3] = p[1] * e * d * d / (p[3] * p[3] * p[3]);
          }};
}

FitResult fit_power_law(std::span<const double> x, std::span<const double> y,
                        std::optional<double> fixed_exponent) {
  if (x.size() != y.size()) throw ContractError("x and y differ in length");
  if (x.size() < 3) throw AnalysisError("insufficient points");
  for (double v : x) {
    if (!(v > 0.0)) throw ContractError("power law needs x > 0");
  }
  if (fixed_exponent) {
    const double p = *fixed_exponent;
    double num = 0.0, den = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
      const double xp = std::pow(x[k], p);
      num += y[k] * xp;
      den += xp * xp;
    }
    FitResult res;
    res.names = {"a", "p"};
    res.values = {num / den, p};
    res.rss = rss_of(power_law_model(), x, y, res.values);
    res.r2 = r_squared(res.rss, y);
    res.sigmas = {std::sqrt(res.rss / static_cast<double>(x.size() - 1) / den), 0.0};
    res.converged = true;
    return res;
  }
  // Log-log regression start when the data allow it.
  double a0 = 1.0, p0 = 0.5;
  if (std::all_of(y.begin(), y.end(), [](double v) { return v > 0.0; })) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double n = static_cast<double>(x.size());
    for (std::size_t k = 0; k < x.size(); ++k) {
      const double lx = std::log(x[k]), ly = std::log(y[k]);
      sx += lx;
      sy += ly;
      sxx += lx * lx;
      sxy += lx * ly;
    }
    const double den = n * sxx - sx * sx;
    if (den > 0.0) {
      p0 = (n * sxy - sx * sy) / den;
      a0 = std::exp((sy - p0 * sx) / n);
    }
  }
  auto res = levenberg_marquardt(power_law_model(), x, y, {a0, p0});
  if (!res.converged) throw AnalysisError("nonconvergence in power-law fit");
  return res;
}

FitResult fit_sinh2(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ContractError("x and y differ in length");
  if (x.size() < 4) throw AnalysisError("insufficient points");
  for (double v : y) {
    if (v < 0.0) throw ContractError("sinh^2 fit needs y >= 0");
  }
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return x[a] < x[b]; });
  const std::size_t hi = order.back(), hi2 = order[order.size() - 2], low = order.front();

  // Large-argument form y ~ (A/4) exp(2 B x).
  double b0 = 1.0;
  if (y[hi] > 0.0 && y[hi2] > 0.0 && x[hi] > x[hi2]) {
    b0 = std::log(y[hi] / y[hi2]) / (2.0 * (x[hi] - x[hi2]));
  }
  if (!(b0 > 0.0) || !std::isfinite(b0)) b0 = 1.0 / std::max(x[hi], 1e-300);
  const double s = std::sinh(b0 * x[low]);
  double a0 = (s != 0.0 && y[low] > 0.0) ? y[low] / (s * s) : 1.0;
  if (!std::isfinite(a0) || a0 <= 0.0) a0 = 1.0;

  auto res = levenberg_marquardt(sinh2_model(), x, y, {a0, b0});
  if (!res.converged) throw AnalysisError("nonconvergence in sinh^2 fit");
  if (res.values[1] < 0.0) res.values[1] = -res.values[1];  // sinh^2 is even in B
  return res;
}

double sinh2_curve(const FitResult& fit, double x) {
  const double s = std::sinh(fit.value("B") * x);
  return fit.value("A") * s * s;
}

FitResult fit_gaussian(std::span<const double> profile) {
  if (profile.size() < 5) throw AnalysisError("insufficient points");
  std::vector<double> x(profile.size());
  std::iota(x.begin(), x.end(), 0.0);
  const auto mx = std::max_element(profile.begin(), profile.end());
  const double lo = *std::min_element(profile.begin(), profile.end());
  const double height = *mx - lo;
  std::size_t above = 0;
  for (double v : profile) above += (v - lo) >= 0.5 * height ? 1 : 0;
  const double sigma0 = std::max(1.0, static_cast<double>(above) / 2.3548);
  auto res = levenberg_marquardt(gaussian_model(), x, profile,
                                 {lo, height, static_cast<double>(mx - profile.begin()), sigma0});
  if (!res.converged) throw AnalysisError("nonconvergence in Gaussian fit");
  res.values[3] = std::abs(res.values[3]);
  return res;
}

double gaussian_fwhm(const FitResult& fit) {
  return 2.0 * std::sqrt(2.0 * std::log(2.0)) * fit.value("sigma");
}

}  // namespace twinbeam
