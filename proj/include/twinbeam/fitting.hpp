#pragma once

// Damped least squares (Levenberg-Marquardt) with analytic Jacobians and the
// three curve models used by the sweep reports.

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace twinbeam {

struct FitResult {
  std::vector<std::string> names;
  std::vector<double> values;
  std::vector<double> sigmas;  // 1-sigma from the linearized covariance
  double rss = 0.0;
  double r2 = 0.0;
  bool converged = false;
  std::size_t iterations = 0;

  double value(const std::string& name) const;
  double sigma(const std::string& name) const;
};

struct CurveModel {
  std::vector<std::string> names;
  std::function<double(double x, std::span<const double> p)> f;
  /// Writes df/dp_k into grad (size = names.size()).
  std::function<void(double x, std::span<const double> p, std::span<double> grad)> gradient;
};

struct LmOptions {
  std::size_t max_iterations = 200;
  double step_tolerance = 1e-10;  // relative parameter step
  double rss_tolerance = 1e-12;   // relative RSS change
};

/// Minimizes sum (y - f(x; p))^2 from p0. Returns converged = false rather
/// than throwing when the iteration budget runs out.
FitResult levenberg_marquardt(const CurveModel& model, std::span<const double> x,
                              std::span<const double> y, std::vector<double> p0,
                              const LmOptions& options = {});

CurveModel power_law_model();  // a * x^p          ; names a, p
CurveModel sinh2_model();      // A * sinh^2(B x)  ; names A, B
CurveModel gaussian_model();   // offset + height * exp(-(x - x0)^2 / (2 sigma^2))

/// y = a x^p. With a fixed exponent only a is fitted (closed form).
/// Throws AnalysisError on fewer than 3 points or nonconvergence.
FitResult fit_power_law(std::span<const double> x, std::span<const double> y,
                        std::optional<double> fixed_exponent = std::nullopt);

/// y = A sinh^2(B x); needs >= 4 points and y >= 0.
FitResult fit_sinh2(std::span<const double> x, std::span<const double> y);

/// Evaluates a fitted sinh^2 curve at x (extrapolation included).
double sinh2_curve(const FitResult& fit, double x);

/// Gaussian with offset against the sample index. FWHM = 2 sqrt(2 ln 2) sigma.
FitResult fit_gaussian(std::span<const double> profile);
double gaussian_fwhm(const FitResult& fit);

}  // namespace twinbeam
