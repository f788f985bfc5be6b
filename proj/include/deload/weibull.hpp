#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "deload/error.hpp"

namespace deload {

/// Three-parameter Weibull watch-time distribution. `shape` is dimensionless,
/// `scale` and `location` are in seconds.
struct WeibullParams {
  double shape = 1.0;
  double scale = 1.0;
  double location = 0.0;

  [[nodiscard]] bool valid() const noexcept {
    return std::isfinite(shape) && std::isfinite(scale) && std::isfinite(location) && shape > 0.0 &&
           scale > 0.0 && location >= 0.0;
  }
  friend bool operator==(const WeibullParams&, const WeibullParams&) = default;
};

inline double weibull_pdf(const WeibullParams& p, double t) {
  if (t <= p.location) return 0.0;
  const double z = (t - p.location) / p.scale;
  return (p.shape / p.scale) * std::pow(z, p.shape - 1.0) * std::exp(-std::pow(z, p.shape));
}

/// P(T > tau).
inline double weibull_survival(const WeibullParams& p, double tau) {
  if (tau <= p.location) return 1.0;
  return std::exp(-std::pow((tau - p.location) / p.scale, p.shape));
}

inline double weibull_cdf(const WeibullParams& p, double t) { return 1.0 - weibull_survival(p, t); }

/// Inverse CDF. Throws std::domain_error for prob outside [0, 1).
inline double weibull_quantile(const WeibullParams& p, double prob) {
  if (!(prob >= 0.0 && prob < 1.0)) throw std::domain_error("weibull_quantile: probability must lie in [0, 1)");
  if (prob == 0.0) return p.location;
  return p.location + p.scale * std::pow(-std::log1p(-prob), 1.0 / p.shape);
}

/// Draws one variate by inversion from a uniform u in [0, 1).
inline double weibull_from_uniform(const WeibullParams& p, double u) { return weibull_quantile(p, u); }

struct FitConfig {
  std::size_t min_samples = 30;
  double min_r2 = 0.5;          // fits below this quality are rejected
  std::size_t gamma_grid = 48;  // coarse grid before golden-section refinement
  int gamma_refine_iters = 60;
};

struct WeibullFit {
  WeibullParams params;
  double r2 = 0.0;
  std::size_t n_samples = 0;
};

enum class FitFailure { insufficient_data, degenerate, poor_fit };

inline const char* to_string(FitFailure f) {
  switch (f) {
    case FitFailure::insufficient_data: return "insufficient data";
    case FitFailure::degenerate: return "degenerate samples";
    case FitFailure::poor_fit: return "fit quality below floor";
  }
  return "unknown";
}

class FitError : public DataError {
 public:
  FitError(FitFailure reason, const std::string& detail)
      : DataError(std::string("weibull fit failed: ") + to_string(reason) + " (" + detail + ")"), reason_(reason) {}
  [[nodiscard]] FitFailure reason() const noexcept { return reason_; }

 private:
  FitFailure reason_;
};

namespace detail {

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = -std::numeric_limits<double>::infinity();
};

// Median-rank regression of ln(-ln(1-F_i)) on ln(t_i - gamma). `sorted` is ascending,
// all entries > gamma; `ranks_y` holds the precomputed ordinates.
inline LineFit median_rank_line(std::span<const double> sorted, std::span<const double> ranks_y, double gamma) {
  const auto n = static_cast<double>(sorted.size());
  double sx = 0, sy = 0;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    sx += std::log(sorted[i] - gamma);
    sy += ranks_y[i];
  }
  const double mx = sx / n, my = sy / n;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const double dx = std::log(sorted[i] - gamma) - mx;
    const double dy = ranks_y[i] - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  LineFit fit;
  if (!(sxx > 0.0) || !(syy > 0.0)) return fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  fit.r2 = (sxy * sxy) / (sxx * syy);
  return fit;
}

}  // namespace detail

/// Least-squares Weibull fit by median-rank regression. The location is picked by a
/// 1-D search over [0, min sample) maximizing R^2; shape and scale come from the
/// linearized regression at that location. Non-positive samples are dropped; when
/// `censor_at` is set, samples are capped at that value and kept as exact observations.
inline WeibullFit fit_weibull_lse(std::span<const double> samples, std::optional<double> censor_at = std::nullopt,
                                  const FitConfig& cfg = {}) {
  std::vector<double> xs;
  xs.reserve(samples.size());
  for (double s : samples) {
    if (!std::isfinite(s)) continue;
    if (censor_at) s = std::min(s, *censor_at);
    if (s > 0.0) xs.push_back(s);
  }
  if (xs.size() < std::max<std::size_t>(cfg.min_samples, 3)) {
    throw FitError(FitFailure::insufficient_data,
                   std::to_string(xs.size()) + " usable samples, need " + std::to_string(cfg.min_samples));
  }
  std::sort(xs.begin(), xs.end());
  if (xs.front() == xs.back()) throw FitError(FitFailure::degenerate, "all samples equal");

  const auto n = static_cast<double>(xs.size());
  std::vector<double> ys(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double f = (static_cast<double>(i + 1) - 0.3) / (n + 0.4);
    ys[i] = std::log(-std::log1p(-f));
  }

  const double hi = xs.front() * (1.0 - 1e-9);
  auto score = [&](double g) { return detail::median_rank_line(xs, ys, g).r2; };

  // Coarse grid, then golden-section on the bracket around the best grid point.
  const std::size_t grid = std::max<std::size_t>(cfg.gamma_grid, 2);
  std::size_t best = 0;
  double best_r2 = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k <= grid; ++k) {
    const double g = hi * static_cast<double>(k) / static_cast<double>(grid);
    const double r2 = score(g);
    if (r2 > best_r2) best_r2 = r2, best = k;
  }
  double a = hi * static_cast<double>(best == 0 ? 0 : best - 1) / static_cast<double>(grid);
  double b = hi * static_cast<double>(std::min(best + 1, grid)) / static_cast<double>(grid);
  const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - phi * (b - a), d = a + phi * (b - a);
  double fc = score(c), fd = score(d);
  for (int it = 0; it < cfg.gamma_refine_iters; ++it) {
    if (fc > fd) {
      b = d, d = c, fd = fc;
      c = b - phi * (b - a), fc = score(c);
    } else {
      a = c, c = d, fc = fd;
      d = a + phi * (b - a), fd = score(d);
    }
  }
  double gamma = 0.5 * (a + b);
  if (score(gamma) < best_r2) gamma = hi * static_cast<double>(best) / static_cast<double>(grid);

  const auto line = detail::median_rank_line(xs, ys, gamma);
  if (!(line.slope > 0.0) || !std::isfinite(line.r2)) throw FitError(FitFailure::degenerate, "non-positive slope");

  WeibullFit out;
  out.params.shape = line.slope;
  out.params.scale = std::exp(-line.intercept / line.slope);
  out.params.location = gamma;
  out.r2 = line.r2;
  out.n_samples = xs.size();
  if (!out.params.valid()) throw FitError(FitFailure::degenerate, "non-finite parameters");
  if (out.r2 < cfg.min_r2) throw FitError(FitFailure::poor_fit, "r2=" + std::to_string(out.r2));
  return out;
}

}  // namespace deload
