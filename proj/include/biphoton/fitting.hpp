#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "biphoton/errors.hpp"

namespace biphoton {

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

/// Gaussian-envelope fringe model
///   R(x) = B { 1 + V exp[-1/2 ((x-x0)/sigma)^2] cos[k (x-x0) + phi] }.
/// Dips and humps are the k = 0, phi = 0 special case. Bounds: B > 0,
/// V in [-1, 1], sigma > 0, k >= 0.
struct FringeModel {
  enum Index { kBaseline = 0, kVisibility, kCenter, kWidth, kWavenumber, kPhase, kCount };

  std::array<double, kCount> params{1.0, 0.0, 0.0, 1.0, 0.0, 0.0};
  std::array<bool, kCount> free_mask{true, true, true, true, false, false};

  static constexpr std::array<const char*, kCount> names{"B", "V", "x0", "sigma", "k", "phi"};

  /// Dip/hump model: k and phi fixed at zero.
  static FringeModel dip() { return {}; }

  /// Full fringe model: all six parameters free.
  static FringeModel fringe() {
    FringeModel m;
    m.free_mask = {true, true, true, true, true, true};
    return m;
  }

  std::size_t free_count() const {
    std::size_t n = 0;
    for (bool f : free_mask) n += f;
    return n;
  }

  double operator()(double x) const {
    const double u = (x - params[kCenter]) / params[kWidth];
    const double envelope = std::exp(-0.5 * u * u);
    const double phase = params[kWavenumber] * (x - params[kCenter]) + params[kPhase];
    return params[kBaseline] * (1.0 + params[kVisibility] * envelope * std::cos(phase));
  }

  /// Analytic partial derivatives of R(x) with respect to all six parameters.
  std::array<double, kCount> gradient(double x) const {
    const double b = params[kBaseline];
    const double v = params[kVisibility];
    const double sigma = params[kWidth];
    const double dx = x - params[kCenter];
    const double u = dx / sigma;
    const double envelope = std::exp(-0.5 * u * u);
    const double phase = params[kWavenumber] * dx + params[kPhase];
    const double c = std::cos(phase);
    const double s = std::sin(phase);
    std::array<double, kCount> g{};
    g[kBaseline] = 1.0 + v * envelope * c;
    g[kVisibility] = b * envelope * c;
    g[kCenter] = b * v * envelope * (u * c / sigma + params[kWavenumber] * s);
    g[kWidth] = b * v * envelope * c * u * u / sigma;
    g[kWavenumber] = -b * v * envelope * s * dx;
    g[kPhase] = -b * v * envelope * s;
    return g;
  }

  bool in_bounds() const {
    return params[kBaseline] > 0.0 && params[kVisibility] >= -1.0 &&
           params[kVisibility] <= 1.0 && params[kWidth] > 0.0 && params[kWavenumber] >= 0.0;
  }
};

// ---------------------------------------------------------------------------
// Fit result
// ---------------------------------------------------------------------------

struct FitResult {
  FringeModel model;  // best-fit parameters, fixed ones untouched
  std::array<double, FringeModel::kCount> std_errors{};
  double rss = 0.0;
  bool converged = false;
  bool errors_reliable = false;
  int iterations = 0;
};

/// Value annotated with the reliability flag propagated from a fit.
struct Annotated {
  double value = 0.0;
  bool reliable = false;
};

/// Baseline-referenced dip-hump visibility |V| of a fitted model; unreliable
/// when the fit did not converge.
inline Annotated dip_visibility(const FitResult& result) {
  return {std::abs(result.model.params[FringeModel::kVisibility]),
          result.converged};
}

// ---------------------------------------------------------------------------
// Damped least squares
// ---------------------------------------------------------------------------

namespace detail {

// Cholesky solve of the (n <= 6) normal equations; returns false when the
// matrix is not positive definite.
template <std::size_t N>
inline bool cholesky_solve(std::array<std::array<double, N>, N> a, std::array<double, N>& x,
                           std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      double sum = a[i][j];
      for (std::size_t k = 0; k < j; ++k) sum -= a[i][k] * a[j][k];
      if (i == j) {
        if (!(sum > 0.0)) return false;
        a[i][i] = std::sqrt(sum);
      } else {
        a[i][j] = sum / a[j][j];
      }
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    double sum = x[i];
    for (std::size_t k = 0; k < i; ++k) sum -= a[i][k] * x[k];
    x[i] = sum / a[i][i];
  }
  for (std::size_t i = n; i-- > 0;) {
    double sum = x[i];
    for (std::size_t k = i + 1; k < n; ++k) sum -= a[k][i] * x[k];
    x[i] = sum / a[i][i];
  }
  return true;
}

template <std::size_t N>
inline bool invert_spd(const std::array<std::array<double, N>, N>& a,
                       std::array<std::array<double, N>, N>& inv, std::size_t n) {
  for (std::size_t col = 0; col < n; ++col) {
    std::array<double, N> e{};
    e[col] = 1.0;
    auto copy = a;
    if (!cholesky_solve<N>(copy, e, n)) return false;
    for (std::size_t row = 0; row < n; ++row) inv[row][col] = e[row];
  }
  return true;
}

}  // namespace detail

/// Least-squares fit of the fringe model to (xs, ys) by a damped (Levenberg
/// style) iteration with the analytic Jacobian. model.params is the starting
/// point; fixed parameters are never touched. Stops when the relative
/// objective decrease falls below 1e-10 or after 500 iterations; bounds are
/// enforced by projection after each step. Throws degenerate_fit_error when
/// the normal equations are singular (an unidentifiable parameter);
/// non-convergence is a flagged result, not an exception.
inline FitResult fit_trace(std::span<const double> xs, std::span<const double> ys,
                           FringeModel model) {
  constexpr std::size_t P = FringeModel::kCount;
  const std::size_t n = xs.size();
  if (ys.size() != n) throw config_error("fit: x and y lengths differ");
  const std::size_t nfree = model.free_count();
  if (nfree == 0) throw config_error("fit: no free parameters");
  if (n < 2 * nfree) throw config_error("fit needs at least 2x more points than free parameters");

  // Scale-aware lower bounds for the projection.
  double y_scale = 0.0;
  for (double y : ys) y_scale = std::max(y_scale, std::abs(y));
  const double span = std::abs(xs[n - 1] - xs[0]);
  const double baseline_floor = (y_scale > 0.0 ? y_scale : 1.0) * 1e-12;
  const double sigma_floor = (span > 0.0 ? span : 1.0) * 1e-12;

  auto clamp = [&](FringeModel& m) {
    auto& p = m.params;
    p[FringeModel::kBaseline] = std::max(p[FringeModel::kBaseline], baseline_floor);
    p[FringeModel::kVisibility] = std::clamp(p[FringeModel::kVisibility], -1.0, 1.0);
    p[FringeModel::kWidth] = std::max(p[FringeModel::kWidth], sigma_floor);
    p[FringeModel::kWavenumber] = std::max(p[FringeModel::kWavenumber], 0.0);
  };
  auto rss_of = [&](const FringeModel& m) {
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double r = ys[i] - m(xs[i]);
      sum += r * r;
    }
    return sum;
  };

  std::array<std::size_t, P> free_idx{};
  std::size_t nf = 0;
  for (std::size_t j = 0; j < P; ++j)
    if (model.free_mask[j]) free_idx[nf++] = j;

  clamp(model);
  FitResult result;
  result.model = model;
  double rss = rss_of(model);
  double damping = 1e-3;
  bool converged = false;
  int iter = 0;

  std::array<std::array<double, P>, P> normal{};
  std::array<double, P> rhs{};

  for (; iter < 500 && !converged; ++iter) {
    for (auto& row : normal) row.fill(0.0);
    rhs.fill(0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto g = model.gradient(xs[i]);
      const double r = ys[i] - model(xs[i]);
      for (std::size_t a = 0; a < nf; ++a) {
        rhs[a] += g[free_idx[a]] * r;
        for (std::size_t b = 0; b <= a; ++b)
          normal[a][b] += g[free_idx[a]] * g[free_idx[b]];
      }
    }
    for (std::size_t a = 0; a < nf; ++a)
      for (std::size_t b = a + 1; b < nf; ++b) normal[a][b] = normal[b][a];

    double max_diag = 0.0;
    for (std::size_t a = 0; a < nf; ++a) max_diag = std::max(max_diag, normal[a][a]);
    for (std::size_t a = 0; a < nf; ++a) {
      if (!(normal[a][a] > max_diag * 1e-28)) {
        throw degenerate_fit_error(
            std::string("normal equations singular: parameter '") +
            FringeModel::names[free_idx[a]] + "' is unidentifiable on this trace");
      }
    }

    // Marquardt column scaling: unit diagonal keeps the solve well
    // conditioned despite wildly different parameter magnitudes.
    std::array<double, P> scale{};
    for (std::size_t a = 0; a < nf; ++a) scale[a] = 1.0 / std::sqrt(normal[a][a]);
    std::array<std::array<double, P>, P> scaled{};
    for (std::size_t a = 0; a < nf; ++a)
      for (std::size_t b = 0; b < nf; ++b) scaled[a][b] = normal[a][b] * scale[a] * scale[b];

    bool accepted = false;
    double new_rss = rss;
    FringeModel candidate = model;
    for (int tries = 0; tries < 40; ++tries) {
      auto damped = scaled;
      for (std::size_t a = 0; a < nf; ++a) damped[a][a] += damping;
      std::array<double, P> step{};
      for (std::size_t a = 0; a < nf; ++a) step[a] = rhs[a] * scale[a];
      if (!detail::cholesky_solve<P>(damped, step, nf)) {
        damping *= 10.0;
        continue;
      }
      candidate = model;
      for (std::size_t a = 0; a < nf; ++a)
        candidate.params[free_idx[a]] += step[a] * scale[a];
      clamp(candidate);
      new_rss = rss_of(candidate);
      if (new_rss <= rss) {
        accepted = true;
        damping = std::max(damping * 0.3, 1e-12);
        break;
      }
      damping *= 10.0;
      if (damping > 1e14) break;
    }
    if (!accepted) break;  // damping exhausted; report the flagged result

    const double decrease = rss - new_rss;
    model = candidate;
    rss = new_rss;
    if (decrease <= 1e-10 * std::max(rss, std::numeric_limits<double>::min()))
      converged = true;
  }

  result.model = model;
  result.rss = rss;
  result.converged = converged;
  result.iterations = iter;

  // Standard errors from the local quadratic approximation of the objective,
  // computed on the column-scaled normal matrix.
  if (n > nfree) {
    for (auto& row : normal) row.fill(0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto g = model.gradient(xs[i]);
      for (std::size_t a = 0; a < nf; ++a)
        for (std::size_t b = 0; b <= a; ++b)
          normal[a][b] += g[free_idx[a]] * g[free_idx[b]];
    }
    for (std::size_t a = 0; a < nf; ++a)
      for (std::size_t b = a + 1; b < nf; ++b) normal[a][b] = normal[b][a];
    bool positive = true;
    std::array<double, P> scale{};
    for (std::size_t a = 0; a < nf; ++a) {
      if (!(normal[a][a] > 0.0)) {
        positive = false;
        break;
      }
      scale[a] = 1.0 / std::sqrt(normal[a][a]);
    }
    if (positive) {
      std::array<std::array<double, P>, P> scaled{};
      for (std::size_t a = 0; a < nf; ++a)
        for (std::size_t b = 0; b < nf; ++b) scaled[a][b] = normal[a][b] * scale[a] * scale[b];
      std::array<std::array<double, P>, P> cov{};
      if (detail::invert_spd<P>(scaled, cov, nf)) {
        const double variance = rss / double(n - nfree);
        for (std::size_t a = 0; a < nf; ++a)
          result.std_errors[free_idx[a]] =
              std::sqrt(std::max(cov[a][a] * variance, 0.0)) * scale[a];
        result.errors_reliable = converged;
      }
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Gradient verification
// ---------------------------------------------------------------------------

/// Compares the analytic model gradient against central finite differences
/// (relative step 1e-6) over the probe points and returns the maximum
/// relative discrepancy.
inline double finite_difference_check(const FringeModel& model, std::span<const double> xs) {
  if (!model.in_bounds()) throw config_error("finite-difference check needs an interior point");
  double worst = 0.0;
  for (double x : xs) {
    const auto analytic = model.gradient(x);
    for (std::size_t j = 0; j < FringeModel::kCount; ++j) {
      const double p = model.params[j];
      const double h = 1e-6 * std::max(std::abs(p), 1.0);
      FringeModel lo = model, hi = model;
      lo.params[j] = p - h;
      hi.params[j] = p + h;
      const double fd = (hi(x) - lo(x)) / (2.0 * h);
      const double denom = std::max({1.0, std::abs(fd), std::abs(analytic[j])});
      worst = std::max(worst, std::abs(fd - analytic[j]) / denom);
    }
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Initialization heuristics
// ---------------------------------------------------------------------------

/// Fringe period from the spacing of same-direction (rising) zero crossings
/// of the mean-subtracted trace. Needs at least three rising crossings.
inline double estimate_fringe_period(std::span<const double> xs, std::span<const double> ys) {
  const std::size_t n = xs.size();
  if (ys.size() != n || n < 4) throw data_error("period estimate needs a sampled trace");
  double mean = 0.0;
  for (double y : ys) mean += y;
  mean /= double(n);
  std::vector<double> rising;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const double y0 = ys[i] - mean, y1 = ys[i + 1] - mean;
    if (y0 < 0.0 && y1 >= 0.0)
      rising.push_back(xs[i] - y0 * (xs[i + 1] - xs[i]) / (y1 - y0));
  }
  if (rising.size() < 3) throw data_error("too few fringes to estimate a period");
  return (rising.back() - rising.front()) / double(rising.size() - 1);
}

/// Dominant wavenumber of the mean-subtracted trace from a dense scan of the
/// discrete spectrum (4x zero padding), used to seed fringe fits.
inline double dominant_wavenumber(std::span<const double> xs, std::span<const double> ys) {
  const std::size_t n = xs.size();
  if (ys.size() != n || n < 4) throw data_error("wavenumber estimate needs a sampled trace");
  double mean = 0.0;
  for (double y : ys) mean += y;
  mean /= double(n);
  const double span = xs[n - 1] - xs[0];
  const double step = span / double(n - 1);
  if (!(span > 0.0)) throw data_error("wavenumber estimate needs increasing x");
  const double k_min = 2.0 * std::numbers::pi / (2.0 * span);
  const double k_max = std::numbers::pi / step;
  const std::size_t m = 4 * n;
  double best_k = 0.0, best_power = -1.0;
  for (std::size_t j = 0; j < m; ++j) {
    const double k = k_min + (k_max - k_min) * double(j) / double(m - 1);
    std::complex<double> acc{0.0, 0.0};
    for (std::size_t i = 0; i < n; ++i) {
      const double ph = k * xs[i];
      acc += (ys[i] - mean) * std::complex<double>(std::cos(ph), -std::sin(ph));
    }
    const double power = std::norm(acc);
    if (power > best_power) {
      best_power = power;
      best_k = k;
    }
  }
  return best_k;
}

/// Deterministic starting point: B from the trace mean, V and x0 from the
/// strongest deviation, sigma from the half width at half depth, k from the
/// dominant spectral peak (when free). Fixed parameters keep their template
/// values.
inline FringeModel initial_guess(std::span<const double> xs, std::span<const double> ys,
                                 FringeModel model) {
  const std::size_t n = xs.size();
  if (ys.size() != n || n < 4) throw data_error("initial guess needs a sampled trace");
  double mean = 0.0;
  for (double y : ys) mean += y;
  mean /= double(n);

  std::size_t extremum = 0;
  for (std::size_t i = 1; i < n; ++i)
    if (std::abs(ys[i] - mean) > std::abs(ys[extremum] - mean)) extremum = i;

  using M = FringeModel;
  if (model.free_mask[M::kBaseline])
    model.params[M::kBaseline] = mean > 0.0 ? mean : 1.0;
  if (model.free_mask[M::kVisibility])
    model.params[M::kVisibility] = mean > 0.0 ? std::clamp((ys[extremum] - mean) / mean, -1.0, 1.0) : 0.0;
  if (model.free_mask[M::kCenter]) model.params[M::kCenter] = xs[extremum];

  if (model.free_mask[M::kWidth]) {
    const double half = std::abs(ys[extremum] - mean) / 2.0;
    double hwhm = std::abs(xs[n - 1] - xs[0]) / 4.0;  // fallback
    for (std::size_t i = extremum + 1; i < n; ++i) {
      if (std::abs(ys[i] - mean) < half) {
        hwhm = std::abs(xs[i] - xs[extremum]);
        break;
      }
    }
    for (std::size_t i = extremum; i-- > 0;) {
      if (std::abs(ys[i] - mean) < half) {
        hwhm = std::min(hwhm, std::abs(xs[extremum] - xs[i]));
        break;
      }
    }
    model.params[M::kWidth] = std::max(hwhm / std::sqrt(2.0 * std::numbers::ln2), 1e-300);
  }
  if (model.free_mask[M::kWavenumber])
    model.params[M::kWavenumber] = dominant_wavenumber(xs, ys);
  if (model.free_mask[M::kPhase]) model.params[M::kPhase] = 0.0;
  return model;
}

}  // namespace biphoton
