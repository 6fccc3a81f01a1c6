// Copyright 2026 The qrep Authors
// SPDX-License-Identifier: Apache-2.0

#include "qrep/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "qrep/error.hpp"

namespace qrep {

void CalibConfig::validate() const {
  if (bits < 2 || bits > 30) throw ConfigError("calibration bit-width must be in [2, 30]");
  if (!(percentile > 50.0 && percentile <= 100.0)) {
    throw ConfigError("percentile must lie in (50, 100], got " + std::to_string(percentile));
  }
  if (scheme != Scheme::Uniform && granularity != Granularity::PerLayer) {
    throw ConfigError("log schemes are calibrated per layer");
  }
}

AffineParams compute_affine_params(double lo, double hi, int bits) {
  if (!std::isfinite(lo) || !std::isfinite(hi)) throw DomainError("affine bounds must be finite");
  if (hi < lo) throw DomainError("upper bound " + std::to_string(hi) + " below lower bound " + std::to_string(lo));
  if (bits < 2 || bits > 30) throw DomainError("bit-width must be in [2, 30]");
  const double max_code = std::ldexp(1.0, bits) - 1.0;
  double s = (hi - lo) / max_code;
  if (!(s > 0.0)) s = kDegenerateScale;
  const double z = std::clamp(round_half_even(-lo / s), 0.0, max_code);
  return {s, static_cast<std::int32_t>(z)};
}

namespace {

double interpolate(const std::vector<double>& sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1) / 100.0;
  const auto below = static_cast<std::size_t>(std::floor(pos));
  const std::size_t above = std::min(below + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(below);
  if (frac == 0.0) return sorted[below];
  return sorted[below] + frac * (sorted[above] - sorted[below]);
}

}  // namespace

Bounds percentile_bounds(std::span<const double> values, double p) {
  if (values.empty()) throw DomainError("percentile_bounds: empty input");
  if (!(p >= 50.0 && p <= 100.0)) throw DomainError("percentile must lie in [50, 100]");
  if (p == 100.0) {
    auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    return {*lo, *hi};
  }
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  return {interpolate(sorted, 100.0 - p), interpolate(sorted, p)};
}

Bounds percentile_bounds(const Tensor& x, double p) { return percentile_bounds(x.data(), p); }

QuantParams calibrate_tensor(const Tensor& x, const CalibConfig& cfg, std::optional<std::size_t> channel_axis) {
  cfg.validate();
  if (x.empty()) throw DomainError("calibrate_tensor: empty tensor");
  if (cfg.scheme != Scheme::Uniform) {
    for (double v : x.values()) {
      if (v < 0.0) throw DomainError("log-scheme calibration requires nonnegative data");
    }
    const double s = percentile_bounds(x, cfg.percentile).hi;
    return log_params(cfg.scheme, s > 0.0 ? s : kDegenerateScale, cfg.bits);
  }
  if (cfg.granularity == Granularity::PerLayer) {
    const Bounds b = percentile_bounds(x, cfg.percentile);
    const AffineParams ap = compute_affine_params(b.lo, b.hi, cfg.bits);
    return uniform_params(ap.scale, ap.zero_point, cfg.bits);
  }
  if (!channel_axis) throw ConfigError("per-channel calibration needs a channel axis");
  const std::size_t axis = *channel_axis;
  const std::size_t channels = x.dim(axis);
  std::size_t inner = 1;
  for (std::size_t a = axis + 1; a < x.rank(); ++a) inner *= x.dim(a);
  std::vector<std::vector<double>> slices(channels);
  for (auto& s : slices) s.reserve(x.size() / channels);
  for (std::size_t i = 0; i < x.size(); ++i) slices[(i / inner) % channels].push_back(x[i]);

  std::vector<double> scales(channels);
  std::vector<std::int32_t> zeros(channels);
  for (std::size_t c = 0; c < channels; ++c) {
    const Bounds b = percentile_bounds(slices[c], cfg.percentile);
    const AffineParams ap = compute_affine_params(b.lo, b.hi, cfg.bits);
    scales[c] = ap.scale;
    zeros[c] = ap.zero_point;
  }
  return uniform_channel_params(std::move(scales), std::move(zeros), cfg.bits, axis);
}

}  // namespace qrep
