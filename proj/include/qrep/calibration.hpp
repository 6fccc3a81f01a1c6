// Copyright 2026 The qrep Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <span>

#include "qrep/quantizers.hpp"
#include "qrep/tensor.hpp"

namespace qrep {

/// Fallback scale for constant tensors (hi == lo).
inline constexpr double kDegenerateScale = 1e-8;
inline constexpr double kDefaultActivationPercentile = 99.99;
inline constexpr double kDefaultWeightPercentile = 100.0;
inline constexpr double kDefaultLogPercentile = 100.0;

struct CalibConfig {
  int bits = 4;
  Granularity granularity = Granularity::PerLayer;
  Scheme scheme = Scheme::Uniform;
  /// Symmetric: bounds are the (100-p)-th and p-th percentiles.
  double percentile = kDefaultActivationPercentile;
  std::size_t samples = 32;

  void validate() const;
};

struct AffineParams {
  double scale = 1.0;
  std::int32_t zero_point = 0;
};

struct Bounds {
  double lo = 0.0;
  double hi = 0.0;
};

/// s = (hi - lo)/(2^b - 1), z = round(-lo/s) clipped into the code range.
AffineParams compute_affine_params(double lo, double hi, int bits);

/// Linear interpolation on the sorted sample (numpy's default). p must lie in
/// [50, 100]; p = 100 yields exact min/max.
Bounds percentile_bounds(std::span<const double> values, double p);
Bounds percentile_bounds(const Tensor& x, double p);

/// Uniform: percentile bounds then affine parameters, per slice along
/// `channel_axis` when the config is PerChannel. Log schemes: scale is the
/// upper percentile bound, no zero point.
QuantParams calibrate_tensor(const Tensor& x, const CalibConfig& cfg,
                             std::optional<std::size_t> channel_axis = std::nullopt);

}  // namespace qrep
