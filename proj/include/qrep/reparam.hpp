// Copyright 2026 The qrep Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "qrep/quantizers.hpp"
#include "qrep/tensor.hpp"

namespace qrep {

/// Converts a per-channel uniform quantizer of post-LayerNorm activations into
/// a single per-layer (s̃, z̃) pair. Channel d is described by the variation
/// factors r1[d] = s[d]/s̃ and r2[d] = z[d] - z̃.
struct ReparamRecord {
  std::vector<double> r1;
  std::vector<std::int32_t> r2;
  double target_scale = 1.0;
  std::int32_t target_zero = 0;
  QuantParams source;

  std::size_t channels() const noexcept { return r1.size(); }
  /// Lengths agree with the source quantizer and every r1 is positive.
  void validate() const;
  /// The per-layer quantizer (s̃, z̃) for the adjusted activations.
  QuantParams layer_params() const;

  bool operator==(const ReparamRecord&) const = default;
};

/// s̃ = mean(s), z̃ = round(mean(z)) half-to-even.
ReparamRecord build_reparam_record(const QuantParams& channel_params);

struct AffineFactors {
  Tensor gamma;
  Tensor beta;
};

/// γ̃ = γ / r1, β̃ = (β + s⊙r2) / r1. The LayerNorm then emits
/// X̃' = (X' + s⊙r2) / r1.
AffineFactors apply_affine_adjustment(const Tensor& gamma, const Tensor& beta, const ReparamRecord& rec);

struct LinearParams {
  Tensor weight;  // [D×M]
  Tensor bias;    // [M]
};

/// W̃[d,j] = r1[d]·W[d,j], b̃[j] = b[j] - Σ_d s[d]·r2[d]·W[d,j], so that
/// X̃'W̃ + b̃ == X'W + b.
LinearParams apply_weight_compensation(const Tensor& weight, const Tensor& bias, const ReparamRecord& rec);

struct LayerNormSiteResult {
  AffineFactors layernorm;
  LinearParams next;
  QuantParams layer_params;
  ReparamRecord record;
  /// The compensated weights no longer match their old quantizer; their
  /// per-output-channel parameters have to be computed again.
  bool weights_need_recalibration = true;
};

LayerNormSiteResult reparameterize_layernorm_site(const AffineFactors& layernorm, const LinearParams& next,
                                                  const QuantParams& channel_params);

/// Per-code dequantization scale s̃ = s·[parity(code)·(√2 - 1) + 1].
Tensor base_change_scale(double scale, const IntTensor& codes);

}  // namespace qrep
