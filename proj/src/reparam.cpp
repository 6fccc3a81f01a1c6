// Copyright 2026 The qrep Authors
// SPDX-License-Identifier: Apache-2.0

#include "qrep/reparam.hpp"

#include <numeric>

#include "qrep/error.hpp"

namespace qrep {

void ReparamRecord::validate() const {
  const std::size_t d = r1.size();
  if (d == 0) throw ConfigError("reparam record has no channels");
  if (r2.size() != d || source.scale.size() != d) {
    throw DimensionError("reparam record lengths disagree: r1=" + std::to_string(d) +
                         " r2=" + std::to_string(r2.size()) + " s=" + std::to_string(source.scale.size()));
  }
  for (double r : r1) {
    if (!(r > 0.0)) throw DomainError("variation factor r1 must be positive");
  }
  if (!(target_scale > 0.0)) throw DomainError("target scale must be positive");
}

QuantParams ReparamRecord::layer_params() const {
  return uniform_params(target_scale, target_zero, source.bits);
}

ReparamRecord build_reparam_record(const QuantParams& channel_params) {
  channel_params.validate();
  if (channel_params.scheme != Scheme::Uniform) {
    throw ConfigError("scale reparameterization needs a uniform quantizer");
  }
  const std::size_t d = channel_params.channels();
  if (d == 0) throw ConfigError("scale reparameterization needs at least one channel");

  ReparamRecord rec;
  rec.source = channel_params;
  const double n = static_cast<double>(d);
  rec.target_scale = std::accumulate(channel_params.scale.begin(), channel_params.scale.end(), 0.0) / n;
  double zero_sum = 0.0;
  for (std::int32_t z : channel_params.zero_point) zero_sum += z;
  rec.target_zero = static_cast<std::int32_t>(round_half_even(zero_sum / n));

  rec.r1.resize(d);
  rec.r2.resize(d);
  for (std::size_t c = 0; c < d; ++c) {
    rec.r1[c] = channel_params.scale[c] / rec.target_scale;
    rec.r2[c] = channel_params.zero_point[c] - rec.target_zero;
  }
  return rec;
}

AffineFactors apply_affine_adjustment(const Tensor& gamma, const Tensor& beta, const ReparamRecord& rec) {
  rec.validate();
  const std::size_t d = rec.channels();
  if (gamma.size() != d || beta.size() != d) {
    throw DimensionError("affine adjustment: gamma/beta length " + std::to_string(gamma.size()) + "/" +
                         std::to_string(beta.size()) + " vs " + std::to_string(d) + " channels");
  }
  AffineFactors out{gamma, beta};
  for (std::size_t c = 0; c < d; ++c) {
    out.gamma[c] = gamma[c] / rec.r1[c];
    out.beta[c] = (beta[c] + rec.source.scale[c] * rec.r2[c]) / rec.r1[c];
  }
  return out;
}

LinearParams apply_weight_compensation(const Tensor& weight, const Tensor& bias, const ReparamRecord& rec) {
  rec.validate();
  if (weight.rank() != 2 || weight.dim(0) != rec.channels()) {
    throw DimensionError("weight compensation: weight " + shape_to_string(weight.shape()) +
                         " does not have " + std::to_string(rec.channels()) + " input rows");
  }
  const std::size_t rows = weight.dim(0), cols = weight.dim(1);
  if (bias.size() != cols) {
    throw DimensionError("weight compensation: bias length " + std::to_string(bias.size()) + " vs " +
                         std::to_string(cols) + " outputs");
  }
  LinearParams out{weight, bias};
  for (std::size_t j = 0; j < cols; ++j) {
    double shift = 0.0;
    for (std::size_t d = 0; d < rows; ++d) shift += rec.source.scale[d] * rec.r2[d] * weight.at(d, j);
    out.bias[j] = bias[j] - shift;
  }
  for (std::size_t d = 0; d < rows; ++d)
    for (std::size_t j = 0; j < cols; ++j) out.weight.at(d, j) = rec.r1[d] * weight.at(d, j);
  return out;
}

LayerNormSiteResult reparameterize_layernorm_site(const AffineFactors& layernorm, const LinearParams& next,
                                                  const QuantParams& channel_params) {
  if (channel_params.granularity != Granularity::PerChannel) {
    throw ConfigError("layernorm reparameterization expects a per-channel quantizer");
  }
  LayerNormSiteResult result;
  result.record = build_reparam_record(channel_params);
  result.layernorm = apply_affine_adjustment(layernorm.gamma, layernorm.beta, result.record);
  result.next = apply_weight_compensation(next.weight, next.bias, result.record);
  result.layer_params = result.record.layer_params();
  return result;
}

Tensor base_change_scale(double scale, const IntTensor& codes) {
  Tensor out(codes.shape());
  for (std::size_t i = 0; i < codes.size(); ++i) out[i] = parity_merged_scale(scale, codes[i]);
  return out;
}

}  // namespace qrep
