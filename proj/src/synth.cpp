// Copyright 2026 The qrep Authors
// SPDX-License-Identifier: Apache-2.0

#include "qrep/synth.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "qrep/error.hpp"

namespace qrep {

namespace {

// Disjoint seed streams.
constexpr std::uint64_t kStreamActivations = 1;
constexpr std::uint64_t kStreamWeights = 2;
constexpr std::uint64_t kStreamReference = 3;
constexpr std::uint64_t kStreamShuffle = 4;
constexpr std::size_t kReferenceSamples = 64;

std::mt19937_64 make_engine(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(index),
                    static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

Tensor gaussian(Shape shape, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = dist(rng);
  return t;
}

// Mean of u^k over the evenly spaced grid u_i = i/(n-1).
double grid_power_mean(std::size_t n, double k) {
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) total += std::pow(static_cast<double>(i) / static_cast<double>(n - 1), k);
  return total / static_cast<double>(n);
}

// Layernorm output without the affine part, all rows of a batch.
Tensor normalized(const Tensor& rows, double eps) {
  const std::size_t d = rows.dim(1);
  return layernorm_forward(rows, Tensor({d}, 1.0), Tensor({d}, 0.0), eps);
}

// γ_c = target_c / (κ·σ_c). σ_c is the channel's standard deviation on the
// reference rows and κ the range-to-σ ratio pooled over all channels. A
// per-channel max-min would carry the sampling noise of two extremes into γ;
// σ_c and the pooled κ are nearly noise-free, so the only spread left in a
// later measurement is that measurement's own.
Tensor fit_gamma(const Tensor& rows, const std::vector<double>& targets, double eps) {
  const Tensor z = normalized(rows, eps);
  const std::size_t n = z.dim(0), d = z.dim(1);
  const std::vector<double> ranges = channel_ranges(z);
  std::vector<double> sigma(d, 0.0);
  for (std::size_t c = 0; c < d; ++c) {
    double mean = 0.0;
    for (std::size_t r = 0; r < n; ++r) mean += z.at(r, c);
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t r = 0; r < n; ++r) var += (z.at(r, c) - mean) * (z.at(r, c) - mean);
    sigma[c] = std::sqrt(var / static_cast<double>(n));
  }
  double kappa = 0.0;
  std::size_t used = 0;
  for (std::size_t c = 0; c < d; ++c) {
    if (sigma[c] > 0.0) {
      kappa += ranges[c] / sigma[c];
      ++used;
    }
  }
  kappa = used > 0 ? kappa / static_cast<double>(used) : 1.0;
  Tensor gamma({d});
  for (std::size_t c = 0; c < d; ++c) gamma[c] = sigma[c] > 0.0 ? targets[c] / (kappa * sigma[c]) : 1.0;
  return gamma;
}

Tensor fit_beta(const std::vector<double>& targets, std::mt19937_64& rng) {
  // Offsets proportional to the channel's own range move channel centres
  // apart as well, so per-channel zero points differ too.
  std::normal_distribution<double> dist(0.0, 0.1);
  Tensor beta({targets.size()});
  for (std::size_t c = 0; c < targets.size(); ++c) beta[c] = dist(rng) * targets[c];
  return beta;
}

}  // namespace

void SynthSpec::validate() const {
  if (!(channel_range_min > 0.0)) throw ConfigError("channel_range_min must be positive");
  if (!(channel_range_min <= channel_range_mean && channel_range_mean <= channel_range_max)) {
    throw ConfigError("channel ranges must satisfy min <= mean <= max");
  }
  if (!(attention_sharpness > 0.0)) throw ConfigError("attention_sharpness must be positive");
  if (!(token_scale > 0.0)) throw ConfigError("token_scale must be positive");
  if (batch == 0) throw ConfigError("batch must be at least 1");
}

std::vector<double> channel_range_targets(std::size_t channels, const SynthSpec& spec, std::uint64_t salt) {
  spec.validate();
  const double lo = spec.channel_range_min, hi = spec.channel_range_max;
  std::vector<double> targets(channels, lo);
  if (channels == 1 || hi == lo) {
    std::fill(targets.begin(), targets.end(), channels == 1 ? spec.channel_range_mean : lo);
    return targets;
  }
  // lo + (hi-lo)·u^k with k solved so the grid mean hits the target mean;
  // the mean of u^k falls monotonically in k.
  const double want = (spec.channel_range_mean - lo) / (hi - lo);
  double k_lo = 1e-6, k_hi = 1e6;
  for (int it = 0; it < 200; ++it) {
    const double mid = std::sqrt(k_lo * k_hi);
    if (grid_power_mean(channels, mid) > want) {
      k_lo = mid;
    } else {
      k_hi = mid;
    }
  }
  const double k = std::sqrt(k_lo * k_hi);
  for (std::size_t i = 0; i < channels; ++i) {
    targets[i] = lo + (hi - lo) * std::pow(static_cast<double>(i) / static_cast<double>(channels - 1), k);
  }
  std::mt19937_64 rng = make_engine(spec.seed, kStreamShuffle, salt);
  std::shuffle(targets.begin(), targets.end(), rng);
  return targets;
}

std::vector<double> channel_ranges(const Tensor& x) {
  if (x.rank() != 2) throw DimensionError("channel_ranges: expected rank-2 tensor");
  std::vector<double> lo(x.dim(1), INFINITY), hi(x.dim(1), -INFINITY);
  for (std::size_t r = 0; r < x.dim(0); ++r) {
    for (std::size_t c = 0; c < x.dim(1); ++c) {
      lo[c] = std::min(lo[c], x.at(r, c));
      hi[c] = std::max(hi[c], x.at(r, c));
    }
  }
  for (std::size_t c = 0; c < lo.size(); ++c) hi[c] -= lo[c];
  return hi;
}

Tensor gen_activations(const ModelConfig& cfg, const SynthSpec& spec, std::size_t n, std::size_t first) {
  cfg.validate();
  spec.validate();
  if (n == 0) throw ConfigError("gen_activations: need at least one sample");
  std::vector<double> data;
  data.reserve(n * cfg.tokens * cfg.dim);
  for (std::size_t i = 0; i < n; ++i) {
    std::mt19937_64 rng = make_engine(spec.seed, kStreamActivations, first + i);
    const Tensor sample = gaussian({cfg.tokens, cfg.dim}, spec.token_scale, rng);
    data.insert(data.end(), sample.values().begin(), sample.values().end());
  }
  Tensor out({n, cfg.tokens, cfg.dim}, std::move(data));
  require_finite(out, "gen_activations");
  return out;
}

Model gen_model(const ModelConfig& cfg, const SynthSpec& spec) {
  cfg.validate();
  spec.validate();
  Model model{cfg, {}};
  const std::size_t d = cfg.dim, inner = cfg.heads * cfg.head_dim, f = cfg.mlp_dim;
  const double in_std = 1.0 / std::sqrt(static_cast<double>(d));

  // Reference activations: like gen_activations, but a separate stream.
  std::vector<Tensor> ref;
  for (std::size_t i = 0; i < kReferenceSamples; ++i) {
    std::mt19937_64 rng = make_engine(spec.seed, kStreamReference, i);
    ref.push_back(gaussian({cfg.tokens, d}, spec.token_scale, rng));
  }
  const QuantHooks bypass = QuantHooks::bypass(cfg.blocks);

  for (std::size_t l = 0; l < cfg.blocks; ++l) {
    std::mt19937_64 rng = make_engine(spec.seed, kStreamWeights, l);
    BlockWeights w;
    const std::vector<double> targets1 = channel_range_targets(d, spec, 2 * l);
    w.gamma1 = fit_gamma(concat_rows(ref), targets1, cfg.eps);
    w.beta1 = fit_beta(targets1, rng);

    // Queries and keys each carry √sharpness so the logits scale by sharpness.
    const double qk_std = in_std * std::sqrt(spec.attention_sharpness);
    Tensor w_qkv({d, 3 * inner});
    {
      const Tensor q = gaussian({d, inner}, qk_std, rng);
      const Tensor k = gaussian({d, inner}, qk_std, rng);
      const Tensor v = gaussian({d, inner}, in_std, rng);
      const Tensor parts[] = {q, k, v};
      w_qkv = concat_columns(parts);
    }
    w.w_qkv = w_qkv;
    w.b_qkv = gaussian({3 * inner}, 0.02, rng);
    w.w_o = gaussian({inner, d}, 1.0 / std::sqrt(static_cast<double>(inner)) * 0.5, rng);
    w.b_o = gaussian({d}, 0.02, rng);

    // Residual stream after attention, for fitting the second LayerNorm.
    std::vector<Tensor> mid;
    mid.reserve(ref.size());
    w.gamma2 = Tensor({d}, 1.0);
    w.beta2 = Tensor({d}, 0.0);
    for (const Tensor& x : ref) {
      mid.push_back(add(msa_forward(layernorm_forward(x, w.gamma1, w.beta1, cfg.eps), w, cfg, bypass, l), x));
    }
    const std::vector<double> targets2 = channel_range_targets(d, spec, 2 * l + 1);
    w.gamma2 = fit_gamma(concat_rows(mid), targets2, cfg.eps);
    w.beta2 = fit_beta(targets2, rng);

    w.w_1 = gaussian({d, f}, in_std, rng);
    w.b_1 = gaussian({f}, 0.02, rng);
    w.w_2 = gaussian({f, d}, 1.0 / std::sqrt(static_cast<double>(f)) * 0.5, rng);
    w.b_2 = gaussian({d}, 0.02, rng);

    for (Tensor& x : ref) x = block_forward(x, w, cfg, bypass, l);
    model.blocks.push_back(std::move(w));
  }
  model.validate();
  return model;
}

}  // namespace qrep
