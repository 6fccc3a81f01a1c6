// Copyright 2026 The qrep Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "qrep/tensor.hpp"
#include "qrep/vit.hpp"

namespace qrep {

/// Knobs for synthetic models whose activations reproduce two pathologies:
/// post-LayerNorm channels with very different ranges, and post-Softmax
/// values piled up near zero with a few large entries.
struct SynthSpec {
  std::uint64_t seed = 0;
  /// Target spread of per-channel post-LayerNorm ranges (max - min).
  double channel_range_min = 3.94;
  double channel_range_mean = 7.11;
  double channel_range_max = 22.2;
  /// Multiplies the attention logits.
  double attention_sharpness = 0.35;
  /// Standard deviation of generated token embeddings.
  double token_scale = 1.0;
  std::size_t batch = 32;

  void validate() const;
};

/// Per-channel range targets: min and max are attained exactly and the
/// arithmetic mean matches `channel_range_mean`. Order is shuffled by
/// (seed, salt); each LayerNorm in a model uses its own salt.
std::vector<double> channel_range_targets(std::size_t channels, const SynthSpec& spec, std::uint64_t salt = 0);

/// Gaussian weights; γ of each LayerNorm is fitted so that the LayerNorm
/// output channels hit channel_range_targets on a reference batch drawn from
/// a seed stream disjoint from gen_activations.
Model gen_model(const ModelConfig& cfg, const SynthSpec& spec);

/// [n×N×D] token embeddings ~ N(0, token_scale²). Sample i of the result is
/// stream element first+i and depends only on (seed, first+i), so disjoint
/// index ranges give independent calibration and evaluation sets.
Tensor gen_activations(const ModelConfig& cfg, const SynthSpec& spec, std::size_t n, std::size_t first = 0);

/// Per-channel max-min over rows of an [M×D] tensor.
std::vector<double> channel_ranges(const Tensor& x);

}  // namespace qrep
