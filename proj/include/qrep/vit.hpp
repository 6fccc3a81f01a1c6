// Copyright 2026 The qrep Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "qrep/quantizers.hpp"
#include "qrep/tensor.hpp"

namespace qrep {

struct ModelConfig {
  std::size_t tokens = 16;     // N
  std::size_t dim = 64;        // D
  std::size_t heads = 4;       // h
  std::size_t head_dim = 16;   // D_h
  std::size_t mlp_dim = 256;   // D_f
  std::size_t blocks = 2;      // L
  double eps = 1e-5;

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

/// Parameters of one pre-norm transformer block. Weights are stored
/// input-major ([in×out]) so a layer computes x·W + b. The qkv projection
/// lays out all query heads, then all key heads, then all value heads.
struct BlockWeights {
  Tensor gamma1, beta1;   // [D]
  Tensor w_qkv, b_qkv;    // [D×3hD_h], [3hD_h]
  Tensor w_o, b_o;        // [hD_h×D], [D]
  Tensor gamma2, beta2;   // [D]
  Tensor w_1, b_1;        // [D×D_f], [D_f]
  Tensor w_2, b_2;        // [D_f×D], [D]

  bool operator==(const BlockWeights&) const = default;
};

struct Model {
  ModelConfig config;
  std::vector<BlockWeights> blocks;

  /// Checks every tensor against the config.
  void validate() const;
  bool operator==(const Model&) const = default;
};

/// Every matmul input in a block. Activation sites come first.
enum class Site {
  Ln1Out,     // X' into W_qkv
  Query,      // Q operand of Q·Kᵀ
  Key,        // K operand of Q·Kᵀ
  Attention,  // post-Softmax A, operand of A·V
  Value,      // V operand of A·V
  AttnOut,    // concatenated heads into W_o
  Ln2Out,     // Y' into W_1
  GeluOut,    // GELU output into W_2
  WeightQkv,
  WeightO,
  Weight1,
  Weight2,
};
inline constexpr std::size_t kSiteCount = 12;
inline constexpr std::array<Site, kSiteCount> kAllSites = {
    Site::Ln1Out, Site::Query, Site::Key,       Site::Attention, Site::Value,   Site::AttnOut,
    Site::Ln2Out, Site::GeluOut, Site::WeightQkv, Site::WeightO, Site::Weight1, Site::Weight2};

std::string site_name(Site site);
Site site_from_name(const std::string& name);
bool is_weight_site(Site site) noexcept;
/// "block<l>.<site>"
std::string site_key(std::size_t block, Site site);

/// Called at each site with the tensor entering the matmul and the tensor
/// actually used (equal under bypass). The attention site sees all heads
/// stacked as [h×N×N].
using SiteObserver = std::function<void(std::size_t block, Site site, const Tensor& input, const Tensor& used)>;

/// One quantizer per site; an empty entry bypasses quantization.
struct BlockHooks {
  std::array<std::optional<QuantParams>, kSiteCount> sites;

  std::optional<QuantParams>& operator[](Site s) { return sites[static_cast<std::size_t>(s)]; }
  const std::optional<QuantParams>& operator[](Site s) const { return sites[static_cast<std::size_t>(s)]; }
  bool operator==(const BlockHooks&) const = default;
};

struct QuantHooks {
  std::vector<BlockHooks> blocks;
  SiteObserver observer;

  static QuantHooks bypass(std::size_t blocks);
};

/// Per-row normalization with population variance, then ⊙γ + β.
Tensor layernorm_forward(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps);

Tensor msa_forward(const Tensor& x, const BlockWeights& w, const ModelConfig& cfg, const QuantHooks& hooks,
                   std::size_t block = 0);
Tensor mlp_forward(const Tensor& y, const BlockWeights& w, const ModelConfig& cfg, const QuantHooks& hooks,
                   std::size_t block = 0);
/// Y = MSA(LN1(X)) + X; out = MLP(LN2(Y)) + Y.
Tensor block_forward(const Tensor& x, const BlockWeights& w, const ModelConfig& cfg, const QuantHooks& hooks,
                     std::size_t block = 0);
/// Runs all blocks on one [N×D] sample.
Tensor model_forward(const Model& model, const Tensor& x, const QuantHooks& hooks);
/// Runs all blocks on each sample of an [n×N×D] batch.
Tensor model_forward_batch(const Model& model, const Tensor& batch, const QuantHooks& hooks);

}  // namespace qrep
