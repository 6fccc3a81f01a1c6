// Copyright 2026 The qrep Authors
// SPDX-License-Identifier: Apache-2.0

#include "qrep/vit.hpp"

#include <cmath>

#include "qrep/error.hpp"

namespace qrep {

void ModelConfig::validate() const {
  if (tokens == 0 || dim == 0 || heads == 0 || head_dim == 0 || mlp_dim == 0 || blocks == 0) {
    throw ConfigError("model dimensions must all be at least 1");
  }
  if (dim != heads * head_dim) {
    throw ConfigError("embedding dim " + std::to_string(dim) + " != heads*head_dim " +
                      std::to_string(heads * head_dim));
  }
  if (!(eps > 0.0)) throw ConfigError("layernorm eps must be positive");
}

namespace {

void expect_shape(const Tensor& t, const Shape& shape, std::size_t block, const char* name) {
  if (t.shape() != shape) {
    throw DimensionError("block" + std::to_string(block) + "." + name + ": expected " + shape_to_string(shape) +
                         ", got " + shape_to_string(t.shape()));
  }
}

}  // namespace

void Model::validate() const {
  config.validate();
  if (blocks.size() != config.blocks) {
    throw ConfigError("model has " + std::to_string(blocks.size()) + " blocks, config says " +
                      std::to_string(config.blocks));
  }
  const std::size_t d = config.dim, inner = config.heads * config.head_dim, f = config.mlp_dim;
  for (std::size_t l = 0; l < blocks.size(); ++l) {
    const BlockWeights& w = blocks[l];
    expect_shape(w.gamma1, {d}, l, "gamma1");
    expect_shape(w.beta1, {d}, l, "beta1");
    expect_shape(w.w_qkv, {d, 3 * inner}, l, "w_qkv");
    expect_shape(w.b_qkv, {3 * inner}, l, "b_qkv");
    expect_shape(w.w_o, {inner, d}, l, "w_o");
    expect_shape(w.b_o, {d}, l, "b_o");
    expect_shape(w.gamma2, {d}, l, "gamma2");
    expect_shape(w.beta2, {d}, l, "beta2");
    expect_shape(w.w_1, {d, f}, l, "w_1");
    expect_shape(w.b_1, {f}, l, "b_1");
    expect_shape(w.w_2, {f, d}, l, "w_2");
    expect_shape(w.b_2, {d}, l, "b_2");
  }
}

std::string site_name(Site site) {
  switch (site) {
    case Site::Ln1Out: return "ln1_out";
    case Site::Query: return "query";
    case Site::Key: return "key";
    case Site::Attention: return "attention";
    case Site::Value: return "value";
    case Site::AttnOut: return "attn_out";
    case Site::Ln2Out: return "ln2_out";
    case Site::GeluOut: return "gelu_out";
    case Site::WeightQkv: return "w_qkv";
    case Site::WeightO: return "w_o";
    case Site::Weight1: return "w_1";
    case Site::Weight2: return "w_2";
  }
  return "?";
}

Site site_from_name(const std::string& name) {
  for (Site s : kAllSites) {
    if (site_name(s) == name) return s;
  }
  throw ConfigError("unknown site '" + name + "'");
}

bool is_weight_site(Site site) noexcept {
  return site == Site::WeightQkv || site == Site::WeightO || site == Site::Weight1 || site == Site::Weight2;
}

std::string site_key(std::size_t block, Site site) {
  return "block" + std::to_string(block) + "." + site_name(site);
}

QuantHooks QuantHooks::bypass(std::size_t blocks) {
  QuantHooks hooks;
  hooks.blocks.resize(blocks);
  return hooks;
}

namespace {

Tensor apply_hook(const Tensor& x, const QuantHooks& hooks, std::size_t block, Site site) {
  const std::optional<QuantParams>* qp = nullptr;
  if (block < hooks.blocks.size()) qp = &hooks.blocks[block][site];
  Tensor used = (qp && qp->has_value()) ? fake_quantize(x, **qp) : x;
  if (hooks.observer) hooks.observer(block, site, x, used);
  return used;
}

}  // namespace

Tensor layernorm_forward(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  if (x.rank() != 2) throw DimensionError("layernorm: expected rank-2 input, got " + shape_to_string(x.shape()));
  const std::size_t rows = x.dim(0), d = x.dim(1);
  if (gamma.size() != d || beta.size() != d) {
    throw DimensionError("layernorm: gamma/beta length does not match " + std::to_string(d) + " features");
  }
  Tensor out(x.shape());
  for (std::size_t n = 0; n < rows; ++n) {
    double mean = 0.0;
    for (std::size_t c = 0; c < d; ++c) mean += x.at(n, c);
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
      const double diff = x.at(n, c) - mean;
      var += diff * diff;
    }
    var /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < d; ++c) out.at(n, c) = (x.at(n, c) - mean) * inv * gamma[c] + beta[c];
  }
  return out;
}

namespace {

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b, const QuantHooks& hooks, std::size_t block,
              Site input_site, Site weight_site) {
  const Tensor xq = apply_hook(x, hooks, block, input_site);
  const Tensor wq = apply_hook(w, hooks, block, weight_site);
  return add_row_vector(matmul(xq, wq), b);
}

void expect_input(const Tensor& x, const ModelConfig& cfg, const char* op) {
  if (x.rank() != 2 || x.dim(1) != cfg.dim) {
    throw DimensionError(std::string(op) + ": expected [N×" + std::to_string(cfg.dim) + "] input, got " +
                         shape_to_string(x.shape()));
  }
}

}  // namespace

Tensor msa_forward(const Tensor& x, const BlockWeights& w, const ModelConfig& cfg, const QuantHooks& hooks,
                   std::size_t block) {
  expect_input(x, cfg, "msa_forward");
  const std::size_t n = x.dim(0), h = cfg.heads, dh = cfg.head_dim, inner = h * dh;
  const Tensor qkv = linear(x, w.w_qkv, w.b_qkv, hooks, block, Site::Ln1Out, Site::WeightQkv);
  if (qkv.dim(1) != 3 * inner) throw DimensionError("msa_forward: qkv projection width mismatch");

  const Tensor q = apply_hook(slice_columns(qkv, 0, inner), hooks, block, Site::Query);
  const Tensor k = apply_hook(slice_columns(qkv, inner, inner), hooks, block, Site::Key);
  const Tensor v = apply_hook(slice_columns(qkv, 2 * inner, inner), hooks, block, Site::Value);

  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Tensor> probs;
  probs.reserve(h);
  for (std::size_t i = 0; i < h; ++i) {
    const Tensor scores = matmul(slice_columns(q, i * dh, dh), transpose(slice_columns(k, i * dh, dh)));
    probs.push_back(rowwise_softmax(scale(scores, inv_sqrt_dh)));
  }
  // All heads share one attention quantizer.
  const Tensor stacked = concat_rows(probs).reshaped({h, n, n});
  const Tensor attn = apply_hook(stacked, hooks, block, Site::Attention);

  std::vector<Tensor> heads;
  heads.reserve(h);
  for (std::size_t i = 0; i < h; ++i) {
    const Tensor a = batch_item(attn, i);
    heads.push_back(matmul(a, slice_columns(v, i * dh, dh)));
  }
  return linear(concat_columns(heads), w.w_o, w.b_o, hooks, block, Site::AttnOut, Site::WeightO);
}

Tensor mlp_forward(const Tensor& y, const BlockWeights& w, const ModelConfig& cfg, const QuantHooks& hooks,
                   std::size_t block) {
  expect_input(y, cfg, "mlp_forward");
  const Tensor hidden = gelu(linear(y, w.w_1, w.b_1, hooks, block, Site::Ln2Out, Site::Weight1));
  return linear(hidden, w.w_2, w.b_2, hooks, block, Site::GeluOut, Site::Weight2);
}

Tensor block_forward(const Tensor& x, const BlockWeights& w, const ModelConfig& cfg, const QuantHooks& hooks,
                     std::size_t block) {
  expect_input(x, cfg, "block_forward");
  const Tensor y = add(msa_forward(layernorm_forward(x, w.gamma1, w.beta1, cfg.eps), w, cfg, hooks, block), x);
  return add(mlp_forward(layernorm_forward(y, w.gamma2, w.beta2, cfg.eps), w, cfg, hooks, block), y);
}

Tensor model_forward(const Model& model, const Tensor& x, const QuantHooks& hooks) {
  Tensor out = x;
  for (std::size_t l = 0; l < model.blocks.size(); ++l) out = block_forward(out, model.blocks[l], model.config, hooks, l);
  return out;
}

Tensor model_forward_batch(const Model& model, const Tensor& batch, const QuantHooks& hooks) {
  const ModelConfig& cfg = model.config;
  if (batch.rank() != 3 || batch.dim(1) != cfg.tokens || batch.dim(2) != cfg.dim) {
    throw DimensionError("batch must be [n×" + std::to_string(cfg.tokens) + "×" + std::to_string(cfg.dim) +
                         "], got " + shape_to_string(batch.shape()));
  }
  std::vector<Tensor> outs;
  outs.reserve(batch.dim(0));
  for (std::size_t i = 0; i < batch.dim(0); ++i) {
    outs.push_back(model_forward(model, batch_item(batch, i), hooks).reshaped({1, cfg.tokens, cfg.dim}));
  }
  return concat_rows(outs);
}

}  // namespace qrep
