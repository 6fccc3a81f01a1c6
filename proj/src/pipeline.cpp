// Copyright 2026 The qrep Authors
// SPDX-License-Identifier: Apache-2.0

#include "qrep/pipeline.hpp"

#include <algorithm>

#include "qrep/error.hpp"

namespace qrep {

void PipelineConfig::validate() const {
  if (bits_w < 2 || bits_w > 16) throw ConfigError("weight bit-width must be in [2, 16]");
  if (bits_a < 2 || bits_a > 16) throw ConfigError("activation bit-width must be in [2, 16]");
  for (double p : {act_percentile, weight_percentile, log_percentile}) {
    if (!(p > 50.0 && p <= 100.0)) throw ConfigError("percentiles must lie in (50, 100]");
  }
}

std::string to_string(Stage stage) {
  switch (stage) {
    case Stage::FullPrecision: return "fp";
    case Stage::Calibrated: return "calibrated";
    case Stage::Reparameterized: return "reparameterized";
    case Stage::Quantized: return "quantized";
  }
  return "?";
}

Stage stage_from_string(const std::string& name) {
  for (Stage s : {Stage::FullPrecision, Stage::Calibrated, Stage::Reparameterized, Stage::Quantized}) {
    if (to_string(s) == name) return s;
  }
  throw ConfigError("unknown stage '" + name + "'");
}

QuantHooks QuantizedModel::quant_hooks() const {
  QuantHooks h;
  h.blocks = hooks;
  h.blocks.resize(model.config.blocks);
  return h;
}

void QuantizedModel::record_pass(const std::string& name) {
  const int next = passes.empty() ? 1 : passes.back().seq + 1;
  passes.push_back({next, name});
}

int QuantizedModel::pass_seq(const std::string& name) const {
  for (const PassRecord& p : passes) {
    if (p.name == name) return p.seq;
  }
  return -1;
}

namespace {

bool is_layernorm_site(Site s) { return s == Site::Ln1Out || s == Site::Ln2Out; }

// Post-LayerNorm captures keep their channel axis; the rest are flattened.
Tensor capture_layout(Site site, const Tensor& t) {
  if (is_layernorm_site(site)) return t;
  return t.reshaped({t.size()});
}

}  // namespace

SiteCapture capture_site_inputs(const Model& model, const Tensor& batch, const QuantHooks& hooks) {
  std::map<std::string, std::vector<Tensor>> parts;
  QuantHooks observed = hooks;
  observed.blocks.resize(model.config.blocks);
  observed.observer = [&](std::size_t block, Site site, const Tensor& input, const Tensor&) {
    if (!is_weight_site(site)) parts[site_key(block, site)].push_back(capture_layout(site, input));
  };
  model_forward_batch(model, batch, observed);
  SiteCapture out;
  for (auto& [key, list] : parts) out.emplace(key, concat_rows(list));
  return out;
}

namespace {

QuantParams calibrate_site(const std::string& key, const Tensor& x, const CalibConfig& cfg,
                           std::optional<std::size_t> axis = std::nullopt) {
  try {
    return calibrate_tensor(x, cfg, axis);
  } catch (const Error& e) {
    throw Error("calibration failed at site " + key + ": " + e.what());
  }
}

const Tensor& captured(const SiteCapture& cap, const std::string& key) {
  auto it = cap.find(key);
  if (it == cap.end()) throw Error("no activations captured for site " + key);
  return it->second;
}

QuantParams weight_quantizer(const std::string& key, const Tensor& w, int bits, double percentile) {
  return calibrate_site(key, w, {.bits = bits, .granularity = Granularity::PerChannel,
                                 .scheme = Scheme::Uniform, .percentile = percentile}, 1);
}

Tensor& weight_of(BlockWeights& w, Site site) {
  switch (site) {
    case Site::WeightQkv: return w.w_qkv;
    case Site::WeightO: return w.w_o;
    case Site::Weight1: return w.w_1;
    case Site::Weight2: return w.w_2;
    default: break;
  }
  throw ConfigError("not a weight site: " + site_name(site));
}

}  // namespace

QuantParams recalibrate_weights(const Tensor& weight, int bits) {
  return weight_quantizer("recalibrate", weight, bits, 100.0);
}

QuantizedModel initialize_quantizers(const Model& model, const Tensor& calib, const PipelineConfig& cfg) {
  model.validate();
  cfg.validate();
  QuantizedModel qm;
  qm.model = model;
  qm.config = cfg;
  qm.hooks.resize(model.config.blocks);

  // Statistics come from the full-precision forward.
  const SiteCapture cap = capture_site_inputs(model, calib, QuantHooks::bypass(model.config.blocks));
  const CalibConfig layer{.bits = cfg.bits_a, .granularity = Granularity::PerLayer, .scheme = Scheme::Uniform,
                          .percentile = cfg.act_percentile};
  CalibConfig channel = layer;
  channel.granularity = Granularity::PerChannel;
  const CalibConfig log{.bits = cfg.bits_a, .granularity = Granularity::PerLayer, .scheme = Scheme::LogSqrt2,
                        .percentile = cfg.log_percentile};

  for (std::size_t l = 0; l < model.config.blocks; ++l) {
    BlockHooks& h = qm.hooks[l];
    for (Site s : kAllSites) {
      const std::string key = site_key(l, s);
      if (is_weight_site(s)) {
        h[s] = weight_quantizer(key, weight_of(qm.model.blocks[l], s), cfg.bits_w, cfg.weight_percentile);
      } else if (is_layernorm_site(s)) {
        h[s] = calibrate_site(key, captured(cap, key), channel, 1);
      } else if (s == Site::Attention) {
        h[s] = calibrate_site(key, captured(cap, key), log);
      } else {
        h[s] = calibrate_site(key, captured(cap, key), layer);
      }
    }
  }
  qm.stage = Stage::Calibrated;
  qm.record_pass("init_quantizers");
  return qm;
}

Tensor apply_record_shift(const Tensor& activations, const ReparamRecord& rec) {
  if (activations.rank() != 2 || activations.dim(1) != rec.channels()) {
    throw DimensionError("activations " + shape_to_string(activations.shape()) + " do not have " +
                         std::to_string(rec.channels()) + " channels");
  }
  Tensor out = activations;
  for (std::size_t r = 0; r < out.dim(0); ++r) {
    for (std::size_t c = 0; c < out.dim(1); ++c) {
      out.at(r, c) = (activations.at(r, c) + rec.source.scale[c] * rec.r2[c]) / rec.r1[c];
    }
  }
  return out;
}

double code_equality_rate(const Tensor& activations, const Tensor& adjusted, const ReparamRecord& rec) {
  if (activations.shape() != adjusted.shape()) throw DimensionError("code_equality_rate: shape mismatch");
  const IntTensor per_channel = uniform_quantize(activations, rec.source);
  const IntTensor per_layer = uniform_quantize(adjusted, rec.layer_params());
  std::size_t equal = 0;
  for (std::size_t i = 0; i < per_channel.size(); ++i) equal += per_channel[i] == per_layer[i];
  return static_cast<double>(equal) / static_cast<double>(per_channel.size());
}

QuantizedModel reparameterize(const QuantizedModel& calibrated, const Tensor& calib) {
  if (calibrated.stage != Stage::Calibrated) {
    throw ConfigError("reparameterize expects a calibrated model, got stage " + to_string(calibrated.stage));
  }
  QuantizedModel qm = calibrated;
  const std::size_t blocks = qm.model.config.blocks;

  struct SiteLink {
    Site activation;
    Site weight;
    Tensor BlockWeights::*gamma;
    Tensor BlockWeights::*beta;
    Tensor BlockWeights::*w;
    Tensor BlockWeights::*b;
  };
  static constexpr SiteLink kLinks[] = {
      {Site::Ln1Out, Site::WeightQkv, &BlockWeights::gamma1, &BlockWeights::beta1, &BlockWeights::w_qkv,
       &BlockWeights::b_qkv},
      {Site::Ln2Out, Site::Weight1, &BlockWeights::gamma2, &BlockWeights::beta2, &BlockWeights::w_1,
       &BlockWeights::b_1},
  };

  for (std::size_t l = 0; l < blocks; ++l) {
    for (const SiteLink& link : kLinks) {
      const std::string key = site_key(l, link.activation);
      const auto& qp = qm.hooks[l][link.activation];
      if (!qp || qp->granularity != Granularity::PerChannel) {
        throw ConfigError("site " + key + " has no per-channel quantizer to reparameterize");
      }
      qm.records[key] = build_reparam_record(*qp);
    }
  }
  qm.record_pass("build_reparam_records");

  for (std::size_t l = 0; l < blocks; ++l) {
    BlockWeights& w = qm.model.blocks[l];
    for (const SiteLink& link : kLinks) {
      const ReparamRecord& rec = qm.records.at(site_key(l, link.activation));
      AffineFactors adjusted = apply_affine_adjustment(w.*link.gamma, w.*link.beta, rec);
      w.*link.gamma = std::move(adjusted.gamma);
      w.*link.beta = std::move(adjusted.beta);
      qm.hooks[l][link.activation] = rec.layer_params();
    }
  }
  qm.record_pass("adjust_layernorm_affine");

  for (std::size_t l = 0; l < blocks; ++l) {
    BlockWeights& w = qm.model.blocks[l];
    for (const SiteLink& link : kLinks) {
      const ReparamRecord& rec = qm.records.at(site_key(l, link.activation));
      LinearParams compensated = apply_weight_compensation(w.*link.w, w.*link.b, rec);
      w.*link.w = std::move(compensated.weight);
      w.*link.b = std::move(compensated.bias);
    }
  }
  qm.record_pass("compensate_weights");

  // Re-calibration: fresh weight quantizers for the compensated weights, and
  // the calibration batch is pushed through the adjusted model to confirm the
  // per-layer codes reproduce the per-channel ones.
  for (std::size_t l = 0; l < blocks; ++l) {
    for (const SiteLink& link : kLinks) {
      const std::string key = site_key(l, link.weight);
      qm.hooks[l][link.weight] =
          weight_quantizer(key, qm.model.blocks[l].*link.w, qm.config.bits_w, qm.config.weight_percentile);
    }
  }
  {
    const QuantHooks bypass = QuantHooks::bypass(blocks);
    const SiteCapture before = capture_site_inputs(calibrated.model, calib, bypass);
    const SiteCapture after = capture_site_inputs(qm.model, calib, bypass);
    for (const auto& [key, rec] : qm.records) {
      qm.code_equality[key] = code_equality_rate(captured(before, key), captured(after, key), rec);
    }
  }
  qm.record_pass("recalibrate_weights");

  // Post-Softmax: codes already come from -2·log2, so only the dequantization
  // procedure changes.
  for (std::size_t l = 0; l < blocks; ++l) {
    auto& qp = qm.hooks[l][Site::Attention];
    if (qp && qp->scheme == Scheme::LogSqrt2) qp->base_changed = true;
  }
  qm.record_pass("base_change_quantization");
  qm.record_pass("base_change_dequantization");

  if (qm.pass_seq("recalibrate_weights") <= qm.pass_seq("compensate_weights")) {
    throw Error("pipeline ordering violated: weights re-calibrated before compensation");
  }
  qm.stage = Stage::Reparameterized;
  return qm;
}

QuantizedModel run_pipeline(const Model& model, const Tensor& calib, const PipelineConfig& cfg) {
  return reparameterize(initialize_quantizers(model, calib, cfg), calib);
}

std::map<std::string, IntTensor> quantize_weight_codes(const QuantizedModel& qm) {
  std::map<std::string, IntTensor> codes;
  for (std::size_t l = 0; l < qm.hooks.size(); ++l) {
    BlockWeights w = qm.model.blocks[l];
    for (Site s : {Site::WeightQkv, Site::WeightO, Site::Weight1, Site::Weight2}) {
      if (qm.hooks[l][s]) codes.emplace(site_key(l, s), quantize(weight_of(w, s), *qm.hooks[l][s]));
    }
  }
  return codes;
}

}  // namespace qrep
