// Copyright 2026 The qrep Authors
// SPDX-License-Identifier: Apache-2.0

#include "qrep/model_io.hpp"

#include "qrep/error.hpp"

namespace qrep {

using nlohmann::json;

namespace {

template <typename Fn>
auto guarded(const char* what, Fn&& fn) {
  try {
    return fn();
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed ") + what + ": " + e.what());
  }
}

struct NamedTensor {
  const char* name;
  Tensor BlockWeights::*member;
};

constexpr NamedTensor kBlockTensors[] = {
    {"gamma1", &BlockWeights::gamma1}, {"beta1", &BlockWeights::beta1}, {"w_qkv", &BlockWeights::w_qkv},
    {"b_qkv", &BlockWeights::b_qkv},   {"w_o", &BlockWeights::w_o},     {"b_o", &BlockWeights::b_o},
    {"gamma2", &BlockWeights::gamma2}, {"beta2", &BlockWeights::beta2}, {"w_1", &BlockWeights::w_1},
    {"b_1", &BlockWeights::b_1},       {"w_2", &BlockWeights::w_2},     {"b_2", &BlockWeights::b_2},
};

constexpr Site kWeightSites[] = {Site::WeightQkv, Site::WeightO, Site::Weight1, Site::Weight2};

std::string tensor_key(std::size_t block, const char* name) {
  return "block" + std::to_string(block) + "." + name;
}

void require_kind(const Container& c, const char* kind) {
  const std::string actual = c.meta.value("kind", "");
  if (actual != kind) {
    throw FormatError(std::string("expected a ") + kind + " container, got '" + actual + "'");
  }
}

}  // namespace

json to_json(const ModelConfig& cfg) {
  return {{"tokens", cfg.tokens},   {"dim", cfg.dim},         {"heads", cfg.heads}, {"head_dim", cfg.head_dim},
          {"mlp_dim", cfg.mlp_dim}, {"blocks", cfg.blocks}, {"eps", cfg.eps}};
}

ModelConfig model_config_from_json(const json& j) {
  return guarded("model config", [&] {
    ModelConfig cfg;
    cfg.tokens = j.value("tokens", cfg.tokens);
    cfg.dim = j.value("dim", cfg.dim);
    cfg.heads = j.value("heads", cfg.heads);
    cfg.head_dim = j.value("head_dim", cfg.head_dim);
    cfg.mlp_dim = j.value("mlp_dim", cfg.mlp_dim);
    cfg.blocks = j.value("blocks", cfg.blocks);
    cfg.eps = j.value("eps", cfg.eps);
    cfg.validate();
    return cfg;
  });
}

json to_json(const SynthSpec& spec) {
  return {{"seed", spec.seed},
          {"channel_range_min", spec.channel_range_min},
          {"channel_range_mean", spec.channel_range_mean},
          {"channel_range_max", spec.channel_range_max},
          {"attention_sharpness", spec.attention_sharpness},
          {"token_scale", spec.token_scale},
          {"batch", spec.batch}};
}

SynthSpec synth_spec_from_json(const json& j, SynthSpec base) {
  return guarded("synth spec", [&] {
    base.seed = j.value("seed", base.seed);
    base.channel_range_min = j.value("channel_range_min", base.channel_range_min);
    base.channel_range_mean = j.value("channel_range_mean", base.channel_range_mean);
    base.channel_range_max = j.value("channel_range_max", base.channel_range_max);
    base.attention_sharpness = j.value("attention_sharpness", base.attention_sharpness);
    base.token_scale = j.value("token_scale", base.token_scale);
    base.batch = j.value("batch", base.batch);
    base.validate();
    return base;
  });
}

json to_json(const QuantParams& qp) {
  return {{"scheme", to_string(qp.scheme)},
          {"bits", qp.bits},
          {"granularity", to_string(qp.granularity)},
          {"axis", qp.axis},
          {"scale", qp.scale},
          {"zero_point", qp.zero_point},
          {"base_changed", qp.base_changed}};
}

QuantParams quant_params_from_json(const json& j) {
  return guarded("quantizer parameters", [&] {
    QuantParams qp;
    qp.scheme = scheme_from_string(j.at("scheme").get<std::string>());
    qp.bits = j.at("bits").get<int>();
    qp.granularity = granularity_from_string(j.at("granularity").get<std::string>());
    qp.axis = j.value("axis", std::size_t{0});
    qp.scale = j.at("scale").get<std::vector<double>>();
    qp.zero_point = j.value("zero_point", std::vector<std::int32_t>{});
    qp.base_changed = j.value("base_changed", false);
    qp.validate();
    return qp;
  });
}

json to_json(const ReparamRecord& rec) {
  return {{"r1", rec.r1},
          {"r2", rec.r2},
          {"target_scale", rec.target_scale},
          {"target_zero", rec.target_zero},
          {"source_params", to_json(rec.source)}};
}

ReparamRecord reparam_record_from_json(const json& j) {
  return guarded("reparam record", [&] {
    ReparamRecord rec;
    rec.r1 = j.at("r1").get<std::vector<double>>();
    rec.r2 = j.at("r2").get<std::vector<std::int32_t>>();
    rec.target_scale = j.at("target_scale").get<double>();
    rec.target_zero = j.at("target_zero").get<std::int32_t>();
    rec.source = quant_params_from_json(j.at("source_params"));
    rec.validate();
    return rec;
  });
}

json to_json(const PipelineConfig& cfg) {
  return {{"bits_w", cfg.bits_w},
          {"bits_a", cfg.bits_a},
          {"act_percentile", cfg.act_percentile},
          {"weight_percentile", cfg.weight_percentile},
          {"log_percentile", cfg.log_percentile}};
}

PipelineConfig pipeline_config_from_json(const json& j) {
  return guarded("pipeline config", [&] {
    PipelineConfig cfg;
    cfg.bits_w = j.value("bits_w", cfg.bits_w);
    cfg.bits_a = j.value("bits_a", cfg.bits_a);
    cfg.act_percentile = j.value("act_percentile", cfg.act_percentile);
    cfg.weight_percentile = j.value("weight_percentile", cfg.weight_percentile);
    cfg.log_percentile = j.value("log_percentile", cfg.log_percentile);
    cfg.validate();
    return cfg;
  });
}

Container model_to_container(const Model& model) {
  model.validate();
  Container c;
  c.meta["kind"] = "model";
  c.meta["stage"] = to_string(Stage::FullPrecision);
  c.meta["config"] = to_json(model.config);
  for (std::size_t l = 0; l < model.blocks.size(); ++l) {
    for (const NamedTensor& nt : kBlockTensors) c.put(tensor_key(l, nt.name), model.blocks[l].*nt.member);
  }
  return c;
}

namespace {

Model load_weights(const Container& c, const std::map<std::string, QuantParams>& params) {
  require_kind(c, "model");
  Model model;
  model.config = model_config_from_json(c.meta.at("config"));
  model.blocks.resize(model.config.blocks);
  for (std::size_t l = 0; l < model.config.blocks; ++l) {
    for (const NamedTensor& nt : kBlockTensors) {
      const std::string key = tensor_key(l, nt.name);
      if (c.tensor(key).dtype == DType::I32) {
        auto it = params.find(key);
        if (it == params.end()) throw FormatError("integer tensor '" + key + "' has no quantizer");
        model.blocks[l].*nt.member = dequantize(c.get_i32(key), it->second);
      } else {
        model.blocks[l].*nt.member = c.get_f32(key);
      }
    }
  }
  model.validate();
  return model;
}

std::map<std::string, QuantParams> read_params(const Container& c) {
  std::map<std::string, QuantParams> params;
  if (!c.meta.contains("quant_params")) return params;
  for (const auto& [key, value] : c.meta.at("quant_params").items()) {
    try {
      params.emplace(key, quant_params_from_json(value));
    } catch (const Error& e) {
      throw FormatError("site " + key + ": " + e.what());
    }
  }
  return params;
}

}  // namespace

Model model_from_container(const Container& c) { return load_weights(c, read_params(c)); }

Container quantized_to_container(const QuantizedModel& qm) {
  Container c = model_to_container(qm.model);
  c.meta["stage"] = to_string(qm.stage);
  c.meta["pipeline"] = to_json(qm.config);

  json params = json::object();
  for (std::size_t l = 0; l < qm.hooks.size(); ++l) {
    for (Site s : kAllSites) {
      if (qm.hooks[l][s]) params[site_key(l, s)] = to_json(*qm.hooks[l][s]);
    }
  }
  c.meta["quant_params"] = std::move(params);

  json records = json::object();
  for (const auto& [key, rec] : qm.records) records[key] = to_json(rec);
  c.meta["reparam_records"] = std::move(records);
  c.meta["code_equality"] = qm.code_equality;

  json passes = json::array();
  for (const PassRecord& p : qm.passes) passes.push_back({{"seq", p.seq}, {"name", p.name}});
  c.meta["passes"] = std::move(passes);

  if (qm.stage == Stage::Quantized) {
    for (const auto& [key, codes] : quantize_weight_codes(qm)) c.put(key, codes);
  }
  return c;
}

QuantizedModel quantized_from_container(const Container& c) {
  QuantizedModel qm;
  const auto params = read_params(c);
  qm.model = load_weights(c, params);
  qm.stage = stage_from_string(c.meta.value("stage", to_string(Stage::FullPrecision)));
  qm.config = c.meta.contains("pipeline") ? pipeline_config_from_json(c.meta.at("pipeline")) : PipelineConfig{};
  qm.hooks.resize(qm.model.config.blocks);
  for (const auto& [key, qp] : params) {
    const auto dot = key.find('.');
    if (key.rfind("block", 0) != 0 || dot == std::string::npos) throw FormatError("bad site key '" + key + "'");
    const std::size_t block = std::stoul(key.substr(5, dot - 5));
    if (block >= qm.hooks.size()) throw FormatError("site key '" + key + "' names a missing block");
    qm.hooks[block][site_from_name(key.substr(dot + 1))] = qp;
  }
  if (c.meta.contains("reparam_records")) {
    for (const auto& [key, value] : c.meta.at("reparam_records").items()) {
      qm.records.emplace(key, reparam_record_from_json(value));
    }
  }
  if (c.meta.contains("code_equality")) {
    qm.code_equality = c.meta.at("code_equality").get<std::map<std::string, double>>();
  }
  if (c.meta.contains("passes")) {
    for (const json& p : c.meta.at("passes")) {
      qm.passes.push_back({p.at("seq").get<int>(), p.at("name").get<std::string>()});
    }
  }
  return qm;
}

Container data_to_container(const Tensor& batch) {
  if (batch.rank() != 3) throw DimensionError("data batches are [n×N×D], got " + shape_to_string(batch.shape()));
  Container c;
  c.meta["kind"] = "data";
  c.put("data", batch);
  return c;
}

Tensor data_from_container(const Container& c) {
  require_kind(c, "data");
  Tensor t = c.get_f32("data");
  if (t.rank() != 3) throw FormatError("data tensor must be [n×N×D]");
  return t;
}

}  // namespace qrep
