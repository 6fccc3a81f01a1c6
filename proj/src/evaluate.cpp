// Copyright 2026 The qrep Authors
// SPDX-License-Identifier: Apache-2.0

#include <chrono>

#include "qrep/error.hpp"
#include "qrep/pipeline.hpp"

namespace qrep {

using nlohmann::json;

namespace {

void set_softmax_arm(QuantizedModel& qm, const SiteCapture& cap, SoftmaxArm arm) {
  const PipelineConfig& cfg = qm.config;
  for (std::size_t l = 0; l < qm.hooks.size(); ++l) {
    const Tensor& a = cap.at(site_key(l, Site::Attention));
    CalibConfig cc{.bits = cfg.bits_a, .granularity = Granularity::PerLayer, .scheme = Scheme::LogSqrt2,
                   .percentile = cfg.log_percentile};
    switch (arm) {
      case SoftmaxArm::Uniform:
        cc.scheme = Scheme::Uniform;
        cc.percentile = cfg.act_percentile;
        break;
      case SoftmaxArm::Log2: cc.scheme = Scheme::Log2; break;
      case SoftmaxArm::LogSqrt2:
      case SoftmaxArm::BaseChanged: break;
    }
    QuantParams qp = calibrate_tensor(a, cc);
    qp.base_changed = arm == SoftmaxArm::BaseChanged;
    qm.hooks[l][Site::Attention] = qp;
  }
}

void check_data(const Model& model, const Tensor& data, const char* what) {
  const ModelConfig& cfg = model.config;
  if (data.rank() != 3 || data.dim(1) != cfg.tokens || data.dim(2) != cfg.dim) {
    throw ConfigError(std::string(what) + " shape " + shape_to_string(data.shape()) + " does not match model [n×" +
                      std::to_string(cfg.tokens) + "×" + std::to_string(cfg.dim) + "]");
  }
}

std::string describe_mismatch(const ModelConfig& a, const ModelConfig& b) {
  std::string out;
  auto field = [&](const char* name, auto x, auto y) {
    if (x != y) out += std::string(out.empty() ? "" : ", ") + name + " " + std::to_string(x) + " vs " + std::to_string(y);
  };
  field("tokens", a.tokens, b.tokens);
  field("dim", a.dim, b.dim);
  field("heads", a.heads, b.heads);
  field("head_dim", a.head_dim, b.head_dim);
  field("mlp_dim", a.mlp_dim, b.mlp_dim);
  field("blocks", a.blocks, b.blocks);
  field("eps", a.eps, b.eps);
  return out;
}

}  // namespace

QuantizedModel build_ablation_arm(const Model& fp, const Tensor& calib, const PipelineConfig& cfg,
                                  LayerNormArm ln_arm, SoftmaxArm softmax_arm) {
  QuantizedModel qm = initialize_quantizers(fp, calib, cfg);
  const SiteCapture cap = capture_site_inputs(fp, calib, QuantHooks::bypass(fp.config.blocks));
  switch (ln_arm) {
    case LayerNormArm::ChannelWise: break;
    case LayerNormArm::LayerWise: {
      const CalibConfig layer{.bits = cfg.bits_a, .granularity = Granularity::PerLayer,
                              .scheme = Scheme::Uniform, .percentile = cfg.act_percentile};
      for (std::size_t l = 0; l < qm.hooks.size(); ++l) {
        for (Site s : {Site::Ln1Out, Site::Ln2Out}) {
          qm.hooks[l][s] = calibrate_tensor(cap.at(site_key(l, s)), layer);
        }
      }
      break;
    }
    case LayerNormArm::Reparam: qm = reparameterize(qm, calib); break;
  }
  // Reparameterization leaves the attention input statistics unchanged, so the
  // full-precision capture serves every arm.
  set_softmax_arm(qm, cap, softmax_arm);
  return qm;
}

SoftmaxSiteMse softmax_site_mse(const Model& model, const Tensor& calib, const Tensor& data,
                                const PipelineConfig& cfg) {
  const QuantHooks bypass = QuantHooks::bypass(model.config.blocks);
  const SiteCapture cal = capture_site_inputs(model, calib, bypass);
  const SiteCapture eval = capture_site_inputs(model, data, bypass);
  SoftmaxSiteMse out;
  std::size_t count = 0;
  for (std::size_t l = 0; l < model.config.blocks; ++l) {
    const std::string key = site_key(l, Site::Attention);
    const Tensor& a_cal = cal.at(key);
    const Tensor& a = eval.at(key);
    const CalibConfig uni{.bits = cfg.bits_a, .granularity = Granularity::PerLayer, .scheme = Scheme::Uniform,
                          .percentile = cfg.act_percentile};
    CalibConfig log = uni;
    log.percentile = cfg.log_percentile;
    log.scheme = Scheme::Log2;
    const QuantParams q_uni = calibrate_tensor(a_cal, uni);
    const QuantParams q_log2 = calibrate_tensor(a_cal, log);
    log.scheme = Scheme::LogSqrt2;
    QuantParams q_sqrt2 = calibrate_tensor(a_cal, log);
    QuantParams q_base = q_sqrt2;
    q_base.base_changed = true;

    const double n = static_cast<double>(a.size());
    out.uniform += mean_squared_error(a, fake_quantize(a, q_uni)) * n;
    out.log2 += mean_squared_error(a, fake_quantize(a, q_log2)) * n;
    out.log_sqrt2 += mean_squared_error(a, fake_quantize(a, q_sqrt2)) * n;
    out.base_changed += mean_squared_error(a, fake_quantize(a, q_base)) * n;
    count += a.size();
  }
  const double total = static_cast<double>(count);
  out.uniform /= total;
  out.log2 /= total;
  out.log_sqrt2 /= total;
  out.base_changed /= total;
  return out;
}

double output_mse(const Model& fp, const QuantizedModel& q, const Tensor& data) {
  const Tensor ref = model_forward_batch(fp, data, QuantHooks::bypass(fp.config.blocks));
  const Tensor out = model_forward_batch(q.model, data, q.quant_hooks());
  return mean_squared_error(ref, out);
}

EvalReport evaluate(const Model& fp, const QuantizedModel& q, const Tensor& data, const Tensor& calib,
                    const EvalOptions& options) {
  if (!(fp.config == q.model.config)) {
    throw ConfigError("config mismatch between models: " + describe_mismatch(fp.config, q.model.config));
  }
  fp.validate();
  q.model.validate();
  check_data(fp, data, "evaluation data");
  check_data(fp, calib, "calibration data");

  EvalReport report;
  const Tensor ref = model_forward_batch(fp, data, QuantHooks::bypass(fp.config.blocks));

  std::map<std::string, std::pair<double, std::size_t>> site_err;
  QuantHooks hooks = q.quant_hooks();
  hooks.observer = [&](std::size_t block, Site site, const Tensor& input, const Tensor& used) {
    auto& [sum, n] = site_err[site_key(block, site)];
    sum += mean_squared_error(input, used) * static_cast<double>(input.size());
    n += input.size();
  };
  const Tensor out = model_forward_batch(q.model, data, hooks);
  for (const auto& [key, acc] : site_err) report.site_mse[key] = acc.first / static_cast<double>(acc.second);
  report.output_mse = mean_squared_error(ref, out);
  report.cosine = cosine_similarity(ref, out);

  if (!q.records.empty()) {
    const SiteCapture cap = capture_site_inputs(fp, data, QuantHooks::bypass(fp.config.blocks));
    for (const auto& [key, rec] : q.records) {
      auto it = cap.find(key);
      if (it == cap.end()) throw ConfigError("record for unknown site " + key);
      report.code_equality[key] = code_equality_rate(it->second, apply_record_shift(it->second, rec), rec);
    }
  }

  if (options.ablations) {
    const PipelineConfig& cfg = q.config;
    const auto start = std::chrono::steady_clock::now();
    const QuantizedModel reparam = build_ablation_arm(fp, calib, cfg, LayerNormArm::Reparam, SoftmaxArm::BaseChanged);
    report.calibration_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    AblationReport& ab = report.ablations;
    ab.reparam = output_mse(fp, reparam, data);
    ab.layer_wise =
        output_mse(fp, build_ablation_arm(fp, calib, cfg, LayerNormArm::LayerWise, SoftmaxArm::BaseChanged), data);
    ab.channel_wise =
        output_mse(fp, build_ablation_arm(fp, calib, cfg, LayerNormArm::ChannelWise, SoftmaxArm::BaseChanged), data);
    ab.log2 = output_mse(fp, build_ablation_arm(fp, calib, cfg, LayerNormArm::Reparam, SoftmaxArm::Log2), data);
    ab.log_sqrt2 =
        output_mse(fp, build_ablation_arm(fp, calib, cfg, LayerNormArm::Reparam, SoftmaxArm::LogSqrt2), data);
    ab.base_changed = ab.reparam;
    ab.softmax = softmax_site_mse(fp, calib, data, cfg);
    report.has_ablations = true;
  }
  return report;
}

json EvalReport::to_json() const {
  json j;
  j["site_mse"] = site_mse;
  j["output_mse"] = output_mse;
  j["cosine"] = cosine;
  j["code_equality"] = code_equality;
  j["calibration_seconds"] = calibration_seconds;
  if (has_ablations) {
    j["ablation_layernorm"] = {{"layer_wise", ablations.layer_wise},
                               {"channel_wise", ablations.channel_wise},
                               {"reparam", ablations.reparam}};
    j["ablation_softmax"] = {{"log2", ablations.log2},
                             {"log_sqrt2", ablations.log_sqrt2},
                             {"base_changed", ablations.base_changed}};
    j["softmax_site_mse"] = {{"uniform", ablations.softmax.uniform},
                             {"log2", ablations.softmax.log2},
                             {"log_sqrt2", ablations.softmax.log_sqrt2},
                             {"base_changed", ablations.softmax.base_changed}};
  }
  return j;
}

}  // namespace qrep
