// Copyright 2026 The qrep Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "qrep/calibration.hpp"
#include "qrep/reparam.hpp"
#include "qrep/vit.hpp"

namespace qrep {

struct PipelineConfig {
  int bits_w = 4;
  int bits_a = 4;
  /// Uniform activation quantizers.
  double act_percentile = kDefaultActivationPercentile;
  double weight_percentile = kDefaultWeightPercentile;
  /// Scale of the post-Softmax log quantizers.
  double log_percentile = kDefaultLogPercentile;

  void validate() const;
  bool operator==(const PipelineConfig&) const = default;
};

enum class Stage { FullPrecision, Calibrated, Reparameterized, Quantized };
std::string to_string(Stage stage);
Stage stage_from_string(const std::string& name);

/// One executed pass. `seq` is a logical clock: strictly increasing in
/// execution order, so the manifest can prove ordering without wall-clock
/// time (which would break byte-identical output).
struct PassRecord {
  int seq = 0;
  std::string name;

  bool operator==(const PassRecord&) const = default;
};

/// A model and everything the quantization passes attach to it.
struct QuantizedModel {
  Model model;
  std::vector<BlockHooks> hooks;
  /// Keyed by site_key(block, Ln1Out / Ln2Out).
  std::map<std::string, ReparamRecord> records;
  /// Fraction of calibration activations whose per-layer code after
  /// reparameterization equals the original per-channel code.
  std::map<std::string, double> code_equality;
  std::vector<PassRecord> passes;
  PipelineConfig config;
  Stage stage = Stage::FullPrecision;

  QuantHooks quant_hooks() const;
  void record_pass(const std::string& name);
  int pass_seq(const std::string& name) const;  // -1 if absent
};

/// Site inputs observed over a batch, concatenated across samples.
/// LayerNorm-output sites are [rows×D]; everything else is flattened.
using SiteCapture = std::map<std::string, Tensor>;
SiteCapture capture_site_inputs(const Model& model, const Tensor& batch, const QuantHooks& hooks);

/// Initial quantizers: per-channel uniform on post-LayerNorm activations,
/// log√2 on post-Softmax activations, per-output-channel uniform on weights,
/// per-layer uniform everywhere else.
QuantizedModel initialize_quantizers(const Model& model, const Tensor& calib, const PipelineConfig& cfg);

/// Rewrites both LayerNorm sites of every block to per-layer quantization
/// (records, affine adjustment, weight compensation, weight re-calibration),
/// then switches the post-Softmax quantizer to base-changed dequantization.
QuantizedModel reparameterize(const QuantizedModel& calibrated, const Tensor& calib);

QuantizedModel run_pipeline(const Model& model, const Tensor& calib, const PipelineConfig& cfg);

/// Fresh per-output-channel (axis 1) min/max parameters.
QuantParams recalibrate_weights(const Tensor& weight, int bits);

/// Fraction of elements of `activations` ([rows×D] post-LayerNorm values of
/// the original model) whose per-channel code under rec.source equals the
/// per-layer code of (x + s⊙r2)/r1 under (s̃, z̃).
double code_equality_rate(const Tensor& activations, const Tensor& adjusted, const ReparamRecord& rec);
Tensor apply_record_shift(const Tensor& activations, const ReparamRecord& rec);

/// Integer weight codes for every weight site with a quantizer.
std::map<std::string, IntTensor> quantize_weight_codes(const QuantizedModel& qm);

// ---------------------------------------------------------------------------
// Evaluation.

enum class LayerNormArm { LayerWise, ChannelWise, Reparam };
enum class SoftmaxArm { Uniform, Log2, LogSqrt2, BaseChanged };

QuantizedModel build_ablation_arm(const Model& fp, const Tensor& calib, const PipelineConfig& cfg,
                                  LayerNormArm ln_arm, SoftmaxArm softmax_arm);

struct SoftmaxSiteMse {
  double uniform = 0.0;
  double log2 = 0.0;
  double log_sqrt2 = 0.0;
  double base_changed = 0.0;
};

/// Reconstruction MSE of each quantizer family on the post-Softmax
/// activations of `model` over `data`, scale calibrated per block on `calib`.
SoftmaxSiteMse softmax_site_mse(const Model& model, const Tensor& calib, const Tensor& data,
                                const PipelineConfig& cfg);

struct AblationReport {
  double layer_wise = 0.0;
  double channel_wise = 0.0;
  double reparam = 0.0;
  double log2 = 0.0;
  double log_sqrt2 = 0.0;
  double base_changed = 0.0;
  SoftmaxSiteMse softmax;
};

struct EvalReport {
  std::map<std::string, double> site_mse;
  double output_mse = 0.0;
  double cosine = 1.0;
  std::map<std::string, double> code_equality;
  double calibration_seconds = 0.0;
  bool has_ablations = false;
  AblationReport ablations;

  nlohmann::json to_json() const;
};

struct EvalOptions {
  bool ablations = true;
};

/// Forwards `data` through the full-precision model and through `q`, and
/// compares. With ablations enabled, also calibrates the comparison arms on
/// `calib`. Neither input is modified.
EvalReport evaluate(const Model& fp, const QuantizedModel& q, const Tensor& data, const Tensor& calib,
                    const EvalOptions& options = {});

/// End-to-end output MSE of a quantized model against the full-precision one.
double output_mse(const Model& fp, const QuantizedModel& q, const Tensor& data);

}  // namespace qrep
