// Copyright 2026 The qrep Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "json.hpp"
#include "qrep/container.hpp"
#include "qrep/pipeline.hpp"
#include "qrep/synth.hpp"

namespace qrep {

nlohmann::json to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SynthSpec& spec);
/// Fields absent from `j` keep the value in `base`.
SynthSpec synth_spec_from_json(const nlohmann::json& j, SynthSpec base = {});
nlohmann::json to_json(const QuantParams& qp);
QuantParams quant_params_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ReparamRecord& rec);
ReparamRecord reparam_record_from_json(const nlohmann::json& j);
nlohmann::json to_json(const PipelineConfig& cfg);
PipelineConfig pipeline_config_from_json(const nlohmann::json& j);

Container model_to_container(const Model& model);
/// Also accepts later pipeline stages; integer weight codes are dequantized.
Model model_from_container(const Container& c);

/// Stage Quantized stores weights as i32 codes; earlier stages store f32.
Container quantized_to_container(const QuantizedModel& qm);
QuantizedModel quantized_from_container(const Container& c);

Container data_to_container(const Tensor& batch);
Tensor data_from_container(const Container& c);

}  // namespace qrep
