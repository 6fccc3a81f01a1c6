// Copyright 2026 The qrep Authors
// SPDX-License-Identifier: Apache-2.0

#include "qrep/cli.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "qrep/error.hpp"
#include "qrep/model_io.hpp"

namespace qrep {

namespace {

struct Options {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string calib_out;
  std::string eval_out;
  std::size_t samples = 32;
  std::size_t eval_samples = 32;

  std::string model;
  std::string fp_model;
  std::string data;
  std::string calib;
  int bits_w = 4;
  int bits_a = 4;
  double percentile = kDefaultActivationPercentile;
  bool no_ablations = false;
  std::string file;
};

void load_config_file(const std::string& path, ModelConfig& cfg, SynthSpec& spec) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
  }
  if (j.contains("model")) cfg = model_config_from_json(j["model"]);
  if (j.contains("synth")) spec = synth_spec_from_json(j["synth"], spec);
}

int run_gen(const Options& o, std::ostream& out) {
  ModelConfig cfg;
  SynthSpec spec;
  if (!o.config_path.empty()) load_config_file(o.config_path, cfg, spec);
  if (o.seed) spec.seed = *o.seed;
  spec.batch = o.samples;

  Container model = model_to_container(gen_model(cfg, spec));
  model.meta["synth"] = to_json(spec);
  write_container(o.out, model);
  out << "wrote model " << o.out << "\n";
  if (!o.calib_out.empty()) {
    write_container(o.calib_out, data_to_container(gen_activations(cfg, spec, o.samples)));
    out << "wrote calibration data " << o.calib_out << " (" << o.samples << " samples)\n";
  }
  if (!o.eval_out.empty()) {
    write_container(o.eval_out, data_to_container(gen_activations(cfg, spec, o.eval_samples, o.samples)));
    out << "wrote evaluation data " << o.eval_out << " (" << o.eval_samples << " samples)\n";
  }
  return kExitOk;
}

PipelineConfig pipeline_config(const Options& o) {
  PipelineConfig cfg;
  cfg.bits_w = o.bits_w;
  cfg.bits_a = o.bits_a;
  cfg.act_percentile = o.percentile;
  cfg.validate();
  return cfg;
}

int run_calibrate(const Options& o, std::ostream& out) {
  const Model model = model_from_container(read_container(o.model));
  const Tensor calib = data_from_container(read_container(o.data));
  const QuantizedModel qm = initialize_quantizers(model, calib, pipeline_config(o));
  write_container(o.out, quantized_to_container(qm));
  out << "calibrated " << model.config.blocks << " blocks on " << calib.dim(0) << " samples -> " << o.out << "\n";
  return kExitOk;
}

int run_reparam(const Options& o, std::ostream& out) {
  const QuantizedModel calibrated = quantized_from_container(read_container(o.model));
  const Tensor calib = data_from_container(read_container(o.data));
  const QuantizedModel qm = reparameterize(calibrated, calib);
  write_container(o.out, quantized_to_container(qm));
  for (const auto& [key, rate] : qm.code_equality) {
    out << key << " code-equality " << std::setprecision(6) << rate << "\n";
  }
  out << "reparameterized -> " << o.out << "\n";
  return kExitOk;
}

int run_quantize(const Options& o, std::ostream& out) {
  QuantizedModel qm = quantized_from_container(read_container(o.model));
  if (qm.stage != Stage::Calibrated && qm.stage != Stage::Reparameterized) {
    throw ConfigError("quantize expects a calibrated or reparameterized model, got stage " + to_string(qm.stage));
  }
  qm.record_pass("export_codes");
  qm.stage = Stage::Quantized;
  write_container(o.out, quantized_to_container(qm));
  out << "quantized weights -> " << o.out << "\n";
  return kExitOk;
}

int run_eval(const Options& o, std::ostream& out) {
  const Model fp = model_from_container(read_container(o.fp_model));
  const QuantizedModel q = quantized_from_container(read_container(o.model));
  const Tensor data = data_from_container(read_container(o.data));
  const Tensor calib = o.calib.empty() ? data : data_from_container(read_container(o.calib));
  const EvalReport report = evaluate(fp, q, data, calib, {.ablations = !o.no_ablations});
  const std::string text = report.to_json().dump(2);
  if (!o.out.empty()) {
    std::ofstream f(o.out);
    f << text << "\n";
  }
  out << text << "\n";
  return kExitOk;
}

int run_inspect(const Options& o, std::ostream& out) {
  const Container c = read_container(o.file);
  out << "kind: " << c.meta.value("kind", "?") << "\n";
  if (c.meta.contains("stage")) out << "stage: " << c.meta["stage"].get<std::string>() << "\n";
  if (c.meta.contains("config")) out << "config: " << c.meta["config"].dump() << "\n";
  out << "tensors:\n";
  std::size_t offset = 0;
  for (const ContainerTensor& t : c.tensors()) {
    const std::size_t length = shape_numel(t.shape) * 4;
    out << "  " << std::left << std::setw(20) << t.name << " " << to_string(t.dtype) << " " << std::setw(12)
        << shape_to_string(t.shape) << " offset=" << offset << " length=" << length << "\n";
    offset += length;
  }
  if (c.meta.contains("quant_params")) {
    out << "quantizers:\n";
    for (const auto& [key, qp] : c.meta["quant_params"].items()) {
      out << "  " << std::left << std::setw(20) << key << " " << qp["scheme"].get<std::string>() << " "
          << qp["granularity"].get<std::string>() << " b=" << qp["bits"].get<int>()
          << " channels=" << qp["scale"].size() << (qp.value("base_changed", false) ? " base_changed" : "") << "\n";
    }
  }
  if (c.meta.contains("reparam_records")) {
    for (const auto& [key, rec] : c.meta["reparam_records"].items()) {
      out << "reparam " << key << ": s~=" << rec["target_scale"].get<double>()
          << " z~=" << rec["target_zero"].get<int>() << "\n";
    }
  }
  if (c.meta.contains("passes")) {
    out << "passes:";
    for (const auto& p : c.meta["passes"]) out << " " << p["seq"].get<int>() << ":" << p["name"].get<std::string>();
    out << "\n";
  }
  return kExitOk;
}

}  // namespace

int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Post-training quantization with scale reparameterization", "qrep"};
  app.require_subcommand(1);
  Options o;

  auto* gen = app.add_subcommand("gen", "Generate a synthetic model and activation data");
  gen->add_option("--config", o.config_path, "JSON file with 'model' and 'synth' sections")->check(CLI::ExistingFile);
  gen->add_option("--seed", o.seed, "Generator seed");
  gen->add_option("--out", o.out, "Model container to write")->required();
  gen->add_option("--calib-out", o.calib_out, "Calibration data container to write");
  gen->add_option("--eval-out", o.eval_out, "Evaluation data container to write");
  gen->add_option("--samples", o.samples, "Calibration samples")->check(CLI::PositiveNumber);
  gen->add_option("--eval-samples", o.eval_samples, "Evaluation samples")->check(CLI::PositiveNumber);

  auto add_bits = [&](CLI::App* cmd) {
    cmd->add_option("--bits-w", o.bits_w, "Weight bit-width")->check(CLI::Range(2, 16));
    cmd->add_option("--bits-a", o.bits_a, "Activation bit-width")->check(CLI::Range(2, 16));
    cmd->add_option("--percentile", o.percentile, "Activation percentile in (50, 100]");
  };

  auto* calibrate = app.add_subcommand("calibrate", "Initialize quantizers from calibration data");
  calibrate->add_option("--model", o.model, "Full-precision model container")->required();
  calibrate->add_option("--data", o.data, "Calibration data container")->required();
  calibrate->add_option("--out", o.out, "Output container")->required();
  add_bits(calibrate);

  auto* reparam = app.add_subcommand("reparam", "Reparameterize a calibrated model");
  reparam->add_option("--model", o.model, "Calibrated model container")->required();
  reparam->add_option("--data", o.data, "Calibration data container")->required();
  reparam->add_option("--out", o.out, "Output container")->required();

  auto* quantize_cmd = app.add_subcommand("quantize", "Export integer weight codes");
  quantize_cmd->add_option("--model", o.model, "Calibrated or reparameterized container")->required();
  quantize_cmd->add_option("--out", o.out, "Output container")->required();

  auto* eval = app.add_subcommand("eval", "Compare a quantized model with the full-precision one");
  eval->add_option("--fp", o.fp_model, "Full-precision model container")->required();
  eval->add_option("--model", o.model, "Quantized model container")->required();
  eval->add_option("--data", o.data, "Evaluation data container")->required();
  eval->add_option("--calib", o.calib, "Calibration data for the ablation arms (default: --data)");
  eval->add_flag("--no-ablations", o.no_ablations, "Skip the ablation arms");
  eval->add_option("--out", o.out, "Also write the report to this file");

  auto* inspect = app.add_subcommand("inspect", "Print a container's manifest");
  inspect->add_option("file", o.file, "Container file")->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n" << app.help();
    return kExitUsage;
  }

  try {
    if (*gen) return run_gen(o, out);
    if (*calibrate) return run_calibrate(o, out);
    if (*reparam) return run_reparam(o, out);
    if (*quantize_cmd) return run_quantize(o, out);
    if (*eval) return run_eval(o, out);
    if (*inspect) return run_inspect(o, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitDataError;
  }
  return kExitUsage;
}

int cli_main(int argc, char** argv) {
  std::vector<std::string> args(argv + std::min(argc, 1), argv + argc);
  return cli_main(args, std::cout, std::cerr);
}

}  // namespace qrep
