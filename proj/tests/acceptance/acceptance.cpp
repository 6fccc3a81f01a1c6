// Copyright 2026 The qrep Authors
// SPDX-License-Identifier: Apache-2.0

// Acceptance suite. Each criterion prints one PASS/FAIL line with the measured
// quantity; the exit status is nonzero if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "qrep/calibration.hpp"
#include "qrep/cli.hpp"
#include "qrep/container.hpp"
#include "qrep/pipeline.hpp"
#include "qrep/quantizers.hpp"
#include "qrep/reparam.hpp"
#include "qrep/synth.hpp"
#include "qrep/vit.hpp"

using namespace qrep;

namespace {

struct Outcome {
  bool pass;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

ReparamRecord random_record(std::size_t d, int bits, std::mt19937_64& rng, std::vector<double>& s,
                            std::vector<std::int32_t>& z) {
  std::uniform_real_distribution<double> sd(0.01, 1.0);
  std::uniform_int_distribution<int> zd(0, (1 << bits) - 1);
  s.resize(d);
  z.resize(d);
  for (std::size_t c = 0; c < d; ++c) {
    s[c] = sd(rng);
    z[c] = zd(rng);
  }
  return build_reparam_record(uniform_channel_params(s, z, bits, 1));
}

Outcome code_equality() {
  auto t0 = Clock::now();
  std::mt19937_64 rng(1);
  const std::size_t d = 64, rows = 2048;
  std::size_t compared = 0, equal = 0;
  for (int bits : {4, 8}) {
    std::vector<double> s;
    std::vector<std::int32_t> z;
    ReparamRecord rec = random_record(d, bits, rng, s, z);
    const double top = (1 << bits) - 1;
    std::uniform_real_distribution<double> ud(-0.3 * top, 1.3 * top);
    Tensor x({rows, d});
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t c = 0; c < d; ++c) x.at(i, c) = s[c] * (ud(rng) - z[c]);
    IntTensor want = uniform_quantize(x, rec.source);
    IntTensor got = uniform_quantize(apply_record_shift(x, rec), rec.layer_params());
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t c = 0; c < d; ++c) {
        double t = x.at(i, c) / s[c];
        if (std::abs(t - std::floor(t) - 0.5) < 1e-9) continue;
        ++compared;
        equal += want[i * d + c] == got[i * d + c];
      }
  }
  double secs = seconds_since(t0);
  return {compared >= 100000 && equal == compared && secs < 5.0,
          fmt("%zu/%zu codes equal over 64 channels, %.2f s", equal, compared, secs)};
}

Outcome output_alignment() {
  auto t0 = Clock::now();
  std::mt19937_64 rng(2);
  const std::size_t dims[] = {8, 64, 512};
  double worst = 0.0;
  for (int inst = 0; inst < 100; ++inst) {
    std::size_t d = dims[inst % 3], m = 32;
    std::vector<double> s;
    std::vector<std::int32_t> z;
    ReparamRecord rec = random_record(d, 4, rng, s, z);
    Tensor xp = oracle::random_tensor({16, d}, rng, 2.0);
    Tensor gamma = oracle::random_tensor({d}, rng, 2.0), beta = oracle::random_tensor({d}, rng, 0.5);
    Tensor w = oracle::random_tensor({d, m}, rng, 1.0 / std::sqrt(static_cast<double>(d)));
    Tensor b = oracle::random_tensor({m}, rng, 0.1);
    AffineFactors af = apply_affine_adjustment(gamma, beta, rec);
    LinearParams lp = apply_weight_compensation(w, b, rec);
    Tensor y = add_row_vector(matmul(layernorm_forward(xp, gamma, beta, 1e-6), w), b);
    Tensor yt = add_row_vector(matmul(layernorm_forward(xp, af.gamma, af.beta, 1e-6), lp.weight), lp.bias);
    worst = std::max(worst, max_abs_diff(y, yt) / max_abs(y));
  }
  double secs = seconds_since(t0);
  return {worst <= 1e-9 && secs < 10.0, fmt("max relative deviation %.3g over 100 instances, %.2f s", worst, secs)};
}

Outcome block_invariance() {
  ModelConfig cfg;
  SynthSpec spec;
  Model fp = gen_model(cfg, spec);
  QuantizedModel q = run_pipeline(fp, gen_activations(cfg, spec, 32), PipelineConfig{});
  std::mt19937_64 rng(3);
  double worst = 0.0;
  for (int i = 0; i < 32; ++i) {
    Tensor x = oracle::random_tensor({cfg.tokens, cfg.dim}, rng);
    for (std::size_t l = 0; l < cfg.blocks; ++l) {
      Tensor a = block_forward(x, fp.blocks[l], cfg, QuantHooks::bypass(cfg.blocks), l);
      Tensor b = block_forward(x, q.model.blocks[l], cfg, QuantHooks::bypass(cfg.blocks), l);
      worst = std::max(worst, max_abs_diff(a, b) / max_abs(a));
    }
  }
  return {worst <= 1e-9, fmt("max relative deviation %.3g over 32 inputs x %zu blocks", worst, cfg.blocks)};
}

Outcome base_change() {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> le(-10.0, 4.0);
  std::uniform_int_distribution<int> ee(-12, 3);
  std::uint64_t worst_ulp = 0;
  std::size_t checked = 0, shift_mismatch = 0;
  for (int bits = 2; bits <= 8; ++bits) {
    IntTensor codes({std::size_t{1} << bits});
    for (std::size_t k = 0; k < codes.size(); ++k) codes[k] = static_cast<std::int32_t>(k);
    for (int t = 0; t < 100; ++t) {
      double s = std::exp2(le(rng));
      Tensor merged = logsqrt2_dequantize(codes, s, bits);
      for (std::size_t k = 0; k < codes.size(); ++k) {
        worst_ulp = std::max(worst_ulp, oracle::ulp_distance(merged[k], oracle::sqrt2_power(s, codes[k])));
        ++checked;
      }
      double p2 = std::ldexp(1.0, ee(rng));
      Tensor flt = log2_dequantize(codes, p2, bits), sh = log2_dequantize_shift(codes, p2, bits);
      for (std::size_t k = 0; k < codes.size(); ++k) shift_mismatch += flt[k] != sh[k];
    }
  }
  return {worst_ulp <= 1 && shift_mismatch == 0,
          fmt("%zu codes, max %llu ulp vs 100-digit reference; %zu log2 shift mismatches", checked,
              static_cast<unsigned long long>(worst_ulp), shift_mismatch)};
}

Outcome softmax_mse() {
  ModelConfig cfg;
  SynthSpec spec;
  Model m = gen_model(cfg, spec);
  SoftmaxSiteMse r = softmax_site_mse(m, gen_activations(cfg, spec, 32), gen_activations(cfg, spec, 32, 32), {});
  bool pass = r.log_sqrt2 == r.base_changed && r.log_sqrt2 <= 0.99 * r.log2;
  return {pass, fmt("log_sqrt2 %.6g, base_changed %.6g, log2 %.6g (ratio %.4f), uniform %.6g", r.log_sqrt2,
                    r.base_changed, r.log2, r.log_sqrt2 / r.log2, r.uniform)};
}

Outcome layernorm_ablation() {
  ModelConfig cfg;
  SynthSpec spec;
  Model fp = gen_model(cfg, spec);
  Tensor calib = gen_activations(cfg, spec, 32), data = gen_activations(cfg, spec, 32, 32);
  PipelineConfig pc;
  auto arm = [&](LayerNormArm a) {
    return output_mse(fp, build_ablation_arm(fp, calib, pc, a, SoftmaxArm::BaseChanged), data);
  };
  double lw = arm(LayerNormArm::LayerWise), cw = arm(LayerNormArm::ChannelWise), rp = arm(LayerNormArm::Reparam);
  return {lw > rp && rp <= 1.25 * cw,
          fmt("layer-wise %.6g, reparam %.6g, channel-wise %.6g (reparam/channel %.4f)", lw, rp, cw, rp / cw)};
}

Outcome quantizer_properties() {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> sd(1e-3, 10.0), off(-0.5, 0.5);
  std::size_t cases = 0, failures = 0;
  // Uniform round trip within s/2 inside the representable range.
  for (int t = 0; t < 20000; ++t) {
    int bits = 2 + t % 7;
    std::int32_t top = (1 << bits) - 1;
    double s = sd(rng);
    std::int32_t z = std::uniform_int_distribution<std::int32_t>(0, top)(rng);
    std::uniform_real_distribution<double> in(s * (0 - z), s * (top - z));
    QuantParams qp = uniform_params(s, z, bits);
    Tensor x({1}, {in(rng)});
    ++cases;
    failures += std::abs(fake_quantize(x, qp)[0] - x[0]) > s / 2 * (1 + 1e-12);
  }
  // Every grid point is a fixed point, all codes.
  for (int t = 0; t < 200; ++t) {
    int bits = 2 + t % 7;
    std::int32_t top = (1 << bits) - 1;
    double s = sd(rng);
    std::int32_t z = std::uniform_int_distribution<std::int32_t>(0, top)(rng);
    QuantParams qp = uniform_params(s, z, bits);
    IntTensor codes({static_cast<std::size_t>(top) + 1});
    for (std::int32_t k = 0; k <= top; ++k) codes[k] = k;
    Tensor grid = uniform_dequantize(codes, qp);
    IntTensor back = uniform_quantize(grid, qp);
    Tensor again = uniform_dequantize(back, qp);
    for (std::size_t k = 0; k < codes.size(); ++k) {
      ++cases;
      failures += back[k] != codes[k] || again[k] != grid[k];
    }
  }
  // Percentile bounds widen monotonically with p.
  for (int t = 0; t < 2000; ++t) {
    std::vector<double> v(1 + t % 97);
    for (double& e : v) e = off(rng) * sd(rng);
    std::uniform_real_distribution<double> pd(50.0, 100.0);
    double p1 = pd(rng), p2 = pd(rng);
    if (p1 > p2) std::swap(p1, p2);
    Bounds a = percentile_bounds(v, p1), b = percentile_bounds(v, p2);
    ++cases;
    failures += !(b.lo <= a.lo && a.hi <= b.hi && a.lo <= a.hi);
  }
  // Constant tensors calibrate to finite parameters and reproduce the constant's code.
  for (int t = 0; t < 1000; ++t) {
    double c = off(rng) * sd(rng) * (t % 10 == 0 ? 0.0 : 1.0);
    Tensor x({8, 4}, c);
    for (Granularity g : {Granularity::PerLayer, Granularity::PerChannel}) {
      QuantParams qp = calibrate_tensor(x, CalibConfig{.bits = 4, .granularity = g, .percentile = 99.0}, 1);
      Tensor y = fake_quantize(x, qp);
      bool ok = true;
      for (double sc : qp.scale) ok = ok && std::isfinite(sc) && sc > 0;
      for (double v : y.values()) ok = ok && std::isfinite(v);
      ++cases;
      failures += !ok;
    }
  }
  return {failures == 0 && cases >= 10000, fmt("%zu cases, %zu failures", cases, failures)};
}

std::vector<char> bytes_of(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Outcome determinism() {
  namespace fs = std::filesystem;
  fs::path root = fs::temp_directory_path() / "qrep_acceptance";
  fs::remove_all(root);
  auto chain = [&](const std::string& sub) {
    fs::create_directories(root / sub);
    auto p = [&](const char* f) { return (root / sub / f).string(); };
    std::ostringstream out, err;
    int rc = cli_main({"gen", "--out", p("fp.rvq"), "--calib-out", p("calib.rvq"), "--eval-out", p("eval.rvq")}, out, err);
    rc |= cli_main({"calibrate", "--model", p("fp.rvq"), "--data", p("calib.rvq"), "--out", p("cal.rvq")}, out, err);
    rc |= cli_main({"reparam", "--model", p("cal.rvq"), "--data", p("calib.rvq"), "--out", p("rep.rvq")}, out, err);
    rc |= cli_main({"quantize", "--model", p("rep.rvq"), "--out", p("q.rvq")}, out, err);
    return rc;
  };
  if (chain("a") != 0 || chain("b") != 0) return {false, "CLI chain failed"};
  std::size_t files = 0, identical = 0, stable = 0;
  for (const char* f : {"fp.rvq", "calib.rvq", "eval.rvq", "cal.rvq", "rep.rvq", "q.rvq"}) {
    ++files;
    auto a = bytes_of(root / "a" / f);
    identical += !a.empty() && a == bytes_of(root / "b" / f);
    Container c = read_container(root / "a" / f);
    write_container(root / "a" / "copy.rvq", c);
    stable += bytes_of(root / "a" / "copy.rvq") == a && read_container(root / "a" / "copy.rvq") == c;
  }
  fs::remove_all(root);
  return {identical == files && stable == files,
          fmt("%zu/%zu outputs byte-identical across runs, %zu/%zu stable under read-write-read", identical, files,
              stable, files)};
}

Outcome efficiency() {
  ModelConfig cfg;
  SynthSpec spec;
  Model fp = gen_model(cfg, spec);
  Tensor calib = gen_activations(cfg, spec, 32);
  auto t0 = Clock::now();
  QuantizedModel q = run_pipeline(fp, calib, PipelineConfig{});
  std::size_t exported = quantize_weight_codes(q).size();
  double secs = seconds_since(t0);
  return {q.stage == Stage::Reparameterized && exported > 0 && secs < 10.0,
          fmt("L=%zu D=%zu, 32 calibration samples, calibrate+reparam+export %.3f s", cfg.blocks, cfg.dim, secs)};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"code-equality", code_equality},
      {"linear-output-alignment", output_alignment},
      {"block-invariance", block_invariance},
      {"base-change-exactness", base_change},
      {"softmax-site-mse", softmax_mse},
      {"layernorm-ablation", layernorm_ablation},
      {"quantizer-properties", quantizer_properties},
      {"determinism-and-container", determinism},
      {"pipeline-efficiency", efficiency},
  };
  int failed = 0, index = 0;
  for (const auto& [name, fn] : criteria) {
    ++index;
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("[%s] %d %s: %s\n", o.pass ? "PASS" : "FAIL", index, name, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
