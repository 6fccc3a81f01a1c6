// Copyright 2026 The qrep Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "qrep/tensor.hpp"

namespace qrep {

enum class Scheme { Uniform, Log2, LogSqrt2 };
enum class Granularity { PerLayer, PerChannel };

std::string to_string(Scheme scheme);
std::string to_string(Granularity granularity);
Scheme scheme_from_string(const std::string& name);
Granularity granularity_from_string(const std::string& name);

/// Parameters of one quantizer. PerLayer carries a single (scale, zero) pair;
/// PerChannel carries one pair per slice along `axis`. Log schemes have no
/// zero point.
struct QuantParams {
  Scheme scheme = Scheme::Uniform;
  int bits = 8;
  Granularity granularity = Granularity::PerLayer;
  std::size_t axis = 0;
  std::vector<double> scale;
  std::vector<std::int32_t> zero_point;
  /// LogSqrt2 only: dequantize with the parity-merged scale and a power-of-two
  /// factor instead of the direct √2 power table. Both yield identical values;
  /// this flag records which procedure an inference engine would run.
  bool base_changed = false;

  std::int32_t max_code() const noexcept { return (std::int32_t{1} << bits) - 1; }
  std::size_t channels() const noexcept { return scale.size(); }

  /// Throws ConfigError when an invariant is violated.
  void validate() const;

  bool operator==(const QuantParams&) const = default;
};

QuantParams uniform_params(double scale, std::int32_t zero_point, int bits);
QuantParams uniform_channel_params(std::vector<double> scale, std::vector<std::int32_t> zero_point,
                                   int bits, std::size_t axis);
QuantParams log_params(Scheme scheme, double scale, int bits);

/// Round half to even.
double round_half_even(double x) noexcept;

IntTensor uniform_quantize(const Tensor& x, const QuantParams& qp);
Tensor uniform_dequantize(const IntTensor& codes, const QuantParams& qp);

IntTensor log2_quantize(const Tensor& x, double scale, int bits);
Tensor log2_dequantize(const IntTensor& codes, double scale, int bits);
/// Integer route for log2 dequantization: `scale` must be a power of two. The
/// value is held in fixed point with enough fractional bits for the smallest
/// level and each code becomes an arithmetic right shift of the fixed-point
/// scale. Bit-identical to log2_dequantize.
Tensor log2_dequantize_shift(const IntTensor& codes, double scale, int bits);

/// Codes are round(-2·log2(x/s)), i.e. the base-√2 logarithm rewritten in
/// base 2.
IntTensor logsqrt2_quantize(const Tensor& x, double scale, int bits);
/// s̃·2^floor(-code/2), with s̃ the parity-merged scale.
Tensor logsqrt2_dequantize(const IntTensor& codes, double scale, int bits);
/// s·(√2)^-code from a precomputed level table.
Tensor logsqrt2_dequantize_direct(const IntTensor& codes, double scale, int bits);
/// As logsqrt2_dequantize, with the power-of-two factor produced by a right
/// shift in fixed point.
Tensor logsqrt2_dequantize_shift(const IntTensor& codes, double scale, int bits);

/// code & 1.
IntTensor parity_indicator(const IntTensor& codes);
std::int32_t parity_indicator(std::int32_t code) noexcept;

/// s·[parity(code)·(√2 − 1) + 1].
double parity_merged_scale(double scale, std::int32_t code) noexcept;
/// floor(-code/2) computed on integers.
std::int32_t even_shift(std::int32_t code) noexcept;
/// (√2)^-k, correctly rounded to double, for k in [0, 2^bits).
const std::vector<double>& sqrt2_level_table(int bits);

IntTensor quantize(const Tensor& x, const QuantParams& qp);
Tensor dequantize(const IntTensor& codes, const QuantParams& qp);
/// dequantize(quantize(x)); shapes are preserved.
Tensor fake_quantize(const Tensor& x, const QuantParams& qp);

}  // namespace qrep
