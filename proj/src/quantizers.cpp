// Copyright 2026 The qrep Authors
// SPDX-License-Identifier: Apache-2.0

#include "qrep/quantizers.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>

#include <boost/multiprecision/cpp_bin_float.hpp>
#include <boost/multiprecision/cpp_int.hpp>

#include "qrep/error.hpp"

namespace qrep {

std::string to_string(Scheme scheme) {
  switch (scheme) {
    case Scheme::Uniform: return "uniform";
    case Scheme::Log2: return "log2";
    case Scheme::LogSqrt2: return "log_sqrt2";
  }
  return "?";
}

std::string to_string(Granularity granularity) {
  return granularity == Granularity::PerLayer ? "per_layer" : "per_channel";
}

Scheme scheme_from_string(const std::string& name) {
  if (name == "uniform") return Scheme::Uniform;
  if (name == "log2") return Scheme::Log2;
  if (name == "log_sqrt2") return Scheme::LogSqrt2;
  throw ConfigError("unknown quantization scheme '" + name + "'");
}

Granularity granularity_from_string(const std::string& name) {
  if (name == "per_layer") return Granularity::PerLayer;
  if (name == "per_channel") return Granularity::PerChannel;
  throw ConfigError("unknown granularity '" + name + "'");
}

void QuantParams::validate() const {
  if (bits < 2 || bits > 30) throw ConfigError("bit-width must be in [2, 30], got " + std::to_string(bits));
  if (scale.empty()) throw ConfigError("quantizer has no scale");
  for (double s : scale) {
    if (!(s > 0.0) || !std::isfinite(s)) throw ConfigError("quantizer scale must be positive and finite");
  }
  if (scheme == Scheme::Uniform) {
    if (zero_point.size() != scale.size()) throw ConfigError("zero-point count differs from scale count");
    for (std::int32_t z : zero_point) {
      if (z < 0 || z > max_code()) {
        throw ConfigError("zero point " + std::to_string(z) + " outside [0, " + std::to_string(max_code()) + "]");
      }
    }
  } else {
    if (!zero_point.empty()) throw ConfigError("log quantizers carry no zero point");
    if (granularity != Granularity::PerLayer) throw ConfigError("log quantizers are per-layer only");
  }
  if (granularity == Granularity::PerLayer && scale.size() != 1) {
    throw ConfigError("per-layer quantizer must have exactly one scale");
  }
  if (base_changed && scheme != Scheme::LogSqrt2) {
    throw ConfigError("base-changed dequantization applies to log_sqrt2 only");
  }
}

QuantParams uniform_params(double scale, std::int32_t zero_point, int bits) {
  QuantParams qp{.scheme = Scheme::Uniform, .bits = bits, .granularity = Granularity::PerLayer,
                 .axis = 0, .scale = {scale}, .zero_point = {zero_point}};
  qp.validate();
  return qp;
}

QuantParams uniform_channel_params(std::vector<double> scale, std::vector<std::int32_t> zero_point,
                                   int bits, std::size_t axis) {
  QuantParams qp{.scheme = Scheme::Uniform, .bits = bits, .granularity = Granularity::PerChannel,
                 .axis = axis, .scale = std::move(scale), .zero_point = std::move(zero_point)};
  qp.validate();
  return qp;
}

QuantParams log_params(Scheme scheme, double scale, int bits) {
  if (scheme == Scheme::Uniform) throw ConfigError("log_params: uniform scheme requested");
  QuantParams qp{.scheme = scheme, .bits = bits, .granularity = Granularity::PerLayer,
                 .axis = 0, .scale = {scale}, .zero_point = {}};
  qp.validate();
  return qp;
}

double round_half_even(double x) noexcept {
  const double r = std::round(x);  // half away from zero
  if (std::abs(r - x) == 0.5) return 2.0 * std::round(x / 2.0);
  return r;
}

namespace {

std::int32_t clip_code(double v, std::int32_t max_code) {
  if (v <= 0.0) return 0;
  if (v >= static_cast<double>(max_code)) return max_code;
  return static_cast<std::int32_t>(v);
}

void check_codes(const IntTensor& codes, int bits) {
  const std::int32_t hi = (std::int32_t{1} << bits) - 1;
  for (std::size_t i = 0; i < codes.size(); ++i) {
    if (codes[i] < 0 || codes[i] > hi) {
      throw DomainError("code " + std::to_string(codes[i]) + " at element " + std::to_string(i) +
                        " outside [0, " + std::to_string(hi) + "]");
    }
  }
}

void check_log_scale(double scale, int bits) {
  if (!(scale > 0.0) || !std::isfinite(scale)) throw DomainError("log quantizer scale must be positive");
  if (bits < 2 || bits > 30) throw DomainError("bit-width must be in [2, 30]");
}

void require_scheme(const QuantParams& qp, Scheme scheme, const char* op) {
  if (qp.scheme != scheme) {
    throw ConfigError(std::string(op) + ": expected " + to_string(scheme) + " quantizer, got " +
                      to_string(qp.scheme));
  }
}

// Maps a flat element index to its channel along qp.axis.
class ChannelIndexer {
 public:
  ChannelIndexer(const Shape& shape, const QuantParams& qp) {
    if (qp.granularity == Granularity::PerLayer) return;
    if (qp.axis >= shape.size()) {
      throw DimensionError("channel axis " + std::to_string(qp.axis) + " out of range for " +
                           shape_to_string(shape));
    }
    if (shape[qp.axis] != qp.channels()) {
      throw DimensionError("channel axis has length " + std::to_string(shape[qp.axis]) + " but quantizer has " +
                           std::to_string(qp.channels()) + " channels");
    }
    per_channel_ = true;
    channels_ = shape[qp.axis];
    inner_ = 1;
    for (std::size_t a = qp.axis + 1; a < shape.size(); ++a) inner_ *= shape[a];
  }

  std::size_t operator()(std::size_t flat) const noexcept {
    return per_channel_ ? (flat / inner_) % channels_ : 0;
  }

 private:
  bool per_channel_ = false;
  std::size_t channels_ = 1;
  std::size_t inner_ = 1;
};

template <typename CodeFn>
IntTensor log_quantize(const Tensor& x, double scale, int bits, CodeFn exponent) {
  check_log_scale(scale, bits);
  const std::int32_t hi = (std::int32_t{1} << bits) - 1;
  IntTensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double v = x[i];
    if (v < 0.0 || std::isnan(v)) {
      throw DomainError("log quantizer input must be nonnegative, got " + std::to_string(v) + " at element " +
                        std::to_string(i));
    }
    // Zero sits below every level: it takes the smallest one.
    out[i] = (v == 0.0) ? hi : clip_code(round_half_even(exponent(v / scale)), hi);
  }
  return out;
}

using Fixed = boost::multiprecision::uint512_t;
constexpr int kFixedBits = 512;

double fixed_to_double(const Fixed& m, int frac_bits) {
  return std::ldexp(m.convert_to<double>(), -frac_bits);
}

}  // namespace

IntTensor uniform_quantize(const Tensor& x, const QuantParams& qp) {
  require_scheme(qp, Scheme::Uniform, "uniform_quantize");
  qp.validate();
  const ChannelIndexer channel(x.shape(), qp);
  const std::int32_t hi = qp.max_code();
  IntTensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const std::size_t c = channel(i);
    out[i] = clip_code(round_half_even(x[i] / qp.scale[c]) + qp.zero_point[c], hi);
  }
  return out;
}

Tensor uniform_dequantize(const IntTensor& codes, const QuantParams& qp) {
  require_scheme(qp, Scheme::Uniform, "uniform_dequantize");
  qp.validate();
  check_codes(codes, qp.bits);
  const ChannelIndexer channel(codes.shape(), qp);
  Tensor out(codes.shape());
  for (std::size_t i = 0; i < codes.size(); ++i) {
    const std::size_t c = channel(i);
    out[i] = qp.scale[c] * static_cast<double>(codes[i] - qp.zero_point[c]);
  }
  return out;
}

IntTensor log2_quantize(const Tensor& x, double scale, int bits) {
  return log_quantize(x, scale, bits, [](double r) { return -std::log2(r); });
}

Tensor log2_dequantize(const IntTensor& codes, double scale, int bits) {
  check_log_scale(scale, bits);
  check_codes(codes, bits);
  Tensor out(codes.shape());
  for (std::size_t i = 0; i < codes.size(); ++i) out[i] = std::ldexp(scale, -codes[i]);
  return out;
}

Tensor log2_dequantize_shift(const IntTensor& codes, double scale, int bits) {
  check_log_scale(scale, bits);
  check_codes(codes, bits);
  if (bits > 8) throw DomainError("shift path supports bit-widths up to 8");
  int exponent = 0;
  if (std::frexp(scale, &exponent) != 0.5) {
    throw DomainError("shift path requires a power-of-two scale, got " + std::to_string(scale));
  }
  const int scale_log2 = exponent - 1;
  const std::int32_t hi = (std::int32_t{1} << bits) - 1;
  // Fixed point with F fractional bits; the scale sits at bit F + log2(s),
  // which must leave room for `hi` right shifts.
  const int frac_bits = hi + std::max(0, -scale_log2);
  const int top_bit = frac_bits + scale_log2;
  if (top_bit >= kFixedBits) throw DomainError("scale too large for the fixed-point shift path");
  const Fixed fixed_scale = Fixed(1) << top_bit;
  Tensor out(codes.shape());
  for (std::size_t i = 0; i < codes.size(); ++i) {
    out[i] = fixed_to_double(fixed_scale >> codes[i], frac_bits);
  }
  return out;
}

IntTensor logsqrt2_quantize(const Tensor& x, double scale, int bits) {
  return log_quantize(x, scale, bits, [](double r) { return -2.0 * std::log2(r); });
}

std::int32_t parity_indicator(std::int32_t code) noexcept { return code & 1; }

IntTensor parity_indicator(const IntTensor& codes) {
  IntTensor out(codes.shape());
  for (std::size_t i = 0; i < codes.size(); ++i) out[i] = parity_indicator(codes[i]);
  return out;
}

double parity_merged_scale(double scale, std::int32_t code) noexcept {
  return scale * (static_cast<double>(parity_indicator(code)) * (std::numbers::sqrt2 - 1.0) + 1.0);
}

std::int32_t even_shift(std::int32_t code) noexcept {
  // floor(-code/2) == -ceil(code/2); arithmetic shift floors.
  return (-code) >> 1;
}

Tensor logsqrt2_dequantize(const IntTensor& codes, double scale, int bits) {
  check_log_scale(scale, bits);
  check_codes(codes, bits);
  Tensor out(codes.shape());
  for (std::size_t i = 0; i < codes.size(); ++i) {
    out[i] = std::ldexp(parity_merged_scale(scale, codes[i]), even_shift(codes[i]));
  }
  return out;
}

Tensor logsqrt2_dequantize_shift(const IntTensor& codes, double scale, int bits) {
  check_log_scale(scale, bits);
  check_codes(codes, bits);
  if (bits > 8) throw DomainError("shift path supports bit-widths up to 8");
  const std::int32_t hi = (std::int32_t{1} << bits) - 1;
  const int frac_bits = (hi + 1) / 2;
  const Fixed one = Fixed(1) << frac_bits;
  Tensor out(codes.shape());
  for (std::size_t i = 0; i < codes.size(); ++i) {
    const double power = fixed_to_double(one >> -even_shift(codes[i]), frac_bits);
    out[i] = parity_merged_scale(scale, codes[i]) * power;
  }
  return out;
}

const std::vector<double>& sqrt2_level_table(int bits) {
  static std::mutex mutex;
  static std::map<int, std::vector<double>> tables;
  std::lock_guard lock(mutex);
  auto it = tables.find(bits);
  if (it != tables.end()) return it->second;
  using Wide = boost::multiprecision::cpp_bin_float_50;
  const Wide root2 = boost::multiprecision::sqrt(Wide(2));
  std::vector<double> levels(std::size_t{1} << bits);
  Wide level = 1;
  for (double& v : levels) {
    v = level.convert_to<double>();
    level /= root2;
  }
  return tables.emplace(bits, std::move(levels)).first->second;
}

Tensor logsqrt2_dequantize_direct(const IntTensor& codes, double scale, int bits) {
  check_log_scale(scale, bits);
  check_codes(codes, bits);
  const std::vector<double>& levels = sqrt2_level_table(bits);
  Tensor out(codes.shape());
  for (std::size_t i = 0; i < codes.size(); ++i) out[i] = scale * levels[static_cast<std::size_t>(codes[i])];
  return out;
}

IntTensor quantize(const Tensor& x, const QuantParams& qp) {
  qp.validate();
  switch (qp.scheme) {
    case Scheme::Uniform: return uniform_quantize(x, qp);
    case Scheme::Log2: return log2_quantize(x, qp.scale[0], qp.bits);
    case Scheme::LogSqrt2: return logsqrt2_quantize(x, qp.scale[0], qp.bits);
  }
  throw ConfigError("unknown scheme");
}

Tensor dequantize(const IntTensor& codes, const QuantParams& qp) {
  qp.validate();
  switch (qp.scheme) {
    case Scheme::Uniform: return uniform_dequantize(codes, qp);
    case Scheme::Log2: return log2_dequantize(codes, qp.scale[0], qp.bits);
    case Scheme::LogSqrt2:
      return qp.base_changed ? logsqrt2_dequantize(codes, qp.scale[0], qp.bits)
                             : logsqrt2_dequantize_direct(codes, qp.scale[0], qp.bits);
  }
  throw ConfigError("unknown scheme");
}

Tensor fake_quantize(const Tensor& x, const QuantParams& qp) { return dequantize(quantize(x, qp), qp); }

}  // namespace qrep
