// Copyright 2026 The qrep Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "qrep/tensor.hpp"

namespace qrep {

/// Layout of a `.rvq` file:
///   8 bytes   magic "RVQM0001"
///   8 bytes   manifest length, little-endian u64
///   n bytes   UTF-8 JSON manifest
///   rest      blob; tensor payloads, little-endian
/// The manifest's "tensors" array lists {name, shape, dtype, offset, length}
/// with offsets relative to the start of the blob.
inline constexpr std::string_view kContainerMagic = "RVQM0001";
inline constexpr int kFormatVersion = 1;

enum class DType { F32, I32 };

std::string to_string(DType dtype);

struct ContainerTensor {
  std::string name;
  Shape shape;
  DType dtype = DType::F32;
  std::vector<float> f32;
  std::vector<std::int32_t> i32;

  bool operator==(const ContainerTensor&) const = default;
};

class Container {
 public:
  /// Everything in the manifest except the tensor table and format version.
  nlohmann::json meta = nlohmann::json::object();

  const std::vector<ContainerTensor>& tensors() const noexcept { return tensors_; }
  bool has(const std::string& name) const;
  const ContainerTensor& tensor(const std::string& name) const;

  /// Stored as f32; values are rounded to single precision.
  void put(const std::string& name, const Tensor& t);
  void put(const std::string& name, const IntTensor& t);
  void put(ContainerTensor t);

  Tensor get_f32(const std::string& name) const;
  IntTensor get_i32(const std::string& name) const;

  std::vector<std::uint8_t> serialize() const;
  static Container deserialize(std::span<const std::uint8_t> bytes);

  bool operator==(const Container&) const = default;

 private:
  std::vector<ContainerTensor> tensors_;
};

void write_container(const std::filesystem::path& path, const Container& c);
Container read_container(const std::filesystem::path& path);

}  // namespace qrep
