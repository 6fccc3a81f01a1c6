// Copyright 2026 The qrep Authors
// SPDX-License-Identifier: Apache-2.0

#include "qrep/container.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <set>

#include "qrep/error.hpp"

namespace qrep {

using nlohmann::json;

std::string to_string(DType dtype) { return dtype == DType::F32 ? "f32" : "i32"; }

namespace {

DType dtype_from_string(const std::string& s) {
  if (s == "f32") return DType::F32;
  if (s == "i32") return DType::I32;
  throw FormatError("unknown dtype '" + s + "'");
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return v;
}

std::uint64_t get_u64(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

std::size_t element_count(const ContainerTensor& t) {
  return t.dtype == DType::F32 ? t.f32.size() : t.i32.size();
}

}  // namespace

bool Container::has(const std::string& name) const {
  return std::any_of(tensors_.begin(), tensors_.end(), [&](const auto& t) { return t.name == name; });
}

const ContainerTensor& Container::tensor(const std::string& name) const {
  for (const auto& t : tensors_) {
    if (t.name == name) return t;
  }
  throw FormatError("container has no tensor '" + name + "'");
}

void Container::put(ContainerTensor t) {
  if (shape_numel(t.shape) != element_count(t)) {
    throw DimensionError("tensor '" + t.name + "': shape " + shape_to_string(t.shape) + " vs " +
                         std::to_string(element_count(t)) + " elements");
  }
  for (auto& existing : tensors_) {
    if (existing.name == t.name) {
      existing = std::move(t);
      return;
    }
  }
  tensors_.push_back(std::move(t));
}

void Container::put(const std::string& name, const Tensor& t) {
  ContainerTensor ct{name, t.shape(), DType::F32, {}, {}};
  ct.f32.reserve(t.size());
  for (double v : t.values()) ct.f32.push_back(static_cast<float>(v));
  put(std::move(ct));
}

void Container::put(const std::string& name, const IntTensor& t) {
  put(ContainerTensor{name, t.shape(), DType::I32, {}, t.values()});
}

Tensor Container::get_f32(const std::string& name) const {
  const ContainerTensor& t = tensor(name);
  if (t.dtype != DType::F32) throw FormatError("tensor '" + name + "' is not f32");
  return Tensor(t.shape, std::vector<double>(t.f32.begin(), t.f32.end()));
}

IntTensor Container::get_i32(const std::string& name) const {
  const ContainerTensor& t = tensor(name);
  if (t.dtype != DType::I32) throw FormatError("tensor '" + name + "' is not i32");
  return IntTensor(t.shape, t.i32);
}

std::vector<std::uint8_t> Container::serialize() const {
  json manifest = meta;
  manifest["format_version"] = kFormatVersion;
  json table = json::array();
  std::vector<std::uint8_t> blob;
  for (const auto& t : tensors_) {
    const std::size_t offset = blob.size();
    if (t.dtype == DType::F32) {
      for (float v : t.f32) put_u32(blob, std::bit_cast<std::uint32_t>(v));
    } else {
      for (std::int32_t v : t.i32) put_u32(blob, static_cast<std::uint32_t>(v));
    }
    table.push_back({{"name", t.name},
                     {"shape", t.shape},
                     {"dtype", to_string(t.dtype)},
                     {"offset", offset},
                     {"length", blob.size() - offset}});
  }
  manifest["tensors"] = std::move(table);
  const std::string text = manifest.dump();

  std::vector<std::uint8_t> out(kContainerMagic.begin(), kContainerMagic.end());
  put_u64(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  out.insert(out.end(), blob.begin(), blob.end());
  return out;
}

Container Container::deserialize(std::span<const std::uint8_t> bytes) {
  const std::size_t header = kContainerMagic.size() + 8;
  if (bytes.size() < header) throw FormatError("container truncated: " + std::to_string(bytes.size()) + " bytes");
  if (!std::equal(kContainerMagic.begin(), kContainerMagic.end(), bytes.begin())) {
    throw FormatError("bad magic; not an RVQM0001 container");
  }
  const std::uint64_t manifest_len = get_u64(bytes.data() + kContainerMagic.size());
  if (manifest_len > bytes.size() - header) throw FormatError("manifest length exceeds file size");
  const auto* text = reinterpret_cast<const char*>(bytes.data() + header);
  json manifest;
  try {
    manifest = json::parse(text, text + manifest_len);
  } catch (const json::exception& e) {
    throw FormatError(std::string("manifest is not valid JSON: ") + e.what());
  }
  if (!manifest.is_object()) throw FormatError("manifest must be a JSON object");
  if (manifest.value("format_version", 0) != kFormatVersion) throw FormatError("unsupported format version");
  if (!manifest.contains("tensors") || !manifest["tensors"].is_array()) {
    throw FormatError("manifest lacks a tensor table");
  }
  const std::span<const std::uint8_t> blob = bytes.subspan(header + manifest_len);

  Container c;
  std::set<std::string> names;
  try {
    for (const json& entry : manifest["tensors"]) {
      ContainerTensor t;
      t.name = entry.at("name").get<std::string>();
      if (!names.insert(t.name).second) throw FormatError("duplicate tensor name '" + t.name + "'");
      t.shape = entry.at("shape").get<Shape>();
      t.dtype = dtype_from_string(entry.at("dtype").get<std::string>());
      const auto offset = entry.at("offset").get<std::uint64_t>();
      const auto length = entry.at("length").get<std::uint64_t>();
      if (t.shape.empty() || std::find(t.shape.begin(), t.shape.end(), 0) != t.shape.end()) {
        throw FormatError("tensor '" + t.name + "' has an invalid shape");
      }
      if (offset > blob.size() || length > blob.size() - offset) {
        throw FormatError("tensor '" + t.name + "' lies outside the blob");
      }
      const std::size_t count = shape_numel(t.shape);
      if (length != count * 4) {
        throw FormatError("tensor '" + t.name + "': shape " + shape_to_string(t.shape) + " needs " +
                          std::to_string(count * 4) + " bytes, table says " + std::to_string(length));
      }
      const std::uint8_t* p = blob.data() + offset;
      if (t.dtype == DType::F32) {
        t.f32.resize(count);
        for (std::size_t i = 0; i < count; ++i) {
          t.f32[i] = std::bit_cast<float>(get_u32(p + 4 * i));
          if (!std::isfinite(t.f32[i])) throw FormatError("tensor '" + t.name + "' holds a non-finite value");
        }
      } else {
        t.i32.resize(count);
        for (std::size_t i = 0; i < count; ++i) t.i32[i] = static_cast<std::int32_t>(get_u32(p + 4 * i));
      }
      c.tensors_.push_back(std::move(t));
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed tensor table: ") + e.what());
  }
  manifest.erase("tensors");
  manifest.erase("format_version");
  c.meta = std::move(manifest);
  return c;
}

void write_container(const std::filesystem::path& path, const Container& c) {
  const std::vector<std::uint8_t> bytes = c.serialize();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("failed writing '" + path.string() + "'");
}

Container read_container(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path.string() + "'");
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return Container::deserialize(bytes);
}

}  // namespace qrep
