// Copyright 2026 The m2gl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "m2gl/lora.hpp"
#include "m2gl/vae.hpp"

namespace m2gl {

/// Container layout (all integers little-endian):
///
///   magic      8 bytes   "M2GLBKBN" (backbone) or "M2GLADPT" (adapter)
///   version    u32       kFormatVersion
///   manifest   u32 length + UTF-8 JSON (sorted keys)
///   blob       float64 LE payload, entries back to back
///   hash       32 bytes  SHA-256 of everything before it
///
/// The manifest lists {name, shape, dtype, offset, length} for every blob
/// entry plus kind-specific metadata. docs/file-format.md has the details.
inline constexpr std::uint32_t kFormatVersion = 1;

struct ManifestEntry {
  std::string name;
  Shape shape;
  std::uint64_t offset = 0;  // bytes into the blob
  std::uint64_t length = 0;  // bytes
};

/// Parsed container, shared by both file kinds.
struct CheckpointContainer {
  std::string magic;
  std::uint32_t format_version = kFormatVersion;
  nlohmann::json manifest;
  std::vector<ManifestEntry> entries;
  std::vector<double> blob;
  std::string content_hash;  // hex of the trailer
};

std::vector<std::uint8_t> encode_container(const std::string& magic, nlohmann::json manifest,
                                           const ParameterList& tensors);
/// Validates magic, version, hash, and manifest layout.
CheckpointContainer decode_container(const std::vector<std::uint8_t>& bytes,
                                     const std::string& expected_magic);

/// Writes via a temporary file plus rename.
void write_file_atomic(const std::string& path, const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> read_file(const std::string& path);

// ---------------------------------------------------------------------------

struct LoadedBackbone {
  Backbone backbone;
  nlohmann::json config;  // snapshot stored at save time
  std::string file_hash;
};

std::vector<std::uint8_t> serialize_backbone(const Backbone& backbone,
                                             const nlohmann::json& config = nlohmann::json::object());
LoadedBackbone deserialize_backbone(const std::vector<std::uint8_t>& bytes);

void save_backbone(const Backbone& backbone, const std::string& path,
                   const nlohmann::json& config = nlohmann::json::object());
LoadedBackbone load_backbone(const std::string& path);

std::vector<std::uint8_t> serialize_adapter(const LoraAdapter& adapter);
LoraAdapter deserialize_adapter(const std::vector<std::uint8_t>& bytes);

void save_adapter(const LoraAdapter& adapter, const std::string& path);
/// With `backbone`, refuses adapters trained on a different backbone unless
/// `allow_hash_mismatch` is set.
LoraAdapter load_adapter(const std::string& path, const Backbone* backbone = nullptr,
                         bool allow_hash_mismatch = false);

nlohmann::json model_config_to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& j);

}  // namespace m2gl
