// Copyright 2026 The m2gl Authors
// SPDX-License-Identifier: Apache-2.0

#include "m2gl/persistence.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>

#include <unistd.h>

#include "m2gl/errors.hpp"
#include "m2gl/hash.hpp"

namespace m2gl {

namespace {

constexpr const char* kBackboneMagic = "M2GLBKBN";
constexpr const char* kAdapterMagic = "M2GLADPT";
constexpr std::size_t kMagicSize = 8;
constexpr std::size_t kHashSize = 32;
constexpr std::size_t kMinSize = kMagicSize + 4 + 4 + kHashSize;

std::uint32_t read_u32(const std::vector<std::uint8_t>& b, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[at + i]) << (8 * i);
  return v;
}

double read_f64(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return std::bit_cast<double>(v);
}

void assign_tensor(Tensor& dst, const CheckpointContainer& c, const ManifestEntry& e,
                   const std::string& file_kind) {
  if (dst.shape() != e.shape) {
    throw CorruptionError(file_kind + " entry '" + e.name + "' has shape " +
                          shape_to_string(e.shape) + ", expected " +
                          shape_to_string(dst.shape()));
  }
  auto out = dst.mutable_data();
  const std::size_t first = e.offset / 8;
  std::copy(c.blob.begin() + static_cast<std::ptrdiff_t>(first),
            c.blob.begin() + static_cast<std::ptrdiff_t>(first + out.size()), out.begin());
}

const ManifestEntry& find_entry(const CheckpointContainer& c, const std::string& name) {
  for (const auto& e : c.entries) {
    if (e.name == name) return e;
  }
  throw CorruptionError("file is missing entry '" + name + "'");
}

}  // namespace

std::vector<std::uint8_t> encode_container(const std::string& magic, nlohmann::json manifest,
                                           const ParameterList& tensors) {
  if (magic.size() != kMagicSize) throw ContractError("container magic must be 8 bytes");
  nlohmann::json entries = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& p : tensors) {
    const std::uint64_t length = p.tensor.numel() * 8;
    entries.push_back({{"name", p.name},
                       {"shape", p.tensor.shape()},
                       {"dtype", "f64le"},
                       {"offset", offset},
                       {"length", length}});
    offset += length;
  }
  manifest["entries"] = std::move(entries);
  manifest["format_version"] = kFormatVersion;
  const std::string text = manifest.dump();

  ByteWriter w;
  w.raw({reinterpret_cast<const std::uint8_t*>(magic.data()), kMagicSize});
  w.u32(kFormatVersion);
  w.text(text);
  for (const auto& p : tensors) {
    for (double v : p.tensor.data()) w.f64(v);
  }
  const Digest digest = sha256(w.bytes());
  w.raw(digest);
  return w.take();
}

CheckpointContainer decode_container(const std::vector<std::uint8_t>& bytes,
                                     const std::string& expected_magic) {
  if (bytes.size() < kMinSize) {
    throw CorruptionError("file is truncated (" + std::to_string(bytes.size()) + " bytes)");
  }
  CheckpointContainer c;
  c.magic.assign(bytes.begin(), bytes.begin() + kMagicSize);
  if (c.magic != expected_magic) {
    throw CorruptionError("bad magic '" + c.magic + "', expected '" + expected_magic + "'");
  }
  c.format_version = read_u32(bytes, kMagicSize);
  if (c.format_version > kFormatVersion) {
    throw VersionError("file format version " + std::to_string(c.format_version) +
                       " is newer than supported version " + std::to_string(kFormatVersion));
  }
  const std::size_t body = bytes.size() - kHashSize;
  const Digest digest = sha256({bytes.data(), body});
  if (!std::equal(digest.begin(), digest.end(), bytes.begin() + static_cast<std::ptrdiff_t>(body))) {
    throw CorruptionError("content hash mismatch (file truncated or modified)");
  }
  c.content_hash = to_hex(digest);

  const std::uint32_t manifest_len = read_u32(bytes, kMagicSize + 4);
  const std::size_t manifest_at = kMagicSize + 8;
  if (manifest_at + manifest_len > body) throw CorruptionError("manifest overruns the file");
  try {
    c.manifest = nlohmann::json::parse(bytes.begin() + manifest_at,
                                       bytes.begin() + manifest_at + manifest_len);
  } catch (const nlohmann::json::exception& e) {
    throw CorruptionError(std::string("manifest is not valid JSON: ") + e.what());
  }

  const std::size_t blob_at = manifest_at + manifest_len;
  const std::size_t blob_bytes = body - blob_at;
  if (blob_bytes % 8 != 0) throw CorruptionError("blob is not a whole number of float64s");
  c.blob.resize(blob_bytes / 8);
  for (std::size_t i = 0; i < c.blob.size(); ++i) c.blob[i] = read_f64(&bytes[blob_at + 8 * i]);

  try {
    std::uint64_t expected_offset = 0;
    for (const auto& e : c.manifest.at("entries")) {
      ManifestEntry m;
      m.name = e.at("name").get<std::string>();
      m.shape = e.at("shape").get<Shape>();
      m.offset = e.at("offset").get<std::uint64_t>();
      m.length = e.at("length").get<std::uint64_t>();
      if (e.at("dtype").get<std::string>() != "f64le") {
        throw CorruptionError("entry '" + m.name + "' has unsupported dtype");
      }
      if (m.offset != expected_offset || m.length != shape_numel(m.shape) * 8) {
        throw CorruptionError("entry '" + m.name + "' has an inconsistent offset or length");
      }
      expected_offset += m.length;
      c.entries.push_back(std::move(m));
    }
    if (expected_offset != blob_bytes) {
      throw CorruptionError("manifest entries do not cover the blob exactly");
    }
  } catch (const nlohmann::json::exception& e) {
    throw CorruptionError(std::string("malformed manifest: ") + e.what());
  }
  return c;
}

void write_file_atomic(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const fs::path tmp = target.string() + ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot write '" + tmp.string() + "'");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw InputError("failed writing '" + tmp.string() + "'");
  }
  fs::rename(tmp, target);
}

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// ---------------------------------------------------------------------------

nlohmann::json model_config_to_json(const ModelConfig& c) {
  return {{"step_width", c.step_width},
          {"lifted_width", c.lifted_width},
          {"source_widths", c.source_widths},
          {"gate_hidden", c.gate_hidden},
          {"hyper_hidden", c.hyper_hidden},
          {"hidden_width", c.hidden_width},
          {"latent_width", c.latent_width},
          {"output_activation", to_string(c.output_activation)},
          {"logvar_clamp", c.logvar_clamp},
          {"zero_init_hypernet_output", c.zero_init_hypernet_output}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.step_width = j.at("step_width").get<std::size_t>();
  c.lifted_width = j.at("lifted_width").get<std::size_t>();
  c.source_widths = j.at("source_widths").get<std::vector<std::size_t>>();
  c.gate_hidden = j.at("gate_hidden").get<std::size_t>();
  c.hyper_hidden = j.at("hyper_hidden").get<std::size_t>();
  c.hidden_width = j.at("hidden_width").get<std::size_t>();
  c.latent_width = j.at("latent_width").get<std::size_t>();
  c.output_activation = output_activation_from_string(j.at("output_activation").get<std::string>());
  c.logvar_clamp = j.at("logvar_clamp").get<double>();
  c.zero_init_hypernet_output = j.at("zero_init_hypernet_output").get<bool>();
  return c;
}

std::vector<std::uint8_t> serialize_backbone(const Backbone& backbone,
                                             const nlohmann::json& config) {
  nlohmann::json manifest;
  manifest["kind"] = "backbone";
  manifest["model"] = model_config_to_json(backbone.config());
  manifest["config"] = config;
  manifest["backbone_hash"] = backbone.content_hash();
  return encode_container(kBackboneMagic, std::move(manifest), backbone.parameters());
}

LoadedBackbone deserialize_backbone(const std::vector<std::uint8_t>& bytes) {
  const CheckpointContainer c = decode_container(bytes, kBackboneMagic);
  LoadedBackbone out;
  try {
    out.backbone = Backbone(model_config_from_json(c.manifest.at("model")), 0);
    out.config = c.manifest.value("config", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw CorruptionError(std::string("backbone manifest: ") + e.what());
  }
  const ParameterList params = out.backbone.parameters();
  if (params.size() != c.entries.size()) {
    throw CorruptionError("backbone file holds " + std::to_string(c.entries.size()) +
                          " tensors, model expects " + std::to_string(params.size()));
  }
  for (auto p : params) assign_tensor(p.tensor, c, find_entry(c, p.name), "backbone");
  out.file_hash = c.content_hash;
  return out;
}

void save_backbone(const Backbone& backbone, const std::string& path,
                   const nlohmann::json& config) {
  write_file_atomic(path, serialize_backbone(backbone, config));
}

LoadedBackbone load_backbone(const std::string& path) {
  return deserialize_backbone(read_file(path));
}

std::vector<std::uint8_t> serialize_adapter(const LoraAdapter& adapter) {
  nlohmann::json manifest;
  manifest["kind"] = "adapter";
  manifest["target"] = to_string(adapter.target);
  manifest["rank"] = adapter.rank;
  manifest["alpha"] = adapter.alpha;
  manifest["group_id"] = adapter.group_id;
  manifest["backbone_hash"] = adapter.backbone_hash;
  if (adapter.normalization) {
    const auto& n = *adapter.normalization;
    manifest["normalization"] = {{"load_mean", n.load_mean},
                                 {"load_std", n.load_std},
                                 {"ext_mean", n.ext_mean},
                                 {"ext_std", n.ext_std}};
  }
  return encode_container(kAdapterMagic, std::move(manifest), trainable_params(adapter));
}

LoraAdapter deserialize_adapter(const std::vector<std::uint8_t>& bytes) {
  const CheckpointContainer c = decode_container(bytes, kAdapterMagic);
  LoraAdapter a;
  try {
    a.target = lora_target_from_string(c.manifest.at("target").get<std::string>());
    a.rank = c.manifest.at("rank").get<std::size_t>();
    a.alpha = c.manifest.at("alpha").get<double>();
    a.group_id = c.manifest.at("group_id").get<std::string>();
    a.backbone_hash = c.manifest.at("backbone_hash").get<std::string>();
    if (c.manifest.contains("normalization")) {
      const auto& n = c.manifest.at("normalization");
      a.normalization = GroupNormalization{
          n.at("load_mean").get<double>(), n.at("load_std").get<double>(),
          n.value("ext_mean", std::vector<double>{}), n.value("ext_std", std::vector<double>{})};
      if (a.normalization->ext_mean.size() != a.normalization->ext_std.size()) {
        throw CorruptionError("adapter normalization has mismatched covariate stats");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw CorruptionError(std::string("adapter manifest: ") + e.what());
  }
  if (a.rank == 0) throw CorruptionError("adapter rank is zero");
  for (const auto& name : target_matrix_names(a.target)) {
    const auto& ea = find_entry(c, name + ".lora_a");
    const auto& eb = find_entry(c, name + ".lora_b");
    if (ea.shape.size() != 2 || eb.shape.size() != 2 || ea.shape[1] != a.rank ||
        eb.shape[0] != a.rank) {
      throw CorruptionError("adapter factors for '" + name + "' do not have rank " +
                            std::to_string(a.rank));
    }
    LoraFactors f;
    f.matrix = name;
    f.a = Tensor::zeros(ea.shape, true);
    f.b = Tensor::zeros(eb.shape, true);
    assign_tensor(f.a, c, ea, "adapter");
    assign_tensor(f.b, c, eb, "adapter");
    a.factors.push_back(std::move(f));
  }
  if (c.entries.size() != 2 * a.factors.size()) {
    throw CorruptionError("adapter file holds unexpected entries");
  }
  return a;
}

void save_adapter(const LoraAdapter& adapter, const std::string& path) {
  write_file_atomic(path, serialize_adapter(adapter));
}

LoraAdapter load_adapter(const std::string& path, const Backbone* backbone,
                         bool allow_hash_mismatch) {
  LoraAdapter a = deserialize_adapter(read_file(path));
  if (backbone) {
    if (!allow_hash_mismatch && a.backbone_hash != backbone->content_hash()) {
      throw CompatibilityError("adapter '" + path + "' was trained on backbone " +
                               a.backbone_hash.substr(0, 12) + "..., loaded backbone is " +
                               backbone->content_hash().substr(0, 12) + "...");
    }
    check_adapter_shapes(*backbone, a);
  }
  return a;
}

}  // namespace m2gl
