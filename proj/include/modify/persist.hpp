#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "modify/model.hpp"
#include "modify/optim.hpp"

namespace modify::persist {

inline constexpr const char* kFormatVersion = "1.0";

// Package directory layout (the external interface, stable within a major
// version):
//   manifest.json       — format_version, kind, pipeline config, seed,
//                         sorted parameter index (name/shape/bytes/crc32),
//                         canonical_checksum, created_at (excluded from the
//                         checksum; null unless a caller stamps it)
//   weights/<name>.bin  — one little-endian float32 row-major blob per
//                         parameter, exactly as indexed by the manifest
// Checkpoints use the same layout plus optimizer moment blobs under
// "opt.<group>.<param>.{m,v}" names and trainer metadata in the manifest.

struct Entry {
  std::string name;
  Tensor<float> data;
};

std::uint32_t canonical_checksum(std::vector<Entry> entries);  // order-insensitive (sorts by name)

void write_bundle(const std::string& dir, nlohmann::json manifest, std::vector<Entry> entries);

struct Bundle {
  nlohmann::json manifest;
  std::map<std::string, Tensor<float>> weights;
};

Bundle read_bundle(const std::string& dir);

// Rebuilds the model named by a bundle's manifest and installs its weights.
// Checkpoint bundles may carry extra "opt.*" / "encoder_frozen.*" entries;
// anything else unexpected is an error naming the parameter.
model::Model<float> model_from_bundle(const Bundle& b, bool* has_critic_out = nullptr);

// Model-level package operations.
void save_package(const model::Model<float>& m, const std::string& dir, nlohmann::json extras,
                  bool include_critic = true);

struct LoadedPackage {
  model::Model<float> model;
  nlohmann::json manifest;
  bool has_critic = false;
};

LoadedPackage load_package(const std::string& dir);

std::string fingerprint(const std::string& dir);

// Privacy scan: true if the directory contains anything that looks like image
// data (unexpected files, blob/manifest disagreement, PNG/JPEG magic bytes).
bool contains_image_payload(const std::string& dir);

std::uint32_t params_checksum(const std::vector<nets::NamedParam<float>>& params);

// optimizer state <-> weight entries
void append_optimizer_entries(const std::string& group, const optim::Adam<float>& opt,
                              std::vector<Entry>& out);
void restore_optimizer_entries(const std::string& group, const Bundle& b, optim::Adam<float>& opt,
                               std::int64_t step_t);

}  // namespace modify::persist
