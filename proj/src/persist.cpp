#include "modify/persist.hpp"

#include <algorithm>
#include <bit>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <zlib.h>

namespace fs = std::filesystem;

namespace modify::persist {

static_assert(std::endian::native == std::endian::little,
              "package blobs are little-endian float32; big-endian hosts are unsupported");

namespace {

std::uint32_t crc_bytes(std::uint32_t crc, const void* p, std::size_t n) {
  return static_cast<std::uint32_t>(
      ::crc32(crc, static_cast<const Bytef*>(p), static_cast<uInt>(n)));
}

std::uint32_t crc_of_tensor(const Tensor<float>& t) {
  return crc_bytes(0, t.data(), sizeof(float) * static_cast<std::size_t>(t.numel()));
}

std::string hex32(std::uint32_t v) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%08x", v);
  return buf;
}

void sort_and_check(std::vector<Entry>& entries) {
  std::sort(entries.begin(), entries.end(),
            [](const Entry& a, const Entry& b) { return a.name < b.name; });
  for (std::size_t i = 1; i < entries.size(); ++i)
    if (entries[i].name == entries[i - 1].name)
      throw PackageError("duplicate parameter name: " + entries[i].name);
}

int parse_major(const std::string& version) {
  const auto dot = version.find('.');
  if (dot == std::string::npos) throw PackageError("malformed format_version: " + version);
  return std::stoi(version.substr(0, dot));
}

}  // namespace

std::uint32_t canonical_checksum(std::vector<Entry> entries) {
  sort_and_check(entries);
  std::uint32_t crc = 0;
  for (const auto& e : entries) {
    crc = crc_bytes(crc, e.name.data(), e.name.size() + 1);
    for (int d : e.data.shape()) {
      const std::int32_t v = d;
      crc = crc_bytes(crc, &v, sizeof v);
    }
    crc = crc_bytes(crc, e.data.data(), sizeof(float) * static_cast<std::size_t>(e.data.numel()));
  }
  return crc;
}

std::uint32_t params_checksum(const std::vector<nets::NamedParam<float>>& params) {
  std::vector<Entry> entries;
  entries.reserve(params.size());
  for (const auto& p : params) entries.push_back({p.name, p.var.value()});
  return canonical_checksum(std::move(entries));
}

void write_bundle(const std::string& dir, nlohmann::json manifest, std::vector<Entry> entries) {
  sort_and_check(entries);
  fs::create_directories(fs::path(dir) / "weights");

  nlohmann::json params = nlohmann::json::array();
  for (const auto& e : entries) {
    const std::string path = (fs::path(dir) / "weights" / (e.name + ".bin")).string();
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw PackageError("cannot write blob: " + path);
    f.write(reinterpret_cast<const char*>(e.data.data()),
            static_cast<std::streamsize>(sizeof(float) * e.data.numel()));
    if (!f) throw PackageError("short write: " + path);
    params.push_back({{"name", e.name},
                      {"shape", e.data.shape()},
                      {"bytes", sizeof(float) * e.data.numel()},
                      {"crc32", hex32(crc_of_tensor(e.data))}});
  }
  manifest["params"] = std::move(params);
  manifest["canonical_checksum"] = "crc32:" + hex32(canonical_checksum(std::move(entries)));
  if (!manifest.contains("created_at")) manifest["created_at"] = nullptr;
  if (!manifest.contains("format_version")) manifest["format_version"] = kFormatVersion;

  std::ofstream mf(fs::path(dir) / "manifest.json", std::ios::trunc);
  if (!mf) throw PackageError("cannot write manifest in " + dir);
  mf << manifest.dump(2) << "\n";
}

Bundle read_bundle(const std::string& dir) {
  const fs::path mpath = fs::path(dir) / "manifest.json";
  std::ifstream mf(mpath);
  if (!mf) throw PackageError("missing manifest: " + mpath.string());
  Bundle b;
  try {
    mf >> b.manifest;
  } catch (const std::exception& e) {
    throw PackageError("malformed manifest: " + std::string(e.what()));
  }
  const std::string version = b.manifest.at("format_version").get<std::string>();
  if (parse_major(version) != parse_major(kFormatVersion))
    throw PackageError("unsupported format version " + version + " (loader supports major " +
                       std::to_string(parse_major(kFormatVersion)) + ")");

  for (const auto& p : b.manifest.at("params")) {
    const std::string name = p.at("name").get<std::string>();
    const Shape shape = p.at("shape").get<Shape>();
    const std::uint64_t bytes = p.at("bytes").get<std::uint64_t>();
    if (bytes != sizeof(float) * static_cast<std::uint64_t>(shape_numel(shape)))
      throw PackageError("parameter '" + name + "': manifest shape/bytes mismatch");
    const fs::path bpath = fs::path(dir) / "weights" / (name + ".bin");
    std::error_code ec;
    if (fs::file_size(bpath, ec) != bytes || ec)
      throw PackageError("parameter '" + name + "': blob length does not match manifest");
    std::ifstream f(bpath, std::ios::binary);
    if (!f) throw PackageError("parameter '" + name + "': missing blob");
    Tensor<float> t(shape);
    f.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(bytes));
    if (!f) throw PackageError("parameter '" + name + "': short read");
    if (hex32(crc_of_tensor(t)) != p.at("crc32").get<std::string>())
      throw PackageError("parameter '" + name + "': checksum failure");
    b.weights.emplace(name, std::move(t));
  }

  // strict file census: nothing in weights/ beyond the manifest index
  for (const auto& e : fs::directory_iterator(fs::path(dir) / "weights")) {
    const std::string fn = e.path().filename().string();
    if (fn.size() < 4 || fn.substr(fn.size() - 4) != ".bin" ||
        !b.weights.count(fn.substr(0, fn.size() - 4)))
      throw PackageError("unexpected file in weight table: " + fn);
  }
  return b;
}

void save_package(const model::Model<float>& m, const std::string& dir, nlohmann::json extras,
                  bool include_critic) {
  nlohmann::json manifest;
  manifest["format_version"] = kFormatVersion;
  manifest["kind"] = "package";
  manifest["created_at"] = nullptr;
  model::to_json(manifest["pipeline"], m.cfg);
  manifest["seed"] = m.seed;
  manifest["has_critic"] = include_critic;
  for (auto& [k, v] : extras.items()) manifest[k] = v;

  std::vector<Entry> entries;
  for (const auto& p : m.all_params(include_critic)) entries.push_back({p.name, p.var.value()});
  write_bundle(dir, std::move(manifest), std::move(entries));
}

model::Model<float> model_from_bundle(const Bundle& b, bool* has_critic_out) {
  model::PipelineConfig cfg;
  model::from_json(b.manifest.at("pipeline"), cfg);
  const std::uint64_t seed = b.manifest.at("seed").get<std::uint64_t>();
  const bool has_critic = b.manifest.at("has_critic").get<bool>();
  auto m = model::Model<float>::init(cfg, seed);

  const bool is_checkpoint = b.manifest.at("kind").get<std::string>() == "checkpoint";
  std::map<std::string, bool> consumed;
  for (const auto& [name, t] : b.weights) consumed[name] = false;

  for (const auto& p : m.all_params(has_critic)) {
    auto it = b.weights.find(p.name);
    if (it == b.weights.end()) throw PackageError("missing parameter: " + p.name);
    try {
      nets::set_param_value(p.var, it->second);
    } catch (const ShapeError& e) {
      throw PackageError("parameter '" + p.name + "': " + e.what());
    }
    consumed[p.name] = true;
  }
  for (const auto& [name, used] : consumed) {
    if (used) continue;
    const bool aux = name.rfind("opt.", 0) == 0 || name.rfind("encoder_frozen.", 0) == 0;
    if (!is_checkpoint || !aux) throw PackageError("unexpected parameter in weight table: " + name);
  }
  if (has_critic_out) *has_critic_out = has_critic;
  return m;
}

LoadedPackage load_package(const std::string& dir) {
  Bundle b = read_bundle(dir);
  LoadedPackage lp;
  lp.model = model_from_bundle(b, &lp.has_critic);
  lp.manifest = std::move(b.manifest);
  return lp;
}

std::string fingerprint(const std::string& dir) {
  const fs::path mpath = fs::path(dir) / "manifest.json";
  std::ifstream mf(mpath);
  if (!mf) throw PackageError("missing manifest: " + mpath.string());
  nlohmann::json manifest;
  mf >> manifest;
  return manifest.at("canonical_checksum").get<std::string>();
}

bool contains_image_payload(const std::string& dir) {
  static const unsigned char png_magic[4] = {0x89, 'P', 'N', 'G'};
  static const unsigned char jpg_magic[3] = {0xFF, 0xD8, 0xFF};

  nlohmann::json manifest;
  {
    std::ifstream mf(fs::path(dir) / "manifest.json");
    if (!mf) return true;  // not even a package
    mf >> manifest;
  }
  std::map<std::string, std::uint64_t> indexed;
  for (const auto& p : manifest.at("params"))
    indexed[p.at("name").get<std::string>() + ".bin"] = p.at("bytes").get<std::uint64_t>();

  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const fs::path rel = fs::relative(e.path(), dir);
    if (rel == "manifest.json") continue;
    if (rel.parent_path() != "weights") return true;
    auto it = indexed.find(rel.filename().string());
    if (it == indexed.end() || fs::file_size(e.path()) != it->second) return true;
    std::ifstream f(e.path(), std::ios::binary);
    unsigned char head[4] = {0, 0, 0, 0};
    f.read(reinterpret_cast<char*>(head), 4);
    if (std::memcmp(head, png_magic, 4) == 0 || std::memcmp(head, jpg_magic, 3) == 0) return true;
  }
  return false;
}

void append_optimizer_entries(const std::string& group, const optim::Adam<float>& opt,
                              std::vector<Entry>& out) {
  for (const auto& s : opt.slots()) {
    out.push_back({"opt." + group + "." + s.name + ".m", s.m});
    out.push_back({"opt." + group + "." + s.name + ".v", s.v});
  }
}

void restore_optimizer_entries(const std::string& group, const Bundle& b, optim::Adam<float>& opt,
                               std::int64_t step_t) {
  for (auto& s : opt.slots()) {
    const std::string base = "opt." + group + "." + s.name;
    auto im = b.weights.find(base + ".m");
    auto iv = b.weights.find(base + ".v");
    if (im == b.weights.end() || iv == b.weights.end())
      throw PackageError("checkpoint missing optimizer state for " + s.name);
    if (im->second.shape() != s.m.shape())
      throw PackageError("optimizer state shape mismatch for " + s.name);
    s.m = im->second.clone();
    s.v = iv->second.clone();
  }
  opt.set_step_count(step_t);
}

}  // namespace modify::persist
