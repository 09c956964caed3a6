#include "cutrack/serialize.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace cutrack {

namespace fs = std::filesystem;

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

void put_f64(std::string& out, double d) {
  const auto v = std::bit_cast<std::uint64_t>(d);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

std::uint32_t get_u32(std::string_view s, std::size_t off) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(s[off + i])) << (8 * i);
  return v;
}

double get_f64(std::string_view s, std::size_t off) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(s[off + i])) << (8 * i);
  return std::bit_cast<double>(v);
}

}  // namespace

void write_file_atomic(const fs::path& path, std::string_view bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open for writing: " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for reading: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path cutm_blob_path(const fs::path& manifest) {
  fs::path p = manifest;
  p += ".bin";
  return p;
}

void save_cutm(const fs::path& manifest, const ParameterStore& store, const nlohmann::json& metadata) {
  std::string blob(kCutmMagic);
  put_u32(blob, kCutmVersion);
  nlohmann::json params = nlohmann::json::array();
  for (std::size_t i = 0; i < store.size(); ++i) {
    const Parameter& p = store[i];
    params.push_back({{"name", p.name},
                      {"shape", p.value.shape()},
                      {"offset", blob.size()},
                      {"count", p.value.size()}});
    for (double v : p.value.data()) put_f64(blob, v);
  }
  nlohmann::json doc = {{"magic", kCutmMagic},
                        {"version", kCutmVersion},
                        {"blob", cutm_blob_path(manifest).filename().string()},
                        {"blob_bytes", blob.size()},
                        {"parameters", params},
                        {"metadata", metadata}};
  write_file_atomic(cutm_blob_path(manifest), blob);
  write_file_atomic(manifest, doc.dump(2) + "\n");
}

nlohmann::json read_cutm_manifest(const fs::path& manifest) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(read_file(manifest));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError("CUTM manifest is not valid JSON: " + std::string(e.what()));
  }
  if (!doc.is_object() || doc.value("magic", "") != kCutmMagic) throw FormatError("bad magic in CUTM manifest");
  if (doc.value("version", 0u) != kCutmVersion) throw FormatError("unsupported CUTM version");
  return doc;
}

void load_cutm_params(const fs::path& manifest, ParameterStore& store) {
  const nlohmann::json doc = read_cutm_manifest(manifest);
  const std::string blob = read_file(cutm_blob_path(manifest));
  if (blob.size() < 8 || std::string_view(blob).substr(0, 4) != kCutmMagic) throw FormatError("bad magic in CUTM blob");
  if (get_u32(blob, 4) != kCutmVersion) throw FormatError("unsupported CUTM blob version");

  const auto& params = doc.at("parameters");
  if (params.size() != store.size()) {
    throw FormatError("CUTM file has " + std::to_string(params.size()) + " parameters, model expects " +
                      std::to_string(store.size()));
  }
  for (const auto& entry : params) {
    const std::string name = entry.at("name");
    if (!store.contains(name)) throw FormatError("CUTM parameter not in model: " + name);
    Parameter& p = store.get(name);
    const Shape shape = entry.at("shape").get<Shape>();
    if (shape != p.value.shape()) {
      throw FormatError("shape mismatch for " + name + ": file " + shape_str(shape) + ", model " +
                        shape_str(p.value.shape()));
    }
    const std::size_t offset = entry.at("offset");
    const std::size_t count = entry.at("count");
    if (count != p.value.size() || offset + 8 * count > blob.size()) throw FormatError("truncated CUTM blob at " + name);
    for (std::size_t i = 0; i < count; ++i) p.value[i] = get_f64(blob, offset + 8 * i);
  }
}

}  // namespace cutrack
