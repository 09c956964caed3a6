#pragma once

// CUTM model files: a JSON manifest at <path> and a little-endian float64 blob
// at <path>.bin. The blob starts with the 4-byte magic "CUTM" and a u32 format
// version; manifest offsets are byte offsets into the blob.

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>

#include <json.hpp>

#include "cutrack/nn.hpp"

namespace cutrack {

inline constexpr std::string_view kCutmMagic = "CUTM";
inline constexpr std::uint32_t kCutmVersion = 1;

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Reads j[key] into dst when present. A type mismatch throws
/// std::invalid_argument("invalid value <where><key>: ...").
template <typename T>
void read_field(const nlohmann::json& j, const char* key, T& dst, std::string_view where) {
  const auto it = j.find(key);
  if (it == j.end()) return;
  try {
    dst = it->template get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("invalid value " + std::string(where) + key + ": " + e.what());
  }
}

/// Writes bytes to a temporary sibling and renames it over path.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);
std::string read_file(const std::filesystem::path& path);

std::filesystem::path cutm_blob_path(const std::filesystem::path& manifest);

/// metadata is stored verbatim under the manifest's "metadata" key.
void save_cutm(const std::filesystem::path& manifest, const ParameterStore& store, const nlohmann::json& metadata);

nlohmann::json read_cutm_manifest(const std::filesystem::path& manifest);

/// Fills every parameter of store from the file. Names and shapes must match exactly.
void load_cutm_params(const std::filesystem::path& manifest, ParameterStore& store);

}  // namespace cutrack
