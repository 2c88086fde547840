#pragma once

#include "crowdnav/autodiff.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace crowdnav {

/// Binary checkpoint: magic, version, JSON header (metadata + tensor
/// manifest), float32 little-endian tensor data, FNV-1a checksum.
struct Checkpoint {
  nlohmann::json metadata = nlohmann::json::object();
  std::vector<std::pair<std::string, nn::Matrix<float>>> tensors;

  const nn::Matrix<float>& tensor(const std::string& name) const;
  bool has_tensor(const std::string& name) const;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(const std::string& bytes);

/// Written to a temporary file and renamed into place.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
/// Throws CheckpointError on a missing, truncated or corrupt file.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace crowdnav
