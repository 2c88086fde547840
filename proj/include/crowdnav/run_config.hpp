#pragma once

#include "crowdnav/ppo.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <string>

namespace crowdnav {

/// Top-level run file. Every field is optional; unknown keys are rejected.
struct RunConfig {
  std::optional<std::uint64_t> seed;  // required by train and eval
  int threads = 1;
  TrainerSetup setup;
  int checkpoint_every = 10;  // iterations
  std::string suite = "0-499";

  /// Applies the seed to the env and trainer, and syncs the policy input
  /// dimensions with the env.
  void finalize();
  /// Effective config, every default filled in.
  nlohmann::json to_json() const;
};

RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace crowdnav
