#pragma once

#include "crowdnav/env.hpp"
#include "crowdnav/features.hpp"
#include "crowdnav/policy.hpp"

#include <json.hpp>

#include <set>
#include <string>

namespace crowdnav {

/// Reads fields out of a JSON object and remembers which keys were used, so
/// leftovers can be rejected.
class StrictObject {
 public:
  StrictObject(const nlohmann::json& j, std::string context);

  template <typename T>
  void read(const std::string& key, T& out) {
    if (const nlohmann::json* v = take(key)) {
      try {
        out = v->get<T>();
      } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(context_ + "." + key + ": " + e.what());
      }
    }
  }
  /// Null if absent.
  const nlohmann::json* take(const std::string& key);
  const std::string& context() const { return context_; }
  /// Throws naming the first unknown key.
  void finish() const;

 private:
  const nlohmann::json& j_;
  std::string context_;
  std::set<std::string> used_;
};

nlohmann::json to_json(const EnvConfig& c);
nlohmann::json to_json(const PolicyConfig& c);
nlohmann::json to_json(const FeatureConfig& c);

/// Each field is optional; present fields override `out`. Unknown keys throw.
void update_from_json(const nlohmann::json& j, EnvConfig& out, const std::string& context = "env");
void update_from_json(const nlohmann::json& j, PolicyConfig& out, const std::string& context = "policy");
void update_from_json(const nlohmann::json& j, FeatureConfig& out, const std::string& context = "features");

/// FNV-1a 64 of a string, as 16 hex digits.
std::string fnv1a_hex(const std::string& text);

}  // namespace crowdnav
