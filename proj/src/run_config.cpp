#include "crowdnav/run_config.hpp"

#include "crowdnav/config_io.hpp"

#include <fstream>

namespace crowdnav {

using nlohmann::json;

void RunConfig::finalize() {
  if (seed) {
    setup.ppo.seed = *seed;
    setup.env.seed = *seed;
  }
  setup.policy = policy_config_for(setup.env, setup.policy);
  if (threads < 1) throw std::invalid_argument("threads must be at least 1");
  if (checkpoint_every < 1) throw std::invalid_argument("train.checkpoint_every must be at least 1");
  setup.validate();
}

json RunConfig::to_json() const {
  json j = setup.to_json();
  j["seed"] = seed ? json(*seed) : json(nullptr);
  j["threads"] = threads;
  j["train"] = {{"checkpoint_every", checkpoint_every}};
  j["suite"] = {{"seeds", suite}};
  return j;
}

RunConfig run_config_from_json(const json& j) {
  RunConfig c;
  StrictObject o(j, "config");
  if (const json* v = o.take("seed"); v && !v->is_null()) c.seed = v->get<std::uint64_t>();
  o.read("threads", c.threads);
  if (const json* v = o.take("env")) update_from_json(*v, c.setup.env);
  c.setup.features.position_scale = c.setup.env.arena_half_width;
  if (const json* v = o.take("policy")) {
    // Input sizes follow the env unless given explicitly.
    c.setup.policy = policy_config_for(c.setup.env, c.setup.policy);
    update_from_json(*v, c.setup.policy);
  }
  if (const json* v = o.take("ppo")) update_from_json(*v, c.setup.ppo);
  if (const json* v = o.take("features")) update_from_json(*v, c.setup.features);
  if (const json* v = o.take("train")) {
    StrictObject t(*v, "config.train");
    t.read("checkpoint_every", c.checkpoint_every);
    t.finish();
  }
  if (const json* v = o.take("suite")) {
    StrictObject s(*v, "config.suite");
    s.read("seeds", c.suite);
    s.finish();
  }
  o.finish();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot read config file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw std::invalid_argument(path.string() + ": " + e.what());
  }
  return run_config_from_json(j);
}

}  // namespace crowdnav
