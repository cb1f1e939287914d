#pragma once

// Service configuration: a JSON file (nested objects or dotted keys) with
// AFM_* environment overrides, e.g. AFM_SCHEDULER_GAMMA=4 for scheduler.gamma.

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <string>

#include "afm/domain.hpp"
#include "afm/errors.hpp"
#include "afm/generation_queue.hpp"
#include "afm/recommender.hpp"
#include "afm/scheduler.hpp"

namespace afm {

struct ServiceConfig {
  std::filesystem::path data_dir = "data";
  std::filesystem::path catalog_path = "fixtures/catalog.json";
  std::string admin_token;  // empty disables the admin endpoint
  std::string bind_addr = "127.0.0.1:8080";
  std::filesystem::path web_root;
  bool log_fsync = true;
  std::chrono::milliseconds worker_tick{250};
  double rate_limit_per_sec = 10.0;  // per session; 0 disables
  std::optional<std::uint64_t> session_seed;
  std::string generator = "mock";
  std::string generator_command;
  QueueConfig queue;
  SchedulerConfig scheduler;
  RecommenderConfig recommender;

  void validate() const {
    scheduler.validate();
    recommender.validate();
    if (generator != "mock" && generator != "external")
      throw ValidationError("generator must be 'mock' or 'external'");
    if (queue.capacity == 0) throw ValidationError("queue_capacity must be positive");
    if (rate_limit_per_sec < 0) throw ValidationError("rate_limit_per_sec must be nonnegative");
  }
};

namespace detail {

inline void flatten(const Json& j, const std::string& prefix, std::map<std::string, Json>& out) {
  // scheduler.outcome_weights is the one object-valued leaf.
  if (j.is_object() && prefix != "scheduler.outcome_weights") {
    for (const auto& [k, v] : j.items()) flatten(v, prefix.empty() ? k : prefix + "." + k, out);
    return;
  }
  out[prefix] = j;
}

template <typename T>
T number(const Json& v, const std::string& key) {
  if (!v.is_number()) throw ValidationError("config key '" + key + "' must be a number");
  return v.get<T>();
}

template <typename T>
T unsigned_number(const Json& v, const std::string& key) {
  if (!v.is_number_integer() || v.get<std::int64_t>() < 0)
    throw ValidationError("config key '" + key + "' must be a nonnegative integer");
  return v.get<T>();
}

inline std::string text(const Json& v, const std::string& key) {
  if (!v.is_string()) throw ValidationError("config key '" + key + "' must be a string");
  return v.get<std::string>();
}

}  // namespace detail

inline void apply_config_value(ServiceConfig& c, const std::string& key, const Json& v) {
  using namespace detail;
  if (key == "data_dir") c.data_dir = text(v, key);
  else if (key == "catalog_path") c.catalog_path = text(v, key);
  else if (key == "admin_token") c.admin_token = text(v, key);
  else if (key == "bind_addr") c.bind_addr = text(v, key);
  else if (key == "web_root") c.web_root = text(v, key);
  else if (key == "log_fsync") {
    if (!v.is_boolean()) throw ValidationError("config key 'log_fsync' must be a boolean");
    c.log_fsync = v.get<bool>();
  } else if (key == "worker_tick_ms") c.worker_tick = std::chrono::milliseconds(unsigned_number<std::int64_t>(v, key));
  else if (key == "rate_limit_per_sec") c.rate_limit_per_sec = number<double>(v, key);
  else if (key == "session_seed") c.session_seed = unsigned_number<std::uint64_t>(v, key);
  else if (key == "generator") c.generator = text(v, key);
  else if (key == "generator_command") c.generator_command = text(v, key);
  else if (key == "generation_latency_ms") c.queue.latency = std::chrono::milliseconds(unsigned_number<std::int64_t>(v, key));
  else if (key == "queue_capacity") c.queue.capacity = unsigned_number<std::size_t>(v, key);
  else if (key == "generation_seed") c.queue.seed = unsigned_number<std::uint64_t>(v, key);
  else if (key == "scheduler.M") c.scheduler.M = unsigned_number<std::size_t>(v, key);
  else if (key == "scheduler.gamma") c.scheduler.gamma = unsigned_number<std::size_t>(v, key);
  else if (key == "scheduler.ridge_lambda") c.scheduler.ridge_lambda = number<double>(v, key);
  else if (key == "scheduler.min_ratings_for_fit") c.scheduler.min_ratings_for_fit = unsigned_number<std::size_t>(v, key);
  else if (key == "scheduler.min_songs_for_fit") c.scheduler.min_songs_for_fit = unsigned_number<std::size_t>(v, key);
  else if (key == "scheduler.outcome_mode") c.scheduler.outcome.mode = parse_outcome_mode(text(v, key));
  else if (key == "scheduler.outcome_weights") {
    if (!v.is_object()) throw ValidationError("scheduler.outcome_weights must be an object");
    for (const auto& [name, w] : v.items()) {
      const auto q = parse_question(name);
      if (!q) throw ValidationError("unknown question '" + name + "' in scheduler.outcome_weights");
      c.scheduler.outcome.mix_weights[index_of(*q)] = number<double>(w, key);
    }
  } else if (key == "scheduler.seed") c.scheduler.rng_seed = unsigned_number<std::uint64_t>(v, key);
  else if (key == "recommender.B") c.recommender.B = number<double>(v, key);
  else if (key == "recommender.exponent_clamp") c.recommender.exponent_clamp = number<double>(v, key);
  else if (key == "recommender.distance_floor") c.recommender.distance_floor = number<double>(v, key);
  else throw ValidationError("unknown config key '" + key + "'");
}

inline constexpr const char* kConfigKeys[] = {
    "data_dir",          "catalog_path",          "admin_token",           "bind_addr",
    "web_root",          "log_fsync",             "worker_tick_ms",        "rate_limit_per_sec",
    "session_seed",      "generator",             "generator_command",     "generation_latency_ms",
    "queue_capacity",    "generation_seed",       "scheduler.M",           "scheduler.gamma",
    "scheduler.ridge_lambda", "scheduler.min_ratings_for_fit", "scheduler.min_songs_for_fit",
    "scheduler.outcome_mode", "scheduler.outcome_weights", "scheduler.seed", "recommender.B",
    "recommender.exponent_clamp", "recommender.distance_floor"};

inline ServiceConfig config_from_json(const Json& doc, ServiceConfig base = {}) {
  if (!doc.is_object()) throw ValidationError("config document must be a JSON object");
  std::map<std::string, Json> flat;
  detail::flatten(doc, "", flat);
  for (const auto& [k, v] : flat) apply_config_value(base, k, v);
  return base;
}

inline std::string env_name_for(std::string key) {
  std::replace(key.begin(), key.end(), '.', '_');
  for (auto& ch : key) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
  return "AFM_" + key;
}

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;

inline std::optional<std::string> process_env(const std::string& name) {
  if (const char* v = std::getenv(name.c_str())) return std::string(v);
  return std::nullopt;
}

inline bool is_text_config_key(std::string_view key) {
  for (std::string_view k : {"data_dir", "catalog_path", "admin_token", "bind_addr", "web_root", "generator",
                             "generator_command", "scheduler.outcome_mode"})
    if (k == key) return true;
  return false;
}

// Text keys take the raw value; the rest parse as JSON (numbers, booleans,
// objects).
inline void apply_env_overrides(ServiceConfig& c, const EnvLookup& env = process_env) {
  for (const char* key : kConfigKeys) {
    const auto raw = env(env_name_for(key));
    if (!raw) continue;
    Json v = is_text_config_key(key) ? Json(*raw) : Json::parse(*raw, nullptr, false);
    if (v.is_discarded()) throw ValidationError("environment override " + env_name_for(key) + " is not valid");
    apply_config_value(c, key, v);
  }
}

inline ServiceConfig load_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open config '" + path.string() + "'");
  Json doc = Json::parse(in, nullptr, false);
  if (doc.is_discarded()) throw LoadError("config '" + path.string() + "' is not valid JSON");
  return config_from_json(doc);
}

}  // namespace afm
