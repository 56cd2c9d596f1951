#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "emoser/error.hpp"
#include "emoser/features.hpp"
#include "emoser/json_util.hpp"
#include "emoser/ravdess.hpp"
#include "emoser/train.hpp"

namespace emoser {

struct SplitSettings {
  double ratio = 0.75;
  std::uint64_t seed = 7;
  ravdess::SplitStrategy strategy = ravdess::SplitStrategy::StratifiedByEmotion;
};

struct PathSettings {
  std::string corpus;
  std::string cache;
  std::string checkpoint;
  std::string reports;
};

/// Top-level JSON configuration. Every section and key is optional; unknown
/// keys are rejected.
struct AppConfig {
  PipelineConfig pipeline;
  TrainConfig train;
  SplitSettings split;
  PathSettings paths;
};

inline void to_json(nlohmann::json& j, const AppConfig& c) {
  j = {{"pipeline", c.pipeline},
       {"train", c.train},
       {"split",
        {{"ratio", c.split.ratio}, {"seed", c.split.seed}, {"strategy", std::string(to_string(c.split.strategy))}}},
       {"paths",
        {{"corpus", c.paths.corpus},
         {"cache", c.paths.cache},
         {"checkpoint", c.paths.checkpoint},
         {"reports", c.paths.reports}}}};
}

inline AppConfig parse_app_config(const nlohmann::json& j) {
  detail::require_known_keys(j, {"pipeline", "train", "split", "paths"}, "config");
  AppConfig c;
  if (j.contains("pipeline")) c.pipeline = j.at("pipeline").get<PipelineConfig>();
  if (j.contains("train")) c.train = j.at("train").get<TrainConfig>();
  if (j.contains("split")) {
    const auto& s = j.at("split");
    detail::require_known_keys(s, {"ratio", "seed", "strategy"}, "split");
    detail::read_optional(s, "ratio", c.split.ratio, "split");
    detail::read_optional(s, "seed", c.split.seed, "split");
    std::string strategy(to_string(c.split.strategy));
    detail::read_optional(s, "strategy", strategy, "split");
    try {
      c.split.strategy = ravdess::parse_strategy(strategy);
    } catch (const Error& e) {
      fail(Errc::ConfigParseError, e.what());
    }
    if (!(c.split.ratio > 0.0 && c.split.ratio < 1.0)) fail(Errc::ConfigParseError, "split.ratio must lie in (0, 1)");
  }
  if (j.contains("paths")) {
    const auto& p = j.at("paths");
    detail::require_known_keys(p, {"corpus", "cache", "checkpoint", "reports"}, "paths");
    detail::read_optional(p, "corpus", c.paths.corpus, "paths");
    detail::read_optional(p, "cache", c.paths.cache, "paths");
    detail::read_optional(p, "checkpoint", c.paths.checkpoint, "paths");
    detail::read_optional(p, "reports", c.paths.reports, "paths");
  }
  return c;
}

inline AppConfig load_app_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::ConfigParseError, "cannot open config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::ConfigParseError, path.string() + ": " + e.what());
  }
  return parse_app_config(j);
}

}  // namespace emoser
