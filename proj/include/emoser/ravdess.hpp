#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "emoser/archive.hpp"
#include "emoser/audio.hpp"
#include "emoser/error.hpp"
#include "emoser/features.hpp"
#include "emoser/parallel.hpp"
#include "emoser/rng.hpp"

namespace emoser::ravdess {

enum class Modality : std::uint8_t { FullAV = 1, VideoOnly = 2, AudioOnly = 3 };
enum class Channel : std::uint8_t { Speech = 1, Song = 2 };
enum class Emotion : std::uint8_t { Neutral = 1, Calm, Happy, Sad, Angry, Fearful, Disgust, Surprised };
enum class Intensity : std::uint8_t { Normal = 1, Strong = 2 };
enum class Statement : std::uint8_t { Kids = 1, Dogs = 2 };
enum class Gender : std::uint8_t { Male, Female };

inline constexpr std::size_t kNumEmotions = 8;
inline constexpr std::size_t kNumActors = 24;

/// Emotion names in code order; index = emotion code - 1 = class label.
inline constexpr std::array<std::string_view, kNumEmotions> kEmotionNames = {
    "neutral", "calm", "happy", "sad", "angry", "fearful", "disgust", "surprised"};

/// Decoded 7-part RAVDESS identifier.
struct RavdessMeta {
  Modality modality = Modality::AudioOnly;
  Channel channel = Channel::Speech;
  Emotion emotion = Emotion::Neutral;
  Intensity intensity = Intensity::Normal;
  Statement statement = Statement::Kids;
  std::uint8_t repetition = 1;
  std::uint8_t actor = 1;

  // Odd-numbered actors are male.
  Gender gender() const { return actor % 2 == 1 ? Gender::Male : Gender::Female; }
  std::uint8_t label() const { return static_cast<std::uint8_t>(static_cast<int>(emotion) - 1); }

  friend bool operator==(const RavdessMeta&, const RavdessMeta&) = default;
};

inline std::string_view emotion_name(Emotion e) { return kEmotionNames[static_cast<std::size_t>(e) - 1]; }

/// Parses "MM-CC-EE-II-SS-RR-AA.wav". A leading directory is ignored.
inline RavdessMeta parse_filename(std::string_view name) {
  if (const auto slash = name.find_last_of("/\\"); slash != std::string_view::npos) name.remove_prefix(slash + 1);
  const std::string full(name);
  auto lower_ends_with_wav = [](std::string_view s) {
    if (s.size() < 4) return false;
    std::string tail(s.substr(s.size() - 4));
    std::transform(tail.begin(), tail.end(), tail.begin(), [](unsigned char c) { return std::tolower(c); });
    return tail == ".wav";
  };
  if (!lower_ends_with_wav(name)) fail(Errc::BadExtension, full + " does not end in .wav");
  name.remove_suffix(4);

  std::vector<std::string_view> parts;
  for (std::size_t start = 0;;) {
    const auto dash = name.find('-', start);
    parts.push_back(name.substr(start, dash == std::string_view::npos ? std::string_view::npos : dash - start));
    if (dash == std::string_view::npos) break;
    start = dash + 1;
  }
  if (parts.size() != 7) {
    fail(Errc::BadPartCount, full + " has " + std::to_string(parts.size()) + " parts, expected 7");
  }

  static constexpr std::array<std::string_view, 7> kFields = {"modality",  "channel",    "emotion", "intensity",
                                                              "statement", "repetition", "actor"};
  static constexpr std::array<int, 7> kMax = {3, 2, 8, 2, 2, 2, 24};
  std::array<int, 7> code{};
  for (std::size_t i = 0; i < 7; ++i) {
    const auto p = parts[i];
    if (p.size() != 2 || !std::isdigit(static_cast<unsigned char>(p[0])) ||
        !std::isdigit(static_cast<unsigned char>(p[1]))) {
      fail(Errc::NonNumericPart, full + ": " + std::string(kFields[i]) + " part \"" + std::string(p) +
                                     "\" is not two decimal digits");
    }
    std::from_chars(p.data(), p.data() + 2, code[i]);
    if (code[i] < 1 || code[i] > kMax[i]) {
      fail(Errc::CodeOutOfRange, full + ": " + std::string(kFields[i]) + " code " + std::string(p) + " out of range");
    }
  }

  RavdessMeta meta;
  meta.modality = static_cast<Modality>(code[0]);
  meta.channel = static_cast<Channel>(code[1]);
  meta.emotion = static_cast<Emotion>(code[2]);
  meta.intensity = static_cast<Intensity>(code[3]);
  meta.statement = static_cast<Statement>(code[4]);
  meta.repetition = static_cast<std::uint8_t>(code[5]);
  meta.actor = static_cast<std::uint8_t>(code[6]);
  if (meta.emotion == Emotion::Neutral && meta.intensity == Intensity::Strong) {
    fail(Errc::NeutralStrongConflict, full + ": neutral has no strong intensity");
  }
  return meta;
}

inline std::string render_filename(const RavdessMeta& m) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%02d-%02d-%02d-%02d-%02d-%02d-%02d.wav", static_cast<int>(m.modality),
                static_cast<int>(m.channel), static_cast<int>(m.emotion), static_cast<int>(m.intensity),
                static_cast<int>(m.statement), static_cast<int>(m.repetition), static_cast<int>(m.actor));
  return buf;
}

/// Every identifier the naming convention admits (neutral/strong excluded).
inline std::vector<RavdessMeta> enumerate_valid_metas() {
  std::vector<RavdessMeta> out;
  for (int mo = 1; mo <= 3; ++mo)
    for (int ch = 1; ch <= 2; ++ch)
      for (int em = 1; em <= 8; ++em)
        for (int in = 1; in <= 2; ++in) {
          if (em == 1 && in == 2) continue;
          for (int st = 1; st <= 2; ++st)
            for (int rep = 1; rep <= 2; ++rep)
              for (int actor = 1; actor <= 24; ++actor) {
                out.push_back({static_cast<Modality>(mo), static_cast<Channel>(ch), static_cast<Emotion>(em),
                               static_cast<Intensity>(in), static_cast<Statement>(st),
                               static_cast<std::uint8_t>(rep), static_cast<std::uint8_t>(actor)});
              }
        }
  return out;
}

/// The audio-only speech identifiers of the corpus: 24 actors x 60 trials.
inline std::vector<RavdessMeta> enumerate_speech_corpus() {
  std::vector<RavdessMeta> out;
  for (const auto& m : enumerate_valid_metas()) {
    if (m.modality == Modality::AudioOnly && m.channel == Channel::Speech) out.push_back(m);
  }
  return out;
}

struct Census {
  std::size_t total = 0;
  std::array<std::size_t, kNumEmotions> per_emotion{};
  std::array<std::size_t, kNumActors> per_actor{};
  std::array<std::size_t, 2> per_intensity{};

  void add(const RavdessMeta& m) {
    ++total;
    ++per_emotion[m.label()];
    ++per_actor[m.actor - 1u];
    ++per_intensity[static_cast<std::size_t>(m.intensity) - 1];
  }

  std::string to_string() const {
    std::ostringstream os;
    os << "files: " << total << "\nper emotion:";
    for (std::size_t e = 0; e < kNumEmotions; ++e) os << ' ' << kEmotionNames[e] << '=' << per_emotion[e];
    os << "\nper intensity: normal=" << per_intensity[0] << " strong=" << per_intensity[1] << "\nper actor:";
    for (std::size_t a = 0; a < kNumActors; ++a) os << ' ' << (a + 1) << '=' << per_actor[a];
    os << '\n';
    return os.str();
  }
};

struct CorpusEntry {
  std::filesystem::path path;
  RavdessMeta meta;
};

struct CorpusScan {
  std::vector<CorpusEntry> entries;  // canonical (lexicographic path) order
  Census census;
  std::vector<std::string> warnings;
};

/// Recursively collects audio-only speech .wav files. Names that fail to parse
/// and non-speech/non-audio-only files are reported in warnings.
inline CorpusScan scan_corpus(const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (!fs::is_directory(root, ec)) fail(Errc::RootNotFound, root.string() + " is not a directory");

  std::vector<fs::path> wavs;
  for (auto it = fs::recursive_directory_iterator(root, ec); !ec && it != fs::recursive_directory_iterator();
       it.increment(ec)) {
    if (!it->is_regular_file()) continue;
    std::string ext = it->path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".wav") wavs.push_back(it->path());
  }
  if (ec) fail(Errc::IoFailure, "while scanning " + root.string() + ": " + ec.message());
  std::sort(wavs.begin(), wavs.end());

  CorpusScan scan;
  for (const auto& p : wavs) {
    try {
      const auto meta = parse_filename(p.filename().string());
      if (meta.modality != Modality::AudioOnly || meta.channel != Channel::Speech) {
        scan.warnings.push_back(p.string() + ": skipped (not audio-only speech)");
        continue;
      }
      scan.entries.push_back({p, meta});
      scan.census.add(meta);
    } catch (const Error& e) {
      scan.warnings.push_back(p.string() + ": " + e.what());
    }
  }
  return scan;
}

struct StagingReport {
  std::size_t extracted_files = 0;
  CorpusScan scan;

  std::size_t count() const { return scan.entries.size(); }
};

inline StagingReport stage_archive(const std::filesystem::path& zip_path, const std::filesystem::path& dest) {
  StagingReport report;
  report.extracted_files = extract_zip(zip_path, dest);
  report.scan = scan_corpus(dest);
  return report;
}

// ---------------------------------------------------------------------------
// Splitting

enum class SplitStrategy { StratifiedByEmotion, SpeakerIndependent };

inline std::string_view to_string(SplitStrategy s) {
  return s == SplitStrategy::StratifiedByEmotion ? "stratified" : "speaker";
}

inline SplitStrategy parse_strategy(std::string_view s) {
  if (s == "stratified") return SplitStrategy::StratifiedByEmotion;
  if (s == "speaker") return SplitStrategy::SpeakerIndependent;
  fail(Errc::InvalidArgument, "unknown split strategy \"" + std::string(s) + "\" (stratified|speaker)");
}

struct SplitKey {
  std::uint8_t label = 0;
  std::uint8_t actor = 1;
};

/// Index lists into the (canonically ordered) input; each list is ascending.
struct DatasetSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
  std::uint64_t seed = 0;
  double ratio = 0.75;
  SplitStrategy strategy = SplitStrategy::StratifiedByEmotion;

  friend bool operator==(const DatasetSplit&, const DatasetSplit&) = default;
};

/// Stratified: per emotion, shuffle and take round(ratio * n_e) for train.
/// Speaker-independent: shuffle actors and move whole actors into train until
/// |train| >= ratio * N.
inline DatasetSplit split_dataset(std::span<const SplitKey> keys, double ratio, std::uint64_t seed,
                                  SplitStrategy strategy) {
  if (keys.empty()) fail(Errc::EmptyInput, "cannot split an empty example list");
  if (!(ratio > 0.0 && ratio < 1.0)) fail(Errc::InvalidArgument, "split ratio must lie in (0, 1)");

  DatasetSplit split;
  split.seed = seed;
  split.ratio = ratio;
  split.strategy = strategy;
  SeededRng rng(seed);
  std::vector<bool> in_train(keys.size(), false);

  if (strategy == SplitStrategy::StratifiedByEmotion) {
    std::size_t max_label = 0;
    for (const auto& k : keys) max_label = std::max<std::size_t>(max_label, k.label);
    for (std::size_t label = 0; label <= max_label; ++label) {
      std::vector<std::size_t> members;
      for (std::size_t i = 0; i < keys.size(); ++i) {
        if (keys[i].label == label) members.push_back(i);
      }
      rng.shuffle(std::span(members));
      const auto take = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(members.size())));
      for (std::size_t i = 0; i < take; ++i) in_train[members[i]] = true;
    }
  } else {
    std::vector<std::uint8_t> actors;
    for (const auto& k : keys) actors.push_back(k.actor);
    std::sort(actors.begin(), actors.end());
    actors.erase(std::unique(actors.begin(), actors.end()), actors.end());
    rng.shuffle(std::span(actors));
    const double target = ratio * static_cast<double>(keys.size());
    std::size_t count = 0;
    for (const auto actor : actors) {
      if (static_cast<double>(count) >= target) break;
      for (std::size_t i = 0; i < keys.size(); ++i) {
        if (keys[i].actor == actor) {
          in_train[i] = true;
          ++count;
        }
      }
    }
  }

  for (std::size_t i = 0; i < keys.size(); ++i) (in_train[i] ? split.train : split.test).push_back(i);
  return split;
}

inline nlohmann::json split_to_json(const DatasetSplit& s) {
  return {{"seed", s.seed},           {"ratio", s.ratio}, {"strategy", std::string(to_string(s.strategy))},
          {"train", s.train},         {"test", s.test}};
}

inline DatasetSplit split_from_json(const nlohmann::json& j) {
  detail::require_known_keys(j, {"seed", "ratio", "strategy", "train", "test"}, "split");
  DatasetSplit s;
  try {
    s.seed = j.at("seed").get<std::uint64_t>();
    s.ratio = j.at("ratio").get<double>();
    s.strategy = parse_strategy(j.at("strategy").get<std::string>());
    s.train = j.at("train").get<std::vector<std::size_t>>();
    s.test = j.at("test").get<std::vector<std::size_t>>();
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::ConfigParseError, std::string("split file: ") + e.what());
  }
  return s;
}

// ---------------------------------------------------------------------------
// Labeled examples and the feature cache

struct LabeledExample {
  FeatureTensor features;
  std::uint8_t label = 0;
  std::uint8_t actor = 0;
  std::uint8_t intensity = 1;
  std::optional<RavdessMeta> meta;  // absent when read back from a cache
  std::string path;
};

/// Reads and featurizes every scanned entry; results keep the scan order.
inline std::vector<LabeledExample> featurize_corpus(std::span<const CorpusEntry> entries, const PipelineConfig& cfg) {
  std::vector<LabeledExample> out(entries.size());
  parallel_for(entries.size(), [&](std::size_t i) {
    const auto& e = entries[i];
    auto& ex = out[i];
    ex.features = featurize(read_wav_file(e.path), cfg);
    ex.label = e.meta.label();
    ex.actor = e.meta.actor;
    ex.intensity = static_cast<std::uint8_t>(e.meta.intensity);
    ex.meta = e.meta;
    ex.path = e.path.string();
  });
  return out;
}

inline std::vector<SplitKey> split_keys(std::span<const LabeledExample> examples) {
  std::vector<SplitKey> keys;
  keys.reserve(examples.size());
  for (const auto& e : examples) keys.push_back({e.label, e.actor});
  return keys;
}

struct FeatureCache {
  PipelineConfig config;
  std::vector<LabeledExample> examples;
};

inline constexpr char kCacheMagic[8] = {'S', 'E', 'R', 'F', 'E', 'A', 'T', '1'};
inline constexpr std::uint32_t kCacheVersion = 1;

inline std::vector<std::uint8_t> encode_feature_cache(const PipelineConfig& cfg,
                                                      std::span<const LabeledExample> examples) {
  using detail::store_u32;
  const std::string config_json = nlohmann::json(cfg).dump();
  std::vector<std::uint8_t> out(std::begin(kCacheMagic), std::end(kCacheMagic));
  store_u32(out, kCacheVersion);
  store_u32(out, static_cast<std::uint32_t>(examples.size()));
  store_u32(out, static_cast<std::uint32_t>(cfg.height));
  store_u32(out, static_cast<std::uint32_t>(cfg.width));
  store_u32(out, static_cast<std::uint32_t>(config_json.size()));
  out.insert(out.end(), config_json.begin(), config_json.end());
  for (const auto& ex : examples) {
    if (ex.features.height != cfg.height || ex.features.width != cfg.width) {
      fail(Errc::ShapeMismatch, "example shape differs from the cache header shape");
    }
    out.insert(out.end(), {ex.label, ex.actor, ex.intensity, 0});
    for (float v : ex.features.values) store_u32(out, std::bit_cast<std::uint32_t>(v));
  }
  return out;
}

inline FeatureCache decode_feature_cache(std::span<const std::uint8_t> bytes) {
  using detail::load_u32;
  auto need = [&](std::size_t pos, std::size_t n) {
    if (pos + n > bytes.size()) fail(Errc::TruncatedFile, "feature cache ends early");
  };
  need(0, 8);
  if (std::memcmp(bytes.data(), kCacheMagic, 8) != 0) fail(Errc::BadMagic, "not a feature cache");
  need(8, 20);
  const std::uint32_t version = load_u32(bytes.data() + 8);
  if (version != kCacheVersion) fail(Errc::VersionMismatch, "feature cache version " + std::to_string(version));
  const std::uint32_t n = load_u32(bytes.data() + 12);
  const std::uint32_t h = load_u32(bytes.data() + 16);
  const std::uint32_t w = load_u32(bytes.data() + 20);
  const std::uint32_t json_len = load_u32(bytes.data() + 24);
  std::size_t pos = 28;
  need(pos, json_len);

  FeatureCache cache;
  try {
    cache.config = nlohmann::json::parse(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                                         bytes.begin() + static_cast<std::ptrdiff_t>(pos + json_len))
                       .get<PipelineConfig>();
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::ConfigParseError, std::string("feature cache config: ") + e.what());
  }
  if (cache.config.height != h || cache.config.width != w) {
    fail(Errc::ShapeMismatch, "feature cache header shape disagrees with its config");
  }
  pos += json_len;

  const std::size_t cells = static_cast<std::size_t>(h) * w;
  const std::size_t record = 4 + 4 * cells;
  need(pos, static_cast<std::size_t>(n) * record);
  cache.examples.resize(n);
  for (auto& ex : cache.examples) {
    ex.label = bytes[pos];
    ex.actor = bytes[pos + 1];
    ex.intensity = bytes[pos + 2];
    pos += 4;
    ex.features.height = h;
    ex.features.width = w;
    ex.features.values.resize(cells);
    for (std::size_t c = 0; c < cells; ++c, pos += 4) {
      ex.features.values[c] = std::bit_cast<float>(load_u32(bytes.data() + pos));
    }
  }
  return cache;
}

inline void write_feature_cache(const std::filesystem::path& path, const PipelineConfig& cfg,
                                std::span<const LabeledExample> examples) {
  const auto bytes = encode_feature_cache(cfg, examples);
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(Errc::IoFailure, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(Errc::IoFailure, "short write to " + path.string());
}

inline FeatureCache read_feature_cache(const std::filesystem::path& path) {
  std::error_code ec;
  if (!std::filesystem::is_regular_file(path, ec)) fail(Errc::IoFailure, "feature cache " + path.string() + " not found");
  return decode_feature_cache(read_file_bytes(path));
}

}  // namespace emoser::ravdess
