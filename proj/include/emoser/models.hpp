#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "emoser/audio.hpp"
#include "emoser/error.hpp"
#include "emoser/features.hpp"
#include "emoser/layers.hpp"
#include "emoser/network.hpp"
#include "emoser/parallel.hpp"
#include "emoser/ravdess.hpp"
#include "emoser/rng.hpp"

namespace emoser {

enum class ModelKind { CnnFig1, DnnBaseline };

inline std::string_view to_string(ModelKind k) { return k == ModelKind::CnnFig1 ? "cnn_fig1" : "dnn_baseline"; }

inline ModelKind parse_model_kind(std::string_view s) {
  if (s == "cnn_fig1" || s == "cnn") return ModelKind::CnnFig1;
  if (s == "dnn_baseline" || s == "dnn") return ModelKind::DnnBaseline;
  fail(Errc::InvalidArgument, "unknown model kind \"" + std::string(s) + "\" (cnn|dnn)");
}

struct ModelSpec {
  ModelKind kind = ModelKind::CnnFig1;
  std::size_t height = 64;
  std::size_t width = 64;
  std::size_t num_classes = ravdess::kNumEmotions;
  PipelineConfig pipeline;
};

/// Layer stack for a spec, parameters left at zero.
///
/// CnnFig1: conv 32@2x2, relu, maxpool, dropout .25, conv 64@3x3, relu,
/// maxpool, dropout .25, flatten, dense 128, relu, dropout .5, dense K,
/// softmax. DnnBaseline: flatten, dense 256, relu, dropout .5, dense 128,
/// relu, dense K, softmax.
template <typename T>
nn::Network<T> build_layers(const ModelSpec& spec) {
  using namespace nn;
  if (spec.num_classes < 2) fail(Errc::InvalidArgument, "num_classes must be at least 2");
  Network<T> net(Shape{spec.height, spec.width, 1});
  if (spec.kind == ModelKind::CnnFig1) {
    // 2x2 conv, pool, 3x3 conv, pool must leave at least one cell.
    if (spec.height < 9 || spec.width < 9) {
      fail(Errc::InputTooSmall, "CNN input " + std::to_string(spec.height) + "x" + std::to_string(spec.width) +
                                    " is below the 9x9 minimum");
    }
    net.add(std::make_unique<Conv2d<T>>(1, 32, 2, 2));
    net.add(std::make_unique<Relu<T>>());
    net.add(std::make_unique<MaxPool2d<T>>());
    net.add(std::make_unique<Dropout<T>>(0.25));
    net.add(std::make_unique<Conv2d<T>>(32, 64, 3, 3));
    net.add(std::make_unique<Relu<T>>());
    net.add(std::make_unique<MaxPool2d<T>>());
    net.add(std::make_unique<Dropout<T>>(0.25));
    net.add(std::make_unique<Flatten<T>>());
    net.add(std::make_unique<Dense<T>>(shape_size(net.output_shape()), 128));
    net.add(std::make_unique<Relu<T>>());
    net.add(std::make_unique<Dropout<T>>(0.5));
    net.add(std::make_unique<Dense<T>>(128, spec.num_classes));
    net.add(std::make_unique<Softmax<T>>());
  } else {
    if (spec.height == 0 || spec.width == 0) fail(Errc::InputTooSmall, "DNN input must be non-empty");
    net.add(std::make_unique<Flatten<T>>());
    net.add(std::make_unique<Dense<T>>(spec.height * spec.width, 256));
    net.add(std::make_unique<Relu<T>>());
    net.add(std::make_unique<Dropout<T>>(0.5));
    net.add(std::make_unique<Dense<T>>(256, 128));
    net.add(std::make_unique<Relu<T>>());
    net.add(std::make_unique<Dense<T>>(128, spec.num_classes));
    net.add(std::make_unique<Softmax<T>>());
  }
  return net;
}

class Model {
 public:
  Model(ModelSpec spec, nn::Network<float> net) : spec_(std::move(spec)), net_(std::move(net)) {}

  const ModelSpec& spec() const { return spec_; }
  nn::Network<float>& network() { return net_; }
  const nn::Network<float>& network() const { return net_; }
  std::vector<std::string> describe() const { return net_.describe(); }
  std::size_t parameter_count() const { return net_.parameter_count(); }

  /// Content hash of the checkpoint this model was saved to or loaded from.
  const std::string& id() const { return id_; }
  void set_id(std::string id) { id_ = std::move(id); }

 private:
  ModelSpec spec_;
  nn::Network<float> net_;
  std::string id_;
};

inline Model build_model(const ModelSpec& spec, SeededRng& rng) {
  auto net = build_layers<float>(spec);
  nn::init_params(net, rng);
  return Model(spec, std::move(net));
}

inline Model build_cnn(std::size_t height, std::size_t width, std::size_t num_classes, SeededRng& rng,
                       const PipelineConfig& pipeline = {}) {
  return build_model({ModelKind::CnnFig1, height, width, num_classes, pipeline}, rng);
}

inline Model build_dnn(std::size_t height, std::size_t width, std::size_t num_classes, SeededRng& rng,
                       const PipelineConfig& pipeline = {}) {
  return build_model({ModelKind::DnnBaseline, height, width, num_classes, pipeline}, rng);
}

inline nn::Tensor to_tensor(const FeatureTensor& f) { return nn::Tensor({f.height, f.width, 1}, f.values); }

/// Row b holds the class probabilities of input b. Train mode draws dropout
/// masks from `seed`-derived per-row streams.
inline nn::Tensor forward(const Model& model, std::span<const FeatureTensor> batch, nn::Mode mode = nn::Mode::Eval,
                          std::uint64_t seed = 0) {
  const std::size_t k = model.spec().num_classes;
  nn::Tensor probs({batch.size(), k});
  for (const auto& f : batch) {
    if (f.height != model.spec().height || f.width != model.spec().width) {
      fail(Errc::ShapeMismatch, "feature shape " + std::to_string(f.height) + "x" + std::to_string(f.width) +
                                    " does not match the model input");
    }
  }
  const std::size_t chunks = std::min(worker_count(), batch.size());
  parallel_for(chunks, [&](std::size_t c) {
    auto ws = model.network().workspace(false);
    for (std::size_t b = c * batch.size() / chunks; b < (c + 1) * batch.size() / chunks; ++b) {
      SeededRng rng(SeededRng::derive(seed, b));
      const auto& out = model.network().forward(to_tensor(batch[b]), ws, {mode, &rng, false});
      std::copy(out.values().begin(), out.values().end(), probs.data() + b * k);
    }
  });
  return probs;
}

// ---------------------------------------------------------------------------
// Checkpoints

inline constexpr char kCheckpointMagic[8] = {'S', 'E', 'R', 'M', 'O', 'D', 'L', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

inline std::string sha256_hex(std::span<const std::uint8_t> bytes) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest.data(), &len, EVP_sha256(), nullptr) != 1) {
    fail(Errc::IoFailure, "SHA-256 computation failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += kHex[digest[i] >> 4];
    out += kHex[digest[i] & 0xf];
  }
  return out;
}

inline nlohmann::json spec_to_json(const Model& model) {
  nlohmann::json layers = nlohmann::json::array();
  const auto& net = model.network();
  for (std::size_t l = 0; l < net.size(); ++l) {
    auto j = net.layer(l).to_json();
    nlohmann::json shapes = nlohmann::json::array();
    for (const auto& p : net.layer(l).parameters()) shapes.push_back(p.value.shape());
    if (!shapes.empty()) j["param_shapes"] = shapes;
    layers.push_back(std::move(j));
  }
  const auto& s = model.spec();
  return {{"kind", std::string(to_string(s.kind))},
          {"input", {s.height, s.width}},
          {"num_classes", s.num_classes},
          {"pipeline", s.pipeline},
          {"layers", layers}};
}

/// Magic, version, spec JSON, then every parameter tensor as raw float32 in
/// layer order (weights before biases).
inline std::vector<std::uint8_t> encode_checkpoint(const Model& model) {
  using detail::store_u32;
  const std::string spec = spec_to_json(model).dump();
  std::vector<std::uint8_t> out(std::begin(kCheckpointMagic), std::end(kCheckpointMagic));
  store_u32(out, kCheckpointVersion);
  store_u32(out, static_cast<std::uint32_t>(spec.size()));
  out.insert(out.end(), spec.begin(), spec.end());
  for (const auto* p : model.network().parameters()) {
    for (float v : p->value.values()) store_u32(out, std::bit_cast<std::uint32_t>(v));
  }
  return out;
}

inline Model decode_checkpoint(std::span<const std::uint8_t> bytes) {
  using detail::load_u32;
  if (bytes.size() < 8) fail(Errc::TruncatedFile, "checkpoint shorter than its magic");
  if (std::memcmp(bytes.data(), kCheckpointMagic, 8) != 0) fail(Errc::BadMagic, "not a model checkpoint");
  if (bytes.size() < 16) fail(Errc::TruncatedFile, "checkpoint header ends early");
  const std::uint32_t version = load_u32(bytes.data() + 8);
  if (version != kCheckpointVersion) fail(Errc::VersionMismatch, "checkpoint version " + std::to_string(version));
  const std::uint32_t spec_len = load_u32(bytes.data() + 12);
  if (16 + static_cast<std::size_t>(spec_len) > bytes.size()) fail(Errc::TruncatedFile, "checkpoint spec ends early");

  nlohmann::json j;
  ModelSpec spec;
  try {
    j = nlohmann::json::parse(bytes.begin() + 16, bytes.begin() + 16 + spec_len);
    spec.kind = parse_model_kind(j.at("kind").get<std::string>());
    spec.height = j.at("input").at(0).get<std::size_t>();
    spec.width = j.at("input").at(1).get<std::size_t>();
    spec.num_classes = j.at("num_classes").get<std::size_t>();
    spec.pipeline = j.at("pipeline").get<PipelineConfig>();
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::CheckpointLoadError, std::string("checkpoint spec: ") + e.what());
  }

  Model model(spec, build_layers<float>(spec));
  if (spec_to_json(model).at("layers") != j.at("layers")) {
    fail(Errc::ShapeMismatchOnLoad, "checkpoint layer list does not match the rebuilt architecture");
  }
  std::size_t pos = 16 + spec_len;
  std::size_t expected = 0;
  for (const auto* p : model.network().parameters()) expected += p->value.size();
  const std::size_t remaining = bytes.size() - pos;
  if (remaining < 4 * expected) fail(Errc::TruncatedFile, "checkpoint parameters end early");
  if (remaining > 4 * expected) fail(Errc::ShapeMismatchOnLoad, "checkpoint holds more parameters than the model");
  for (auto* p : model.network().parameters()) {
    for (auto& v : p->value.values()) {
      v = std::bit_cast<float>(load_u32(bytes.data() + pos));
      pos += 4;
    }
  }
  model.set_id(sha256_hex(bytes));
  return model;
}

inline void save_checkpoint(Model& model, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(model);
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(Errc::IoFailure, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(Errc::IoFailure, "short write to " + path.string());
  model.set_id(sha256_hex(bytes));
}

inline Model load_checkpoint(const std::filesystem::path& path) {
  std::error_code ec;
  if (!std::filesystem::is_regular_file(path, ec)) fail(Errc::IoFailure, "checkpoint " + path.string() + " not found");
  return decode_checkpoint(read_file_bytes(path));
}

// ---------------------------------------------------------------------------
// Prediction

struct EmotionScores {
  std::vector<std::pair<std::string, float>> scores;  // code order
  std::string top;
  std::string model_id;
};

inline std::string class_name(std::size_t k, std::size_t num_classes) {
  return num_classes == ravdess::kNumEmotions ? std::string(ravdess::kEmotionNames[k]) : "class_" + std::to_string(k);
}

inline EmotionScores predict(const Model& model, const AudioClip& clip) {
  const FeatureTensor features = featurize(clip, model.spec().pipeline);
  const auto probs = forward(model, std::span(&features, 1));
  EmotionScores out;
  out.model_id = model.id();
  std::size_t best = 0;
  for (std::size_t k = 0; k < probs.size(); ++k) {
    out.scores.emplace_back(class_name(k, probs.size()), probs[k]);
    if (probs[k] > probs[best]) best = k;
  }
  out.top = out.scores[best].first;
  return out;
}

inline nlohmann::json to_json(const EmotionScores& s) {
  nlohmann::json scores = nlohmann::json::array();
  for (const auto& [label, p] : s.scores) scores.push_back({{"label", label}, {"probability", p}});
  return {{"scores", scores}, {"top", s.top}, {"model_id", s.model_id}};
}

}  // namespace emoser
