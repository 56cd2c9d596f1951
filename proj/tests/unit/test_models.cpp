#include <catch_amalgamated.hpp>

#include <cmath>
#include <set>

#include "emoser/models.hpp"
#include "test_support.hpp"

using namespace emoser;

namespace {

FeatureTensor random_features(std::size_t h, std::size_t w, SeededRng& rng) {
  FeatureTensor f{h, w, std::vector<float>(h * w)};
  for (auto& v : f.values) v = static_cast<float>(rng.normal());
  return f;
}

std::size_t flatten_width(const Model& m) {
  const auto& net = m.network();
  for (std::size_t l = 0; l < net.size(); ++l) {
    if (net.layer(l).kind() == nn::LayerKind::Flatten) return net.layer_output_shape(l)[0];
  }
  return 0;
}

}  // namespace

TEST_CASE("CNN shape algebra and parameter count at 64x64", "[models]") {
  SeededRng rng(1);
  const auto m = build_cnn(64, 64, 8, rng);
  CHECK(flatten_width(m) == 14u * 14u * 64u);
  CHECK(flatten_width(m) == 12544);
  CHECK(m.parameter_count() == 1625448);
  // Closed-form per-layer counts.
  const std::size_t conv1 = 2 * 2 * 1 * 32 + 32, conv2 = 3 * 3 * 32 * 64 + 64, dense1 = 12544 * 128 + 128,
                    dense2 = 128 * 8 + 8;
  CHECK(conv1 == 160);
  CHECK(conv2 == 18496);
  CHECK(dense1 == 1605760);
  CHECK(dense2 == 1032);
  CHECK(m.parameter_count() == conv1 + conv2 + dense1 + dense2);
  CHECK(m.network().output_shape() == nn::Shape{8});
}

TEST_CASE("CNN minimum input size", "[models]") {
  SeededRng rng(2);
  const auto m = build_cnn(9, 9, 8, rng);
  CHECK(flatten_width(m) == 64);
  for (auto [h, w] : {std::pair{8, 8}, std::pair{8, 64}, std::pair{64, 4}}) {
    try {
      build_cnn(h, w, 8, rng);
      FAIL("no throw for " << h << "x" << w);
    } catch (const Error& e) {
      CHECK(e.code() == Errc::InputTooSmall);
    }
  }
}

TEST_CASE("CNN structural audit", "[models]") {
  SeededRng rng(3);
  const auto m = build_cnn(64, 64, 8, rng);
  const std::vector<std::string> expected = {"conv 32@2x2", "relu",    "maxpool 2x2", "dropout 0.25", "conv 64@3x3",
                                             "relu",        "maxpool 2x2", "dropout 0.25", "flatten",      "dense 128",
                                             "relu",        "dropout 0.5", "dense 8",     "softmax"};
  CHECK(m.describe() == expected);
}

TEST_CASE("DNN baseline layout", "[models]") {
  SeededRng rng(4);
  const auto m = build_dnn(64, 64, 8, rng);
  const auto& net = m.network();
  REQUIRE(net.layer(1).kind() == nn::LayerKind::Dense);
  CHECK(net.layer(1).parameters()[0].value.shape() == nn::Shape{4096, 256});
  CHECK(m.describe() ==
        std::vector<std::string>{"flatten", "dense 256", "relu", "dropout 0.5", "dense 128", "relu", "dense 8", "softmax"});
  const auto f = random_features(64, 64, rng);
  const auto p = forward(m, std::span(&f, 1));
  CHECK(p.shape() == nn::Shape{1, 8});
  double s = 0.0;
  for (float v : p.values()) s += v;
  CHECK(std::abs(s - 1.0) < 1e-5);

  SeededRng a(9), b(9);
  const auto m1 = build_dnn(16, 16, 8, a);
  const auto m2 = build_dnn(16, 16, 8, b);
  CHECK(encode_checkpoint(m1) == encode_checkpoint(m2));
}

TEST_CASE("forward rows are probabilities; Eval is deterministic", "[models]") {
  SeededRng rng(5);
  const auto m = build_cnn(32, 32, 8, rng);
  std::vector<FeatureTensor> batch;
  for (int i = 0; i < 3; ++i) batch.push_back(random_features(32, 32, rng));
  const auto p = forward(m, batch);
  REQUIRE(p.shape() == nn::Shape{3, 8});
  for (std::size_t b = 0; b < 3; ++b) {
    double s = 0.0;
    for (std::size_t k = 0; k < 8; ++k) {
      CHECK(p[b * 8 + k] >= 0.0f);
      s += p[b * 8 + k];
    }
    CHECK(std::abs(s - 1.0) < 1e-5);
  }
  CHECK(forward(m, batch) == p);
  CHECK_FALSE(forward(m, batch, nn::Mode::Train, 1) == p);

  try {
    const auto wrong = random_features(31, 32, rng);
    forward(m, std::span(&wrong, 1));
    FAIL("no throw");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::ShapeMismatch);
  }
}

TEST_CASE("fresh models: uniform on a zero input, valid rows otherwise", "[models]") {
  SeededRng rng(6);
  for (int init = 0; init < 100; ++init) {
    const auto m = build_cnn(16, 16, 8, rng);
    const FeatureTensor zero{16, 16, std::vector<float>(256, 0.0f)};
    const auto uniform = forward(m, std::span(&zero, 1));
    for (float v : uniform.values()) REQUIRE(v == 0.125f);
    const auto f = random_features(16, 16, rng);
    const auto p = forward(m, std::span(&f, 1));
    double s = 0.0;
    for (float v : p.values()) {
      REQUIRE(v >= 0.0f);
      s += v;
    }
    REQUIRE(std::abs(s - 1.0) < 1e-5);
  }
}

TEST_CASE("checkpoint round trip and payload size", "[models][checkpoint]") {
  testsupport::TempDir dir;
  SeededRng rng(7);
  PipelineConfig pipeline;
  pipeline.height = 64;
  auto m = build_cnn(64, 64, 8, rng, pipeline);
  save_checkpoint(m, dir / "m.ckpt");
  CHECK(m.id().size() == 64);

  const auto bytes = read_file_bytes(dir / "m.ckpt");
  CHECK(std::string(bytes.begin(), bytes.begin() + 8) == "SERMODL1");
  const std::uint32_t spec_len = detail::load_u32(bytes.data() + 12);
  CHECK((bytes.size() - 16 - spec_len) / 4 == 1625448);
  CHECK((bytes.size() - 16 - spec_len) % 4 == 0);

  const auto loaded = load_checkpoint(dir / "m.ckpt");
  CHECK(loaded.id() == m.id());
  CHECK(loaded.spec().pipeline == pipeline);
  CHECK(loaded.describe() == m.describe());
  const auto f = random_features(64, 64, rng);
  CHECK(forward(loaded, std::span(&f, 1)) == forward(m, std::span(&f, 1)));
  CHECK(encode_checkpoint(loaded) == bytes);
}

TEST_CASE("checkpoint error paths", "[models][checkpoint]") {
  SeededRng rng(8);
  const auto m = build_cnn(12, 12, 8, rng);
  const auto bytes = encode_checkpoint(m);
  auto expect = [](const std::vector<std::uint8_t>& b, Errc code) {
    try {
      decode_checkpoint(b);
      FAIL("no throw");
    } catch (const Error& e) {
      CHECK(e.code() == code);
    }
  };
  expect(std::vector<std::uint8_t>(bytes.begin(), bytes.end() - 4), Errc::TruncatedFile);
  expect(std::vector<std::uint8_t>(bytes.begin(), bytes.begin() + 20), Errc::TruncatedFile);
  auto magic = bytes;
  magic[3] = 'X';
  expect(magic, Errc::BadMagic);
  auto version = bytes;
  version[8] = 9;
  expect(version, Errc::VersionMismatch);
  auto extra = bytes;
  extra.insert(extra.end(), {0, 0, 0, 0});
  expect(extra, Errc::ShapeMismatchOnLoad);

  // A spec whose layer list disagrees with the rebuilt stack.
  const std::uint32_t spec_len = detail::load_u32(bytes.data() + 12);
  auto j = nlohmann::json::parse(bytes.begin() + 16, bytes.begin() + 16 + spec_len);
  j["layers"][0]["filters"] = 16;
  const auto spec = j.dump();
  std::vector<std::uint8_t> edited(bytes.begin(), bytes.begin() + 12);
  detail::store_u32(edited, static_cast<std::uint32_t>(spec.size()));
  edited.insert(edited.end(), spec.begin(), spec.end());
  edited.insert(edited.end(), bytes.begin() + 16 + spec_len, bytes.end());
  expect(edited, Errc::ShapeMismatchOnLoad);

  try {
    load_checkpoint("/nonexistent/model.ckpt");
    FAIL("no throw");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::IoFailure);
  }
}

TEST_CASE("predict returns eight named probabilities", "[models]") {
  SeededRng rng(9);
  PipelineConfig pipeline;
  pipeline.height = 24;
  pipeline.width = 24;
  const auto m = build_cnn(24, 24, 8, rng, pipeline);
  const auto clip = testsupport::emotion_tone(2, 48000, 1.0, 3);
  const auto s = predict(m, clip);
  REQUIRE(s.scores.size() == 8);
  double sum = 0.0;
  std::set<std::string> names;
  for (std::size_t k = 0; k < 8; ++k) {
    CHECK(s.scores[k].first == ravdess::kEmotionNames[k]);
    names.insert(s.scores[k].first);
    sum += s.scores[k].second;
  }
  CHECK(std::abs(sum - 1.0) < 1e-5);
  CHECK(names.count(s.top) == 1);
  const AudioClip copy = clip;
  const auto again = predict(m, copy);
  CHECK(again.scores == s.scores);

  const auto j = to_json(s);
  CHECK(j["scores"].size() == 8);
  CHECK(j["top"] == s.top);
}
