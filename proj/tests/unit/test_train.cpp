#include <catch_amalgamated.hpp>

#include <cmath>

#include "emoser/train.hpp"
#include "test_support.hpp"

using namespace emoser;

namespace {

std::vector<Sample> random_samples(std::size_t n, std::size_t h, std::size_t w, std::uint64_t seed) {
  SeededRng rng(seed);
  std::vector<Sample> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back({testsupport::random_tensor<float>({h, w, 1}, rng), i % 8});
  return out;
}

// Inputs carry a class-dependent bright band so a small model can learn them.
std::vector<Sample> banded_samples(std::size_t n, std::size_t h, std::size_t w, std::uint64_t seed) {
  SeededRng rng(seed);
  std::vector<Sample> out;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t label = i % 4;
    auto x = testsupport::random_tensor<float>({h, w, 1}, rng, 0.3);
    for (std::size_t r = label * h / 4; r < (label + 1) * h / 4; ++r)
      for (std::size_t c = 0; c < w; ++c) x.at(r, c, 0) += 1.5f;
    out.push_back({std::move(x), label});
  }
  return out;
}

}  // namespace

TEST_CASE("TrainConfig JSON is strict and validated", "[train][config]") {
  TrainConfig c;
  c.epochs = 3;
  c.optimizer.kind = nn::OptimizerKind::Sgd;
  c.optimizer.lr = 0.05;
  const nlohmann::json j = c;
  const auto back = j.get<TrainConfig>();
  CHECK(back.epochs == 3);
  CHECK(back.optimizer == c.optimizer);
  CHECK_THROWS_AS((nlohmann::json{{"epochs", 0}}.get<TrainConfig>()), Error);
  CHECK_THROWS_AS((nlohmann::json{{"batch_size", 0}}.get<TrainConfig>()), Error);
  CHECK_THROWS_AS((nlohmann::json{{"epoch", 5}}.get<TrainConfig>()), Error);
  CHECK_THROWS_AS((nlohmann::json{{"optimizer", {{"kind", "rmsprop"}}}}.get<TrainConfig>()), Error);
  CHECK_THROWS_AS((nlohmann::json{{"optimizer", {{"momentum", 0.9}}}}.get<TrainConfig>()), Error);
}

TEST_CASE("history length and determinism", "[train]") {
  const auto train_set = random_samples(12, 12, 12, 1);
  const auto val_set = random_samples(5, 12, 12, 2);
  TrainConfig cfg;
  cfg.epochs = 4;
  cfg.batch_size = 5;
  auto run = [&] {
    SeededRng rng(3);
    auto model = build_cnn(12, 12, 8, rng);
    std::vector<std::size_t> seen;
    const auto h = train(model, train_set, val_set, cfg, [&](const EpochRecord& r) { seen.push_back(r.epoch); });
    CHECK(seen == std::vector<std::size_t>{1, 2, 3, 4});
    return std::pair{h, encode_checkpoint(model)};
  };
  const auto [h1, w1] = run();
  const auto [h2, w2] = run();
  REQUIRE(h1.size() == 4);
  CHECK(h1 == h2);
  CHECK(w1 == w2);
  for (const auto& r : h1) {
    CHECK(r.train_loss >= 0.0);
    CHECK(r.val_loss >= 0.0);
    CHECK((r.train_accuracy >= 0.0 && r.train_accuracy <= 1.0));
    CHECK((r.val_accuracy >= 0.0 && r.val_accuracy <= 1.0));
  }
}

TEST_CASE("training is independent of the worker count", "[train]") {
  const auto train_set = random_samples(10, 10, 10, 4);
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 7;
  auto run = [&](const char* threads) {
    ::setenv("EMOSER_THREADS", threads, 1);
    SeededRng rng(5);
    auto model = build_cnn(10, 10, 8, rng);
    const auto h = train(model, train_set, train_set, cfg);
    ::unsetenv("EMOSER_THREADS");
    return std::pair{h, encode_checkpoint(model)};
  };
  CHECK(run("1") == run("3"));
}

TEST_CASE("train learns a separable toy problem", "[train]") {
  const auto train_set = banded_samples(32, 16, 16, 6);
  const auto val_set = banded_samples(16, 16, 16, 7);
  TrainConfig cfg;
  cfg.epochs = 15;
  cfg.batch_size = 8;
  SeededRng rng(8);
  auto model = build_cnn(16, 16, 4, rng);
  const auto h = train(model, train_set, val_set, cfg);
  CHECK(h.back().train_loss < h.front().train_loss);
  CHECK(h.back().val_accuracy >= 0.9);

  const auto report = evaluate(model, val_set);
  CHECK(report.confusion.total() == 16);
  CHECK(report.accuracy == Catch::Approx(h.back().val_accuracy));
}

TEST_CASE("train and evaluate preconditions", "[train]") {
  SeededRng rng(9);
  auto model = build_cnn(12, 12, 8, rng);
  const auto good = random_samples(4, 12, 12, 1);
  const std::vector<Sample> none;
  auto code_of = [](auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      return e.code();
    }
    return Errc::InvalidArgument;
  };
  TrainConfig cfg;
  cfg.epochs = 1;
  CHECK(code_of([&] { train(model, none, good, cfg); }) == Errc::EmptySet);
  CHECK(code_of([&] { train(model, good, none, cfg); }) == Errc::EmptySet);
  CHECK(code_of([&] { evaluate(model, none); }) == Errc::EmptySet);
  CHECK(code_of([&] { train(model, random_samples(4, 13, 12, 1), good, cfg); }) == Errc::ShapeMismatch);
  auto bad_label = good;
  bad_label[0].label = 8;
  CHECK(code_of([&] { evaluate(model, bad_label); }) == Errc::LabelOutOfRange);
}

TEST_CASE("make_samples maps cache examples", "[train]") {
  std::vector<ravdess::LabeledExample> examples(3);
  for (std::size_t i = 0; i < 3; ++i) {
    examples[i].features = {2, 3, std::vector<float>(6, static_cast<float>(i))};
    examples[i].label = static_cast<std::uint8_t>(i + 4);
  }
  const std::vector<std::size_t> idx{2, 0};
  const auto s = make_samples(examples, idx);
  REQUIRE(s.size() == 2);
  CHECK(s[0].label == 6);
  CHECK(s[0].input.shape() == nn::Shape{2, 3, 1});
  CHECK(s[0].input[5] == 2.0f);
  const std::vector<std::size_t> bad{3};
  CHECK_THROWS_AS(make_samples(examples, bad), Error);
}
