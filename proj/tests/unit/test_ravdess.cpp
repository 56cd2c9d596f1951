#include <catch_amalgamated.hpp>

#include <set>

#include "emoser/ravdess.hpp"
#include "test_support.hpp"

using namespace emoser;
using namespace emoser::ravdess;

namespace {

Errc parse_error(std::string_view name) {
  try {
    parse_filename(name);
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("parse_filename accepted " << name);
  return Errc::InvalidArgument;
}

std::vector<SplitKey> corpus_keys() {
  std::vector<SplitKey> keys;
  auto metas = enumerate_speech_corpus();
  std::vector<std::string> names;
  for (const auto& m : metas) names.push_back(render_filename(m));
  std::sort(names.begin(), names.end());
  for (const auto& n : names) {
    const auto m = parse_filename(n);
    keys.push_back({m.label(), m.actor});
  }
  return keys;
}

}  // namespace

TEST_CASE("parse_filename decodes the documented examples", "[ravdess]") {
  const auto m = parse_filename("03-01-06-01-02-01-12.wav");
  CHECK(m.modality == Modality::AudioOnly);
  CHECK(m.channel == Channel::Speech);
  CHECK(m.emotion == Emotion::Fearful);
  CHECK(m.intensity == Intensity::Normal);
  CHECK(m.statement == Statement::Dogs);
  CHECK(m.repetition == 1);
  CHECK(m.actor == 12);
  CHECK(m.gender() == Gender::Female);
  CHECK(m.label() == 5);

  const auto n = parse_filename("some/dir/03-01-01-01-01-01-01.wav");
  CHECK(n.emotion == Emotion::Neutral);
  CHECK(n.statement == Statement::Kids);
  CHECK(n.actor == 1);
  CHECK(n.gender() == Gender::Male);
  CHECK(n.label() == 0);
  CHECK(emotion_name(n.emotion) == "neutral");
}

TEST_CASE("parse_filename error taxonomy", "[ravdess]") {
  CHECK(parse_error("03-01-01-02-01-01-01.wav") == Errc::NeutralStrongConflict);
  CHECK(parse_error("03-01-01-01-01-01.wav") == Errc::BadPartCount);
  CHECK(parse_error("03-01-01-01-01-01-01-01.wav") == Errc::BadPartCount);
  CHECK(parse_error("03-01-0x-01-01-01-01.wav") == Errc::NonNumericPart);
  CHECK(parse_error("03-01-1-01-01-01-01.wav") == Errc::NonNumericPart);
  CHECK(parse_error("03-01-09-01-01-01-01.wav") == Errc::CodeOutOfRange);
  CHECK(parse_error("03-01-01-01-01-01-25.wav") == Errc::CodeOutOfRange);
  CHECK(parse_error("00-01-01-01-01-01-01.wav") == Errc::CodeOutOfRange);
  CHECK(parse_error("03-01-01-01-01-03-01.wav") == Errc::CodeOutOfRange);
  CHECK(parse_error("03-01-01-01-01-01-01.mp3") == Errc::BadExtension);

  try {
    parse_filename("03-01-09-01-01-01-01.wav");
  } catch (const Error& e) {
    CHECK_THAT(e.what(), Catch::Matchers::ContainsSubstring("emotion"));
    CHECK_THAT(e.what(), Catch::Matchers::ContainsSubstring("09"));
  }
}

TEST_CASE("render/parse round trip over every valid identifier", "[ravdess][property]") {
  const auto all = enumerate_valid_metas();
  CHECK(all.size() == 3u * 2 * 8 * 2 * 2 * 2 * 24 - 3u * 2 * 2 * 2 * 24);
  std::set<std::string> names;
  for (const auto& m : all) {
    const auto name = render_filename(m);
    names.insert(name);
    REQUIRE(parse_filename(name) == m);
    REQUIRE(m.gender() == (m.actor % 2 ? Gender::Male : Gender::Female));
  }
  CHECK(names.size() == all.size());
}

TEST_CASE("census of the speech identifier space", "[ravdess]") {
  Census c;
  for (const auto& m : enumerate_speech_corpus()) c.add(m);
  CHECK(c.total == 1440);
  CHECK(c.per_emotion[0] == 96);
  for (std::size_t e = 1; e < kNumEmotions; ++e) CHECK(c.per_emotion[e] == 192);
  for (std::size_t a = 0; a < kNumActors; ++a) CHECK(c.per_actor[a] == 60);
  CHECK(c.per_intensity[0] + c.per_intensity[1] == 1440);
}

TEST_CASE("scan_corpus on a mirror tree", "[ravdess]") {
  testsupport::TempDir dir;
  testsupport::write_corpus(dir.path(), enumerate_speech_corpus(), 0, 16000, true);
  // Noise that must be reported, not counted.
  testsupport::write_bytes(dir / "Actor_01/01-01-01-01-01-01-01.wav", {});
  testsupport::write_bytes(dir / "Actor_01/03-02-01-01-01-01-01.wav", {});
  testsupport::write_bytes(dir / "Actor_01/readme.wav", {});
  testsupport::write_bytes(dir / "Actor_01/notes.txt", {});

  const auto scan = scan_corpus(dir.path());
  CHECK(scan.entries.size() == 1440);
  CHECK(scan.census.total == scan.entries.size());
  CHECK(scan.census.per_emotion[0] == 96);
  CHECK(scan.census.per_emotion[7] == 192);
  CHECK(scan.census.per_actor[11] == 60);
  CHECK(scan.warnings.size() == 3);
  CHECK(std::is_sorted(scan.entries.begin(), scan.entries.end(),
                       [](const auto& a, const auto& b) { return a.path < b.path; }));
}

TEST_CASE("scan_corpus edge cases", "[ravdess]") {
  testsupport::TempDir dir;
  const auto empty = scan_corpus(dir.path());
  CHECK(empty.entries.empty());
  CHECK(empty.census.total == 0);
  for (auto v : empty.census.per_emotion) CHECK(v == 0);

  try {
    scan_corpus(dir / "missing");
    FAIL("no throw");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::RootNotFound);
  }
}

TEST_CASE("stratified split of the full corpus", "[ravdess]") {
  const auto keys = corpus_keys();
  const auto s = split_dataset(keys, 0.75, 7, SplitStrategy::StratifiedByEmotion);
  CHECK(s.train.size() == 1080);
  CHECK(s.test.size() == 360);
  std::array<std::size_t, 8> train_per{}, test_per{};
  for (auto i : s.train) ++train_per[keys[i].label];
  for (auto i : s.test) ++test_per[keys[i].label];
  CHECK(train_per[0] == 72);
  CHECK(test_per[0] == 24);
  for (std::size_t e = 1; e < 8; ++e) {
    CHECK(train_per[e] == 144);
    CHECK(test_per[e] == 48);
  }
  CHECK(split_dataset(keys, 0.75, 7, SplitStrategy::StratifiedByEmotion) == s);
  CHECK_FALSE(split_dataset(keys, 0.75, 8, SplitStrategy::StratifiedByEmotion) == s);
}

TEST_CASE("split partition properties over random subsets", "[ravdess][property]") {
  const auto all = corpus_keys();
  SeededRng rng(21);
  for (int trial = 0; trial < 60; ++trial) {
    std::vector<SplitKey> keys;
    for (const auto& k : all) {
      if (rng.uniform() < 0.3) keys.push_back(k);
    }
    if (keys.empty()) continue;
    const double ratio = rng.uniform(0.1, 0.9);
    for (auto strategy : {SplitStrategy::StratifiedByEmotion, SplitStrategy::SpeakerIndependent}) {
      const auto s = split_dataset(keys, ratio, rng.next_u64(), strategy);
      std::vector<int> seen(keys.size(), 0);
      for (auto i : s.train) ++seen[i];
      for (auto i : s.test) ++seen[i];
      REQUIRE(std::all_of(seen.begin(), seen.end(), [](int v) { return v == 1; }));
      REQUIRE(std::is_sorted(s.train.begin(), s.train.end()));
      REQUIRE(std::is_sorted(s.test.begin(), s.test.end()));

      if (strategy == SplitStrategy::StratifiedByEmotion) {
        std::array<std::size_t, 8> n{}, t{};
        for (const auto& k : keys) ++n[k.label];
        for (auto i : s.train) ++t[keys[i].label];
        for (std::size_t e = 0; e < 8; ++e) REQUIRE(t[e] == static_cast<std::size_t>(std::llround(ratio * n[e])));
      } else {
        std::set<int> train_actors, test_actors;
        for (auto i : s.train) train_actors.insert(keys[i].actor);
        for (auto i : s.test) test_actors.insert(keys[i].actor);
        for (int a : train_actors) REQUIRE(test_actors.count(a) == 0);
        REQUIRE(static_cast<double>(s.train.size()) >= ratio * static_cast<double>(keys.size()) - 1e-9);
      }
    }
  }
}

TEST_CASE("split preconditions and JSON round trip", "[ravdess]") {
  const std::vector<SplitKey> none;
  try {
    split_dataset(none, 0.75, 1, SplitStrategy::StratifiedByEmotion);
    FAIL("no throw");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::EmptyInput);
  }
  const auto keys = corpus_keys();
  CHECK_THROWS_AS(split_dataset(keys, 1.0, 1, SplitStrategy::StratifiedByEmotion), Error);
  CHECK_THROWS_AS(split_dataset(keys, 0.0, 1, SplitStrategy::StratifiedByEmotion), Error);

  const auto s = split_dataset(keys, 0.75, 3, SplitStrategy::SpeakerIndependent);
  CHECK(split_from_json(split_to_json(s)) == s);
  CHECK(split_to_json(s)["strategy"] == "speaker");
  CHECK(parse_strategy("stratified") == SplitStrategy::StratifiedByEmotion);
  CHECK_THROWS_AS(parse_strategy("random"), Error);
}

TEST_CASE("feature cache round trip and errors", "[ravdess][cache]") {
  testsupport::TempDir dir;
  PipelineConfig cfg;
  cfg.height = 6;
  cfg.width = 5;
  SeededRng rng(4);
  std::vector<LabeledExample> examples(10);
  for (std::size_t i = 0; i < examples.size(); ++i) {
    auto& ex = examples[i];
    ex.features = {6, 5, std::vector<float>(30)};
    for (auto& v : ex.features.values) v = static_cast<float>(rng.normal());
    ex.label = static_cast<std::uint8_t>(i % 8);
    ex.actor = static_cast<std::uint8_t>(1 + i);
    ex.intensity = static_cast<std::uint8_t>(1 + i % 2);
  }
  examples[0].features.values[0] = -0.0f;
  write_feature_cache(dir / "c.bin", cfg, examples);
  const auto back = read_feature_cache(dir / "c.bin");
  CHECK(back.config == cfg);
  REQUIRE(back.examples.size() == 10);
  for (std::size_t i = 0; i < 10; ++i) {
    CHECK(back.examples[i].features == examples[i].features);
    CHECK(back.examples[i].label == examples[i].label);
    CHECK(back.examples[i].actor == examples[i].actor);
    CHECK(back.examples[i].intensity == examples[i].intensity);
  }
  CHECK(std::signbit(back.examples[0].features.values[0]));

  auto bytes = read_file_bytes(dir / "c.bin");
  CHECK(std::string(bytes.begin(), bytes.begin() + 8) == "SERFEAT1");
  CHECK(detail::load_u32(bytes.data() + 12) == 10);

  auto expect = [](std::vector<std::uint8_t> b, Errc code) {
    try {
      decode_feature_cache(b);
      FAIL("no throw");
    } catch (const Error& e) {
      CHECK(e.code() == code);
    }
  };
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  expect(bad_magic, Errc::BadMagic);
  auto bad_version = bytes;
  bad_version[8] = 2;
  expect(bad_version, Errc::VersionMismatch);
  expect(std::vector<std::uint8_t>(bytes.begin(), bytes.end() - 1), Errc::TruncatedFile);
  expect(std::vector<std::uint8_t>(bytes.begin(), bytes.begin() + 5), Errc::TruncatedFile);

  try {
    read_feature_cache(dir / "nope.bin");
    FAIL("no throw");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::IoFailure);
    CHECK_THAT(e.what(), Catch::Matchers::ContainsSubstring("nope.bin"));
  }
}

TEST_CASE("featurize_corpus keeps scan order and labels", "[ravdess]") {
  testsupport::TempDir dir;
  const auto metas = testsupport::small_speech_subset(2);
  testsupport::write_corpus(dir.path(), metas, 0.4);
  const auto scan = scan_corpus(dir.path());
  REQUIRE(scan.entries.size() == 16);
  PipelineConfig cfg;
  cfg.height = 16;
  cfg.width = 16;
  const auto examples = featurize_corpus(scan.entries, cfg);
  REQUIRE(examples.size() == 16);
  for (std::size_t i = 0; i < 16; ++i) {
    CHECK(examples[i].label == scan.entries[i].meta.label());
    CHECK(examples[i].path == scan.entries[i].path.string());
    CHECK(examples[i].features == featurize(read_wav_file(scan.entries[i].path), cfg));
  }
}
