#include <catch_amalgamated.hpp>

#include "emoser/archive.hpp"
#include "emoser/ravdess.hpp"
#include "test_support.hpp"

using namespace emoser;

namespace {

Errc extract_error(const std::filesystem::path& zip, const std::filesystem::path& dest) {
  try {
    extract_zip(zip, dest);
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("extract_zip did not throw");
  return Errc::InvalidArgument;
}

}  // namespace

TEST_CASE("extract_zip handles stored and deflated members", "[archive]") {
  testsupport::TempDir dir;
  std::vector<std::uint8_t> big(5000);
  for (std::size_t i = 0; i < big.size(); ++i) big[i] = static_cast<std::uint8_t>(i % 7);
  const auto zip = testsupport::make_zip({
      {"a/stored.bin", {1, 2, 3, 4, 5}, false},
      {"a/b/deflated.bin", big, true},
      {"empty.txt", {}, true},
  });
  testsupport::write_bytes(dir / "in.zip", zip);
  CHECK(extract_zip(dir / "in.zip", dir / "out") == 3);
  CHECK(read_file_bytes(dir / "out/a/stored.bin") == std::vector<std::uint8_t>{1, 2, 3, 4, 5});
  CHECK(read_file_bytes(dir / "out/a/b/deflated.bin") == big);
  CHECK(read_file_bytes(dir / "out/empty.txt").empty());
}

TEST_CASE("extract_zip rejects corrupt archives", "[archive]") {
  testsupport::TempDir dir;
  testsupport::write_bytes(dir / "junk.zip", std::vector<std::uint8_t>(100, 0x41));
  CHECK(extract_error(dir / "junk.zip", dir / "out") == Errc::BadArchive);

  testsupport::write_bytes(dir / "tiny.zip", {1, 2, 3});
  CHECK(extract_error(dir / "tiny.zip", dir / "out") == Errc::BadArchive);

  testsupport::write_bytes(dir / "crc.zip", testsupport::make_zip({{"x.bin", {9, 9, 9}, true}}, true));
  CHECK(extract_error(dir / "crc.zip", dir / "out") == Errc::BadArchive);

  auto zip = testsupport::make_zip({{"x.bin", std::vector<std::uint8_t>(300, 5), true}});
  zip[40] ^= 0xff;  // inside the deflate payload
  testsupport::write_bytes(dir / "flip.zip", zip);
  CHECK(extract_error(dir / "flip.zip", dir / "out") == Errc::BadArchive);

  testsupport::write_bytes(dir / "slip.zip", testsupport::make_zip({{"../evil.txt", {1}, false}}));
  CHECK(extract_error(dir / "slip.zip", dir / "out") == Errc::BadArchive);
  CHECK_FALSE(std::filesystem::exists(dir / "evil.txt"));

  CHECK(extract_error(dir / "missing.zip", dir / "out") == Errc::IoFailure);
}

TEST_CASE("stage_archive extracts and scans", "[archive][ravdess]") {
  testsupport::TempDir dir;
  const auto meta = ravdess::parse_filename("03-01-06-01-02-01-12.wav");
  const auto wav = encode_wav_pcm16(testsupport::emotion_tone(meta.label(), 16000, 0.2, 1));
  testsupport::write_bytes(dir / "one.zip", testsupport::make_zip({{"Actor_12/03-01-06-01-02-01-12.wav", wav, true}}));
  const auto report = ravdess::stage_archive(dir / "one.zip", dir / "corpus");
  CHECK(report.extracted_files == 1);
  CHECK(report.count() == 1);
  for (std::size_t e = 0; e < ravdess::kNumEmotions; ++e) {
    CHECK(report.scan.census.per_emotion[e] == (e == 5 ? 1u : 0u));
  }

  testsupport::write_bytes(dir / "bad.zip", std::vector<std::uint8_t>(64, 0));
  try {
    ravdess::stage_archive(dir / "bad.zip", dir / "corpus2");
    FAIL("no throw");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::BadArchive);
  }
}
