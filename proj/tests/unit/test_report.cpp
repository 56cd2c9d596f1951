#include <catch_amalgamated.hpp>

#include <regex>
#include <sstream>

#include "emoser/report.hpp"
#include "test_support.hpp"

using namespace emoser;

namespace {

History synthetic_history(std::size_t n) {
  History h;
  for (std::size_t e = 1; e <= n; ++e) {
    const double t = static_cast<double>(e);
    h.push_back({e, 2.0 / t + 1.0 / 3.0, 1.0 - 1.0 / (t + 1.0), 2.5 / t, 0.5 - 0.1 / t});
  }
  return h;
}

std::size_t count_points(const std::string& points) {
  std::istringstream is(points);
  std::size_t n = 0;
  std::string tok;
  while (is >> tok) ++n;
  return n;
}

std::vector<Sample> toy_samples(std::size_t n, std::uint64_t seed) {
  SeededRng rng(seed);
  std::vector<Sample> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back({testsupport::random_tensor<float>({12, 12, 1}, rng), i % 8});
  return out;
}

}  // namespace

TEST_CASE("history CSV layout", "[report]") {
  const auto h = synthetic_history(100);
  const auto csv = history_csv(h);
  std::istringstream is(csv);
  std::vector<std::string> lines;
  for (std::string line; std::getline(is, line);) lines.push_back(line);
  REQUIRE(lines.size() == 101);
  CHECK(lines[0] == "epoch,train_loss,train_acc,val_loss,val_acc");
  CHECK(lines[1] == "1,2.33333,0.5,2.5,0.4");
  CHECK(lines[3].rfind("3,1,0.75,0.833333,0.466667", 0) == 0);
  const std::regex row(R"(\d+(,[-0-9.e+]+){4})");
  for (std::size_t i = 1; i < lines.size(); ++i) CHECK(std::regex_match(lines[i], row));
}

TEST_CASE("history JSON round trip", "[report]") {
  const auto h = synthetic_history(7);
  CHECK(history_from_json(history_json(h)) == h);
  CHECK(history_json(h)[0].contains("train_acc"));
  CHECK_THROWS_AS(history_from_json(nlohmann::json::parse(R"([{"epoch":1}])")), Error);
}

TEST_CASE("export_history picks the format from the extension", "[report]") {
  testsupport::TempDir dir;
  const auto h = synthetic_history(3);
  export_history(h, dir / "h.csv", history_format_for(dir / "h.csv"));
  export_history(h, dir / "h.json", history_format_for(dir / "h.json"));
  const auto csv = read_file_bytes(dir / "h.csv");
  CHECK(std::string(csv.begin(), csv.end()) == history_csv(h));
  const auto js = read_file_bytes(dir / "h.json");
  CHECK(history_from_json(nlohmann::json::parse(js.begin(), js.end())) == h);
  CHECK_THROWS_AS(export_history({}, dir / "e.csv", HistoryFormat::Csv), Error);
  CHECK_THROWS_AS(export_history(h, dir / "missing" / "h.csv", HistoryFormat::Csv), Error);
}

TEST_CASE("curves SVG carries one point per epoch", "[report]") {
  for (std::size_t n : {1u, 2u, 50u}) {
    const auto svg = render_curves_svg(synthetic_history(n));
    CHECK(svg.rfind("<svg", 0) == 0);
    CHECK(svg.find("</svg>") != std::string::npos);
    const std::regex poly(R"re(data-series="(train|validation)"[^>]*points="([^"]*)")re");
    std::size_t series = 0;
    for (auto it = std::sregex_iterator(svg.begin(), svg.end(), poly); it != std::sregex_iterator(); ++it) {
      ++series;
      CHECK(count_points((*it)[2].str()) == n);
    }
    CHECK(series == 4);
    CHECK(svg.find("nan") == std::string::npos);
  }
  CHECK_THROWS_AS(render_curves_svg({}), Error);
}

TEST_CASE("compare_models lays out three rows", "[report][compare]") {
  const auto train_set = toy_samples(16, 1);
  const auto test_set = toy_samples(8, 2);
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 8;
  const ModelSpec spec{ModelKind::CnnFig1, 12, 12, 8, {}};
  std::vector<std::string> seen;
  const auto report = compare_models(train_set, test_set, spec, cfg,
                                     [&](const std::string& name, const EpochRecord&) { seen.push_back(name); });
  REQUIRE(report.rows.size() == 3);
  CHECK(report.rows[0].name == "CNN");
  CHECK(report.rows[1].name == "LSTM");
  CHECK(report.rows[2].name == "DNN");
  CHECK(seen == std::vector<std::string>{"CNN", "CNN", "DNN", "DNN"});
  CHECK(report.histories.size() == 2);
  CHECK(report.metrics.size() == 2);
  CHECK_FALSE(report.rows[1].accuracy.has_value());
  CHECK(report.rows[1].status == kLstmStatus);
  for (std::size_t r : {0u, 2u}) {
    const auto& row = report.rows[r];
    REQUIRE(row.accuracy.has_value());
    CHECK(*row.precision == *row.accuracy);
    CHECK(*row.recall == *row.accuracy);
    CHECK(*row.f1 == *row.accuracy);
  }

  const auto text = report.to_text();
  CHECK(text.rfind("Model   Precision  Recall     F1-Score   Accuracy   Status", 0) == 0);
  CHECK(text.find("LSTM    -          -          -          -          not implemented") != std::string::npos);
  const auto j = report.to_json();
  REQUIRE(j["models"].size() == 3);
  CHECK(j["models"][1]["accuracy"].is_null());
  CHECK(j["models"][0]["accuracy"] == *report.rows[0].accuracy);

  const auto again = compare_models(train_set, test_set, spec, cfg);
  CHECK(again.to_text() == text);
  CHECK(again.histories == report.histories);
}
