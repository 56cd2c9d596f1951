#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "emoser/error.hpp"
#include "emoser/train.hpp"

namespace emoser {

enum class HistoryFormat { Csv, Json };

inline constexpr const char* kHistoryCsvHeader = "epoch,train_loss,train_acc,val_loss,val_acc";

namespace detail {

inline std::string sig6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(Errc::IoFailure, "cannot write " + path.string());
  out << text;
  if (!out) fail(Errc::IoFailure, "short write to " + path.string());
}

}  // namespace detail

inline std::string history_csv(const History& h) {
  std::string out = std::string(kHistoryCsvHeader) + "\n";
  for (const auto& r : h) {
    out += std::to_string(r.epoch) + "," + detail::sig6(r.train_loss) + "," + detail::sig6(r.train_accuracy) + "," +
           detail::sig6(r.val_loss) + "," + detail::sig6(r.val_accuracy) + "\n";
  }
  return out;
}

inline nlohmann::json history_json(const History& h) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : h) {
    arr.push_back({{"epoch", r.epoch},
                   {"train_loss", r.train_loss},
                   {"train_acc", r.train_accuracy},
                   {"val_loss", r.val_loss},
                   {"val_acc", r.val_accuracy}});
  }
  return arr;
}

inline History history_from_json(const nlohmann::json& j) {
  History h;
  try {
    for (const auto& r : j) {
      h.push_back({r.at("epoch").get<std::size_t>(), r.at("train_loss").get<double>(), r.at("train_acc").get<double>(),
                   r.at("val_loss").get<double>(), r.at("val_acc").get<double>()});
    }
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::ConfigParseError, std::string("history JSON: ") + e.what());
  }
  return h;
}

/// CSV values carry 6 significant digits; JSON keeps full precision.
inline void export_history(const History& h, const std::filesystem::path& path, HistoryFormat format) {
  if (h.empty()) fail(Errc::EmptySet, "history is empty");
  detail::write_text(path, format == HistoryFormat::Csv ? history_csv(h) : history_json(h).dump(2) + "\n");
}

inline HistoryFormat history_format_for(const std::filesystem::path& path) {
  return path.extension() == ".json" ? HistoryFormat::Json : HistoryFormat::Csv;
}

/// Two stacked panels (loss, accuracy), train and validation series each,
/// epoch on the x axis.
inline std::string render_curves_svg(const History& h, const std::string& title = "Training curves") {
  if (h.empty()) fail(Errc::EmptySet, "history is empty");
  constexpr double kWidth = 640, kPanelH = 260, kLeft = 64, kRight = 24, kTop = 40, kPlotH = 190;
  const double plot_w = kWidth - kLeft - kRight;
  const double max_epoch = static_cast<double>(h.back().epoch);
  const double min_epoch = static_cast<double>(h.front().epoch);

  std::ostringstream svg;
  svg << std::fixed << std::setprecision(2);
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
      << (kTop + 2 * kPanelH + 20) << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << kWidth / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << title << "</text>\n";

  auto panel = [&](int index, const char* label, auto train_of, auto val_of) {
    const double top = kTop + index * kPanelH;
    double lo = 0.0, hi = 0.0;
    for (const auto& r : h) hi = std::max({hi, train_of(r), val_of(r)});
    if (hi <= lo) hi = lo + 1.0;
    auto x_of = [&](double e) {
      return kLeft + (max_epoch > min_epoch ? (e - min_epoch) / (max_epoch - min_epoch) : 0.5) * plot_w;
    };
    auto y_of = [&](double v) { return top + kPlotH - (v - lo) / (hi - lo) * kPlotH; };

    svg << "<g class=\"panel\" id=\"" << label << "\">\n";
    svg << "<line x1=\"" << kLeft << "\" y1=\"" << top + kPlotH << "\" x2=\"" << kLeft + plot_w << "\" y2=\""
        << top + kPlotH << "\" stroke=\"black\"/>\n";
    svg << "<line x1=\"" << kLeft << "\" y1=\"" << top << "\" x2=\"" << kLeft << "\" y2=\"" << top + kPlotH
        << "\" stroke=\"black\"/>\n";
    for (int t = 0; t <= 4; ++t) {
      const double v = lo + (hi - lo) * t / 4.0;
      svg << "<text x=\"" << kLeft - 6 << "\" y=\"" << y_of(v) + 4 << "\" text-anchor=\"end\">" << detail::sig6(v)
          << "</text>\n";
    }
    svg << "<text x=\"" << kLeft << "\" y=\"" << top + kPlotH + 16 << "\">" << h.front().epoch << "</text>\n";
    svg << "<text x=\"" << kLeft + plot_w << "\" y=\"" << top + kPlotH + 16 << "\" text-anchor=\"end\">"
        << h.back().epoch << "</text>\n";
    svg << "<text x=\"" << kLeft + plot_w / 2 << "\" y=\"" << top + kPlotH + 32
        << "\" text-anchor=\"middle\">epoch</text>\n";
    svg << "<text x=\"16\" y=\"" << top + kPlotH / 2 << "\" transform=\"rotate(-90 16 " << top + kPlotH / 2
        << ")\" text-anchor=\"middle\">" << label << "</text>\n";

    auto series = [&](const char* name, const char* color, auto value_of) {
      svg << "<polyline class=\"series\" data-series=\"" << name << "\" fill=\"none\" stroke=\"" << color
          << "\" stroke-width=\"1.5\" points=\"";
      for (std::size_t i = 0; i < h.size(); ++i) {
        svg << (i ? " " : "") << x_of(static_cast<double>(h[i].epoch)) << "," << y_of(value_of(h[i]));
      }
      svg << "\"/>\n";
      for (const auto& r : h) {
        svg << "<circle cx=\"" << x_of(static_cast<double>(r.epoch)) << "\" cy=\"" << y_of(value_of(r))
            << "\" r=\"1.5\" fill=\"" << color << "\"/>\n";
      }
    };
    series("train", "#1f77b4", train_of);
    series("validation", "#d62728", val_of);
    svg << "<text x=\"" << kLeft + plot_w - 110 << "\" y=\"" << top + 12 << "\" fill=\"#1f77b4\">train</text>\n";
    svg << "<text x=\"" << kLeft + plot_w - 60 << "\" y=\"" << top + 12 << "\" fill=\"#d62728\">validation</text>\n";
    svg << "</g>\n";
  };
  panel(0, "loss", [](const EpochRecord& r) { return r.train_loss; }, [](const EpochRecord& r) { return r.val_loss; });
  panel(1, "accuracy", [](const EpochRecord& r) { return r.train_accuracy; },
        [](const EpochRecord& r) { return r.val_accuracy; });
  svg << "</svg>\n";
  return svg.str();
}

inline void render_curves(const History& h, const std::filesystem::path& path) {
  detail::write_text(path, render_curves_svg(h));
}

// ---------------------------------------------------------------------------
// Model comparison

struct ComparisonRow {
  std::string name;
  std::optional<double> precision, recall, f1, accuracy;  // micro aggregates
  std::string status;                                      // "trained" or why not
};

struct ComparisonReport {
  std::vector<ComparisonRow> rows;
  std::vector<History> histories;  // one per trained row, in row order
  std::vector<MetricsReport> metrics;

  std::string to_text() const {
    std::ostringstream os;
    auto num = [](const std::optional<double>& v) {
      if (!v) return std::string("-");
      char buf[16];
      std::snprintf(buf, sizeof buf, "%.4f", *v);
      return std::string(buf);
    };
    os << std::left << std::setw(8) << "Model" << std::setw(11) << "Precision" << std::setw(11) << "Recall"
       << std::setw(11) << "F1-Score" << std::setw(11) << "Accuracy" << "Status\n";
    for (const auto& r : rows) {
      os << std::left << std::setw(8) << r.name << std::setw(11) << num(r.precision) << std::setw(11)
         << num(r.recall) << std::setw(11) << num(r.f1) << std::setw(11) << num(r.accuracy) << r.status << "\n";
    }
    return os.str();
  }

  nlohmann::json to_json() const {
    nlohmann::json models = nlohmann::json::array();
    auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
    for (const auto& r : rows) {
      models.push_back({{"name", r.name},
                        {"precision", opt(r.precision)},
                        {"recall", opt(r.recall)},
                        {"f1", opt(r.f1)},
                        {"accuracy", opt(r.accuracy)},
                        {"status", r.status}});
    }
    return {{"models", models}};
  }
};

inline constexpr const char* kLstmStatus = "not implemented (out of scope)";

/// Trains the CNN and the DNN baseline with the same configuration and
/// seed, evaluates both on the test set, and lays the results out as CNN,
/// LSTM (placeholder), DNN.
inline ComparisonReport compare_models(std::span<const Sample> train_set, std::span<const Sample> test_set,
                                       const ModelSpec& base, const TrainConfig& cfg,
                                       const std::function<void(const std::string&, const EpochRecord&)>& on_epoch = {}) {
  ComparisonReport report;
  auto run = [&](ModelKind kind, const std::string& name) {
    ModelSpec spec = base;
    spec.kind = kind;
    SeededRng init_rng(cfg.seed);
    Model model = build_model(spec, init_rng);
    auto history = train(model, train_set, test_set, cfg, [&](const EpochRecord& r) {
      if (on_epoch) on_epoch(name, r);
    });
    const auto metrics = evaluate(model, test_set);
    report.rows.push_back({name, metrics.micro.precision[0], metrics.micro.recall[0], metrics.micro.f1[0],
                           metrics.accuracy, "trained"});
    report.histories.push_back(std::move(history));
    report.metrics.push_back(metrics);
  };
  run(ModelKind::CnnFig1, "CNN");
  report.rows.push_back({"LSTM", std::nullopt, std::nullopt, std::nullopt, std::nullopt, kLstmStatus});
  run(ModelKind::DnnBaseline, "DNN");
  return report;
}

}  // namespace emoser
