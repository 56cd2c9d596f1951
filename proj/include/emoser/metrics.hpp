#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "emoser/error.hpp"

namespace emoser {

/// K x K counts; rows are true classes, columns predicted classes.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t k = 0) : k_(k), counts_(k * k, 0) {}

  static ConfusionMatrix from_rows(const std::vector<std::vector<std::uint64_t>>& rows) {
    ConfusionMatrix m(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (rows[r].size() != rows.size()) {
        fail(Errc::NonSquareMatrix, "row " + std::to_string(r) + " has " + std::to_string(rows[r].size()) +
                                        " columns, expected " + std::to_string(rows.size()));
      }
      for (std::size_t c = 0; c < rows.size(); ++c) m.at(r, c) = rows[r][c];
    }
    return m;
  }

  std::size_t classes() const { return k_; }
  std::uint64_t& at(std::size_t truth, std::size_t predicted) { return counts_[truth * k_ + predicted]; }
  std::uint64_t at(std::size_t truth, std::size_t predicted) const { return counts_[truth * k_ + predicted]; }

  std::uint64_t total() const {
    std::uint64_t t = 0;
    for (auto c : counts_) t += c;
    return t;
  }
  std::uint64_t trace() const {
    std::uint64_t t = 0;
    for (std::size_t i = 0; i < k_; ++i) t += at(i, i);
    return t;
  }
  std::uint64_t row_sum(std::size_t r) const {
    std::uint64_t t = 0;
    for (std::size_t c = 0; c < k_; ++c) t += at(r, c);
    return t;
  }
  std::uint64_t col_sum(std::size_t c) const {
    std::uint64_t t = 0;
    for (std::size_t r = 0; r < k_; ++r) t += at(r, c);
    return t;
  }

  std::vector<std::vector<std::uint64_t>> rows() const {
    std::vector<std::vector<std::uint64_t>> out(k_, std::vector<std::uint64_t>(k_));
    for (std::size_t r = 0; r < k_; ++r)
      for (std::size_t c = 0; c < k_; ++c) out[r][c] = at(r, c);
    return out;
  }

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

 private:
  std::size_t k_;
  std::vector<std::uint64_t> counts_;
};

inline ConfusionMatrix confusion_matrix(std::span<const std::size_t> truth, std::span<const std::size_t> predicted,
                                        std::size_t k) {
  if (truth.size() != predicted.size()) fail(Errc::ShapeMismatch, "truth and prediction lengths differ");
  ConfusionMatrix m(k);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] >= k || predicted[i] >= k) fail(Errc::LabelOutOfRange, "class index outside [0, K)");
    ++m.at(truth[i], predicted[i]);
  }
  return m;
}

enum class Averaging { Micro, Macro, PerClass };

/// One entry per class for PerClass, a single entry otherwise.
struct PrecisionRecallF1 {
  std::vector<double> precision;
  std::vector<double> recall;
  std::vector<double> f1;
};

namespace detail {
inline double safe_ratio(double num, double den) { return den > 0.0 ? num / den : 0.0; }
// Harmonic mean; exact when p == r.
inline double f1_of(double p, double r) { return p == r ? p : safe_ratio(2.0 * p * r, p + r); }
}  // namespace detail

/// Zero denominators yield 0 for the affected metric.
inline PrecisionRecallF1 precision_recall_f1(const ConfusionMatrix& m, Averaging averaging) {
  const std::size_t k = m.classes();
  PrecisionRecallF1 per;
  for (std::size_t c = 0; c < k; ++c) {
    const double tp = static_cast<double>(m.at(c, c));
    const double p = detail::safe_ratio(tp, static_cast<double>(m.col_sum(c)));
    const double r = detail::safe_ratio(tp, static_cast<double>(m.row_sum(c)));
    per.precision.push_back(p);
    per.recall.push_back(r);
    per.f1.push_back(detail::f1_of(p, r));
  }
  if (averaging == Averaging::PerClass) return per;

  if (averaging == Averaging::Macro) {
    auto mean = [k](const std::vector<double>& v) {
      double s = 0.0;
      for (double x : v) s += x;
      return k ? s / static_cast<double>(k) : 0.0;
    };
    return {{mean(per.precision)}, {mean(per.recall)}, {mean(per.f1)}};
  }

  // Micro: pooled TP, FP, FN over all classes.
  const double tp = static_cast<double>(m.trace());
  const double fp = static_cast<double>(m.total() - m.trace());
  const double fn = fp;
  const double p = detail::safe_ratio(tp, tp + fp);
  const double r = detail::safe_ratio(tp, tp + fn);
  return {{p}, {r}, {detail::f1_of(p, r)}};
}

/// kappa = (p_o - p_e) / (1 - p_e) with p_e from the marginal products.
inline double cohens_kappa(const ConfusionMatrix& m) {
  const double n = static_cast<double>(m.total());
  if (n <= 0.0) fail(Errc::EmptySet, "kappa of an empty confusion matrix");
  const double po = static_cast<double>(m.trace()) / n;
  double pe = 0.0;
  for (std::size_t c = 0; c < m.classes(); ++c) {
    pe += (static_cast<double>(m.row_sum(c)) / n) * (static_cast<double>(m.col_sum(c)) / n);
  }
  if (pe >= 1.0 - 1e-12) fail(Errc::DegenerateMarginals, "chance agreement is 1; kappa is undefined");
  return (po - pe) / (1.0 - pe);
}

struct MetricsReport {
  ConfusionMatrix confusion;
  double accuracy = 0.0;
  PrecisionRecallF1 per_class;
  PrecisionRecallF1 macro;
  PrecisionRecallF1 micro;
  std::optional<double> cohens_kappa;  // empty when the marginals are degenerate
};

inline MetricsReport metrics_report(const ConfusionMatrix& m) {
  if (m.total() == 0) fail(Errc::EmptySet, "no examples were evaluated");
  MetricsReport r;
  r.confusion = m;
  r.accuracy = static_cast<double>(m.trace()) / static_cast<double>(m.total());
  r.per_class = precision_recall_f1(m, Averaging::PerClass);
  r.macro = precision_recall_f1(m, Averaging::Macro);
  r.micro = precision_recall_f1(m, Averaging::Micro);
  try {
    r.cohens_kappa = cohens_kappa(m);
  } catch (const Error& e) {
    if (e.code() != Errc::DegenerateMarginals) throw;
  }
  return r;
}

inline nlohmann::json to_json(const MetricsReport& r, std::span<const std::string> class_names = {}) {
  nlohmann::json per = nlohmann::json::array();
  for (std::size_t c = 0; c < r.confusion.classes(); ++c) {
    per.push_back({{"class", c < class_names.size() ? class_names[c] : std::to_string(c)},
                   {"precision", r.per_class.precision[c]},
                   {"recall", r.per_class.recall[c]},
                   {"f1", r.per_class.f1[c]},
                   {"support", r.confusion.row_sum(c)}});
  }
  return {{"n_examples", r.confusion.total()},
          {"accuracy", r.accuracy},
          {"micro", {{"precision", r.micro.precision[0]}, {"recall", r.micro.recall[0]}, {"f1", r.micro.f1[0]}}},
          {"macro", {{"precision", r.macro.precision[0]}, {"recall", r.macro.recall[0]}, {"f1", r.macro.f1[0]}}},
          {"cohens_kappa", r.cohens_kappa ? nlohmann::json(*r.cohens_kappa) : nlohmann::json(nullptr)},
          {"per_class", per},
          {"confusion", r.confusion.rows()}};
}

}  // namespace emoser
