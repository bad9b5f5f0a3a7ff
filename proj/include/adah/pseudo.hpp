#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "adah/diffcore.hpp"

namespace adah {

inline constexpr int kUnlabeled = -1;

/// Target-domain labels chosen by the classifier; kUnlabeled marks rows whose
/// top probability did not clear the threshold.
struct PseudoLabels {
  std::vector<int> labels;
  std::vector<double> confidences;

  std::size_t size() const { return labels.size(); }
};

/// argmax row if its probability is strictly greater than `threshold`, else
/// kUnlabeled. Ties go to the lowest class index.
inline PseudoLabels pseudo_label(const Array& probs, double threshold) {
  PseudoLabels out;
  const std::size_t n = probs.rows();
  out.labels.reserve(n);
  out.confidences.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = probs.row(i);
    std::size_t best = 0;
    for (std::size_t c = 1; c < row.size(); ++c)
      if (row[c] > row[best]) best = c;
    out.confidences.push_back(row[best]);
    out.labels.push_back(row[best] > threshold ? static_cast<int>(best) : kUnlabeled);
  }
  return out;
}

inline double confident_fraction(const PseudoLabels& pl) {
  if (pl.labels.empty()) return 0.0;
  std::size_t n = 0;
  for (int l : pl.labels) n += l != kUnlabeled;
  return static_cast<double>(n) / static_cast<double>(pl.labels.size());
}

/// Per-class mean embedding over a batch.
struct CentroidTable {
  std::vector<std::size_t> counts;  // per class
  Array sums;                       // [N × d]

  std::size_t classes() const { return counts.size(); }

  std::optional<std::vector<double>> mean(std::size_t cls) const {
    if (counts[cls] == 0) return std::nullopt;
    const auto s = sums.row(cls);
    std::vector<double> m(s.begin(), s.end());
    for (double& v : m) v /= static_cast<double>(counts[cls]);
    return m;
  }
};

inline CentroidTable batch_centroids(const Array& u, std::span<const int> labels, std::size_t classes) {
  if (labels.size() != u.rows()) throw DimensionError("batch_centroids: label count differs from rows");
  CentroidTable t{std::vector<std::size_t>(classes, 0), Array(Shape{classes, u.cols()})};
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == kUnlabeled) continue;
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= classes)
      throw std::out_of_range("batch_centroids: label " + std::to_string(labels[i]) + " outside [0, N)");
    const auto cls = static_cast<std::size_t>(labels[i]);
    ++t.counts[cls];
    auto s = t.sums.row(cls);
    const auto r = u.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) s[j] += r[j];
  }
  return t;
}

}  // namespace adah
