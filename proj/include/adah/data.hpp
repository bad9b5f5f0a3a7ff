#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "adah/diffcore.hpp"
#include "adah/error.hpp"
#include "adah/io.hpp"

namespace adah {

enum class Domain { source, target };

/// Features without labels. This is the only view of the target domain the
/// training path receives; it holds no reference back to any label storage.
class UnlabeledView {
 public:
  explicit UnlabeledView(std::shared_ptr<const Array> features) : features_(std::move(features)) {}

  const Array& features() const { return *features_; }
  std::size_t size() const { return features_->rows(); }
  std::size_t feature_dim() const { return features_->cols(); }

 private:
  std::shared_ptr<const Array> features_;
};

/// Feature matrix [n × f] plus optional labels in [0, N).
class Dataset {
 public:
  Dataset(Array features, std::optional<std::vector<int>> labels, Domain domain, std::size_t classes)
      : features_(std::make_shared<const Array>(std::move(features))),
        labels_(std::move(labels)),
        domain_(domain),
        classes_(classes) {
    if (features_->rank() != 2) throw DimensionError("dataset features must be a matrix");
    if (labels_ && labels_->size() != features_->rows())
      throw DimensionError("dataset has " + std::to_string(features_->rows()) + " rows but " +
                           std::to_string(labels_->size()) + " labels");
    if (labels_)
      for (int y : *labels_)
        if (y < 0 || static_cast<std::size_t>(y) >= classes_)
          throw DimensionError("dataset label " + std::to_string(y) + " outside [0, " + std::to_string(classes_) + ")");
  }

  const Array& features() const { return *features_; }
  bool has_labels() const { return labels_.has_value(); }
  const std::vector<int>& labels() const {
    if (!labels_) throw ContractError("dataset has no labels");
    return *labels_;
  }
  Domain domain() const { return domain_; }
  std::size_t classes() const { return classes_; }
  std::size_t size() const { return features_->rows(); }
  std::size_t feature_dim() const { return features_->cols(); }

  UnlabeledView unlabeled() const { return UnlabeledView(features_); }

  /// Original label values for re-indexed CSV classes (index → original).
  std::vector<long long> label_mapping;

 private:
  std::shared_ptr<const Array> features_;
  std::optional<std::vector<int>> labels_;
  Domain domain_;
  std::size_t classes_;
};

// ---------------------------------------------------------------------------
// Synthetic two-domain benchmark
// ---------------------------------------------------------------------------

struct ShiftSpec {
  double rotation = 0.0;  // radians, in the plane of the first two features
  std::vector<double> translation;  // padded with zeros to the feature dim
  double scale = 1.0;
  double noise_sigma = 0.0;  // extra isotropic noise on target samples

  void validate() const {
    if (!(scale > 0.0)) throw ConfigError("shift scale must be > 0");
    if (!(noise_sigma >= 0.0)) throw ConfigError("shift noise sigma must be >= 0");
  }
};

struct SyntheticSpec {
  std::size_t classes = 4;
  std::size_t per_class = 200;
  std::size_t dim = 2;
  double cluster_sigma = 0.15;
  double ring_radius = 1.0;
  ShiftSpec shift{50.0 * std::numbers::pi / 180.0, {0.3, -0.2}, 1.0, 0.0};
  std::uint64_t seed = 0;
};

/// Class means on a ring in the first two coordinates, class k at angle 2πk/N.
inline Array ring_means(std::size_t classes, std::size_t dim, double radius) {
  Array means(Shape{classes, dim});
  for (std::size_t k = 0; k < classes; ++k) {
    const double a = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(classes);
    means(k, 0) = radius * std::cos(a);
    means(k, 1) = radius * std::sin(a);
  }
  return means;
}

/// scale·R(rotation)·x + translation, rotating the first two coordinates.
inline std::vector<double> apply_shift(const ShiftSpec& shift, std::span<const double> x) {
  std::vector<double> out(x.begin(), x.end());
  const double c = std::cos(shift.rotation), s = std::sin(shift.rotation);
  out[0] = c * x[0] - s * x[1];
  out[1] = s * x[0] + c * x[1];
  for (std::size_t j = 0; j < out.size(); ++j) {
    out[j] *= shift.scale;
    if (j < shift.translation.size()) out[j] += shift.translation[j];
  }
  return out;
}

/// Source: N Gaussian clusters around ring means. Target: the same generative
/// classes pushed through the shift plus fresh noise. Both keep labels; the
/// target's are for evaluation only.
inline std::pair<Dataset, Dataset> make_synthetic_pair(const SyntheticSpec& spec) {
  if (spec.classes < 2) throw ConfigError("synthetic benchmark needs N >= 2");
  if (spec.dim < 2) throw ConfigError("synthetic benchmark needs dim >= 2");
  if (spec.per_class < 1) throw ConfigError("synthetic benchmark needs at least one sample per class");
  if (!(spec.cluster_sigma >= 0.0)) throw ConfigError("cluster sigma must be >= 0");
  spec.shift.validate();

  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const Array means = ring_means(spec.classes, spec.dim, spec.ring_radius);
  const std::size_t n = spec.classes * spec.per_class;
  Array xs(Shape{n, spec.dim}), xt(Shape{n, spec.dim});
  std::vector<int> ys(n), yt(n);
  std::vector<double> p(spec.dim);
  for (std::size_t k = 0; k < spec.classes; ++k) {
    for (std::size_t i = 0; i < spec.per_class; ++i) {
      const std::size_t row = k * spec.per_class + i;
      for (std::size_t j = 0; j < spec.dim; ++j) xs(row, j) = means(k, j) + spec.cluster_sigma * normal(rng);
      ys[row] = static_cast<int>(k);
    }
  }
  for (std::size_t k = 0; k < spec.classes; ++k) {
    for (std::size_t i = 0; i < spec.per_class; ++i) {
      const std::size_t row = k * spec.per_class + i;
      for (std::size_t j = 0; j < spec.dim; ++j) p[j] = means(k, j) + spec.cluster_sigma * normal(rng);
      auto q = apply_shift(spec.shift, p);
      for (std::size_t j = 0; j < spec.dim; ++j) xt(row, j) = q[j] + spec.shift.noise_sigma * normal(rng);
      yt[row] = static_cast<int>(k);
    }
  }
  return {Dataset(std::move(xs), std::move(ys), Domain::source, spec.classes),
          Dataset(std::move(xt), std::move(yt), Domain::target, spec.classes)};
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    cells.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  for (auto& c : cells) {
    while (!c.empty() && (c.front() == ' ' || c.front() == '\t')) c.remove_prefix(1);
    while (!c.empty() && (c.back() == ' ' || c.back() == '\t' || c.back() == '\r')) c.remove_suffix(1);
  }
  return cells;
}

inline std::optional<double> parse_double(std::string_view s) {
  if (s.empty()) return std::nullopt;
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

inline std::optional<long long> parse_int(std::string_view s) {
  if (s.empty()) return std::nullopt;
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

}  // namespace detail

/// Comma-separated rows; last column is an integer label when `has_labels`.
/// A first row with any non-numeric cell is treated as a header. Labels are
/// re-indexed to contiguous [0, N) in ascending order of their original
/// values, recorded in `label_mapping`.
inline Dataset parse_csv(std::string_view text, bool has_labels, Domain domain = Domain::source,
                         const std::string& origin = "csv") {
  std::vector<std::vector<double>> rows;
  std::vector<long long> raw_labels;
  std::size_t width = 0;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  bool first_content = true;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") == std::string_view::npos) {
      if (nl == text.size()) break;
      continue;
    }
    const auto cells = detail::split_commas(line);
    if (first_content) {
      first_content = false;
      bool numeric = true;
      for (auto c : cells) numeric = numeric && detail::parse_double(c).has_value();
      if (!numeric) continue;  // header
    }
    if (width == 0) {
      width = cells.size();
      if (width < (has_labels ? 2u : 1u))
        throw FormatError(origin + ": line " + std::to_string(line_no) + " has too few columns");
    } else if (cells.size() != width) {
      throw FormatError(origin + ": line " + std::to_string(line_no) + " has " + std::to_string(cells.size()) +
                        " columns, expected " + std::to_string(width));
    }
    const std::size_t nfeat = has_labels ? width - 1 : width;
    std::vector<double> r(nfeat);
    for (std::size_t j = 0; j < nfeat; ++j) {
      const auto v = detail::parse_double(cells[j]);
      if (!v)
        throw FormatError(origin + ": line " + std::to_string(line_no) + ", column " + std::to_string(j + 1) +
                          ": not a number '" + std::string(cells[j]) + "'");
      r[j] = *v;
    }
    if (has_labels) {
      const auto y = detail::parse_int(cells[nfeat]);
      if (!y)
        throw FormatError(origin + ": line " + std::to_string(line_no) + ", column " + std::to_string(nfeat + 1) +
                          ": not an integer label '" + std::string(cells[nfeat]) + "'");
      raw_labels.push_back(*y);
    }
    rows.push_back(std::move(r));
    if (nl == text.size()) break;
  }
  if (rows.empty()) throw FormatError(origin + ": no data rows");

  const std::size_t nfeat = rows.front().size();
  Array features(Shape{rows.size(), nfeat});
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < nfeat; ++j) features(i, j) = rows[i][j];

  if (!has_labels) return Dataset(std::move(features), std::nullopt, domain, 0);

  std::map<long long, int> remap;
  for (auto y : raw_labels) remap.emplace(y, 0);
  std::vector<long long> mapping;
  for (auto& [orig, idx] : remap) {
    idx = static_cast<int>(mapping.size());
    mapping.push_back(orig);
  }
  std::vector<int> labels(raw_labels.size());
  for (std::size_t i = 0; i < raw_labels.size(); ++i) labels[i] = remap.at(raw_labels[i]);
  Dataset ds(std::move(features), std::move(labels), domain, mapping.size());
  ds.label_mapping = std::move(mapping);
  return ds;
}

inline Dataset load_csv(const std::filesystem::path& path, bool has_labels, Domain domain = Domain::source) {
  if (!std::filesystem::exists(path)) throw FormatError("csv file not found: " + path.string());
  const auto bytes = io::read_file(path);
  return parse_csv(std::string_view(bytes.data(), bytes.size()), has_labels, domain, path.string());
}

/// Features (and labels when present) as CSV, 6-decimal fixed notation.
inline std::string to_csv(const Dataset& ds) {
  std::string out;
  for (std::size_t j = 0; j < ds.feature_dim(); ++j) out += (j ? ",x" : "x") + std::to_string(j + 1);
  if (ds.has_labels()) out += ",label";
  out += '\n';
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (std::size_t j = 0; j < ds.feature_dim(); ++j) {
      if (j) out += ',';
      out += io::fixed6(ds.features()(i, j));
    }
    if (ds.has_labels()) out += ',' + std::to_string(ds.labels()[i]);
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// IDX (big-endian header: magic, dims; then unsigned bytes)
// ---------------------------------------------------------------------------

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

namespace detail {

inline std::uint32_t read_be32(std::span<const char> bytes, std::size_t at, const std::string& what) {
  if (bytes.size() < at + 4) throw FormatError(what + ": truncated header");
  std::uint32_t v = 0;
  for (std::size_t i = 0; i < 4; ++i) v = (v << 8) | static_cast<unsigned char>(bytes[at + i]);
  return v;
}

inline std::string hex32(std::uint32_t v) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "0x%08X", v);
  return buf;
}

}  // namespace detail

/// Parses an image/label IDX pair. Pixels are scaled to [0, 1] and flattened
/// row-major; `limit` > 0 keeps only the first `limit` items.
inline Dataset parse_idx(std::span<const char> images, std::span<const char> labels, std::size_t limit = 0,
                         Domain domain = Domain::source) {
  const auto img_magic = detail::read_be32(images, 0, "idx images");
  if (img_magic != kIdxImagesMagic)
    throw FormatError("idx images: bad magic, expected " + detail::hex32(kIdxImagesMagic) + ", got " +
                      detail::hex32(img_magic));
  const auto lbl_magic = detail::read_be32(labels, 0, "idx labels");
  if (lbl_magic != kIdxLabelsMagic)
    throw FormatError("idx labels: bad magic, expected " + detail::hex32(kIdxLabelsMagic) + ", got " +
                      detail::hex32(lbl_magic));
  const std::size_t n_img = detail::read_be32(images, 4, "idx images");
  const std::size_t rows = detail::read_be32(images, 8, "idx images");
  const std::size_t cols = detail::read_be32(images, 12, "idx images");
  const std::size_t n_lbl = detail::read_be32(labels, 4, "idx labels");
  if (n_img != n_lbl)
    throw FormatError("idx: image count " + std::to_string(n_img) + " differs from label count " +
                      std::to_string(n_lbl));
  const std::size_t pixels = rows * cols;
  if (pixels == 0) throw FormatError("idx images: zero-sized images");
  if (n_img > (images.size() - 16) / pixels)
    throw FormatError("idx images: truncated, expected " + std::to_string(n_img) + " images of " +
                      std::to_string(pixels) + " bytes, file has " + std::to_string(images.size()) + " bytes");
  if (labels.size() < 8 + n_lbl)
    throw FormatError("idx labels: truncated, expected " + std::to_string(8 + n_lbl) + " bytes, got " +
                      std::to_string(labels.size()));
  const std::size_t n = limit ? std::min(limit, n_img) : n_img;
  if (n == 0) throw FormatError("idx: no items");
  Array x(Shape{n, pixels});
  std::vector<int> y(n);
  int max_label = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t p = 0; p < pixels; ++p)
      x(i, p) = static_cast<unsigned char>(images[16 + i * pixels + p]) / 255.0;
    y[i] = static_cast<unsigned char>(labels[8 + i]);
    max_label = std::max(max_label, y[i]);
  }
  return Dataset(std::move(x), std::move(y), domain, static_cast<std::size_t>(max_label) + 1);
}

inline Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                        std::size_t limit = 0, Domain domain = Domain::source) {
  const auto img = io::read_file(images);
  const auto lbl = io::read_file(labels);
  return parse_idx(img, lbl, limit, domain);
}

}  // namespace adah
