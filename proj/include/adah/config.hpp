#pragma once

// Plain-text run configuration: one `section.key=value` per line, `#` starts a
// comment. Unknown keys are rejected. Relative paths resolve against the
// config file's directory.

#include <cmath>
#include <filesystem>
#include <functional>
#include <map>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "adah/data.hpp"
#include "adah/error.hpp"
#include "adah/io.hpp"
#include "adah/losses.hpp"
#include "adah/trainer.hpp"

namespace adah {

enum class DataKind { synthetic, csv, idx };

struct DataConfig {
  DataKind kind = DataKind::synthetic;
  SyntheticSpec synthetic;
  bool synthetic_seed_set = false;
  std::filesystem::path source_csv, target_csv;
  bool target_has_labels = true;  // labels in the target file feed evaluation only
  std::filesystem::path source_images, source_labels, target_images, target_labels;
  std::size_t limit = 0;
};

struct RunConfig {
  Hyperparams hp;
  NetShapes shapes;
  DataConfig data;
};

namespace detail {

inline std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline double to_double(const std::string& key, const std::string& v) {
  const auto d = parse_double(v);
  if (!d) throw ConfigError("config: " + key + " expects a number, got '" + v + "'");
  return *d;
}

inline std::size_t to_size(const std::string& key, const std::string& v) {
  const auto i = parse_int(v);
  if (!i || *i < 0) throw ConfigError("config: " + key + " expects a non-negative integer, got '" + v + "'");
  return static_cast<std::size_t>(*i);
}

inline bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config: " + key + " expects true/false, got '" + v + "'");
}

inline std::vector<double> to_doubles(const std::string& key, const std::string& v) {
  std::vector<double> out;
  if (trim(v).empty()) return out;
  for (auto cell : split_commas(v)) out.push_back(to_double(key, std::string(cell)));
  return out;
}

inline std::vector<std::size_t> to_sizes(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  if (trim(v).empty()) return out;
  for (auto cell : split_commas(v)) out.push_back(to_size(key, std::string(cell)));
  return out;
}

}  // namespace detail

inline RunConfig parse_config(std::string_view text, const std::filesystem::path& base_dir = {}) {
  RunConfig cfg;
  auto path = [&](const std::string& v) {
    std::filesystem::path p(v);
    return p.is_absolute() || base_dir.empty() ? p : base_dir / p;
  };
  using Setter = std::function<void(const std::string&, const std::string&)>;
  auto& hp = cfg.hp;
  auto& dc = cfg.data;
  auto& syn = cfg.data.synthetic;
  const std::map<std::string, Setter> setters{
      {"train.alpha", [&](auto& k, auto& v) { hp.alpha = detail::to_double(k, v); }},
      {"train.beta", [&](auto& k, auto& v) { hp.beta = detail::to_double(k, v); }},
      {"train.chi", [&](auto& k, auto& v) { hp.chi = detail::to_double(k, v); }},
      {"train.epsilon", [&](auto& k, auto& v) { hp.epsilon = detail::to_double(k, v); }},
      {"train.upsilon", [&](auto& k, auto& v) { hp.upsilon = detail::to_double(k, v); }},
      {"train.threshold", [&](auto& k, auto& v) { hp.threshold = detail::to_double(k, v); }},
      {"train.adversarial", [&](auto& k, auto& v) { hp.adversarial = detail::to_bool(k, v); }},
      {"train.eta", [&](auto& k, auto& v) { hp.eta = detail::to_double(k, v); }},
      {"train.eta_decay", [&](auto& k, auto& v) { hp.eta_decay = detail::to_double(k, v); }},
      {"train.code_bits", [&](auto& k, auto& v) { hp.code_bits = detail::to_size(k, v); }},
      {"train.batch_size", [&](auto& k, auto& v) { hp.batch_size = detail::to_size(k, v); }},
      {"train.pretrain_epochs", [&](auto& k, auto& v) { hp.pretrain_epochs = detail::to_size(k, v); }},
      {"train.stages", [&](auto& k, auto& v) { hp.stages = detail::to_size(k, v); }},
      {"train.epochs_per_stage", [&](auto& k, auto& v) { hp.epochs_per_stage = detail::to_size(k, v); }},
      {"train.d_steps", [&](auto& k, auto& v) { hp.d_steps = detail::to_size(k, v); }},
      {"train.seed", [&](auto& k, auto& v) { hp.seed = detail::to_size(k, v); }},
      {"net.encoder_hidden", [&](auto& k, auto& v) { cfg.shapes.encoder_hidden = detail::to_sizes(k, v); }},
      {"net.generator_hidden", [&](auto& k, auto& v) { cfg.shapes.generator_hidden = detail::to_sizes(k, v); }},
      {"net.discriminator_hidden",
       [&](auto& k, auto& v) { cfg.shapes.discriminator_hidden = detail::to_sizes(k, v); }},
      {"net.classifier_hidden", [&](auto& k, auto& v) { cfg.shapes.classifier_hidden = detail::to_sizes(k, v); }},
      {"data.kind",
       [&](auto& k, auto& v) {
         if (v == "synthetic") dc.kind = DataKind::synthetic;
         else if (v == "csv") dc.kind = DataKind::csv;
         else if (v == "idx") dc.kind = DataKind::idx;
         else throw ConfigError("config: " + k + " must be synthetic, csv or idx, got '" + v + "'");
       }},
      {"data.source", [&](auto&, auto& v) { dc.source_csv = path(v); }},
      {"data.target", [&](auto&, auto& v) { dc.target_csv = path(v); }},
      {"data.target_has_labels", [&](auto& k, auto& v) { dc.target_has_labels = detail::to_bool(k, v); }},
      {"data.source_images", [&](auto&, auto& v) { dc.source_images = path(v); }},
      {"data.source_labels", [&](auto&, auto& v) { dc.source_labels = path(v); }},
      {"data.target_images", [&](auto&, auto& v) { dc.target_images = path(v); }},
      {"data.target_labels", [&](auto&, auto& v) { dc.target_labels = path(v); }},
      {"data.limit", [&](auto& k, auto& v) { dc.limit = detail::to_size(k, v); }},
      {"synthetic.classes", [&](auto& k, auto& v) { syn.classes = detail::to_size(k, v); }},
      {"synthetic.per_class", [&](auto& k, auto& v) { syn.per_class = detail::to_size(k, v); }},
      {"synthetic.dim", [&](auto& k, auto& v) { syn.dim = detail::to_size(k, v); }},
      {"synthetic.cluster_sigma", [&](auto& k, auto& v) { syn.cluster_sigma = detail::to_double(k, v); }},
      {"synthetic.ring_radius", [&](auto& k, auto& v) { syn.ring_radius = detail::to_double(k, v); }},
      {"synthetic.rotation_deg",
       [&](auto& k, auto& v) { syn.shift.rotation = detail::to_double(k, v) * std::numbers::pi / 180.0; }},
      {"synthetic.translation", [&](auto& k, auto& v) { syn.shift.translation = detail::to_doubles(k, v); }},
      {"synthetic.scale", [&](auto& k, auto& v) { syn.shift.scale = detail::to_double(k, v); }},
      {"synthetic.noise", [&](auto& k, auto& v) { syn.shift.noise_sigma = detail::to_double(k, v); }},
      {"synthetic.seed",
       [&](auto& k, auto& v) {
         syn.seed = detail::to_size(k, v);
         dc.synthetic_seed_set = true;
       }},
  };

  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string line(text.substr(pos, nl - pos));
    pos = nl + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(line_no) + ": expected section.key=value");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    const auto it = setters.find(key);
    if (it == setters.end()) throw ConfigError("config line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    it->second(key, value);
  }
  return cfg;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ConfigError("config file not found: " + path.string());
  const auto bytes = io::read_file(path);
  return parse_config(std::string_view(bytes.data(), bytes.size()), path.parent_path());
}

/// Source (labelled) and target datasets. Target labels, when present, are
/// meant for evaluation only; training receives `target.unlabeled()`.
inline std::pair<Dataset, Dataset> load_datasets(const RunConfig& cfg) {
  const auto& dc = cfg.data;
  switch (dc.kind) {
    case DataKind::synthetic: {
      SyntheticSpec spec = dc.synthetic;
      if (!dc.synthetic_seed_set) spec.seed = cfg.hp.seed;
      return make_synthetic_pair(spec);
    }
    case DataKind::csv: {
      if (dc.source_csv.empty() || dc.target_csv.empty())
        throw ConfigError("config: data.source and data.target are required for csv data");
      Dataset src = load_csv(dc.source_csv, true, Domain::source);
      Dataset tgt = load_csv(dc.target_csv, dc.target_has_labels, Domain::target);
      if (tgt.has_labels() && tgt.classes() > src.classes())
        throw ConfigError("config: target has more classes than source");
      if (!tgt.has_labels()) tgt = Dataset(tgt.features(), std::nullopt, Domain::target, src.classes());
      return {std::move(src), std::move(tgt)};
    }
    case DataKind::idx: {
      if (dc.source_images.empty() || dc.source_labels.empty() || dc.target_images.empty() ||
          dc.target_labels.empty())
        throw ConfigError("config: idx data needs source/target images and labels");
      Dataset src = load_idx(dc.source_images, dc.source_labels, dc.limit, Domain::source);
      Dataset tgt = load_idx(dc.target_images, dc.target_labels, dc.limit, Domain::target);
      const std::size_t n = std::max(src.classes(), tgt.classes());
      return {Dataset(src.features(), src.labels(), Domain::source, n),
              Dataset(tgt.features(), tgt.labels(), Domain::target, n)};
    }
  }
  throw ConfigError("config: unsupported data kind");
}

}  // namespace adah
