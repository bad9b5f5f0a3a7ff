#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "adah/diffcore.hpp"
#include "adah/error.hpp"
#include "adah/io.hpp"

namespace adah {

enum class Activation { tanh, leaky_relu, linear, softmax };

inline constexpr double kLeakySlope = 0.2;

struct NetConfig {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden_dims;
  std::size_t output_dim = 0;
  Activation hidden_activation = Activation::leaky_relu;
  Activation output_activation = Activation::linear;

  void validate() const {
    if (input_dim < 1 || output_dim < 1) throw ConfigError("network dims must be >= 1");
    for (auto h : hidden_dims)
      if (h < 1) throw ConfigError("hidden dims must be >= 1");
  }
};

// Role names double as entry prefixes in checkpoint files.
namespace role {
inline constexpr const char* encoder = "encoder";
inline constexpr const char* classifier = "classifier";
inline constexpr const char* gen_source = "gen_s";
inline constexpr const char* gen_target = "gen_t";
inline constexpr const char* disc_source = "disc_s";
inline constexpr const char* disc_target = "disc_t";
}  // namespace role

/// Encoder E: tanh trunk, tanh output of width d (the hash length).
inline NetConfig encoder_config(std::size_t input_dim, std::vector<std::size_t> hidden, std::size_t code_bits) {
  return {input_dim, std::move(hidden), code_bits, Activation::tanh, Activation::tanh};
}

/// Classifier C on the common space: softmax over N classes.
inline NetConfig classifier_config(std::size_t code_bits, std::size_t classes, std::vector<std::size_t> hidden = {}) {
  return {code_bits, std::move(hidden), classes, Activation::leaky_relu, Activation::softmax};
}

/// Generator G: common space back to feature space, linear output.
inline NetConfig generator_config(std::size_t code_bits, std::vector<std::size_t> hidden, std::size_t feature_dim) {
  return {code_bits, std::move(hidden), feature_dim, Activation::leaky_relu, Activation::linear};
}

/// Semantic discriminator D: N class slots plus a trailing fake slot.
inline NetConfig discriminator_config(std::size_t feature_dim, std::vector<std::size_t> hidden, std::size_t classes) {
  return {feature_dim, std::move(hidden), classes + 1, Activation::leaky_relu, Activation::softmax};
}

struct Layer {
  std::string name;
  Array weight;  // [in × out]
  Array bias;    // [1 × out]

  friend bool operator==(const Layer&, const Layer&) = default;
};

/// Trainable parameters of one network. Each network owns its storage; the two
/// generators (and the two discriminators) never alias.
struct ParameterSet {
  std::string name;
  std::vector<Layer> layers;
  Activation hidden_activation = Activation::leaky_relu;
  Activation output_activation = Activation::linear;

  std::size_t input_dim() const { return layers.front().weight.rows(); }
  std::size_t output_dim() const { return layers.back().weight.cols(); }
  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.weight.size() + l.bias.size();
    return n;
  }

  friend bool operator==(const ParameterSet&, const ParameterSet&) = default;
};

/// Glorot-uniform weights, zero biases; deterministic in `seed`.
inline ParameterSet init(const NetConfig& cfg, std::string name, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  ParameterSet ps{std::move(name), {}, cfg.hidden_activation, cfg.output_activation};
  std::vector<std::size_t> dims{cfg.input_dim};
  dims.insert(dims.end(), cfg.hidden_dims.begin(), cfg.hidden_dims.end());
  dims.push_back(cfg.output_dim);
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const std::size_t in = dims[l], out = dims[l + 1];
    const double s = std::sqrt(6.0 / static_cast<double>(in + out));
    std::uniform_real_distribution<double> dist(-s, s);
    Array w(Shape{in, out});
    for (double& v : w.data()) v = dist(rng);
    ps.layers.push_back({"fc" + std::to_string(l), std::move(w), Array(Shape{1, out})});
  }
  return ps;
}

inline Var activate(const Var& x, Activation act) {
  switch (act) {
    case Activation::tanh:
      return tanh(x);
    case Activation::leaky_relu:
      return leaky_relu(x, kLeakySlope);
    case Activation::softmax:
      return softmax_rows(x);
    case Activation::linear:
      break;
  }
  return x;
}

/// A ParameterSet lifted into graph variables for one step. Trainable nets
/// expose gradients after `backward`; frozen ones pass gradients through to
/// their inputs only.
class BoundNet {
 public:
  BoundNet(const ParameterSet& ps, bool trainable) : ps_(&ps) {
    for (const auto& l : ps.layers) {
      weights_.push_back(trainable ? leaf(l.weight) : constant(l.weight));
      biases_.push_back(trainable ? leaf(l.bias) : constant(l.bias));
    }
  }

  Var forward(const Var& x) const {
    if (x->value.rank() != 2 || x->value.cols() != ps_->input_dim()) {
      throw DimensionError(ps_->name + ": input " + shape_str(x->value.shape()) + " but network expects " +
                           std::to_string(ps_->input_dim()) + " columns");
    }
    Var h = x;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      h = add_bias(matmul(h, weights_[l]), biases_[l]);
      const bool last = l + 1 == weights_.size();
      h = activate(h, last ? ps_->output_activation : ps_->hidden_activation);
    }
    return h;
  }

  /// Plain SGD: θ ← θ − η·∂L/∂θ, applied to `target` (same layout as the
  /// bound set).
  void apply_sgd(ParameterSet& target, double eta) const {
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      step(target.layers[l].weight, weights_[l]->grad, eta);
      step(target.layers[l].bias, biases_[l]->grad, eta);
    }
  }

  std::vector<Var> leaves() const {
    std::vector<Var> out;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      out.push_back(weights_[l]);
      out.push_back(biases_[l]);
    }
    return out;
  }

 private:
  static void step(Array& param, const Array& grad, double eta) {
    if (grad.size() != param.size()) return;  // frozen net, no grad
    auto p = param.data();
    const auto g = grad.data();
    for (std::size_t i = 0; i < p.size(); ++i) p[i] -= eta * g[i];
  }

  const ParameterSet* ps_;
  std::vector<Var> weights_;
  std::vector<Var> biases_;
};

/// Graph-free forward pass.
inline Array forward(const ParameterSet& ps, const Array& x) {
  return BoundNet(ps, false).forward(constant(x))->value;
}

/// u = E(x), entries strictly inside (-1, 1).
inline Array encode(const ParameterSet& encoder, const Array& x) { return forward(encoder, x); }
inline Array classify(const ParameterSet& classifier, const Array& u) { return forward(classifier, u); }
inline Array reconstruct(const ParameterSet& generator, const Array& u) { return forward(generator, u); }
inline Array discriminate(const ParameterSet& discriminator, const Array& x) { return forward(discriminator, x); }

/// Flattens parameter sets into [W0, b0, W1, b1, ...] across all sets, the
/// layout used by grad_check.
inline std::vector<Array> flatten(std::span<const ParameterSet> sets) {
  std::vector<Array> out;
  for (const auto& ps : sets)
    for (const auto& l : ps.layers) {
      out.push_back(l.weight);
      out.push_back(l.bias);
    }
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoint format
//
//   "ADAH" | version u32 | entry count u64 |
//   per entry: name length u32, name bytes, rank u32, dims u64 × rank,
//              f64 × prod(dims)
//
// All integers and floats little-endian. Entry names are
// "<net>/<layer>/weight" and "<net>/<layer>/bias"; nets and layers appear in
// the order they were saved.
// ---------------------------------------------------------------------------

inline constexpr char kParamMagic[4] = {'A', 'D', 'A', 'H'};
inline constexpr std::uint32_t kParamVersion = 1;

/// Activations are not stored; they follow from the role name.
inline std::pair<Activation, Activation> role_activations(const std::string& net) {
  if (net == role::encoder) return {Activation::tanh, Activation::tanh};
  if (net == role::classifier || net == role::disc_source || net == role::disc_target)
    return {Activation::leaky_relu, Activation::softmax};
  return {Activation::leaky_relu, Activation::linear};
}

inline std::vector<char> serialize(std::span<const ParameterSet> sets) {
  io::ByteWriter w;
  w.put_bytes(std::string_view(kParamMagic, 4));
  w.put<std::uint32_t>(kParamVersion);
  std::uint64_t entries = 0;
  for (const auto& ps : sets) entries += 2 * ps.layers.size();
  w.put<std::uint64_t>(entries);
  auto put_entry = [&w](const std::string& name, const Array& a) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(name.size()));
    w.put_bytes(name);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(a.rank()));
    for (auto d : a.shape()) w.put<std::uint64_t>(d);
    for (double v : a.data()) w.put<double>(v);
  };
  for (const auto& ps : sets)
    for (const auto& l : ps.layers) {
      put_entry(ps.name + "/" + l.name + "/weight", l.weight);
      put_entry(ps.name + "/" + l.name + "/bias", l.bias);
    }
  return w.release();
}

inline std::vector<ParameterSet> deserialize(std::span<const char> bytes) {
  io::ByteReader r(bytes, "parameter file");
  const std::string magic = r.get_bytes(4);
  if (magic != std::string_view(kParamMagic, 4)) throw FormatError("parameter file: bad magic '" + magic + "'");
  const auto version = r.get<std::uint32_t>();
  if (version != kParamVersion)
    throw FormatError("parameter file: unsupported version " + std::to_string(version));
  const auto entries = r.get<std::uint64_t>();
  if (entries % 2 != 0) throw FormatError("parameter file: odd entry count");

  auto read_entry = [&r](std::string& name) {
    const auto len = r.get<std::uint32_t>();
    name = r.get_bytes(len);
    const auto rank = r.get<std::uint32_t>();
    if (rank == 0 || rank > 8) throw FormatError("parameter file: bad rank for " + name);
    Shape shape(rank);
    std::uint64_t count = 1;
    for (auto& d : shape) {
      d = r.get<std::uint64_t>();
      count *= d;
    }
    if (count * sizeof(double) > r.remaining()) throw FormatError("parameter file: truncated entry " + name);
    std::vector<double> data(count);
    for (auto& v : data) v = r.get<double>();
    return Array(std::move(shape), std::move(data));
  };

  std::vector<ParameterSet> sets;
  for (std::uint64_t e = 0; e < entries; e += 2) {
    std::string wname, bname;
    Array w = read_entry(wname);
    Array b = read_entry(bname);
    const auto s1 = wname.find('/'), s2 = wname.rfind('/');
    if (s1 == std::string::npos || s1 == s2 || wname.substr(s2) != "/weight" ||
        bname != wname.substr(0, s2) + "/bias") {
      throw FormatError("parameter file: malformed entry pair '" + wname + "', '" + bname + "'");
    }
    const std::string net = wname.substr(0, s1);
    const std::string layer = wname.substr(s1 + 1, s2 - s1 - 1);
    if (sets.empty() || sets.back().name != net) {
      auto [hidden, output] = role_activations(net);
      sets.push_back({net, {}, hidden, output});
    }
    sets.back().layers.push_back({layer, std::move(w), std::move(b)});
  }
  if (!r.at_end()) throw FormatError("parameter file: trailing bytes");
  return sets;
}

inline void save_parameters(const std::filesystem::path& path, std::span<const ParameterSet> sets) {
  io::write_file_atomic(path, serialize(sets));
}

inline std::vector<ParameterSet> load_parameters(const std::filesystem::path& path) {
  return deserialize(io::read_file(path));
}

/// Looks up a network by role name in a loaded checkpoint.
inline const ParameterSet& find_net(std::span<const ParameterSet> sets, const std::string& name) {
  for (const auto& ps : sets)
    if (ps.name == name) return ps;
  throw FormatError("checkpoint has no '" + name + "' network");
}

}  // namespace adah
