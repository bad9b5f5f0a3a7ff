#pragma once

// Loss terms of the adaptive hashing objective. Every loss is a batch sum
// (not a mean) and returns a scalar graph node.

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "adah/diffcore.hpp"
#include "adah/error.hpp"
#include "adah/pseudo.hpp"

namespace adah {

inline constexpr double kLogFloor = 1e-12;

struct Hyperparams {
  double alpha = 1.0;     // weight of the hash loss
  double beta = 0.5;      // weight of centroid alignment
  double chi = 0.1;       // weight of the L1 reconstruction loss
  double epsilon = 0.1;   // weight of pseudo-labelled target rows in L_c
  double upsilon = 0.01;  // quantization weight inside the hash loss
  double threshold = 0.9; // pseudo-label confidence threshold T
  bool adversarial = true;
  double eta = 0.002;
  double eta_decay = 0.5;  // per stage
  std::size_t code_bits = 64;
  std::size_t batch_size = 0;  // 0 → 10·N
  std::size_t pretrain_epochs = 20;
  std::size_t stages = 3;
  std::size_t epochs_per_stage = 30;
  std::size_t d_steps = 1;
  std::uint64_t seed = 0;

  std::size_t effective_batch_size(std::size_t classes) const { return batch_size ? batch_size : 10 * classes; }

  void validate(std::size_t classes) const {
    auto nonneg = [](double v, const char* name) {
      if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError(std::string(name) + " must be a finite value >= 0");
    };
    nonneg(alpha, "alpha");
    nonneg(beta, "beta");
    nonneg(chi, "chi");
    nonneg(epsilon, "epsilon");
    nonneg(upsilon, "upsilon");
    nonneg(eta, "eta");
    nonneg(eta_decay, "eta_decay");
    if (classes < 2) throw ConfigError("need at least 2 classes");
    if (!(threshold > 1.0 / static_cast<double>(classes) && threshold < 1.0))
      throw ConfigError("threshold T must lie in (1/N, 1)");
    if (effective_batch_size(classes) <= classes) {
      throw ConfigError("batch size " + std::to_string(effective_batch_size(classes)) +
                        " must be larger than the number of classes N=" + std::to_string(classes));
    }
    if (code_bits < 1) throw ConfigError("code length d must be >= 1");
    if (stages < 1) throw ConfigError("stages must be >= 1");
    if (d_steps < 1) throw ConfigError("d_steps must be >= 1");
  }
};

/// s_ij = +1 when labels agree, −1 otherwise.
struct SimilarityMatrix {
  Array s;

  static SimilarityMatrix from_labels(std::span<const int> labels) {
    const std::size_t n = labels.size();
    Array s(Shape{n, n});
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) s(i, j) = labels[i] == labels[j] ? 1.0 : -1.0;
    return {std::move(s)};
  }
};

inline double sign_plus(double x) { return x >= 0.0 ? 1.0 : -1.0; }

namespace detail {

inline void check_label(int label, std::size_t limit, const char* where) {
  if (label < 0 || static_cast<std::size_t>(label) >= limit) {
    throw std::out_of_range(std::string(where) + ": label " + std::to_string(label) + " outside [0, " +
                            std::to_string(limit) + ")");
  }
}

// −Σ log p[row, label] over rows whose label is not kUnlabeled, or a constant
// zero when no row qualifies.
inline Var neg_log_likelihood(const Var& probs, std::span<const int> labels, std::size_t limit, const char* where) {
  if (labels.size() != probs->value.rows())
    throw DimensionError(std::string(where) + ": " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(probs->value.rows()) + " rows");
  std::vector<std::pair<std::size_t, std::size_t>> pos;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == kUnlabeled) continue;
    check_label(labels[i], limit, where);
    pos.emplace_back(i, static_cast<std::size_t>(labels[i]));
  }
  if (pos.empty()) return constant(Array::scalar(0.0));
  return scale(sum(clamped_log(gather(probs, std::move(pos)), kLogFloor)), -1.0);
}

// −Σ log p[row, column] for every row.
inline Var neg_log_column(const Var& probs, std::size_t column) {
  const std::size_t n = probs->value.rows();
  if (n == 0) return constant(Array::scalar(0.0));
  std::vector<std::pair<std::size_t, std::size_t>> pos;
  for (std::size_t i = 0; i < n; ++i) pos.emplace_back(i, column);
  return scale(sum(clamped_log(gather(probs, std::move(pos)), kLogFloor)), -1.0);
}

inline void require_width(const Var& probs, std::size_t width, const char* where) {
  if (probs->value.cols() != width)
    throw DimensionError(std::string(where) + ": expected " + std::to_string(width) + " columns, got " +
                         shape_str(probs->value.shape()));
}

}  // namespace detail

/// ½·Σ_ij((1/d)·u_iᵀu_j − s_ij)² + υ·½·Σ_i‖u_i − sign(u_i)‖², summed over all
/// ordered pairs including i = j. sign(·) is a constant in the backward pass,
/// with sign(0) = +1.
inline Var hash_pair_loss(const Var& u, const SimilarityMatrix& sim, double upsilon) {
  const std::size_t n = u->value.rows(), d = u->value.cols();
  if (sim.s.rank() != 2 || sim.s.rows() != n || sim.s.cols() != n) {
    throw DimensionError("hash_pair_loss: similarity " + shape_str(sim.s.shape()) + " for " + std::to_string(n) +
                         " embeddings");
  }
  const Var inner = scale(matmul(u, transpose(u)), 1.0 / static_cast<double>(d));
  const Var pair = scale(sum(square(subtract(inner, constant(sim.s)))), 0.5);
  if (upsilon == 0.0) return pair;
  Array signs = u->value;
  for (double& v : signs.data()) v = sign_plus(v);
  const Var quant = sum(square(subtract(u, constant(std::move(signs)))));
  return add(pair, scale(quant, 0.5 * upsilon));
}

/// Σ over classes present in both batches of ‖mean(u_s | y=i) − mean(u_t | ỹ=i)‖².
/// Target rows marked kUnlabeled are ignored.
inline Var centroid_loss(const Var& u_s, std::span<const int> y_s, const Var& u_t, std::span<const int> y_t,
                         std::size_t classes) {
  if (y_s.size() != u_s->value.rows() || y_t.size() != u_t->value.rows())
    throw DimensionError("centroid_loss: label counts differ from embedding rows");
  if (u_s->value.cols() != u_t->value.cols())
    throw DimensionError("centroid_loss: embedding widths differ");
  std::vector<std::size_t> src_count(classes, 0), tgt_count(classes, 0);
  for (int y : y_s) {
    detail::check_label(y, classes, "centroid_loss");
    ++src_count[static_cast<std::size_t>(y)];
  }
  for (int y : y_t) {
    if (y == kUnlabeled) continue;
    detail::check_label(y, classes, "centroid_loss");
    ++tgt_count[static_cast<std::size_t>(y)];
  }
  std::vector<std::size_t> shared;
  for (std::size_t c = 0; c < classes; ++c)
    if (src_count[c] > 0 && tgt_count[c] > 0) shared.push_back(c);
  if (shared.empty()) return constant(Array::scalar(0.0));

  // Centroids as constant averaging matrices times the embeddings.
  auto averaging = [&](std::span<const int> labels, const std::vector<std::size_t>& count) {
    Array a(Shape{shared.size(), labels.size()});
    for (std::size_t k = 0; k < shared.size(); ++k)
      for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels[i] == static_cast<int>(shared[k])) a(k, i) = 1.0 / static_cast<double>(count[shared[k]]);
    return constant(std::move(a));
  };
  const Var cs = matmul(averaging(y_s, src_count), u_s);
  const Var ct = matmul(averaging(y_t, tgt_count), u_t);
  return sum(square(subtract(cs, ct)));
}

/// −Σ_source log p(y) − ε·Σ_{confident target} log p(ỹ), logs clamped at 1e-12.
inline Var classification_loss(const Var& p_s, std::span<const int> y_s, const Var& p_t, std::span<const int> y_t,
                               double epsilon) {
  const std::size_t classes = p_s->value.cols();
  detail::require_width(p_t, classes, "classification_loss");
  for (int y : y_s) detail::check_label(y, classes, "classification_loss");
  const Var src = detail::neg_log_likelihood(p_s, y_s, classes, "classification_loss");
  const Var tgt = detail::neg_log_likelihood(p_t, y_t, classes, "classification_loss");
  return add(src, scale(tgt, epsilon));
}

/// Σ|x_s − x̃_s| + Σ|x_t − x̃_t|.
inline Var recon_l1_loss(const Var& x_s, const Var& recon_s, const Var& x_t, const Var& recon_t) {
  return add(sum(abs(subtract(x_s, recon_s))), sum(abs(subtract(x_t, recon_t))));
}

/// Discriminator objective as a minimizable cross-entropy:
/// −Σ_real log D(x)[label] − Σ_fake log D(x̃)[N]. Real rows labelled
/// kUnlabeled are excluded.
inline Var adversarial_d_loss(const Var& d_real, std::span<const int> real_labels, const Var& d_fake,
                              std::size_t classes) {
  detail::require_width(d_real, classes + 1, "adversarial_d_loss");
  detail::require_width(d_fake, classes + 1, "adversarial_d_loss");
  const Var real = detail::neg_log_likelihood(d_real, real_labels, classes, "adversarial_d_loss");
  return add(real, detail::neg_log_column(d_fake, classes));
}

/// Non-saturating generator objective: each cross reconstruction should be
/// judged real with the class of the embedding it came from.
/// −Σ log D^t(x̃^st)[y^s] − Σ_{ỹ≠−1} log D^s(x̃^ts)[ỹ^t].
inline Var adversarial_g_loss(const Var& d_fake_st, std::span<const int> y_s, const Var& d_fake_ts,
                              std::span<const int> y_t, std::size_t classes) {
  detail::require_width(d_fake_st, classes + 1, "adversarial_g_loss");
  detail::require_width(d_fake_ts, classes + 1, "adversarial_g_loss");
  for (int y : y_s) detail::check_label(y, classes, "adversarial_g_loss");
  return add(detail::neg_log_likelihood(d_fake_st, y_s, classes, "adversarial_g_loss"),
             detail::neg_log_likelihood(d_fake_ts, y_t, classes, "adversarial_g_loss"));
}

/// Component losses of one encoder/generator step, all on the same graph.
struct LossTerms {
  Var classification;   // L_c
  Var adversarial_gen;  // generator side of L_a
  Var hash;             // L_h
  Var centroid;         // L_s
  Var reconstruction;   // L_1
};

/// L_c + L_a(gen) + α·L_h + β·L_s + χ·L_1. The adversarial term is dropped when
/// `hp.adversarial` is off.
inline Var total_encoder_generator_loss(const LossTerms& t, const Hyperparams& hp) {
  Var total = t.classification;
  if (hp.adversarial) total = add(total, t.adversarial_gen);
  total = add(total, scale(t.hash, hp.alpha));
  total = add(total, scale(t.centroid, hp.beta));
  total = add(total, scale(t.reconstruction, hp.chi));
  return total;
}

}  // namespace adah
