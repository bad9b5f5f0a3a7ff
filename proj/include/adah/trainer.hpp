#pragma once

// Staged adversarial training.
//
// A run is: source-only pre-training of E and C, then `stages` stages of
// full-objective training. Every step updates the discriminators first (E, G
// frozen) and then E, C and both generators on the combined loss (D frozen).
// Between stages E and C carry over while G^s, G^t, D^s and D^t restart from
// fresh random parameters.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "adah/data.hpp"
#include "adah/diffcore.hpp"
#include "adah/error.hpp"
#include "adah/io.hpp"
#include "adah/losses.hpp"
#include "adah/nets.hpp"
#include "adah/pseudo.hpp"

namespace adah {

struct NetShapes {
  std::vector<std::size_t> encoder_hidden{128, 64};
  std::vector<std::size_t> generator_hidden{64, 128};
  std::vector<std::size_t> discriminator_hidden{128, 64};
  std::vector<std::size_t> classifier_hidden{};
};

struct Networks {
  ParameterSet encoder, classifier, gen_source, gen_target, disc_source, disc_target;

  std::vector<ParameterSet> to_list() const {
    return {encoder, classifier, gen_source, gen_target, disc_source, disc_target};
  }
  static Networks from_list(std::span<const ParameterSet> sets) {
    return {find_net(sets, role::encoder),    find_net(sets, role::classifier),
            find_net(sets, role::gen_source), find_net(sets, role::gen_target),
            find_net(sets, role::disc_source), find_net(sets, role::disc_target)};
  }

  friend bool operator==(const Networks&, const Networks&) = default;
};

/// Parameter groups of the three-way SGD split.
enum class ParamGroup { encoder_classifier, generators, discriminators };

/// One row of the metrics log. Losses are averaged over the epoch's steps;
/// tgt_acc is NaN when no evaluation labels were supplied.
struct EpochMetrics {
  std::size_t stage = 0;
  std::size_t epoch = 0;
  double l_c = 0, l_h = 0, l_s = 0, l_1 = 0, l_a_d = 0, l_a_g = 0;
  double src_acc = 0;
  double tgt_acc = std::numeric_limits<double>::quiet_NaN();
  double confident_frac = 0;

  friend bool operator==(const EpochMetrics& a, const EpochMetrics& b) {
    auto same = [](double x, double y) { return x == y || (std::isnan(x) && std::isnan(y)); };
    return a.stage == b.stage && a.epoch == b.epoch && same(a.l_c, b.l_c) && same(a.l_h, b.l_h) &&
           same(a.l_s, b.l_s) && same(a.l_1, b.l_1) && same(a.l_a_d, b.l_a_d) && same(a.l_a_g, b.l_a_g) &&
           same(a.src_acc, b.src_acc) && same(a.tgt_acc, b.tgt_acc) && same(a.confident_frac, b.confident_frac);
  }
};

inline constexpr const char* kMetricsHeader = "stage,epoch,L_c,L_h,L_s,L_1,L_a_d,L_a_g,src_acc,tgt_acc,confident_frac";

inline std::string metrics_csv_row(const EpochMetrics& m) {
  auto f = [](double v) { return std::isnan(v) ? std::string("nan") : io::fixed6(v); };
  return std::to_string(m.stage) + "," + std::to_string(m.epoch) + "," + f(m.l_c) + "," + f(m.l_h) + "," +
         f(m.l_s) + "," + f(m.l_1) + "," + f(m.l_a_d) + "," + f(m.l_a_g) + "," + f(m.src_acc) + "," +
         f(m.tgt_acc) + "," + f(m.confident_frac);
}

inline std::string metrics_csv(std::span<const EpochMetrics> rows) {
  std::string out = std::string(kMetricsHeader) + "\n";
  for (const auto& m : rows) out += metrics_csv_row(m) + "\n";
  return out;
}

/// Loss values of one train_step (E/G side evaluated before the update).
struct StepLosses {
  double l_c = 0, l_h = 0, l_s = 0, l_1 = 0, l_a_d = 0, l_a_g = 0, total = 0;
  double confident_frac = 0;
};

struct TrainState {
  std::size_t stage = 0;
  std::size_t epoch = 0;
  std::size_t step = 0;
  Networks nets;
  Hyperparams hp;
  NetShapes shapes;
  std::size_t classes = 0;
  std::size_t feature_dim = 0;
  std::mt19937_64 rng;
  std::vector<EpochMetrics> history;           // full-objective epochs only
  std::vector<EpochMetrics> pretrain_history;  // source-only epochs

  /// Learning rate of the current stage.
  double stage_eta() const { return hp.eta * std::pow(hp.eta_decay, static_cast<double>(stage)); }
};

inline ParameterSet fresh_generator(const TrainState& s, const char* name, std::uint64_t seed) {
  return init(generator_config(s.hp.code_bits, s.shapes.generator_hidden, s.feature_dim), name, seed);
}

inline ParameterSet fresh_discriminator(const TrainState& s, const char* name, std::uint64_t seed) {
  return init(discriminator_config(s.feature_dim, s.shapes.discriminator_hidden, s.classes), name, seed);
}

/// Validates the configuration and initializes all six networks from hp.seed.
inline TrainState make_state(const Hyperparams& hp, const NetShapes& shapes, std::size_t classes,
                             std::size_t feature_dim) {
  hp.validate(classes);
  if (feature_dim < 1) throw ConfigError("feature dim must be >= 1");
  TrainState s;
  s.hp = hp;
  s.shapes = shapes;
  s.classes = classes;
  s.feature_dim = feature_dim;
  s.rng.seed(hp.seed);
  s.nets.encoder = init(encoder_config(feature_dim, shapes.encoder_hidden, hp.code_bits), role::encoder, s.rng());
  s.nets.classifier =
      init(classifier_config(hp.code_bits, classes, shapes.classifier_hidden), role::classifier, s.rng());
  s.nets.gen_source = fresh_generator(s, role::gen_source, s.rng());
  s.nets.gen_target = fresh_generator(s, role::gen_target, s.rng());
  s.nets.disc_source = fresh_discriminator(s, role::disc_source, s.rng());
  s.nets.disc_target = fresh_discriminator(s, role::disc_target, s.rng());
  return s;
}

// ---------------------------------------------------------------------------
// Batching
// ---------------------------------------------------------------------------

/// Shuffled row-index batches covering one epoch; the final short batch is
/// dropped so every batch has exactly `batch_size` rows.
inline std::vector<std::vector<std::size_t>> make_batches(std::size_t rows, std::size_t batch_size,
                                                          std::size_t classes, std::uint64_t seed) {
  if (batch_size <= classes)
    throw ConfigError("batch size " + std::to_string(batch_size) + " must be larger than the number of classes N=" +
                      std::to_string(classes));
  std::vector<std::size_t> order(rows);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t b = 0; b + batch_size <= rows; b += batch_size)
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(b),
                         order.begin() + static_cast<std::ptrdiff_t>(b + batch_size));
  return batches;
}

inline Array gather_rows(const Array& x, std::span<const std::size_t> idx) {
  Array out(Shape{idx.size(), x.cols()});
  for (std::size_t i = 0; i < idx.size(); ++i) std::copy_n(x.row(idx[i]).begin(), x.cols(), out.row(i).begin());
  return out;
}

inline std::vector<int> gather_labels(std::span<const int> y, std::span<const std::size_t> idx) {
  std::vector<int> out(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) out[i] = y[idx[i]];
  return out;
}

struct LabeledBatch {
  Array x;
  std::vector<int> y;
};

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

inline std::vector<int> predict(const ParameterSet& encoder, const ParameterSet& classifier, const Array& x) {
  const Array p = classify(classifier, encode(encoder, x));
  std::vector<int> out(p.rows());
  for (std::size_t i = 0; i < p.rows(); ++i) {
    const auto r = p.row(i);
    out[i] = static_cast<int>(std::max_element(r.begin(), r.end()) - r.begin());
  }
  return out;
}

/// Fraction of rows whose argmax prediction equals the true label.
inline double evaluate_accuracy(const ParameterSet& encoder, const ParameterSet& classifier, const Array& x,
                                std::span<const int> labels) {
  if (labels.size() != x.rows())
    throw DimensionError("evaluate_accuracy: " + std::to_string(x.rows()) + " rows but " +
                         std::to_string(labels.size()) + " labels");
  if (labels.empty()) return 0.0;
  const auto pred = predict(encoder, classifier, x);
  std::size_t hit = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hit += pred[i] == labels[i];
  return static_cast<double>(hit) / static_cast<double>(labels.size());
}

// ---------------------------------------------------------------------------
// Steps
// ---------------------------------------------------------------------------

/// Source-only step on L_c + α·L_h; touches E and C only.
inline StepLosses pretrain_step(TrainState& s, const LabeledBatch& src) {
  const BoundNet enc(s.nets.encoder, true), cls(s.nets.classifier, true);
  const Var x = constant(src.x);
  const Var u = enc.forward(x);
  const Var p = cls.forward(u);
  const Var lc = detail::neg_log_likelihood(p, src.y, s.classes, "pretrain");
  Var total = lc;
  Var lh = constant(Array::scalar(0.0));
  if (s.hp.alpha != 0.0) {
    lh = hash_pair_loss(u, SimilarityMatrix::from_labels(src.y), s.hp.upsilon);
    total = add(total, scale(lh, s.hp.alpha));
  }
  backward(total);
  enc.apply_sgd(s.nets.encoder, s.hp.eta);
  cls.apply_sgd(s.nets.classifier, s.hp.eta);
  ++s.step;
  StepLosses out;
  out.l_c = lc->value.item();
  out.l_h = lh->value.item();
  out.total = total->value.item();
  return out;
}

/// One full-objective step: forward + pseudo-labels, discriminator update with
/// E and G frozen, then E/C/G update with D frozen. `after_discriminator_step`
/// lets tests observe the state between the two updates.
inline StepLosses train_step(TrainState& s, const LabeledBatch& src, const Array& tgt,
                             const std::function<void(const TrainState&)>& after_discriminator_step = {}) {
  const std::size_t bs = s.hp.effective_batch_size(s.classes);
  if (src.x.rows() != bs || tgt.rows() != bs || src.y.size() != bs)
    throw DimensionError("train_step: batches must have exactly " + std::to_string(bs) + " rows");
  if (src.x.cols() != s.feature_dim || tgt.cols() != s.feature_dim)
    throw DimensionError("train_step: feature width " + std::to_string(src.x.cols()) + "/" +
                         std::to_string(tgt.cols()) + " but networks expect " + std::to_string(s.feature_dim));
  const double eta = s.stage_eta();
  const std::size_t n_cls = s.classes;
  StepLosses out;

  // (1) Forward with current parameters; pseudo-labels from the classifier.
  const Array u_s = encode(s.nets.encoder, src.x);
  const Array u_t = encode(s.nets.encoder, tgt);
  const PseudoLabels pl = pseudo_label(classify(s.nets.classifier, u_t), s.hp.threshold);
  out.confident_frac = confident_fraction(pl);

  // (2) Discriminators on {real source, G^s(u^t)} and {real target, G^t(u^s)}.
  if (s.hp.adversarial) {
    const Var fake_ts = constant(reconstruct(s.nets.gen_source, u_t));
    const Var fake_st = constant(reconstruct(s.nets.gen_target, u_s));
    const Var real_s = constant(src.x), real_t = constant(tgt);
    for (std::size_t k = 0; k < s.hp.d_steps; ++k) {
      const BoundNet ds(s.nets.disc_source, true), dt(s.nets.disc_target, true);
      const Var loss = add(adversarial_d_loss(ds.forward(real_s), src.y, ds.forward(fake_ts), n_cls),
                           adversarial_d_loss(dt.forward(real_t), pl.labels, dt.forward(fake_st), n_cls));
      backward(loss);
      ds.apply_sgd(s.nets.disc_source, eta);
      dt.apply_sgd(s.nets.disc_target, eta);
      out.l_a_d = loss->value.item();
    }
  }
  if (after_discriminator_step) after_discriminator_step(s);

  // (3) Encoder, classifier and generators on the combined objective.
  const BoundNet enc(s.nets.encoder, true), cls(s.nets.classifier, true);
  const BoundNet gs(s.nets.gen_source, true), gt(s.nets.gen_target, true);
  const Var xs = constant(src.x), xt = constant(tgt);
  const Var us = enc.forward(xs), ut = enc.forward(xt);
  const Var zero = constant(Array::scalar(0.0));

  LossTerms terms{zero, zero, zero, zero, zero};
  terms.classification = classification_loss(cls.forward(us), src.y, cls.forward(ut), pl.labels, s.hp.epsilon);
  if (s.hp.adversarial) {
    const BoundNet ds(s.nets.disc_source, false), dt(s.nets.disc_target, false);
    terms.adversarial_gen =
        adversarial_g_loss(dt.forward(gt.forward(us)), src.y, ds.forward(gs.forward(ut)), pl.labels, n_cls);
  }
  if (s.hp.alpha != 0.0) terms.hash = hash_pair_loss(us, SimilarityMatrix::from_labels(src.y), s.hp.upsilon);
  if (s.hp.beta != 0.0) terms.centroid = centroid_loss(us, src.y, ut, pl.labels, n_cls);
  if (s.hp.chi != 0.0) terms.reconstruction = recon_l1_loss(xs, gs.forward(us), xt, gt.forward(ut));
  const Var total = total_encoder_generator_loss(terms, s.hp);
  backward(total);
  enc.apply_sgd(s.nets.encoder, eta);
  cls.apply_sgd(s.nets.classifier, eta);
  gs.apply_sgd(s.nets.gen_source, eta);
  gt.apply_sgd(s.nets.gen_target, eta);
  ++s.step;

  out.l_c = terms.classification->value.item();
  out.l_a_g = terms.adversarial_gen->value.item();
  out.l_h = terms.hash->value.item();
  out.l_s = terms.centroid->value.item();
  out.l_1 = terms.reconstruction->value.item();
  out.total = total->value.item();
  return out;
}

// ---------------------------------------------------------------------------
// Loops
// ---------------------------------------------------------------------------

/// Optional evaluation-only labels for the target domain. Kept apart from the
/// training inputs; nothing in the training path reads them.
struct TargetEval {
  const Array* features = nullptr;
  const std::vector<int>* labels = nullptr;
};

inline void pretrain_source(TrainState& s, const Dataset& source, std::size_t epochs) {
  if (source.size() == 0) throw ConfigError("pretrain_source: empty source dataset");
  if (!source.has_labels()) throw ConfigError("pretrain_source: source dataset needs labels");
  if (source.feature_dim() != s.feature_dim)
    throw DimensionError("pretrain_source: source width " + std::to_string(source.feature_dim()) +
                         " but networks expect " + std::to_string(s.feature_dim));
  const std::size_t bs = s.hp.effective_batch_size(s.classes);
  for (std::size_t e = 0; e < epochs; ++e) {
    const auto batches = make_batches(source.size(), bs, s.classes, s.rng());
    if (batches.empty()) throw ConfigError("pretrain_source: fewer rows than one batch");
    EpochMetrics m;
    m.epoch = e;
    for (const auto& idx : batches) {
      const auto l = pretrain_step(s, {gather_rows(source.features(), idx), gather_labels(source.labels(), idx)});
      m.l_c += l.l_c;
      m.l_h += l.l_h;
    }
    m.l_c /= static_cast<double>(batches.size());
    m.l_h /= static_cast<double>(batches.size());
    m.src_acc = evaluate_accuracy(s.nets.encoder, s.nets.classifier, source.features(), source.labels());
    s.pretrain_history.push_back(m);
  }
}

/// One epoch of train_step over paired source/target batches.
inline EpochMetrics train_epoch(TrainState& s, const Dataset& source, const UnlabeledView& target,
                                const TargetEval& eval = {}) {
  const std::size_t bs = s.hp.effective_batch_size(s.classes);
  const auto sb = make_batches(source.size(), bs, s.classes, s.rng());
  const auto tb = make_batches(target.size(), bs, s.classes, s.rng());
  const std::size_t steps = std::min(sb.size(), tb.size());
  if (steps == 0) throw ConfigError("train_epoch: a domain has fewer rows than one batch");
  EpochMetrics m;
  m.stage = s.stage;
  m.epoch = s.epoch;
  for (std::size_t k = 0; k < steps; ++k) {
    const auto l = train_step(s, {gather_rows(source.features(), sb[k]), gather_labels(source.labels(), sb[k])},
                              gather_rows(target.features(), tb[k]));
    m.l_c += l.l_c;
    m.l_h += l.l_h;
    m.l_s += l.l_s;
    m.l_1 += l.l_1;
    m.l_a_d += l.l_a_d;
    m.l_a_g += l.l_a_g;
  }
  const double n = static_cast<double>(steps);
  m.l_c /= n;
  m.l_h /= n;
  m.l_s /= n;
  m.l_1 /= n;
  m.l_a_d /= n;
  m.l_a_g /= n;
  m.src_acc = evaluate_accuracy(s.nets.encoder, s.nets.classifier, source.features(), source.labels());
  if (eval.features && eval.labels)
    m.tgt_acc = evaluate_accuracy(s.nets.encoder, s.nets.classifier, *eval.features, *eval.labels);
  m.confident_frac = confident_fraction(
      pseudo_label(classify(s.nets.classifier, encode(s.nets.encoder, target.features())), s.hp.threshold));
  return m;
}

/// Runs `stages` × `epochs_per_stage` full-objective epochs. At every stage
/// boundary E and C carry over and G^s, G^t, D^s, D^t are re-initialized from
/// fresh seeds. `on_stage_end` receives the state after each stage.
inline void run_stages(TrainState& s, const Dataset& source, const UnlabeledView& target, std::size_t stages,
                       std::size_t epochs_per_stage, const TargetEval& eval = {},
                       const std::function<void(const TrainState&)>& on_stage_end = {}) {
  if (stages < 1) throw ConfigError("run_stages: stages must be >= 1");
  if (source.feature_dim() != s.feature_dim || target.feature_dim() != s.feature_dim)
    throw DimensionError("run_stages: dataset width does not match the networks");
  for (std::size_t st = 0; st < stages; ++st) {
    if (st > 0) {
      s.nets.gen_source = fresh_generator(s, role::gen_source, s.rng());
      s.nets.gen_target = fresh_generator(s, role::gen_target, s.rng());
      s.nets.disc_source = fresh_discriminator(s, role::disc_source, s.rng());
      s.nets.disc_target = fresh_discriminator(s, role::disc_target, s.rng());
    }
    s.stage = st;
    for (std::size_t e = 0; e < epochs_per_stage; ++e) {
      s.epoch = e;
      s.history.push_back(train_epoch(s, source, target, eval));
    }
    if (on_stage_end) on_stage_end(s);
  }
}

}  // namespace adah
