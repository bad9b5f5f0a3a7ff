#pragma once

// Finite-difference checks of every loss term on small random instances,
// wired through the real networks.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "adah/diffcore.hpp"
#include "adah/losses.hpp"
#include "adah/nets.hpp"
#include "adah/pseudo.hpp"

namespace adah {

enum class LossKind { hash, centroid, classification, reconstruction, adversarial_d, adversarial_g, combined };

inline const char* loss_name(LossKind k) {
  switch (k) {
    case LossKind::hash: return "L_h";
    case LossKind::centroid: return "L_s";
    case LossKind::classification: return "L_c";
    case LossKind::reconstruction: return "L_1";
    case LossKind::adversarial_d: return "L_a(D)";
    case LossKind::adversarial_g: return "L_a(G)";
    case LossKind::combined: return "combined";
  }
  return "?";
}

inline constexpr LossKind kAllLosses[] = {LossKind::hash,          LossKind::centroid,      LossKind::classification,
                                          LossKind::reconstruction, LossKind::adversarial_d, LossKind::adversarial_g,
                                          LossKind::combined};

/// A random small problem: six nets of width `width`, batches of `batch`
/// rows, fixed pseudo-labels (some unassigned).
struct ObjectiveInstance {
  std::size_t classes = 3;
  Array x_s, x_t;
  std::vector<int> y_s;
  PseudoLabels pseudo;
  std::vector<ParameterSet> nets;  // encoder, classifier, gen_s, gen_t, disc_s, disc_t
  Hyperparams hp;

  static ObjectiveInstance random(std::uint64_t seed, std::size_t batch = 8, std::size_t width = 4) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(-2.0, 2.0);
    ObjectiveInstance inst;
    const std::size_t features = 3, bits = 4, n = inst.classes;
    inst.x_s = Array(Shape{batch, features});
    inst.x_t = Array(Shape{batch, features});
    for (double& v : inst.x_s.data()) v = unit(rng);
    for (double& v : inst.x_t.data()) v = unit(rng);
    std::uniform_int_distribution<int> cls(0, static_cast<int>(n) - 1);
    std::uniform_int_distribution<int> tgt(-1, static_cast<int>(n) - 1);
    for (std::size_t i = 0; i < batch; ++i) {
      inst.y_s.push_back(cls(rng));
      inst.pseudo.labels.push_back(tgt(rng));
      inst.pseudo.confidences.push_back(0.0);
    }
    const std::vector<std::size_t> hidden{width};
    inst.nets = {init(encoder_config(features, hidden, bits), role::encoder, rng()),
                 init(classifier_config(bits, n, hidden), role::classifier, rng()),
                 init(generator_config(bits, hidden, features), role::gen_source, rng()),
                 init(generator_config(bits, hidden, features), role::gen_target, rng()),
                 init(discriminator_config(features, hidden, n), role::disc_source, rng()),
                 init(discriminator_config(features, hidden, n), role::disc_target, rng())};
    // Random biases keep activations away from symmetric points.
    for (auto& ps : inst.nets)
      for (auto& l : ps.layers)
        for (double& b : l.bias.data()) b = 0.1 * unit(rng);
    inst.hp.alpha = 0.7;
    inst.hp.beta = 0.4;
    inst.hp.chi = 0.3;
    inst.hp.epsilon = 0.2;
    inst.hp.upsilon = 0.05;
    return inst;
  }

  /// Builds the requested loss from leaf variables laid out like
  /// flatten(nets).
  Var build(LossKind kind, const std::vector<Var>& leaves) const {
    std::vector<ParameterSet> bound_view = nets;
    std::size_t k = 0;
    std::vector<std::vector<Var>> per_net;
    for (const auto& ps : nets) {
      std::vector<Var> v;
      for (std::size_t l = 0; l < ps.layers.size(); ++l) {
        v.push_back(leaves[k++]);
        v.push_back(leaves[k++]);
      }
      per_net.push_back(std::move(v));
    }
    auto run = [&](std::size_t net, Var h) {
      const auto& ps = nets[net];
      for (std::size_t l = 0; l < ps.layers.size(); ++l) {
        h = add_bias(matmul(h, per_net[net][2 * l]), per_net[net][2 * l + 1]);
        h = activate(h, l + 1 == ps.layers.size() ? ps.output_activation : ps.hidden_activation);
      }
      return h;
    };
    const Var xs = constant(x_s), xt = constant(x_t);
    const Var us = run(0, xs), ut = run(0, xt);
    const auto& pl = pseudo.labels;
    auto hash = [&] { return hash_pair_loss(us, SimilarityMatrix::from_labels(y_s), hp.upsilon); };
    auto centroid = [&] { return centroid_loss(us, y_s, ut, pl, classes); };
    auto cls = [&] { return classification_loss(run(1, us), y_s, run(1, ut), pl, hp.epsilon); };
    auto recon = [&] { return recon_l1_loss(xs, run(2, us), xt, run(3, ut)); };
    auto adv_g = [&] { return adversarial_g_loss(run(5, run(3, us)), y_s, run(4, run(2, ut)), pl, classes); };
    switch (kind) {
      case LossKind::hash: return hash();
      case LossKind::centroid: return centroid();
      case LossKind::classification: return cls();
      case LossKind::reconstruction: return recon();
      case LossKind::adversarial_d:
        return add(adversarial_d_loss(run(4, xs), y_s, run(4, run(2, ut)), classes),
                   adversarial_d_loss(run(5, xt), pl, run(5, run(3, us)), classes));
      case LossKind::adversarial_g: return adv_g();
      case LossKind::combined:
        return total_encoder_generator_loss({cls(), adv_g(), hash(), centroid(), recon()}, hp);
    }
    throw ContractError("unknown loss kind");
  }

  double check(LossKind kind, double h = 1e-5) const {
    return grad_check([&](const std::vector<Var>& leaves) { return build(kind, leaves); }, flatten(nets), h);
  }
};

}  // namespace adah
