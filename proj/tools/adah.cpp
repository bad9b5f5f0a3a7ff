// adah: train, encode, index, retrieve, evaluate.
//
// Exit codes: 0 success, 2 usage/config/format/dimension errors, 1 anything
// else. Diagnostics go to stderr; results to stdout with 6 decimals.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <numbers>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "adah/adah.hpp"
#include "adah/gradcheck.hpp"

namespace fs = std::filesystem;
using namespace adah;

namespace {

struct DataArgs {
  std::string path;
  std::string idx_labels;
  bool unlabeled = false;
  std::uint64_t id_offset = 0;
  std::size_t limit = 0;

  void bind(CLI::App* cmd) {
    cmd->add_option("--data", path, "CSV file (features[,label]) or IDX images file")->required();
    cmd->add_option("--idx-labels", idx_labels, "IDX labels file; makes --data an IDX images file");
    cmd->add_flag("--unlabeled", unlabeled, "CSV has no label column");
    cmd->add_option("--id-offset", id_offset, "first item id");
    cmd->add_option("--limit", limit, "IDX: keep the first n items");
  }

  Dataset load() const {
    if (!idx_labels.empty()) return load_idx(path, idx_labels, limit);
    return load_csv(path, !unlabeled);
  }
};

// Label values as they appear in the input file, or −1 without labels.
std::vector<int> original_labels(const Dataset& ds) {
  std::vector<int> out(ds.size(), kUnlabeled);
  if (!ds.has_labels()) return out;
  const auto& y = ds.labels();
  for (std::size_t i = 0; i < y.size(); ++i)
    out[i] = ds.label_mapping.empty() ? y[i] : static_cast<int>(ds.label_mapping[static_cast<std::size_t>(y[i])]);
  return out;
}

Networks load_model(const std::string& path) {
  if (!fs::exists(path)) throw ConfigError("model file not found: " + path);
  const auto sets = load_parameters(path);
  return Networks::from_list(sets);
}

Array encode_checked(const ParameterSet& encoder, const Dataset& ds) {
  const std::size_t want = encoder.layers.front().weight.rows();
  if (ds.feature_dim() != want)
    throw DimensionError("data has feature width " + std::to_string(ds.feature_dim()) + " but the encoder expects " +
                         std::to_string(want));
  return encode(encoder, ds.features());
}

void check_bits(const CodeFile& a, const CodeFile& b) {
  if (a.bits != b.bits)
    throw DimensionError("code length mismatch: index has d=" + std::to_string(a.bits) + ", queries have d=" +
                         std::to_string(b.bits));
}

int run_train(const std::string& config, const std::string& out, std::optional<std::uint64_t> seed) {
  RunConfig cfg = load_config(config);
  if (seed) cfg.hp.seed = *seed;
  auto [src, tgt] = load_datasets(cfg);
  fs::create_directories(out);
  TrainState s = make_state(cfg.hp, cfg.shapes, src.classes(), src.feature_dim());
  pretrain_source(s, src, cfg.hp.pretrain_epochs);
  io::write_file_atomic(fs::path(out) / "pretrain_metrics.csv", metrics_csv(s.pretrain_history));

  std::optional<std::vector<int>> tgt_labels;
  if (tgt.has_labels()) tgt_labels = tgt.labels();
  TargetEval eval;
  if (tgt_labels) eval = {&tgt.features(), &*tgt_labels};
  const auto save = [&](const TrainState& st) {
    const auto nets = st.nets.to_list();
    save_parameters(fs::path(out) / ("stage_" + std::to_string(st.stage) + ".adah"), nets);
    io::write_file_atomic(fs::path(out) / "metrics.csv", metrics_csv(st.history));
  };
  run_stages(s, src, tgt.unlabeled(), cfg.hp.stages, cfg.hp.epochs_per_stage, eval, save);
  save_parameters(fs::path(out) / "model.adah", s.nets.to_list());
  io::write_file_atomic(fs::path(out) / "metrics.csv", metrics_csv(s.history));

  const auto& last = s.history.back();
  std::cout << "src_acc=" << io::fixed6(last.src_acc) << "\n";
  if (tgt_labels) std::cout << "tgt_acc=" << io::fixed6(last.tgt_acc) << "\n";
  return 0;
}

int run_encode(const std::string& model, const DataArgs& data, const std::string& out) {
  const Networks nets = load_model(model);
  const Dataset ds = data.load();
  const auto codes = binarize(encode_checked(nets.encoder, ds));
  CodeFile f;
  f.bits = nets.encoder.layers.back().weight.cols();
  f.codes = codes;
  const auto labels = original_labels(ds);
  f.labels.assign(labels.begin(), labels.end());
  for (std::size_t i = 0; i < ds.size(); ++i) f.ids.push_back(data.id_offset + i);
  save_codes(out, f);
  std::cout << "codes=" << f.size() << " bits=" << f.bits << "\n";
  return 0;
}

int run_build_index(const std::vector<std::string>& inputs, const std::string& out) {
  CodeFile merged;
  std::set<std::uint64_t> seen;
  for (const auto& in : inputs) {
    const CodeFile f = load_codes(in);
    if (merged.bits == 0) merged.bits = f.bits;
    if (f.bits != merged.bits)
      throw DimensionError("code length mismatch: " + in + " has d=" + std::to_string(f.bits) + ", expected d=" +
                           std::to_string(merged.bits));
    for (std::size_t i = 0; i < f.size(); ++i) {
      if (!seen.insert(f.ids[i]).second) throw ConfigError("duplicate item id " + std::to_string(f.ids[i]) + " in " + in);
      merged.ids.push_back(f.ids[i]);
      merged.codes.push_back(f.codes[i]);
      merged.labels.push_back(f.labels[i]);
    }
  }
  save_codes(out, merged);
  std::cout << "items=" << merged.size() << " bits=" << merged.bits << "\n";
  return 0;
}

int run_query(const std::string& index_path, const std::string& queries_path, std::size_t k, std::size_t threads) {
  const CodeFile idx = load_codes(index_path), q = load_codes(queries_path);
  check_bits(idx, q);
  const RetrievalIndex index = idx.to_index();
  const auto results = knn_batch(index, q.codes, k, threads);
  std::cout << "query_id,rank,id,distance\n";
  for (std::size_t i = 0; i < results.size(); ++i)
    for (std::size_t r = 0; r < results[i].size(); ++r)
      std::cout << q.ids[i] << "," << r + 1 << "," << results[i][r].id << "," << results[i][r].distance << "\n";
  return 0;
}

int run_eval_map(const std::string& index_path, const std::string& queries_path, std::size_t cutoff,
                 bool include_self) {
  const CodeFile idx = load_codes(index_path), q = load_codes(queries_path);
  check_bits(idx, q);
  RankOptions opt;
  opt.exclude_self = !include_self;
  std::cout << "MAP=" << io::fixed6(mean_average_precision(idx.to_index(), q.to_queries(), opt, cutoff)) << "\n";
  return 0;
}

int run_eval_acc(const std::string& model, const DataArgs& data) {
  const Networks nets = load_model(model);
  const Dataset ds = data.load();
  if (!ds.has_labels()) throw ConfigError("eval-acc needs labelled data");
  const Array p = classify(nets.classifier, encode_checked(nets.encoder, ds));
  const auto truth = original_labels(ds);
  std::size_t hit = 0;
  for (std::size_t i = 0; i < p.rows(); ++i) {
    const auto r = p.row(i);
    hit += static_cast<int>(std::max_element(r.begin(), r.end()) - r.begin()) == truth[i];
  }
  std::cout << "accuracy=" << io::fixed6(static_cast<double>(hit) / static_cast<double>(ds.size())) << "\n";
  return 0;
}

int run_grad_check(std::uint64_t seed, std::size_t instances, double h, double tol) {
  double worst = 0.0;
  for (LossKind kind : kAllLosses) {
    double m = 0.0;
    for (std::size_t i = 0; i < instances; ++i) m = std::max(m, ObjectiveInstance::random(seed + i).check(kind, h));
    std::printf("%s=%.3e\n", loss_name(kind), m);
    worst = std::max(worst, m);
  }
  std::printf("max_rel_error=%.3e\n", worst);
  return worst <= tol ? 0 : 1;
}

int run_export(const std::string& model, const DataArgs& data, const std::string& out) {
  const Networks nets = load_model(model);
  const Dataset ds = data.load();
  EmbeddingTable t;
  t.u = encode_checked(nets.encoder, ds);
  t.labels = original_labels(ds);
  for (std::size_t i = 0; i < ds.size(); ++i) t.ids.push_back(data.id_offset + i);
  io::write_file_atomic(out, to_csv(t));
  std::cout << "rows=" << ds.size() << "\n";
  return 0;
}

int run_make_synthetic(SyntheticSpec spec, double rotation_deg, const std::string& out) {
  spec.shift.rotation = rotation_deg * std::numbers::pi / 180.0;
  const auto [src, tgt] = make_synthetic_pair(spec);
  fs::create_directories(out);
  io::write_file_atomic(fs::path(out) / "source.csv", to_csv(src));
  io::write_file_atomic(fs::path(out) / "target.csv", to_csv(tgt));
  std::cout << "rows=" << src.size() << "+" << tgt.size() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"adaptive hashing: train, encode, index, retrieve"};
  app.require_subcommand(1, 1);

  std::string config, out, model, index_path, queries_path;
  std::uint64_t seed_value = 0;
  auto* train = app.add_subcommand("train", "staged adversarial training");
  train->add_option("--config", config)->required();
  train->add_option("--out", out, "output directory")->required();
  auto* seed_opt = train->add_option("--seed", seed_value, "overrides train.seed");

  DataArgs encode_data;
  auto* enc = app.add_subcommand("encode", "binarize encoder outputs into a code file");
  enc->add_option("--model", model)->required();
  encode_data.bind(enc);
  enc->add_option("--out", out)->required();

  std::vector<std::string> inputs;
  auto* build = app.add_subcommand("build-index", "merge code files into one index file");
  build->add_option("--codes", inputs)->required();
  build->add_option("--out", out)->required();

  std::size_t k = 10, threads = 1, cutoff = 0;
  bool include_self = false;
  auto* query = app.add_subcommand("query", "k nearest codes per query");
  query->add_option("--index", index_path)->required();
  query->add_option("--queries", queries_path)->required();
  query->add_option("--k", k)->check(CLI::PositiveNumber);
  query->add_option("--threads", threads)->check(CLI::PositiveNumber);

  auto* map = app.add_subcommand("eval-map", "mean average precision of queries against an index");
  map->add_option("--index", index_path)->required();
  map->add_option("--queries", queries_path)->required();
  map->add_option("--map-cutoff", cutoff, "0 ranks the whole index");
  map->add_flag("--include-self", include_self, "keep index items whose id equals the query id");

  DataArgs acc_data;
  auto* acc = app.add_subcommand("eval-acc", "classifier accuracy on labelled data");
  acc->add_option("--model", model)->required();
  acc_data.bind(acc);

  std::uint64_t gc_seed = 0;
  std::size_t instances = 20;
  double h = 1e-5, tol = 1e-4;
  auto* gc = app.add_subcommand("grad-check", "finite-difference check of every loss");
  gc->add_option("--seed", gc_seed);
  gc->add_option("--instances", instances)->check(CLI::PositiveNumber);
  gc->add_option("--step", h)->check(CLI::PositiveNumber);
  gc->add_option("--tolerance", tol);

  DataArgs exp_data;
  auto* exp = app.add_subcommand("export-embeddings", "write id,label,u_1..u_d");
  exp->add_option("--model", model)->required();
  exp_data.bind(exp);
  exp->add_option("--out", out)->required();

  SyntheticSpec spec;
  double rotation_deg = 50.0;
  auto* syn = app.add_subcommand("make-synthetic", "write source.csv and target.csv");
  syn->add_option("--out", out, "output directory")->required();
  syn->add_option("--seed", spec.seed);
  syn->add_option("--classes", spec.classes);
  syn->add_option("--per-class", spec.per_class);
  syn->add_option("--dim", spec.dim);
  syn->add_option("--rotation-deg", rotation_deg);
  syn->add_option("--translation", spec.shift.translation)->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*train) return run_train(config, out, seed_opt->count() ? std::optional(seed_value) : std::nullopt);
    if (*enc) return run_encode(model, encode_data, out);
    if (*build) return run_build_index(inputs, out);
    if (*query) return run_query(index_path, queries_path, k, threads);
    if (*map) return run_eval_map(index_path, queries_path, cutoff, include_self);
    if (*acc) return run_eval_acc(model, acc_data);
    if (*gc) return run_grad_check(gc_seed, instances, h, tol);
    if (*exp) return run_export(model, exp_data, out);
    if (*syn) return run_make_synthetic(spec, rotation_deg, out);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const DimensionError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
