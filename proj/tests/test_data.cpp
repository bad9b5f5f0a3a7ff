#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numbers>

#include "adah/config.hpp"
#include "adah/data.hpp"
#include "adah/embeddings.hpp"
#include "adah/trainer.hpp"

using namespace adah;

namespace {

void put_be32(std::vector<char>& out, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<char>((v >> s) & 0xFF));
}

std::vector<char> idx_images(std::uint32_t n, std::uint32_t rows, std::uint32_t cols) {
  std::vector<char> b;
  put_be32(b, kIdxImagesMagic);
  put_be32(b, n);
  put_be32(b, rows);
  put_be32(b, cols);
  for (std::uint32_t i = 0; i < n * rows * cols; ++i) b.push_back(static_cast<char>(i % 256));
  return b;
}

std::vector<char> idx_labels(std::uint32_t n) {
  std::vector<char> b;
  put_be32(b, kIdxLabelsMagic);
  put_be32(b, n);
  for (std::uint32_t i = 0; i < n; ++i) b.push_back(static_cast<char>(i % 10));
  return b;
}

std::vector<double> class_mean(const Dataset& ds, int cls) {
  std::vector<double> m(ds.feature_dim(), 0.0);
  std::size_t n = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (ds.labels()[i] != cls) continue;
    ++n;
    for (std::size_t j = 0; j < m.size(); ++j) m[j] += ds.features()(i, j);
  }
  for (double& v : m) v /= static_cast<double>(n);
  return m;
}

std::string message_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const std::exception& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST(Synthetic, DefaultsAndShapes) {
  const auto [src, tgt] = make_synthetic_pair({});
  EXPECT_EQ(src.size(), 800u);
  EXPECT_EQ(tgt.size(), 800u);
  EXPECT_EQ(src.feature_dim(), 2u);
  EXPECT_EQ(src.classes(), 4u);
  EXPECT_EQ(src.domain(), Domain::source);
  EXPECT_EQ(tgt.domain(), Domain::target);
}

TEST(Synthetic, ZeroShiftKeepsClassMeans) {
  SyntheticSpec spec;
  spec.per_class = 4000;
  spec.shift = {};
  const auto [src, tgt] = make_synthetic_pair(spec);
  for (int k = 0; k < 4; ++k) {
    const auto a = class_mean(src, k), b = class_mean(tgt, k);
    for (std::size_t j = 0; j < 2; ++j) EXPECT_NEAR(a[j], b[j], 0.01);
  }
}

TEST(Synthetic, HalfTurnPermutesClassMeans) {
  SyntheticSpec spec;
  spec.per_class = 4000;
  spec.shift = {std::numbers::pi, {}, 1.0, 0.0};
  const auto [src, tgt] = make_synthetic_pair(spec);
  // Class k of the target lands where class (k+2) mod 4 sits in the source.
  for (int k = 0; k < 4; ++k) {
    const auto a = class_mean(tgt, k), b = class_mean(src, (k + 2) % 4);
    for (std::size_t j = 0; j < 2; ++j) EXPECT_NEAR(a[j], b[j], 0.01);
  }
}

TEST(Synthetic, SeedDeterminism) {
  SyntheticSpec a, b;
  a.seed = b.seed = 42;
  const auto [s1, t1] = make_synthetic_pair(a);
  const auto [s2, t2] = make_synthetic_pair(b);
  EXPECT_EQ(s1.features(), s2.features());
  EXPECT_EQ(t1.features(), t2.features());
  b.seed = 43;
  EXPECT_NE(make_synthetic_pair(b).first.features(), s1.features());
}

TEST(Synthetic, SourceIsSeparableByPretraining) {
  const auto [src, tgt] = make_synthetic_pair({});
  Hyperparams hp;
  hp.code_bits = 16;
  TrainState s = make_state(hp, {}, src.classes(), src.feature_dim());
  pretrain_source(s, src, hp.pretrain_epochs);
  EXPECT_GE(s.pretrain_history.back().src_acc, 0.95);
}

TEST(UnlabeledView, HoldsFeaturesOnly) {
  const auto [src, tgt] = make_synthetic_pair({});
  const UnlabeledView v = tgt.unlabeled();
  EXPECT_EQ(&v.features(), &tgt.features());
  EXPECT_EQ(v.size(), tgt.size());
  static_assert(sizeof(UnlabeledView) == sizeof(std::shared_ptr<const Array>));
}

TEST(Csv, ThreeRows) {
  const Dataset ds = parse_csv("1,2,0\n3,4,1\n5,6,0\n", true);
  EXPECT_EQ(ds.size(), 3u);
  EXPECT_EQ(ds.feature_dim(), 2u);
  EXPECT_EQ(ds.labels(), (std::vector<int>{0, 1, 0}));
}

TEST(Csv, HeaderDetected) {
  const Dataset ds = parse_csv("a,b,label\n1,2,0\n3,4,1\n", true);
  EXPECT_EQ(ds.size(), 2u);
}

TEST(Csv, NonNumericCellNamesLineAndColumn) {
  const auto msg = message_of([] { parse_csv("1,2,0\n3,x,1\n", true); });
  EXPECT_NE(msg.find("line 2"), std::string::npos) << msg;
  EXPECT_NE(msg.find("column 2"), std::string::npos) << msg;
  EXPECT_THROW(parse_csv("1,2,0\n3,4\n", true), FormatError);
  EXPECT_THROW(parse_csv("", true), FormatError);
}

TEST(Csv, LabelsReindexed) {
  const Dataset ds = parse_csv("1,7\n2,3\n3,7\n", true);
  EXPECT_EQ(ds.labels(), (std::vector<int>{1, 0, 1}));
  EXPECT_EQ(ds.label_mapping, (std::vector<long long>{3, 7}));
  EXPECT_EQ(ds.classes(), 2u);
}

TEST(Csv, UnlabeledFile) {
  const Dataset ds = parse_csv("1,7\n2,3\n", false);
  EXPECT_FALSE(ds.has_labels());
  EXPECT_EQ(ds.feature_dim(), 2u);
  EXPECT_THROW(ds.labels(), ContractError);
}

TEST(Csv, WriteReadWriteIsByteIdentical) {
  const auto [src, tgt] = make_synthetic_pair({});
  const std::string once = to_csv(src);
  const std::string twice = to_csv(parse_csv(once, true));
  EXPECT_EQ(once, twice);
}

TEST(Idx, WellFormed) {
  const Dataset ds = parse_idx(idx_images(5, 28, 28), idx_labels(5));
  EXPECT_EQ(ds.feature_dim(), 784u);
  EXPECT_EQ(ds.size(), 5u);
  EXPECT_EQ(ds.features()(0, 255), 1.0);
  EXPECT_EQ(ds.features()(0, 0), 0.0);
  EXPECT_EQ(ds.labels()[3], 3);
}

TEST(Idx, Limit) {
  EXPECT_EQ(parse_idx(idx_images(150, 2, 2), idx_labels(150), 100).size(), 100u);
}

TEST(Idx, WrongMagicNamesBoth) {
  auto img = idx_images(2, 2, 2);
  img[3] = 0x01;
  const auto msg = message_of([&] { parse_idx(img, idx_labels(2)); });
  EXPECT_NE(msg.find("expected 0x00000803"), std::string::npos) << msg;
  EXPECT_NE(msg.find("got 0x00000801"), std::string::npos) << msg;
  EXPECT_THROW(parse_idx(img, idx_labels(2)), FormatError);
}

TEST(Idx, TruncationAndCountMismatch) {
  auto img = idx_images(3, 2, 2);
  img.pop_back();
  EXPECT_THROW(parse_idx(img, idx_labels(3)), FormatError);
  auto lbl = idx_labels(3);
  lbl.pop_back();
  EXPECT_THROW(parse_idx(idx_images(3, 2, 2), lbl), FormatError);
  EXPECT_THROW(parse_idx(idx_images(3, 2, 2), idx_labels(2)), FormatError);
  EXPECT_THROW(parse_idx(std::vector<char>{0, 0}, idx_labels(2)), FormatError);
  EXPECT_NE(message_of([&] { parse_idx(img, idx_labels(3)); }).find("truncated"), std::string::npos);
}

TEST(Embeddings, CsvRoundTrip) {
  EmbeddingTable t{{5, 6}, {-1, 2}, Array::matrix(2, 3, {0.1, -0.25, 1.0, 0.0, 0.5, -1.0})};
  const std::string once = to_csv(t);
  EXPECT_EQ(once.substr(0, once.find('\n')), "id,label,u_1,u_2,u_3");
  EXPECT_EQ(to_csv(parse_embeddings_csv(once)), once);
}

TEST(Config, ParsesKeysAndRejectsUnknown) {
  const auto cfg = parse_config("# comment\ntrain.eta = 0.005\nnet.encoder_hidden=32,16\nsynthetic.rotation_deg=90\n");
  EXPECT_EQ(cfg.hp.eta, 0.005);
  EXPECT_EQ(cfg.shapes.encoder_hidden, (std::vector<std::size_t>{32, 16}));
  EXPECT_NEAR(cfg.data.synthetic.shift.rotation, std::numbers::pi / 2, 1e-15);
  EXPECT_THROW(parse_config("train.nope=1\n"), ConfigError);
  EXPECT_THROW(parse_config("train.eta=abc\n"), ConfigError);
  EXPECT_THROW(parse_config("justtext\n"), ConfigError);
  EXPECT_THROW(load_config("/nonexistent/run.cfg"), ConfigError);
}

TEST(Config, SyntheticSeedFollowsTrainSeed) {
  const auto a = load_datasets(parse_config("train.seed=3\n"));
  const auto b = load_datasets(parse_config("synthetic.seed=3\n"));
  EXPECT_EQ(a.first.features(), b.first.features());
}
