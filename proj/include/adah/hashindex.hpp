#pragma once

// Bit-packed binary codes and a linear-scan Hamming retrieval engine.
//
// Bit j of a code is set iff u_j >= 0, i.e. sign(u) ∈ {−1,+1} maps to {0,1}.
// Bits are packed little-endian into 64-bit words: bit j lives in word j/64 at
// position j%64. Unused high bits of the last word are always zero.

#include <algorithm>
#include <bit>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "adah/diffcore.hpp"
#include "adah/error.hpp"
#include "adah/io.hpp"

namespace adah {

inline std::size_t words_for(std::size_t bits) { return (bits + 63) / 64; }

struct HashCode {
  std::size_t bits = 0;
  std::vector<std::uint64_t> words;

  HashCode() = default;
  explicit HashCode(std::size_t d) : bits(d), words(words_for(d), 0) {}

  bool test(std::size_t j) const { return (words[j / 64] >> (j % 64)) & 1u; }
  void set(std::size_t j, bool on) {
    const std::uint64_t mask = std::uint64_t{1} << (j % 64);
    words[j / 64] = on ? (words[j / 64] | mask) : (words[j / 64] & ~mask);
  }

  /// Unpacked {0,1} view.
  std::vector<std::uint8_t> unpack() const {
    std::vector<std::uint8_t> out(bits);
    for (std::size_t j = 0; j < bits; ++j) out[j] = test(j);
    return out;
  }
  static HashCode pack(std::span<const std::uint8_t> bitvec) {
    HashCode c(bitvec.size());
    for (std::size_t j = 0; j < bitvec.size(); ++j) c.set(j, bitvec[j] != 0);
    return c;
  }

  friend bool operator==(const HashCode&, const HashCode&) = default;
};

/// One code per row: bit j set iff u_j >= 0.
inline std::vector<HashCode> binarize(const Array& u) {
  std::vector<HashCode> codes;
  codes.reserve(u.rows());
  for (std::size_t i = 0; i < u.rows(); ++i) {
    HashCode c(u.cols());
    const auto r = u.row(i);
    for (std::size_t j = 0; j < r.size(); ++j)
      if (r[j] >= 0.0) c.words[j / 64] |= std::uint64_t{1} << (j % 64);
    codes.push_back(std::move(c));
  }
  return codes;
}

inline std::size_t hamming(std::span<const std::uint64_t> a, std::span<const std::uint64_t> b) {
  std::size_t d = 0;
  for (std::size_t w = 0; w < a.size(); ++w) d += static_cast<std::size_t>(std::popcount(a[w] ^ b[w]));
  return d;
}

inline std::size_t hamming(const HashCode& a, const HashCode& b) {
  if (a.bits != b.bits)
    throw DimensionError("hamming: code lengths differ (" + std::to_string(a.bits) + " vs " +
                         std::to_string(b.bits) + ")");
  return hamming(std::span<const std::uint64_t>(a.words), std::span<const std::uint64_t>(b.words));
}

struct Neighbor {
  std::uint64_t id = 0;
  std::size_t distance = 0;

  friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

/// Ranking order: distance ascending, then id ascending.
inline bool ranks_before(const Neighbor& a, const Neighbor& b) {
  return a.distance != b.distance ? a.distance < b.distance : a.id < b.id;
}

struct RankOptions {
  /// Drop index items whose id equals the query id (query set ⊆ index).
  bool exclude_self = true;
};

/// Flat packed code store. Immutable after construction, so concurrent
/// queries are safe.
class RetrievalIndex {
 public:
  RetrievalIndex() = default;
  explicit RetrievalIndex(std::size_t bits) : bits_(bits), stride_(words_for(bits)) {}

  void add(std::uint64_t id, const HashCode& code, std::int32_t label) {
    if (code.bits != bits_)
      throw DimensionError("index holds " + std::to_string(bits_) + "-bit codes, got " + std::to_string(code.bits));
    words_.insert(words_.end(), code.words.begin(), code.words.end());
    ids_.push_back(id);
    labels_.push_back(label);
  }

  std::size_t bits() const { return bits_; }
  std::size_t size() const { return ids_.size(); }
  bool empty() const { return ids_.empty(); }
  std::uint64_t id(std::size_t i) const { return ids_[i]; }
  std::int32_t label(std::size_t i) const { return labels_[i]; }
  std::span<const std::uint64_t> words(std::size_t i) const {
    return std::span<const std::uint64_t>(words_).subspan(i * stride_, stride_);
  }
  HashCode code(std::size_t i) const {
    HashCode c(bits_);
    std::copy_n(words(i).begin(), stride_, c.words.begin());
    return c;
  }
  std::span<const std::uint64_t> ids() const { return ids_; }
  std::span<const std::int32_t> labels() const { return labels_; }

  /// Full ranking of the index against `query` (minus self when requested).
  std::vector<std::pair<Neighbor, std::int32_t>> rank_all(const HashCode& query, std::uint64_t query_id,
                                                          RankOptions opt) const {
    check_query(query);
    std::vector<std::pair<Neighbor, std::int32_t>> out;
    out.reserve(size());
    for (std::size_t i = 0; i < size(); ++i) {
      if (opt.exclude_self && ids_[i] == query_id) continue;
      out.push_back({{ids_[i], hamming(std::span<const std::uint64_t>(query.words), words(i))}, labels_[i]});
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return ranks_before(a.first, b.first); });
    return out;
  }

  void check_query(const HashCode& q) const {
    if (empty()) throw ConfigError("retrieval index is empty");
    if (q.bits != bits_)
      throw DimensionError("query has " + std::to_string(q.bits) + " bits, index has " + std::to_string(bits_));
  }

 private:
  std::size_t bits_ = 0;
  std::size_t stride_ = 0;
  std::vector<std::uint64_t> words_;
  std::vector<std::uint64_t> ids_;
  std::vector<std::int32_t> labels_;
};

/// k nearest codes by linear popcount scan; ties broken by ascending id.
inline std::vector<Neighbor> knn(const RetrievalIndex& index, const HashCode& query, std::size_t k) {
  if (k < 1) throw ConfigError("knn: k must be >= 1");
  index.check_query(query);
  std::vector<Neighbor> all(index.size());
  for (std::size_t i = 0; i < index.size(); ++i)
    all[i] = {index.id(i), hamming(std::span<const std::uint64_t>(query.words), index.words(i))};
  k = std::min(k, all.size());
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k), all.end(), ranks_before);
  all.resize(k);
  return all;
}

/// knn for many queries, split across `threads` workers.
inline std::vector<std::vector<Neighbor>> knn_batch(const RetrievalIndex& index, std::span<const HashCode> queries,
                                                    std::size_t k, std::size_t threads = 1) {
  if (k < 1) throw ConfigError("knn: k must be >= 1");
  for (const auto& q : queries) index.check_query(q);
  std::vector<std::vector<Neighbor>> out(queries.size());
  threads = std::max<std::size_t>(1, std::min(threads, queries.size()));
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t q = begin; q < end; ++q) out[q] = knn(index, queries[q], k);
  };
  if (threads == 1) {
    work(0, queries.size());
    return out;
  }
  std::vector<std::jthread> pool;
  const std::size_t chunk = (queries.size() + threads - 1) / threads;
  for (std::size_t t = 0; t < threads; ++t) {
    const std::size_t b = t * chunk, e = std::min(queries.size(), b + chunk);
    if (b < e) pool.emplace_back(work, b, e);
  }
  pool.clear();
  return out;
}

/// Average precision of one ranked relevance list. With `cutoff` > 0 only the
/// top `cutoff` ranks count.
inline double average_precision(std::span<const std::uint8_t> relevant_in_rank_order, std::size_t cutoff = 0) {
  const std::size_t limit =
      cutoff ? std::min(cutoff, relevant_in_rank_order.size()) : relevant_in_rank_order.size();
  std::size_t hits = 0;
  double acc = 0.0;
  for (std::size_t r = 0; r < limit; ++r) {
    if (!relevant_in_rank_order[r]) continue;
    ++hits;
    acc += static_cast<double>(hits) / static_cast<double>(r + 1);
  }
  return hits ? acc / static_cast<double>(hits) : 0.0;
}

struct QuerySet {
  std::vector<HashCode> codes;
  std::vector<std::int32_t> labels;
  std::vector<std::uint64_t> ids;
};

/// Mean over queries of AP, relevance = label equality; the whole index is
/// ranked unless `cutoff` > 0.
inline double mean_average_precision(const RetrievalIndex& index, const QuerySet& queries, RankOptions opt = {},
                                     std::size_t cutoff = 0) {
  if (queries.codes.empty()) throw ConfigError("mean_average_precision: no queries");
  if (queries.labels.size() != queries.codes.size() || queries.ids.size() != queries.codes.size())
    throw DimensionError("mean_average_precision: query arrays differ in length");
  double total = 0.0;
  std::vector<std::uint8_t> rel;
  for (std::size_t q = 0; q < queries.codes.size(); ++q) {
    const auto ranked = index.rank_all(queries.codes[q], queries.ids[q], opt);
    rel.assign(ranked.size(), 0);
    for (std::size_t r = 0; r < ranked.size(); ++r) rel[r] = ranked[r].second == queries.labels[q];
    total += average_precision(rel, cutoff);
  }
  return total / static_cast<double>(queries.codes.size());
}

/// Mean over queries of (relevant in top k) / k.
inline double precision_at_k(const RetrievalIndex& index, const QuerySet& queries, std::size_t k,
                             RankOptions opt = {}) {
  if (k < 1) throw ConfigError("precision_at_k: k must be >= 1");
  if (queries.codes.empty()) throw ConfigError("precision_at_k: no queries");
  double total = 0.0;
  for (std::size_t q = 0; q < queries.codes.size(); ++q) {
    const auto ranked = index.rank_all(queries.codes[q], queries.ids[q], opt);
    std::size_t hits = 0;
    for (std::size_t r = 0; r < std::min(k, ranked.size()); ++r) hits += ranked[r].second == queries.labels[q];
    total += static_cast<double>(hits) / static_cast<double>(k);
  }
  return total / static_cast<double>(queries.codes.size());
}

// ---------------------------------------------------------------------------
// Code file format
//
//   "HASH" | version u32 | d u32 | count u64 |
//   per item: id u64, ceil(d/64) words u64, label i32
//
// Little-endian throughout.
// ---------------------------------------------------------------------------

inline constexpr char kCodeMagic[4] = {'H', 'A', 'S', 'H'};
inline constexpr std::uint32_t kCodeVersion = 1;

struct CodeFile {
  std::size_t bits = 0;
  std::vector<std::uint64_t> ids;
  std::vector<HashCode> codes;
  std::vector<std::int32_t> labels;

  std::size_t size() const { return codes.size(); }

  RetrievalIndex to_index() const {
    RetrievalIndex idx(bits);
    for (std::size_t i = 0; i < codes.size(); ++i) idx.add(ids[i], codes[i], labels[i]);
    return idx;
  }
  QuerySet to_queries() const { return {codes, labels, ids}; }

  friend bool operator==(const CodeFile&, const CodeFile&) = default;
};

inline std::vector<char> serialize(const CodeFile& f) {
  io::ByteWriter w;
  w.put_bytes(std::string_view(kCodeMagic, 4));
  w.put<std::uint32_t>(kCodeVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(f.bits));
  w.put<std::uint64_t>(f.codes.size());
  for (std::size_t i = 0; i < f.codes.size(); ++i) {
    w.put<std::uint64_t>(f.ids[i]);
    for (auto word : f.codes[i].words) w.put<std::uint64_t>(word);
    w.put<std::int32_t>(f.labels[i]);
  }
  return w.release();
}

inline CodeFile deserialize_codes(std::span<const char> bytes) {
  io::ByteReader r(bytes, "code file");
  const std::string magic = r.get_bytes(4);
  if (magic != std::string_view(kCodeMagic, 4)) throw FormatError("code file: bad magic '" + magic + "'");
  const auto version = r.get<std::uint32_t>();
  if (version != kCodeVersion) throw FormatError("code file: unsupported version " + std::to_string(version));
  CodeFile f;
  f.bits = r.get<std::uint32_t>();
  if (f.bits == 0) throw FormatError("code file: zero code length");
  const auto count = r.get<std::uint64_t>();
  const std::size_t stride = words_for(f.bits);
  if (count > r.remaining() / (12 + 8 * stride)) throw FormatError("code file: truncated (count " + std::to_string(count) + ")");
  const std::uint64_t tail_mask = f.bits % 64 ? (std::uint64_t{1} << (f.bits % 64)) - 1 : ~std::uint64_t{0};
  for (std::uint64_t i = 0; i < count; ++i) {
    f.ids.push_back(r.get<std::uint64_t>());
    HashCode c(f.bits);
    for (auto& word : c.words) word = r.get<std::uint64_t>();
    if (c.words.back() & ~tail_mask) throw FormatError("code file: nonzero padding bits in item " + std::to_string(i));
    f.codes.push_back(std::move(c));
    f.labels.push_back(r.get<std::int32_t>());
  }
  if (!r.at_end()) throw FormatError("code file: trailing bytes");
  return f;
}

inline void save_codes(const std::filesystem::path& path, const CodeFile& f) {
  io::write_file_atomic(path, serialize(f));
}

inline CodeFile load_codes(const std::filesystem::path& path) { return deserialize_codes(io::read_file(path)); }

}  // namespace adah
