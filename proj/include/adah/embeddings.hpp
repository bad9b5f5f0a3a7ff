#pragma once

// Embedding export for external plotting: `id,label,u_1..u_d`, 6 decimals,
// label −1 for unlabelled rows.

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "adah/data.hpp"
#include "adah/diffcore.hpp"
#include "adah/error.hpp"
#include "adah/io.hpp"

namespace adah {

struct EmbeddingTable {
  std::vector<std::uint64_t> ids;
  std::vector<int> labels;
  Array u;  // [n × d]
};

inline std::string to_csv(const EmbeddingTable& t) {
  std::string out = "id,label";
  for (std::size_t j = 0; j < t.u.cols(); ++j) out += ",u_" + std::to_string(j + 1);
  out += '\n';
  for (std::size_t i = 0; i < t.ids.size(); ++i) {
    out += std::to_string(t.ids[i]) + "," + std::to_string(t.labels[i]);
    for (double v : t.u.row(i)) out += "," + io::fixed6(v);
    out += '\n';
  }
  return out;
}

inline EmbeddingTable parse_embeddings_csv(std::string_view text) {
  EmbeddingTable t;
  std::vector<double> values;
  std::size_t width = 0, line_no = 0, pos = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    const std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    if (++line_no == 1 || line.empty()) continue;
    const auto cells = detail::split_commas(line);
    if (cells.size() < 3) throw FormatError("embeddings csv: line " + std::to_string(line_no) + " too short");
    if (width == 0) width = cells.size() - 2;
    if (cells.size() - 2 != width) throw FormatError("embeddings csv: ragged line " + std::to_string(line_no));
    const auto id = detail::parse_int(cells[0]);
    const auto label = detail::parse_int(cells[1]);
    if (!id || *id < 0 || !label) throw FormatError("embeddings csv: bad id/label on line " + std::to_string(line_no));
    t.ids.push_back(static_cast<std::uint64_t>(*id));
    t.labels.push_back(static_cast<int>(*label));
    for (std::size_t j = 2; j < cells.size(); ++j) {
      const auto v = detail::parse_double(cells[j]);
      if (!v)
        throw FormatError("embeddings csv: line " + std::to_string(line_no) + ", column " + std::to_string(j + 1) +
                          " is not a number");
      values.push_back(*v);
    }
  }
  if (t.ids.empty()) throw FormatError("embeddings csv: no rows");
  t.u = Array(Shape{t.ids.size(), width}, std::move(values));
  return t;
}

}  // namespace adah
