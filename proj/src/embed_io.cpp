// Copyright 2026 The relana Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "binary_io.hpp"
#include "relana/embed.hpp"
#include "relana/error.hpp"

namespace relana::embed {

void write_rlne(const std::filesystem::path& path, const Matrix& m) {
  detail::BinaryWriter w(path);
  w.magic("RLNE");
  w.put<std::uint32_t>(static_cast<std::uint32_t>(m.rows()));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(m.cols()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) w.put_f32(static_cast<float>(m(r, c)));
  }
  w.finish();
}

Matrix read_rlne(const std::filesystem::path& path) {
  detail::BinaryReader r(path);
  r.expect_magic("RLNE");
  const auto rows = r.get<std::uint32_t>();
  const auto cols = r.get<std::uint32_t>();
  if (cols == 0) throw IoError(path.string() + ": zero embedding dimension");
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(i, c) = static_cast<double>(r.get_f32());
  }
  if (!r.at_end()) throw IoError(path.string() + ": trailing bytes");
  return m;
}

void write_tsv(const std::filesystem::path& path, const Matrix& m, const catalog::Vocabulary& vocab) {
  if (static_cast<std::size_t>(m.rows()) != vocab.size()) throw ValidationError("tsv: row count differs from vocabulary");
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  char buf[32];
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    out << vocab.name(static_cast<catalog::ItemId>(r));
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      std::snprintf(buf, sizeof buf, "%.9g", m(r, c));
      out << '\t' << buf;
    }
    out << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

Matrix read_tsv(const std::filesystem::path& path, const catalog::Vocabulary& vocab) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::vector<double>> rows(vocab.size());
  std::size_t dim = 0;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string name;
    std::getline(fields, name, '\t');
    const auto id = vocab.find(name);
    if (!id) throw IoError(path.string() + ":" + std::to_string(line_no) + ": unknown item '" + name + "'");
    std::vector<double> v;
    std::string cell;
    while (std::getline(fields, cell, '\t')) {
      double x = 0.0;
      auto [p, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), x);
      if (ec != std::errc() || p != cell.data() + cell.size()) {
        throw IoError(path.string() + ":" + std::to_string(line_no) + ": bad number '" + cell + "'");
      }
      v.push_back(x);
    }
    if (dim == 0) dim = v.size();
    if (v.empty() || v.size() != dim) throw IoError(path.string() + ":" + std::to_string(line_no) + ": inconsistent dimension");
    rows[*id] = std::move(v);
  }
  if (dim == 0) throw IoError(path.string() + ": no embeddings");
  Matrix m(static_cast<Eigen::Index>(vocab.size()), static_cast<Eigen::Index>(dim));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].empty()) throw IoError(path.string() + ": missing row for '" + vocab.name(static_cast<catalog::ItemId>(r)) + "'");
    for (std::size_t c = 0; c < dim; ++c) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  }
  return m;
}

}  // namespace relana::embed
