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

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_map>

#include "binary_io.hpp"
#include "relana/catalog.hpp"
#include "relana/error.hpp"

namespace relana::catalog {

namespace {

constexpr std::uint16_t kPairStreamVersion = 1;

std::vector<std::string> split_csv(const std::string& line, char delim, std::size_t line_no) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
    } else if (c == '"' && field.empty()) {
      quoted = true;
    } else if (c == delim) {
      out.push_back(std::move(field));
      field.clear();
    } else if (c != '\r') {
      field.push_back(c);
    }
  }
  if (quoted) throw ValidationError("line " + std::to_string(line_no) + ": malformed row (unterminated quote)");
  out.push_back(std::move(field));
  return out;
}

template <typename T>
T parse_number(const std::string& text, std::size_t line_no, std::string_view column) {
  T value{};
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw ValidationError("line " + std::to_string(line_no) + ": malformed row (column '" +
                          std::string(column) + "' is not numeric: '" + text + "')");
  }
  return value;
}

struct RawRow {
  std::uint32_t user;
  std::string session;
  std::string item;
  std::uint64_t position;
  double order;
  std::size_t line;
};

}  // namespace

Ingested ingest_transactions(const std::filesystem::path& path, const CsvSchema& schema) {
  if (!std::filesystem::exists(path)) throw ValidationError("missing file: " + path.string());
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());

  std::string line;
  if (!std::getline(in, line) || line.empty()) throw ValidationError("no records in " + path.string());
  const auto header = split_csv(line, schema.delimiter, 1);
  auto column = [&](const std::string& name) -> std::ptrdiff_t {
    if (name.empty()) return -1;
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw ValidationError("unknown column '" + name + "'");
    return it - header.begin();
  };
  const auto c_user = column(schema.user);
  const auto c_item = column(schema.item);
  const auto c_pos = column(schema.position);
  const auto c_session = column(schema.session);
  const auto c_order = column(schema.order);
  if (c_user < 0 || c_item < 0 || c_pos < 0) throw ValidationError("schema must name user, item and position columns");

  std::vector<RawRow> rows;
  std::vector<std::string> user_names;
  std::unordered_map<std::string, std::uint32_t> user_index;
  std::unordered_map<std::string, std::uint64_t> item_freq;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    auto f = split_csv(line, schema.delimiter, line_no);
    if (f.size() != header.size()) {
      throw ValidationError("line " + std::to_string(line_no) + ": malformed row (expected " +
                            std::to_string(header.size()) + " fields, got " + std::to_string(f.size()) + ")");
    }
    RawRow r;
    auto [it, fresh] = user_index.try_emplace(f[c_user], static_cast<std::uint32_t>(user_names.size()));
    if (fresh) user_names.push_back(f[c_user]);
    r.user = it->second;
    r.session = c_session >= 0 ? f[c_session] : std::string();
    r.item = f[c_item];
    if (r.item.empty()) throw ValidationError("line " + std::to_string(line_no) + ": malformed row (empty item id)");
    r.position = parse_number<std::uint64_t>(f[c_pos], line_no, schema.position);
    r.order = c_order >= 0 ? parse_number<double>(f[c_order], line_no, schema.order) : 0.0;
    r.line = line_no;
    ++item_freq[r.item];
    rows.push_back(std::move(r));
  }
  if (rows.empty()) throw ValidationError("no records in " + path.string());

  Ingested out;
  std::vector<RawRow> kept;
  kept.reserve(rows.size());
  for (auto& r : rows) {
    if (item_freq[r.item] < schema.min_frequency) {
      ++out.dropped_records;
    } else {
      kept.push_back(std::move(r));
    }
  }
  if (kept.empty()) throw ValidationError("no records left after the frequency floor");
  for (const auto& r : kept) out.vocab.intern(r.item);

  // Session chronology per user: explicit order key when given, otherwise
  // first appearance in the file.
  std::map<std::pair<std::uint32_t, std::string>, std::pair<double, std::size_t>> session_key;
  for (std::size_t i = 0; i < kept.size(); ++i) {
    const auto& r = kept[i];
    auto [it, fresh] = session_key.try_emplace({r.user, r.session}, r.order, i);
    if (!fresh && c_order >= 0 && it->second.first != r.order) {
      throw ValidationError("line " + std::to_string(r.line) + ": malformed row (order key differs within a session)");
    }
  }
  std::stable_sort(kept.begin(), kept.end(), [&](const RawRow& a, const RawRow& b) {
    if (a.user != b.user) return a.user < b.user;
    const auto& ka = session_key.at({a.user, a.session});
    const auto& kb = session_key.at({b.user, b.session});
    if (ka != kb) return ka < kb;
    return a.position < b.position;
  });

  out.log.user_names = std::move(user_names);
  std::map<std::pair<std::uint32_t, std::string>, std::uint32_t> session_ids;
  std::uint32_t gap_session = 0;
  for (std::size_t i = 0; i < kept.size(); ++i) {
    const auto& r = kept[i];
    const bool same_group = i > 0 && kept[i - 1].user == r.user && kept[i - 1].session == r.session;
    if (same_group && kept[i - 1].position == r.position) {
      throw ValidationError("line " + std::to_string(r.line) + ": malformed row (duplicate position in session)");
    }
    std::uint32_t sid = 0;
    if (c_session >= 0) {
      auto [it, fresh] = session_ids.try_emplace({r.user, r.session}, static_cast<std::uint32_t>(out.log.session_names.size()));
      if (fresh) out.log.session_names.push_back(r.session);
      sid = it->second;
    } else {
      const bool split = !same_group || (schema.session_gap > 0 && r.position - kept[i - 1].position > schema.session_gap);
      if (split) {
        gap_session = static_cast<std::uint32_t>(out.log.session_names.size());
        out.log.session_names.push_back(out.log.user_names[r.user] + "#" + std::to_string(gap_session));
      }
      sid = gap_session;
    }
    const ItemId item = out.vocab.at(r.item);
    out.vocab.add_frequency(item);
    // Positions are re-based per user so they stay increasing across sessions.
    const std::uint32_t pos = (i > 0 && kept[i - 1].user == r.user) ? out.log.records.back().position + 1 : 0;
    out.log.records.push_back({r.user, sid, item, pos});
  }
  out.log.validate(out.vocab.size());
  return out;
}

CsvSchema log_schema() {
  CsvSchema s;
  s.session = "session_id";
  s.user = "user_id";
  s.item = "item_id";
  s.position = "position";
  return s;
}

void write_log(const std::filesystem::path& path, const InteractionLog& log, const Vocabulary& vocab) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "user_id,session_id,item_id,position\n";
  for (const auto& r : log.records) {
    out << log.user_names.at(r.user) << ',' << log.session_names.at(r.session) << ',' << vocab.name(r.item) << ','
        << r.position << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

InteractionLog read_log(const std::filesystem::path& path, const Vocabulary& vocab) {
  std::ifstream in(path);
  if (!in) throw ValidationError("missing file: " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "user_id,session_id,item_id,position") {
    throw ValidationError(path.string() + ": not an interaction log");
  }
  InteractionLog log;
  std::unordered_map<std::string, std::uint32_t> users;
  std::map<std::pair<std::uint32_t, std::string>, std::uint32_t> sessions;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = split_csv(line, ',', line_no);
    if (f.size() != 4) throw ValidationError("line " + std::to_string(line_no) + ": malformed row (expected 4 fields)");
    auto [u, fresh_u] = users.try_emplace(f[0], static_cast<std::uint32_t>(log.user_names.size()));
    if (fresh_u) log.user_names.push_back(f[0]);
    auto [s, fresh_s] = sessions.try_emplace({u->second, f[1]}, static_cast<std::uint32_t>(log.session_names.size()));
    if (fresh_s) log.session_names.push_back(f[1]);
    const auto item = vocab.find(f[2]);
    if (!item) throw ValidationError("line " + std::to_string(line_no) + ": unknown item '" + f[2] + "'");
    log.records.push_back({u->second, s->second, *item, parse_number<std::uint32_t>(f[3], line_no, "position")});
  }
  log.validate(vocab.size());
  return log;
}

void write_pair_stream(const std::filesystem::path& path, const PairStream& stream) {
  detail::BinaryWriter w(path);
  w.magic("RLNA");
  w.put<std::uint16_t>(kPairStreamVersion);
  for (const auto& p : stream.pairs) {
    w.put<std::uint32_t>(p.center);
    w.put<std::uint32_t>(p.context);
  }
  w.finish();
}

PairStream read_pair_stream(const std::filesystem::path& path) {
  detail::BinaryReader r(path);
  r.expect_magic("RLNA");
  const auto version = r.get<std::uint16_t>();
  if (version != kPairStreamVersion) throw IoError(path.string() + ": unsupported pair stream version");
  PairStream out;
  while (!r.at_end()) {
    ItemPair p;
    p.center = r.get<std::uint32_t>();
    p.context = r.get<std::uint32_t>();
    if (p.center == p.context) throw IoError(path.string() + ": pair with center == context");
    out.pairs.push_back(p);
  }
  return out;
}

void write_vocabulary(const std::filesystem::path& path, const Vocabulary& vocab) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  for (std::size_t i = 0; i < vocab.size(); ++i) {
    out << vocab.name(static_cast<ItemId>(i)) << '\t' << vocab.frequency(static_cast<ItemId>(i)) << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

Vocabulary read_vocabulary(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  Vocabulary vocab;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw IoError(path.string() + ":" + std::to_string(line_no) + ": expected item<TAB>frequency");
    const auto name = line.substr(0, tab);
    const auto id = vocab.intern(name);
    if (id + 1 != vocab.size()) throw IoError(path.string() + ": duplicate item '" + name + "'");
    vocab.add_frequency(id, parse_number<std::uint64_t>(line.substr(tab + 1), line_no, "frequency"));
  }
  return vocab;
}

}  // namespace relana::catalog
