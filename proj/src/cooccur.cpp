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

#include "relana/cooccur.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <thread>

#include "binary_io.hpp"
#include "relana/error.hpp"

namespace relana::cooccur {

namespace {
constexpr std::uint16_t kTableVersion = 1;
}

CooccurrenceTable::CooccurrenceTable(std::size_t num_items, RoleConvention convention)
    : convention_(convention), item_counts_(num_items, 0) {}

std::uint64_t CooccurrenceTable::count(ItemId i, ItemId j) const {
  if (symmetric() && i > j) std::swap(i, j);
  auto it = pairs_.find(pair_key(i, j));
  return it == pairs_.end() ? 0 : it->second;
}

void CooccurrenceTable::add(ItemId center, ItemId context, std::uint64_t times) {
  if (center >= num_items() || context >= num_items()) {
    throw ValidationError("pair index out of range (" + std::to_string(center) + ", " + std::to_string(context) +
                          ") for " + std::to_string(num_items()) + " items");
  }
  if (center == context) throw ValidationError("pair with center == context");
  trials_ += times;
  if (symmetric()) {
    n_ += 2 * times;
    item_counts_[center] += times;
    item_counts_[context] += times;
    pairs_[pair_key(std::min(center, context), std::max(center, context))] += times;
  } else {
    n_ += times;
    item_counts_[center] += times;
    pairs_[pair_key(center, context)] += times;
  }
}

std::uint64_t CooccurrenceTable::erase(ItemId i, ItemId j) {
  if (symmetric() && i > j) std::swap(i, j);
  auto it = pairs_.find(pair_key(i, j));
  if (it == pairs_.end()) return 0;
  const std::uint64_t c = it->second;
  pairs_.erase(it);
  trials_ -= c;
  if (symmetric()) {
    n_ -= 2 * c;
    item_counts_[i] -= c;
    item_counts_[j] -= c;
  } else {
    n_ -= c;
    item_counts_[i] -= c;
  }
  return c;
}

std::vector<PairCount> CooccurrenceTable::sorted_pairs() const {
  std::vector<PairCount> out;
  out.reserve(pairs_.size());
  for (auto [key, c] : pairs_) out.push_back({static_cast<ItemId>(key >> 32), static_cast<ItemId>(key & 0xffffffffu), c});
  std::sort(out.begin(), out.end(), [](const PairCount& a, const PairCount& b) {
    return a.i != b.i ? a.i < b.i : a.j < b.j;
  });
  return out;
}

void CooccurrenceTable::validate() const {
  std::vector<std::uint64_t> marg(num_items(), 0);
  std::uint64_t sum = 0;
  for (auto [key, c] : pairs_) {
    const auto i = static_cast<ItemId>(key >> 32);
    const auto j = static_cast<ItemId>(key & 0xffffffffu);
    if (i >= num_items() || j >= num_items() || i == j) throw ComputeError("table holds an invalid pair index");
    if (symmetric() && i > j) throw ComputeError("symmetric table key not ordered");
    if (c == 0) throw ComputeError("table holds a zero count");
    sum += c;
    marg[i] += c;
    if (symmetric()) marg[j] += c;
  }
  if (sum != trials_) throw ComputeError("pair counts do not sum to the number of trials");
  if (n_ != (symmetric() ? 2 * trials_ : trials_)) throw ComputeError("n inconsistent with trials");
  if (marg != item_counts_) throw ComputeError("item counts inconsistent with pair counts");
}

CooccurrenceTable CooccurrenceTable::from_parts(RoleConvention convention, std::uint64_t n, std::uint64_t trials,
                                                std::vector<std::uint64_t> item_counts,
                                                std::span<const PairCount> pairs) {
  CooccurrenceTable t(item_counts.size(), convention);
  t.n_ = n;
  t.trials_ = trials;
  t.item_counts_ = std::move(item_counts);
  t.pairs_.reserve(pairs.size());
  for (const auto& p : pairs) {
    if (!t.pairs_.emplace(pair_key(p.i, p.j), p.count).second) throw ComputeError("duplicate pair in table");
  }
  t.validate();
  return t;
}

bool operator==(const CooccurrenceTable& a, const CooccurrenceTable& b) {
  return a.convention_ == b.convention_ && a.n_ == b.n_ && a.trials_ == b.trials_ &&
         a.item_counts_ == b.item_counts_ && a.pairs_ == b.pairs_;
}

CooccurrenceTable accumulate(const catalog::PairStream& stream, std::size_t num_items, RoleConvention convention,
                             unsigned threads) {
  const std::size_t total = stream.pairs.size();
  threads = std::max(1u, threads);
  if (threads == 1 || total < 2 * threads) {
    CooccurrenceTable t(num_items, convention);
    for (const auto& p : stream.pairs) t.add(p.center, p.context);
    return t;
  }
  std::vector<CooccurrenceTable> shards(threads, CooccurrenceTable(num_items, convention));
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::thread> pool;
  for (unsigned s = 0; s < threads; ++s) {
    pool.emplace_back([&, s] {
      try {
        const std::size_t begin = total * s / threads;
        const std::size_t end = total * (s + 1) / threads;
        for (std::size_t k = begin; k < end; ++k) shards[s].add(stream.pairs[k].center, stream.pairs[k].context);
      } catch (...) {
        errors[s] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  CooccurrenceTable out = std::move(shards[0]);
  for (unsigned s = 1; s < threads; ++s) out = merge(out, shards[s]);
  return out;
}

CooccurrenceTable merge(const CooccurrenceTable& a, const CooccurrenceTable& b) {
  if (a.convention() != b.convention()) throw ValidationError("cannot merge tables with different role conventions");
  if (a.num_items() != b.num_items()) throw ValidationError("cannot merge tables over different vocabularies");
  std::vector<std::uint64_t> counts(a.item_counts().begin(), a.item_counts().end());
  for (std::size_t i = 0; i < counts.size(); ++i) counts[i] += b.item_count(static_cast<ItemId>(i));
  auto pairs = a.raw_pairs();
  for (auto [key, c] : b.raw_pairs()) pairs[key] += c;
  std::vector<PairCount> list;
  list.reserve(pairs.size());
  for (auto [key, c] : pairs) list.push_back({static_cast<ItemId>(key >> 32), static_cast<ItemId>(key & 0xffffffffu), c});
  return CooccurrenceTable::from_parts(a.convention(), a.n() + b.n(), a.trials() + b.trials(), std::move(counts), list);
}

// Relatedness ---------------------------------------------------------------

RelatednessEstimate::RelatednessEstimate(std::size_t num_items, bool symmetric, double shift, bool clip_negative)
    : num_items_(num_items), symmetric_(symmetric), shift_(shift), clip_negative_(clip_negative) {}

std::optional<double> RelatednessEstimate::value(ItemId i, ItemId j) const {
  if (symmetric_ && i > j) std::swap(i, j);
  auto it = values_.find(pair_key(i, j));
  if (it == values_.end()) return std::nullopt;
  return it->second;
}

double RelatednessEstimate::value_or(ItemId i, ItemId j, double fallback) const {
  auto v = value(i, j);
  return v ? *v : fallback;
}

void RelatednessEstimate::set(ItemId i, ItemId j, double v) {
  if (!std::isfinite(v)) throw ComputeError("relatedness value must be finite");
  if (symmetric_ && i > j) std::swap(i, j);
  if (clip_negative_ && v < 0.0) v = 0.0;
  values_[pair_key(i, j)] = v;
}

std::vector<RelatednessEntry> RelatednessEstimate::entries() const {
  std::vector<RelatednessEntry> out;
  out.reserve(values_.size());
  for (auto [key, v] : values_) out.push_back({static_cast<ItemId>(key >> 32), static_cast<ItemId>(key & 0xffffffffu), v});
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.i != b.i ? a.i < b.i : a.j < b.j; });
  return out;
}

Eigen::MatrixXd RelatednessEstimate::dense(double fill) const {
  const auto n = static_cast<Eigen::Index>(num_items_);
  Eigen::MatrixXd m = Eigen::MatrixXd::Constant(n, n, fill);
  for (auto [key, v] : values_) {
    const auto i = static_cast<Eigen::Index>(key >> 32);
    const auto j = static_cast<Eigen::Index>(key & 0xffffffffu);
    m(i, j) = v;
    if (symmetric_) m(j, i) = v;
  }
  return m;
}

double minus_log_k(double k) {
  if (!(k > 0.0)) throw ValidationError("k must be positive");
  return -std::log(k);
}

RelatednessEstimate relatedness(const CooccurrenceTable& table, const RelatednessOptions& opts) {
  if (table.n() == 0) throw ValidationError("relatedness of an empty table");
  RelatednessEstimate est(table.num_items(), table.symmetric(), opts.shift, opts.clip_negative);
  const double n = static_cast<double>(table.n());
  for (auto [key, c] : table.raw_pairs()) {
    const auto i = static_cast<ItemId>(key >> 32);
    const auto j = static_cast<ItemId>(key & 0xffffffffu);
    const double ni = static_cast<double>(table.item_count(i));
    const double nj = static_cast<double>(table.item_count(j));
    if (ni == 0.0 || nj == 0.0) throw ComputeError("zero marginal for an observed pair");
    est.set(i, j, std::log(n * static_cast<double>(c) / (ni * nj)) + opts.shift);
  }
  return est;
}

Histogram relatedness_histogram(const RelatednessEstimate& est, std::size_t bins) {
  if (est.size() == 0) throw ValidationError("histogram of an empty estimate");
  if (bins == 0) throw ValidationError("histogram needs at least one bin");
  const auto entries = est.entries();
  Histogram h;
  h.lo = std::numeric_limits<double>::infinity();
  h.hi = -std::numeric_limits<double>::infinity();
  std::uint64_t negative = 0;
  for (const auto& e : entries) {
    h.lo = std::min(h.lo, e.value);
    h.hi = std::max(h.hi, e.value);
    if (e.value < 0.0) ++negative;
  }
  h.total = entries.size();
  h.negative_fraction = static_cast<double>(negative) / static_cast<double>(h.total);
  if (h.hi == h.lo) {
    h.counts.assign(1, h.total);
    return h;
  }
  h.counts.assign(bins, 0);
  const double width = (h.hi - h.lo) / static_cast<double>(bins);
  for (const auto& e : entries) {
    auto b = static_cast<std::size_t>((e.value - h.lo) / width);
    ++h.counts[std::min(b, bins - 1)];
  }
  return h;
}

// Persistence ---------------------------------------------------------------

void write_table(const std::filesystem::path& path, const CooccurrenceTable& table) {
  detail::BinaryWriter w(path);
  w.magic("RLNC");
  w.put<std::uint16_t>(kTableVersion);
  w.put<std::uint8_t>(static_cast<std::uint8_t>(table.convention()));
  w.put<std::uint8_t>(0);
  w.put<std::uint64_t>(table.n());
  w.put<std::uint64_t>(table.trials());
  w.put<std::uint32_t>(static_cast<std::uint32_t>(table.num_items()));
  for (auto c : table.item_counts()) w.put<std::uint64_t>(c);
  const auto pairs = table.sorted_pairs();
  w.put<std::uint64_t>(pairs.size());
  for (const auto& p : pairs) {
    w.put<std::uint32_t>(p.i);
    w.put<std::uint32_t>(p.j);
    w.put<std::uint64_t>(p.count);
  }
  w.finish();
}

CooccurrenceTable read_table(const std::filesystem::path& path) {
  detail::BinaryReader r(path);
  r.expect_magic("RLNC");
  if (r.get<std::uint16_t>() != kTableVersion) throw IoError(path.string() + ": unsupported table version");
  const auto conv = r.get<std::uint8_t>();
  if (conv > 1) throw IoError(path.string() + ": unknown role convention");
  r.get<std::uint8_t>();
  const auto n = r.get<std::uint64_t>();
  const auto trials = r.get<std::uint64_t>();
  const auto items = r.get<std::uint32_t>();
  std::vector<std::uint64_t> counts(items);
  for (auto& c : counts) c = r.get<std::uint64_t>();
  const auto num_pairs = r.get<std::uint64_t>();
  std::vector<PairCount> pairs;
  pairs.reserve(num_pairs);
  for (std::uint64_t k = 0; k < num_pairs; ++k) {
    PairCount p;
    p.i = r.get<std::uint32_t>();
    p.j = r.get<std::uint32_t>();
    p.count = r.get<std::uint64_t>();
    pairs.push_back(p);
  }
  if (!r.at_end()) throw IoError(path.string() + ": trailing bytes");
  try {
    return CooccurrenceTable::from_parts(static_cast<RoleConvention>(conv), n, trials, std::move(counts), pairs);
  } catch (const ComputeError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

void export_csv(const std::filesystem::path& path, const CooccurrenceTable& table) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.precision(17);
  out << "i,j,count,relatedness\n";
  const double n = static_cast<double>(table.n());
  for (const auto& p : table.sorted_pairs()) {
    const double r = std::log(n * static_cast<double>(p.count) /
                              (static_cast<double>(table.item_count(p.i)) * static_cast<double>(table.item_count(p.j))));
    out << p.i << ',' << p.j << ',' << p.count << ',' << r << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace relana::cooccur
