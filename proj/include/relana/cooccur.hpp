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

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "relana/catalog.hpp"

namespace relana::cooccur {

using catalog::ItemId;

/// How pair observations feed the marginals.
///
/// BothRoles symmetrizes the stream: every consumed pair (c, x) is observed as
/// (c, x) and as (x, c). Then n = 2 * consumed pairs, N_i is the participation
/// count of i, sum_i N_i = n, and N_ij = N_ji is stored once under (min, max).
///
/// CenterOnly keeps pairs directed: n = consumed pairs, N_i counts i as center
/// (row sums), and N_ij is stored under (center, context).
enum class RoleConvention : std::uint8_t { CenterOnly = 0, BothRoles = 1 };

struct PairCount {
  ItemId i = 0;
  ItemId j = 0;
  std::uint64_t count = 0;
  friend bool operator==(const PairCount&, const PairCount&) = default;
};

inline std::uint64_t pair_key(ItemId i, ItemId j) { return (static_cast<std::uint64_t>(i) << 32) | j; }

class CooccurrenceTable {
 public:
  CooccurrenceTable() = default;
  CooccurrenceTable(std::size_t num_items, RoleConvention convention);

  RoleConvention convention() const { return convention_; }
  bool symmetric() const { return convention_ == RoleConvention::BothRoles; }
  std::size_t num_items() const { return item_counts_.size(); }

  /// Ordered pair observations (see RoleConvention).
  std::uint64_t n() const { return n_; }
  /// Consumed stream pairs; the number of Bernoulli trials behind each N_ij.
  std::uint64_t trials() const { return trials_; }
  /// n / trials: 2 for BothRoles, 1 for CenterOnly.
  double roles() const { return symmetric() ? 2.0 : 1.0; }

  std::uint64_t item_count(ItemId i) const { return item_counts_.at(i); }
  std::span<const std::uint64_t> item_counts() const { return item_counts_; }

  /// N_ij for the ordered observation (i, j); symmetric tables answer both orders.
  std::uint64_t count(ItemId i, ItemId j) const;
  std::size_t num_stored_pairs() const { return pairs_.size(); }
  const std::unordered_map<std::uint64_t, std::uint64_t>& raw_pairs() const { return pairs_; }

  /// Stored pairs sorted by (i, j); symmetric tables list each pair once with i < j.
  std::vector<PairCount> sorted_pairs() const;

  /// Records one consumed stream pair.
  void add(ItemId center, ItemId context, std::uint64_t times = 1);
  /// Removes a stored pair entirely, updating n, trials and the marginals.
  std::uint64_t erase(ItemId i, ItemId j);

  /// Checks the count invariants; throws ComputeError when broken.
  void validate() const;

  /// Rebuilds a table from persisted fields (validates them).
  static CooccurrenceTable from_parts(RoleConvention convention, std::uint64_t n, std::uint64_t trials,
                                      std::vector<std::uint64_t> item_counts, std::span<const PairCount> pairs);

  friend bool operator==(const CooccurrenceTable& a, const CooccurrenceTable& b);

 private:
  RoleConvention convention_ = RoleConvention::BothRoles;
  std::uint64_t n_ = 0;
  std::uint64_t trials_ = 0;
  std::vector<std::uint64_t> item_counts_;
  std::unordered_map<std::uint64_t, std::uint64_t> pairs_;
};

/// Counts a stream. `threads` > 1 splits the stream into contiguous shards that
/// are counted independently and merged; integer counts make the result
/// independent of the shard count.
CooccurrenceTable accumulate(const catalog::PairStream& stream, std::size_t num_items,
                             RoleConvention convention = RoleConvention::BothRoles, unsigned threads = 1);

/// Element-wise sum. Throws ValidationError on size or convention mismatch.
CooccurrenceTable merge(const CooccurrenceTable& a, const CooccurrenceTable& b);

struct RelatednessEntry {
  ItemId i = 0;
  ItemId j = 0;
  double value = 0.0;
};

/// Sparse R-hat over observed pairs. Unobserved pairs are missing (no value).
class RelatednessEstimate {
 public:
  RelatednessEstimate() = default;
  RelatednessEstimate(std::size_t num_items, bool symmetric, double shift, bool clip_negative);

  std::size_t num_items() const { return num_items_; }
  bool symmetric() const { return symmetric_; }
  double shift() const { return shift_; }
  bool clip_negative() const { return clip_negative_; }

  std::optional<double> value(ItemId i, ItemId j) const;
  /// value(i, j) or `fallback` when missing.
  double value_or(ItemId i, ItemId j, double fallback) const;
  bool missing(ItemId i, ItemId j) const { return !value(i, j).has_value(); }
  std::size_t size() const { return values_.size(); }

  void set(ItemId i, ItemId j, double v);
  /// Sorted entries; symmetric estimates list each pair once with i < j.
  std::vector<RelatednessEntry> entries() const;
  /// Dense |I| x |I| matrix, missing entries (and the diagonal) filled with `fill`.
  Eigen::MatrixXd dense(double fill = 0.0) const;

 private:
  std::size_t num_items_ = 0;
  bool symmetric_ = true;
  double shift_ = 0.0;
  bool clip_negative_ = false;
  std::unordered_map<std::uint64_t, double> values_;
};

struct RelatednessOptions {
  double shift = 0.0;  // 0 or -log k
  bool clip_negative = false;
};

/// R-hat_ij = log(n N_ij / (N_i N_j)) + shift over observed pairs.
RelatednessEstimate relatedness(const CooccurrenceTable& table, const RelatednessOptions& opts = {});

/// Shift value -log k.
double minus_log_k(double k);

struct Histogram {
  double lo = 0.0;
  double hi = 0.0;
  std::vector<std::uint64_t> counts;
  std::uint64_t total = 0;
  double negative_fraction = 0.0;

  double bin_width() const { return counts.empty() ? 0.0 : (hi - lo) / static_cast<double>(counts.size()); }
};

/// Histogram of stored values over [min, max]. A constant estimate yields a
/// single bin holding every value.
Histogram relatedness_histogram(const RelatednessEstimate& est, std::size_t bins);

// Persistence ---------------------------------------------------------------

/// Binary table: "RLNC", u16 version, u8 convention, u8 reserved, u64 n,
/// u64 trials, u32 |I|, |I| x u64 item counts, u64 pair count, then sorted
/// (u32 i, u32 j, u64 count) triples.
void write_table(const std::filesystem::path& path, const CooccurrenceTable& table);
CooccurrenceTable read_table(const std::filesystem::path& path);

/// CSV `i,j,count,relatedness` over stored pairs.
void export_csv(const std::filesystem::path& path, const CooccurrenceTable& table);

}  // namespace relana::cooccur
