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
#include <string>
#include <string_view>
#include <tuple>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace relana::catalog {

using ItemId = std::uint32_t;

/// Bijection between opaque external item ids and dense indices [0, size()).
class Vocabulary {
 public:
  Vocabulary() = default;
  explicit Vocabulary(std::vector<std::string> names);

  /// Interns `name`, returning its index; existing names keep their index.
  ItemId intern(std::string_view name);
  std::optional<ItemId> find(std::string_view name) const;
  ItemId at(std::string_view name) const;  // throws ValidationError if unknown

  const std::string& name(ItemId id) const { return names_.at(id); }
  std::span<const std::string> names() const { return names_; }
  std::size_t size() const { return names_.size(); }

  std::uint64_t frequency(ItemId id) const { return frequency_.at(id); }
  std::span<const std::uint64_t> frequencies() const { return frequency_; }
  void add_frequency(ItemId id, std::uint64_t count = 1) { frequency_.at(id) += count; }

 private:
  std::vector<std::string> names_;
  std::vector<std::uint64_t> frequency_;
  std::unordered_map<std::string, ItemId> index_;
};

struct Record {
  std::uint32_t user = 0;
  std::uint32_t session = 0;
  ItemId item = 0;
  std::uint32_t position = 0;
};

/// Records grouped by user; within a user, chronological (session order, then
/// position). Positions are strictly increasing within each (user, session).
struct InteractionLog {
  std::vector<Record> records;
  std::vector<std::string> user_names;
  std::vector<std::string> session_names;

  /// Contiguous record ranges, one per user, in user order.
  std::vector<std::span<const Record>> user_streams() const;
  /// Contiguous record ranges, one per (user, session).
  std::vector<std::span<const Record>> sessions() const;

  /// Throws ValidationError when ordering or index invariants are broken.
  void validate(std::size_t vocab_size) const;
};

/// Column names for CSV ingestion. An empty `session` column means sessions
/// are derived per user by the fixed-gap rule on positions.
struct CsvSchema {
  std::string session = "order_id";
  std::string user = "user_id";
  std::string item = "product_id";
  std::string position = "add_to_cart_order";
  std::string order = {};  // optional numeric chronology key for sessions
  char delimiter = ',';
  std::uint32_t session_gap = 0;     // 0: one session per user when `session` is empty
  std::uint64_t min_frequency = 1;   // items seen fewer times are dropped

  static CsvSchema instacart() { return CsvSchema{}; }
};

struct Ingested {
  Vocabulary vocab;
  InteractionLog log;
  std::uint64_t dropped_records = 0;  // removed by the frequency floor
};

Ingested ingest_transactions(const std::filesystem::path& path, const CsvSchema& schema);

struct ItemPair {
  ItemId center = 0;
  ItemId context = 0;
  friend bool operator==(const ItemPair&, const ItemPair&) = default;
};

enum class Provenance : std::uint8_t { SequenceWindow = 0, RandomWalk = 1, Synthetic = 2 };

struct PairStream {
  std::vector<ItemPair> pairs;
  Provenance provenance = Provenance::SequenceWindow;
  std::uint64_t suppressed = 0;     // center == context pairs that were not emitted
  std::uint64_t skipped_nodes = 0;  // isolated nodes skipped by random walks
};

struct SequenceOptions {
  std::uint32_t window = 5;
  bool symmetric = false;  // also emit (item_{t-m}, item_t)
};

PairStream sequence_pairs(const InteractionLog& log, const SequenceOptions& opts = {});

/// Emits the directional window pairs over one item sequence; shared by the
/// sequence and random-walk mechanisms.
void emit_window_pairs(std::span<const ItemId> seq, std::uint32_t window, bool symmetric,
                       PairStream& out);

/// Undirected weighted graph in CSR form; neighbour lists sorted by index.
class WeightedGraph {
 public:
  WeightedGraph() = default;
  /// Edges as (i, j, weight) with i != j; each undirected edge listed once.
  WeightedGraph(std::size_t num_nodes,
                std::vector<std::tuple<ItemId, ItemId, std::uint64_t>> edges);

  std::size_t num_nodes() const { return offsets_.empty() ? 0 : offsets_.size() - 1; }
  std::size_t num_edges() const { return neighbors_.size() / 2; }
  std::span<const ItemId> neighbors(ItemId node) const;
  std::span<const std::uint64_t> weights(ItemId node) const;
  std::uint64_t weight(ItemId a, ItemId b) const;  // 0 when absent
  bool has_edge(ItemId a, ItemId b) const { return weight(a, b) != 0; }
  std::uint64_t total_weight() const;

 private:
  std::vector<std::size_t> offsets_;
  std::vector<ItemId> neighbors_;
  std::vector<std::uint64_t> weights_;
};

WeightedGraph build_session_graph(const InteractionLog& log, std::size_t num_items);

struct WalkOptions {
  std::uint32_t walk_length = 40;
  std::uint32_t walks_per_node = 10;
  double return_param = 1.0;  // p
  double inout_param = 1.0;   // q
  std::uint32_t context_size = 5;
  std::uint64_t seed = 1;
  unsigned threads = 1;
};

/// node2vec-style second-order biased walks; each (node, walk index) has its own
/// seed so output is identical for any thread count.
PairStream random_walk_pairs(const WeightedGraph& graph, const WalkOptions& opts);

/// One walk from `start` (exposed for tests and diagnostics).
std::vector<ItemId> biased_walk(const WeightedGraph& graph, ItemId start, std::uint32_t length,
                                double p, double q, std::uint64_t seed);

struct SyntheticSpec {
  std::uint32_t num_items = 30;
  std::uint32_t num_classes = 3;
  double within_prob = 0.5;
  double cross_prob = 0.05;
  std::uint64_t num_records = 10000;  // one record = one user sequence
  std::vector<std::pair<ItemId, ItemId>> planted_independent;
  std::uint64_t seed = 1;
  std::uint32_t sequence_length = 2;
  std::uint32_t session_length = 0;  // 0: whole sequence is one session

  void validate() const;
};

struct SyntheticCorpus {
  Vocabulary vocab;
  InteractionLog log;
  /// Exact relatedness of adjacent-pair observations under the planted model
  /// (symmetric both-roles convention). The diagonal is undefined (NaN).
  Eigen::MatrixXd truth;
  /// Unordered pair probabilities (symmetric, zero diagonal, upper triangle sums to 1).
  Eigen::MatrixXd pair_probability;
  std::vector<std::uint32_t> item_class;
};

/// Planted class model: item pairs are drawn with weight `within_prob` inside a
/// class and `cross_prob` across classes; planted-independent pairs have their
/// weight solved so their true relatedness is exactly zero. Sequences longer
/// than two follow the reversible Markov chain whose adjacent pairs have that
/// same joint distribution.
SyntheticCorpus generate_synthetic(const SyntheticSpec& spec);

/// Ground-truth relatedness for an unordered pair-weight matrix.
Eigen::MatrixXd relatedness_from_pair_weights(const Eigen::MatrixXd& weights);

// Persistence ---------------------------------------------------------------

/// Binary pair stream: "RLNA", u16 version, then (u32 center, u32 context)
/// little-endian records.
void write_pair_stream(const std::filesystem::path& path, const PairStream& stream);
PairStream read_pair_stream(const std::filesystem::path& path);

/// TSV `item_id<TAB>frequency`, one line per index.
void write_vocabulary(const std::filesystem::path& path, const Vocabulary& vocab);
Vocabulary read_vocabulary(const std::filesystem::path& path);

/// CSV `user_id,session_id,item_id,position` readable by ingest_transactions
/// with `log_schema()`.
void write_log(const std::filesystem::path& path, const InteractionLog& log, const Vocabulary& vocab);
CsvSchema log_schema();
/// Reads a log written by write_log, resolving items against an existing vocabulary.
InteractionLog read_log(const std::filesystem::path& path, const Vocabulary& vocab);

}  // namespace relana::catalog
