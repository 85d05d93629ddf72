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

#include "relana/catalog.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <thread>
#include <unordered_map>

#include "relana/error.hpp"
#include "relana/rng.hpp"

namespace relana::catalog {

// Vocabulary ----------------------------------------------------------------

Vocabulary::Vocabulary(std::vector<std::string> names) {
  for (auto& n : names) intern(n);
}

ItemId Vocabulary::intern(std::string_view name) {
  std::string key(name);
  if (auto it = index_.find(key); it != index_.end()) return it->second;
  const auto id = static_cast<ItemId>(names_.size());
  index_.emplace(key, id);
  names_.push_back(std::move(key));
  frequency_.push_back(0);
  return id;
}

std::optional<ItemId> Vocabulary::find(std::string_view name) const {
  if (auto it = index_.find(std::string(name)); it != index_.end()) return it->second;
  return std::nullopt;
}

ItemId Vocabulary::at(std::string_view name) const {
  if (auto id = find(name)) return *id;
  throw ValidationError("unknown item '" + std::string(name) + "'");
}

// InteractionLog ------------------------------------------------------------

std::vector<std::span<const Record>> InteractionLog::user_streams() const {
  std::vector<std::span<const Record>> out;
  std::size_t begin = 0;
  for (std::size_t i = 1; i <= records.size(); ++i) {
    if (i == records.size() || records[i].user != records[begin].user) {
      out.emplace_back(records.data() + begin, i - begin);
      begin = i;
    }
  }
  return out;
}

std::vector<std::span<const Record>> InteractionLog::sessions() const {
  std::vector<std::span<const Record>> out;
  std::size_t begin = 0;
  for (std::size_t i = 1; i <= records.size(); ++i) {
    if (i == records.size() || records[i].user != records[begin].user ||
        records[i].session != records[begin].session) {
      out.emplace_back(records.data() + begin, i - begin);
      begin = i;
    }
  }
  return out;
}

void InteractionLog::validate(std::size_t vocab_size) const {
  std::vector<bool> user_seen(user_names.size(), false);
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (r.item >= vocab_size) throw ValidationError("record " + std::to_string(i) + ": item index out of range");
    if (r.user >= user_names.size()) throw ValidationError("record " + std::to_string(i) + ": user index out of range");
    if (i > 0 && records[i - 1].user == r.user) {
      if (records[i - 1].session == r.session && records[i - 1].position >= r.position) {
        throw ValidationError("record " + std::to_string(i) + ": positions not strictly increasing in session");
      }
    } else {
      if (user_seen[r.user]) throw ValidationError("record " + std::to_string(i) + ": user records not contiguous");
      user_seen[r.user] = true;
    }
  }
}

// Pair generation -----------------------------------------------------------

void emit_window_pairs(std::span<const ItemId> seq, std::uint32_t window, bool symmetric,
                       PairStream& out) {
  for (std::size_t t = 1; t < seq.size(); ++t) {
    const std::size_t reach = std::min<std::size_t>(window, t);
    for (std::size_t m = 1; m <= reach; ++m) {
      const ItemId center = seq[t];
      const ItemId context = seq[t - m];
      if (center == context) {
        out.suppressed += symmetric ? 2 : 1;
        continue;
      }
      out.pairs.push_back({center, context});
      if (symmetric) out.pairs.push_back({context, center});
    }
  }
}

PairStream sequence_pairs(const InteractionLog& log, const SequenceOptions& opts) {
  if (opts.window < 1) throw ValidationError("window must be >= 1");
  PairStream out;
  out.provenance = Provenance::SequenceWindow;
  std::vector<ItemId> seq;
  for (auto stream : log.user_streams()) {
    seq.clear();
    for (const auto& r : stream) seq.push_back(r.item);
    emit_window_pairs(seq, opts.window, opts.symmetric, out);
  }
  return out;
}

// Session graph -------------------------------------------------------------

WeightedGraph::WeightedGraph(std::size_t num_nodes,
                             std::vector<std::tuple<ItemId, ItemId, std::uint64_t>> edges) {
  std::vector<std::tuple<ItemId, ItemId, std::uint64_t>> directed;
  directed.reserve(edges.size() * 2);
  for (auto [a, b, w] : edges) {
    if (a == b) throw ValidationError("self-loop in graph");
    if (w == 0) throw ValidationError("edge weight must be >= 1");
    if (a >= num_nodes || b >= num_nodes) throw ValidationError("edge endpoint out of range");
    directed.emplace_back(a, b, w);
    directed.emplace_back(b, a, w);
  }
  std::sort(directed.begin(), directed.end());
  offsets_.assign(num_nodes + 1, 0);
  for (std::size_t e = 0; e < directed.size(); ++e) {
    auto [a, b, w] = directed[e];
    if (e > 0 && std::get<0>(directed[e - 1]) == a && std::get<1>(directed[e - 1]) == b) {
      throw ValidationError("duplicate edge in graph");
    }
    ++offsets_[a + 1];
    neighbors_.push_back(b);
    weights_.push_back(w);
  }
  std::partial_sum(offsets_.begin(), offsets_.end(), offsets_.begin());
}

std::span<const ItemId> WeightedGraph::neighbors(ItemId node) const {
  return {neighbors_.data() + offsets_.at(node), offsets_.at(node + 1) - offsets_.at(node)};
}

std::span<const std::uint64_t> WeightedGraph::weights(ItemId node) const {
  return {weights_.data() + offsets_.at(node), offsets_.at(node + 1) - offsets_.at(node)};
}

std::uint64_t WeightedGraph::weight(ItemId a, ItemId b) const {
  auto nb = neighbors(a);
  auto it = std::lower_bound(nb.begin(), nb.end(), b);
  if (it == nb.end() || *it != b) return 0;
  return weights(a)[static_cast<std::size_t>(it - nb.begin())];
}

std::uint64_t WeightedGraph::total_weight() const {
  return std::accumulate(weights_.begin(), weights_.end(), std::uint64_t{0}) / 2;
}

WeightedGraph build_session_graph(const InteractionLog& log, std::size_t num_items) {
  std::unordered_map<std::uint64_t, std::uint64_t> counts;
  std::vector<ItemId> items;
  for (auto session : log.sessions()) {
    items.clear();
    for (const auto& r : session) items.push_back(r.item);
    std::sort(items.begin(), items.end());
    items.erase(std::unique(items.begin(), items.end()), items.end());
    for (std::size_t a = 0; a < items.size(); ++a) {
      for (std::size_t b = a + 1; b < items.size(); ++b) {
        ++counts[(static_cast<std::uint64_t>(items[a]) << 32) | items[b]];
      }
    }
  }
  std::vector<std::tuple<ItemId, ItemId, std::uint64_t>> edges;
  edges.reserve(counts.size());
  for (auto [key, w] : counts) {
    edges.emplace_back(static_cast<ItemId>(key >> 32), static_cast<ItemId>(key & 0xffffffffu), w);
  }
  return WeightedGraph(num_items, std::move(edges));
}

// Random walks --------------------------------------------------------------

namespace {

std::size_t sample_weighted(std::span<const double> weights, double total, Rng& rng) {
  const double target = uniform01(rng) * total;
  double acc = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    acc += weights[i];
    if (target < acc) return i;
  }
  return weights.size() - 1;
}

}  // namespace

std::vector<ItemId> biased_walk(const WeightedGraph& graph, ItemId start, std::uint32_t length,
                                double p, double q, std::uint64_t seed) {
  std::vector<ItemId> walk;
  if (length == 0 || graph.neighbors(start).empty()) return walk;
  Rng rng(seed);
  walk.reserve(length);
  walk.push_back(start);
  std::vector<double> probs;
  while (walk.size() < length) {
    const ItemId cur = walk.back();
    auto nb = graph.neighbors(cur);
    auto w = graph.weights(cur);
    probs.resize(nb.size());
    double total = 0.0;
    for (std::size_t i = 0; i < nb.size(); ++i) {
      double bias = 1.0;
      if (walk.size() >= 2) {
        const ItemId prev = walk[walk.size() - 2];
        if (nb[i] == prev) {
          bias = 1.0 / p;
        } else if (!graph.has_edge(prev, nb[i])) {
          bias = 1.0 / q;
        }
      }
      probs[i] = static_cast<double>(w[i]) * bias;
      total += probs[i];
    }
    walk.push_back(nb[sample_weighted(probs, total, rng)]);
  }
  return walk;
}

PairStream random_walk_pairs(const WeightedGraph& graph, const WalkOptions& opts) {
  if (!(opts.return_param > 0.0) || !(opts.inout_param > 0.0)) {
    throw ValidationError("random walk parameters p and q must be positive");
  }
  if (opts.context_size < 1) throw ValidationError("context size must be >= 1");
  const std::size_t n = graph.num_nodes();
  const unsigned threads = std::max(1u, std::min<unsigned>(opts.threads, static_cast<unsigned>(std::max<std::size_t>(n, 1))));

  std::vector<PairStream> shards(threads);
  auto work = [&](unsigned shard) {
    const std::size_t begin = n * shard / threads;
    const std::size_t end = n * (shard + 1) / threads;
    PairStream& out = shards[shard];
    for (std::size_t node = begin; node < end; ++node) {
      if (graph.neighbors(static_cast<ItemId>(node)).empty()) {
        ++out.skipped_nodes;
        continue;
      }
      for (std::uint32_t r = 0; r < opts.walks_per_node; ++r) {
        auto walk = biased_walk(graph, static_cast<ItemId>(node), opts.walk_length, opts.return_param,
                                opts.inout_param, derive_seed(opts.seed, node, r));
        emit_window_pairs(walk, opts.context_size, false, out);
      }
    }
  };
  if (threads == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(work, t);
    for (auto& th : pool) th.join();
  }

  PairStream out;
  out.provenance = Provenance::RandomWalk;
  std::size_t total = 0;
  for (auto& s : shards) total += s.pairs.size();
  out.pairs.reserve(total);
  for (auto& s : shards) {
    out.pairs.insert(out.pairs.end(), s.pairs.begin(), s.pairs.end());
    out.suppressed += s.suppressed;
    out.skipped_nodes += s.skipped_nodes;
  }
  return out;
}

// Synthetic corpus ----------------------------------------------------------

void SyntheticSpec::validate() const {
  if (num_items < 2) throw ValidationError("synthetic data: need at least two items");
  if (num_classes < 1 || num_classes > num_items) throw ValidationError("synthetic data: bad class count");
  if (!(within_prob > 0.0 && within_prob < 1.0) || !(cross_prob > 0.0 && cross_prob < 1.0)) {
    throw ValidationError("synthetic data: probabilities must lie in (0,1)");
  }
  if (!(within_prob > cross_prob)) throw ValidationError("synthetic data: within_prob must exceed cross_prob");
  if (num_records < 1) throw ValidationError("synthetic data: num_records must be >= 1");
  if (sequence_length < 2) throw ValidationError("synthetic data: sequence_length must be >= 2");
  for (auto [a, b] : planted_independent) {
    if (a == b || a >= num_items || b >= num_items) throw ValidationError("synthetic data: bad planted pair");
  }
}

Eigen::MatrixXd relatedness_from_pair_weights(const Eigen::MatrixXd& weights) {
  const Eigen::Index n = weights.rows();
  const double total = weights.triangularView<Eigen::StrictlyUpper>().toDenseMatrix().sum();
  const Eigen::VectorXd row = weights.rowwise().sum();
  Eigen::MatrixXd r(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      r(i, j) = i == j ? std::numeric_limits<double>::quiet_NaN()
                       : std::log(2.0 * weights(i, j) * total / (row(i) * row(j)));
    }
  }
  return r;
}

namespace {

// Adjusts the weight of each planted pair until 2 w W = a_i a_j holds for all of
// them simultaneously (a = row sums, W = total over unordered pairs).
void solve_planted_weights(Eigen::MatrixXd& w, std::span<const std::pair<ItemId, ItemId>> planted) {
  for (int sweep = 0; sweep < 200; ++sweep) {
    double worst = 0.0;
    for (auto [i, j] : planted) {
      const double total = w.triangularView<Eigen::StrictlyUpper>().toDenseMatrix().sum() - w(i, j);
      const double ai = w.row(i).sum() - w(i, j);
      const double aj = w.row(j).sum() - w(i, j);
      const double b = 2.0 * total - ai - aj;
      const double x = 0.5 * (-b + std::sqrt(b * b + 4.0 * ai * aj));
      worst = std::max(worst, std::abs(x - w(i, j)));
      w(i, j) = w(j, i) = x;
    }
    if (worst < 1e-17) break;
  }
}

struct CumulativeTable {
  std::vector<double> cdf;
  std::size_t draw(Rng& rng) const {
    const double u = uniform01(rng) * cdf.back();
    auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    return std::min<std::size_t>(static_cast<std::size_t>(it - cdf.begin()), cdf.size() - 1);
  }
};

}  // namespace

SyntheticCorpus generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  const std::uint32_t n = spec.num_items;
  SyntheticCorpus out;
  out.item_class.resize(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    out.item_class[i] = static_cast<std::uint32_t>(static_cast<std::uint64_t>(i) * spec.num_classes / n);
    char name[32];
    std::snprintf(name, sizeof name, "item%05u", i);
    out.vocab.intern(name);
  }

  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n, n);
  for (std::uint32_t i = 0; i < n; ++i) {
    for (std::uint32_t j = 0; j < n; ++j) {
      if (i != j) w(i, j) = out.item_class[i] == out.item_class[j] ? spec.within_prob : spec.cross_prob;
    }
  }
  solve_planted_weights(w, spec.planted_independent);
  const double total = w.triangularView<Eigen::StrictlyUpper>().toDenseMatrix().sum();
  out.pair_probability = w / total;
  out.truth = relatedness_from_pair_weights(w);

  // Stationary start then reversible transitions P(j | i) = w_ij / a_i.
  CumulativeTable start;
  std::vector<CumulativeTable> next(n);
  const Eigen::VectorXd row = w.rowwise().sum();
  double acc = 0.0;
  for (std::uint32_t i = 0; i < n; ++i) {
    acc += row(i);
    start.cdf.push_back(acc);
    double racc = 0.0;
    for (std::uint32_t j = 0; j < n; ++j) {
      racc += w(i, j);
      next[i].cdf.push_back(racc);
    }
  }

  Rng rng(derive_seed(spec.seed, "synthetic"));
  const std::uint32_t session_len = spec.session_length == 0 ? spec.sequence_length : spec.session_length;
  out.log.records.reserve(spec.num_records * spec.sequence_length);
  std::uint32_t session_id = 0;
  for (std::uint64_t u = 0; u < spec.num_records; ++u) {
    out.log.user_names.push_back("user" + std::to_string(u));
    auto item = static_cast<ItemId>(start.draw(rng));
    for (std::uint32_t t = 0; t < spec.sequence_length; ++t) {
      if (t > 0) item = static_cast<ItemId>(next[item].draw(rng));
      if (t % session_len == 0) {
        session_id = static_cast<std::uint32_t>(out.log.session_names.size());
        out.log.session_names.push_back("s" + std::to_string(session_id));
      }
      out.log.records.push_back({static_cast<std::uint32_t>(u), session_id, item, t % session_len});
      out.vocab.add_frequency(item);
    }
  }
  return out;
}

}  // namespace relana::catalog
