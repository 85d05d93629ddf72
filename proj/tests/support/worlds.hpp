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
#include <vector>

#include "relana/catalog.hpp"
#include "relana/cooccur.hpp"
#include "relana/embed.hpp"
#include "relana/evalharness.hpp"
#include "relana/rng.hpp"

namespace relana::testing {

using catalog::ItemId;

/// Symmetric table with every pair observed, counts uniform in [lo, hi].
cooccur::CooccurrenceTable dense_table(std::size_t items, std::uint64_t seed, std::uint64_t lo, std::uint64_t hi);

/// Z and Zt with i.i.d. N(0, scale^2) entries.
embed::EmbeddingPair random_pair(std::size_t items, std::size_t dim, std::uint64_t seed, double scale);

/// Sequences -> pair stream over every window position.
catalog::PairStream stream_of(const std::vector<std::vector<ItemId>>& sequences, std::uint32_t window);

/// Draws `trials` unordered pairs from the upper triangle of a symmetric
/// pair-probability matrix into a BothRoles table.
class PairSampler {
 public:
  explicit PairSampler(const Eigen::MatrixXd& pair_probability);
  cooccur::CooccurrenceTable sample(std::uint64_t trials, Rng& rng) const;

 private:
  std::size_t items_ = 0;
  std::vector<std::pair<ItemId, ItemId>> cells_;
  std::vector<double> cdf_;
};

/// Relation items (b, v) whose context distribution is an even mixture of a
/// uniform draw from the base block S_b and one from the variant block T_v.
/// Blocks are disjoint, so every relatedness row is exactly u_b + w_v.
struct RelationWorld {
  std::size_t bases = 0;
  std::size_t variants = 0;
  std::size_t block = 0;  // contexts per block
  cooccur::CooccurrenceTable table;

  ItemId item(std::size_t b, std::size_t v) const { return static_cast<ItemId>(b * variants + v); }
  std::size_t relation_items() const { return bases * variants; }
};

RelationWorld relation_world(std::size_t bases, std::size_t variants, std::size_t block, std::uint64_t samples,
                             std::uint64_t seed);

/// Carts built from a base item a_p, a partner b_q and noise items; the label
/// is the combination item c(p, q), which co-occurs with both a_p and b_q.
struct CartWorld {
  std::size_t p = 0, q = 0, noise = 0;
  std::size_t num_items() const { return p + q + p * q + noise; }
  ItemId a(std::size_t i) const { return static_cast<ItemId>(i); }
  ItemId b(std::size_t j) const { return static_cast<ItemId>(p + j); }
  ItemId combo(std::size_t i, std::size_t j) const { return static_cast<ItemId>(p + q + i * q + j); }
  ItemId noise_item(std::size_t k) const { return static_cast<ItemId>(p + q + p * q + k); }
};

struct CartSample {
  std::vector<std::vector<ItemId>> sessions;       // training sessions: cart items then label
  std::vector<evalharness::CartSnapshot> carts;    // held-out final-snapshot carts
};

CartSample cart_sample(const CartWorld& world, std::size_t train_sessions, std::size_t test_carts,
                       std::size_t noise_per_cart, std::uint64_t seed);

}  // namespace relana::testing
