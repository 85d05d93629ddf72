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
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "relana/cooccur.hpp"
#include "relana/embed.hpp"

namespace relana::relations {

using catalog::ItemId;
using cooccur::CooccurrenceTable;
using cooccur::RelatednessEstimate;

/// Distinct item sets (baskets, sessions, neighbourhoods) used to estimate
/// set-conditional distributions.
using Neighborhoods = std::vector<std::vector<ItemId>>;

/// Distinct items of every (user, session) of a log.
Neighborhoods session_neighborhoods(const catalog::InteractionLog& log);

enum class ConditionalMode : std::uint8_t { Joint = 0, AnyOf = 1, Table = 2 };

struct Conditional {
  Eigen::VectorXd p;  // sums to 1
  ConditionalMode mode = ConditionalMode::Joint;
  std::uint64_t support = 0;  // neighbourhoods (or counts) behind the estimate
};

/// p(e | set) from neighbourhoods containing every item of the set (joint mode),
/// falling back to neighbourhoods containing any of them. Items of the set are
/// not counted as outcomes. Throws ComputeError("empty joint support") when
/// `allow_fallback` is false and no neighbourhood holds the whole set.
Conditional conditional_distribution(std::span<const ItemId> set, const Neighborhoods& hoods, std::size_t num_items,
                                     bool allow_fallback = true);

/// p(e | set) from a table: N_ie / N_i for a singleton, the pooled counts of
/// the members otherwise (flagged AnyOf).
Conditional conditional_from_table(std::span<const ItemId> set, const CooccurrenceTable& table);

struct HigherOrderResult {
  ItemId best = 0;
  Eigen::VectorXd scores;  // score per candidate item (relatedness: higher is better; KL: lower)
  bool unique = false;  // no other candidate ties the best score
};

/// argmax_c sum_e cond(e) R_{c,e}, missing R as 0; ties to the smallest index.
HigherOrderResult higher_order_by_relatedness(const Eigen::VectorXd& cond, const RelatednessEstimate& est);

/// Candidate conditional q_c(e) = N_ce / N_c, with unobserved cells (and the
/// diagonal) imputed by the marginal N_e / n, i.e. relatedness 0.
Eigen::VectorXd candidate_conditional(ItemId c, const CooccurrenceTable& table);

/// argmin_c KL(cond || q_c + eps); ties to the smallest index.
HigherOrderResult higher_order_by_kl(const Eigen::VectorXd& cond, const CooccurrenceTable& table,
                                     double smoothing = 1e-9);

struct RelationSet {
  std::vector<std::pair<ItemId, ItemId>> pairs;  // (i, j) with i -r-> j

  std::vector<ItemId> sources() const;  // distinct i
  std::vector<ItemId> targets() const;  // distinct j
};

/// z_r = sum over pairs of (row_j - row_i) for rows of the relatedness estimate
/// (missing as 0).
Eigen::VectorXd relation_vector(const RelationSet& rel, const RelatednessEstimate& est);
/// Same over embedding rows.
Eigen::VectorXd relation_vector(const RelationSet& rel, const embed::Matrix& emb);

/// Row i of the estimate as a dense vector (missing as 0).
Eigen::VectorXd relatedness_row(const RelatednessEstimate& est, ItemId i);

enum class Offset : std::uint8_t { Mean = 0, Sum = 1 };

struct AnalogyHit {
  ItemId item = 0;
  double distance = 0.0;  // Euclidean, or 1 - cosine for embeddings
};

struct AnalogyResult {
  std::vector<AnalogyHit> ranked;
  Eigen::VectorXd residual;  // row_top - row_{i*} - offset
  double offset_norm = 0.0;
};

/// Ranks candidates j by ||row_{i*} + offset - row_j||, offset = z_r / |pairs|
/// (Mean) or z_r (Sum).
AnalogyResult analogy_predict(ItemId i_star, const Eigen::VectorXd& z_r, std::size_t pair_count,
                              const RelatednessEstimate& est, std::span<const ItemId> candidates,
                              Offset offset = Offset::Mean);
/// Embedding variant ranked by cosine similarity.
AnalogyResult analogy_predict(ItemId i_star, const Eigen::VectorXd& z_r, std::size_t pair_count,
                              const embed::Matrix& emb, std::span<const ItemId> candidates,
                              Offset offset = Offset::Mean);

struct KMeansResult {
  std::vector<std::uint32_t> assignment;
  Eigen::MatrixXd centroids;        // K x d
  std::vector<double> objective;    // after each Lloyd iteration
  std::uint32_t reseeded = 0;       // empty clusters re-seeded from the farthest point
};

/// Lloyd iterations with k-means++ seeding over the rows of `points`.
KMeansResult kmeans(const embed::Matrix& points, std::uint32_t K, std::uint64_t seed, std::uint32_t max_iter = 100);

/// k-means over z_anchor - z_reco.
KMeansResult kmeans_diffs(std::span<const std::pair<ItemId, ItemId>> anchor_pairs, const embed::Matrix& emb,
                          std::uint32_t K, std::uint64_t seed, std::uint32_t max_iter = 100);

double adjusted_rand_index(std::span<const std::uint32_t> a, std::span<const std::uint32_t> b);

}  // namespace relana::relations
