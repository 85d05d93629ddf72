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
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "relana/catalog.hpp"
#include "relana/embed.hpp"
#include "relana/rng.hpp"

namespace relana::evalharness {

using catalog::ItemId;
using embed::Matrix;

struct UserSplit {
  std::uint32_t user = 0;
  std::vector<ItemId> train;
  ItemId valid = 0;
  ItemId test = 0;
};

struct SplitSpec {
  std::vector<UserSplit> users;
  std::uint64_t excluded_users = 0;  // fewer than three records
};

/// Per user: all but the last two records train, second-to-last validates,
/// last tests.
SplitSpec leave_last_split(const catalog::InteractionLog& log);

/// Items sorted by descending <query, row>, ties by index, excluded items removed.
std::vector<ItemId> rank_candidates(std::span<const double> query, const Matrix& emb,
                                    std::span<const ItemId> exclude = {});

struct RankingMetrics {
  double auc = 0.0;
  double ndcg = 0.0;
  double recall_at_k = 0.0;
  double ndcg_at_k = 0.0;
};

/// Metrics for a single positive at 1-based `position` among `count` candidates.
RankingMetrics ranking_metrics(std::size_t position, std::size_t count, std::size_t k);

/// 1-based rank of `positive` among `candidates` by descending score, ties by
/// index (the positive must be among the candidates exactly once).
std::size_t position_of(ItemId positive, std::span<const ItemId> candidates, std::span<const double> query,
                        const Matrix& emb);

struct MetricSummary {
  double mean = 0.0;
  double sd = 0.0;
  std::size_t runs = 0;
};

MetricSummary summarize(std::span<const double> values);

struct RankingReport {
  MetricSummary auc, ndcg, recall_at_k, ndcg_at_k;
  std::size_t k = 10;
  std::size_t queries = 0;  // per repetition
};

struct RecommendationOptions {
  std::size_t k = 10;
  /// 0: candidates are the full catalog minus the user's training items (the
  /// test item always kept). Otherwise this many sampled negatives.
  std::size_t sampled_negatives = 0;
  std::uint64_t seed = 1;
  unsigned threads = 1;
};

/// Mean metrics over users for one embedding: query z_valid, target the test item.
RankingMetrics evaluate_recommendation(const SplitSpec& split, const Matrix& emb, const RecommendationOptions& opts);

/// Aggregates repetitions (one RankingMetrics per repetition).
RankingReport aggregate(std::span<const RankingMetrics> reps, std::size_t k, std::size_t queries);

// Classification -------------------------------------------------------------

struct StratifiedSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// Per-class shuffle, first round(0.8 * size) of each class to train (at least
/// one to each side when the class has two or more members).
StratifiedSplit stratified_split(std::span<const std::uint32_t> labels, double train_fraction, std::uint64_t seed);

struct SoftmaxOptions {
  double l2 = 1e-4;
  std::uint32_t epochs = 300;
  double learning_rate = 0.5;
  bool intercept = true;
  bool standardize = true;  // z-score features with train-row statistics
  std::uint64_t seed = 1;
};

struct SoftmaxModel {
  Eigen::MatrixXd theta;  // (d + intercept) x C
  bool intercept = true;
  std::vector<double> loss_trace;

  std::size_t num_classes() const { return static_cast<std::size_t>(theta.cols()); }
  Eigen::VectorXd probabilities(std::span<const double> x) const;
  std::uint32_t predict(std::span<const double> x) const;
};

/// Mean cross-entropy plus (l2 / 2) ||theta||^2 (intercept row excluded).
double softmax_loss(const Eigen::MatrixXd& theta, const Matrix& X, std::span<const std::uint32_t> labels,
                    std::span<const std::size_t> rows, std::size_t num_classes, double l2, bool intercept);
Eigen::MatrixXd softmax_gradient(const Eigen::MatrixXd& theta, const Matrix& X, std::span<const std::uint32_t> labels,
                                 std::span<const std::size_t> rows, std::size_t num_classes, double l2, bool intercept);

/// Full-batch gradient descent on the rows listed in `rows`.
SoftmaxModel train_softmax_classifier(const Matrix& X, std::span<const std::uint32_t> labels,
                                      std::span<const std::size_t> rows, std::size_t num_classes,
                                      const SoftmaxOptions& opts);

struct F1 {
  double micro = 0.0;
  double macro = 0.0;
};

/// Micro F1 from global counts; macro is the unweighted mean of per-class F1
/// over classes 0..num_classes-1 (a class never predicted nor present scores 0).
F1 f1_scores(std::span<const std::uint32_t> predictions, std::span<const std::uint32_t> labels,
             std::size_t num_classes);

/// Stratified 80/20 split, train, predict the held-out rows.
F1 evaluate_classification(const Matrix& X, std::span<const std::uint32_t> labels, std::size_t num_classes,
                           const SoftmaxOptions& opts);

// Cart strategies -------------------------------------------------------------

struct CartSnapshot {
  std::vector<ItemId> cart;  // in add order
  ItemId label = 0;
};

/// Every prefix of every session with at least two distinct items: the cart is
/// the prefix, the label the next item not already in the cart.
std::vector<CartSnapshot> cart_snapshots(const catalog::InteractionLog& log);

enum class CartStrategy : std::uint8_t { Random = 0, Recent = 1, Oracle = 2, Add = 3, Attention = 4 };

CartStrategy parse_strategy(std::string_view name);
std::string_view strategy_name(CartStrategy s);

/// Query embedding for a cart. Random draws from `rng`; Oracle needs the label.
Eigen::VectorXd cart_embedding(const CartSnapshot& cart, const Matrix& emb, CartStrategy strategy, Rng* rng = nullptr);

/// Mean metrics over snapshots; candidates are the catalog minus the cart.
RankingMetrics evaluate_carts(std::span<const CartSnapshot> carts, const Matrix& emb, CartStrategy strategy,
                              std::size_t k, std::uint64_t seed);

}  // namespace relana::evalharness
