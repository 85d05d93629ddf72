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
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "relana/catalog.hpp"
#include "relana/cooccur.hpp"

namespace relana::embed {

using catalog::ItemId;
using cooccur::CooccurrenceTable;
using cooccur::RelatednessEstimate;

/// Row-major so each embedding row is contiguous for the SIMD kernels.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

struct EmbeddingPair {
  Matrix Z;   // input embeddings
  Matrix Zt;  // context ("tilde") embeddings

  std::size_t size() const { return static_cast<std::size_t>(Z.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(Z.cols()); }
  double score(ItemId i, ItemId j) const;  // <z_i, zt_j>
  bool finite() const { return Z.allFinite() && Zt.allFinite(); }
};

enum class ExportSide : std::uint8_t { Input = 0, Context = 1, Average = 2 };

/// The matrix handed to downstream tasks.
Matrix exported(const EmbeddingPair& pair, ExportSide side = ExportSide::Input);

/// Z and Zt i.i.d. uniform on (-0.5/d, 0.5/d) from separate seed streams.
EmbeddingPair init_embeddings(std::size_t vocab_size, std::size_t d, std::uint64_t seed);

/// Numerically stable log(sigmoid(x)).
double log_sigmoid(double x);
double sigmoid(double x);

/// -log s(<z, zt_pos>) - sum_neg log s(-<z, zt_neg>).
double pair_loss(std::span<const double> z, std::span<const double> zt_pos,
                 std::span<const std::span<const double>> zt_negatives);

/// Expectation-form loss over the table (minimized):
/// -sum_{i != j} [N_ij log s(x_ij) + (k/n) N_i N_j log s(-x_ij)].
double corpus_loss(const EmbeddingPair& pair, const CooccurrenceTable& table, double k);

/// sum_j w_j e_j zt_j over the listed columns; both analytic gradients are this
/// projection with different error terms.
Vector weighted_projection(const Matrix& Zt, std::span<const ItemId> cols, std::span<const double> weights,
                           std::span<const double> errors);

/// Gradient of corpus_loss with respect to z_i:
/// n sum_{j != i} w_ij [s(x_ij) - s(R_ij - log k)] zt_j, w_ij = p_ij + k p_i p_j.
Vector sgns_gradient_row(const EmbeddingPair& pair, ItemId i, const CooccurrenceTable& table, double k);

/// Weights w_ij = p_ij + k p_i p_j over observed ordered pairs (CSR by row).
struct FactorizationWeights {
  std::vector<std::size_t> offsets;  // size |I| + 1
  std::vector<ItemId> cols;
  std::vector<double> weights;

  std::size_t num_items() const { return offsets.empty() ? 0 : offsets.size() - 1; }
  std::span<const ItemId> row_cols(ItemId i) const { return {cols.data() + offsets[i], offsets[i + 1] - offsets[i]}; }
  std::span<const double> row_weights(ItemId i) const {
    return {weights.data() + offsets[i], offsets[i + 1] - offsets[i]};
  }
};

FactorizationWeights factorization_weights(const CooccurrenceTable& table, double k);

/// Weighted square loss sum_{observed} w_ij (R_ij - <z_i, zt_j>)^2.
double ldr_loss(const EmbeddingPair& pair, const RelatednessEstimate& est, const FactorizationWeights& w);

/// Gradient of ldr_loss with respect to z_i: sum_j w_ij 2 (x_ij - R_ij) zt_j.
Vector ldr_gradient_row(const EmbeddingPair& pair, ItemId i, const RelatednessEstimate& est,
                        const FactorizationWeights& w);

/// KL gap between the relatedness-induced and embedding-induced co-occurrence
/// Bernoullis, sum_{i != j} P(i,j) KL(s(R_ij - log k) || s(x_ij)) with
/// P(i,j) = (p_ij + k p_i p_j) / (k + 1). Equals
/// (corpus_loss - min corpus_loss) / (n (k + 1)).
double kl_sdr_gap(const EmbeddingPair& pair, const CooccurrenceTable& table, double k);

/// corpus_loss at the unconstrained optimum x_ij = R_ij - log k.
double optimal_corpus_loss(const CooccurrenceTable& table, double k);

enum class WorkerMode : std::uint8_t { Deterministic = 0, Racy = 1 };

struct SgnsConfig {
  std::size_t dim = 32;
  std::uint32_t k = 5;
  std::uint32_t epochs = 5;
  double learning_rate = 0.025;
  double min_lr_ratio = 1e-4;  // linear decay floor as a fraction of the initial rate
  double power = 1.0;          // negative-sampling exponent on item counts
  std::uint64_t seed = 1;
  WorkerMode mode = WorkerMode::Deterministic;
  unsigned workers = 1;  // used in Racy mode only

  void validate() const;
};

struct SgnsResult {
  EmbeddingPair pair;
  std::vector<double> loss_trace;  // mean sampled pair loss per epoch
};

/// SGD over the stream with k negatives per positive drawn from the table's
/// item counts raised to `power`. With a BothRoles table every stream pair is
/// trained in both directions, matching the symmetrized statistics.
SgnsResult train_sgns(const catalog::PairStream& stream, const CooccurrenceTable& table, const SgnsConfig& config,
                      const EmbeddingPair* init = nullptr);

enum class LdrSolver : std::uint8_t { GradientDescent = 0, AlternatingLeastSquares = 1 };

struct LdrConfig {
  std::size_t dim = 32;
  std::uint32_t iterations = 100;
  LdrSolver solver = LdrSolver::GradientDescent;
  double ridge = 1e-9;  // relative jitter for the ALS normal equations
  std::uint64_t seed = 1;
};

struct LdrResult {
  EmbeddingPair pair;
  std::vector<double> loss_trace;  // objective after each iteration
};

/// Minimizes the weighted square loss by block-coordinate gradient steps
/// (per-row step 1 / (2 sum_j w_ij |zt_j|^2)) or by alternating weighted least
/// squares.
LdrResult train_ldr(const RelatednessEstimate& est, const FactorizationWeights& weights, const LdrConfig& config);

// Persistence ---------------------------------------------------------------

/// "RLNE", u32 |I|, u32 d, row-major f32.
void write_rlne(const std::filesystem::path& path, const Matrix& m);
Matrix read_rlne(const std::filesystem::path& path);

/// `item_id<TAB>f1 ... fd` with tab-separated features.
void write_tsv(const std::filesystem::path& path, const Matrix& m, const catalog::Vocabulary& vocab);
Matrix read_tsv(const std::filesystem::path& path, const catalog::Vocabulary& vocab);

}  // namespace relana::embed
