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

#include "relana/embed.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <thread>

#include "relana/error.hpp"
#include "relana/rng.hpp"
#include "relana/simd.hpp"

namespace relana::embed {

double EmbeddingPair::score(ItemId i, ItemId j) const {
  return simd::active().dot(Z.row(i).data(), Zt.row(j).data(), dim());
}

Matrix exported(const EmbeddingPair& pair, ExportSide side) {
  switch (side) {
    case ExportSide::Input: return pair.Z;
    case ExportSide::Context: return pair.Zt;
    case ExportSide::Average: return 0.5 * (pair.Z + pair.Zt);
  }
  throw ValidationError("unknown export side");
}

EmbeddingPair init_embeddings(std::size_t vocab_size, std::size_t d, std::uint64_t seed) {
  if (d < 1) throw ValidationError("embedding dimension must be >= 1");
  const double half = 0.5 / static_cast<double>(d);
  auto fill = [&](Matrix& m, std::uint64_t stream) {
    Rng rng(derive_seed(seed, stream));
    m.resize(static_cast<Eigen::Index>(vocab_size), static_cast<Eigen::Index>(d));
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = (2.0 * uniform01(rng) - 1.0) * half;
    }
  };
  EmbeddingPair p;
  fill(p.Z, derive_seed(0, "init-input"));
  fill(p.Zt, derive_seed(0, "init-context"));
  return p;
}

double log_sigmoid(double x) { return x >= 0.0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x)); }

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double pair_loss(std::span<const double> z, std::span<const double> zt_pos,
                 std::span<const std::span<const double>> zt_negatives) {
  double loss = -log_sigmoid(simd::dot(z, zt_pos));
  for (auto neg : zt_negatives) loss -= log_sigmoid(-simd::dot(z, neg));
  return loss;
}

namespace {

void require_k(double k) {
  if (!(k >= 1.0)) throw ValidationError("k must be >= 1");
}

// Row-wise inner products x_ij = <z_i, zt_j> for every j.
Vector scores_row(const EmbeddingPair& pair, ItemId i) {
  Vector x(pair.Zt.rows());
  simd::active().gemv_rows(pair.Zt.data(), pair.size(), pair.dim(), pair.Z.row(i).data(), pair.dim(), x.data());
  return x;
}

}  // namespace

double corpus_loss(const EmbeddingPair& pair, const CooccurrenceTable& table, double k) {
  require_k(k);
  if (table.n() == 0) throw ValidationError("corpus loss of an empty table");
  const double n = static_cast<double>(table.n());
  double loss = 0.0;
  for (std::size_t i = 0; i < table.num_items(); ++i) {
    const double ni = static_cast<double>(table.item_count(static_cast<ItemId>(i)));
    const Vector x = scores_row(pair, static_cast<ItemId>(i));
    for (std::size_t j = 0; j < table.num_items(); ++j) {
      if (i == j) continue;
      const double nij = static_cast<double>(table.count(static_cast<ItemId>(i), static_cast<ItemId>(j)));
      const double neg = k / n * ni * static_cast<double>(table.item_count(static_cast<ItemId>(j)));
      if (nij > 0.0) loss -= nij * log_sigmoid(x(j));
      if (neg > 0.0) loss -= neg * log_sigmoid(-x(j));
    }
  }
  return loss;
}

double optimal_corpus_loss(const CooccurrenceTable& table, double k) {
  require_k(k);
  const double n = static_cast<double>(table.n());
  double loss = 0.0;
  for (std::size_t i = 0; i < table.num_items(); ++i) {
    const double ni = static_cast<double>(table.item_count(static_cast<ItemId>(i)));
    for (std::size_t j = 0; j < table.num_items(); ++j) {
      if (i == j) continue;
      const double nij = static_cast<double>(table.count(static_cast<ItemId>(i), static_cast<ItemId>(j)));
      const double neg = k / n * ni * static_cast<double>(table.item_count(static_cast<ItemId>(j)));
      if (nij == 0.0 || neg == 0.0) continue;  // the optimum drives that term to 0
      const double q = nij / (nij + neg);
      loss -= nij * std::log(q) + neg * std::log1p(-q);
    }
  }
  return loss;
}

Vector weighted_projection(const Matrix& Zt, std::span<const ItemId> cols, std::span<const double> weights,
                           std::span<const double> errors) {
  Vector g = Vector::Zero(Zt.cols());
  const auto& K = simd::active();
  for (std::size_t m = 0; m < cols.size(); ++m) {
    K.axpy(weights[m] * errors[m], Zt.row(cols[m]).data(), g.data(), static_cast<std::size_t>(g.size()));
  }
  return g;
}

Vector sgns_gradient_row(const EmbeddingPair& pair, ItemId i, const CooccurrenceTable& table, double k) {
  require_k(k);
  const double n = static_cast<double>(table.n());
  const double pi = static_cast<double>(table.item_count(i)) / n;
  const double shift = std::log(k);
  const Vector x = scores_row(pair, i);
  std::vector<ItemId> cols;
  std::vector<double> w, err;
  for (std::size_t j = 0; j < table.num_items(); ++j) {
    if (j == i) continue;
    const double pij = static_cast<double>(table.count(i, static_cast<ItemId>(j))) / n;
    const double pj = static_cast<double>(table.item_count(static_cast<ItemId>(j))) / n;
    const double wij = pij + k * pi * pj;
    if (wij == 0.0) continue;
    // s(R_ij - log k) = p_ij / w_ij, and 0 for unobserved pairs.
    const double target = pij > 0.0 ? sigmoid(std::log(pij / (pi * pj)) - shift) : 0.0;
    cols.push_back(static_cast<ItemId>(j));
    w.push_back(n * wij);
    err.push_back(sigmoid(x(static_cast<Eigen::Index>(j))) - target);
  }
  return weighted_projection(pair.Zt, cols, w, err);
}

FactorizationWeights factorization_weights(const CooccurrenceTable& table, double k) {
  require_k(k);
  if (table.n() == 0) throw ValidationError("weights of an empty table");
  const double n = static_cast<double>(table.n());
  std::vector<std::vector<std::pair<ItemId, double>>> rows(table.num_items());
  for (const auto& p : table.sorted_pairs()) {
    const double pij = static_cast<double>(p.count) / n;
    const double pi = static_cast<double>(table.item_count(p.i)) / n;
    const double pj = static_cast<double>(table.item_count(p.j)) / n;
    const double w = pij + k * pi * pj;
    rows[p.i].emplace_back(p.j, w);
    if (table.symmetric()) rows[p.j].emplace_back(p.i, w);
  }
  FactorizationWeights out;
  out.offsets.assign(1, 0);
  for (auto& r : rows) {
    std::sort(r.begin(), r.end());
    for (auto [j, w] : r) {
      out.cols.push_back(j);
      out.weights.push_back(w);
    }
    out.offsets.push_back(out.cols.size());
  }
  return out;
}

double ldr_loss(const EmbeddingPair& pair, const RelatednessEstimate& est, const FactorizationWeights& w) {
  double loss = 0.0;
  for (std::size_t i = 0; i < w.num_items(); ++i) {
    auto cols = w.row_cols(static_cast<ItemId>(i));
    auto ws = w.row_weights(static_cast<ItemId>(i));
    for (std::size_t m = 0; m < cols.size(); ++m) {
      auto r = est.value(static_cast<ItemId>(i), cols[m]);
      if (!r) continue;
      const double e = *r - pair.score(static_cast<ItemId>(i), cols[m]);
      loss += ws[m] * e * e;
    }
  }
  return loss;
}

Vector ldr_gradient_row(const EmbeddingPair& pair, ItemId i, const RelatednessEstimate& est,
                        const FactorizationWeights& w) {
  std::vector<ItemId> cols;
  std::vector<double> ws, err;
  auto rc = w.row_cols(i);
  auto rw = w.row_weights(i);
  for (std::size_t m = 0; m < rc.size(); ++m) {
    auto r = est.value(i, rc[m]);
    if (!r) continue;
    cols.push_back(rc[m]);
    ws.push_back(rw[m]);
    err.push_back(2.0 * (pair.score(i, rc[m]) - *r));
  }
  return weighted_projection(pair.Zt, cols, ws, err);
}

double kl_sdr_gap(const EmbeddingPair& pair, const CooccurrenceTable& table, double k) {
  require_k(k);
  if (table.n() == 0) throw ValidationError("gap of an empty table");
  const double n = static_cast<double>(table.n());
  double gap = 0.0;
  for (std::size_t i = 0; i < table.num_items(); ++i) {
    const double ni = static_cast<double>(table.item_count(static_cast<ItemId>(i)));
    if (ni == 0.0) continue;
    const Vector x = scores_row(pair, static_cast<ItemId>(i));
    for (std::size_t j = 0; j < table.num_items(); ++j) {
      if (i == j) continue;
      const double nij = static_cast<double>(table.count(static_cast<ItemId>(i), static_cast<ItemId>(j)));
      const double neg = k / n * ni * static_cast<double>(table.item_count(static_cast<ItemId>(j)));
      const double a = nij + neg;
      if (a == 0.0) continue;
      const double weight = a / (n * (k + 1.0));
      const double q = nij / a;
      const double xj = x(static_cast<Eigen::Index>(j));
      double kl = -q * log_sigmoid(xj) - (1.0 - q) * log_sigmoid(-xj);
      if (q > 0.0) kl += q * std::log(q);
      if (q < 1.0) kl += (1.0 - q) * std::log1p(-q);
      gap += weight * std::max(0.0, kl);
    }
  }
  return gap;
}

// SGNS training -------------------------------------------------------------

void SgnsConfig::validate() const {
  if (dim < 1) throw ValidationError("sgns: dim must be >= 1");
  if (k < 1) throw ValidationError("sgns: k must be >= 1");
  if (epochs < 1) throw ValidationError("sgns: epochs must be >= 1");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw ValidationError("sgns: learning rate must be >= 0");
  if (!(min_lr_ratio >= 0.0 && min_lr_ratio <= 1.0)) throw ValidationError("sgns: min_lr_ratio must lie in [0,1]");
  if (!(power >= 0.0 && power <= 1.0)) throw ValidationError("sgns: power must lie in [0,1]");
  if (mode == WorkerMode::Racy && workers < 1) throw ValidationError("sgns: workers must be >= 1");
}

namespace {

struct NegativeSampler {
  std::vector<double> cdf;

  NegativeSampler(std::span<const std::uint64_t> counts, double power) {
    cdf.reserve(counts.size());
    double acc = 0.0;
    for (auto c : counts) {
      acc += c == 0 ? 0.0 : std::pow(static_cast<double>(c), power);
      cdf.push_back(acc);
    }
    if (acc <= 0.0) throw ValidationError("sgns: no items to sample negatives from");
  }

  ItemId draw(Rng& rng) const {
    const double u = uniform01(rng) * cdf.back();
    auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    return static_cast<ItemId>(std::min<std::size_t>(static_cast<std::size_t>(it - cdf.begin()), cdf.size() - 1));
  }
};

struct SgdStep {
  const simd::Kernels& K;
  const NegativeSampler& neg;
  std::uint32_t k;
  std::size_t d;
  std::vector<double> grad;

  // One positive with k negatives; returns the sampled loss before the update.
  double operator()(Matrix& Z, Matrix& Zt, ItemId c, ItemId x, double lr, Rng& rng) {
    double* zc = Z.row(c).data();
    std::fill(grad.begin(), grad.end(), 0.0);
    double loss = 0.0;
    auto update = [&](ItemId target, double label) {
      double* zt = Zt.row(target).data();
      const double s = K.dot(zc, zt, d);
      loss -= label > 0.0 ? log_sigmoid(s) : log_sigmoid(-s);
      const double g = lr * (label - sigmoid(s));
      K.axpy(g, zt, grad.data(), d);
      K.axpy(g, zc, zt, d);
    };
    update(x, 1.0);
    for (std::uint32_t m = 0; m < k; ++m) {
      const ItemId target = neg.draw(rng);
      if (target == c) continue;
      update(target, 0.0);
    }
    K.axpy(1.0, grad.data(), zc, d);
    return loss;
  }
};

}  // namespace

SgnsResult train_sgns(const catalog::PairStream& stream, const CooccurrenceTable& table, const SgnsConfig& config,
                      const EmbeddingPair* init) {
  config.validate();
  if (stream.pairs.empty()) throw ValidationError("sgns: empty pair stream");
  if (table.n() == 0) throw ValidationError("sgns: empty table");
  const std::size_t vocab = table.num_items();
  for (const auto& p : stream.pairs) {
    if (p.center >= vocab || p.context >= vocab) throw ValidationError("sgns: pair index out of range");
  }

  SgnsResult result;
  result.pair = init ? *init : init_embeddings(vocab, config.dim, config.seed);
  if (result.pair.size() != vocab || result.pair.dim() != config.dim) {
    throw ValidationError("sgns: initial embeddings do not match the vocabulary or dimension");
  }
  Matrix& Z = result.pair.Z;
  Matrix& Zt = result.pair.Zt;
  const NegativeSampler sampler(table.item_counts(), config.power);
  const bool both = table.symmetric();
  const std::size_t per_epoch = stream.pairs.size() * (both ? 2 : 1);
  const double total = static_cast<double>(per_epoch) * config.epochs;
  const double lr0 = config.learning_rate;
  auto rate = [&](double done) { return lr0 * std::max(config.min_lr_ratio, 1.0 - done / total); };

  std::vector<std::size_t> order(stream.pairs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng shuffle_rng(derive_seed(config.seed, "sgns-shuffle"));

  const unsigned workers = config.mode == WorkerMode::Racy ? std::max(1u, config.workers) : 1u;
  for (std::uint32_t epoch = 0; epoch < config.epochs; ++epoch) {
    for (std::size_t a = order.size(); a > 1; --a) std::swap(order[a - 1], order[uniform_index(shuffle_rng, a)]);
    const double epoch_base = static_cast<double>(epoch) * static_cast<double>(per_epoch);
    std::vector<double> losses(workers, 0.0);
    auto work = [&](unsigned w) {
      Rng rng(derive_seed(config.seed, epoch + 1, w));
      SgdStep step{simd::active(), sampler, config.k, config.dim, std::vector<double>(config.dim)};
      const std::size_t begin = order.size() * w / workers;
      const std::size_t end = order.size() * (w + 1) / workers;
      double done = epoch_base + static_cast<double>(begin * (both ? 2 : 1));
      double loss = 0.0;
      for (std::size_t m = begin; m < end; ++m) {
        const auto& p = stream.pairs[order[m]];
        loss += step(Z, Zt, p.center, p.context, rate(done), rng);
        done += 1.0;
        if (both) {
          loss += step(Z, Zt, p.context, p.center, rate(done), rng);
          done += 1.0;
        }
      }
      losses[w] = loss;
    };
    if (workers == 1) {
      work(0);
    } else {
      std::vector<std::thread> pool;
      for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work, w);
      for (auto& th : pool) th.join();
    }
    const double mean = std::accumulate(losses.begin(), losses.end(), 0.0) / static_cast<double>(per_epoch);
    if (!std::isfinite(mean) || !result.pair.finite()) {
      throw ComputeError("sgns diverged in epoch " + std::to_string(epoch + 1) +
                         " (non-finite values); reduce the learning rate");
    }
    result.loss_trace.push_back(mean);
  }
  return result;
}

// LDR training --------------------------------------------------------------

namespace {

struct Csr {
  std::vector<std::size_t> offsets;
  std::vector<ItemId> cols;
  std::vector<double> weights;
  std::vector<double> targets;
};

// Rows of (col, weight, target) restricted to pairs with a stored estimate;
// `transpose` builds the column view used by the context-side update.
Csr observed_rows(const RelatednessEstimate& est, const FactorizationWeights& w, bool transpose) {
  const std::size_t n = w.num_items();
  std::vector<std::vector<std::tuple<ItemId, double, double>>> rows(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto cols = w.row_cols(static_cast<ItemId>(i));
    auto ws = w.row_weights(static_cast<ItemId>(i));
    for (std::size_t m = 0; m < cols.size(); ++m) {
      auto r = est.value(static_cast<ItemId>(i), cols[m]);
      if (!r) continue;
      if (transpose) {
        rows[cols[m]].emplace_back(static_cast<ItemId>(i), ws[m], *r);
      } else {
        rows[i].emplace_back(cols[m], ws[m], *r);
      }
    }
  }
  Csr out;
  out.offsets.assign(1, 0);
  for (auto& r : rows) {
    for (auto [c, wt, t] : r) {
      out.cols.push_back(c);
      out.weights.push_back(wt);
      out.targets.push_back(t);
    }
    out.offsets.push_back(out.cols.size());
  }
  return out;
}

// Updates every row of `A` against the fixed `B` using the rows of `csr`.
void ldr_half_step(Matrix& A, const Matrix& B, const Csr& csr, LdrSolver solver, double ridge) {
  const auto& K = simd::active();
  const auto d = static_cast<std::size_t>(A.cols());
  for (Eigen::Index i = 0; i < A.rows(); ++i) {
    const std::size_t begin = csr.offsets[i], end = csr.offsets[i + 1];
    if (begin == end) continue;
    double* a = A.row(i).data();
    if (solver == LdrSolver::GradientDescent) {
      Vector g = Vector::Zero(static_cast<Eigen::Index>(d));
      double lip = 0.0;
      for (std::size_t m = begin; m < end; ++m) {
        const double* b = B.row(csr.cols[m]).data();
        const double err = 2.0 * (K.dot(a, b, d) - csr.targets[m]);
        K.axpy(csr.weights[m] * err, b, g.data(), d);
        lip += 2.0 * csr.weights[m] * K.dot(b, b, d);
      }
      if (lip > 0.0) K.axpy(-1.0 / lip, g.data(), a, d);
    } else {
      Eigen::MatrixXd G = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
      Vector rhs = Vector::Zero(static_cast<Eigen::Index>(d));
      for (std::size_t m = begin; m < end; ++m) {
        const auto b = B.row(csr.cols[m]).transpose();
        G.noalias() += csr.weights[m] * b * b.transpose();
        rhs.noalias() += csr.weights[m] * csr.targets[m] * b;
      }
      const double jitter = ridge * (G.trace() / static_cast<double>(d)) + 1e-300;
      G.diagonal().array() += jitter;
      A.row(i) = G.ldlt().solve(rhs).transpose();
    }
  }
}

}  // namespace

LdrResult train_ldr(const RelatednessEstimate& est, const FactorizationWeights& weights, const LdrConfig& config) {
  if (config.dim < 1) throw ValidationError("ldr: dim must be >= 1");
  if (weights.num_items() != est.num_items()) throw ValidationError("ldr: weights and estimate sizes differ");
  const Csr rows = observed_rows(est, weights, false);
  const Csr cols = observed_rows(est, weights, true);
  if (rows.cols.empty()) throw ValidationError("ldr: no observed pairs");
  LdrResult result;
  result.pair = init_embeddings(est.num_items(), config.dim, config.seed);
  for (std::uint32_t it = 0; it < config.iterations; ++it) {
    ldr_half_step(result.pair.Z, result.pair.Zt, rows, config.solver, config.ridge);
    ldr_half_step(result.pair.Zt, result.pair.Z, cols, config.solver, config.ridge);
    const double loss = ldr_loss(result.pair, est, weights);
    if (!std::isfinite(loss) || !result.pair.finite()) {
      throw ComputeError("ldr diverged at iteration " + std::to_string(it + 1));
    }
    result.loss_trace.push_back(loss);
  }
  return result;
}

}  // namespace relana::embed
