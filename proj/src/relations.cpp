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

#include "relana/relations.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "relana/error.hpp"
#include "relana/rng.hpp"
#include "relana/simd.hpp"

namespace relana::relations {

Neighborhoods session_neighborhoods(const catalog::InteractionLog& log) {
  Neighborhoods out;
  for (auto s : log.sessions()) {
    std::vector<ItemId> items;
    for (const auto& r : s) items.push_back(r.item);
    std::sort(items.begin(), items.end());
    items.erase(std::unique(items.begin(), items.end()), items.end());
    out.push_back(std::move(items));
  }
  return out;
}

namespace {

Conditional gather(std::span<const ItemId> set, const Neighborhoods& hoods, std::size_t num_items, bool joint) {
  Conditional c;
  c.mode = joint ? ConditionalMode::Joint : ConditionalMode::AnyOf;
  c.p = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(num_items));
  for (const auto& h : hoods) {
    std::size_t hits = 0;
    for (auto s : set) hits += std::binary_search(h.begin(), h.end(), s) ? 1 : 0;
    if (joint ? hits != set.size() : hits == 0) continue;
    bool contributed = false;
    for (auto e : h) {
      if (std::find(set.begin(), set.end(), e) != set.end()) continue;
      if (e >= num_items) throw ValidationError("neighbourhood item out of range");
      c.p(e) += 1.0;
      contributed = true;
    }
    if (contributed) ++c.support;
  }
  return c;
}

}  // namespace

Conditional conditional_distribution(std::span<const ItemId> set, const Neighborhoods& hoods, std::size_t num_items,
                                     bool allow_fallback) {
  if (set.empty()) throw ValidationError("conditional distribution of an empty set");
  Conditional c = gather(set, hoods, num_items, true);
  if (c.support == 0) {
    if (!allow_fallback) throw ComputeError("empty joint support");
    c = gather(set, hoods, num_items, false);
    if (c.support == 0) throw ComputeError("empty support in joint and any-of modes");
  }
  c.p /= c.p.sum();
  return c;
}

Conditional conditional_from_table(std::span<const ItemId> set, const CooccurrenceTable& table) {
  if (set.empty()) throw ValidationError("conditional distribution of an empty set");
  Conditional c;
  c.mode = set.size() == 1 ? ConditionalMode::Table : ConditionalMode::AnyOf;
  c.p = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(table.num_items()));
  for (auto s : set) {
    for (std::size_t e = 0; e < table.num_items(); ++e) {
      if (e == s) continue;
      c.p(static_cast<Eigen::Index>(e)) += static_cast<double>(table.count(s, static_cast<ItemId>(e)));
    }
  }
  const double total = c.p.sum();
  if (total <= 0.0) throw ComputeError("empty support in the table");
  c.support = static_cast<std::uint64_t>(total);
  c.p /= total;
  return c;
}

namespace {

HigherOrderResult pick(Eigen::VectorXd scores, bool maximize) {
  HigherOrderResult r;
  Eigen::Index best = 0;
  for (Eigen::Index c = 1; c < scores.size(); ++c) {
    if (maximize ? scores(c) > scores(best) : scores(c) < scores(best)) best = c;
  }
  r.best = static_cast<ItemId>(best);
  r.unique = true;
  for (Eigen::Index c = 0; c < scores.size(); ++c) {
    if (c != best && scores(c) == scores(best)) r.unique = false;
  }
  r.scores = std::move(scores);
  return r;
}

}  // namespace

HigherOrderResult higher_order_by_relatedness(const Eigen::VectorXd& cond, const RelatednessEstimate& est) {
  if (static_cast<std::size_t>(cond.size()) != est.num_items()) throw ValidationError("conditional size differs from catalog");
  Eigen::VectorXd scores = Eigen::VectorXd::Zero(cond.size());
  for (const auto& e : est.entries()) {
    scores(e.i) += cond(e.j) * e.value;
    if (est.symmetric() && e.i != e.j) scores(e.j) += cond(e.i) * e.value;
  }
  return pick(std::move(scores), true);
}

Eigen::VectorXd candidate_conditional(ItemId c, const CooccurrenceTable& table) {
  const double n = static_cast<double>(table.n());
  const double nc = static_cast<double>(table.item_count(c));
  if (nc == 0.0) throw ComputeError("candidate has no occurrences");
  Eigen::VectorXd q(static_cast<Eigen::Index>(table.num_items()));
  for (std::size_t e = 0; e < table.num_items(); ++e) {
    const auto count = e == c ? 0 : table.count(c, static_cast<ItemId>(e));
    q(static_cast<Eigen::Index>(e)) =
        count > 0 ? static_cast<double>(count) / nc : static_cast<double>(table.item_count(static_cast<ItemId>(e))) / n;
  }
  return q;
}

HigherOrderResult higher_order_by_kl(const Eigen::VectorXd& cond, const CooccurrenceTable& table, double smoothing) {
  if (static_cast<std::size_t>(cond.size()) != table.num_items()) throw ValidationError("conditional size differs from catalog");
  if (!(smoothing >= 0.0)) throw ValidationError("smoothing must be >= 0");
  Eigen::VectorXd kl = Eigen::VectorXd::Constant(cond.size(), std::numeric_limits<double>::infinity());
  for (std::size_t c = 0; c < table.num_items(); ++c) {
    if (table.item_count(static_cast<ItemId>(c)) == 0) continue;
    const Eigen::VectorXd q = candidate_conditional(static_cast<ItemId>(c), table);
    double d = 0.0;
    for (Eigen::Index e = 0; e < cond.size(); ++e) {
      if (cond(e) > 0.0) d += cond(e) * std::log(cond(e) / (q(e) + smoothing));
    }
    kl(static_cast<Eigen::Index>(c)) = d;
  }
  return pick(std::move(kl), false);
}

std::vector<ItemId> RelationSet::sources() const {
  std::vector<ItemId> out;
  for (auto [i, j] : pairs) out.push_back(i);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::vector<ItemId> RelationSet::targets() const {
  std::vector<ItemId> out;
  for (auto [i, j] : pairs) out.push_back(j);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

Eigen::VectorXd relatedness_row(const RelatednessEstimate& est, ItemId i) {
  Eigen::VectorXd row(static_cast<Eigen::Index>(est.num_items()));
  for (std::size_t e = 0; e < est.num_items(); ++e) {
    row(static_cast<Eigen::Index>(e)) = e == i ? 0.0 : est.value_or(i, static_cast<ItemId>(e), 0.0);
  }
  return row;
}

Eigen::VectorXd relation_vector(const RelationSet& rel, const RelatednessEstimate& est) {
  Eigen::VectorXd z = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(est.num_items()));
  for (auto [i, j] : rel.pairs) z += relatedness_row(est, j) - relatedness_row(est, i);
  return z;
}

Eigen::VectorXd relation_vector(const RelationSet& rel, const embed::Matrix& emb) {
  Eigen::VectorXd z = Eigen::VectorXd::Zero(emb.cols());
  for (auto [i, j] : rel.pairs) z += (emb.row(j) - emb.row(i)).transpose();
  return z;
}

namespace {

double offset_scale(std::size_t pair_count, Offset offset) {
  if (offset == Offset::Sum) return 1.0;
  return pair_count == 0 ? 0.0 : 1.0 / static_cast<double>(pair_count);
}

void sort_hits(std::vector<AnalogyHit>& hits) {
  std::sort(hits.begin(), hits.end(), [](const AnalogyHit& a, const AnalogyHit& b) {
    return a.distance != b.distance ? a.distance < b.distance : a.item < b.item;
  });
}

}  // namespace

AnalogyResult analogy_predict(ItemId i_star, const Eigen::VectorXd& z_r, std::size_t pair_count,
                              const RelatednessEstimate& est, std::span<const ItemId> candidates, Offset offset) {
  if (i_star >= est.num_items()) throw ValidationError("analogy: i* out of range");
  if (static_cast<std::size_t>(z_r.size()) != est.num_items()) throw ValidationError("analogy: z_r size differs from catalog");
  const Eigen::VectorXd shift = z_r * offset_scale(pair_count, offset);
  const Eigen::VectorXd target = relatedness_row(est, i_star) + shift;
  AnalogyResult out;
  out.offset_norm = shift.norm();
  for (auto c : candidates) out.ranked.push_back({c, (target - relatedness_row(est, c)).norm()});
  sort_hits(out.ranked);
  if (!out.ranked.empty()) out.residual = relatedness_row(est, out.ranked.front().item) - target;
  return out;
}

AnalogyResult analogy_predict(ItemId i_star, const Eigen::VectorXd& z_r, std::size_t pair_count,
                              const embed::Matrix& emb, std::span<const ItemId> candidates, Offset offset) {
  if (i_star >= emb.rows()) throw ValidationError("analogy: i* out of range");
  if (z_r.size() != emb.cols()) throw ValidationError("analogy: z_r size differs from the embedding dimension");
  const Eigen::VectorXd shift = z_r * offset_scale(pair_count, offset);
  const Eigen::VectorXd target = emb.row(i_star).transpose() + shift;
  AnalogyResult out;
  out.offset_norm = shift.norm();
  const double tn = target.norm();
  for (auto c : candidates) {
    const Eigen::VectorXd row = emb.row(c).transpose();
    const double denom = tn * row.norm();
    const double cosine = denom > 0.0 ? target.dot(row) / denom : 0.0;
    out.ranked.push_back({c, 1.0 - cosine});
  }
  sort_hits(out.ranked);
  if (!out.ranked.empty()) out.residual = emb.row(out.ranked.front().item).transpose() - target;
  return out;
}

// k-means -------------------------------------------------------------------

KMeansResult kmeans(const embed::Matrix& points, std::uint32_t K, std::uint64_t seed, std::uint32_t max_iter) {
  const auto n = static_cast<std::size_t>(points.rows());
  const auto d = static_cast<std::size_t>(points.cols());
  if (K < 1) throw ValidationError("kmeans: K must be >= 1");
  if (K > n) throw ValidationError("kmeans: K exceeds the number of points");
  const auto& kern = simd::active();
  auto dist = [&](std::size_t p, const double* c) { return kern.squared_distance(points.row(p).data(), c, d); };

  embed::Matrix centroids(K, static_cast<Eigen::Index>(d));
  Rng rng(derive_seed(seed, "kmeans++"));
  centroids.row(0) = points.row(static_cast<Eigen::Index>(uniform_index(rng, n)));
  std::vector<double> best(n, std::numeric_limits<double>::infinity());
  for (std::uint32_t c = 1; c < K; ++c) {
    double total = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
      best[p] = std::min(best[p], dist(p, centroids.row(c - 1).data()));
      total += best[p];
    }
    std::size_t chosen = 0;
    if (total > 0.0) {
      const double u = uniform01(rng) * total;
      double acc = 0.0;
      chosen = n - 1;
      for (std::size_t p = 0; p < n; ++p) {
        acc += best[p];
        if (u < acc) {
          chosen = p;
          break;
        }
      }
    } else {
      chosen = uniform_index(rng, n);
    }
    centroids.row(c) = points.row(static_cast<Eigen::Index>(chosen));
  }

  KMeansResult r;
  r.assignment.assign(n, 0);
  std::vector<double> own(n, 0.0);
  for (std::uint32_t it = 0; it < std::max(1u, max_iter); ++it) {
    bool changed = it == 0;
    for (std::size_t p = 0; p < n; ++p) {
      std::uint32_t arg = 0;
      double bd = dist(p, centroids.row(0).data());
      for (std::uint32_t c = 1; c < K; ++c) {
        const double dc = dist(p, centroids.row(c).data());
        if (dc < bd) {
          bd = dc;
          arg = c;
        }
      }
      if (arg != r.assignment[p]) changed = true;
      r.assignment[p] = arg;
      own[p] = bd;
    }
    std::vector<std::size_t> sizes(K, 0);
    for (auto a : r.assignment) ++sizes[a];
    for (std::uint32_t c = 0; c < K; ++c) {
      if (sizes[c] > 0) continue;
      const auto far = static_cast<std::size_t>(std::max_element(own.begin(), own.end()) - own.begin());
      --sizes[r.assignment[far]];
      r.assignment[far] = c;
      own[far] = 0.0;
      sizes[c] = 1;
      ++r.reseeded;
      changed = true;
    }
    centroids.setZero();
    for (std::size_t p = 0; p < n; ++p) centroids.row(r.assignment[p]) += points.row(static_cast<Eigen::Index>(p));
    for (std::uint32_t c = 0; c < K; ++c) centroids.row(c) /= static_cast<double>(sizes[c]);
    double obj = 0.0;
    for (std::size_t p = 0; p < n; ++p) obj += dist(p, centroids.row(r.assignment[p]).data());
    r.objective.push_back(obj);
    if (!changed) break;
  }
  r.centroids = centroids;
  return r;
}

KMeansResult kmeans_diffs(std::span<const std::pair<ItemId, ItemId>> anchor_pairs, const embed::Matrix& emb,
                          std::uint32_t K, std::uint64_t seed, std::uint32_t max_iter) {
  embed::Matrix diffs(static_cast<Eigen::Index>(anchor_pairs.size()), emb.cols());
  for (std::size_t m = 0; m < anchor_pairs.size(); ++m) {
    auto [a, b] = anchor_pairs[m];
    if (a >= emb.rows() || b >= emb.rows()) throw ValidationError("kmeans_diffs: pair index out of range");
    diffs.row(static_cast<Eigen::Index>(m)) = emb.row(a) - emb.row(b);
  }
  return kmeans(diffs, K, seed, max_iter);
}

double adjusted_rand_index(std::span<const std::uint32_t> a, std::span<const std::uint32_t> b) {
  if (a.size() != b.size()) throw ValidationError("adjusted_rand_index: label vectors differ in length");
  std::map<std::pair<std::uint32_t, std::uint32_t>, double> table;
  std::map<std::uint32_t, double> ra, rb;
  for (std::size_t i = 0; i < a.size(); ++i) {
    table[{a[i], b[i]}] += 1.0;
    ra[a[i]] += 1.0;
    rb[b[i]] += 1.0;
  }
  auto c2 = [](double x) { return x * (x - 1.0) / 2.0; };
  double idx = 0.0, sa = 0.0, sb = 0.0;
  for (auto& [k, v] : table) idx += c2(v);
  for (auto& [k, v] : ra) sa += c2(v);
  for (auto& [k, v] : rb) sb += c2(v);
  const double total = c2(static_cast<double>(a.size()));
  const double expected = total > 0.0 ? sa * sb / total : 0.0;
  const double max_index = 0.5 * (sa + sb);
  if (max_index == expected) return 1.0;
  return (idx - expected) / (max_index - expected);
}

}  // namespace relana::relations
