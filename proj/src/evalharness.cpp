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

#include "relana/evalharness.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <thread>
#include <unordered_set>

#include "relana/error.hpp"
#include "relana/simd.hpp"

namespace relana::evalharness {

SplitSpec leave_last_split(const catalog::InteractionLog& log) {
  SplitSpec out;
  for (auto stream : log.user_streams()) {
    if (stream.size() < 3) {
      ++out.excluded_users;
      continue;
    }
    UserSplit u;
    u.user = stream.front().user;
    for (std::size_t t = 0; t + 2 < stream.size(); ++t) u.train.push_back(stream[t].item);
    u.valid = stream[stream.size() - 2].item;
    u.test = stream.back().item;
    out.users.push_back(std::move(u));
  }
  return out;
}

namespace {

std::vector<double> all_scores(std::span<const double> query, const Matrix& emb) {
  if (static_cast<Eigen::Index>(query.size()) != emb.cols()) throw ValidationError("query dimension differs from embedding");
  std::vector<double> s(static_cast<std::size_t>(emb.rows()));
  simd::active().gemv_rows(emb.data(), s.size(), static_cast<std::size_t>(emb.cols()), query.data(), query.size(),
                           s.data());
  return s;
}

bool ranks_before(double sa, ItemId a, double sb, ItemId b) { return sa != sb ? sa > sb : a < b; }

}  // namespace

std::vector<ItemId> rank_candidates(std::span<const double> query, const Matrix& emb, std::span<const ItemId> exclude) {
  const auto scores = all_scores(query, emb);
  std::vector<bool> skip(scores.size(), false);
  for (auto e : exclude) {
    if (e < skip.size()) skip[e] = true;
  }
  std::vector<ItemId> out;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!skip[i]) out.push_back(static_cast<ItemId>(i));
  }
  std::sort(out.begin(), out.end(), [&](ItemId a, ItemId b) { return ranks_before(scores[a], a, scores[b], b); });
  return out;
}

RankingMetrics ranking_metrics(std::size_t position, std::size_t count, std::size_t k) {
  if (count < 2) throw ValidationError("ranking metrics need at least two candidates");
  if (position < 1 || position > count) throw ValidationError("positive position out of range");
  RankingMetrics m;
  m.auc = static_cast<double>(count - position) / static_cast<double>(count - 1);
  m.ndcg = 1.0 / std::log2(1.0 + static_cast<double>(position));
  m.recall_at_k = position <= k ? 1.0 : 0.0;
  m.ndcg_at_k = position <= k ? m.ndcg : 0.0;
  return m;
}

std::size_t position_of(ItemId positive, std::span<const ItemId> candidates, std::span<const double> query,
                        const Matrix& emb) {
  const auto d = static_cast<std::size_t>(emb.cols());
  const auto& K = simd::active();
  const double sp = K.dot(query.data(), emb.row(positive).data(), d);
  std::size_t before = 0, seen = 0;
  for (auto c : candidates) {
    if (c == positive) {
      ++seen;
      continue;
    }
    if (ranks_before(K.dot(query.data(), emb.row(c).data(), d), c, sp, positive)) ++before;
  }
  if (seen != 1) throw ValidationError("candidate set must contain the positive exactly once");
  return before + 1;
}

MetricSummary summarize(std::span<const double> values) {
  MetricSummary s;
  s.runs = values.size();
  if (values.empty()) return s;
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  if (values.size() > 1) {
    double v = 0.0;
    for (double x : values) v += (x - s.mean) * (x - s.mean);
    s.sd = std::sqrt(v / static_cast<double>(values.size() - 1));
  }
  return s;
}

RankingMetrics evaluate_recommendation(const SplitSpec& split, const Matrix& emb, const RecommendationOptions& opts) {
  if (split.users.empty()) throw ValidationError("no evaluable users");
  const auto num_items = static_cast<std::size_t>(emb.rows());
  std::vector<RankingMetrics> per_user(split.users.size());
  const unsigned threads = std::max(1u, std::min<unsigned>(opts.threads, static_cast<unsigned>(split.users.size())));

  auto work = [&](unsigned shard) {
    std::vector<char> in_history(num_items, 0);
    std::vector<ItemId> candidates;
    for (std::size_t u = split.users.size() * shard / threads; u < split.users.size() * (shard + 1) / threads; ++u) {
      const auto& us = split.users[u];
      for (auto i : us.train) in_history[i] = 1;
      in_history[us.test] = 0;
      candidates.clear();
      if (opts.sampled_negatives == 0) {
        for (std::size_t i = 0; i < num_items; ++i) {
          if (!in_history[i]) candidates.push_back(static_cast<ItemId>(i));
        }
      } else {
        Rng rng(derive_seed(opts.seed, u, 0x5a));
        std::vector<ItemId> pool;
        for (std::size_t i = 0; i < num_items; ++i) {
          if (!in_history[i] && i != us.test) pool.push_back(static_cast<ItemId>(i));
        }
        const std::size_t take = std::min(opts.sampled_negatives, pool.size());
        for (std::size_t m = 0; m < take; ++m) {
          std::swap(pool[m], pool[m + uniform_index(rng, pool.size() - m)]);
          candidates.push_back(pool[m]);
        }
        candidates.push_back(us.test);
      }
      const std::span<const double> query(emb.row(us.valid).data(), static_cast<std::size_t>(emb.cols()));
      per_user[u] = ranking_metrics(position_of(us.test, candidates, query, emb), candidates.size(), opts.k);
      for (auto i : us.train) in_history[i] = 0;
    }
  };
  if (threads == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(work, t);
    for (auto& th : pool) th.join();
  }
  RankingMetrics mean;
  for (const auto& m : per_user) {
    mean.auc += m.auc;
    mean.ndcg += m.ndcg;
    mean.recall_at_k += m.recall_at_k;
    mean.ndcg_at_k += m.ndcg_at_k;
  }
  const double n = static_cast<double>(per_user.size());
  mean.auc /= n;
  mean.ndcg /= n;
  mean.recall_at_k /= n;
  mean.ndcg_at_k /= n;
  return mean;
}

RankingReport aggregate(std::span<const RankingMetrics> reps, std::size_t k, std::size_t queries) {
  std::vector<double> a, b, c, d;
  for (const auto& r : reps) {
    a.push_back(r.auc);
    b.push_back(r.ndcg);
    c.push_back(r.recall_at_k);
    d.push_back(r.ndcg_at_k);
  }
  RankingReport out;
  out.auc = summarize(a);
  out.ndcg = summarize(b);
  out.recall_at_k = summarize(c);
  out.ndcg_at_k = summarize(d);
  out.k = k;
  out.queries = queries;
  return out;
}

// Classification -------------------------------------------------------------

StratifiedSplit stratified_split(std::span<const std::uint32_t> labels, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ValidationError("train fraction must lie in (0,1)");
  const std::uint32_t classes = labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
  std::vector<std::vector<std::size_t>> by_class(classes);
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  StratifiedSplit out;
  Rng rng(derive_seed(seed, "stratified-split"));
  for (auto& members : by_class) {
    for (std::size_t a = members.size(); a > 1; --a) std::swap(members[a - 1], members[uniform_index(rng, a)]);
    auto cut = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(members.size())));
    if (members.size() >= 2) cut = std::clamp<std::size_t>(cut, 1, members.size() - 1);
    out.train.insert(out.train.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(cut));
    out.test.insert(out.test.end(), members.begin() + static_cast<std::ptrdiff_t>(cut), members.end());
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

namespace {

Eigen::VectorXd features(const Matrix& X, std::size_t row, bool intercept) {
  Eigen::VectorXd f(X.cols() + (intercept ? 1 : 0));
  f.head(X.cols()) = X.row(static_cast<Eigen::Index>(row)).transpose();
  if (intercept) f(X.cols()) = 1.0;
  return f;
}

Eigen::VectorXd softmax(const Eigen::VectorXd& logits) {
  const double m = logits.maxCoeff();
  Eigen::VectorXd e = (logits.array() - m).exp();
  return e / e.sum();
}

void check_classes(std::span<const std::uint32_t> labels, std::size_t num_classes) {
  if (num_classes < 2) throw ValidationError("classification needs at least two classes");
  for (auto l : labels) {
    if (l >= num_classes) throw ValidationError("label out of range");
  }
}

}  // namespace

Eigen::VectorXd SoftmaxModel::probabilities(std::span<const double> x) const {
  Eigen::VectorXd f(theta.rows());
  for (std::size_t c = 0; c < x.size(); ++c) f(static_cast<Eigen::Index>(c)) = x[c];
  if (intercept) f(theta.rows() - 1) = 1.0;
  return softmax(theta.transpose() * f);
}

std::uint32_t SoftmaxModel::predict(std::span<const double> x) const {
  const Eigen::VectorXd p = probabilities(x);
  Eigen::Index arg = 0;
  for (Eigen::Index c = 1; c < p.size(); ++c) {
    if (p(c) > p(arg)) arg = c;
  }
  return static_cast<std::uint32_t>(arg);
}

double softmax_loss(const Eigen::MatrixXd& theta, const Matrix& X, std::span<const std::uint32_t> labels,
                    std::span<const std::size_t> rows, std::size_t num_classes, double l2, bool intercept) {
  double loss = 0.0;
  for (auto r : rows) {
    const Eigen::VectorXd logits = theta.transpose() * features(X, r, intercept);
    const double m = logits.maxCoeff();
    loss += m + std::log((logits.array() - m).exp().sum()) - logits(labels[r]);
  }
  loss /= static_cast<double>(rows.size());
  const Eigen::Index w_rows = X.cols();
  loss += 0.5 * l2 * theta.topRows(w_rows).squaredNorm();
  (void)num_classes;
  return loss;
}

Eigen::MatrixXd softmax_gradient(const Eigen::MatrixXd& theta, const Matrix& X, std::span<const std::uint32_t> labels,
                                 std::span<const std::size_t> rows, std::size_t num_classes, double l2, bool intercept) {
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(theta.rows(), static_cast<Eigen::Index>(num_classes));
  for (auto r : rows) {
    const Eigen::VectorXd f = features(X, r, intercept);
    Eigen::VectorXd p = softmax(theta.transpose() * f);
    p(labels[r]) -= 1.0;
    g.noalias() += f * p.transpose();
  }
  g /= static_cast<double>(rows.size());
  g.topRows(X.cols()) += l2 * theta.topRows(X.cols());
  return g;
}

SoftmaxModel train_softmax_classifier(const Matrix& X, std::span<const std::uint32_t> labels,
                                      std::span<const std::size_t> rows, std::size_t num_classes,
                                      const SoftmaxOptions& opts) {
  check_classes(labels, num_classes);
  if (rows.empty()) throw ValidationError("no training rows");
  SoftmaxModel model;
  model.intercept = opts.intercept;
  model.theta = Eigen::MatrixXd::Zero(X.cols() + (opts.intercept ? 1 : 0), static_cast<Eigen::Index>(num_classes));
  double lr = opts.learning_rate;
  double loss = softmax_loss(model.theta, X, labels, rows, num_classes, opts.l2, opts.intercept);
  model.loss_trace.push_back(loss);
  for (std::uint32_t e = 0; e < opts.epochs; ++e) {
    const Eigen::MatrixXd g = softmax_gradient(model.theta, X, labels, rows, num_classes, opts.l2, opts.intercept);
    // Backtracking keeps the trace non-increasing.
    while (true) {
      const Eigen::MatrixXd next = model.theta - lr * g;
      const double nl = softmax_loss(next, X, labels, rows, num_classes, opts.l2, opts.intercept);
      if (std::isfinite(nl) && nl <= loss) {
        model.theta = next;
        loss = nl;
        break;
      }
      lr *= 0.5;
      if (lr < 1e-12) throw ComputeError("softmax training diverged");
    }
    model.loss_trace.push_back(loss);
  }
  return model;
}

F1 f1_scores(std::span<const std::uint32_t> predictions, std::span<const std::uint32_t> labels,
             std::size_t num_classes) {
  if (predictions.size() != labels.size()) throw ValidationError("predictions and labels differ in length");
  std::vector<double> tp(num_classes, 0.0), fp(num_classes, 0.0), fn(num_classes, 0.0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (predictions[i] >= num_classes || labels[i] >= num_classes) throw ValidationError("class index out of range");
    if (predictions[i] == labels[i]) {
      tp[labels[i]] += 1.0;
    } else {
      fp[predictions[i]] += 1.0;
      fn[labels[i]] += 1.0;
    }
  }
  F1 out;
  const double TP = std::accumulate(tp.begin(), tp.end(), 0.0);
  const double FP = std::accumulate(fp.begin(), fp.end(), 0.0);
  const double FN = std::accumulate(fn.begin(), fn.end(), 0.0);
  out.micro = TP + FP + FN > 0.0 ? 2.0 * TP / (2.0 * TP + FP + FN) : 0.0;
  double macro = 0.0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    const double denom = 2.0 * tp[c] + fp[c] + fn[c];
    macro += denom > 0.0 ? 2.0 * tp[c] / denom : 0.0;
  }
  out.macro = num_classes > 0 ? macro / static_cast<double>(num_classes) : 0.0;
  return out;
}

F1 evaluate_classification(const Matrix& X, std::span<const std::uint32_t> labels, std::size_t num_classes,
                           const SoftmaxOptions& opts) {
  check_classes(labels, num_classes);
  if (static_cast<std::size_t>(X.rows()) != labels.size()) throw ValidationError("feature rows differ from labels");
  const auto split = stratified_split(labels, 0.8, opts.seed);
  Matrix F = X;
  if (opts.standardize) {
    for (Eigen::Index c = 0; c < F.cols(); ++c) {
      double m = 0.0, v = 0.0;
      for (auto r : split.train) m += F(static_cast<Eigen::Index>(r), c);
      m /= static_cast<double>(split.train.size());
      for (auto r : split.train) v += std::pow(F(static_cast<Eigen::Index>(r), c) - m, 2);
      const double sd = std::sqrt(v / static_cast<double>(split.train.size()));
      F.col(c).array() -= m;
      if (sd > 0.0) F.col(c) /= sd;
    }
  }
  const auto model = train_softmax_classifier(F, labels, split.train, num_classes, opts);
  std::vector<std::uint32_t> pred, truth;
  for (auto r : split.test) {
    pred.push_back(model.predict({F.row(static_cast<Eigen::Index>(r)).data(), static_cast<std::size_t>(F.cols())}));
    truth.push_back(labels[r]);
  }
  return f1_scores(pred, truth, num_classes);
}

// Carts ---------------------------------------------------------------------

std::vector<CartSnapshot> cart_snapshots(const catalog::InteractionLog& log) {
  std::vector<CartSnapshot> out;
  for (auto session : log.sessions()) {
    std::vector<ItemId> items;
    for (const auto& r : session) {
      if (std::find(items.begin(), items.end(), r.item) == items.end()) items.push_back(r.item);
    }
    for (std::size_t t = 1; t < items.size(); ++t) {
      out.push_back({std::vector<ItemId>(items.begin(), items.begin() + static_cast<std::ptrdiff_t>(t)), items[t]});
    }
  }
  return out;
}

CartStrategy parse_strategy(std::string_view name) {
  if (name == "random") return CartStrategy::Random;
  if (name == "recent") return CartStrategy::Recent;
  if (name == "oracle") return CartStrategy::Oracle;
  if (name == "add") return CartStrategy::Add;
  if (name == "attention") return CartStrategy::Attention;
  throw ValidationError("unknown cart strategy '" + std::string(name) + "'");
}

std::string_view strategy_name(CartStrategy s) {
  switch (s) {
    case CartStrategy::Random: return "random";
    case CartStrategy::Recent: return "recent";
    case CartStrategy::Oracle: return "oracle";
    case CartStrategy::Add: return "add";
    case CartStrategy::Attention: return "attention";
  }
  return "unknown";
}

namespace {

std::vector<ItemId> cart_candidates(const CartSnapshot& cart, std::size_t num_items) {
  std::vector<char> in_cart(num_items, 0);
  for (auto i : cart.cart) in_cart[i] = 1;
  std::vector<ItemId> out;
  for (std::size_t i = 0; i < num_items; ++i) {
    if (!in_cart[i]) out.push_back(static_cast<ItemId>(i));
  }
  return out;
}

}  // namespace

Eigen::VectorXd cart_embedding(const CartSnapshot& cart, const Matrix& emb, CartStrategy strategy, Rng* rng) {
  if (cart.cart.empty()) throw ValidationError("empty cart");
  auto row = [&](ItemId i) -> Eigen::VectorXd { return emb.row(i).transpose(); };
  switch (strategy) {
    case CartStrategy::Random: {
      if (rng == nullptr) throw ValidationError("random cart strategy needs a generator");
      return row(cart.cart[uniform_index(*rng, cart.cart.size())]);
    }
    case CartStrategy::Recent: return row(cart.cart.back());
    case CartStrategy::Oracle: {
      const auto candidates = cart_candidates(cart, static_cast<std::size_t>(emb.rows()));
      std::size_t best_pos = 0;
      ItemId best = cart.cart.front();
      for (auto i : cart.cart) {
        const auto pos = position_of(cart.label, candidates, {emb.row(i).data(), static_cast<std::size_t>(emb.cols())}, emb);
        if (best_pos == 0 || pos < best_pos) {
          best_pos = pos;
          best = i;
        }
      }
      return row(best);
    }
    case CartStrategy::Add: {
      Eigen::VectorXd s = Eigen::VectorXd::Zero(emb.cols());
      for (auto i : cart.cart) s += row(i);
      return s;
    }
    case CartStrategy::Attention: {
      const auto m = static_cast<Eigen::Index>(cart.cart.size());
      Eigen::MatrixXd Zc(m, emb.cols());
      for (Eigen::Index a = 0; a < m; ++a) Zc.row(a) = emb.row(cart.cart[static_cast<std::size_t>(a)]);
      const Eigen::VectorXd logits = (Zc * Zc.transpose()).rowwise().sum() / std::sqrt(static_cast<double>(emb.cols()));
      const Eigen::VectorXd a = softmax(logits);
      return Zc.transpose() * a;
    }
  }
  throw ValidationError("unknown cart strategy");
}

RankingMetrics evaluate_carts(std::span<const CartSnapshot> carts, const Matrix& emb, CartStrategy strategy,
                              std::size_t k, std::uint64_t seed) {
  if (carts.empty()) throw ValidationError("no cart snapshots");
  Rng rng(derive_seed(seed, "cart-random"));
  RankingMetrics mean;
  for (const auto& c : carts) {
    const Eigen::VectorXd q = cart_embedding(c, emb, strategy, &rng);
    const auto candidates = cart_candidates(c, static_cast<std::size_t>(emb.rows()));
    const auto m = ranking_metrics(position_of(c.label, candidates, {q.data(), static_cast<std::size_t>(q.size())}, emb),
                                   candidates.size(), k);
    mean.auc += m.auc;
    mean.ndcg += m.ndcg;
    mean.recall_at_k += m.recall_at_k;
    mean.ndcg_at_k += m.ndcg_at_k;
  }
  const double n = static_cast<double>(carts.size());
  mean.auc /= n;
  mean.ndcg /= n;
  mean.recall_at_k /= n;
  mean.ndcg_at_k /= n;
  return mean;
}

}  // namespace relana::evalharness
