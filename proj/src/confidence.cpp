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

#include "relana/confidence.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <thread>

#include "relana/error.hpp"

namespace relana::confidence {

double bernoulli_kl(double a, double b) {
  if (!(a >= 0.0 && a <= 1.0) || !(b >= 0.0 && b <= 1.0)) throw ValidationError("bernoulli_kl: arguments must lie in [0,1]");
  constexpr double inf = std::numeric_limits<double>::infinity();
  if (b == 0.0) return a == 0.0 ? 0.0 : inf;
  if (b == 1.0) return a == 1.0 ? 0.0 : inf;
  const double t1 = a > 0.0 ? a * std::log(a / b) : 0.0;
  const double t2 = a < 1.0 ? (1.0 - a) * (std::log1p(-a) - std::log1p(-b)) : 0.0;
  return std::max(0.0, t1 + t2);
}

double chernoff_tail(double null_mean, double trials, double epsilon) {
  if (!(epsilon > 0.0)) throw ValidationError("tail bound needs epsilon > 0");
  if (!(null_mean > 0.0 && null_mean < 1.0)) throw ValidationError("tail bound needs a null mean in (0,1)");
  const double shifted = null_mean * std::exp(-epsilon);
  return std::min(1.0, std::exp(-trials * bernoulli_kl(shifted, null_mean)));
}

PairStatistics pair_statistics(const CooccurrenceTable& table, ItemId i, ItemId j, double slack) {
  if (table.trials() == 0) throw ValidationError("confidence on an empty table");
  if (i == j) throw ValidationError("confidence query needs i != j");
  const double ni = static_cast<double>(table.item_count(i)) * slack;
  const double nj = static_cast<double>(table.item_count(j)) * slack;
  if (ni == 0.0 || nj == 0.0) throw ValidationError("confidence query on an item with zero count");
  const double n = static_cast<double>(table.n());
  PairStatistics s;
  s.trials = static_cast<double>(table.trials());
  s.mu_hat = static_cast<double>(table.count(i, j)) / s.trials;
  s.null_mean = std::min(1.0, table.roles() * ni * nj / (n * n));
  return s;
}

double tail_bound(const CooccurrenceTable& table, ItemId i, ItemId j, double epsilon) {
  const auto s = pair_statistics(table, i, j);
  return chernoff_tail(s.null_mean, s.trials, epsilon);
}

double invert_kl(double mu_hat, double t, Inversion direction) {
  if (!(mu_hat >= 0.0 && mu_hat <= 1.0)) throw ValidationError("invert_kl: mu_hat must lie in [0,1]");
  if (!(t >= 0.0)) throw ValidationError("invert_kl: t must be non-negative");
  if (t == 0.0) return mu_hat;
  constexpr double tol = 1e-12;
  if (direction == Inversion::Upper) {
    if (bernoulli_kl(mu_hat, 1.0) <= t) return 1.0;
    double lo = mu_hat, hi = 1.0;  // lo feasible, hi infeasible
    for (int it = 0; it < 200 && hi - lo > tol; ++it) {
      const double mid = 0.5 * (lo + hi);
      (bernoulli_kl(mu_hat, mid) <= t ? lo : hi) = mid;
    }
    return lo;
  }
  if (bernoulli_kl(mu_hat, 0.0) <= t) return 0.0;
  double lo = 0.0, hi = mu_hat;  // lo infeasible, hi feasible
  for (int it = 0; it < 200 && hi - lo > tol; ++it) {
    const double mid = 0.5 * (lo + hi);
    (bernoulli_kl(mu_hat, mid) <= t ? hi : lo) = mid;
  }
  return hi;
}

namespace {

ConfidenceReport report_for(const CooccurrenceTable& table, ItemId i, ItemId j, double alpha, Inversion dir,
                            double slack) {
  const auto s = pair_statistics(table, i, j, slack);
  const double t = std::log(1.0 / alpha) / s.trials;
  ConfidenceReport r;
  r.i = i;
  r.j = j;
  r.mu_hat = s.mu_hat;
  r.null_mean = s.null_mean;
  r.p_alpha_lower = invert_kl(s.mu_hat, t, Inversion::Lower);
  r.p_alpha_upper = invert_kl(s.mu_hat, t, Inversion::Upper);
  const double p = dir == Inversion::Lower ? r.p_alpha_lower : r.p_alpha_upper;
  r.bound = p > 0.0 ? std::log(p / s.null_mean) : -std::numeric_limits<double>::infinity();
  r.verdict = r.bound <= 0.0 ? Verdict::Drop : Verdict::Keep;
  return r;
}

double level_to_alpha(double level) {
  if (!(level >= 0.0 && level < 1.0)) throw ValidationError("confidence level must lie in [0,1)");
  return 1.0 - level;
}

}  // namespace

double bound_on_R(const CooccurrenceTable& table, ItemId i, ItemId j, double alpha, Inversion direction,
                  double slack) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw ValidationError("alpha must lie in (0,1]");
  return report_for(table, i, j, alpha, direction, slack).bound;
}

std::vector<ConfidenceReport> confidence_reports(const CooccurrenceTable& table, const FilterOptions& opts) {
  if (table.trials() == 0) throw ValidationError("cannot filter an empty table");
  const double alpha = level_to_alpha(opts.level);
  const auto pairs = table.sorted_pairs();
  std::vector<ConfidenceReport> out(pairs.size());
  const unsigned threads = std::max(1u, std::min<unsigned>(opts.threads, static_cast<unsigned>(pairs.size() / 1024 + 1)));
  auto work = [&](unsigned s) {
    const std::size_t begin = pairs.size() * s / threads;
    const std::size_t end = pairs.size() * (s + 1) / threads;
    for (std::size_t k = begin; k < end; ++k) {
      out[k] = report_for(table, pairs[k].i, pairs[k].j, alpha, opts.inversion, opts.slack);
    }
  };
  if (threads == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (unsigned s = 0; s < threads; ++s) pool.emplace_back(work, s);
    for (auto& th : pool) th.join();
  }
  return out;
}

FilterResult filter_false_associations(const CooccurrenceTable& table, const FilterOptions& opts) {
  auto reports = confidence_reports(table, opts);
  FilterResult result;
  result.table = table;
  result.examined = reports.size();
  for (auto& r : reports) {
    if (r.verdict == Verdict::Drop) {
      result.table.erase(r.i, r.j);
      result.dropped.push_back(r);
    }
  }
  result.table.validate();
  return result;
}

}  // namespace relana::confidence
