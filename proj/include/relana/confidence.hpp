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

#include "relana/cooccur.hpp"

namespace relana::confidence {

using catalog::ItemId;
using cooccur::CooccurrenceTable;

enum class Inversion : std::uint8_t { Lower = 0, Upper = 1 };

/// Bernoulli KL divergence KL(a || b) with 0 log 0 = 0. Returns +infinity when
/// b is 0 or 1 and a differs from it.
double bernoulli_kl(double a, double b);

/// Chernoff tail for a binomial proportion with null mean `null_mean` over
/// `trials` trials: P(R-hat <= -eps) <= exp(-trials KL(null e^{-eps} || null)).
double chernoff_tail(double null_mean, double trials, double epsilon);

/// Tail bound for the pair (i, j) of a table using plug-in marginals.
double tail_bound(const CooccurrenceTable& table, ItemId i, ItemId j, double epsilon);

/// Upper: max{p >= mu: KL(mu || p) <= t}. Lower: min{p <= mu: KL(mu || p) <= t}.
/// Bisection to 1e-12 absolute, at most 200 iterations.
double invert_kl(double mu_hat, double t, Inversion direction);

struct PairStatistics {
  double mu_hat = 0.0;     // N_ij / trials
  double null_mean = 0.0;  // trials-level pair probability under independence
  double trials = 0.0;
};

/// mu-hat and plug-in null mean for (i, j). `slack` inflates each marginal
/// multiplicatively before forming the null.
PairStatistics pair_statistics(const CooccurrenceTable& table, ItemId i, ItemId j, double slack = 1.0);

/// log(p_alpha / null_mean) with p_alpha = invert_kl(mu_hat, log(1/alpha)/trials).
/// Returns -infinity for the lower direction when mu_hat = 0.
double bound_on_R(const CooccurrenceTable& table, ItemId i, ItemId j, double alpha,
                  Inversion direction = Inversion::Lower, double slack = 1.0);

enum class Verdict : std::uint8_t { Keep = 0, Drop = 1 };

struct ConfidenceReport {
  ItemId i = 0;
  ItemId j = 0;
  double mu_hat = 0.0;
  double null_mean = 0.0;
  double p_alpha_lower = 0.0;
  double p_alpha_upper = 0.0;
  double bound = 0.0;  // bound on R in the configured direction
  Verdict verdict = Verdict::Keep;
};

struct FilterOptions {
  /// Confidence level c in (0, 1); the bound uses alpha = 1 - c, so a higher
  /// level widens the interval and drops more pairs.
  double level = 0.6;
  Inversion inversion = Inversion::Lower;
  double slack = 1.0;
  unsigned threads = 1;
};

struct FilterResult {
  CooccurrenceTable table;
  std::vector<ConfidenceReport> dropped;  // sorted by (i, j)
  std::size_t examined = 0;
};

/// Drops pairs whose bound on R is <= 0; marginals and n are recomputed from the
/// surviving pairs. Verdicts are evaluated against the input table.
FilterResult filter_false_associations(const CooccurrenceTable& table, const FilterOptions& opts = {});

/// Full per-pair report (kept and dropped) without modifying the table.
std::vector<ConfidenceReport> confidence_reports(const CooccurrenceTable& table, const FilterOptions& opts = {});

}  // namespace relana::confidence
