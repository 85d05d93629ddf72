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

#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "relana/cooccur.hpp"
#include "relana/error.hpp"
#include "relana/rng.hpp"
#include "worlds.hpp"

using namespace relana;
using namespace relana::cooccur;
using catalog::ItemPair;
using catalog::PairStream;

namespace {

PairStream stream_from(std::vector<ItemPair> pairs) {
  PairStream s;
  s.pairs = std::move(pairs);
  return s;
}

PairStream random_stream(std::size_t items, std::size_t count, std::uint64_t seed) {
  Rng rng(seed);
  PairStream s;
  while (s.pairs.size() < count) {
    const auto a = static_cast<ItemId>(uniform_index(rng, items));
    const auto b = static_cast<ItemId>(uniform_index(rng, items));
    if (a != b) s.pairs.push_back({a, b});
  }
  return s;
}

/// Table with n = 100, N_0 = 10, N_1 = 20 and N_01 = c (both roles: n counts
/// each trial twice, so 50 trials).
CooccurrenceTable hand_table(std::uint64_t c) {
  std::vector<PairCount> pairs{{0, 1, c}, {0, 2, 10 - c}, {1, 2, 20 - c}, {2, 3, 50 - (10 - c) - (20 - c) - c}};
  std::vector<std::uint64_t> items(4, 0);
  std::uint64_t trials = 0;
  for (const auto& p : pairs) {
    items[p.i] += p.count;
    items[p.j] += p.count;
    trials += p.count;
  }
  return CooccurrenceTable::from_parts(RoleConvention::BothRoles, 2 * trials, trials, items, pairs);
}

}  // namespace

TEST_CASE("counting conventions on a three-pair stream") {
  const auto s = stream_from({{0, 1}, {0, 1}, {1, 0}});
  const auto both = accumulate(s, 2, RoleConvention::BothRoles);
  CHECK(both.trials() == 3);
  CHECK(both.n() == 6);
  CHECK(both.count(0, 1) == 3);
  CHECK(both.count(1, 0) == 3);
  CHECK(both.item_count(0) == 3);
  CHECK(both.item_count(1) == 3);

  const auto center = accumulate(s, 2, RoleConvention::CenterOnly);
  CHECK(center.n() == 3);
  CHECK(center.count(0, 1) == 2);
  CHECK(center.count(1, 0) == 1);
  CHECK(center.item_count(0) == 2);
  CHECK(center.item_count(1) == 1);
  both.validate();
  center.validate();
}

TEST_CASE("empty stream and index errors") {
  const auto t = accumulate(PairStream{}, 3);
  CHECK(t.n() == 0);
  CHECK_THROWS_AS(relatedness(t), ValidationError);
  CHECK_THROWS_AS(accumulate(stream_from({{0, 5}}), 3), ValidationError);
}

TEST_CASE("relatedness hand values") {
  const auto indep = hand_table(2);
  REQUIRE(indep.n() == 100);
  REQUIRE(indep.item_count(0) == 10);
  REQUIRE(indep.item_count(1) == 20);
  CHECK(relatedness(indep).value(0, 1).value() == doctest::Approx(0.0).epsilon(1e-15));

  const auto dep = hand_table(4);
  CHECK(*relatedness(dep).value(0, 1) == doctest::Approx(std::log(2.0)).epsilon(1e-14));
  CHECK(std::abs(*relatedness(dep, {minus_log_k(2.0), false}).value(1, 0)) < 1e-14);
  CHECK(relatedness(dep).missing(0, 3));
}

TEST_CASE("clip_negative keeps stored values non-negative") {
  const auto t = accumulate(random_stream(8, 500, 3), 8);
  const auto raw = relatedness(t);
  const auto clipped = relatedness(t, {0.0, true});
  bool had_negative = false;
  for (const auto& e : raw.entries()) {
    had_negative |= e.value < 0;
    CHECK(*clipped.value(e.i, e.j) == doctest::Approx(std::max(0.0, e.value)));
  }
  CHECK(had_negative);
}

TEST_CASE("merge identity, commutativity and shard equality") {
  const auto s = random_stream(20, 5000, 11);
  const auto whole = accumulate(s, 20);
  CHECK(merge(whole, CooccurrenceTable(20, RoleConvention::BothRoles)) == whole);

  PairStream a, b;
  a.pairs.assign(s.pairs.begin(), s.pairs.begin() + 1234);
  b.pairs.assign(s.pairs.begin() + 1234, s.pairs.end());
  const auto ta = accumulate(a, 20), tb = accumulate(b, 20);
  CHECK(merge(ta, tb) == merge(tb, ta));
  CHECK(merge(ta, tb) == whole);
  CHECK(accumulate(s, 20, RoleConvention::BothRoles, 4) == whole);
  CHECK(accumulate(s, 20, RoleConvention::CenterOnly, 4) == accumulate(s, 20, RoleConvention::CenterOnly, 1));
  CHECK_THROWS_AS(merge(ta, accumulate(b, 20, RoleConvention::CenterOnly)), ValidationError);

  const auto ra = relatedness(merge(ta, tb));
  const auto rw = relatedness(whole);
  for (const auto& e : rw.entries()) CHECK(*ra.value(e.i, e.j) == e.value);
}

TEST_CASE("relatedness invariant to duplicating the stream") {
  auto s = random_stream(10, 800, 5);
  const auto once = relatedness(accumulate(s, 10));
  const auto copy = s.pairs;
  s.pairs.insert(s.pairs.end(), copy.begin(), copy.end());
  const auto twice = relatedness(accumulate(s, 10));
  for (const auto& e : once.entries()) CHECK(*twice.value(e.i, e.j) == doctest::Approx(e.value).epsilon(1e-13));
}

TEST_CASE("empirical pair frequencies lie in the binomial interval of the planted model") {
  catalog::SyntheticSpec spec;
  spec.num_items = 12;
  spec.num_classes = 3;
  spec.num_records = 100000;
  const auto c = catalog::generate_synthetic(spec);
  const auto t = accumulate(catalog::sequence_pairs(c.log, {1, false}), 12);
  REQUIRE(t.trials() == 100000);
  std::size_t outside = 0, total = 0;
  for (ItemId i = 0; i < 12; ++i) {
    for (ItemId j = i + 1; j < 12; ++j) {
      const double p = c.pair_probability(i, j);
      const double se = std::sqrt(p * (1 - p) / 100000.0);
      const double got = static_cast<double>(t.count(i, j)) / 100000.0;
      ++total;
      if (std::abs(got - p) > 3 * se) ++outside;
    }
  }
  // 66 pairs at the 3-sigma level: at most a couple may fall outside by chance.
  CHECK(outside <= 2);
  CHECK(total == 66);
}

TEST_CASE("histogram: constant spike and class separation") {
  RelatednessEstimate flat(3, true, 0.0, false);
  flat.set(0, 1, 0.0);
  flat.set(0, 2, 0.0);
  flat.set(1, 2, 0.0);
  const auto h = relatedness_histogram(flat, 10);
  REQUIRE(h.counts.size() == 1);
  CHECK(h.counts[0] == 3);
  CHECK(h.negative_fraction == 0.0);

  catalog::SyntheticSpec spec;
  spec.num_items = 20;
  spec.num_classes = 2;
  spec.within_prob = 0.6;
  spec.cross_prob = 0.02;
  spec.num_records = 200000;
  const auto c = catalog::generate_synthetic(spec);
  const auto est = relatedness(accumulate(catalog::sequence_pairs(c.log, {1, false}), 20));
  double max_cross = -1e9, min_within = 1e9;
  for (const auto& e : est.entries()) {
    if (c.item_class[e.i] == c.item_class[e.j]) {
      min_within = std::min(min_within, e.value);
    } else {
      max_cross = std::max(max_cross, e.value);
    }
  }
  CHECK(min_within > 0.0);
  CHECK(max_cross < 0.0);
  const auto hist = relatedness_histogram(est, 20);
  CHECK(hist.total == est.size());
  CHECK(hist.negative_fraction > 0.3);
  CHECK(hist.negative_fraction < 0.7);
}

TEST_CASE("binary table round trip") {
  const auto t = accumulate(random_stream(15, 1000, 8), 15);
  const auto dir = std::filesystem::temp_directory_path() / "relana_test_cooccur";
  std::filesystem::create_directories(dir);
  write_table(dir / "t.rlnc", t);
  CHECK(read_table(dir / "t.rlnc") == t);
  export_csv(dir / "t.csv", t);
  CHECK(std::filesystem::file_size(dir / "t.csv") > 0);
}

TEST_CASE("dense test table is valid") {
  const auto t = testing::dense_table(6, 1, 5, 9);
  t.validate();
  CHECK(t.num_stored_pairs() == 15);
}
