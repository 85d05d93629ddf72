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
#include <fstream>
#include <map>

#include "relana/catalog.hpp"
#include "relana/cooccur.hpp"
#include "relana/error.hpp"

using namespace relana;
using namespace relana::catalog;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "relana_test_catalog";
  fs::create_directories(dir);
  return dir / name;
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

InteractionLog log_of(const std::vector<std::vector<std::vector<ItemId>>>& users) {
  InteractionLog log;
  std::uint32_t session = 0;
  for (std::size_t u = 0; u < users.size(); ++u) {
    log.user_names.push_back("u" + std::to_string(u));
    std::uint32_t pos = 0;
    for (const auto& s : users[u]) {
      log.session_names.push_back("s" + std::to_string(session));
      for (auto item : s) log.records.push_back({static_cast<std::uint32_t>(u), session, item, pos++});
      ++session;
    }
  }
  return log;
}

}  // namespace

TEST_CASE("three-row CSV for one user ingests in order") {
  const auto path = scratch("three.csv");
  write_file(path, "order_id,user_id,product_id,add_to_cart_order\n1,7,a,1\n1,7,b,2\n1,7,c,3\n");
  const auto ing = ingest_transactions(path, CsvSchema::instacart());
  CHECK(ing.vocab.size() == 3);
  REQUIRE(ing.log.records.size() == 3);
  CHECK(ing.vocab.name(ing.log.records[0].item) == "a");
  CHECK(ing.vocab.name(ing.log.records[1].item) == "b");
  CHECK(ing.vocab.name(ing.log.records[2].item) == "c");
}

TEST_CASE("ingestion errors") {
  const auto empty = scratch("empty.csv");
  write_file(empty, "");
  CHECK_THROWS_WITH_AS(ingest_transactions(empty, CsvSchema::instacart()), doctest::Contains("no records"), ValidationError);
  CHECK_THROWS_WITH_AS(ingest_transactions(scratch("absent.csv"), CsvSchema::instacart()), doctest::Contains("missing file"),
                       ValidationError);
  const auto bad = scratch("bad.csv");
  write_file(bad, "order_id,user_id,product_id,add_to_cart_order\n1,7,a,1\n1,7,b\n");
  CHECK_THROWS_WITH_AS(ingest_transactions(bad, CsvSchema::instacart()), doctest::Contains("line 3"), ValidationError);
  const auto cols = scratch("cols.csv");
  write_file(cols, "order,user_id,product_id,add_to_cart_order\n1,7,a,1\n");
  CHECK_THROWS_WITH_AS(ingest_transactions(cols, CsvSchema::instacart()), doctest::Contains("unknown column 'order_id'"),
                       ValidationError);
}

TEST_CASE("sessions are ordered by the order key and positions within them") {
  const auto path = scratch("orders.csv");
  write_file(path,
             "order_id,user_id,product_id,add_to_cart_order,n\n"
             "o2,u,x,2,2\no2,u,y,1,2\no1,u,z,1,1\n");
  auto schema = CsvSchema::instacart();
  schema.order = "n";
  const auto ing = ingest_transactions(path, schema);
  REQUIRE(ing.log.records.size() == 3);
  CHECK(ing.vocab.name(ing.log.records[0].item) == "z");
  CHECK(ing.vocab.name(ing.log.records[1].item) == "y");
  CHECK(ing.vocab.name(ing.log.records[2].item) == "x");
  CHECK(ing.log.sessions().size() == 2);
}

TEST_CASE("frequency floor drops rare items") {
  const auto path = scratch("floor.csv");
  write_file(path, "order_id,user_id,product_id,add_to_cart_order\n1,u,a,1\n1,u,b,2\n2,u,a,1\n");
  auto schema = CsvSchema::instacart();
  schema.min_frequency = 2;
  const auto ing = ingest_transactions(path, schema);
  CHECK(ing.vocab.size() == 1);
  CHECK(ing.dropped_records == 1);
}

TEST_CASE("log round trip through write_log and read_log") {
  SyntheticSpec spec;
  spec.num_items = 12;
  spec.num_records = 50;
  spec.sequence_length = 4;
  spec.session_length = 2;
  const auto c = generate_synthetic(spec);
  const auto lp = scratch("log.csv"), vp = scratch("vocab.tsv");
  write_log(lp, c.log, c.vocab);
  write_vocabulary(vp, c.vocab);
  const auto vocab = read_vocabulary(vp);
  CHECK(vocab.size() == c.vocab.size());
  const auto log = read_log(lp, vocab);
  REQUIRE(log.records.size() == c.log.records.size());
  for (std::size_t i = 0; i < log.records.size(); ++i) {
    CHECK(log.records[i].item == c.log.records[i].item);
    CHECK(log.records[i].position == c.log.records[i].position);
  }
  CHECK(log.sessions().size() == c.log.sessions().size());
}

TEST_CASE("sequence windows") {
  PairStream s;
  const std::vector<ItemId> abc{0, 1, 2};
  emit_window_pairs(abc, 2, false, s);
  REQUIRE(s.pairs.size() == 3);
  CHECK(s.pairs[0] == ItemPair{1, 0});
  CHECK(s.pairs[1] == ItemPair{2, 1});
  CHECK(s.pairs[2] == ItemPair{2, 0});

  PairStream single;
  const std::vector<ItemId> one{4};
  emit_window_pairs(one, 5, false, single);
  CHECK(single.pairs.empty());

  PairStream dup;
  const std::vector<ItemId> aab{0, 0, 1};
  emit_window_pairs(aab, 1, false, dup);
  REQUIRE(dup.pairs.size() == 1);
  CHECK(dup.pairs[0] == ItemPair{1, 0});
  CHECK(dup.suppressed == 1);

  PairStream sym;
  emit_window_pairs(abc, 1, true, sym);
  CHECK(sym.pairs.size() == 4);
}

TEST_CASE("emitted pair count equals the window formula for distinct sequences") {
  const auto log = log_of({{{0, 1, 2, 3, 4, 5, 6}}, {{7, 8, 9}}, {{3}}});
  for (std::uint32_t w : {1u, 2u, 5u, 10u}) {
    const auto s = sequence_pairs(log, {w, false});
    std::size_t expect = 0;
    for (std::size_t len : {7u, 3u, 1u}) {
      for (std::size_t t = 1; t < len; ++t) expect += std::min<std::size_t>(w, t);
    }
    CHECK(s.pairs.size() == expect);
    for (const auto& p : s.pairs) CHECK(p.center != p.context);
  }
}

TEST_CASE("session graph edge weights") {
  const auto two = log_of({{{0, 1}, {0, 1}}});
  CHECK(build_session_graph(two, 2).weight(0, 1) == 2);
  const auto lone = log_of({{{0}}});
  CHECK(build_session_graph(lone, 2).num_edges() == 0);
  const auto g = build_session_graph(log_of({{{0, 1, 2}, {1, 2}}}), 3);
  CHECK(g.weight(0, 1) == 1);
  CHECK(g.weight(0, 2) == 1);
  CHECK(g.weight(1, 2) == 2);
  CHECK(g.weight(2, 1) == 2);
  CHECK(g.total_weight() == 4);
  const auto d = build_session_graph(log_of({{{0, 0, 1}}}), 2);
  CHECK(d.weight(0, 1) == 1);
}

TEST_CASE("walk on a two-node path") {
  const WeightedGraph g(2, {{0, 1, 1}});
  const auto walk = biased_walk(g, 0, 3, 1.0, 1.0, 9);
  CHECK(walk == std::vector<ItemId>{0, 1, 0});
  WalkOptions o;
  o.walk_length = 3;
  o.walks_per_node = 1;
  o.context_size = 5;
  const auto s = random_walk_pairs(g, o);
  std::map<std::pair<ItemId, ItemId>, int> seen;
  for (const auto& p : s.pairs) ++seen[{p.center, p.context}];
  CHECK(seen.size() == 2);
  CHECK(s.suppressed > 0);
}

TEST_CASE("walks are seed-deterministic and thread-invariant; isolated nodes skipped") {
  const WeightedGraph g(5, {{0, 1, 3}, {1, 2, 1}, {2, 3, 2}, {3, 0, 1}});
  WalkOptions o;
  o.seed = 42;
  o.return_param = 0.5;
  o.inout_param = 2.0;
  const auto a = random_walk_pairs(g, o);
  const auto b = random_walk_pairs(g, o);
  CHECK(a.pairs == b.pairs);
  o.threads = 3;
  CHECK(random_walk_pairs(g, o).pairs == a.pairs);
  CHECK(a.skipped_nodes == 1);
}

TEST_CASE("p = q = 1 gives first-order transition frequencies") {
  const WeightedGraph g(4, {{0, 1, 1}, {0, 2, 1}, {0, 3, 1}, {1, 2, 1}});
  std::map<ItemId, int> from_zero;
  int total = 0;
  for (std::uint64_t s = 0; s < 6000; ++s) {
    const auto w = biased_walk(g, 1, 3, 1.0, 1.0, s);
    if (w[1] == 0) {
      ++from_zero[w[2]];
      ++total;
    }
  }
  for (ItemId n : {1u, 2u, 3u}) CHECK(static_cast<double>(from_zero[n]) / total == doctest::Approx(1.0 / 3).epsilon(0.1));
}

TEST_CASE("synthetic truth: sign by class, planted pairs independent, empirical convergence") {
  SyntheticSpec spec;
  spec.num_items = 4;
  spec.num_classes = 2;
  spec.within_prob = 0.6;
  spec.cross_prob = 0.05;
  const auto c = generate_synthetic(spec);
  CHECK(c.truth(0, 1) > 0.0);
  CHECK(c.truth(2, 3) > 0.0);
  CHECK(c.truth(0, 2) < 0.0);
  CHECK(c.truth(1, 3) < 0.0);

  SyntheticSpec planted;
  planted.num_items = 12;
  planted.num_classes = 3;
  planted.planted_independent = {{0, 1}, {4, 9}};
  planted.num_records = 1000000;
  const auto p = generate_synthetic(planted);
  CHECK(std::abs(p.truth(0, 1)) < 1e-9);
  CHECK(std::abs(p.truth(9, 4)) < 1e-9);

  const auto stream = sequence_pairs(p.log, {1, false});
  const auto est = cooccur::relatedness(cooccur::accumulate(stream, 12));
  double worst = 0.0;
  for (ItemId i = 0; i < 12; ++i) {
    for (ItemId j = i + 1; j < 12; ++j) worst = std::max(worst, std::abs(est.value_or(i, j, 0.0) - p.truth(i, j)));
  }
  CHECK(worst < 0.05);
}

TEST_CASE("pair stream binary round trip and version check") {
  PairStream s;
  s.pairs = {{1, 0}, {2, 1}, {7, 3}};
  const auto path = scratch("p.rlna");
  write_pair_stream(path, s);
  CHECK(read_pair_stream(path).pairs == s.pairs);
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(4);
    const char v[2] = {9, 0};
    f.write(v, 2);
  }
  CHECK_THROWS_AS(read_pair_stream(path), IoError);
}
