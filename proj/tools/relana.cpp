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

// relana command-line driver.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "relana/catalog.hpp"
#include "relana/checksum.hpp"
#include "relana/confidence.hpp"
#include "relana/cooccur.hpp"
#include "relana/embed.hpp"
#include "relana/error.hpp"
#include "relana/evalharness.hpp"
#include "relana/pipeline.hpp"
#include "relana/relations.hpp"
#include "relana/report.hpp"
#include "relana/rng.hpp"
#include "relana/simd.hpp"
#include "relana/spectral.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace relana;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitStage = 3;

void emit(const json& j, const std::string& out) {
  if (out.empty() || out == "-") {
    std::cout << j.dump(2) << '\n';
    return;
  }
  std::ofstream f(out);
  if (!f) throw IoError("cannot open " + out + " for writing");
  f << j.dump(2) << '\n';
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (!tok.empty()) out.push_back(tok);
  }
  return out;
}

// Item by vocabulary name when a vocabulary is loaded, else by numeric id.
catalog::ItemId resolve(const std::string& token, const catalog::Vocabulary* vocab, std::size_t num_items) {
  if (vocab != nullptr) {
    if (auto id = vocab->find(token)) return *id;
  }
  try {
    std::size_t used = 0;
    const auto v = std::stoul(token, &used);
    if (used == token.size() && v < num_items) return static_cast<catalog::ItemId>(v);
  } catch (const std::exception&) {
  }
  throw ValidationError("unknown item '" + token + "'");
}

std::vector<std::pair<catalog::ItemId, catalog::ItemId>> read_pairs_csv(const std::string& path,
                                                                        const catalog::Vocabulary* vocab,
                                                                        std::size_t num_items) {
  std::ifstream in(path);
  if (!in) throw ValidationError("missing file: " + path);
  std::vector<std::pair<catalog::ItemId, catalog::ItemId>> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto f = split_list(line);
    if (f.size() != 2) throw ValidationError(path + ": line " + std::to_string(line_no) + ": malformed row (expected i,j)");
    if (line_no == 1 && !vocab) {
      bool numeric = true;
      for (char c : f[0]) numeric = numeric && std::isdigit(static_cast<unsigned char>(c));
      if (!numeric) continue;  // header
    }
    out.emplace_back(resolve(f[0], vocab, num_items), resolve(f[1], vocab, num_items));
  }
  return out;
}

struct Common {
  unsigned threads = 1;
  std::uint64_t seed = 1;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"relana: relatedness analysis for product embeddings"};
  app.require_subcommand(1);
  app.set_version_flag("--version", pipeline::kToolVersion);
  Common common;
  auto* threads_opt = app.add_option("--threads", common.threads, "Worker threads (capped by RELANA_THREADS)");

  // synth -------------------------------------------------------------------
  auto* synth = app.add_subcommand("synth", "Generate a synthetic catalog (vocab.tsv, log.csv, labels.csv)");
  catalog::SyntheticSpec sspec;
  std::string synth_out = ".";
  synth->add_option("--items", sspec.num_items)->capture_default_str();
  synth->add_option("--classes", sspec.num_classes)->capture_default_str();
  synth->add_option("--within", sspec.within_prob)->capture_default_str();
  synth->add_option("--cross", sspec.cross_prob)->capture_default_str();
  synth->add_option("--records", sspec.num_records)->capture_default_str();
  synth->add_option("--sequence-length", sspec.sequence_length)->capture_default_str();
  synth->add_option("--session-length", sspec.session_length)->capture_default_str();
  synth->add_option("--seed", sspec.seed)->capture_default_str();
  synth->add_option("--out-dir", synth_out)->capture_default_str();

  // ingest ------------------------------------------------------------------
  auto* ingest = app.add_subcommand("ingest", "Ingest a transactions CSV into vocab.tsv and log.csv");
  std::string ingest_in, ingest_out = ".", preset = "instacart";
  catalog::CsvSchema schema;
  ingest->add_option("--in", ingest_in)->required();
  ingest->add_option("--out-dir", ingest_out)->capture_default_str();
  ingest->add_option("--schema", preset, "instacart | log")->capture_default_str();
  std::string col_session, col_user, col_item, col_position, col_order;
  ingest->add_option("--session-col", col_session);
  ingest->add_option("--user-col", col_user);
  ingest->add_option("--item-col", col_item);
  ingest->add_option("--position-col", col_position);
  ingest->add_option("--order-col", col_order);
  ingest->add_option("--session-gap", schema.session_gap);
  ingest->add_option("--min-frequency", schema.min_frequency);

  // count -------------------------------------------------------------------
  auto* count = app.add_subcommand("count", "Generate pairs and count co-occurrences");
  std::string count_vocab, count_log, count_pairs_in, count_pairs_out, count_out, mechanism = "sequence",
                                                                                  convention = "both_roles";
  catalog::SequenceOptions seq;
  catalog::WalkOptions walk;
  bool with_relatedness = false;
  count->add_option("--vocab", count_vocab);
  count->add_option("--log", count_log);
  count->add_option("--pairs", count_pairs_in, "Existing pair stream instead of --log");
  count->add_option("--pairs-out", count_pairs_out);
  count->add_option("--out", count_out)->required();
  count->add_option("--mechanism", mechanism, "sequence | graph")->capture_default_str();
  count->add_option("--convention", convention, "both_roles | center_only")->capture_default_str();
  count->add_option("--window", seq.window)->capture_default_str();
  count->add_flag("--symmetric", seq.symmetric);
  count->add_option("--walk-length", walk.walk_length)->capture_default_str();
  count->add_option("--walks-per-node", walk.walks_per_node)->capture_default_str();
  count->add_option("--p", walk.return_param)->capture_default_str();
  count->add_option("--q", walk.inout_param)->capture_default_str();
  count->add_option("--context-size", walk.context_size)->capture_default_str();
  count->add_option("--seed", walk.seed)->capture_default_str();
  std::string count_csv;
  count->add_option("--csv", count_csv, "Also export i,j,count,relatedness");
  count->add_flag("--stats", with_relatedness, "Print a relatedness histogram");

  // clean -------------------------------------------------------------------
  auto* clean = app.add_subcommand("clean", "Drop pairs that fail the confidence bound");
  std::string clean_in, clean_out, clean_report, inversion = "lower";
  double alpha = 0.6;
  clean->add_option("--alpha", alpha, "Confidence level")->capture_default_str();
  clean->add_option("--in", clean_in)->required();
  clean->add_option("--out", clean_out)->required();
  clean->add_option("--report", clean_report);
  clean->add_option("--inversion", inversion, "lower | upper")->capture_default_str();

  // train -------------------------------------------------------------------
  auto* train = app.add_subcommand("train", "Train SGNS or LDR embeddings");
  std::string method = "sgns", train_table, train_pairs, train_out, train_tsv, train_vocab, export_side = "input",
              solver = "gd";
  embed::SgnsConfig sgns;
  embed::LdrConfig ldr;
  train->add_option("--method", method, "sgns | ldr")->capture_default_str();
  train->add_option("--dim", sgns.dim)->capture_default_str();
  train->add_option("--k", sgns.k)->capture_default_str();
  train->add_option("--epochs", sgns.epochs)->capture_default_str();
  train->add_option("--lr", sgns.learning_rate)->capture_default_str();
  train->add_option("--power", sgns.power)->capture_default_str();
  train->add_option("--seed", sgns.seed)->capture_default_str();
  train->add_option("--iterations", ldr.iterations)->capture_default_str();
  train->add_option("--solver", solver, "gd | als")->capture_default_str();
  train->add_option("--table", train_table)->required();
  train->add_option("--pairs", train_pairs, "Pair stream (sgns)");
  train->add_option("--out", train_out)->required();
  train->add_option("--tsv", train_tsv);
  train->add_option("--vocab", train_vocab);
  train->add_option("--export", export_side, "input | context | average")->capture_default_str();
  bool racy = false;
  train->add_flag("--racy", racy, "Lock-free multi-worker SGD (nondeterministic)");

  // align -------------------------------------------------------------------
  auto* align = app.add_subcommand("align", "Spectral alignment between embeddings and relatedness");
  std::string align_emb, align_table, align_out;
  Eigen::Index rank = 32;
  std::uint32_t sim_trials = 0;
  double sim_sigma = 0.1;
  align->add_option("--emb", align_emb)->required();
  align->add_option("--table", align_table)->required();
  align->add_option("--rank", rank)->capture_default_str();
  align->add_option("--out", align_out);
  align->add_option("--simulate", sim_trials, "Generalization simulation trials (0: off)")->capture_default_str();
  align->add_option("--sigma", sim_sigma)->capture_default_str();
  std::uint64_t align_seed = 1;
  align->add_option("--seed", align_seed)->capture_default_str();

  // eval --------------------------------------------------------------------
  auto* eval = app.add_subcommand("eval", "Downstream evaluation");
  std::string task, split = "leave-last", eval_report, eval_log, eval_vocab, eval_labels;
  std::vector<std::string> eval_embs;
  std::size_t eval_k = 10, sampled = 0;
  std::uint32_t reps = 1;
  std::uint64_t eval_seed = 1;
  eval->add_option("task", task, "rec | cls | cart")->required()->check(CLI::IsMember({"rec", "cls", "cart"}));
  eval->add_option("--emb", eval_embs, "Embedding file(s); repetition r uses file r mod count")->required();
  eval->add_option("--split", split)->check(CLI::IsMember({"leave-last"}))->capture_default_str();
  eval->add_option("--k", eval_k)->capture_default_str();
  eval->add_option("--reps", reps)->capture_default_str();
  eval->add_option("--sampled-negatives", sampled)->capture_default_str();
  eval->add_option("--report", eval_report);
  eval->add_option("--log", eval_log);
  eval->add_option("--vocab", eval_vocab);
  eval->add_option("--labels", eval_labels);
  eval->add_option("--seed", eval_seed)->capture_default_str();

  // relations ---------------------------------------------------------------
  auto* rel = app.add_subcommand("relations", "Higher-order and functional relations");
  rel->require_subcommand(1);
  std::string rel_table, rel_vocab, rel_out, rel_emb, rel_set, rel_pairs, rel_query;
  std::uint32_t clusters = 6;
  std::uint64_t rel_seed = 1;
  auto* higher = rel->add_subcommand("higher-order", "Best item for a set");
  higher->add_option("--set", rel_set)->required();
  higher->add_option("--alpha-table,--table", rel_table)->required();
  higher->add_option("--vocab", rel_vocab);
  higher->add_option("--out", rel_out);
  auto* analogy = rel->add_subcommand("analogy", "Relation vector and analogy ranking");
  analogy->add_option("--pairs", rel_pairs)->required();
  analogy->add_option("--query", rel_query)->required();
  analogy->add_option("--table", rel_table);
  analogy->add_option("--emb", rel_emb);
  analogy->add_option("--vocab", rel_vocab);
  analogy->add_option("--out", rel_out);
  auto* cluster = rel->add_subcommand("cluster", "k-means over embedding differences of anchor pairs");
  cluster->add_option("--k", clusters)->capture_default_str();
  cluster->add_option("--emb", rel_emb)->required();
  cluster->add_option("--pairs", rel_pairs)->required();
  cluster->add_option("--vocab", rel_vocab);
  cluster->add_option("--seed", rel_seed)->capture_default_str();
  cluster->add_option("--out", rel_out);

  // run / report --------------------------------------------------------------
  auto* run = app.add_subcommand("run", "Run the full pipeline from a JSON config");
  std::string config_path;
  run->add_option("--config", config_path)->required();
  auto* rep = app.add_subcommand("report", "Render a finished run");
  std::string run_dir, format = "json", report_out;
  std::vector<std::string> sections;
  rep->add_option("--run", run_dir)->required();
  rep->add_option("--format", format, "json | csv | plot")->capture_default_str();
  rep->add_option("--out", report_out);
  rep->add_option("--section", sections);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitValidation;
  }

  const unsigned threads = pipeline::thread_cap(common.threads);
  try {
    if (*synth) {
      sspec.validate();
      const auto corpus = catalog::generate_synthetic(sspec);
      fs::create_directories(synth_out);
      catalog::write_vocabulary(fs::path(synth_out) / "vocab.tsv", corpus.vocab);
      catalog::write_log(fs::path(synth_out) / "log.csv", corpus.log, corpus.vocab);
      pipeline::write_labels(fs::path(synth_out) / "labels.csv", corpus.vocab, corpus.item_class);
      std::cout << "items " << corpus.vocab.size() << " records " << corpus.log.records.size() << '\n';
    } else if (*ingest) {
      if (preset == "log") {
        schema = catalog::log_schema();
      } else if (preset != "instacart") {
        throw ValidationError("unknown schema '" + preset + "'");
      }
      if (!col_session.empty()) schema.session = col_session == "-" ? std::string() : col_session;
      if (!col_user.empty()) schema.user = col_user;
      if (!col_item.empty()) schema.item = col_item;
      if (!col_position.empty()) schema.position = col_position;
      if (!col_order.empty()) schema.order = col_order;
      const auto ing = catalog::ingest_transactions(ingest_in, schema);
      fs::create_directories(ingest_out);
      catalog::write_vocabulary(fs::path(ingest_out) / "vocab.tsv", ing.vocab);
      catalog::write_log(fs::path(ingest_out) / "log.csv", ing.log, ing.vocab);
      std::cout << "items " << ing.vocab.size() << " records " << ing.log.records.size() << " dropped "
                << ing.dropped_records << '\n';
    } else if (*count) {
      catalog::PairStream stream;
      std::size_t num_items = 0;
      if (!count_pairs_in.empty()) {
        stream = catalog::read_pair_stream(count_pairs_in);
        if (count_vocab.empty()) {
          for (const auto& p : stream.pairs) num_items = std::max<std::size_t>(num_items, std::max(p.center, p.context) + 1);
        }
      } else if (count_log.empty() || count_vocab.empty()) {
        throw ValidationError("count needs --log and --vocab, or --pairs");
      }
      if (!count_vocab.empty()) {
        const auto vocab = catalog::read_vocabulary(count_vocab);
        num_items = vocab.size();
        if (count_pairs_in.empty()) {
          const auto log = catalog::read_log(count_log, vocab);
          if (mechanism == "sequence") {
            stream = catalog::sequence_pairs(log, seq);
          } else if (mechanism == "graph") {
            walk.threads = threads;
            stream = catalog::random_walk_pairs(catalog::build_session_graph(log, num_items), walk);
          } else {
            throw ValidationError("unknown mechanism '" + mechanism + "'");
          }
        }
      }
      if (!count_pairs_out.empty()) catalog::write_pair_stream(count_pairs_out, stream);
      const auto conv = convention == "both_roles"    ? cooccur::RoleConvention::BothRoles
                        : convention == "center_only" ? cooccur::RoleConvention::CenterOnly
                                                      : throw ValidationError("unknown convention '" + convention + "'");
      const auto table = cooccur::accumulate(stream, num_items, conv, threads);
      cooccur::write_table(count_out, table);
      if (!count_csv.empty()) cooccur::export_csv(count_csv, table);
      std::cout << "pairs " << stream.pairs.size() << " suppressed " << stream.suppressed << " distinct "
                << table.num_stored_pairs() << '\n';
      if (with_relatedness) {
        const auto h = cooccur::relatedness_histogram(cooccur::relatedness(table), 20);
        std::printf("relatedness in [%.4f, %.4f], negative fraction %.4f\n", h.lo, h.hi, h.negative_fraction);
        for (std::size_t b = 0; b < h.counts.size(); ++b) {
          std::printf("%9.4f %llu\n", h.lo + h.bin_width() * static_cast<double>(b), static_cast<unsigned long long>(h.counts[b]));
        }
      }
    } else if (*clean) {
      confidence::FilterOptions fo;
      fo.level = alpha;
      fo.threads = threads;
      if (inversion == "upper") {
        fo.inversion = confidence::Inversion::Upper;
      } else if (inversion != "lower") {
        throw ValidationError("unknown inversion '" + inversion + "'");
      }
      const auto table = cooccur::read_table(clean_in);
      const auto r = confidence::filter_false_associations(table, fo);
      cooccur::write_table(clean_out, r.table);
      if (!clean_report.empty()) {
        json drops = json::array();
        for (const auto& d : r.dropped) {
          drops.push_back({{"i", d.i}, {"j", d.j}, {"mu_hat", d.mu_hat}, {"bound", d.bound}, {"verdict", "drop"}});
        }
        emit({{"level", alpha}, {"examined", r.examined}, {"dropped", r.dropped.size()}, {"pairs", drops}}, clean_report);
      }
      std::cout << "examined " << r.examined << " dropped " << r.dropped.size() << '\n';
    } else if (*train) {
      const auto table = cooccur::read_table(train_table);
      const auto side = export_side == "input"     ? embed::ExportSide::Input
                        : export_side == "context" ? embed::ExportSide::Context
                        : export_side == "average" ? embed::ExportSide::Average
                                                   : throw ValidationError("unknown export side '" + export_side + "'");
      embed::EmbeddingPair pair;
      std::vector<double> trace;
      if (method == "sgns") {
        if (train_pairs.empty()) throw ValidationError("sgns needs --pairs");
        if (racy) {
          sgns.mode = embed::WorkerMode::Racy;
          sgns.workers = threads;
        }
        auto r = embed::train_sgns(pipeline::restrict_stream(catalog::read_pair_stream(train_pairs), table), table, sgns);
        pair = std::move(r.pair);
        trace = std::move(r.loss_trace);
      } else if (method == "ldr") {
        ldr.dim = sgns.dim;
        ldr.seed = sgns.seed;
        if (solver == "als") {
          ldr.solver = embed::LdrSolver::AlternatingLeastSquares;
        } else if (solver != "gd") {
          throw ValidationError("unknown solver '" + solver + "'");
        }
        auto r = embed::train_ldr(cooccur::relatedness(table, {0.0, true}), embed::factorization_weights(table, sgns.k), ldr);
        pair = std::move(r.pair);
        trace = std::move(r.loss_trace);
      } else {
        throw ValidationError("unknown method '" + method + "'");
      }
      const auto m = embed::exported(pair, side);
      embed::write_rlne(train_out, m);
      if (!train_tsv.empty()) {
        if (train_vocab.empty()) throw ValidationError("--tsv needs --vocab");
        embed::write_tsv(train_tsv, m, catalog::read_vocabulary(train_vocab));
      }
      std::cout << "loss";
      for (double l : trace) std::printf(" %.6g", l);
      std::cout << "\nchecksum " << checksum_file(train_out) << '\n';
    } else if (*align) {
      const auto emb = embed::read_rlne(align_emb);
      const auto table = cooccur::read_table(align_table);
      const Eigen::MatrixXd X = spectral::relatedness_matrix(cooccur::relatedness(table, {0.0, true}));
      if (X.rows() != emb.rows()) throw ValidationError("embedding rows differ from the table's item count");
      const auto bx = spectral::left_singular_basis(X, rank, {}, spectral::BasisSource::Relatedness);
      const auto bz = spectral::left_singular_basis(Eigen::MatrixXd(emb), std::min<Eigen::Index>(rank, emb.cols()), {},
                                                    spectral::BasisSource::Embedding);
      json out = {{"rank", rank},
                  {"alignment", spectral::alignment_score(bz, bx)},
                  {"max_principal_angle", bz.rank() == bx.rank() ? spectral::max_principal_angle(bz, bx) : -1.0},
                  {"relatedness_singular_values", std::vector<double>(bx.singular_values.begin(), bx.singular_values.end())},
                  {"embedding_singular_values", std::vector<double>(bz.singular_values.begin(), bz.singular_values.end())}};
      if (sim_trials > 0) {
        spectral::GeneralizationSim sim;
        sim.theta_covariance = Eigen::MatrixXd::Identity(rank, rank);
        sim.noise_sigma = sim_sigma;
        sim.trials = sim_trials;
        sim.seed = align_seed;
        const auto r = spectral::simulate_generalization(X, Eigen::MatrixXd(emb), sim);
        json trials = json::array();
        for (std::size_t t = 0; t < r.gaps.size(); ++t) trials.push_back({{"trial", t}, {"gap", r.gaps[t]}});
        out["simulation"] = {{"avg_gap", r.avg_gap}, {"gap_se", r.gap_se}, {"bound", r.bound_value},
                             {"alignment", r.alignment}, {"trials", trials}};
      }
      emit(out, align_out);
    } else if (*eval) {
      std::vector<embed::Matrix> embs;
      for (const auto& e : eval_embs) embs.push_back(embed::read_rlne(e));
      json out = {{"task", task}, {"k", eval_k}, {"reps", reps}};
      std::vector<evalharness::RankingMetrics> runs;
      if (task == "rec" || task == "cart") {
        if (eval_log.empty() || eval_vocab.empty()) throw ValidationError(task + " needs --log and --vocab");
        const auto vocab = catalog::read_vocabulary(eval_vocab);
        const auto log = catalog::read_log(eval_log, vocab);
        if (task == "rec") {
          const auto sp = evalharness::leave_last_split(log);
          for (std::uint32_t r = 0; r < reps; ++r) {
            evalharness::RecommendationOptions ro;
            ro.k = eval_k;
            ro.sampled_negatives = sampled;
            ro.seed = derive_seed(eval_seed, r);
            ro.threads = threads;
            runs.push_back(evalharness::evaluate_recommendation(sp, embs[r % embs.size()], ro));
          }
          const auto agg = evalharness::aggregate(runs, eval_k, sp.users.size());
          out["excluded_users"] = sp.excluded_users;
          out["candidates"] = sampled == 0 ? std::string("full") : "sampled-" + std::to_string(sampled);
          out["queries"] = agg.queries;
          for (auto [name, s] : {std::pair{"auc", agg.auc}, {"ndcg", agg.ndcg}, {"recall_at_k", agg.recall_at_k},
                                 {"ndcg_at_k", agg.ndcg_at_k}}) {
            out[name] = {{"mean", s.mean}, {"sd", s.sd}, {"formatted", report::format_mean_sd(s)}};
          }
        } else {
          const auto carts = evalharness::cart_snapshots(log);
          out["snapshots"] = carts.size();
          for (auto s : {evalharness::CartStrategy::Random, evalharness::CartStrategy::Recent,
                         evalharness::CartStrategy::Oracle, evalharness::CartStrategy::Add,
                         evalharness::CartStrategy::Attention}) {
            std::vector<double> recall;
            for (std::uint32_t r = 0; r < reps; ++r) {
              recall.push_back(evalharness::evaluate_carts(carts, embs[r % embs.size()], s, eval_k, derive_seed(eval_seed, r)).recall_at_k);
            }
            const auto sum = evalharness::summarize(recall);
            out["strategies"][std::string(evalharness::strategy_name(s))] = {
                {"recall_at_k", sum.mean}, {"sd", sum.sd}, {"formatted", report::format_mean_sd(sum)}};
          }
        }
      } else {
        if (eval_labels.empty() || eval_vocab.empty()) throw ValidationError("cls needs --labels and --vocab");
        const auto vocab = catalog::read_vocabulary(eval_vocab);
        const auto labels = pipeline::read_labels(eval_labels, vocab);
        std::vector<double> micro, macro;
        for (std::uint32_t r = 0; r < reps; ++r) {
          const auto& emb = embs[r % embs.size()];
          embed::Matrix X;
          std::vector<std::uint32_t> y;
          std::vector<Eigen::Index> rows;
          for (std::size_t i = 0; i < labels.size(); ++i) {
            if (labels[i] >= 0) rows.push_back(static_cast<Eigen::Index>(i));
          }
          X.resize(static_cast<Eigen::Index>(rows.size()), emb.cols());
          std::uint32_t classes = 0;
          for (std::size_t q = 0; q < rows.size(); ++q) {
            X.row(static_cast<Eigen::Index>(q)) = emb.row(rows[q]);
            y.push_back(static_cast<std::uint32_t>(labels[static_cast<std::size_t>(rows[q])]));
            classes = std::max(classes, y.back() + 1);
          }
          evalharness::SoftmaxOptions so;
          so.seed = derive_seed(eval_seed, r);
          const auto f = evalharness::evaluate_classification(X, y, classes, so);
          micro.push_back(f.micro);
          macro.push_back(f.macro);
        }
        for (auto [name, v] : {std::pair{"micro", &micro}, {"macro", &macro}}) {
          const auto s = evalharness::summarize(*v);
          out[name] = {{"mean", s.mean}, {"sd", s.sd}, {"formatted", report::format_mean_sd(s)}};
        }
      }
      emit(out, eval_report);
    } else if (*rel) {
      std::optional<catalog::Vocabulary> vocab;
      if (!rel_vocab.empty()) vocab = catalog::read_vocabulary(rel_vocab);
      const catalog::Vocabulary* vp = vocab ? &*vocab : nullptr;
      auto name = [&](catalog::ItemId i) { return vp ? vp->name(i) : std::to_string(i); };
      if (*higher) {
        const auto table = cooccur::read_table(rel_table);
        std::vector<catalog::ItemId> set;
        for (const auto& t : split_list(rel_set)) set.push_back(resolve(t, vp, table.num_items()));
        const auto cond = relations::conditional_from_table(set, table);
        const auto by_r = relations::higher_order_by_relatedness(cond.p, cooccur::relatedness(table));
        const auto by_kl = relations::higher_order_by_kl(cond.p, table);
        emit({{"set", split_list(rel_set)},
              {"conditional_mode", cond.mode == relations::ConditionalMode::AnyOf ? "any_of" : "table"},
              {"by_relatedness", {{"item", name(by_r.best)}, {"score", by_r.scores(by_r.best)}, {"unique", by_r.unique}}},
              {"by_kl", {{"item", name(by_kl.best)}, {"kl", by_kl.scores(by_kl.best)}, {"unique", by_kl.unique}}},
              {"agree", by_r.best == by_kl.best}},
             rel_out);
      } else if (*analogy) {
        if (rel_table.empty() == rel_emb.empty()) throw ValidationError("analogy needs exactly one of --table or --emb");
        std::optional<cooccur::RelatednessEstimate> est;
        embed::Matrix emb;
        std::size_t num_items = 0;
        if (!rel_table.empty()) {
          est = cooccur::relatedness(cooccur::read_table(rel_table), {0.0, true});
          num_items = est->num_items();
        } else {
          emb = embed::read_rlne(rel_emb);
          num_items = static_cast<std::size_t>(emb.rows());
        }
        relations::RelationSet rs;
        rs.pairs = read_pairs_csv(rel_pairs, vp, num_items);
        if (rs.pairs.empty()) throw ValidationError("no relation pairs");
        const auto q = resolve(rel_query, vp, num_items);
        std::vector<catalog::ItemId> candidates;
        for (std::size_t i = 0; i < num_items; ++i) {
          if (i != q) candidates.push_back(static_cast<catalog::ItemId>(i));
        }
        const auto z = est ? relations::relation_vector(rs, *est) : relations::relation_vector(rs, emb);
        const auto res = est ? relations::analogy_predict(q, z, rs.pairs.size(), *est, candidates)
                             : relations::analogy_predict(q, z, rs.pairs.size(), emb, candidates);
        json ranked = json::array();
        for (std::size_t r = 0; r < std::min<std::size_t>(10, res.ranked.size()); ++r) {
          ranked.push_back({{"item", name(res.ranked[r].item)}, {"distance", res.ranked[r].distance}});
        }
        emit({{"query", name(q)}, {"pairs", rs.pairs.size()}, {"offset_norm", res.offset_norm},
              {"residual_norm", res.residual.norm()}, {"ranked", ranked}},
             rel_out);
      } else if (*cluster) {
        const auto emb = embed::read_rlne(rel_emb);
        const auto pairs = read_pairs_csv(rel_pairs, vp, static_cast<std::size_t>(emb.rows()));
        const auto r = relations::kmeans_diffs(pairs, emb, clusters, rel_seed);
        json assign = json::array();
        for (std::size_t p = 0; p < pairs.size(); ++p) {
          assign.push_back({{"anchor", name(pairs[p].first)}, {"item", name(pairs[p].second)}, {"cluster", r.assignment[p]}});
        }
        emit({{"k", clusters}, {"objective", r.objective.empty() ? 0.0 : r.objective.back()}, {"reseeded", r.reseeded},
              {"assignments", assign}},
             rel_out);
      }
    } else if (*run) {
      auto cfg = pipeline::PipelineConfig::load(config_path);
      if (threads_opt->count() > 0) cfg.threads = common.threads;
      const auto m = pipeline::run_pipeline(cfg);
      for (const auto& s : m.stages) {
        std::printf("%-7s %8.3fs%s\n", s.name.c_str(), s.wall_seconds, s.resumed ? " (resumed)" : "");
      }
      std::cout << "manifest " << (cfg.output_dir / "manifest.json").string() << '\n';
    } else if (*rep) {
      const auto files = report::emit_report(run_dir, report::parse_format(format), report_out.empty() ? fs::path(run_dir) : fs::path(report_out),
                                             sections);
      for (const auto& f : files) std::cout << f.string() << '\n';
    }
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const pipeline::StageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitStage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitStage;
  }
  return 0;
}
