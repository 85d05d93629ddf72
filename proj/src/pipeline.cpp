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

#include "relana/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <set>
#include <unordered_map>

#include "relana/checksum.hpp"
#include "relana/error.hpp"
#include "relana/rng.hpp"
#include "relana/spectral.hpp"

namespace relana::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void only_keys(const json& j, std::string_view where, std::initializer_list<std::string_view> allowed) {
  if (!j.is_object()) throw ValidationError("config: '" + std::string(where) + "' must be an object");
  for (const auto& [key, _] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw ValidationError("config: unknown key '" + key + "' in '" + std::string(where) + "'");
    }
  }
}

template <typename T>
void read(const json& j, const char* key, T& out, std::string_view where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ValidationError("config: bad value for '" + std::string(where) + "." + key + "'");
  }
}

std::string inversion_name(confidence::Inversion v) { return v == confidence::Inversion::Lower ? "lower" : "upper"; }
std::string side_name(embed::ExportSide s) {
  switch (s) {
    case embed::ExportSide::Input: return "input";
    case embed::ExportSide::Context: return "context";
    case embed::ExportSide::Average: return "average";
  }
  return "input";
}
std::string convention_name(cooccur::RoleConvention c) {
  return c == cooccur::RoleConvention::BothRoles ? "both_roles" : "center_only";
}
std::string solver_name(embed::LdrSolver s) { return s == embed::LdrSolver::GradientDescent ? "gd" : "als"; }

template <typename E>
E parse_enum(const std::string& text, std::string_view what, std::initializer_list<std::pair<std::string_view, E>> options) {
  for (const auto& [name, value] : options) {
    if (text == name) return value;
  }
  throw ValidationError("config: unknown " + std::string(what) + " '" + text + "'");
}

}  // namespace

bool EvalConfig::has(std::string_view task) const { return std::find(tasks.begin(), tasks.end(), task) != tasks.end(); }

unsigned thread_cap(unsigned requested) {
  unsigned n = std::max(1u, requested);
  if (const char* env = std::getenv("RELANA_THREADS"); env != nullptr && *env != '\0') {
    char* end = nullptr;
    const long cap = std::strtol(env, &end, 10);
    if (end != env && cap >= 1) n = std::min<unsigned>(n, static_cast<unsigned>(cap));
  }
  return n;
}

// Config serialisation ---------------------------------------------------------

json PipelineConfig::to_json() const {
  json planted = json::array();
  for (auto [a, b] : data.synthetic.planted_independent) planted.push_back({a, b});
  return json{
      {"data",
       {{"source", data.source},
        {"path", data.path.string()},
        {"labels", data.labels.string()},
        {"schema",
         {{"session", data.schema.session},
          {"user", data.schema.user},
          {"item", data.schema.item},
          {"position", data.schema.position},
          {"order", data.schema.order},
          {"delimiter", std::string(1, data.schema.delimiter)},
          {"session_gap", data.schema.session_gap},
          {"min_frequency", data.schema.min_frequency}}},
        {"synthetic",
         {{"num_items", data.synthetic.num_items},
          {"num_classes", data.synthetic.num_classes},
          {"within_prob", data.synthetic.within_prob},
          {"cross_prob", data.synthetic.cross_prob},
          {"num_records", data.synthetic.num_records},
          {"sequence_length", data.synthetic.sequence_length},
          {"session_length", data.synthetic.session_length},
          {"planted_independent", planted}}}}},
      {"mechanism",
       {{"kind", mechanism.kind},
        {"window", mechanism.sequence.window},
        {"symmetric", mechanism.sequence.symmetric},
        {"walk_length", mechanism.walk.walk_length},
        {"walks_per_node", mechanism.walk.walks_per_node},
        {"p", mechanism.walk.return_param},
        {"q", mechanism.walk.inout_param},
        {"context_size", mechanism.walk.context_size}}},
      {"counting", {{"convention", convention_name(convention)}}},
      {"filter",
       {{"enabled", filter.enabled},
        {"level", filter.level},
        {"inversion", inversion_name(filter.inversion)},
        {"sweep", filter.sweep}}},
      {"train",
       {{"method", train.method},
        {"dim", train.sgns.dim},
        {"k", train.sgns.k},
        {"epochs", train.sgns.epochs},
        {"lr", train.sgns.learning_rate},
        {"power", train.sgns.power},
        {"iterations", train.ldr.iterations},
        {"solver", solver_name(train.ldr.solver)},
        {"export", side_name(train.side)}}},
      {"eval",
       {{"tasks", eval.tasks},
        {"k", eval.k},
        {"reps", eval.reps},
        {"sampled_negatives", eval.sampled_negatives},
        {"l2", eval.softmax.l2},
        {"cls_epochs", eval.softmax.epochs},
        {"align_dims", eval.align_dims}}},
      {"seed", seed},
      {"threads", threads},
      {"output_dir", output_dir.string()}};
}

PipelineConfig PipelineConfig::from_json(const json& j) {
  only_keys(j, "config", {"data", "mechanism", "counting", "filter", "train", "eval", "seed", "threads", "output_dir"});
  if (!j.contains("seed")) throw ValidationError("config: 'seed' is required");
  PipelineConfig c;
  read(j, "seed", c.seed, "config");
  read(j, "threads", c.threads, "config");
  std::string out_dir;
  read(j, "output_dir", out_dir, "config");
  c.output_dir = out_dir;

  if (j.contains("data")) {
    const auto& d = j["data"];
    only_keys(d, "data", {"source", "path", "labels", "schema", "synthetic"});
    read(d, "source", c.data.source, "data");
    std::string path, labels;
    read(d, "path", path, "data");
    read(d, "labels", labels, "data");
    c.data.path = path;
    c.data.labels = labels;
    if (d.contains("schema")) {
      const auto& s = d["schema"];
      only_keys(s, "data.schema",
                {"preset", "session", "user", "item", "position", "order", "delimiter", "session_gap", "min_frequency"});
      std::string preset;
      read(s, "preset", preset, "data.schema");
      if (!preset.empty() && preset != "instacart") throw ValidationError("config: unknown schema preset '" + preset + "'");
      read(s, "session", c.data.schema.session, "data.schema");
      read(s, "user", c.data.schema.user, "data.schema");
      read(s, "item", c.data.schema.item, "data.schema");
      read(s, "position", c.data.schema.position, "data.schema");
      read(s, "order", c.data.schema.order, "data.schema");
      std::string delim = ",";
      read(s, "delimiter", delim, "data.schema");
      if (delim.size() != 1) throw ValidationError("config: delimiter must be one character");
      c.data.schema.delimiter = delim[0];
      read(s, "session_gap", c.data.schema.session_gap, "data.schema");
      read(s, "min_frequency", c.data.schema.min_frequency, "data.schema");
    }
    if (d.contains("synthetic")) {
      const auto& s = d["synthetic"];
      only_keys(s, "data.synthetic",
                {"num_items", "num_classes", "within_prob", "cross_prob", "num_records", "sequence_length",
                 "session_length", "planted_independent"});
      auto& y = c.data.synthetic;
      read(s, "num_items", y.num_items, "data.synthetic");
      read(s, "num_classes", y.num_classes, "data.synthetic");
      read(s, "within_prob", y.within_prob, "data.synthetic");
      read(s, "cross_prob", y.cross_prob, "data.synthetic");
      read(s, "num_records", y.num_records, "data.synthetic");
      read(s, "sequence_length", y.sequence_length, "data.synthetic");
      read(s, "session_length", y.session_length, "data.synthetic");
      read(s, "planted_independent", y.planted_independent, "data.synthetic");
    }
  }
  if (j.contains("mechanism")) {
    const auto& m = j["mechanism"];
    only_keys(m, "mechanism", {"kind", "window", "symmetric", "walk_length", "walks_per_node", "p", "q", "context_size"});
    read(m, "kind", c.mechanism.kind, "mechanism");
    read(m, "window", c.mechanism.sequence.window, "mechanism");
    read(m, "symmetric", c.mechanism.sequence.symmetric, "mechanism");
    read(m, "walk_length", c.mechanism.walk.walk_length, "mechanism");
    read(m, "walks_per_node", c.mechanism.walk.walks_per_node, "mechanism");
    read(m, "p", c.mechanism.walk.return_param, "mechanism");
    read(m, "q", c.mechanism.walk.inout_param, "mechanism");
    read(m, "context_size", c.mechanism.walk.context_size, "mechanism");
  }
  if (j.contains("counting")) {
    const auto& m = j["counting"];
    only_keys(m, "counting", {"convention"});
    std::string conv = "both_roles";
    read(m, "convention", conv, "counting");
    c.convention = parse_enum<cooccur::RoleConvention>(
        conv, "convention", {{"both_roles", cooccur::RoleConvention::BothRoles}, {"center_only", cooccur::RoleConvention::CenterOnly}});
  }
  if (j.contains("filter")) {
    const auto& f = j["filter"];
    only_keys(f, "filter", {"enabled", "level", "alpha", "inversion", "sweep"});
    read(f, "enabled", c.filter.enabled, "filter");
    read(f, "level", c.filter.level, "filter");
    read(f, "alpha", c.filter.level, "filter");
    std::string inv = "lower";
    read(f, "inversion", inv, "filter");
    c.filter.inversion = parse_enum<confidence::Inversion>(
        inv, "inversion", {{"lower", confidence::Inversion::Lower}, {"upper", confidence::Inversion::Upper}});
    read(f, "sweep", c.filter.sweep, "filter");
  }
  if (j.contains("train")) {
    const auto& t = j["train"];
    only_keys(t, "train", {"method", "dim", "k", "epochs", "lr", "power", "iterations", "solver", "export"});
    read(t, "method", c.train.method, "train");
    read(t, "dim", c.train.sgns.dim, "train");
    read(t, "k", c.train.sgns.k, "train");
    read(t, "epochs", c.train.sgns.epochs, "train");
    read(t, "lr", c.train.sgns.learning_rate, "train");
    read(t, "power", c.train.sgns.power, "train");
    read(t, "iterations", c.train.ldr.iterations, "train");
    std::string solver = "gd", side = "input";
    read(t, "solver", solver, "train");
    read(t, "export", side, "train");
    c.train.ldr.solver = parse_enum<embed::LdrSolver>(
        solver, "solver", {{"gd", embed::LdrSolver::GradientDescent}, {"als", embed::LdrSolver::AlternatingLeastSquares}});
    c.train.side = parse_enum<embed::ExportSide>(
        side, "export side",
        {{"input", embed::ExportSide::Input}, {"context", embed::ExportSide::Context}, {"average", embed::ExportSide::Average}});
    c.train.ldr.dim = c.train.sgns.dim;
  }
  if (j.contains("eval")) {
    const auto& e = j["eval"];
    only_keys(e, "eval", {"tasks", "k", "reps", "sampled_negatives", "l2", "cls_epochs", "align_dims"});
    read(e, "tasks", c.eval.tasks, "eval");
    read(e, "k", c.eval.k, "eval");
    read(e, "reps", c.eval.reps, "eval");
    read(e, "sampled_negatives", c.eval.sampled_negatives, "eval");
    read(e, "l2", c.eval.softmax.l2, "eval");
    read(e, "cls_epochs", c.eval.softmax.epochs, "eval");
    read(e, "align_dims", c.eval.align_dims, "eval");
  }
  c.data.synthetic.seed = derive_seed(c.seed, "synthetic");
  c.mechanism.walk.seed = derive_seed(c.seed, "walks");
  return c;
}

PipelineConfig PipelineConfig::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("missing file: " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ValidationError(path.string() + ": invalid JSON (" + e.what() + ")");
  }
  auto c = from_json(j);
  if (c.output_dir.empty()) c.output_dir = path.parent_path() / "run";
  if (c.output_dir.is_relative()) c.output_dir = path.parent_path() / c.output_dir;
  if (!c.data.path.empty() && c.data.path.is_relative()) c.data.path = path.parent_path() / c.data.path;
  if (!c.data.labels.empty() && c.data.labels.is_relative()) c.data.labels = path.parent_path() / c.data.labels;
  return c;
}

std::string PipelineConfig::hash() const {
  json j = to_json();
  // Neither affects results: counting and evaluation are thread-invariant.
  j.erase("threads");
  j.erase("output_dir");
  return checksum_text(j.dump());
}

void PipelineConfig::validate() const {
  if (output_dir.empty()) throw ValidationError("config: output_dir is required");
  if (data.source == "synthetic") {
    data.synthetic.validate();
  } else if (data.source == "csv") {
    if (data.path.empty()) throw ValidationError("config: data.path is required for csv input");
    if (!fs::exists(data.path)) throw ValidationError("missing file: " + data.path.string());
  } else {
    throw ValidationError("config: unknown data source '" + data.source + "'");
  }
  if (!data.labels.empty() && !fs::exists(data.labels)) throw ValidationError("missing file: " + data.labels.string());
  if (mechanism.kind != "sequence" && mechanism.kind != "graph") {
    throw ValidationError("config: unknown mechanism '" + mechanism.kind + "'");
  }
  if (mechanism.kind == "sequence" && mechanism.sequence.window < 1) throw ValidationError("config: window must be >= 1");
  if (mechanism.kind == "graph") {
    if (mechanism.walk.walk_length < 2 || mechanism.walk.walks_per_node < 1 || mechanism.walk.context_size < 1) {
      throw ValidationError("config: walk parameters must be positive");
    }
    if (!(mechanism.walk.return_param > 0.0) || !(mechanism.walk.inout_param > 0.0)) {
      throw ValidationError("config: p and q must be > 0");
    }
  }
  auto check_level = [](double level) {
    if (!(level > 0.0 && level < 1.0)) throw ValidationError("config: filter level must lie in (0,1)");
  };
  check_level(filter.level);
  for (double l : filter.sweep) check_level(l);
  if (train.method != "sgns" && train.method != "ldr") throw ValidationError("config: unknown method '" + train.method + "'");
  train.sgns.validate();
  if (train.ldr.iterations < 1) throw ValidationError("config: iterations must be >= 1");
  for (const auto& t : eval.tasks) {
    if (t != "rec" && t != "cls" && t != "cart" && t != "align") throw ValidationError("config: unknown eval task '" + t + "'");
  }
  if (eval.reps < 1) throw ValidationError("config: reps must be >= 1");
  if (eval.k < 1) throw ValidationError("config: k must be >= 1");
  if (eval.has("cls") && data.source == "csv" && data.labels.empty()) {
    throw ValidationError("config: classification needs data.labels for csv input");
  }
  for (auto d : eval.align_dims) {
    if (d < 1) throw ValidationError("config: align_dims entries must be >= 1");
  }
}

// Manifest ----------------------------------------------------------------------

const StageRecord* RunManifest::stage(std::string_view name) const {
  for (const auto& s : stages) {
    if (s.name == name) return &s;
  }
  return nullptr;
}

json RunManifest::to_json() const {
  json st = json::array();
  for (const auto& s : stages) {
    st.push_back({{"name", s.name}, {"wall_seconds", s.wall_seconds}, {"resumed", s.resumed}, {"artifacts", s.artifacts}});
  }
  return json{{"tool_version", tool_version}, {"config_hash", config_hash}, {"stages", st}};
}

RunManifest RunManifest::from_json(const json& j) {
  RunManifest m;
  try {
    m.tool_version = j.at("tool_version").get<std::string>();
    m.config_hash = j.at("config_hash").get<std::string>();
    for (const auto& s : j.at("stages")) {
      StageRecord r;
      r.name = s.at("name").get<std::string>();
      r.wall_seconds = s.at("wall_seconds").get<double>();
      r.resumed = s.value("resumed", false);
      r.artifacts = s.at("artifacts").get<std::map<std::string, std::string>>();
      m.stages.push_back(std::move(r));
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("manifest: ") + e.what());
  }
  return m;
}

RunManifest RunManifest::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("missing file: " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ValidationError(path.string() + ": invalid JSON");
  }
  return from_json(j);
}

std::map<std::string, std::string> RunManifest::checksums() const {
  std::map<std::string, std::string> out;
  for (const auto& s : stages) {
    for (const auto& [file, sum] : s.artifacts) out[s.name + "/" + file] = sum;
  }
  return out;
}

// Helpers ---------------------------------------------------------------------

catalog::InteractionLog training_log(const catalog::InteractionLog& log) {
  catalog::InteractionLog out;
  out.user_names = log.user_names;
  out.session_names = log.session_names;
  for (auto stream : log.user_streams()) {
    const std::size_t keep = stream.size() >= 3 ? stream.size() - 2 : stream.size();
    out.records.insert(out.records.end(), stream.begin(), stream.begin() + static_cast<std::ptrdiff_t>(keep));
  }
  return out;
}

catalog::PairStream restrict_stream(const catalog::PairStream& stream, const cooccur::CooccurrenceTable& table) {
  catalog::PairStream out;
  out.provenance = stream.provenance;
  out.suppressed = stream.suppressed;
  out.skipped_nodes = stream.skipped_nodes;
  for (const auto& p : stream.pairs) {
    if (table.count(p.center, p.context) > 0) out.pairs.push_back(p);
  }
  return out;
}

std::vector<std::int64_t> read_labels(const fs::path& path, const catalog::Vocabulary& vocab,
                                      std::vector<std::string>* class_names) {
  std::ifstream in(path);
  if (!in) throw ValidationError("missing file: " + path.string());
  std::string line;
  std::vector<std::pair<catalog::ItemId, std::string>> rows;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || (line_no == 1 && line == "item_id,label")) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) {
      throw ValidationError(path.string() + ": line " + std::to_string(line_no) + ": malformed row (expected item_id,label)");
    }
    if (auto id = vocab.find(line.substr(0, comma))) rows.emplace_back(*id, line.substr(comma + 1));
  }
  std::set<std::string> names;
  for (const auto& [_, l] : rows) names.insert(l);
  std::unordered_map<std::string, std::int64_t> index;
  for (const auto& n : names) index.emplace(n, static_cast<std::int64_t>(index.size()));
  std::vector<std::int64_t> out(vocab.size(), -1);
  for (const auto& [id, l] : rows) out[id] = index.at(l);
  if (class_names != nullptr) class_names->assign(names.begin(), names.end());
  return out;
}

void write_labels(const fs::path& path, const catalog::Vocabulary& vocab, const std::vector<std::uint32_t>& labels) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "item_id,label\n";
  for (std::size_t i = 0; i < labels.size(); ++i) out << vocab.name(static_cast<catalog::ItemId>(i)) << ',' << labels[i] << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

// Stages ----------------------------------------------------------------------

namespace {

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << j.dump(2) << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

std::string rep_file(std::uint32_t rep) { return "emb_" + std::to_string(rep) + ".rlne"; }

struct Stage {
  std::string name;
  std::function<std::vector<std::string>()> run;  // returns produced file names
};

embed::Matrix train_embedding(const PipelineConfig& c, const catalog::PairStream& stream,
                              const cooccur::CooccurrenceTable& table, std::size_t dim, std::uint64_t seed) {
  if (c.train.method == "sgns") {
    auto cfg = c.train.sgns;
    cfg.dim = dim;
    cfg.seed = seed;
    return embed::exported(embed::train_sgns(stream, table, cfg).pair, c.train.side);
  }
  const auto est = cooccur::relatedness(table, {0.0, true});
  const auto w = embed::factorization_weights(table, c.train.sgns.k);
  auto cfg = c.train.ldr;
  cfg.dim = dim;
  cfg.seed = seed;
  return embed::exported(embed::train_ldr(est, w, cfg).pair, c.train.side);
}

struct Labelled {
  embed::Matrix X;
  std::vector<std::uint32_t> labels;
  std::size_t classes = 0;
};

Labelled labelled_rows(const embed::Matrix& emb, const std::vector<std::int64_t>& labels) {
  Labelled out;
  std::vector<Eigen::Index> rows;
  std::set<std::int64_t> seen;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= 0) {
      rows.push_back(static_cast<Eigen::Index>(i));
      seen.insert(labels[i]);
    }
  }
  // Dense class ids over the classes actually present.
  std::map<std::int64_t, std::uint32_t> remap;
  for (auto l : seen) remap.emplace(l, static_cast<std::uint32_t>(remap.size()));
  out.X.resize(static_cast<Eigen::Index>(rows.size()), emb.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out.X.row(static_cast<Eigen::Index>(r)) = emb.row(rows[r]);
    out.labels.push_back(remap.at(labels[static_cast<std::size_t>(rows[r])]));
  }
  out.classes = remap.size();
  return out;
}

}  // namespace

RunManifest run_pipeline(const PipelineConfig& config) {
  config.validate();
  const fs::path dir = config.output_dir;
  fs::create_directories(dir);
  const unsigned threads = thread_cap(config.threads);

  RunManifest previous;
  bool can_resume = false;
  if (fs::exists(dir / "manifest.json")) {
    try {
      previous = RunManifest::load(dir / "manifest.json");
      can_resume = previous.config_hash == config.hash() && previous.tool_version == kToolVersion;
    } catch (const ValidationError&) {
      can_resume = false;
    }
  }

  RunManifest manifest;
  manifest.config_hash = config.hash();

  const bool holdout = config.eval.has("rec");
  std::vector<Stage> stages;

  stages.push_back({"ingest", [&]() -> std::vector<std::string> {
    std::vector<std::string> files{"vocab.tsv", "log.csv"};
    if (config.data.source == "synthetic") {
      const auto corpus = catalog::generate_synthetic(config.data.synthetic);
      catalog::write_vocabulary(dir / "vocab.tsv", corpus.vocab);
      catalog::write_log(dir / "log.csv", corpus.log, corpus.vocab);
      write_labels(dir / "labels.csv", corpus.vocab, corpus.item_class);
      files.push_back("labels.csv");
    } else {
      const auto ing = catalog::ingest_transactions(config.data.path, config.data.schema);
      catalog::write_vocabulary(dir / "vocab.tsv", ing.vocab);
      catalog::write_log(dir / "log.csv", ing.log, ing.vocab);
    }
    return files;
  }});

  stages.push_back({"pairs", [&]() -> std::vector<std::string> {
    const auto vocab = catalog::read_vocabulary(dir / "vocab.tsv");
    auto log = catalog::read_log(dir / "log.csv", vocab);
    if (holdout) log = training_log(log);
    catalog::PairStream stream;
    if (config.mechanism.kind == "sequence") {
      stream = catalog::sequence_pairs(log, config.mechanism.sequence);
    } else {
      auto walk = config.mechanism.walk;
      walk.threads = threads;
      stream = catalog::random_walk_pairs(catalog::build_session_graph(log, vocab.size()), walk);
    }
    if (stream.pairs.empty()) throw ComputeError("no pairs generated");
    catalog::write_pair_stream(dir / "pairs.rlna", stream);
    return {"pairs.rlna"};
  }});

  stages.push_back({"count", [&]() -> std::vector<std::string> {
    const auto vocab = catalog::read_vocabulary(dir / "vocab.tsv");
    const auto stream = catalog::read_pair_stream(dir / "pairs.rlna");
    cooccur::write_table(dir / "table.rlnc", cooccur::accumulate(stream, vocab.size(), config.convention, threads));
    return {"table.rlnc"};
  }});

  stages.push_back({"clean", [&]() -> std::vector<std::string> {
    const auto table = cooccur::read_table(dir / "table.rlnc");
    json report = {{"enabled", config.filter.enabled}, {"level", config.filter.level}};
    confidence::FilterOptions fo;
    fo.level = config.filter.level;
    fo.inversion = config.filter.inversion;
    fo.threads = threads;
    json sweep = json::array();
    for (double level : config.filter.sweep) {
      auto o = fo;
      o.level = level;
      const auto r = confidence::filter_false_associations(table, o);
      sweep.push_back({{"level", level},
                       {"dropped", r.dropped.size()},
                       {"examined", r.examined},
                       {"drop_fraction", r.examined ? static_cast<double>(r.dropped.size()) / static_cast<double>(r.examined) : 0.0}});
    }
    report["sweep"] = sweep;
    if (config.filter.enabled) {
      const auto r = confidence::filter_false_associations(table, fo);
      cooccur::write_table(dir / "table.clean.rlnc", r.table);
      json drops = json::array();
      for (const auto& d : r.dropped) {
        drops.push_back({{"i", d.i}, {"j", d.j}, {"mu_hat", d.mu_hat}, {"bound", d.bound}, {"verdict", "drop"}});
      }
      report["dropped"] = r.dropped.size();
      report["examined"] = r.examined;
      report["pairs"] = drops;
    } else {
      cooccur::write_table(dir / "table.clean.rlnc", table);
    }
    write_json(dir / "drops.json", report);
    return {"table.clean.rlnc", "drops.json"};
  }});

  stages.push_back({"train", [&]() -> std::vector<std::string> {
    const auto table = cooccur::read_table(dir / "table.clean.rlnc");
    const auto stream = restrict_stream(catalog::read_pair_stream(dir / "pairs.rlna"), table);
    std::vector<std::string> files;
    for (std::uint32_t rep = 0; rep < config.eval.reps; ++rep) {
      const auto emb = train_embedding(config, stream, table, config.train.sgns.dim,
                                       derive_seed(derive_seed(config.seed, "train"), rep));
      if (!emb.allFinite()) throw ComputeError("non-finite embedding");
      embed::write_rlne(dir / rep_file(rep), emb);
      files.push_back(rep_file(rep));
    }
    return files;
  }});

  stages.push_back({"eval", [&]() -> std::vector<std::string> {
    const auto vocab = catalog::read_vocabulary(dir / "vocab.tsv");
    const auto log = catalog::read_log(dir / "log.csv", vocab);
    std::vector<embed::Matrix> embs;
    for (std::uint32_t rep = 0; rep < config.eval.reps; ++rep) embs.push_back(embed::read_rlne(dir / rep_file(rep)));
    json metrics = json::object();
    metrics["reps"] = config.eval.reps;
    metrics["method"] = config.train.method;
    metrics["mechanism"] = config.mechanism.kind;

    std::vector<std::int64_t> labels;
    const fs::path label_path = config.data.source == "synthetic" ? dir / "labels.csv" : config.data.labels;
    if (!label_path.empty() && fs::exists(label_path)) labels = read_labels(label_path, vocab);

    if (config.eval.has("rec")) {
      const auto split = evalharness::leave_last_split(log);
      json rec = {{"k", config.eval.k},
                  {"queries", split.users.size()},
                  {"excluded_users", split.excluded_users},
                  {"candidates", config.eval.sampled_negatives == 0
                                     ? std::string("full")
                                     : "sampled-" + std::to_string(config.eval.sampled_negatives)}};
      std::vector<double> auc, ndcg, rk, nk;
      for (std::uint32_t rep = 0; rep < config.eval.reps; ++rep) {
        evalharness::RecommendationOptions ro;
        ro.k = config.eval.k;
        ro.sampled_negatives = config.eval.sampled_negatives;
        ro.seed = derive_seed(derive_seed(config.seed, "rec"), rep);
        ro.threads = threads;
        const auto m = evalharness::evaluate_recommendation(split, embs[rep], ro);
        auc.push_back(m.auc);
        ndcg.push_back(m.ndcg);
        rk.push_back(m.recall_at_k);
        nk.push_back(m.ndcg_at_k);
      }
      rec["auc"] = auc;
      rec["ndcg"] = ndcg;
      rec["recall_at_k"] = rk;
      rec["ndcg_at_k"] = nk;
      metrics["rec"] = rec;
    }
    if (config.eval.has("cls")) {
      if (labels.empty()) throw ValidationError("classification needs labels");
      std::vector<double> micro, macro;
      std::size_t classes = 0, items = 0;
      for (std::uint32_t rep = 0; rep < config.eval.reps; ++rep) {
        const auto lab = labelled_rows(embs[rep], labels);
        auto so = config.eval.softmax;
        so.seed = derive_seed(derive_seed(config.seed, "cls"), rep);
        const auto f = evalharness::evaluate_classification(lab.X, lab.labels, lab.classes, so);
        micro.push_back(f.micro);
        macro.push_back(f.macro);
        classes = lab.classes;
        items = lab.labels.size();
      }
      metrics["cls"] = {{"classes", classes}, {"items", items}, {"micro", micro}, {"macro", macro}};
    }
    if (config.eval.has("cart")) {
      const auto carts = evalharness::cart_snapshots(log);
      json cart = {{"k", config.eval.k}, {"snapshots", carts.size()}};
      for (auto s : {evalharness::CartStrategy::Random, evalharness::CartStrategy::Recent, evalharness::CartStrategy::Oracle,
                     evalharness::CartStrategy::Add, evalharness::CartStrategy::Attention}) {
        std::vector<double> rk, nk, auc;
        for (std::uint32_t rep = 0; rep < config.eval.reps; ++rep) {
          const auto m = evalharness::evaluate_carts(carts, embs[rep], s, config.eval.k,
                                                     derive_seed(derive_seed(config.seed, "cart"), rep));
          rk.push_back(m.recall_at_k);
          nk.push_back(m.ndcg_at_k);
          auc.push_back(m.auc);
        }
        cart["strategies"][std::string(evalharness::strategy_name(s))] = {{"recall_at_k", rk}, {"ndcg_at_k", nk}, {"auc", auc}};
      }
      metrics["cart"] = cart;
    }
    if (config.eval.has("align")) {
      const auto table = cooccur::read_table(dir / "table.clean.rlnc");
      const Eigen::MatrixXd X = spectral::relatedness_matrix(cooccur::relatedness(table, {0.0, true}));
      const auto stream = restrict_stream(catalog::read_pair_stream(dir / "pairs.rlna"), table);
      auto dims = config.eval.align_dims;
      if (dims.empty()) dims.push_back(config.train.sgns.dim);
      json rows = json::array();
      for (auto d : dims) {
        const auto emb = d == config.train.sgns.dim ? embs[0]
                                                    : train_embedding(config, stream, table, d,
                                                                      derive_seed(derive_seed(config.seed, "train"), 0));
        const auto r = static_cast<Eigen::Index>(std::min<std::size_t>(d, vocab.size()));
        const auto bx = spectral::left_singular_basis(X, r, {}, spectral::BasisSource::Relatedness);
        const auto bz = spectral::left_singular_basis(Eigen::MatrixXd(emb), r, {}, spectral::BasisSource::Embedding);
        json row = {{"dim", d}, {"alignment", spectral::alignment_score(bz, bx)}};
        if (!labels.empty()) {
          const auto lab = labelled_rows(emb, labels);
          auto so = config.eval.softmax;
          so.seed = derive_seed(config.seed, "cls");
          row["micro"] = evalharness::evaluate_classification(lab.X, lab.labels, lab.classes, so).micro;
        }
        rows.push_back(row);
      }
      metrics["align"] = rows;
    }
    write_json(dir / "metrics.json", metrics);
    return {"metrics.json"};
  }});

  bool upstream_reused = can_resume;
  for (const auto& stage : stages) {
    const auto t0 = std::chrono::steady_clock::now();
    StageRecord rec;
    rec.name = stage.name;
    const StageRecord* old = can_resume ? previous.stage(stage.name) : nullptr;
    bool reuse = upstream_reused && old != nullptr;
    if (reuse) {
      for (const auto& [file, sum] : old->artifacts) {
        if (!fs::exists(dir / file) || checksum_file(dir / file) != sum) {
          reuse = false;
          break;
        }
      }
    }
    if (reuse) {
      rec.artifacts = old->artifacts;
      rec.resumed = true;
    } else {
      upstream_reused = false;
      try {
        for (const auto& f : stage.run()) rec.artifacts[f] = checksum_file(dir / f);
      } catch (const StageError&) {
        throw;
      } catch (const std::exception& e) {
        write_json(dir / "manifest.json", manifest.to_json());
        throw StageError(stage.name, e.what());
      }
    }
    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    manifest.stages.push_back(std::move(rec));
    write_json(dir / "manifest.json", manifest.to_json());
  }
  return manifest;
}

}  // namespace relana::pipeline
