// Command-line driver for the whole pipeline.

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cycle/error.hpp"
#include "cycle/grad_suite.hpp"
#include "cycle/pipeline.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace cycle;

namespace {

struct CommonOptions {
  std::string config_file;
  std::vector<std::string> sets;
  std::optional<std::size_t> workers;
  std::optional<std::size_t> seed;
};

void add_common(CLI::App* sub, CommonOptions& c) {
  sub->add_option("--config", c.config_file, "key=value config file");
  sub->add_option("--set", c.sets, "override one key (key=value), repeatable");
  sub->add_option("--workers", c.workers, "cap on worker threads");
  sub->add_option("--seed", c.seed, "shorthand for --set seed=N");
}

// Defaults, then the file, then CYCLE_* variables, then --set, then the
// subcommand's dedicated flags.
RunConfig resolve(const CommonOptions& c, const std::vector<std::string>& flags = {}) {
  RunConfig rc;
  if (!c.config_file.empty()) rc.load_file(c.config_file);
  rc.apply_env([](const char* name) { return std::getenv(name); });
  for (const auto& s : c.sets) rc.set_assignment(s);
  for (const auto& s : flags) rc.set_assignment(s);
  if (c.workers) rc.set("workers", std::to_string(*c.workers));
  if (c.seed) rc.set("seed", std::to_string(*c.seed));
  std::cerr << json{{"event", "config"}, {"config_hash", rc.hash()}, {"config", rc.to_json()}}.dump()
            << '\n';
  return rc;
}

json read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw DataError("cannot read " + p.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw DataError(p.string() + ": " + e.what());
  }
}

void write_text(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p);
  if (!out) throw DataError("cannot write " + p.string());
  out << text;
}

void write_json(const fs::path& p, const json& j) { write_text(p, j.dump(2) + "\n"); }

// "2019=path/to.ckpt"
std::pair<int, std::string> year_path(const std::string& s) {
  const auto eq = s.find('=');
  if (eq == std::string::npos) throw UsageError("expected YEAR=PATH, got '" + s + "'");
  try {
    return {std::stoi(s.substr(0, eq)), s.substr(eq + 1)};
  } catch (const std::exception&) {
    throw UsageError("bad year in '" + s + "'");
  }
}

std::map<int, Checkpoint> load_checkpoints(const std::vector<std::string>& specs) {
  std::map<int, Checkpoint> out;
  for (const auto& s : specs) {
    const auto [year, path] = year_path(s);
    if (!out.emplace(year, load_checkpoint(path)).second) {
      throw UsageError("two checkpoints for train year " + std::to_string(year));
    }
  }
  return out;
}

int resolve_train_year(const RunConfig& rc, const Corpus& corpus) {
  const auto y = static_cast<int>(rc.get_int("train.train_year"));
  return y != 0 ? y : corpus.kg.years().front();
}

fs::path build_dir(const std::string& data, const std::string& build) {
  return build.empty() ? fs::path(data) / "build" : fs::path(build);
}

// ---------------------------------------------------------------------------
// Report artifacts: the report document plus per-query cell records, so that
// `report` can merge artifacts and recompute every aggregate.

struct CellSet {
  GapMatrix model;
  GapMatrix baseline;
  std::map<std::pair<int, int>, std::vector<std::size_t>> degrees;  // gold, train-year graph
};

void add_years(GapMatrix& m, int a, int b) {
  std::set<int> ys(m.years.begin(), m.years.end());
  ys.insert(a);
  ys.insert(b);
  m.years.assign(ys.begin(), ys.end());
}

std::optional<DegreeBucketReport> degree_analysis(const CellSet& cs) {
  std::vector<double> improvements;
  std::vector<std::size_t> degrees;
  for (const auto& [key, cell] : cs.model.cells) {
    const auto b = cs.baseline.cells.find(key);
    const auto d = cs.degrees.find(key);
    if (b == cs.baseline.cells.end() || d == cs.degrees.end()) continue;
    const auto imp = hit1_improvements(cell, b->second);
    improvements.insert(improvements.end(), imp.begin(), imp.end());
    degrees.insert(degrees.end(), d->second.begin(), d->second.end());
  }
  if (improvements.empty()) return std::nullopt;
  const auto buckets = power_of_two_buckets(*std::max_element(degrees.begin(), degrees.end()));
  return degree_report(improvements, degrees, buckets);
}

json artifact(const RunConfig& rc, const std::string& dataset_hash, CellSet cs) {
  for (auto* m : {&cs.model, &cs.baseline}) {
    for (const auto& [key, cell] : m->cells) add_years(*m, key.first, key.second);
  }
  ReportInputs in;
  in.config = rc.to_json();
  in.config_hash = rc.hash();
  in.model = &cs.model;
  in.baseline = cs.baseline.cells.empty() ? nullptr : &cs.baseline;
  in.degree = degree_analysis(cs);
  in.ns = rc.eval().ns;
  json doc = build_report(in);
  doc["dataset_hash"] = dataset_hash;
  json cells = {{"model", json::array()}, {"baseline", json::array()}};
  for (const auto& [key, cell] : cs.model.cells) {
    json r = cell_record(cell);
    if (auto d = cs.degrees.find(key); d != cs.degrees.end()) r["gold_degree"] = d->second;
    cells["model"].push_back(r);
  }
  for (const auto& [key, cell] : cs.baseline.cells) cells["baseline"].push_back(cell_record(cell));
  doc["cells"] = cells;
  return doc;
}

void write_artifact(const RunConfig& rc, const std::string& dataset_hash, const CellSet& cs,
                    const std::string& out, const std::string& tsv) {
  const json doc = artifact(rc, dataset_hash, cs);
  if (out.empty()) {
    std::cout << doc.dump(2) << '\n';
  } else {
    write_json(out, doc);
  }
  if (!tsv.empty()) {
    ReportInputs in;
    in.model = &cs.model;
    in.baseline = cs.baseline.cells.empty() ? nullptr : &cs.baseline;
    in.ns = rc.eval().ns;
    write_text(tsv, "# config_hash=" + rc.hash() + "\n# dataset_hash=" + dataset_hash + "\n" +
                        table_tsv(in, Direction::forward_and_backward));
  }
}

void record_degrees(CellSet& cs, const Corpus& corpus) {
  for (const auto& [key, cell] : cs.model.cells) {
    const auto& g = corpus.kg.snapshot(key.first);
    std::vector<std::size_t> d;
    for (auto node : cell.gold) d.push_back(degree(g, node));
    cs.degrees[key] = d;
  }
}

// ---------------------------------------------------------------------------

int cmd_synth(const CommonOptions& c, const std::string& out) {
  const auto rc = resolve(c);
  const auto data = generate(rc.synth());
  write_dataset(out, data, rc.dataset_hash(), rc.hash(), rc.to_json());
  std::cout << json{{"out", out},
                    {"dataset_hash", rc.dataset_hash()},
                    {"config_hash", rc.hash()},
                    {"years", data.kg.years()},
                    {"entities", data.kg.registry.size()},
                    {"rewired_edges", data.rewired_by_year}}
                   .dump()
            << '\n';
  return 0;
}

int cmd_build(const CommonOptions& c, const std::string& data, const std::string& out) {
  const auto rc = resolve(c);
  const auto corpus = load_corpus(data);
  const auto assets = build_assets(corpus, build_options(rc));
  const auto dir = build_dir(data, out);
  save_build(dir, corpus, assets, rc.hash());
  std::cout << json{{"out", dir.string()},
                    {"dataset_hash", corpus.dataset_hash},
                    {"vocab_size", assets.vocab.size()},
                    {"feature_columns", assets.features.m},
                    {"feature_graph_edges", assets.feature_graph.edge_count()}}
                   .dump()
            << '\n';
  return 0;
}

int cmd_diff(const CommonOptions& c, const std::string& data, int from, int to,
             const std::string& out) {
  const auto rc = resolve(c);
  const auto corpus = load_corpus(data);
  if (!corpus.kg.has_year(from) || !corpus.kg.has_year(to)) {
    throw UsageError("both years must be present in the dataset");
  }
  const auto pools = diff_pools(corpus.kg.snapshot(from), corpus.kg.snapshot(to));
  std::size_t gained = 0, lost = 0, touched = 0;
  for (std::size_t i = 0; i < pools.n(); ++i) {
    gained += pools.positives[i].size();
    lost += pools.negatives[i].size();
    touched += !pools.positives[i].empty() || !pools.negatives[i].empty();
  }
  if (!out.empty()) pools.save(out, rc.hash());
  std::cout << json{{"t1", from},
                    {"t2", to},
                    {"edges_added", gained / 2},
                    {"edges_removed", lost / 2},
                    {"nodes_changed", touched},
                    {"dataset_hash", corpus.dataset_hash}}
                   .dump()
            << '\n';
  return 0;
}

struct TrainArgs {
  std::string data, build, out, resume, log;
  std::optional<int> train_year, target_year;
};

int cmd_train(const CommonOptions& c, const TrainArgs& a) {
  std::vector<std::string> flags;
  if (a.train_year) flags.push_back("train.train_year=" + std::to_string(*a.train_year));
  if (a.target_year) flags.push_back("train.target_year=" + std::to_string(*a.target_year));
  const auto rc = resolve(c, flags);
  const auto corpus = load_corpus(a.data);
  const auto dir = build_dir(a.data, a.build);
  const auto assets = load_build(dir, corpus, rc.max_sequence_length());
  auto cfg = rc.train();
  cfg.train_year = resolve_train_year(rc, corpus);
  if (cfg.target_year == 0) cfg.target_year = default_target_year(corpus.kg, cfg.train_year);
  if (!corpus.kg.has_year(cfg.target_year)) {
    throw UsageError("target year " + std::to_string(cfg.target_year) + " not in the dataset");
  }
  const auto pools = cfg.train_year == cfg.target_year
                         ? diff_pools(corpus.kg.snapshot(cfg.train_year),
                                      corpus.kg.snapshot(cfg.target_year))
                         : load_relation_pools(dir, cfg.train_year, cfg.target_year);
  const auto td = make_train_data(corpus, assets, cfg.train_year, cfg.target_year, pools,
                                  rc.max_sequence_length());
  std::optional<Checkpoint> resume;
  if (!a.resume.empty()) resume = load_checkpoint(a.resume);

  const fs::path log_path = a.log.empty() ? fs::path(a.out + ".log.jsonl") : fs::path(a.log);
  if (log_path.has_parent_path()) fs::create_directories(log_path.parent_path());
  std::ofstream log(log_path, resume ? std::ios::app : std::ios::trunc);
  if (!log) throw DataError("cannot write " + log_path.string());
  const auto hash = rc.hash();
  const auto result = train(td, cfg, hash, resume ? &*resume : nullptr, [&](const EpochReport& r) {
    const auto line = log_line(r, hash);
    log << line << '\n';
    std::cerr << line << '\n';
  });
  for (const auto& w : result.warnings) std::cerr << "warning: " << w << '\n';
  const fs::path out(a.out);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  save_checkpoint(out, result.checkpoint);
  std::cout << json{{"checkpoint", a.out},
                    {"log", log_path.string()},
                    {"train_year", cfg.train_year},
                    {"target_year", cfg.target_year},
                    {"epochs_done", result.checkpoint.epochs_done},
                    {"config_hash", hash}}
                   .dump()
            << '\n';
  return 0;
}

struct EvalArgs {
  std::string data, build, out, tsv;
  std::vector<std::string> checkpoints, baselines;
  std::optional<int> test_year;
};

int cmd_evaluate(const CommonOptions& c, const EvalArgs& a, bool full_matrix) {
  const auto rc = resolve(c);
  const auto corpus = load_corpus(a.data);
  const auto assets = load_build(build_dir(a.data, a.build), corpus, rc.max_sequence_length());
  const auto ecfg = rc.eval();
  const auto threshold = rc.get_size("train.neighbor_threshold");
  const auto models = load_checkpoints(a.checkpoints);
  const auto baselines = load_checkpoints(a.baselines);
  CellSet cs;
  auto run = [&](const std::map<int, Checkpoint>& ckpts) {
    if (full_matrix) {
      return run_gap_matrix(ckpts, corpus, assets, ecfg, threshold, rc.max_sequence_length(),
                            rc.workers());
    }
    GapMatrix m;
    const int year = *a.test_year;
    if (!corpus.kg.has_year(year)) throw UsageError("test year not in the dataset");
    const auto split = make_test_split(corpus, assets.vocab, year, rc.max_sequence_length());
    const EvalGraph graph{&assets.dense_features, &corpus.kg.snapshot(year), threshold};
    for (const auto& [train_year, ckpt] : ckpts) {
      m.cells[{train_year, year}] = evaluate_split(ckpt, assets.entity_seqs, graph, split,
                                                   train_year, ecfg, rc.workers());
    }
    return m;
  };
  for (const auto& [year, ckpt] : models) {
    if (!corpus.kg.has_year(year)) {
      throw UsageError("train year " + std::to_string(year) + " not in the dataset");
    }
  }
  cs.model = run(models);
  if (!baselines.empty()) cs.baseline = run(baselines);
  record_degrees(cs, corpus);
  write_artifact(rc, corpus.dataset_hash, cs, a.out, a.tsv);
  return 0;
}

int cmd_grad_check(const CommonOptions& c, GradSuiteOptions opts) {
  opts.seed = resolve(c).get_size("seed");
  const auto result = run_grad_suite(opts);
  for (const auto& e : result.entries) {
    std::cout << (e.pass ? "ok   " : "FAIL ") << e.name << " probes=" << e.probes
              << " excluded=" << e.excluded << " max_rel_error=" << e.max_rel_error << '\n';
  }
  std::cout << "tolerance=" << result.tolerance << " seconds=" << result.seconds << '\n';
  if (!result.pass()) throw NumericError("gradient check failed");
  return 0;
}

int cmd_report(const CommonOptions& c, const std::vector<std::string>& inputs,
               const std::string& out, const std::string& tsv) {
  const auto rc = resolve(c);
  const auto ns = rc.eval().ns;
  CellSet cs;
  std::string dataset_hash;
  json sources = json::array();
  auto merge = [](GapMatrix& m, EvalCell cell, const std::string& from) {
    const std::pair key{cell.train_year, cell.test_year};
    const auto [it, fresh] = m.cells.emplace(key, cell);
    if (!fresh && (it->second.ranks != cell.ranks || it->second.gold != cell.gold)) {
      throw DataError(from + " disagrees with an earlier artifact on cell " +
                      std::to_string(key.first) + "->" + std::to_string(key.second));
    }
  };
  for (const auto& path : inputs) {
    const auto doc = read_json(path);
    const auto hash = doc.value("dataset_hash", "");
    if (hash.empty()) throw DataError(path + " carries no dataset hash");
    if (dataset_hash.empty()) dataset_hash = hash;
    if (hash != dataset_hash) {
      throw DataError("refusing to merge " + path + ": dataset hash " + hash + " differs from " +
                      dataset_hash);
    }
    if (!doc.contains("cells")) throw DataError(path + " has no cell records");
    for (const auto& r : doc["cells"].value("model", json::array())) {
      const auto cell = cell_from_record(r, ns);
      if (r.contains("gold_degree")) {
        cs.degrees[{cell.train_year, cell.test_year}] =
            r["gold_degree"].get<std::vector<std::size_t>>();
      }
      merge(cs.model, cell, path);
    }
    for (const auto& r : doc["cells"].value("baseline", json::array())) {
      merge(cs.baseline, cell_from_record(r, ns), path);
    }
    sources.push_back({{"path", path}, {"config_hash", doc.value("config_hash", "")}});
  }
  json doc = artifact(rc, dataset_hash, cs);
  doc["sources"] = sources;
  if (out.empty()) {
    std::cout << doc.dump(2) << '\n';
  } else {
    write_json(out, doc);
  }
  if (!tsv.empty()) {
    ReportInputs in;
    in.model = &cs.model;
    in.baseline = cs.baseline.cells.empty() ? nullptr : &cs.baseline;
    in.ns = ns;
    write_text(tsv, "# config_hash=" + rc.hash() + "\n# dataset_hash=" + dataset_hash + "\n" +
                        table_tsv(in, Direction::forward_and_backward));
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Temporal entity linking with cross-year graph contrastive learning"};
  app.require_subcommand(1);
  CommonOptions common;
  std::function<int()> action;

  auto* synth = app.add_subcommand("synth", "generate a synthetic drifting dataset");
  add_common(synth, common);
  std::string synth_out;
  synth->add_option("--out", synth_out, "dataset directory")->required();
  synth->callback([&] { action = [&] { return cmd_synth(common, synth_out); }; });

  auto* build = app.add_subcommand("build-dataset", "vocabulary, features, feature graph, pools");
  add_common(build, common);
  std::string build_data, build_out;
  build->add_option("--data", build_data, "dataset directory")->required();
  build->add_option("--out", build_out, "build directory (default DATA/build)");
  build->callback([&] { action = [&] { return cmd_build(common, build_data, build_out); }; });

  auto* diff = app.add_subcommand("diff", "cross-year positive/negative pools of two snapshots");
  add_common(diff, common);
  std::string diff_data, diff_out;
  int diff_from = 0, diff_to = 0;
  diff->add_option("--data", diff_data, "dataset directory")->required();
  diff->add_option("--from", diff_from, "earlier year")->required();
  diff->add_option("--to", diff_to, "later year")->required();
  diff->add_option("--out", diff_out, "pool file to write");
  diff->callback([&] {
    action = [&] { return cmd_diff(common, diff_data, diff_from, diff_to, diff_out); };
  });

  auto* tr = app.add_subcommand("train", "train one model on one year");
  add_common(tr, common);
  TrainArgs ta;
  tr->add_option("--data", ta.data, "dataset directory")->required();
  tr->add_option("--build", ta.build, "build directory (default DATA/build)");
  tr->add_option("--train-year", ta.train_year, "training year (default: first year)");
  tr->add_option("--target-year", ta.target_year, "year the cross-year pools point to");
  tr->add_option("--out", ta.out, "checkpoint to write")->required();
  tr->add_option("--resume", ta.resume, "checkpoint to continue from");
  tr->add_option("--log", ta.log, "epoch log (default OUT.log.jsonl)");
  tr->callback([&] { action = [&] { return cmd_train(common, ta); }; });

  EvalArgs ea;
  auto* ev = app.add_subcommand("evaluate", "recall@N of checkpoints on one test year");
  add_common(ev, common);
  ev->add_option("--data", ea.data, "dataset directory")->required();
  ev->add_option("--build", ea.build, "build directory (default DATA/build)");
  ev->add_option("--checkpoint", ea.checkpoints, "TRAIN_YEAR=PATH, repeatable")->required();
  ev->add_option("--baseline", ea.baselines, "TRAIN_YEAR=PATH of the comparison model");
  ev->add_option("--test-year", ea.test_year, "test year")->required();
  ev->add_option("--out", ea.out, "report file (default stdout)");
  ev->add_option("--tsv", ea.tsv, "flat table export");
  ev->callback([&] { action = [&] { return cmd_evaluate(common, ea, false); }; });

  auto* gm = app.add_subcommand("gap-matrix", "every checkpoint on every test year");
  add_common(gm, common);
  gm->add_option("--data", ea.data, "dataset directory")->required();
  gm->add_option("--build", ea.build, "build directory (default DATA/build)");
  gm->add_option("--checkpoint", ea.checkpoints, "TRAIN_YEAR=PATH, repeatable")->required();
  gm->add_option("--baseline", ea.baselines, "TRAIN_YEAR=PATH of the comparison model");
  gm->add_option("--out", ea.out, "report file (default stdout)");
  gm->add_option("--tsv", ea.tsv, "flat table export");
  gm->callback([&] { action = [&] { return cmd_evaluate(common, ea, true); }; });

  auto* gc = app.add_subcommand("grad-check", "finite-difference check of every gradient");
  add_common(gc, common);
  GradSuiteOptions gopts;
  gc->add_option("--probes", gopts.probes, "probe points per op")->capture_default_str();
  gc->add_option("--tolerance", gopts.tolerance, "max relative error")->capture_default_str();
  gc->callback([&] { action = [&] { return cmd_grad_check(common, gopts); }; });

  auto* rp = app.add_subcommand("report", "merge evaluation artifacts of one dataset");
  add_common(rp, common);
  std::vector<std::string> rp_inputs;
  std::string rp_out, rp_tsv;
  rp->add_option("--input", rp_inputs, "artifact from evaluate or gap-matrix, repeatable")
      ->required();
  rp->add_option("--out", rp_out, "merged report (default stdout)");
  rp->add_option("--tsv", rp_tsv, "flat table export");
  rp->callback([&] { action = [&] { return cmd_report(common, rp_inputs, rp_out, rp_tsv); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  try {
    return action();
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 1;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return 3;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 2;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
