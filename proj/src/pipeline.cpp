#include "cycle/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <regex>
#include <sstream>

#include "cycle/error.hpp"

namespace cycle {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw DataError("cannot read " + p.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::vector<std::pair<int, fs::path>> edge_files(const fs::path& dir) {
  static const std::regex pattern(R"(edges_(-?\d+)\.tsv)");
  std::vector<std::pair<int, fs::path>> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    std::smatch m;
    const auto name = e.path().filename().string();
    if (std::regex_match(name, m, pattern)) out.emplace_back(std::stoi(m[1].str()), e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::vector<std::string>> entity_texts(const EntityRegistry& reg) {
  std::vector<std::vector<std::string>> out;
  for (const auto& r : reg.records()) {
    out.push_back(tokenize(r.title));
    out.push_back(tokenize(r.description));
  }
  return out;
}

}  // namespace

Corpus load_corpus(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DataError("dataset directory not found: " + dir.string());
  Corpus c;
  c.kg.registry = load_entities(dir / "entities.jsonl");
  c.train = load_mentions(dir / "mentions.train.jsonl", c.kg.registry);
  c.test = load_mentions(dir / "mentions.test.jsonl", c.kg.registry);
  const auto files = edge_files(dir);
  if (files.empty()) throw DataError("no edges_<year>.tsv files in " + dir.string());
  std::string all_bytes;
  for (const auto& [year, path] : files) {
    c.kg.snapshots.push_back(load_snapshot(path, year, c.kg.registry));
    all_bytes += read_bytes(path);
  }
  c.kg.validate();
  const auto manifest = dir / "manifest.json";
  if (fs::exists(manifest)) {
    try {
      c.dataset_hash = json::parse(read_bytes(manifest)).at("dataset_hash").get<std::string>();
    } catch (const json::exception& e) {
      throw DataError(manifest.string() + ": " + e.what());
    }
  } else {
    for (const char* f : {"entities.jsonl", "mentions.train.jsonl", "mentions.test.jsonl"}) {
      all_bytes += read_bytes(dir / f);
    }
    c.dataset_hash = hex64(fnv1a64(all_bytes));
  }
  return c;
}

Corpus corpus_from_synth(SynthDataset data, std::string dataset_hash) {
  Corpus c;
  c.kg = std::move(data.kg);
  c.train = std::move(data.train);
  c.test = std::move(data.test);
  c.dataset_hash = std::move(dataset_hash);
  c.kg.validate();
  return c;
}

BuildOptions build_options(const RunConfig& cfg) {
  BuildOptions o;
  o.filter = cfg.token_filter();
  o.knn = cfg.feature_graph();
  o.negative_cap = cfg.negative_cap();
  o.max_seq_len = cfg.max_sequence_length();
  o.seed = cfg.get_size("seed");
  return o;
}

namespace {

std::vector<TokenSequence> entity_sequences(const EntityRegistry& reg, const Vocabulary& vocab,
                                            std::size_t max_seq_len) {
  std::vector<TokenSequence> out;
  out.reserve(reg.size());
  for (const auto& r : reg.records()) out.push_back(build_entity_seq(r, vocab, max_seq_len));
  return out;
}

void derive_graph_side(Assets& a, const Corpus& corpus, const BuildOptions& opts) {
  a.dense_features = a.features.dense();
  const FeatureRowEmbedder embedder(a.features);
  const auto emb = embed_descriptions(corpus.kg.registry, embedder);
  a.feature_graph = build_feature_graph(emb, opts.knn);
  a.feature_pools = pools_feature(a.feature_graph, opts.negative_cap, opts.seed);
}

}  // namespace

Assets build_assets(const Corpus& corpus, const BuildOptions& opts) {
  opts.filter.validate();
  Assets a;
  auto texts = entity_texts(corpus.kg.registry);
  for (const auto& m : corpus.train) {
    texts.push_back(tokenize_all(m.context_left));
    texts.push_back(tokenize_all(m.mention));
    texts.push_back(tokenize_all(m.context_right));
  }
  a.vocab = Vocabulary::build(texts);
  const auto& vocab = a.vocab;
  a.features = build_feature_matrix(
      corpus.kg.registry, [&](const std::string& s) { return vocab.encode_text(s); }, opts.filter);
  derive_graph_side(a, corpus, opts);
  a.entity_seqs = entity_sequences(corpus.kg.registry, a.vocab, opts.max_seq_len);
  return a;
}

fs::path relation_pools_path(const fs::path& dir, int t1, int t2) {
  return dir / "pools" / ("relation_" + std::to_string(t1) + "_" + std::to_string(t2) + ".jsonl");
}

void save_build(const fs::path& dir, const Corpus& corpus, const Assets& assets,
                const std::string& config_hash) {
  fs::create_directories(dir / "pools");
  assets.vocab.save(dir / "vocab.txt");
  assets.features.save(dir / "features.txt");
  save_snapshot(dir / "feature_graph.tsv", assets.feature_graph, corpus.kg.registry,
                {"config_hash=" + config_hash, "dataset_hash=" + corpus.dataset_hash});
  assets.feature_pools.save(dir / "pools" / "feature.jsonl", config_hash);
  json pools = json::array();
  for (const auto& g1 : corpus.kg.snapshots) {
    for (const auto& g2 : corpus.kg.snapshots) {
      if (g1.year() == g2.year()) continue;
      const auto p = relation_pools_path(dir, g1.year(), g2.year());
      diff_pools(g1, g2).save(p, config_hash);
      pools.push_back(p.filename().string());
    }
  }
  json manifest = {{"config_hash", config_hash},
                   {"dataset_hash", corpus.dataset_hash},
                   {"vocab_hash", hex64(fnv1a64(read_bytes(dir / "vocab.txt")))},
                   {"features_hash", hex64(fnv1a64(read_bytes(dir / "features.txt")))},
                   {"entities", corpus.kg.registry.size()},
                   {"vocab_size", assets.vocab.size()},
                   {"feature_columns", assets.features.m},
                   {"feature_graph_edges", assets.feature_graph.edge_count()},
                   {"years", corpus.kg.years()},
                   {"relation_pools", pools}};
  std::ofstream out(dir / "build_manifest.json");
  if (!out) throw DataError("cannot write build manifest in " + dir.string());
  out << manifest.dump(2) << '\n';
}

Assets load_build(const fs::path& dir, const Corpus& corpus, std::size_t max_seq_len) {
  const auto manifest_path = dir / "build_manifest.json";
  if (!fs::exists(manifest_path)) {
    throw DataError("no build in " + dir.string() + " (run build-dataset first)");
  }
  json manifest;
  try {
    manifest = json::parse(read_bytes(manifest_path));
  } catch (const json::exception& e) {
    throw DataError(manifest_path.string() + ": " + e.what());
  }
  if (manifest.value("dataset_hash", "") != corpus.dataset_hash) {
    throw DataError("build in " + dir.string() + " was made from a different dataset");
  }
  for (const auto& [file, key] : {std::pair{"vocab.txt", "vocab_hash"},
                                  std::pair{"features.txt", "features_hash"}}) {
    if (hex64(fnv1a64(read_bytes(dir / file))) != manifest.value(key, "")) {
      throw DataError(std::string(file) + " does not match its build manifest hash");
    }
  }
  Assets a;
  a.vocab = Vocabulary::load(dir / "vocab.txt");
  a.features = FeatureMatrix::load(dir / "features.txt");
  if (a.features.n != corpus.kg.registry.size()) {
    throw DataError("feature matrix rows do not match the entity count");
  }
  a.dense_features = a.features.dense();
  a.feature_graph = load_snapshot(dir / "feature_graph.tsv", 0, corpus.kg.registry, nullptr,
                                  GraphKind::feature);
  a.feature_pools = SamplePools::load(dir / "pools" / "feature.jsonl");
  a.entity_seqs = entity_sequences(corpus.kg.registry, a.vocab, max_seq_len);
  return a;
}

SamplePools load_relation_pools(const fs::path& dir, int t1, int t2) {
  const auto p = relation_pools_path(dir, t1, t2);
  if (!fs::exists(p)) throw DataError("missing relation pools " + p.string());
  return SamplePools::load(p);
}

int default_target_year(const TemporalKG& kg, int train_year) {
  if (!kg.has_year(train_year)) {
    throw UsageError("train year " + std::to_string(train_year) + " not in the dataset");
  }
  if (kg.has_year(train_year + 1)) return train_year + 1;
  if (kg.has_year(train_year - 1)) return train_year - 1;
  return train_year;
}

TrainData make_train_data(const Corpus& corpus, const Assets& assets, int train_year,
                          int target_year, const SamplePools& relation_pools,
                          std::size_t max_seq_len) {
  TrainData d;
  d.vocab_size = assets.vocab.size();
  d.entity_seqs = assets.entity_seqs;
  for (const auto& m : corpus.train) {
    if (m.year != train_year) continue;
    d.mention_seqs.push_back(build_mention_seq(m, assets.vocab, max_seq_len));
    d.gold.push_back(corpus.kg.registry.id_of(m.gold_qid));
  }
  if (d.mention_seqs.empty()) {
    throw DataError("empty training split for year " + std::to_string(train_year));
  }
  d.features = assets.dense_features;
  d.train_graph = corpus.kg.snapshot(train_year);
  d.target_graph = corpus.kg.snapshot(target_year);
  d.feature_graph = assets.feature_graph;
  d.relation_pools = relation_pools;
  d.feature_pools = assets.feature_pools;
  return d;
}

TestSplit make_test_split(const Corpus& corpus, const Vocabulary& vocab, int year,
                          std::size_t max_seq_len) {
  TestSplit s;
  s.year = year;
  for (const auto& m : corpus.test) {
    if (m.year != year) continue;
    s.mention_seqs.push_back(build_mention_seq(m, vocab, max_seq_len));
    s.gold.push_back(corpus.kg.registry.id_of(m.gold_qid));
    s.categories.push_back(m.category);
  }
  return s;
}

std::vector<std::size_t> gold_degrees(const TestSplit& split, const SnapshotGraph& graph) {
  std::vector<std::size_t> out;
  out.reserve(split.gold.size());
  for (auto g : split.gold) out.push_back(degree(graph, g));
  return out;
}

GapMatrix run_gap_matrix(const std::map<int, Checkpoint>& checkpoints, const Corpus& corpus,
                         const Assets& assets, const EvalConfig& cfg,
                         std::size_t neighbor_threshold, std::size_t max_seq_len,
                         std::size_t workers) {
  GapMatrix m;
  m.years = corpus.kg.years();
  std::map<int, TestSplit> splits;
  for (int y : m.years) splits[y] = make_test_split(corpus, assets.vocab, y, max_seq_len);
  for (const auto& [train_year, ckpt] : checkpoints) {
    for (int test_year : m.years) {
      const EvalGraph graph{&assets.dense_features, &corpus.kg.snapshot(test_year),
                            neighbor_threshold};
      m.cells[{train_year, test_year}] = evaluate_split(ckpt, assets.entity_seqs, graph,
                                                        splits[test_year], train_year, cfg, workers);
    }
  }
  return m;
}

}  // namespace cycle
