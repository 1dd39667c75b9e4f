#include "cycle/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

#include "cycle/error.hpp"
#include "cycle/random.hpp"

namespace cycle {

using nlohmann::json;

void TokenFilterConfig::validate() const {
  if (min_count == 0 || min_count > max_count) {
    throw UsageError("token filter needs 0 < min_count <= max_count");
  }
}

Tensor FeatureMatrix::dense() const {
  Tensor out({n, m});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (auto c : rows[i]) out(i, c) = 1.0;
  }
  return out;
}

void FeatureMatrix::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << n << ' ' << m << '\n';
  for (const auto& row : rows) {
    for (std::size_t k = 0; k < row.size(); ++k) {
      if (k) out << ' ';
      out << row[k];
    }
    out << '\n';
  }
}

FeatureMatrix FeatureMatrix::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  FeatureMatrix fm;
  std::string line;
  if (!std::getline(in, line)) throw DataError(path.string() + ": missing header");
  {
    std::istringstream hs(line);
    if (!(hs >> fm.n >> fm.m)) throw DataError(path.string() + ": malformed header");
  }
  fm.rows.resize(fm.n);
  for (std::size_t i = 0; i < fm.n; ++i) {
    if (!std::getline(in, line)) {
      throw DataError(path.string() + ": expected " + std::to_string(fm.n) + " rows");
    }
    std::istringstream ls(line);
    std::uint32_t c;
    while (ls >> c) {
      if (c >= fm.m) {
        throw DataError(path.string() + ":" + std::to_string(i + 2) + ": column " +
                        std::to_string(c) + " >= m");
      }
      fm.rows[i].push_back(c);
    }
    auto& row = fm.rows[i];
    if (!std::is_sorted(row.begin(), row.end()) ||
        std::adjacent_find(row.begin(), row.end()) != row.end()) {
      throw DataError(path.string() + ":" + std::to_string(i + 2) +
                      ": columns must be sorted and unique");
    }
  }
  return fm;
}

FeatureMatrix build_feature_matrix(const EntityRegistry& registry,
                                   const DescriptionTokenizer& tokenizer,
                                   const TokenFilterConfig& cfg) {
  cfg.validate();
  std::vector<std::vector<TokenId>> tokens;
  tokens.reserve(registry.size());
  std::map<TokenId, std::size_t> counts;
  for (const auto& e : registry.records()) {
    tokens.push_back(tokenizer(e.description));
    for (auto t : tokens.back()) ++counts[t];
  }

  FeatureMatrix fm;
  fm.n = registry.size();
  for (const auto& [tok, count] : counts) {
    if (count >= cfg.min_count && count <= cfg.max_count) {
      fm.vocab.emplace(tok, static_cast<std::uint32_t>(fm.column_tokens.size()));
      fm.column_tokens.push_back(tok);
    }
  }
  fm.m = fm.column_tokens.size();
  if (fm.m == 0) throw DataError("empty vocabulary");

  fm.rows.resize(fm.n);
  for (std::size_t i = 0; i < fm.n; ++i) {
    std::set<std::uint32_t> cols;
    for (auto t : tokens[i]) {
      if (auto it = fm.vocab.find(t); it != fm.vocab.end()) cols.insert(it->second);
    }
    fm.rows[i].assign(cols.begin(), cols.end());
  }
  return fm;
}

std::vector<double> FeatureRowEmbedder::embed(const EntityRecord& entity) const {
  if (entity.internal_id >= features_.rows.size()) {
    throw DataError("no feature row for " + entity.qid);
  }
  std::vector<double> v(features_.m, 0.0);
  const auto& row = features_.rows[entity.internal_id];
  if (row.empty()) return v;
  const double w = 1.0 / std::sqrt(static_cast<double>(row.size()));
  for (auto c : row) v[c] = w;
  return v;
}

TableEmbedder::TableEmbedder(std::map<std::string, std::vector<double>> table)
    : table_(std::move(table)) {
  for (const auto& [qid, v] : table_) {
    if (dim_ == 0) dim_ = v.size();
    if (v.size() != dim_) throw DataError("embedding for " + qid + " has inconsistent width");
  }
}

TableEmbedder TableEmbedder::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::map<std::string, std::vector<double>> table;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw DataError("malformed embedding line at " + path.string() + ":" +
                      std::to_string(line_no));
    }
    std::istringstream vs(line.substr(tab + 1));
    std::vector<double> v;
    double x;
    while (vs >> x) v.push_back(x);
    table[line.substr(0, tab)] = std::move(v);
  }
  return TableEmbedder(std::move(table));
}

std::vector<double> TableEmbedder::embed(const EntityRecord& entity) const {
  auto it = table_.find(entity.qid);
  if (it == table_.end()) throw DataError("no embedding for " + entity.qid);
  return it->second;
}

Tensor embed_descriptions(const EntityRegistry& registry, const DescriptionEmbedder& provider) {
  const std::size_t d = provider.dim();
  Tensor out({registry.size(), d});
  for (const auto& e : registry.records()) {
    std::vector<double> v;
    try {
      v = provider.embed(e);
    } catch (const std::exception& ex) {
      throw DataError("description embedding failed for " + e.qid + ": " + ex.what());
    }
    if (v.size() != d) {
      throw DataError("description embedding for " + e.qid + " has width " +
                      std::to_string(v.size()) + ", expected " + std::to_string(d));
    }
    std::copy(v.begin(), v.end(), out.row(e.internal_id).begin());
  }
  return out;
}

SnapshotGraph build_feature_graph(const Tensor& embeddings, const FeatureGraphConfig& cfg,
                                  int year) {
  const std::size_t n = embeddings.rows();
  if (embeddings.rank() != 2) throw UsageError("embeddings must be an n x d matrix");
  if (cfg.k < 1 || cfg.k >= n) {
    throw UsageError("feature graph needs 1 <= k < n (k=" + std::to_string(cfg.k) +
                     ", n=" + std::to_string(n) + ")");
  }
  const std::size_t d = embeddings.cols();
  // Unit rows so every pairwise cosine is a plain dot product.
  Tensor unit({n, d});
  std::vector<bool> degenerate(n, false);
  for (std::size_t i = 0; i < n; ++i) {
    const double norm = l2_norm(embeddings.row(i));
    if (norm == 0.0) {
      degenerate[i] = true;
      continue;
    }
    for (std::size_t c = 0; c < d; ++c) unit(i, c) = embeddings(i, c) / norm;
  }

  std::vector<Edge> edges;
  std::vector<std::pair<double, NodeId>> cand;
  for (std::size_t i = 0; i < n; ++i) {
    if (degenerate[i]) continue;
    cand.clear();
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i || degenerate[j]) continue;
      cand.emplace_back(dot(unit.row(i), unit.row(j)), static_cast<NodeId>(j));
    }
    const std::size_t take = std::min(cfg.k, cand.size());
    std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(take), cand.end(),
                      [](const auto& a, const auto& b) {
                        return a.first != b.first ? a.first > b.first : a.second < b.second;
                      });
    for (std::size_t r = 0; r < take; ++r) {
      edges.emplace_back(static_cast<NodeId>(i), cand[r].second);
    }
  }
  return SnapshotGraph::from_edges(n, year, GraphKind::feature, edges);
}

// ---------------------------------------------------------------------------
// Sample pools

SamplePools diff_pools(const SnapshotGraph& t1_graph, const SnapshotGraph& t2_graph) {
  if (t1_graph.n() != t2_graph.n()) {
    throw UsageError("diff_pools: snapshots have n=" + std::to_string(t1_graph.n()) + " and " +
                     std::to_string(t2_graph.n()));
  }
  if (t1_graph.kind() != GraphKind::relation || t2_graph.kind() != GraphKind::relation) {
    throw UsageError("diff_pools expects relation graphs");
  }
  SamplePools pools;
  pools.t1 = t1_graph.year();
  pools.t2 = t2_graph.year();
  pools.kind = GraphKind::relation;
  const std::size_t n = t1_graph.n();
  pools.positives.resize(n);
  pools.negatives.resize(n);
  for (NodeId i = 0; i < n; ++i) {
    const auto before = t1_graph.neighbors(i);
    const auto after = t2_graph.neighbors(i);
    std::set_difference(after.begin(), after.end(), before.begin(), before.end(),
                        std::back_inserter(pools.positives[i]));
    std::set_difference(before.begin(), before.end(), after.begin(), after.end(),
                        std::back_inserter(pools.negatives[i]));
  }
  return pools;
}

SamplePools pools_feature(const SnapshotGraph& feature_graph, std::size_t negative_cap,
                          std::uint64_t seed) {
  if (feature_graph.kind() != GraphKind::feature) {
    throw UsageError("pools_feature expects a feature graph");
  }
  SamplePools pools;
  pools.t1 = pools.t2 = feature_graph.year();
  pools.kind = GraphKind::feature;
  const std::size_t n = feature_graph.n();
  pools.positives.resize(n);
  pools.negatives.resize(n);
  std::vector<NodeId> non_neighbors;
  for (NodeId i = 0; i < n; ++i) {
    const auto nb = feature_graph.neighbors(i);
    pools.positives[i].assign(nb.begin(), nb.end());
    non_neighbors.clear();
    for (NodeId j = 0; j < n; ++j) {
      if (j != i && !std::binary_search(nb.begin(), nb.end(), j)) non_neighbors.push_back(j);
    }
    Rng rng(derive_seed(seed, {i}));
    pools.negatives[i] = sample_without_replacement(non_neighbors, negative_cap, rng);
  }
  return pools;
}

void SamplePools::save(const std::filesystem::path& path, const std::string& config_hash) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  json header = {{"t1", t1}, {"t2", t2}, {"kind", to_string(kind)}};
  if (!config_hash.empty()) header["config_hash"] = config_hash;
  out << header.dump() << '\n';
  for (std::size_t i = 0; i < positives.size(); ++i) {
    json row = {{"node", i}, {"positives", positives[i]}, {"negatives", negatives[i]}};
    out << row.dump() << '\n';
  }
}

SamplePools SamplePools::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  SamplePools pools;
  std::string line;
  std::size_t line_no = 0;
  try {
    if (!std::getline(in, line)) throw DataError(path.string() + ": missing header");
    ++line_no;
    const auto header = json::parse(line);
    pools.t1 = header.at("t1").get<int>();
    pools.t2 = header.at("t2").get<int>();
    const auto kind = header.at("kind").get<std::string>();
    if (kind != "relation" && kind != "feature") throw DataError("unknown pool kind " + kind);
    pools.kind = kind == "relation" ? GraphKind::relation : GraphKind::feature;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      const auto row = json::parse(line);
      const auto node = row.at("node").get<std::size_t>();
      if (node != pools.positives.size()) {
        throw DataError(path.string() + ":" + std::to_string(line_no) +
                        ": nodes must be listed densely in order");
      }
      pools.positives.push_back(row.at("positives").get<std::vector<NodeId>>());
      pools.negatives.push_back(row.at("negatives").get<std::vector<NodeId>>());
    }
  } catch (const json::exception& e) {
    throw DataError("malformed pools file at " + path.string() + ":" +
                    std::to_string(line_no) + ": " + e.what());
  }
  return pools;
}

}  // namespace cycle
