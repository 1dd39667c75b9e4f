#include "cycle/store.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "cycle/error.hpp"
#include "cycle/tokenizer.hpp"

namespace cycle {

using nlohmann::json;

NodeId EntityRegistry::add(std::string qid, std::string title, std::string description) {
  if (qid.empty()) throw DataError("entity with empty qid");
  if (title.empty()) throw DataError("entity " + qid + " has an empty title");
  if (by_qid_.contains(qid)) throw DataError("duplicate qid " + qid);
  const auto id = static_cast<NodeId>(records_.size());
  by_qid_.emplace(qid, id);
  records_.push_back({std::move(qid), std::move(title), std::move(description), id});
  return id;
}

const EntityRecord& EntityRegistry::at(NodeId id) const {
  if (id >= records_.size()) {
    throw UsageError("internal id " + std::to_string(id) + " out of range");
  }
  return records_[id];
}

std::optional<NodeId> EntityRegistry::find(const std::string& qid) const {
  auto it = by_qid_.find(qid);
  if (it == by_qid_.end()) return std::nullopt;
  return it->second;
}

NodeId EntityRegistry::id_of(const std::string& qid) const {
  auto id = find(qid);
  if (!id) throw DataError("unknown qid " + qid);
  return *id;
}

bool EntityRegistry::operator==(const EntityRegistry& other) const {
  if (records_.size() != other.records_.size()) return false;
  for (std::size_t i = 0; i < records_.size(); ++i) {
    const auto& a = records_[i];
    const auto& b = other.records_[i];
    if (a.qid != b.qid || a.title != b.title || a.description != b.description ||
        a.internal_id != b.internal_id) {
      return false;
    }
  }
  return true;
}

std::string to_string(MentionCategory c) {
  return c == MentionCategory::continual ? "continual" : "new";
}

MentionCategory parse_category(const std::string& s) {
  if (s == "continual") return MentionCategory::continual;
  if (s == "new") return MentionCategory::new_entity;
  throw DataError("unknown mention category '" + s + "'");
}

std::string to_string(GraphKind k) { return k == GraphKind::relation ? "relation" : "feature"; }

// ---------------------------------------------------------------------------
// SnapshotGraph

SnapshotGraph SnapshotGraph::from_edges(std::size_t n, int year, GraphKind kind,
                                        std::span<const Edge> edges, BuildStats* stats) {
  BuildStats local;
  std::vector<Edge> directed;
  directed.reserve(edges.size() * 2);
  for (const auto& [u, v] : edges) {
    if (u >= n || v >= n) {
      throw UsageError("edge (" + std::to_string(u) + "," + std::to_string(v) +
                       ") out of range for n=" + std::to_string(n));
    }
    if (u == v) {
      ++local.self_loops;
      continue;
    }
    directed.emplace_back(u, v);
    directed.emplace_back(v, u);
  }
  std::sort(directed.begin(), directed.end());
  const auto before = directed.size();
  directed.erase(std::unique(directed.begin(), directed.end()), directed.end());
  local.duplicates = (before - directed.size()) / 2;

  SnapshotGraph g;
  g.year_ = year;
  g.n_ = n;
  g.kind_ = kind;
  g.offsets_.assign(n + 1, 0);
  g.adjacency_.reserve(directed.size());
  for (const auto& [u, v] : directed) {
    ++g.offsets_[u + 1];
    g.adjacency_.push_back(v);
  }
  for (std::size_t i = 0; i < n; ++i) g.offsets_[i + 1] += g.offsets_[i];
  if (stats) *stats = local;
  return g;
}

void SnapshotGraph::check_node(NodeId node) const {
  if (node >= n_) {
    throw UsageError("node " + std::to_string(node) + " out of range for n=" +
                     std::to_string(n_));
  }
}

std::size_t SnapshotGraph::degree(NodeId node) const {
  check_node(node);
  return offsets_[node + 1] - offsets_[node];
}

std::span<const NodeId> SnapshotGraph::neighbors(NodeId node) const {
  check_node(node);
  return std::span<const NodeId>(adjacency_).subspan(offsets_[node],
                                                     offsets_[node + 1] - offsets_[node]);
}

bool SnapshotGraph::has_edge(NodeId i, NodeId j) const {
  const auto row = neighbors(i);
  return std::binary_search(row.begin(), row.end(), j);
}

std::vector<Edge> SnapshotGraph::edges() const {
  std::vector<Edge> out;
  out.reserve(edge_count());
  for (NodeId u = 0; u < n_; ++u) {
    for (NodeId v : neighbors(u)) {
      if (u < v) out.emplace_back(u, v);
    }
  }
  return out;
}

std::size_t degree(const SnapshotGraph& graph, NodeId node) { return graph.degree(node); }

// ---------------------------------------------------------------------------
// TemporalKG

std::vector<int> TemporalKG::years() const {
  std::vector<int> out;
  for (const auto& s : snapshots) out.push_back(s.year());
  return out;
}

bool TemporalKG::has_year(int year) const {
  return std::any_of(snapshots.begin(), snapshots.end(),
                     [&](const SnapshotGraph& s) { return s.year() == year; });
}

const SnapshotGraph& TemporalKG::snapshot(int year) const {
  for (const auto& s : snapshots) {
    if (s.year() == year) return s;
  }
  throw DataError("no snapshot for year " + std::to_string(year));
}

void TemporalKG::validate() const {
  for (std::size_t i = 0; i < snapshots.size(); ++i) {
    if (snapshots[i].n() != registry.size()) {
      throw DataError("snapshot " + std::to_string(snapshots[i].year()) + " has n=" +
                      std::to_string(snapshots[i].n()) + ", registry has " +
                      std::to_string(registry.size()));
    }
    if (i > 0 && snapshots[i].year() <= snapshots[i - 1].year()) {
      throw DataError("snapshot years must be strictly increasing");
    }
  }
}

// ---------------------------------------------------------------------------
// File formats

namespace {

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

std::string where(const std::filesystem::path& path, std::size_t line_no) {
  return path.string() + ":" + std::to_string(line_no);
}

bool blank(const std::string& line) {
  return std::all_of(line.begin(), line.end(),
                     [](unsigned char c) { return std::isspace(c); });
}

std::vector<std::string> token_field(const json& obj, const char* key) {
  const auto& v = obj.at(key);
  if (v.is_string()) return tokenize(v.get<std::string>());
  return tokenize_all(v.get<std::vector<std::string>>());
}

}  // namespace

EntityRegistry load_entities(const std::filesystem::path& path) {
  auto in = open_in(path);
  EntityRegistry registry;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (blank(line)) continue;
    std::string qid, title, description;
    try {
      const auto obj = json::parse(line);
      qid = obj.at("qid").get<std::string>();
      title = obj.at("title").get<std::string>();
      description = obj.value("description", std::string{});
    } catch (const json::exception& e) {
      throw DataError("malformed entity record at " + where(path, line_no) + ": " + e.what());
    }
    try {
      registry.add(std::move(qid), std::move(title), std::move(description));
    } catch (const DataError& e) {
      throw DataError(std::string(e.what()) + " at " + where(path, line_no));
    }
  }
  return registry;
}

void save_entities(const std::filesystem::path& path, const EntityRegistry& registry) {
  auto out = open_out(path);
  for (const auto& r : registry.records()) {
    json obj = {{"qid", r.qid}, {"title", r.title}, {"description", r.description}};
    out << obj.dump() << '\n';
  }
}

std::vector<MentionRecord> load_mentions(const std::filesystem::path& path,
                                         const EntityRegistry& registry) {
  auto in = open_in(path);
  std::vector<MentionRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (blank(line)) continue;
    MentionRecord rec;
    try {
      const auto obj = json::parse(line);
      rec.context_left = token_field(obj, "context_left");
      rec.mention = token_field(obj, "mention");
      rec.context_right = token_field(obj, "context_right");
      rec.gold_qid = obj.at("label_qid").get<std::string>();
      rec.category = parse_category(obj.at("category").get<std::string>());
      rec.year = obj.at("year").get<int>();
    } catch (const json::exception& e) {
      throw DataError("malformed mention record at " + where(path, line_no) + ": " + e.what());
    }
    if (rec.mention.empty()) throw DataError("empty mention at " + where(path, line_no));
    if (!registry.find(rec.gold_qid)) {
      throw DataError("mention at " + where(path, line_no) + " references unknown qid " +
                      rec.gold_qid);
    }
    out.push_back(std::move(rec));
  }
  return out;
}

void save_mentions(const std::filesystem::path& path, std::span<const MentionRecord> mentions) {
  auto out = open_out(path);
  for (const auto& m : mentions) {
    json obj = {{"context_left", m.context_left},   {"mention", m.mention},
                {"context_right", m.context_right}, {"label_qid", m.gold_qid},
                {"category", to_string(m.category)}, {"year", m.year}};
    out << obj.dump() << '\n';
  }
}

SnapshotGraph load_snapshot(const std::filesystem::path& path, int year,
                            const EntityRegistry& registry, SnapshotLoadStats* stats,
                            GraphKind kind) {
  auto in = open_in(path);
  SnapshotLoadStats local;
  std::vector<Edge> edges;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (blank(line) || line.front() == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos) {
      throw DataError("malformed edge line at " + where(path, line_no));
    }
    const auto head = registry.find(line.substr(0, tab));
    const auto tail = registry.find(line.substr(tab + 1));
    if (!head || !tail) {
      ++local.dropped_unresolved;
      continue;
    }
    edges.emplace_back(*head, *tail);
  }
  SnapshotGraph::BuildStats build;
  auto g = SnapshotGraph::from_edges(registry.size(), year, kind, edges, &build);
  local.dropped_self_loops = build.self_loops;
  local.duplicates = build.duplicates;
  local.kept = g.edge_count();
  if (stats) *stats = local;
  return g;
}

void save_snapshot(const std::filesystem::path& path, const SnapshotGraph& graph,
                   const EntityRegistry& registry,
                   const std::vector<std::string>& header_comments) {
  auto out = open_out(path);
  for (const auto& c : header_comments) out << "# " << c << '\n';
  for (const auto& [u, v] : graph.edges()) {
    out << registry.at(u).qid << '\t' << registry.at(v).qid << '\n';
  }
}

}  // namespace cycle
