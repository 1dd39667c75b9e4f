#pragma once
// Entity registry, mention corpus and yearly snapshot graphs.
//
// Dense internal ids are assigned once from the entity file (file order) and
// shared by every snapshot, so cross-year set algebra is plain index work.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace cycle {

using NodeId = std::uint32_t;

struct EntityRecord {
  std::string qid;
  std::string title;
  std::string description;
  NodeId internal_id = 0;
};

class EntityRegistry {
 public:
  EntityRegistry() = default;

  // Appends a record and returns its internal id. Throws DataError on a
  // duplicate qid or an empty title.
  NodeId add(std::string qid, std::string title, std::string description);

  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }
  const EntityRecord& at(NodeId id) const;
  std::optional<NodeId> find(const std::string& qid) const;
  // Like find() but throws DataError naming the qid.
  NodeId id_of(const std::string& qid) const;

  std::span<const EntityRecord> records() const { return records_; }

  bool operator==(const EntityRegistry& other) const;

 private:
  std::vector<EntityRecord> records_;
  std::unordered_map<std::string, NodeId> by_qid_;
};

enum class MentionCategory { continual, new_entity };

std::string to_string(MentionCategory c);
MentionCategory parse_category(const std::string& s);

struct MentionRecord {
  std::vector<std::string> context_left;
  std::vector<std::string> mention;
  std::vector<std::string> context_right;
  std::string gold_qid;
  MentionCategory category = MentionCategory::continual;
  int year = 0;

  bool operator==(const MentionRecord&) const = default;
};

enum class GraphKind { relation, feature };

std::string to_string(GraphKind k);

using Edge = std::pair<NodeId, NodeId>;

// Undirected graph in compressed-row form. Rows are sorted and unique, the
// diagonal is empty and adjacency is symmetric.
class SnapshotGraph {
 public:
  struct BuildStats {
    std::size_t self_loops = 0;
    std::size_t duplicates = 0;
  };

  SnapshotGraph() = default;

  // Builds from an unordered edge list. Self-loops are skipped, repeated
  // pairs (in either orientation) are merged.
  static SnapshotGraph from_edges(std::size_t n, int year, GraphKind kind,
                                  std::span<const Edge> edges,
                                  BuildStats* stats = nullptr);

  int year() const { return year_; }
  std::size_t n() const { return n_; }
  GraphKind kind() const { return kind_; }

  std::size_t degree(NodeId node) const;
  std::span<const NodeId> neighbors(NodeId node) const;
  bool has_edge(NodeId i, NodeId j) const;
  std::size_t edge_count() const { return adjacency_.size() / 2; }
  // Each undirected edge once, as (lo, hi), ordered.
  std::vector<Edge> edges() const;

  std::span<const std::size_t> row_offsets() const { return offsets_; }
  std::span<const NodeId> column_indices() const { return adjacency_; }

  bool operator==(const SnapshotGraph& other) const = default;

 private:
  void check_node(NodeId node) const;

  int year_ = 0;
  std::size_t n_ = 0;
  GraphKind kind_ = GraphKind::relation;
  std::vector<std::size_t> offsets_{0};
  std::vector<NodeId> adjacency_;
};

// Free-function form used throughout the pipeline and the degree analysis.
std::size_t degree(const SnapshotGraph& graph, NodeId node);

struct SnapshotLoadStats {
  std::size_t kept = 0;
  std::size_t dropped_unresolved = 0;
  std::size_t dropped_self_loops = 0;
  std::size_t duplicates = 0;
};

struct TemporalKG {
  EntityRegistry registry;
  std::vector<SnapshotGraph> snapshots;  // one relation graph per year

  std::vector<int> years() const;
  const SnapshotGraph& snapshot(int year) const;
  bool has_year(int year) const;
  // Throws DataError unless years are strictly increasing and every
  // snapshot matches the registry size.
  void validate() const;
};

EntityRegistry load_entities(const std::filesystem::path& path);
void save_entities(const std::filesystem::path& path, const EntityRegistry& registry);

// Mentions whose gold qid does not resolve are a hard error.
std::vector<MentionRecord> load_mentions(const std::filesystem::path& path,
                                         const EntityRegistry& registry);
void save_mentions(const std::filesystem::path& path,
                   std::span<const MentionRecord> mentions);

SnapshotGraph load_snapshot(const std::filesystem::path& path, int year,
                            const EntityRegistry& registry,
                            SnapshotLoadStats* stats = nullptr,
                            GraphKind kind = GraphKind::relation);
void save_snapshot(const std::filesystem::path& path, const SnapshotGraph& graph,
                   const EntityRegistry& registry,
                   const std::vector<std::string>& header_comments = {});

}  // namespace cycle
