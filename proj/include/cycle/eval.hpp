#pragma once
// Retrieval evaluation: recall@N, year-gap matrices, boost, and the
// degree-bucketed improvement report.

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "cycle/store.hpp"
#include "cycle/trainer.hpp"

namespace cycle {

enum class Direction { forward_only, forward_and_backward };
std::string to_string(Direction d);
Direction parse_direction(const std::string& s);

struct EvalConfig {
  std::vector<std::size_t> ns{1, 2, 4, 8, 16, 32, 64};
  Direction direction = Direction::forward_and_backward;

  // N values positive and strictly increasing.
  void validate() const;
};

struct RecallTable {
  std::vector<std::size_t> ns;
  std::vector<double> recall;  // aligned with ns
  std::size_t queries = 0;
  std::size_t flagged = 0;  // gold missing from the universe

  double at(std::size_t n) const;
  bool operator==(const RecallTable&) const = default;
};

// Candidates ordered by descending score, ties to the lower id.
std::vector<NodeId> rank_candidates(std::span<const double> scores);
// Zero-based position of `gold` under the same order, computed without a
// sort: entities that score higher, or equal with a lower id.
std::size_t gold_rank(std::span<const double> scores, NodeId gold);

RecallTable recall_at_n(std::span<const std::vector<NodeId>> ranked, std::span<const NodeId> gold,
                        std::span<const std::size_t> ns);
// Zero-based ranks; nullopt means the gold entity is not a candidate.
RecallTable recall_from_ranks(std::span<const std::optional<std::size_t>> ranks,
                              std::span<const std::size_t> ns);

// Test split for one year, already encoded.
struct TestSplit {
  int year = 0;
  std::vector<TokenSequence> mention_seqs;
  std::vector<NodeId> gold;
  std::vector<MentionCategory> categories;
};

struct EvalCell {
  int train_year = 0;
  int test_year = 0;
  std::vector<std::size_t> ranks;  // per query
  std::vector<NodeId> gold;
  std::vector<MentionCategory> categories;
  std::map<std::string, RecallTable> recall;  // "all", "continual", "new"

  bool operator==(const EvalCell&) const = default;
};

inline constexpr std::uint64_t kEvalEpoch = 0x0E7A;

// Graph-side inputs at test time: features plus the test year's relation
// graph.
struct EvalGraph {
  const Tensor* features = nullptr;
  const SnapshotGraph* relation = nullptr;
  std::size_t neighbor_threshold = 8;
};

// Scores every query against every entity of the universe.
EvalCell evaluate_split(const Checkpoint& ckpt, std::span<const TokenSequence> entity_seqs,
                        const EvalGraph& graph, const TestSplit& split, int train_year,
                        const EvalConfig& cfg, std::size_t workers = 1);

// Cells keyed by (train year, test year).
struct GapMatrix {
  std::vector<int> years;
  std::map<std::pair<int, int>, EvalCell> cells;
};

struct GapAggregate {
  int gap = 0;
  RecallTable recall;  // mean over contributing cells
  std::size_t cells = 0;
  std::size_t missing = 0;  // admissible pairs without a cell
};

// Mean over pairs with |dy| = g (both directions) or dy = g >= 0 (forward).
std::vector<GapAggregate> aggregate_by_gap(const GapMatrix& m, Direction dir,
                                           const std::string& category,
                                           std::span<const std::size_t> ns);

// 100 (model - baseline) / baseline; absent when baseline is 0.
std::optional<double> boost(double model_recall, double baseline_recall);

struct DegreeBucket {
  std::size_t lo = 0;  // inclusive
  std::size_t hi = 0;  // inclusive
  std::size_t count = 0;
  std::optional<double> mean;
};

struct DegreeBucketReport {
  std::vector<DegreeBucket> buckets;
  std::optional<double> slope;  // least squares, improvement on degree
  std::optional<double> intercept;
  std::size_t points = 0;
};

struct LeastSquares {
  double slope = 0.0;
  double intercept = 0.0;
};
// Absent when x has no spread.
std::optional<LeastSquares> least_squares(std::span<const double> x, std::span<const double> y);

// Buckets {0}, {1}, {2,3}, {4..7}, ... up to the largest observed degree.
std::vector<std::pair<std::size_t, std::size_t>> power_of_two_buckets(std::size_t max_degree);

DegreeBucketReport degree_report(std::span<const double> improvements,
                                 std::span<const std::size_t> degrees,
                                 std::span<const std::pair<std::size_t, std::size_t>> buckets);

// Per-query recall@1 improvement (model hit minus baseline hit) of two cells
// evaluated on the same split.
std::vector<double> hit1_improvements(const EvalCell& model, const EvalCell& baseline);

// JSON building blocks for the report document.
nlohmann::json to_json(const RecallTable& t);
nlohmann::json to_json(const EvalCell& c);
nlohmann::json to_json(const DegreeBucketReport& r);

// Cell with its per-query ranks, gold ids and categories, enough to rebuild
// the recall tables for any N list.
nlohmann::json cell_record(const EvalCell& c);
// Throws DataError on a malformed record.
EvalCell cell_from_record(const nlohmann::json& j, std::span<const std::size_t> ns);

struct ReportInputs {
  nlohmann::json config;
  std::string config_hash;
  const GapMatrix* model = nullptr;
  const GapMatrix* baseline = nullptr;  // optional
  std::optional<DegreeBucketReport> degree;
  std::vector<std::size_t> ns;
};

// {config, config_hash, per_cell, per_gap, boosts, degree_buckets}
nlohmann::json build_report(const ReportInputs& in);

// Rows: N x {baseline, model, boost}; columns: category x gap. Forward and
// backward aggregates.
std::string table_tsv(const ReportInputs& in, Direction dir);

}  // namespace cycle
