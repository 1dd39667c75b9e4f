#pragma once
// Graph-side inputs derived from the corpus: the token feature matrix, the
// description k-NN feature graph and the positive/negative sample pools.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "cycle/store.hpp"
#include "cycle/tensor.hpp"
#include "cycle/tokenizer.hpp"

namespace cycle {

// Inclusive bounds on corpus-wide token occurrence counts.
struct TokenFilterConfig {
  std::size_t min_count = 46;
  std::size_t max_count = 200;

  void validate() const;
};

struct FeatureMatrix {
  std::size_t n = 0;
  std::size_t m = 0;
  std::vector<std::vector<std::uint32_t>> rows;  // sorted, unique column ids
  std::vector<TokenId> column_tokens;            // column -> token id (empty after load())
  std::map<TokenId, std::uint32_t> vocab;        // token id -> column

  Tensor dense() const;
  bool operator==(const FeatureMatrix&) const = default;

  // Header "n m", then one line of space-separated column ids per entity.
  void save(const std::filesystem::path& path) const;
  static FeatureMatrix load(const std::filesystem::path& path);
};

using DescriptionTokenizer = std::function<std::vector<TokenId>(const std::string&)>;

// Token kept iff min_count <= total occurrences over all descriptions <=
// max_count. Throws DataError("empty vocabulary") if nothing survives.
FeatureMatrix build_feature_matrix(const EntityRegistry& registry,
                                   const DescriptionTokenizer& tokenizer,
                                   const TokenFilterConfig& cfg = {});

class DescriptionEmbedder {
 public:
  virtual ~DescriptionEmbedder() = default;
  virtual std::size_t dim() const = 0;
  virtual std::vector<double> embed(const EntityRecord& entity) const = 0;
};

// L2-normalised feature-matrix row (bag of retained tokens); empty rows embed
// to the zero vector.
class FeatureRowEmbedder final : public DescriptionEmbedder {
 public:
  explicit FeatureRowEmbedder(const FeatureMatrix& features) : features_(features) {}
  std::size_t dim() const override { return features_.m; }
  std::vector<double> embed(const EntityRecord& entity) const override;

 private:
  const FeatureMatrix& features_;
};

// Precomputed vectors keyed by qid. File: one line per entity,
// "qid<TAB>v1 v2 ... vd".
class TableEmbedder final : public DescriptionEmbedder {
 public:
  static TableEmbedder load(const std::filesystem::path& path);
  explicit TableEmbedder(std::map<std::string, std::vector<double>> table);

  std::size_t dim() const override { return dim_; }
  std::vector<double> embed(const EntityRecord& entity) const override;

 private:
  std::map<std::string, std::vector<double>> table_;
  std::size_t dim_ = 0;
};

// Row i embeds entity i. Any provider failure is rethrown as DataError naming
// the qid.
Tensor embed_descriptions(const EntityRegistry& registry, const DescriptionEmbedder& provider);

struct FeatureGraphConfig {
  std::size_t k = 10;
};

// Exact cosine k-NN. Ties go to the lower internal id; zero rows neither
// select nor get selected. Directed selections are symmetrised by union.
SnapshotGraph build_feature_graph(const Tensor& embeddings, const FeatureGraphConfig& cfg,
                                  int year = 0);

struct SamplePools {
  int t1 = 0;
  int t2 = 0;
  GraphKind kind = GraphKind::relation;
  std::vector<std::vector<NodeId>> positives;  // sorted
  std::vector<std::vector<NodeId>> negatives;  // sorted

  std::size_t n() const { return positives.size(); }
  bool operator==(const SamplePools&) const = default;

  // Header object {t1, t2, kind[, config_hash]}, then {node, positives,
  // negatives} per node.
  void save(const std::filesystem::path& path, const std::string& config_hash = {}) const;
  static SamplePools load(const std::filesystem::path& path);
};

// Positives gained and negatives lost between two relation snapshots.
SamplePools diff_pools(const SnapshotGraph& t1_graph, const SnapshotGraph& t2_graph);

// Positives are direct neighbours; negatives a seeded uniform sample of at
// most negative_cap non-neighbours.
SamplePools pools_feature(const SnapshotGraph& feature_graph, std::size_t negative_cap,
                          std::uint64_t seed);

}  // namespace cycle
