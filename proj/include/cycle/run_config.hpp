#pragma once
// Flat key=value run configuration shared by every subcommand.
//
// Resolution order: built-in defaults, then a config file, then CYCLE_*
// environment variables, then command-line overrides. Unknown keys are
// rejected at every layer.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "cycle/dataset.hpp"
#include "cycle/eval.hpp"
#include "cycle/synth.hpp"
#include "cycle/trainer.hpp"

namespace cycle {

std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t v);

class RunConfig {
 public:
  RunConfig();

  // Throws UsageError for an unknown key or a value of the wrong type.
  void set(const std::string& key, const std::string& value);
  // "key=value" form.
  void set_assignment(const std::string& assignment);
  // Blank lines and lines starting with '#' are skipped.
  void load_file(const std::filesystem::path& path);
  // CYCLE_TRAIN_LR overrides train.lr, and so on. `getenv` is injectable for
  // tests.
  void apply_env(const std::function<const char*(const char*)>& getenv_fn);

  const std::string& get(const std::string& key) const;
  double get_double(const std::string& key) const;
  std::int64_t get_int(const std::string& key) const;
  std::size_t get_size(const std::string& key) const;
  bool get_bool(const std::string& key) const;

  static const std::vector<std::string>& keys();
  static std::string env_name(const std::string& key);

  // Sorted "key=value" lines.
  std::string text() const;
  nlohmann::json to_json() const;
  // FNV-1a 64 of text(), hex.
  std::string hash() const;
  // Hash of the keys that determine dataset contents only.
  std::string dataset_hash() const;

  SynthConfig synth() const;
  TokenFilterConfig token_filter() const;
  FeatureGraphConfig feature_graph() const;
  std::size_t negative_cap() const { return get_size("dataset.negative_cap"); }
  std::size_t max_sequence_length() const { return get_size("dataset.max_seq_len"); }
  // Years of 0 are resolved by the caller against the dataset.
  TrainConfig train() const;
  EvalConfig eval() const;
  std::size_t workers() const { return get_size("workers"); }

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace cycle
