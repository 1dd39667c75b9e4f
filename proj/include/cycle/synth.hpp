#pragma once
// Seeded synthetic temporal KG with topic drift and aligned mentions.
//
// Every entity has a base topic that fixes its description, and a current
// topic that may switch from year to year. Relation edges are rewired toward
// the current topic and mention contexts are drawn from it, so a model that
// only reads descriptions falls behind as the years pass.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "cycle/store.hpp"

namespace cycle {

struct SynthConfig {
  std::size_t n = 500;
  int first_year = 2019;
  std::size_t years = 4;
  std::size_t topics = 10;
  std::size_t edges_per_entity = 4;  // mean initial degree
  double drift = 0.15;               // rho
  std::size_t train_mentions = 2;    // per active entity per year
  std::size_t test_mentions = 2;
  std::size_t vocab_size = 80;       // topic words, split evenly across topics
  std::size_t description_words = 12;
  std::size_t context_words = 4;     // per side
  std::size_t name_share = 4;        // entities per surface name
  double new_fraction = 0.1;
  bool power_law = false;
  bool growth = false;  // new entities arrive with fresh edges
  std::uint64_t seed = 0;

  void validate() const;
  std::vector<int> year_list() const;
};

struct SynthEntityState {
  std::size_t base_topic = 0;
  std::vector<std::size_t> topic_by_year;
  int start_year = 0;
  bool is_new = false;
};

struct SynthDataset {
  TemporalKG kg;
  std::vector<MentionRecord> train;
  std::vector<MentionRecord> test;
  std::vector<SynthEntityState> states;
  std::vector<std::size_t> rewired_by_year;  // edges rewired into each year
};

// Throws DataError("infeasible edge budget") when a rewire has no target.
SynthDataset generate(const SynthConfig& cfg);

// Writes entities.jsonl, mentions.train.jsonl, mentions.test.jsonl,
// edges_<year>.tsv and manifest.json.
void write_dataset(const std::filesystem::path& dir, const SynthDataset& data,
                   const std::string& dataset_hash, const std::string& config_hash,
                   const nlohmann::json& config);

}  // namespace cycle
