#include "cycle/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include "cycle/error.hpp"
#include "cycle/random.hpp"

namespace cycle {

using nlohmann::json;

void SynthConfig::validate() const {
  if (!(drift >= 0.0 && drift <= 1.0)) throw UsageError("drift rate must lie in [0, 1]");
  if (topics < 2) throw UsageError("need at least two topics");
  if (n < topics) throw UsageError("need at least as many entities as topics");
  if (years < 1) throw UsageError("need at least one year");
  if (edges_per_entity < 1) throw UsageError("edges per entity must be >= 1");
  if (vocab_size < topics) throw UsageError("vocabulary smaller than the topic count");
  if (name_share < 1) throw UsageError("name share must be >= 1");
  if (!(new_fraction >= 0.0 && new_fraction < 1.0)) throw UsageError("new fraction must lie in [0, 1)");
  if (description_words < 1) throw UsageError("descriptions need at least one topic word");
}

std::vector<int> SynthConfig::year_list() const {
  std::vector<int> out;
  for (std::size_t i = 0; i < years; ++i) out.push_back(first_year + static_cast<int>(i));
  return out;
}

namespace {

constexpr const char* kConsonants = "bdfgklmnprstvz";
constexpr const char* kVowels = "aeiou";
constexpr const char* kCommon[] = {"the", "a", "of", "is", "and"};

std::string syllables(std::size_t index, std::size_t count) {
  const std::size_t nc = 14, nv = 5;
  std::string out;
  for (std::size_t k = 0; k < count; ++k) {
    const std::size_t s = index % (nc * nv);
    index /= nc * nv;
    out += kConsonants[s / nv];
    out += kVowels[s % nv];
  }
  return out;
}

// Topic words are three syllables; names carry a trailing x so the two sets
// never meet.
std::string topic_word(std::size_t topic, std::size_t k, std::size_t per_topic) {
  return syllables(topic * per_topic + k, 3);
}
std::string name_word(std::size_t index) { return syllables(index, 2) + "x"; }

using Adjacency = std::vector<std::set<NodeId>>;

void link(Adjacency& adj, NodeId u, NodeId v) {
  adj[u].insert(v);
  adj[v].insert(u);
}
void unlink(Adjacency& adj, NodeId u, NodeId v) {
  adj[u].erase(v);
  adj[v].erase(u);
}

SnapshotGraph snapshot_of(const Adjacency& adj, int year) {
  std::vector<Edge> edges;
  for (NodeId u = 0; u < adj.size(); ++u) {
    for (NodeId v : adj[u]) {
      if (u < v) edges.emplace_back(u, v);
    }
  }
  return SnapshotGraph::from_edges(adj.size(), year, GraphKind::relation, edges);
}

std::size_t target_degree(const SynthConfig& cfg, Rng& rng) {
  if (cfg.power_law) {
    // Pareto tail with exponent 2.5, floored at 1.
    const double u = uniform_real(rng, 1e-12, 1.0);
    const double xmin = std::max(1.0, static_cast<double>(cfg.edges_per_entity) / 3.0);
    const double d = xmin * std::pow(u, -1.0 / 1.5);
    return std::clamp<std::size_t>(static_cast<std::size_t>(d), 1, cfg.n / cfg.topics);
  }
  return 1 + uniform_index(rng, 2 * cfg.edges_per_entity - 1);
}

std::vector<std::string> context(const SynthConfig& cfg, std::size_t topic,
                                 std::size_t per_topic, Rng& rng) {
  std::vector<std::string> out;
  for (std::size_t k = 0; k < cfg.context_words; ++k) {
    if (uniform_real(rng, 0.0, 1.0) < 0.75) {
      out.push_back(topic_word(topic, uniform_index(rng, per_topic), per_topic));
    } else {
      out.push_back(kCommon[uniform_index(rng, 5)]);
    }
  }
  return out;
}

}  // namespace

SynthDataset generate(const SynthConfig& cfg) {
  cfg.validate();
  const std::size_t n = cfg.n;
  const std::size_t per_topic = cfg.vocab_size / cfg.topics;
  const auto years = cfg.year_list();
  SynthDataset out;
  out.states.resize(n);

  // Base topics, names, arrival years.
  Rng setup(derive_seed(cfg.seed, {1}));
  std::vector<NodeId> order(n);
  std::iota(order.begin(), order.end(), NodeId{0});
  std::shuffle(order.begin(), order.end(), setup);
  std::vector<std::size_t> name_of(n);
  for (std::size_t k = 0; k < n; ++k) name_of[order[k]] = k / cfg.name_share;
  for (NodeId u = 0; u < n; ++u) {
    auto& st = out.states[u];
    st.base_topic = u % cfg.topics;
    st.start_year = 0;
    if (cfg.years > 1 && uniform_real(setup, 0.0, 1.0) < cfg.new_fraction) {
      st.is_new = true;
      st.start_year = 1 + static_cast<int>(uniform_index(setup, cfg.years - 1));
    }
  }

  for (NodeId u = 0; u < n; ++u) {
    const auto& st = out.states[u];
    Rng rng(derive_seed(cfg.seed, {2, u}));
    std::string desc = name_word(name_of[u]) + " is a";
    for (std::size_t k = 0; k < cfg.description_words; ++k) {
      desc += ' ' + topic_word(st.base_topic, uniform_index(rng, per_topic), per_topic);
      if (k % 3 == 2) desc += std::string(" ") + kCommon[uniform_index(rng, 5)];
    }
    out.kg.registry.add("Q" + std::to_string(1000 + u), name_word(name_of[u]), desc);
  }

  // Initial graph: stub matching inside each base topic.
  Adjacency adj(n);
  Rng edge_rng(derive_seed(cfg.seed, {3}));
  std::vector<std::vector<NodeId>> stubs(cfg.topics);
  for (NodeId u = 0; u < n; ++u) {
    const std::size_t d = target_degree(cfg, edge_rng);
    if (out.states[u].is_new) continue;
    for (std::size_t k = 0; k < d; ++k) stubs[out.states[u].base_topic].push_back(u);
  }
  for (auto& s : stubs) {
    std::shuffle(s.begin(), s.end(), edge_rng);
    for (std::size_t k = 0; k + 1 < s.size(); k += 2) {
      if (s[k] != s[k + 1]) link(adj, s[k], s[k + 1]);
    }
  }

  std::vector<std::size_t> topic(n);
  for (NodeId u = 0; u < n; ++u) topic[u] = out.states[u].base_topic;

  // One step before the first year so drift is already present there.
  for (std::size_t y = 0; y < cfg.years; ++y) {
    Rng step_rng(derive_seed(cfg.seed, {4, y}));
    auto active = [&](NodeId u) { return out.states[u].start_year <= static_cast<int>(y); };
    for (NodeId u = 0; u < n; ++u) {
      const bool was_active = y == 0 ? active(u) : out.states[u].start_year < static_cast<int>(y);
      if (was_active && uniform_real(step_rng, 0.0, 1.0) < cfg.drift) {
        topic[u] = (topic[u] + 1 + uniform_index(step_rng, cfg.topics - 1)) % cfg.topics;
      }
    }
    std::vector<std::vector<NodeId>> members(cfg.topics);
    for (NodeId u = 0; u < n; ++u) {
      if (active(u)) members[topic[u]].push_back(u);
    }
    if (cfg.growth) {
      for (NodeId u = 0; u < n; ++u) {
        if (out.states[u].start_year != static_cast<int>(y) || !out.states[u].is_new) continue;
        for (std::size_t k = 0; k < cfg.edges_per_entity; ++k) {
          std::vector<NodeId> cand;
          for (NodeId w : members[topic[u]]) {
            if (w != u && !adj[u].contains(w)) cand.push_back(w);
          }
          if (cand.empty()) break;
          link(adj, u, cand[uniform_index(step_rng, cand.size())]);
        }
      }
    }

    const Adjacency start = adj;
    std::size_t rewired = 0;
    for (NodeId u = 0; u < n; ++u) {
      const double want = cfg.drift * static_cast<double>(start[u].size());
      const auto budget = static_cast<std::size_t>(std::ceil(want - 1e-9));
      if (budget == 0) continue;
      // Edges to neighbours of another current topic go first.
      std::vector<NodeId> stale, fresh;
      for (NodeId v : start[u]) {
        if (!adj[u].contains(v)) continue;
        (topic[v] != topic[u] ? stale : fresh).push_back(v);
      }
      std::shuffle(stale.begin(), stale.end(), step_rng);
      std::shuffle(fresh.begin(), fresh.end(), step_rng);
      std::vector<NodeId> removable = std::move(stale);
      removable.insert(removable.end(), fresh.begin(), fresh.end());
      removable.resize(std::min(budget, removable.size()));
      for (NodeId v : removable) {
        // Prefer members native to the topic (base topic equals current).
        std::vector<NodeId> cand, native;
        for (NodeId w : members[topic[u]]) {
          if (w == u || start[u].contains(w) || adj[u].contains(w)) continue;
          cand.push_back(w);
          if (out.states[w].base_topic == topic[u]) native.push_back(w);
        }
        if (!native.empty()) cand = std::move(native);
        if (cand.empty()) {
          throw DataError("infeasible edge budget: entity " + std::to_string(u) + " in year " +
                          std::to_string(years[y]) + " has no rewiring target");
        }
        unlink(adj, u, v);
        link(adj, u, cand[uniform_index(step_rng, cand.size())]);
        ++rewired;
      }
    }
    out.rewired_by_year.push_back(rewired);
    for (NodeId u = 0; u < n; ++u) out.states[u].topic_by_year.push_back(topic[u]);
    out.kg.snapshots.push_back(snapshot_of(adj, years[y]));
  }

  // Mentions follow the current topic.
  for (std::size_t y = 0; y < cfg.years; ++y) {
    for (NodeId u = 0; u < n; ++u) {
      const auto& st = out.states[u];
      if (st.start_year > static_cast<int>(y)) continue;
      Rng rng(derive_seed(cfg.seed, {5, y, u}));
      const auto& rec = out.kg.registry.at(u);
      for (std::size_t k = 0; k < cfg.train_mentions + cfg.test_mentions; ++k) {
        MentionRecord m;
        m.context_left = context(cfg, st.topic_by_year[y], per_topic, rng);
        m.mention = {rec.title};
        m.context_right = context(cfg, st.topic_by_year[y], per_topic, rng);
        m.gold_qid = rec.qid;
        m.category = st.is_new ? MentionCategory::new_entity : MentionCategory::continual;
        m.year = years[y];
        (k < cfg.train_mentions ? out.train : out.test).push_back(std::move(m));
      }
    }
  }
  return out;
}

void write_dataset(const std::filesystem::path& dir, const SynthDataset& data,
                   const std::string& dataset_hash, const std::string& config_hash,
                   const json& config) {
  std::filesystem::create_directories(dir);
  save_entities(dir / "entities.jsonl", data.kg.registry);
  save_mentions(dir / "mentions.train.jsonl", data.train);
  save_mentions(dir / "mentions.test.jsonl", data.test);
  json years = json::array();
  for (const auto& g : data.kg.snapshots) {
    save_snapshot(dir / ("edges_" + std::to_string(g.year()) + ".tsv"), g, data.kg.registry,
                  {"config_hash=" + config_hash, "dataset_hash=" + dataset_hash});
    years.push_back(g.year());
  }
  json manifest = {{"kind", "synthetic"},
                   {"dataset_hash", dataset_hash},
                   {"config_hash", config_hash},
                   {"config", config},
                   {"years", years},
                   {"entities", data.kg.registry.size()},
                   {"train_mentions", data.train.size()},
                   {"test_mentions", data.test.size()},
                   {"rewired_edges", data.rewired_by_year}};
  std::ofstream out(dir / "manifest.json");
  if (!out) throw DataError("cannot write " + (dir / "manifest.json").string());
  out << manifest.dump(2) << '\n';
}

}  // namespace cycle
