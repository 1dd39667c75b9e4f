#include "cycle/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <thread>

#include "cycle/error.hpp"

namespace cycle {

using nlohmann::json;

std::string to_string(Direction d) {
  return d == Direction::forward_only ? "forward" : "forward_and_backward";
}

Direction parse_direction(const std::string& s) {
  if (s == "forward" || s == "forward_only") return Direction::forward_only;
  if (s == "forward_and_backward" || s == "fb") return Direction::forward_and_backward;
  throw UsageError("direction must be forward or forward_and_backward (got '" + s + "')");
}

void EvalConfig::validate() const {
  if (ns.empty()) throw UsageError("recall N list is empty");
  for (std::size_t i = 0; i < ns.size(); ++i) {
    if (ns[i] == 0) throw UsageError("recall N values must be positive");
    if (i > 0 && ns[i] <= ns[i - 1]) throw UsageError("recall N values must strictly increase");
  }
}

double RecallTable::at(std::size_t n) const {
  for (std::size_t i = 0; i < ns.size(); ++i) {
    if (ns[i] == n) return recall[i];
  }
  throw UsageError("recall@" + std::to_string(n) + " not in table");
}

std::vector<NodeId> rank_candidates(std::span<const double> scores) {
  std::vector<NodeId> order(scores.size());
  std::iota(order.begin(), order.end(), NodeId{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](NodeId a, NodeId b) { return scores[a] > scores[b]; });
  return order;
}

std::size_t gold_rank(std::span<const double> scores, NodeId gold) {
  if (gold >= scores.size()) throw UsageError("gold outside the score vector");
  const double g = scores[gold];
  std::size_t rank = 0;
  for (NodeId j = 0; j < scores.size(); ++j) {
    if (scores[j] > g || (scores[j] == g && j < gold)) ++rank;
  }
  return rank;
}

RecallTable recall_from_ranks(std::span<const std::optional<std::size_t>> ranks,
                              std::span<const std::size_t> ns) {
  RecallTable t;
  t.ns.assign(ns.begin(), ns.end());
  t.recall.assign(ns.size(), 0.0);
  t.queries = ranks.size();
  for (const auto& r : ranks) {
    if (!r) {
      ++t.flagged;
      continue;
    }
    for (std::size_t k = 0; k < ns.size(); ++k) {
      if (*r < ns[k]) t.recall[k] += 1.0;
    }
  }
  if (t.queries > 0) {
    for (auto& v : t.recall) v /= static_cast<double>(t.queries);
  }
  return t;
}

RecallTable recall_at_n(std::span<const std::vector<NodeId>> ranked, std::span<const NodeId> gold,
                        std::span<const std::size_t> ns) {
  if (ranked.size() != gold.size()) throw UsageError("ranked lists and gold labels differ in size");
  std::vector<std::optional<std::size_t>> ranks;
  ranks.reserve(gold.size());
  for (std::size_t q = 0; q < gold.size(); ++q) {
    const auto& list = ranked[q];
    const auto it = std::find(list.begin(), list.end(), gold[q]);
    if (it == list.end()) {
      ranks.emplace_back();
    } else {
      ranks.emplace_back(static_cast<std::size_t>(it - list.begin()));
    }
  }
  return recall_from_ranks(ranks, ns);
}

// ---------------------------------------------------------------------------

namespace {

const char* category_key(MentionCategory c) {
  return c == MentionCategory::continual ? "continual" : "new";
}

void fill_recall(EvalCell& cell, std::span<const std::size_t> ns) {
  std::map<std::string, std::vector<std::optional<std::size_t>>> by;
  by["all"];
  by["continual"];
  by["new"];
  for (std::size_t q = 0; q < cell.ranks.size(); ++q) {
    by["all"].emplace_back(cell.ranks[q]);
    by[category_key(cell.categories[q])].emplace_back(cell.ranks[q]);
  }
  for (const auto& [key, ranks] : by) cell.recall[key] = recall_from_ranks(ranks, ns);
}

}  // namespace

EvalCell evaluate_split(const Checkpoint& ckpt, std::span<const TokenSequence> entity_seqs,
                        const EvalGraph& graph, const TestSplit& split, int train_year,
                        const EvalConfig& cfg, std::size_t workers) {
  cfg.validate();
  if (split.mention_seqs.size() != split.gold.size() ||
      split.gold.size() != split.categories.size()) {
    throw UsageError("test split fields differ in size");
  }
  const auto model = ckpt.make_model();
  const bool fusion = ckpt.model.fusion == FusionMode::on;
  GraphInputs inputs;
  inputs.features = graph.features;
  inputs.fusion_graph = graph.relation;
  if (fusion && (!graph.features || !graph.relation)) {
    throw UsageError("fused model needs the test-year graph and node features");
  }
  const SamplerConfig sampler{graph.neighbor_threshold, ckpt.seed};
  const auto entities =
      entity_matrix(model, ckpt.params, entity_seqs, inputs, sampler, kEvalEpoch, fusion);
  const auto mentions = mention_matrix(model, ckpt.params, split.mention_seqs);

  EvalCell cell;
  cell.train_year = train_year;
  cell.test_year = split.year;
  cell.gold = split.gold;
  cell.categories = split.categories;
  cell.ranks.assign(split.gold.size(), 0);
  const std::size_t n = entities.rows();
  const std::size_t queries = split.gold.size();
  auto rank_range = [&](std::size_t lo, std::size_t hi) {
    std::vector<double> scores(n);
    for (std::size_t q = lo; q < hi; ++q) {
      const auto ym = mentions.row(q);
      for (std::size_t e = 0; e < n; ++e) scores[e] = score(ym, entities.row(e));
      cell.ranks[q] = gold_rank(scores, split.gold[q]);
    }
  };
  workers = std::max<std::size_t>(1, std::min(workers, queries));
  if (workers == 1) {
    rank_range(0, queries);
  } else {
    std::vector<std::thread> pool;
    const std::size_t chunk = (queries + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
      const std::size_t lo = w * chunk;
      const std::size_t hi = std::min(queries, lo + chunk);
      if (lo < hi) pool.emplace_back(rank_range, lo, hi);
    }
    for (auto& t : pool) t.join();
  }
  fill_recall(cell, cfg.ns);
  return cell;
}

std::vector<GapAggregate> aggregate_by_gap(const GapMatrix& m, Direction dir,
                                           const std::string& category,
                                           std::span<const std::size_t> ns) {
  std::vector<int> years = m.years;
  std::sort(years.begin(), years.end());
  std::map<int, GapAggregate> by_gap;
  for (int tr : years) {
    for (int te : years) {
      const int delta = te - tr;
      if (dir == Direction::forward_only && delta < 0) continue;
      const int gap = std::abs(delta);
      auto& agg = by_gap[gap];
      agg.gap = gap;
      const auto it = m.cells.find({tr, te});
      if (it == m.cells.end()) {
        ++agg.missing;
        continue;
      }
      const auto rt = it->second.recall.find(category);
      if (rt == it->second.recall.end() || rt->second.queries == 0) {
        ++agg.missing;
        continue;
      }
      if (agg.recall.ns.empty()) {
        agg.recall.ns.assign(ns.begin(), ns.end());
        agg.recall.recall.assign(ns.size(), 0.0);
      }
      for (std::size_t k = 0; k < ns.size(); ++k) agg.recall.recall[k] += rt->second.at(ns[k]);
      agg.recall.queries += rt->second.queries;
      agg.recall.flagged += rt->second.flagged;
      ++agg.cells;
    }
  }
  std::vector<GapAggregate> out;
  for (auto& [gap, agg] : by_gap) {
    if (agg.cells > 0) {
      for (auto& v : agg.recall.recall) v /= static_cast<double>(agg.cells);
    } else {
      agg.recall.ns.assign(ns.begin(), ns.end());
      agg.recall.recall.assign(ns.size(), 0.0);
    }
    out.push_back(agg);
  }
  return out;
}

std::optional<double> boost(double model_recall, double baseline_recall) {
  if (!(baseline_recall > 0.0)) return std::nullopt;
  return 100.0 * (model_recall - baseline_recall) / baseline_recall;
}

std::optional<LeastSquares> least_squares(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw UsageError("least squares inputs differ in size");
  if (x.size() < 2) return std::nullopt;
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxx == 0.0) return std::nullopt;
  LeastSquares ls;
  ls.slope = sxy / sxx;
  ls.intercept = my - ls.slope * mx;
  return ls;
}

std::vector<std::pair<std::size_t, std::size_t>> power_of_two_buckets(std::size_t max_degree) {
  std::vector<std::pair<std::size_t, std::size_t>> out{{0, 0}};
  for (std::size_t lo = 1; lo <= max_degree; lo *= 2) out.emplace_back(lo, 2 * lo - 1);
  return out;
}

DegreeBucketReport degree_report(std::span<const double> improvements,
                                 std::span<const std::size_t> degrees,
                                 std::span<const std::pair<std::size_t, std::size_t>> buckets) {
  if (improvements.size() != degrees.size()) {
    throw UsageError("improvements and degrees differ in size");
  }
  for (std::size_t b = 0; b < buckets.size(); ++b) {
    if (buckets[b].first > buckets[b].second ||
        (b > 0 && buckets[b].first != buckets[b - 1].second + 1)) {
      throw UsageError("degree buckets must be contiguous and ordered");
    }
  }
  DegreeBucketReport r;
  r.points = degrees.size();
  std::vector<double> sums(buckets.size(), 0.0);
  for (const auto& [lo, hi] : buckets) r.buckets.push_back({lo, hi, 0, std::nullopt});
  for (std::size_t i = 0; i < degrees.size(); ++i) {
    const auto it = std::find_if(buckets.begin(), buckets.end(), [&](const auto& b) {
      return degrees[i] >= b.first && degrees[i] <= b.second;
    });
    if (it == buckets.end()) {
      throw UsageError("degree " + std::to_string(degrees[i]) + " outside every bucket");
    }
    const auto b = static_cast<std::size_t>(it - buckets.begin());
    ++r.buckets[b].count;
    sums[b] += improvements[i];
  }
  for (std::size_t b = 0; b < buckets.size(); ++b) {
    if (r.buckets[b].count > 0) r.buckets[b].mean = sums[b] / static_cast<double>(r.buckets[b].count);
  }
  std::vector<double> x(degrees.begin(), degrees.end());
  if (const auto ls = least_squares(x, improvements)) {
    r.slope = ls->slope;
    r.intercept = ls->intercept;
  }
  return r;
}

std::vector<double> hit1_improvements(const EvalCell& model, const EvalCell& baseline) {
  if (model.gold != baseline.gold) throw UsageError("cells were evaluated on different splits");
  std::vector<double> out(model.gold.size());
  for (std::size_t q = 0; q < out.size(); ++q) {
    out[q] = (model.ranks[q] == 0 ? 1.0 : 0.0) - (baseline.ranks[q] == 0 ? 1.0 : 0.0);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Report

json to_json(const RecallTable& t) {
  json r = json::object();
  for (std::size_t k = 0; k < t.ns.size(); ++k) r["@" + std::to_string(t.ns[k])] = t.recall[k];
  return {{"recall", r}, {"queries", t.queries}, {"flagged", t.flagged}};
}

json to_json(const EvalCell& c) {
  json rec = json::object();
  for (const auto& [k, t] : c.recall) rec[k] = to_json(t);
  return {{"train_year", c.train_year}, {"test_year", c.test_year}, {"recall", rec}};
}

json to_json(const DegreeBucketReport& r) {
  json b = json::array();
  for (const auto& bk : r.buckets) {
    b.push_back({{"lo", bk.lo},
                 {"hi", bk.hi},
                 {"count", bk.count},
                 {"mean_improvement", bk.mean ? json(*bk.mean) : json(nullptr)}});
  }
  return {{"buckets", b},
          {"points", r.points},
          {"slope", r.slope ? json(*r.slope) : json(nullptr)},
          {"intercept", r.intercept ? json(*r.intercept) : json(nullptr)}};
}

json cell_record(const EvalCell& c) {
  json j = to_json(c);
  json cats = json::array();
  for (auto cat : c.categories) cats.push_back(to_string(cat));
  j["ranks"] = c.ranks;
  j["gold"] = c.gold;
  j["categories"] = cats;
  return j;
}

EvalCell cell_from_record(const json& j, std::span<const std::size_t> ns) {
  EvalCell c;
  try {
    c.train_year = j.at("train_year").get<int>();
    c.test_year = j.at("test_year").get<int>();
    c.ranks = j.at("ranks").get<std::vector<std::size_t>>();
    c.gold = j.at("gold").get<std::vector<NodeId>>();
    for (const auto& cat : j.at("categories")) {
      c.categories.push_back(parse_category(cat.get<std::string>()));
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed evaluation cell: ") + e.what());
  }
  if (c.ranks.size() != c.gold.size() || c.gold.size() != c.categories.size()) {
    throw DataError("evaluation cell fields differ in size");
  }
  fill_recall(c, ns);
  return c;
}

namespace {

const char* const kCategories[] = {"all", "continual", "new"};

json gaps_json(const GapMatrix& m, std::span<const std::size_t> ns) {
  json out = json::object();
  for (auto dir : {Direction::forward_only, Direction::forward_and_backward}) {
    json d = json::object();
    for (const char* cat : kCategories) {
      json arr = json::array();
      for (const auto& g : aggregate_by_gap(m, dir, cat, ns)) {
        json e = to_json(g.recall);
        e["gap"] = g.gap;
        e["cells"] = g.cells;
        e["missing"] = g.missing;
        arr.push_back(e);
      }
      d[cat] = arr;
    }
    out[to_string(dir)] = d;
  }
  return out;
}

json cells_json(const GapMatrix& m) {
  json arr = json::array();
  for (const auto& [key, cell] : m.cells) arr.push_back(to_json(cell));
  return arr;
}

}  // namespace

json build_report(const ReportInputs& in) {
  if (!in.model) throw UsageError("report needs a model gap matrix");
  json doc;
  doc["config"] = in.config;
  doc["config_hash"] = in.config_hash;
  doc["per_cell"] = {{"model", cells_json(*in.model)}};
  doc["per_gap"] = {{"model", gaps_json(*in.model, in.ns)}};
  json boosts = json::object();
  if (in.baseline) {
    doc["per_cell"]["baseline"] = cells_json(*in.baseline);
    doc["per_gap"]["baseline"] = gaps_json(*in.baseline, in.ns);
    for (auto dir : {Direction::forward_only, Direction::forward_and_backward}) {
      json d = json::object();
      for (const char* cat : kCategories) {
        const auto mg = aggregate_by_gap(*in.model, dir, cat, in.ns);
        const auto bg = aggregate_by_gap(*in.baseline, dir, cat, in.ns);
        json arr = json::array();
        for (std::size_t i = 0; i < mg.size() && i < bg.size(); ++i) {
          json e = {{"gap", mg[i].gap}};
          for (std::size_t k = 0; k < in.ns.size(); ++k) {
            const auto b = (mg[i].cells && bg[i].cells)
                               ? boost(mg[i].recall.recall[k], bg[i].recall.recall[k])
                               : std::nullopt;
            e["@" + std::to_string(in.ns[k])] = b ? json(*b) : json(nullptr);
          }
          arr.push_back(e);
        }
        d[cat] = arr;
      }
      boosts[to_string(dir)] = d;
    }
  }
  doc["boosts"] = boosts;
  doc["degree_buckets"] = in.degree ? to_json(*in.degree) : json(nullptr);
  return doc;
}

std::string table_tsv(const ReportInputs& in, Direction dir) {
  if (!in.model) throw UsageError("report needs a model gap matrix");
  std::ostringstream os;
  os.setf(std::ios::fixed);
  const char* cats[] = {"continual", "new"};
  std::vector<std::vector<GapAggregate>> model_aggs, base_aggs;
  for (const char* c : cats) {
    model_aggs.push_back(aggregate_by_gap(*in.model, dir, c, in.ns));
    if (in.baseline) base_aggs.push_back(aggregate_by_gap(*in.baseline, dir, c, in.ns));
  }
  os << "metric\tsystem";
  for (std::size_t c = 0; c < 2; ++c) {
    for (const auto& g : model_aggs[c]) os << '\t' << cats[c] << ':' << g.gap;
  }
  os << '\n';
  auto cell = [&](const GapAggregate& g, std::size_t k) {
    std::ostringstream s;
    s.setf(std::ios::fixed);
    s.precision(3);
    if (g.cells == 0) return std::string("NA");
    s << g.recall.recall[k];
    return s.str();
  };
  for (std::size_t k = 0; k < in.ns.size(); ++k) {
    const std::string metric = "@" + std::to_string(in.ns[k]);
    if (in.baseline) {
      os << metric << "\tbaseline";
      for (std::size_t c = 0; c < 2; ++c) {
        for (const auto& g : base_aggs[c]) os << '\t' << cell(g, k);
      }
      os << '\n';
    }
    os << metric << "\tmodel";
    for (std::size_t c = 0; c < 2; ++c) {
      for (const auto& g : model_aggs[c]) os << '\t' << cell(g, k);
    }
    os << '\n';
    if (in.baseline) {
      os << metric << "\tboost_pct";
      for (std::size_t c = 0; c < 2; ++c) {
        for (std::size_t i = 0; i < model_aggs[c].size(); ++i) {
          const auto& mg = model_aggs[c][i];
          const auto& bg = base_aggs[c][i];
          const auto b = (mg.cells && bg.cells) ? boost(mg.recall.recall[k], bg.recall.recall[k])
                                                : std::nullopt;
          os << '\t';
          if (b) {
            os.precision(2);
            os << *b;
          } else {
            os << "NA";
          }
        }
      }
      os << '\n';
    }
  }
  return os.str();
}

}  // namespace cycle
