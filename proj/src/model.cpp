#include "cycle/model.hpp"

#include "cycle/error.hpp"
#include "cycle/random.hpp"

namespace cycle {

std::string to_string(FusionMode m) {
  switch (m) {
    case FusionMode::automatic: return "auto";
    case FusionMode::on: return "on";
    case FusionMode::off: return "off";
  }
  return "auto";
}

FusionMode parse_fusion_mode(const std::string& s) {
  if (s == "auto") return FusionMode::automatic;
  if (s == "on") return FusionMode::on;
  if (s == "off") return FusionMode::off;
  throw UsageError("fusion must be auto, on or off (got '" + s + "')");
}

bool fusion_active(FusionMode mode, const LossWeights& weights) {
  if (mode == FusionMode::automatic) return weights.graph_terms();
  return mode == FusionMode::on;
}

CycleModel::CycleModel(ModelConfig cfg, std::size_t vocab_size, std::size_t feature_dim)
    : cfg_(cfg), text_(vocab_size, cfg.dim) {
  graph_.feature_dim = feature_dim;
  graph_.hidden_dim = cfg.hidden;
  graph_.output_dim = cfg.dim;
}

ad::ParameterStore CycleModel::init_parameters(std::uint64_t seed, const Tensor* features) const {
  ad::ParameterStore params;
  Rng rng(derive_seed(seed, {0x1417}));
  text_.init_parameters(params, rng);
  graph_.init_parameters(params, rng);
  if (cfg_.trainable_features) {
    if (!features || features->cols() != graph_.feature_dim) {
      throw UsageError("trainable node features need the n x m feature matrix");
    }
    params.add(GraphEncoder::kFeatures, *features);
  }
  return params;
}

// ---------------------------------------------------------------------------

GraphPass::GraphPass(ad::Tape& tape, const CycleModel& model, const GraphInputs& inputs,
                     const SamplerConfig& sampler, std::uint64_t epoch)
    : tape_(tape), model_(model), inputs_(inputs), sampler_(sampler), epoch_(epoch) {
  if (model.config().trainable_features) {
    features_ = tape.param(GraphEncoder::kFeatures);
  } else {
    if (!inputs.features) throw UsageError("graph pass needs node features");
    features_ = tape.constant_ref(*inputs.features);
  }
}

ad::Var GraphPass::projected(const SnapshotGraph* graph, NodeId node, const char* what) {
  if (!graph) throw UsageError(std::string("graph pass has no ") + what);
  const auto key = std::make_pair(graph, node);
  if (auto it = cache_.find(key); it != cache_.end()) return it->second;
  const auto nbrs = sample_neighbors(*graph, node, sampler_, epoch_);
  const auto z = model_.graph().embed(tape_, node, nbrs, features_);
  const auto zp = model_.graph().project(tape_, z);
  cache_.emplace(key, zp);
  return zp;
}

bool GraphPass::fusion_isolated(NodeId node) const {
  if (!inputs_.fusion_graph) throw UsageError("graph pass has no fusion graph");
  return inputs_.fusion_graph->degree(node) == 0;
}

ad::Var GraphPass::fused(NodeId node) {
  return projected(inputs_.fusion_graph, node, "fusion graph");
}
ad::Var GraphPass::relation_view(NodeId node) {
  return projected(inputs_.contrast_graph, node, "contrast graph");
}
ad::Var GraphPass::feature_view(NodeId node) {
  return projected(inputs_.feature_graph, node, "feature graph");
}

ad::Var entity_vector(ad::Tape& tape, const CycleModel& model, const TokenSequence& seq,
                      NodeId node, GraphPass* graph) {
  const auto text = model.text().encode(tape, seq, Tower::entity);
  // No relation view for an isolated entity.
  if (!graph || graph->fusion_isolated(node)) return text;
  return tape.add(text, graph->fused(node));
}

namespace {

std::vector<NodeId> capped_positives(const std::vector<NodeId>& pool, std::size_t cap,
                                     std::uint64_t seed, std::uint64_t epoch, NodeId node,
                                     std::uint64_t salt) {
  if (pool.size() <= cap) return pool;
  Rng rng(derive_seed(seed, {epoch, node, salt}));
  return sample_without_replacement(pool, cap, rng);
}

}  // namespace

ObjectiveTerms build_objective(ad::Tape& tape, const CycleModel& model,
                               std::span<const TokenSequence> entity_seqs,
                               const GraphInputs& inputs, const ObjectiveBatch* batch,
                               std::span<const NodeId> graph_nodes, bool graph_terms,
                               const ObjectiveOptions& opts) {
  opts.contrastive.validate();
  ObjectiveTerms terms;
  std::optional<GraphPass> pass;
  if (opts.fusion || graph_terms) pass.emplace(tape, model, inputs, opts.sampler, opts.epoch);

  if (batch) {
    if (batch->mentions.size() != batch->gold.size() || batch->mentions.size() < 2) {
      throw UsageError("entity-linking batch needs >= 2 aligned mentions");
    }
    std::vector<ad::Var> ym, ye;
    for (std::size_t i = 0; i < batch->mentions.size(); ++i) {
      ym.push_back(model.text().encode(tape, batch->mentions[i], Tower::mention));
      const NodeId g = batch->gold[i];
      if (g >= entity_seqs.size()) throw UsageError("gold entity out of range");
      ye.push_back(entity_vector(tape, model, entity_seqs[g], g, opts.fusion ? &*pass : nullptr));
    }
    terms.L_e = loss_el(tape, ym, ye);
  }

  if (graph_terms) {
    if (!inputs.relation_pools || !inputs.feature_pools) {
      throw UsageError("graph terms need relation and feature pools");
    }
    const auto& rel = *inputs.relation_pools;
    const auto& feat = *inputs.feature_pools;
    const double tau = opts.contrastive.temperature;
    const std::size_t cap = opts.contrastive.max_positives;
    std::vector<ad::Var> f_terms, r_terms, pos, neg;
    for (NodeId i : graph_nodes) {
      if (i >= rel.n() || i >= feat.n()) throw UsageError("graph node outside sample pools");
      // L_f: feature-view anchor against relation-view samples of the
      // cross-year pools.
      const auto rel_pos = capped_positives(rel.positives[i], cap, opts.sampler.seed, opts.epoch,
                                            i, 0xF);
      if (!rel_pos.empty()) {
        pos.clear();
        neg.clear();
        for (auto j : rel_pos) pos.push_back(pass->relation_view(j));
        for (auto j : rel.negatives[i]) neg.push_back(pass->relation_view(j));
        f_terms.push_back(*info_nce(tape, pass->feature_view(i), pos, neg, tau));
      }
      // L_r: relation-view anchor against feature-view samples.
      const auto feat_pos = capped_positives(feat.positives[i], cap, opts.sampler.seed,
                                             opts.epoch, i, 0x5);
      if (!feat_pos.empty()) {
        pos.clear();
        neg.clear();
        for (auto j : feat_pos) pos.push_back(pass->feature_view(j));
        for (auto j : feat.negatives[i]) neg.push_back(pass->feature_view(j));
        r_terms.push_back(*info_nce(tape, pass->relation_view(i), pos, neg, tau));
      }
    }
    terms.f_nodes = f_terms.size();
    terms.r_nodes = r_terms.size();
    if (!f_terms.empty()) terms.L_f = tape.mean(tape.stack(f_terms));
    if (!r_terms.empty()) terms.L_r = tape.mean(tape.stack(r_terms));
  }
  return terms;
}

ad::Var weighted_objective(ad::Tape& tape, const ObjectiveTerms& terms, const LossWeights& w) {
  ad::Var total = tape.scalar(0.0);
  if (terms.L_e) total = tape.add(total, tape.scale(*terms.L_e, w.a));
  if (terms.L_f) total = tape.add(total, tape.scale(*terms.L_f, w.b));
  if (terms.L_r) total = tape.add(total, tape.scale(*terms.L_r, w.c));
  return total;
}

Tensor entity_matrix(const CycleModel& model, const ad::ParameterStore& params,
                     std::span<const TokenSequence> entity_seqs, const GraphInputs& inputs,
                     const SamplerConfig& sampler, std::uint64_t epoch, bool fusion) {
  const std::size_t d = model.config().dim;
  Tensor out({entity_seqs.size(), d});
  for (NodeId i = 0; i < entity_seqs.size(); ++i) {
    ad::Tape tape(&params);
    std::optional<GraphPass> pass;
    if (fusion) pass.emplace(tape, model, inputs, sampler, epoch);
    const auto& v = tape.value(entity_vector(tape, model, entity_seqs[i], i, fusion ? &*pass : nullptr));
    std::copy(v.values().begin(), v.values().end(), out.row(i).begin());
  }
  return out;
}

Tensor mention_matrix(const CycleModel& model, const ad::ParameterStore& params,
                      std::span<const TokenSequence> mention_seqs) {
  const std::size_t d = model.config().dim;
  Tensor out({mention_seqs.size(), d});
  for (std::size_t i = 0; i < mention_seqs.size(); ++i) {
    const auto v = encode(model.text(), mention_seqs[i], Tower::mention, params);
    std::copy(v.begin(), v.end(), out.row(i).begin());
  }
  return out;
}

}  // namespace cycle
