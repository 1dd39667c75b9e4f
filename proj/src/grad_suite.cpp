#include "cycle/grad_suite.hpp"

#include <chrono>
#include <functional>
#include <limits>
#include <memory>

#include "cycle/contrastive.hpp"
#include "cycle/dataset.hpp"
#include "cycle/graph_encoder.hpp"
#include "cycle/model.hpp"
#include "cycle/random.hpp"
#include "cycle/text_encoder.hpp"

namespace cycle {

using ad::ParameterStore;
using ad::Tape;
using ad::Var;

bool GradSuiteResult::pass() const {
  if (entries.empty()) return false;
  for (const auto& e : entries) {
    if (!e.pass) return false;
  }
  return true;
}

double kink_distance(const ad::LossFn& fn, const ParameterStore& point) {
  Tape tape(&point);
  fn(tape);
  return tape.kink_distance().value_or(std::numeric_limits<double>::infinity());
}

namespace {

using PointFn = std::function<ParameterStore(Rng&)>;

struct Case {
  std::string name;
  PointFn point;
  ad::LossFn fn;
};

Tensor random_tensor(Tensor::Shape shape, Rng& rng, double lo = -1.5, double hi = 1.5) {
  Tensor t(std::move(shape));
  for (auto& v : t.values()) v = uniform_real(rng, lo, hi);
  return t;
}

// Fixed read-out weights turn vector outputs into a scalar loss.
Var readout(Tape& tape, Var v, std::uint64_t salt) {
  const auto n = tape.value(v).size();
  Rng rng(derive_seed(0xBEEF, {salt}));
  return tape.dot(tape.constant(random_tensor({n}, rng)), v);
}

PointFn vectors(std::vector<std::pair<std::string, Tensor::Shape>> slots) {
  return [slots](Rng& rng) {
    ParameterStore p;
    for (const auto& [name, shape] : slots) p.add(name, random_tensor(shape, rng));
    return p;
  };
}

void perturb(ParameterStore& p, Rng& rng, double width) {
  for (const auto& name : p.names()) {
    for (auto& v : p.at(name).values()) v += uniform_real(rng, -width, width);
  }
}

SnapshotGraph random_graph(std::size_t n, std::size_t edges, int year, GraphKind kind,
                           Rng& rng) {
  std::vector<Edge> list;
  for (std::size_t k = 0; k < edges; ++k) {
    list.emplace_back(static_cast<NodeId>(uniform_index(rng, n)),
                      static_cast<NodeId>(uniform_index(rng, n)));
  }
  return SnapshotGraph::from_edges(n, year, kind, list);
}

// Small end-to-end instance for the contrastive and joint-objective checks.
struct Instance {
  std::size_t n = 12;
  std::size_t m = 5;
  Tensor features;
  SnapshotGraph train_graph, target_graph, feature_graph;
  SamplePools relation_pools, feature_pools;
  std::vector<TokenSequence> entity_seqs;
  std::vector<TokenSequence> mentions;
  std::vector<NodeId> gold;
  std::vector<NodeId> nodes;
  std::unique_ptr<CycleModel> model;
  GraphInputs inputs;

  explicit Instance(std::uint64_t seed) {
    Rng rng(derive_seed(seed, {0x1A}));
    // Continuous features keep aggregated inputs away from the ELU kink.
    features = random_tensor({n, m}, rng, 0.1, 1.0);
    train_graph = random_graph(n, 18, 0, GraphKind::relation, rng);
    target_graph = random_graph(n, 18, 1, GraphKind::relation, rng);
    feature_graph = random_graph(n, 16, 0, GraphKind::feature, rng);
    relation_pools = diff_pools(train_graph, target_graph);
    feature_pools = pools_feature(feature_graph, 4, seed);
    const std::size_t vocab = 12;
    for (std::size_t i = 0; i < n; ++i) {
      entity_seqs.push_back({{markers::kCls, static_cast<TokenId>(6 + i % 6), markers::kEnt,
                              static_cast<TokenId>(6 + (i * 5) % 6), markers::kSep}});
    }
    for (NodeId g : {0u, 3u, 5u, 8u}) {
      mentions.push_back({{markers::kCls, static_cast<TokenId>(6 + (g + 1) % 6),
                           markers::kMentionStart, static_cast<TokenId>(6 + g % 6),
                           markers::kMentionEnd, markers::kSep}});
      gold.push_back(g);
    }
    for (NodeId i = 0; i < n; ++i) nodes.push_back(i);
    ModelConfig cfg;
    cfg.dim = 4;
    cfg.hidden = 3;
    cfg.fusion = FusionMode::on;
    cfg.trainable_features = true;
    model = std::make_unique<CycleModel>(cfg, vocab, m);
    inputs = {&features,       &train_graph,    &target_graph,
              &feature_graph,  &relation_pools, &feature_pools};
  }

  ParameterStore point(Rng& rng) const {
    auto p = model->init_parameters(rng(), &features);
    perturb(p, rng, 0.3);
    return p;
  }

  ObjectiveOptions options() const {
    ObjectiveOptions o;
    o.sampler = {16, 7};
    o.contrastive.temperature = 0.5;
    o.contrastive.max_positives = 8;
    o.fusion = true;
    return o;
  }
};

std::vector<Case> elementwise_cases() {
  std::vector<Case> out;
  const auto pair = vectors({{"a", {5}}, {"b", {5}}});
  const auto one = vectors({{"a", {6}}});
  out.push_back({"add", pair, [](Tape& t) { return readout(t, t.add(t.param("a"), t.param("b")), 1); }});
  out.push_back({"sub", pair, [](Tape& t) { return readout(t, t.sub(t.param("a"), t.param("b")), 2); }});
  out.push_back({"mul", pair, [](Tape& t) { return readout(t, t.mul(t.param("a"), t.param("b")), 3); }});
  out.push_back({"scale", one, [](Tape& t) { return readout(t, t.scale(t.param("a"), -1.7), 4); }});
  out.push_back({"tanh", one, [](Tape& t) { return readout(t, t.tanh(t.param("a")), 5); }});
  out.push_back({"elu", one, [](Tape& t) { return readout(t, t.elu(t.param("a")), 6); }});
  out.push_back({"leaky_relu", one, [](Tape& t) {
                   return readout(t, t.leaky_relu(t.param("a"), kAttentionSlope), 7);
                 }});
  return out;
}

std::vector<Case> reduction_cases() {
  std::vector<Case> out;
  const auto pair = vectors({{"a", {5}}, {"b", {5}}});
  const auto one = vectors({{"a", {6}}});
  out.push_back({"matvec", vectors({{"w", {3, 4}}, {"x", {4}}}),
                 [](Tape& t) { return readout(t, t.matvec(t.param("w"), t.param("x")), 8); }});
  out.push_back({"dot", pair, [](Tape& t) { return t.dot(t.param("a"), t.param("b")); }});
  out.push_back({"sum", one, [](Tape& t) { return t.sum(t.mul(t.param("a"), t.param("a"))); }});
  out.push_back({"mean", one, [](Tape& t) { return t.mean(t.mul(t.param("a"), t.param("a"))); }});
  out.push_back({"log_sum_exp", one, [](Tape& t) { return t.log_sum_exp(t.param("a")); }});
  out.push_back({"index", one, [](Tape& t) {
                   const Var a = t.param("a");
                   return t.index(t.mul(a, a), 2);
                 }});
  out.push_back({"cosine", pair, [](Tape& t) { return t.cosine(t.param("a"), t.param("b")); }});
  out.push_back({"softmax", one, [](Tape& t) { return readout(t, t.softmax(t.param("a")), 9); }});
  out.push_back({"concat", pair, [](Tape& t) {
                   const Var parts[] = {t.param("a"), t.param("b")};
                   return readout(t, t.concat(parts), 10);
                 }});
  out.push_back({"stack", pair, [](Tape& t) {
                   const Var a = t.param("a"), b = t.param("b");
                   const Var parts[] = {t.dot(a, b), t.sum(t.mul(a, a)), t.index(b, 3)};
                   return readout(t, t.stack(parts), 11);
                 }});
  out.push_back({"row", vectors({{"m", {3, 4}}}),
                 [](Tape& t) { return readout(t, t.row(t.param("m"), 1), 12); }});
  out.push_back({"embed_mean", vectors({{"table", {6, 4}}}), [](Tape& t) {
                   const TokenId ids[] = {1, 3, 3, 5};
                   return readout(t, t.embed_mean(t.param("table"), ids), 13);
                 }});
  out.push_back({"weighted_sum", vectors({{"w", {3}}, {"v0", {4}}, {"v1", {4}}, {"v2", {4}}}),
                 [](Tape& t) {
                   const Var vs[] = {t.param("v0"), t.param("v1"), t.param("v2")};
                   return readout(t, t.weighted_sum(t.param("w"), vs), 14);
                 }});
  return out;
}

std::vector<Case> model_cases(std::uint64_t seed) {
  std::vector<Case> out;

  auto encoder = std::make_shared<BagEncoder>(10, 4);
  out.push_back({"text_score",
                 [encoder](Rng& rng) {
                   ParameterStore p;
                   encoder->init_parameters(p, rng);
                   perturb(p, rng, 0.3);
                   return p;
                 },
                 [encoder](Tape& t) {
                   const TokenSequence m{{markers::kCls, 7, markers::kMentionStart, 8,
                                          markers::kMentionEnd, 9, markers::kSep}};
                   const TokenSequence e{{markers::kCls, 8, markers::kEnt, 6, 7, markers::kSep}};
                   return t.dot(encoder->encode(t, m, Tower::mention),
                                encoder->encode(t, e, Tower::entity));
                 }});

  out.push_back({"loss_el", vectors({{"m0", {4}}, {"m1", {4}}, {"m2", {4}},
                                     {"e0", {4}}, {"e1", {4}}, {"e2", {4}}}),
                 [](Tape& t) {
                   const Var ym[] = {t.param("m0"), t.param("m1"), t.param("m2")};
                   const Var ye[] = {t.param("e0"), t.param("e1"), t.param("e2")};
                   return loss_el(t, ym, ye);
                 }});

  out.push_back({"info_nce", vectors({{"anchor", {4}}, {"p0", {4}}, {"p1", {4}},
                                      {"n0", {4}}, {"n1", {4}}}),
                 [](Tape& t) {
                   const Var pos[] = {t.param("p0"), t.param("p1")};
                   const Var neg[] = {t.param("n0"), t.param("n1")};
                   return *info_nce(t, t.param("anchor"), pos, neg, 0.5);
                 }});

  auto graph = std::make_shared<GraphEncoder>();
  graph->feature_dim = 4;
  graph->hidden_dim = 3;
  graph->output_dim = 5;
  out.push_back({"attend_aggregate",
                 [graph](Rng& rng) {
                   ParameterStore p;
                   p.add("features", random_tensor({6, 4}, rng));
                   p.add(GraphEncoder::kAttention, random_tensor({8}, rng));
                   return p;
                 },
                 [graph](Tape& t) {
                   const NodeId nbrs[] = {1, 2, 4};
                   return readout(t, graph->embed(t, 0, nbrs, t.param("features")), 15);
                 }});
  out.push_back({"project",
                 [graph](Rng& rng) {
                   ParameterStore p;
                   graph->init_parameters(p, rng);
                   perturb(p, rng, 0.5);
                   p.add("z", random_tensor({4}, rng));
                   return p;
                 },
                 [graph](Tape& t) { return readout(t, graph->project(t, t.param("z")), 16); }});

  auto inst = std::make_shared<Instance>(seed);
  out.push_back({"contrastive_terms", [inst](Rng& rng) { return inst->point(rng); },
                 [inst](Tape& t) {
                   const auto terms = build_objective(t, *inst->model, inst->entity_seqs,
                                                      inst->inputs, nullptr, inst->nodes, true,
                                                      inst->options());
                   return weighted_objective(t, terms, {0.0, 1.0, 1.0});
                 }});
  out.push_back({"joint_objective", [inst](Rng& rng) { return inst->point(rng); },
                 [inst](Tape& t) {
                   const ObjectiveBatch batch{inst->mentions, inst->gold};
                   const auto terms = build_objective(t, *inst->model, inst->entity_seqs,
                                                      inst->inputs, &batch, inst->nodes, true,
                                                      inst->options());
                   return weighted_objective(t, terms, {1.0, 0.7, 1.3});
                 }});
  return out;
}

GradSuiteEntry run_case(const Case& c, const GradSuiteOptions& opts, std::uint64_t salt) {
  GradSuiteEntry e;
  e.name = c.name;
  Rng rng(derive_seed(opts.seed, {0x6C, salt}));
  const ad::GradCheckOp op{c.name, c.fn,
                           [fn = c.fn](const ParameterStore& p) { return kink_distance(fn, p); }};
  for (std::size_t draw = 0; draw < opts.max_draws && e.probes < opts.probes; ++draw) {
    const auto report = ad::grad_check(op, c.point(rng), opts.tolerance, opts.step);
    if (report.excluded) {
      ++e.excluded;
      continue;
    }
    ++e.probes;
    if (!(report.max_rel_error <= e.max_rel_error)) e.max_rel_error = report.max_rel_error;
  }
  e.pass = e.probes == opts.probes && e.max_rel_error < opts.tolerance;
  return e;
}

}  // namespace

GradSuiteResult run_grad_suite(const GradSuiteOptions& opts) {
  const auto start = std::chrono::steady_clock::now();
  std::vector<Case> cases = elementwise_cases();
  for (auto& c : reduction_cases()) cases.push_back(std::move(c));
  for (auto& c : model_cases(opts.seed)) cases.push_back(std::move(c));
  GradSuiteResult out;
  out.tolerance = opts.tolerance;
  for (std::size_t k = 0; k < cases.size(); ++k) out.entries.push_back(run_case(cases[k], opts, k));
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

}  // namespace cycle
