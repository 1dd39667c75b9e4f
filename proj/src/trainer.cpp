#include "cycle/trainer.hpp"

#include <algorithm>
#include <bit>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "cycle/error.hpp"
#include "cycle/random.hpp"

namespace cycle {

using nlohmann::json;

void TrainConfig::validate() const {
  if (epochs < 1) throw UsageError("epochs must be >= 1");
  if (batch_size < 2) throw UsageError("batch size must be >= 2 (in-batch negatives)");
  if (!(lr > 0.0)) throw UsageError("learning rate must be positive");
  weights.validate();
  contrastive.validate();
  sampler().validate();
  if (node_cap < 1) throw UsageError("node cap must be >= 1");
  if (model.dim == 0 || model.hidden == 0) throw UsageError("model widths must be positive");
}

GraphInputs TrainData::inputs() const {
  GraphInputs in;
  in.features = &features;
  in.fusion_graph = &train_graph;
  in.contrast_graph = &target_graph;
  in.feature_graph = &feature_graph;
  in.relation_pools = &relation_pools;
  in.feature_pools = &feature_pools;
  return in;
}

void TrainData::validate() const {
  const std::size_t n = entity_seqs.size();
  if (mention_seqs.empty()) throw DataError("empty training split");
  if (mention_seqs.size() != gold.size()) throw UsageError("mentions and gold labels differ in size");
  for (auto g : gold) {
    if (g >= n) throw DataError("gold entity out of range");
  }
  if (features.rows() != n) throw DataError("feature matrix rows do not match entity count");
  for (const auto* g : {&train_graph, &target_graph, &feature_graph}) {
    if (g->n() != n) throw DataError("graph size does not match entity count");
  }
  if (relation_pools.n() != n || feature_pools.n() != n) {
    throw DataError("sample pools do not match entity count");
  }
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr char kCheckpointMagic[4] = {'C', 'Y', 'C', 'K'};

void put_u64(std::ostream& out, std::uint64_t v) {
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(buf), 8);
}

std::uint64_t get_u64(std::istream& in) {
  unsigned char buf[8];
  if (!in.read(reinterpret_cast<char*>(buf), 8)) throw DataError("truncated checkpoint");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t{buf[i]} << (8 * i);
  return v;
}

void put_string(std::ostream& out, const std::string& s) {
  put_u64(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& in) {
  const auto len = get_u64(in);
  if (len > (std::uint64_t{1} << 24)) throw DataError("corrupt checkpoint string length");
  std::string s(len, '\0');
  if (!in.read(s.data(), static_cast<std::streamsize>(len))) throw DataError("truncated checkpoint");
  return s;
}

json model_json(const Checkpoint& c) {
  return {{"dim", c.model.dim},
          {"hidden", c.model.hidden},
          {"fusion", to_string(c.model.fusion)},
          {"trainable_features", c.model.trainable_features},
          {"vocab_size", c.vocab_size},
          {"feature_dim", c.feature_dim}};
}

}  // namespace

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt) {
  out.put(static_cast<char>(kCheckpointVersion));
  out.write(kCheckpointMagic, 4);
  put_u64(out, ckpt.epochs_done);
  put_u64(out, ckpt.seed);
  put_u64(out, ckpt.adam.step);
  put_string(out, ckpt.config_hash);
  put_string(out, ckpt.rng_state);
  put_string(out, model_json(ckpt).dump());
  ckpt.params.write(out);
  const bool has_moments = ckpt.adam.m.size() > 0;
  out.put(has_moments ? 1 : 0);
  if (has_moments) {
    ckpt.adam.m.write(out);
    ckpt.adam.v.write(out);
  }
}

Checkpoint read_checkpoint(std::istream& in) {
  const int version = in.get();
  if (version == std::char_traits<char>::eof()) throw DataError("empty checkpoint");
  if (version != kCheckpointVersion) {
    throw DataError("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                    std::to_string(kCheckpointVersion) + ")");
  }
  char magic[4];
  if (!in.read(magic, 4) || !std::equal(magic, magic + 4, kCheckpointMagic)) {
    throw DataError("bad checkpoint magic");
  }
  Checkpoint c;
  c.epochs_done = get_u64(in);
  c.seed = get_u64(in);
  c.adam.step = get_u64(in);
  c.config_hash = get_string(in);
  c.rng_state = get_string(in);
  try {
    const auto mj = json::parse(get_string(in));
    c.model.dim = mj.at("dim").get<std::size_t>();
    c.model.hidden = mj.at("hidden").get<std::size_t>();
    c.model.fusion = parse_fusion_mode(mj.at("fusion").get<std::string>());
    c.model.trainable_features = mj.at("trainable_features").get<bool>();
    c.vocab_size = mj.at("vocab_size").get<std::size_t>();
    c.feature_dim = mj.at("feature_dim").get<std::size_t>();
  } catch (const json::exception& e) {
    throw DataError(std::string("corrupt checkpoint model block: ") + e.what());
  }
  c.params = ad::ParameterStore::read(in);
  const int has_moments = in.get();
  if (has_moments == std::char_traits<char>::eof()) throw DataError("truncated checkpoint");
  if (has_moments == 1) {
    c.adam.m = ad::ParameterStore::read(in);
    c.adam.v = ad::ParameterStore::read(in);
  }
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  write_checkpoint(out, ckpt);
  if (!out) throw DataError("write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  try {
    return read_checkpoint(in);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Training

namespace {

std::string rng_text(const Rng& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

Rng rng_from_text(const std::string& s) {
  Rng rng;
  std::istringstream is(s);
  is >> rng;
  if (!is) throw DataError("corrupt RNG state in checkpoint");
  return rng;
}

std::vector<NodeId> graph_node_sample(std::size_t n, std::size_t cap, std::uint64_t seed) {
  std::vector<NodeId> all(n);
  std::iota(all.begin(), all.end(), NodeId{0});
  if (n <= cap) return all;
  Rng rng(derive_seed(seed, {0x6E0D}));
  return sample_without_replacement(std::move(all), cap, rng);
}

struct StepOutcome {
  double L_e = 0.0;
  double L_f = 0.0;
  double L_r = 0.0;
  bool has_f = false;
  bool has_r = false;
  ad::ParameterStore grads;
};

StepOutcome run_step(const CycleModel& model, const TrainData& data, const TrainConfig& cfg,
                     const ad::ParameterStore& params, const ObjectiveBatch* batch,
                     std::span<const NodeId> nodes, bool graph_terms, std::uint64_t epoch,
                     bool with_grad) {
  const auto inputs = data.inputs();
  ObjectiveOptions opts;
  opts.sampler = cfg.sampler();
  opts.contrastive = cfg.contrastive;
  opts.epoch = epoch;
  opts.fusion = cfg.fusion();
  ad::Tape tape(&params);
  const auto terms =
      build_objective(tape, model, data.entity_seqs, inputs, batch, nodes, graph_terms, opts);
  LossWeights w = cfg.weights;
  if (!batch) w.a = 0.0;
  const auto total = weighted_objective(tape, terms, w);
  if (!tape.value(total).all_finite()) {
    const auto op = tape.first_nonfinite_op();
    throw NumericError("non-finite loss (first bad op: " + op.value_or("?") + ")");
  }
  StepOutcome out;
  if (terms.L_e) out.L_e = tape.item(*terms.L_e);
  if (terms.L_f) {
    out.L_f = tape.item(*terms.L_f);
    out.has_f = true;
  }
  if (terms.L_r) {
    out.L_r = tape.item(*terms.L_r);
    out.has_r = true;
  }
  if (with_grad) {
    tape.backward(total);
    out.grads = tape.parameter_grads();
    for (const auto& name : out.grads.names()) {
      if (!out.grads.at(name).all_finite()) {
        throw NumericError("non-finite gradient for " + name);
      }
    }
  }
  return out;
}

}  // namespace

TrainResult train(const TrainData& data, const TrainConfig& cfg, const std::string& config_hash,
                  const Checkpoint* resume, const EpochCallback& on_epoch) {
  cfg.validate();
  data.validate();
  const std::size_t n = data.entity_seqs.size();
  const CycleModel model(cfg.model, data.vocab_size, data.features.cols());

  // The checkpoint records whether fusion was on, not the rule that chose it.
  ModelConfig resolved = cfg.model;
  resolved.fusion = cfg.fusion() ? FusionMode::on : FusionMode::off;

  TrainResult result;
  Checkpoint& ck = result.checkpoint;
  Rng run_rng(derive_seed(cfg.seed, {0x7EA1}));
  if (resume) {
    if (!(resume->model == resolved) || resume->vocab_size != data.vocab_size ||
        resume->feature_dim != data.features.cols()) {
      throw UsageError("checkpoint model does not match the training data or config");
    }
    if (resume->config_hash != config_hash) {
      result.warnings.push_back("config hash mismatch on resume: checkpoint " +
                                resume->config_hash + ", run " + config_hash);
    }
    ck = *resume;
    if (!ck.rng_state.empty()) run_rng = rng_from_text(ck.rng_state);
  } else {
    ck.model = resolved;
    ck.vocab_size = data.vocab_size;
    ck.feature_dim = data.features.cols();
    ck.params = model.init_parameters(cfg.seed, &data.features);
    ck.seed = cfg.seed;
  }
  ck.config_hash = config_hash;

  const bool graph_terms = cfg.weights.graph_terms();
  std::vector<std::size_t> order(data.mention_seqs.size());
  std::vector<TokenSequence> batch_mentions;
  std::vector<NodeId> batch_gold;

  for (std::uint64_t epoch = ck.epochs_done; epoch < cfg.epochs; ++epoch) {
    const std::uint64_t epoch_seed = run_rng();
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle_rng(epoch_seed);
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    EpochReport rep;
    rep.epoch = epoch + 1;
    double sum_le = 0.0;
    for (std::size_t start = 0; start + 2 <= order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      if (end - start < 2) break;
      batch_mentions.clear();
      batch_gold.clear();
      for (std::size_t k = start; k < end; ++k) {
        batch_mentions.push_back(data.mention_seqs[order[k]]);
        batch_gold.push_back(data.gold[order[k]]);
      }
      const ObjectiveBatch batch{batch_mentions, batch_gold};
      StepOutcome step;
      try {
        step = run_step(model, data, cfg, ck.params, &batch, {}, false, epoch,
                        cfg.weights.a != 0.0);
      } catch (const NumericError& e) {
        throw NumericError("epoch " + std::to_string(epoch + 1) + " batch " +
                           std::to_string(rep.batches + 1) + ": " + e.what());
      }
      if (cfg.weights.a != 0.0) adam_step(ck.params, step.grads, cfg.lr, ck.adam, cfg.adam);
      sum_le += step.L_e;
      ++rep.batches;
    }
    if (rep.batches == 0) throw DataError("training split smaller than one batch");

    double L_f = 0.0, L_r = 0.0;
    if (graph_terms) {
      const auto nodes = graph_node_sample(n, cfg.node_cap, epoch_seed);
      StepOutcome step;
      try {
        step = run_step(model, data, cfg, ck.params, nullptr, nodes, true, epoch, true);
      } catch (const NumericError& e) {
        throw NumericError("epoch " + std::to_string(epoch + 1) + " graph step: " + e.what());
      }
      if (step.has_f || step.has_r) adam_step(ck.params, step.grads, cfg.lr, ck.adam, cfg.adam);
      L_f = step.L_f;
      L_r = step.L_r;
      rep.graph_nodes = nodes.size();
    }
    rep.loss = combine(sum_le / static_cast<double>(rep.batches), L_f, L_r, cfg.weights);
    ck.epochs_done = epoch + 1;
    ck.rng_state = rng_text(run_rng);
    result.epochs.push_back(rep);
    if (on_epoch) on_epoch(rep);
  }
  ck.rng_state = rng_text(run_rng);
  return result;
}

LossReport objective_report(const TrainData& data, const TrainConfig& cfg,
                            const ad::ParameterStore& params) {
  cfg.validate();
  data.validate();
  const CycleModel model(cfg.model, data.vocab_size, data.features.cols());
  double sum_le = 0.0;
  std::size_t batches = 0;
  const auto& ms = data.mention_seqs;
  for (std::size_t start = 0; start + 2 <= ms.size(); start += cfg.batch_size) {
    const std::size_t end = std::min(ms.size(), start + cfg.batch_size);
    const ObjectiveBatch batch{std::span(ms).subspan(start, end - start),
                               std::span(data.gold).subspan(start, end - start)};
    sum_le += run_step(model, data, cfg, params, &batch, {}, false, 0, false).L_e;
    ++batches;
  }
  if (batches == 0) throw DataError("training split smaller than one batch");
  double L_f = 0.0, L_r = 0.0;
  if (cfg.weights.graph_terms()) {
    const auto nodes = graph_node_sample(data.entity_seqs.size(), cfg.node_cap, cfg.seed);
    const auto step = run_step(model, data, cfg, params, nullptr, nodes, true, 0, false);
    L_f = step.L_f;
    L_r = step.L_r;
  }
  return combine(sum_le / static_cast<double>(batches), L_f, L_r, cfg.weights);
}

std::string log_line(const EpochReport& r, const std::string& config_hash) {
  json j = {{"epoch", r.epoch},   {"L", r.loss.L},     {"L_e", r.loss.L_e},
            {"L_f", r.loss.L_f},  {"L_r", r.loss.L_r}, {"batches", r.batches},
            {"graph_nodes", r.graph_nodes}};
  if (!config_hash.empty()) j["config_hash"] = config_hash;
  return j.dump();
}

}  // namespace cycle
