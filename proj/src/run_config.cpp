#include "cycle/run_config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "cycle/error.hpp"

namespace cycle {

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

namespace {

enum class Kind { real, integer, size, boolean, text };

struct KeySpec {
  const char* key;
  const char* value;
  Kind kind;
  bool dataset;  // part of the dataset hash
};

const KeySpec kSpecs[] = {
    {"seed", "0", Kind::size, true},
    {"workers", "1", Kind::size, false},
    {"synth.n", "500", Kind::size, true},
    {"synth.first_year", "2019", Kind::integer, true},
    {"synth.years", "4", Kind::size, true},
    {"synth.topics", "10", Kind::size, true},
    {"synth.edges_per_entity", "4", Kind::size, true},
    {"synth.drift", "0.15", Kind::real, true},
    {"synth.train_mentions", "2", Kind::size, true},
    {"synth.test_mentions", "2", Kind::size, true},
    {"synth.vocab_size", "80", Kind::size, true},
    {"synth.description_words", "12", Kind::size, true},
    {"synth.context_words", "4", Kind::size, true},
    {"synth.name_share", "4", Kind::size, true},
    {"synth.new_fraction", "0.1", Kind::real, true},
    {"synth.power_law", "false", Kind::boolean, true},
    {"synth.growth", "false", Kind::boolean, true},
    {"dataset.min_count", "46", Kind::size, true},
    {"dataset.max_count", "200", Kind::size, true},
    {"dataset.knn_k", "10", Kind::size, true},
    {"dataset.negative_cap", "32", Kind::size, true},
    {"dataset.max_seq_len", "128", Kind::size, true},
    {"train.epochs", "1", Kind::size, false},
    {"train.batch_size", "32", Kind::size, false},
    {"train.lr", "1e-5", Kind::real, false},
    {"train.a", "1", Kind::real, false},
    {"train.b", "1", Kind::real, false},
    {"train.c", "1", Kind::real, false},
    {"train.temperature", "0.5", Kind::real, false},
    {"train.max_positives", "8", Kind::size, false},
    {"train.neighbor_threshold", "8", Kind::size, false},
    {"train.node_cap", "512", Kind::size, false},
    {"train.train_year", "0", Kind::integer, false},
    {"train.target_year", "0", Kind::integer, false},
    {"model.dim", "64", Kind::size, false},
    {"model.hidden", "64", Kind::size, false},
    {"model.fusion", "auto", Kind::text, false},
    {"model.trainable_features", "false", Kind::boolean, false},
    {"eval.ns", "1,2,4,8,16,32,64", Kind::text, false},
    {"eval.direction", "forward_and_backward", Kind::text, false},
};

const KeySpec& spec_of(const std::string& key) {
  for (const auto& s : kSpecs) {
    if (key == s.key) return s;
  }
  throw UsageError("unknown config key '" + key + "'");
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool parse_bool(const std::string& v, bool& out) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return out = true, true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return out = false, true;
  return false;
}

template <typename T>
bool parse_number(const std::string& v, T& out) {
  const char* first = v.data();
  const char* last = v.data() + v.size();
  const auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

std::vector<std::size_t> parse_ns(const std::string& v) {
  std::vector<std::size_t> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t n = 0;
    if (!parse_number(trim(item), n)) throw UsageError("bad recall N list '" + v + "'");
    out.push_back(n);
  }
  return out;
}

void check_value(const KeySpec& s, const std::string& v) {
  bool ok = true;
  switch (s.kind) {
    case Kind::real: {
      double d = 0.0;
      ok = parse_number(v, d);
      break;
    }
    case Kind::integer: {
      std::int64_t i = 0;
      ok = parse_number(v, i);
      break;
    }
    case Kind::size: {
      std::size_t z = 0;
      ok = parse_number(v, z);
      break;
    }
    case Kind::boolean: {
      bool b = false;
      ok = parse_bool(v, b);
      break;
    }
    case Kind::text:
      break;
  }
  if (!ok) throw UsageError("bad value '" + v + "' for config key '" + s.key + "'");
  if (std::string(s.key) == "model.fusion") parse_fusion_mode(v);
  if (std::string(s.key) == "eval.direction") parse_direction(v);
  if (std::string(s.key) == "eval.ns") {
    EvalConfig e;
    e.ns = parse_ns(v);
    e.validate();
  }
}

}  // namespace

RunConfig::RunConfig() {
  for (const auto& s : kSpecs) values_[s.key] = s.value;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  const auto& s = spec_of(key);
  const auto v = trim(value);
  check_value(s, v);
  values_[key] = v;
}

void RunConfig::set_assignment(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw UsageError("expected key=value, got '" + assignment + "'");
  set(trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

void RunConfig::load_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read config file " + path.string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    try {
      set_assignment(t);
    } catch (const UsageError& e) {
      throw UsageError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

std::string RunConfig::env_name(const std::string& key) {
  std::string out = "CYCLE_";
  for (char c : key) {
    out += c == '.' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  }
  return out;
}

void RunConfig::apply_env(const std::function<const char*(const char*)>& getenv_fn) {
  for (const auto& s : kSpecs) {
    const auto name = env_name(s.key);
    if (const char* v = getenv_fn(name.c_str())) {
      try {
        set(s.key, v);
      } catch (const UsageError& e) {
        throw UsageError(name + ": " + e.what());
      }
    }
  }
}

const std::string& RunConfig::get(const std::string& key) const {
  spec_of(key);
  return values_.at(key);
}

double RunConfig::get_double(const std::string& key) const {
  double d = 0.0;
  parse_number(get(key), d);
  return d;
}

std::int64_t RunConfig::get_int(const std::string& key) const {
  std::int64_t i = 0;
  parse_number(get(key), i);
  return i;
}

std::size_t RunConfig::get_size(const std::string& key) const {
  std::size_t z = 0;
  parse_number(get(key), z);
  return z;
}

bool RunConfig::get_bool(const std::string& key) const {
  bool b = false;
  parse_bool(get(key), b);
  return b;
}

const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> k = [] {
    std::vector<std::string> out;
    for (const auto& s : kSpecs) out.emplace_back(s.key);
    std::sort(out.begin(), out.end());
    return out;
  }();
  return k;
}

std::string RunConfig::text() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + "=" + v + "\n";
  return out;
}

nlohmann::json RunConfig::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [k, v] : values_) j[k] = v;
  return j;
}

std::string RunConfig::hash() const { return hex64(fnv1a64(text())); }

std::string RunConfig::dataset_hash() const {
  std::string t;
  for (const auto& s : kSpecs) {
    if (s.dataset) t += std::string(s.key) + "=" + values_.at(s.key) + "\n";
  }
  return hex64(fnv1a64(t));
}

SynthConfig RunConfig::synth() const {
  SynthConfig c;
  c.n = get_size("synth.n");
  c.first_year = static_cast<int>(get_int("synth.first_year"));
  c.years = get_size("synth.years");
  c.topics = get_size("synth.topics");
  c.edges_per_entity = get_size("synth.edges_per_entity");
  c.drift = get_double("synth.drift");
  c.train_mentions = get_size("synth.train_mentions");
  c.test_mentions = get_size("synth.test_mentions");
  c.vocab_size = get_size("synth.vocab_size");
  c.description_words = get_size("synth.description_words");
  c.context_words = get_size("synth.context_words");
  c.name_share = get_size("synth.name_share");
  c.new_fraction = get_double("synth.new_fraction");
  c.power_law = get_bool("synth.power_law");
  c.growth = get_bool("synth.growth");
  c.seed = get_size("seed");
  return c;
}

TokenFilterConfig RunConfig::token_filter() const {
  return {get_size("dataset.min_count"), get_size("dataset.max_count")};
}

FeatureGraphConfig RunConfig::feature_graph() const { return {get_size("dataset.knn_k")}; }

TrainConfig RunConfig::train() const {
  TrainConfig c;
  c.epochs = get_size("train.epochs");
  c.batch_size = get_size("train.batch_size");
  c.lr = get_double("train.lr");
  c.weights = {get_double("train.a"), get_double("train.b"), get_double("train.c")};
  c.contrastive.temperature = get_double("train.temperature");
  c.contrastive.max_positives = get_size("train.max_positives");
  c.neighbor_threshold = get_size("train.neighbor_threshold");
  c.node_cap = get_size("train.node_cap");
  c.seed = get_size("seed");
  c.train_year = static_cast<int>(get_int("train.train_year"));
  c.target_year = static_cast<int>(get_int("train.target_year"));
  c.model.dim = get_size("model.dim");
  c.model.hidden = get_size("model.hidden");
  c.model.fusion = parse_fusion_mode(get("model.fusion"));
  c.model.trainable_features = get_bool("model.trainable_features");
  return c;
}

EvalConfig RunConfig::eval() const {
  EvalConfig e;
  e.ns = parse_ns(get("eval.ns"));
  e.direction = parse_direction(get("eval.direction"));
  return e;
}

}  // namespace cycle
