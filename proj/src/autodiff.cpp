#include "cycle/autodiff.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "cycle/error.hpp"

namespace cycle::ad {

// ---------------------------------------------------------------------------
// ParameterStore

void ParameterStore::add(std::string name, Tensor value) {
  if (index_.contains(name)) throw UsageError("duplicate parameter '" + name + "'");
  index_.emplace(name, names_.size());
  names_.push_back(std::move(name));
  values_.push_back(std::move(value));
}

Tensor& ParameterStore::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw UsageError("unknown parameter '" + name + "'");
  return values_[it->second];
}

const Tensor& ParameterStore::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw UsageError("unknown parameter '" + name + "'");
  return values_[it->second];
}

void ParameterStore::set(const std::string& name, Tensor value) {
  auto& slot = at(name);
  if (!slot.same_shape(value)) {
    throw UsageError("parameter '" + name + "' has shape " + shape_string(slot.shape()) +
                     ", got " + shape_string(value.shape()));
  }
  slot = std::move(value);
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& v : values_) n += v.size();
  return n;
}

ParameterStore ParameterStore::zeros_like() const {
  ParameterStore out;
  for (std::size_t i = 0; i < names_.size(); ++i) {
    out.add(names_[i], Tensor::zeros_like(values_[i]));
  }
  return out;
}

bool ParameterStore::same_layout(const ParameterStore& other) const {
  if (names_ != other.names_) return false;
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (!values_[i].same_shape(other.values_[i])) return false;
  }
  return true;
}

bool ParameterStore::operator==(const ParameterStore& other) const {
  return names_ == other.names_ && values_ == other.values_;
}

namespace {

constexpr char kMagic[4] = {'C', 'Y', 'T', 'N'};

void put_u64(std::ostream& out, std::uint64_t v) {
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(buf), 8);
}

std::uint64_t get_u64(std::istream& in) {
  unsigned char buf[8];
  if (!in.read(reinterpret_cast<char*>(buf), 8)) throw DataError("truncated tensor container");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return v;
}

}  // namespace

void ParameterStore::write(std::ostream& out) const {
  out.put(static_cast<char>(kContainerVersion));
  out.write(kMagic, 4);
  put_u64(out, names_.size());
  for (std::size_t i = 0; i < names_.size(); ++i) {
    put_u64(out, names_[i].size());
    out.write(names_[i].data(), static_cast<std::streamsize>(names_[i].size()));
    const auto& t = values_[i];
    put_u64(out, t.rank());
    for (auto d : t.shape()) put_u64(out, d);
    for (double v : t.values()) put_u64(out, std::bit_cast<std::uint64_t>(v));
  }
}

ParameterStore ParameterStore::read(std::istream& in) {
  const int version = in.get();
  if (version == std::char_traits<char>::eof()) throw DataError("empty tensor container");
  if (version != kContainerVersion) {
    throw DataError("unsupported tensor container version " + std::to_string(version) +
                    " (expected " + std::to_string(kContainerVersion) + ")");
  }
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw DataError("bad tensor container magic");
  }
  ParameterStore store;
  const auto count = get_u64(in);
  for (std::uint64_t e = 0; e < count; ++e) {
    const auto len = get_u64(in);
    if (len > (1u << 20)) throw DataError("corrupt tensor name length");
    std::string name(len, '\0');
    if (!in.read(name.data(), static_cast<std::streamsize>(len))) {
      throw DataError("truncated tensor container");
    }
    const auto rank = get_u64(in);
    if (rank > 8) throw DataError("corrupt tensor rank");
    Tensor::Shape shape(rank);
    std::size_t total = 1;
    for (auto& d : shape) {
      d = get_u64(in);
      total *= d;
    }
    if (total > (std::size_t{1} << 32)) throw DataError("corrupt tensor shape");
    std::vector<double> values(total);
    for (auto& v : values) v = std::bit_cast<double>(get_u64(in));
    store.add(std::move(name), Tensor(std::move(shape), std::move(values)));
  }
  return store;
}

void ParameterStore::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  write(out);
}

ParameterStore ParameterStore::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  return read(in);
}

Tensor glorot_uniform(Tensor::Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  Tensor t(std::move(shape));
  const double s = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (auto& v : t.values()) v = uniform_real(rng, -s, s);
  return t;
}

// ---------------------------------------------------------------------------
// Tape

const Tape::Node& Tape::node(Var v) const {
  if (v.id < 0 || static_cast<std::size_t>(v.id) >= nodes_.size()) {
    throw UsageError("invalid tape variable");
  }
  return nodes_[static_cast<std::size_t>(v.id)];
}

const Tensor& Tape::value(Var v) const { return node(v).value(); }

double Tape::item(Var v) const {
  const auto& t = value(v);
  if (t.size() != 1) throw UsageError("item() on tensor of shape " + shape_string(t.shape()));
  return t[0];
}

std::string_view Tape::op_name(Var v) const { return node(v).op; }

Var Tape::push(const char* op, Tensor value, std::function<void(Tape&, int)> backward) {
  Node n;
  n.own = std::move(value);
  n.op = op;
  n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size() - 1)};
}

Tensor& Tape::grad_slot(int id) {
  auto& n = nodes_[static_cast<std::size_t>(id)];
  if (!n.has_grad) {
    n.grad = Tensor::zeros_like(n.value());
    n.has_grad = true;
  }
  return n.grad;
}

void Tape::require_same_shape(Var a, Var b, const char* op) const {
  if (!value(a).same_shape(value(b))) {
    throw UsageError(std::string(op) + ": shape " + shape_string(value(a).shape()) + " vs " +
                     shape_string(value(b).shape()));
  }
}

Var Tape::param(const std::string& name) {
  if (!params_) throw UsageError("tape has no parameter store");
  if (auto it = param_nodes_.find(name); it != param_nodes_.end()) return Var{it->second};
  Node n;
  n.ref = &params_->at(name);
  n.op = "param";
  nodes_.push_back(std::move(n));
  const int id = static_cast<int>(nodes_.size() - 1);
  param_nodes_.emplace(name, id);
  return Var{id};
}

Var Tape::constant(Tensor value) { return push("constant", std::move(value)); }

Var Tape::constant_ref(const Tensor& value) {
  Node n;
  n.ref = &value;
  n.op = "constant";
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size() - 1)};
}

Var Tape::add(Var a, Var b) {
  require_same_shape(a, b, "add");
  Tensor out = value(a);
  const auto& bv = value(b);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return push("add", std::move(out), [a, b](Tape& t, int self) {
    const Tensor g = t.nodes_[self].grad;
    auto& ga = t.grad_slot(a.id);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    auto& gb = t.grad_slot(b.id);
    for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
  });
}

Var Tape::sub(Var a, Var b) {
  require_same_shape(a, b, "sub");
  Tensor out = value(a);
  const auto& bv = value(b);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return push("sub", std::move(out), [a, b](Tape& t, int self) {
    const Tensor g = t.nodes_[self].grad;
    auto& ga = t.grad_slot(a.id);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    auto& gb = t.grad_slot(b.id);
    for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
  });
}

Var Tape::mul(Var a, Var b) {
  require_same_shape(a, b, "mul");
  Tensor out = value(a);
  const auto& bv = value(b);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return push("mul", std::move(out), [a, b](Tape& t, int self) {
    const Tensor g = t.nodes_[self].grad;
    const Tensor av = t.value(a);
    const Tensor bv2 = t.value(b);
    auto& ga = t.grad_slot(a.id);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv2[i];
    auto& gb = t.grad_slot(b.id);
    for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
  });
}

Var Tape::scale(Var a, double k) {
  Tensor out = value(a);
  for (auto& v : out.values()) v *= k;
  return push("scale", std::move(out), [a, k](Tape& t, int self) {
    const auto& g = t.nodes_[self].grad;
    auto& ga = t.grad_slot(a.id);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += k * g[i];
  });
}

Var Tape::tanh(Var a) {
  Tensor out = value(a);
  for (auto& v : out.values()) v = std::tanh(v);
  return push("tanh", std::move(out), [a](Tape& t, int self) {
    const auto& n = t.nodes_[self];
    const Tensor g = n.grad;
    const Tensor y = n.value();
    auto& ga = t.grad_slot(a.id);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (1.0 - y[i] * y[i]);
  });
}

Var Tape::elu(Var a) {
  Tensor out = value(a);
  for (auto& v : out.values()) v = v > 0.0 ? v : std::expm1(v);
  return push("elu", std::move(out), [a](Tape& t, int self) {
    const auto& n = t.nodes_[self];
    const Tensor g = n.grad;
    const Tensor x = t.value(a);
    auto& ga = t.grad_slot(a.id);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (x[i] > 0.0 ? 1.0 : std::exp(x[i]));
  });
}

Var Tape::leaky_relu(Var a, double slope) {
  Tensor out = value(a);
  for (auto& v : out.values()) v = v > 0.0 ? v : slope * v;
  return push("leaky_relu", std::move(out), [a, slope](Tape& t, int self) {
    const Tensor g = t.nodes_[self].grad;
    const Tensor x = t.value(a);
    auto& ga = t.grad_slot(a.id);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (x[i] > 0.0 ? 1.0 : slope);
  });
}

Var Tape::matvec(Var w, Var x) {
  const auto& wv = value(w);
  const auto& xv = value(x);
  if (wv.rank() != 2 || wv.cols() != xv.size()) {
    throw UsageError("matvec: " + shape_string(wv.shape()) + " x " + shape_string(xv.shape()));
  }
  Tensor out = Tensor::vector(cycle::matvec(wv, xv.values()));
  return push("matvec", std::move(out), [w, x](Tape& t, int self) {
    const Tensor g = t.nodes_[self].grad;
    const Tensor& wv = t.value(w);
    const Tensor& xv = t.value(x);
    const std::size_t r = wv.rows(), c = wv.cols();
    auto& gw = t.grad_slot(w.id);
    for (std::size_t i = 0; i < r; ++i) {
      if (g[i] == 0.0) continue;
      for (std::size_t j = 0; j < c; ++j) gw[i * c + j] += g[i] * xv[j];
    }
    auto& gx = t.grad_slot(x.id);
    for (std::size_t i = 0; i < r; ++i) {
      if (g[i] == 0.0) continue;
      for (std::size_t j = 0; j < c; ++j) gx[j] += g[i] * wv[i * c + j];
    }
  });
}

Var Tape::dot(Var a, Var b) {
  require_same_shape(a, b, "dot");
  const double s = cycle::dot(value(a).values(), value(b).values());
  return push("dot", Tensor::scalar(s), [a, b](Tape& t, int self) {
    const double g = t.nodes_[self].grad[0];
    const Tensor av = t.value(a);
    const Tensor bv = t.value(b);
    auto& ga = t.grad_slot(a.id);
    for (std::size_t i = 0; i < av.size(); ++i) ga[i] += g * bv[i];
    auto& gb = t.grad_slot(b.id);
    for (std::size_t i = 0; i < av.size(); ++i) gb[i] += g * av[i];
  });
}

Var Tape::sum(Var a) {
  double s = 0.0;
  for (double v : value(a).values()) s += v;
  return push("sum", Tensor::scalar(s), [a](Tape& t, int self) {
    const double g = t.nodes_[self].grad[0];
    auto& ga = t.grad_slot(a.id);
    for (auto& v : ga.values()) v += g;
  });
}

Var Tape::mean(Var a) {
  const auto n = value(a).size();
  if (n == 0) throw UsageError("mean of empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(n));
}

Var Tape::log_sum_exp(Var a) {
  const auto& av = value(a);
  if (av.size() == 0) throw UsageError("log_sum_exp of empty tensor");
  const double m = *std::max_element(av.values().begin(), av.values().end());
  double s = 0.0;
  for (double v : av.values()) s += std::exp(v - m);
  const double lse = m + std::log(s);
  return push("log_sum_exp", Tensor::scalar(lse), [a](Tape& t, int self) {
    const double g = t.nodes_[self].grad[0];
    const double lse = t.nodes_[self].value()[0];
    const Tensor av = t.value(a);
    auto& ga = t.grad_slot(a.id);
    for (std::size_t i = 0; i < av.size(); ++i) ga[i] += g * std::exp(av[i] - lse);
  });
}

Var Tape::index(Var a, std::size_t i) {
  const auto& av = value(a);
  if (i >= av.size()) throw UsageError("index out of range");
  return push("index", Tensor::scalar(av[i]), [a, i](Tape& t, int self) {
    t.grad_slot(a.id)[i] += t.nodes_[self].grad[0];
  });
}

Var Tape::cosine(Var a, Var b) {
  require_same_shape(a, b, "cosine");
  const auto& av = value(a);
  const auto& bv = value(b);
  const double na = l2_norm(av.values());
  const double nb = l2_norm(bv.values());
  if (na == 0.0 || nb == 0.0) return push("cosine", Tensor::scalar(0.0));
  const double c = cycle::dot(av.values(), bv.values()) / (na * nb);
  return push("cosine", Tensor::scalar(c), [a, b, na, nb, c](Tape& t, int self) {
    const double g = t.nodes_[self].grad[0];
    const Tensor av = t.value(a);
    const Tensor bv = t.value(b);
    auto& ga = t.grad_slot(a.id);
    for (std::size_t i = 0; i < av.size(); ++i) {
      ga[i] += g * (bv[i] / (na * nb) - c * av[i] / (na * na));
    }
    auto& gb = t.grad_slot(b.id);
    for (std::size_t i = 0; i < av.size(); ++i) {
      gb[i] += g * (av[i] / (na * nb) - c * bv[i] / (nb * nb));
    }
  });
}

Var Tape::softmax(Var a) {
  const auto& av = value(a);
  if (av.size() == 0) throw UsageError("softmax of empty tensor");
  Tensor out = av;
  const double m = *std::max_element(out.values().begin(), out.values().end());
  double s = 0.0;
  for (auto& v : out.values()) {
    v = std::exp(v - m);
    s += v;
  }
  for (auto& v : out.values()) v /= s;
  return push("softmax", std::move(out), [a](Tape& t, int self) {
    const auto& n = t.nodes_[self];
    const Tensor g = n.grad;
    const Tensor y = n.value();
    double gy = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) gy += g[i] * y[i];
    auto& ga = t.grad_slot(a.id);
    for (std::size_t i = 0; i < y.size(); ++i) ga[i] += y[i] * (g[i] - gy);
  });
}

Var Tape::concat(std::span<const Var> parts) {
  std::vector<double> out;
  std::vector<std::pair<int, std::size_t>> spans;
  for (auto p : parts) {
    const auto& v = value(p);
    spans.emplace_back(p.id, v.size());
    out.insert(out.end(), v.values().begin(), v.values().end());
  }
  return push("concat", Tensor::vector(std::move(out)), [spans](Tape& t, int self) {
    const Tensor g = t.nodes_[self].grad;
    std::size_t off = 0;
    for (const auto& [id, len] : spans) {
      auto& gp = t.grad_slot(id);
      for (std::size_t i = 0; i < len; ++i) gp[i] += g[off + i];
      off += len;
    }
  });
}

Var Tape::stack(std::span<const Var> scalars) {
  std::vector<double> out;
  std::vector<int> ids;
  for (auto s : scalars) {
    out.push_back(item(s));
    ids.push_back(s.id);
  }
  return push("stack", Tensor::vector(std::move(out)), [ids](Tape& t, int self) {
    const Tensor g = t.nodes_[self].grad;
    for (std::size_t i = 0; i < ids.size(); ++i) t.grad_slot(ids[i])[0] += g[i];
  });
}

Var Tape::row(Var matrix, std::size_t r) {
  const auto& m = value(matrix);
  if (m.rank() != 2 || r >= m.rows()) throw UsageError("row index out of range");
  const auto rv = m.row(r);
  return push("row", Tensor::vector({rv.begin(), rv.end()}), [matrix, r](Tape& t, int self) {
    const Tensor g = t.nodes_[self].grad;
    auto& gm = t.grad_slot(matrix.id);
    auto dst = gm.row(r);
    for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
  });
}

Var Tape::embed_mean(Var table, std::span<const TokenId> ids) {
  const auto& tv = value(table);
  if (tv.rank() != 2) throw UsageError("embed_mean needs a matrix table");
  if (ids.empty()) throw UsageError("embed_mean of empty sequence");
  const std::size_t d = tv.cols();
  std::vector<double> out(d, 0.0);
  for (auto id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= tv.rows()) {
      throw UsageError("token id " + std::to_string(id) + " outside embedding table");
    }
    const auto r = tv.row(static_cast<std::size_t>(id));
    for (std::size_t c = 0; c < d; ++c) out[c] += r[c];
  }
  const double inv = 1.0 / static_cast<double>(ids.size());
  for (auto& v : out) v *= inv;
  std::vector<TokenId> kept(ids.begin(), ids.end());
  return push("embed_mean", Tensor::vector(std::move(out)),
              [table, kept = std::move(kept), inv](Tape& t, int self) {
                const Tensor g = t.nodes_[self].grad;
                auto& gt = t.grad_slot(table.id);
                for (auto id : kept) {
                  auto dst = gt.row(static_cast<std::size_t>(id));
                  for (std::size_t c = 0; c < g.size(); ++c) dst[c] += inv * g[c];
                }
              });
}

Var Tape::weighted_sum(Var weights, std::span<const Var> vectors) {
  const auto& w = value(weights);
  if (w.size() != vectors.size() || vectors.empty()) {
    throw UsageError("weighted_sum: weight count does not match vector count");
  }
  const std::size_t d = value(vectors[0]).size();
  std::vector<double> out(d, 0.0);
  std::vector<int> ids;
  for (std::size_t k = 0; k < vectors.size(); ++k) {
    const auto& v = value(vectors[k]);
    if (v.size() != d) throw UsageError("weighted_sum: vectors differ in size");
    for (std::size_t c = 0; c < d; ++c) out[c] += w[k] * v[c];
    ids.push_back(vectors[k].id);
  }
  return push("weighted_sum", Tensor::vector(std::move(out)),
              [weights, ids = std::move(ids)](Tape& t, int self) {
                const Tensor g = t.nodes_[self].grad;
                const Tensor w = t.value(weights);
                auto& gw = t.grad_slot(weights.id);
                for (std::size_t k = 0; k < ids.size(); ++k) {
                  const auto& v = t.nodes_[static_cast<std::size_t>(ids[k])].value();
                  gw[k] += cycle::dot(g.values(), v.values());
                }
                for (std::size_t k = 0; k < ids.size(); ++k) {
                  auto& gv = t.grad_slot(ids[k]);
                  for (std::size_t c = 0; c < g.size(); ++c) gv[c] += w[k] * g[c];
                }
              });
}

void Tape::backward(Var loss) {
  const auto& lv = value(loss);
  if (lv.size() != 1) throw UsageError("backward() needs a scalar loss");
  for (auto& n : nodes_) n.has_grad = false;
  grad_slot(loss.id)[0] = 1.0;
  for (int i = loss.id; i >= 0; --i) {
    auto& n = nodes_[static_cast<std::size_t>(i)];
    if (n.has_grad && n.backward) n.backward(*this, i);
  }
}

Tensor Tape::grad(Var v) const {
  const auto& n = node(v);
  return n.has_grad ? n.grad : Tensor::zeros_like(n.value());
}

ParameterStore Tape::parameter_grads() const {
  if (!params_) throw UsageError("tape has no parameter store");
  ParameterStore out;
  for (const auto& name : params_->names()) {
    auto it = param_nodes_.find(name);
    if (it != param_nodes_.end() && nodes_[static_cast<std::size_t>(it->second)].has_grad) {
      out.add(name, nodes_[static_cast<std::size_t>(it->second)].grad);
    } else {
      out.add(name, Tensor::zeros_like(params_->at(name)));
    }
  }
  return out;
}

std::optional<std::string> Tape::first_nonfinite_op() const {
  for (const auto& n : nodes_) {
    if (!n.value().all_finite()) return std::string(n.op);
  }
  return std::nullopt;
}

std::optional<double> Tape::kink_distance() const {
  std::optional<double> out;
  for (const auto& n : nodes_) {
    const std::string_view op = n.op;
    if (op != "leaky_relu" && op != "elu") continue;
    for (double v : n.value().values()) out = std::min(out.value_or(std::abs(v)), std::abs(v));
  }
  return out;
}

// ---------------------------------------------------------------------------

ForwardBackwardResult forward_backward(const LossFn& fn, const ParameterStore& params) {
  Tape tape(&params);
  const Var loss = fn(tape);
  const double value = tape.item(loss);
  if (!std::isfinite(value)) {
    const auto op = tape.first_nonfinite_op().value_or("loss");
    throw NumericError("non-finite value produced by op '" + op + "'");
  }
  tape.backward(loss);
  return {value, tape.parameter_grads()};
}

double evaluate(const LossFn& fn, const ParameterStore& params) {
  Tape tape(&params);
  return tape.item(fn(tape));
}

GradCheckReport grad_check(const GradCheckOp& op, const ParameterStore& point, double tolerance,
                           double h) {
  GradCheckReport report;
  report.op = op.name;
  report.tolerance = tolerance;
  if (op.kink_distance && op.kink_distance(point) < 10.0 * h) {
    report.excluded = true;
    report.pass = true;
    return report;
  }
  const auto analytic = forward_backward(op.fn, point).grads;
  ParameterStore probe = point;
  for (const auto& name : point.names()) {
    auto& slot = probe.at(name);
    const auto& g = analytic.at(name);
    for (std::size_t i = 0; i < slot.size(); ++i) {
      const double saved = slot[i];
      slot[i] = saved + h;
      const double up = evaluate(op.fn, probe);
      slot[i] = saved - h;
      const double down = evaluate(op.fn, probe);
      slot[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double denom = std::max({1.0, std::abs(g[i]), std::abs(numeric)});
      const double err = std::abs(g[i] - numeric) / denom;
      if (!(err <= report.max_rel_error)) report.max_rel_error = err;  // NaN propagates
    }
  }
  report.pass = report.max_rel_error < tolerance;
  return report;
}

// ---------------------------------------------------------------------------
// Optimizers

namespace {
void require_layout(const ParameterStore& params, const ParameterStore& grads) {
  if (!params.same_layout(grads)) throw UsageError("gradient layout does not match parameters");
}
}  // namespace

void sgd_step(ParameterStore& params, const ParameterStore& grads, double lr) {
  require_layout(params, grads);
  for (const auto& name : params.names()) {
    auto& p = params.at(name);
    const auto& g = grads.at(name);
    for (std::size_t i = 0; i < p.size(); ++i) p[i] -= lr * g[i];
  }
}

void adam_step(ParameterStore& params, const ParameterStore& grads, double lr, AdamState& state,
               const AdamConfig& cfg) {
  require_layout(params, grads);
  if (state.m.size() == 0) {
    state.m = params.zeros_like();
    state.v = params.zeros_like();
  } else if (!state.m.same_layout(params)) {
    throw UsageError("optimizer state layout does not match parameters");
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (const auto& name : params.names()) {
    auto& p = params.at(name);
    const auto& g = grads.at(name);
    auto& m = state.m.at(name);
    auto& v = state.v.at(name);
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (g[i] == 0.0) continue;
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double mh = m[i] / bc1;
      const double vh = v[i] / bc2;
      p[i] -= lr * mh / (std::sqrt(vh) + cfg.eps);
    }
  }
}

}  // namespace cycle::ad
