#pragma once
// Reverse-mode differentiation over dense 64-bit tensors.
//
// A Tape records operations as they are evaluated; backward() walks the
// record in reverse and accumulates gradients. Parameters come from a
// ParameterStore and are the only leaves that report gradients; constants
// never do. Every op here ships an analytic backward that is verified against
// central differences by grad_check().

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "cycle/random.hpp"
#include "cycle/tensor.hpp"
#include "cycle/tokenizer.hpp"

namespace cycle::ad {

class ParameterStore {
 public:
  // Throws UsageError on a duplicate name.
  void add(std::string name, Tensor value);
  bool contains(const std::string& name) const { return index_.contains(name); }
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  // Replaces a value; the shape must not change.
  void set(const std::string& name, Tensor value);

  const std::vector<std::string>& names() const { return names_; }
  std::size_t size() const { return names_.size(); }
  std::size_t scalar_count() const;

  ParameterStore zeros_like() const;
  bool same_layout(const ParameterStore& other) const;
  bool operator==(const ParameterStore& other) const;

  // Named-tensor container: version byte, magic, entry count, then per entry
  // name, rank, dims and little-endian f64 values.
  void write(std::ostream& out) const;
  static ParameterStore read(std::istream& in);
  void save(const std::filesystem::path& path) const;
  static ParameterStore load(const std::filesystem::path& path);

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> values_;
  std::unordered_map<std::string, std::size_t> index_;
};

inline constexpr std::uint8_t kContainerVersion = 1;

// Uniform(-s, s) with s = sqrt(6 / (fan_in + fan_out)).
Tensor glorot_uniform(Tensor::Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng);

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

class Tape {
 public:
  explicit Tape(const ParameterStore* params = nullptr) : params_(params) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaf bound to a named parameter (one node per name per tape).
  Var param(const std::string& name);
  Var constant(Tensor value);
  // Constant that aliases external storage; `value` must outlive the tape.
  Var constant_ref(const Tensor& value);
  Var scalar(double v) { return constant(Tensor::scalar(v)); }

  const Tensor& value(Var v) const;
  double item(Var v) const;
  std::string_view op_name(Var v) const;
  std::size_t node_count() const { return nodes_.size(); }

  // Elementwise (identical shapes).
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, double k);
  Var tanh(Var a);
  Var elu(Var a);
  Var leaky_relu(Var a, double negative_slope);

  // [r,c] x [c] -> [r]
  Var matvec(Var w, Var x);
  // Scalar results.
  Var dot(Var a, Var b);
  Var sum(Var a);
  Var mean(Var a);
  Var log_sum_exp(Var a);
  Var index(Var a, std::size_t i);
  // Cosine similarity; a zero-norm operand yields the constant 0.
  Var cosine(Var a, Var b);

  Var softmax(Var a);
  Var concat(std::span<const Var> parts);
  Var stack(std::span<const Var> scalars);
  // Row r of a matrix.
  Var row(Var matrix, std::size_t r);
  // Mean of embedding-table rows; ids must be in range.
  Var embed_mean(Var table, std::span<const TokenId> ids);
  // sum_k weights[k] * vectors[k]
  Var weighted_sum(Var weights, std::span<const Var> vectors);

  // Seeds d(loss)/d(loss) = 1 and propagates.
  void backward(Var loss);
  // Zero tensor if the node received no gradient.
  Tensor grad(Var v) const;
  // Gradients for every parameter in the bound store (zeros if untouched).
  ParameterStore parameter_grads() const;
  // Name of the first op whose value is non-finite, if any.
  std::optional<std::string> first_nonfinite_op() const;
  // Smallest output magnitude over the LeakyReLU and ELU nodes, a lower bound
  // on their inputs' distance to the kink at 0. Absent when there are none.
  std::optional<double> kink_distance() const;

 private:
  struct Node {
    Tensor own;
    const Tensor* ref = nullptr;
    Tensor grad;
    bool has_grad = false;
    const char* op = "";
    std::function<void(Tape&, int)> backward;

    const Tensor& value() const { return ref ? *ref : own; }
  };

  Var push(const char* op, Tensor value, std::function<void(Tape&, int)> backward = {});
  Tensor& grad_slot(int id);
  const Node& node(Var v) const;
  void require_same_shape(Var a, Var b, const char* op) const;

  const ParameterStore* params_;
  std::vector<Node> nodes_;
  std::map<std::string, int> param_nodes_;
};

using LossFn = std::function<Var(Tape&)>;

struct ForwardBackwardResult {
  double loss = 0.0;
  ParameterStore grads;
};

// Evaluates `fn` on a fresh tape bound to `params` and backpropagates.
// Throws NumericError naming the first op with a non-finite value.
ForwardBackwardResult forward_backward(const LossFn& fn, const ParameterStore& params);
// Forward only.
double evaluate(const LossFn& fn, const ParameterStore& params);

struct GradCheckReport {
  std::string op;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  bool pass = false;
  bool excluded = false;  // probe point rejected by the kink filter
};

struct GradCheckOp {
  std::string name;
  LossFn fn;
  // Smallest distance from any activation input to a non-differentiable point
  // at this probe; absent for smooth ops.
  std::function<double(const ParameterStore&)> kink_distance;
};

inline constexpr double kFiniteDifferenceStep = 1e-4;

// Central differences with step h against the analytic gradient, elementwise
// over every parameter. Relative error uses max(1, |analytic|, |numeric|).
// Probes within 10h of a kink are excluded (report.excluded, pass = true).
GradCheckReport grad_check(const GradCheckOp& op, const ParameterStore& point, double tolerance,
                           double h = kFiniteDifferenceStep);

void sgd_step(ParameterStore& params, const ParameterStore& grads, double lr);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::uint64_t step = 0;
  ParameterStore m;
  ParameterStore v;

  bool operator==(const AdamState&) const = default;
};

// Adam with bias correction. Entries whose gradient is exactly zero are left
// untouched, moments included.
void adam_step(ParameterStore& params, const ParameterStore& grads, double lr, AdamState& state,
               const AdamConfig& cfg = {});

}  // namespace cycle::ad
