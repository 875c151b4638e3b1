#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "sgcp/tensor.hpp"

namespace sgcp {

class Rng;

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
};

/// Owns named learnable arrays. References returned by `add` stay valid for
/// the lifetime of the store.
class ParameterStore {
 public:
  Parameter& add(const std::string& name, std::size_t rows, std::size_t cols);
  Parameter& get(const std::string& name);
  const Parameter& get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  std::vector<Parameter*> all();
  std::vector<const Parameter*> all() const;
  std::size_t size() const { return params_.size(); }
  std::size_t num_values() const;

  void zero_grad();
  /// Uniform(-scale, scale) fill of every value.
  void init_uniform(Rng& rng, double scale);

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
  std::map<std::string, std::size_t> index_;
};

class Tape;

/// Handle to a value recorded on a tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Tensor& value() const;
  double scalar() const;
  std::size_t id() const { return id_; }
  Tape* tape() const { return tape_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Records forward values and their pullbacks; `backward` replays the
/// pullbacks in reverse creation order, which is a reverse topological order.
/// Gradients of parameter leaves accumulate directly into Parameter::grad.
class Tape {
 public:
  /// Receives the output gradient and adds contributions into parents via
  /// `Tape::grad_of`.
  using Pullback = std::function<void(Tape&, const Tensor& out_grad)>;

  /// With `record_gradients == false` no pullbacks are kept (inference).
  explicit Tape(bool record_gradients = true) : record_(record_gradients) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var param(Parameter& p);

  /// Appends a node. `parents` decide whether the result needs a gradient;
  /// `pullback` is dropped when none of them does. Throws NumericError on
  /// non-finite values.
  Var record(Tensor value, std::span<const Var> parents, Pullback pullback);

  /// Node with no tape parents that still needs its gradient, e.g. an
  /// embedding row whose pullback writes into the table's gradient.
  Var record_leaf(Tensor value, Pullback pullback);

  /// Seeds d(root)/d(root) = seed (root must be 1x1) and runs all pullbacks.
  void backward(Var root, double seed = 1.0);

  const Tensor& value(std::size_t id) const { return *nodes_[id].value_ref; }
  bool requires_grad(Var v) const { return nodes_[v.id()].requires_grad; }
  bool recording() const { return record_; }
  std::size_t size() const { return nodes_.size(); }

  /// Gradient buffer of a node, allocated (zeroed) on first use.
  Tensor& grad_of(Var v);

 private:
  struct Node {
    Tensor value;
    const Tensor* value_ref = nullptr;
    Tensor grad;
    Tensor* grad_ref = nullptr;
    Pullback pullback;
    bool requires_grad = false;
  };

  bool record_;
  std::deque<Node> nodes_;
  std::unordered_map<const Parameter*, std::size_t> param_nodes_;
};

// ---------------------------------------------------------------------------
// Primitives. All operands must live on the same tape. Shape mismatches throw
// NumericError naming both shapes.

Var matmul(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double c);
Var one_minus(Var a);
/// Scalar (1x1) times tensor.
Var scalar_mul(Var s, Var a);
/// M (r x c) plus column v (r x 1) added to every column.
Var add_column(Var m, Var v);
/// Stacks operands with equal column counts vertically.
Var concat(std::span<const Var> parts);
/// Places column vectors side by side.
Var hconcat(std::span<const Var> columns);
Var slice_rows(Var a, std::size_t begin, std::size_t count);
Var column(Var m, std::size_t j);
Var sigmoid(Var a);
Var tanh(Var a);
/// Tanh approximation 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3))).
Var gelu(Var a);
/// Normalizes over all elements.
Var softmax(Var a);
Var log(Var a);
/// Elementwise clamp; the gradient is zero where the clamp is active.
Var clamp(Var a, double lo, double hi);
Var sum(Var a);
Var mean(Var a);
Var add_n(std::span<const Var> terms);
/// Element i of a as a 1x1 scalar.
Var pick(Var a, std::size_t i);
/// Row `row` of `table` as a column vector; the gradient lands sparsely in
/// table.grad.
Var lookup(Tape& tape, Parameter& table, std::size_t row);
/// out (size x 1) with out[index[i]] += src[i], summed in ascending i.
Var scatter_add(Var src, std::span<const int> index, std::size_t size);

// Plain (non-recorded) scalar versions used by tests and inference code.
double gelu_value(double x);
double sigmoid_value(double x);

// ---------------------------------------------------------------------------
// Finite-difference gradient checking.

struct GradCheckOptions {
  double eps = 1e-5;
  /// Coordinates checked per parameter: half drawn from coordinates with a
  /// non-zero analytic gradient, half uniformly.
  int samples_per_param = 8;
  std::uint64_t seed = 1;
  /// Denominator floor of the relative error.
  double floor = 1e-7;
};

struct GradCheckResult {
  /// max over checked coordinates of |g - n| / max(|g|, |n|, floor), where g is
  /// the reverse-mode gradient and n the central difference.
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t checked = 0;
};

/// `f` builds a scalar on the given tape from the parameters in `params`.
/// Compares reverse-mode gradients with central differences
/// (f(x+eps) - f(x-eps)) / (2 eps). Throws NumericError if any evaluation is
/// non-finite. Parameter values are restored on return.
GradCheckResult grad_check(const std::function<Var(Tape&)>& f, ParameterStore& params,
                           const GradCheckOptions& options = {});

}  // namespace sgcp
