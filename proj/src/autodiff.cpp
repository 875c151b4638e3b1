#include "sgcp/autodiff.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <set>

#include "sgcp/error.hpp"
#include "sgcp/rng.hpp"

namespace sgcp {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

ConstMap cmap(const Tensor& t) {
  return ConstMap(t.data().data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}
MutMap mmap(Tensor& t) {
  return MutMap(t.data().data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2 / pi)
constexpr double kGeluA = 0.044715;

Tape& tape_of(Var a, Var b) {
  if (a.tape() == nullptr || a.tape() != b.tape()) throw NumericError("operands recorded on different tapes");
  return *a.tape();
}

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
  throw NumericError(std::string(op) + ": shape mismatch " + a.shape_string() + " vs " + b.shape_string());
}

void require_same(const char* op, const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) shape_error(op, a, b);
}

template <typename F>
Var unary(Var a, F&& value_fn, std::function<void(const Tensor& x, const Tensor& y, const Tensor& g, Tensor& dx)> grad_fn) {
  const Tensor& x = a.value();
  Tensor y(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = value_fn(x[i]);
  Tape& t = *a.tape();
  Var parents[] = {a};
  const std::size_t out_id = t.size();
  return t.record(std::move(y), parents, [a, out_id, grad_fn = std::move(grad_fn)](Tape& tape, const Tensor& g) {
    grad_fn(a.value(), tape.value(out_id), g, tape.grad_of(a));
  });
}

}  // namespace

// ---------------------------------------------------------------------------

Parameter& ParameterStore::add(const std::string& name, std::size_t rows, std::size_t cols) {
  if (index_.count(name)) throw std::invalid_argument("parameter '" + name + "' already exists");
  index_.emplace(name, params_.size());
  params_.push_back(std::make_unique<Parameter>(Parameter{name, Tensor(rows, cols), Tensor(rows, cols)}));
  return *params_.back();
}

Parameter& ParameterStore::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("no parameter named '" + name + "'");
  return *params_[it->second];
}

const Parameter& ParameterStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("no parameter named '" + name + "'");
  return *params_[it->second];
}

std::vector<Parameter*> ParameterStore::all() {
  std::vector<Parameter*> out;
  for (auto& p : params_) out.push_back(p.get());
  return out;
}

std::vector<const Parameter*> ParameterStore::all() const {
  std::vector<const Parameter*> out;
  for (const auto& p : params_) out.push_back(p.get());
  return out;
}

std::size_t ParameterStore::num_values() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p->value.size();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) p->grad.fill(0.0);
}

void ParameterStore::init_uniform(Rng& rng, double scale) {
  for (auto& p : params_)
    for (double& v : p->value.data()) v = rng.uniform(-scale, scale);
}

// ---------------------------------------------------------------------------

const Tensor& Var::value() const { return tape_->value(id_); }

double Var::scalar() const {
  const Tensor& v = value();
  if (v.size() != 1) throw NumericError("scalar(): tensor has shape " + v.shape_string());
  return v[0];
}

Var Tape::constant(Tensor value) {
  if (!value.all_finite()) throw NumericError("constant: non-finite value");
  Node& n = nodes_.emplace_back();
  n.value = std::move(value);
  n.value_ref = &n.value;
  n.grad_ref = &n.grad;
  return Var(this, nodes_.size() - 1);
}

Var Tape::param(Parameter& p) {
  auto it = param_nodes_.find(&p);
  if (it != param_nodes_.end()) return Var(this, it->second);
  Node& n = nodes_.emplace_back();
  n.value_ref = &p.value;
  n.grad_ref = &p.grad;
  n.requires_grad = record_;
  if (record_ && !p.grad.same_shape(p.value)) p.grad = Tensor(p.value.rows(), p.value.cols());
  param_nodes_.emplace(&p, nodes_.size() - 1);
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::span<const Var> parents, Pullback pullback) {
  if (!value.all_finite()) throw NumericError("non-finite value produced by a tape operation");
  bool needs = false;
  for (const Var& p : parents) needs = needs || nodes_[p.id()].requires_grad;
  Node& n = nodes_.emplace_back();
  n.value = std::move(value);
  n.value_ref = &n.value;
  n.grad_ref = &n.grad;
  n.requires_grad = record_ && needs;
  if (n.requires_grad) n.pullback = std::move(pullback);
  return Var(this, nodes_.size() - 1);
}

Var Tape::record_leaf(Tensor value, Pullback pullback) {
  if (!value.all_finite()) throw NumericError("non-finite value produced by a tape operation");
  Node& n = nodes_.emplace_back();
  n.value = std::move(value);
  n.value_ref = &n.value;
  n.grad_ref = &n.grad;
  n.requires_grad = record_;
  if (record_) n.pullback = std::move(pullback);
  return Var(this, nodes_.size() - 1);
}

Tensor& Tape::grad_of(Var v) {
  Node& n = nodes_[v.id()];
  Tensor& g = *n.grad_ref;
  if (!g.same_shape(*n.value_ref)) g = Tensor(n.value_ref->rows(), n.value_ref->cols());
  return g;
}

void Tape::backward(Var root, double seed) {
  if (root.tape() != this) throw NumericError("backward: root belongs to another tape");
  if (root.value().size() != 1) throw NumericError("backward: root must be a scalar, got " + root.value().shape_string());
  if (!record_) throw NumericError("backward: tape was created without gradient recording");
  grad_of(root)[0] += seed;
  for (std::size_t id = root.id() + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.pullback || n.grad_ref->empty()) continue;
    n.pullback(*this, *n.grad_ref);
  }
}

// ---------------------------------------------------------------------------

Var matmul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (A.cols() != B.rows()) shape_error("matmul", A, B);
  Tensor out(A.rows(), B.cols());
  mmap(out).noalias() = cmap(A) * cmap(B);
  Var parents[] = {a, b};
  return t.record(std::move(out), parents, [a, b](Tape& tape, const Tensor& g) {
    if (tape.requires_grad(a)) mmap(tape.grad_of(a)).noalias() += cmap(g) * cmap(b.value()).transpose();
    if (tape.requires_grad(b)) mmap(tape.grad_of(b)).noalias() += cmap(a.value()).transpose() * cmap(g);
  });
}

Var transpose(Var a) {
  const Tensor& A = a.value();
  Tensor out(A.cols(), A.rows());
  mmap(out) = cmap(A).transpose();
  Var parents[] = {a};
  return a.tape()->record(std::move(out), parents, [a](Tape& tape, const Tensor& g) {
    mmap(tape.grad_of(a)) += cmap(g).transpose();
  });
}

Var add(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require_same("add", a.value(), b.value());
  Tensor out = a.value();
  out += b.value();
  Var parents[] = {a, b};
  return t.record(std::move(out), parents, [a, b](Tape& tape, const Tensor& g) {
    if (tape.requires_grad(a)) tape.grad_of(a) += g;
    if (tape.requires_grad(b)) tape.grad_of(b) += g;
  });
}

Var sub(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require_same("sub", a.value(), b.value());
  Tensor out = a.value();
  mmap(out) -= cmap(b.value());
  Var parents[] = {a, b};
  return t.record(std::move(out), parents, [a, b](Tape& tape, const Tensor& g) {
    if (tape.requires_grad(a)) tape.grad_of(a) += g;
    if (tape.requires_grad(b)) mmap(tape.grad_of(b)) -= cmap(g);
  });
}

Var mul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require_same("mul", a.value(), b.value());
  Tensor out(a.value().rows(), a.value().cols());
  mmap(out) = cmap(a.value()).cwiseProduct(cmap(b.value()));
  Var parents[] = {a, b};
  return t.record(std::move(out), parents, [a, b](Tape& tape, const Tensor& g) {
    if (tape.requires_grad(a)) mmap(tape.grad_of(a)) += cmap(g).cwiseProduct(cmap(b.value()));
    if (tape.requires_grad(b)) mmap(tape.grad_of(b)) += cmap(g).cwiseProduct(cmap(a.value()));
  });
}

Var scale(Var a, double c) {
  Tensor out = a.value();
  mmap(out) *= c;
  Var parents[] = {a};
  return a.tape()->record(std::move(out), parents, [a, c](Tape& tape, const Tensor& g) {
    mmap(tape.grad_of(a)) += c * cmap(g);
  });
}

Var one_minus(Var a) {
  Tensor out(a.value().rows(), a.value().cols());
  mmap(out) = (1.0 - cmap(a.value()).array()).matrix();
  Var parents[] = {a};
  return a.tape()->record(std::move(out), parents, [a](Tape& tape, const Tensor& g) {
    mmap(tape.grad_of(a)) -= cmap(g);
  });
}

Var scalar_mul(Var s, Var a) {
  Tape& t = tape_of(s, a);
  if (s.value().size() != 1) shape_error("scalar_mul", s.value(), a.value());
  const double k = s.value()[0];
  Tensor out = a.value();
  mmap(out) *= k;
  Var parents[] = {s, a};
  return t.record(std::move(out), parents, [s, a](Tape& tape, const Tensor& g) {
    if (tape.requires_grad(s)) tape.grad_of(s)[0] += cmap(g).cwiseProduct(cmap(a.value())).sum();
    if (tape.requires_grad(a)) mmap(tape.grad_of(a)) += s.value()[0] * cmap(g);
  });
}

Var add_column(Var m, Var v) {
  Tape& t = tape_of(m, v);
  const Tensor& M = m.value();
  const Tensor& V = v.value();
  if (V.cols() != 1 || V.rows() != M.rows()) shape_error("add_column", M, V);
  Tensor out = M;
  mmap(out).colwise() += cmap(V).col(0);
  Var parents[] = {m, v};
  return t.record(std::move(out), parents, [m, v](Tape& tape, const Tensor& g) {
    if (tape.requires_grad(m)) tape.grad_of(m) += g;
    if (tape.requires_grad(v)) mmap(tape.grad_of(v)) += cmap(g).rowwise().sum();
  });
}

Var concat(std::span<const Var> parts) {
  if (parts.empty()) throw NumericError("concat: no operands");
  Tape& t = *parts[0].tape();
  const std::size_t cols = parts[0].value().cols();
  std::size_t rows = 0;
  for (const Var& p : parts) {
    if (p.tape() != &t) throw NumericError("operands recorded on different tapes");
    if (p.value().cols() != cols) shape_error("concat", parts[0].value(), p.value());
    rows += p.value().rows();
  }
  Tensor out(rows, cols);
  std::size_t offset = 0;
  for (const Var& p : parts) {
    std::copy(p.value().data().begin(), p.value().data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(offset));
    offset += p.value().size();
  }
  std::vector<Var> saved(parts.begin(), parts.end());
  return t.record(std::move(out), parts, [saved](Tape& tape, const Tensor& g) {
    std::size_t off = 0;
    for (const Var& p : saved) {
      const std::size_t n = p.value().size();
      if (tape.requires_grad(p)) {
        Tensor& dp = tape.grad_of(p);
        for (std::size_t i = 0; i < n; ++i) dp[i] += g[off + i];
      }
      off += n;
    }
  });
}

Var hconcat(std::span<const Var> columns) {
  if (columns.empty()) throw NumericError("hconcat: no operands");
  Tape& t = *columns[0].tape();
  const std::size_t rows = columns[0].value().rows();
  for (const Var& c : columns) {
    if (c.tape() != &t) throw NumericError("operands recorded on different tapes");
    if (c.value().cols() != 1 || c.value().rows() != rows) shape_error("hconcat", columns[0].value(), c.value());
  }
  const std::size_t n = columns.size();
  Tensor out(rows, n);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t r = 0; r < rows; ++r) out(r, j) = columns[j].value()[r];
  std::vector<Var> saved(columns.begin(), columns.end());
  return t.record(std::move(out), columns, [saved](Tape& tape, const Tensor& g) {
    for (std::size_t j = 0; j < saved.size(); ++j) {
      if (!tape.requires_grad(saved[j])) continue;
      Tensor& d = tape.grad_of(saved[j]);
      for (std::size_t r = 0; r < d.rows(); ++r) d[r] += g(r, j);
    }
  });
}

Var slice_rows(Var a, std::size_t begin, std::size_t count) {
  const Tensor& A = a.value();
  if (begin + count > A.rows())
    throw NumericError("slice_rows: rows [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                       ") out of range for " + A.shape_string());
  const std::size_t cols = A.cols();
  Tensor out(count, cols);
  std::copy(A.data().begin() + static_cast<std::ptrdiff_t>(begin * cols),
            A.data().begin() + static_cast<std::ptrdiff_t>((begin + count) * cols), out.data().begin());
  Var parents[] = {a};
  return a.tape()->record(std::move(out), parents, [a, begin, cols](Tape& tape, const Tensor& g) {
    Tensor& d = tape.grad_of(a);
    for (std::size_t i = 0; i < g.size(); ++i) d[begin * cols + i] += g[i];
  });
}

Var column(Var m, std::size_t j) {
  const Tensor& M = m.value();
  if (j >= M.cols()) throw NumericError("column: index " + std::to_string(j) + " out of range for " + M.shape_string());
  Tensor out(M.rows(), 1);
  for (std::size_t r = 0; r < M.rows(); ++r) out[r] = M(r, j);
  Var parents[] = {m};
  return m.tape()->record(std::move(out), parents, [m, j](Tape& tape, const Tensor& g) {
    Tensor& d = tape.grad_of(m);
    for (std::size_t r = 0; r < g.rows(); ++r) d(r, j) += g[r];
  });
}

double sigmoid_value(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double gelu_value(double x) { return 0.5 * x * (1.0 + std::tanh(kGeluC * (x + kGeluA * x * x * x))); }

Var sigmoid(Var a) {
  return unary(a, sigmoid_value, [](const Tensor&, const Tensor& y, const Tensor& g, Tensor& dx) {
    for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] * y[i] * (1.0 - y[i]);
  });
}

Var tanh(Var a) {
  return unary(a, [](double x) { return std::tanh(x); }, [](const Tensor&, const Tensor& y, const Tensor& g, Tensor& dx) {
    for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] * (1.0 - y[i] * y[i]);
  });
}

Var gelu(Var a) {
  return unary(a, gelu_value, [](const Tensor& x, const Tensor&, const Tensor& g, Tensor& dx) {
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double v = x[i];
      const double th = std::tanh(kGeluC * (v + kGeluA * v * v * v));
      const double d = 0.5 * (1.0 + th) + 0.5 * v * (1.0 - th * th) * kGeluC * (1.0 + 3.0 * kGeluA * v * v);
      dx[i] += g[i] * d;
    }
  });
}

Var log(Var a) {
  for (double v : a.value().data())
    if (!(v > 0.0)) throw NumericError("log: non-positive argument");
  return unary(a, [](double x) { return std::log(x); }, [](const Tensor& x, const Tensor&, const Tensor& g, Tensor& dx) {
    for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] / x[i];
  });
}

Var clamp(Var a, double lo, double hi) {
  return unary(
      a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
      [lo, hi](const Tensor& x, const Tensor&, const Tensor& g, Tensor& dx) {
        for (std::size_t i = 0; i < g.size(); ++i)
          if (x[i] >= lo && x[i] <= hi) dx[i] += g[i];
      });
}

Var softmax(Var a) {
  const Tensor& x = a.value();
  if (x.empty()) throw NumericError("softmax: empty input");
  Tensor y(x.rows(), x.cols());
  const double mx = *std::max_element(x.data().begin(), x.data().end());
  double z = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) z += (y[i] = std::exp(x[i] - mx));
  for (double& v : y.data()) v /= z;
  Var parents[] = {a};
  const std::size_t out_id = a.tape()->size();
  return a.tape()->record(std::move(y), parents, [a, out_id](Tape& tape, const Tensor& g) {
    const Tensor& y = tape.value(out_id);
    double dot = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) dot += g[i] * y[i];
    Tensor& dx = tape.grad_of(a);
    for (std::size_t i = 0; i < y.size(); ++i) dx[i] += y[i] * (g[i] - dot);
  });
}

Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  Var parents[] = {a};
  return a.tape()->record(Tensor::scalar(s), parents, [a](Tape& tape, const Tensor& g) {
    Tensor& d = tape.grad_of(a);
    for (double& v : d.data()) v += g[0];
  });
}

Var mean(Var a) {
  const double n = static_cast<double>(a.value().size());
  if (n == 0) throw NumericError("mean: empty input");
  return scale(sum(a), 1.0 / n);
}

Var add_n(std::span<const Var> terms) {
  if (terms.empty()) throw NumericError("add_n: no operands");
  Tape& t = *terms[0].tape();
  Tensor out = terms[0].value();
  for (std::size_t i = 1; i < terms.size(); ++i) {
    if (terms[i].tape() != &t) throw NumericError("operands recorded on different tapes");
    require_same("add_n", out, terms[i].value());
    out += terms[i].value();
  }
  std::vector<Var> saved(terms.begin(), terms.end());
  return t.record(std::move(out), terms, [saved](Tape& tape, const Tensor& g) {
    for (const Var& v : saved)
      if (tape.requires_grad(v)) tape.grad_of(v) += g;
  });
}

Var pick(Var a, std::size_t i) {
  if (i >= a.value().size())
    throw NumericError("pick: index " + std::to_string(i) + " out of range for " + a.value().shape_string());
  Var parents[] = {a};
  return a.tape()->record(Tensor::scalar(a.value()[i]), parents, [a, i](Tape& tape, const Tensor& g) {
    tape.grad_of(a)[i] += g[0];
  });
}

Var lookup(Tape& tape, Parameter& table, std::size_t row) {
  if (row >= table.value.rows())
    throw NumericError("lookup: row " + std::to_string(row) + " out of range for " + table.value.shape_string());
  const std::size_t cols = table.value.cols();
  Tensor out(cols, 1);
  for (std::size_t c = 0; c < cols; ++c) out[c] = table.value(row, c);
  Parameter* p = &table;
  return tape.record_leaf(std::move(out), [p, row, cols](Tape&, const Tensor& g) {
    if (!p->grad.same_shape(p->value)) p->grad = Tensor(p->value.rows(), p->value.cols());
    for (std::size_t c = 0; c < cols; ++c) p->grad(row, c) += g[c];
  });
}

Var scatter_add(Var src, std::span<const int> index, std::size_t size) {
  const Tensor& s = src.value();
  if (s.cols() != 1 || s.rows() != index.size())
    throw NumericError("scatter_add: source " + s.shape_string() + " vs " + std::to_string(index.size()) + " indices");
  Tensor out(size, 1);
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] < 0 || static_cast<std::size_t>(index[i]) >= size)
      throw NumericError("scatter_add: index " + std::to_string(index[i]) + " out of range for size " + std::to_string(size));
    out[static_cast<std::size_t>(index[i])] += s[i];
  }
  std::vector<int> idx(index.begin(), index.end());
  Var parents[] = {src};
  return src.tape()->record(std::move(out), parents, [src, idx = std::move(idx)](Tape& tape, const Tensor& g) {
    Tensor& d = tape.grad_of(src);
    for (std::size_t i = 0; i < idx.size(); ++i) d[i] += g[static_cast<std::size_t>(idx[i])];
  });
}

// ---------------------------------------------------------------------------

GradCheckResult grad_check(const std::function<Var(Tape&)>& f, ParameterStore& params, const GradCheckOptions& options) {
  if (!(options.eps > 0.0)) throw std::invalid_argument("grad_check: eps must be positive");
  auto evaluate = [&] {
    Tape tape(false);
    const double v = f(tape).scalar();
    if (!std::isfinite(v)) throw NumericError("grad_check: non-finite function value");
    return v;
  };

  params.zero_grad();
  {
    Tape tape(true);
    Var y = f(tape);
    if (!std::isfinite(y.scalar())) throw NumericError("grad_check: non-finite function value");
    tape.backward(y);
  }

  GradCheckResult result;
  Rng rng(options.seed);
  for (Parameter* p : params.all()) {
    const std::size_t n = p->value.size();
    if (n == 0) continue;
    std::vector<std::size_t> nonzero;
    for (std::size_t i = 0; i < n; ++i)
      if (p->grad[i] != 0.0) nonzero.push_back(i);
    std::set<std::size_t> chosen;
    const int half = options.samples_per_param / 2;
    for (int k = 0; k < half && !nonzero.empty(); ++k) chosen.insert(nonzero[rng.below(nonzero.size())]);
    while (static_cast<int>(chosen.size()) < options.samples_per_param && chosen.size() < n) chosen.insert(rng.below(n));

    for (std::size_t i : chosen) {
      const double original = p->value[i];
      p->value[i] = original + options.eps;
      const double plus = evaluate();
      p->value[i] = original - options.eps;
      const double minus = evaluate();
      p->value[i] = original;
      const double numeric = (plus - minus) / (2.0 * options.eps);
      const double analytic = p->grad[i];
      const double denom = std::max({std::abs(analytic), std::abs(numeric), options.floor});
      const double rel = std::abs(analytic - numeric) / denom;
      ++result.checked;
      if (result.checked == 1 || rel > result.max_rel_error) {
        result.max_rel_error = rel;
        result.worst_param = p->name;
        result.worst_index = i;
        result.worst_analytic = analytic;
        result.worst_numeric = numeric;
      }
    }
  }
  return result;
}

}  // namespace sgcp
