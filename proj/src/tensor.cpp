#include "ibc/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>

#include "ibc/errors.hpp"

namespace ibc::ad {

namespace {

// Dense row-major kernels. Each output row accumulates in a fixed order that
// does not depend on the total row count, which keeps per-row results
// bitwise stable under batching (max-pool invariance relies on this).

// C += A(m,k) * B(k,n)
void mm_nn_acc(const double* a, const double* b, double* c, std::size_t m,
               std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    double* ci = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      double av = ai[p];
      const double* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

// C += A(m,n) * B(k,n)^T
void mm_nt_acc(const double* a, const double* b, double* c, std::size_t m,
               std::size_t n, std::size_t k) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * n;
    double* ci = c + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double* bp = b + p * n;
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += ai[j] * bp[j];
      ci[p] += s;
    }
  }
}

// C += A(m,k)^T * B(m,n)
void mm_tn_acc(const double* a, const double* b, double* c, std::size_t k,
               std::size_t m, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    const double* bi = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      double av = ai[p];
      double* cp = c + p * n;
      for (std::size_t j = 0; j < n; ++j) cp[j] += av * bi[j];
    }
  }
}

thread_local Graph* g_active = nullptr;
std::atomic<std::uint64_t> g_graph_counter{1};

double stable_softplus(double x) {
  return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

[[noreturn]] void shape_fail(OpKind kind, const Shape& a, const Shape& b) {
  throw ShapeError(strf("shape mismatch in ", op_name(kind), ": ", shape_str(a),
                        " vs ", shape_str(b)));
}

bool is_2d(const Shape& s) { return s.size() == 2; }

}  // namespace

void Shape::push_back(std::size_t d) {
  if (rank_ >= 4) throw ShapeError("tensor rank above 4 is unsupported");
  dims_[rank_++] = d;
}

std::size_t shape_size(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t e : s) n *= e;
  return n;
}

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)) {
  if (shape_size(shape_) != data.size())
    throw ShapeError(strf("tensor shape ", shape_str(shape_), " does not hold ",
                          data.size(), " elements"));
  data_ = std::make_shared<const std::vector<double>>(std::move(data));
}

Tensor Tensor::scalar(double v) { return Tensor({1}, {v}); }

Tensor Tensor::zeros(Shape shape) {
  std::size_t n = shape_size(shape);
  return Tensor(std::move(shape), std::vector<double>(n, 0.0));
}

Tensor Tensor::full(Shape shape, double v) {
  std::size_t n = shape_size(shape);
  return Tensor(std::move(shape), std::vector<double>(n, v));
}

Tensor Tensor::ones(Shape shape) { return full(std::move(shape), 1.0); }

Tensor Tensor::vec(std::vector<double> data) {
  std::size_t n = data.size();
  return Tensor({n}, std::move(data));
}

Tensor Tensor::row(std::vector<double> data) {
  std::size_t n = data.size();
  return Tensor({1, n}, std::move(data));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> data) {
  return Tensor({rows, cols}, std::move(data));
}

std::size_t Tensor::rows() const {
  if (!is_2d(shape_)) throw ShapeError(strf("rows() on tensor ", shape_str(shape_)));
  return shape_[0];
}

std::size_t Tensor::cols() const {
  if (!is_2d(shape_)) throw ShapeError(strf("cols() on tensor ", shape_str(shape_)));
  return shape_[1];
}

std::span<const double> Tensor::data() const {
  static const std::vector<double> empty;
  const std::vector<double>& v = data_ ? *data_ : empty;
  return {v.data(), v.size()};
}

double Tensor::at(std::size_t r, std::size_t c) const {
  return (*data_)[r * cols() + c];
}

double Tensor::value() const {
  if (size() != 1)
    throw ShapeError(strf("value() on non-scalar tensor ", shape_str(shape_)));
  return (*data_)[0];
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_size(shape) != size())
    throw ShapeError(strf("reshape ", shape_str(shape_), " -> ", shape_str(shape),
                          " changes element count"));
  Tensor t = *this;
  t.shape_ = std::move(shape);
  return t;
}

Tensor Tensor::detached() const {
  Tensor t = *this;
  t.node_ = -1;
  t.graph_id_ = 0;
  return t;
}

bool Tensor::all_finite() const {
  for (double v : data())
    if (!std::isfinite(v)) return false;
  return true;
}

const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::add: return "add";
    case OpKind::sub: return "sub";
    case OpKind::mul: return "mul";
    case OpKind::scale: return "scale";
    case OpKind::matmul: return "matmul";
    case OpKind::sum: return "sum";
    case OpKind::mean: return "mean";
    case OpKind::tanh: return "tanh";
    case OpKind::softplus: return "softplus";
    case OpKind::square: return "square";
    case OpKind::exp: return "exp";
    case OpKind::log: return "log";
    case OpKind::logsumexp: return "logsumexp";
    case OpKind::concat: return "concat";
    case OpKind::slice: return "slice";
    case OpKind::max_reduce: return "max_reduce";
    case OpKind::clamp: return "clamp";
    case OpKind::leaf: return "leaf";
  }
  return "?";
}

Graph::Graph() : id_(g_graph_counter.fetch_add(1)) {}

Tensor Graph::leaf(const Tensor& value) {
  Node n;
  n.kind = OpKind::leaf;
  n.out = value.detached();
  int id = record(std::move(n));
  Tensor t = value.detached();
  t.node_ = id;
  t.graph_id_ = id_;
  nodes_[id].out = t;
  return t;
}

void Graph::reset() {
  nodes_.clear();
  id_ = g_graph_counter.fetch_add(1);
}

int Graph::record(Node node) {
  nodes_.push_back(std::move(node));
  return static_cast<int>(nodes_.size() - 1);
}

std::vector<double>* Graph::grad_slot(int id, std::size_t size) {
  auto idx = static_cast<std::size_t>(id);
  auto& g = grads_[idx];
  if (grad_epoch_[idx] != sweep_) {
    g.assign(size, 0.0);
    grad_epoch_[idx] = sweep_;
  }
  return &g;
}

const std::vector<double>* Graph::grad_of(int id) const {
  auto idx = static_cast<std::size_t>(id);
  if (idx >= grad_epoch_.size() || grad_epoch_[idx] != sweep_) return nullptr;
  return &grads_[idx];
}

Graph::Scope::Scope(Graph& g) : prev_(g_active) { g_active = &g; }
Graph::Scope::~Scope() { g_active = prev_; }

Graph* Graph::active() { return g_active; }

namespace {

bool on_graph(const Tensor& t, std::uint64_t graph_id) {
  return t.attached() && t.graph_id() == graph_id;
}

}  // namespace

std::unordered_map<int, Tensor> Graph::run_backward(const Tensor& root) {
  if (!on_graph(root, id_))
    throw Error("backward: root tensor is detached from this graph");
  if (root.size() != 1)
    throw Error(strf("backward: root must be scalar, got ", shape_str(root.shape())));

  ++sweep_;
  if (grads_.size() < nodes_.size()) {
    grads_.resize(nodes_.size());
    grad_epoch_.resize(nodes_.size(), 0);
  }
  (*grad_slot(root.node(), 1))[0] = 1.0;

  for (int id = root.node(); id >= 0; --id) {
    const auto* gp = grad_of(id);
    if (!gp) continue;
    const auto& g = *gp;
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    const auto& ins = n.inputs;

    auto acc = [&](std::size_t which) -> std::vector<double>* {
      const Tensor& in = ins[which];
      if (!on_graph(in, id_)) return nullptr;
      return grad_slot(in.node(), in.size());
    };

    switch (n.kind) {
      case OpKind::leaf:
        break;
      case OpKind::add:
      case OpKind::sub: {
        double sign_b = n.kind == OpKind::add ? 1.0 : -1.0;
        for (std::size_t which = 0; which < 2; ++which) {
          auto* d = acc(which);
          if (!d) continue;
          double sign = which == 0 ? 1.0 : sign_b;
          if (ins[which].size() == 1 && g.size() > 1) {
            double s = 0;
            for (double gv : g) s += gv;
            (*d)[0] += sign * s;
          } else {
            for (std::size_t i = 0; i < g.size(); ++i) (*d)[i] += sign * g[i];
          }
        }
        break;
      }
      case OpKind::mul: {
        for (std::size_t which = 0; which < 2; ++which) {
          auto* d = acc(which);
          if (!d) continue;
          const auto other = ins[1 - which].data();
          bool self_scalar = ins[which].size() == 1 && g.size() > 1;
          bool other_scalar = ins[1 - which].size() == 1 && g.size() > 1;
          if (self_scalar) {
            double s = 0;
            for (std::size_t i = 0; i < g.size(); ++i) s += g[i] * other[i];
            (*d)[0] += s;
          } else if (other_scalar) {
            for (std::size_t i = 0; i < g.size(); ++i) (*d)[i] += g[i] * other[0];
          } else {
            for (std::size_t i = 0; i < g.size(); ++i) (*d)[i] += g[i] * other[i];
          }
        }
        break;
      }
      case OpKind::scale: {
        if (auto* d = acc(0))
          for (std::size_t i = 0; i < g.size(); ++i) (*d)[i] += n.attrs.a * g[i];
        break;
      }
      case OpKind::matmul: {
        const Tensor& a = ins[0];
        const Tensor& b = ins[1];
        std::size_t m = a.rows(), k = a.cols(), c = b.cols();
        if (auto* d = acc(0))
          mm_nt_acc(g.data(), b.data().data(), d->data(), m, c, k);
        if (auto* d = acc(1))
          mm_tn_acc(a.data().data(), g.data(), d->data(), k, m, c);
        break;
      }
      case OpKind::sum: {
        if (auto* d = acc(0))
          for (double& v : *d) v += g[0];
        break;
      }
      case OpKind::mean: {
        if (auto* d = acc(0)) {
          double gv = g[0] / static_cast<double>(d->size());
          for (double& v : *d) v += gv;
        }
        break;
      }
      case OpKind::tanh: {
        if (auto* d = acc(0)) {
          const auto y = n.out.data();
          for (std::size_t i = 0; i < g.size(); ++i)
            (*d)[i] += g[i] * (1.0 - y[i] * y[i]);
        }
        break;
      }
      case OpKind::softplus: {
        if (auto* d = acc(0)) {
          const auto x = ins[0].data();
          for (std::size_t i = 0; i < g.size(); ++i) (*d)[i] += g[i] * sigmoid(x[i]);
        }
        break;
      }
      case OpKind::square: {
        if (auto* d = acc(0)) {
          const auto x = ins[0].data();
          for (std::size_t i = 0; i < g.size(); ++i) (*d)[i] += g[i] * 2.0 * x[i];
        }
        break;
      }
      case OpKind::exp: {
        if (auto* d = acc(0)) {
          const auto y = n.out.data();
          for (std::size_t i = 0; i < g.size(); ++i) (*d)[i] += g[i] * y[i];
        }
        break;
      }
      case OpKind::log: {
        if (auto* d = acc(0)) {
          const auto x = ins[0].data();
          for (std::size_t i = 0; i < g.size(); ++i) (*d)[i] += g[i] / x[i];
        }
        break;
      }
      case OpKind::logsumexp: {
        if (auto* d = acc(0)) {
          const auto x = ins[0].data();
          double lse = n.out.value();
          for (std::size_t i = 0; i < d->size(); ++i)
            (*d)[i] += g[0] * std::exp(x[i] - lse);
        }
        break;
      }
      case OpKind::concat: {
        std::size_t offset = 0;
        if (n.attrs.axis == 0) {
          for (std::size_t which = 0; which < ins.size(); ++which) {
            std::size_t len = ins[which].size();
            if (auto* d = acc(which))
              for (std::size_t i = 0; i < len; ++i) (*d)[i] += g[offset + i];
            offset += len;
          }
        } else {
          std::size_t rows = n.out.rows(), out_cols = n.out.cols();
          for (std::size_t which = 0; which < ins.size(); ++which) {
            std::size_t c = ins[which].cols();
            if (auto* d = acc(which))
              for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t j = 0; j < c; ++j)
                  (*d)[r * c + j] += g[r * out_cols + offset + j];
            offset += c;
          }
        }
        break;
      }
      case OpKind::slice: {
        if (auto* d = acc(0))
          for (std::size_t i = 0; i < g.size(); ++i) (*d)[n.attrs.i0 + i] += g[i];
        break;
      }
      case OpKind::max_reduce: {
        if (auto* d = acc(0))
          for (std::size_t i = 0; i < g.size(); ++i) (*d)[n.arg[i]] += g[i];
        break;
      }
      case OpKind::clamp: {
        if (auto* d = acc(0)) {
          const auto x = ins[0].data();
          for (std::size_t i = 0; i < g.size(); ++i)
            if (x[i] >= n.attrs.a && x[i] <= n.attrs.b) (*d)[i] += g[i];
        }
        break;
      }
    }
  }

  std::unordered_map<int, Tensor> result;
  for (std::size_t id = 0; id < nodes_.size(); ++id) {
    if (nodes_[id].kind != OpKind::leaf) continue;
    const auto* g = grad_of(static_cast<int>(id));
    const Tensor& out = nodes_[id].out;
    if (!g)
      result.emplace(static_cast<int>(id), Tensor::zeros(out.shape()));
    else
      result.emplace(static_cast<int>(id), Tensor(out.shape(), *g));
  }
  return result;
}

Tensor Graph::gradient(const Tensor& t) const {
  if (!on_graph(t, id_))
    throw Error("gradient: tensor is not recorded on this graph");
  const auto* g = grad_of(t.node());
  if (!g) return Tensor::zeros(t.shape());
  return Tensor(t.shape(), *g);
}

std::unordered_map<int, Tensor> backward(const Tensor& root) {
  Graph* g = Graph::active();
  if (!g) throw Error("backward: no active graph");
  return g->run_backward(root);
}

namespace {

void check_inputs(OpKind kind, std::span<const Tensor> in, std::size_t arity) {
  if (in.size() != arity)
    throw ShapeError(strf(op_name(kind), ": expected ", arity, " inputs, got ",
                          in.size()));
}

// Elementwise binary with single-element broadcast.
Tensor ew_binary(OpKind kind, const Tensor& a, const Tensor& b) {
  const bool a1 = a.size() == 1, b1 = b.size() == 1;
  if (!a1 && !b1 && a.shape() != b.shape()) shape_fail(kind, a.shape(), b.shape());
  // when both operands are single-element, keep the higher-rank shape
  const Shape& out_shape = (a1 && !b1) || (a1 && b1 && b.shape().size() > a.shape().size())
                               ? b.shape()
                               : a.shape();
  std::size_t n = shape_size(out_shape);
  std::vector<double> out(n);
  const double* da = a.data().data();
  const double* db = b.data().data();
  const bool bs = b1 && n > 1, as = a1 && n > 1;
  switch (kind) {
    case OpKind::add:
      if (as)
        for (std::size_t i = 0; i < n; ++i) out[i] = da[0] + db[i];
      else if (bs)
        for (std::size_t i = 0; i < n; ++i) out[i] = da[i] + db[0];
      else
        for (std::size_t i = 0; i < n; ++i) out[i] = da[i] + db[i];
      break;
    case OpKind::sub:
      if (as)
        for (std::size_t i = 0; i < n; ++i) out[i] = da[0] - db[i];
      else if (bs)
        for (std::size_t i = 0; i < n; ++i) out[i] = da[i] - db[0];
      else
        for (std::size_t i = 0; i < n; ++i) out[i] = da[i] - db[i];
      break;
    case OpKind::mul:
      if (as)
        for (std::size_t i = 0; i < n; ++i) out[i] = da[0] * db[i];
      else if (bs)
        for (std::size_t i = 0; i < n; ++i) out[i] = da[i] * db[0];
      else
        for (std::size_t i = 0; i < n; ++i) out[i] = da[i] * db[i];
      break;
    default:
      throw Error("ew_binary: bad kind");
  }
  return Tensor(out_shape, std::move(out));
}

}  // namespace

Tensor apply(OpKind kind, std::span<const Tensor> inputs, const OpAttrs& attrs) {
  Tensor out;
  std::vector<std::uint32_t> arg;

  switch (kind) {
    case OpKind::add:
    case OpKind::sub:
    case OpKind::mul:
      check_inputs(kind, inputs, 2);
      out = ew_binary(kind, inputs[0], inputs[1]);
      break;
    case OpKind::scale: {
      check_inputs(kind, inputs, 1);
      std::vector<double> v(inputs[0].data().begin(), inputs[0].data().end());
      for (double& x : v) x *= attrs.a;
      out = Tensor(inputs[0].shape(), std::move(v));
      break;
    }
    case OpKind::matmul: {
      check_inputs(kind, inputs, 2);
      const Tensor& a = inputs[0];
      const Tensor& b = inputs[1];
      if (!is_2d(a.shape()) || !is_2d(b.shape()) || a.cols() != b.rows())
        shape_fail(kind, a.shape(), b.shape());
      std::size_t m = a.rows(), k = a.cols(), c = b.cols();
      std::vector<double> v(m * c, 0.0);
      mm_nn_acc(a.data().data(), b.data().data(), v.data(), m, k, c);
      out = Tensor({m, c}, std::move(v));
      break;
    }
    case OpKind::sum: {
      check_inputs(kind, inputs, 1);
      double s = 0;
      for (double v : inputs[0].data()) s += v;
      out = Tensor::scalar(s);
      break;
    }
    case OpKind::mean: {
      check_inputs(kind, inputs, 1);
      if (inputs[0].size() == 0) throw ShapeError("mean: empty tensor");
      double s = 0;
      for (double v : inputs[0].data()) s += v;
      out = Tensor::scalar(s / static_cast<double>(inputs[0].size()));
      break;
    }
    case OpKind::tanh:
    case OpKind::softplus:
    case OpKind::square:
    case OpKind::exp:
    case OpKind::log: {
      check_inputs(kind, inputs, 1);
      std::vector<double> v(inputs[0].data().begin(), inputs[0].data().end());
      switch (kind) {
        case OpKind::tanh: for (double& x : v) x = std::tanh(x); break;
        case OpKind::softplus: for (double& x : v) x = stable_softplus(x); break;
        case OpKind::square: for (double& x : v) x = x * x; break;
        case OpKind::exp: for (double& x : v) x = std::exp(x); break;
        case OpKind::log: for (double& x : v) x = std::log(x); break;
        default: break;
      }
      out = Tensor(inputs[0].shape(), std::move(v));
      break;
    }
    case OpKind::logsumexp: {
      check_inputs(kind, inputs, 1);
      auto d = inputs[0].data();
      if (d.empty()) throw ShapeError("logsumexp: empty tensor");
      double m = *std::max_element(d.begin(), d.end());
      double s = 0;
      for (double v : d) s += std::exp(v - m);
      out = Tensor::scalar(m + std::log(s));
      break;
    }
    case OpKind::concat: {
      if (inputs.empty()) throw ShapeError("concat: no inputs");
      if (attrs.axis == 0) {
        bool two_d = is_2d(inputs[0].shape());
        std::size_t cols = two_d ? inputs[0].cols() : 0;
        std::vector<double> v;
        std::size_t rows = 0;
        for (const Tensor& t : inputs) {
          if (two_d) {
            if (!is_2d(t.shape()) || t.cols() != cols)
              shape_fail(kind, inputs[0].shape(), t.shape());
            rows += t.rows();
          }
          v.insert(v.end(), t.data().begin(), t.data().end());
        }
        std::size_t n = v.size();
        out = two_d ? Tensor({rows, cols}, std::move(v)) : Tensor({n}, std::move(v));
      } else if (attrs.axis == 1) {
        std::size_t rows = inputs[0].rows();
        std::size_t cols = 0;
        for (const Tensor& t : inputs) {
          if (!is_2d(t.shape()) || t.rows() != rows)
            shape_fail(kind, inputs[0].shape(), t.shape());
          cols += t.cols();
        }
        std::vector<double> v(rows * cols);
        std::size_t offset = 0;
        for (const Tensor& t : inputs) {
          std::size_t c = t.cols();
          const auto d = t.data();
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < c; ++j) v[r * cols + offset + j] = d[r * c + j];
          offset += c;
        }
        out = Tensor({rows, cols}, std::move(v));
      } else {
        throw ShapeError(strf("concat: bad axis ", attrs.axis));
      }
      break;
    }
    case OpKind::slice: {
      check_inputs(kind, inputs, 1);
      if (attrs.i1 > inputs[0].size() || attrs.i0 > attrs.i1)
        throw ShapeError(strf("slice [", attrs.i0, ",", attrs.i1, ") of tensor ",
                              shape_str(inputs[0].shape())));
      auto d = inputs[0].data();
      out = Tensor({attrs.i1 - attrs.i0},
                   std::vector<double>(d.begin() + static_cast<std::ptrdiff_t>(attrs.i0),
                                       d.begin() + static_cast<std::ptrdiff_t>(attrs.i1)));
      break;
    }
    case OpKind::max_reduce: {
      check_inputs(kind, inputs, 1);
      const Tensor& t = inputs[0];
      if (!is_2d(t.shape())) throw ShapeError(strf("max_reduce on ", shape_str(t.shape())));
      std::size_t rows = t.rows(), cols = t.cols();
      if (rows == 0 || cols == 0) throw ShapeError("max_reduce: empty tensor");
      const auto d = t.data();
      if (attrs.axis == 0) {
        std::vector<double> v(cols);
        arg.resize(cols);
        for (std::size_t j = 0; j < cols; ++j) {
          std::size_t best = j;
          for (std::size_t r = 1; r < rows; ++r)
            if (d[r * cols + j] > d[best]) best = r * cols + j;
          v[j] = d[best];
          arg[j] = static_cast<std::uint32_t>(best);
        }
        out = Tensor({1, cols}, std::move(v));
      } else if (attrs.axis == 1) {
        std::vector<double> v(rows);
        arg.resize(rows);
        for (std::size_t r = 0; r < rows; ++r) {
          std::size_t best = r * cols;
          for (std::size_t j = 1; j < cols; ++j)
            if (d[r * cols + j] > d[best]) best = r * cols + j;
          v[r] = d[best];
          arg[r] = static_cast<std::uint32_t>(best);
        }
        out = Tensor({rows, 1}, std::move(v));
      } else {
        throw ShapeError(strf("max_reduce: bad axis ", attrs.axis));
      }
      break;
    }
    case OpKind::clamp: {
      check_inputs(kind, inputs, 1);
      std::vector<double> v(inputs[0].data().begin(), inputs[0].data().end());
      for (double& x : v) x = std::min(std::max(x, attrs.a), attrs.b);
      out = Tensor(inputs[0].shape(), std::move(v));
      break;
    }
    case OpKind::leaf:
      throw Error("apply: leaf is not an operation");
  }

  Graph* g = Graph::active();
  if (g) {
    bool attached = false;
    for (const Tensor& t : inputs)
      if (t.attached() && t.graph_id() == g->id()) attached = true;
    if (attached) {
      Graph::Node node;
      node.kind = kind;
      node.attrs = attrs;
      node.inputs.assign(inputs.begin(), inputs.end());
      node.arg = std::move(arg);
      node.out = out;
      int id = g->record(std::move(node));
      out.node_ = id;
      out.graph_id_ = g->id();
      g->nodes_[static_cast<std::size_t>(id)].out = out;
    }
  }
  return out;
}

namespace {
Tensor apply2(OpKind kind, const Tensor& a, const Tensor& b, const OpAttrs& attrs = {}) {
  const Tensor in[] = {a, b};
  return apply(kind, in, attrs);
}
Tensor apply1(OpKind kind, const Tensor& a, const OpAttrs& attrs = {}) {
  const Tensor in[] = {a};
  return apply(kind, in, attrs);
}
}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return apply2(OpKind::add, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return apply2(OpKind::sub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return apply2(OpKind::mul, a, b); }

Tensor scale(const Tensor& a, double factor) {
  OpAttrs attrs;
  attrs.a = factor;
  return apply1(OpKind::scale, a, attrs);
}

Tensor matmul(const Tensor& a, const Tensor& b) { return apply2(OpKind::matmul, a, b); }
Tensor sum(const Tensor& a) { return apply1(OpKind::sum, a); }
Tensor mean(const Tensor& a) { return apply1(OpKind::mean, a); }
Tensor tanh(const Tensor& a) { return apply1(OpKind::tanh, a); }
Tensor softplus(const Tensor& a) { return apply1(OpKind::softplus, a); }
Tensor square(const Tensor& a) { return apply1(OpKind::square, a); }
Tensor exp(const Tensor& a) { return apply1(OpKind::exp, a); }
Tensor log(const Tensor& a) { return apply1(OpKind::log, a); }
Tensor logsumexp(const Tensor& a) { return apply1(OpKind::logsumexp, a); }

Tensor concat(std::span<const Tensor> parts, int axis) {
  OpAttrs attrs;
  attrs.axis = axis;
  return apply(OpKind::concat, parts, attrs);
}

Tensor concat(std::initializer_list<Tensor> parts, int axis) {
  return concat(std::span<const Tensor>(parts.begin(), parts.size()), axis);
}

Tensor slice(const Tensor& a, std::size_t begin, std::size_t end) {
  OpAttrs attrs;
  attrs.i0 = begin;
  attrs.i1 = end;
  return apply1(OpKind::slice, a, attrs);
}

Tensor max_reduce(const Tensor& a, int axis) {
  OpAttrs attrs;
  attrs.axis = axis;
  return apply1(OpKind::max_reduce, a, attrs);
}

Tensor clamp(const Tensor& a, double lo, double hi) {
  OpAttrs attrs;
  attrs.a = lo;
  attrs.b = hi;
  return apply1(OpKind::clamp, a, attrs);
}

}  // namespace ibc::ad
