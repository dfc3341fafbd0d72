#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace ibc::ad {

/// Tensor extents with inline storage (tapes copy shapes constantly; a heap
/// vector here dominates the profile). Rank is capped at 4, far above the
/// rank-2 tensors this project uses.
class Shape {
 public:
  Shape() = default;
  Shape(std::initializer_list<std::size_t> dims) {
    for (std::size_t d : dims) push_back(d);
  }
  explicit Shape(std::size_t rank) {
    for (std::size_t i = 0; i < rank; ++i) push_back(0);
  }

  std::size_t size() const { return rank_; }
  bool empty() const { return rank_ == 0; }
  std::size_t operator[](std::size_t i) const { return dims_[i]; }
  std::size_t& operator[](std::size_t i) { return dims_[i]; }
  void push_back(std::size_t d);
  const std::size_t* begin() const { return dims_; }
  const std::size_t* end() const { return dims_ + rank_; }
  std::size_t* begin() { return dims_; }
  std::size_t* end() { return dims_ + rank_; }
  friend bool operator==(const Shape& a, const Shape& b) {
    if (a.rank_ != b.rank_) return false;
    for (std::uint8_t i = 0; i < a.rank_; ++i)
      if (a.dims_[i] != b.dims_[i]) return false;
    return true;
  }

 private:
  std::size_t dims_[4] = {0, 0, 0, 0};
  std::uint8_t rank_ = 0;
};

std::size_t shape_size(const Shape& s);
std::string shape_str(const Shape& s);

enum class OpKind : std::uint8_t;
struct OpAttrs;
class Tensor;
Tensor apply(OpKind kind, std::span<const Tensor> inputs, const OpAttrs& attrs);

/// Dense tensor of 64-bit reals with value semantics. The payload is shared
/// and immutable after construction; reshaping or detaching never copies.
/// A tensor optionally carries a handle (graph id, node id) into the
/// differentiation graph that recorded it.
class Tensor {
 public:
  Tensor() : shape_{0} {}
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double v);
  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double v);
  static Tensor ones(Shape shape);
  static Tensor vec(std::vector<double> data);                    // {n}
  static Tensor row(std::vector<double> data);                    // {1, n}
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_ ? data_->size() : 0; }
  std::size_t rows() const;   // first extent of a 2-d tensor
  std::size_t cols() const;   // second extent of a 2-d tensor
  std::span<const double> data() const;
  double operator[](std::size_t i) const { return (*data_)[i]; }
  double at(std::size_t r, std::size_t c) const;
  /// Value of a single-element tensor.
  double value() const;

  int node() const { return node_; }
  std::uint64_t graph_id() const { return graph_id_; }
  bool attached() const { return node_ >= 0; }

  /// Same payload and node handle under a new shape (element count must match).
  Tensor reshaped(Shape shape) const;
  /// Same payload with the graph handle removed.
  Tensor detached() const;

  bool all_finite() const;

 private:
  friend class Graph;
  friend Tensor apply(OpKind, std::span<const Tensor>, const OpAttrs&);
  Shape shape_;
  std::shared_ptr<const std::vector<double>> data_;
  int node_ = -1;
  std::uint64_t graph_id_ = 0;
};

enum class OpKind : std::uint8_t {
  add,
  sub,
  mul,
  scale,
  matmul,
  sum,
  mean,
  tanh,
  softplus,
  square,
  exp,
  log,
  logsumexp,
  concat,
  slice,
  max_reduce,
  clamp,
  leaf,
};

const char* op_name(OpKind kind);

struct OpAttrs {
  double a = 0.0;       // scale factor / clamp lower bound
  double b = 0.0;       // clamp upper bound
  int axis = 0;         // concat / max_reduce axis
  std::size_t i0 = 0;   // slice begin (flat index)
  std::size_t i1 = 0;   // slice end (flat index)
};

/// Reverse-mode tape. Recording is append-only and topologically ordered:
/// a node's inputs always precede it. Recording is single-threaded; finished
/// tensors are immutable values and safe to hand to other threads.
///
/// Ops record onto the graph activated on the current thread (see Scope)
/// whenever at least one input is attached to it; inputs attached to other
/// graphs or to nothing are treated as constants.
class Graph {
 public:
  Graph();
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  /// Attach a value as a differentiable leaf of this graph.
  Tensor leaf(const Tensor& value);

  std::size_t node_count() const { return nodes_.size(); }
  std::uint64_t id() const { return id_; }

  /// Drop all nodes, keeping allocated buffer capacity for reuse. Tensors
  /// recorded before the reset become plain constants (their handles go
  /// stale and are ignored from then on).
  void reset();

  /// Reverse sweep from a scalar root recorded on this graph. Returns the
  /// gradient of the root for every leaf; leaves the root cannot reach get
  /// zeros. The root's own gradient is seeded with 1.
  std::unordered_map<int, Tensor> run_backward(const Tensor& root);

  /// Gradient of the last run_backward root w.r.t. `t` (zeros if unreached).
  Tensor gradient(const Tensor& t) const;

  /// Activates a graph for recording on this thread for the scope lifetime.
  class Scope {
   public:
    explicit Scope(Graph& g);
    ~Scope();
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    Graph* prev_;
  };

  static Graph* active();

 private:
  friend Tensor apply(OpKind, std::span<const Tensor>, const OpAttrs&);

  struct Node {
    OpKind kind;
    OpAttrs attrs;
    std::vector<Tensor> inputs;       // values saved for the reverse sweep
    Tensor out;
    std::vector<std::uint32_t> arg;   // max_reduce argmax positions
  };

  int record(Node node);
  std::vector<double>* grad_slot(int id, std::size_t size);
  const std::vector<double>* grad_of(int id) const;

  std::uint64_t id_;
  std::vector<Node> nodes_;
  // gradient buffers persist across backward calls and graph resets; a
  // per-node epoch stamp marks which buffers belong to the current sweep
  std::vector<std::vector<double>> grads_;
  std::vector<std::uint32_t> grad_epoch_;
  std::uint32_t sweep_ = 0;
};

/// Evaluate one primitive operation, recording it on the active graph when
/// any input is attached to that graph. Throws ShapeError naming the kind
/// and offending shapes on mismatch. (Declared above; documented here.)
inline Tensor apply(OpKind kind, std::span<const Tensor> inputs) {
  return apply(kind, inputs, OpAttrs{});
}

// Elementwise binaries accept equal shapes or a single-element tensor on
// either side (the only broadcast supported).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor softplus(const Tensor& a);
Tensor square(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor logsumexp(const Tensor& a);
Tensor concat(std::span<const Tensor> parts, int axis = 0);
Tensor concat(std::initializer_list<Tensor> parts, int axis = 0);
/// Contiguous flat range [begin, end); result is 1-d.
Tensor slice(const Tensor& a, std::size_t begin, std::size_t end);
/// 2-d max reduction. axis 0: column maxima, shape {1, cols};
/// axis 1: row maxima, shape {rows, 1}. Ties resolve to the first index.
Tensor max_reduce(const Tensor& a, int axis);
/// Clamped values; the subgradient is zero outside [lo, hi].
Tensor clamp(const Tensor& a, double lo, double hi);

/// backward through the thread's active graph; the root must be a scalar
/// recorded on it.
std::unordered_map<int, Tensor> backward(const Tensor& root);

}  // namespace ibc::ad
