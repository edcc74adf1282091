#pragma once

// Dense reverse-mode automatic differentiation.
//
// Every tensor is a row-major matrix (rank 2). Vectors are 1 x n and scalars
// are 1 x 1. Operations build a graph of nodes on the fly (define-by-run);
// calling backward() on a scalar walks that graph in reverse topological
// order and accumulates gradients into every leaf that requires them.

#include <array>
#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace graphnas {

using IndexVec = std::vector<std::size_t>;
using IndexPtr = std::shared_ptr<const IndexVec>;

namespace detail {

struct Node {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
  bool is_leaf = true;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into the parents.
  std::function<void(Node&)> backward;

  std::vector<double>& ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
    return grad;
  }
};

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::size_t rows, std::size_t cols, bool requires_grad = false);
  static Tensor full(std::size_t rows, std::size_t cols, double value, bool requires_grad = false);
  static Tensor from(std::size_t rows, std::size_t cols, std::vector<double> data,
                     bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor identity(std::size_t n, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  std::size_t rows() const { return node_->rows; }
  std::size_t cols() const { return node_->cols; }
  std::size_t size() const { return node_->data.size(); }
  std::array<std::size_t, 2> shape() const { return {node_->rows, node_->cols}; }
  std::string shape_str() const;

  std::span<const double> data() const { return node_->data; }
  /// Mutable view of the values. Intended for leaves (optimizer updates, tests).
  std::span<double> mutable_data() { return node_->data; }
  double item() const;
  double at(std::size_t r, std::size_t c) const { return node_->data[r * node_->cols + c]; }

  bool requires_grad() const { return node_->requires_grad; }
  /// Toggles gradient tracking on a leaf (used to freeze parameter groups).
  void set_requires_grad(bool value);
  bool is_leaf() const { return node_->is_leaf; }
  const char* op_name() const { return node_->op; }

  /// Gradient values; zeros when nothing has been accumulated yet.
  std::vector<double> grad() const;
  bool has_grad() const { return !node_->grad.empty(); }
  void zero_grad() { node_->grad.clear(); }

  /// Detached copy of the values (no graph links, no grad).
  Tensor detach() const;

  /// Backpropagates from this scalar. Leaf gradients accumulate across calls.
  void backward() const;

  const std::shared_ptr<detail::Node>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

/// Topologically ordered record of the operations reachable from a root.
class Tape {
 public:
  static Tape record(const Tensor& root);

  std::span<const std::shared_ptr<detail::Node>> nodes() const { return nodes_; }
  /// Seeds the root gradient with 1 and runs every backward rule in reverse order.
  void run_backward() const;

 private:
  std::vector<std::shared_ptr<detail::Node>> nodes_;
};

/// Disables graph recording on the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

// Elementwise binary ops. Either operand may broadcast along a dimension of
// size 1 (rows, cols, or both).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
/// Elementwise maximum; the gradient goes to `a` on ties.
Tensor maximum(const Tensor& a, const Tensor& b);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor scalar_mul(const Tensor& x, double factor);
Tensor add_scalar(const Tensor& x, double value);

Tensor relu(const Tensor& x);
Tensor leaky_relu(const Tensor& x, double slope);
Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor sqrt(const Tensor& x);
/// log(1 + exp(x)), overflow-safe.
Tensor softplus(const Tensor& x);

Tensor softmax_rows(const Tensor& x);
Tensor log_softmax_rows(const Tensor& x);

/// axis 0 stacks rows, axis 1 stacks columns.
Tensor concat(std::span<const Tensor> parts, int axis);
Tensor concat(std::initializer_list<Tensor> parts, int axis);
/// Half-open range [begin, end) along `axis`.
Tensor slice(const Tensor& x, int axis, std::size_t begin, std::size_t end);

/// Sum of all entries, 1 x 1.
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
/// Sum along one axis: axis 0 gives 1 x cols, axis 1 gives rows x 1.
Tensor sum_axis(const Tensor& x, int axis);

/// Row gather: out[i] = x[index[i]].
Tensor gather_rows(const Tensor& x, IndexPtr index);

enum class SegmentMode { kSum, kMean, kMax };

/// Reduces rows sharing a segment id. Empty segments give zero rows. For
/// kMax the gradient of each output entry flows to the first maximal row.
Tensor segment_reduce(const Tensor& values, IndexPtr ids, std::size_t num_segments,
                      SegmentMode mode);
Tensor segment_reduce(const Tensor& values, const IndexVec& ids, std::size_t num_segments,
                      SegmentMode mode);

/// Column-wise softmax over the rows of each segment.
Tensor segment_softmax(const Tensor& values, IndexPtr ids, std::size_t num_segments);

/// Per-row standardization to zero mean and unit variance.
Tensor layer_norm_rows(const Tensor& x, double epsilon = 1e-5);

}  // namespace graphnas
