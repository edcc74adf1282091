#include "graphnas/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <unordered_set>

#include "graphnas/errors.hpp"

namespace graphnas {

namespace {

using detail::Node;
using NodePtr = std::shared_ptr<Node>;

thread_local bool g_grad_enabled = true;

std::string shape_of(const Node& n) {
  std::ostringstream os;
  os << "[" << n.rows << "x" << n.cols << "]";
  return os.str();
}

[[noreturn]] void shape_fail(const char* op, const Node& a, const Node& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_of(a) + " and " +
                   shape_of(b));
}

void require_defined(const Tensor& t, const char* op) {
  if (!t.defined()) throw ShapeError(std::string(op) + ": undefined tensor");
}

NodePtr make_node(std::size_t rows, std::size_t cols, const char* op,
                  std::initializer_list<const Tensor*> inputs) {
  auto node = std::make_shared<Node>();
  node->rows = rows;
  node->cols = cols;
  node->data.assign(rows * cols, 0.0);
  node->op = op;
  bool needs = false;
  if (g_grad_enabled) {
    for (const Tensor* t : inputs) needs = needs || t->requires_grad();
  }
  if (needs) {
    node->requires_grad = true;
    node->is_leaf = false;
    for (const Tensor* t : inputs) node->parents.push_back(t->node());
  }
  return node;
}

NodePtr make_node(std::size_t rows, std::size_t cols, const char* op,
                  std::span<const Tensor> inputs) {
  auto node = std::make_shared<Node>();
  node->rows = rows;
  node->cols = cols;
  node->data.assign(rows * cols, 0.0);
  node->op = op;
  bool needs = false;
  if (g_grad_enabled) {
    for (const Tensor& t : inputs) needs = needs || t.requires_grad();
  }
  if (needs) {
    node->requires_grad = true;
    node->is_leaf = false;
    for (const Tensor& t : inputs) node->parents.push_back(t.node());
  }
  return node;
}

// Dimension d of the output reads from index (d_in == 1 ? 0 : i).
struct Broadcast {
  std::size_t rows;
  std::size_t cols;
};

Broadcast broadcast_shape(const char* op, const Node& a, const Node& b) {
  auto dim = [&](std::size_t x, std::size_t y) {
    if (x == y) return x;
    if (x == 1) return y;
    if (y == 1) return x;
    shape_fail(op, a, b);
  };
  return {dim(a.rows, b.rows), dim(a.cols, b.cols)};
}

inline std::size_t bidx(const Node& n, std::size_t r, std::size_t c) {
  return (n.rows == 1 ? 0 : r) * n.cols + (n.cols == 1 ? 0 : c);
}

template <typename Fwd, typename GradA, typename GradB>
Tensor binary_op(const char* op, const Tensor& a, const Tensor& b, Fwd fwd, GradA ga, GradB gb) {
  require_defined(a, op);
  require_defined(b, op);
  const Node& na = *a.node();
  const Node& nb = *b.node();
  const Broadcast bc = broadcast_shape(op, na, nb);
  auto out = make_node(bc.rows, bc.cols, op, {&a, &b});
  const bool same = na.rows == nb.rows && na.cols == nb.cols;
  if (same) {
    for (std::size_t i = 0; i < out->data.size(); ++i) out->data[i] = fwd(na.data[i], nb.data[i]);
  } else {
    for (std::size_t r = 0; r < bc.rows; ++r)
      for (std::size_t c = 0; c < bc.cols; ++c)
        out->data[r * bc.cols + c] = fwd(na.data[bidx(na, r, c)], nb.data[bidx(nb, r, c)]);
  }
  if (out->requires_grad) {
    out->backward = [ga, gb](Node& self) {
      Node& pa = *self.parents[0];
      Node& pb = *self.parents[1];
      for (std::size_t r = 0; r < self.rows; ++r) {
        for (std::size_t c = 0; c < self.cols; ++c) {
          const std::size_t o = r * self.cols + c;
          const std::size_t ia = bidx(pa, r, c);
          const std::size_t ib = bidx(pb, r, c);
          const double g = self.grad[o];
          if (pa.requires_grad) pa.ensure_grad()[ia] += g * ga(pa.data[ia], pb.data[ib], self.data[o]);
          if (pb.requires_grad) pb.ensure_grad()[ib] += g * gb(pa.data[ia], pb.data[ib], self.data[o]);
        }
      }
    };
  }
  return Tensor(out);
}

// dfn(x, y) is the local derivative given input x and output y.
template <typename Fwd, typename Dfn>
Tensor unary_op(const char* op, const Tensor& x, Fwd fwd, Dfn dfn) {
  require_defined(x, op);
  const Node& nx = *x.node();
  auto out = make_node(nx.rows, nx.cols, op, {&x});
  for (std::size_t i = 0; i < nx.data.size(); ++i) out->data[i] = fwd(nx.data[i]);
  if (out->requires_grad) {
    out->backward = [dfn](Node& self) {
      Node& p = *self.parents[0];
      auto& g = p.ensure_grad();
      for (std::size_t i = 0; i < self.data.size(); ++i)
        g[i] += self.grad[i] * dfn(p.data[i], self.data[i]);
    };
  }
  return Tensor(out);
}

int check_axis(const char* op, int axis) {
  if (axis != 0 && axis != 1) throw ShapeError(std::string(op) + ": axis must be 0 or 1");
  return axis;
}

void check_ids(const char* op, const IndexVec& ids, std::size_t rows, std::size_t num_segments) {
  if (ids.size() != rows) {
    throw ShapeError(std::string(op) + ": " + std::to_string(ids.size()) +
                     " segment ids for " + std::to_string(rows) + " rows");
  }
  for (std::size_t id : ids) {
    if (id >= num_segments) {
      throw ShapeError(std::string(op) + ": segment id " + std::to_string(id) +
                       " out of range for " + std::to_string(num_segments) + " segments");
    }
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Tensor

Tensor Tensor::zeros(std::size_t rows, std::size_t cols, bool requires_grad) {
  return full(rows, cols, 0.0, requires_grad);
}

Tensor Tensor::full(std::size_t rows, std::size_t cols, double value, bool requires_grad) {
  auto node = std::make_shared<Node>();
  node->rows = rows;
  node->cols = cols;
  node->data.assign(rows * cols, value);
  node->requires_grad = requires_grad;
  return Tensor(node);
}

Tensor Tensor::from(std::size_t rows, std::size_t cols, std::vector<double> data,
                    bool requires_grad) {
  if (data.size() != rows * cols) {
    throw ShapeError("Tensor::from: " + std::to_string(data.size()) + " values for shape [" +
                     std::to_string(rows) + "x" + std::to_string(cols) + "]");
  }
  auto node = std::make_shared<Node>();
  node->rows = rows;
  node->cols = cols;
  node->data = std::move(data);
  node->requires_grad = requires_grad;
  return Tensor(node);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return full(1, 1, value, requires_grad);
}

Tensor Tensor::identity(std::size_t n, bool requires_grad) {
  Tensor t = zeros(n, n, requires_grad);
  for (std::size_t i = 0; i < n; ++i) t.node_->data[i * n + i] = 1.0;
  return t;
}

void Tensor::set_requires_grad(bool value) {
  if (!node_->is_leaf) throw ShapeError("set_requires_grad: only leaves can be frozen");
  node_->requires_grad = value;
}

std::string Tensor::shape_str() const { return shape_of(*node_); }

double Tensor::item() const {
  if (size() != 1) throw ShapeError("item: tensor " + shape_str() + " is not a scalar");
  return node_->data[0];
}

std::vector<double> Tensor::grad() const {
  if (node_->grad.empty()) return std::vector<double>(node_->data.size(), 0.0);
  return node_->grad;
}

Tensor Tensor::detach() const { return from(rows(), cols(), node_->data, false); }

void Tensor::backward() const {
  if (!defined() || size() != 1) {
    throw ShapeError("backward: loss must be a scalar, got " +
                     (defined() ? shape_str() : std::string("undefined")));
  }
  Tape::record(*this).run_backward();
}

// ---------------------------------------------------------------------------
// Tape

Tape Tape::record(const Tensor& root) {
  Tape tape;
  if (!root.defined() || !root.requires_grad()) return tape;
  std::unordered_set<const Node*> visited;
  // Iterative post-order DFS keeps deep block stacks off the call stack.
  std::vector<std::pair<NodePtr, std::size_t>> stack;
  stack.emplace_back(root.node(), 0);
  visited.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      const NodePtr& parent = node->parents[next++];
      if (parent->requires_grad && visited.insert(parent.get()).second) {
        stack.emplace_back(parent, 0);
      }
    } else {
      tape.nodes_.push_back(node);
      stack.pop_back();
    }
  }
  return tape;
}

void Tape::run_backward() const {
  if (nodes_.empty()) return;
  for (const auto& n : nodes_) {
    if (!n->is_leaf) n->grad.clear();
  }
  auto& root = nodes_.back();
  root->ensure_grad();
  for (double& g : root->grad) g += 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    Node& n = **it;
    if (n.is_leaf || !n.backward) continue;
    n.ensure_grad();
    n.backward(n);
  }
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

// ---------------------------------------------------------------------------
// Elementwise

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double, double, double) { return 1.0; }, [](double, double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double, double, double) { return 1.0; }, [](double, double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double, double y, double) { return y; }, [](double x, double, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary_op(
      "div", a, b, [](double x, double y) { return x / y; },
      [](double, double y, double) { return 1.0 / y; },
      [](double x, double y, double) { return -x / (y * y); });
}

Tensor maximum(const Tensor& a, const Tensor& b) {
  return binary_op(
      "maximum", a, b, [](double x, double y) { return x >= y ? x : y; },
      [](double x, double y, double) { return x >= y ? 1.0 : 0.0; },
      [](double x, double y, double) { return x >= y ? 0.0 : 1.0; });
}

Tensor scalar_mul(const Tensor& x, double factor) {
  return unary_op(
      "scalar_mul", x, [factor](double v) { return v * factor; },
      [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& x, double value) {
  return unary_op(
      "add_scalar", x, [value](double v) { return v + value; }, [](double, double) { return 1.0; });
}

Tensor relu(const Tensor& x) {
  return unary_op(
      "relu", x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor leaky_relu(const Tensor& x, double slope) {
  return unary_op(
      "leaky_relu", x, [slope](double v) { return v > 0.0 ? v : slope * v; },
      [slope](double v, double) { return v > 0.0 ? 1.0 : slope; });
}

Tensor sigmoid(const Tensor& x) {
  return unary_op(
      "sigmoid", x,
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& x) {
  return unary_op(
      "tanh", x, [](double v) { return std::tanh(v); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor exp(const Tensor& x) {
  return unary_op(
      "exp", x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
  return unary_op(
      "log", x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Tensor sqrt(const Tensor& x) {
  return unary_op(
      "sqrt", x, [](double v) { return std::sqrt(v); },
      [](double, double y) { return 0.5 / y; });
}

Tensor softplus(const Tensor& x) {
  return unary_op(
      "softplus", x,
      [](double v) { return std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v))); },
      [](double v, double) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      });
}

// ---------------------------------------------------------------------------
// Linear algebra

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_defined(a, "matmul");
  require_defined(b, "matmul");
  const Node& na = *a.node();
  const Node& nb = *b.node();
  if (na.cols != nb.rows) shape_fail("matmul", na, nb);
  const std::size_t n = na.rows, k = na.cols, m = nb.cols;
  auto out = make_node(n, m, "matmul", {&a, &b});
  {
    const double* A = na.data.data();
    const double* B = nb.data.data();
    double* C = out->data.data();
    for (std::size_t i = 0; i < n; ++i) {
      double* crow = C + i * m;
      for (std::size_t p = 0; p < k; ++p) {
        const double aip = A[i * k + p];
        if (aip == 0.0) continue;
        const double* brow = B + p * m;
        for (std::size_t j = 0; j < m; ++j) crow[j] += aip * brow[j];
      }
    }
  }
  if (out->requires_grad) {
    out->backward = [n, k, m](Node& self) {
      Node& pa = *self.parents[0];
      Node& pb = *self.parents[1];
      const double* G = self.grad.data();
      if (pa.requires_grad) {
        // dA = G * B^T
        double* dA = pa.ensure_grad().data();
        const double* B = pb.data.data();
        for (std::size_t i = 0; i < n; ++i) {
          const double* grow = G + i * m;
          for (std::size_t p = 0; p < k; ++p) {
            const double* brow = B + p * m;
            double acc = 0.0;
            for (std::size_t j = 0; j < m; ++j) acc += grow[j] * brow[j];
            dA[i * k + p] += acc;
          }
        }
      }
      if (pb.requires_grad) {
        // dB = A^T * G
        double* dB = pb.ensure_grad().data();
        const double* A = pa.data.data();
        for (std::size_t i = 0; i < n; ++i) {
          const double* grow = G + i * m;
          for (std::size_t p = 0; p < k; ++p) {
            const double aip = A[i * k + p];
            if (aip == 0.0) continue;
            double* drow = dB + p * m;
            for (std::size_t j = 0; j < m; ++j) drow[j] += aip * grow[j];
          }
        }
      }
    };
  }
  return Tensor(out);
}

// ---------------------------------------------------------------------------
// Row-wise softmax

Tensor softmax_rows(const Tensor& x) {
  require_defined(x, "softmax_rows");
  const Node& nx = *x.node();
  const std::size_t rows = nx.rows, cols = nx.cols;
  auto out = make_node(rows, cols, "softmax_rows", {&x});
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = nx.data.data() + r * cols;
    double* y = out->data.data() + r * cols;
    const double mx = *std::max_element(in, in + cols);
    double total = 0.0;
    for (std::size_t c = 0; c < cols; ++c) total += (y[c] = std::exp(in[c] - mx));
    for (std::size_t c = 0; c < cols; ++c) y[c] /= total;
  }
  if (out->requires_grad) {
    out->backward = [rows, cols](Node& self) {
      Node& p = *self.parents[0];
      auto& g = p.ensure_grad();
      for (std::size_t r = 0; r < rows; ++r) {
        const double* y = self.data.data() + r * cols;
        const double* gy = self.grad.data() + r * cols;
        double dot = 0.0;
        for (std::size_t c = 0; c < cols; ++c) dot += gy[c] * y[c];
        for (std::size_t c = 0; c < cols; ++c) g[r * cols + c] += y[c] * (gy[c] - dot);
      }
    };
  }
  return Tensor(out);
}

Tensor log_softmax_rows(const Tensor& x) {
  require_defined(x, "log_softmax_rows");
  const Node& nx = *x.node();
  const std::size_t rows = nx.rows, cols = nx.cols;
  auto out = make_node(rows, cols, "log_softmax_rows", {&x});
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = nx.data.data() + r * cols;
    double* y = out->data.data() + r * cols;
    const double mx = *std::max_element(in, in + cols);
    double total = 0.0;
    for (std::size_t c = 0; c < cols; ++c) total += std::exp(in[c] - mx);
    const double lse = mx + std::log(total);
    for (std::size_t c = 0; c < cols; ++c) y[c] = in[c] - lse;
  }
  if (out->requires_grad) {
    out->backward = [rows, cols](Node& self) {
      Node& p = *self.parents[0];
      auto& g = p.ensure_grad();
      for (std::size_t r = 0; r < rows; ++r) {
        const double* y = self.data.data() + r * cols;
        const double* gy = self.grad.data() + r * cols;
        double total = 0.0;
        for (std::size_t c = 0; c < cols; ++c) total += gy[c];
        for (std::size_t c = 0; c < cols; ++c) g[r * cols + c] += gy[c] - std::exp(y[c]) * total;
      }
    };
  }
  return Tensor(out);
}

// ---------------------------------------------------------------------------
// Shape manipulation

Tensor concat(std::span<const Tensor> parts, int axis) {
  check_axis("concat", axis);
  if (parts.empty()) throw ShapeError("concat: no inputs");
  for (const Tensor& t : parts) require_defined(t, "concat");
  const Node& first = *parts.front().node();
  std::size_t rows = first.rows, cols = first.cols;
  for (std::size_t i = 1; i < parts.size(); ++i) {
    const Node& n = *parts[i].node();
    if (axis == 0) {
      if (n.cols != first.cols) shape_fail("concat", first, n);
      rows += n.rows;
    } else {
      if (n.rows != first.rows) shape_fail("concat", first, n);
      cols += n.cols;
    }
  }
  auto out = make_node(rows, cols, "concat", parts);
  // offsets[i] is the row (axis 0) or column (axis 1) where part i starts.
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (const Tensor& t : parts) {
    offsets.push_back(offset);
    const Node& n = *t.node();
    for (std::size_t r = 0; r < n.rows; ++r)
      for (std::size_t c = 0; c < n.cols; ++c) {
        const std::size_t orow = axis == 0 ? offset + r : r;
        const std::size_t ocol = axis == 0 ? c : offset + c;
        out->data[orow * cols + ocol] = n.data[r * n.cols + c];
      }
    offset += axis == 0 ? n.rows : n.cols;
  }
  if (out->requires_grad) {
    out->backward = [axis, offsets](Node& self) {
      for (std::size_t i = 0; i < self.parents.size(); ++i) {
        Node& p = *self.parents[i];
        if (!p.requires_grad) continue;
        auto& g = p.ensure_grad();
        for (std::size_t r = 0; r < p.rows; ++r)
          for (std::size_t c = 0; c < p.cols; ++c) {
            const std::size_t orow = axis == 0 ? offsets[i] + r : r;
            const std::size_t ocol = axis == 0 ? c : offsets[i] + c;
            g[r * p.cols + c] += self.grad[orow * self.cols + ocol];
          }
      }
    };
  }
  return Tensor(out);
}

Tensor concat(std::initializer_list<Tensor> parts, int axis) {
  return concat(std::span<const Tensor>(parts.begin(), parts.size()), axis);
}

Tensor slice(const Tensor& x, int axis, std::size_t begin, std::size_t end) {
  check_axis("slice", axis);
  require_defined(x, "slice");
  const Node& nx = *x.node();
  const std::size_t extent = axis == 0 ? nx.rows : nx.cols;
  if (begin > end || end > extent) {
    throw ShapeError("slice: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") out of bounds for " + shape_of(nx) + " along axis " +
                     std::to_string(axis));
  }
  const std::size_t rows = axis == 0 ? end - begin : nx.rows;
  const std::size_t cols = axis == 0 ? nx.cols : end - begin;
  auto out = make_node(rows, cols, "slice", {&x});
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) {
      const std::size_t ir = axis == 0 ? begin + r : r;
      const std::size_t ic = axis == 0 ? c : begin + c;
      out->data[r * cols + c] = nx.data[ir * nx.cols + ic];
    }
  if (out->requires_grad) {
    out->backward = [axis, begin](Node& self) {
      Node& p = *self.parents[0];
      auto& g = p.ensure_grad();
      for (std::size_t r = 0; r < self.rows; ++r)
        for (std::size_t c = 0; c < self.cols; ++c) {
          const std::size_t ir = axis == 0 ? begin + r : r;
          const std::size_t ic = axis == 0 ? c : begin + c;
          g[ir * p.cols + ic] += self.grad[r * self.cols + c];
        }
    };
  }
  return Tensor(out);
}

// ---------------------------------------------------------------------------
// Reductions

Tensor sum(const Tensor& x) {
  require_defined(x, "sum");
  const Node& nx = *x.node();
  auto out = make_node(1, 1, "sum", {&x});
  double total = 0.0;
  for (double v : nx.data) total += v;
  out->data[0] = total;
  if (out->requires_grad) {
    out->backward = [](Node& self) {
      Node& p = *self.parents[0];
      auto& g = p.ensure_grad();
      for (double& v : g) v += self.grad[0];
    };
  }
  return Tensor(out);
}

Tensor mean(const Tensor& x) {
  require_defined(x, "mean");
  if (x.size() == 0) throw ShapeError("mean: empty tensor");
  return scalar_mul(sum(x), 1.0 / static_cast<double>(x.size()));
}

Tensor sum_axis(const Tensor& x, int axis) {
  check_axis("sum_axis", axis);
  require_defined(x, "sum_axis");
  const Node& nx = *x.node();
  const std::size_t rows = axis == 0 ? 1 : nx.rows;
  const std::size_t cols = axis == 0 ? nx.cols : 1;
  auto out = make_node(rows, cols, "sum_axis", {&x});
  for (std::size_t r = 0; r < nx.rows; ++r)
    for (std::size_t c = 0; c < nx.cols; ++c)
      out->data[axis == 0 ? c : r] += nx.data[r * nx.cols + c];
  if (out->requires_grad) {
    out->backward = [axis](Node& self) {
      Node& p = *self.parents[0];
      auto& g = p.ensure_grad();
      for (std::size_t r = 0; r < p.rows; ++r)
        for (std::size_t c = 0; c < p.cols; ++c)
          g[r * p.cols + c] += self.grad[axis == 0 ? c : r];
    };
  }
  return Tensor(out);
}

// ---------------------------------------------------------------------------
// Graph-structured ops

Tensor gather_rows(const Tensor& x, IndexPtr index) {
  require_defined(x, "gather_rows");
  const Node& nx = *x.node();
  for (std::size_t i : *index) {
    if (i >= nx.rows) {
      throw ShapeError("gather_rows: index " + std::to_string(i) + " out of range for " +
                       shape_of(nx));
    }
  }
  const std::size_t cols = nx.cols;
  auto out = make_node(index->size(), cols, "gather_rows", {&x});
  for (std::size_t r = 0; r < index->size(); ++r)
    std::copy_n(nx.data.data() + (*index)[r] * cols, cols, out->data.data() + r * cols);
  if (out->requires_grad) {
    out->backward = [index, cols](Node& self) {
      Node& p = *self.parents[0];
      double* g = p.ensure_grad().data();
      for (std::size_t r = 0; r < index->size(); ++r) {
        double* dst = g + (*index)[r] * cols;
        const double* src = self.grad.data() + r * cols;
        for (std::size_t c = 0; c < cols; ++c) dst[c] += src[c];
      }
    };
  }
  return Tensor(out);
}

Tensor segment_reduce(const Tensor& values, IndexPtr ids, std::size_t num_segments,
                      SegmentMode mode) {
  require_defined(values, "segment_reduce");
  const Node& nv = *values.node();
  check_ids("segment_reduce", *ids, nv.rows, num_segments);
  const std::size_t cols = nv.cols;
  auto out = make_node(num_segments, cols, "segment_reduce", {&values});
  double* o = out->data.data();

  if (mode == SegmentMode::kMax) {
    // argmax[s * cols + c] = source row, or npos for empty segments.
    constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();
    std::vector<std::size_t> argmax(num_segments * cols, npos);
    for (std::size_t r = 0; r < nv.rows; ++r) {
      const std::size_t s = (*ids)[r];
      for (std::size_t c = 0; c < cols; ++c) {
        const double v = nv.data[r * cols + c];
        std::size_t& am = argmax[s * cols + c];
        if (am == npos || v > o[s * cols + c]) {
          am = r;
          o[s * cols + c] = v;
        }
      }
    }
    if (out->requires_grad) {
      out->backward = [argmax = std::move(argmax), cols](Node& self) {
        Node& p = *self.parents[0];
        auto& g = p.ensure_grad();
        for (std::size_t i = 0; i < argmax.size(); ++i) {
          if (argmax[i] == npos) continue;
          g[argmax[i] * cols + i % cols] += self.grad[i];
        }
      };
    }
    return Tensor(out);
  }

  for (std::size_t r = 0; r < nv.rows; ++r) {
    double* dst = o + (*ids)[r] * cols;
    const double* src = nv.data.data() + r * cols;
    for (std::size_t c = 0; c < cols; ++c) dst[c] += src[c];
  }
  std::vector<double> scale;
  if (mode == SegmentMode::kMean) {
    std::vector<std::size_t> counts(num_segments, 0);
    for (std::size_t id : *ids) ++counts[id];
    scale.resize(num_segments);
    for (std::size_t s = 0; s < num_segments; ++s) {
      scale[s] = counts[s] == 0 ? 0.0 : 1.0 / static_cast<double>(counts[s]);
      for (std::size_t c = 0; c < cols; ++c) o[s * cols + c] *= scale[s];
    }
  }
  if (out->requires_grad) {
    out->backward = [ids, cols, scale = std::move(scale)](Node& self) {
      Node& p = *self.parents[0];
      double* g = p.ensure_grad().data();
      for (std::size_t r = 0; r < ids->size(); ++r) {
        const std::size_t s = (*ids)[r];
        const double k = scale.empty() ? 1.0 : scale[s];
        const double* src = self.grad.data() + s * cols;
        double* dst = g + r * cols;
        for (std::size_t c = 0; c < cols; ++c) dst[c] += k * src[c];
      }
    };
  }
  return Tensor(out);
}

Tensor segment_reduce(const Tensor& values, const IndexVec& ids, std::size_t num_segments,
                      SegmentMode mode) {
  return segment_reduce(values, std::make_shared<const IndexVec>(ids), num_segments, mode);
}

Tensor segment_softmax(const Tensor& values, IndexPtr ids, std::size_t num_segments) {
  require_defined(values, "segment_softmax");
  const Node& nv = *values.node();
  check_ids("segment_softmax", *ids, nv.rows, num_segments);
  const std::size_t cols = nv.cols;
  auto out = make_node(nv.rows, cols, "segment_softmax", {&values});
  std::vector<double> mx(num_segments * cols, -std::numeric_limits<double>::infinity());
  for (std::size_t r = 0; r < nv.rows; ++r) {
    const std::size_t s = (*ids)[r];
    for (std::size_t c = 0; c < cols; ++c)
      mx[s * cols + c] = std::max(mx[s * cols + c], nv.data[r * cols + c]);
  }
  std::vector<double> total(num_segments * cols, 0.0);
  for (std::size_t r = 0; r < nv.rows; ++r) {
    const std::size_t s = (*ids)[r];
    for (std::size_t c = 0; c < cols; ++c) {
      const double e = std::exp(nv.data[r * cols + c] - mx[s * cols + c]);
      out->data[r * cols + c] = e;
      total[s * cols + c] += e;
    }
  }
  for (std::size_t r = 0; r < nv.rows; ++r) {
    const std::size_t s = (*ids)[r];
    for (std::size_t c = 0; c < cols; ++c) out->data[r * cols + c] /= total[s * cols + c];
  }
  if (out->requires_grad) {
    out->backward = [ids, cols, num_segments](Node& self) {
      Node& p = *self.parents[0];
      auto& g = p.ensure_grad();
      std::vector<double> dot(num_segments * cols, 0.0);
      for (std::size_t r = 0; r < ids->size(); ++r) {
        const std::size_t s = (*ids)[r];
        for (std::size_t c = 0; c < cols; ++c)
          dot[s * cols + c] += self.grad[r * cols + c] * self.data[r * cols + c];
      }
      for (std::size_t r = 0; r < ids->size(); ++r) {
        const std::size_t s = (*ids)[r];
        for (std::size_t c = 0; c < cols; ++c) {
          const std::size_t i = r * cols + c;
          g[i] += self.data[i] * (self.grad[i] - dot[s * cols + c]);
        }
      }
    };
  }
  return Tensor(out);
}

Tensor layer_norm_rows(const Tensor& x, double epsilon) {
  require_defined(x, "layer_norm_rows");
  const Node& nx = *x.node();
  const std::size_t rows = nx.rows, cols = nx.cols;
  auto out = make_node(rows, cols, "layer_norm_rows", {&x});
  std::vector<double> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = nx.data.data() + r * cols;
    double mu = 0.0;
    for (std::size_t c = 0; c < cols; ++c) mu += in[c];
    mu /= static_cast<double>(cols);
    double var = 0.0;
    for (std::size_t c = 0; c < cols; ++c) var += (in[c] - mu) * (in[c] - mu);
    var /= static_cast<double>(cols);
    inv_std[r] = 1.0 / std::sqrt(var + epsilon);
    for (std::size_t c = 0; c < cols; ++c) out->data[r * cols + c] = (in[c] - mu) * inv_std[r];
  }
  if (out->requires_grad) {
    out->backward = [rows, cols, inv_std = std::move(inv_std)](Node& self) {
      Node& p = *self.parents[0];
      auto& g = p.ensure_grad();
      const double n = static_cast<double>(cols);
      for (std::size_t r = 0; r < rows; ++r) {
        const double* y = self.data.data() + r * cols;
        const double* gy = self.grad.data() + r * cols;
        double gsum = 0.0, gy_dot = 0.0;
        for (std::size_t c = 0; c < cols; ++c) {
          gsum += gy[c];
          gy_dot += gy[c] * y[c];
        }
        for (std::size_t c = 0; c < cols; ++c)
          g[r * cols + c] += inv_std[r] * (gy[c] - gsum / n - y[c] * gy_dot / n);
      }
    };
  }
  return Tensor(out);
}

}  // namespace graphnas
