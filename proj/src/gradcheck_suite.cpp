#include "graphnas/gradcheck_suite.hpp"

#include <algorithm>
#include <functional>
#include <memory>

#include "graphnas/grad_check.hpp"
#include "graphnas/metrics.hpp"
#include "graphnas/ops.hpp"
#include "graphnas/rng.hpp"
#include "graphnas/supernet.hpp"

namespace graphnas {

bool GradCheckReport::passed() const {
  return std::all_of(entries.begin(), entries.end(), [](const GradCheckEntry& e) { return e.passed; });
}

namespace {

Tensor random_leaf(std::size_t rows, std::size_t cols, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(rows * cols);
  for (double& x : v) x = lo + (hi - lo) * uniform01(rng);
  return Tensor::from(rows, cols, std::move(v), true);
}

Tensor random_const(std::size_t rows, std::size_t cols, Rng& rng) {
  std::vector<double> v(rows * cols);
  for (double& x : v) x = 2.0 * uniform01(rng) - 1.0;
  return Tensor::from(rows, cols, std::move(v));
}

// Two graphs (4 + 2 nodes) with 2-wide edge features.
GraphBatch check_batch(Rng& rng, std::size_t feature_dim) {
  auto make = [&](std::size_t n, std::vector<std::pair<std::size_t, std::size_t>> pairs) {
    Graph g;
    g.node_features = Matrix(n, feature_dim);
    for (double& x : g.node_features.values) x = 2.0 * uniform01(rng) - 1.0;
    Matrix ef(0, 2);
    for (auto [u, v] : pairs) {
      for (Edge e : {Edge{u, v}, Edge{v, u}}) {
        g.edges.push_back(e);
        ef.values.push_back(uniform01(rng));
        ef.values.push_back(uniform01(rng));
        ++ef.rows;
      }
    }
    g.edge_features = ef;
    g.label = std::vector<BinaryTarget>{BinaryTarget::kPositive};
    return g;
  };
  const std::vector<Graph> graphs = {make(4, {{0, 1}, {1, 2}, {2, 3}, {3, 0}, {0, 2}}),
                                     make(2, {{0, 1}})};
  return batch_graphs(std::span<const Graph>(graphs));
}

class Suite {
 public:
  explicit Suite(const GradCheckOptions& options) : options_(options), rng_(sub_seed(options.seed, "gradcheck")) {}

  void check(const std::string& name, const std::string& category, std::vector<Tensor> leaves,
             const std::function<Tensor()>& loss) {
    GradCheckEntry e;
    e.name = name;
    e.category = category;
    e.max_error = grad_check(loss, leaves, options_.eps);
    e.passed = e.max_error < options_.tolerance;
    report_.entries.push_back(std::move(e));
  }

  // f maps the leaves to a tensor; the loss projects it onto fixed weights.
  void check_fn(const std::string& name, const std::string& category, std::vector<Tensor> leaves,
                const std::function<Tensor()>& f) {
    Rng proj_rng(rng_());
    const Tensor probe = f();
    const Tensor weights = random_const(probe.rows(), probe.cols(), proj_rng);
    check(name, category, std::move(leaves), [f, weights] { return sum(mul(f(), weights)); });
  }

  Rng& rng() { return rng_; }
  GradCheckReport take() {
    report_.tolerance = options_.tolerance;
    return std::move(report_);
  }

 private:
  GradCheckOptions options_;
  Rng rng_;
  GradCheckReport report_;
};

void primitives(Suite& s) {
  Rng& r = s.rng();
  const Tensor a = random_leaf(3, 4, r), b = random_leaf(3, 4, r);
  const Tensor row = random_leaf(1, 4, r), col = random_leaf(3, 1, r);
  const Tensor pos = random_leaf(3, 4, r, 0.5, 2.0);
  const Tensor m = random_leaf(4, 5, r);
  s.check_fn("add", "primitive", {a, b}, [=] { return add(a, b); });
  s.check_fn("add_broadcast", "primitive", {a, row, col}, [=] { return add(add(a, row), col); });
  s.check_fn("sub", "primitive", {a, b}, [=] { return sub(a, b); });
  s.check_fn("mul", "primitive", {a, b, row}, [=] { return mul(mul(a, b), row); });
  s.check_fn("div", "primitive", {a, pos}, [=] { return div(a, pos); });
  s.check_fn("maximum", "primitive", {a, b}, [=] { return maximum(a, b); });
  s.check_fn("matmul", "primitive", {a, m}, [=] { return matmul(a, m); });
  s.check_fn("scalar_mul", "primitive", {a}, [=] { return scalar_mul(a, -1.7); });
  s.check_fn("add_scalar", "primitive", {a}, [=] { return add_scalar(a, 0.3); });
  s.check_fn("relu", "primitive", {a}, [=] { return relu(a); });
  s.check_fn("leaky_relu", "primitive", {a}, [=] { return leaky_relu(a, 0.2); });
  s.check_fn("sigmoid", "primitive", {a}, [=] { return sigmoid(a); });
  s.check_fn("tanh", "primitive", {a}, [=] { return tanh(a); });
  s.check_fn("exp", "primitive", {a}, [=] { return exp(a); });
  s.check_fn("log", "primitive", {pos}, [=] { return log(pos); });
  s.check_fn("sqrt", "primitive", {pos}, [=] { return sqrt(pos); });
  s.check_fn("softplus", "primitive", {a}, [=] { return softplus(scalar_mul(a, 5.0)); });
  s.check_fn("softmax_rows", "primitive", {a}, [=] { return softmax_rows(a); });
  s.check_fn("log_softmax_rows", "primitive", {a}, [=] { return log_softmax_rows(a); });
  s.check_fn("concat_rows", "primitive", {a, row}, [=] { return concat({a, row}, 0); });
  s.check_fn("concat_cols", "primitive", {a, col}, [=] { return concat({a, col}, 1); });
  s.check_fn("slice", "primitive", {a}, [=] { return slice(slice(a, 1, 1, 3), 0, 1, 3); });
  s.check_fn("sum", "primitive", {a}, [=] { return scalar_mul(sum(mul(a, a)), 0.5); });
  s.check_fn("mean", "primitive", {a}, [=] { return mean(mul(a, b)); });
  s.check_fn("sum_axis0", "primitive", {a}, [=] { return sum_axis(a, 0); });
  s.check_fn("sum_axis1", "primitive", {a}, [=] { return sum_axis(a, 1); });

  const auto index = std::make_shared<const IndexVec>(IndexVec{2, 0, 0, 1, 2});
  s.check_fn("gather_rows", "primitive", {a}, [=] { return gather_rows(a, index); });
  const Tensor v = random_leaf(6, 3, r);
  const auto ids = std::make_shared<const IndexVec>(IndexVec{0, 2, 0, 2, 2, 0});
  s.check_fn("segment_sum", "primitive", {v},
             [=] { return segment_reduce(v, ids, 4, SegmentMode::kSum); });
  s.check_fn("segment_mean", "primitive", {v},
             [=] { return segment_reduce(v, ids, 4, SegmentMode::kMean); });
  s.check_fn("segment_max", "primitive", {v},
             [=] { return segment_reduce(v, ids, 4, SegmentMode::kMax); });
  s.check_fn("segment_softmax", "primitive", {v}, [=] { return segment_softmax(v, ids, 4); });
  s.check_fn("layer_norm_rows", "primitive", {a}, [=] { return layer_norm_rows(a); });

  const Tensor logits = random_leaf(4, 3, r, -2.0, 2.0);
  const std::vector<int> targets = {1, 0, -1, 1, 0, 0, 1, -1, 0, 1, 1, 0};
  s.check("bce_masked", "loss", {logits}, [=] { return bce_masked(logits, targets); });
  const std::vector<std::size_t> classes = {2, 0, 1, 2};
  s.check("cross_entropy", "loss", {logits}, [=] { return cross_entropy(logits, classes); });
}

std::vector<Tensor> with_store(std::vector<Tensor> leaves, const ParamStore& store) {
  for (const Tensor& t : store.tensors()) leaves.push_back(t);
  return leaves;
}

void operators(Suite& s) {
  Rng& r = s.rng();
  const std::size_t d = 3;
  const auto batch = std::make_shared<GraphBatch>(check_batch(r, d));
  const std::size_t n = batch->num_nodes;

  const Tensor x = random_leaf(n, d, r);
  const Tensor w = random_leaf(1, 1, r, 0.2, 0.9);
  s.check_fn("ZERO", "selection", {x}, [=] { return select(0.0, x); });
  s.check_fn("IDENTITY", "selection", {x, w}, [=] { return select(w, x); });

  std::vector<Tensor> inputs = {random_leaf(n, d, r), random_leaf(n, d, r), random_leaf(n, d, r)};
  for (OpKind op : module_ops(Module::kFusion)) {
    auto store = std::make_shared<ParamStore>();
    const FusionParams params = make_fusion(op, d, inputs.size(), *store, "f", r);
    s.check_fn(std::string(op_name(op)), "fusion", with_store(inputs, *store),
               [=] { return fuse(op, inputs, params); });
  }

  const Tensor h = random_leaf(n, d, r);
  const Tensor edge_weight = random_leaf(2, d, r);
  for (OpKind op : module_ops(Module::kAggregation)) {
    auto store = std::make_shared<ParamStore>();
    const AggregationParams params = make_aggregation(op, d, *store, "a", r, OpOptions{});
    std::vector<Tensor> leaves = with_store({h}, *store);
    if (op == OpKind::kGen) {
      leaves.push_back(edge_weight);
      s.check_fn(std::string(op_name(op)), "aggregation", leaves, [=] {
        return aggregate(op, *batch, h, params, matmul(batch->edge_features->to_tensor(), edge_weight));
      });
    } else {
      s.check_fn(std::string(op_name(op)), "aggregation", leaves,
                 [=] { return aggregate(op, *batch, h, params); });
    }
  }

  for (OpKind op : module_ops(Module::kReadout))
    s.check_fn(std::string(op_name(op)), "readout", {h}, [=] { return readout(op, h, *batch); });
}

void supernet(Suite& s) {
  Rng& r = s.rng();
  const auto batch = std::make_shared<GraphBatch>(check_batch(r, 3));
  std::vector<OpKind> fusion(module_ops(Module::kFusion).begin(), module_ops(Module::kFusion).end());
  std::vector<OpKind> agg(module_ops(Module::kAggregation).begin(),
                          module_ops(Module::kAggregation).end());
  std::vector<OpKind> ro(module_ops(Module::kReadout).begin(), module_ops(Module::kReadout).end());
  SupernetSpec spec = SupernetSpec::uniform(2, fusion, agg, ro);
  spec.hidden = 3;
  spec.input_dim = 3;
  spec.edge_dim = 2;
  spec.output_dim = 2;
  auto net = std::make_shared<Supernet>(spec, r());
  for (const Tensor& t : net->alphas().tensors()) {
    Tensor alpha = t;
    for (double& v : alpha.mutable_data()) v = 2.0 * uniform01(r) - 1.0;
  }
  std::vector<Tensor> leaves = net->weights().tensors();
  for (const Tensor& t : net->alphas().tensors()) leaves.push_back(t);
  s.check_fn("relaxed_supernet", "supernet", leaves,
             [=] { return net->forward(*batch, RelaxedMode{0.7}); });
}

// x^2 whose backward forgets the factor 2.
Tensor corrupted_square(const Tensor& x) {
  auto node = std::make_shared<detail::Node>();
  node->rows = x.rows();
  node->cols = x.cols();
  for (double v : x.data()) node->data.push_back(v * v);
  node->op = "corrupted_square";
  if (grad_enabled() && x.requires_grad()) {
    node->requires_grad = true;
    node->is_leaf = false;
    node->parents.push_back(x.node());
    node->backward = [](detail::Node& self) {
      detail::Node& p = *self.parents[0];
      auto& g = p.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * p.data[i];
    };
  }
  return Tensor(node);
}

}  // namespace

GradCheckReport run_gradcheck_suite(const GradCheckOptions& options) {
  Suite s(options);
  primitives(s);
  operators(s);
  supernet(s);
  if (options.inject_fault) {
    const Tensor x = random_leaf(2, 3, s.rng());
    s.check_fn("corrupted_square", "fault", {x}, [=] { return corrupted_square(x); });
  }
  return s.take();
}

}  // namespace graphnas
