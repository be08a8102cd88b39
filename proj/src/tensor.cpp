// Copyright 2026 The m2gl Authors
// SPDX-License-Identifier: Apache-2.0

#include "m2gl/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "m2gl/errors.hpp"

namespace m2gl {

namespace {

thread_local bool g_grad_enabled = true;

using detail::Node;
using NodePtr = std::shared_ptr<Node>;

void check_finite(const Node& n, const char* op) {
  for (double v : n.data) {
    if (!std::isfinite(v)) {
      throw DomainError(std::string("non-finite value produced by ") + op);
    }
  }
}

// Builds the result node and wires it into the graph when any parent tracks.
Tensor make_result(Shape shape, std::vector<double> data,
                   std::vector<NodePtr> parents,
                   std::function<void(Node&)> backward_fn, const char* op) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  check_finite(*node, op);
  bool tracks = false;
  if (g_grad_enabled) {
    for (const auto& p : parents) tracks = tracks || p->requires_grad;
  }
  if (tracks) {
    node->requires_grad = true;
    node->is_leaf = false;
    node->parents = std::move(parents);
    node->backward_fn = std::move(backward_fn);
  }
  return Tensor(std::move(node));
}

bool is_suffix(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

template <typename Fwd, typename DA, typename DB>
Tensor broadcast_binary(const Tensor& a, const Tensor& b, const char* op,
                        Fwd fwd, DA da, DB db) {
  const bool a_big = is_suffix(b.shape(), a.shape());
  if (!a_big && !is_suffix(a.shape(), b.shape())) {
    throw ShapeError(std::string(op) + ": shapes " + shape_to_string(a.shape()) +
                     " and " + shape_to_string(b.shape()) +
                     " are not broadcast-compatible");
  }
  const Shape out_shape = a_big ? a.shape() : b.shape();
  const std::size_t n = shape_numel(out_shape);
  const std::size_t na = a.numel();
  const std::size_t nb = b.numel();
  const auto& av = a.node()->data;
  const auto& bv = b.node()->data;
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = fwd(av[i % na], bv[i % nb]);

  NodePtr pa = a.node();
  NodePtr pb = b.node();
  return make_result(
      out_shape, std::move(out), {pa, pb},
      [pa, pb, n, na, nb, da, db](Node& self) {
        if (pa->requires_grad) {
          pa->ensure_grad();
          for (std::size_t i = 0; i < n; ++i)
            pa->grad[i % na] +=
                self.grad[i] * da(pa->data[i % na], pb->data[i % nb]);
        }
        if (pb->requires_grad) {
          pb->ensure_grad();
          for (std::size_t i = 0; i < n; ++i)
            pb->grad[i % nb] +=
                self.grad[i] * db(pa->data[i % na], pb->data[i % nb]);
        }
      },
      op);
}

// Unary op whose derivative is expressed through the input x and output y.
template <typename Fwd, typename Deriv>
Tensor unary(const Tensor& a, const char* op, Fwd fwd, Deriv deriv) {
  const auto& av = a.node()->data;
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i]);
  NodePtr pa = a.node();
  return make_result(
      a.shape(), std::move(out), {pa},
      [pa, deriv](Node& self) {
        pa->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i)
          pa->grad[i] += self.grad[i] * deriv(pa->data[i], self.data[i]);
      },
      op);
}

}  // namespace

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

Tensor::Tensor() : node_(std::make_shared<Node>()) {
  node_->data.assign(1, 0.0);
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  return from(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  if (shape_numel(shape) != values.size()) {
    throw ShapeError("tensor shape " + shape_to_string(shape) + " needs " +
                     std::to_string(shape_numel(shape)) + " values, got " +
                     std::to_string(values.size()));
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(values);
  check_finite(*node, "tensor construction");
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::vector(std::vector<double> values, bool requires_grad) {
  const std::size_t n = values.size();
  return from({n}, std::move(values), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from({}, {value}, requires_grad);
}

Tensor Tensor::eye(std::size_t n) {
  std::vector<double> v(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;
  return from({n, n}, std::move(v));
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= rank()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for " +
                     shape_to_string(shape()));
  }
  return node_->shape[axis];
}

double Tensor::item() const {
  if (numel() != 1) {
    throw ShapeError("item() on tensor of shape " + shape_to_string(shape()));
  }
  return node_->data[0];
}

double Tensor::at(std::size_t row, std::size_t col) const {
  return node_->data[row * dim(1) + col];
}

void Tensor::set_requires_grad(bool flag) {
  if (!node_->is_leaf) throw ContractError("requires_grad can only be set on leaves");
  node_->requires_grad = flag;
}

std::vector<double> Tensor::grad() const {
  if (node_->grad.empty()) return std::vector<double>(numel(), 0.0);
  return node_->grad;
}

void Tensor::zero_grad() { node_->grad.clear(); }

Tensor Tensor::detach() const {
  auto node = std::make_shared<Node>();
  node->shape = node_->shape;
  node->data = node_->data;
  return Tensor(std::move(node));
}

Tensor Tensor::clone(bool requires_grad) const {
  Tensor t = detach();
  t.node_->requires_grad = requires_grad;
  return t;
}

void Tensor::backward() const {
  if (numel() != 1 || rank() > 1) {
    throw ContractError("backward() needs a scalar loss, got shape " +
                        shape_to_string(shape()));
  }
  if (!node_->requires_grad) return;

  // Iterative post-order DFS for a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node* p = n->parents[next++].get();
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  for (Node* n : order) {
    if (!n->is_leaf) n->grad.assign(n->data.size(), 0.0);
  }
  node_->ensure_grad();
  node_->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (!n->is_leaf && n->backward_fn) n->backward_fn(*n);
  }
  // Interior gradients are transient.
  for (Node* n : order) {
    if (!n->is_leaf) {
      n->grad.clear();
      n->grad.shrink_to_fit();
    }
  }
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_mode_enabled() { return g_grad_enabled; }

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || (b.rank() != 1 && b.rank() != 2) || a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: cannot multiply " + shape_to_string(a.shape()) +
                     " by " + shape_to_string(b.shape()));
  }
  const std::size_t m = a.dim(0);
  const std::size_t k = a.dim(1);
  const std::size_t n = b.rank() == 2 ? b.dim(1) : 1;
  const auto& av = a.node()->data;
  const auto& bv = b.node()->data;
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double* orow = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      const double* brow = bv.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
    }
  }
  Shape out_shape = b.rank() == 2 ? Shape{m, n} : Shape{m};
  NodePtr pa = a.node();
  NodePtr pb = b.node();
  return make_result(
      std::move(out_shape), std::move(out), {pa, pb},
      [pa, pb, m, k, n](Node& self) {
        const auto& g = self.grad;
        if (pa->requires_grad) {
          pa->ensure_grad();
          // dA = dC * B^T
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t p = 0; p < k; ++p) {
              double acc = 0.0;
              for (std::size_t j = 0; j < n; ++j)
                acc += g[i * n + j] * pb->data[p * n + j];
              pa->grad[i * k + p] += acc;
            }
        }
        if (pb->requires_grad) {
          pb->ensure_grad();
          // dB = A^T * dC
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t p = 0; p < k; ++p) {
              const double aip = pa->data[i * k + p];
              for (std::size_t j = 0; j < n; ++j)
                pb->grad[p * n + j] += aip * g[i * n + j];
            }
        }
      },
      "matmul");
}

Tensor add(const Tensor& a, const Tensor& b) {
  return broadcast_binary(
      a, b, "add", [](double x, double y) { return x + y; },
      [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return broadcast_binary(
      a, b, "sub", [](double x, double y) { return x - y; },
      [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return broadcast_binary(
      a, b, "mul", [](double x, double y) { return x * y; },
      [](double, double y) { return y; }, [](double x, double) { return x; });
}

Tensor scale(const Tensor& a, double factor) {
  return unary(
      a, "scale", [factor](double x) { return factor * x; },
      [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& a, double value) {
  return unary(
      a, "add_scalar", [value](double x) { return x + value; },
      [](double, double) { return 1.0; });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor square(const Tensor& a) {
  return unary(
      a, "square", [](double x) { return x * x; },
      [](double x, double) { return 2.0 * x; });
}

Tensor tanh(const Tensor& a) {
  return unary(
      a, "tanh", [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid(const Tensor& a) {
  return unary(
      a, "sigmoid",
      [](double x) {
        if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor exp(const Tensor& a) {
  return unary(
      a, "exp", [](double x) { return std::exp(x); },
      [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  for (double v : a.data()) {
    if (!(v > 0.0)) {
      throw DomainError("log of non-positive value " + std::to_string(v));
    }
  }
  return unary(
      a, "log", [](double x) { return std::log(x); },
      [](double x, double) { return 1.0 / x; });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
  if (lo > hi) throw ContractError("clamp: lo > hi");
  return unary(
      a, "clamp", [lo, hi](double x) { return std::clamp(x, lo, hi); },
      [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  NodePtr pa = a.node();
  return make_result(
      {}, {s}, {pa},
      [pa](Node& self) {
        pa->ensure_grad();
        for (double& g : pa->grad) g += self.grad[0];
      },
      "sum");
}

Tensor mean(const Tensor& a) {
  return scale(sum(a), 1.0 / static_cast<double>(a.numel()));
}

Tensor softmax(const Tensor& logits) {
  if (logits.rank() != 1 || logits.numel() == 0) {
    throw ShapeError("softmax needs a non-empty vector, got " +
                     shape_to_string(logits.shape()));
  }
  const auto& x = logits.node()->data;
  const double mx = *std::max_element(x.begin(), x.end());
  std::vector<double> out(x.size());
  double z = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = std::exp(x[i] - mx);
    z += out[i];
  }
  for (double& v : out) v /= z;
  NodePtr pa = logits.node();
  return make_result(
      logits.shape(), std::move(out), {pa},
      [pa](Node& self) {
        pa->ensure_grad();
        double dot = 0.0;
        for (std::size_t i = 0; i < self.data.size(); ++i)
          dot += self.grad[i] * self.data[i];
        for (std::size_t i = 0; i < self.data.size(); ++i)
          pa->grad[i] += self.data[i] * (self.grad[i] - dot);
      },
      "softmax");
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw ShapeError("reshape: cannot view " + shape_to_string(a.shape()) +
                     " as " + shape_to_string(shape));
  }
  NodePtr pa = a.node();
  return make_result(
      std::move(shape), a.node()->data, {pa},
      [pa](Node& self) {
        pa->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i];
      },
      "reshape");
}

Tensor concat(const std::vector<Tensor>& parts) {
  std::vector<double> out;
  std::vector<NodePtr> parents;
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    if (p.rank() != 1) {
      throw ShapeError("concat expects vectors, got " + shape_to_string(p.shape()));
    }
    offsets.push_back(out.size());
    out.insert(out.end(), p.data().begin(), p.data().end());
    parents.push_back(p.node());
  }
  const std::size_t n = out.size();
  auto captured = parents;
  return make_result(
      {n}, std::move(out), std::move(parents),
      [captured, offsets](Node& self) {
        for (std::size_t k = 0; k < captured.size(); ++k) {
          auto& p = captured[k];
          if (!p->requires_grad) continue;
          p->ensure_grad();
          for (std::size_t i = 0; i < p->data.size(); ++i)
            p->grad[i] += self.grad[offsets[k] + i];
        }
      },
      "concat");
}

Tensor select(const Tensor& a, std::size_t index) {
  if (index >= a.numel()) {
    throw ShapeError("select: index " + std::to_string(index) +
                     " out of range for " + shape_to_string(a.shape()));
  }
  NodePtr pa = a.node();
  return make_result(
      {}, {a[index]}, {pa},
      [pa, index](Node& self) {
        pa->ensure_grad();
        pa->grad[index] += self.grad[0];
      },
      "select");
}

}  // namespace m2gl
