#include "decra/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace decra {

namespace {

std::atomic<std::uint64_t> g_next_id{1};

thread_local bool g_grad_enabled = true;

std::size_t shape_numel(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) {
    if (d == 0) throw std::invalid_argument("tensor dimension must be positive");
    n *= d;
  }
  return n;
}

std::shared_ptr<Tensor::Node> make_node(std::vector<std::size_t> shape,
                                        std::vector<double> values,
                                        bool requires_grad) {
  auto node = std::make_shared<Tensor::Node>();
  node->shape = std::move(shape);
  node->values = std::move(values);
  node->requires_grad = requires_grad;
  node->id = g_next_id.fetch_add(1, std::memory_order_relaxed);
  return node;
}

bool connected(const Tensor& t) { return t.node()->requires_grad; }

// Creates the output node; wires parents and the backward rule only when
// recording is on and some input participates in the graph.
Tensor make_op(std::vector<std::size_t> shape, std::vector<double> values,
               std::vector<Tensor> inputs,
               std::function<void(Tensor::Node&)> backward_fn) {
  bool record = g_grad_enabled &&
                std::any_of(inputs.begin(), inputs.end(),
                            [](const Tensor& t) { return connected(t); });
  auto node = make_node(std::move(shape), std::move(values), record);
  if (record) {
    node->parents.reserve(inputs.size());
    for (const Tensor& t : inputs) node->parents.push_back(t.node());
    node->backward_fn = std::move(backward_fn);
  }
  return Tensor(node);
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw std::invalid_argument(std::string(op) + ": shape mismatch");
}

void check_2d(const Tensor& a, const char* op) {
  if (a.shape().size() != 2)
    throw std::invalid_argument(std::string(op) + ": expected a 2-d tensor");
}

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

}  // namespace

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

Tensor Tensor::zeros(std::vector<std::size_t> shape, bool requires_grad) {
  std::size_t n = shape_numel(shape);
  return Tensor(make_node(std::move(shape), std::vector<double>(n, 0.0),
                          requires_grad));
}

Tensor Tensor::full(std::vector<std::size_t> shape, double value,
                    bool requires_grad) {
  std::size_t n = shape_numel(shape);
  return Tensor(make_node(std::move(shape), std::vector<double>(n, value),
                          requires_grad));
}

Tensor Tensor::from(std::vector<std::size_t> shape, std::vector<double> values,
                    bool requires_grad) {
  if (shape_numel(shape) != values.size())
    throw std::invalid_argument("tensor: shape does not match value count");
  return Tensor(make_node(std::move(shape), std::move(values), requires_grad));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from({1}, {value}, requires_grad);
}

Tensor Tensor::trunc_normal(std::vector<std::size_t> shape, double stddev,
                            Rng& rng, bool requires_grad) {
  std::size_t n = shape_numel(shape);
  std::vector<double> v(n);
  for (double& x : v) x = rng.trunc_normal(stddev);
  return Tensor(make_node(std::move(shape), std::move(v), requires_grad));
}

double Tensor::item() const {
  if (numel() != 1) throw std::invalid_argument("item: tensor is not scalar");
  return node_->values[0];
}

Tensor Tensor::clone_detached() const {
  return Tensor(make_node(node_->shape, node_->values, node_->requires_grad));
}

Tape Tape::from(const Tensor& root) {
  Tape tape;
  std::unordered_set<Tensor::Node*> seen;
  std::vector<std::shared_ptr<Tensor::Node>> stack{root.node()};
  while (!stack.empty()) {
    auto n = stack.back();
    stack.pop_back();
    if (!seen.insert(n.get()).second) continue;
    tape.nodes.push_back(n);
    for (auto& p : n->parents) stack.push_back(p);
  }
  std::sort(tape.nodes.begin(), tape.nodes.end(),
            [](const auto& a, const auto& b) { return a->id > b->id; });
  return tape;
}

void backward(const Tensor& loss) {
  if (loss.numel() != 1)
    throw std::invalid_argument("backward: loss must be scalar");
  Tape tape = Tape::from(loss);
  loss.node()->ensure_grad();
  loss.node()->grad[0] += 1.0;
  for (auto& n : tape.nodes) {
    if (n->backward_fn) n->backward_fn(*n);
  }
}

void assert_finite(const Tensor& t, const std::string& what) {
  for (double v : t.values())
    if (!std::isfinite(v))
      throw std::runtime_error(what + ": non-finite value encountered");
}

// ---------------------------------------------------------------- arithmetic

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = a.values()[i] + b.values()[i];
  auto an = a.node(), bn = b.node();
  return make_op(a.shape(), std::move(out), {a, b}, [an, bn](Tensor::Node& o) {
    if (an->requires_grad) {
      an->ensure_grad();
      for (std::size_t i = 0; i < o.grad.size(); ++i) an->grad[i] += o.grad[i];
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (std::size_t i = 0; i < o.grad.size(); ++i) bn->grad[i] += o.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = a.values()[i] - b.values()[i];
  auto an = a.node(), bn = b.node();
  return make_op(a.shape(), std::move(out), {a, b}, [an, bn](Tensor::Node& o) {
    if (an->requires_grad) {
      an->ensure_grad();
      for (std::size_t i = 0; i < o.grad.size(); ++i) an->grad[i] += o.grad[i];
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (std::size_t i = 0; i < o.grad.size(); ++i) bn->grad[i] -= o.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = a.values()[i] * b.values()[i];
  auto an = a.node(), bn = b.node();
  return make_op(a.shape(), std::move(out), {a, b}, [an, bn](Tensor::Node& o) {
    if (an->requires_grad) {
      an->ensure_grad();
      for (std::size_t i = 0; i < o.grad.size(); ++i)
        an->grad[i] += o.grad[i] * bn->values[i];
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (std::size_t i = 0; i < o.grad.size(); ++i)
        bn->grad[i] += o.grad[i] * an->values[i];
    }
  });
}

Tensor scale(const Tensor& a, double c) {
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * c;
  auto an = a.node();
  return make_op(a.shape(), std::move(out), {a}, [an, c](Tensor::Node& o) {
    an->ensure_grad();
    for (std::size_t i = 0; i < o.grad.size(); ++i)
      an->grad[i] += o.grad[i] * c;
  });
}

Tensor add_rowwise(const Tensor& a, const Tensor& v) {
  check_2d(a, "add_rowwise");
  std::size_t m = a.rows(), n = a.cols();
  if (v.numel() != n)
    throw std::invalid_argument("add_rowwise: vector length mismatch");
  std::vector<double> out(a.values());
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t c = 0; c < n; ++c) out[r * n + c] += v.values()[c];
  auto an = a.node(), vn = v.node();
  return make_op(a.shape(), std::move(out), {a, v},
                 [an, vn, m, n](Tensor::Node& o) {
                   if (an->requires_grad) {
                     an->ensure_grad();
                     for (std::size_t i = 0; i < o.grad.size(); ++i)
                       an->grad[i] += o.grad[i];
                   }
                   if (vn->requires_grad) {
                     vn->ensure_grad();
                     for (std::size_t r = 0; r < m; ++r)
                       for (std::size_t c = 0; c < n; ++c)
                         vn->grad[c] += o.grad[r * n + c];
                   }
                 });
}

Tensor transpose(const Tensor& a) {
  check_2d(a, "transpose");
  std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(m * n);
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t c = 0; c < n; ++c) out[c * m + r] = a.values()[r * n + c];
  auto an = a.node();
  return make_op({n, m}, std::move(out), {a}, [an, m, n](Tensor::Node& o) {
    an->ensure_grad();
    for (std::size_t r = 0; r < m; ++r)
      for (std::size_t c = 0; c < n; ++c)
        an->grad[r * n + c] += o.grad[c * m + r];
  });
}

namespace {

// out(m x p) += A(m x n) * B(n x p), plain ikj loops.
void gemm(const double* a, const double* b, double* out, std::size_t m,
          std::size_t n, std::size_t p) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t k = 0; k < n; ++k) {
      double aik = a[i * n + k];
      if (aik == 0.0) continue;
      const double* brow = b + k * p;
      double* orow = out + i * p;
      for (std::size_t j = 0; j < p; ++j) orow[j] += aik * brow[j];
    }
  }
}

// out(m x n) += A(m x p) * B^T (p x n stored as n x p)
void gemm_nt(const double* a, const double* b, double* out, std::size_t m,
             std::size_t p, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      const double* arow = a + i * p;
      const double* brow = b + j * p;
      for (std::size_t k = 0; k < p; ++k) acc += arow[k] * brow[k];
      out[i * n + j] += acc;
    }
}

// out(n x p) += A^T (m x n) * B (m x p)
void gemm_tn(const double* a, const double* b, double* out, std::size_t m,
             std::size_t n, std::size_t p) {
  for (std::size_t k = 0; k < m; ++k)
    for (std::size_t i = 0; i < n; ++i) {
      double aki = a[k * n + i];
      if (aki == 0.0) continue;
      const double* brow = b + k * p;
      double* orow = out + i * p;
      for (std::size_t j = 0; j < p; ++j) orow[j] += aki * brow[j];
    }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  check_2d(a, "matmul");
  check_2d(b, "matmul");
  std::size_t m = a.rows(), n = a.cols(), p = b.cols();
  if (b.rows() != n)
    throw std::invalid_argument("matmul: inner dimensions do not match");
  std::vector<double> out(m * p, 0.0);
  gemm(a.values().data(), b.values().data(), out.data(), m, n, p);
  auto an = a.node(), bn = b.node();
  return make_op({m, p}, std::move(out), {a, b},
                 [an, bn, m, n, p](Tensor::Node& o) {
                   if (an->requires_grad) {
                     an->ensure_grad();
                     gemm_nt(o.grad.data(), bn->values.data(), an->grad.data(),
                             m, p, n);
                   }
                   if (bn->requires_grad) {
                     bn->ensure_grad();
                     gemm_tn(an->values.data(), o.grad.data(), bn->grad.data(),
                             m, n, p);
                   }
                 });
}

Tensor slice_cols(const Tensor& a, std::size_t start, std::size_t len) {
  check_2d(a, "slice_cols");
  std::size_t m = a.rows(), n = a.cols();
  if (start + len > n)
    throw std::invalid_argument("slice_cols: range out of bounds");
  std::vector<double> out(m * len);
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t c = 0; c < len; ++c)
      out[r * len + c] = a.values()[r * n + start + c];
  auto an = a.node();
  return make_op({m, len}, std::move(out), {a},
                 [an, m, n, start, len](Tensor::Node& o) {
                   an->ensure_grad();
                   for (std::size_t r = 0; r < m; ++r)
                     for (std::size_t c = 0; c < len; ++c)
                       an->grad[r * n + start + c] += o.grad[r * len + c];
                 });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: empty input");
  std::size_t m = parts[0].rows(), total = 0;
  for (const Tensor& t : parts) {
    check_2d(t, "concat_cols");
    if (t.rows() != m)
      throw std::invalid_argument("concat_cols: row count mismatch");
    total += t.cols();
  }
  std::vector<double> out(m * total);
  std::size_t off = 0;
  for (const Tensor& t : parts) {
    std::size_t n = t.cols();
    for (std::size_t r = 0; r < m; ++r)
      for (std::size_t c = 0; c < n; ++c)
        out[r * total + off + c] = t.values()[r * n + c];
    off += n;
  }
  std::vector<std::size_t> widths;
  std::vector<std::shared_ptr<Tensor::Node>> nodes;
  for (const Tensor& t : parts) {
    widths.push_back(t.cols());
    nodes.push_back(t.node());
  }
  return make_op({m, total}, std::move(out), parts,
                 [nodes, widths, m, total](Tensor::Node& o) {
                   std::size_t off = 0;
                   for (std::size_t i = 0; i < nodes.size(); ++i) {
                     std::size_t n = widths[i];
                     if (nodes[i]->requires_grad) {
                       nodes[i]->ensure_grad();
                       for (std::size_t r = 0; r < m; ++r)
                         for (std::size_t c = 0; c < n; ++c)
                           nodes[i]->grad[r * n + c] +=
                               o.grad[r * total + off + c];
                     }
                     off += n;
                   }
                 });
}

Tensor stack_rows(const std::vector<Tensor>& rows) {
  if (rows.empty()) throw std::invalid_argument("stack_rows: empty input");
  std::size_t n = rows[0].numel();
  for (const Tensor& t : rows)
    if (t.numel() != n)
      throw std::invalid_argument("stack_rows: row length mismatch");
  std::size_t m = rows.size();
  std::vector<double> out(m * n);
  for (std::size_t r = 0; r < m; ++r)
    std::copy(rows[r].values().begin(), rows[r].values().end(),
              out.begin() + r * n);
  std::vector<std::shared_ptr<Tensor::Node>> nodes;
  for (const Tensor& t : rows) nodes.push_back(t.node());
  return make_op({m, n}, std::move(out), rows, [nodes, n](Tensor::Node& o) {
    for (std::size_t r = 0; r < nodes.size(); ++r) {
      if (!nodes[r]->requires_grad) continue;
      nodes[r]->ensure_grad();
      for (std::size_t c = 0; c < n; ++c)
        nodes[r]->grad[c] += o.grad[r * n + c];
    }
  });
}

Tensor select_rows(const Tensor& a, const std::vector<std::size_t>& indices) {
  check_2d(a, "select_rows");
  std::size_t n = a.cols();
  std::vector<double> out(indices.size() * n);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= a.rows())
      throw std::invalid_argument("select_rows: index out of bounds");
    std::copy(a.values().begin() + indices[i] * n,
              a.values().begin() + (indices[i] + 1) * n, out.begin() + i * n);
  }
  auto an = a.node();
  auto idx = indices;
  return make_op({indices.size(), n}, std::move(out), {a},
                 [an, idx, n](Tensor::Node& o) {
                   an->ensure_grad();
                   for (std::size_t i = 0; i < idx.size(); ++i)
                     for (std::size_t c = 0; c < n; ++c)
                       an->grad[idx[i] * n + c] += o.grad[i * n + c];
                 });
}

// ------------------------------------------------------------ nonlinearities

Tensor gelu(const Tensor& a) {
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    double x = a.values()[i];
    out[i] = 0.5 * x * (1.0 + std::erf(x * kInvSqrt2));
  }
  auto an = a.node();
  return make_op(a.shape(), std::move(out), {a}, [an](Tensor::Node& o) {
    an->ensure_grad();
    for (std::size_t i = 0; i < o.grad.size(); ++i) {
      double x = an->values[i];
      double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
      double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
      an->grad[i] += o.grad[i] * (cdf + x * pdf);
    }
  });
}

Tensor relu(const Tensor& a) {
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = a.values()[i] > 0.0 ? a.values()[i] : 0.0;
  auto an = a.node();
  return make_op(a.shape(), std::move(out), {a}, [an](Tensor::Node& o) {
    an->ensure_grad();
    for (std::size_t i = 0; i < o.grad.size(); ++i)
      if (an->values[i] > 0.0) an->grad[i] += o.grad[i];
  });
}

Tensor softmax(const Tensor& a, int axis) {
  if (a.shape().size() == 1) {
    if (axis != 0) throw std::invalid_argument("softmax: bad axis for 1-d");
  } else if (a.shape().size() == 2) {
    if (axis != 0 && axis != 1)
      throw std::invalid_argument("softmax: bad axis for 2-d");
  } else {
    throw std::invalid_argument("softmax: rank must be 1 or 2");
  }
  std::size_t m, n, rs, cs;  // slices x slice_len, strides
  if (a.shape().size() == 1 || axis == 1) {
    m = a.shape().size() == 1 ? 1 : a.rows();
    n = a.shape().size() == 1 ? a.numel() : a.cols();
    rs = n, cs = 1;
  } else {
    m = a.cols(), n = a.rows();
    rs = 1, cs = a.cols();
  }
  std::vector<double> out(a.numel());
  const auto& v = a.values();
  for (std::size_t r = 0; r < m; ++r) {
    double mx = v[r * rs];
    for (std::size_t c = 0; c < n; ++c) mx = std::max(mx, v[r * rs + c * cs]);
    double z = 0.0;
    for (std::size_t c = 0; c < n; ++c) {
      double e = std::exp(v[r * rs + c * cs] - mx);
      out[r * rs + c * cs] = e;
      z += e;
    }
    for (std::size_t c = 0; c < n; ++c) out[r * rs + c * cs] /= z;
  }
  auto an = a.node();
  return make_op(a.shape(), std::move(out), {a},
                 [an, m, n, rs, cs](Tensor::Node& o) {
                   an->ensure_grad();
                   for (std::size_t r = 0; r < m; ++r) {
                     double dot = 0.0;
                     for (std::size_t c = 0; c < n; ++c) {
                       std::size_t i = r * rs + c * cs;
                       dot += o.grad[i] * o.values[i];
                     }
                     for (std::size_t c = 0; c < n; ++c) {
                       std::size_t i = r * rs + c * cs;
                       an->grad[i] += o.values[i] * (o.grad[i] - dot);
                     }
                   }
                 });
}

Tensor layer_norm(const Tensor& a, const Tensor& gain, const Tensor& bias,
                  double eps) {
  check_2d(a, "layer_norm");
  std::size_t m = a.rows(), n = a.cols();
  if (n == 0) throw std::invalid_argument("layer_norm: zero-length row");
  if (gain.numel() != n || bias.numel() != n)
    throw std::invalid_argument("layer_norm: gain/bias length mismatch");
  std::vector<double> out(m * n), norm(m * n), inv_std(m);
  for (std::size_t r = 0; r < m; ++r) {
    const double* row = a.values().data() + r * n;
    double mean = 0.0;
    for (std::size_t c = 0; c < n; ++c) mean += row[c];
    mean /= n;
    double var = 0.0;
    for (std::size_t c = 0; c < n; ++c) var += (row[c] - mean) * (row[c] - mean);
    var /= n;
    double is = 1.0 / std::sqrt(var + eps);
    inv_std[r] = is;
    for (std::size_t c = 0; c < n; ++c) {
      double y = (row[c] - mean) * is;
      norm[r * n + c] = y;
      out[r * n + c] = y * gain.values()[c] + bias.values()[c];
    }
  }
  auto an = a.node(), gn = gain.node(), bn = bias.node();
  auto norm_s = std::make_shared<std::vector<double>>(std::move(norm));
  auto is_s = std::make_shared<std::vector<double>>(std::move(inv_std));
  return make_op({m, n}, std::move(out), {a, gain, bias},
                 [an, gn, bn, norm_s, is_s, m, n](Tensor::Node& o) {
                   const auto& y = *norm_s;
                   if (gn->requires_grad) {
                     gn->ensure_grad();
                     for (std::size_t r = 0; r < m; ++r)
                       for (std::size_t c = 0; c < n; ++c)
                         gn->grad[c] += o.grad[r * n + c] * y[r * n + c];
                   }
                   if (bn->requires_grad) {
                     bn->ensure_grad();
                     for (std::size_t r = 0; r < m; ++r)
                       for (std::size_t c = 0; c < n; ++c)
                         bn->grad[c] += o.grad[r * n + c];
                   }
                   if (an->requires_grad) {
                     an->ensure_grad();
                     for (std::size_t r = 0; r < m; ++r) {
                       double mean_d = 0.0, mean_dy = 0.0;
                       for (std::size_t c = 0; c < n; ++c) {
                         double d = o.grad[r * n + c] * gn->values[c];
                         mean_d += d;
                         mean_dy += d * y[r * n + c];
                       }
                       mean_d /= n;
                       mean_dy /= n;
                       for (std::size_t c = 0; c < n; ++c) {
                         double d = o.grad[r * n + c] * gn->values[c];
                         an->grad[r * n + c] +=
                             (d - mean_d - y[r * n + c] * mean_dy) * (*is_s)[r];
                       }
                     }
                   }
                 });
}

Tensor dropout(const Tensor& a, double rate, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0)
    throw std::invalid_argument("dropout: rate must be in [0,1)");
  if (rate == 0.0) return a;
  double keep = 1.0 - rate;
  auto mask = std::make_shared<std::vector<double>>(a.numel());
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    (*mask)[i] = rng.bernoulli(keep) ? 1.0 / keep : 0.0;
    out[i] = a.values()[i] * (*mask)[i];
  }
  auto an = a.node();
  return make_op(a.shape(), std::move(out), {a}, [an, mask](Tensor::Node& o) {
    an->ensure_grad();
    for (std::size_t i = 0; i < o.grad.size(); ++i)
      an->grad[i] += o.grad[i] * (*mask)[i];
  });
}

// ------------------------------------------------------------------ reduces

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.values()) s += v;
  auto an = a.node();
  return make_op({1}, {s}, {a}, [an](Tensor::Node& o) {
    an->ensure_grad();
    for (double& g : an->grad) g += o.grad[0];
  });
}

Tensor mean_all(const Tensor& a) {
  double s = 0.0;
  for (double v : a.values()) s += v;
  double inv = 1.0 / static_cast<double>(a.numel());
  auto an = a.node();
  return make_op({1}, {s * inv}, {a}, [an, inv](Tensor::Node& o) {
    an->ensure_grad();
    for (double& g : an->grad) g += o.grad[0] * inv;
  });
}

Tensor cross_entropy(const Tensor& logits, const Tensor& target) {
  check_2d(logits, "cross_entropy");
  check_same_shape(logits, target, "cross_entropy");
  std::size_t m = logits.rows(), n = logits.cols();
  auto probs = std::make_shared<std::vector<double>>(m * n);
  double total = 0.0;
  for (std::size_t r = 0; r < m; ++r) {
    const double* row = logits.values().data() + r * n;
    const double* t = target.values().data() + r * n;
    double tsum = 0.0;
    for (std::size_t c = 0; c < n; ++c) tsum += t[c];
    if (std::abs(tsum - 1.0) > 1e-4)
      throw std::invalid_argument(
          "cross_entropy: target row is not a probability distribution");
    double mx = row[0];
    for (std::size_t c = 0; c < n; ++c) mx = std::max(mx, row[c]);
    double z = 0.0;
    for (std::size_t c = 0; c < n; ++c) z += std::exp(row[c] - mx);
    double logz = std::log(z) + mx;
    for (std::size_t c = 0; c < n; ++c) {
      (*probs)[r * n + c] = std::exp(row[c] - logz);
      total -= t[c] * (row[c] - logz);
    }
  }
  total /= static_cast<double>(m);
  auto ln = logits.node(), tn = target.node();
  return make_op({1}, {total}, {logits, target},
                 [ln, tn, probs, m, n](Tensor::Node& o) {
                   if (!ln->requires_grad) return;
                   ln->ensure_grad();
                   double g = o.grad[0] / static_cast<double>(m);
                   for (std::size_t i = 0; i < m * n; ++i)
                     ln->grad[i] += g * ((*probs)[i] - tn->values[i]);
                 });
}

// --------------------------------------------------------------- embeddings

Tensor embed_rows(const Tensor& table, const std::vector<int>& ids) {
  check_2d(table, "embed_rows");
  std::size_t v = table.rows(), h = table.cols();
  std::vector<double> out(ids.size() * h);
  for (std::size_t t = 0; t < ids.size(); ++t) {
    if (ids[t] < 0 || static_cast<std::size_t>(ids[t]) >= v)
      throw std::invalid_argument("embed_rows: token id out of range");
    std::copy(table.values().begin() + ids[t] * h,
              table.values().begin() + (ids[t] + 1) * h, out.begin() + t * h);
  }
  auto tn = table.node();
  auto ids_copy = ids;
  return make_op({ids.size(), h}, std::move(out), {table},
                 [tn, ids_copy, h](Tensor::Node& o) {
                   tn->ensure_grad();
                   for (std::size_t t = 0; t < ids_copy.size(); ++t)
                     for (std::size_t c = 0; c < h; ++c)
                       tn->grad[ids_copy[t] * h + c] += o.grad[t * h + c];
                 });
}

Tensor embed_soft(const Tensor& table,
                  const std::vector<std::vector<std::pair<int, double>>>& rows) {
  check_2d(table, "embed_soft");
  std::size_t v = table.rows(), h = table.cols();
  std::vector<double> out(rows.size() * h, 0.0);
  for (std::size_t t = 0; t < rows.size(); ++t) {
    double sum = 0.0;
    for (const auto& [id, p] : rows[t]) {
      if (id < 0 || static_cast<std::size_t>(id) >= v)
        throw std::invalid_argument("embed_soft: token id out of range");
      sum += p;
      const double* src = table.values().data() + id * h;
      for (std::size_t c = 0; c < h; ++c) out[t * h + c] += p * src[c];
    }
    if (std::abs(sum - 1.0) > 1e-4)
      throw std::invalid_argument(
          "embed_soft: row distribution does not sum to 1");
  }
  auto tn = table.node();
  auto rows_copy = std::make_shared<
      std::vector<std::vector<std::pair<int, double>>>>(rows);
  return make_op({rows.size(), h}, std::move(out), {table},
                 [tn, rows_copy, h](Tensor::Node& o) {
                   tn->ensure_grad();
                   for (std::size_t t = 0; t < rows_copy->size(); ++t)
                     for (const auto& [id, p] : (*rows_copy)[t])
                       for (std::size_t c = 0; c < h; ++c)
                         tn->grad[id * h + c] += p * o.grad[t * h + c];
                 });
}

}  // namespace decra
