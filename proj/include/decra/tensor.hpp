#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "decra/rng.hpp"

namespace decra {

// Dense row-major tensor with reverse-mode autodiff. Operations record a
// backward rule on the output node; backward(loss) replays the rules in
// reverse creation order (parents are always created before children, so
// creation order is a valid topological order).
class Tensor {
 public:
  struct Node {
    std::vector<std::size_t> shape;
    std::vector<double> values;
    std::vector<double> grad;  // sized lazily, same length as values
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;
    std::uint64_t id = 0;

    std::size_t numel() const { return values.size(); }
    void ensure_grad() {
      if (grad.size() != values.size()) grad.assign(values.size(), 0.0);
    }
  };

  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Tensor zeros(std::vector<std::size_t> shape, bool requires_grad = false);
  static Tensor full(std::vector<std::size_t> shape, double value,
                     bool requires_grad = false);
  static Tensor from(std::vector<std::size_t> shape, std::vector<double> values,
                     bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  // i.i.d. zero-mean truncated normal entries.
  static Tensor trunc_normal(std::vector<std::size_t> shape, double stddev,
                             Rng& rng, bool requires_grad = true);

  bool defined() const { return node_ != nullptr; }
  const std::vector<std::size_t>& shape() const { return node_->shape; }
  std::size_t numel() const { return node_->values.size(); }
  std::size_t rows() const { return node_->shape.at(0); }
  std::size_t cols() const { return node_->shape.at(1); }
  bool requires_grad() const { return node_->requires_grad; }

  std::vector<double>& values() { return node_->values; }
  const std::vector<double>& values() const { return node_->values; }
  std::vector<double>& grad() { return node_->ensure_grad(), node_->grad; }
  const std::vector<double>& grad_view() const { return node_->grad; }
  bool has_grad() const { return node_->grad.size() == node_->values.size(); }

  double item() const;
  double at(std::size_t r, std::size_t c) const {
    return node_->values[r * cols() + c];
  }

  void zero_grad() { node_->grad.assign(node_->values.size(), 0.0); }

  // Deep copy of values; grad/graph not copied.
  Tensor clone_detached() const;

  std::shared_ptr<Node> node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

// Thread-local recording switch. Disabled inside augmentation and
// evaluation so forward passes there build no graph.
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

// Linearized reverse-order view of the graph below a root.
struct Tape {
  std::vector<std::shared_ptr<Tensor::Node>> nodes;  // reverse topological
  static Tape from(const Tensor& root);
};

// ---- elementwise / structural ops ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
// Adds a length-N vector to every row of an M x N matrix.
Tensor add_rowwise(const Tensor& a, const Tensor& v);
Tensor transpose(const Tensor& a);
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor slice_cols(const Tensor& a, std::size_t start, std::size_t len);
Tensor concat_cols(const std::vector<Tensor>& parts);
// Stacks M row vectors (each 1 x N or length-N) into an M x N matrix.
Tensor stack_rows(const std::vector<Tensor>& rows);
Tensor select_rows(const Tensor& a, const std::vector<std::size_t>& indices);

// ---- nonlinearities / normalizations ----
Tensor gelu(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor softmax(const Tensor& a, int axis);
Tensor layer_norm(const Tensor& a, const Tensor& gain, const Tensor& bias,
                  double eps = 1e-5);
Tensor dropout(const Tensor& a, double rate, Rng& rng);

// ---- reductions / losses ----
Tensor sum(const Tensor& a);
Tensor mean_all(const Tensor& a);
// Mean over rows of -sum(target * log softmax(logits)). Target rows must be
// probability distributions (sum 1 within 1e-4); targets receive no grad.
Tensor cross_entropy(const Tensor& logits, const Tensor& target);

// ---- embedding lookups ----
// Gathers rows of table (V x H) by id; grads scatter-add back into table.
Tensor embed_rows(const Tensor& table, const std::vector<int>& ids);
// Distribution-weighted sum of table rows per position. Each row is a sparse
// {id -> prob} list; probabilities are treated as constants.
Tensor embed_soft(const Tensor& table,
                  const std::vector<std::vector<std::pair<int, double>>>& rows);

// Populates grads of every requires_grad leaf under loss. Accumulates into
// existing grads; call zero_grad on parameters to reset.
void backward(const Tensor& loss);

void assert_finite(const Tensor& t, const std::string& what);

}  // namespace decra
