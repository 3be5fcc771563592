#pragma once

// Reverse-mode automatic differentiation over dense row-major matrices.
//
// A Tape records every operation of one forward pass. Parameters enter the
// tape by reference and their gradients are accumulated into a per-tape
// buffer indexed by parameter id, so several tapes can run side by side and
// be reduced afterwards in a fixed order.

#include <cstddef>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "vlsa/matrix.hpp"

namespace vlsa {

struct Parameter {
  std::string name;
  Matrix value;
  // Whether decoupled weight decay applies to this tensor.
  bool decay = true;
};

/// Named parameter tensors with stable insertion order. Ids are indices.
class ParamStore {
 public:
  std::size_t add(std::string name, Matrix init, bool decay);

  std::size_t size() const { return params_.size(); }
  Parameter& operator[](std::size_t id) { return params_[id]; }
  const Parameter& operator[](std::size_t id) const { return params_[id]; }

  bool contains(const std::string& name) const { return index_.contains(name); }
  std::size_t id(const std::string& name) const;
  Parameter& at(const std::string& name) { return params_[id(name)]; }
  const Parameter& at(const std::string& name) const { return params_[id(name)]; }

  std::size_t element_count() const;

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

 private:
  std::vector<Parameter> params_;
  std::map<std::string, std::size_t> index_;
};

/// Per-parameter gradient buffers; an empty (0x0) entry means zero.
using Gradients = std::vector<Matrix>;

void accumulate(Gradients& into, const Gradients& from);

class Tape;

struct Var {
  Tape* tape = nullptr;
  int id = -1;

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const { return value()(0, 0); }
};

class Tape {
 public:
  // With track_gradients off, parameters are treated as constants and no
  // backward closures are kept (inference).
  explicit Tape(const ParamStore* params = nullptr, bool track_gradients = true);
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  // Leaf whose gradient is retained and readable after backward().
  Var leaf(Matrix value);
  Var param(std::size_t id);
  Var param(const std::string& name);

  const Matrix& value(int id) const;
  // Gradient of a node after backward(); zero matrix if nothing flowed in.
  Matrix grad(Var v) const;

  void backward(Var scalar_output, double seed = 1.0);
  // Runs one reverse sweep seeded at several nodes at once.
  void backward(std::span<const std::pair<Var, Matrix>> seeds);

  const Gradients& param_grads() const { return param_grads_; }
  Gradients take_param_grads() { return std::move(param_grads_); }

  const ParamStore* params() const { return params_; }
  std::size_t node_count() const { return nodes_.size(); }

  // Op plumbing.
  // Receives the node's own output value and its accumulated gradient.
  using Backward = std::function<void(Tape&, const Matrix& out, const Matrix& grad)>;
  Var record(Matrix value, std::vector<int> inputs, Backward backward);
  bool needs_grad(int id) const { return nodes_[id].needs_grad; }
  void accumulate_grad(int id, const Matrix& g);
  template <typename Expr>
  void accumulate_grad_expr(int id, const Expr& g) {
    Node& n = nodes_[id];
    if (!n.needs_grad) return;
    if (n.grad.size() == 0) {
      n.grad = g;
    } else {
      n.grad += g;
    }
  }

 private:
  struct Node {
    Matrix value;
    const Matrix* ref = nullptr;  // parameter value, not copied
    Matrix grad;
    Backward backward;
    int param_id = -1;
    bool needs_grad = false;
  };

  void sweep();

  const ParamStore* params_;
  bool track_gradients_;
  std::vector<Node> nodes_;
  Gradients param_grads_;
};

// Operations. Every Var argument must belong to the same tape.
Var matmul(Var a, Var b);
// a * b^T
Var matmul_nt(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
// Adds a 1 x n row to every row of a.
Var add_row(Var a, Var row);
Var scale(Var a, double s);
Var hadamard(Var a, Var b);
Var gelu(Var a);
Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);
// Row-wise softmax; additive_mask (same shape, 0 or -inf) is optional.
Var softmax_rows(Var x, const Matrix* additive_mask = nullptr);
Var l2_normalize_rows(Var x);

Var slice_rows(Var x, Eigen::Index start, Eigen::Index count);
Var slice_cols(Var x, Eigen::Index start, Eigen::Index count);
Var gather_rows(Var x, std::span<const int> rows);
Var concat_rows(std::span<const Var> parts);
Var concat_cols(std::span<const Var> parts);
// Row i becomes `row` (1 x n) where replace[i] is set, else x's row i.
Var replace_rows(Var x, Var row, const std::vector<bool>& replace);
Var mean_rows(Var x);
Var sum_all(Var x);

// Mean squared error over all elements; target is constant.
Var mse(Var pred, const Matrix& target);
// Mean over rows of -log softmax(logits_i)[target_i].
Var cross_entropy_rows(Var logits, std::span<const int> targets);
// Sum over rows of BCE(label_i, sigmoid(logit_i)); logits is N x 1.
Var bce_with_logits_sum(Var logits, std::span<const double> labels);

}  // namespace vlsa
