#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <deque>
#include <vector>

namespace graphmerge {
class Rng;
}

// Dense row-major float64 matrices with a reverse-mode tape.
//
// Every value is a rank-2 tensor; vectors are 1 x d rows or E x 1 columns.
// Ops append a node holding the forward value plus a closure that pushes the
// upstream gradient into the node's inputs. Nodes are appended in creation
// order, which is a topological order, so backward() is a single reverse
// sweep.
namespace graphmerge::ad {

class Tensor {
 public:
  Tensor() = default;
  Tensor(std::size_t rows, std::size_t cols, double fill = 0.0);
  Tensor(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor row(std::vector<double> values);
  static Tensor column(std::vector<double> values);
  static Tensor scalar(double v) { return Tensor(1, 1, v); }

  std::vector<std::size_t> shape() const { return {rows_, cols_}; }
  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t numel() const { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::span<double> row_span(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row_span(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  bool same_shape(const Tensor& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }
  bool all_finite() const;
  void fill(double v);
  // this += other, shapes must match.
  void add_(const Tensor& other);

  bool operator==(const Tensor&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

std::string shape_str(const Tensor& t);

// Named trainable array with its gradient accumulator.
struct Parameter {
  Parameter() = default;
  Parameter(std::string name, Tensor value);

  std::string name;
  Tensor value;
  Tensor grad;

  void zero_grad() { grad.fill(0.0); }
  std::size_t size() const { return value.numel(); }
};

class Tape;

// Handle to a tape node.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  const Tensor& value() const;
  double item() const;  // value of a 1 x 1 node
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Tensor& upstream)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  // Leaf bound to a parameter: reads its value in place and accumulates
  // gradients straight into p.grad.
  Var param(Parameter& p);

  // Appends an op node. `inputs` decide whether the node needs a gradient.
  Var record(const char* op, Tensor value, std::initializer_list<Var> inputs, BackwardFn fn);
  Var record(const char* op, Tensor value, std::span<const Var> inputs, BackwardFn fn);

  // Seeds d(root)/d(root) = 1 and sweeps nodes in reverse creation order.
  void backward(Var root);

  const Tensor& value(std::size_t id) const;
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  // Gradient buffer for a node, allocated (zero) on first access.
  Tensor& grad(std::size_t id);
  std::size_t size() const { return nodes_.size(); }
  // Parameters bound to this tape, in first-use order.
  const std::vector<Parameter*>& parameters() const { return params_; }

 private:
  struct Node {
    Tensor value;
    const Tensor* value_ref = nullptr;
    Parameter* param = nullptr;
    Tensor grad;
    bool has_grad = false;
    bool requires_grad = false;
    BackwardFn backward;
  };
  std::deque<Node> nodes_;
  std::vector<Parameter*> params_;
  bool swept_ = false;
};

// ---- ops ----------------------------------------------------------------

Var matmul(Var a, Var b);    // [m x k] . [k x n]
Var matmul_t(Var a, Var b);  // [m x k] . [n x k]^T
Var add(Var a, Var b);
Var scale(Var a, double c);
Var concat(std::span<const Var> parts, int axis);
Var slice_cols(Var a, std::size_t begin, std::size_t end);
Var relu(Var a);
Var leaky_relu(Var a, double slope);
Var exp(Var a);
Var log(Var a);

// Softmax of the flattened entries of `values` within runs of equal segment
// id. Ids must be non-decreasing; output keeps the input shape.
Var segment_softmax(Var values, std::span<const int> segment_ids);
// Row reductions: out[s] = sum / mean of rows with id s; ids non-decreasing,
// in [0, n_segments). Empty segments give zero rows.
Var segment_sum(Var values, std::span<const int> segment_ids, std::size_t n_segments);
Var segment_mean(Var values, std::span<const int> segment_ids, std::size_t n_segments);

// Inverted dropout; identity when rate == 0 or !train.
Var dropout(Var a, double rate, Rng& rng, bool train);
Var gather_rows(Var a, std::span<const int> rows);
// Multiplies row r of a [E x d] by w[r] where w is E x 1.
Var scale_rows(Var a, Var w);
Var sum(Var a);
Var sum_squares(Var a);
// -log probs[cls] for a probability row or column.
Var cross_entropy(Var probs, int cls);

// ---- gradient check -----------------------------------------------------

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  std::size_t coordinates = 0;
};

using LossFn = std::function<Var(Tape&)>;

// Central finite differences against tape gradients for every coordinate of
// every listed parameter. Relative error is |a - b| / max(1, |a|, |b|).
// Throws TrainingError if the loss is not finite. Leaves parameter values
// untouched and gradients zeroed.
GradCheckResult grad_check(const LossFn& loss_fn, std::span<Parameter* const> params,
                           double step = 1e-5);

}  // namespace graphmerge::ad
