#include "graphmerge/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "graphmerge/error.hpp"
#include "graphmerge/rng.hpp"

namespace graphmerge::ad {

// ---- Tensor -------------------------------------------------------------

Tensor::Tensor(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Tensor::Tensor(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols)
    throw ShapeError("tensor data length " + std::to_string(data_.size()) + " != " +
                     std::to_string(rows) + "x" + std::to_string(cols));
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw ShapeError("ragged rows");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor(r, c, std::move(data));
}

Tensor Tensor::row(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor(1, n, std::move(values));
}

Tensor Tensor::column(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor(n, 1, std::move(values));
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

void Tensor::add_(const Tensor& other) {
  if (!same_shape(other)) throw ShapeError("add_: " + shape_str(*this) + " vs " + shape_str(other));
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
}

std::string shape_str(const Tensor& t) {
  return "[" + std::to_string(t.rows()) + "x" + std::to_string(t.cols()) + "]";
}

Parameter::Parameter(std::string name_, Tensor value_)
    : name(std::move(name_)), value(std::move(value_)), grad(value.rows(), value.cols()) {}

// ---- Var / Tape ---------------------------------------------------------

const Tensor& Var::value() const { return tape_->value(id_); }

double Var::item() const {
  const Tensor& v = value();
  if (v.numel() != 1) throw ShapeError("item() on non-scalar " + shape_str(v));
  return v[0];
}

Var Tape::constant(Tensor value) {
  Node node;
  node.value = std::move(value);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::param(Parameter& p) {
  if (!p.grad.same_shape(p.value)) p.grad = Tensor(p.value.rows(), p.value.cols());
  Node node;
  node.value_ref = &p.value;
  node.param = &p;
  node.requires_grad = true;
  nodes_.push_back(std::move(node));
  if (std::find(params_.begin(), params_.end(), &p) == params_.end()) params_.push_back(&p);
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(const char* op, Tensor value, std::initializer_list<Var> inputs, BackwardFn fn) {
  return record(op, std::move(value), std::span<const Var>(inputs.begin(), inputs.size()),
                std::move(fn));
}

Var Tape::record(const char* op, Tensor value, std::span<const Var> inputs, BackwardFn fn) {
#ifndef NDEBUG
  bool inputs_finite = std::all_of(inputs.begin(), inputs.end(),
                                   [](const Var& v) { return v.value().all_finite(); });
  if (inputs_finite && !value.all_finite())
    throw Error(std::string("non-finite output from ") + op + " with finite inputs");
#else
  (void)op;
#endif
  Node node;
  node.value = std::move(value);
  for (const Var& v : inputs) {
    if (&v.tape() != this) throw Error("op mixes variables from different tapes");
    node.requires_grad = node.requires_grad || nodes_[v.id()].requires_grad;
  }
  if (node.requires_grad) node.backward = std::move(fn);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

const Tensor& Tape::value(std::size_t id) const {
  const Node& n = nodes_[id];
  return n.value_ref ? *n.value_ref : n.value;
}

Tensor& Tape::grad(std::size_t id) {
  Node& n = nodes_[id];
  if (n.param) return n.param->grad;
  if (!n.has_grad) {
    const Tensor& v = value(id);
    n.grad = Tensor(v.rows(), v.cols());
    n.has_grad = true;
  }
  return n.grad;
}

void Tape::backward(Var root) {
  if (&root.tape() != this) throw Error("backward root belongs to another tape");
  if (swept_) throw Error("backward already run on this tape");
  if (root.value().numel() != 1) throw ShapeError("backward root must be a scalar");
  swept_ = true;
  if (!nodes_[root.id()].requires_grad) return;
  grad(root.id())[0] += 1.0;
  for (std::size_t id = root.id() + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.has_grad || !n.backward) continue;
    n.backward(*this, n.grad);
  }
}

// ---- ops ----------------------------------------------------------------

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw ShapeError(msg);
}

void check_segments(std::span<const int> ids, std::size_t expected_len, std::size_t n_segments,
                    const char* op) {
  require(ids.size() == expected_len, std::string(op) + ": segment id count " +
                                          std::to_string(ids.size()) + " != " +
                                          std::to_string(expected_len));
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= n_segments)
      throw ShapeError(std::string(op) + ": segment id out of range");
    if (i > 0 && ids[i] < ids[i - 1]) throw ShapeError(std::string(op) + ": segment ids unsorted");
  }
}

bool needs(Tape& t, Var v) { return t.requires_grad(v.id()); }

}  // namespace

Var matmul(Var a, Var b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  require(A.cols() == B.rows(), "matmul: " + shape_str(A) + " . " + shape_str(B));
  const std::size_t m = A.rows(), k = A.cols(), n = B.cols();
  Tensor C(m, n);
  for (std::size_t i = 0; i < m; ++i) {
    double* c = &C(i, 0);
    for (std::size_t p = 0; p < k; ++p) {
      const double av = A(i, p);
      const double* brow = &B.data()[p * n];
      for (std::size_t j = 0; j < n; ++j) c[j] += av * brow[j];
    }
  }
  return a.tape().record("matmul", std::move(C), {a, b}, [a, b, m, k, n](Tape& t, const Tensor& dC) {
    const Tensor& A = t.value(a.id());
    const Tensor& B = t.value(b.id());
    if (needs(t, a)) {
      Tensor& dA = t.grad(a.id());
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double s = 0.0;
          for (std::size_t j = 0; j < n; ++j) s += dC(i, j) * B(p, j);
          dA(i, p) += s;
        }
    }
    if (needs(t, b)) {
      Tensor& dB = t.grad(b.id());
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double av = A(i, p);
          if (av == 0.0) continue;
          for (std::size_t j = 0; j < n; ++j) dB(p, j) += av * dC(i, j);
        }
    }
  });
}

Var matmul_t(Var a, Var b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  require(A.cols() == B.cols(), "matmul_t: " + shape_str(A) + " . " + shape_str(B) + "^T");
  const std::size_t m = A.rows(), k = A.cols(), n = B.rows();
  Tensor C(m, n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += A(i, p) * B(j, p);
      C(i, j) = s;
    }
  return a.tape().record("matmul_t", std::move(C), {a, b}, [a, b, m, k, n](Tape& t, const Tensor& dC) {
    const Tensor& A = t.value(a.id());
    const Tensor& B = t.value(b.id());
    if (needs(t, a)) {
      Tensor& dA = t.grad(a.id());
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
          const double g = dC(i, j);
          if (g == 0.0) continue;
          for (std::size_t p = 0; p < k; ++p) dA(i, p) += g * B(j, p);
        }
    }
    if (needs(t, b)) {
      Tensor& dB = t.grad(b.id());
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
          const double g = dC(i, j);
          if (g == 0.0) continue;
          for (std::size_t p = 0; p < k; ++p) dB(j, p) += g * A(i, p);
        }
    }
  });
}

Var add(Var a, Var b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  require(A.same_shape(B), "add: " + shape_str(A) + " + " + shape_str(B));
  Tensor C = A;
  C.add_(B);
  return a.tape().record("add", std::move(C), {a, b}, [a, b](Tape& t, const Tensor& dC) {
    if (needs(t, a)) t.grad(a.id()).add_(dC);
    if (needs(t, b)) t.grad(b.id()).add_(dC);
  });
}

Var scale(Var a, double c) {
  Tensor out = a.value();
  for (double& v : out.data()) v *= c;
  return a.tape().record("scale", std::move(out), {a}, [a, c](Tape& t, const Tensor& d) {
    Tensor& g = t.grad(a.id());
    for (std::size_t i = 0; i < d.numel(); ++i) g[i] += c * d[i];
  });
}

Var concat(std::span<const Var> parts, int axis) {
  require(!parts.empty(), "concat: no inputs");
  require(axis == 0 || axis == 1, "concat: axis must be 0 or 1");
  Tape& tape = parts.front().tape();
  std::vector<std::size_t> offsets;
  std::size_t rows = 0, cols = 0;
  if (axis == 0) {
    cols = parts.front().cols();
    for (const Var& p : parts) {
      require(p.cols() == cols, "concat(axis=0): column counts differ");
      offsets.push_back(rows);
      rows += p.rows();
    }
  } else {
    rows = parts.front().rows();
    for (const Var& p : parts) {
      require(p.rows() == rows, "concat(axis=1): row counts differ");
      offsets.push_back(cols);
      cols += p.cols();
    }
  }
  Tensor out(rows, cols);
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& v = parts[k].value();
    for (std::size_t r = 0; r < v.rows(); ++r)
      for (std::size_t c = 0; c < v.cols(); ++c) {
        if (axis == 0)
          out(offsets[k] + r, c) = v(r, c);
        else
          out(r, offsets[k] + c) = v(r, c);
      }
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return tape.record("concat", std::move(out), parts,
                     [inputs, offsets, axis](Tape& t, const Tensor& d) {
                       for (std::size_t k = 0; k < inputs.size(); ++k) {
                         if (!needs(t, inputs[k])) continue;
                         Tensor& g = t.grad(inputs[k].id());
                         for (std::size_t r = 0; r < g.rows(); ++r)
                           for (std::size_t c = 0; c < g.cols(); ++c)
                             g(r, c) += axis == 0 ? d(offsets[k] + r, c) : d(r, offsets[k] + c);
                       }
                     });
}

Var slice_cols(Var a, std::size_t begin, std::size_t end) {
  const Tensor& A = a.value();
  require(begin <= end && end <= A.cols(), "slice_cols: range out of bounds");
  Tensor out(A.rows(), end - begin);
  for (std::size_t r = 0; r < A.rows(); ++r)
    for (std::size_t c = begin; c < end; ++c) out(r, c - begin) = A(r, c);
  return a.tape().record("slice_cols", std::move(out), {a}, [a, begin](Tape& t, const Tensor& d) {
    Tensor& g = t.grad(a.id());
    for (std::size_t r = 0; r < d.rows(); ++r)
      for (std::size_t c = 0; c < d.cols(); ++c) g(r, begin + c) += d(r, c);
  });
}

Var leaky_relu(Var a, double slope) {
  Tensor out = a.value();
  for (double& v : out.data())
    if (v < 0.0) v *= slope;
  return a.tape().record("leaky_relu", std::move(out), {a}, [a, slope](Tape& t, const Tensor& d) {
    const Tensor& x = t.value(a.id());
    Tensor& g = t.grad(a.id());
    for (std::size_t i = 0; i < d.numel(); ++i) g[i] += x[i] > 0.0 ? d[i] : slope * d[i];
  });
}

Var relu(Var a) { return leaky_relu(a, 0.0); }

Var exp(Var a) {
  Tensor out = a.value();
  for (double& v : out.data()) v = std::exp(v);
  Tensor y = out;
  return a.tape().record("exp", std::move(out), {a}, [a, y = std::move(y)](Tape& t, const Tensor& d) {
    Tensor& g = t.grad(a.id());
    for (std::size_t i = 0; i < d.numel(); ++i) g[i] += y[i] * d[i];
  });
}

Var log(Var a) {
  Tensor out = a.value();
  for (double& v : out.data()) v = std::log(v);
  return a.tape().record("log", std::move(out), {a}, [a](Tape& t, const Tensor& d) {
    const Tensor& x = t.value(a.id());
    Tensor& g = t.grad(a.id());
    for (std::size_t i = 0; i < d.numel(); ++i) g[i] += d[i] / x[i];
  });
}

Var segment_softmax(Var values, std::span<const int> segment_ids) {
  const Tensor& x = values.value();
  const std::size_t n = x.numel();
  const std::size_t n_segments = segment_ids.empty() ? 0 : segment_ids.back() + 1;
  check_segments(segment_ids, n, n_segments, "segment_softmax");
  Tensor y(x.rows(), x.cols());
  for (std::size_t begin = 0; begin < n;) {
    std::size_t end = begin;
    while (end < n && segment_ids[end] == segment_ids[begin]) ++end;
    double mx = x[begin];
    for (std::size_t i = begin; i < end; ++i) mx = std::max(mx, x[i]);
    double total = 0.0;
    for (std::size_t i = begin; i < end; ++i) {
      y[i] = std::exp(x[i] - mx);
      total += y[i];
    }
    for (std::size_t i = begin; i < end; ++i) y[i] /= total;
    begin = end;
  }
  std::vector<int> ids(segment_ids.begin(), segment_ids.end());
  Tensor y_saved = y;
  return values.tape().record(
      "segment_softmax", std::move(y), {values},
      [values, ids = std::move(ids), y = std::move(y_saved)](Tape& t, const Tensor& d) {
        Tensor& g = t.grad(values.id());
        const std::size_t n = ids.size();
        for (std::size_t begin = 0; begin < n;) {
          std::size_t end = begin;
          while (end < n && ids[end] == ids[begin]) ++end;
          double dot = 0.0;
          for (std::size_t i = begin; i < end; ++i) dot += y[i] * d[i];
          for (std::size_t i = begin; i < end; ++i) g[i] += y[i] * (d[i] - dot);
          begin = end;
        }
      });
}

Var segment_sum(Var values, std::span<const int> segment_ids, std::size_t n_segments) {
  const Tensor& x = values.value();
  check_segments(segment_ids, x.rows(), n_segments, "segment_sum");
  const std::size_t d = x.cols();
  Tensor out(n_segments, d);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const double* src = &x.data()[r * d];
    double* dst = &out(segment_ids[r], 0);
    for (std::size_t c = 0; c < d; ++c) dst[c] += src[c];
  }
  std::vector<int> ids(segment_ids.begin(), segment_ids.end());
  return values.tape().record("segment_sum", std::move(out), {values},
                              [values, ids = std::move(ids)](Tape& t, const Tensor& dout) {
                                Tensor& g = t.grad(values.id());
                                const std::size_t d = g.cols();
                                for (std::size_t r = 0; r < ids.size(); ++r)
                                  for (std::size_t c = 0; c < d; ++c) g(r, c) += dout(ids[r], c);
                              });
}

Var segment_mean(Var values, std::span<const int> segment_ids, std::size_t n_segments) {
  const Tensor& x = values.value();
  check_segments(segment_ids, x.rows(), n_segments, "segment_mean");
  std::vector<double> counts(n_segments, 0.0);
  for (int s : segment_ids) counts[s] += 1.0;
  const std::size_t d = x.cols();
  Tensor out(n_segments, d);
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < d; ++c) out(segment_ids[r], c) += x(r, c);
  for (std::size_t s = 0; s < n_segments; ++s)
    if (counts[s] > 0)
      for (std::size_t c = 0; c < d; ++c) out(s, c) /= counts[s];
  std::vector<int> ids(segment_ids.begin(), segment_ids.end());
  return values.tape().record(
      "segment_mean", std::move(out), {values},
      [values, ids = std::move(ids), counts = std::move(counts)](Tape& t, const Tensor& dout) {
        Tensor& g = t.grad(values.id());
        const std::size_t d = g.cols();
        for (std::size_t r = 0; r < ids.size(); ++r)
          for (std::size_t c = 0; c < d; ++c) g(r, c) += dout(ids[r], c) / counts[ids[r]];
      });
}

Var dropout(Var a, double rate, Rng& rng, bool train) {
  if (rate < 0.0 || rate >= 1.0) throw ShapeError("dropout: rate must be in [0, 1)");
  if (!train || rate == 0.0) return a;
  const double keep = 1.0 - rate;
  const Tensor& x = a.value();
  Tensor mask(x.rows(), x.cols());
  Tensor out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.numel(); ++i) {
    mask[i] = rng.bernoulli(keep) ? 1.0 / keep : 0.0;
    out[i] = x[i] * mask[i];
  }
  return a.tape().record("dropout", std::move(out), {a}, [a, mask = std::move(mask)](Tape& t, const Tensor& d) {
    Tensor& g = t.grad(a.id());
    for (std::size_t i = 0; i < d.numel(); ++i) g[i] += mask[i] * d[i];
  });
}

Var gather_rows(Var a, std::span<const int> rows) {
  const Tensor& x = a.value();
  const std::size_t d = x.cols();
  Tensor out(rows.size(), d);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] < 0 || static_cast<std::size_t>(rows[r]) >= x.rows())
      throw ShapeError("gather_rows: row index " + std::to_string(rows[r]) + " out of range");
    std::copy_n(&x.data()[rows[r] * d], d, &out(r, 0));
  }
  std::vector<int> idx(rows.begin(), rows.end());
  return a.tape().record("gather_rows", std::move(out), {a},
                         [a, idx = std::move(idx)](Tape& t, const Tensor& dout) {
                           Tensor& g = t.grad(a.id());
                           const std::size_t d = g.cols();
                           for (std::size_t r = 0; r < idx.size(); ++r)
                             for (std::size_t c = 0; c < d; ++c) g(idx[r], c) += dout(r, c);
                         });
}

Var scale_rows(Var a, Var w) {
  const Tensor& x = a.value();
  const Tensor& s = w.value();
  require(s.numel() == x.rows(), "scale_rows: " + shape_str(s) + " weights for " + shape_str(x));
  Tensor out = x;
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (double& v : out.row_span(r)) v *= s[r];
  return a.tape().record("scale_rows", std::move(out), {a, w}, [a, w](Tape& t, const Tensor& d) {
    const Tensor& x = t.value(a.id());
    const Tensor& s = t.value(w.id());
    const bool need_a = needs(t, a), need_w = needs(t, w);
    for (std::size_t r = 0; r < x.rows(); ++r) {
      double acc = 0.0;
      for (std::size_t c = 0; c < x.cols(); ++c) {
        if (need_a) t.grad(a.id())(r, c) += d(r, c) * s[r];
        acc += d(r, c) * x(r, c);
      }
      if (need_w) t.grad(w.id())[r] += acc;
    }
  });
}

Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  return a.tape().record("sum", Tensor::scalar(s), {a}, [a](Tape& t, const Tensor& d) {
    for (double& g : t.grad(a.id()).data()) g += d[0];
  });
}

Var sum_squares(Var a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v * v;
  return a.tape().record("sum_squares", Tensor::scalar(s), {a}, [a](Tape& t, const Tensor& d) {
    const Tensor& x = t.value(a.id());
    Tensor& g = t.grad(a.id());
    for (std::size_t i = 0; i < x.numel(); ++i) g[i] += 2.0 * x[i] * d[0];
  });
}

Var cross_entropy(Var probs, int cls) {
  const Tensor& p = probs.value();
  require(p.rows() == 1 || p.cols() == 1, "cross_entropy: probs must be a vector");
  if (cls < 0 || static_cast<std::size_t>(cls) >= p.numel())
    throw ShapeError("cross_entropy: class " + std::to_string(cls) + " out of range");
  return probs.tape().record("cross_entropy", Tensor::scalar(-std::log(p[cls])), {probs},
                             [probs, cls](Tape& t, const Tensor& d) {
                               const Tensor& p = t.value(probs.id());
                               t.grad(probs.id())[cls] -= d[0] / p[cls];
                             });
}

// ---- gradient check -----------------------------------------------------

GradCheckResult grad_check(const LossFn& loss_fn, std::span<Parameter* const> params, double step) {
  for (Parameter* p : params) p->zero_grad();
  std::vector<Tensor> analytic;
  {
    Tape tape;
    Var loss = loss_fn(tape);
    if (!std::isfinite(loss.item())) throw TrainingError("grad_check: loss is not finite");
    tape.backward(loss);
    for (Parameter* p : params) analytic.push_back(p->grad);
  }
  auto eval = [&] {
    Tape tape;
    double v = loss_fn(tape).item();
    if (!std::isfinite(v)) throw TrainingError("grad_check: loss is not finite");
    return v;
  };
  GradCheckResult result;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter& p = *params[k];
    for (std::size_t i = 0; i < p.value.numel(); ++i) {
      const double orig = p.value[i];
      p.value[i] = orig + step;
      const double up = eval();
      p.value[i] = orig - step;
      const double down = eval();
      p.value[i] = orig;
      const double numeric = (up - down) / (2.0 * step);
      const double a = analytic[k][i];
      const double rel = std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
      ++result.coordinates;
      if (result.worst_param.empty() || rel > result.max_rel_error) {
        result.max_rel_error = rel;
        result.worst_param = p.name;
        result.worst_index = i;
      }
    }
  }
  for (Parameter* p : params) p->zero_grad();
  return result;
}

}  // namespace graphmerge::ad
