#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "ctxparse/errors.hpp"

namespace ctxparse {

/// Dense row-major tensor of 64-bit floats with an optional gradient buffer.
/// Tensor is a cheap shared handle: copies alias the same storage, which is
/// what lets a Tape's backward closures accumulate into the right buffers.
class Tensor {
 public:
  Tensor() = default;

  static Tensor leaf(std::vector<int> shape, std::vector<double> values,
                     bool requires_grad);
  static Tensor zeros(std::vector<int> shape, bool requires_grad);
  /// Constant (non-differentiable) tensor.
  static Tensor constant(std::vector<int> shape, std::vector<double> values);
  static Tensor scalar(double v);

  bool defined() const { return impl_ != nullptr; }
  const std::vector<int>& shape() const { return impl_->shape; }
  /// Rows/cols of a rank-2 tensor; rank-1 is treated as a single row.
  int rows() const;
  int cols() const;
  std::size_t size() const { return impl_->values.size(); }

  /// Mutable through const handles, like the rest of the shared storage.
  std::vector<double>& values() const { return impl_->values; }
  double value_at(std::size_t i) const { return impl_->values[i]; }
  double item() const;

  bool requires_grad() const { return impl_->requires_grad; }
  std::vector<double>& grad() const;
  void zero_grad() const;

  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  struct Impl {
    std::vector<int> shape;
    mutable std::vector<double> values;
    mutable std::vector<double> grad;  // allocated iff requires_grad
    bool requires_grad = false;
  };
  std::shared_ptr<Impl> impl_;
};

/// Reverse-mode tape. Operations execute eagerly and record their backward
/// closure in forward order; backward() replays the closures once, in
/// reverse. A tape is single-threaded; distinct tapes over shared read-only
/// parameter tensors may run concurrently as long as no backward touches the
/// shared gradients at the same time.
class Tape {
 public:
  Tape() = default;

  /// When grad is disabled nothing is recorded; forward values still flow.
  void set_grad_enabled(bool enabled) { grad_enabled_ = enabled; }
  bool grad_enabled() const { return grad_enabled_; }

  std::size_t op_count() const { return ops_.size(); }

  /// Record a custom backward closure (runs during backward, in reverse
  /// recording order). No-op when grad is disabled.
  void record(std::function<void()> backward);

  /// Seed d(loss)/d(loss) = 1 and run all recorded closures in reverse.
  /// Single-use: a second backward on the same tape accumulates again.
  void backward(const Tensor& loss);

  // --- primitives ------------------------------------------------------
  Tensor add(const Tensor& a, const Tensor& b);
  /// a + s * b, elementwise.
  Tensor add_scaled(const Tensor& a, const Tensor& b, double s);
  /// matrix [n,d] plus row vector [1,d] broadcast over rows.
  Tensor add_row_broadcast(const Tensor& m, const Tensor& row);
  Tensor mul(const Tensor& a, const Tensor& b);
  Tensor scale(const Tensor& a, double s);
  Tensor matmul(const Tensor& a, const Tensor& b);
  /// a [n,k] times b^T where b is [m,k]; result [n,m].
  Tensor matmul_nt(const Tensor& a, const Tensor& b);
  /// Scale column j of m [q,k] by row vector entry v[j], v is [1,k].
  Tensor col_scale(const Tensor& m, const Tensor& v);
  /// Scale row i of m [q,k] by row vector entry v[i], v is [1,q].
  Tensor row_scale(const Tensor& m, const Tensor& v);

  Tensor concat_rows(const std::vector<Tensor>& parts);
  Tensor concat_cols(const std::vector<Tensor>& parts);
  Tensor slice_rows(const Tensor& t, int begin, int end);
  Tensor slice_cols(const Tensor& t, int begin, int end);

  Tensor sigmoid(const Tensor& t);
  Tensor tanh(const Tensor& t);
  Tensor relu(const Tensor& t);
  /// Elementwise natural log; inputs must be strictly positive.
  Tensor log(const Tensor& t);
  /// Row-wise softmax of a rank-2 tensor.
  Tensor softmax_rows(const Tensor& t);
  /// Row-wise layer normalization with learned gain/bias [1,d].
  Tensor layer_norm(const Tensor& t, const Tensor& gain, const Tensor& bias);
  /// Elementwise max over the rows of t [n,d] -> [1,d]. Ties keep the
  /// earliest row (deterministic subgradient).
  Tensor max_pool_rows(const Tensor& t);
  /// out[i][j] = src[i][index[i*out_cols + j]] for src [n, groups].
  Tensor gather_cols(const Tensor& src, const std::vector<int>& index,
                     int out_cols);
  /// out[i][g] = sum of src[i][j] over j with index[i*cols + j] == g,
  /// for src [n, cols]; result [n, groups].
  Tensor sum_cols_by_group(const Tensor& src, const std::vector<int>& index,
                           int groups);
  /// -log softmax(logits)[target] for a [1,v] logits row -> scalar [1,1].
  Tensor cross_entropy(const Tensor& logits, int target);
  /// Mean of a list of scalars -> scalar.
  Tensor mean_scalars(const std::vector<Tensor>& xs);
  Tensor sum_scalars(const std::vector<Tensor>& xs);

 private:
  Tensor make_result(std::vector<int> shape, std::vector<double> values,
                     const std::vector<const Tensor*>& inputs);

  std::vector<std::function<void()>> ops_;
  bool grad_enabled_ = true;
};

/// Max relative error between analytic gradients of f and central finite
/// differences over every coordinate of every listed parameter. The
/// relative error of a pair (a, n) is |a - n| / max(1, |a|, |n|).
double grad_check(const std::function<Tensor(Tape&)>& f,
                  const std::vector<Tensor>& params, double eps);

}  // namespace ctxparse
