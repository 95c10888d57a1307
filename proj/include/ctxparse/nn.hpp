#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ctxparse/tensor.hpp"

namespace ctxparse {

/// Deterministic RNG used everywhere parameters or samples are drawn.
/// Doubles are built from the raw 64-bit stream so sequences are identical
/// across standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed ? seed : 0x9e3779b97f4a7c15ull) {}

  std::uint64_t next_u64();
  /// Uniform double in [0, 1).
  double next_double();
  /// Uniform double in [lo, hi).
  double uniform(double lo, double hi);
  /// Uniform integer in [0, n).
  std::uint64_t next_below(std::uint64_t n);

 private:
  std::uint64_t state_;
};

/// Named parameter tensors in creation order. Creation order is the save
/// order, the optimizer order, and the gradient-check order.
class ParamStore {
 public:
  /// Create a parameter with uniform [-bound, bound] init.
  Tensor create(const std::string& name, std::vector<int> shape, Rng& rng,
                double bound = 0.1);
  Tensor create_zeros(const std::string& name, std::vector<int> shape);

  Tensor get(const std::string& name) const;
  bool has(const std::string& name) const { return index_.count(name) > 0; }
  const std::vector<std::pair<std::string, Tensor>>& all() const {
    return params_;
  }
  std::vector<Tensor> tensors() const;
  std::size_t total_size() const;
  void zero_grad();

  /// Binary checkpoint container, magic "CTXPARSE-CKPT-1".
  void save(const std::string& path) const;
  /// Load values into existing parameters; every stored tensor must match an
  /// existing name and shape exactly.
  void load(const std::string& path);

 private:
  std::vector<std::pair<std::string, Tensor>> params_;
  std::map<std::string, std::size_t> index_;
};

/// Adam with bias correction and global-norm gradient clipping.
class Adam {
 public:
  Adam(double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999,
       double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  /// One update over the store's parameters, in store order. clip_norm <= 0
  /// disables clipping. Gradients are zeroed afterwards.
  void step(ParamStore& params, double clip_norm);

  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::int64_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

/// Parameters of one LSTM cell, gate order [input, forget, cell, output].
struct LstmParams {
  Tensor w_x;  // [input_dim, 4*hidden]
  Tensor w_h;  // [hidden, 4*hidden]
  Tensor b;    // [1, 4*hidden]
  int hidden = 0;

  static LstmParams create(ParamStore& store, const std::string& prefix,
                           int input_dim, int hidden, Rng& rng);
};

struct LstmState {
  Tensor h;  // [1, hidden]
  Tensor c;  // [1, hidden]
};

LstmState lstm_zero_state(int hidden);

/// One LSTM step: gates = x.w_x + h.w_h + b.
LstmState lstm_cell(Tape& tape, const Tensor& x, const LstmState& prev,
                    const LstmParams& p);

/// Unidirectional LSTM over a sequence of [1,d] rows; returns h per step.
std::vector<Tensor> lstm_run(Tape& tape, const std::vector<Tensor>& xs,
                             const LstmParams& p);

struct BiLstmParams {
  LstmParams fwd;
  LstmParams bwd;

  static BiLstmParams create(ParamStore& store, const std::string& prefix,
                             int input_dim, int hidden_per_dir, Rng& rng);
};

struct BiLstmOut {
  /// Per-step [1, 2*hidden] rows, forward state then backward state.
  std::vector<Tensor> steps;
  /// Concat of first and last step outputs, [1, 4*hidden].
  Tensor first_last;
  /// Concat of forward final and backward final states, [1, 2*hidden].
  Tensor final_concat;
};

BiLstmOut bilstm_run(Tape& tape, const std::vector<Tensor>& xs,
                     const BiLstmParams& p);

}  // namespace ctxparse
