#include "ctxparse/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace ctxparse {

namespace {

std::size_t shape_size(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  return n;
}

std::string shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ",";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

[[noreturn]] void throw_shape(const char* op, const Tensor& a, const Tensor& b) {
  throw ShapeMismatch(std::string(op) + ": incompatible shapes " +
                      shape_str(a.shape()) + " and " + shape_str(b.shape()));
}

}  // namespace

Tensor Tensor::leaf(std::vector<int> shape, std::vector<double> values,
                    bool requires_grad) {
  if (values.size() != shape_size(shape))
    throw ShapeMismatch("leaf: value count does not match shape " +
                        shape_str(shape));
  Tensor t;
  t.impl_ = std::make_shared<Impl>();
  t.impl_->shape = std::move(shape);
  t.impl_->values = std::move(values);
  t.impl_->requires_grad = requires_grad;
  if (requires_grad) t.impl_->grad.assign(t.impl_->values.size(), 0.0);
  return t;
}

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
  std::vector<double> v(shape_size(shape), 0.0);
  return leaf(std::move(shape), std::move(v), requires_grad);
}

Tensor Tensor::constant(std::vector<int> shape, std::vector<double> values) {
  return leaf(std::move(shape), std::move(values), false);
}

Tensor Tensor::scalar(double v) { return constant({1, 1}, {v}); }

int Tensor::rows() const {
  return impl_->shape.size() >= 2 ? impl_->shape[0] : 1;
}

int Tensor::cols() const {
  return impl_->shape.size() >= 2 ? impl_->shape[1] : impl_->shape[0];
}

double Tensor::item() const {
  if (impl_->values.size() != 1)
    throw ShapeMismatch("item: tensor has " +
                        std::to_string(impl_->values.size()) + " elements");
  return impl_->values[0];
}

std::vector<double>& Tensor::grad() const {
  if (!impl_->requires_grad)
    throw Error("grad: tensor does not require gradients");
  return impl_->grad;
}

void Tensor::zero_grad() const {
  if (impl_->requires_grad)
    std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

void Tape::record(std::function<void()> backward) {
  if (grad_enabled_) ops_.push_back(std::move(backward));
}

void Tape::backward(const Tensor& loss) {
  if (loss.size() != 1) throw ShapeMismatch("backward: loss must be scalar");
  if (!loss.requires_grad())
    throw Error("backward: loss does not require gradients");
  loss.grad()[0] = 1.0;
  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
}

Tensor Tape::make_result(std::vector<int> shape, std::vector<double> values,
                         const std::vector<const Tensor*>& inputs) {
  bool req = false;
  if (grad_enabled_)
    for (const Tensor* in : inputs)
      if (in->requires_grad()) req = true;
  return Tensor::leaf(std::move(shape), std::move(values), req);
}

Tensor Tape::add(const Tensor& a, const Tensor& b) {
  return add_scaled(a, b, 1.0);
}

Tensor Tape::add_scaled(const Tensor& a, const Tensor& b, double s) {
  if (a.shape() != b.shape()) throw_shape("add", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = a.value_at(i) + s * b.value_at(i);
  Tensor r = make_result(a.shape(), std::move(out), {&a, &b});
  if (r.requires_grad())
    record([a, b, s, r]() mutable {
      const auto& g = r.grad();
      if (a.requires_grad()) {
        auto& ga = a.grad();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (b.requires_grad()) {
        auto& gb = b.grad();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += s * g[i];
      }
    });
  return r;
}

Tensor Tape::add_row_broadcast(const Tensor& m, const Tensor& row) {
  if (row.rows() != 1 || row.cols() != m.cols()) throw_shape("add_row", m, row);
  int n = m.rows(), d = m.cols();
  std::vector<double> out(m.size());
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j)
      out[i * d + j] = m.value_at(i * d + j) + row.value_at(j);
  Tensor r = make_result(m.shape(), std::move(out), {&m, &row});
  if (r.requires_grad())
    record([m, row, r, n, d]() mutable {
      const auto& g = r.grad();
      if (m.requires_grad()) {
        auto& gm = m.grad();
        for (std::size_t i = 0; i < g.size(); ++i) gm[i] += g[i];
      }
      if (row.requires_grad()) {
        auto& gr = row.grad();
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < d; ++j) gr[j] += g[i * d + j];
      }
    });
  return r;
}

Tensor Tape::mul(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw_shape("mul", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = a.value_at(i) * b.value_at(i);
  Tensor r = make_result(a.shape(), std::move(out), {&a, &b});
  if (r.requires_grad())
    record([a, b, r]() mutable {
      const auto& g = r.grad();
      if (a.requires_grad()) {
        auto& ga = a.grad();
        for (std::size_t i = 0; i < g.size(); ++i)
          ga[i] += g[i] * b.value_at(i);
      }
      if (b.requires_grad()) {
        auto& gb = b.grad();
        for (std::size_t i = 0; i < g.size(); ++i)
          gb[i] += g[i] * a.value_at(i);
      }
    });
  return r;
}

Tensor Tape::scale(const Tensor& a, double s) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value_at(i) * s;
  Tensor r = make_result(a.shape(), std::move(out), {&a});
  if (r.requires_grad())
    record([a, r, s]() mutable {
      const auto& g = r.grad();
      auto& ga = a.grad();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += s * g[i];
    });
  return r;
}

Tensor Tape::matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) throw_shape("matmul", a, b);
  int n = a.rows(), k = a.cols(), m = b.cols();
  std::vector<double> out(static_cast<std::size_t>(n) * m, 0.0);
  for (int i = 0; i < n; ++i)
    for (int p = 0; p < k; ++p) {
      double av = a.value_at(i * k + p);
      if (av == 0.0) continue;
      for (int j = 0; j < m; ++j) out[i * m + j] += av * b.value_at(p * m + j);
    }
  Tensor r = make_result({n, m}, std::move(out), {&a, &b});
  if (r.requires_grad())
    record([a, b, r, n, k, m]() mutable {
      const auto& g = r.grad();
      if (a.requires_grad()) {
        auto& ga = a.grad();
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < m; ++j) {
            double gv = g[i * m + j];
            if (gv == 0.0) continue;
            for (int p = 0; p < k; ++p)
              ga[i * k + p] += gv * b.value_at(p * m + j);
          }
      }
      if (b.requires_grad()) {
        auto& gb = b.grad();
        for (int i = 0; i < n; ++i)
          for (int p = 0; p < k; ++p) {
            double av = a.value_at(i * k + p);
            if (av == 0.0) continue;
            for (int j = 0; j < m; ++j)
              gb[p * m + j] += av * g[i * m + j];
          }
      }
    });
  return r;
}

Tensor Tape::matmul_nt(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.cols()) throw_shape("matmul_nt", a, b);
  int n = a.rows(), k = a.cols(), m = b.rows();
  std::vector<double> out(static_cast<std::size_t>(n) * m, 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) {
      double s = 0.0;
      for (int p = 0; p < k; ++p)
        s += a.value_at(i * k + p) * b.value_at(j * k + p);
      out[i * m + j] = s;
    }
  Tensor r = make_result({n, m}, std::move(out), {&a, &b});
  if (r.requires_grad())
    record([a, b, r, n, k, m]() mutable {
      const auto& g = r.grad();
      if (a.requires_grad()) {
        auto& ga = a.grad();
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < m; ++j) {
            double gv = g[i * m + j];
            if (gv == 0.0) continue;
            for (int p = 0; p < k; ++p)
              ga[i * k + p] += gv * b.value_at(j * k + p);
          }
      }
      if (b.requires_grad()) {
        auto& gb = b.grad();
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < m; ++j) {
            double gv = g[i * m + j];
            if (gv == 0.0) continue;
            for (int p = 0; p < k; ++p)
              gb[j * k + p] += gv * a.value_at(i * k + p);
          }
      }
    });
  return r;
}

Tensor Tape::col_scale(const Tensor& m, const Tensor& v) {
  if (v.rows() != 1 || v.cols() != m.cols()) throw_shape("col_scale", m, v);
  int n = m.rows(), d = m.cols();
  std::vector<double> out(m.size());
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j)
      out[i * d + j] = m.value_at(i * d + j) * v.value_at(j);
  Tensor r = make_result(m.shape(), std::move(out), {&m, &v});
  if (r.requires_grad())
    record([m, v, r, n, d]() mutable {
      const auto& g = r.grad();
      if (m.requires_grad()) {
        auto& gm = m.grad();
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < d; ++j)
            gm[i * d + j] += g[i * d + j] * v.value_at(j);
      }
      if (v.requires_grad()) {
        auto& gv = v.grad();
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < d; ++j)
            gv[j] += g[i * d + j] * m.value_at(i * d + j);
      }
    });
  return r;
}

Tensor Tape::row_scale(const Tensor& m, const Tensor& v) {
  if (v.rows() != 1 || v.cols() != m.rows()) throw_shape("row_scale", m, v);
  int n = m.rows(), d = m.cols();
  std::vector<double> out(m.size());
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j)
      out[i * d + j] = m.value_at(i * d + j) * v.value_at(i);
  Tensor r = make_result(m.shape(), std::move(out), {&m, &v});
  if (r.requires_grad())
    record([m, v, r, n, d]() mutable {
      const auto& g = r.grad();
      if (m.requires_grad()) {
        auto& gm = m.grad();
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < d; ++j)
            gm[i * d + j] += g[i * d + j] * v.value_at(i);
      }
      if (v.requires_grad()) {
        auto& gv = v.grad();
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < d; ++j)
            gv[i] += g[i * d + j] * m.value_at(i * d + j);
      }
    });
  return r;
}

Tensor Tape::concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw EmptyInput("concat_rows: no parts");
  int d = parts[0].cols();
  int n = 0;
  for (const Tensor& p : parts) {
    if (p.cols() != d) throw_shape("concat_rows", parts[0], p);
    n += p.rows();
  }
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(n) * d);
  std::vector<const Tensor*> ins;
  for (const Tensor& p : parts) {
    out.insert(out.end(), p.values().begin(), p.values().end());
    ins.push_back(&p);
  }
  Tensor r = make_result({n, d}, std::move(out), ins);
  if (r.requires_grad())
    record([parts, r]() mutable {
      const auto& g = r.grad();
      std::size_t off = 0;
      for (const Tensor& p : parts) {
        if (p.requires_grad()) {
          auto& gp = p.grad();
          for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += g[off + i];
        }
        off += p.size();
      }
    });
  return r;
}

Tensor Tape::concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw EmptyInput("concat_cols: no parts");
  int n = parts[0].rows();
  int d = 0;
  for (const Tensor& p : parts) {
    if (p.rows() != n) throw_shape("concat_cols", parts[0], p);
    d += p.cols();
  }
  std::vector<double> out(static_cast<std::size_t>(n) * d);
  std::vector<const Tensor*> ins;
  int off = 0;
  for (const Tensor& p : parts) {
    int pc = p.cols();
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < pc; ++j)
        out[static_cast<std::size_t>(i) * d + off + j] = p.value_at(i * pc + j);
    off += pc;
    ins.push_back(&p);
  }
  Tensor r = make_result({n, d}, std::move(out), ins);
  if (r.requires_grad())
    record([parts, r, n, d]() mutable {
      const auto& g = r.grad();
      int off = 0;
      for (const Tensor& p : parts) {
        int pc = p.cols();
        if (p.requires_grad()) {
          auto& gp = p.grad();
          for (int i = 0; i < n; ++i)
            for (int j = 0; j < pc; ++j)
              gp[i * pc + j] += g[static_cast<std::size_t>(i) * d + off + j];
        }
        off += pc;
      }
    });
  return r;
}

Tensor Tape::slice_rows(const Tensor& t, int begin, int end) {
  if (begin < 0 || end > t.rows() || begin >= end)
    throw ShapeMismatch("slice_rows: bad range [" + std::to_string(begin) +
                        "," + std::to_string(end) + ") for " +
                        std::to_string(t.rows()) + " rows");
  int d = t.cols();
  std::vector<double> out(t.values().begin() + static_cast<std::size_t>(begin) * d,
                          t.values().begin() + static_cast<std::size_t>(end) * d);
  Tensor r = make_result({end - begin, d}, std::move(out), {&t});
  if (r.requires_grad())
    record([t, r, begin, d]() mutable {
      const auto& g = r.grad();
      auto& gt = t.grad();
      std::size_t off = static_cast<std::size_t>(begin) * d;
      for (std::size_t i = 0; i < g.size(); ++i) gt[off + i] += g[i];
    });
  return r;
}

Tensor Tape::slice_cols(const Tensor& t, int begin, int end) {
  if (begin < 0 || end > t.cols() || begin >= end)
    throw ShapeMismatch("slice_cols: bad range [" + std::to_string(begin) +
                        "," + std::to_string(end) + ") for " +
                        std::to_string(t.cols()) + " cols");
  int n = t.rows(), d = t.cols(), w = end - begin;
  std::vector<double> out(static_cast<std::size_t>(n) * w);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < w; ++j) out[i * w + j] = t.value_at(i * d + begin + j);
  Tensor r = make_result({n, w}, std::move(out), {&t});
  if (r.requires_grad())
    record([t, r, begin, n, d, w]() mutable {
      const auto& g = r.grad();
      auto& gt = t.grad();
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < w; ++j) gt[i * d + begin + j] += g[i * w + j];
    });
  return r;
}

Tensor Tape::sigmoid(const Tensor& t) {
  std::vector<double> out(t.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    double x = t.value_at(i);
    out[i] = x >= 0 ? 1.0 / (1.0 + std::exp(-x))
                    : std::exp(x) / (1.0 + std::exp(x));
  }
  Tensor r = make_result(t.shape(), std::move(out), {&t});
  if (r.requires_grad())
    record([t, r]() mutable {
      const auto& g = r.grad();
      auto& gt = t.grad();
      for (std::size_t i = 0; i < g.size(); ++i) {
        double y = r.value_at(i);
        gt[i] += g[i] * y * (1.0 - y);
      }
    });
  return r;
}

Tensor Tape::tanh(const Tensor& t) {
  std::vector<double> out(t.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(t.value_at(i));
  Tensor r = make_result(t.shape(), std::move(out), {&t});
  if (r.requires_grad())
    record([t, r]() mutable {
      const auto& g = r.grad();
      auto& gt = t.grad();
      for (std::size_t i = 0; i < g.size(); ++i) {
        double y = r.value_at(i);
        gt[i] += g[i] * (1.0 - y * y);
      }
    });
  return r;
}

Tensor Tape::relu(const Tensor& t) {
  std::vector<double> out(t.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = t.value_at(i) > 0 ? t.value_at(i) : 0.0;
  Tensor r = make_result(t.shape(), std::move(out), {&t});
  if (r.requires_grad())
    record([t, r]() mutable {
      const auto& g = r.grad();
      auto& gt = t.grad();
      for (std::size_t i = 0; i < g.size(); ++i)
        if (t.value_at(i) > 0) gt[i] += g[i];
    });
  return r;
}

Tensor Tape::softmax_rows(const Tensor& t) {
  int n = t.rows(), d = t.cols();
  std::vector<double> out(t.size());
  for (int i = 0; i < n; ++i) {
    double mx = t.value_at(i * d);
    for (int j = 1; j < d; ++j) mx = std::max(mx, t.value_at(i * d + j));
    double sum = 0.0;
    for (int j = 0; j < d; ++j) {
      out[i * d + j] = std::exp(t.value_at(i * d + j) - mx);
      sum += out[i * d + j];
    }
    for (int j = 0; j < d; ++j) out[i * d + j] /= sum;
  }
  Tensor r = make_result({n, d}, std::move(out), {&t});
  if (r.requires_grad())
    record([t, r, n, d]() mutable {
      const auto& g = r.grad();
      auto& gt = t.grad();
      for (int i = 0; i < n; ++i) {
        double dot = 0.0;
        for (int j = 0; j < d; ++j) dot += g[i * d + j] * r.value_at(i * d + j);
        for (int j = 0; j < d; ++j)
          gt[i * d + j] += r.value_at(i * d + j) * (g[i * d + j] - dot);
      }
    });
  return r;
}

Tensor Tape::layer_norm(const Tensor& t, const Tensor& gain,
                        const Tensor& bias) {
  int n = t.rows(), d = t.cols();
  if (gain.cols() != d || bias.cols() != d) throw_shape("layer_norm", t, gain);
  const double eps = 1e-6;
  std::vector<double> out(t.size());
  std::vector<double> means(n), istds(n);
  for (int i = 0; i < n; ++i) {
    double mean = 0.0;
    for (int j = 0; j < d; ++j) mean += t.value_at(i * d + j);
    mean /= d;
    double var = 0.0;
    for (int j = 0; j < d; ++j) {
      double c = t.value_at(i * d + j) - mean;
      var += c * c;
    }
    var /= d;
    double istd = 1.0 / std::sqrt(var + eps);
    means[i] = mean;
    istds[i] = istd;
    for (int j = 0; j < d; ++j)
      out[i * d + j] = (t.value_at(i * d + j) - mean) * istd * gain.value_at(j) +
                       bias.value_at(j);
  }
  Tensor r = make_result({n, d}, std::move(out), {&t, &gain, &bias});
  if (r.requires_grad())
    record([t, gain, bias, r, n, d, means, istds]() mutable {
      const auto& g = r.grad();
      for (int i = 0; i < n; ++i) {
        double mean = means[i], istd = istds[i];
        // xhat_j = (x_j - mean) * istd
        if (gain.requires_grad()) {
          auto& gg = gain.grad();
          for (int j = 0; j < d; ++j)
            gg[j] += g[i * d + j] * (t.value_at(i * d + j) - mean) * istd;
        }
        if (bias.requires_grad()) {
          auto& gb = bias.grad();
          for (int j = 0; j < d; ++j) gb[j] += g[i * d + j];
        }
        if (t.requires_grad()) {
          auto& gt = t.grad();
          double sum_gy = 0.0, sum_gy_xhat = 0.0;
          for (int j = 0; j < d; ++j) {
            double gy = g[i * d + j] * gain.value_at(j);
            double xhat = (t.value_at(i * d + j) - mean) * istd;
            sum_gy += gy;
            sum_gy_xhat += gy * xhat;
          }
          for (int j = 0; j < d; ++j) {
            double gy = g[i * d + j] * gain.value_at(j);
            double xhat = (t.value_at(i * d + j) - mean) * istd;
            gt[i * d + j] +=
                istd * (gy - sum_gy / d - xhat * sum_gy_xhat / d);
          }
        }
      }
    });
  return r;
}

Tensor Tape::max_pool_rows(const Tensor& t) {
  int n = t.rows(), d = t.cols();
  if (n == 0) throw EmptyInput("max_pool_rows: empty input");
  std::vector<double> out(d);
  std::vector<int> arg(d, 0);
  for (int j = 0; j < d; ++j) {
    double best = t.value_at(j);
    for (int i = 1; i < n; ++i) {
      double v = t.value_at(i * d + j);
      if (v > best) {
        best = v;
        arg[j] = i;
      }
    }
    out[j] = best;
  }
  Tensor r = make_result({1, d}, std::move(out), {&t});
  if (r.requires_grad())
    record([t, r, arg, d]() mutable {
      const auto& g = r.grad();
      auto& gt = t.grad();
      for (int j = 0; j < d; ++j) gt[arg[j] * d + j] += g[j];
    });
  return r;
}

Tensor Tape::log(const Tensor& t) {
  std::vector<double> out(t.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!(t.value_at(i) > 0.0)) {
      throw ShapeMismatch("log: input must be strictly positive");
    }
    out[i] = std::log(t.value_at(i));
  }
  Tensor r = make_result(t.shape(), std::move(out), {&t});
  if (r.requires_grad())
    record([t, r]() mutable {
      const auto& g = r.grad();
      auto& gt = t.grad();
      for (std::size_t i = 0; i < g.size(); ++i) gt[i] += g[i] / t.value_at(i);
    });
  return r;
}

Tensor Tape::gather_cols(const Tensor& src, const std::vector<int>& index,
                         int out_cols) {
  int n = src.rows(), groups = src.cols();
  if (out_cols <= 0 ||
      index.size() != static_cast<std::size_t>(n) * out_cols) {
    throw ShapeMismatch("gather_cols: index size does not match [" +
                        std::to_string(n) + "," + std::to_string(out_cols) +
                        "]");
  }
  for (int idx : index) {
    if (idx < 0 || idx >= groups)
      throw ShapeMismatch("gather_cols: index entry out of range");
  }
  std::vector<double> out(static_cast<std::size_t>(n) * out_cols);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < out_cols; ++j)
      out[static_cast<std::size_t>(i) * out_cols + j] =
          src.value_at(static_cast<std::size_t>(i) * groups +
                       index[static_cast<std::size_t>(i) * out_cols + j]);
  Tensor r = make_result({n, out_cols}, std::move(out), {&src});
  if (r.requires_grad())
    record([src, r, index, n, out_cols, groups]() mutable {
      const auto& g = r.grad();
      auto& gs = src.grad();
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < out_cols; ++j)
          gs[static_cast<std::size_t>(i) * groups +
             index[static_cast<std::size_t>(i) * out_cols + j]] +=
              g[static_cast<std::size_t>(i) * out_cols + j];
    });
  return r;
}

Tensor Tape::sum_cols_by_group(const Tensor& src, const std::vector<int>& index,
                               int groups) {
  int n = src.rows(), cols = src.cols();
  if (groups <= 0 || index.size() != static_cast<std::size_t>(n) * cols) {
    throw ShapeMismatch("sum_cols_by_group: index size does not match [" +
                        std::to_string(n) + "," + std::to_string(cols) + "]");
  }
  for (int idx : index) {
    if (idx < 0 || idx >= groups)
      throw ShapeMismatch("sum_cols_by_group: index entry out of range");
  }
  std::vector<double> out(static_cast<std::size_t>(n) * groups, 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < cols; ++j)
      out[static_cast<std::size_t>(i) * groups +
          index[static_cast<std::size_t>(i) * cols + j]] +=
          src.value_at(static_cast<std::size_t>(i) * cols + j);
  Tensor r = make_result({n, groups}, std::move(out), {&src});
  if (r.requires_grad())
    record([src, r, index, n, cols, groups]() mutable {
      const auto& g = r.grad();
      auto& gs = src.grad();
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < cols; ++j)
          gs[static_cast<std::size_t>(i) * cols + j] +=
              g[static_cast<std::size_t>(i) * groups +
                index[static_cast<std::size_t>(i) * cols + j]];
    });
  return r;
}

Tensor Tape::cross_entropy(const Tensor& logits, int target) {
  if (logits.rows() != 1)
    throw ShapeMismatch("cross_entropy: logits must be a single row");
  int v = logits.cols();
  if (target < 0 || target >= v)
    throw ShapeMismatch("cross_entropy: target " + std::to_string(target) +
                        " outside vocabulary of " + std::to_string(v));
  double mx = logits.value_at(0);
  for (int j = 1; j < v; ++j) mx = std::max(mx, logits.value_at(j));
  double sum = 0.0;
  for (int j = 0; j < v; ++j) sum += std::exp(logits.value_at(j) - mx);
  double lse = mx + std::log(sum);
  double loss = lse - logits.value_at(target);
  Tensor r = make_result({1, 1}, {loss}, {&logits});
  if (r.requires_grad())
    record([logits, r, target, v, mx, sum]() mutable {
      double g = r.grad()[0];
      auto& gl = logits.grad();
      for (int j = 0; j < v; ++j) {
        double p = std::exp(logits.value_at(j) - mx) / sum;
        gl[j] += g * (p - (j == target ? 1.0 : 0.0));
      }
    });
  return r;
}

Tensor Tape::sum_scalars(const std::vector<Tensor>& xs) {
  if (xs.empty()) throw EmptyInput("sum_scalars: no terms");
  double s = 0.0;
  std::vector<const Tensor*> ins;
  for (const Tensor& x : xs) {
    s += x.item();
    ins.push_back(&x);
  }
  Tensor r = make_result({1, 1}, {s}, ins);
  if (r.requires_grad())
    record([xs, r]() mutable {
      double g = r.grad()[0];
      for (const Tensor& x : xs)
        if (x.requires_grad()) x.grad()[0] += g;
    });
  return r;
}

Tensor Tape::mean_scalars(const std::vector<Tensor>& xs) {
  Tensor s = sum_scalars(xs);
  return scale(s, 1.0 / static_cast<double>(xs.size()));
}

double grad_check(const std::function<Tensor(Tape&)>& f,
                  const std::vector<Tensor>& params, double eps) {
  for (const Tensor& p : params) p.grad();  // all params must be differentiable
  std::vector<std::vector<double>> analytic;
  {
    for (Tensor p : params) p.zero_grad();
    Tape tape;
    Tensor loss = f(tape);
    tape.backward(loss);
    for (const Tensor& p : params) analytic.push_back(p.grad());
  }
  double max_rel = 0.0;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor p = params[pi];
    for (std::size_t i = 0; i < p.size(); ++i) {
      double saved = p.values()[i];
      p.values()[i] = saved + eps;
      Tape tp;
      tp.set_grad_enabled(false);
      double fp = f(tp).item();
      p.values()[i] = saved - eps;
      Tape tm;
      tm.set_grad_enabled(false);
      double fm = f(tm).item();
      p.values()[i] = saved;
      double numeric = (fp - fm) / (2.0 * eps);
      double a = analytic[pi][i];
      double rel = std::abs(a - numeric) /
                   std::max({1.0, std::abs(a), std::abs(numeric)});
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

}  // namespace ctxparse
