#include "ctxparse/nn.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

namespace ctxparse {

std::uint64_t Rng::next_u64() {
  // splitmix64
  std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

double Rng::next_double() {
  return static_cast<double>(next_u64() >> 11) * (1.0 / 9007199254740992.0);
}

double Rng::uniform(double lo, double hi) {
  return lo + (hi - lo) * next_double();
}

std::uint64_t Rng::next_below(std::uint64_t n) {
  // modulo bias is irrelevant at the sample sizes used here
  return n ? next_u64() % n : 0;
}

Tensor ParamStore::create(const std::string& name, std::vector<int> shape,
                          Rng& rng, double bound) {
  if (index_.count(name)) throw Error("parameter already exists: " + name);
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(-bound, bound);
  Tensor t = Tensor::leaf(std::move(shape), std::move(v), true);
  index_[name] = params_.size();
  params_.emplace_back(name, t);
  return t;
}

Tensor ParamStore::create_zeros(const std::string& name,
                                std::vector<int> shape) {
  if (index_.count(name)) throw Error("parameter already exists: " + name);
  Tensor t = Tensor::zeros(std::move(shape), true);
  index_[name] = params_.size();
  params_.emplace_back(name, t);
  return t;
}

Tensor ParamStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw Error("unknown parameter: " + name);
  return params_[it->second].second;
}

std::vector<Tensor> ParamStore::tensors() const {
  std::vector<Tensor> out;
  out.reserve(params_.size());
  for (const auto& [name, t] : params_) out.push_back(t);
  return out;
}

std::size_t ParamStore::total_size() const {
  std::size_t n = 0;
  for (const auto& [name, t] : params_) n += t.size();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& [name, t] : params_) t.zero_grad();
}

namespace {
constexpr const char* kCheckpointMagic = "CTXPARSE-CKPT-1";

void write_u32(std::ostream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::uint32_t read_u32(std::istream& is) {
  std::uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!is) throw ParseError("checkpoint: truncated file");
  return v;
}
}  // namespace

void ParamStore::save(const std::string& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open checkpoint for writing: " + path);
  os << kCheckpointMagic << '\n';
  write_u32(os, static_cast<std::uint32_t>(params_.size()));
  for (const auto& [name, t] : params_) {
    write_u32(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u32(os, static_cast<std::uint32_t>(t.shape().size()));
    for (int d : t.shape()) write_u32(os, static_cast<std::uint32_t>(d));
    os.write(reinterpret_cast<const char*>(t.values().data()),
             static_cast<std::streamsize>(t.size() * sizeof(double)));
  }
  if (!os) throw Error("short write to checkpoint: " + path);
}

void ParamStore::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open checkpoint: " + path);
  std::string magic;
  std::getline(is, magic);
  if (magic != kCheckpointMagic)
    throw ParseError("checkpoint: bad magic header in " + path);
  std::uint32_t count = read_u32(is);
  if (count != params_.size())
    throw CheckpointMismatch("checkpoint holds " + std::to_string(count) +
                             " tensors, model has " +
                             std::to_string(params_.size()));
  for (std::uint32_t k = 0; k < count; ++k) {
    std::uint32_t name_len = read_u32(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    std::uint32_t ndim = read_u32(is);
    std::vector<int> shape(ndim);
    for (auto& d : shape) d = static_cast<int>(read_u32(is));
    auto it = index_.find(name);
    if (it == index_.end())
      throw CheckpointMismatch("checkpoint tensor not in model: " + name);
    Tensor t = params_[it->second].second;
    if (t.shape() != shape)
      throw CheckpointMismatch("shape mismatch for " + name);
    is.read(reinterpret_cast<char*>(t.values().data()),
            static_cast<std::streamsize>(t.size() * sizeof(double)));
    if (!is) throw ParseError("checkpoint: truncated tensor " + name);
  }
}

void Adam::step(ParamStore& params, double clip_norm) {
  auto& all = params.all();
  if (m_.empty()) {
    for (const auto& [name, t] : all) {
      m_.emplace_back(t.size(), 0.0);
      v_.emplace_back(t.size(), 0.0);
    }
  }
  if (m_.size() != all.size())
    throw Error("Adam: parameter set changed between steps");

  double scale = 1.0;
  if (clip_norm > 0) {
    double sq = 0.0;
    for (const auto& [name, t] : all)
      for (double g : t.grad()) sq += g * g;
    double norm = std::sqrt(sq);
    if (norm > clip_norm) scale = clip_norm / norm;
  }

  ++t_;
  double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t pi = 0; pi < all.size(); ++pi) {
    Tensor t = all[pi].second;
    auto& vals = t.values();
    auto& grad = t.grad();
    auto& m = m_[pi];
    auto& v = v_[pi];
    for (std::size_t i = 0; i < vals.size(); ++i) {
      double g = grad[i] * scale;
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g;
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g * g;
      double mhat = m[i] / bc1;
      double vhat = v[i] / bc2;
      vals[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
  }
  params.zero_grad();
}

LstmParams LstmParams::create(ParamStore& store, const std::string& prefix,
                              int input_dim, int hidden, Rng& rng) {
  LstmParams p;
  p.w_x = store.create(prefix + ".w_x", {input_dim, 4 * hidden}, rng);
  p.w_h = store.create(prefix + ".w_h", {hidden, 4 * hidden}, rng);
  p.b = store.create(prefix + ".b", {1, 4 * hidden}, rng);
  p.hidden = hidden;
  return p;
}

LstmState lstm_zero_state(int hidden) {
  return {Tensor::zeros({1, hidden}, false), Tensor::zeros({1, hidden}, false)};
}

LstmState lstm_cell(Tape& tape, const Tensor& x, const LstmState& prev,
                    const LstmParams& p) {
  int h = p.hidden;
  Tensor gates = tape.add(
      tape.add_row_broadcast(tape.matmul(x, p.w_x), p.b),
      tape.matmul(prev.h, p.w_h));
  Tensor i = tape.sigmoid(tape.slice_cols(gates, 0, h));
  Tensor f = tape.sigmoid(tape.slice_cols(gates, h, 2 * h));
  Tensor g = tape.tanh(tape.slice_cols(gates, 2 * h, 3 * h));
  Tensor o = tape.sigmoid(tape.slice_cols(gates, 3 * h, 4 * h));
  Tensor c = tape.add(tape.mul(f, prev.c), tape.mul(i, g));
  Tensor hid = tape.mul(o, tape.tanh(c));
  return {hid, c};
}

std::vector<Tensor> lstm_run(Tape& tape, const std::vector<Tensor>& xs,
                             const LstmParams& p) {
  std::vector<Tensor> out;
  out.reserve(xs.size());
  LstmState st = lstm_zero_state(p.hidden);
  for (const Tensor& x : xs) {
    st = lstm_cell(tape, x, st, p);
    out.push_back(st.h);
  }
  return out;
}

BiLstmParams BiLstmParams::create(ParamStore& store, const std::string& prefix,
                                  int input_dim, int hidden_per_dir, Rng& rng) {
  BiLstmParams p;
  p.fwd = LstmParams::create(store, prefix + ".fwd", input_dim, hidden_per_dir,
                             rng);
  p.bwd = LstmParams::create(store, prefix + ".bwd", input_dim, hidden_per_dir,
                             rng);
  return p;
}

BiLstmOut bilstm_run(Tape& tape, const std::vector<Tensor>& xs,
                     const BiLstmParams& p) {
  if (xs.empty()) throw EmptyInput("bilstm_run: empty sequence");
  std::size_t n = xs.size();
  std::vector<Tensor> fwd(n), bwd(n);
  LstmState st = lstm_zero_state(p.fwd.hidden);
  for (std::size_t k = 0; k < n; ++k) {
    st = lstm_cell(tape, xs[k], st, p.fwd);
    fwd[k] = st.h;
  }
  LstmState fwd_final = st;
  st = lstm_zero_state(p.bwd.hidden);
  for (std::size_t k = n; k-- > 0;) {
    st = lstm_cell(tape, xs[k], st, p.bwd);
    bwd[k] = st.h;
  }
  BiLstmOut out;
  out.steps.reserve(n);
  for (std::size_t k = 0; k < n; ++k)
    out.steps.push_back(tape.concat_cols({fwd[k], bwd[k]}));
  out.first_last = tape.concat_cols({out.steps.front(), out.steps.back()});
  out.final_concat = tape.concat_cols({fwd_final.h, st.h});
  return out;
}

}  // namespace ctxparse
