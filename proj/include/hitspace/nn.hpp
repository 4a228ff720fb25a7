#pragma once

// Fixed operator set with hand-written reverse passes: dense, layer norm,
// FiLM, GELU/SiLU, multi-head attention, the three dropout variants, AdamW,
// cosine schedule and a binary checkpoint container.
//
// Activations are row-major batches: one sample (or token) per row. Layers
// cache what their backward pass needs from the most recent forward call.

#include "hitspace/core.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <string>
#include <vector>

namespace hitspace::nn {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using RowVec = Eigen::Matrix<T, 1, Eigen::Dynamic>;

enum class ParamGroup { Main = 0, FilmGenerator = 1 };

/// Named parameter with its gradient accumulator. Vectors are stored as a
/// single row.
template <typename T>
struct TensorBuf {
  std::string name;
  Mat<T> value;
  Mat<T> grad;
  ParamGroup group = ParamGroup::Main;

  TensorBuf() = default;
  TensorBuf(std::string n, Eigen::Index rows, Eigen::Index cols, ParamGroup g = ParamGroup::Main)
      : name(std::move(n)), value(Mat<T>::Zero(rows, cols)), grad(Mat<T>::Zero(rows, cols)), group(g) {}

  std::vector<Eigen::Index> shape() const {
    if (value.rows() == 1) return {value.cols()};
    return {value.rows(), value.cols()};
  }
  Eigen::Index size() const { return value.size(); }
  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

template <typename T>
using ParamList = std::vector<TensorBuf<T>*>;

/// Fan-in scaled uniform initialisation, U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
template <typename T>
void init_uniform(TensorBuf<T>& p, Eigen::Index fan_in, Rng& rng) {
  const double a = 1.0 / std::sqrt(static_cast<double>(std::max<Eigen::Index>(1, fan_in)));
  for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value.data()[i] = static_cast<T>(uniform(rng, -a, a));
}

template <typename T>
void init_normal(TensorBuf<T>& p, double sigma, Rng& rng) {
  for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value.data()[i] = static_cast<T>(gaussian(rng, sigma));
}

inline void check_cols(Eigen::Index got, Eigen::Index want, const char* what) {
  if (got != want)
    throw Error(ErrorKind::InvalidInput, std::string(what) + ": width " + std::to_string(got) + ", expected " +
                                             std::to_string(want));
}

// ---------------------------------------------------------------------------
// Dense

/// y = x W^T + b (each row of x is one input vector).
template <typename T>
Mat<T> dense_forward(const Mat<T>& x, const Mat<T>& W, const RowVec<T>& b) {
  check_cols(x.cols(), W.cols(), "dense");
  check_cols(b.cols(), W.rows(), "dense bias");
  Mat<T> y = x * W.transpose();
  y.rowwise() += b;
  return y;
}

/// Returns dx and accumulates into dW, db.
template <typename T>
Mat<T> dense_backward(const Mat<T>& dy, const Mat<T>& x, const Mat<T>& W, Mat<T>& dW, Mat<T>& db) {
  check_cols(dy.cols(), W.rows(), "dense backward");
  dW.noalias() += dy.transpose() * x;
  db += dy.colwise().sum();
  return dy * W;
}

template <typename T>
struct Dense {
  TensorBuf<T> W, b;
  Mat<T> x_;

  Dense() = default;
  Dense(const std::string& name, Eigen::Index in, Eigen::Index out, Rng& rng, ParamGroup g = ParamGroup::Main)
      : W(name + ".W", out, in, g), b(name + ".b", 1, out, g) {
    init_uniform(W, in, rng);
    init_uniform(b, in, rng);
  }

  Eigen::Index in() const { return W.value.cols(); }
  Eigen::Index out() const { return W.value.rows(); }

  Mat<T> forward(const Mat<T>& x) {
    x_ = x;
    return dense_forward<T>(x, W.value, b.value.row(0));
  }
  Mat<T> backward(const Mat<T>& dy) { return dense_backward<T>(dy, x_, W.value, W.grad, b.grad); }
  void params(ParamList<T>& out) {
    out.push_back(&W);
    out.push_back(&b);
  }
};

// ---------------------------------------------------------------------------
// Layer norm

inline constexpr double kLayerNormEps = 1e-5;

template <typename T>
struct LayerNorm {
  TensorBuf<T> gamma, beta;
  Mat<T> xhat_;
  Eigen::Matrix<T, Eigen::Dynamic, 1> rstd_;

  LayerNorm() = default;
  LayerNorm(const std::string& name, Eigen::Index width)
      : gamma(name + ".gamma", 1, width), beta(name + ".beta", 1, width) {
    if (width < 2) throw Error(ErrorKind::InvalidInput, "layer norm needs width >= 2");
    gamma.value.setOnes();
  }

  /// Normalisation only, no affine.
  static Mat<T> normalize(const Mat<T>& x, Mat<T>* xhat_out = nullptr,
                          Eigen::Matrix<T, Eigen::Dynamic, 1>* rstd_out = nullptr) {
    const Eigen::Index n = x.cols();
    Mat<T> xhat(x.rows(), n);
    Eigen::Matrix<T, Eigen::Dynamic, 1> rstd(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const T mean = x.row(i).mean();
      const T var = (x.row(i).array() - mean).square().mean();
      rstd[i] = T(1) / std::sqrt(var + static_cast<T>(kLayerNormEps));
      xhat.row(i) = (x.row(i).array() - mean) * rstd[i];
    }
    if (xhat_out) *xhat_out = xhat;
    if (rstd_out) *rstd_out = rstd;
    return xhat;
  }

  Mat<T> forward(const Mat<T>& x) {
    check_cols(x.cols(), gamma.value.cols(), "layer norm");
    normalize(x, &xhat_, &rstd_);
    Mat<T> y = xhat_.array().rowwise() * gamma.value.row(0).array();
    y.rowwise() += beta.value.row(0);
    return y;
  }

  Mat<T> backward(const Mat<T>& dy) {
    gamma.grad += (dy.array() * xhat_.array()).colwise().sum().matrix();
    beta.grad += dy.colwise().sum();
    const Mat<T> dxhat = dy.array().rowwise() * gamma.value.row(0).array();
    Mat<T> dx(dy.rows(), dy.cols());
    const T inv_n = T(1) / static_cast<T>(dy.cols());
    for (Eigen::Index i = 0; i < dy.rows(); ++i) {
      const T m1 = dxhat.row(i).sum() * inv_n;
      const T m2 = dxhat.row(i).dot(xhat_.row(i)) * inv_n;
      dx.row(i) = rstd_[i] * (dxhat.row(i).array() - m1 - xhat_.row(i).array() * m2);
    }
    return dx;
  }
  void params(ParamList<T>& out) {
    out.push_back(&gamma);
    out.push_back(&beta);
  }
};

// ---------------------------------------------------------------------------
// Activations

template <typename T>
struct Gelu {
  Mat<T> x_;
  static T f(T x) { return T(0.5) * x * (T(1) + std::erf(x / std::numbers::sqrt2_v<T>)); }
  static T df(T x) {
    const T cdf = T(0.5) * (T(1) + std::erf(x / std::numbers::sqrt2_v<T>));
    const T pdf = std::exp(T(-0.5) * x * x) / std::sqrt(T(2) * std::numbers::pi_v<T>);
    return cdf + x * pdf;
  }
  Mat<T> forward(const Mat<T>& x) {
    x_ = x;
    return x.unaryExpr([](T v) { return f(v); });
  }
  Mat<T> backward(const Mat<T>& dy) const {
    return dy.cwiseProduct(x_.unaryExpr([](T v) { return df(v); }));
  }
};

template <typename T>
struct Silu {
  Mat<T> x_;
  static T sigmoid(T x) { return T(1) / (T(1) + std::exp(-x)); }
  static T f(T x) { return x * sigmoid(x); }
  static T df(T x) {
    const T s = sigmoid(x);
    return s * (T(1) + x * (T(1) - s));
  }
  Mat<T> forward(const Mat<T>& x) {
    x_ = x;
    return x.unaryExpr([](T v) { return f(v); });
  }
  Mat<T> backward(const Mat<T>& dy) const {
    return dy.cwiseProduct(x_.unaryExpr([](T v) { return df(v); }));
  }
};

// ---------------------------------------------------------------------------
// FiLM

/// Per-sample modulation parameters: one row of gamma and beta per row of h.
template <typename T>
struct FilmParams {
  Mat<T> gamma;
  Mat<T> beta;
};

template <typename T>
Mat<T> film_modulate(const Mat<T>& h, const FilmParams<T>& fp) {
  if (fp.gamma.rows() != h.rows() || fp.gamma.cols() != h.cols() || fp.beta.rows() != h.rows() ||
      fp.beta.cols() != h.cols())
    throw Error(ErrorKind::InvalidInput, "film: gamma/beta shape differs from features");
  return fp.gamma.cwiseProduct(h) + fp.beta;
}

/// Gradients of film_modulate: dh, dgamma, dbeta.
template <typename T>
void film_backward(const Mat<T>& dy, const Mat<T>& h, const FilmParams<T>& fp, Mat<T>& dh, Mat<T>& dgamma,
                   Mat<T>& dbeta) {
  dh = dy.cwiseProduct(fp.gamma);
  dgamma = dy.cwiseProduct(h);
  dbeta = dy;
}

// ---------------------------------------------------------------------------
// Attention

/// Key mask per sequence: 1 = attend, 0 = padding.
using KeyMask = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Scaled dot-product attention for one head. Masked keys receive zero
/// weight; a row whose keys are all masked yields zero weights and output.
template <typename T>
Mat<T> attention_weights(const Mat<T>& q, const Mat<T>& k, const std::uint8_t* key_mask) {
  const T scale = T(1) / std::sqrt(static_cast<T>(q.cols()));
  Mat<T> s = (q * k.transpose()) * scale;
  Mat<T> p(s.rows(), s.cols());
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    T mx = -std::numeric_limits<T>::infinity();
    for (Eigen::Index j = 0; j < s.cols(); ++j)
      if (!key_mask || key_mask[j]) mx = std::max(mx, s(i, j));
    if (mx == -std::numeric_limits<T>::infinity()) {
      p.row(i).setZero();
      continue;
    }
    T sum = 0;
    for (Eigen::Index j = 0; j < s.cols(); ++j) {
      const T e = (!key_mask || key_mask[j]) ? std::exp(s(i, j) - mx) : T(0);
      p(i, j) = e;
      sum += e;
    }
    p.row(i) /= sum;
  }
  return p;
}

/// Multi-head attention over a batch of equal-length sequences. Inputs are
/// (batch*len) x width, sequence b occupying rows [b*len, (b+1)*len).
template <typename T>
struct MultiHeadAttention {
  Dense<T> wq, wk, wv, wo;
  int heads = 1;
  Eigen::Index seq_len_ = 0;
  KeyMask mask_;
  Mat<T> q_, k_, v_;
  std::vector<Mat<T>> probs_;  // one per (sequence, head)

  MultiHeadAttention() = default;
  MultiHeadAttention(const std::string& name, Eigen::Index width, int n_heads, Rng& rng)
      : wq(name + ".q", width, width, rng),
        wk(name + ".k", width, width, rng),
        wv(name + ".v", width, width, rng),
        wo(name + ".o", width, width, rng),
        heads(n_heads) {
    if (n_heads < 1 || width % n_heads != 0)
      throw Error(ErrorKind::InvalidInput, "attention: head count must divide the model width");
  }

  /// Queries from xq, keys/values from xkv; both batch*len rows.
  Mat<T> forward(const Mat<T>& xq, const Mat<T>& xkv, const KeyMask& mask) {
    const Eigen::Index batch = mask.rows();
    seq_len_ = mask.cols();
    if (xq.rows() != batch * seq_len_ || xkv.rows() != batch * seq_len_)
      throw Error(ErrorKind::InvalidInput, "attention: row count differs from batch*len");
    mask_ = mask;
    q_ = wq.forward(xq);
    k_ = wk.forward(xkv);
    v_ = wv.forward(xkv);
    const Eigen::Index width = q_.cols();
    const Eigen::Index dh = width / heads;
    Mat<T> ctx(xq.rows(), width);
    probs_.resize(static_cast<std::size_t>(batch * heads));
    for (Eigen::Index b = 0; b < batch; ++b) {
      const Eigen::Index r0 = b * seq_len_;
      for (int h = 0; h < heads; ++h) {
        const Mat<T> q = q_.block(r0, h * dh, seq_len_, dh);
        const Mat<T> k = k_.block(r0, h * dh, seq_len_, dh);
        const Mat<T> v = v_.block(r0, h * dh, seq_len_, dh);
        Mat<T>& p = probs_[static_cast<std::size_t>(b * heads + h)];
        p = attention_weights<T>(q, k, mask.row(b).data());
        ctx.block(r0, h * dh, seq_len_, dh) = p * v;
      }
    }
    return wo.forward(ctx);
  }

  Mat<T> forward(const Mat<T>& x, const KeyMask& mask) { return forward(x, x, mask); }

  /// Returns (dxq, dxkv).
  std::pair<Mat<T>, Mat<T>> backward2(const Mat<T>& dy) {
    const Mat<T> dctx = wo.backward(dy);
    const Eigen::Index width = q_.cols();
    const Eigen::Index dh = width / heads;
    const T scale = T(1) / std::sqrt(static_cast<T>(dh));
    Mat<T> dq(q_.rows(), width), dk(k_.rows(), width), dv(v_.rows(), width);
    const Eigen::Index batch = mask_.rows();
    for (Eigen::Index b = 0; b < batch; ++b) {
      const Eigen::Index r0 = b * seq_len_;
      for (int h = 0; h < heads; ++h) {
        const Mat<T>& p = probs_[static_cast<std::size_t>(b * heads + h)];
        const Mat<T> q = q_.block(r0, h * dh, seq_len_, dh);
        const Mat<T> k = k_.block(r0, h * dh, seq_len_, dh);
        const Mat<T> v = v_.block(r0, h * dh, seq_len_, dh);
        const Mat<T> dout = dctx.block(r0, h * dh, seq_len_, dh);
        const Mat<T> dp = dout * v.transpose();
        Mat<T> ds(p.rows(), p.cols());
        for (Eigen::Index i = 0; i < p.rows(); ++i) {
          const T dot = dp.row(i).dot(p.row(i));
          ds.row(i) = p.row(i).array() * (dp.row(i).array() - dot);
        }
        ds *= scale;
        dq.block(r0, h * dh, seq_len_, dh) = ds * k;
        dk.block(r0, h * dh, seq_len_, dh) = ds.transpose() * q;
        dv.block(r0, h * dh, seq_len_, dh) = p.transpose() * dout;
      }
    }
    Mat<T> dxq = wq.backward(dq);
    Mat<T> dxkv = wk.backward(dk) + wv.backward(dv);
    return {std::move(dxq), std::move(dxkv)};
  }

  /// Self-attention backward.
  Mat<T> backward(const Mat<T>& dy) {
    auto [dxq, dxkv] = backward2(dy);
    return dxq + dxkv;
  }

  void params(ParamList<T>& out) {
    wq.params(out);
    wk.params(out);
    wv.params(out);
    wo.params(out);
  }
};

/// Pre-norm transformer block: x + MHA(LN(x)), then + FFN(LN(.)) with GELU.
template <typename T>
struct TransformerBlock {
  LayerNorm<T> ln1, ln2;
  MultiHeadAttention<T> attn;
  Dense<T> ff1, ff2;
  Gelu<T> act;

  TransformerBlock() = default;
  TransformerBlock(const std::string& name, Eigen::Index width, int heads, Eigen::Index ff_width, Rng& rng)
      : ln1(name + ".ln1", width),
        ln2(name + ".ln2", width),
        attn(name + ".attn", width, heads, rng),
        ff1(name + ".ff1", width, ff_width, rng),
        ff2(name + ".ff2", ff_width, width, rng) {}

  Mat<T> forward(const Mat<T>& x, const KeyMask& mask) {
    Mat<T> h = x + attn.forward(ln1.forward(x), mask);
    return h + ff2.forward(act.forward(ff1.forward(ln2.forward(h))));
  }
  Mat<T> backward(const Mat<T>& dy) {
    Mat<T> dh = dy + ln2.backward(ff1.backward(act.backward(ff2.backward(dy))));
    return dh + ln1.backward(attn.backward(dh));
  }
  void params(ParamList<T>& out) {
    ln1.params(out);
    attn.params(out);
    ln2.params(out);
    ff1.params(out);
    ff2.params(out);
  }
};

// ---------------------------------------------------------------------------
// Dropout variants. Each draws exactly one Bernoulli per decision so the
// random stream does not depend on p.

/// True when the whole player embedding is replaced by zeros.
inline bool dropout_embedding(double p, Rng& rng) { return bernoulli(rng, p); }

/// One decision per constituent condition vector: true = use its null vector.
inline std::vector<bool> dropout_condition(int n_parts, double p, Rng& rng) {
  std::vector<bool> out(static_cast<std::size_t>(n_parts));
  for (int i = 0; i < n_parts; ++i) out[static_cast<std::size_t>(i)] = bernoulli(rng, p);
  return out;
}

/// True when FiLM is bypassed (identity modulation) for the sample.
inline bool dropout_modulation(double p, Rng& rng) { return bernoulli(rng, p); }

// ---------------------------------------------------------------------------
// Optimiser

inline constexpr double kTerminalLr = 1e-6;

struct CosineSchedule {
  double lr_main = 1e-4;
  double lr_film = 1e-5;
  double lr_terminal = kTerminalLr;
  int horizon_epochs = 3000;

  double initial(ParamGroup g) const { return g == ParamGroup::FilmGenerator ? lr_film : lr_main; }
};

/// Cosine interpolation from the group's initial rate to the terminal rate.
inline double cosine_lr(double epoch, ParamGroup group, const CosineSchedule& s) {
  if (s.horizon_epochs <= 0) throw Error(ErrorKind::Config, "lr horizon must be > 0");
  const double e = std::clamp(epoch, 0.0, static_cast<double>(s.horizon_epochs));
  const double lr0 = s.initial(group);
  return s.lr_terminal + 0.5 * (lr0 - s.lr_terminal) * (1.0 + std::cos(std::numbers::pi * e / s.horizon_epochs));
}

template <typename T>
struct OptimState {
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  double weight_decay = 1e-2;
  CosineSchedule schedule;
  long step = 0;
  std::map<std::string, Mat<T>> m, v;
};

/// Decoupled-weight-decay Adam on every parameter with the group learning
/// rates for `epoch`. Parameters with non-finite gradients raise before any
/// update is applied.
template <typename T>
void adamw_step(const ParamList<T>& params, OptimState<T>& st, double epoch) {
  for (const TensorBuf<T>* p : params)
    if (!p->grad.allFinite()) throw Error(ErrorKind::Numeric, "non-finite gradient in parameter '" + p->name + "'");
  ++st.step;
  const double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
  const double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
  for (TensorBuf<T>* p : params) {
    auto [mit, m_new] = st.m.try_emplace(p->name, Mat<T>::Zero(p->value.rows(), p->value.cols()));
    auto [vit, v_new] = st.v.try_emplace(p->name, Mat<T>::Zero(p->value.rows(), p->value.cols()));
    Mat<T>& m = mit->second;
    Mat<T>& v = vit->second;
    if (m.rows() != p->value.rows() || m.cols() != p->value.cols())
      throw Error(ErrorKind::Numeric, "optimizer moment shape differs for '" + p->name + "'");
    const double lr = cosine_lr(epoch, p->group, st.schedule);
    const T b1 = static_cast<T>(st.beta1), b2 = static_cast<T>(st.beta2);
    m = b1 * m + (T(1) - b1) * p->grad;
    v = b2 * v + (T(1) - b2) * p->grad.cwiseProduct(p->grad);
    const T step = static_cast<T>(lr / bc1);
    const T denom_scale = static_cast<T>(1.0 / std::sqrt(bc2));
    p->value *= static_cast<T>(1.0 - lr * st.weight_decay);
    p->value.array() -= step * m.array() / (v.array().sqrt() * denom_scale + static_cast<T>(st.eps));
  }
}

template <typename T>
void zero_grads(const ParamList<T>& params) {
  for (TensorBuf<T>* p : params) p->zero_grad();
}

// ---------------------------------------------------------------------------
// Checkpoints: "HSCK", u32 version, u64 config hash, u32 count, then per
// parameter u32 name length, name bytes, u32 rows, u32 cols, f64 values
// (row-major). All integers little-endian.

inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {
template <typename U>
void put(std::string& buf, U v) {
  char bytes[sizeof(U)];
  std::memcpy(bytes, &v, sizeof(U));
  buf.append(bytes, sizeof(U));
}
template <typename U>
U get(const std::string& buf, std::size_t& pos) {
  if (pos + sizeof(U) > buf.size()) throw Error(ErrorKind::Data, "checkpoint truncated");
  U v;
  std::memcpy(&v, buf.data() + pos, sizeof(U));
  pos += sizeof(U);
  return v;
}
}  // namespace detail

/// Extra named blobs (normalisation statistics, embedding tables) travel in
/// the same container as plain double matrices.
using Blob = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using BlobMap = std::map<std::string, Blob>;

inline std::string encode_checkpoint(const BlobMap& blobs, std::uint64_t config_hash) {
  std::string buf = "HSCK";
  detail::put<std::uint32_t>(buf, kCheckpointVersion);
  detail::put<std::uint64_t>(buf, config_hash);
  detail::put<std::uint32_t>(buf, static_cast<std::uint32_t>(blobs.size()));
  for (const auto& [name, m] : blobs) {
    detail::put<std::uint32_t>(buf, static_cast<std::uint32_t>(name.size()));
    buf.append(name);
    detail::put<std::uint32_t>(buf, static_cast<std::uint32_t>(m.rows()));
    detail::put<std::uint32_t>(buf, static_cast<std::uint32_t>(m.cols()));
    for (Eigen::Index i = 0; i < m.size(); ++i) detail::put<double>(buf, m.data()[i]);
  }
  return buf;
}

inline BlobMap decode_checkpoint(const std::string& buf, std::uint64_t* config_hash = nullptr) {
  if (buf.size() < 4 || buf.compare(0, 4, "HSCK") != 0) throw Error(ErrorKind::Data, "not a checkpoint file");
  std::size_t pos = 4;
  const auto version = detail::get<std::uint32_t>(buf, pos);
  if (version != kCheckpointVersion)
    throw Error(ErrorKind::Data, "checkpoint version " + std::to_string(version) + " is not supported");
  const auto hash = detail::get<std::uint64_t>(buf, pos);
  if (config_hash) *config_hash = hash;
  const auto count = detail::get<std::uint32_t>(buf, pos);
  BlobMap out;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = detail::get<std::uint32_t>(buf, pos);
    if (pos + len > buf.size()) throw Error(ErrorKind::Data, "checkpoint truncated");
    std::string name = buf.substr(pos, len);
    pos += len;
    const auto rows = detail::get<std::uint32_t>(buf, pos);
    const auto cols = detail::get<std::uint32_t>(buf, pos);
    Blob m(rows, cols);
    for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = detail::get<double>(buf, pos);
    out.emplace(std::move(name), std::move(m));
  }
  if (pos != buf.size()) throw Error(ErrorKind::Data, "trailing bytes in checkpoint");
  return out;
}

template <typename T>
void store_params(const ParamList<T>& params, BlobMap& blobs) {
  for (const TensorBuf<T>* p : params) blobs[p->name] = p->value.template cast<double>();
}

template <typename T>
void load_params(const ParamList<T>& params, const BlobMap& blobs) {
  for (TensorBuf<T>* p : params) {
    const auto it = blobs.find(p->name);
    if (it == blobs.end()) throw Error(ErrorKind::Data, "checkpoint lacks parameter '" + p->name + "'");
    if (it->second.rows() != p->value.rows() || it->second.cols() != p->value.cols())
      throw Error(ErrorKind::Data, "checkpoint shape differs for parameter '" + p->name + "'");
    p->value = it->second.template cast<T>();
  }
}

inline void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(ErrorKind::Io, "cannot open '" + path + "' for writing");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw Error(ErrorKind::Io, "write to '" + path + "' failed");
}

inline std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorKind::Io, "cannot open '" + path + "'");
  return std::string(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

}  // namespace hitspace::nn
