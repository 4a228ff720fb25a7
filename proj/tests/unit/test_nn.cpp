#include "hitspace/nn.hpp"

#include "gradcheck.hpp"

#include <gtest/gtest.h>

using namespace hitspace;
using namespace hitspace::nn;

namespace {

constexpr double kGradTol = 1e-4;

void expect_grads_ok(const std::vector<gradcheck::Result>& res) {
  for (const auto& r : res) EXPECT_LT(r.rel_error, kGradTol) << r.name;
}

}  // namespace

TEST(Dense, IdentityAndBias) {
  Rng rng(1);
  Dense<double> d("d", 3, 3, rng);
  d.W.value.setIdentity();
  d.b.value.setZero();
  const Mat<double> x = gradcheck::random_like(4, 3, rng);
  EXPECT_EQ(d.forward(x), x);
  d.b.value << 1, 2, 3;
  const Mat<double> y = d.forward(Mat<double>::Zero(2, 3));
  for (int i = 0; i < 2; ++i) EXPECT_EQ(Mat<double>(y.row(i)), d.b.value);
}

TEST(Dense, GradientCheck) {
  Rng rng(2);
  Dense<double> d("d", 5, 4, rng);
  TensorBuf<double> x("input", 6, 5);
  x.value = gradcheck::random_like(6, 5, rng);
  const Mat<double> R = gradcheck::random_like(6, 4, rng);
  ParamList<double> ps{&x};
  d.params(ps);
  expect_grads_ok(gradcheck::check(
      ps, [&] { return gradcheck::weighted_sum(d.forward(x.value), R); },
      [&] {
        d.forward(x.value);
        x.grad = d.backward(R);
      }));
}

TEST(LayerNorm, ConstantRowAndMoments) {
  LayerNorm<double> ln("ln", 6);
  Mat<double> c = Mat<double>::Constant(2, 6, 3.5);
  EXPECT_LE(ln.forward(c).cwiseAbs().maxCoeff(), 1e-12);
  Rng rng(3);
  const Mat<double> y = ln.forward(gradcheck::random_like(5, 6, rng, 4.0));
  for (Eigen::Index i = 0; i < y.rows(); ++i) {
    EXPECT_NEAR(y.row(i).mean(), 0.0, 1e-6);
    EXPECT_NEAR((y.row(i).array() - y.row(i).mean()).square().mean(), 1.0, 1e-5);
  }
}

TEST(LayerNorm, GradientCheck) {
  Rng rng(4);
  LayerNorm<double> ln("ln", 7);
  ln.gamma.value = gradcheck::random_like(1, 7, rng);
  ln.beta.value = gradcheck::random_like(1, 7, rng);
  TensorBuf<double> x("input", 5, 7);
  x.value = gradcheck::random_like(5, 7, rng);
  const Mat<double> R = gradcheck::random_like(5, 7, rng);
  ParamList<double> ps{&x};
  ln.params(ps);
  expect_grads_ok(gradcheck::check(
      ps, [&] { return gradcheck::weighted_sum(ln.forward(x.value), R); },
      [&] {
        ln.forward(x.value);
        x.grad = ln.backward(R);
      }));
}

TEST(Activations, GradientCheck) {
  Rng rng(5);
  TensorBuf<double> x("input", 4, 6);
  x.value = gradcheck::random_like(4, 6, rng, 2.0);
  const Mat<double> R = gradcheck::random_like(4, 6, rng);
  Gelu<double> g;
  expect_grads_ok(gradcheck::check(
      {&x}, [&] { return gradcheck::weighted_sum(g.forward(x.value), R); },
      [&] {
        g.forward(x.value);
        x.grad = g.backward(R);
      }));
  Silu<double> s;
  expect_grads_ok(gradcheck::check(
      {&x}, [&] { return gradcheck::weighted_sum(s.forward(x.value), R); },
      [&] {
        s.forward(x.value);
        x.grad = s.backward(R);
      }));
}

TEST(Film, IdentityAndZeroGamma) {
  Rng rng(6);
  const Mat<double> h = gradcheck::random_like(3, 4, rng);
  FilmParams<double> fp{Mat<double>::Ones(3, 4), Mat<double>::Zero(3, 4)};
  EXPECT_EQ(film_modulate(h, fp), h);
  fp.gamma.setZero();
  fp.beta = gradcheck::random_like(3, 4, rng);
  EXPECT_EQ(film_modulate(h, fp), fp.beta);
}

TEST(Film, GradientCheck) {
  Rng rng(7);
  TensorBuf<double> h("h", 3, 5), g("gamma", 3, 5), b("beta", 3, 5);
  h.value = gradcheck::random_like(3, 5, rng);
  g.value = gradcheck::random_like(3, 5, rng);
  b.value = gradcheck::random_like(3, 5, rng);
  const Mat<double> R = gradcheck::random_like(3, 5, rng);
  expect_grads_ok(gradcheck::check(
      {&h, &g, &b}, [&] { return gradcheck::weighted_sum(film_modulate(h.value, FilmParams<double>{g.value, b.value}), R); },
      [&] { film_backward(R, h.value, FilmParams<double>{g.value, b.value}, h.grad, g.grad, b.grad); }));
}

TEST(Attention, SingleTokenReturnsValue) {
  Rng rng(8);
  MultiHeadAttention<double> mha("a", 4, 2, rng);
  const Mat<double> x = gradcheck::random_like(1, 4, rng);
  KeyMask mask = KeyMask::Ones(1, 1);
  const Mat<double> y = mha.forward(x, mask);
  const Mat<double> expected = mha.wo.forward(mha.wv.forward(x));
  EXPECT_LE((y - expected).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Attention, UniformKeysUniformWeights) {
  Mat<double> q(2, 3), k = Mat<double>::Ones(4, 3);
  q << 1, 2, 3, -1, 0, 4;
  const Mat<double> p = attention_weights<double>(q, k, nullptr);
  EXPECT_LE((p.array() - 0.25).abs().maxCoeff(), 1e-15);
  const std::uint8_t mask[4] = {1, 0, 1, 0};
  const Mat<double> pm = attention_weights<double>(q, k, mask);
  EXPECT_NEAR(pm(0, 0), 0.5, 1e-15);
  EXPECT_EQ(pm(0, 1), 0.0);
}

TEST(Attention, GradientCheckWithPadding) {
  Rng rng(9);
  MultiHeadAttention<double> mha("a", 8, 2, rng);
  TensorBuf<double> x("input", 2 * 5, 8);
  x.value = gradcheck::random_like(10, 8, rng);
  KeyMask mask = KeyMask::Ones(2, 5);
  mask(1, 3) = 0;
  mask(1, 4) = 0;
  const Mat<double> R = gradcheck::random_like(10, 8, rng);
  ParamList<double> ps{&x};
  mha.params(ps);
  expect_grads_ok(gradcheck::check(
      ps, [&] { return gradcheck::weighted_sum(mha.forward(x.value, mask), R); },
      [&] {
        mha.forward(x.value, mask);
        x.grad = mha.backward(R);
      }));
}

TEST(TransformerBlock, GradientCheck) {
  Rng rng(10);
  TransformerBlock<double> blk("blk", 8, 2, 16, rng);
  TensorBuf<double> x("input", 2 * 4, 8);
  x.value = gradcheck::random_like(8, 8, rng);
  KeyMask mask = KeyMask::Ones(2, 4);
  mask(0, 2) = 0;
  const Mat<double> R = gradcheck::random_like(8, 8, rng);
  ParamList<double> ps{&x};
  blk.params(ps);
  expect_grads_ok(gradcheck::check(
      ps, [&] { return gradcheck::weighted_sum(blk.forward(x.value, mask), R); },
      [&] {
        blk.forward(x.value, mask);
        x.grad = blk.backward(R);
      }));
}

TEST(Dropout, ExtremesAndBinomialFrequency) {
  Rng rng(11);
  for (int i = 0; i < 100; ++i) {
    EXPECT_FALSE(dropout_embedding(0.0, rng));
    EXPECT_TRUE(dropout_embedding(1.0, rng));
    EXPECT_FALSE(dropout_modulation(0.0, rng));
    EXPECT_TRUE(dropout_modulation(1.0, rng));
  }
  for (double p : {0.1, 0.6, 0.8}) {
    int drops = 0;
    const int n = 10000;
    for (int i = 0; i < n; ++i) drops += dropout_embedding(p, rng);
    const double sd = std::sqrt(n * p * (1 - p));
    EXPECT_NEAR(drops, n * p, 4 * sd) << p;
    int parts = 0;
    for (int i = 0; i < n / 5; ++i)
      for (bool b : dropout_condition(5, p, rng)) parts += b;
    EXPECT_NEAR(parts, n * p, 4 * sd) << p;
  }
}

TEST(Dropout, StreamPositionIndependentOfRate) {
  Rng a(3), b(3);
  dropout_embedding(0.1, a);
  dropout_embedding(0.9, b);
  EXPECT_EQ(a(), b());
}

TEST(CosineLr, EndpointsAndMidpoint) {
  CosineSchedule s;
  s.horizon_epochs = 3000;
  EXPECT_DOUBLE_EQ(cosine_lr(0, ParamGroup::Main, s), 1e-4);
  EXPECT_DOUBLE_EQ(cosine_lr(0, ParamGroup::FilmGenerator, s), 1e-5);
  EXPECT_NEAR(cosine_lr(3000, ParamGroup::Main, s), 1e-6, 1e-20);
  EXPECT_NEAR(cosine_lr(3000, ParamGroup::FilmGenerator, s), 1e-6, 1e-20);
  EXPECT_NEAR(cosine_lr(1500, ParamGroup::Main, s), 0.5 * (1e-4 + 1e-6), 1e-18);
}

TEST(AdamW, ZeroGradZeroDecayIsNoOp) {
  TensorBuf<double> w("w", 2, 2);
  w.value << 1, 2, 3, 4;
  const Mat<double> before = w.value;
  OptimState<double> st;
  st.weight_decay = 0.0;
  adamw_step<double>({&w}, st, 0);
  EXPECT_EQ(w.value, before);
}

TEST(AdamW, DecayOnlyShrinksNorm) {
  TensorBuf<double> w("w", 1, 3);
  w.value << 1, -2, 3;
  const double n0 = w.value.norm();
  OptimState<double> st;
  st.weight_decay = 0.1;
  st.schedule.lr_main = 1e-2;
  adamw_step<double>({&w}, st, 0);
  EXPECT_LT(w.value.norm(), n0);
}

TEST(AdamW, ScalarQuadraticConverges) {
  // f(w) = (w - 3)^2, minimum at 3.
  TensorBuf<double> w("w", 1, 1);
  w.value(0, 0) = -2.0;
  OptimState<double> st;
  st.weight_decay = 0.0;
  st.schedule.lr_main = 0.1;
  st.schedule.lr_terminal = 1e-3;
  st.schedule.horizon_epochs = 500;
  for (int i = 0; i < 500; ++i) {
    w.grad(0, 0) = 2 * (w.value(0, 0) - 3.0);
    adamw_step<double>({&w}, st, i);
  }
  EXPECT_NEAR(w.value(0, 0), 3.0, 1e-2);
}

TEST(AdamW, NonFiniteGradientNamed) {
  TensorBuf<double> w("layer.weight", 1, 2);
  w.grad(0, 1) = std::numeric_limits<double>::quiet_NaN();
  OptimState<double> st;
  try {
    adamw_step<double>({&w}, st, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Numeric);
    EXPECT_NE(std::string(e.what()).find("layer.weight"), std::string::npos);
  }
}

TEST(Checkpoint, RoundTripAndCorruption) {
  BlobMap m;
  m["a"] = Blob::Random(3, 4);
  m["b"] = Blob::Constant(1, 1, 2.5);
  const std::string bytes = encode_checkpoint(m, 0xabcdef);
  std::uint64_t hash = 0;
  const BlobMap back = decode_checkpoint(bytes, &hash);
  EXPECT_EQ(hash, 0xabcdefu);
  EXPECT_EQ(back.at("a"), m.at("a"));
  EXPECT_EQ(back.at("b"), m.at("b"));
  EXPECT_THROW(decode_checkpoint(bytes.substr(0, bytes.size() - 3)), Error);
  EXPECT_THROW(decode_checkpoint("XXXX" + bytes.substr(4)), Error);
}
