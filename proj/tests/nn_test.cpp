#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "clids/error.hpp"
#include "clids/nn.hpp"
#include "support/oracles.hpp"

using namespace clids;
using namespace clids::nn;

namespace {

template <typename F>
ErrorKind kind_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "expected a clids::Error";
  return ErrorKind::IoError;
}

Conv1DParams<double> single_kernel(std::vector<double> k, Padding pad, std::size_t stride = 1) {
  const std::size_t w = k.size();
  return {Tensor<double>({1, 1, w}, std::move(k)), Tensor<double>({1}, {0.0}), stride, pad};
}

Tensor<double> row(std::vector<double> v) {
  const std::size_t n = v.size();
  return Tensor<double>({1, 1, n}, std::move(v));
}

BatchNorm1DParams<double> unit_bn(std::size_t ch) {
  return {Tensor<double>::filled({ch}, 1.0), Tensor<double>::zeros({ch}), Tensor<double>::zeros({ch}),
          Tensor<double>::filled({ch}, 1.0)};
}

}  // namespace

// conv1d

TEST(Conv1D, IdentityKernel) {
  const auto y = conv1d_forward(row({5, 7, 9}), single_kernel({1}, Padding::Valid));
  EXPECT_EQ(y.values(), (std::vector<double>{5, 7, 9}));
}

TEST(Conv1D, DifferenceKernel) {
  const auto y = conv1d_forward(row({1, 2, 3, 4}), single_kernel({1, 0, -1}, Padding::Valid));
  EXPECT_EQ(y.values(), (std::vector<double>{-2, -2}));
}

TEST(Conv1D, TooShortForValidIsDegenerate) {
  EXPECT_EQ(kind_of([] { conv1d_forward(row({1, 2}), single_kernel({1, 1, 1}, Padding::Valid)); }),
            ErrorKind::DegenerateInput);
}

TEST(Conv1D, ChannelMismatch) {
  const Tensor<double> x({1, 2, 4}, std::vector<double>(8, 1.0));
  EXPECT_EQ(kind_of([&] { conv1d_forward(x, single_kernel({1, 1}, Padding::Same)); }),
            ErrorKind::ShapeMismatch);
}

TEST(Conv1D, SamePaddingPutsExtraZeroOnTheRight) {
  // Width 2, stride 1: one pad element total, placed after the row.
  const auto y = conv1d_forward(row({1, 2, 3}), single_kernel({1, 10}, Padding::Same));
  EXPECT_EQ(y.values(), (std::vector<double>{21, 32, 3}));
}

TEST(Conv1D, OutputLengthFormulaSweep) {
  for (std::size_t len = 1; len <= 30; ++len)
    for (std::size_t w = 1; w <= 7; ++w)
      for (std::size_t s = 1; s <= 4; ++s)
        for (Padding pad : {Padding::Same, Padding::Valid}) {
          const std::size_t total = pad == Padding::Same ? std::max<long>(0, long(((len + s - 1) / s - 1) * s + w) - long(len)) : 0;
          if (len + total < w) {
            EXPECT_EQ(kind_of([&] { (void)conv1d_geometry(len, w, s, pad); }), ErrorKind::DegenerateInput);
            continue;
          }
          const auto g = conv1d_geometry(len, w, s, pad);
          EXPECT_EQ(g.pad_left + g.pad_right, total);
          EXPECT_EQ(g.out_length, (len + total - w) / s + 1) << len << ' ' << w << ' ' << s;
          if (pad == Padding::Same) {
            EXPECT_EQ(g.out_length, (len + s - 1) / s);
          }
          const auto y = conv1d_forward(Tensor<double>::filled({1, 1, len}, 1.0),
                                        single_kernel(std::vector<double>(w, 1.0), pad, s));
          EXPECT_EQ(y.dim(2), g.out_length);
        }
}

TEST(Conv1D, MatchesNaiveSlidingWindow) {
  std::mt19937_64 gen(3);
  for (int rep = 0; rep < 100; ++rep) {
    std::uniform_int_distribution<std::size_t> d(1, 5);
    oracle::Conv c{d(gen), d(gen), d(gen) + 5, d(gen), d(gen), d(gen) % 3 + 1, rep % 2 == 0};
    const auto x = oracle::uniform_vector(gen, c.batch * c.in_ch * c.length);
    const auto k = oracle::uniform_vector(gen, c.out_ch * c.in_ch * c.width);
    const auto b = oracle::uniform_vector(gen, c.out_ch);
    Conv1DParams<double> p{Tensor<double>({c.out_ch, c.in_ch, c.width}, k), Tensor<double>({c.out_ch}, b),
                           c.stride, c.same ? Padding::Same : Padding::Valid};
    const auto y = conv1d_forward(Tensor<double>({c.batch, c.in_ch, c.length}, x), p);
    EXPECT_LT(oracle::max_abs_diff(y.values(), oracle::conv1d(c, x, k, b)), 1e-12);
  }
}

TEST(Conv1D, BackwardRejectsForeignCache) {
  auto p = single_kernel({1, 2}, Padding::Same);
  auto q = p;
  Conv1DCache<double> cache;
  const auto y = conv1d_forward(row({1, 2, 3}), p, &cache);
  EXPECT_EQ(kind_of([&] { conv1d_backward(q, cache, y); }), ErrorKind::StaleCache);
  EXPECT_EQ(kind_of([&] { conv1d_backward(p, Conv1DCache<double>{}, y); }), ErrorKind::StaleCache);
  EXPECT_EQ(kind_of([&] { conv1d_backward(p, cache, row({1, 2})); }), ErrorKind::ShapeMismatch);
}

// batchnorm

TEST(BatchNorm1D, InferIdentityConfiguration) {
  auto p = unit_bn(2);
  const Tensor<double> x({2, 2, 3}, {1, -2, 3, 0.5, 7, -1, 2, 2, 2, -3, 0, 4});
  const auto y = batchnorm1d_forward(x, p, Mode::Infer);
  const double s = 1.0 / std::sqrt(1.0 + 1e-5);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(y[i], x[i] * s, 1e-15);
}

TEST(BatchNorm1D, ConstantChannelGivesBeta) {
  auto p = unit_bn(1);
  p.beta[0] = 0.75;
  const auto y = batchnorm1d_forward(Tensor<double>::filled({4, 1, 3}, 2.5), p, Mode::Train);
  for (double v : y.values()) EXPECT_DOUBLE_EQ(v, 0.75);
}

TEST(BatchNorm1D, PlusMinusOneBatch) {
  auto p = unit_bn(1);
  const auto y = batchnorm1d_forward(Tensor<double>({2, 1}, {-1, 1}), p, Mode::Train);
  const double s = 1.0 / std::sqrt(1.0 + 1e-5);
  EXPECT_NEAR(y[0], -s, 1e-15);
  EXPECT_NEAR(y[1], s, 1e-15);
  EXPECT_NEAR(y[0], -1.0, 1e-5);
}

TEST(BatchNorm1D, TrainNeedsTwoRows) {
  auto p = unit_bn(1);
  EXPECT_EQ(kind_of([&] { batchnorm1d_forward(Tensor<double>({1, 1, 3}, {1, 2, 3}), p, Mode::Train); }),
            ErrorKind::DegenerateInput);
}

TEST(BatchNorm1D, RunningStatisticsUseMomentum) {
  auto p = unit_bn(1);
  batchnorm1d_forward(Tensor<double>({4, 1}, {1, 3, 5, 7}), p, Mode::Train);
  // batch mean 4, biased variance 5
  EXPECT_NEAR(p.running_mean[0], 0.9 * 0.0 + 0.1 * 4.0, 1e-15);
  EXPECT_NEAR(p.running_var[0], 0.9 * 1.0 + 0.1 * 5.0, 1e-15);
  const auto before = p.running_mean;
  batchnorm1d_forward(Tensor<double>({4, 1}, {1, 3, 5, 7}), p, Mode::Infer);
  EXPECT_EQ(p.running_mean, before);
}

TEST(BatchNorm1D, TrainOutputIsStandardizedPerChannel) {
  std::mt19937_64 gen(9);
  for (std::size_t batch : {16u, 33u}) {
    const std::size_t C = 3, L = 5;
    auto x = oracle::uniform_vector(gen, batch * C * L, -4.0, 9.0);
    auto p = unit_bn(C);
    const auto y = batchnorm1d_forward(Tensor<double>({batch, C, L}, x), p, Mode::Train);
    for (std::size_t c = 0; c < C; ++c) {
      double m = 0, v = 0;
      const double n = double(batch * L);
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t t = 0; t < L; ++t) m += y.at(b, c, t);
      m /= n;
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t t = 0; t < L; ++t) v += (y.at(b, c, t) - m) * (y.at(b, c, t) - m);
      v /= n;
      EXPECT_NEAR(m, 0.0, 1e-3);
      EXPECT_NEAR(v, 1.0, 1e-3);
    }
  }
}

// avgpool

TEST(AvgPool1D, HandExample) {
  EXPECT_EQ(avgpool1d_forward(row({2, 4, 6, 8}), 2).values(), (std::vector<double>{3, 7}));
}

TEST(AvgPool1D, RemainderDropped) {
  const auto y = avgpool1d_forward(row({1, 2, 3}), 2);
  EXPECT_EQ(y.shape(), (Shape{1, 1, 1}));
  EXPECT_EQ(y[0], 1.5);
}

TEST(AvgPool1D, ConstantIsExact) {
  for (std::size_t w = 1; w <= 6; ++w) {
    const auto y = avgpool1d_forward(Tensor<double>::filled({2, 3, 13}, 0.3), w);
    for (double v : y.values()) EXPECT_EQ(v, 0.3);
  }
}

TEST(AvgPool1D, ShortInputIsDegenerate) {
  EXPECT_EQ(kind_of([] { avgpool1d_forward(row({1, 2}), 3); }), ErrorKind::DegenerateInput);
}

// dense

TEST(Dense, ZeroWeights) {
  DenseParams<double> p{Tensor<double>::zeros({3, 2}), Tensor<double>({2}, {1, 2})};
  const auto y = dense_forward(Tensor<double>({2, 3}, {1, 2, 3, 4, 5, 6}), p);
  EXPECT_EQ(y.values(), (std::vector<double>{1, 2, 1, 2}));
}

TEST(Dense, IdentityWeights) {
  DenseParams<double> p{Tensor<double>({2, 2}, {1, 0, 0, 1}), Tensor<double>::zeros({2})};
  const Tensor<double> x({2, 2}, {3, -1, 0.5, 8});
  EXPECT_EQ(dense_forward(x, p), x);
}

TEST(Dense, HandDotProduct) {
  DenseParams<double> p{Tensor<double>({2, 1}, {1, 1}), Tensor<double>({1}, {0.5})};
  EXPECT_EQ(dense_forward(Tensor<double>({1, 2}, {1, 2}), p).values(), (std::vector<double>{3.5}));
}

TEST(Dense, WidthMismatch) {
  DenseParams<double> p{Tensor<double>::zeros({3, 2}), Tensor<double>::zeros({2})};
  EXPECT_EQ(kind_of([&] { dense_forward(Tensor<double>::zeros({1, 2}), p); }), ErrorKind::ShapeMismatch);
}

TEST(Dense, ZeroUpstreamGivesZeroGradients) {
  std::mt19937_64 gen(4);
  DenseParams<double> p{Tensor<double>({3, 2}, oracle::uniform_vector(gen, 6)),
                        Tensor<double>({2}, oracle::uniform_vector(gen, 2))};
  DenseCache<double> cache;
  dense_forward(Tensor<double>({4, 3}, oracle::uniform_vector(gen, 12)), p, &cache);
  const auto g = dense_backward(p, cache, Tensor<double>::zeros({4, 2}));
  for (const auto* t : {&g.weights, &g.bias, &g.input})
    for (double v : t->values()) EXPECT_EQ(v, 0.0);
}

// activations

TEST(Activation, SoftmaxOfZerosIsUniform) {
  const auto y = activation_forward(Tensor<double>::zeros({1, 2}), Activation::Softmax);
  EXPECT_EQ(y.values(), (std::vector<double>{0.5, 0.5}));
}

TEST(Activation, ReluAtSignBoundaries) {
  const auto y = activation_forward(Tensor<double>({3}, {-1, 0, 2}), Activation::ReLU);
  EXPECT_EQ(y.values(), (std::vector<double>{0, 0, 2}));
}

TEST(Activation, SigmoidOfZero) {
  EXPECT_EQ(sigmoid(0.0), 0.5);
  EXPECT_EQ(activation_forward(Tensor<float>({1}, {0.0f}), Activation::Sigmoid)[0], 0.5f);
  EXPECT_NEAR(sigmoid(-800.0), 0.0, 1e-300);
  EXPECT_EQ(sigmoid(800.0), 1.0);
}

TEST(Activation, ReluBackward) {
  ActivationCache<double> cache;
  activation_forward(Tensor<double>({2}, {2, -2}), Activation::ReLU, &cache);
  const auto g = activation_backward(cache, Tensor<double>({2}, {1, 1}));
  EXPECT_EQ(g.values(), (std::vector<double>{1, 0}));
}

TEST(Activation, SoftmaxRowsAreDistributions) {
  std::mt19937_64 gen(8);
  for (int rep = 0; rep < 100; ++rep) {
    const auto x = oracle::uniform_vector(gen, 4 * 5, -50.0, 50.0);
    const auto y = activation_forward(Tensor<float>({4, 5}, std::vector<float>(x.begin(), x.end())),
                                      Activation::Softmax);
    for (std::size_t r = 0; r < 4; ++r) {
      double s = 0;
      for (std::size_t c = 0; c < 5; ++c) {
        s += y.at(r, c);
        EXPECT_GE(y.at(r, c), 0.0f);
        EXPECT_LE(y.at(r, c), 1.0f);
      }
      EXPECT_NEAR(s, 1.0, 1e-6);
    }
  }
  // Moderate logits stay strictly inside (0, 1).
  const auto y = activation_forward(Tensor<double>({1, 3}, {-3, 0, 4}), Activation::Softmax);
  for (double v : y.values()) {
    EXPECT_GT(v, 0.0);
    EXPECT_LT(v, 1.0);
  }
}

TEST(Activation, SoftmaxShiftInvariant) {
  const auto a = activation_forward(Tensor<double>({1, 2}, {0.3, -1.2}), Activation::Softmax);
  const auto b = activation_forward(Tensor<double>({1, 2}, {100.3, 98.8}), Activation::Softmax);
  EXPECT_NEAR(a[0], b[0], 1e-12);
  EXPECT_NEAR(a[1], b[1], 1e-12);
}

// lstm

LSTMParams<double> zero_lstm(std::size_t in, std::size_t hidden) {
  return {Tensor<double>::zeros({in, 4 * hidden}), Tensor<double>::zeros({hidden, 4 * hidden}),
          Tensor<double>::zeros({4 * hidden}), hidden};
}

TEST(LSTM, ZeroWeightsStayAtZero) {
  const auto p = zero_lstm(2, 3);
  const auto y = lstm_forward(Tensor<double>::filled({2, 5, 2}, 0.7), p, LstmOutput::Sequence);
  EXPECT_EQ(y.shape(), (Shape{2, 5, 3}));
  for (double v : y.values()) EXPECT_EQ(v, 0.0);
}

TEST(LSTM, SingleStepHandValue) {
  auto p = zero_lstm(1, 1);
  p.input_kernel[static_cast<std::size_t>(Gate::Cell)] = 1.0;
  const auto y = lstm_forward(Tensor<double>({1, 1, 1}, {1.0}), p, LstmOutput::Last);
  const double c = 0.5 * std::tanh(1.0);
  EXPECT_NEAR(c, 0.3808, 1e-4);
  EXPECT_NEAR(y[0], 0.5 * std::tanh(c), 1e-15);
  EXPECT_NEAR(y[0], 0.1817, 1e-4);  // 0.18170; a rounded 0.1818 is 1e-4 off
  EXPECT_NEAR(y[0], 0.1818, 2e-4);
}

TEST(LSTM, EmptySequenceAndBadRank) {
  EXPECT_EQ(kind_of([] { Tensor<double>::zeros({1, 0, 1}); }), ErrorKind::ShapeMismatch);
  const auto p = zero_lstm(1, 2);
  EXPECT_EQ(kind_of([&] { lstm_forward(Tensor<double>::zeros({1, 3}), p, LstmOutput::Last); }),
            ErrorKind::ShapeMismatch);
  EXPECT_EQ(kind_of([&] { lstm_forward(Tensor<double>::zeros({1, 3, 2}), p, LstmOutput::Last); }),
            ErrorKind::ShapeMismatch);
}

TEST(LSTM, LastEqualsFinalStepOfSequence) {
  std::mt19937_64 gen(12);
  for (int rep = 0; rep < 30; ++rep) {
    const std::size_t B = 3, T = 1 + rep % 7, I = 2, H = 4;
    LSTMParams<float> p;
    auto conv = [](std::vector<double> v) { return std::vector<float>(v.begin(), v.end()); };
    p.input_kernel = Tensor<float>({I, 4 * H}, conv(oracle::uniform_vector(gen, I * 4 * H)));
    p.recurrent_kernel = Tensor<float>({H, 4 * H}, conv(oracle::uniform_vector(gen, H * 4 * H)));
    p.bias = Tensor<float>({4 * H}, conv(oracle::uniform_vector(gen, 4 * H)));
    p.hidden = H;
    const Tensor<float> x({B, T, I}, conv(oracle::uniform_vector(gen, B * T * I)));
    const auto seq = lstm_forward(x, p, LstmOutput::Sequence);
    const auto last = lstm_forward(x, p, LstmOutput::Last);
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t h = 0; h < H; ++h) EXPECT_EQ(last.at(b, h), seq.at(b, T - 1, h));
  }
}

TEST(LSTM, MatchesPerStepReference) {
  std::mt19937_64 gen(13);
  for (int rep = 0; rep < 50; ++rep) {
    const std::size_t B = 2, T = 6, I = 3, H = 5;
    const auto x = oracle::uniform_vector(gen, B * T * I);
    const auto wx = oracle::uniform_vector(gen, I * 4 * H);
    const auto wh = oracle::uniform_vector(gen, H * 4 * H);
    const auto b = oracle::uniform_vector(gen, 4 * H);
    LSTMParams<double> p{Tensor<double>({I, 4 * H}, wx), Tensor<double>({H, 4 * H}, wh),
                         Tensor<double>({4 * H}, b), H};
    const auto y = lstm_forward(Tensor<double>({B, T, I}, x), p, LstmOutput::Sequence);
    EXPECT_LT(oracle::max_abs_diff(y.values(), oracle::lstm(B, T, I, H, x, wx, wh, b)), 1e-12);
  }
}

// losses

TEST(Loss, CrossEntropyValues) {
  const Tensor<double> labels({2, 2}, {1, 0, 0, 1});
  EXPECT_EQ(categorical_cross_entropy(labels, labels), 0.0);
  EXPECT_NEAR(categorical_cross_entropy(Tensor<double>::filled({2, 2}, 0.5), labels), std::log(2.0), 1e-15);
  const auto [loss, grad] = softmax_cross_entropy(Tensor<double>::zeros({2, 2}), labels);
  EXPECT_NEAR(loss, 0.6931471805599453, 1e-15);
  EXPECT_EQ(grad.values(), (std::vector<double>{-0.25, 0.25, 0.25, -0.25}));
}

TEST(Loss, GradientShapeChecked) {
  EXPECT_EQ(kind_of([] { softmax_cross_entropy(Tensor<double>::zeros({2, 2}), Tensor<double>::zeros({3, 2})); }),
            ErrorKind::ShapeMismatch);
}
