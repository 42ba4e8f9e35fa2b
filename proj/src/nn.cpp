#include "clids/nn.hpp"

#include <algorithm>
#include <cmath>

namespace clids::nn {

namespace {

void require(bool ok, ErrorKind kind, const std::string& what) {
  if (!ok) fail(kind, what);
}

template <typename T>
void require_shape(const Tensor<T>& t, const Shape& expected, const char* what) {
  if (t.shape() != expected) {
    fail(ErrorKind::ShapeMismatch, std::string(what) + ": expected " + shape_string(expected) +
                                       ", got " + shape_string(t.shape()));
  }
}

}  // namespace

template <typename T>
T sigmoid(T v) {
  if (v >= T{0}) return T{1} / (T{1} + std::exp(-v));
  const T e = std::exp(v);
  return e / (T{1} + e);
}

// ---------------------------------------------------------------------------
// Conv1D

ConvGeometry conv1d_geometry(std::size_t length, std::size_t width, std::size_t stride,
                             Padding padding) {
  require(width >= 1, ErrorKind::InvalidConfig, "conv1d kernel width must be >= 1");
  require(stride >= 1, ErrorKind::InvalidConfig, "conv1d stride must be >= 1");
  ConvGeometry g;
  if (padding == Padding::Same) {
    const std::size_t out = (length + stride - 1) / stride;
    const std::size_t needed = out == 0 ? 0 : (out - 1) * stride + width;
    const std::size_t total = needed > length ? needed - length : 0;
    g.pad_left = total / 2;
    g.pad_right = total - g.pad_left;
  }
  const std::size_t padded = length + g.pad_left + g.pad_right;
  if (length == 0 || padded < width) {
    fail(ErrorKind::DegenerateInput, "conv1d input length " + std::to_string(length) +
                                         " too short for kernel width " + std::to_string(width));
  }
  g.out_length = (padded - width) / stride + 1;
  return g;
}

namespace {

// Output positions o for which o * stride + k - pad_left lies inside [0, length).
std::pair<std::size_t, std::size_t> conv_tap_range(const ConvGeometry& g, std::size_t length,
                                                   std::size_t stride, std::size_t k) {
  const std::size_t lo = k >= g.pad_left ? 0 : (g.pad_left - k + stride - 1) / stride;
  if (length + g.pad_left < k + 1) return {0, 0};
  const std::size_t hi = std::min(g.out_length, (length - 1 + g.pad_left - k) / stride + 1);
  return {std::min(lo, hi), hi};
}

}  // namespace

template <typename T>
Tensor<T> conv1d_forward(const Tensor<T>& x, const Conv1DParams<T>& p, Conv1DCache<T>* cache) {
  require(p.kernels.rank() == 3, ErrorKind::ShapeMismatch, "conv1d kernels must be rank 3");
  require(x.rank() == 3, ErrorKind::ShapeMismatch,
          "conv1d input must be [batch x channels x length], got " + shape_string(x.shape()));
  const std::size_t out_ch = p.kernels.dim(0), in_ch = p.kernels.dim(1), width = p.kernels.dim(2);
  require(x.dim(1) == in_ch, ErrorKind::ShapeMismatch,
          "conv1d expects " + std::to_string(in_ch) + " input channels, got " +
              std::to_string(x.dim(1)));
  require(p.bias.size() == out_ch, ErrorKind::ShapeMismatch, "conv1d bias length");

  const std::size_t batch = x.dim(0), length = x.dim(2);
  const ConvGeometry g = conv1d_geometry(length, width, p.stride, p.padding);
  const std::size_t out_len = g.out_length;
  auto out = Tensor<T>::zeros({batch, out_ch, out_len});
  auto in = x.data();
  auto w = p.kernels.data();
  auto y = out.data();

  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t oc = 0; oc < out_ch; ++oc) {
      T* yrow = y.data() + (b * out_ch + oc) * out_len;
      for (std::size_t o = 0; o < out_len; ++o) yrow[o] = p.bias[oc];
      for (std::size_t ic = 0; ic < in_ch; ++ic) {
        const T* xrow = in.data() + (b * in_ch + ic) * length;
        for (std::size_t k = 0; k < width; ++k) {
          const T wv = w[(oc * in_ch + ic) * width + k];
          const auto [lo, hi] = conv_tap_range(g, length, p.stride, k);
          for (std::size_t o = lo; o < hi; ++o) yrow[o] += wv * xrow[o * p.stride + k - g.pad_left];
        }
      }
    }
  }
  if (cache) {
    cache->owner = &p;
    cache->input = x;
    cache->out_shape = out.shape();
  }
  return out;
}

template <typename T>
Conv1DGrads<T> conv1d_backward(const Conv1DParams<T>& p, const Conv1DCache<T>& cache,
                               const Tensor<T>& upstream) {
  require(cache.owner == &p, ErrorKind::StaleCache, "conv1d cache does not belong to these params");
  require_shape(upstream, cache.out_shape, "conv1d upstream gradient");
  const Tensor<T>& x = cache.input;
  const std::size_t out_ch = p.kernels.dim(0), in_ch = p.kernels.dim(1), width = p.kernels.dim(2);
  const std::size_t batch = x.dim(0), length = x.dim(2);
  const ConvGeometry g = conv1d_geometry(length, width, p.stride, p.padding);
  const std::size_t out_len = g.out_length;

  Conv1DGrads<T> grads{Tensor<T>::zeros(p.kernels.shape()), Tensor<T>::zeros(p.bias.shape()),
                       Tensor<T>::zeros(x.shape())};
  auto in = x.data();
  auto w = p.kernels.data();
  auto dy = upstream.data();
  auto dw = grads.kernels.data();
  auto dx = grads.input.data();

  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t oc = 0; oc < out_ch; ++oc) {
      const T* dyrow = dy.data() + (b * out_ch + oc) * out_len;
      T bsum{0};
      for (std::size_t o = 0; o < out_len; ++o) bsum += dyrow[o];
      grads.bias[oc] += bsum;
      for (std::size_t ic = 0; ic < in_ch; ++ic) {
        const T* xrow = in.data() + (b * in_ch + ic) * length;
        T* dxrow = dx.data() + (b * in_ch + ic) * length;
        for (std::size_t k = 0; k < width; ++k) {
          const std::size_t widx = (oc * in_ch + ic) * width + k;
          const T wv = w[widx];
          T acc{0};
          const auto [lo, hi] = conv_tap_range(g, length, p.stride, k);
          for (std::size_t o = lo; o < hi; ++o) {
            const std::size_t pos = o * p.stride + k - g.pad_left;
            acc += dyrow[o] * xrow[pos];
            dxrow[pos] += dyrow[o] * wv;
          }
          dw[widx] += acc;
        }
      }
    }
  }
  return grads;
}

// ---------------------------------------------------------------------------
// BatchNorm1D

namespace {

struct BnLayout {
  std::size_t batch, channels, length;
};

template <typename T>
BnLayout bn_layout(const Tensor<T>& x) {
  if (x.rank() == 3) return {x.dim(0), x.dim(1), x.dim(2)};
  if (x.rank() == 2) return {x.dim(0), x.dim(1), 1};
  fail(ErrorKind::ShapeMismatch, "batchnorm1d expects rank 2 or 3 input, got " +
                                     shape_string(x.shape()));
}

template <typename T>
Tensor<T> bn_apply(const Tensor<T>& x, const BatchNorm1DParams<T>& p, Mode mode,
                   const std::vector<T>& mean, std::vector<T> inv_std, BatchNorm1DCache<T>* cache) {
  const BnLayout l = bn_layout(x);
  auto normalized = Tensor<T>::zeros(x.shape());
  auto out = Tensor<T>::zeros(x.shape());
  auto in = x.data();
  auto xn = normalized.data();
  auto y = out.data();
  for (std::size_t b = 0; b < l.batch; ++b) {
    for (std::size_t c = 0; c < l.channels; ++c) {
      const std::size_t base = (b * l.channels + c) * l.length;
      for (std::size_t i = 0; i < l.length; ++i) {
        const T v = (in[base + i] - mean[c]) * inv_std[c];
        xn[base + i] = v;
        y[base + i] = p.gamma[c] * v + p.beta[c];
      }
    }
  }
  if (cache) {
    cache->owner = &p;
    cache->mode = mode;
    cache->normalized = std::move(normalized);
    cache->inv_std = std::move(inv_std);
  }
  return out;
}

template <typename T>
BnLayout bn_checked_layout(const Tensor<T>& x, const BatchNorm1DParams<T>& p) {
  const BnLayout l = bn_layout(x);
  require(p.gamma.size() == l.channels && p.beta.size() == l.channels &&
              p.running_mean.size() == l.channels && p.running_var.size() == l.channels,
          ErrorKind::ShapeMismatch,
          "batchnorm1d parameters do not match " + std::to_string(l.channels) + " channels");
  require(p.epsilon > T{0}, ErrorKind::InvalidConfig, "batchnorm1d epsilon must be positive");
  return l;
}

}  // namespace

template <typename T>
Tensor<T> batchnorm1d_infer(const Tensor<T>& x, const BatchNorm1DParams<T>& p,
                            BatchNorm1DCache<T>* cache) {
  const BnLayout l = bn_checked_layout(x, p);
  std::vector<T> mean(l.channels), inv_std(l.channels);
  for (std::size_t c = 0; c < l.channels; ++c) {
    mean[c] = p.running_mean[c];
    inv_std[c] = T{1} / std::sqrt(p.running_var[c] + p.epsilon);
  }
  return bn_apply(x, p, Mode::Infer, mean, std::move(inv_std), cache);
}

template <typename T>
Tensor<T> batchnorm1d_forward(const Tensor<T>& x, BatchNorm1DParams<T>& p, Mode mode,
                              BatchNorm1DCache<T>* cache) {
  if (mode == Mode::Infer) return batchnorm1d_infer(x, p, cache);
  const BnLayout l = bn_checked_layout(x, p);
  if (l.batch < 2) {
    fail(ErrorKind::DegenerateInput, "batchnorm1d train mode needs a batch of at least 2");
  }
  const std::size_t count = l.batch * l.length;
  std::vector<T> mean(l.channels), inv_std(l.channels);
  auto in = x.data();
  for (std::size_t c = 0; c < l.channels; ++c) {
    T sum{0};
    for (std::size_t b = 0; b < l.batch; ++b) {
      const T* row = in.data() + (b * l.channels + c) * l.length;
      for (std::size_t i = 0; i < l.length; ++i) sum += row[i];
    }
    const T mu = sum / static_cast<T>(count);
    T sq{0};
    for (std::size_t b = 0; b < l.batch; ++b) {
      const T* row = in.data() + (b * l.channels + c) * l.length;
      for (std::size_t i = 0; i < l.length; ++i) sq += (row[i] - mu) * (row[i] - mu);
    }
    const T var = sq / static_cast<T>(count);
    mean[c] = mu;
    inv_std[c] = T{1} / std::sqrt(var + p.epsilon);
    p.running_mean[c] = p.momentum * p.running_mean[c] + (T{1} - p.momentum) * mu;
    p.running_var[c] = p.momentum * p.running_var[c] + (T{1} - p.momentum) * var;
  }
  return bn_apply(x, p, Mode::Train, mean, std::move(inv_std), cache);
}

template <typename T>
BatchNorm1DGrads<T> batchnorm1d_backward(const BatchNorm1DParams<T>& p,
                                         const BatchNorm1DCache<T>& cache,
                                         const Tensor<T>& upstream) {
  require(cache.owner == &p, ErrorKind::StaleCache,
          "batchnorm1d cache does not belong to these params");
  require_shape(upstream, cache.normalized.shape(), "batchnorm1d upstream gradient");
  const BnLayout l = bn_layout(upstream);
  const T count = static_cast<T>(l.batch * l.length);

  BatchNorm1DGrads<T> grads{Tensor<T>::zeros(p.gamma.shape()), Tensor<T>::zeros(p.beta.shape()),
                            Tensor<T>::zeros(upstream.shape())};
  auto dy = upstream.data();
  auto xn = cache.normalized.data();
  auto dx = grads.input.data();

  for (std::size_t c = 0; c < l.channels; ++c) {
    T sum_dy{0}, sum_dy_xn{0};
    for (std::size_t b = 0; b < l.batch; ++b) {
      const std::size_t base = (b * l.channels + c) * l.length;
      for (std::size_t i = 0; i < l.length; ++i) {
        sum_dy += dy[base + i];
        sum_dy_xn += dy[base + i] * xn[base + i];
      }
    }
    grads.gamma[c] = sum_dy_xn;
    grads.beta[c] = sum_dy;
    const T scale = p.gamma[c] * cache.inv_std[c];
    for (std::size_t b = 0; b < l.batch; ++b) {
      const std::size_t base = (b * l.channels + c) * l.length;
      for (std::size_t i = 0; i < l.length; ++i) {
        if (cache.mode == Mode::Train) {
          dx[base + i] = scale * (dy[base + i] - sum_dy / count - xn[base + i] * sum_dy_xn / count);
        } else {
          dx[base + i] = scale * dy[base + i];
        }
      }
    }
  }
  return grads;
}

// ---------------------------------------------------------------------------
// AvgPool1D

template <typename T>
Tensor<T> avgpool1d_forward(const Tensor<T>& x, std::size_t window, AvgPool1DCache* cache) {
  require(window >= 1, ErrorKind::InvalidConfig, "avgpool1d window must be >= 1");
  require(x.rank() == 3, ErrorKind::ShapeMismatch,
          "avgpool1d input must be [batch x channels x length], got " + shape_string(x.shape()));
  const std::size_t rows = x.dim(0) * x.dim(1), length = x.dim(2);
  if (length < window) {
    fail(ErrorKind::DegenerateInput, "avgpool1d length " + std::to_string(length) +
                                         " shorter than window " + std::to_string(window));
  }
  const std::size_t out_len = length / window;
  auto out = Tensor<T>::zeros({x.dim(0), x.dim(1), out_len});
  auto in = x.data();
  auto y = out.data();
  // Incremental mean: a constant window reproduces the constant exactly,
  // which sum / window does not.
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t o = 0; o < out_len; ++o) {
      const T* w = &in[r * length + o * window];
      T mean = w[0];
      for (std::size_t k = 1; k < window; ++k) mean += (w[k] - mean) / static_cast<T>(k + 1);
      y[r * out_len + o] = mean;
    }
  }
  if (cache) {
    cache->filled = true;
    cache->in_shape = x.shape();
    cache->out_shape = out.shape();
    cache->window = window;
  }
  return out;
}

template <typename T>
Tensor<T> avgpool1d_backward(const AvgPool1DCache& cache, const Tensor<T>& upstream) {
  require(cache.filled, ErrorKind::StaleCache, "avgpool1d cache is empty");
  require_shape(upstream, cache.out_shape, "avgpool1d upstream gradient");
  auto dx = Tensor<T>::zeros(cache.in_shape);
  const std::size_t rows = cache.in_shape[0] * cache.in_shape[1];
  const std::size_t length = cache.in_shape[2], out_len = cache.out_shape[2];
  const T inv = T{1} / static_cast<T>(cache.window);
  auto d = dx.data();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t o = 0; o < out_len; ++o) {
      const T g = upstream[r * out_len + o] * inv;
      for (std::size_t k = 0; k < cache.window; ++k) d[r * length + o * cache.window + k] = g;
    }
  }
  return dx;
}

// ---------------------------------------------------------------------------
// Dense

template <typename T>
Tensor<T> dense_forward(const Tensor<T>& x, const DenseParams<T>& p, DenseCache<T>* cache) {
  require(x.rank() == 2, ErrorKind::ShapeMismatch,
          "dense input must be [batch x features], got " + shape_string(x.shape()));
  require(p.weights.rank() == 2 && p.weights.dim(0) == x.dim(1), ErrorKind::ShapeMismatch,
          "dense weights " + shape_string(p.weights.shape()) + " for input " +
              shape_string(x.shape()));
  auto out = add_row_vector(matmul(x, p.weights), p.bias);
  if (cache) {
    cache->owner = &p;
    cache->input = x;
  }
  return out;
}

template <typename T>
DenseGrads<T> dense_backward(const DenseParams<T>& p, const DenseCache<T>& cache,
                             const Tensor<T>& upstream) {
  require(cache.owner == &p, ErrorKind::StaleCache, "dense cache does not belong to these params");
  require_shape(upstream, {cache.input.dim(0), p.weights.dim(1)}, "dense upstream gradient");
  DenseGrads<T> grads;
  grads.weights = matmul_at(cache.input, upstream);
  grads.bias = reduce(upstream, 0, Reduction::Sum);
  grads.input = matmul_bt(upstream, p.weights);
  return grads;
}

// ---------------------------------------------------------------------------
// Activations

template <typename T>
Tensor<T> activation_forward(const Tensor<T>& x, Activation kind, ActivationCache<T>* cache) {
  Tensor<T> out = x;
  auto y = out.data();
  switch (kind) {
    case Activation::ReLU:
      for (auto& v : y) v = v > T{0} ? v : T{0};
      break;
    case Activation::Sigmoid:
      for (auto& v : y) v = sigmoid(v);
      break;
    case Activation::Tanh:
      for (auto& v : y) v = std::tanh(v);
      break;
    case Activation::Softmax: {
      require(x.rank() >= 1, ErrorKind::ShapeMismatch, "softmax of an empty tensor");
      const std::size_t n = x.shape().back();
      for (std::size_t r = 0; r < x.size() / n; ++r) {
        T* row = y.data() + r * n;
        const T mx = *std::max_element(row, row + n);
        T sum{0};
        for (std::size_t j = 0; j < n; ++j) {
          row[j] = std::exp(row[j] - mx);
          sum += row[j];
        }
        for (std::size_t j = 0; j < n; ++j) row[j] /= sum;
      }
      break;
    }
  }
  if (cache) {
    cache->filled = true;
    cache->kind = kind;
    cache->input = x;
    cache->output = out;
  }
  return out;
}

template <typename T>
Tensor<T> activation_backward(const ActivationCache<T>& cache, const Tensor<T>& upstream) {
  require(cache.filled, ErrorKind::StaleCache, "activation cache is empty");
  require_shape(upstream, cache.output.shape(), "activation upstream gradient");
  Tensor<T> dx = upstream;
  auto d = dx.data();
  auto x = cache.input.data();
  auto y = cache.output.data();
  switch (cache.kind) {
    case Activation::ReLU:
      for (std::size_t i = 0; i < d.size(); ++i) d[i] = x[i] > T{0} ? d[i] : T{0};
      break;
    case Activation::Sigmoid:
      for (std::size_t i = 0; i < d.size(); ++i) d[i] *= y[i] * (T{1} - y[i]);
      break;
    case Activation::Tanh:
      for (std::size_t i = 0; i < d.size(); ++i) d[i] *= T{1} - y[i] * y[i];
      break;
    case Activation::Softmax: {
      const std::size_t n = upstream.shape().back();
      for (std::size_t r = 0; r < d.size() / n; ++r) {
        T dot{0};
        for (std::size_t j = 0; j < n; ++j) dot += upstream[r * n + j] * y[r * n + j];
        for (std::size_t j = 0; j < n; ++j) d[r * n + j] = y[r * n + j] * (upstream[r * n + j] - dot);
      }
      break;
    }
  }
  return dx;
}

// ---------------------------------------------------------------------------
// LSTM

template <typename T>
Tensor<T> lstm_forward(const Tensor<T>& x, const LSTMParams<T>& p, LstmOutput output,
                       LSTMCache<T>* cache) {
  const std::size_t H = p.hidden;
  require(H >= 1, ErrorKind::InvalidConfig, "lstm hidden size must be >= 1");
  require(x.rank() == 3, ErrorKind::ShapeMismatch,
          "lstm input must be [batch x steps x features], got " + shape_string(x.shape()));
  const std::size_t batch = x.dim(0), steps = x.dim(1), in_dim = x.dim(2);
  require(p.input_kernel.shape() == Shape{in_dim, 4 * H}, ErrorKind::ShapeMismatch,
          "lstm input kernel " + shape_string(p.input_kernel.shape()) + " for input " +
              shape_string(x.shape()));
  require(p.recurrent_kernel.shape() == Shape{H, 4 * H}, ErrorKind::ShapeMismatch,
          "lstm recurrent kernel " + shape_string(p.recurrent_kernel.shape()));
  require(p.bias.size() == 4 * H, ErrorKind::ShapeMismatch, "lstm bias length");

  // Input projections for every (batch, step) row at once.
  const Tensor<T> xw = matmul(x.reshape({batch * steps, in_dim}), p.input_kernel);

  auto gates = Tensor<T>::zeros({steps, batch, 4 * H});
  auto cells = Tensor<T>::zeros({steps + 1, batch, H});
  auto hidden = Tensor<T>::zeros({steps + 1, batch, H});
  std::vector<T> z(batch * 4 * H);

  for (std::size_t t = 0; t < steps; ++t) {
    std::span<const T> h_prev = hidden.data().subspan(t * batch * H, batch * H);
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t j = 0; j < 4 * H; ++j) {
        z[b * 4 * H + j] = xw[(b * steps + t) * 4 * H + j] + p.bias[j];
      }
    }
    gemm<T>(false, false, batch, 4 * H, H, h_prev, p.recurrent_kernel.data(), z, true);

    T* gt = gates.data().data() + t * batch * 4 * H;
    const T* c_prev = cells.data().data() + t * batch * H;
    T* c_next = cells.data().data() + (t + 1) * batch * H;
    T* h_next = hidden.data().data() + (t + 1) * batch * H;
    for (std::size_t b = 0; b < batch; ++b) {
      const T* zb = z.data() + b * 4 * H;
      T* gb = gt + b * 4 * H;
      for (std::size_t j = 0; j < H; ++j) {
        const T i = sigmoid(zb[j]);
        const T f = sigmoid(zb[H + j]);
        const T g = std::tanh(zb[2 * H + j]);
        const T o = sigmoid(zb[3 * H + j]);
        gb[j] = i;
        gb[H + j] = f;
        gb[2 * H + j] = g;
        gb[3 * H + j] = o;
        const T c = f * c_prev[b * H + j] + i * g;
        c_next[b * H + j] = c;
        h_next[b * H + j] = o * std::tanh(c);
      }
    }
  }

  Tensor<T> out;
  if (output == LstmOutput::Last) {
    auto last = hidden.data().subspan(steps * batch * H, batch * H);
    out = Tensor<T>({batch, H}, std::vector<T>(last.begin(), last.end()));
  } else {
    std::vector<T> seq(batch * steps * H);
    for (std::size_t t = 0; t < steps; ++t) {
      for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t j = 0; j < H; ++j) {
          seq[(b * steps + t) * H + j] = hidden[((t + 1) * batch + b) * H + j];
        }
      }
    }
    out = Tensor<T>({batch, steps, H}, std::move(seq));
  }
  if (cache) {
    cache->owner = &p;
    cache->output = output;
    cache->input = x;
    cache->gates = std::move(gates);
    cache->cells = std::move(cells);
    cache->hidden = std::move(hidden);
  }
  return out;
}

template <typename T>
LSTMGrads<T> lstm_backward(const LSTMParams<T>& p, const LSTMCache<T>& cache,
                           const Tensor<T>& upstream) {
  require(cache.owner == &p, ErrorKind::StaleCache, "lstm cache does not belong to these params");
  const std::size_t H = p.hidden;
  const std::size_t batch = cache.input.dim(0), steps = cache.input.dim(1),
                    in_dim = cache.input.dim(2);
  if (cache.output == LstmOutput::Last) {
    require_shape(upstream, {batch, H}, "lstm upstream gradient");
  } else {
    require_shape(upstream, {batch, steps, H}, "lstm upstream gradient");
  }

  LSTMGrads<T> grads{Tensor<T>::zeros(p.input_kernel.shape()),
                     Tensor<T>::zeros(p.recurrent_kernel.shape()), Tensor<T>::zeros(p.bias.shape()),
                     Tensor<T>()};
  auto dz_all = Tensor<T>::zeros({batch * steps, 4 * H});
  std::vector<T> dh(batch * H, T{0}), dc(batch * H, T{0}), dz(batch * 4 * H);

  for (std::size_t t = steps; t-- > 0;) {
    if (cache.output == LstmOutput::Sequence) {
      for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t j = 0; j < H; ++j) dh[b * H + j] += upstream[(b * steps + t) * H + j];
      }
    } else if (t == steps - 1) {
      for (std::size_t i = 0; i < batch * H; ++i) dh[i] += upstream[i];
    }
    const T* gt = cache.gates.data().data() + t * batch * 4 * H;
    const T* c_prev = cache.cells.data().data() + t * batch * H;
    const T* c_cur = cache.cells.data().data() + (t + 1) * batch * H;
    for (std::size_t b = 0; b < batch; ++b) {
      const T* gb = gt + b * 4 * H;
      T* dzb = dz.data() + b * 4 * H;
      for (std::size_t j = 0; j < H; ++j) {
        const T i = gb[j], f = gb[H + j], g = gb[2 * H + j], o = gb[3 * H + j];
        const T tc = std::tanh(c_cur[b * H + j]);
        const T dhv = dh[b * H + j];
        const T dcv = dc[b * H + j] + dhv * o * (T{1} - tc * tc);
        dzb[j] = dcv * g * i * (T{1} - i);
        dzb[H + j] = dcv * c_prev[b * H + j] * f * (T{1} - f);
        dzb[2 * H + j] = dcv * i * (T{1} - g * g);
        dzb[3 * H + j] = dhv * tc * o * (T{1} - o);
        dc[b * H + j] = dcv * f;
      }
      std::copy(dzb, dzb + 4 * H, dz_all.data().data() + (b * steps + t) * 4 * H);
    }
    std::span<const T> h_prev = cache.hidden.data().subspan(t * batch * H, batch * H);
    gemm<T>(true, false, H, 4 * H, batch, h_prev, dz, grads.recurrent_kernel.data(), true);
    gemm<T>(false, true, batch, H, 4 * H, dz, p.recurrent_kernel.data(), dh, false);
  }

  grads.bias = reduce(dz_all, 0, Reduction::Sum);
  const Tensor<T> x2 = cache.input.reshape({batch * steps, in_dim});
  grads.input_kernel = matmul_at(x2, dz_all);
  grads.input = matmul_bt(dz_all, p.input_kernel).reshape({batch, steps, in_dim});
  return grads;
}

// ---------------------------------------------------------------------------
// Loss

template <typename T>
T categorical_cross_entropy(const Tensor<T>& probs, const Tensor<T>& labels) {
  require(probs.rank() == 2 && probs.shape() == labels.shape(), ErrorKind::ShapeMismatch,
          "cross entropy of " + shape_string(probs.shape()) + " against " +
              shape_string(labels.shape()));
  T total{0};
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (labels[i] != T{0}) total -= labels[i] * std::log(probs[i]);
  }
  return total / static_cast<T>(probs.dim(0));
}

template <typename T>
std::pair<T, Tensor<T>> softmax_cross_entropy(const Tensor<T>& logits, const Tensor<T>& labels) {
  require(logits.rank() == 2 && logits.shape() == labels.shape(), ErrorKind::ShapeMismatch,
          "cross entropy of " + shape_string(logits.shape()) + " against " +
              shape_string(labels.shape()));
  const std::size_t rows = logits.dim(0), n = logits.dim(1);
  const T inv_rows = T{1} / static_cast<T>(rows);
  Tensor<T> grad = Tensor<T>::zeros(logits.shape());
  T total{0};
  for (std::size_t r = 0; r < rows; ++r) {
    const T* z = logits.data().data() + r * n;
    const T mx = *std::max_element(z, z + n);
    T sum{0};
    for (std::size_t j = 0; j < n; ++j) sum += std::exp(z[j] - mx);
    const T lse = mx + std::log(sum);
    for (std::size_t j = 0; j < n; ++j) {
      const T y = labels[r * n + j];
      const T prob = std::exp(z[j] - lse);
      if (y != T{0}) total -= y * (z[j] - lse);
      grad[r * n + j] = (prob - y) * inv_rows;
    }
  }
  return {total * inv_rows, std::move(grad)};
}

#define CLIDS_INSTANTIATE(T)                                                                   \
  template T sigmoid<T>(T);                                                                    \
  template Tensor<T> conv1d_forward<T>(const Tensor<T>&, const Conv1DParams<T>&,               \
                                       Conv1DCache<T>*);                                       \
  template Conv1DGrads<T> conv1d_backward<T>(const Conv1DParams<T>&, const Conv1DCache<T>&,    \
                                             const Tensor<T>&);                                \
  template Tensor<T> batchnorm1d_forward<T>(const Tensor<T>&, BatchNorm1DParams<T>&, Mode,     \
                                            BatchNorm1DCache<T>*);                             \
  template Tensor<T> batchnorm1d_infer<T>(const Tensor<T>&, const BatchNorm1DParams<T>&,       \
                                          BatchNorm1DCache<T>*);                               \
  template BatchNorm1DGrads<T> batchnorm1d_backward<T>(                                        \
      const BatchNorm1DParams<T>&, const BatchNorm1DCache<T>&, const Tensor<T>&);              \
  template Tensor<T> avgpool1d_forward<T>(const Tensor<T>&, std::size_t, AvgPool1DCache*);     \
  template Tensor<T> avgpool1d_backward<T>(const AvgPool1DCache&, const Tensor<T>&);           \
  template Tensor<T> dense_forward<T>(const Tensor<T>&, const DenseParams<T>&, DenseCache<T>*); \
  template DenseGrads<T> dense_backward<T>(const DenseParams<T>&, const DenseCache<T>&,        \
                                           const Tensor<T>&);                                  \
  template Tensor<T> activation_forward<T>(const Tensor<T>&, Activation, ActivationCache<T>*); \
  template Tensor<T> activation_backward<T>(const ActivationCache<T>&, const Tensor<T>&);      \
  template Tensor<T> lstm_forward<T>(const Tensor<T>&, const LSTMParams<T>&, LstmOutput,       \
                                     LSTMCache<T>*);                                           \
  template LSTMGrads<T> lstm_backward<T>(const LSTMParams<T>&, const LSTMCache<T>&,            \
                                         const Tensor<T>&);                                    \
  template T categorical_cross_entropy<T>(const Tensor<T>&, const Tensor<T>&);                 \
  template std::pair<T, Tensor<T>> softmax_cross_entropy<T>(const Tensor<T>&, const Tensor<T>&);

CLIDS_INSTANTIATE(float)
CLIDS_INSTANTIATE(double)
#undef CLIDS_INSTANTIATE

}  // namespace clids::nn
