#pragma once

#include <cstddef>
#include <utility>

#include "clids/tensor.hpp"

// Hand-derived forward/backward kernels for every layer in the network.
//
// Every forward function optionally fills a cache; the matching backward
// takes the same params, that cache and the gradient of the loss with respect
// to the layer output, and returns gradients for the input and every
// parameter. A cache filled against a different params object, or not filled
// at all, is rejected with StaleCache.
//
// Layouts: sequences for Conv1D/BatchNorm1D/AvgPool1D are [batch x channels x
// length]; LSTM inputs are [batch x steps x features].

namespace clids::nn {

enum class Mode { Train, Infer };
enum class Padding { Same, Valid };
enum class Activation { ReLU, Sigmoid, Tanh, Softmax };
enum class LstmOutput { Sequence, Last };

// ---------------------------------------------------------------------------
// Conv1D

template <typename T>
struct Conv1DParams {
  Tensor<T> kernels;  // [out_channels x in_channels x kernel_width]
  Tensor<T> bias;     // [out_channels]
  std::size_t stride = 1;
  Padding padding = Padding::Same;
};

template <typename T>
struct Conv1DCache {
  const void* owner = nullptr;
  Tensor<T> input;
  Shape out_shape;
};

template <typename T>
struct Conv1DGrads {
  Tensor<T> kernels;
  Tensor<T> bias;
  Tensor<T> input;
};

struct ConvGeometry {
  std::size_t pad_left = 0;
  std::size_t pad_right = 0;
  std::size_t out_length = 0;
};

/// "same" follows the TensorFlow rule: out_length = ceil(length / stride),
/// the total padding split with the extra element on the right. In both
/// modes out_length = floor((length + pad_left + pad_right - width) / stride) + 1.
/// Throws DegenerateInput when no output position fits.
ConvGeometry conv1d_geometry(std::size_t length, std::size_t width, std::size_t stride,
                             Padding padding);

template <typename T>
Tensor<T> conv1d_forward(const Tensor<T>& x, const Conv1DParams<T>& p,
                         Conv1DCache<T>* cache = nullptr);
template <typename T>
Conv1DGrads<T> conv1d_backward(const Conv1DParams<T>& p, const Conv1DCache<T>& cache,
                               const Tensor<T>& upstream);

// ---------------------------------------------------------------------------
// BatchNorm1D. Statistics are per channel over batch and length. Running
// statistics follow running = momentum * running + (1 - momentum) * batch,
// using the biased batch variance.

template <typename T>
struct BatchNorm1DParams {
  Tensor<T> gamma;
  Tensor<T> beta;
  Tensor<T> running_mean;
  Tensor<T> running_var;
  T epsilon = T(1e-5);
  T momentum = T(0.9);
};

template <typename T>
struct BatchNorm1DCache {
  const void* owner = nullptr;
  Mode mode = Mode::Infer;
  Tensor<T> normalized;     // (x - mean) * inv_std
  std::vector<T> inv_std;   // per channel
};

template <typename T>
struct BatchNorm1DGrads {
  Tensor<T> gamma;
  Tensor<T> beta;
  Tensor<T> input;
};

/// Accepts [batch x channels x length] or [batch x channels]. Train mode
/// normalizes with batch statistics and updates the running statistics.
template <typename T>
Tensor<T> batchnorm1d_forward(const Tensor<T>& x, BatchNorm1DParams<T>& p, Mode mode,
                              BatchNorm1DCache<T>* cache = nullptr);
/// Infer-mode forward that leaves the params untouched.
template <typename T>
Tensor<T> batchnorm1d_infer(const Tensor<T>& x, const BatchNorm1DParams<T>& p,
                            BatchNorm1DCache<T>* cache = nullptr);
template <typename T>
BatchNorm1DGrads<T> batchnorm1d_backward(const BatchNorm1DParams<T>& p,
                                         const BatchNorm1DCache<T>& cache,
                                         const Tensor<T>& upstream);

// ---------------------------------------------------------------------------
// AvgPool1D: non-overlapping windows, trailing remainder dropped.

struct AvgPool1DCache {
  bool filled = false;
  Shape in_shape;
  Shape out_shape;
  std::size_t window = 0;
};

template <typename T>
Tensor<T> avgpool1d_forward(const Tensor<T>& x, std::size_t window,
                            AvgPool1DCache* cache = nullptr);
template <typename T>
Tensor<T> avgpool1d_backward(const AvgPool1DCache& cache, const Tensor<T>& upstream);

// ---------------------------------------------------------------------------
// Dense: y = x W + b

template <typename T>
struct DenseParams {
  Tensor<T> weights;  // [in x out]
  Tensor<T> bias;     // [out]
};

template <typename T>
struct DenseCache {
  const void* owner = nullptr;
  Tensor<T> input;
};

template <typename T>
struct DenseGrads {
  Tensor<T> weights;
  Tensor<T> bias;
  Tensor<T> input;
};

template <typename T>
Tensor<T> dense_forward(const Tensor<T>& x, const DenseParams<T>& p,
                        DenseCache<T>* cache = nullptr);
template <typename T>
DenseGrads<T> dense_backward(const DenseParams<T>& p, const DenseCache<T>& cache,
                             const Tensor<T>& upstream);

// ---------------------------------------------------------------------------
// Activations. Softmax normalizes over the last axis.

template <typename T>
struct ActivationCache {
  bool filled = false;
  Activation kind = Activation::ReLU;
  Tensor<T> input;
  Tensor<T> output;
};

template <typename T>
Tensor<T> activation_forward(const Tensor<T>& x, Activation kind,
                             ActivationCache<T>* cache = nullptr);
template <typename T>
Tensor<T> activation_backward(const ActivationCache<T>& cache, const Tensor<T>& upstream);

template <typename T>
T sigmoid(T v);

// ---------------------------------------------------------------------------
// LSTM. Gate blocks inside every 4*hidden axis are ordered input, forget,
// cell candidate, output (i, f, g, o):
//   z = x_t W_in + h_{t-1} W_rec + b
//   i = sigma(z_i)  f = sigma(z_f)  g = tanh(z_g)  o = sigma(z_o)
//   c_t = f * c_{t-1} + i * g       h_t = o * tanh(c_t)
// Initial hidden and cell states are zero.

enum class Gate : std::size_t { Input = 0, Forget = 1, Cell = 2, Output = 3 };

template <typename T>
struct LSTMParams {
  Tensor<T> input_kernel;      // [input_dim x 4*hidden]
  Tensor<T> recurrent_kernel;  // [hidden x 4*hidden]
  Tensor<T> bias;              // [4*hidden]
  std::size_t hidden = 0;
};

template <typename T>
struct LSTMCache {
  const void* owner = nullptr;
  LstmOutput output = LstmOutput::Last;
  Tensor<T> input;   // [batch x steps x input_dim]
  Tensor<T> gates;   // [steps x batch x 4*hidden], post-activation
  Tensor<T> cells;   // [(steps+1) x batch x hidden], slot 0 is the zero state
  Tensor<T> hidden;  // [(steps+1) x batch x hidden]
};

template <typename T>
struct LSTMGrads {
  Tensor<T> input_kernel;
  Tensor<T> recurrent_kernel;
  Tensor<T> bias;
  Tensor<T> input;
};

template <typename T>
Tensor<T> lstm_forward(const Tensor<T>& x, const LSTMParams<T>& p, LstmOutput output,
                       LSTMCache<T>* cache = nullptr);
template <typename T>
LSTMGrads<T> lstm_backward(const LSTMParams<T>& p, const LSTMCache<T>& cache,
                           const Tensor<T>& upstream);

// ---------------------------------------------------------------------------
// Loss helpers

/// Mean over rows of -sum_j labels_ij * log(probs_ij), with 0 * log 0 = 0.
template <typename T>
T categorical_cross_entropy(const Tensor<T>& probs, const Tensor<T>& labels);

/// Cross-entropy of softmax(logits) computed through log-sum-exp. Returns the
/// mean loss and d(loss)/d(logits) = (softmax(logits) - labels) / batch.
template <typename T>
std::pair<T, Tensor<T>> softmax_cross_entropy(const Tensor<T>& logits, const Tensor<T>& labels);

}  // namespace clids::nn
