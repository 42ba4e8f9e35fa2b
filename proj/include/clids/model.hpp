#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "clids/nn.hpp"
#include "clids/tensor.hpp"

// Dual-head CNN-LSTM binary classifier.
//
//   x [B x F] -> [B x 1 x F]
//     -> per conv block: Conv1D(same) -> BatchNorm -> ReLU -> AvgPool
//     -> flatten -> Dense+ReLU ... -> Dense(16)+ReLU          (trunk, t [B x 16])
//   head A: t -> Dense(2) -> softmax                           [B x 2]
//   head B: t -> [B x 16 x 1] -> LSTM(seq) ... -> LSTM(last)
//             -> Dense(2) -> sigmoid                           [B x 2]
//   output: [A | B] (concat, [B x 4]) -> Dense(2) -> softmax   [B x 2]
//
// The first LSTM sees one feature per step, so its kernels are 1 x 4H and
// H x 4H; the following layers take H-wide inputs.

namespace clids {

struct ConvBlockSpec {
  std::size_t filters = 0;
  std::size_t kernel_width = 0;
  std::size_t pool_window = 0;

  friend bool operator==(const ConvBlockSpec&, const ConvBlockSpec&) = default;
};

struct ModelConfig {
  /// Width of the trunk output that is reshaped into an LSTM sequence.
  static constexpr std::size_t kSequenceLength = 16;

  std::size_t input_features = 45;
  std::vector<ConvBlockSpec> conv_blocks = {{32, 3, 2}, {64, 3, 2}};
  std::vector<std::size_t> dense_trunk = {64, 16};
  std::size_t lstm_hidden = 64;
  std::size_t lstm_layers = 2;
  std::size_t classes = 2;
  double bn_momentum = 0.9;
  double bn_epsilon = 1e-5;

  /// Throws InvalidConfig.
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

template <typename T>
struct ConvBlock {
  nn::Conv1DParams<T> conv;
  nn::BatchNorm1DParams<T> bn;
  std::size_t pool_window = 0;
};

template <typename T>
struct ParamRef {
  std::string name;
  Tensor<T>* tensor = nullptr;
  bool trainable = true;
};

template <typename T>
struct ConstParamRef {
  std::string name;
  const Tensor<T>* tensor = nullptr;
  bool trainable = true;
};

/// Gradient tensors aligned with ModelGraph::trainable_parameters().
template <typename T>
using Gradients = std::vector<Tensor<T>>;

template <typename T>
struct ModelGraph {
  ModelConfig config;
  std::vector<ConvBlock<T>> conv_blocks;
  std::vector<nn::DenseParams<T>> trunk;
  nn::DenseParams<T> head_a;
  std::vector<nn::LSTMParams<T>> lstm;
  nn::DenseParams<T> head_b;
  nn::DenseParams<T> output;

  /// Every persisted tensor in canonical order, running statistics included.
  std::vector<ParamRef<T>> parameters();
  std::vector<ConstParamRef<T>> parameters() const;
  std::vector<ParamRef<T>> trainable_parameters();

  template <typename U>
  ModelGraph<U> cast() const;
};

template <typename T>
struct BlockCache {
  nn::Conv1DCache<T> conv;
  nn::BatchNorm1DCache<T> bn;
  nn::ActivationCache<T> relu;
  nn::AvgPool1DCache pool;
};

template <typename T>
struct ForwardCache {
  const void* owner = nullptr;
  std::size_t batch = 0;
  std::vector<BlockCache<T>> blocks;
  Shape conv_out_shape;
  std::vector<nn::DenseCache<T>> trunk;
  std::vector<nn::ActivationCache<T>> trunk_relu;
  nn::DenseCache<T> head_a;
  nn::ActivationCache<T> head_a_softmax;
  std::vector<nn::LSTMCache<T>> lstm;
  nn::DenseCache<T> head_b;
  nn::ActivationCache<T> head_b_sigmoid;
  nn::DenseCache<T> output;
};

template <typename T>
struct ForwardResult {
  Tensor<T> logits;  // final pre-softmax [B x 2]
  Tensor<T> probs;   // final softmax [B x 2]
  Tensor<T> head_a;  // softmax [B x 2]
  Tensor<T> head_b;  // sigmoid [B x 2]
};

template <typename T>
struct LossAndGrad {
  T loss{};
  Gradients<T> grads;
  ForwardResult<T> result;
};

/// Deterministic initialization: Glorot-uniform weights, zero biases, LSTM
/// forget-gate bias 1, BatchNorm gamma 1 / beta 0 / running stats (0, 1).
/// The same (config, seed) gives bit-identical tensors.
template <typename T>
ModelGraph<T> build_model(const ModelConfig& config, std::uint64_t seed);

/// Train mode uses batch statistics and updates BatchNorm running stats.
template <typename T>
ForwardResult<T> forward(ModelGraph<T>& model, const Tensor<T>& x, nn::Mode mode,
                         ForwardCache<T>* cache = nullptr);

template <typename T>
ForwardResult<T> infer(const ModelGraph<T>& model, const Tensor<T>& x,
                       ForwardCache<T>* cache = nullptr);

/// Backpropagates d(loss)/d(final logits) through both heads and the trunk.
template <typename T>
Gradients<T> backward(const ModelGraph<T>& model, const ForwardCache<T>& cache,
                      const Tensor<T>& d_logits);

/// Mean categorical cross-entropy of the final softmax against one-hot
/// labels, plus gradients for every trainable parameter.
template <typename T>
LossAndGrad<T> loss_and_grad(ModelGraph<T>& model, const Tensor<T>& x, const Tensor<T>& labels,
                             nn::Mode mode = nn::Mode::Train);

/// Sign pattern (z > 0) of every ReLU input in the cache, in layer order.
template <typename T>
std::vector<bool> relu_pattern(const ForwardCache<T>& cache);

enum class Label : std::uint8_t { Benign = 0, Malicious = 1 };

std::string_view label_name(Label label) noexcept;

struct Prediction {
  std::pair<double, double> probabilities;  // (benign, malicious)
  Label label = Label::Malicious;
  std::pair<double, double> head_a;
  std::pair<double, double> head_b;
};

/// Ties go to malicious.
Label decide(double p_benign, double p_malicious) noexcept;

template <typename T>
std::vector<Prediction> predict(const ModelGraph<T>& model, const Tensor<T>& x);

}  // namespace clids
