#include "clids/model.hpp"

#include <cmath>

#include "clids/rng.hpp"

namespace clids {

using nn::Activation;
using nn::Mode;

void ModelConfig::validate() const {
  auto invalid = [](const std::string& what) { fail(ErrorKind::InvalidConfig, what); };
  if (classes != 2) invalid("classes must be 2, got " + std::to_string(classes));
  if (input_features < 1) invalid("input_features must be >= 1");
  if (dense_trunk.empty()) invalid("dense_trunk must not be empty");
  for (std::size_t w : dense_trunk) {
    if (w < 1) invalid("dense_trunk widths must be >= 1");
  }
  if (dense_trunk.back() != kSequenceLength) {
    invalid("last dense_trunk width must be " + std::to_string(kSequenceLength) + ", got " +
            std::to_string(dense_trunk.back()));
  }
  if (lstm_layers < 1) invalid("lstm_layers must be >= 1");
  if (lstm_hidden < 1) invalid("lstm_hidden must be >= 1");
  if (!(bn_momentum > 0.0 && bn_momentum < 1.0)) invalid("bn_momentum must lie in (0, 1)");
  if (!(bn_epsilon > 0.0)) invalid("bn_epsilon must be positive");
  std::size_t length = input_features;
  for (std::size_t i = 0; i < conv_blocks.size(); ++i) {
    const ConvBlockSpec& b = conv_blocks[i];
    if (b.filters < 1 || b.kernel_width < 1 || b.pool_window < 1) {
      invalid("conv block " + std::to_string(i) + " has a zero size");
    }
    if (length < b.pool_window) {
      invalid("conv block " + std::to_string(i) + " pools length " + std::to_string(length) +
              " with window " + std::to_string(b.pool_window));
    }
    length /= b.pool_window;
  }
}

namespace {

// Single source of the canonical parameter order.
template <typename M, typename F>
void visit_params(M& m, F&& f) {
  for (std::size_t i = 0; i < m.conv_blocks.size(); ++i) {
    auto& b = m.conv_blocks[i];
    const std::string c = "conv" + std::to_string(i), n = "bn" + std::to_string(i);
    f(c + ".kernel", b.conv.kernels, true);
    f(c + ".bias", b.conv.bias, true);
    f(n + ".gamma", b.bn.gamma, true);
    f(n + ".beta", b.bn.beta, true);
    f(n + ".running_mean", b.bn.running_mean, false);
    f(n + ".running_var", b.bn.running_var, false);
  }
  for (std::size_t i = 0; i < m.trunk.size(); ++i) {
    const std::string d = "dense" + std::to_string(i);
    f(d + ".kernel", m.trunk[i].weights, true);
    f(d + ".bias", m.trunk[i].bias, true);
  }
  f("head_a.kernel", m.head_a.weights, true);
  f("head_a.bias", m.head_a.bias, true);
  for (std::size_t i = 0; i < m.lstm.size(); ++i) {
    const std::string l = "lstm" + std::to_string(i);
    f(l + ".input_kernel", m.lstm[i].input_kernel, true);
    f(l + ".recurrent_kernel", m.lstm[i].recurrent_kernel, true);
    f(l + ".bias", m.lstm[i].bias, true);
  }
  f("head_b.kernel", m.head_b.weights, true);
  f("head_b.bias", m.head_b.bias, true);
  f("output.kernel", m.output.weights, true);
  f("output.bias", m.output.bias, true);
}

template <typename T>
Tensor<T> glorot(Rng& rng, Shape shape, std::size_t fan_in, std::size_t fan_out) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::vector<T> data(shape_size(shape));
  for (auto& v : data) v = static_cast<T>(rng.uniform(-limit, limit));
  return Tensor<T>(std::move(shape), std::move(data));
}

template <typename T>
nn::DenseParams<T> make_dense(Rng& rng, std::size_t in, std::size_t out) {
  return {glorot<T>(rng, {in, out}, in, out), Tensor<T>::zeros({out})};
}

}  // namespace

template <typename T>
std::vector<ParamRef<T>> ModelGraph<T>::parameters() {
  std::vector<ParamRef<T>> out;
  visit_params(*this, [&](std::string name, Tensor<T>& t, bool trainable) {
    out.push_back({std::move(name), &t, trainable});
  });
  return out;
}

template <typename T>
std::vector<ConstParamRef<T>> ModelGraph<T>::parameters() const {
  std::vector<ConstParamRef<T>> out;
  visit_params(*this, [&](std::string name, const Tensor<T>& t, bool trainable) {
    out.push_back({std::move(name), &t, trainable});
  });
  return out;
}

template <typename T>
std::vector<ParamRef<T>> ModelGraph<T>::trainable_parameters() {
  std::vector<ParamRef<T>> out;
  visit_params(*this, [&](std::string name, Tensor<T>& t, bool trainable) {
    if (trainable) out.push_back({std::move(name), &t, true});
  });
  return out;
}

template <typename T>
template <typename U>
ModelGraph<U> ModelGraph<T>::cast() const {
  ModelGraph<U> out;
  out.config = config;
  for (const auto& b : conv_blocks) {
    ConvBlock<U> nb;
    nb.conv = {b.conv.kernels.template cast<U>(), b.conv.bias.template cast<U>(), b.conv.stride,
               b.conv.padding};
    nb.bn = {b.bn.gamma.template cast<U>(),        b.bn.beta.template cast<U>(),
             b.bn.running_mean.template cast<U>(), b.bn.running_var.template cast<U>(),
             static_cast<U>(config.bn_epsilon),    static_cast<U>(config.bn_momentum)};
    nb.pool_window = b.pool_window;
    out.conv_blocks.push_back(std::move(nb));
  }
  auto dense = [](const nn::DenseParams<T>& d) {
    return nn::DenseParams<U>{d.weights.template cast<U>(), d.bias.template cast<U>()};
  };
  for (const auto& d : trunk) out.trunk.push_back(dense(d));
  out.head_a = dense(head_a);
  for (const auto& l : lstm) {
    out.lstm.push_back({l.input_kernel.template cast<U>(), l.recurrent_kernel.template cast<U>(),
                        l.bias.template cast<U>(), l.hidden});
  }
  out.head_b = dense(head_b);
  out.output = dense(output);
  return out;
}

template <typename T>
ModelGraph<T> build_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(derive_seed(seed, 0x1d5));
  ModelGraph<T> m;
  m.config = config;

  std::size_t channels = 1, length = config.input_features;
  for (const ConvBlockSpec& spec : config.conv_blocks) {
    ConvBlock<T> b;
    b.conv.kernels = glorot<T>(rng, {spec.filters, channels, spec.kernel_width},
                               channels * spec.kernel_width, spec.filters * spec.kernel_width);
    b.conv.bias = Tensor<T>::zeros({spec.filters});
    b.conv.stride = 1;
    b.conv.padding = nn::Padding::Same;
    b.bn.gamma = Tensor<T>::filled({spec.filters}, T{1});
    b.bn.beta = Tensor<T>::zeros({spec.filters});
    b.bn.running_mean = Tensor<T>::zeros({spec.filters});
    b.bn.running_var = Tensor<T>::filled({spec.filters}, T{1});
    b.bn.epsilon = static_cast<T>(config.bn_epsilon);
    b.bn.momentum = static_cast<T>(config.bn_momentum);
    b.pool_window = spec.pool_window;
    m.conv_blocks.push_back(std::move(b));
    channels = spec.filters;
    length /= spec.pool_window;
  }

  std::size_t width = channels * length;
  for (std::size_t out : config.dense_trunk) {
    m.trunk.push_back(make_dense<T>(rng, width, out));
    width = out;
  }
  m.head_a = make_dense<T>(rng, width, 2);

  const std::size_t H = config.lstm_hidden;
  std::size_t in_dim = 1;
  for (std::size_t i = 0; i < config.lstm_layers; ++i) {
    nn::LSTMParams<T> l;
    l.hidden = H;
    l.input_kernel = glorot<T>(rng, {in_dim, 4 * H}, in_dim, 4 * H);
    l.recurrent_kernel = glorot<T>(rng, {H, 4 * H}, H, 4 * H);
    l.bias = Tensor<T>::zeros({4 * H});
    const std::size_t forget = static_cast<std::size_t>(nn::Gate::Forget) * H;
    for (std::size_t j = 0; j < H; ++j) l.bias[forget + j] = T{1};
    m.lstm.push_back(std::move(l));
    in_dim = H;
  }
  m.head_b = make_dense<T>(rng, H, 2);
  m.output = make_dense<T>(rng, 4, 2);
  return m;
}

namespace {

template <typename T>
ForwardResult<T> forward_impl(const ModelGraph<T>& m, ModelGraph<T>* train_target,
                              const Tensor<T>& x, ForwardCache<T>* cache) {
  const ModelConfig& cfg = m.config;
  if (x.rank() != 2 || x.dim(1) != cfg.input_features) {
    fail(ErrorKind::ShapeMismatch, "model expects [batch x " + std::to_string(cfg.input_features) +
                                       "] input, got " + shape_string(x.shape()));
  }
  const std::size_t batch = x.dim(0);
  const Mode mode = train_target ? Mode::Train : Mode::Infer;
  if (cache) {
    *cache = ForwardCache<T>{};
    cache->owner = &m;
    cache->batch = batch;
    cache->blocks.resize(m.conv_blocks.size());
    cache->trunk.resize(m.trunk.size());
    cache->trunk_relu.resize(m.trunk.size());
    cache->lstm.resize(m.lstm.size());
  }

  Tensor<T> h = x.reshape({batch, 1, cfg.input_features});
  for (std::size_t i = 0; i < m.conv_blocks.size(); ++i) {
    BlockCache<T>* bc = cache ? &cache->blocks[i] : nullptr;
    h = nn::conv1d_forward(h, m.conv_blocks[i].conv, bc ? &bc->conv : nullptr);
    h = train_target
            ? nn::batchnorm1d_forward(h, train_target->conv_blocks[i].bn, mode, bc ? &bc->bn : nullptr)
            : nn::batchnorm1d_infer(h, m.conv_blocks[i].bn, bc ? &bc->bn : nullptr);
    h = nn::activation_forward(h, Activation::ReLU, bc ? &bc->relu : nullptr);
    h = nn::avgpool1d_forward(h, m.conv_blocks[i].pool_window, bc ? &bc->pool : nullptr);
  }
  if (cache) cache->conv_out_shape = h.shape();
  h = std::move(h).reshape({batch, h.size() / batch});

  for (std::size_t i = 0; i < m.trunk.size(); ++i) {
    h = nn::dense_forward(h, m.trunk[i], cache ? &cache->trunk[i] : nullptr);
    h = nn::activation_forward(h, Activation::ReLU, cache ? &cache->trunk_relu[i] : nullptr);
  }

  ForwardResult<T> r;
  r.head_a = nn::activation_forward(nn::dense_forward(h, m.head_a, cache ? &cache->head_a : nullptr),
                                    Activation::Softmax, cache ? &cache->head_a_softmax : nullptr);

  Tensor<T> seq = h.reshape({batch, ModelConfig::kSequenceLength, 1});
  for (std::size_t i = 0; i < m.lstm.size(); ++i) {
    const auto out = i + 1 == m.lstm.size() ? nn::LstmOutput::Last : nn::LstmOutput::Sequence;
    seq = nn::lstm_forward(seq, m.lstm[i], out, cache ? &cache->lstm[i] : nullptr);
  }
  r.head_b = nn::activation_forward(nn::dense_forward(seq, m.head_b, cache ? &cache->head_b : nullptr),
                                    Activation::Sigmoid, cache ? &cache->head_b_sigmoid : nullptr);

  auto joined = Tensor<T>::zeros({batch, 4});
  for (std::size_t b = 0; b < batch; ++b) {
    joined.at(b, 0) = r.head_a.at(b, 0);
    joined.at(b, 1) = r.head_a.at(b, 1);
    joined.at(b, 2) = r.head_b.at(b, 0);
    joined.at(b, 3) = r.head_b.at(b, 1);
  }
  r.logits = nn::dense_forward(joined, m.output, cache ? &cache->output : nullptr);
  r.probs = nn::activation_forward(r.logits, Activation::Softmax);
  return r;
}

template <typename T>
void append(Gradients<T>& g, Tensor<T> a, Tensor<T> b) {
  g.push_back(std::move(a));
  g.push_back(std::move(b));
}

}  // namespace

template <typename T>
ForwardResult<T> forward(ModelGraph<T>& model, const Tensor<T>& x, Mode mode,
                         ForwardCache<T>* cache) {
  return forward_impl(model, mode == Mode::Train ? &model : nullptr, x, cache);
}

template <typename T>
ForwardResult<T> infer(const ModelGraph<T>& model, const Tensor<T>& x, ForwardCache<T>* cache) {
  return forward_impl<T>(model, nullptr, x, cache);
}

template <typename T>
Gradients<T> backward(const ModelGraph<T>& m, const ForwardCache<T>& cache,
                      const Tensor<T>& d_logits) {
  if (cache.owner != &m) fail(ErrorKind::StaleCache, "forward cache belongs to another model");
  const std::size_t batch = cache.batch;
  if (d_logits.shape() != Shape{batch, 2}) {
    fail(ErrorKind::ShapeMismatch, "d_logits must be [" + std::to_string(batch) + "x2], got " +
                                       shape_string(d_logits.shape()));
  }

  auto g_out = nn::dense_backward(m.output, cache.output, d_logits);
  auto d_a = Tensor<T>::zeros({batch, 2});
  auto d_b = Tensor<T>::zeros({batch, 2});
  for (std::size_t b = 0; b < batch; ++b) {
    d_a.at(b, 0) = g_out.input.at(b, 0);
    d_a.at(b, 1) = g_out.input.at(b, 1);
    d_b.at(b, 0) = g_out.input.at(b, 2);
    d_b.at(b, 1) = g_out.input.at(b, 3);
  }

  auto g_head_a = nn::dense_backward(m.head_a, cache.head_a,
                                     nn::activation_backward(cache.head_a_softmax, d_a));
  auto g_head_b = nn::dense_backward(m.head_b, cache.head_b,
                                     nn::activation_backward(cache.head_b_sigmoid, d_b));

  std::vector<nn::LSTMGrads<T>> g_lstm(m.lstm.size());
  Tensor<T> d_seq = g_head_b.input;
  for (std::size_t i = m.lstm.size(); i-- > 0;) {
    g_lstm[i] = nn::lstm_backward(m.lstm[i], cache.lstm[i], d_seq);
    d_seq = g_lstm[i].input;
  }

  // Both heads read the trunk output.
  Tensor<T> d_h = g_head_a.input;
  {
    auto dd = d_h.data();
    auto ds = d_seq.data();
    for (std::size_t i = 0; i < dd.size(); ++i) dd[i] += ds[i];
  }

  std::vector<nn::DenseGrads<T>> g_trunk(m.trunk.size());
  for (std::size_t i = m.trunk.size(); i-- > 0;) {
    g_trunk[i] = nn::dense_backward(m.trunk[i], cache.trunk[i],
                                    nn::activation_backward(cache.trunk_relu[i], d_h));
    d_h = g_trunk[i].input;
  }

  std::vector<nn::Conv1DGrads<T>> g_conv(m.conv_blocks.size());
  std::vector<nn::BatchNorm1DGrads<T>> g_bn(m.conv_blocks.size());
  d_h = std::move(d_h).reshape(cache.conv_out_shape);
  for (std::size_t i = m.conv_blocks.size(); i-- > 0;) {
    const BlockCache<T>& bc = cache.blocks[i];
    d_h = nn::avgpool1d_backward(bc.pool, d_h);
    d_h = nn::activation_backward(bc.relu, d_h);
    g_bn[i] = nn::batchnorm1d_backward(m.conv_blocks[i].bn, bc.bn, d_h);
    g_conv[i] = nn::conv1d_backward(m.conv_blocks[i].conv, bc.conv, g_bn[i].input);
    d_h = g_conv[i].input;
  }

  Gradients<T> grads;
  for (std::size_t i = 0; i < m.conv_blocks.size(); ++i) {
    append(grads, std::move(g_conv[i].kernels), std::move(g_conv[i].bias));
    append(grads, std::move(g_bn[i].gamma), std::move(g_bn[i].beta));
  }
  for (auto& g : g_trunk) append(grads, std::move(g.weights), std::move(g.bias));
  append(grads, std::move(g_head_a.weights), std::move(g_head_a.bias));
  for (auto& g : g_lstm) {
    grads.push_back(std::move(g.input_kernel));
    grads.push_back(std::move(g.recurrent_kernel));
    grads.push_back(std::move(g.bias));
  }
  append(grads, std::move(g_head_b.weights), std::move(g_head_b.bias));
  append(grads, std::move(g_out.weights), std::move(g_out.bias));
  return grads;
}

template <typename T>
LossAndGrad<T> loss_and_grad(ModelGraph<T>& model, const Tensor<T>& x, const Tensor<T>& labels,
                             Mode mode) {
  ForwardCache<T> cache;
  LossAndGrad<T> out;
  out.result = forward(model, x, mode, &cache);
  auto [loss, d_logits] = nn::softmax_cross_entropy(out.result.logits, labels);
  out.loss = loss;
  out.grads = backward(model, cache, d_logits);
  return out;
}

template <typename T>
std::vector<bool> relu_pattern(const ForwardCache<T>& cache) {
  std::vector<bool> bits;
  auto add = [&](const nn::ActivationCache<T>& c) {
    for (T v : c.input.data()) bits.push_back(v > T{0});
  };
  for (const auto& b : cache.blocks) add(b.relu);
  for (const auto& r : cache.trunk_relu) add(r);
  return bits;
}

std::string_view label_name(Label label) noexcept {
  return label == Label::Benign ? "benign" : "malicious";
}

Label decide(double p_benign, double p_malicious) noexcept {
  return p_malicious >= p_benign ? Label::Malicious : Label::Benign;
}

template <typename T>
std::vector<Prediction> predict(const ModelGraph<T>& model, const Tensor<T>& x) {
  const ForwardResult<T> r = infer(model, x);
  std::vector<Prediction> out(x.dim(0));
  for (std::size_t b = 0; b < out.size(); ++b) {
    Prediction& p = out[b];
    p.probabilities = {r.probs.at(b, 0), r.probs.at(b, 1)};
    p.label = decide(p.probabilities.first, p.probabilities.second);
    p.head_a = {r.head_a.at(b, 0), r.head_a.at(b, 1)};
    p.head_b = {r.head_b.at(b, 0), r.head_b.at(b, 1)};
  }
  return out;
}

template struct ModelGraph<float>;
template struct ModelGraph<double>;
template ModelGraph<double> ModelGraph<float>::cast<double>() const;
template ModelGraph<float> ModelGraph<double>::cast<float>() const;
template ModelGraph<float> ModelGraph<float>::cast<float>() const;
template ModelGraph<double> ModelGraph<double>::cast<double>() const;

#define CLIDS_INSTANTIATE(T)                                                                   \
  template ModelGraph<T> build_model<T>(const ModelConfig&, std::uint64_t);                    \
  template ForwardResult<T> forward<T>(ModelGraph<T>&, const Tensor<T>&, Mode, ForwardCache<T>*); \
  template ForwardResult<T> infer<T>(const ModelGraph<T>&, const Tensor<T>&, ForwardCache<T>*); \
  template Gradients<T> backward<T>(const ModelGraph<T>&, const ForwardCache<T>&,              \
                                    const Tensor<T>&);                                         \
  template LossAndGrad<T> loss_and_grad<T>(ModelGraph<T>&, const Tensor<T>&, const Tensor<T>&, \
                                           Mode);                                              \
  template std::vector<bool> relu_pattern<T>(const ForwardCache<T>&);                          \
  template std::vector<Prediction> predict<T>(const ModelGraph<T>&, const Tensor<T>&);

CLIDS_INSTANTIATE(float)
CLIDS_INSTANTIATE(double)
#undef CLIDS_INSTANTIATE

}  // namespace clids
