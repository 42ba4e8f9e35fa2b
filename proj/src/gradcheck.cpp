#include "clids/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "clids/data.hpp"
#include "clids/nn.hpp"
#include "clids/rng.hpp"

namespace clids::gradcheck {

using nn::Activation;
using nn::LstmOutput;
using nn::Mode;
using nn::Padding;

bool Report::passed(double tolerance) const {
  return std::all_of(results.begin(), results.end(),
                     [&](const TensorResult& r) { return r.rel_error < tolerance; });
}

const TensorResult& Report::worst() const {
  return *std::max_element(results.begin(), results.end(),
                           [](const TensorResult& a, const TensorResult& b) {
                             return a.rel_error < b.rel_error;
                           });
}

TensorResult check_tensor(const std::string& name, Tensor<double>& target,
                          const Tensor<double>& analytic, const std::function<double()>& objective,
                          const std::function<bool()>& differentiable, std::uint64_t seed,
                          const Options& options) {
  if (analytic.shape() != target.shape()) {
    fail(ErrorKind::ShapeMismatch, "gradient for '" + name + "' has shape " +
                                       shape_string(analytic.shape()) + ", tensor " +
                                       shape_string(target.shape()));
  }
  std::vector<std::size_t> candidates(target.size());
  std::iota(candidates.begin(), candidates.end(), std::size_t{0});
  std::uint64_t name_hash = 0xcbf29ce484222325ULL;  // FNV-1a
  for (char c : name) name_hash = (name_hash ^ static_cast<std::uint8_t>(c)) * 0x100000001b3ULL;
  Rng rng(derive_seed(seed, name_hash));
  if (candidates.size() > options.max_entries) rng.shuffle(std::span<std::size_t>(candidates));

  TensorResult r;
  r.name = name;
  double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
  const double h = options.step;
  for (std::size_t idx : candidates) {
    if (r.checked >= options.max_entries) break;
    const double saved = target[idx];
    target[idx] = saved + h;
    const double up = objective();
    const bool up_ok = !differentiable || differentiable();
    target[idx] = saved - h;
    const double down = objective();
    const bool down_ok = !differentiable || differentiable();
    target[idx] = saved;
    if (!up_ok || !down_ok) {
      ++r.skipped;
      continue;
    }
    const double numeric = (up - down) / (2.0 * h);
    const double a = analytic[idx];
    diff2 += (a - numeric) * (a - numeric);
    a2 += a * a;
    n2 += numeric * numeric;
    r.max_abs_error = std::max(r.max_abs_error, std::abs(a - numeric));
    ++r.checked;
  }
  const double na = std::sqrt(a2), nn = std::sqrt(n2);
  if (na < options.zero_floor && nn < options.zero_floor) {
    r.structural_zero = true;
    r.rel_error = std::sqrt(diff2);
  } else {
    r.rel_error = std::sqrt(diff2) / (na + nn);
  }
  return r;
}

namespace {

Tensor<double> random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(shape_size(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor<double>(std::move(shape), std::move(v));
}

/// Values bounded away from zero so ReLU is smooth around each of them.
Tensor<double> kink_free_tensor(Rng& rng, Shape shape) {
  std::vector<double> v(shape_size(shape));
  for (auto& x : v) x = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(0.1, 1.0);
  return Tensor<double>(std::move(shape), std::move(v));
}

double weighted_sum(const Tensor<double>& y, const Tensor<double>& w) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * w[i];
  return s;
}

struct LayerCheck {
  Report& report;
  std::uint64_t seed;
  const Options& options;

  void operator()(const std::string& name, Tensor<double>& target, const Tensor<double>& analytic,
                  const std::function<double()>& objective) {
    report.results.push_back(check_tensor(name, target, analytic, objective, {}, seed, options));
  }
};

void check_conv(LayerCheck& check, Rng& rng, const std::string& name, Padding padding,
                std::size_t stride) {
  nn::Conv1DParams<double> p{random_tensor(rng, {3, 2, 3}), random_tensor(rng, {3}), stride,
                             padding};
  Tensor<double> x = random_tensor(rng, {2, 2, 7});
  nn::Conv1DCache<double> cache;
  const Tensor<double> y = nn::conv1d_forward(x, p, &cache);
  const Tensor<double> w = random_tensor(rng, y.shape());
  const auto g = nn::conv1d_backward(p, cache, w);
  auto objective = [&] { return weighted_sum(nn::conv1d_forward(x, p), w); };
  check(name + ".kernels", p.kernels, g.kernels, objective);
  check(name + ".bias", p.bias, g.bias, objective);
  check(name + ".input", x, g.input, objective);
}

void check_batchnorm(LayerCheck& check, Rng& rng, const std::string& name, Mode mode) {
  nn::BatchNorm1DParams<double> p{random_tensor(rng, {3}, 0.5, 1.5), random_tensor(rng, {3}),
                                  random_tensor(rng, {3}), random_tensor(rng, {3}, 0.5, 1.5),
                                  1e-5, 0.9};
  Tensor<double> x = random_tensor(rng, {4, 3, 5});
  nn::BatchNorm1DCache<double> cache;
  const Tensor<double> y = nn::batchnorm1d_forward(x, p, mode, &cache);
  const Tensor<double> w = random_tensor(rng, y.shape());
  const auto g = nn::batchnorm1d_backward(p, cache, w);
  // Train-mode output does not depend on the running statistics it updates.
  auto objective = [&] { return weighted_sum(nn::batchnorm1d_forward(x, p, mode), w); };
  check(name + ".gamma", p.gamma, g.gamma, objective);
  check(name + ".beta", p.beta, g.beta, objective);
  check(name + ".input", x, g.input, objective);
}

void check_pool(LayerCheck& check, Rng& rng) {
  Tensor<double> x = random_tensor(rng, {2, 3, 7});
  nn::AvgPool1DCache cache;
  const Tensor<double> y = nn::avgpool1d_forward(x, 2, &cache);
  const Tensor<double> w = random_tensor(rng, y.shape());
  const auto dx = nn::avgpool1d_backward(cache, w);
  check("avgpool1d.input", x, dx, [&] { return weighted_sum(nn::avgpool1d_forward(x, 2), w); });
}

void check_dense(LayerCheck& check, Rng& rng) {
  nn::DenseParams<double> p{random_tensor(rng, {5, 3}), random_tensor(rng, {3})};
  Tensor<double> x = random_tensor(rng, {4, 5});
  nn::DenseCache<double> cache;
  const Tensor<double> y = nn::dense_forward(x, p, &cache);
  const Tensor<double> w = random_tensor(rng, y.shape());
  const auto g = nn::dense_backward(p, cache, w);
  auto objective = [&] { return weighted_sum(nn::dense_forward(x, p), w); };
  check("dense.weights", p.weights, g.weights, objective);
  check("dense.bias", p.bias, g.bias, objective);
  check("dense.input", x, g.input, objective);
}

void check_activation(LayerCheck& check, Rng& rng, const std::string& name, Activation kind) {
  Tensor<double> x = kink_free_tensor(rng, {3, 4});
  nn::ActivationCache<double> cache;
  const Tensor<double> y = nn::activation_forward(x, kind, &cache);
  const Tensor<double> w = random_tensor(rng, y.shape());
  const auto dx = nn::activation_backward(cache, w);
  check(name + ".input", x, dx, [&] { return weighted_sum(nn::activation_forward(x, kind), w); });
}

void check_lstm(LayerCheck& check, Rng& rng, const std::string& name, LstmOutput output) {
  const std::size_t H = 3, D = 2;
  nn::LSTMParams<double> p{random_tensor(rng, {D, 4 * H}), random_tensor(rng, {H, 4 * H}),
                           random_tensor(rng, {4 * H}), H};
  Tensor<double> x = random_tensor(rng, {2, 5, D});
  nn::LSTMCache<double> cache;
  const Tensor<double> y = nn::lstm_forward(x, p, output, &cache);
  const Tensor<double> w = random_tensor(rng, y.shape());
  const auto g = nn::lstm_backward(p, cache, w);
  auto objective = [&] { return weighted_sum(nn::lstm_forward(x, p, output), w); };
  check(name + ".input_kernel", p.input_kernel, g.input_kernel, objective);
  check(name + ".recurrent_kernel", p.recurrent_kernel, g.recurrent_kernel, objective);
  check(name + ".bias", p.bias, g.bias, objective);
  check(name + ".input", x, g.input, objective);
}

}  // namespace

Report check_layers(std::uint64_t seed, const Options& options) {
  Report report;
  LayerCheck check{report, seed, options};
  Rng rng(derive_seed(seed, 0x9c));
  check_conv(check, rng, "conv1d.same", Padding::Same, 1);
  check_conv(check, rng, "conv1d.valid_stride2", Padding::Valid, 2);
  check_batchnorm(check, rng, "batchnorm1d.train", Mode::Train);
  check_batchnorm(check, rng, "batchnorm1d.infer", Mode::Infer);
  check_pool(check, rng);
  check_dense(check, rng);
  check_activation(check, rng, "relu", Activation::ReLU);
  check_activation(check, rng, "sigmoid", Activation::Sigmoid);
  check_activation(check, rng, "tanh", Activation::Tanh);
  check_activation(check, rng, "softmax", Activation::Softmax);
  check_lstm(check, rng, "lstm.sequence", LstmOutput::Sequence);
  check_lstm(check, rng, "lstm.last", LstmOutput::Last);
  return report;
}

Report check_model(const ModelConfig& config, std::uint64_t seed, Mode mode,
                   const Options& options) {
  ModelGraph<double> model = build_model<double>(config, seed);
  Rng rng(derive_seed(seed, 0x3d));
  // Move off the initial point: zero biases and unit BatchNorm statistics
  // leave most units dead or tiny, which hides bias bugs and starves the
  // LSTM of signal.
  for (auto& p : model.parameters()) {
    if (p.name.ends_with(".kernel") || p.name.ends_with("_kernel")) continue;
    for (auto& v : p.tensor->data()) v += rng.uniform(-0.5, 0.5);
  }
  const std::size_t B = std::max<std::size_t>(options.batch, 2);
  std::vector<double> xv(B * config.input_features);
  for (auto& v : xv) v = rng.normal();
  const Tensor<double> x({B, config.input_features}, std::move(xv));
  std::vector<std::uint8_t> y(B);
  for (std::size_t i = 0; i < B; ++i) y[i] = static_cast<std::uint8_t>(i % 2);
  const Tensor<double> labels = data::one_hot<double>(y);

  ForwardCache<double> cache;
  forward(model, x, mode, &cache);
  const std::vector<bool> base_pattern = relu_pattern(cache);
  const auto step = loss_and_grad(model, x, labels, mode);

  ForwardCache<double> probe;
  auto objective = [&] {
    const auto r = forward(model, x, mode, &probe);
    return nn::softmax_cross_entropy(r.logits, labels).first;
  };
  auto same_piece = [&] { return relu_pattern(probe) == base_pattern; };

  const std::string prefix = mode == Mode::Train ? "model.train." : "model.infer.";
  Report report;
  auto params = model.trainable_parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    report.results.push_back(check_tensor(prefix + params[i].name, *params[i].tensor,
                                          step.grads[i], objective, same_piece, seed, options));
  }
  return report;
}

Report check_all(std::uint64_t seed, const Options& options) {
  Report report = check_layers(seed, options);
  for (Mode mode : {Mode::Train, Mode::Infer}) {
    Report model = check_model(ModelConfig{}, seed, mode, options);
    report.results.insert(report.results.end(), model.results.begin(), model.results.end());
  }
  return report;
}

}  // namespace clids::gradcheck
