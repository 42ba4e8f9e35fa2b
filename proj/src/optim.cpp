#include "clids/optim.hpp"

#include <cmath>

#include "clids/nn.hpp"
#include "clids/rng.hpp"

namespace clids::optim {

namespace {

template <typename T>
void check_alignment(std::span<Tensor<T>* const> params, std::span<const Tensor<T>> grads) {
  if (params.size() != grads.size()) {
    fail(ErrorKind::ShapeMismatch, std::to_string(params.size()) + " parameters but " +
                                       std::to_string(grads.size()) + " gradients");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->shape() != grads[i].shape()) {
      fail(ErrorKind::ShapeMismatch, "gradient " + std::to_string(i) + " has shape " +
                                         shape_string(grads[i].shape()) + ", parameter " +
                                         shape_string(params[i]->shape()));
    }
  }
}

}  // namespace

template <typename T>
AdamState<T> adam_init(std::span<Tensor<T>* const> params, const AdamHyper& hyper) {
  AdamState<T> s;
  s.hyper = hyper;
  for (const Tensor<T>* p : params) {
    s.m.push_back(Tensor<T>::zeros(p->shape()));
    s.v.push_back(Tensor<T>::zeros(p->shape()));
  }
  return s;
}

template <typename T>
void adam_step(AdamState<T>& state, std::span<Tensor<T>* const> params,
               std::span<const Tensor<T>> grads) {
  check_alignment(params, grads);
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    fail(ErrorKind::ShapeMismatch, "adam state does not match parameter list");
  }
  state.t += 1;
  const AdamHyper& h = state.hyper;
  const T b1 = static_cast<T>(h.beta1), b2 = static_cast<T>(h.beta2);
  const T lr = static_cast<T>(h.lr), eps = static_cast<T>(h.epsilon);
  const T c1 = static_cast<T>(1.0 - std::pow(h.beta1, static_cast<double>(state.t)));
  const T c2 = static_cast<T>(1.0 - std::pow(h.beta2, static_cast<double>(state.t)));
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (state.m[i].shape() != params[i]->shape()) {
      fail(ErrorKind::ShapeMismatch, "adam moment " + std::to_string(i) + " shape");
    }
    auto theta = params[i]->data();
    auto g = grads[i].data();
    auto m = state.m[i].data();
    auto v = state.v[i].data();
    for (std::size_t j = 0; j < theta.size(); ++j) {
      m[j] = b1 * m[j] + (T{1} - b1) * g[j];
      v[j] = b2 * v[j] + (T{1} - b2) * g[j] * g[j];
      const T m_hat = m[j] / c1;
      const T v_hat = v[j] / c2;
      theta[j] -= lr * m_hat / (std::sqrt(v_hat) + eps);
    }
  }
}

template <typename T>
void sgd_step(double lr, std::span<Tensor<T>* const> params, std::span<const Tensor<T>> grads) {
  check_alignment(params, grads);
  const T step = static_cast<T>(lr);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto theta = params[i]->data();
    auto g = grads[i].data();
    for (std::size_t j = 0; j < theta.size(); ++j) theta[j] -= step * g[j];
  }
}

void TrainConfig::validate() const {
  if (epochs < 1) fail(ErrorKind::InvalidConfig, "epochs must be >= 1");
  if (batch_size < 1) fail(ErrorKind::InvalidConfig, "batch_size must be >= 1");
  if (!(adam.lr > 0.0)) fail(ErrorKind::InvalidConfig, "learning rate must be positive");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0)) {
    fail(ErrorKind::InvalidConfig, "Adam betas must lie in [0, 1)");
  }
  if (!(adam.epsilon > 0.0)) fail(ErrorKind::InvalidConfig, "Adam epsilon must be positive");
}

namespace {

template <typename T>
std::size_t count_correct(const Tensor<T>& probs, const Tensor<T>& one_hot) {
  std::size_t correct = 0;
  for (std::size_t r = 0; r < probs.dim(0); ++r) {
    const Label predicted = decide(probs.at(r, 0), probs.at(r, 1));
    const Label truth = one_hot.at(r, 1) > T{0} ? Label::Malicious : Label::Benign;
    if (predicted == truth) ++correct;
  }
  return correct;
}

template <typename T>
data::Batch<T> concat(data::Batch<T> a, const data::Batch<T>& b) {
  const std::size_t F = a.features.dim(1);
  std::vector<T> x(a.features.values());
  x.insert(x.end(), b.features.values().begin(), b.features.values().end());
  std::vector<T> y(a.labels.values());
  y.insert(y.end(), b.labels.values().begin(), b.labels.values().end());
  const std::size_t n = a.rows.size() + b.rows.size();
  a.rows.insert(a.rows.end(), b.rows.begin(), b.rows.end());
  a.features = Tensor<T>({n, F}, std::move(x));
  a.labels = Tensor<T>({n, 2}, std::move(y));
  return a;
}

}  // namespace

template <typename T>
Evaluation evaluate(const ModelGraph<T>& model, const data::FlowDataset& ds, std::size_t chunk) {
  if (ds.rows() == 0) fail(ErrorKind::EmptyDataset, "cannot evaluate on an empty dataset");
  const auto seq = data::batches(ds, chunk, std::nullopt);
  double loss_sum = 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    const auto b = seq.get<T>(i);
    const auto r = infer(model, b.features);
    const auto [loss, grad] = nn::softmax_cross_entropy(r.logits, b.labels);
    loss_sum += static_cast<double>(loss) * static_cast<double>(b.rows.size());
    correct += count_correct(r.probs, b.labels);
  }
  const double n = static_cast<double>(ds.rows());
  return {loss_sum / n, static_cast<double>(correct) / n};
}

template <typename T>
Trainer<T>::Trainer(ModelGraph<T>& model, const data::FlowDataset& train,
                    const data::FlowDataset* validation, TrainConfig config)
    : model_(model), train_(train), validation_(validation), config_(config) {
  config_.validate();
  if (train_.rows() == 0) fail(ErrorKind::EmptyDataset, "training split is empty");
  if (train_.rows() < 2) {
    fail(ErrorKind::EmptyDataset, "training needs at least 2 rows for batch statistics");
  }
  if (train_.num_features != model_.config.input_features) {
    fail(ErrorKind::FeatureCountMismatch,
         "dataset has " + std::to_string(train_.num_features) + " features, model expects " +
             std::to_string(model_.config.input_features));
  }
  if (!model_.conv_blocks.empty() && config_.batch_size < 2) {
    fail(ErrorKind::InvalidConfig, "batch_size must be >= 2 when the model has BatchNorm layers");
  }
  for (auto& p : model_.trainable_parameters()) params_.push_back(p.tensor);
  adam_ = adam_init<T>(params_, config_.adam);
}

template <typename T>
EpochStats Trainer<T>::run_epoch() {
  const std::uint64_t epoch_seed = derive_seed(config_.seed, epoch_);
  const auto seq = data::batches(
      train_, config_.batch_size,
      config_.shuffle ? std::optional<std::uint64_t>(epoch_seed) : std::nullopt);

  double loss_sum = 0.0;
  std::size_t correct = 0, seen = 0;
  std::size_t n_batches = seq.size();
  const bool fold_last = n_batches > 1 && train_.rows() % config_.batch_size == 1;
  if (fold_last) --n_batches;

  for (std::size_t i = 0; i < n_batches; ++i) {
    auto batch = seq.get<T>(i);
    if (fold_last && i + 1 == n_batches) batch = concat(std::move(batch), seq.get<T>(i + 1));
    const auto step = loss_and_grad(model_, batch.features, batch.labels, nn::Mode::Train);
    adam_step<T>(adam_, params_, step.grads);
    loss_sum += static_cast<double>(step.loss) * static_cast<double>(batch.rows.size());
    correct += count_correct(step.result.probs, batch.labels);
    seen += batch.rows.size();
  }

  ++epoch_;
  EpochStats stats;
  stats.epoch = epoch_;
  stats.train_loss = loss_sum / static_cast<double>(seen);
  stats.train_accuracy = static_cast<double>(correct) / static_cast<double>(seen);
  if (validation_ && validation_->rows() > 0) {
    const Evaluation ev = evaluate(model_, *validation_, config_.batch_size);
    stats.val_loss = ev.loss;
    stats.val_accuracy = ev.accuracy;
  }
  return stats;
}

template <typename T>
TrainReport train(ModelGraph<T>& model, const data::FlowDataset& train,
                  const data::FlowDataset* validation, const TrainConfig& config) {
  Trainer<T> trainer(model, train, validation, config);
  TrainReport report;
  for (std::size_t e = 0; e < config.epochs; ++e) report.history.push_back(trainer.run_epoch());
  return report;
}

#define CLIDS_INSTANTIATE(T)                                                                    \
  template AdamState<T> adam_init<T>(std::span<Tensor<T>* const>, const AdamHyper&);            \
  template void adam_step<T>(AdamState<T>&, std::span<Tensor<T>* const>,                        \
                             std::span<const Tensor<T>>);                                       \
  template void sgd_step<T>(double, std::span<Tensor<T>* const>, std::span<const Tensor<T>>);   \
  template Evaluation evaluate<T>(const ModelGraph<T>&, const data::FlowDataset&, std::size_t); \
  template class Trainer<T>;                                                                    \
  template TrainReport train<T>(ModelGraph<T>&, const data::FlowDataset&,                       \
                                const data::FlowDataset*, const TrainConfig&);

CLIDS_INSTANTIATE(float)
CLIDS_INSTANTIATE(double)
#undef CLIDS_INSTANTIATE

}  // namespace clids::optim
