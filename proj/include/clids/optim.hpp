#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "clids/data.hpp"
#include "clids/model.hpp"
#include "clids/tensor.hpp"

namespace clids::optim {

struct AdamHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// First/second moment estimates mirroring the parameter list.
template <typename T>
struct AdamState {
  AdamHyper hyper;
  std::vector<Tensor<T>> m;
  std::vector<Tensor<T>> v;
  std::uint64_t t = 0;
};

template <typename T>
AdamState<T> adam_init(std::span<Tensor<T>* const> params, const AdamHyper& hyper = {});

/// t <- t + 1; m <- b1 m + (1 - b1) g; v <- b2 v + (1 - b2) g^2;
/// theta <- theta - lr * m_hat / (sqrt(v_hat) + eps) with the usual bias
/// corrections m_hat = m / (1 - b1^t), v_hat = v / (1 - b2^t).
template <typename T>
void adam_step(AdamState<T>& state, std::span<Tensor<T>* const> params,
               std::span<const Tensor<T>> grads);

/// Plain gradient descent: theta <- theta - lr * g.
template <typename T>
void sgd_step(double lr, std::span<Tensor<T>* const> params, std::span<const Tensor<T>> grads);

struct TrainConfig {
  std::size_t epochs = 25;
  std::size_t batch_size = 256;
  AdamHyper adam;
  std::uint64_t seed = 42;
  bool shuffle = true;

  /// Throws InvalidConfig.
  void validate() const;
};

struct EpochStats {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  std::optional<double> val_loss;
  std::optional<double> val_accuracy;
};

struct TrainReport {
  std::vector<EpochStats> history;
};

/// Mean cross-entropy and accuracy of infer-mode predictions over a dataset.
struct Evaluation {
  double loss = 0.0;
  double accuracy = 0.0;
};

template <typename T>
Evaluation evaluate(const ModelGraph<T>& model, const data::FlowDataset& ds,
                    std::size_t chunk = 256);

/// Epoch-level training driver. Each epoch shuffles with a stream derived
/// from (seed, epoch), runs one Adam step per mini-batch in train mode, and
/// scores the validation set in infer mode. A trailing batch of a single
/// row is folded into the batch before it, since train-mode BatchNorm needs
/// at least two rows.
template <typename T>
class Trainer {
 public:
  Trainer(ModelGraph<T>& model, const data::FlowDataset& train,
          const data::FlowDataset* validation, TrainConfig config);

  EpochStats run_epoch();
  std::size_t epochs_run() const noexcept { return epoch_; }
  const AdamState<T>& adam() const noexcept { return adam_; }

 private:
  ModelGraph<T>& model_;
  const data::FlowDataset& train_;
  const data::FlowDataset* validation_;
  TrainConfig config_;
  std::vector<Tensor<T>*> params_;
  AdamState<T> adam_;
  std::size_t epoch_ = 0;
};

/// Runs config.epochs epochs; the final model is the last-epoch model.
/// Throws EmptyDataset, InvalidConfig.
template <typename T>
TrainReport train(ModelGraph<T>& model, const data::FlowDataset& train,
                  const data::FlowDataset* validation, const TrainConfig& config);

}  // namespace clids::optim
