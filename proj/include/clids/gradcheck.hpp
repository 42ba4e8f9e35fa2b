#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "clids/model.hpp"
#include "clids/tensor.hpp"

// Central finite-difference verification of the hand-written backward passes,
// always in 64-bit precision.
//
// For each checked tensor the reported error is the norm-wise relative error
//   ||analytic - numeric|| / (||analytic|| + ||numeric||)
// over the sampled entries. A tensor whose analytic and numeric norms are
// both below `zero_floor` has an identically zero gradient (a conv bias
// feeding train-mode batchnorm, for instance); its error is reported as the
// raw difference norm and it is marked `structural_zero`. Entries whose +-h
// perturbation flips the sign of any ReLU input are skipped: the loss is
// not differentiable across that kink.

namespace clids::gradcheck {

struct Options {
  double step = 1e-5;
  /// Entries sampled per tensor; smaller tensors are checked exhaustively.
  std::size_t max_entries = 24;
  std::size_t batch = 4;
  double zero_floor = 1e-8;
};

struct TensorResult {
  std::string name;
  double rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;
  bool structural_zero = false;
};

struct Report {
  std::vector<TensorResult> results;

  /// True iff every tensor's error is strictly below `tolerance`.
  bool passed(double tolerance) const;
  const TensorResult& worst() const;
};

/// Checks a scalar objective against analytic gradients for `target`.
/// `objective` evaluates the loss at the current parameter values;
/// `differentiable` (optional) reports whether the current point lies on the
/// same smooth piece as the unperturbed one.
TensorResult check_tensor(const std::string& name, Tensor<double>& target,
                          const Tensor<double>& analytic, const std::function<double()>& objective,
                          const std::function<bool()>& differentiable, std::uint64_t seed,
                          const Options& options);

/// Every layer type (conv1d same/valid, batchnorm train/infer, avgpool,
/// dense, activations, LSTM sequence/last), each parameter and input.
Report check_layers(std::uint64_t seed, const Options& options = {});

/// Every trainable tensor of the full dual-head graph under the
/// cross-entropy loss, with batchnorm in the given mode. Biases, BatchNorm
/// affine parameters and running statistics are first offset by U(-0.5, 0.5)
/// so the check runs at a generic point rather than at initialization. Tensor names are
/// "model.train.<param>" or "model.infer.<param>".
Report check_model(const ModelConfig& config, std::uint64_t seed, nn::Mode mode,
                   const Options& options = {});

/// Layers, then the model in train mode, then in infer mode.
Report check_all(std::uint64_t seed, const Options& options = {});

}  // namespace clids::gradcheck
