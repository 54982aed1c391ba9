#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "tsq/adapters.hpp"
#include "tsq/autodiff.hpp"
#include "tsq/tensor.hpp"

namespace tsq {

enum class Activation { kRelu, kIdentity };

// Dense MLP description. widths runs input, hidden..., classes; dense layer i
// maps widths[i] -> widths[i+1]. adapted_layers lists the dense layers that
// carry LoRA adapters. The optional gate is a frozen softmax feature-mixing
// block applied after the first hidden activation.
struct ModelSpec {
  std::vector<int> widths;
  Activation activation = Activation::kRelu;
  std::vector<int> adapted_layers;
  int classes = 0;
  bool attention_gate = false;

  int dense_layer_count() const {
    return static_cast<int>(widths.size()) - 1;
  }
  int input_dim() const { return widths.empty() ? 0 : widths.front(); }
  void validate() const;  // throws ConfigError
};

struct Batch {
  Tensor features;  // n x d
  std::vector<int> labels;
  std::vector<std::int64_t> ids;

  std::size_t size() const { return labels.size(); }
  Batch row(std::size_t i) const;
  void validate(int input_dim, int classes) const;
};

struct DenseLayer {
  Tensor w;  // out x in, frozen after init
  Tensor b;  // out, frozen after init
};

struct AttentionGate {
  Tensor wq;  // h x h, frozen
  Tensor wv;  // h x h, frozen
};

struct ModelState {
  ModelSpec spec;
  std::vector<DenseLayer> layers;
  std::optional<AttentionGate> gate;
  std::map<int, LoraAdapter> adapters;  // key: dense layer index
  std::int64_t step = 0;
  std::uint64_t base_checksum = 0;  // checksum of frozen weights at init
};

// Seeded init: base weights Gaussian(0, 1/sqrt(fan_in)), zero biases,
// adapters at r_init with capacity r_max. Base weights never change later.
ModelState init_model(const ModelSpec& spec, int r_init, int r_max,
                      std::uint64_t seed);

std::uint64_t base_weights_checksum(const ModelState& state);
long active_param_count(const ModelState& state);

// Handles into a forward tape for gradient extraction.
struct TapeBindings {
  GradTape::Id logits = -1;
  GradTape::Id loss = -1;
  std::map<int, std::pair<GradTape::Id, GradTape::Id>> adapter_ab;
  std::map<int, GradTape::Id> base_w;
};

// Builds the forward graph for `batch` on `tape`; with_loss attaches the
// mean cross-entropy node.
TapeBindings forward_on_tape(GradTape& tape, const ModelState& state,
                             const Batch& batch, bool with_loss);

Tensor forward(const ModelState& state, const Batch& batch);
double batch_loss(const ModelState& state, const Batch& batch);

// Gradients of the mean cross-entropy over a batch. Adapter factor grads are
// stored at full r_max layout (masked components are exactly zero). Base
// weight grads are populated only when probe_base is set; they are probe
// readouts, never update targets.
struct GradResult {
  std::map<int, Tensor> a_grad;
  std::map<int, Tensor> b_grad;
  std::map<int, Tensor> w_grad;
  double loss = 0.0;
};

GradResult batch_gradient(const ModelState& state, const Batch& batch,
                          bool probe_base = false);
// Precondition: batch of size 1.
GradResult per_sample_gradient(const ModelState& state, const Batch& sample,
                               bool probe_base = false);

// theta <- theta - lr * grad on adapter factors only. lr <= 0 -> ConfigError.
void sgd_step(ModelState& state, const GradResult& grads, double lr);

// Flattened trainable-parameter view in a fixed order (ascending layer,
// A row-major then B row-major, full r_max layout).
std::vector<double> flatten_trainable(const ModelState& state);
std::vector<double> flatten_trainable_grads(const ModelState& state,
                                            const GradResult& grads);
void apply_trainable(ModelState& state, const std::vector<double>& theta);

double trainable_grad_sq_norm(const GradResult& grads);

}  // namespace tsq
