#include "tsq/model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "tsq/error.hpp"
#include "tsq/rng.hpp"

namespace tsq {

void ModelSpec::validate() const {
  if (widths.size() < 2) {
    throw ConfigError("model: need at least one dense layer");
  }
  for (int w : widths) {
    if (w <= 0) {
      throw ConfigError("model: widths must be positive");
    }
  }
  if (classes != widths.back()) {
    throw ConfigError("model: class count " + std::to_string(classes) +
                      " does not match output width " +
                      std::to_string(widths.back()));
  }
  const int n_layers = dense_layer_count();
  if (n_layers > 6) {
    throw ConfigError("model: at most 6 dense layers supported");
  }
  for (int idx : adapted_layers) {
    if (idx < 0 || idx >= n_layers) {
      throw ConfigError("model: adapted layer " + std::to_string(idx) +
                        " outside [0," + std::to_string(n_layers) + ")");
    }
  }
  if (!std::is_sorted(adapted_layers.begin(), adapted_layers.end()) ||
      std::adjacent_find(adapted_layers.begin(), adapted_layers.end()) !=
          adapted_layers.end()) {
    throw ConfigError("model: adapted layers must be strictly ascending");
  }
  if (attention_gate && widths.size() < 3) {
    throw ConfigError("model: attention gate needs a hidden layer");
  }
}

Batch Batch::row(std::size_t i) const {
  const std::size_t d = features.shape[1];
  Batch out;
  out.features = Tensor({1, d});
  std::copy_n(&features.data[i * d], d, out.features.data.begin());
  out.labels = {labels[i]};
  out.ids = {ids[i]};
  return out;
}

void Batch::validate(int input_dim, int classes) const {
  if (size() == 0) {
    throw ShapeError("batch: empty");
  }
  if (!features.is_matrix() ||
      features.shape[1] != static_cast<std::size_t>(input_dim)) {
    throw ShapeError("batch: feature width " + features.shape_str() +
                     " does not match model input " + std::to_string(input_dim));
  }
  if (features.shape[0] != labels.size() || labels.size() != ids.size()) {
    throw ShapeError("batch: rows, labels and ids disagree");
  }
  for (int y : labels) {
    if (y < 0 || y >= classes) {
      throw ShapeError("batch: label " + std::to_string(y) + " outside [0," +
                       std::to_string(classes) + ")");
    }
  }
}

ModelState init_model(const ModelSpec& spec, int r_init, int r_max,
                      std::uint64_t seed) {
  spec.validate();
  ModelState state;
  state.spec = spec;
  Rng rng(derive_seed(seed, "base-weights"));
  for (int l = 0; l < spec.dense_layer_count(); ++l) {
    const auto fan_in = static_cast<std::size_t>(spec.widths[l]);
    const auto fan_out = static_cast<std::size_t>(spec.widths[l + 1]);
    DenseLayer layer;
    layer.w = Tensor({fan_out, fan_in});
    const double std_dev = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (double& v : layer.w.data) {
      v = std_dev * rng.gaussian();
    }
    layer.b = Tensor({fan_out}, 0.0);
    state.layers.push_back(std::move(layer));
  }
  if (spec.attention_gate) {
    const auto h = static_cast<std::size_t>(spec.widths[1]);
    AttentionGate gate;
    gate.wq = Tensor({h, h});
    gate.wv = Tensor({h, h});
    const double std_dev = 1.0 / std::sqrt(static_cast<double>(h));
    for (double& v : gate.wq.data) {
      v = std_dev * rng.gaussian();
    }
    for (double& v : gate.wv.data) {
      v = std_dev * rng.gaussian();
    }
    state.gate = std::move(gate);
  }
  for (int idx : spec.adapted_layers) {
    state.adapters.emplace(
        idx, init_adapter(spec.widths[idx], spec.widths[idx + 1], r_init, r_max,
                          derive_seed(seed, "adapter-" + std::to_string(idx))));
  }
  state.base_checksum = base_weights_checksum(state);
  return state;
}

std::uint64_t base_weights_checksum(const ModelState& state) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const DenseLayer& layer : state.layers) {
    h = fnv1a64(layer.w.data.data(), layer.w.data.size() * sizeof(double), h);
    h = fnv1a64(layer.b.data.data(), layer.b.data.size() * sizeof(double), h);
  }
  if (state.gate) {
    h = fnv1a64(state.gate->wq.data.data(),
                state.gate->wq.data.size() * sizeof(double), h);
    h = fnv1a64(state.gate->wv.data.data(),
                state.gate->wv.data.size() * sizeof(double), h);
  }
  return h;
}

long active_param_count(const ModelState& state) {
  long n = 0;
  for (const auto& [idx, adapter] : state.adapters) {
    n += adapter.active_params();
  }
  return n;
}

TapeBindings forward_on_tape(GradTape& tape, const ModelState& state,
                             const Batch& batch, bool with_loss) {
  batch.validate(state.spec.input_dim(), state.spec.classes);
  TapeBindings bind;
  GradTape::Id h = tape.leaf(batch.features);
  const int n_layers = state.spec.dense_layer_count();
  for (int l = 0; l < n_layers; ++l) {
    const DenseLayer& layer = state.layers[static_cast<std::size_t>(l)];
    const GradTape::Id w_id = tape.leaf(layer.w);
    bind.base_w[l] = w_id;
    GradTape::Id z = tape.matmul_nt(h, w_id);
    auto it = state.adapters.find(l);
    if (it != state.adapters.end()) {
      const LoraAdapter& ad = it->second;
      const GradTape::Id a_id = tape.leaf(ad.a);
      const GradTape::Id b_id = tape.leaf(ad.b);
      bind.adapter_ab[l] = {a_id, b_id};
      // x A^T M B^T: the diagonal mask zeroes both the contribution and the
      // gradient of inactive components.
      GradTape::Id u = tape.matmul_nt(h, a_id);
      u = tape.matmul(u, tape.leaf(ad.mask_diag()));
      z = tape.add(z, tape.matmul_nt(u, b_id));
    }
    z = tape.add_rowvec(z, tape.leaf(layer.b));
    const bool is_output = l == n_layers - 1;
    if (!is_output && state.spec.activation == Activation::kRelu) {
      z = tape.relu(z);
    }
    if (l == 0 && state.gate && !is_output) {
      // Softmax feature gate; rescaled by the width so the average gate
      // passes signal at unit magnitude.
      const GradTape::Id q = tape.matmul_nt(z, tape.leaf(state.gate->wq));
      const GradTape::Id weights = tape.softmax_rows(q);
      const GradTape::Id values = tape.matmul_nt(z, tape.leaf(state.gate->wv));
      z = tape.scale(tape.mul(weights, values),
                     static_cast<double>(tape.value(weights).shape[1]));
    }
    h = z;
  }
  bind.logits = h;
  if (with_loss) {
    bind.loss = tape.cross_entropy(h, batch.labels);
  }
  return bind;
}

Tensor forward(const ModelState& state, const Batch& batch) {
  GradTape tape;
  const TapeBindings bind = forward_on_tape(tape, state, batch, false);
  return tape.value(bind.logits);
}

double batch_loss(const ModelState& state, const Batch& batch) {
  GradTape tape;
  const TapeBindings bind = forward_on_tape(tape, state, batch, true);
  return tape.value(bind.loss).data[0];
}

GradResult batch_gradient(const ModelState& state, const Batch& batch,
                          bool probe_base) {
  GradTape tape;
  const TapeBindings bind = forward_on_tape(tape, state, batch, true);
  tape.backward(bind.loss);
  GradResult out;
  out.loss = tape.value(bind.loss).data[0];
  for (const auto& [idx, ab] : bind.adapter_ab) {
    out.a_grad.emplace(idx, tape.grad(ab.first));
    out.b_grad.emplace(idx, tape.grad(ab.second));
  }
  if (probe_base) {
    for (int idx : state.spec.adapted_layers) {
      out.w_grad.emplace(idx, tape.grad(bind.base_w.at(idx)));
    }
  }
  return out;
}

GradResult per_sample_gradient(const ModelState& state, const Batch& sample,
                               bool probe_base) {
  if (sample.size() != 1) {
    throw ShapeError("per_sample_gradient: expected batch of size 1, got " +
                     std::to_string(sample.size()));
  }
  return batch_gradient(state, sample, probe_base);
}

void sgd_step(ModelState& state, const GradResult& grads, double lr) {
  if (lr < 0.0) {
    throw ConfigError("sgd: learning rate must be non-negative");
  }
  for (auto& [idx, adapter] : state.adapters) {
    const Tensor& ga = grads.a_grad.at(idx);
    const Tensor& gb = grads.b_grad.at(idx);
    if (!ga.same_shape(adapter.a) || !gb.same_shape(adapter.b)) {
      throw ShapeError("sgd: gradient shape does not cover adapter at layer " +
                       std::to_string(idx));
    }
    for (std::size_t i = 0; i < adapter.a.data.size(); ++i) {
      adapter.a.data[i] -= lr * ga.data[i];
    }
    for (std::size_t i = 0; i < adapter.b.data.size(); ++i) {
      adapter.b.data[i] -= lr * gb.data[i];
    }
    check_finite(adapter.a, "sgd");
    check_finite(adapter.b, "sgd");
  }
  ++state.step;
}

std::vector<double> flatten_trainable(const ModelState& state) {
  std::vector<double> out;
  for (const auto& [idx, adapter] : state.adapters) {
    out.insert(out.end(), adapter.a.data.begin(), adapter.a.data.end());
    out.insert(out.end(), adapter.b.data.begin(), adapter.b.data.end());
  }
  return out;
}

std::vector<double> flatten_trainable_grads(const ModelState& state,
                                            const GradResult& grads) {
  std::vector<double> out;
  for (const auto& [idx, adapter] : state.adapters) {
    const Tensor& ga = grads.a_grad.at(idx);
    const Tensor& gb = grads.b_grad.at(idx);
    out.insert(out.end(), ga.data.begin(), ga.data.end());
    out.insert(out.end(), gb.data.begin(), gb.data.end());
  }
  return out;
}

void apply_trainable(ModelState& state, const std::vector<double>& theta) {
  std::size_t pos = 0;
  for (auto& [idx, adapter] : state.adapters) {
    if (pos + adapter.a.data.size() + adapter.b.data.size() > theta.size()) {
      throw ShapeError("apply_trainable: vector too short");
    }
    std::copy_n(&theta[pos], adapter.a.data.size(), adapter.a.data.begin());
    pos += adapter.a.data.size();
    std::copy_n(&theta[pos], adapter.b.data.size(), adapter.b.data.begin());
    pos += adapter.b.data.size();
  }
  if (pos != theta.size()) {
    throw ShapeError("apply_trainable: vector length mismatch");
  }
}

double trainable_grad_sq_norm(const GradResult& grads) {
  double s = 0.0;
  for (const auto& [idx, g] : grads.a_grad) {
    for (double v : g.data) {
      s += v * v;
    }
  }
  for (const auto& [idx, g] : grads.b_grad) {
    for (double v : g.data) {
      s += v * v;
    }
  }
  return s;
}

}  // namespace tsq
