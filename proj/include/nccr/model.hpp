#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "nccr/layers.hpp"
#include "nccr/tensor.hpp"

namespace nccr {

// Layer topology of a small feed-forward classifier. The final layer must
// produce a flat logits vector.
struct ModelSpec {
  std::vector<LayerSpec> layers;
  std::vector<int> input_shape;
  float range_lo = 0.0f;
  float range_hi = 1.0f;

  // Per-layer output shapes; validates the whole chain. Throws
  // std::invalid_argument naming the offending layer.
  std::vector<std::vector<int>> layer_output_shapes() const;

  // Width of the final (logits) layer.
  int class_count() const;
};

// Spec plus learned parameters. Immutable once trained; safe to share across
// concurrent readers.
struct Model {
  ModelSpec spec;
  std::vector<Tensor> weights;  // empty Tensor for parameterless layers
  std::vector<Tensor> biases;
  std::string tag = "classifier";
  uint64_t init_seed = 0;

  int64_t parameter_count() const;
  // Short stable id over spec + parameters, for provenance strings.
  std::string id() const;
};

// He-uniform initialization (U(-sqrt(6/fan_in), +sqrt(6/fan_in))), zero
// biases, streams derived per layer from `seed`.
Model build_model(const ModelSpec& spec, uint64_t seed);

struct ForwardOutput {
  Tensor logits;
  float loss = 0.0f;
  bool has_loss = false;
};

// Per-layer post-activation outputs plus pooling argmax bookkeeping, reusable
// across calls to avoid reallocation. Buffers rebind when handed a different
// model object; don't reuse a workspace past the lifetime of the model it
// last ran.
struct Workspace {
  std::vector<Tensor> outputs;
  std::vector<std::vector<int>> pool_argmax;
  const void* bound = nullptr;  // model the buffers were sized for
};

// Runs the network, filling `ws`; returns a reference to the logits
// (ws.outputs.back()). Validates the input shape.
const Tensor& forward_ws(const Model& m, const Tensor& x, Workspace& ws);

// Convenience wrapper; computes cross-entropy loss when a label is given.
ForwardOutput forward(const Model& m, const Tensor& x, std::optional<int> label = std::nullopt);

// Softmax probabilities (double precision, max-shifted).
std::vector<double> softmax(const Tensor& logits);

// -log softmax(logits)[label], max-shifted. Throws on invalid label.
float cross_entropy(const Tensor& logits, int label);

struct GradientSet {
  std::vector<Tensor> weight_grads;
  std::vector<Tensor> bias_grads;
  Tensor input_grad;
};

// Exact gradients of the cross-entropy loss w.r.t. every parameter and the
// input. `ws` must hold a forward pass of (m, x).
GradientSet backward_ws(const Model& m, const Tensor& x, int label, const Workspace& ws);
GradientSet backward(const Model& m, const Tensor& x, int label);

// Gradient of a single logit w.r.t. the input (no loss involved); used by
// saliency-based attacks.
Tensor input_gradient_of_logit(const Model& m, const Tensor& x, int logit_index);

// All logit gradients at once: result[c] = d logits[c] / d x.
std::vector<Tensor> input_jacobian(const Model& m, const Tensor& x);

// Lowest index wins ties.
int argmax_class(const Tensor& logits);

}  // namespace nccr
