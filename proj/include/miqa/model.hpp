#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "miqa/tensor.hpp"

namespace miqa {

struct MlpSpec {
  size_t input_dim = 0;
  std::vector<size_t> hidden_dims;
  size_t output_dim = 0;
};

/// One fully-connected layer. Weights are stored input-major ([in x out],
/// row-major) so the batched forward pass is a single matmul.
struct Layer {
  size_t in = 0;
  size_t out = 0;
  std::vector<double> weight;
  std::vector<double> bias;
};

struct Mlp {
  MlpSpec spec;
  std::vector<Layer> layers;

  size_t param_count() const;
};

/// Kaiming-uniform weights (bound sqrt(6 / fan_in)), zero biases.
/// Deterministic in (spec, seed).
Mlp init_mlp(const MlpSpec& spec, uint64_t seed);

/// Tape leaves for every layer's weight and bias, created in layer order.
/// Gradients land on these leaves after backward().
struct BoundMlp {
  const Mlp* model = nullptr;
  std::vector<Tensor> weights;
  std::vector<Tensor> biases;
};

BoundMlp bind(Tape& tape, const Mlp& mlp);

/// ReLU between layers, identity at the output. batch is [B x input_dim].
Tensor forward_mlp(Tape& tape, const BoundMlp& bound, Tensor batch);

/// bind + forward for passes that do not update the network.
Tensor forward_mlp(Tape& tape, const Mlp& mlp, Tensor batch);

/// Extractor E, complement extractor E^c (same architecture, independent
/// parameters; absent on inference-only loads), and the shared predictor F.
struct ModelTriple {
  Mlp extractor;
  std::optional<Mlp> complement_extractor;
  Mlp predictor;
};

struct ModelDims {
  size_t input_dim = 0;
  std::vector<size_t> extractor_hidden{128};
  size_t feature_dim = 64;
  std::vector<size_t> predictor_hidden{256, 64};
};

/// Three independent parameter sets from one seed; E and E^c share a spec
/// but never storage.
ModelTriple init_model_triple(const ModelDims& dims, uint64_t seed);

/// Mutable views over every parameter buffer, in layer order
/// (weight then bias per layer).
void append_param_spans(Mlp& mlp, std::vector<std::span<double>>& out);
/// Gradient views over a bound network, same order as append_param_spans.
void append_grad_spans(const BoundMlp& bound,
                       std::vector<std::span<const double>>& out);
void append_param_sizes(const Mlp& mlp, std::vector<size_t>& out);

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Bias-corrected Adam over a fixed list of parameter buffers. One step
/// counter covers all of them.
class Adam {
 public:
  Adam(AdamConfig config, std::vector<size_t> param_sizes);

  /// In-place update; gradients are left untouched for the caller to drop
  /// with the tape.
  void step(const std::vector<std::span<double>>& params,
            const std::vector<std::span<const double>>& grads);

  uint64_t step_count() const { return step_; }

 private:
  AdamConfig config_;
  uint64_t step_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

}  // namespace miqa
