#include "miqa/model.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "miqa/rng.hpp"

namespace miqa {

namespace {

void validate_spec(const MlpSpec& spec) {
  if (spec.input_dim == 0 || spec.output_dim == 0) {
    throw std::invalid_argument("MlpSpec: zero input or output dimension");
  }
  for (size_t d : spec.hidden_dims) {
    if (d == 0) throw std::invalid_argument("MlpSpec: zero hidden dimension");
  }
}

std::vector<size_t> layer_dims(const MlpSpec& spec) {
  std::vector<size_t> dims;
  dims.push_back(spec.input_dim);
  dims.insert(dims.end(), spec.hidden_dims.begin(), spec.hidden_dims.end());
  dims.push_back(spec.output_dim);
  return dims;
}

}  // namespace

size_t Mlp::param_count() const {
  size_t n = 0;
  for (const auto& l : layers) n += l.weight.size() + l.bias.size();
  return n;
}

Mlp init_mlp(const MlpSpec& spec, uint64_t seed) {
  validate_spec(spec);
  Rng rng(seed);
  Mlp mlp;
  mlp.spec = spec;
  const auto dims = layer_dims(spec);
  for (size_t l = 0; l + 1 < dims.size(); ++l) {
    Layer layer;
    layer.in = dims[l];
    layer.out = dims[l + 1];
    const double bound = std::sqrt(6.0 / static_cast<double>(layer.in));
    layer.weight.resize(layer.in * layer.out);
    for (auto& w : layer.weight) w = rng.uniform(-bound, bound);
    layer.bias.assign(layer.out, 0.0);
    mlp.layers.push_back(std::move(layer));
  }
  return mlp;
}

BoundMlp bind(Tape& tape, const Mlp& mlp) {
  BoundMlp bound;
  bound.model = &mlp;
  for (const auto& layer : mlp.layers) {
    bound.weights.push_back(tape.leaf({layer.in, layer.out}, layer.weight));
    bound.biases.push_back(tape.leaf({layer.out}, layer.bias));
  }
  return bound;
}

Tensor forward_mlp(Tape& tape, const BoundMlp& bound, Tensor batch) {
  const Mlp& mlp = *bound.model;
  const Shape& bs = batch.shape();
  if (bs.size() != 2 || bs[1] != mlp.spec.input_dim) {
    throw std::invalid_argument(
        "forward_mlp: batch " + shape_str(bs) + " does not match input_dim " +
        std::to_string(mlp.spec.input_dim));
  }
  Tensor x = batch;
  for (size_t l = 0; l < mlp.layers.size(); ++l) {
    x = tape.add(tape.matmul(x, bound.weights[l]), bound.biases[l]);
    if (l + 1 < mlp.layers.size()) x = tape.relu(x);
  }
  return x;
}

Tensor forward_mlp(Tape& tape, const Mlp& mlp, Tensor batch) {
  return forward_mlp(tape, bind(tape, mlp), batch);
}

ModelTriple init_model_triple(const ModelDims& dims, uint64_t seed) {
  MlpSpec extractor_spec{dims.input_dim, dims.extractor_hidden,
                         dims.feature_dim};
  MlpSpec predictor_spec{dims.feature_dim, dims.predictor_hidden, 2};
  ModelTriple triple;
  triple.extractor = init_mlp(extractor_spec, Rng::derive(seed, 1));
  triple.complement_extractor = init_mlp(extractor_spec, Rng::derive(seed, 2));
  triple.predictor = init_mlp(predictor_spec, Rng::derive(seed, 3));
  return triple;
}

void append_param_spans(Mlp& mlp, std::vector<std::span<double>>& out) {
  for (auto& layer : mlp.layers) {
    out.emplace_back(layer.weight);
    out.emplace_back(layer.bias);
  }
}

void append_grad_spans(const BoundMlp& bound,
                       std::vector<std::span<const double>>& out) {
  for (size_t l = 0; l < bound.weights.size(); ++l) {
    out.push_back(bound.weights[l].grad());
    out.push_back(bound.biases[l].grad());
  }
}

void append_param_sizes(const Mlp& mlp, std::vector<size_t>& out) {
  for (const auto& layer : mlp.layers) {
    out.push_back(layer.weight.size());
    out.push_back(layer.bias.size());
  }
}

Adam::Adam(AdamConfig config, std::vector<size_t> param_sizes)
    : config_(config) {
  m_.reserve(param_sizes.size());
  v_.reserve(param_sizes.size());
  for (size_t n : param_sizes) {
    m_.emplace_back(n, 0.0);
    v_.emplace_back(n, 0.0);
  }
}

void Adam::step(const std::vector<std::span<double>>& params,
                const std::vector<std::span<const double>>& grads) {
  if (params.size() != m_.size() || grads.size() != m_.size()) {
    throw std::invalid_argument(
        "adam_step: expected " + std::to_string(m_.size()) +
        " parameter buffers, got " + std::to_string(params.size()) +
        " params / " + std::to_string(grads.size()) + " grads");
  }
  ++step_;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_));
  for (size_t i = 0; i < params.size(); ++i) {
    auto p = params[i];
    auto g = grads[i];
    if (p.size() != m_[i].size() || g.size() != m_[i].size()) {
      throw std::invalid_argument("adam_step: buffer " + std::to_string(i) +
                                  " size mismatch");
    }
    double* m = m_[i].data();
    double* v = v_[i].data();
    for (size_t j = 0; j < p.size(); ++j) {
      m[j] = config_.beta1 * m[j] + (1.0 - config_.beta1) * g[j];
      v[j] = config_.beta2 * v[j] + (1.0 - config_.beta2) * g[j] * g[j];
      const double mhat = m[j] / c1;
      const double vhat = v[j] / c2;
      p[j] -= config_.lr * mhat / (std::sqrt(vhat) + config_.epsilon);
    }
  }
}

}  // namespace miqa
