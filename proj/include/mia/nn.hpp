// Copyright 2026 The mia-transfer Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "mia/common.hpp"
#include "mia/dataset.hpp"
#include "mia/tensor.hpp"

namespace mia {

enum class Activation { kRelu, kIdentity };

inline std::string ToString(Activation a) {
  return a == Activation::kRelu ? "relu" : "identity";
}

inline Activation ActivationFromString(const std::string& s) {
  if (s == "relu") return Activation::kRelu;
  if (s == "identity") return Activation::kIdentity;
  throw ValidationError("unknown activation '" + s + "'");
}

// Fully connected layer. weights is (outputs x inputs), row-major.
struct DenseLayer {
  std::size_t inputs = 0;
  std::size_t outputs = 0;
  std::vector<double> weights;
  std::vector<double> biases;
  Activation activation = Activation::kRelu;
  bool trainable = true;
  int part = 1;  // freeze group, 1-based

  double& w(std::size_t o, std::size_t i) { return weights[o * inputs + i]; }
  double w(std::size_t o, std::size_t i) const { return weights[o * inputs + i]; }

  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

// Feed-forward stack of dense layers. The last layer emits logits; softmax is
// applied only inside the loss.
struct Network {
  std::vector<DenseLayer> layers;

  std::size_t depth() const { return layers.size(); }
  std::size_t input_dim() const {
    return layers.empty() ? 0 : layers.front().inputs;
  }
  std::size_t num_classes() const {
    return layers.empty() ? 0 : layers.back().outputs;
  }
  int num_parts() const { return layers.empty() ? 0 : layers.back().part; }

  void Validate() const {
    if (layers.empty()) throw ShapeError("network has no layers");
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const auto& layer = layers[l];
      if (layer.inputs == 0 || layer.outputs == 0) {
        throw ShapeError("layer " + std::to_string(l) + " has a zero dimension");
      }
      if (layer.weights.size() != layer.inputs * layer.outputs ||
          layer.biases.size() != layer.outputs) {
        throw ShapeError("layer " + std::to_string(l) +
                         " parameter sizes do not match its dimensions");
      }
      if (l > 0 && layers[l - 1].outputs != layer.inputs) {
        throw ShapeError("layer " + std::to_string(l) + " expects " +
                         std::to_string(layer.inputs) + " inputs but layer " +
                         std::to_string(l - 1) + " produces " +
                         std::to_string(layers[l - 1].outputs));
      }
      if (layer.part < 1 || (l > 0 && layer.part < layers[l - 1].part)) {
        throw ValidationError("layer " + std::to_string(l) +
                              ": part indices must be positive and "
                              "non-decreasing");
      }
    }
  }

  std::size_t ParameterCount() const {
    std::size_t n = 0;
    for (const auto& layer : layers) n += layer.weights.size() + layer.biases.size();
    return n;
  }

  friend bool operator==(const Network&, const Network&) = default;
};

// Layer widths of an MLP. Each hidden layer is its own part; the output
// layer forms the final part, so parts() == hidden.size() + 1.
struct Architecture {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden;
  std::size_t classes = 0;

  std::size_t parts() const { return hidden.size() + 1; }

  void Validate() const {
    Require(input_dim >= 1, "architecture: input_dim must be positive");
    Require(classes >= 2, "architecture: at least two classes required");
    for (auto h : hidden) Require(h >= 1, "architecture: zero-width hidden layer");
  }

  friend bool operator==(const Architecture&, const Architecture&) = default;
};

// Glorot-uniform weights, zero biases.
inline DenseLayer MakeDenseLayer(std::size_t inputs, std::size_t outputs,
                                 Activation activation, int part, Rng& rng) {
  DenseLayer layer;
  layer.inputs = inputs;
  layer.outputs = outputs;
  layer.activation = activation;
  layer.part = part;
  layer.biases.assign(outputs, 0.0);
  layer.weights.resize(inputs * outputs);
  const double limit = std::sqrt(6.0 / static_cast<double>(inputs + outputs));
  for (double& w : layer.weights) w = rng.Uniform(-limit, limit);
  return layer;
}

inline Network BuildNetwork(const Architecture& arch, std::uint64_t seed) {
  arch.Validate();
  Rng rng(DeriveSeed(seed, "init"));
  Network net;
  std::size_t width = arch.input_dim;
  int part = 1;
  for (std::size_t h : arch.hidden) {
    net.layers.push_back(MakeDenseLayer(width, h, Activation::kRelu, part++, rng));
    width = h;
  }
  net.layers.push_back(
      MakeDenseLayer(width, arch.classes, Activation::kIdentity, part, rng));
  return net;
}

struct ForwardResult {
  Tensor logits;
  std::vector<Tensor> activations;  // one per layer, post-activation
};

inline void CheckBatch(const Network& net, const Tensor& batch) {
  net.Validate();
  if (batch.rank() != 2 || batch.cols() != net.input_dim()) {
    throw ShapeError("layer 0 expects inputs of width " +
                     std::to_string(net.input_dim()) + ", got batch of width " +
                     std::to_string(batch.rank() == 2 ? batch.cols() : 0));
  }
}

inline Tensor ApplyLayer(const DenseLayer& layer, const Tensor& in) {
  const std::size_t n = in.rows();
  Tensor out = Tensor::Matrix(n, layer.outputs);
  for (std::size_t r = 0; r < n; ++r) {
    const auto x = in.Row(r);
    auto y = out.Row(r);
    for (std::size_t o = 0; o < layer.outputs; ++o) {
      const double* w = &layer.weights[o * layer.inputs];
      double acc = layer.biases[o];
      for (std::size_t i = 0; i < layer.inputs; ++i) acc += w[i] * x[i];
      if (layer.activation == Activation::kRelu && acc < 0.0) acc = 0.0;
      y[o] = acc;
    }
  }
  return out;
}

inline ForwardResult ForwardWithActivations(const Network& net,
                                            const Tensor& batch) {
  CheckBatch(net, batch);
  ForwardResult result;
  result.activations.reserve(net.depth());
  const Tensor* current = &batch;
  for (const auto& layer : net.layers) {
    result.activations.push_back(ApplyLayer(layer, *current));
    current = &result.activations.back();
  }
  result.logits = result.activations.back();
  return result;
}

inline Tensor Predict(const Network& net, const Tensor& batch) {
  return ForwardWithActivations(net, batch).logits;
}

struct LayerGradient {
  std::size_t layer = 0;
  std::vector<double> weights;
  std::vector<double> biases;
};

// Gradients for trainable layers only, in layer order.
struct Gradients {
  std::vector<LayerGradient> layers;

  const LayerGradient* Find(std::size_t layer) const {
    for (const auto& g : layers) {
      if (g.layer == layer) return &g;
    }
    return nullptr;
  }
};

struct LossResult {
  double loss = 0.0;
  Gradients grads;
  Tensor logits;
};

// Mean softmax cross-entropy computed through log-sum-exp. When delta is
// given it receives d(loss)/d(logits).
inline double CrossEntropy(const Tensor& logits,
                           std::span<const std::size_t> labels,
                           Tensor* delta = nullptr) {
  const std::size_t n = logits.rows();
  const std::size_t classes = logits.cols();
  if (delta != nullptr) *delta = Tensor::Matrix(n, classes);
  double total = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    const auto z = logits.Row(r);
    double m = z[0];
    for (double v : z) m = std::max(m, v);
    double sum = 0.0;
    for (double v : z) sum += std::exp(v - m);
    const double lse = m + std::log(sum);
    total += lse - z[labels[r]];
    if (delta != nullptr) {
      auto d = delta->Row(r);
      for (std::size_t c = 0; c < classes; ++c) {
        d[c] = std::exp(z[c] - lse) / static_cast<double>(n);
      }
      d[labels[r]] -= 1.0 / static_cast<double>(n);
    }
  }
  return total / static_cast<double>(n);
}

// Mean softmax cross-entropy and its gradients by backpropagation. Frozen
// layers get no gradient entries; backprop stops below the first trainable
// layer.
inline LossResult LossAndGradients(const Network& net, const Tensor& batch,
                                   std::span<const std::size_t> labels) {
  CheckBatch(net, batch);
  const std::size_t n = batch.rows();
  Require(n > 0, "loss: empty batch");
  Require(labels.size() == n, "loss: label count does not match batch size");
  const std::size_t classes = net.num_classes();
  for (std::size_t i = 0; i < n; ++i) {
    Require(labels[i] < classes, "loss: label " + std::to_string(labels[i]) +
                                     " out of range [0, " +
                                     std::to_string(classes) + ")");
  }

  auto fwd = ForwardWithActivations(net, batch);
  LossResult result;
  Tensor delta;
  result.loss = CrossEntropy(fwd.logits, labels, &delta);

  std::size_t lowest_trainable = net.depth();
  for (std::size_t l = 0; l < net.depth(); ++l) {
    if (net.layers[l].trainable) {
      lowest_trainable = l;
      break;
    }
  }

  for (std::size_t l = net.depth(); l-- > lowest_trainable;) {
    const auto& layer = net.layers[l];
    const Tensor& in = l == 0 ? batch : fwd.activations[l - 1];
    // delta is d(loss)/d(output of layer l); fold in its activation.
    if (layer.activation == Activation::kRelu) {
      const Tensor& out = fwd.activations[l];
      for (std::size_t k = 0; k < delta.size(); ++k) {
        if (out.data()[k] <= 0.0) delta.data()[k] = 0.0;
      }
    }
    if (layer.trainable) {
      LayerGradient g;
      g.layer = l;
      g.weights.assign(layer.weights.size(), 0.0);
      g.biases.assign(layer.outputs, 0.0);
      for (std::size_t r = 0; r < n; ++r) {
        const auto d = delta.Row(r);
        const auto x = in.Row(r);
        for (std::size_t o = 0; o < layer.outputs; ++o) {
          g.biases[o] += d[o];
          double* gw = &g.weights[o * layer.inputs];
          for (std::size_t i = 0; i < layer.inputs; ++i) gw[i] += d[o] * x[i];
        }
      }
      result.grads.layers.push_back(std::move(g));
    }
    if (l > lowest_trainable) {
      Tensor prev = Tensor::Matrix(n, layer.inputs);
      for (std::size_t r = 0; r < n; ++r) {
        const auto d = delta.Row(r);
        auto p = prev.Row(r);
        for (std::size_t o = 0; o < layer.outputs; ++o) {
          const double* w = &layer.weights[o * layer.inputs];
          for (std::size_t i = 0; i < layer.inputs; ++i) p[i] += d[o] * w[i];
        }
      }
      delta = std::move(prev);
    }
  }
  std::reverse(result.grads.layers.begin(), result.grads.layers.end());
  result.logits = std::move(fwd.logits);
  return result;
}

enum class Optimizer { kSgd, kAdam };

struct AdamParams {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  friend bool operator==(const AdamParams&, const AdamParams&) = default;
};

struct Hyperparams {
  std::size_t epochs = 100;
  double learning_rate = 0.001;
  std::size_t batch_size = 32;
  Optimizer optimizer = Optimizer::kAdam;
  AdamParams adam;
  std::uint64_t seed = 0;

  void Validate() const {
    Require(epochs >= 1, "hyperparams: epochs must be >= 1");
    Require(learning_rate > 0.0 && learning_rate < 1.0,
            "hyperparams: learning_rate must be in (0, 1)");
    Require(batch_size >= 1, "hyperparams: batch_size must be >= 1");
    if (optimizer == Optimizer::kAdam) {
      Require(adam.beta1 >= 0.0 && adam.beta1 < 1.0 && adam.beta2 >= 0.0 &&
                  adam.beta2 < 1.0 && adam.epsilon > 0.0,
              "hyperparams: invalid Adam constants");
    }
  }

  friend bool operator==(const Hyperparams&, const Hyperparams&) = default;
};

struct TrainHistory {
  std::vector<double> loss;      // mean training loss per epoch
  std::vector<double> accuracy;  // running training accuracy per epoch

  friend bool operator==(const TrainHistory&, const TrainHistory&) = default;
};

struct TrainResult {
  Network net;
  TrainHistory history;
};

// Mini-batch training. Shuffling derives only from hp.seed; the trailing
// partial batch is kept. Frozen layers are never written.
inline TrainResult Train(Network net, const LabeledDataset& data,
                         const Hyperparams& hp) {
  hp.Validate();
  data.Validate();
  net.Validate();
  Require(!data.empty(), "train: empty dataset");
  Require(net.num_classes() == data.num_classes,
          "train: network has " + std::to_string(net.num_classes()) +
              " outputs but data has " + std::to_string(data.num_classes) +
              " classes");
  if (data.dim() != net.input_dim()) {
    throw ShapeError("layer 0 expects inputs of width " +
                     std::to_string(net.input_dim()) + ", data has width " +
                     std::to_string(data.dim()));
  }

  struct Moments {
    std::vector<double> mw, vw, mb, vb;
  };
  std::vector<Moments> moments(net.depth());
  for (std::size_t l = 0; l < net.depth(); ++l) {
    const auto& layer = net.layers[l];
    if (!layer.trainable) continue;
    moments[l].mw.assign(layer.weights.size(), 0.0);
    moments[l].vw.assign(layer.weights.size(), 0.0);
    moments[l].mb.assign(layer.biases.size(), 0.0);
    moments[l].vb.assign(layer.biases.size(), 0.0);
  }

  const bool any_trainable =
      std::any_of(net.layers.begin(), net.layers.end(),
                  [](const DenseLayer& layer) { return layer.trainable; });

  Rng rng(DeriveSeed(hp.seed, "shuffle"));
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t dim = data.dim();
  std::uint64_t step = 0;
  TrainHistory history;

  for (std::size_t epoch = 0; epoch < hp.epochs; ++epoch) {
    rng.Shuffle(order);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += hp.batch_size) {
      const std::size_t end = std::min(order.size(), start + hp.batch_size);
      const std::size_t bs = end - start;
      Tensor batch = Tensor::Matrix(bs, dim);
      std::vector<std::size_t> labels(bs);
      for (std::size_t k = 0; k < bs; ++k) {
        const auto src = data.inputs.Row(order[start + k]);
        std::copy(src.begin(), src.end(), batch.Row(k).begin());
        labels[k] = data.labels[order[start + k]];
      }

      LossResult lr;
      if (any_trainable) {
        lr = LossAndGradients(net, batch, labels);
      } else {
        lr.logits = Predict(net, batch);
        lr.loss = CrossEntropy(lr.logits, labels);
      }
      if (!std::isfinite(lr.loss)) {
        throw DivergenceError(epoch, "training diverged: non-finite loss at epoch " +
                                         std::to_string(epoch + 1));
      }
      loss_sum += lr.loss * static_cast<double>(bs);
      for (std::size_t k = 0; k < bs; ++k) {
        if (Argmax(lr.logits.Row(k)) == labels[k]) ++correct;
      }

      ++step;
      for (const auto& g : lr.grads.layers) {
        auto& layer = net.layers[g.layer];
        if (hp.optimizer == Optimizer::kSgd) {
          for (std::size_t k = 0; k < g.weights.size(); ++k) {
            layer.weights[k] -= hp.learning_rate * g.weights[k];
          }
          for (std::size_t k = 0; k < g.biases.size(); ++k) {
            layer.biases[k] -= hp.learning_rate * g.biases[k];
          }
          continue;
        }
        const auto& a = hp.adam;
        const double c1 = 1.0 - std::pow(a.beta1, static_cast<double>(step));
        const double c2 = 1.0 - std::pow(a.beta2, static_cast<double>(step));
        auto update = [&](std::vector<double>& param, const std::vector<double>& grad,
                          std::vector<double>& m, std::vector<double>& v) {
          for (std::size_t k = 0; k < param.size(); ++k) {
            m[k] = a.beta1 * m[k] + (1.0 - a.beta1) * grad[k];
            v[k] = a.beta2 * v[k] + (1.0 - a.beta2) * grad[k] * grad[k];
            const double mhat = m[k] / c1;
            const double vhat = v[k] / c2;
            param[k] -= hp.learning_rate * mhat / (std::sqrt(vhat) + a.epsilon);
          }
        };
        auto& mo = moments[g.layer];
        update(layer.weights, g.weights, mo.mw, mo.vw);
        update(layer.biases, g.biases, mo.mb, mo.vb);
      }
    }
    history.loss.push_back(loss_sum / static_cast<double>(data.size()));
    history.accuracy.push_back(static_cast<double>(correct) /
                               static_cast<double>(data.size()));
  }
  return {std::move(net), std::move(history)};
}

// Fraction of rows whose argmax logit equals the label.
inline double Accuracy(const Network& net, const LabeledDataset& data) {
  if (data.empty()) return 0.0;
  const Tensor logits = Predict(net, data.inputs);
  std::size_t correct = 0;
  for (std::size_t r = 0; r < data.size(); ++r) {
    if (Argmax(logits.Row(r)) == data.labels[r]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

// Serialization. Parameters are written as JSON numbers; the emitter uses
// the shortest representation that round-trips exactly (at most 17
// significant digits).
inline constexpr int kNetworkFormatVersion = 1;

inline nlohmann::json NetworkToJson(const Network& net) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& layer : net.layers) {
    layers.push_back({{"inputs", layer.inputs},
                      {"outputs", layer.outputs},
                      {"activation", ToString(layer.activation)},
                      {"part", layer.part},
                      {"trainable", layer.trainable},
                      {"weights", layer.weights},
                      {"biases", layer.biases}});
  }
  return {{"format", "mia-network"},
          {"version", kNetworkFormatVersion},
          {"layers", std::move(layers)}};
}

inline Network NetworkFromJson(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != "mia-network") {
      throw ValidationError("not a mia-network document");
    }
    const int version = j.at("version").get<int>();
    if (version != kNetworkFormatVersion) {
      throw ValidationError("unsupported network version " +
                            std::to_string(version));
    }
    Network net;
    for (const auto& jl : j.at("layers")) {
      DenseLayer layer;
      layer.inputs = jl.at("inputs").get<std::size_t>();
      layer.outputs = jl.at("outputs").get<std::size_t>();
      layer.activation = ActivationFromString(jl.at("activation").get<std::string>());
      layer.part = jl.at("part").get<int>();
      layer.trainable = jl.at("trainable").get<bool>();
      layer.weights = jl.at("weights").get<std::vector<double>>();
      layer.biases = jl.at("biases").get<std::vector<double>>();
      net.layers.push_back(std::move(layer));
    }
    net.Validate();
    return net;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("network json: ") + e.what());
  }
}

}  // namespace mia
