#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "blockecho/errors.hpp"
#include "blockecho/numkern/matrix.hpp"
#include "blockecho/numkern/rng.hpp"

namespace blockecho::numkern {

enum class Activation { relu, sigmoid, identity };

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double activate(Activation act, double x) {
  switch (act) {
    case Activation::relu:
      return x > 0.0 ? x : 0.0;
    case Activation::sigmoid:
      return sigmoid(x);
    case Activation::identity:
      return x;
  }
  return x;
}

// Derivative expressed through the activation's output y (and pre-activation z for relu).
inline double activation_slope(Activation act, double z, double y) {
  switch (act) {
    case Activation::relu:
      return z > 0.0 ? 1.0 : 0.0;
    case Activation::sigmoid:
      return y * (1.0 - y);
    case Activation::identity:
      return 1.0;
  }
  return 1.0;
}

inline const char* to_string(Activation act) {
  switch (act) {
    case Activation::relu:
      return "relu";
    case Activation::sigmoid:
      return "sigmoid";
    case Activation::identity:
      return "identity";
  }
  return "?";
}

inline Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "sigmoid") return Activation::sigmoid;
  if (s == "identity") return Activation::identity;
  throw SpecError("unknown activation '" + s + "'");
}

struct DenseLayer {
  Matrix weights;  // fan_in x fan_out
  Matrix bias;     // 1 x fan_out
  Activation activation = Activation::identity;
};

// Activations recorded by DenseNet::forward, consumed by DenseNet::backward.
struct ForwardCache {
  std::uint64_t net_id = 0;
  std::uint64_t generation = 0;
  std::vector<Matrix> inputs;       // input to each layer
  std::vector<Matrix> preactivations;
  Matrix output;
};

struct NetGradients {
  std::vector<Matrix> weights;
  std::vector<Matrix> biases;
  Matrix input;

  // Same order as DenseNet::parameters(): w0, b0, w1, b1, ...
  std::vector<Matrix> flatten() && {
    std::vector<Matrix> out;
    out.reserve(weights.size() * 2);
    for (std::size_t l = 0; l < weights.size(); ++l) {
      out.push_back(std::move(weights[l]));
      out.push_back(std::move(biases[l]));
    }
    return out;
  }
};

// Fully connected feed-forward network. Rows of the input are independent samples.
class DenseNet {
 public:
  DenseNet() : id_(next_id()) {}

  // sizes = {in, hidden..., out}; one activation per layer (sizes.size() - 1 of them).
  DenseNet(const std::vector<std::size_t>& sizes, const std::vector<Activation>& activations,
           Rng& rng)
      : id_(next_id()) {
    if (sizes.size() < 2) throw SpecError("DenseNet: need at least input and output sizes");
    if (activations.size() != sizes.size() - 1) {
      throw SpecError("DenseNet: expected " + std::to_string(sizes.size() - 1) +
                      " activations, got " + std::to_string(activations.size()));
    }
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
      if (sizes[l] == 0 || sizes[l + 1] == 0) throw SpecError("DenseNet: zero-width layer");
      const double limit = std::sqrt(6.0 / static_cast<double>(sizes[l] + sizes[l + 1]));
      layers_.push_back({rng.uniform_matrix(sizes[l], sizes[l + 1], -limit, limit),
                         Matrix(1, sizes[l + 1]), activations[l]});
    }
  }

  explicit DenseNet(std::vector<DenseLayer> layers) : id_(next_id()), layers_(std::move(layers)) {
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const auto& layer = layers_[l];
      if (layer.bias.rows() != 1 || layer.bias.cols() != layer.weights.cols()) {
        throw ShapeError("DenseNet: layer " + std::to_string(l) + " bias " + layer.bias.shape() +
                         " does not match weights " + layer.weights.shape());
      }
      if (l > 0 && layers_[l - 1].weights.cols() != layer.weights.rows()) {
        throw ShapeError("DenseNet: layer " + std::to_string(l) + " input width " +
                         std::to_string(layer.weights.rows()) + " != previous output " +
                         std::to_string(layers_[l - 1].weights.cols()));
      }
    }
  }

  DenseNet(const DenseNet& other)
      : id_(next_id()), generation_(0), layers_(other.layers_) {}
  DenseNet& operator=(const DenseNet& other) {
    if (this != &other) {
      layers_ = other.layers_;
      ++generation_;
    }
    return *this;
  }
  DenseNet(DenseNet&&) noexcept = default;
  DenseNet& operator=(DenseNet&&) noexcept = default;

  std::size_t input_size() const { return layers_.empty() ? 0 : layers_.front().weights.rows(); }
  std::size_t output_size() const { return layers_.empty() ? 0 : layers_.back().weights.cols(); }
  std::size_t depth() const { return layers_.size(); }

  const std::vector<DenseLayer>& layers() const { return layers_; }

  // Mutable parameter access invalidates outstanding caches.
  std::vector<DenseLayer>& mutable_layers() {
    ++generation_;
    return layers_;
  }

  std::vector<Matrix*> parameters() {
    ++generation_;
    std::vector<Matrix*> out;
    for (auto& layer : layers_) {
      out.push_back(&layer.weights);
      out.push_back(&layer.bias);
    }
    return out;
  }

  std::vector<std::string> parameter_names(const std::string& prefix) const {
    std::vector<std::string> out;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      out.push_back(prefix + ".w" + std::to_string(l));
      out.push_back(prefix + ".b" + std::to_string(l));
    }
    return out;
  }

  ForwardCache forward(const Matrix& input) const {
    if (layers_.empty()) throw UsageError("DenseNet::forward on an empty network");
    if (input.cols() != input_size()) {
      throw ShapeError("DenseNet::forward: input " + input.shape() + " expects " +
                       std::to_string(input_size()) + " columns");
    }
    ForwardCache cache;
    cache.net_id = id_;
    cache.generation = generation_;
    cache.inputs.reserve(layers_.size());
    cache.preactivations.reserve(layers_.size());
    Matrix current = input;
    for (const auto& layer : layers_) {
      Matrix z = matmul(current, layer.weights);
      const double* b = layer.bias.values().data();
      const std::size_t width = z.cols();
      for (std::size_t i = 0; i < z.rows(); ++i) {
        double* zr = &z(i, 0);
        for (std::size_t j = 0; j < width; ++j) zr[j] += b[j];
      }
      Matrix y = z;
      if (layer.activation != Activation::identity) {
        for (auto& v : y.values()) v = activate(layer.activation, v);
      }
      cache.inputs.push_back(std::move(current));
      cache.preactivations.push_back(std::move(z));
      current = std::move(y);
    }
    cache.output = std::move(current);
    return cache;
  }

  Matrix predict(const Matrix& input) const { return forward(input).output; }

  // Gradients of a scalar loss given d(loss)/d(output).
  NetGradients backward(const ForwardCache& cache, const Matrix& output_grad) const {
    if (cache.net_id != id_ || cache.generation != generation_ ||
        cache.inputs.size() != layers_.size()) {
      throw UsageError("DenseNet::backward: cache does not belong to this network state");
    }
    require_same_shape(cache.output, output_grad, "DenseNet::backward output_grad");
    NetGradients grads;
    grads.weights.resize(layers_.size());
    grads.biases.resize(layers_.size());
    Matrix delta = output_grad;
    for (std::size_t l = layers_.size(); l-- > 0;) {
      const auto& layer = layers_[l];
      const Matrix& z = cache.preactivations[l];
      const Matrix& y = (l + 1 == layers_.size()) ? cache.output : cache.inputs[l + 1];
      if (layer.activation != Activation::identity) {
        for (std::size_t k = 0; k < delta.size(); ++k) {
          delta[k] *= activation_slope(layer.activation, z[k], y[k]);
        }
      }
      grads.weights[l] = matmul_tn(cache.inputs[l], delta);
      Matrix db(1, delta.cols());
      for (std::size_t i = 0; i < delta.rows(); ++i) {
        auto r = delta.row(i);
        for (std::size_t j = 0; j < r.size(); ++j) db[j] += r[j];
      }
      grads.biases[l] = std::move(db);
      delta = matmul_nt(delta, layer.weights);
    }
    grads.input = std::move(delta);
    return grads;
  }

 private:
  static std::uint64_t next_id() {
    static std::atomic<std::uint64_t> counter{1};
    return counter.fetch_add(1, std::memory_order_relaxed);
  }

  std::uint64_t id_;
  std::uint64_t generation_ = 0;
  std::vector<DenseLayer> layers_;
};

}  // namespace blockecho::numkern
