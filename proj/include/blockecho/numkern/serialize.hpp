#pragma once

#include <string>
#include <vector>

#include "blockecho/errors.hpp"
#include "blockecho/numkern/dense_net.hpp"
#include "blockecho/numkern/matrix.hpp"
#include "json.hpp"

namespace blockecho::numkern {

inline nlohmann::json matrix_to_json(const Matrix& m) {
  return {{"rows", m.rows()},
          {"cols", m.cols()},
          {"data", std::vector<double>(m.values().begin(), m.values().end())}};
}

inline Matrix matrix_from_json(const nlohmann::json& j) {
  try {
    return {j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>(),
            j.at("data").get<std::vector<double>>()};
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("matrix_from_json: ") + e.what());
  }
}

inline nlohmann::json net_to_json(const DenseNet& net) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& layer : net.layers()) {
    layers.push_back({{"weights", matrix_to_json(layer.weights)},
                      {"bias", matrix_to_json(layer.bias)},
                      {"activation", to_string(layer.activation)}});
  }
  return {{"layers", layers}};
}

inline DenseNet net_from_json(const nlohmann::json& j) {
  std::vector<DenseLayer> layers;
  try {
    for (const auto& lj : j.at("layers")) {
      layers.push_back({matrix_from_json(lj.at("weights")), matrix_from_json(lj.at("bias")),
                        activation_from_string(lj.at("activation").get<std::string>())});
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("net_from_json: ") + e.what());
  }
  return DenseNet(std::move(layers));
}

}  // namespace blockecho::numkern
