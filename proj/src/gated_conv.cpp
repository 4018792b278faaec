// SPDX-License-Identifier: Apache-2.0
#include <cmath>

#include "amodal/error.hpp"
#include "amodal/network.hpp"

namespace amodal {

Var bind(Tape& tape, Parameter& p, bool track) { return track ? tape.leaf(p) : tape.constant(p.value); }

GatedConvLayer GatedConvLayer::create(const std::string& name, int in_c, int out_c, int kernel, ConvSpec spec,
                                      Activation phi, std::mt19937_64& rng) {
  require(kernel % 2 == 1, ErrorKind::kShape, "gated conv kernel must be odd");
  const double stddev = std::sqrt(2.0 / static_cast<double>(in_c * kernel * kernel));
  GatedConvLayer l;
  l.name = name;
  // The gate sits near 0.5 at init; doubling the feature bank keeps activations from
  // shrinking 4x in variance per layer.
  l.feature_weight = Parameter(name + ".feature.weight", randn({out_c, in_c, kernel, kernel}, rng, 2.0 * stddev));
  l.feature_bias = Parameter(name + ".feature.bias", Tensor({1, 1, 1, out_c}));
  l.gate_weight = Parameter(name + ".gate.weight", randn({out_c, in_c, kernel, kernel}, rng, stddev));
  l.gate_bias = Parameter(name + ".gate.bias", Tensor({1, 1, 1, out_c}));
  l.spec = spec;
  l.phi = phi;
  return l;
}

std::vector<Parameter*> GatedConvLayer::params() { return {&feature_weight, &feature_bias, &gate_weight, &gate_bias}; }

Var gated_conv(GatedConvLayer& layer, Var input, bool track) {
  require(layer.feature_weight.value.shape() == layer.gate_weight.value.shape(), ErrorKind::kShape,
          layer.name + ": feature and gate filter banks differ in shape");
  Tape& tape = *input.tape;
  Var features = ops::conv2d(input, bind(tape, layer.feature_weight, track), bind(tape, layer.feature_bias, track),
                             layer.spec);
  Var gate = ops::conv2d(input, bind(tape, layer.gate_weight, track), bind(tape, layer.gate_bias, track), layer.spec);
  return ops::mul(ops::activation(layer.phi, features), ops::activation(Activation::kSigmoid, gate));
}

ConvLayer ConvLayer::create(const std::string& name, int in_c, int out_c, int kernel, ConvSpec spec, double stddev,
                            std::mt19937_64& rng) {
  ConvLayer l;
  l.name = name;
  l.weight = Parameter(name + ".weight", randn({out_c, in_c, kernel, kernel}, rng, stddev));
  l.bias = Parameter(name + ".bias", Tensor({1, 1, 1, out_c}));
  l.spec = spec;
  return l;
}

std::vector<Parameter*> ConvLayer::params() { return {&weight, &bias}; }

Var conv_layer(ConvLayer& layer, Var input, bool track) {
  Tape& tape = *input.tape;
  return ops::conv2d(input, bind(tape, layer.weight, track), bind(tape, layer.bias, track), layer.spec);
}

}  // namespace amodal
