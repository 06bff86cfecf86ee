#pragma once

#include <string>
#include <variant>
#include <vector>

namespace nccr {

struct DenseSpec {
  int in = 0;
  int out = 0;
};

struct Conv2DSpec {
  int in_ch = 0;
  int out_ch = 0;
  int kernel = 0;
  int stride = 1;
};

struct MaxPool2DSpec {
  int kernel = 0;
  int stride = 0;  // 0 means stride == kernel
};

struct ReluSpec {};

struct FlattenSpec {};

using LayerSpec = std::variant<DenseSpec, Conv2DSpec, MaxPool2DSpec, ReluSpec, FlattenSpec>;

// "dense", "conv2d", "maxpool2d", "relu", "flatten"
std::string layer_kind_name(const LayerSpec& layer);

bool layer_has_params(const LayerSpec& layer);

// Output shape of `layer` applied to `in_shape`. Throws std::invalid_argument
// with a message naming the layer (index + kind) on any incompatibility.
std::vector<int> infer_output_shape(const LayerSpec& layer, const std::vector<int>& in_shape,
                                    int layer_index);

}  // namespace nccr
