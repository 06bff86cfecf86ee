#include "nccr/zoo.hpp"

#include <stdexcept>

namespace nccr {

ModelSpec lenet5() {
  ModelSpec spec;
  spec.input_shape = {1, 28, 28};
  spec.layers = {
      Conv2DSpec{1, 6, 5, 1},  ReluSpec{},          MaxPool2DSpec{2, 0},
      Conv2DSpec{6, 16, 5, 1}, ReluSpec{},          MaxPool2DSpec{2, 0},
      FlattenSpec{},           DenseSpec{256, 120}, ReluSpec{},
      DenseSpec{120, 84},      ReluSpec{},          DenseSpec{84, 10},
  };
  return spec;
}

ModelSpec lenet1() {
  ModelSpec spec;
  spec.input_shape = {1, 28, 28};
  spec.layers = {
      Conv2DSpec{1, 4, 5, 1},  ReluSpec{},    MaxPool2DSpec{2, 0},
      Conv2DSpec{4, 12, 5, 1}, ReluSpec{},    MaxPool2DSpec{2, 0},
      FlattenSpec{},           DenseSpec{192, 10},
  };
  return spec;
}

ModelSpec mini_conv() {
  ModelSpec spec;
  spec.input_shape = {1, 8, 8};
  spec.layers = {
      Conv2DSpec{1, 8, 3, 1}, ReluSpec{},         MaxPool2DSpec{2, 0}, FlattenSpec{},
      DenseSpec{72, 32},      ReluSpec{},         DenseSpec{32, 10},
  };
  return spec;
}

ModelSpec convnet8() {
  ModelSpec spec;
  spec.input_shape = {1, 28, 28};
  spec.layers = {
      Conv2DSpec{1, 8, 3, 1},   ReluSpec{},         Conv2DSpec{8, 8, 3, 1},  ReluSpec{},
      MaxPool2DSpec{2, 0},      Conv2DSpec{8, 16, 3, 1}, ReluSpec{},         Conv2DSpec{16, 16, 3, 1},
      ReluSpec{},               MaxPool2DSpec{2, 0},     FlattenSpec{},      DenseSpec{256, 64},
      ReluSpec{},               DenseSpec{64, 10},
  };
  return spec;
}

ModelSpec mlp_spec(const std::vector<int>& widths) {
  if (widths.size() < 2) throw std::invalid_argument("mlp_spec: need at least {in, out}");
  ModelSpec spec;
  spec.input_shape = {widths.front()};
  for (size_t i = 0; i + 1 < widths.size(); ++i) {
    spec.layers.push_back(DenseSpec{widths[i], widths[i + 1]});
    if (i + 2 < widths.size()) spec.layers.push_back(ReluSpec{});
  }
  return spec;
}

ModelSpec zoo_spec(const std::string& name) {
  if (name == "lenet5") return lenet5();
  if (name == "lenet1") return lenet1();
  if (name == "mini") return mini_conv();
  if (name == "convnet8") return convnet8();
  throw std::invalid_argument("unknown model '" + name +
                              "' (known: lenet5, lenet1, mini, convnet8)");
}

}  // namespace nccr
