#pragma once

#include <string>
#include <vector>

#include "nccr/model.hpp"

namespace nccr {

// LeNet-5 layout adapted to unpadded 28x28 inputs:
// 6c5 - pool2 - 16c5 - pool2 - 120 - 84 - 10.
ModelSpec lenet5();

// The small sibling: 4c5 - pool2 - 12c5 - pool2 - 10.
ModelSpec lenet1();

// Tiny net for 8x8 mini-digit data: 8c3 - pool2 - 32 - 10.
ModelSpec mini_conv();

// Deeper sequential stack for 28x28 inputs:
// 8c3 - 8c3 - pool2 - 16c3 - 16c3 - pool2 - 64 - 10.
ModelSpec convnet8();

// Dense relu chain; widths = {in, hidden..., out}.
ModelSpec mlp_spec(const std::vector<int>& widths);

// Lookup by name: "lenet5", "lenet1", "mini", "convnet8".
ModelSpec zoo_spec(const std::string& name);

}  // namespace nccr
