#include "nccr/zoo.hpp"

#include <stdexcept>

#include "doctest.h"

using namespace nccr;

TEST_CASE("zoo specs validate and have the expected sizes") {
  CHECK(lenet5().layer_output_shapes().back() == std::vector<int>{10});
  CHECK(lenet1().layer_output_shapes().back() == std::vector<int>{10});
  CHECK(mini_conv().layer_output_shapes().back() == std::vector<int>{10});
  CHECK(convnet8().layer_output_shapes().back() == std::vector<int>{10});

  // parameter counts worked out by hand
  CHECK(build_model(lenet5(), 1).parameter_count() ==
        (6 * 25 + 6) + (16 * 6 * 25 + 16) + (256 * 120 + 120) + (120 * 84 + 84) + (84 * 10 + 10));
  CHECK(build_model(lenet1(), 1).parameter_count() ==
        (4 * 25 + 4) + (12 * 4 * 25 + 12) + (192 * 10 + 10));
  CHECK(build_model(mini_conv(), 1).parameter_count() ==
        (8 * 9 + 8) + (72 * 32 + 32) + (32 * 10 + 10));
  CHECK(build_model(convnet8(), 1).parameter_count() ==
        (8 * 9 + 8) + (8 * 8 * 9 + 8) + (16 * 8 * 9 + 16) + (16 * 16 * 9 + 16) +
            (256 * 64 + 64) + (64 * 10 + 10));
}

TEST_CASE("lenet5 penultimate width is 84") {
  const auto shapes = lenet5().layer_output_shapes();
  // relu after the 84-wide dense layer, then the logits layer
  CHECK(shapes[shapes.size() - 2] == std::vector<int>{84});
}

TEST_CASE("mlp_spec chains dense and relu") {
  const ModelSpec spec = mlp_spec({5, 7, 3});
  REQUIRE(spec.layers.size() == 3);
  CHECK(layer_kind_name(spec.layers[0]) == "dense");
  CHECK(layer_kind_name(spec.layers[1]) == "relu");
  CHECK(layer_kind_name(spec.layers[2]) == "dense");
  CHECK(spec.layer_output_shapes().back() == std::vector<int>{3});
  CHECK_THROWS_AS(mlp_spec({4}), std::invalid_argument);
}

TEST_CASE("zoo lookup by name") {
  CHECK(zoo_spec("lenet5").layers.size() == lenet5().layers.size());
  CHECK(zoo_spec("mini").input_shape == std::vector<int>{1, 8, 8});
  CHECK_THROWS_AS(zoo_spec("resnet50"), std::invalid_argument);
}
