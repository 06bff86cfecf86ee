#include "nccr/layers.hpp"

#include <stdexcept>

#include "nccr/tensor.hpp"

namespace nccr {

namespace {

[[noreturn]] void reject(int layer_index, const std::string& kind, const std::string& why) {
  throw std::invalid_argument("layer " + std::to_string(layer_index) + " (" + kind + "): " + why);
}

}  // namespace

std::string layer_kind_name(const LayerSpec& layer) {
  struct Visitor {
    std::string operator()(const DenseSpec&) const { return "dense"; }
    std::string operator()(const Conv2DSpec&) const { return "conv2d"; }
    std::string operator()(const MaxPool2DSpec&) const { return "maxpool2d"; }
    std::string operator()(const ReluSpec&) const { return "relu"; }
    std::string operator()(const FlattenSpec&) const { return "flatten"; }
  };
  return std::visit(Visitor{}, layer);
}

bool layer_has_params(const LayerSpec& layer) {
  return std::holds_alternative<DenseSpec>(layer) || std::holds_alternative<Conv2DSpec>(layer);
}

std::vector<int> infer_output_shape(const LayerSpec& layer, const std::vector<int>& in_shape,
                                    int layer_index) {
  const std::string kind = layer_kind_name(layer);
  if (const auto* d = std::get_if<DenseSpec>(&layer)) {
    if (d->in <= 0 || d->out <= 0) reject(layer_index, kind, "in/out must be positive");
    if (in_shape.size() != 1) {
      reject(layer_index, kind, "expects a flat input, got " + shape_str(in_shape));
    }
    if (in_shape[0] != d->in) {
      reject(layer_index, kind,
             "expects input width " + std::to_string(d->in) + ", got " + shape_str(in_shape));
    }
    return {d->out};
  }
  if (const auto* c = std::get_if<Conv2DSpec>(&layer)) {
    if (c->in_ch <= 0 || c->out_ch <= 0 || c->kernel <= 0 || c->stride <= 0) {
      reject(layer_index, kind, "channels/kernel/stride must be positive");
    }
    if (in_shape.size() != 3) {
      reject(layer_index, kind, "expects [C,H,W] input, got " + shape_str(in_shape));
    }
    if (in_shape[0] != c->in_ch) {
      reject(layer_index, kind,
             "expects " + std::to_string(c->in_ch) + " input channels, got " + shape_str(in_shape));
    }
    const int h = in_shape[1], w = in_shape[2];
    if (h < c->kernel || w < c->kernel) {
      reject(layer_index, kind, "kernel " + std::to_string(c->kernel) + " larger than input " +
                                    shape_str(in_shape));
    }
    const int oh = (h - c->kernel) / c->stride + 1;
    const int ow = (w - c->kernel) / c->stride + 1;
    return {c->out_ch, oh, ow};
  }
  if (const auto* p = std::get_if<MaxPool2DSpec>(&layer)) {
    if (p->kernel <= 0) reject(layer_index, kind, "kernel must be positive");
    const int stride = p->stride > 0 ? p->stride : p->kernel;
    if (in_shape.size() != 3) {
      reject(layer_index, kind, "expects [C,H,W] input, got " + shape_str(in_shape));
    }
    const int h = in_shape[1], w = in_shape[2];
    if (h < p->kernel || w < p->kernel) {
      reject(layer_index, kind, "window larger than input " + shape_str(in_shape));
    }
    const int oh = (h - p->kernel) / stride + 1;
    const int ow = (w - p->kernel) / stride + 1;
    return {in_shape[0], oh, ow};
  }
  if (std::holds_alternative<ReluSpec>(layer)) {
    return in_shape;
  }
  // Flatten
  int64_t n = shape_size(in_shape);
  return {static_cast<int>(n)};
}

}  // namespace nccr
