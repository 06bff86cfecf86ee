#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace nccr {

// Dense row-major float32 tensor. Carries inputs, activations and gradients.
struct Tensor {
  std::vector<int> shape;
  std::vector<float> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> shape_, float fill = 0.0f);
  static Tensor from(std::vector<int> shape_, std::vector<float> values);

  int64_t size() const { return static_cast<int64_t>(data.size()); }
  bool empty() const { return data.empty(); }

  float& operator[](int64_t i) { return data[static_cast<size_t>(i)]; }
  const float& operator[](int64_t i) const { return data[static_cast<size_t>(i)]; }

  bool same_shape(const Tensor& other) const { return shape == other.shape; }
};

// Product of dims; throws std::invalid_argument on non-positive dims.
int64_t shape_size(const std::vector<int>& shape);

std::string shape_str(const std::vector<int>& shape);

bool all_finite(const Tensor& t);

// Throws std::runtime_error naming `what` if t contains NaN/Inf.
void check_finite(const Tensor& t, const char* what);

// 64-bit FNV-1a over the raw bytes; used for provenance ids.
uint64_t tensor_hash(const Tensor& t, uint64_t seed = 0xcbf29ce484222325ull);

}  // namespace nccr
