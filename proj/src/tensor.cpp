#include "nccr/tensor.hpp"

#include <cmath>
#include <cstring>
#include <sstream>
#include <stdexcept>

namespace nccr {

int64_t shape_size(const std::vector<int>& shape) {
  if (shape.empty()) throw std::invalid_argument("tensor shape must be nonempty");
  int64_t n = 1;
  for (int d : shape) {
    if (d <= 0) {
      throw std::invalid_argument("tensor shape has non-positive dim: " + shape_str(shape));
    }
    n *= d;
  }
  return n;
}

std::string shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

Tensor::Tensor(std::vector<int> shape_, float fill)
    : shape(std::move(shape_)), data(static_cast<size_t>(shape_size(shape)), fill) {}

Tensor Tensor::from(std::vector<int> shape_, std::vector<float> values) {
  if (shape_size(shape_) != static_cast<int64_t>(values.size())) {
    throw std::invalid_argument("tensor data length " + std::to_string(values.size()) +
                                " does not match shape " + shape_str(shape_));
  }
  Tensor t;
  t.shape = std::move(shape_);
  t.data = std::move(values);
  return t;
}

bool all_finite(const Tensor& t) {
  for (float v : t.data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void check_finite(const Tensor& t, const char* what) {
  if (!all_finite(t)) {
    throw std::runtime_error(std::string(what) + ": tensor contains non-finite values");
  }
}

uint64_t tensor_hash(const Tensor& t, uint64_t seed) {
  uint64_t h = seed;
  auto mix = [&h](const unsigned char* p, size_t n) {
    for (size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 0x100000001b3ull;
    }
  };
  for (int d : t.shape) {
    mix(reinterpret_cast<const unsigned char*>(&d), sizeof(d));
  }
  if (!t.data.empty()) {
    mix(reinterpret_cast<const unsigned char*>(t.data.data()), t.data.size() * sizeof(float));
  }
  return h;
}

}  // namespace nccr
