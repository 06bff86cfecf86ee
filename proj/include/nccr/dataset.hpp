#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "nccr/tensor.hpp"

namespace nccr {

// Labelled inputs, all within [range_lo, range_hi].
struct Dataset {
  std::vector<Tensor> inputs;
  std::vector<int> labels;
  int class_count = 0;
  std::string name;
  float range_lo = 0.0f;
  float range_hi = 1.0f;

  size_t size() const { return inputs.size(); }

  // Throws std::invalid_argument if lengths differ, a label is out of range,
  // or an input value leaves the declared range.
  void validate() const;

  // New dataset holding copies of the selected items.
  Dataset subset(const std::vector<size_t>& indices) const;
};

enum class IdxErrorKind { Io, BadMagic, Truncated, CountMismatch, BadValue };

class IdxError : public std::runtime_error {
 public:
  IdxError(IdxErrorKind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
  IdxErrorKind kind() const { return kind_; }

 private:
  IdxErrorKind kind_;
};

// Reads an IDX image/label pair. Supported image magics: 0x00000803 (unsigned
// byte, scaled to [0,1]) and 0x00000D03 (float32, taken as-is and required to
// already lie in [0,1]). Label magic: 0x00000801. All integers big-endian.
// Malformed input raises IdxError; out-of-range values are rejected, never
// clamped.
Dataset load_idx(const std::string& images_path, const std::string& labels_path);

enum class IdxPixelFormat { Ubyte, Float32 };

// Writes the dataset as an IDX pair. Ubyte rounds pixels to the nearest
// /255 step; Float32 keeps them bit-exact. Inputs must be [1,r,c]-shaped.
void save_idx(const Dataset& ds, const std::string& images_path, const std::string& labels_path,
              IdxPixelFormat format = IdxPixelFormat::Ubyte);

enum class SyntheticKind { Blobs, Separable2D, MiniDigits };

struct SyntheticOptions {
  int classes = 0;          // 0 = kind default (blobs/separable2d 2, mini-digits 10)
  int dim = 8;              // blobs feature dimension
  double separation = 6.0;  // blobs center distance
  double spread = 1.0;      // blobs within-class stddev
};

// Seeded synthetic data. Labels cycle 0,1,...,k-1,0,... so the class
// histogram is exact. Blobs places class centers on distinct axes
// (requires classes <= dim); separable2d splits the unit square at x=0.5
// with a 0.1 margin; mini-digits renders jittered 8x8 digit glyphs.
Dataset synthetic_dataset(SyntheticKind kind, int size, uint64_t seed,
                          const SyntheticOptions& opt = {});

// Procedurally rendered 28x28 digit images (10 classes, [0,1] range): stroke
// glyphs under a random affine warp with intensity variation and speckle
// noise. A stand-in with MNIST's shape for pipelines that want image-scale
// data without shipping the real files.
Dataset digits28_dataset(int size, uint64_t seed, const std::string& name = "digits28");

}  // namespace nccr
