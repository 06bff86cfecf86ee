#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace nccr {

// Every random decision in a pipeline is drawn from a stream whose seed is
// derived from a parent seed, a component label, and an index:
//
//     stream = Rng(derive_seed(parent, label, index))
//
// Labels in use: "init" (per-layer weight init), "shuffle" (per-epoch),
// "perturb" (per noise draw), "item" (per dataset item in batch scoring,
// indexed by the item's tensor hash so reordering data reorders results),
// "attack" (per attacked item), "advtrain" (inner PGD during training),
// "poison" (poison index selection), "balance" (class rebalancing),
// "split" (train/validation split), "kmeans" (per clustering restart),
// "data" (synthetic dataset generation).
//
// Derivation is a fixed 64-bit mix (FNV-1a over the label, splitmix64
// finalizers), so identical (parent, label, index) always yields the same
// stream and distinct labels/indices yield independent ones. This is what
// makes batch results independent of scheduling order.
uint64_t derive_seed(uint64_t parent, std::string_view label, uint64_t index = 0);

// Deterministic random stream. The engine is std::mt19937_64 (bit-exact by
// the standard); all distributions are implemented here rather than with
// std::*_distribution so the value sequence does not depend on the standard
// library implementation.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  uint64_t next_u64() { return engine_(); }

  // Uniform double in [0, 1), 53 random bits.
  double uniform();

  // Uniform double in [lo, hi).
  double uniform(double lo, double hi);

  // Uniform integer in [0, n), n > 0. Unbiased (Lemire rejection).
  uint64_t uniform_int(uint64_t n);

  // Standard normal via Box-Muller (two engine draws per call).
  double normal(double mean = 0.0, double stddev = 1.0);

  // Normal(0, stddev) conditioned on |v| <= bound, by rejection.
  // stddev == 0 returns 0.
  double truncated_normal(double stddev, double bound);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(uniform_int(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace nccr
