#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "nccr/attacks.hpp"
#include "nccr/dataset.hpp"
#include "nccr/model.hpp"

namespace nccr {

struct TrainConfig {
  int epochs = 10;
  int batch_size = 64;
  float learning_rate = 0.01f;
  float momentum = 0.9f;
  uint64_t seed = 0;
  // when set, the leading adversarial_ratio of every minibatch is replaced by
  // attacks generated against the current parameters
  std::optional<AttackSpec> adversarial;
  float adversarial_ratio = 1.0f;
};

struct EpochMetrics {
  double mean_loss = 0.0;
  double accuracy = 0.0;  // on the inputs actually trained on that epoch
};

struct TrainResult {
  Model model;
  std::vector<EpochMetrics> epochs;
};

// Minibatch SGD with momentum. Initialization, shuffling and any adversarial
// augmentation all derive from cfg.seed, so the result is bit-reproducible.
// epochs = 0 returns the seeded initialization untouched.
TrainResult train(const ModelSpec& spec, const Dataset& data, const TrainConfig& cfg);

// train() with the given attack as the augmentation source.
TrainResult adversarial_train(const ModelSpec& spec, const Dataset& data, const AttackSpec& attack,
                              TrainConfig cfg);

// Fraction of items whose argmax matches the label. Rejects empty datasets.
double evaluate_accuracy(const Model& m, const Dataset& data, int threads = 0);

}  // namespace nccr
