#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "nccr/dataset.hpp"
#include "nccr/model.hpp"

namespace nccr {

enum class AttackKind { Fgsm, Pgd, Jsma };

std::string attack_kind_name(AttackKind kind);
AttackKind attack_kind_from_name(const std::string& name);

struct AttackSpec {
  AttackKind kind = AttackKind::Pgd;
  float epsilon = 0.3f;    // max-norm budget (fgsm/pgd)
  float alpha = 0.01f;     // pgd step size, must be <= epsilon
  int steps = 40;          // pgd iterations
  bool random_start = true;  // pgd: start from x + uniform(-eps,eps); off = plain bim
  float theta = 1.0f;      // jsma per-step pixel increment
  float gamma = 0.14f;     // jsma budget as a fraction of input dimension
  std::optional<int> target;  // jsma target class; default = second-most-likely
  uint64_t seed = 0;       // randomness root (pgd random start)
};

// Throws std::invalid_argument on a spec violating its own invariants.
void validate_attack_spec(const AttackSpec& spec);

struct AdvResult {
  Tensor input;        // the adversarial example (equals x when nothing moved)
  bool success = false;
  int iterations = 0;  // pgd steps run / jsma pixel-pair rounds applied
};

// x' = clip(x + eps * sign(dJ/dx)), sign(0) = 0. Success means the model's
// argmax on x' differs from y.
AdvResult fgsm(const Model& m, const Tensor& x, int y, float epsilon);

// Iterated FGSM confined to the eps-ball around x and the input range.
// random_start draws the starting point uniformly from the ball. When
// iterate_log is given, every iterate (including the start) is appended.
AdvResult pgd(const Model& m, const Tensor& x, int y, const AttackSpec& spec,
              std::vector<Tensor>* iterate_log = nullptr);

// Greedy saliency-pair attack: each round finds the pixel pair (p,q)
// maximizing -a*b over pairs with a > 0 and b < 0, where a is the target
// logit's gradient sum and b the summed gradient of all other logits, then
// bumps both pixels by theta (clipped to the range). Stops on success, when
// no pair qualifies, or when the distinct-pixel budget ceil(gamma*d) would
// be exceeded.
AdvResult jsma(const Model& m, const Tensor& x, int target, float theta, float gamma);

// Dispatch on spec.kind; picks the jsma target (second-most-likely class)
// when none is set.
AdvResult run_attack(const Model& m, const Tensor& x, int y, const AttackSpec& spec);

struct AttackBatchResult {
  Dataset adversarial;       // successful adversarial inputs, original labels
  std::vector<size_t> source_indices;  // dataset index each item came from
  int eligible = 0;          // items the model classified correctly
  int succeeded = 0;
  double success_rate = 0.0;  // succeeded / eligible
};

struct AttackBatchOptions {
  int stop_after = 0;  // > 0: stop once this many successes were collected
  int threads = 0;
};

// Attacks every correctly-classified item with a per-item seed derived from
// spec.seed, so results do not depend on scheduling. Throws when no item is
// eligible.
AttackBatchResult attack_batch(const Model& m, const Dataset& data, const AttackSpec& spec,
                               const AttackBatchOptions& opts = {});

}  // namespace nccr
