#include "nccr/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "nccr/parallel.hpp"
#include "nccr/rng.hpp"

namespace nccr {

std::string attack_kind_name(AttackKind kind) {
  switch (kind) {
    case AttackKind::Fgsm:
      return "fgsm";
    case AttackKind::Pgd:
      return "pgd";
    default:
      return "jsma";
  }
}

AttackKind attack_kind_from_name(const std::string& name) {
  if (name == "fgsm") return AttackKind::Fgsm;
  if (name == "pgd") return AttackKind::Pgd;
  if (name == "jsma") return AttackKind::Jsma;
  throw std::invalid_argument("unknown attack kind '" + name + "'");
}

void validate_attack_spec(const AttackSpec& spec) {
  if (!(spec.epsilon >= 0.0f) || !std::isfinite(spec.epsilon)) {
    throw std::invalid_argument("attack: epsilon must be a finite nonnegative value");
  }
  if (spec.kind == AttackKind::Pgd) {
    if (spec.steps < 1) throw std::invalid_argument("pgd: steps must be >= 1");
    if (!(spec.alpha > 0.0f)) throw std::invalid_argument("pgd: alpha must be positive");
    if (spec.alpha > spec.epsilon) throw std::invalid_argument("pgd: alpha must be <= epsilon");
  }
  if (spec.kind == AttackKind::Jsma) {
    if (!(spec.theta > 0.0f)) throw std::invalid_argument("jsma: theta must be positive");
    if (!(spec.gamma >= 0.0f)) throw std::invalid_argument("jsma: gamma must be >= 0");
  }
}

namespace {

float sgn(float g) { return g > 0.0f ? 1.0f : (g < 0.0f ? -1.0f : 0.0f); }

int predict(const Model& m, const Tensor& x, Workspace& ws) {
  return argmax_class(forward_ws(m, x, ws));
}

}  // namespace

AdvResult fgsm(const Model& m, const Tensor& x, int y, float epsilon) {
  if (!(epsilon >= 0.0f) || !std::isfinite(epsilon)) {
    throw std::invalid_argument("fgsm: epsilon must be a finite nonnegative value");
  }
  const float lo = m.spec.range_lo, hi = m.spec.range_hi;
  const GradientSet grads = backward(m, x, y);

  AdvResult res;
  res.input = x;
  for (int64_t i = 0; i < x.size(); ++i) {
    res.input[i] = std::clamp(x[i] + epsilon * sgn(grads.input_grad[i]), lo, hi);
  }
  Workspace ws;
  res.success = predict(m, res.input, ws) != y;
  res.iterations = 1;
  return res;
}

AdvResult pgd(const Model& m, const Tensor& x, int y, const AttackSpec& spec,
              std::vector<Tensor>* iterate_log) {
  AttackSpec checked = spec;
  checked.kind = AttackKind::Pgd;
  validate_attack_spec(checked);
  const float eps = spec.epsilon, alpha = spec.alpha;
  const float lo = m.spec.range_lo, hi = m.spec.range_hi;

  AdvResult res;
  res.input = x;
  Tensor& adv = res.input;
  if (spec.random_start) {
    Rng rng(derive_seed(spec.seed, "perturb"));
    for (int64_t i = 0; i < adv.size(); ++i) {
      const float v = adv[i] + static_cast<float>(rng.uniform(-eps, eps));
      adv[i] = std::clamp(v, lo, hi);
    }
  }
  if (iterate_log != nullptr) iterate_log->push_back(adv);

  Workspace ws;
  for (int step = 0; step < spec.steps; ++step) {
    forward_ws(m, adv, ws);
    const GradientSet grads = backward_ws(m, adv, y, ws);
    for (int64_t i = 0; i < adv.size(); ++i) {
      float v = adv[i] + alpha * sgn(grads.input_grad[i]);
      v = std::clamp(v, x[i] - eps, x[i] + eps);
      adv[i] = std::clamp(v, lo, hi);
    }
    if (iterate_log != nullptr) iterate_log->push_back(adv);
  }
  res.iterations = spec.steps;
  res.success = predict(m, adv, ws) != y;
  return res;
}

AdvResult jsma(const Model& m, const Tensor& x, int target, float theta, float gamma) {
  if (!(theta > 0.0f)) throw std::invalid_argument("jsma: theta must be positive");
  if (!(gamma >= 0.0f)) throw std::invalid_argument("jsma: gamma must be >= 0");
  const int classes = m.spec.class_count();
  if (target < 0 || target >= classes) {
    throw std::invalid_argument("jsma: target " + std::to_string(target) + " out of range");
  }
  Workspace ws;
  if (predict(m, x, ws) == target) {
    throw std::invalid_argument("jsma: target equals the current prediction");
  }
  const float hi = m.spec.range_hi;
  const int64_t d = x.size();
  const int64_t budget = std::min<int64_t>(
      d, static_cast<int64_t>(std::ceil(static_cast<double>(gamma) * static_cast<double>(d))));

  AdvResult res;
  res.input = x;
  Tensor& adv = res.input;
  std::vector<char> modified(static_cast<size_t>(d), 0);
  int64_t distinct = 0;

  for (;;) {
    const auto jac = input_jacobian(m, adv);
    std::vector<double> tgrad(static_cast<size_t>(d)), others(static_cast<size_t>(d));
    for (int64_t i = 0; i < d; ++i) {
      double total = 0.0;
      for (int c = 0; c < classes; ++c) total += jac[static_cast<size_t>(c)][i];
      tgrad[static_cast<size_t>(i)] = jac[static_cast<size_t>(target)][i];
      others[static_cast<size_t>(i)] = total - tgrad[static_cast<size_t>(i)];
    }

    std::vector<int64_t> domain;
    for (int64_t i = 0; i < d; ++i) {
      if (adv[i] < hi) domain.push_back(i);
    }

    double best_score = 0.0;
    int64_t best_p = -1, best_q = -1;
    for (size_t a = 0; a < domain.size(); ++a) {
      for (size_t b = a + 1; b < domain.size(); ++b) {
        const int64_t p = domain[a], q = domain[b];
        const double ag = tgrad[static_cast<size_t>(p)] + tgrad[static_cast<size_t>(q)];
        const double bg = others[static_cast<size_t>(p)] + others[static_cast<size_t>(q)];
        if (ag > 0.0 && bg < 0.0) {
          const double score = -ag * bg;
          if (score > best_score) {
            best_score = score;
            best_p = p;
            best_q = q;
          }
        }
      }
    }
    if (best_p < 0) break;  // no qualifying pair left

    int64_t would_be = distinct;
    if (!modified[static_cast<size_t>(best_p)]) would_be++;
    if (!modified[static_cast<size_t>(best_q)]) would_be++;
    if (would_be > budget) break;

    const float old_p = adv[best_p], old_q = adv[best_q];
    adv[best_p] = std::min(adv[best_p] + theta, hi);
    adv[best_q] = std::min(adv[best_q] + theta, hi);
    if (adv[best_p] == old_p && adv[best_q] == old_q) break;  // theta below float resolution
    modified[static_cast<size_t>(best_p)] = 1;
    modified[static_cast<size_t>(best_q)] = 1;
    distinct = would_be;
    res.iterations++;

    if (predict(m, adv, ws) == target) {
      res.success = true;
      break;
    }
  }
  return res;
}

namespace {

int second_most_likely(const Model& m, const Tensor& x) {
  Workspace ws;
  const Tensor& logits = forward_ws(m, x, ws);
  const int top = argmax_class(logits);
  int second = top == 0 ? 1 : 0;
  for (int i = 0; i < logits.size(); ++i) {
    if (i != top && logits.data[i] > logits.data[second]) second = i;
  }
  return second;
}

}  // namespace

AdvResult run_attack(const Model& m, const Tensor& x, int y, const AttackSpec& spec) {
  validate_attack_spec(spec);
  switch (spec.kind) {
    case AttackKind::Fgsm:
      return fgsm(m, x, y, spec.epsilon);
    case AttackKind::Pgd:
      return pgd(m, x, y, spec);
    default: {
      const int target = spec.target.has_value() ? *spec.target : second_most_likely(m, x);
      return jsma(m, x, target, spec.theta, spec.gamma);
    }
  }
}

AttackBatchResult attack_batch(const Model& m, const Dataset& data, const AttackSpec& spec,
                               const AttackBatchOptions& opts) {
  validate_attack_spec(spec);
  data.validate();
  if (data.inputs.empty()) throw std::invalid_argument("attack_batch: empty dataset");

  std::vector<size_t> eligible;
  {
    std::vector<char> correct(data.size(), 0);
    parallel_for(
        data.size(),
        [&](size_t i) {
          Workspace ws;
          correct[i] = predict(m, data.inputs[i], ws) == data.labels[i] ? 1 : 0;
        },
        opts.threads);
    for (size_t i = 0; i < data.size(); ++i) {
      if (correct[i]) eligible.push_back(i);
    }
  }
  if (eligible.empty()) {
    throw std::invalid_argument("attack_batch: no eligible items (model misclassifies all of '" +
                                data.name + "')");
  }

  AttackBatchResult out;
  out.adversarial.class_count = data.class_count;
  out.adversarial.range_lo = data.range_lo;
  out.adversarial.range_hi = data.range_hi;
  out.adversarial.name = data.name + "-" + attack_kind_name(spec.kind);

  // fixed-size blocks keep early stopping independent of thread count
  constexpr size_t kBlock = 64;
  bool done = false;
  for (size_t base = 0; base < eligible.size() && !done; base += kBlock) {
    const size_t count = std::min(kBlock, eligible.size() - base);
    std::vector<AdvResult> results(count);
    parallel_for(
        count,
        [&](size_t j) {
          const size_t idx = eligible[base + j];
          AttackSpec item_spec = spec;
          item_spec.seed = derive_seed(spec.seed, "attack", idx);
          results[j] = run_attack(m, data.inputs[idx], data.labels[idx], item_spec);
        },
        opts.threads);
    for (size_t j = 0; j < count; ++j) {
      const size_t idx = eligible[base + j];
      out.eligible++;
      if (results[j].success) {
        out.succeeded++;
        out.adversarial.inputs.push_back(std::move(results[j].input));
        out.adversarial.labels.push_back(data.labels[idx]);
        out.source_indices.push_back(idx);
      }
      if (opts.stop_after > 0 && out.succeeded >= opts.stop_after) {
        done = true;
        break;
      }
    }
  }
  out.success_rate = static_cast<double>(out.succeeded) / static_cast<double>(out.eligible);
  return out;
}

}  // namespace nccr
