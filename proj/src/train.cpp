#include "nccr/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "nccr/parallel.hpp"
#include "nccr/rng.hpp"

namespace nccr {

namespace {

void check_train_inputs(const ModelSpec& spec, const Dataset& data, const TrainConfig& cfg) {
  data.validate();
  if (data.inputs.empty()) throw std::invalid_argument("train: empty dataset");
  if (cfg.epochs < 0) throw std::invalid_argument("train: epochs must be >= 0");
  if (cfg.batch_size < 1) throw std::invalid_argument("train: batch size must be >= 1");
  if (!(cfg.learning_rate > 0.0f)) throw std::invalid_argument("train: learning rate must be > 0");
  if (!(cfg.momentum >= 0.0f && cfg.momentum < 1.0f)) {
    throw std::invalid_argument("train: momentum must be in [0,1)");
  }
  if (data.class_count > spec.class_count()) {
    throw std::invalid_argument("train: dataset has " + std::to_string(data.class_count) +
                                " classes, model emits " + std::to_string(spec.class_count()));
  }
  if (data.inputs.front().shape != spec.input_shape) {
    throw std::invalid_argument("train: dataset items are " +
                                shape_str(data.inputs.front().shape) + ", model expects " +
                                shape_str(spec.input_shape));
  }
  if (cfg.adversarial.has_value()) {
    validate_attack_spec(*cfg.adversarial);
    if (!(cfg.adversarial_ratio >= 0.0f && cfg.adversarial_ratio <= 1.0f)) {
      throw std::invalid_argument("train: adversarial ratio must be in [0,1]");
    }
  }
}

}  // namespace

TrainResult train(const ModelSpec& spec, const Dataset& data, const TrainConfig& cfg) {
  check_train_inputs(spec, data, cfg);

  TrainResult out;
  out.model = build_model(spec, cfg.seed);
  Model& m = out.model;
  m.spec.range_lo = data.range_lo;
  m.spec.range_hi = data.range_hi;

  std::vector<Tensor> wvel, bvel;
  for (const auto& w : m.weights) wvel.emplace_back(w.empty() ? Tensor{} : Tensor(w.shape));
  for (const auto& b : m.biases) bvel.emplace_back(b.empty() ? Tensor{} : Tensor(b.shape));

  std::vector<std::vector<double>> wacc(m.weights.size()), bacc(m.biases.size());
  for (size_t li = 0; li < m.weights.size(); ++li) {
    wacc[li].resize(m.weights[li].data.size());
    bacc[li].resize(m.biases[li].data.size());
  }

  const size_t n = data.size();
  std::vector<size_t> order(n);
  Workspace ws;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), size_t{0});
    Rng shuffle_rng(derive_seed(cfg.seed, "shuffle", static_cast<uint64_t>(epoch)));
    shuffle_rng.shuffle(order);
    const uint64_t epoch_attack_seed = derive_seed(cfg.seed, "advtrain", static_cast<uint64_t>(epoch));

    double loss_sum = 0.0;
    size_t correct = 0, seen = 0;

    for (size_t base = 0; base < n; base += static_cast<size_t>(cfg.batch_size)) {
      const size_t len = std::min(static_cast<size_t>(cfg.batch_size), n - base);
      const size_t adv_count =
          cfg.adversarial.has_value()
              ? static_cast<size_t>(std::lround(cfg.adversarial_ratio * static_cast<double>(len)))
              : 0;

      for (auto& acc : wacc) std::fill(acc.begin(), acc.end(), 0.0);
      for (auto& acc : bacc) std::fill(acc.begin(), acc.end(), 0.0);

      for (size_t j = 0; j < len; ++j) {
        const size_t idx = order[base + j];
        const int label = data.labels[idx];
        Tensor input = data.inputs[idx];
        if (j < adv_count) {
          AttackSpec item_spec = *cfg.adversarial;
          item_spec.seed = derive_seed(epoch_attack_seed, "item", base + j);
          input = run_attack(m, input, label, item_spec).input;
        }

        const Tensor& logits = forward_ws(m, input, ws);
        loss_sum += cross_entropy(logits, label);
        if (argmax_class(logits) == label) correct++;
        seen++;

        const GradientSet grads = backward_ws(m, input, label, ws);
        for (size_t li = 0; li < m.weights.size(); ++li) {
          for (size_t k = 0; k < wacc[li].size(); ++k) wacc[li][k] += grads.weight_grads[li].data[k];
          for (size_t k = 0; k < bacc[li].size(); ++k) bacc[li][k] += grads.bias_grads[li].data[k];
        }
      }

      const double inv_len = 1.0 / static_cast<double>(len);
      for (size_t li = 0; li < m.weights.size(); ++li) {
        for (size_t k = 0; k < wacc[li].size(); ++k) {
          float& v = wvel[li].data[k];
          v = cfg.momentum * v - cfg.learning_rate * static_cast<float>(wacc[li][k] * inv_len);
          m.weights[li].data[k] += v;
        }
        for (size_t k = 0; k < bacc[li].size(); ++k) {
          float& v = bvel[li].data[k];
          v = cfg.momentum * v - cfg.learning_rate * static_cast<float>(bacc[li][k] * inv_len);
          m.biases[li].data[k] += v;
        }
      }
    }

    out.epochs.push_back({loss_sum / static_cast<double>(seen),
                          static_cast<double>(correct) / static_cast<double>(seen)});
  }
  return out;
}

TrainResult adversarial_train(const ModelSpec& spec, const Dataset& data, const AttackSpec& attack,
                              TrainConfig cfg) {
  cfg.adversarial = attack;
  return train(spec, data, cfg);
}

double evaluate_accuracy(const Model& m, const Dataset& data, int threads) {
  data.validate();
  if (data.inputs.empty()) throw std::invalid_argument("evaluate_accuracy: empty dataset");
  std::vector<char> correct(data.size(), 0);
  parallel_for(
      data.size(),
      [&](size_t i) {
        Workspace ws;
        correct[i] = argmax_class(forward_ws(m, data.inputs[i], ws)) == data.labels[i] ? 1 : 0;
      },
      threads);
  size_t hits = 0;
  for (char c : correct) hits += static_cast<size_t>(c);
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

}  // namespace nccr
