#include "nccr/train.hpp"

#include <cmath>

#include "doctest.h"
#include "nccr/dataset.hpp"
#include "nccr/rng.hpp"
#include "nccr/zoo.hpp"
#include "support/oracles.hpp"

using namespace nccr;

namespace {

uint64_t params_hash(const Model& m) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (const auto& w : m.weights) h = tensor_hash(w, h);
  for (const auto& b : m.biases) h = tensor_hash(b, h);
  return h;
}

}  // namespace

TEST_CASE("zero epochs returns the seeded initialization") {
  Dataset data = synthetic_dataset(SyntheticKind::Separable2D, 50, 1);
  TrainConfig cfg;
  cfg.epochs = 0;
  cfg.seed = 33;
  const TrainResult r = train(mlp_spec({2, 4, 2}), data, cfg);
  CHECK(r.epochs.empty());
  CHECK(params_hash(r.model) == params_hash(build_model(mlp_spec({2, 4, 2}), 33)));
}

TEST_CASE("training is bit-deterministic in its seed") {
  Dataset data = synthetic_dataset(SyntheticKind::Separable2D, 80, 2);
  TrainConfig cfg;
  cfg.epochs = 6;
  cfg.batch_size = 16;
  cfg.learning_rate = 0.1f;
  cfg.seed = 5;
  const TrainResult a = train(mlp_spec({2, 8, 2}), data, cfg);
  const TrainResult b = train(mlp_spec({2, 8, 2}), data, cfg);
  CHECK(params_hash(a.model) == params_hash(b.model));
  for (size_t e = 0; e < a.epochs.size(); ++e) {
    CHECK(a.epochs[e].mean_loss == b.epochs[e].mean_loss);
  }
  cfg.seed = 6;
  const TrainResult c = train(mlp_spec({2, 8, 2}), data, cfg);
  CHECK(params_hash(a.model) != params_hash(c.model));
}

TEST_CASE("a small mlp reaches 100% on the separable toy set within 50 epochs") {
  Dataset data = synthetic_dataset(SyntheticKind::Separable2D, 200, 5);

  // the set really is linearly separable (checked independently)
  std::vector<std::vector<double>> x;
  std::vector<int> signs;
  for (size_t i = 0; i < data.size(); ++i) {
    x.emplace_back(data.inputs[i].data.begin(), data.inputs[i].data.end());
    signs.push_back(data.labels[i] == 0 ? 1 : -1);
  }
  REQUIRE(oracles::perceptron_separates(x, signs));

  TrainConfig cfg;
  cfg.epochs = 50;
  cfg.batch_size = 16;
  cfg.learning_rate = 0.1f;
  cfg.seed = 7;
  const TrainResult r = train(mlp_spec({2, 8, 2}), data, cfg);
  bool reached = false;
  for (const auto& e : r.epochs) {
    if (e.accuracy == 1.0) reached = true;
  }
  CHECK(reached);
  CHECK(evaluate_accuracy(r.model, data) == 1.0);
}

TEST_CASE("training loss decreases on the separable set") {
  Dataset data = synthetic_dataset(SyntheticKind::Separable2D, 200, 5);
  TrainConfig cfg;
  cfg.epochs = 12;
  cfg.batch_size = 16;
  cfg.learning_rate = 0.1f;
  cfg.seed = 7;
  const TrainResult r = train(mlp_spec({2, 8, 2}), data, cfg);

  for (int e = 0; e + 1 < 5; ++e) {
    CHECK(r.epochs[e + 1].mean_loss < r.epochs[e].mean_loss);
  }
  for (size_t e = 0; e + 5 < r.epochs.size(); ++e) {
    if (r.epochs[e].mean_loss < 1e-3) break;
    CHECK(r.epochs[e + 5].mean_loss < r.epochs[e].mean_loss);
  }
}

TEST_CASE("train rejects bad inputs") {
  Dataset data = synthetic_dataset(SyntheticKind::Separable2D, 10, 1);
  TrainConfig cfg;

  Dataset empty;
  empty.class_count = 2;
  CHECK_THROWS_AS(train(mlp_spec({2, 2}), empty, cfg), std::invalid_argument);

  TrainConfig bad = cfg;
  bad.learning_rate = 0.0f;
  CHECK_THROWS_AS(train(mlp_spec({2, 2}), data, bad), std::invalid_argument);
  bad = cfg;
  bad.batch_size = 0;
  CHECK_THROWS_AS(train(mlp_spec({2, 2}), data, bad), std::invalid_argument);
  bad = cfg;
  bad.epochs = -1;
  CHECK_THROWS_AS(train(mlp_spec({2, 2}), data, bad), std::invalid_argument);

  // model narrower than the label space
  Dataset digits = synthetic_dataset(SyntheticKind::MiniDigits, 10, 1);
  CHECK_THROWS_AS(train(mlp_spec({64, 4}), digits, cfg), std::invalid_argument);
  // wrong input shape
  CHECK_THROWS_AS(train(mlp_spec({3, 2}), data, cfg), std::invalid_argument);
}

TEST_CASE("evaluate_accuracy matches hand counts") {
  // bias-only model: argmax is constant class 1
  ModelSpec spec = mlp_spec({2, 3});
  Model m = build_model(spec, 1);
  for (auto& v : m.weights[0].data) v = 0.0f;
  m.biases[0] = Tensor::from({3}, {0.0f, 5.0f, 1.0f});

  Dataset all_one;
  all_one.class_count = 3;
  for (int i = 0; i < 7; ++i) {
    all_one.inputs.push_back(Tensor::from({2}, {0.1f, 0.2f}));
    all_one.labels.push_back(1);
  }
  CHECK(evaluate_accuracy(m, all_one) == 1.0);

  for (auto& l : all_one.labels) l = 2;
  CHECK(evaluate_accuracy(m, all_one) == 0.0);

  all_one.labels = {1, 2, 1, 2, 1, 2, 1};
  CHECK(evaluate_accuracy(m, all_one) == doctest::Approx(4.0 / 7.0));

  Dataset empty;
  empty.class_count = 3;
  CHECK_THROWS_AS(evaluate_accuracy(m, empty), std::invalid_argument);
}

TEST_CASE("mini conv net learns mini-digits") {
  Dataset tr = synthetic_dataset(SyntheticKind::MiniDigits, 600, 11);
  Dataset te = synthetic_dataset(SyntheticKind::MiniDigits, 200, 12);
  TrainConfig cfg;
  cfg.epochs = 8;
  cfg.batch_size = 32;
  cfg.learning_rate = 0.05f;
  cfg.seed = 7;
  const TrainResult r = train(mini_conv(), tr, cfg);
  CHECK(evaluate_accuracy(r.model, te) >= 0.95);
}

TEST_CASE("adversarial ratio 0 trains exactly like plain sgd") {
  Dataset data = synthetic_dataset(SyntheticKind::MiniDigits, 120, 3);
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 32;
  cfg.learning_rate = 0.05f;
  cfg.seed = 9;

  const TrainResult plain = train(mini_conv(), data, cfg);

  AttackSpec pgd_spec;
  pgd_spec.kind = AttackKind::Pgd;
  pgd_spec.epsilon = 0.2f;
  pgd_spec.alpha = 0.05f;
  pgd_spec.steps = 5;
  TrainConfig adv_cfg = cfg;
  adv_cfg.adversarial_ratio = 0.0f;
  const TrainResult with_attack = adversarial_train(mini_conv(), data, pgd_spec, adv_cfg);

  CHECK(params_hash(plain.model) == params_hash(with_attack.model));
  for (size_t e = 0; e < plain.epochs.size(); ++e) {
    CHECK(plain.epochs[e].mean_loss == with_attack.epochs[e].mean_loss);
  }
}

TEST_CASE("adversarial training hardens the mini model") {
  Dataset tr = synthetic_dataset(SyntheticKind::MiniDigits, 600, 11);
  Dataset te = synthetic_dataset(SyntheticKind::MiniDigits, 150, 12);

  AttackSpec pgd_spec;
  pgd_spec.kind = AttackKind::Pgd;
  pgd_spec.epsilon = 0.15f;
  pgd_spec.alpha = 0.05f;
  pgd_spec.steps = 5;

  TrainConfig cfg;
  cfg.epochs = 12;
  cfg.batch_size = 32;
  cfg.learning_rate = 0.05f;
  cfg.seed = 7;

  const Model natural = train(mini_conv(), tr, cfg).model;

  // full replacement never converges at this budget; half the batch stays clean
  TrainConfig adv_cfg = cfg;
  adv_cfg.epochs = 16;
  adv_cfg.adversarial_ratio = 0.5f;
  const Model hardened = adversarial_train(mini_conv(), tr, pgd_spec, adv_cfg).model;

  // robust accuracy: evaluate on pgd examples built against each model
  auto robust_acc = [&](const Model& m) {
    AttackSpec eval = pgd_spec;
    eval.seed = 31;
    int correct = 0;
    Workspace ws;
    for (size_t i = 0; i < te.size(); ++i) {
      AttackSpec item = eval;
      item.seed = derive_seed(eval.seed, "attack", i);
      const AdvResult r = pgd(m, te.inputs[i], te.labels[i], item);
      if (argmax_class(forward_ws(m, r.input, ws)) == te.labels[i]) correct++;
    }
    return static_cast<double>(correct) / static_cast<double>(te.size());
  };

  const double nat_rob = robust_acc(natural);
  const double adv_rob = robust_acc(hardened);
  CHECK(adv_rob > nat_rob + 0.2);
  CHECK(evaluate_accuracy(hardened, te) >= 0.7);
}
