#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "nccr/backdoor.hpp"
#include "nccr/dataset.hpp"
#include "nccr/model.hpp"
#include "nccr/nccr.hpp"
#include "nccr/rng.hpp"
#include "nccr/stats.hpp"
#include "nccr/tensor.hpp"
#include "nccr/train.hpp"
#include "nccr/zoo.hpp"

using namespace nccr;

namespace {

Tensor zeros(int c, int h, int w) {
  Tensor t;
  t.shape = {c, h, w};
  t.data.assign(static_cast<std::size_t>(c) * h * w, 0.0f);
  return t;
}

Tensor random_image(uint64_t seed, int c = 1, int h = 28, int w = 28) {
  Tensor t = zeros(c, h, w);
  Rng rng(seed);
  for (auto& v : t.data) v = static_cast<float>(rng.uniform());
  return t;
}

uint64_t params_hash(const Model& m) {
  uint64_t h = 0;
  for (std::size_t i = 0; i < m.weights.size(); ++i) {
    h = tensor_hash(m.weights[i], h ^ 0x9e3779b97f4a7c15ull);
    h = tensor_hash(m.biases[i], h ^ 0x517cc1b727220a95ull);
  }
  return h;
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

TrainConfig desk_config(int epochs) {
  TrainConfig cfg;
  cfg.epochs = epochs;
  cfg.batch_size = 32;
  cfg.learning_rate = 0.05f;
  cfg.seed = 7;
  return cfg;
}

struct PlantedBackdoor {
  TriggerSpec trigger;
  PoisonResult poisoned;
  Dataset test;
  BackdoorTrainResult trained;
};

const PlantedBackdoor& badnets_fixture() {
  static const PlantedBackdoor fx = [] {
    PlantedBackdoor p;
    p.trigger = TriggerSpec{};  // 5x5 white patch, bottom-right
    const Dataset tr = digits28_dataset(600, 11);
    p.test = digits28_dataset(300, 12);
    PoisonConfig pc;
    pc.rate = 0.1;
    pc.target_label = 0;
    pc.seed = 5;
    p.poisoned = poison_dataset(tr, p.trigger, pc);
    p.trained = train_backdoored(lenet5(), p.poisoned.data, p.test, p.trigger, 0, desk_config(12));
    return p;
  }();
  return fx;
}

const PlantedBackdoor& blended_fixture() {
  static const PlantedBackdoor fx = [] {
    PlantedBackdoor p;
    p.trigger.kind = TriggerKind::Blended;
    p.trigger.blend = random_image(42);
    p.trigger.alpha = 0.2f;
    const Dataset tr = digits28_dataset(600, 11);
    p.test = digits28_dataset(300, 12);
    PoisonConfig pc;
    pc.rate = 0.1;
    pc.target_label = 0;
    pc.seed = 5;
    p.poisoned = poison_dataset(tr, p.trigger, pc);
    p.trained = train_backdoored(lenet5(), p.poisoned.data, p.test, p.trigger, 0, desk_config(25));
    return p;
  }();
  return fx;
}

const Model& clean_desk_model() {
  static const Model m = [] {
    const Dataset tr = digits28_dataset(600, 11);
    return train(lenet5(), tr, desk_config(12)).model;
  }();
  return m;
}

}  // namespace

TEST_CASE("patch trigger stamps exactly the covered block") {
  const Tensor base = zeros(1, 28, 28);
  const TriggerSpec trig;  // defaults: 5x5, bottom-right, color 1
  const Tensor out = apply_trigger(base, trig);

  std::size_t lit = 0;
  for (float v : out.data) {
    if (v == 1.0f) ++lit;
    else CHECK(v == 0.0f);
  }
  CHECK(lit == 25);
  for (int y = 23; y < 28; ++y) {
    for (int x = 23; x < 28; ++x) {
      CHECK(out.data[static_cast<std::size_t>(y) * 28 + x] == 1.0f);
    }
  }

  // locality on an arbitrary image: covered pixels take the color, the rest
  // stay bit-identical
  const Tensor img = random_image(17);
  const Tensor stamped = apply_trigger(img, trig);
  for (int y = 0; y < 28; ++y) {
    for (int x = 0; x < 28; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * 28 + x;
      if (y >= 23 && x >= 23) CHECK(stamped.data[i] == 1.0f);
      else CHECK(stamped.data[i] == img.data[i]);
    }
  }
}

TEST_CASE("each corner anchors its own block") {
  TriggerSpec trig;
  trig.patch_h = 2;
  trig.patch_w = 3;
  trig.color = 0.5f;
  const Tensor base = zeros(1, 4, 5);

  const auto covered = [&](Corner corner) {
    trig.anchor = corner;
    const Tensor out = apply_trigger(base, trig);
    std::vector<std::pair<int, int>> hits;
    for (int y = 0; y < 4; ++y) {
      for (int x = 0; x < 5; ++x) {
        if (out.data[static_cast<std::size_t>(y) * 5 + x] == 0.5f) hits.emplace_back(y, x);
      }
    }
    return hits;
  };

  using P = std::vector<std::pair<int, int>>;
  CHECK(covered(Corner::TopLeft) == P{{0, 0}, {0, 1}, {0, 2}, {1, 0}, {1, 1}, {1, 2}});
  CHECK(covered(Corner::TopRight) == P{{0, 2}, {0, 3}, {0, 4}, {1, 2}, {1, 3}, {1, 4}});
  CHECK(covered(Corner::BottomLeft) == P{{2, 0}, {2, 1}, {2, 2}, {3, 0}, {3, 1}, {3, 2}});
  CHECK(covered(Corner::BottomRight) == P{{2, 2}, {2, 3}, {2, 4}, {3, 2}, {3, 3}, {3, 4}});

  // both channels get stamped
  TriggerSpec two;
  two.patch_h = two.patch_w = 2;
  two.color = 0.25f;
  const Tensor multi = apply_trigger(zeros(2, 4, 4), two);
  std::size_t lit = 0;
  for (float v : multi.data) lit += v == 0.25f ? 1 : 0;
  CHECK(lit == 8);
}

TEST_CASE("patch geometry is validated") {
  const Tensor img = zeros(1, 28, 28);
  TriggerSpec trig;

  trig.patch_h = 29;
  CHECK_THROWS_AS(apply_trigger(img, trig), std::invalid_argument);
  trig.patch_h = 5;
  trig.patch_w = 40;
  CHECK_THROWS_AS(apply_trigger(img, trig), std::invalid_argument);
  trig.patch_w = 0;
  CHECK_THROWS_AS(apply_trigger(img, trig), std::invalid_argument);

  Tensor flat;
  flat.shape = {784};
  flat.data.assign(784, 0.0f);
  CHECK_THROWS_AS(apply_trigger(flat, TriggerSpec{}), std::invalid_argument);

  // a patch covering the whole image is legal
  TriggerSpec full;
  full.patch_h = full.patch_w = 28;
  full.color = 0.75f;
  const Tensor out = apply_trigger(img, full);
  CHECK(std::all_of(out.data.begin(), out.data.end(), [](float v) { return v == 0.75f; }));
}

TEST_CASE("blended trigger mixes by alpha") {
  const Tensor img = random_image(31);
  const Tensor blend = random_image(32);

  TriggerSpec trig;
  trig.kind = TriggerKind::Blended;
  trig.blend = blend;

  trig.alpha = 0.0f;
  CHECK(apply_trigger(img, trig).data == img.data);
  trig.alpha = 1.0f;
  CHECK(apply_trigger(img, trig).data == blend.data);

  trig.alpha = 0.2f;
  const Tensor mixed = apply_trigger(img, trig);
  for (std::size_t i = 0; i < mixed.data.size(); ++i) {
    CHECK(mixed.data[i] == (1.0f - 0.2f) * img.data[i] + 0.2f * blend.data[i]);
  }

  // convex mix never leaves the pixelwise span of its endpoints
  for (uint64_t seed = 40; seed < 43; ++seed) {
    const Tensor a = random_image(seed);
    trig.alpha = 0.6f;
    const Tensor out = apply_trigger(a, trig);
    for (std::size_t i = 0; i < out.data.size(); ++i) {
      CHECK(out.data[i] >= std::min(a.data[i], blend.data[i]) - 1e-6f);
      CHECK(out.data[i] <= std::max(a.data[i], blend.data[i]) + 1e-6f);
    }
  }

  trig.alpha = 1.5f;
  CHECK_THROWS_AS(apply_trigger(img, trig), std::invalid_argument);
  trig.alpha = -0.1f;
  CHECK_THROWS_AS(apply_trigger(img, trig), std::invalid_argument);
  trig.alpha = 0.2f;
  trig.blend = random_image(33, 1, 14, 14);
  CHECK_THROWS_AS(apply_trigger(img, trig), std::invalid_argument);
}

TEST_CASE("trigger enum names round-trip") {
  CHECK(trigger_kind_name(TriggerKind::Patch) == "patch");
  CHECK(trigger_kind_name(TriggerKind::Blended) == "blended");
  CHECK(trigger_kind_from_name("patch") == TriggerKind::Patch);
  CHECK(trigger_kind_from_name("blended") == TriggerKind::Blended);
  CHECK_THROWS_AS(trigger_kind_from_name("sticker"), std::invalid_argument);

  for (Corner c : {Corner::TopLeft, Corner::TopRight, Corner::BottomLeft, Corner::BottomRight}) {
    CHECK(corner_from_name(corner_name(c)) == c);
  }
  CHECK_THROWS_AS(corner_from_name("center"), std::invalid_argument);
}

TEST_CASE("poisoning stamps the chosen items and nothing else") {
  const Dataset data = synthetic_dataset(SyntheticKind::MiniDigits, 200, 3);
  TriggerSpec trig;
  trig.patch_h = trig.patch_w = 2;

  PoisonConfig pc;
  pc.rate = 0.25;
  pc.target_label = 1;
  pc.seed = 5;
  const PoisonResult res = poison_dataset(data, trig, pc);

  CHECK(res.poisoned_count == 50);
  CHECK(res.mask.size() == 200);
  CHECK(static_cast<std::size_t>(std::count(res.mask.begin(), res.mask.end(), 1)) == 50);
  CHECK(res.data.name == data.name + "-poisoned-patch");
  CHECK(res.data.size() == 200);

  for (std::size_t i = 0; i < 200; ++i) {
    if (res.mask[i]) {
      CHECK(res.data.labels[i] == 1);
      CHECK(res.data.inputs[i].data == apply_trigger(data.inputs[i], trig).data);
    } else {
      CHECK(res.data.labels[i] == data.labels[i]);
      CHECK(res.data.inputs[i].data == data.inputs[i].data);
    }
  }

  // floor semantics and poisoned_count/mask agreement
  pc.rate = 0.107;
  CHECK(poison_dataset(data, trig, pc).poisoned_count == 21);

  pc.rate = 0.25;
  const PoisonResult again = poison_dataset(data, trig, pc);
  CHECK(again.mask == res.mask);
  pc.seed = 6;
  CHECK(poison_dataset(data, trig, pc).mask != res.mask);
}

TEST_CASE("degenerate poison configs are rejected") {
  const Dataset data = synthetic_dataset(SyntheticKind::MiniDigits, 200, 3);
  TriggerSpec trig;
  trig.patch_h = trig.patch_w = 2;
  PoisonConfig pc;

  pc.rate = 0.0;
  CHECK_THROWS_AS(poison_dataset(data, trig, pc), std::invalid_argument);
  pc.rate = 1.0;
  CHECK_THROWS_AS(poison_dataset(data, trig, pc), std::invalid_argument);
  pc.rate = -0.2;
  CHECK_THROWS_AS(poison_dataset(data, trig, pc), std::invalid_argument);
  pc.rate = 0.001;  // floor(0.2) items
  CHECK_THROWS_AS(poison_dataset(data, trig, pc), std::invalid_argument);

  pc.rate = 0.1;
  pc.target_label = -1;
  CHECK_THROWS_AS(poison_dataset(data, trig, pc), std::invalid_argument);
  pc.target_label = data.class_count;
  CHECK_THROWS_AS(poison_dataset(data, trig, pc), std::invalid_argument);

  pc.target_label = 0;
  CHECK_THROWS_AS(poison_dataset(Dataset{}, trig, pc), std::invalid_argument);

  // a trigger color outside the dataset range makes the result invalid
  TriggerSpec hot = trig;
  hot.color = 2.0f;
  CHECK_THROWS_AS(poison_dataset(data, hot, pc), std::invalid_argument);
}

TEST_CASE("backdoor training plants the trigger without hurting clean accuracy") {
  const PlantedBackdoor& fx = badnets_fixture();
  CHECK(fx.trained.clean_accuracy >= 0.9);
  CHECK(fx.trained.attack_success_rate >= 0.9);
  CHECK(fx.trained.epochs.size() == 12);
}

TEST_CASE("a clean model ignores the trigger") {
  const Model& clean = clean_desk_model();
  const Dataset te = digits28_dataset(300, 12);
  const TriggerSpec trig;

  const double asr = attack_success_rate(clean, te, trig, 0);
  CHECK(asr <= 0.2);  // ten classes: chance level

  // recompute the rate by hand on a subset
  std::vector<std::size_t> idx(100);
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  const Dataset sub = te.subset(idx);
  std::size_t hits = 0;
  Workspace ws;
  for (const Tensor& x : sub.inputs) {
    hits += argmax_class(forward_ws(clean, apply_trigger(x, trig), ws)) == 0 ? 1 : 0;
  }
  CHECK(attack_success_rate(clean, sub, trig, 0) ==
        static_cast<double>(hits) / static_cast<double>(sub.size()));

  CHECK_THROWS_AS(attack_success_rate(clean, Dataset{}, trig, 0), std::invalid_argument);
}

TEST_CASE("backdoored training is reproducible") {
  const Dataset tr = synthetic_dataset(SyntheticKind::MiniDigits, 200, 3);
  const Dataset te = synthetic_dataset(SyntheticKind::MiniDigits, 60, 4);
  TriggerSpec trig;
  trig.patch_h = trig.patch_w = 2;
  PoisonConfig pc;
  pc.rate = 0.1;
  pc.target_label = 1;
  pc.seed = 5;
  const PoisonResult poisoned = poison_dataset(tr, trig, pc);

  TrainConfig cfg;
  cfg.epochs = 4;
  cfg.batch_size = 32;
  cfg.learning_rate = 0.05f;
  cfg.seed = 9;
  const BackdoorTrainResult a = train_backdoored(mini_conv(), poisoned.data, te, trig, 1, cfg);
  const BackdoorTrainResult b = train_backdoored(mini_conv(), poisoned.data, te, trig, 1, cfg);

  CHECK(params_hash(a.model) == params_hash(b.model));
  CHECK(a.clean_accuracy == b.clean_accuracy);
  CHECK(a.attack_success_rate == b.attack_success_rate);
}

TEST_CASE("large-noise scoring maps the 0-255 scale onto the input range") {
  const Dataset items = synthetic_dataset(SyntheticKind::MiniDigits, 12, 8);
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 16;
  cfg.learning_rate = 0.05f;
  cfg.seed = 2;
  const Model m = train(mini_conv(), items, cfg).model;

  const std::vector<double> zero = nccr_large_eps(m, items, 0.0, 7);
  CHECK(zero.size() == 12);
  CHECK(std::all_of(zero.begin(), zero.end(), [](double s) { return s == 0.0; }));

  // the wrapper is the plain batch scorer with a rescaled noise spec
  for (double eps255 : {8.0, 255.0}) {
    NoiseSpec noise;
    noise.clip_lo = m.spec.range_lo;
    noise.clip_hi = m.spec.range_hi;
    noise.epsilon =
        static_cast<float>(eps255 / 255.0 * static_cast<double>(noise.clip_hi - noise.clip_lo));
    noise.draws = 10;
    noise.seed = 7;
    const auto batch =
        nccr_batch(m, items, noise, LayerSelection::all_hidden(), NormKind::L2, true);
    const std::vector<double> scores = nccr_large_eps(m, items, eps255, 7);
    REQUIRE(scores.size() == batch.size());
    for (std::size_t i = 0; i < scores.size(); ++i) CHECK(scores[i] == batch[i].score);
  }

  // selection overload routes through the same spec
  {
    NoiseSpec noise;
    noise.clip_lo = m.spec.range_lo;
    noise.clip_hi = m.spec.range_hi;
    noise.epsilon =
        static_cast<float>(8.0 / 255.0 * static_cast<double>(noise.clip_hi - noise.clip_lo));
    noise.draws = 10;
    noise.seed = 7;
    const auto batch =
        nccr_batch(m, items, noise, LayerSelection::penultimate(), NormKind::L2, true);
    const std::vector<double> scores =
        nccr_large_eps(m, items, 8.0, 7, LayerSelection::penultimate());
    for (std::size_t i = 0; i < scores.size(); ++i) CHECK(scores[i] == batch[i].score);
  }

  CHECK_THROWS_AS(nccr_large_eps(m, items, -1.0, 7), std::invalid_argument);
}

TEST_CASE("tiny and full-range noise order poisoned and clean oppositely") {
  const PlantedBackdoor& fx = badnets_fixture();

  Dataset with_trigger = fx.test;
  for (Tensor& x : with_trigger.inputs) x = apply_trigger(x, fx.trigger);

  const std::vector<double> tiny_clean = nccr_large_eps(fx.trained.model, fx.test, 8.0, 99);
  const std::vector<double> tiny_pois = nccr_large_eps(fx.trained.model, with_trigger, 8.0, 99);
  CHECK(mean_of(tiny_pois) < mean_of(tiny_clean));
  CHECK(mann_whitney_greater(tiny_clean, tiny_pois) < 0.01);

  const std::vector<double> full_clean = nccr_large_eps(fx.trained.model, fx.test, 256.0, 99);
  const std::vector<double> full_pois = nccr_large_eps(fx.trained.model, with_trigger, 256.0, 99);
  CHECK(mean_of(full_pois) > mean_of(full_clean));
  CHECK(mann_whitney_greater(full_pois, full_clean) < 0.01);
}

TEST_CASE("kmeans2 splits well-separated score pairs") {
  const std::vector<double> scores = {0.0, 0.01, 10.0, 10.01};
  const ClusterResult cl = kmeans2(scores, 1);

  CHECK(cl.assignments[0] == cl.assignments[1]);
  CHECK(cl.assignments[2] == cl.assignments[3]);
  CHECK(cl.assignments[0] != cl.assignments[2]);
  CHECK_FALSE(cl.degenerate);

  const int lo = cl.assignments[0], hi = cl.assignments[2];
  const double c_lo = (0.0 + 0.01) / 2.0, c_hi = (10.0 + 10.01) / 2.0;
  CHECK(cl.centroids[lo][0] == c_lo);
  CHECK(cl.centroids[hi][0] == c_hi);

  double expected = 0.0;
  for (double v : {0.0, 0.01}) expected += (v - c_lo) * (v - c_lo);
  for (double v : {10.0, 10.01}) expected += (v - c_hi) * (v - c_hi);
  CHECK(cl.inertia == doctest::Approx(expected).epsilon(1e-12));
}

namespace {

double partition_inertia(const std::vector<std::vector<double>>& pts, unsigned bits) {
  const std::size_t n = pts.size(), d = pts[0].size();
  std::vector<std::vector<double>> c(2, std::vector<double>(d, 0.0));
  std::size_t count[2] = {0, 0};
  for (std::size_t i = 0; i < n; ++i) {
    const int side = (bits >> i) & 1u;
    for (std::size_t j = 0; j < d; ++j) c[side][j] += pts[i][j];
    ++count[side];
  }
  for (int side = 0; side < 2; ++side) {
    for (double& v : c[side]) v /= static_cast<double>(count[side]);
  }
  double inertia = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const int side = (bits >> i) & 1u;
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double diff = pts[i][j] - c[side][j];
      s += diff * diff;
    }
    inertia += s;
  }
  return inertia;
}

}  // namespace

TEST_CASE("kmeans2 matches exhaustive search on tiny instances") {
  Rng rng(77);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng.uniform_int(7);
    const std::size_t d = 1 + rng.uniform_int(3);
    std::vector<std::vector<double>> pts(n, std::vector<double>(d));
    for (auto& p : pts) {
      for (auto& v : p) v = rng.uniform(-5.0, 5.0);
    }

    const ClusterResult cl = kmeans2(pts, 1000 + static_cast<uint64_t>(trial));
    double best = partition_inertia(pts, 1);
    for (unsigned bits = 2; bits + 1 < (1u << n); ++bits) {
      best = std::min(best, partition_inertia(pts, bits));
    }
    CHECK(cl.inertia == best);

    const auto ones = std::count(cl.assignments.begin(), cl.assignments.end(), 1);
    CHECK(ones > 0);
    CHECK(static_cast<std::size_t>(ones) < n);
  }
}

TEST_CASE("kmeans2 descends, repeats itself, and rejects bad input") {
  Rng rng(55);
  std::vector<std::vector<double>> pts(40, std::vector<double>(2));
  for (auto& p : pts) {
    p[0] = rng.uniform(0.0, 1.0);
    p[1] = rng.uniform(0.0, 1.0);
  }

  const ClusterResult a = kmeans2(pts, 9);
  REQUIRE(!a.inertia_trace.empty());
  CHECK(a.inertia_trace.back() == a.inertia);
  for (std::size_t i = 1; i < a.inertia_trace.size(); ++i) {
    CHECK(a.inertia_trace[i] <= a.inertia_trace[i - 1]);
  }

  const ClusterResult b = kmeans2(pts, 9);
  CHECK(a.assignments == b.assignments);
  CHECK(a.centroids == b.centroids);
  CHECK(a.inertia == b.inertia);

  // all-identical input degenerates to a single cluster
  const std::vector<std::vector<double>> same(5, std::vector<double>{2.5, -1.0});
  const ClusterResult deg = kmeans2(same, 3);
  CHECK(deg.degenerate);
  CHECK(deg.inertia == 0.0);
  CHECK(std::all_of(deg.assignments.begin(), deg.assignments.end(), [](int x) { return x == 0; }));
  CHECK(deg.centroids[0] == deg.centroids[1]);

  CHECK_THROWS_AS(kmeans2(std::vector<std::vector<double>>{{1.0}}, 0), std::invalid_argument);
  CHECK_THROWS_AS(kmeans2(std::vector<std::vector<double>>{{}, {}}, 0), std::invalid_argument);
  CHECK_THROWS_AS(kmeans2(std::vector<std::vector<double>>{{1.0}, {1.0, 2.0}}, 0),
                  std::invalid_argument);
  CHECK_THROWS_AS(kmeans2(pts, 9, 0), std::invalid_argument);

  // the scalar overload is the vector call on one-dimensional points
  const std::vector<double> scores = {0.3, 1.8, 0.1, 2.2, 0.4, 1.9};
  std::vector<std::vector<double>> lifted(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) lifted[i] = {scores[i]};
  const ClusterResult sc = kmeans2(scores, 4);
  const ClusterResult vec = kmeans2(lifted, 4);
  CHECK(sc.assignments == vec.assignments);
  CHECK(sc.inertia == vec.inertia);
  CHECK(sc.centroids == vec.centroids);
}

TEST_CASE("silhouette hand cases") {
  {
    const std::vector<double> pts = {0.0, 1.0, 10.0, 11.0};
    const std::vector<int> labels = {0, 0, 1, 1};
    const std::vector<double> s = silhouette_values(pts, labels);
    REQUIRE(s.size() == 4);
    CHECK(s[0] == (10.5 - 1.0) / 10.5);
    CHECK(s[1] == (9.5 - 1.0) / 9.5);
    CHECK(s[2] == (9.5 - 1.0) / 9.5);
    CHECK(s[3] == (10.5 - 1.0) / 10.5);
    CHECK(silhouette(pts, labels) ==
          (s[0] + s[1] + s[2] + s[3]) / 4.0);
  }
  {
    // identical points score 1 (zero within-distance); a singleton scores 0
    const std::vector<double> pts = {5.0, 5.0, 8.0};
    const std::vector<int> labels = {0, 0, 1};
    const std::vector<double> s = silhouette_values(pts, labels);
    CHECK(s[0] == 1.0);
    CHECK(s[1] == 1.0);
    CHECK(s[2] == 0.0);
    CHECK(silhouette(pts, labels) == (1.0 + 1.0 + 0.0) / 3.0);
  }
  {
    // tight, far-apart clusters approach 1
    Rng rng(61);
    std::vector<double> pts;
    std::vector<int> labels;
    for (int i = 0; i < 20; ++i) {
      pts.push_back(rng.uniform(-0.01, 0.01));
      labels.push_back(0);
      pts.push_back(100.0 + rng.uniform(-0.01, 0.01));
      labels.push_back(1);
    }
    CHECK(silhouette(pts, labels) > 0.99);
  }

  const std::vector<double> pts = {1.0, 2.0, 3.0};
  CHECK_THROWS_AS(silhouette(pts, std::vector<int>{0, 0, 0}), std::invalid_argument);
  CHECK_THROWS_AS(silhouette(pts, std::vector<int>{0, 1, 2}), std::invalid_argument);
  CHECK_THROWS_AS(silhouette(pts, std::vector<int>{0, 1}), std::invalid_argument);
}

TEST_CASE("silhouette matches a direct evaluation") {
  Rng rng(88);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 4 + rng.uniform_int(17);
    const std::size_t d = 1 + rng.uniform_int(3);
    std::vector<std::vector<double>> pts(n, std::vector<double>(d));
    for (auto& p : pts) {
      for (auto& v : p) v = rng.uniform(-3.0, 3.0);
    }
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(rng.uniform_int(2));
    labels[0] = 0;
    labels[1] = 1;  // both clusters inhabited

    std::vector<std::vector<double>> dist(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (std::size_t k = 0; k < d; ++k) {
          const double diff = pts[i][k] - pts[j][k];
          s += diff * diff;
        }
        dist[i][j] = std::sqrt(s);
      }
    }

    const std::vector<double> got = silhouette_values(pts, labels);
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t own = 0, other = 0;
      double own_sum = 0.0, other_sum = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        if (labels[j] == labels[i]) ++own;
        else ++other;
        if (j == i) continue;
        if (labels[j] == labels[i]) own_sum += dist[i][j];
        else other_sum += dist[i][j];
      }
      double expect = 0.0;
      if (own >= 2) {
        const double a = own_sum / static_cast<double>(own - 1);
        const double b = other_sum / static_cast<double>(other);
        expect = std::max(a, b) > 0.0 ? (b - a) / std::max(a, b) : 0.0;
      }
      CHECK(got[i] == expect);
      CHECK(got[i] >= -1.0);
      CHECK(got[i] <= 1.0);
      mean += got[i];
    }
    CHECK(silhouette(pts, labels) == mean / static_cast<double>(n));
  }
}

TEST_CASE("verdict gates on silhouette and flags the minority cluster") {
  ClusterResult cl;
  cl.assignments = {0, 0, 0, 1, 1};
  cl.centroids = {{5.0}, {1.0}};  // minority cluster has the LOWER mean
  cl.inertia = 0.5;

  const BackdoorVerdict hit = backdoor_verdict(cl, 0.8);
  CHECK(hit.present);
  CHECK(hit.suspected_cluster == 1);
  CHECK(hit.poison_labels == std::vector<char>{0, 0, 0, 1, 1});
  CHECK(hit.silhouette == 0.8);
  CHECK(hit.gate == kSilhouetteGate);

  const BackdoorVerdict gated = backdoor_verdict(cl, 0.4);
  CHECK_FALSE(gated.present);
  CHECK(gated.suspected_cluster == -1);
  CHECK(gated.poison_labels.empty());
  CHECK_FALSE(gated.diagnostic.empty());

  // custom gate overrides the default
  CHECK(backdoor_verdict(cl, 0.4, 0.3).present);

  // equal cluster sizes fall back to the larger centroid norm
  ClusterResult tie;
  tie.assignments = {0, 0, 1, 1};
  tie.centroids = {{2.0}, {7.0}};
  const BackdoorVerdict by_norm = backdoor_verdict(tie, 0.9);
  CHECK(by_norm.present);
  CHECK(by_norm.suspected_cluster == 1);

  ClusterResult deg;
  deg.assignments = {0, 0};
  deg.centroids = {{1.0}, {1.0}};
  deg.degenerate = true;
  const BackdoorVerdict none = backdoor_verdict(deg, 0.9);
  CHECK_FALSE(none.present);
  CHECK_FALSE(none.diagnostic.empty());
}

TEST_CASE("f1 arithmetic") {
  const std::vector<char> truth = {1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0};
  CHECK(f1_score(truth, truth) == 1.0);

  const std::vector<char> nothing(truth.size(), 0);
  CHECK(f1_score(nothing, truth) == 0.0);

  // eight found, two invented, two missed
  std::vector<char> pred = truth;
  pred[8] = pred[9] = 0;
  pred[10] = pred[11] = 1;
  CHECK(f1_score(pred, truth) == doctest::Approx(0.8).epsilon(1e-12));

  const std::vector<char> inverted(truth.size(), 1);
  CHECK(f1_score(inverted, nothing) == 0.0);

  CHECK_THROWS_AS(f1_score(std::vector<char>{1, 0}, std::vector<char>{1}),
                  std::invalid_argument);
}

TEST_CASE("the scan flags a planted patch backdoor") {
  const PlantedBackdoor& fx = badnets_fixture();
  const BackdoorScan scan = scan_backdoor(fx.trained.model, fx.poisoned.data, 256.0, 99);

  REQUIRE(scan.scores.size() == fx.poisoned.data.size());
  for (std::size_t i = 0; i < scan.scores.size(); ++i) {
    CHECK(scan.log_scores[i] == std::log(scan.scores[i]));
  }
  CHECK(scan.verdict.present);
  CHECK(scan.silhouette >= 0.7);
  CHECK(scan.verdict.gate == kSilhouetteGate);
  CHECK(f1_score(scan.verdict.poison_labels, fx.poisoned.mask) >= 0.85);
}

TEST_CASE("the scan flags a planted blended backdoor") {
  const PlantedBackdoor& fx = blended_fixture();
  CHECK(fx.trained.clean_accuracy >= 0.9);
  CHECK(fx.trained.attack_success_rate >= 0.9);

  const BackdoorScan scan = scan_backdoor(fx.trained.model, fx.poisoned.data, 256.0, 99);
  CHECK(scan.verdict.present);
  CHECK(f1_score(scan.verdict.poison_labels, fx.poisoned.mask) >= 0.9);
}

TEST_CASE("the scan passes clean models") {
  const Model& clean = clean_desk_model();
  const Dataset tr = digits28_dataset(600, 11);
  for (uint64_t seed = 100; seed < 103; ++seed) {
    const BackdoorScan scan = scan_backdoor(clean, tr, 256.0, seed);
    CHECK_FALSE(scan.verdict.present);
    CHECK(scan.silhouette < kSilhouetteGate);
  }
}

TEST_CASE("scan input validation") {
  const Dataset items = synthetic_dataset(SyntheticKind::MiniDigits, 8, 8);
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 8;
  cfg.learning_rate = 0.05f;
  cfg.seed = 2;
  const Model m = train(mini_conv(), items, cfg).model;

  CHECK_THROWS_AS(scan_backdoor(m, items, 0.0, 1), std::invalid_argument);
  CHECK_THROWS_AS(scan_backdoor(m, items, -8.0, 1), std::invalid_argument);

  // a dead model scores every item zero, which leaves nothing to cluster
  Model dead = m;
  for (Tensor& w : dead.weights) std::fill(w.data.begin(), w.data.end(), 0.0f);
  for (Tensor& b : dead.biases) std::fill(b.data.begin(), b.data.end(), 0.0f);
  CHECK_THROWS_AS(scan_backdoor(dead, items, 256.0, 1), std::invalid_argument);
}
