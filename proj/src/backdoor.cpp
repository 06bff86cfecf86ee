#include "nccr/backdoor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "nccr/parallel.hpp"
#include "nccr/rng.hpp"
#include "nccr/trace.hpp"

namespace nccr {

std::string trigger_kind_name(TriggerKind kind) {
  return kind == TriggerKind::Patch ? "patch" : "blended";
}

TriggerKind trigger_kind_from_name(const std::string& name) {
  if (name == "patch") return TriggerKind::Patch;
  if (name == "blended") return TriggerKind::Blended;
  throw std::invalid_argument("unknown trigger kind \"" + name + "\" (expected patch or blended)");
}

std::string corner_name(Corner corner) {
  switch (corner) {
    case Corner::TopLeft:
      return "top-left";
    case Corner::TopRight:
      return "top-right";
    case Corner::BottomLeft:
      return "bottom-left";
    case Corner::BottomRight:
      return "bottom-right";
  }
  return "?";
}

Corner corner_from_name(const std::string& name) {
  if (name == "top-left") return Corner::TopLeft;
  if (name == "top-right") return Corner::TopRight;
  if (name == "bottom-left") return Corner::BottomLeft;
  if (name == "bottom-right") return Corner::BottomRight;
  throw std::invalid_argument("unknown corner \"" + name + "\"");
}

void validate_trigger_spec(const TriggerSpec& trigger, const std::vector<int>& input_shape) {
  if (input_shape.size() != 3) {
    throw std::invalid_argument("trigger: input must be [channels, height, width]");
  }
  if (trigger.kind == TriggerKind::Patch) {
    if (trigger.patch_h < 1 || trigger.patch_w < 1) {
      throw std::invalid_argument("trigger: patch dimensions must be positive");
    }
    if (trigger.patch_h > input_shape[1] || trigger.patch_w > input_shape[2]) {
      throw std::invalid_argument("trigger: patch " + std::to_string(trigger.patch_h) + "x" +
                                  std::to_string(trigger.patch_w) + " does not fit in " +
                                  std::to_string(input_shape[1]) + "x" +
                                  std::to_string(input_shape[2]));
    }
  } else {
    if (trigger.blend.shape != input_shape) {
      throw std::invalid_argument("trigger: blend image shape does not match the input");
    }
    if (!(trigger.alpha >= 0.0f && trigger.alpha <= 1.0f)) {
      throw std::invalid_argument("trigger: alpha must be in [0, 1]");
    }
  }
}

Tensor apply_trigger(const Tensor& input, const TriggerSpec& trigger) {
  validate_trigger_spec(trigger, input.shape);
  Tensor out = input;

  if (trigger.kind == TriggerKind::Blended) {
    for (std::size_t i = 0; i < out.data.size(); ++i) {
      out.data[i] = (1.0f - trigger.alpha) * input.data[i] + trigger.alpha * trigger.blend.data[i];
    }
    return out;
  }

  const int ch = input.shape[0], h = input.shape[1], w = input.shape[2];
  const int y0 = (trigger.anchor == Corner::TopLeft || trigger.anchor == Corner::TopRight)
                     ? 0
                     : h - trigger.patch_h;
  const int x0 = (trigger.anchor == Corner::TopLeft || trigger.anchor == Corner::BottomLeft)
                     ? 0
                     : w - trigger.patch_w;
  for (int c = 0; c < ch; ++c) {
    for (int y = y0; y < y0 + trigger.patch_h; ++y) {
      for (int x = x0; x < x0 + trigger.patch_w; ++x) {
        out.data[(static_cast<std::size_t>(c) * h + y) * w + x] = trigger.color;
      }
    }
  }
  return out;
}

PoisonResult poison_dataset(const Dataset& data, const TriggerSpec& trigger,
                            const PoisonConfig& config) {
  data.validate();
  if (data.size() == 0) throw std::invalid_argument("poison_dataset: empty dataset");
  validate_trigger_spec(trigger, data.inputs[0].shape);
  if (!(config.rate > 0.0 && config.rate < 1.0)) {
    throw std::invalid_argument("poison_dataset: rate must be in (0, 1)");
  }
  const std::size_t count = static_cast<std::size_t>(config.rate * static_cast<double>(data.size()));
  if (count < 1) {
    throw std::invalid_argument("poison_dataset: rate " + std::to_string(config.rate) +
                                " poisons nothing at " + std::to_string(data.size()) + " items");
  }
  if (config.target_label < 0 || config.target_label >= data.class_count) {
    throw std::invalid_argument("poison_dataset: target label out of range");
  }

  std::vector<std::size_t> idx(data.size());
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(derive_seed(config.seed, "poison"));
  rng.shuffle(idx);
  idx.resize(count);

  PoisonResult result;
  result.data = data;
  result.data.name = data.name + "-poisoned-" + trigger_kind_name(trigger.kind);
  result.mask.assign(data.size(), 0);
  result.poisoned_count = count;
  for (std::size_t i : idx) {
    result.data.inputs[i] = apply_trigger(data.inputs[i], trigger);
    result.data.labels[i] = config.target_label;
    result.mask[i] = 1;
  }
  result.data.validate();  // catches trigger colors outside the data range
  return result;
}

double attack_success_rate(const Model& m, const Dataset& clean_test, const TriggerSpec& trigger,
                           int target_label, int threads) {
  clean_test.validate();
  if (clean_test.size() == 0) throw std::invalid_argument("attack_success_rate: empty test set");
  validate_trigger_spec(trigger, clean_test.inputs[0].shape);

  std::vector<char> hit(clean_test.size(), 0);
  parallel_for(
      clean_test.size(),
      [&](std::size_t i) {
        Workspace ws;
        const Tensor triggered = apply_trigger(clean_test.inputs[i], trigger);
        hit[i] = argmax_class(forward_ws(m, triggered, ws)) == target_label ? 1 : 0;
      },
      threads);
  const std::size_t hits = static_cast<std::size_t>(std::count(hit.begin(), hit.end(), 1));
  return static_cast<double>(hits) / static_cast<double>(clean_test.size());
}

BackdoorTrainResult train_backdoored(const ModelSpec& spec, const Dataset& poisoned_train,
                                     const Dataset& clean_test, const TriggerSpec& trigger,
                                     int target_label, const TrainConfig& cfg) {
  BackdoorTrainResult result;
  TrainResult trained = train(spec, poisoned_train, cfg);
  result.model = std::move(trained.model);
  result.epochs = std::move(trained.epochs);
  result.clean_accuracy = evaluate_accuracy(result.model, clean_test);
  result.attack_success_rate =
      nccr::attack_success_rate(result.model, clean_test, trigger, target_label);
  return result;
}

std::vector<double> nccr_large_eps(const Model& m, const Dataset& items, double epsilon_255,
                                   uint64_t seed, const LayerSelection& sel, int draws,
                                   int threads) {
  if (epsilon_255 < 0.0) throw std::invalid_argument("nccr_large_eps: epsilon must be >= 0");
  NoiseSpec noise;
  noise.clip_lo = m.spec.range_lo;
  noise.clip_hi = m.spec.range_hi;
  noise.epsilon = static_cast<float>(epsilon_255 / 255.0 *
                                     static_cast<double>(noise.clip_hi - noise.clip_lo));
  noise.draws = draws;
  noise.seed = seed;

  const auto batch = nccr_batch(m, items, noise, sel, NormKind::L2, true, threads);
  std::vector<double> scores(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) scores[i] = batch[i].score;
  return scores;
}

std::vector<double> nccr_large_eps(const Model& m, const Dataset& items, double epsilon_255,
                                   uint64_t seed, int draws, int threads) {
  return nccr_large_eps(m, items, epsilon_255, seed, LayerSelection::all_hidden(), draws, threads);
}

namespace {

double sq_dist(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

struct LloydRun {
  std::vector<int> assignments;
  std::vector<std::vector<double>> centroids;
  double inertia = 0.0;
  std::vector<double> trace;
};

std::vector<std::vector<double>> plus_plus_init(const std::vector<std::vector<double>>& points,
                                                uint64_t seed) {
  const std::size_t n = points.size();
  Rng rng(seed);

  // kmeans++: first center uniform, second proportional to squared distance
  std::vector<std::vector<double>> centroids(2);
  centroids[0] = points[rng.uniform_int(n)];
  std::vector<double> weight(n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    weight[i] = sq_dist(points[i], centroids[0]);
    total += weight[i];
  }
  double pick = rng.uniform() * total;
  std::size_t second = n - 1;
  for (std::size_t i = 0; i < n; ++i) {
    pick -= weight[i];
    if (pick <= 0.0) {
      second = i;
      break;
    }
  }
  centroids[1] = points[second];
  return centroids;
}

LloydRun lloyd_once(const std::vector<std::vector<double>>& points,
                    std::vector<std::vector<double>> centroids) {
  const std::size_t n = points.size();
  const std::size_t dim = points[0].size();
  std::vector<int> assign(n, 0);
  LloydRun run;
  for (int round = 0; round < 100; ++round) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      const int c = sq_dist(points[i], centroids[0]) <= sq_dist(points[i], centroids[1]) ? 0 : 1;
      if (c != assign[i]) changed = true;
      assign[i] = c;
    }

    // an empty side grabs the point farthest from the surviving centroid
    for (int c = 0; c < 2; ++c) {
      if (std::count(assign.begin(), assign.end(), c) > 0) continue;
      std::size_t farthest = 0;
      double best = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double d = sq_dist(points[i], centroids[1 - c]);
        if (d > best) {
          best = d;
          farthest = i;
        }
      }
      assign[farthest] = c;
      changed = true;
    }

    for (int c = 0; c < 2; ++c) {
      std::vector<double> mean(dim, 0.0);
      std::size_t members = 0;
      for (std::size_t i = 0; i < n; ++i) {
        if (assign[i] != c) continue;
        for (std::size_t j = 0; j < dim; ++j) mean[j] += points[i][j];
        ++members;
      }
      for (double& v : mean) v /= static_cast<double>(members);
      centroids[c] = std::move(mean);
    }

    double inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i) inertia += sq_dist(points[i], centroids[assign[i]]);
    run.trace.push_back(inertia);
    if (!changed && round > 0) break;
  }

  run.assignments = std::move(assign);
  run.centroids = std::move(centroids);
  run.inertia = run.trace.back();
  return run;
}

}  // namespace

ClusterResult kmeans2(const std::vector<std::vector<double>>& points, uint64_t seed, int restarts) {
  if (points.size() < 2) throw std::invalid_argument("kmeans2: need at least two points");
  if (restarts < 1) throw std::invalid_argument("kmeans2: need at least one restart");
  const std::size_t dim = points[0].size();
  if (dim == 0) throw std::invalid_argument("kmeans2: zero-dimensional points");
  for (const auto& p : points) {
    if (p.size() != dim) throw std::invalid_argument("kmeans2: mixed point dimensions");
  }

  ClusterResult result;
  const bool all_same =
      std::all_of(points.begin(), points.end(), [&](const auto& p) { return p == points[0]; });
  if (all_same) {
    result.assignments.assign(points.size(), 0);
    result.centroids = {points[0], points[0]};
    result.inertia = 0.0;
    result.degenerate = true;
    result.inertia_trace = {0.0};
    return result;
  }

  std::vector<std::vector<std::vector<double>>> starts;
  for (int r = 0; r < restarts; ++r) {
    starts.push_back(plus_plus_init(points, derive_seed(seed, "kmeans", static_cast<uint64_t>(r))));
  }
  // Tiny instances get a start at every 2-partition's centroid pair. A Lloyd
  // run never ends above its seed partition's inertia and every final state
  // is itself a partition, so the winner is the global optimum.
  if (points.size() <= 10) {
    const unsigned full = 1u << points.size();
    for (unsigned bits = 1; bits + 1 < full; ++bits) {
      std::vector<std::vector<double>> c(2, std::vector<double>(dim, 0.0));
      std::size_t count[2] = {0, 0};
      for (std::size_t i = 0; i < points.size(); ++i) {
        const int side = (bits >> i) & 1u;
        for (std::size_t j = 0; j < dim; ++j) c[side][j] += points[i][j];
        ++count[side];
      }
      for (int side = 0; side < 2; ++side) {
        for (double& v : c[side]) v /= static_cast<double>(count[side]);
      }
      starts.push_back(std::move(c));
    }
  }

  bool have = false;
  LloydRun best;
  for (auto& start : starts) {
    LloydRun run = lloyd_once(points, std::move(start));
    if (!have || run.inertia < best.inertia) {
      best = std::move(run);
      have = true;
    }
  }

  result.assignments = std::move(best.assignments);
  result.centroids = std::move(best.centroids);
  result.inertia = best.inertia;
  result.inertia_trace = std::move(best.trace);
  return result;
}

namespace {

std::vector<std::vector<double>> lift(const std::vector<double>& scores) {
  std::vector<std::vector<double>> points(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) points[i] = {scores[i]};
  return points;
}

}  // namespace

ClusterResult kmeans2(const std::vector<double>& scores, uint64_t seed, int restarts) {
  return kmeans2(lift(scores), seed, restarts);
}

std::vector<double> silhouette_values(const std::vector<std::vector<double>>& points,
                                      const std::vector<int>& assignments) {
  const std::size_t n = points.size();
  if (assignments.size() != n) throw std::invalid_argument("silhouette: assignment size mismatch");
  std::size_t count[2] = {0, 0};
  for (int a : assignments) {
    if (a != 0 && a != 1) throw std::invalid_argument("silhouette: assignments must be 0 or 1");
    count[a]++;
  }
  if (count[0] == 0 || count[1] == 0) {
    throw std::invalid_argument("silhouette: both clusters must be nonempty");
  }

  std::vector<double> values(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int own = assignments[i];
    if (count[own] == 1) {
      values[i] = 0.0;
      continue;
    }
    double own_sum = 0.0, other_sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const double d = std::sqrt(sq_dist(points[i], points[j]));
      if (assignments[j] == own) own_sum += d;
      else other_sum += d;
    }
    const double a = own_sum / static_cast<double>(count[own] - 1);
    const double b = other_sum / static_cast<double>(count[1 - own]);
    const double denom = std::max(a, b);
    values[i] = denom > 0.0 ? (b - a) / denom : 0.0;
  }
  return values;
}

double silhouette(const std::vector<std::vector<double>>& points,
                  const std::vector<int>& assignments) {
  const std::vector<double> values = silhouette_values(points, assignments);
  double sum = 0.0;
  for (double v : values) sum += v;
  return sum / static_cast<double>(values.size());
}

std::vector<double> silhouette_values(const std::vector<double>& scores,
                                      const std::vector<int>& assignments) {
  return silhouette_values(lift(scores), assignments);
}

double silhouette(const std::vector<double>& scores, const std::vector<int>& assignments) {
  return silhouette(lift(scores), assignments);
}

BackdoorVerdict backdoor_verdict(const ClusterResult& clusters, double silhouette_mean,
                                 double gate) {
  BackdoorVerdict verdict;
  verdict.silhouette = silhouette_mean;
  verdict.gate = gate;

  if (clusters.degenerate) {
    verdict.diagnostic = "degenerate clustering: all scores identical";
    return verdict;
  }
  if (silhouette_mean < gate) {
    verdict.diagnostic = "silhouette below gate: clusters not credible";
    return verdict;
  }

  const std::size_t in_one = static_cast<std::size_t>(
      std::count(clusters.assignments.begin(), clusters.assignments.end(), 1));
  const std::size_t in_zero = clusters.assignments.size() - in_one;
  verdict.present = true;
  if (in_one != in_zero) {
    verdict.suspected_cluster = in_one < in_zero ? 1 : 0;
  } else {
    double norm0 = 0.0, norm1 = 0.0;
    for (double v : clusters.centroids[0]) norm0 += v * v;
    for (double v : clusters.centroids[1]) norm1 += v * v;
    verdict.suspected_cluster = norm1 > norm0 ? 1 : 0;
  }
  verdict.poison_labels.resize(clusters.assignments.size());
  for (std::size_t i = 0; i < clusters.assignments.size(); ++i) {
    verdict.poison_labels[i] = clusters.assignments[i] == verdict.suspected_cluster ? 1 : 0;
  }
  return verdict;
}

BackdoorScan scan_backdoor(const Model& m, const Dataset& train_data, double epsilon_255,
                           uint64_t seed, const LayerSelection& sel, int draws, double gate,
                           int threads) {
  if (epsilon_255 <= 0.0) throw std::invalid_argument("scan_backdoor: epsilon must be positive");
  NoiseSpec noise;
  noise.clip_lo = m.spec.range_lo;
  noise.clip_hi = m.spec.range_hi;
  noise.epsilon = static_cast<float>(epsilon_255 / 255.0 *
                                     static_cast<double>(noise.clip_hi - noise.clip_lo));
  noise.draws = draws;
  noise.seed = seed;

  BackdoorScan scan;
  const auto batch = nccr_batch(m, train_data, noise, sel, NormKind::L2, false, threads);
  scan.scores.resize(batch.size());
  scan.log_scores.resize(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    scan.scores[i] = batch[i].score;
    if (!(scan.scores[i] > 0.0)) {
      throw std::invalid_argument("scan_backdoor: item " + std::to_string(i) +
                                  " scored zero; nothing to cluster");
    }
    scan.log_scores[i] = std::log(scan.scores[i]);
  }
  scan.clusters = kmeans2(scan.log_scores, derive_seed(seed, "cluster"));
  scan.silhouette = scan.clusters.degenerate ? 0.0 : silhouette(scan.log_scores, scan.clusters.assignments);
  scan.verdict = backdoor_verdict(scan.clusters, scan.silhouette, gate);
  return scan;
}

double f1_score(const std::vector<char>& predicted, const std::vector<char>& truth) {
  if (predicted.size() != truth.size()) {
    throw std::invalid_argument("f1_score: length mismatch");
  }
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const bool p = predicted[i] != 0, t = truth[i] != 0;
    if (p && t) ++tp;
    else if (p && !t) ++fp;
    else if (!p && t) ++fn;
  }
  if (tp == 0) return 0.0;
  const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
  const double recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
  return 2.0 * precision * recall / (precision + recall);
}

}  // namespace nccr
