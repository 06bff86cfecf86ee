#include "nccr/detect.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "nccr/parallel.hpp"
#include "nccr/rng.hpp"
#include "nccr/stats.hpp"
#include "nccr/trace.hpp"
#include "nccr/zoo.hpp"

namespace nccr {

void DetectionDataset::validate() const {
  if (features.size() != labels.size()) {
    throw std::invalid_argument("detection set: feature/label count mismatch");
  }
  const std::size_t d = dim();
  for (const NccrFeature& f : features) {
    if (f.values.size() != d) {
      throw std::invalid_argument("detection set: mixed feature dimensions");
    }
  }
  for (int label : labels) {
    if (label != 0 && label != 1) {
      throw std::invalid_argument("detection set: labels must be 0 (clean) or 1 (adversarial)");
    }
  }
}

namespace {

// subsample `items` down to `keep`, preserving relative order
std::vector<std::size_t> balanced_keep(std::size_t n, std::size_t keep, uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  rng.shuffle(idx);
  idx.resize(keep);
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace

DetectionDataset build_detection_set(const Model& m, const Dataset& clean, const Dataset& adv,
                                     const NoiseSpec& noise, const LayerSelection& sel,
                                     int threads) {
  if (clean.size() == 0) throw std::invalid_argument("build_detection_set: empty clean dataset");
  if (adv.size() == 0) throw std::invalid_argument("build_detection_set: empty adversarial dataset");
  if (clean.inputs[0].shape != adv.inputs[0].shape) {
    throw std::invalid_argument("build_detection_set: clean and adversarial input shapes differ");
  }

  auto clean_items = nccr_batch(m, clean, noise, sel, NormKind::L2, false, threads);
  auto adv_items = nccr_batch(m, adv, noise, sel, NormKind::L2, false, threads);

  std::vector<std::size_t> clean_idx(clean_items.size());
  std::iota(clean_idx.begin(), clean_idx.end(), 0);
  std::vector<std::size_t> adv_idx(adv_items.size());
  std::iota(adv_idx.begin(), adv_idx.end(), 0);

  const std::size_t keep = std::min(clean_items.size(), adv_items.size());
  if (clean_items.size() > keep) {
    clean_idx = balanced_keep(clean_items.size(), keep, derive_seed(noise.seed, "balance", 0));
  } else if (adv_items.size() > keep) {
    adv_idx = balanced_keep(adv_items.size(), keep, derive_seed(noise.seed, "balance", 1));
  }

  DetectionDataset set;
  set.model_id = m.id();
  set.noise = noise;
  set.attack_provenance = adv.name;
  set.features.reserve(2 * keep);
  set.labels.reserve(2 * keep);
  for (std::size_t i : clean_idx) {
    set.features.push_back(std::move(clean_items[i].feature));
    set.labels.push_back(0);
  }
  for (std::size_t i : adv_idx) {
    set.features.push_back(std::move(adv_items[i].feature));
    set.labels.push_back(1);
  }
  set.validate();
  return set;
}

std::size_t DetectorModel::input_dim() const {
  return net.spec.input_shape.empty() ? 0 : static_cast<std::size_t>(net.spec.input_shape[0]);
}

DetectorModel train_detector(const DetectionDataset& set, const std::vector<int>& hidden,
                             const TrainConfig& cfg) {
  set.validate();
  if (set.size() == 0) throw std::invalid_argument("train_detector: empty detection set");
  const bool has_clean = std::find(set.labels.begin(), set.labels.end(), 0) != set.labels.end();
  const bool has_adv = std::find(set.labels.begin(), set.labels.end(), 1) != set.labels.end();
  if (!has_clean || !has_adv) {
    throw std::invalid_argument("train_detector: both classes must be present");
  }
  if (hidden.empty()) throw std::invalid_argument("train_detector: need at least one hidden width");
  for (int w : hidden) {
    if (w < 1) throw std::invalid_argument("train_detector: hidden widths must be positive");
  }

  const int dim = static_cast<int>(set.dim());
  Dataset data;
  data.name = "detection-" + set.attack_provenance;
  data.class_count = 2;
  float lo = 0.0f, hi = 1.0f;
  for (const NccrFeature& f : set.features) {
    Tensor t({dim});
    t.data = f.values;
    data.inputs.push_back(std::move(t));
    for (float v : f.values) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  data.labels = set.labels;
  data.range_lo = lo;
  data.range_hi = hi;

  // 80/20 split; tiny sets validate on what they trained on
  std::vector<std::size_t> idx(data.size());
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(derive_seed(cfg.seed, "split"));
  rng.shuffle(idx);
  const std::size_t val_count = data.size() / 5;
  std::vector<std::size_t> val_idx(idx.end() - static_cast<std::ptrdiff_t>(val_count), idx.end());
  idx.resize(data.size() - val_count);
  std::sort(idx.begin(), idx.end());
  std::sort(val_idx.begin(), val_idx.end());
  const Dataset train_split = data.subset(idx);
  const Dataset val_split = val_count > 0 ? data.subset(val_idx) : train_split;

  std::vector<int> widths;
  widths.push_back(dim);
  widths.insert(widths.end(), hidden.begin(), hidden.end());
  widths.push_back(2);

  DetectorModel detector;
  detector.hidden = hidden;
  TrainResult result = train(mlp_spec(widths), train_split, cfg);
  detector.net = std::move(result.model);
  detector.net.tag = "detector";
  detector.epochs = std::move(result.epochs);
  detector.train_accuracy = evaluate_accuracy(detector.net, train_split);
  detector.val_accuracy = evaluate_accuracy(detector.net, val_split);
  return detector;
}

DetectorModel train_detector(const DetectionDataset& set, const TrainConfig& cfg) {
  return train_detector(set, {16, 24}, cfg);
}

double detect(const DetectorModel& detector, const NccrFeature& feature) {
  if (feature.values.size() != detector.input_dim()) {
    throw std::invalid_argument("detect: feature dimension " +
                                std::to_string(feature.values.size()) + " does not match detector " +
                                std::to_string(detector.input_dim()));
  }
  Tensor x({static_cast<int>(feature.values.size())});
  x.data = feature.values;
  const ForwardOutput out = forward(detector.net, x);
  return softmax(out.logits)[1];
}

std::vector<double> detect_batch(const DetectorModel& detector,
                                 const std::vector<NccrFeature>& features, int threads) {
  std::vector<double> probs(features.size());
  parallel_for(
      features.size(), [&](std::size_t i) { probs[i] = detect(detector, features[i]); }, threads);
  return probs;
}

RocResult auroc(const std::vector<double>& clean_scores, const std::vector<double>& adv_scores) {
  if (clean_scores.empty() || adv_scores.empty()) {
    throw std::invalid_argument("auroc: both score sets must be nonempty");
  }

  RocResult result;
  // the midrank U statistic counts exactly wins + half-ties
  result.auroc = mann_whitney_u(adv_scores, clean_scores) /
                 (static_cast<double>(adv_scores.size()) * static_cast<double>(clean_scores.size()));

  // threshold sweep over distinct scores, descending: classify >= t as
  // adversarial
  std::vector<double> all = adv_scores;
  all.insert(all.end(), clean_scores.begin(), clean_scores.end());
  std::sort(all.begin(), all.end(), std::greater<>());
  all.erase(std::unique(all.begin(), all.end()), all.end());

  std::vector<double> sorted_adv = adv_scores;
  std::vector<double> sorted_clean = clean_scores;
  std::sort(sorted_adv.begin(), sorted_adv.end(), std::greater<>());
  std::sort(sorted_clean.begin(), sorted_clean.end(), std::greater<>());

  result.curve.emplace_back(0.0, 0.0);
  std::size_t tp = 0, fp = 0;
  for (double t : all) {
    while (tp < sorted_adv.size() && sorted_adv[tp] >= t) ++tp;
    while (fp < sorted_clean.size() && sorted_clean[fp] >= t) ++fp;
    result.curve.emplace_back(static_cast<double>(fp) / static_cast<double>(clean_scores.size()),
                              static_cast<double>(tp) / static_cast<double>(adv_scores.size()));
  }
  return result;
}

CrossEvalGrid cross_eval(const std::vector<NamedDetector>& detectors,
                         const std::vector<NamedEvalSet>& eval_sets, int threads) {
  CrossEvalGrid grid;
  for (const NamedDetector& d : detectors) grid.trainers.push_back(d.name);
  for (const NamedEvalSet& e : eval_sets) grid.evals.push_back(e.name);

  grid.cells.assign(eval_sets.size(), std::vector<std::optional<double>>(detectors.size()));
  for (std::size_t r = 0; r < eval_sets.size(); ++r) {
    if (!eval_sets[r].set.has_value()) continue;
    const DetectionDataset& set = *eval_sets[r].set;
    set.validate();
    for (std::size_t c = 0; c < detectors.size(); ++c) {
      if (!detectors[c].detector.has_value()) continue;
      const std::vector<double> probs = detect_batch(*detectors[c].detector, set.features, threads);
      std::vector<double> clean_probs, adv_probs;
      for (std::size_t i = 0; i < probs.size(); ++i) {
        (set.labels[i] == 0 ? clean_probs : adv_probs).push_back(probs[i]);
      }
      if (clean_probs.empty() || adv_probs.empty()) continue;  // one-sided set: no AUROC
      grid.cells[r][c] = auroc(clean_probs, adv_probs).auroc;
    }
  }
  return grid;
}

std::string cross_eval_csv(const CrossEvalGrid& grid) {
  std::ostringstream out;
  out << "eval\\train";
  for (const std::string& t : grid.trainers) out << ',' << t;
  out << '\n';
  for (std::size_t r = 0; r < grid.evals.size(); ++r) {
    out << grid.evals[r];
    for (std::size_t c = 0; c < grid.trainers.size(); ++c) {
      out << ',';
      if (grid.cells[r][c].has_value()) out << *grid.cells[r][c];
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace nccr
