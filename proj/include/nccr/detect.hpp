#pragma once

#include <optional>
#include <string>
#include <vector>

#include "nccr/dataset.hpp"
#include "nccr/model.hpp"
#include "nccr/nccr.hpp"
#include "nccr/train.hpp"

namespace nccr {

// Labeled NCCR features: 0 = clean, 1 = adversarial.
struct DetectionDataset {
  std::vector<NccrFeature> features;
  std::vector<int> labels;
  std::string model_id;
  NoiseSpec noise;
  std::string attack_provenance;  // name of the adversarial source set

  std::size_t size() const { return features.size(); }
  std::size_t dim() const { return features.empty() ? 0 : features[0].values.size(); }
  // equal lengths, uniform dimension, labels in {0,1}
  void validate() const;
};

// Scores both sides with per-item content-keyed noise streams (bitwise equal
// to direct nccr_feature calls) and balances the classes by subsampling the
// larger side, seeded from (noise.seed, "balance"). Requires nonempty
// datasets of one input shape.
DetectionDataset build_detection_set(const Model& m, const Dataset& clean, const Dataset& adv,
                                     const NoiseSpec& noise, const LayerSelection& sel,
                                     int threads = 0);

// Two hidden relu layers over the feature vector, two-way softmax output.
// Default widths {16, 24}: 1818 parameters at the 84-wide default feature.
struct DetectorModel {
  Model net;
  std::vector<int> hidden;
  std::vector<EpochMetrics> epochs;
  double train_accuracy = 0.0;
  double val_accuracy = 0.0;

  int64_t parameter_count() const { return net.parameter_count(); }
  std::size_t input_dim() const;
};

// Trains on an 80/20 split drawn from (cfg.seed, "split"); sets smaller than
// five items validate on the training items. Rejects single-class sets.
DetectorModel train_detector(const DetectionDataset& set, const std::vector<int>& hidden,
                             const TrainConfig& cfg);
DetectorModel train_detector(const DetectionDataset& set, const TrainConfig& cfg);

// Softmax probability that the feature is adversarial. Rejects dimension
// mismatches.
double detect(const DetectorModel& detector, const NccrFeature& feature);
std::vector<double> detect_batch(const DetectorModel& detector,
                                 const std::vector<NccrFeature>& features, int threads = 0);

struct RocResult {
  double auroc = 0.0;
  // threshold sweep from (0,0) to (1,1), one point per distinct score
  std::vector<std::pair<double, double>> curve;  // (fpr, tpr)
};

// Exact rank statistic: P(adv > clean) + 0.5 P(tie). Identical arithmetic to
// counting every pair. Both sides must be nonempty.
RocResult auroc(const std::vector<double>& clean_scores, const std::vector<double>& adv_scores);

// One detector or evaluation set per attack name; empty optionals leave the
// matching grid cells absent.
struct NamedDetector {
  std::string name;
  std::optional<DetectorModel> detector;
};

struct NamedEvalSet {
  std::string name;
  std::optional<DetectionDataset> set;
};

struct CrossEvalGrid {
  std::vector<std::string> trainers;                      // column order
  std::vector<std::string> evals;                         // row order
  std::vector<std::vector<std::optional<double>>> cells;  // [eval][trainer]
};

CrossEvalGrid cross_eval(const std::vector<NamedDetector>& detectors,
                         const std::vector<NamedEvalSet>& eval_sets, int threads = 0);

// Rows are evaluated attacks, columns are training attacks; absent cells
// stay empty.
std::string cross_eval_csv(const CrossEvalGrid& grid);

}  // namespace nccr
