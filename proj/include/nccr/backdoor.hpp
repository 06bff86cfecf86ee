#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nccr/dataset.hpp"
#include "nccr/model.hpp"
#include "nccr/nccr.hpp"
#include "nccr/train.hpp"

namespace nccr {

enum class TriggerKind { Patch, Blended };

std::string trigger_kind_name(TriggerKind kind);
TriggerKind trigger_kind_from_name(const std::string& name);

enum class Corner { TopLeft, TopRight, BottomLeft, BottomRight };

std::string corner_name(Corner corner);
Corner corner_from_name(const std::string& name);

// Patch: a solid block of `color` (set it to the input-range maximum for a
// white patch) covering patch_h x patch_w pixels in the anchor corner, all
// channels. Blended: out = (1-alpha)*input + alpha*blend.
struct TriggerSpec {
  TriggerKind kind = TriggerKind::Patch;
  int patch_h = 5;
  int patch_w = 5;
  Corner anchor = Corner::BottomRight;
  float color = 1.0f;
  Tensor blend;
  float alpha = 0.2f;
};

// Throws std::invalid_argument: non-[c,h,w] input, patch outside bounds,
// blend shape mismatch, alpha outside [0,1].
void validate_trigger_spec(const TriggerSpec& trigger, const std::vector<int>& input_shape);

Tensor apply_trigger(const Tensor& input, const TriggerSpec& trigger);

struct PoisonConfig {
  double rate = 0.1;    // fraction of items to poison, in (0,1)
  int target_label = 0;
  uint64_t seed = 0;
};

struct PoisonResult {
  Dataset data;
  std::vector<char> mask;  // 1 = poisoned, aligned with data items
  std::size_t poisoned_count = 0;
};

// Stamps the trigger and the target label onto floor(rate*size) seeded-random
// distinct items; everything else is untouched. Requires at least one item to
// poison and a valid target label.
PoisonResult poison_dataset(const Dataset& data, const TriggerSpec& trigger,
                            const PoisonConfig& config);

// Fraction of triggered test items the model classifies as the target.
double attack_success_rate(const Model& m, const Dataset& clean_test, const TriggerSpec& trigger,
                           int target_label, int threads = 0);

struct BackdoorTrainResult {
  Model model;
  std::vector<EpochMetrics> epochs;
  double clean_accuracy = 0.0;
  double attack_success_rate = 0.0;
};

// Ordinary training on the poisoned set, then clean accuracy and ASR on the
// held-out test set.
BackdoorTrainResult train_backdoored(const ModelSpec& spec, const Dataset& poisoned_train,
                                     const Dataset& clean_test, const TriggerSpec& trigger,
                                     int target_label, const TrainConfig& cfg);

// Scalar l2 NCCR per item under noise whose strength is given on the raw
// 0-255 pixel scale and mapped to the model's input range (so 256 spans the
// whole range). Scores are normalized by the clean trace norm: trigger
// inputs drive unusually large activations, and only the relative change
// rate inverts between tiny and structure-destroying noise. Draws/seed as
// in nccr_batch; selection defaults to every hidden layer.
std::vector<double> nccr_large_eps(const Model& m, const Dataset& items, double epsilon_255,
                                   uint64_t seed, int draws = 10, int threads = 0);
std::vector<double> nccr_large_eps(const Model& m, const Dataset& items, double epsilon_255,
                                   uint64_t seed, const LayerSelection& sel, int draws = 10,
                                   int threads = 0);

struct ClusterResult {
  std::vector<int> assignments;                // 0/1 per point
  std::vector<std::vector<double>> centroids;  // 2 x dim
  double inertia = 0.0;
  bool degenerate = false;            // all points identical: no second cluster
  std::vector<double> inertia_trace;  // per Lloyd round of the winning restart
};

// 2-means: Lloyd to convergence from seeded kmeans++ starts, best inertia
// wins. Instances of up to 10 points also seed a run from every 2-partition,
// which pins the result to the global optimum there. Needs at least two
// points.
ClusterResult kmeans2(const std::vector<std::vector<double>>& points, uint64_t seed,
                      int restarts = 16);
ClusterResult kmeans2(const std::vector<double>& scores, uint64_t seed, int restarts = 16);

// s(i) = (b-a)/max(a,b); members of a singleton cluster score 0. Requires two
// nonempty clusters.
std::vector<double> silhouette_values(const std::vector<std::vector<double>>& points,
                                      const std::vector<int>& assignments);
double silhouette(const std::vector<std::vector<double>>& points,
                  const std::vector<int>& assignments);
std::vector<double> silhouette_values(const std::vector<double>& scores,
                                      const std::vector<int>& assignments);
double silhouette(const std::vector<double>& scores, const std::vector<int>& assignments);

// Clean models cluster their own score spread at silhouettes around 0.55;
// planted triggers separate at 0.73 and up. The gate sits between those
// measured bands.
inline constexpr double kSilhouetteGate = 0.65;

struct BackdoorVerdict {
  bool present = false;
  double silhouette = 0.0;
  double gate = kSilhouetteGate;
  int suspected_cluster = -1;       // -1 when absent
  std::vector<char> poison_labels;  // empty when absent
  std::string diagnostic;
};

// Gate first, then point the finger at the minority cluster: poison rates
// sit well below half, and the poisoned side may score high (patch triggers
// hold activations far from the noise state) or low (blended triggers drag
// them toward it), so cluster size is the direction-free tell. Equal sizes
// fall back to the larger centroid norm.
BackdoorVerdict backdoor_verdict(const ClusterResult& clusters, double silhouette_mean,
                                 double gate = kSilhouetteGate);

// 2PR/(P+R); 0 when no true or predicted positives exist. Lengths must match.
double f1_score(const std::vector<char>& predicted, const std::vector<char>& truth);

struct BackdoorScan {
  std::vector<double> scores;      // raw l2 NCCR per item at the probe strength
  std::vector<double> log_scores;  // what gets clustered
  ClusterResult clusters;
  double silhouette = 0.0;
  BackdoorVerdict verdict;
};

// The whole training-set sweep: score every item under structure-destroying
// noise, cluster the log scores, gate on silhouette, emit the verdict. Log
// scale because the clean scores spread multiplicatively and would otherwise
// absorb the cluster boundary. Scores here stay unnormalized: the trace-norm
// shift a trigger causes is the separating signal, and dividing it away
// (as the inversion comparison does) would erase it. Throws on nonpositive
// scores (epsilon too small or a dead model).
BackdoorScan scan_backdoor(const Model& m, const Dataset& train_data, double epsilon_255 = 256.0,
                           uint64_t seed = 0,
                           const LayerSelection& sel = LayerSelection::all_hidden(),
                           int draws = 10, double gate = kSilhouetteGate, int threads = 0);

}  // namespace nccr
