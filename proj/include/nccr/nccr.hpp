#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nccr/dataset.hpp"
#include "nccr/model.hpp"
#include "nccr/trace.hpp"

namespace nccr {

enum class NoiseKind { TruncatedGaussian, Uniform };

std::string noise_kind_name(NoiseKind kind);
NoiseKind noise_kind_from_name(const std::string& name);

// Bounded random perturbation: every delta satisfies |delta| <= epsilon and
// outputs are clipped to [clip_lo, clip_hi]. TruncatedGaussian draws with
// sigma = epsilon/3 truncated at +-epsilon; Uniform draws on [-eps, +eps].
struct NoiseSpec {
  float epsilon = 0.3f;
  NoiseKind kind = NoiseKind::TruncatedGaussian;
  int draws = 10;
  uint64_t seed = 0;
  float clip_lo = 0.0f;
  float clip_hi = 1.0f;
};

// Throws std::invalid_argument: epsilon < 0, draws < 1, or empty clip range.
void validate_noise_spec(const NoiseSpec& noise);

// Deterministic in (noise.seed, draw). Input must lie in the clip range.
Tensor perturb(const Tensor& input, const NoiseSpec& noise, std::size_t draw);

// Per-neuron mean absolute activation change over the K draws.
struct NccrFeature {
  std::vector<float> values;  // aligned with the selection's NeuronId order
  std::string model_id;
  std::string selection;
  NoiseSpec noise;
  bool normalized = false;
};

// entry j = (1/K) sum_k |trace(perturb(x, k))[j] - trace(x)[j]|.
// `normalize` divides by the l2 norm of the clean trace (skipped when that
// norm is 0); off by default, raw changes are what gets compared.
NccrFeature nccr_feature(const Model& m, const Tensor& input, const NoiseSpec& noise,
                         const LayerSelection& sel, bool normalize = false);

enum class NormKind { L2, L1, Linf };

std::string norm_kind_name(NormKind kind);
NormKind norm_kind_from_name(const std::string& name);

// The chosen norm of the feature vector. Throws on an empty feature.
double nccr_score(const NccrFeature& feature, NormKind norm = NormKind::L2);

struct NccrItem {
  NccrFeature feature;
  double score = 0.0;
};

// Per-item noise streams derive from (noise.seed, hash of the item tensor),
// so results are independent of dataset order and thread schedule: permuting
// the inputs permutes the outputs, value for value.
std::vector<NccrItem> nccr_batch(const Model& m, const Dataset& data, const NoiseSpec& noise,
                                 const LayerSelection& sel, NormKind norm = NormKind::L2,
                                 bool normalize = false, int threads = 0);

// Tukey box-plot statistics: whiskers reach the farthest points within
// 1.5*IQR of the quartile hinges, everything beyond is an outlier.
struct BoxStats {
  double median = 0.0;
  double mean = 0.0;
  double q1 = 0.0;
  double q3 = 0.0;
  double whisker_lo = 0.0;
  double whisker_hi = 0.0;
  std::vector<double> outliers;
};

// Quartiles by linear interpolation over the sorted values. Throws on empty.
BoxStats nccr_summary(const std::vector<double>& scores);

// "stat,value" rows: median, mean, q1, q3, whisker_lo, whisker_hi, then one
// outlier row per point.
std::string box_stats_csv(const BoxStats& stats);

// Raw little-endian float32 rows at `path` plus a `<path>.json` sidecar with
// the dimensions, selection, noise spec, and model id. Throws on I/O failure
// or mismatched feature dimensions.
void save_features(const std::string& path, const std::vector<NccrFeature>& features);

}  // namespace nccr
