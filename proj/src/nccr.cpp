#include "nccr/nccr.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "bytes.hpp"
#include "json.hpp"
#include "nccr/parallel.hpp"
#include "nccr/rng.hpp"

namespace nccr {

std::string noise_kind_name(NoiseKind kind) {
  return kind == NoiseKind::TruncatedGaussian ? "truncated-gaussian" : "uniform";
}

NoiseKind noise_kind_from_name(const std::string& name) {
  if (name == "truncated-gaussian") return NoiseKind::TruncatedGaussian;
  if (name == "uniform") return NoiseKind::Uniform;
  throw std::invalid_argument("unknown noise kind \"" + name +
                              "\" (expected truncated-gaussian or uniform)");
}

void validate_noise_spec(const NoiseSpec& noise) {
  if (!(noise.epsilon >= 0.0f)) throw std::invalid_argument("noise: epsilon must be >= 0");
  if (noise.draws < 1) throw std::invalid_argument("noise: draws must be >= 1");
  if (!(noise.clip_lo < noise.clip_hi)) throw std::invalid_argument("noise: empty clip range");
}

Tensor perturb(const Tensor& input, const NoiseSpec& noise, std::size_t draw) {
  validate_noise_spec(noise);
  for (float v : input.data) {
    if (v < noise.clip_lo || v > noise.clip_hi) {
      throw std::invalid_argument("perturb: input outside the clip range");
    }
  }

  Rng rng(derive_seed(noise.seed, "perturb", draw));
  const float eps = noise.epsilon;
  Tensor out(input.shape);
  for (std::size_t i = 0; i < input.data.size(); ++i) {
    float delta;
    if (eps == 0.0f) {
      delta = 0.0f;
    } else if (noise.kind == NoiseKind::Uniform) {
      delta = static_cast<float>(rng.uniform(-eps, eps));
    } else {
      delta = static_cast<float>(rng.truncated_normal(eps / 3.0, eps));
    }
    out.data[i] = std::clamp(input.data[i] + delta, noise.clip_lo, noise.clip_hi);
  }
  return out;
}

NccrFeature nccr_feature(const Model& m, const Tensor& input, const NoiseSpec& noise,
                         const LayerSelection& sel, bool normalize) {
  validate_noise_spec(noise);
  const std::vector<std::size_t> layers = resolve_selection(m, sel);

  Workspace ws;
  std::vector<float> base;
  trace_values_ws(m, input, layers, ws, base);

  std::vector<double> acc(base.size(), 0.0);
  std::vector<float> perturbed;
  for (int k = 0; k < noise.draws; ++k) {
    const Tensor xk = perturb(input, noise, static_cast<std::size_t>(k));
    trace_values_ws(m, xk, layers, ws, perturbed);
    for (std::size_t j = 0; j < acc.size(); ++j) {
      acc[j] += std::abs(static_cast<double>(perturbed[j]) - static_cast<double>(base[j]));
    }
  }

  NccrFeature feature;
  feature.model_id = m.id();
  feature.selection = describe_selection(sel);
  feature.noise = noise;
  feature.values.resize(acc.size());
  for (std::size_t j = 0; j < acc.size(); ++j) {
    feature.values[j] = static_cast<float>(acc[j] / noise.draws);
  }

  if (normalize) {
    double sq = 0.0;
    for (float v : base) sq += static_cast<double>(v) * v;
    const double norm = std::sqrt(sq);
    if (norm > 0.0) {
      for (float& v : feature.values) v = static_cast<float>(v / norm);
    }
    feature.normalized = true;
  }
  return feature;
}

std::string norm_kind_name(NormKind kind) {
  switch (kind) {
    case NormKind::L2:
      return "l2";
    case NormKind::L1:
      return "l1";
    case NormKind::Linf:
      return "linf";
  }
  return "?";
}

NormKind norm_kind_from_name(const std::string& name) {
  if (name == "l2") return NormKind::L2;
  if (name == "l1") return NormKind::L1;
  if (name == "linf") return NormKind::Linf;
  throw std::invalid_argument("unknown norm \"" + name + "\" (expected l2, l1, or linf)");
}

double nccr_score(const NccrFeature& feature, NormKind norm) {
  if (feature.values.empty()) throw std::invalid_argument("nccr_score: empty feature");
  double out = 0.0;
  switch (norm) {
    case NormKind::L2:
      for (float v : feature.values) out += static_cast<double>(v) * v;
      out = std::sqrt(out);
      break;
    case NormKind::L1:
      for (float v : feature.values) out += std::abs(static_cast<double>(v));
      break;
    case NormKind::Linf:
      for (float v : feature.values) out = std::max(out, std::abs(static_cast<double>(v)));
      break;
  }
  return out;
}

std::vector<NccrItem> nccr_batch(const Model& m, const Dataset& data, const NoiseSpec& noise,
                                 const LayerSelection& sel, NormKind norm, bool normalize,
                                 int threads) {
  data.validate();
  if (data.size() == 0) throw std::invalid_argument("nccr_batch: empty dataset");
  validate_noise_spec(noise);
  resolve_selection(m, sel);  // fail fast before spawning work

  std::vector<NccrItem> items(data.size());
  parallel_for(
      data.size(),
      [&](std::size_t i) {
        NoiseSpec item_noise = noise;
        // keyed on content, not position: reordering the dataset reorders
        // the outputs without changing any per-item value
        item_noise.seed = derive_seed(noise.seed, "item", tensor_hash(data.inputs[i]));
        try {
          items[i].feature = nccr_feature(m, data.inputs[i], item_noise, sel, normalize);
          items[i].score = nccr_score(items[i].feature, norm);
        } catch (const std::invalid_argument& e) {
          throw std::invalid_argument("item " + std::to_string(i) + ": " + e.what());
        } catch (const std::exception& e) {
          throw std::runtime_error("item " + std::to_string(i) + ": " + e.what());
        }
      },
      threads);
  return items;
}

namespace {

// linear interpolation between order statistics, the common "type 7" rule
double quantile_sorted(const std::vector<double>& sorted, double p) {
  const std::size_t n = sorted.size();
  if (n == 1) return sorted[0];
  const double pos = p * static_cast<double>(n - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, n - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

}  // namespace

BoxStats nccr_summary(const std::vector<double>& scores) {
  if (scores.empty()) throw std::invalid_argument("nccr_summary: empty scores");

  std::vector<double> sorted = scores;
  std::sort(sorted.begin(), sorted.end());

  BoxStats stats;
  stats.q1 = quantile_sorted(sorted, 0.25);
  stats.median = quantile_sorted(sorted, 0.5);
  stats.q3 = quantile_sorted(sorted, 0.75);

  double sum = 0.0;
  for (double v : sorted) sum += v;
  stats.mean = sum / static_cast<double>(sorted.size());

  const double iqr = stats.q3 - stats.q1;
  const double fence_lo = stats.q1 - 1.5 * iqr;
  const double fence_hi = stats.q3 + 1.5 * iqr;

  // whiskers sit on the farthest data points inside the fences
  stats.whisker_lo = sorted.back();
  stats.whisker_hi = sorted.front();
  for (double v : sorted) {
    if (v >= fence_lo && v <= fence_hi) {
      stats.whisker_lo = std::min(stats.whisker_lo, v);
      stats.whisker_hi = std::max(stats.whisker_hi, v);
    } else {
      stats.outliers.push_back(v);
    }
  }
  return stats;
}

std::string box_stats_csv(const BoxStats& stats) {
  std::ostringstream out;
  out << "stat,value\n";
  out << "median," << stats.median << '\n';
  out << "mean," << stats.mean << '\n';
  out << "q1," << stats.q1 << '\n';
  out << "q3," << stats.q3 << '\n';
  out << "whisker_lo," << stats.whisker_lo << '\n';
  out << "whisker_hi," << stats.whisker_hi << '\n';
  for (double v : stats.outliers) out << "outlier," << v << '\n';
  return out.str();
}

void save_features(const std::string& path, const std::vector<NccrFeature>& features) {
  if (features.empty()) throw std::invalid_argument("save_features: nothing to save");
  const std::size_t dim = features[0].values.size();
  for (const NccrFeature& f : features) {
    if (f.values.size() != dim) {
      throw std::invalid_argument("save_features: mixed feature dimensions");
    }
  }

  std::vector<unsigned char> blob;
  blob.reserve(features.size() * dim * 4);
  for (const NccrFeature& f : features) {
    for (float v : f.values) bytes::put_le_f32(blob, v);
  }
  if (!bytes::write_file(path, blob)) {
    throw std::runtime_error("save_features: cannot write " + path);
  }

  const NccrFeature& first = features[0];
  nlohmann::json sidecar = {
      {"count", features.size()},
      {"dim", dim},
      {"dtype", "float32-le"},
      {"model_id", first.model_id},
      {"selection", first.selection},
      {"normalized", first.normalized},
      {"noise",
       {{"epsilon", first.noise.epsilon},
        {"kind", noise_kind_name(first.noise.kind)},
        {"draws", first.noise.draws},
        {"seed", first.noise.seed},
        {"clip_lo", first.noise.clip_lo},
        {"clip_hi", first.noise.clip_hi}}},
  };
  std::ofstream side(path + ".json");
  if (!side) throw std::runtime_error("save_features: cannot open " + path + ".json");
  side << sidecar.dump(2) << '\n';
  if (!side) throw std::runtime_error("save_features: write failed for " + path + ".json");
}

}  // namespace nccr
