#include "nccr/trace.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "nccr/parallel.hpp"

namespace nccr {

std::vector<std::size_t> resolve_selection(const Model& m, const LayerSelection& sel) {
  const std::size_t n = m.spec.layers.size();
  std::vector<std::size_t> picked;

  switch (sel.kind) {
    case SelectionKind::AllHidden: {
      for (std::size_t i = 0; i < n; ++i) {
        if (std::holds_alternative<ReluSpec>(m.spec.layers[i])) picked.push_back(i);
      }
      if (picked.empty()) {
        throw std::invalid_argument("layer selection: model has no hidden activation layers");
      }
      break;
    }
    case SelectionKind::Penultimate: {
      for (std::size_t i = 0; i + 1 < n; ++i) {
        if (std::holds_alternative<ReluSpec>(m.spec.layers[i])) picked.assign(1, i);
      }
      if (picked.empty()) {
        throw std::invalid_argument("layer selection: model has no hidden activation layers");
      }
      break;
    }
    case SelectionKind::Custom: {
      if (sel.layers.empty()) throw std::invalid_argument("layer selection: empty custom list");
      for (std::size_t i = 0; i < sel.layers.size(); ++i) {
        if (sel.layers[i] >= n) {
          throw std::invalid_argument("layer selection: index " + std::to_string(sel.layers[i]) +
                                      " out of range for " + std::to_string(n) + " layers");
        }
        if (i > 0 && sel.layers[i] <= sel.layers[i - 1]) {
          throw std::invalid_argument("layer selection: indices must be strictly increasing");
        }
      }
      picked = sel.layers;
      break;
    }
  }
  return picked;
}

std::string describe_selection(const LayerSelection& sel) {
  switch (sel.kind) {
    case SelectionKind::AllHidden:
      return "all-hidden";
    case SelectionKind::Penultimate:
      return "penultimate";
    case SelectionKind::Custom: {
      std::string out = "layers:";
      for (std::size_t i = 0; i < sel.layers.size(); ++i) {
        if (i) out += ',';
        out += std::to_string(sel.layers[i]);
      }
      return out;
    }
  }
  return "?";
}

void trace_values_ws(const Model& m, const Tensor& input, const std::vector<std::size_t>& layers,
                     Workspace& ws, std::vector<float>& values) {
  forward_ws(m, input, ws);
  values.clear();
  for (std::size_t li : layers) {
    const Tensor& out = ws.outputs[li];
    values.insert(values.end(), out.data.begin(), out.data.end());
  }
}

ActivationTrace trace_activations(const Model& m, const Tensor& input, const LayerSelection& sel) {
  const std::vector<std::size_t> layers = resolve_selection(m, sel);

  ActivationTrace trace;
  trace.selection = describe_selection(sel);
  Workspace ws;
  trace_values_ws(m, input, layers, ws, trace.values);

  trace.ids.reserve(trace.values.size());
  for (std::size_t li : layers) {
    const std::size_t width = ws.outputs[li].data.size();
    for (std::size_t j = 0; j < width; ++j) trace.ids.push_back({li, j});
  }
  return trace;
}

double neuron_coverage(const ActivationTrace& trace, float threshold) {
  if (trace.values.empty()) throw std::invalid_argument("neuron_coverage: empty trace");
  std::size_t active = 0;
  for (float v : trace.values) {
    if (v > threshold) ++active;
  }
  return static_cast<double>(active) / static_cast<double>(trace.values.size());
}

ActivationMatrix activation_matrix(const Model& m, const Dataset& data, const LayerSelection& sel,
                                   int threads) {
  data.validate();
  if (data.size() == 0) throw std::invalid_argument("activation_matrix: empty dataset");
  const std::vector<std::size_t> layers = resolve_selection(m, sel);

  std::vector<std::vector<float>> traces(data.size());
  parallel_for(
      data.size(),
      [&](std::size_t i) {
        Workspace ws;
        trace_values_ws(m, data.inputs[i], layers, ws, traces[i]);
      },
      threads);

  // stable sort keeps dataset order within a class
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return data.labels[a] < data.labels[b]; });

  ActivationMatrix mat;
  mat.selection = describe_selection(sel);
  mat.rows.reserve(data.size());
  for (std::size_t idx : order) {
    mat.rows.push_back(std::move(traces[idx]));
    mat.labels.push_back(data.labels[idx]);
  }
  mat.source = std::move(order);

  Workspace ws;
  forward_ws(m, data.inputs[0], ws);
  for (std::size_t li : layers) {
    const std::size_t width = ws.outputs[li].data.size();
    for (std::size_t j = 0; j < width; ++j) mat.columns.push_back({li, j});
  }
  return mat;
}

std::string activation_matrix_csv(const ActivationMatrix& mat) {
  std::ostringstream out;
  out << "label";
  for (const NeuronId& id : mat.columns) out << ",l" << id.layer << 'n' << id.offset;
  out << '\n';
  for (std::size_t r = 0; r < mat.rows.size(); ++r) {
    out << mat.labels[r];
    for (float v : mat.rows[r]) out << ',' << v;
    out << '\n';
  }
  return out.str();
}

StratificationStats stratification_stats(const ActivationMatrix& mat) {
  const std::size_t n = mat.rows.size();
  double within_sum = 0.0, between_sum = 0.0;
  std::size_t within_count = 0, between_count = 0;

  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      double sq = 0.0;
      const std::vector<float>& a = mat.rows[i];
      const std::vector<float>& b = mat.rows[j];
      for (std::size_t k = 0; k < a.size(); ++k) {
        const double d = static_cast<double>(a[k]) - static_cast<double>(b[k]);
        sq += d * d;
      }
      const double dist = std::sqrt(sq);
      if (mat.labels[i] == mat.labels[j]) {
        within_sum += dist;
        ++within_count;
      } else {
        between_sum += dist;
        ++between_count;
      }
    }
  }
  if (within_count == 0 || between_count == 0) {
    throw std::invalid_argument("stratification_stats: need same-class and cross-class pairs");
  }

  StratificationStats stats;
  stats.within_class = within_sum / static_cast<double>(within_count);
  stats.between_class = between_sum / static_cast<double>(between_count);
  stats.ratio = stats.within_class / stats.between_class;
  return stats;
}

}  // namespace nccr
