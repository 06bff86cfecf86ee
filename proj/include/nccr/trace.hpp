#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "nccr/dataset.hpp"
#include "nccr/model.hpp"

namespace nccr {

// Identifies one post-activation output: `layer` indexes the model's layer
// list, `offset` the flat position within that layer's output.
struct NeuronId {
  std::size_t layer = 0;
  std::size_t offset = 0;

  friend bool operator==(const NeuronId& a, const NeuronId& b) {
    return a.layer == b.layer && a.offset == b.offset;
  }
};

enum class SelectionKind {
  AllHidden,    // every relu layer's output
  Penultimate,  // the last relu before the output layer (fixed-width features)
  Custom,       // explicit layer indices
};

struct LayerSelection {
  SelectionKind kind = SelectionKind::AllHidden;
  std::vector<std::size_t> layers;  // Custom only; strictly increasing

  static LayerSelection all_hidden() { return {SelectionKind::AllHidden, {}}; }
  static LayerSelection penultimate() { return {SelectionKind::Penultimate, {}}; }
  static LayerSelection custom(std::vector<std::size_t> layers) {
    return {SelectionKind::Custom, std::move(layers)};
  }
};

// Concrete layer indices the selection picks for this model. Throws
// std::invalid_argument on out-of-range indices, unsorted custom lists, or
// selections that resolve to nothing (e.g. AllHidden on a relu-free net).
std::vector<std::size_t> resolve_selection(const Model& m, const LayerSelection& sel);

// Stable human-readable descriptor ("all-hidden", "penultimate",
// "layers:2,5"); recorded in provenance so results are always qualified.
std::string describe_selection(const LayerSelection& sel);

struct ActivationTrace {
  std::vector<NeuronId> ids;  // layer-major order
  std::vector<float> values;  // aligned with ids
  std::string selection;
};

ActivationTrace trace_activations(const Model& m, const Tensor& input, const LayerSelection& sel);

// Hot-loop variant: `layers` must come from resolve_selection, `ws` is reused.
// Fills only `values` (ids/selection are the caller's business).
void trace_values_ws(const Model& m, const Tensor& input, const std::vector<std::size_t>& layers,
                     Workspace& ws, std::vector<float>& values);

// count(values > threshold) / count(values). Throws on an empty trace.
double neuron_coverage(const ActivationTrace& trace, float threshold = 0.0f);

struct ActivationMatrix {
  std::vector<std::vector<float>> rows;  // one trace per input, sorted by class
  std::vector<int> labels;               // aligned with rows, nondecreasing
  std::vector<std::size_t> source;       // original dataset index per row
  std::vector<NeuronId> columns;
  std::string selection;
};

// Traces every item and sorts rows by class label (ties keep dataset order).
ActivationMatrix activation_matrix(const Model& m, const Dataset& data, const LayerSelection& sel,
                                   int threads = 0);

// Header "label,l<layer>n<offset>,..." then one row per input.
std::string activation_matrix_csv(const ActivationMatrix& mat);

struct StratificationStats {
  double within_class = 0.0;   // mean pairwise euclidean distance, same label
  double between_class = 0.0;  // mean pairwise euclidean distance, different labels
  double ratio = 0.0;          // within / between
};

// Needs at least one same-label pair and one cross-label pair.
StratificationStats stratification_stats(const ActivationMatrix& mat);

}  // namespace nccr
