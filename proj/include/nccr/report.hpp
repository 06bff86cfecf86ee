#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "nccr/attacks.hpp"
#include "nccr/backdoor.hpp"
#include "nccr/dataset.hpp"
#include "nccr/nccr.hpp"
#include "nccr/train.hpp"

namespace nccr {

inline constexpr const char* kToolVersion = "0.1.0";

// Where a pipeline's items come from: an IDX pair on disk when both paths
// are set, otherwise a seeded synthetic set ("digits28", "mini-digits",
// "blobs" or "separable2d").
struct DataSource {
  std::string images;
  std::string labels;
  std::string synthetic = "digits28";
  int size = 600;
};

// How a pipeline obtains a model: loaded from `path` when set, otherwise the
// zoo spec trained in-run (adversarially when `adversarial` is on, with
// `attack` as the augmentation source).
struct ModelSource {
  std::string name = "model";  // label used in reports and artifact names
  std::string path;
  std::string zoo = "lenet5";
  TrainConfig train;
  bool adversarial = false;
  AttackSpec attack;
};

// One self-contained run. Every random decision in a pipeline derives from
// `seed` by component label and index, so a saved config reproduces its run
// bit for bit. Seed fields inside the nested specs are overwritten by that
// derivation; set the master seed, not the nested ones.
struct RunConfig {
  uint64_t seed = 0;
  std::string out_dir = "out";
  int threads = 0;  // 0 = hardware concurrency

  DataSource train_data;
  DataSource test_data = {"", "", "digits28", 300};

  // robustness compares every entry; the other kinds use the first
  std::vector<ModelSource> models;

  NoiseSpec noise;  // scoring noise, epsilon on the input scale
  std::string selection = "all-hidden";
  std::string norm = "l2";
  bool normalize = false;

  std::vector<AttackSpec> attacks;  // adv-detect: one detector per entry
  bool combine = true;   // add a detector trained on all attacks pooled
  int per_side = 0;      // cap adversarial items per attack (0 = no cap)
  std::vector<int> detector_hidden = {16, 24};
  TrainConfig detector_train;

  // Backdoor runs. A blended trigger with an empty blend image gets a seeded
  // uniform random one in the input shape.
  TriggerSpec trigger;
  PoisonConfig poison;
  double scan_epsilon = 256.0;  // 0-255 noise scale for the backdoor scan
  double gate = kSilhouetteGate;
};

// JSON round trips for the config and its nested specs. Missing keys take
// the field defaults, so hand-written configs can stay short; to_json always
// emits every field.
nlohmann::json noise_to_json(const NoiseSpec& noise);
NoiseSpec noise_from_json(const nlohmann::json& j);
nlohmann::json attack_to_json(const AttackSpec& spec);
AttackSpec attack_from_json(const nlohmann::json& j);
nlohmann::json train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);
nlohmann::json trigger_to_json(const TriggerSpec& trigger);
TriggerSpec trigger_from_json(const nlohmann::json& j);
nlohmann::json poison_config_to_json(const PoisonConfig& config);
PoisonConfig poison_config_from_json(const nlohmann::json& j);
nlohmann::json run_config_to_json(const RunConfig& config);
RunConfig run_config_from_json(const nlohmann::json& j);

enum class PipelineKind { Robustness, AdvDetect, Backdoor };

std::string pipeline_kind_name(PipelineKind kind);
PipelineKind pipeline_kind_from_name(const std::string& name);

// Canonical result container: the kind-specific payload (including per-item
// score tables, so CSV projections derive from the document alone), the
// exact config that produced it, and the tool version. No timestamps, no
// machine state: payloads are byte-reproducible from (config, input files).
struct ReportDocument {
  std::string kind;
  nlohmann::json payload;
  nlohmann::json config;
  std::string tool_version = kToolVersion;
};

nlohmann::json report_to_json(const ReportDocument& report);
ReportDocument report_from_json(const nlohmann::json& j);

// Runs the pipeline for `kind` and writes everything under config.out_dir:
// report.json, the CSV projections, trained models, datasets and adversarial
// sets as IDX pairs with JSON sidecars, and the poison mask as a bitmap.
// Stage failures are rethrown with the stage name prefixed; validation
// problems keep their std::invalid_argument type.
ReportDocument run_pipeline(const RunConfig& config, PipelineKind kind);

enum class ReportFormat { Json, Csv };

// Writes the canonical JSON (report.json) or the plot-ready CSV projections
// into `dir` and returns the paths written. CSV files depend on the kind:
// per-model box stats, score curves and rank-test p-values for robustness;
// the AUROC grid for adv-detect; the per-item scan table for backdoor.
std::vector<std::string> emit_report(const ReportDocument& report, ReportFormat format,
                                     const std::string& dir);

// Shared with the CLI.
Dataset load_data_source(const DataSource& src, uint64_t seed);
LayerSelection selection_from_string(const std::string& text);

}  // namespace nccr
