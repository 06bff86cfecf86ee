#include "nccr/report.hpp"

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "nccr/detect.hpp"
#include "nccr/rng.hpp"
#include "nccr/serialize.hpp"
#include "nccr/stats.hpp"
#include "nccr/trace.hpp"
#include "nccr/zoo.hpp"

namespace nccr {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// Rethrows with the stage name prefixed, keeping the error family (and with
// it the CLI exit code) intact.
template <class F>
auto stage(const std::string& name, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const IdxError& e) {
    throw IdxError(e.kind(), name + ": " + e.what());
  } catch (const ModelIoError& e) {
    throw ModelIoError(e.kind(), name + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(name + ": " + e.what());
  } catch (const std::exception& e) {
    throw std::runtime_error(name + ": " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

std::string sanitize(const std::string& name) {
  std::string out;
  for (char c : name) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                    c == '.' || c == '_' || c == '-';
    out.push_back(ok ? c : '-');
  }
  return out.empty() ? std::string("unnamed") : out;
}

json tensor_to_json(const Tensor& t) {
  json values = json::array();
  for (float v : t.data) values.push_back(v);
  return {{"shape", t.shape}, {"values", std::move(values)}};
}

Tensor tensor_from_json(const json& j) {
  Tensor t;
  t.shape = j.at("shape").get<std::vector<int>>();
  for (const auto& v : j.at("values")) t.data.push_back(v.get<float>());
  return t;
}

json box_to_json(const BoxStats& b) {
  return {{"median", b.median},         {"mean", b.mean},
          {"q1", b.q1},                 {"q3", b.q3},
          {"whisker_lo", b.whisker_lo}, {"whisker_hi", b.whisker_hi},
          {"outliers", b.outliers}};
}

BoxStats box_from_json(const json& j) {
  BoxStats b;
  b.median = j.at("median").get<double>();
  b.mean = j.at("mean").get<double>();
  b.q1 = j.at("q1").get<double>();
  b.q3 = j.at("q3").get<double>();
  b.whisker_lo = j.at("whisker_lo").get<double>();
  b.whisker_hi = j.at("whisker_hi").get<double>();
  b.outliers = j.at("outliers").get<std::vector<double>>();
  return b;
}

json data_source_to_json(const DataSource& d) {
  return {{"images", d.images}, {"labels", d.labels}, {"synthetic", d.synthetic},
          {"size", d.size}};
}

DataSource data_source_from_json(const json& j) {
  DataSource d;
  d.images = j.value("images", d.images);
  d.labels = j.value("labels", d.labels);
  d.synthetic = j.value("synthetic", d.synthetic);
  d.size = j.value("size", d.size);
  return d;
}

json model_source_to_json(const ModelSource& m) {
  return {{"name", m.name},
          {"path", m.path},
          {"zoo", m.zoo},
          {"train", train_config_to_json(m.train)},
          {"adversarial", m.adversarial},
          {"attack", attack_to_json(m.attack)}};
}

ModelSource model_source_from_json(const json& j) {
  ModelSource m;
  m.name = j.value("name", m.name);
  m.path = j.value("path", m.path);
  m.zoo = j.value("zoo", m.zoo);
  if (j.contains("train")) m.train = train_config_from_json(j.at("train"));
  m.adversarial = j.value("adversarial", m.adversarial);
  if (j.contains("attack")) m.attack = attack_from_json(j.at("attack"));
  return m;
}

SyntheticKind synthetic_kind_from_name(const std::string& name) {
  if (name == "blobs") return SyntheticKind::Blobs;
  if (name == "separable2d") return SyntheticKind::Separable2D;
  if (name == "mini-digits") return SyntheticKind::MiniDigits;
  throw std::invalid_argument("unknown synthetic kind: " + name);
}

// Every sub-seed a pipeline uses, derived from the master seed by component
// label and index. The nested seed fields in RunConfig are never read.
struct SeedPlan {
  uint64_t train_data = 0;
  uint64_t test_data = 0;
  uint64_t noise = 0;
  uint64_t poison = 0;
  uint64_t scan = 0;
  uint64_t blend = 0;
  std::vector<uint64_t> model_train;   // per models[i]
  std::vector<uint64_t> adv_train;     // per models[i], adversarial augmentation
  std::vector<uint64_t> attack;        // per attack run, row-major model x attack
  std::vector<uint64_t> detector;      // per attacks[j], then the pooled detector
};

SeedPlan plan_seeds(const RunConfig& c, std::size_t attack_runs) {
  SeedPlan s;
  s.train_data = derive_seed(c.seed, "data", 0);
  s.test_data = derive_seed(c.seed, "data", 1);
  s.noise = derive_seed(c.seed, "noise");
  s.poison = derive_seed(c.seed, "poison");
  s.scan = derive_seed(c.seed, "scan");
  s.blend = derive_seed(c.seed, "blend");
  for (std::size_t i = 0; i < c.models.size(); ++i) {
    s.model_train.push_back(derive_seed(c.seed, "train", i));
    s.adv_train.push_back(derive_seed(c.seed, "advtrain", i));
  }
  for (std::size_t j = 0; j < attack_runs; ++j) s.attack.push_back(derive_seed(c.seed, "attack", j));
  for (std::size_t j = 0; j <= c.attacks.size(); ++j) {
    s.detector.push_back(derive_seed(c.seed, "detector", j));
  }
  return s;
}

// Attack display names: the kind name, disambiguated by position when a kind
// appears more than once.
std::vector<std::string> attack_names(const std::vector<AttackSpec>& attacks) {
  std::map<std::string, int> total;
  for (const AttackSpec& a : attacks) ++total[attack_kind_name(a.kind)];
  std::map<std::string, int> seen;
  std::vector<std::string> names;
  for (const AttackSpec& a : attacks) {
    const std::string base = attack_kind_name(a.kind);
    const int ordinal = ++seen[base];
    names.push_back(total[base] > 1 ? base + "-" + std::to_string(ordinal) : base);
  }
  return names;
}

bool image_shaped(const Dataset& ds) {
  return !ds.inputs.empty() && ds.inputs[0].shape.size() == 3 && ds.inputs[0].shape[0] == 1;
}

// IDX pair + provenance sidecar under dir; returns the sidecar json with
// repo-relative paths, or null for non-image data that IDX cannot hold.
json save_dataset_artifact(const Dataset& ds, const fs::path& out_dir, const std::string& sub,
                           const std::string& base, json provenance) {
  if (!image_shaped(ds)) return json();
  fs::create_directories(out_dir / sub);
  const std::string images = sub + "/" + base + "-images.idx";
  const std::string labels = sub + "/" + base + "-labels.idx";
  save_idx(ds, (out_dir / images).string(), (out_dir / labels).string(), IdxPixelFormat::Float32);
  provenance["images"] = images;
  provenance["labels"] = labels;
  provenance["pixel_format"] = "float32";
  write_text(out_dir / sub / (base + ".json"), provenance.dump(2) + "\n");
  return provenance;
}

json dataset_meta(const Dataset& ds, const DataSource& src, uint64_t seed) {
  json meta = {{"name", ds.name},
               {"size", ds.size()},
               {"class_count", ds.class_count},
               {"range", {ds.range_lo, ds.range_hi}},
               {"source", data_source_to_json(src)}};
  if (src.images.empty()) meta["seed"] = seed;
  return meta;
}

struct BuiltModel {
  Model model;
  json meta;  // name, id, parameter_count, source, training metrics
};

BuiltModel obtain_model(const ModelSource& src, const Dataset* train_data, uint64_t train_seed,
                        uint64_t adv_seed) {
  BuiltModel out;
  json source;
  if (!src.path.empty()) {
    out.model = load_model(src.path);
    source = {{"path", src.path}};
  } else {
    if (train_data == nullptr) {
      throw std::invalid_argument("model '" + src.name + "' needs training data");
    }
    TrainConfig cfg = src.train;
    cfg.seed = train_seed;
    TrainResult result;
    if (src.adversarial) {
      AttackSpec attack = src.attack;
      attack.seed = adv_seed;
      result = adversarial_train(zoo_spec(src.zoo), *train_data, attack, cfg);
      source = {{"zoo", src.zoo},
                {"adversarial", true},
                {"attack", attack_to_json(attack)},
                {"train", train_config_to_json(cfg)}};
    } else {
      result = train(zoo_spec(src.zoo), *train_data, cfg);
      source = {{"zoo", src.zoo}, {"adversarial", false}, {"train", train_config_to_json(cfg)}};
    }
    out.model = std::move(result.model);
    if (!result.epochs.empty()) {
      out.meta["final_epoch"] = {{"mean_loss", result.epochs.back().mean_loss},
                                 {"accuracy", result.epochs.back().accuracy}};
    }
  }
  out.meta["name"] = src.name;
  out.meta["id"] = out.model.id();
  out.meta["parameter_count"] = out.model.parameter_count();
  out.meta["source"] = std::move(source);
  return out;
}

std::string save_model_artifact(const Model& m, const fs::path& out_dir, const std::string& sub,
                                const std::string& name) {
  fs::create_directories(out_dir / sub);
  const std::string rel = sub + "/" + sanitize(name) + ".nccrmdl";
  save_model(m, (out_dir / rel).string());
  return rel;
}

void check_unique_model_names(const std::vector<ModelSource>& models) {
  std::map<std::string, int> counts;
  for (const ModelSource& m : models) {
    if (++counts[sanitize(m.name)] > 1) {
      throw std::invalid_argument("duplicate model name: " + m.name);
    }
  }
}

json grid_to_json(const CrossEvalGrid& grid) {
  json cells = json::array();
  for (const auto& row : grid.cells) {
    json r = json::array();
    for (const auto& cell : row) {
      if (cell.has_value()) r.push_back(*cell);
      else r.push_back(nullptr);
    }
    cells.push_back(std::move(r));
  }
  return {{"trainers", grid.trainers}, {"evals", grid.evals}, {"cells", std::move(cells)}};
}

CrossEvalGrid grid_from_json(const json& j) {
  CrossEvalGrid grid;
  grid.trainers = j.at("trainers").get<std::vector<std::string>>();
  grid.evals = j.at("evals").get<std::vector<std::string>>();
  for (const auto& row : j.at("cells")) {
    std::vector<std::optional<double>> r;
    for (const auto& cell : row) {
      if (cell.is_null()) r.push_back(std::nullopt);
      else r.push_back(cell.get<double>());
    }
    grid.cells.push_back(std::move(r));
  }
  return grid;
}

// Accuracy on the attacked test set: items the attack flipped or the model
// already got wrong both count against it.
json attack_run_json(const std::string& name, const AttackSpec& spec,
                     const AttackBatchResult& res, std::size_t total) {
  const double accuracy =
      static_cast<double>(res.eligible - res.succeeded) / static_cast<double>(total);
  return {{"name", name},
          {"spec", attack_to_json(spec)},
          {"eligible", res.eligible},
          {"succeeded", res.succeeded},
          {"success_rate", res.success_rate},
          {"accuracy", accuracy}};
}

json run_robustness(const RunConfig& c, const fs::path& out_dir) {
  if (c.models.empty()) throw std::invalid_argument("robustness: no models configured");
  check_unique_model_names(c.models);
  const SeedPlan seeds = plan_seeds(c, c.models.size() * c.attacks.size());
  const LayerSelection sel = selection_from_string(c.selection);
  const NormKind norm = norm_kind_from_name(c.norm);
  NoiseSpec noise = c.noise;
  noise.seed = seeds.noise;
  validate_noise_spec(noise);

  const bool trains = [&] {
    for (const ModelSource& m : c.models) {
      if (m.path.empty()) return true;
    }
    return false;
  }();
  Dataset train_data;
  if (trains) {
    train_data = stage("robustness/load-train-data",
                       [&] { return load_data_source(c.train_data, seeds.train_data); });
  }
  const Dataset test_data = stage("robustness/load-test-data",
                                  [&] { return load_data_source(c.test_data, seeds.test_data); });

  json payload;
  payload["dataset"] = dataset_meta(test_data, c.test_data, seeds.test_data);
  payload["train_dataset"] =
      trains ? dataset_meta(train_data, c.train_data, seeds.train_data) : json();
  payload["noise"] = noise_to_json(noise);
  payload["selection"] = c.selection;
  payload["norm"] = c.norm;
  payload["normalize"] = c.normalize;

  save_dataset_artifact(test_data, out_dir, "data", "test",
                        dataset_meta(test_data, c.test_data, seeds.test_data));
  if (trains) {
    save_dataset_artifact(train_data, out_dir, "data", "train",
                          dataset_meta(train_data, c.train_data, seeds.train_data));
  }

  const std::vector<std::string> names = attack_names(c.attacks);
  json models = json::array();
  std::vector<std::vector<double>> all_scores;
  for (std::size_t i = 0; i < c.models.size(); ++i) {
    const ModelSource& src = c.models[i];
    BuiltModel built = stage("robustness/model-" + src.name, [&] {
      return obtain_model(src, trains ? &train_data : nullptr, seeds.model_train[i],
                          seeds.adv_train[i]);
    });
    built.meta["artifact"] = save_model_artifact(built.model, out_dir, "models", src.name);
    built.meta["clean_accuracy"] = stage("robustness/evaluate-" + src.name, [&] {
      return evaluate_accuracy(built.model, test_data, c.threads);
    });

    json under_attack = json::array();
    for (std::size_t j = 0; j < c.attacks.size(); ++j) {
      AttackSpec spec = c.attacks[j];
      spec.seed = seeds.attack[i * c.attacks.size() + j];
      const AttackBatchResult res = stage("robustness/attack-" + src.name + "-" + names[j], [&] {
        AttackBatchOptions opts;
        opts.threads = c.threads;
        return attack_batch(built.model, test_data, spec, opts);
      });
      under_attack.push_back(attack_run_json(names[j], spec, res, test_data.size()));
    }
    built.meta["under_attack"] = std::move(under_attack);

    const std::vector<NccrItem> batch = stage("robustness/nccr-" + src.name, [&] {
      return nccr_batch(built.model, test_data, noise, sel, norm, c.normalize, c.threads);
    });
    std::vector<double> scores(batch.size());
    for (std::size_t k = 0; k < batch.size(); ++k) scores[k] = batch[k].score;
    built.meta["box"] = box_to_json(nccr_summary(scores));
    built.meta["scores"] = scores;
    all_scores.push_back(std::move(scores));
    models.push_back(std::move(built.meta));
  }
  payload["models"] = std::move(models);

  json pairs = json::array();
  for (std::size_t i = 0; i < c.models.size(); ++i) {
    for (std::size_t j = 0; j < c.models.size(); ++j) {
      if (i == j) continue;
      pairs.push_back({{"a", c.models[i].name},
                       {"b", c.models[j].name},
                       {"p_a_greater_b", mann_whitney_greater(all_scores[i], all_scores[j])}});
    }
  }
  payload["pairs"] = std::move(pairs);

  json train_seeds = json::array();
  for (uint64_t s : seeds.model_train) train_seeds.push_back(s);
  payload["seeds"] = {{"master", c.seed},
                      {"train_data", seeds.train_data},
                      {"test_data", seeds.test_data},
                      {"noise", seeds.noise},
                      {"train", std::move(train_seeds)}};
  return payload;
}

json run_adv_detect(const RunConfig& c, const fs::path& out_dir) {
  if (c.models.empty()) throw std::invalid_argument("adv-detect: no model configured");
  if (c.attacks.empty()) throw std::invalid_argument("adv-detect: no attacks configured");
  const SeedPlan seeds = plan_seeds(c, c.attacks.size());
  const LayerSelection sel = selection_from_string(c.selection);
  NoiseSpec noise = c.noise;
  noise.seed = seeds.noise;
  validate_noise_spec(noise);

  const ModelSource& src = c.models.front();
  Dataset train_data;
  if (src.path.empty()) {
    train_data = stage("adv-detect/load-train-data",
                       [&] { return load_data_source(c.train_data, seeds.train_data); });
  }
  const Dataset test_data = stage("adv-detect/load-test-data",
                                  [&] { return load_data_source(c.test_data, seeds.test_data); });

  BuiltModel built = stage("adv-detect/model", [&] {
    return obtain_model(src, src.path.empty() ? &train_data : nullptr, seeds.model_train[0],
                        seeds.adv_train[0]);
  });
  built.meta["artifact"] = save_model_artifact(built.model, out_dir, "models", src.name);
  built.meta["clean_accuracy"] = stage("adv-detect/evaluate", [&] {
    return evaluate_accuracy(built.model, test_data, c.threads);
  });

  json payload;
  payload["model"] = std::move(built.meta);
  payload["dataset"] = dataset_meta(test_data, c.test_data, seeds.test_data);
  payload["noise"] = noise_to_json(noise);
  payload["selection"] = c.selection;

  save_dataset_artifact(test_data, out_dir, "data", "test",
                        dataset_meta(test_data, c.test_data, seeds.test_data));

  const std::vector<std::string> names = attack_names(c.attacks);
  json attacks = json::array();
  std::vector<NamedDetector> detectors;
  std::vector<NamedEvalSet> eval_sets;
  DetectionDataset pooled;
  for (std::size_t j = 0; j < c.attacks.size(); ++j) {
    AttackSpec spec = c.attacks[j];
    spec.seed = seeds.attack[j];
    const AttackBatchResult res = stage("adv-detect/attack-" + names[j], [&] {
      AttackBatchOptions opts;
      opts.stop_after = c.per_side;
      opts.threads = c.threads;
      return attack_batch(built.model, test_data, spec, opts);
    });

    json meta = attack_run_json(names[j], spec, res, test_data.size());
    json sidecar = {{"attack", attack_to_json(spec)},
                    {"source", dataset_meta(test_data, c.test_data, seeds.test_data)},
                    {"source_indices", res.source_indices},
                    {"eligible", res.eligible},
                    {"succeeded", res.succeeded},
                    {"success_rate", res.success_rate}};
    const json artifact =
        save_dataset_artifact(res.adversarial, out_dir, "adv", names[j], std::move(sidecar));
    if (!artifact.is_null()) {
      meta["artifacts"] = {{"images", artifact["images"]}, {"labels", artifact["labels"]}};
    }

    const DetectionDataset set = stage("adv-detect/features-" + names[j], [&] {
      return build_detection_set(built.model, test_data, res.adversarial, noise, sel, c.threads);
    });
    meta["set_size"] = set.size();
    attacks.push_back(std::move(meta));

    pooled.features.insert(pooled.features.end(), set.features.begin(), set.features.end());
    pooled.labels.insert(pooled.labels.end(), set.labels.begin(), set.labels.end());

    TrainConfig det_cfg = c.detector_train;
    det_cfg.seed = seeds.detector[j];
    const DetectorModel det = stage("adv-detect/detector-" + names[j], [&] {
      return train_detector(set, c.detector_hidden, det_cfg);
    });
    detectors.push_back({names[j], det});
    eval_sets.push_back({names[j], set});
  }
  payload["attacks"] = std::move(attacks);

  if (c.combine) {
    pooled.model_id = built.model.id();
    pooled.noise = noise;
    pooled.attack_provenance = "combine";
    TrainConfig det_cfg = c.detector_train;
    det_cfg.seed = seeds.detector[c.attacks.size()];
    const DetectorModel det = stage("adv-detect/detector-combine", [&] {
      return train_detector(pooled, c.detector_hidden, det_cfg);
    });
    detectors.push_back({"combine", det});
  }

  json detector_meta = json::array();
  for (const NamedDetector& d : detectors) {
    json meta = {{"name", d.name},
                 {"parameter_count", d.detector->parameter_count()},
                 {"hidden", d.detector->hidden},
                 {"train_accuracy", d.detector->train_accuracy},
                 {"val_accuracy", d.detector->val_accuracy}};
    meta["artifact"] = save_model_artifact(d.detector->net, out_dir, "detectors", d.name);
    detector_meta.push_back(std::move(meta));
  }
  payload["detectors"] = std::move(detector_meta);

  const CrossEvalGrid grid =
      stage("adv-detect/cross-eval", [&] { return cross_eval(detectors, eval_sets, c.threads); });
  payload["grid"] = grid_to_json(grid);

  json attack_seeds = json::array();
  for (uint64_t s : seeds.attack) attack_seeds.push_back(s);
  json detector_seeds = json::array();
  for (uint64_t s : seeds.detector) detector_seeds.push_back(s);
  payload["seeds"] = {{"master", c.seed},
                      {"train_data", seeds.train_data},
                      {"test_data", seeds.test_data},
                      {"noise", seeds.noise},
                      {"model_train", seeds.model_train[0]},
                      {"attacks", std::move(attack_seeds)},
                      {"detectors", std::move(detector_seeds)}};
  return payload;
}

json run_backdoor(const RunConfig& c, const fs::path& out_dir) {
  if (c.models.empty()) throw std::invalid_argument("backdoor: no model configured");
  const ModelSource& src = c.models.front();
  if (!src.path.empty()) {
    throw std::invalid_argument("backdoor: the pipeline trains its own model; zoo specs only");
  }
  const SeedPlan seeds = plan_seeds(c, 0);
  const LayerSelection sel = selection_from_string(c.selection);

  const Dataset train_data = stage("backdoor/load-train-data",
                                   [&] { return load_data_source(c.train_data, seeds.train_data); });
  const Dataset test_data = stage("backdoor/load-test-data",
                                  [&] { return load_data_source(c.test_data, seeds.test_data); });

  // A blended trigger with no blend image gets a seeded uniform random one in
  // the input shape, so configs and CLI flags never have to carry the tensor.
  TriggerSpec trigger = c.trigger;
  const bool generated_blend =
      trigger.kind == TriggerKind::Blended && trigger.blend.data.empty();
  if (generated_blend) {
    if (train_data.inputs.empty()) throw std::invalid_argument("backdoor: empty training data");
    trigger.blend = Tensor(train_data.inputs[0].shape);
    Rng rng(seeds.blend);
    for (float& v : trigger.blend.data) {
      v = static_cast<float>(rng.uniform(train_data.range_lo, train_data.range_hi));
    }
  }

  PoisonConfig poison = c.poison;
  poison.seed = seeds.poison;
  const PoisonResult poisoned = stage("backdoor/poison", [&] {
    return poison_dataset(train_data, trigger, poison);
  });

  TrainConfig cfg = src.train;
  cfg.seed = seeds.model_train[0];
  const BackdoorTrainResult trained = stage("backdoor/train", [&] {
    return train_backdoored(zoo_spec(src.zoo), poisoned.data, test_data, trigger,
                            poison.target_label, cfg);
  });

  const BackdoorScan scan = stage("backdoor/scan", [&] {
    return scan_backdoor(trained.model, poisoned.data, c.scan_epsilon, seeds.scan, sel,
                         c.noise.draws, c.gate, c.threads);
  });

  json payload;
  payload["model"] = {{"name", src.name},
                      {"id", trained.model.id()},
                      {"parameter_count", trained.model.parameter_count()},
                      {"source",
                       {{"zoo", src.zoo},
                        {"adversarial", false},
                        {"train", train_config_to_json(cfg)}}},
                      {"artifact", save_model_artifact(trained.model, out_dir, "models", src.name)}};
  payload["dataset"] = dataset_meta(train_data, c.train_data, seeds.train_data);
  payload["test_dataset"] = dataset_meta(test_data, c.test_data, seeds.test_data);
  payload["trigger"] = trigger_to_json(trigger);
  payload["poison"] = poison_config_to_json(poison);
  payload["poison"]["poisoned_count"] = poisoned.poisoned_count;
  payload["training"] = {{"clean_accuracy", trained.clean_accuracy},
                         {"attack_success_rate", trained.attack_success_rate},
                         {"epochs", trained.epochs.size()}};
  if (!trained.epochs.empty()) {
    payload["training"]["final_epoch"] = {{"mean_loss", trained.epochs.back().mean_loss},
                                          {"accuracy", trained.epochs.back().accuracy}};
  }
  payload["scan"] = {{"epsilon_255", c.scan_epsilon},
                     {"draws", c.noise.draws},
                     {"selection", c.selection},
                     {"seed", seeds.scan},
                     {"gate", c.gate}};

  const BackdoorVerdict& v = scan.verdict;
  payload["verdict"] = {{"present", v.present},
                        {"silhouette", v.silhouette},
                        {"gate", v.gate},
                        {"suspected_cluster", v.suspected_cluster},
                        {"diagnostic", v.diagnostic}};
  json log_means = json::array(), means = json::array();
  for (const auto& centroid : scan.clusters.centroids) {
    log_means.push_back(centroid[0]);
    means.push_back(std::exp(centroid[0]));
  }
  std::size_t in_one = 0;
  for (int a : scan.clusters.assignments) in_one += a == 1 ? 1 : 0;
  payload["clusters"] = {{"log_means", std::move(log_means)},
                         {"means", std::move(means)},
                         {"sizes", {scan.clusters.assignments.size() - in_one, in_one}},
                         {"inertia", scan.clusters.inertia},
                         {"degenerate", scan.clusters.degenerate}};

  json flagged = json::array();
  for (std::size_t i = 0; i < scan.scores.size(); ++i) {
    flagged.push_back(v.poison_labels.empty() ? 0 : static_cast<int>(v.poison_labels[i]));
  }
  json truth = json::array();
  for (char m : poisoned.mask) truth.push_back(static_cast<int>(m));
  payload["per_item"] = {{"score", scan.scores},
                         {"log_score", scan.log_scores},
                         {"cluster", scan.clusters.assignments},
                         {"flagged", std::move(flagged)},
                         {"poisoned", std::move(truth)}};
  payload["f1"] = v.present ? json(f1_score(v.poison_labels, poisoned.mask)) : json();

  // poisoned dataset + mask bitmap artifacts
  json sidecar = dataset_meta(poisoned.data, c.train_data, seeds.train_data);
  sidecar["trigger"] = trigger_to_json(trigger);
  sidecar["poison"] = poison_config_to_json(poison);
  sidecar["poisoned_count"] = poisoned.poisoned_count;
  sidecar["mask"] = "backdoor/poisoned.mask";
  const json artifact =
      save_dataset_artifact(poisoned.data, out_dir, "backdoor", "poisoned", std::move(sidecar));
  std::vector<unsigned char> bits((poisoned.mask.size() + 7) / 8, 0);
  for (std::size_t i = 0; i < poisoned.mask.size(); ++i) {
    if (poisoned.mask[i]) bits[i >> 3] |= static_cast<unsigned char>(1u << (i & 7));
  }
  fs::create_directories(out_dir / "backdoor");
  std::ofstream mask_out(out_dir / "backdoor" / "poisoned.mask", std::ios::binary);
  if (!mask_out) throw std::runtime_error("cannot open poisoned.mask");
  mask_out.write(reinterpret_cast<const char*>(bits.data()),
                 static_cast<std::streamsize>(bits.size()));
  if (!mask_out) throw std::runtime_error("write failed for poisoned.mask");
  write_text(out_dir / "backdoor" / "poisoned.mask.json",
             json({{"items", poisoned.mask.size()},
                   {"poisoned", poisoned.poisoned_count},
                   {"encoding", "bitmap-lsb-first"},
                   {"bytes", bits.size()}})
                     .dump(2) +
                 "\n");
  json artifacts = {{"model", payload["model"]["artifact"]},
                    {"mask", "backdoor/poisoned.mask"}};
  if (!artifact.is_null()) {
    artifacts["poisoned_images"] = artifact["images"];
    artifacts["poisoned_labels"] = artifact["labels"];
  }
  payload["artifacts"] = std::move(artifacts);

  payload["seeds"] = {{"master", c.seed},
                      {"train_data", seeds.train_data},
                      {"test_data", seeds.test_data},
                      {"train", seeds.model_train[0]},
                      {"poison", seeds.poison},
                      {"scan", seeds.scan}};
  if (generated_blend) payload["seeds"]["blend"] = seeds.blend;
  return payload;
}

std::string csv_escape(const std::string& field) {
  if (field.find_first_of(",\"\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char ch : field) {
    if (ch == '"') out += "\"\"";
    else out.push_back(ch);
  }
  out += "\"";
  return out;
}

std::vector<std::string> emit_csv(const ReportDocument& report, const fs::path& dir) {
  std::vector<std::string> written;
  const json& p = report.payload;
  const auto emit = [&](const std::string& name, const std::string& text) {
    write_text(dir / name, text);
    written.push_back((dir / name).string());
  };

  if (report.kind == "robustness") {
    for (const json& m : p.at("models")) {
      const std::string name = sanitize(m.at("name").get<std::string>());
      emit("box-" + name + ".csv", box_stats_csv(box_from_json(m.at("box"))));
      std::ostringstream scores;
      scores << "item,score\n";
      std::size_t i = 0;
      for (const auto& s : m.at("scores")) scores << i++ << ',' << s.get<double>() << '\n';
      emit("scores-" + name + ".csv", scores.str());
    }
    std::ostringstream pairs;
    pairs << "a,b,p_a_greater_b\n";
    for (const json& pair : p.at("pairs")) {
      pairs << csv_escape(pair.at("a").get<std::string>()) << ','
            << csv_escape(pair.at("b").get<std::string>()) << ','
            << pair.at("p_a_greater_b").get<double>() << '\n';
    }
    emit("pairs.csv", pairs.str());
  } else if (report.kind == "adv-detect") {
    emit("auroc-grid.csv", cross_eval_csv(grid_from_json(p.at("grid"))));
  } else if (report.kind == "backdoor") {
    const json& items = p.at("per_item");
    std::ostringstream scan;
    scan << "item,score,log_score,cluster,flagged,poisoned\n";
    const std::size_t n = items.at("score").size();
    for (std::size_t i = 0; i < n; ++i) {
      scan << i << ',' << items.at("score")[i].get<double>() << ','
           << items.at("log_score")[i].get<double>() << ',' << items.at("cluster")[i].get<int>()
           << ',' << items.at("flagged")[i].get<int>() << ',' << items.at("poisoned")[i].get<int>()
           << '\n';
    }
    emit("scan.csv", scan.str());
  } else {
    throw std::invalid_argument("emit_report: unknown kind " + report.kind);
  }
  return written;
}

}  // namespace

json noise_to_json(const NoiseSpec& noise) {
  return {{"epsilon", noise.epsilon}, {"kind", noise_kind_name(noise.kind)},
          {"draws", noise.draws},     {"seed", noise.seed},
          {"clip_lo", noise.clip_lo}, {"clip_hi", noise.clip_hi}};
}

NoiseSpec noise_from_json(const json& j) {
  NoiseSpec noise;
  noise.epsilon = j.value("epsilon", noise.epsilon);
  if (j.contains("kind")) noise.kind = noise_kind_from_name(j.at("kind").get<std::string>());
  noise.draws = j.value("draws", noise.draws);
  noise.seed = j.value("seed", noise.seed);
  noise.clip_lo = j.value("clip_lo", noise.clip_lo);
  noise.clip_hi = j.value("clip_hi", noise.clip_hi);
  return noise;
}

json attack_to_json(const AttackSpec& spec) {
  json j = {{"kind", attack_kind_name(spec.kind)},
            {"epsilon", spec.epsilon},
            {"alpha", spec.alpha},
            {"steps", spec.steps},
            {"random_start", spec.random_start},
            {"theta", spec.theta},
            {"gamma", spec.gamma},
            {"seed", spec.seed}};
  j["target"] = spec.target.has_value() ? json(*spec.target) : json();
  return j;
}

AttackSpec attack_from_json(const json& j) {
  AttackSpec spec;
  if (j.contains("kind")) spec.kind = attack_kind_from_name(j.at("kind").get<std::string>());
  spec.epsilon = j.value("epsilon", spec.epsilon);
  spec.alpha = j.value("alpha", spec.alpha);
  spec.steps = j.value("steps", spec.steps);
  spec.random_start = j.value("random_start", spec.random_start);
  spec.theta = j.value("theta", spec.theta);
  spec.gamma = j.value("gamma", spec.gamma);
  spec.seed = j.value("seed", spec.seed);
  if (j.contains("target") && !j.at("target").is_null()) spec.target = j.at("target").get<int>();
  return spec;
}

json train_config_to_json(const TrainConfig& cfg) {
  json j = {{"epochs", cfg.epochs},
            {"batch_size", cfg.batch_size},
            {"learning_rate", cfg.learning_rate},
            {"momentum", cfg.momentum},
            {"seed", cfg.seed},
            {"adversarial_ratio", cfg.adversarial_ratio}};
  j["adversarial"] = cfg.adversarial.has_value() ? attack_to_json(*cfg.adversarial) : json();
  return j;
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig cfg;
  cfg.epochs = j.value("epochs", cfg.epochs);
  cfg.batch_size = j.value("batch_size", cfg.batch_size);
  cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
  cfg.momentum = j.value("momentum", cfg.momentum);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.adversarial_ratio = j.value("adversarial_ratio", cfg.adversarial_ratio);
  if (j.contains("adversarial") && !j.at("adversarial").is_null()) {
    cfg.adversarial = attack_from_json(j.at("adversarial"));
  }
  return cfg;
}

json trigger_to_json(const TriggerSpec& trigger) {
  json j = {{"kind", trigger_kind_name(trigger.kind)},
            {"patch_h", trigger.patch_h},
            {"patch_w", trigger.patch_w},
            {"anchor", corner_name(trigger.anchor)},
            {"color", trigger.color},
            {"alpha", trigger.alpha}};
  j["blend"] = trigger.blend.data.empty() ? json() : tensor_to_json(trigger.blend);
  return j;
}

TriggerSpec trigger_from_json(const json& j) {
  TriggerSpec trigger;
  if (j.contains("kind")) trigger.kind = trigger_kind_from_name(j.at("kind").get<std::string>());
  trigger.patch_h = j.value("patch_h", trigger.patch_h);
  trigger.patch_w = j.value("patch_w", trigger.patch_w);
  if (j.contains("anchor")) trigger.anchor = corner_from_name(j.at("anchor").get<std::string>());
  trigger.color = j.value("color", trigger.color);
  trigger.alpha = j.value("alpha", trigger.alpha);
  if (j.contains("blend") && !j.at("blend").is_null()) {
    trigger.blend = tensor_from_json(j.at("blend"));
  }
  return trigger;
}

json poison_config_to_json(const PoisonConfig& config) {
  return {{"rate", config.rate}, {"target_label", config.target_label}, {"seed", config.seed}};
}

PoisonConfig poison_config_from_json(const json& j) {
  PoisonConfig config;
  config.rate = j.value("rate", config.rate);
  config.target_label = j.value("target_label", config.target_label);
  config.seed = j.value("seed", config.seed);
  return config;
}

json run_config_to_json(const RunConfig& config) {
  json models = json::array();
  for (const ModelSource& m : config.models) models.push_back(model_source_to_json(m));
  json attacks = json::array();
  for (const AttackSpec& a : config.attacks) attacks.push_back(attack_to_json(a));
  return {{"seed", config.seed},
          {"out_dir", config.out_dir},
          {"threads", config.threads},
          {"train_data", data_source_to_json(config.train_data)},
          {"test_data", data_source_to_json(config.test_data)},
          {"models", std::move(models)},
          {"noise", noise_to_json(config.noise)},
          {"selection", config.selection},
          {"norm", config.norm},
          {"normalize", config.normalize},
          {"attacks", std::move(attacks)},
          {"combine", config.combine},
          {"per_side", config.per_side},
          {"detector_hidden", config.detector_hidden},
          {"detector_train", train_config_to_json(config.detector_train)},
          {"trigger", trigger_to_json(config.trigger)},
          {"poison", poison_config_to_json(config.poison)},
          {"scan_epsilon", config.scan_epsilon},
          {"gate", config.gate}};
}

RunConfig run_config_from_json(const json& j) {
  RunConfig config;
  config.seed = j.value("seed", config.seed);
  config.out_dir = j.value("out_dir", config.out_dir);
  config.threads = j.value("threads", config.threads);
  if (j.contains("train_data")) config.train_data = data_source_from_json(j.at("train_data"));
  if (j.contains("test_data")) config.test_data = data_source_from_json(j.at("test_data"));
  if (j.contains("models")) {
    config.models.clear();
    for (const auto& m : j.at("models")) config.models.push_back(model_source_from_json(m));
  }
  if (j.contains("noise")) config.noise = noise_from_json(j.at("noise"));
  config.selection = j.value("selection", config.selection);
  config.norm = j.value("norm", config.norm);
  config.normalize = j.value("normalize", config.normalize);
  if (j.contains("attacks")) {
    config.attacks.clear();
    for (const auto& a : j.at("attacks")) config.attacks.push_back(attack_from_json(a));
  }
  config.combine = j.value("combine", config.combine);
  config.per_side = j.value("per_side", config.per_side);
  config.detector_hidden = j.value("detector_hidden", config.detector_hidden);
  if (j.contains("detector_train")) {
    config.detector_train = train_config_from_json(j.at("detector_train"));
  }
  if (j.contains("trigger")) config.trigger = trigger_from_json(j.at("trigger"));
  if (j.contains("poison")) config.poison = poison_config_from_json(j.at("poison"));
  config.scan_epsilon = j.value("scan_epsilon", config.scan_epsilon);
  config.gate = j.value("gate", config.gate);
  return config;
}

std::string pipeline_kind_name(PipelineKind kind) {
  switch (kind) {
    case PipelineKind::Robustness:
      return "robustness";
    case PipelineKind::AdvDetect:
      return "adv-detect";
    case PipelineKind::Backdoor:
      return "backdoor";
  }
  throw std::invalid_argument("unknown pipeline kind");
}

PipelineKind pipeline_kind_from_name(const std::string& name) {
  if (name == "robustness") return PipelineKind::Robustness;
  if (name == "adv-detect") return PipelineKind::AdvDetect;
  if (name == "backdoor") return PipelineKind::Backdoor;
  throw std::invalid_argument("unknown pipeline kind: " + name);
}

json report_to_json(const ReportDocument& report) {
  return {{"kind", report.kind},
          {"tool_version", report.tool_version},
          {"config", report.config},
          {"payload", report.payload}};
}

ReportDocument report_from_json(const json& j) {
  ReportDocument report;
  report.kind = j.at("kind").get<std::string>();
  report.tool_version = j.at("tool_version").get<std::string>();
  report.config = j.at("config");
  report.payload = j.at("payload");
  return report;
}

Dataset load_data_source(const DataSource& src, uint64_t seed) {
  if (src.images.empty() != src.labels.empty()) {
    throw std::invalid_argument("data source needs both image and label paths, or neither");
  }
  if (!src.images.empty()) return load_idx(src.images, src.labels);
  if (src.synthetic == "digits28") return digits28_dataset(src.size, seed);
  return synthetic_dataset(synthetic_kind_from_name(src.synthetic), src.size, seed);
}

LayerSelection selection_from_string(const std::string& text) {
  if (text == "all-hidden") return LayerSelection::all_hidden();
  if (text == "penultimate") return LayerSelection::penultimate();
  const std::string prefix = "layers:";
  if (text.rfind(prefix, 0) == 0) {
    std::vector<std::size_t> layers;
    std::istringstream in(text.substr(prefix.size()));
    std::string token;
    while (std::getline(in, token, ',')) {
      std::size_t pos = 0;
      const unsigned long value = std::stoul(token, &pos);
      if (pos != token.size()) throw std::invalid_argument("bad layer index: " + token);
      layers.push_back(value);
    }
    if (layers.empty()) throw std::invalid_argument("empty layer list: " + text);
    return LayerSelection::custom(std::move(layers));
  }
  throw std::invalid_argument("unknown layer selection: " + text);
}

ReportDocument run_pipeline(const RunConfig& config, PipelineKind kind) {
  if (config.out_dir.empty()) throw std::invalid_argument("run_pipeline: out_dir is empty");
  const fs::path out_dir(config.out_dir);
  fs::create_directories(out_dir);

  ReportDocument report;
  report.kind = pipeline_kind_name(kind);
  report.config = run_config_to_json(config);
  report.tool_version = kToolVersion;
  switch (kind) {
    case PipelineKind::Robustness:
      report.payload = run_robustness(config, out_dir);
      break;
    case PipelineKind::AdvDetect:
      report.payload = run_adv_detect(config, out_dir);
      break;
    case PipelineKind::Backdoor:
      report.payload = run_backdoor(config, out_dir);
      break;
  }

  emit_report(report, ReportFormat::Json, config.out_dir);
  emit_report(report, ReportFormat::Csv, config.out_dir);
  return report;
}

std::vector<std::string> emit_report(const ReportDocument& report, ReportFormat format,
                                     const std::string& dir) {
  const fs::path out_dir(dir.empty() ? "." : dir);
  fs::create_directories(out_dir);
  if (format == ReportFormat::Json) {
    const fs::path path = out_dir / "report.json";
    write_text(path, report_to_json(report).dump(2) + "\n");
    return {path.string()};
  }
  return emit_csv(report, out_dir);
}

}  // namespace nccr
