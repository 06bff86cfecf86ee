#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "nccr/attacks.hpp"
#include "nccr/backdoor.hpp"
#include "nccr/dataset.hpp"
#include "nccr/detect.hpp"
#include "nccr/nccr.hpp"
#include "nccr/report.hpp"
#include "nccr/rng.hpp"
#include "nccr/serialize.hpp"
#include "nccr/train.hpp"
#include "nccr/zoo.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace nccr;

namespace {

json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open " + path);
  json j;
  in >> j;
  return j;
}

// The config file is read before CLI11 parses, so flag values land on top of
// the file's values.
std::string find_config_arg(int argc, char** argv) {
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--config" && i + 1 < argc) return argv[i + 1];
    const std::string prefix = "--config=";
    if (arg.rfind(prefix, 0) == 0) return arg.substr(prefix.size());
  }
  return "";
}

void add_common(CLI::App* cmd, RunConfig& c, std::string& config_path) {
  cmd->add_option("--config", config_path, "RunConfig JSON file (flags override it)");
  cmd->add_option("--seed", c.seed, "master seed; every other seed derives from it");
  cmd->add_option("--out", c.out_dir, "output directory");
  cmd->add_option("--threads", c.threads, "worker threads, 0 = all cores");
}

void add_data(CLI::App* cmd, RunConfig& c) {
  cmd->add_option("--train-images", c.train_data.images, "training IDX image file");
  cmd->add_option("--train-labels", c.train_data.labels, "training IDX label file");
  cmd->add_option("--train-synthetic", c.train_data.synthetic,
                  "synthetic training data: digits28 | mini-digits | blobs | separable2d");
  cmd->add_option("--train-size", c.train_data.size, "synthetic training set size");
  cmd->add_option("--test-images", c.test_data.images, "test IDX image file");
  cmd->add_option("--test-labels", c.test_data.labels, "test IDX label file");
  cmd->add_option("--test-synthetic", c.test_data.synthetic, "synthetic test data kind");
  cmd->add_option("--test-size", c.test_data.size, "synthetic test set size");
}

void add_model(CLI::App* cmd, ModelSource& m) {
  cmd->add_option("--model", m.name, "model label used in reports and artifact names");
  cmd->add_option("--model-path", m.path, "load this saved model instead of training");
  cmd->add_option("--zoo", m.zoo, "architecture: lenet5 | lenet1 | mini | convnet8");
  cmd->add_option("--epochs", m.train.epochs, "training epochs");
  cmd->add_option("--batch-size", m.train.batch_size, "minibatch size");
  cmd->add_option("--learning-rate", m.train.learning_rate, "SGD learning rate");
  cmd->add_option("--momentum", m.train.momentum, "SGD momentum");
}

void add_noise(CLI::App* cmd, RunConfig& c, std::string& noise_kind) {
  cmd->add_option("--epsilon", c.noise.epsilon, "noise bound on the input scale");
  cmd->add_option("--draws", c.noise.draws, "noise draws per item");
  cmd->add_option("--noise-kind", noise_kind, "truncated-gaussian | uniform");
  cmd->add_option("--selection", c.selection,
                  "scored layers: all-hidden | penultimate | layers:i,j,...");
  cmd->add_option("--norm", c.norm, "score norm: l2 | l1 | linf");
  cmd->add_flag("--normalize", c.normalize, "divide features by the clean trace norm");
}

void add_attacks(CLI::App* cmd, std::string& attacks_csv, AttackSpec& tpl) {
  cmd->add_option("--attacks", attacks_csv, "comma list of attacks: fgsm,pgd,jsma");
  cmd->add_option("--attack-epsilon", tpl.epsilon, "attack max-norm budget");
  cmd->add_option("--attack-alpha", tpl.alpha, "pgd step size");
  cmd->add_option("--attack-steps", tpl.steps, "pgd iterations");
  cmd->add_option("--attack-theta", tpl.theta, "jsma per-step increment");
  cmd->add_option("--attack-gamma", tpl.gamma, "jsma pixel budget fraction");
}

std::vector<AttackSpec> attacks_from_csv(const std::string& csv, const AttackSpec& tpl) {
  std::vector<AttackSpec> specs;
  std::istringstream in(csv);
  std::string token;
  while (std::getline(in, token, ',')) {
    if (token.empty()) continue;
    AttackSpec spec = tpl;
    spec.kind = attack_kind_from_name(token);
    specs.push_back(spec);
  }
  if (specs.empty()) throw std::invalid_argument("no attacks in list: " + csv);
  return specs;
}

// Applies the scratch model source back onto the config: flags edit the
// first entry, leaving any further config-file entries alone.
void apply_primary(RunConfig& c, const ModelSource& primary) {
  if (c.models.empty()) c.models.push_back(primary);
  else c.models[0] = primary;
}

Model obtain_cli_model(const ModelSource& src, const RunConfig& c, uint64_t data_seed) {
  if (!src.path.empty()) return load_model(src.path);
  const Dataset train_data = load_data_source(c.train_data, data_seed);
  TrainConfig cfg = src.train;
  cfg.seed = derive_seed(c.seed, "train", 0);
  return train(zoo_spec(src.zoo), train_data, cfg).model;
}

void write_json_file(const fs::path& path, const json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

int cmd_train(const RunConfig& c) {
  const ModelSource& src = c.models.front();
  if (!src.path.empty()) {
    throw std::invalid_argument("train: --model-path makes no sense here; pick a --zoo spec");
  }
  const Dataset train_data = load_data_source(c.train_data, derive_seed(c.seed, "data", 0));
  const Dataset test_data = load_data_source(c.test_data, derive_seed(c.seed, "data", 1));

  TrainConfig cfg = src.train;
  cfg.seed = derive_seed(c.seed, "train", 0);
  TrainResult result;
  if (src.adversarial) {
    AttackSpec attack = src.attack;
    attack.seed = derive_seed(c.seed, "advtrain", 0);
    result = adversarial_train(zoo_spec(src.zoo), train_data, attack, cfg);
  } else {
    result = train(zoo_spec(src.zoo), train_data, cfg);
  }
  const double accuracy = evaluate_accuracy(result.model, test_data, c.threads);

  const fs::path out_dir(c.out_dir);
  fs::create_directories(out_dir / "models");
  const std::string artifact = "models/" + src.name + ".nccrmdl";
  save_model(result.model, (out_dir / artifact).string());

  json epochs = json::array();
  for (const EpochMetrics& e : result.epochs) {
    epochs.push_back({{"mean_loss", e.mean_loss}, {"accuracy", e.accuracy}});
  }
  write_json_file(out_dir / "train.json", {{"model",
                                            {{"name", src.name},
                                             {"zoo", src.zoo},
                                             {"adversarial", src.adversarial},
                                             {"id", result.model.id()},
                                             {"parameter_count", result.model.parameter_count()},
                                             {"artifact", artifact}}},
                                           {"train", train_config_to_json(cfg)},
                                           {"epochs", std::move(epochs)},
                                           {"test_accuracy", accuracy},
                                           {"config", run_config_to_json(c)}});
  std::cout << src.name << ": test accuracy " << accuracy << ", saved "
            << (out_dir / artifact).string() << "\n";
  return 0;
}

int cmd_attack(const RunConfig& c) {
  if (c.attacks.empty()) throw std::invalid_argument("attack: no attacks configured");
  const Model model = obtain_cli_model(c.models.front(), c, derive_seed(c.seed, "data", 0));
  const Dataset test_data = load_data_source(c.test_data, derive_seed(c.seed, "data", 1));

  const fs::path out_dir(c.out_dir);
  fs::create_directories(out_dir / "adv");
  json runs = json::array();
  for (std::size_t j = 0; j < c.attacks.size(); ++j) {
    AttackSpec spec = c.attacks[j];
    spec.seed = derive_seed(c.seed, "attack", j);
    AttackBatchOptions opts;
    opts.stop_after = c.per_side;
    opts.threads = c.threads;
    const AttackBatchResult res = attack_batch(model, test_data, spec, opts);
    const std::string name = attack_kind_name(spec.kind) +
                             (c.attacks.size() > 1 ? "-" + std::to_string(j + 1) : "");

    json meta = {{"name", name},
                 {"spec", attack_to_json(spec)},
                 {"eligible", res.eligible},
                 {"succeeded", res.succeeded},
                 {"success_rate", res.success_rate}};
    const bool image = !res.adversarial.inputs.empty() &&
                       res.adversarial.inputs[0].shape.size() == 3 &&
                       res.adversarial.inputs[0].shape[0] == 1;
    if (image) {
      const std::string images = "adv/" + name + "-images.idx";
      const std::string labels = "adv/" + name + "-labels.idx";
      save_idx(res.adversarial, (out_dir / images).string(), (out_dir / labels).string(),
               IdxPixelFormat::Float32);
      json sidecar = meta;
      sidecar["source_indices"] = res.source_indices;
      sidecar["images"] = images;
      sidecar["labels"] = labels;
      write_json_file(out_dir / "adv" / (name + ".json"), sidecar);
      meta["artifacts"] = {{"images", images}, {"labels", labels}};
    }
    runs.push_back(std::move(meta));
    std::cout << name << ": success rate " << res.success_rate << " (" << res.succeeded << "/"
              << res.eligible << " eligible)\n";
  }
  write_json_file(out_dir / "attack.json",
                  {{"model_id", model.id()}, {"runs", std::move(runs)},
                   {"config", run_config_to_json(c)}});
  return 0;
}

int cmd_nccr(const RunConfig& c) {
  const Model model = obtain_cli_model(c.models.front(), c, derive_seed(c.seed, "data", 0));
  const Dataset test_data = load_data_source(c.test_data, derive_seed(c.seed, "data", 1));

  NoiseSpec noise = c.noise;
  noise.seed = derive_seed(c.seed, "noise");
  const LayerSelection sel = selection_from_string(c.selection);
  const std::vector<NccrItem> batch = nccr_batch(model, test_data, noise, sel,
                                                 norm_kind_from_name(c.norm), c.normalize,
                                                 c.threads);

  const fs::path out_dir(c.out_dir);
  fs::create_directories(out_dir);
  std::vector<NccrFeature> features;
  std::vector<double> scores;
  for (const NccrItem& item : batch) {
    features.push_back(item.feature);
    scores.push_back(item.score);
  }
  save_features((out_dir / "features.bin").string(), features);

  const BoxStats box = nccr_summary(scores);
  std::ostringstream rows;
  rows << "item,score\n";
  for (std::size_t i = 0; i < scores.size(); ++i) rows << i << ',' << scores[i] << '\n';
  std::ofstream scores_csv(out_dir / "scores.csv", std::ios::binary);
  scores_csv << rows.str();
  std::ofstream box_csv(out_dir / "box.csv", std::ios::binary);
  box_csv << box_stats_csv(box);
  write_json_file(out_dir / "nccr.json",
                  {{"model_id", model.id()},
                   {"noise", noise_to_json(noise)},
                   {"selection", c.selection},
                   {"norm", c.norm},
                   {"normalize", c.normalize},
                   {"count", scores.size()},
                   {"box",
                    {{"median", box.median},
                     {"mean", box.mean},
                     {"q1", box.q1},
                     {"q3", box.q3},
                     {"whisker_lo", box.whisker_lo},
                     {"whisker_hi", box.whisker_hi},
                     {"outliers", box.outliers}}},
                   {"config", run_config_to_json(c)}});
  std::cout << "scored " << scores.size() << " items: median " << box.median << ", mean "
            << box.mean << "\n";
  return 0;
}

int cmd_pipeline(const RunConfig& c, PipelineKind kind) {
  const ReportDocument doc = run_pipeline(c, kind);
  const json& p = doc.payload;
  if (kind == PipelineKind::Robustness) {
    for (const json& m : p.at("models")) {
      std::cout << m.at("name").get<std::string>() << ": clean accuracy "
                << m.at("clean_accuracy").get<double>() << ", median score "
                << m.at("box").at("median").get<double>();
      for (const json& a : m.at("under_attack")) {
        std::cout << ", " << a.at("name").get<std::string>() << " accuracy "
                  << a.at("accuracy").get<double>();
      }
      std::cout << "\n";
    }
    for (const json& pair : p.at("pairs")) {
      std::cout << "p(" << pair.at("a").get<std::string>() << " > "
                << pair.at("b").get<std::string>()
                << ") = " << pair.at("p_a_greater_b").get<double>() << "\n";
    }
  } else if (kind == PipelineKind::AdvDetect) {
    const json& grid = p.at("grid");
    for (std::size_t r = 0; r < grid.at("evals").size(); ++r) {
      std::cout << grid.at("evals")[r].get<std::string>() << ":";
      for (std::size_t col = 0; col < grid.at("trainers").size(); ++col) {
        std::cout << " " << grid.at("trainers")[col].get<std::string>() << "=";
        const json& cell = grid.at("cells")[r][col];
        if (cell.is_null()) std::cout << "-";
        else std::cout << cell.get<double>();
      }
      std::cout << "\n";
    }
  } else {
    const json& v = p.at("verdict");
    std::cout << "backdoor " << (v.at("present").get<bool>() ? "present" : "absent")
              << ", silhouette " << v.at("silhouette").get<double>() << " (gate "
              << v.at("gate").get<double>() << ")";
    if (!p.at("f1").is_null()) std::cout << ", f1 " << p.at("f1").get<double>();
    std::cout << "\n";
  }
  std::cout << "report: " << (fs::path(c.out_dir) / "report.json").string() << "\n";
  return 0;
}

int cmd_report(const std::string& in_path, const std::string& format, const std::string& out) {
  const ReportDocument doc = report_from_json(load_json_file(in_path));
  const ReportFormat fmt = format == "json" ? ReportFormat::Json : ReportFormat::Csv;
  for (const std::string& path : emit_report(doc, fmt, out)) {
    std::cout << path << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  RunConfig config;
  std::string config_path;
  try {
    const std::string pre = find_config_arg(argc, argv);
    if (!pre.empty()) config = run_config_from_json(load_json_file(pre));
  } catch (const json::exception& e) {
    std::cerr << "error: bad config file: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }

  ModelSource primary = config.models.empty() ? ModelSource{} : config.models[0];
  std::string noise_kind;
  std::string attacks_csv;
  AttackSpec attack_tpl;
  bool no_adversarial = false;
  bool adversarial = false;
  std::string report_in, report_format = "csv";

  CLI::App app{"noise-response probing for neural networks"};
  app.require_subcommand(1);

  CLI::App* train_cmd = app.add_subcommand("train", "train a model and save it");
  add_common(train_cmd, config, config_path);
  add_data(train_cmd, config);
  add_model(train_cmd, primary);
  train_cmd->add_flag("--adversarial", adversarial, "adversarial training with the attack flags");
  add_attacks(train_cmd, attacks_csv, attack_tpl);

  CLI::App* attack_cmd = app.add_subcommand("attack", "craft adversarial examples");
  add_common(attack_cmd, config, config_path);
  add_data(attack_cmd, config);
  add_model(attack_cmd, primary);
  add_attacks(attack_cmd, attacks_csv, attack_tpl);
  attack_cmd->add_option("--per-side", config.per_side, "stop after this many successes");

  CLI::App* nccr_cmd = app.add_subcommand("nccr", "score a dataset's noise response");
  add_common(nccr_cmd, config, config_path);
  add_data(nccr_cmd, config);
  add_model(nccr_cmd, primary);
  add_noise(nccr_cmd, config, noise_kind);

  CLI::App* robust_cmd =
      app.add_subcommand("verify-robustness", "rank models by noise response");
  add_common(robust_cmd, config, config_path);
  add_data(robust_cmd, config);
  add_model(robust_cmd, primary);
  add_noise(robust_cmd, config, noise_kind);
  add_attacks(robust_cmd, attacks_csv, attack_tpl);
  robust_cmd->add_flag("--no-adversarial", no_adversarial,
                       "score only the first model, skip the adversarially trained twin");

  CLI::App* detect_cmd = app.add_subcommand("detect-adv", "train and grade attack detectors");
  add_common(detect_cmd, config, config_path);
  add_data(detect_cmd, config);
  add_model(detect_cmd, primary);
  add_noise(detect_cmd, config, noise_kind);
  add_attacks(detect_cmd, attacks_csv, attack_tpl);
  detect_cmd->add_option("--per-side", config.per_side, "cap adversarial items per attack");
  detect_cmd->add_flag("!--no-combine", config.combine, "skip the pooled detector");
  detect_cmd->add_option("--detector-epochs", config.detector_train.epochs,
                         "detector training epochs");

  CLI::App* backdoor_cmd = app.add_subcommand("detect-backdoor", "scan training data for a trigger");
  add_common(backdoor_cmd, config, config_path);
  add_data(backdoor_cmd, config);
  add_model(backdoor_cmd, primary);
  add_noise(backdoor_cmd, config, noise_kind);
  std::string trigger_kind;
  backdoor_cmd->add_option("--trigger", trigger_kind, "patch | blended");
  backdoor_cmd->add_option("--patch-h", config.trigger.patch_h, "patch height");
  backdoor_cmd->add_option("--patch-w", config.trigger.patch_w, "patch width");
  std::string corner;
  backdoor_cmd->add_option("--corner", corner,
                           "top-left | top-right | bottom-left | bottom-right");
  backdoor_cmd->add_option("--trigger-color", config.trigger.color, "patch fill value");
  backdoor_cmd->add_option("--blend-alpha", config.trigger.alpha, "blended trigger weight");
  backdoor_cmd->add_option("--poison-rate", config.poison.rate, "poisoned fraction of training");
  backdoor_cmd->add_option("--target-label", config.poison.target_label, "trigger target class");
  backdoor_cmd->add_option("--scan-epsilon", config.scan_epsilon,
                           "scan noise on the 0-255 scale");
  backdoor_cmd->add_option("--gate", config.gate, "silhouette gate for the verdict");

  CLI::App* report_cmd = app.add_subcommand("report", "re-emit a saved report");
  report_cmd->add_option("input", report_in, "path to report.json")->required();
  report_cmd->add_option("--format", report_format, "csv | json")
      ->check(CLI::IsMember({"csv", "json"}));
  report_cmd->add_option("--out", config.out_dir, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (!noise_kind.empty()) config.noise.kind = noise_kind_from_name(noise_kind);
    if (!trigger_kind.empty()) config.trigger.kind = trigger_kind_from_name(trigger_kind);
    if (!corner.empty()) config.trigger.anchor = corner_from_name(corner);
    primary.adversarial = primary.adversarial || adversarial;
    if (!attacks_csv.empty()) config.attacks = attacks_from_csv(attacks_csv, attack_tpl);

    if (app.got_subcommand(report_cmd)) return cmd_report(report_in, report_format, config.out_dir);

    apply_primary(config, primary);
    if (app.got_subcommand(train_cmd)) {
      if (primary.adversarial) {
        config.models[0].attack = config.attacks.empty() ? attack_tpl : config.attacks[0];
      }
      return cmd_train(config);
    }
    if (app.got_subcommand(attack_cmd)) {
      if (config.attacks.empty()) config.attacks = {attack_tpl};
      return cmd_attack(config);
    }
    if (app.got_subcommand(nccr_cmd)) return cmd_nccr(config);
    if (app.got_subcommand(robust_cmd)) {
      // the default comparison: the spec trained plain vs adversarially
      if (config.models.size() == 1 && !no_adversarial && config_path.empty()) {
        ModelSource twin = config.models[0];
        twin.name = config.models[0].name == "model" ? "adv-trained"
                                                     : config.models[0].name + "-adv";
        if (config.models[0].name == "model") config.models[0].name = "natural";
        twin.adversarial = true;
        twin.attack = config.attacks.empty() ? attack_tpl : config.attacks[0];
        config.models.push_back(std::move(twin));
      }
      return cmd_pipeline(config, PipelineKind::Robustness);
    }
    if (app.got_subcommand(detect_cmd)) {
      if (detect_cmd->count("--selection") == 0 && config_path.empty()) {
        config.selection = "penultimate";  // fixed-width detector features
      }
      if (config.attacks.empty()) config.attacks = attacks_from_csv("fgsm,pgd,jsma", attack_tpl);
      return cmd_pipeline(config, PipelineKind::AdvDetect);
    }
    if (app.got_subcommand(backdoor_cmd)) return cmd_pipeline(config, PipelineKind::Backdoor);
    throw std::invalid_argument("no command given");
  } catch (const IdxError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ModelIoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
