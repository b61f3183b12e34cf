// kinship: command-line driver for ingestion, sampling audits, two-stage
// training, evaluation and embedding export.
//
// Exit status: 0 success, 1 usage/config/input error, 2 invariant violation,
// 3 numerical failure.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "kinship/checkpoint.hpp"
#include "kinship/config.hpp"
#include "kinship/dataset.hpp"
#include "kinship/evaluation.hpp"
#include "kinship/features.hpp"
#include "kinship/pipeline.hpp"
#include "kinship/sampler.hpp"
#include "kinship/synthetic.hpp"
#include "kinship/training.hpp"

namespace fs = std::filesystem;
using namespace kinship;

namespace {

enum Exit { kOk = 0, kUsage = 1, kInvariant = 2, kNumerical = 3 };

struct CommonOptions {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::string out = ".";
};

// Where pairs, images and features come from. With neither --data nor
// --index the synthetic generator runs in memory from the config.
struct DataOptions {
  std::string data_dir;
  std::string index;
  std::string manifest;
  std::string features;
};

struct Inputs {
  Dataset data;
  Matrix<Real> features;
  bool has_features = false;
  std::vector<KinPair> train;
  std::vector<KinPair> test;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config_path, "key = value configuration file")->check(CLI::ExistingFile);
  cmd->add_option("--set", o.overrides, "configuration override key=value (repeatable)");
  cmd->add_option("--seed", o.seed, "root seed (overrides the config)");
  cmd->add_option("--out", o.out, "output directory")->capture_default_str();
}

void add_data(CLI::App* cmd, DataOptions& d) {
  cmd->add_option("--data", d.data_dir, "directory written by `synth`")->check(CLI::ExistingDirectory);
  cmd->add_option("--index", d.index, "pair index CSV")->check(CLI::ExistingFile);
  cmd->add_option("--manifest", d.manifest, "image manifest CSV")->check(CLI::ExistingFile);
  cmd->add_option("--features", d.features, "per-image feature file")->check(CLI::ExistingFile);
}

KeyValueConfig collect_config(const CommonOptions& o) {
  KeyValueConfig kv;
  if (!o.config_path.empty()) kv = KeyValueConfig::load(o.config_path);
  for (const auto& a : o.overrides) kv.set_assignment(a);
  if (o.seed) kv.set("seed", std::to_string(*o.seed));
  return kv;
}

fs::path prepare_out(const CommonOptions& o) {
  fs::path out(o.out);
  fs::create_directories(out);
  return out;
}

void write_effective_config(const fs::path& out, const RunConfig& config, const std::string& command) {
  std::ofstream f(out / "effective_config.txt");
  if (!f) throw ConfigError("cannot write " + (out / "effective_config.txt").string());
  f << "# kinship " << command << "\n";
  to_key_values(config).write(f);
}

nlohmann::json config_json(const RunConfig& config) {
  nlohmann::json j = nlohmann::json::object();
  const auto kv = to_key_values(config);
  for (const auto& [k, v] : kv.values()) j[k] = v;
  return j;
}

// Pairs of a second index file, resolved against `data`'s individuals.
std::vector<KinPair> resolve_pairs(const Dataset& data, const std::string& index_path, const std::string& manifest_path) {
  const auto subset = load_pair_index(index_path, manifest_path);
  std::vector<KinPair> out;
  for (const auto& p : subset.pairs()) {
    const auto a = data.find_person(subset.individual(p.person1).person_id);
    const auto b = data.find_person(subset.individual(p.person2).person_id);
    if (!a || !b) throw ValidationError(index_path + ": pair refers to a person missing from the full index");
    KinPair resolved{*a, *b, p.family_id, p.relationship};
    data.check_pair(resolved);
    out.push_back(resolved);
  }
  return out;
}

Inputs load_inputs(const DataOptions& d, const KeyValueConfig& kv, RunConfig& config) {
  Inputs in;
  std::string features_path = d.features;
  if (!d.data_dir.empty()) {
    if (!d.index.empty()) throw ConfigError("use either --data or --index, not both");
    const fs::path dir(d.data_dir);
    const auto manifest = (dir / "manifest.csv").string();
    in.data = load_pair_index((dir / "pairs.csv").string(), manifest);
    in.train = resolve_pairs(in.data, (dir / "train_pairs.csv").string(), manifest);
    in.test = resolve_pairs(in.data, (dir / "test_pairs.csv").string(), manifest);
    if (features_path.empty()) features_path = (dir / "features.txt").string();
  } else if (!d.index.empty()) {
    if (d.manifest.empty()) throw ConfigError("--index needs --manifest");
    in.data = load_pair_index(d.index, d.manifest);
    in.train = in.test = in.data.pairs();
  } else {
    auto split = make_synthetic_split(config);
    in.data = std::move(split.data.dataset);
    in.features = std::move(split.features);
    in.has_features = true;
    in.train = std::move(split.train);
    in.test = std::move(split.heldout);
    return in;
  }
  if (!features_path.empty()) {
    const auto store = FeatureStore::load(features_path);
    in.features = store.matrix_for(in.data);
    in.has_features = true;
    if (!kv.has("model.input_dim")) config.model.input_dim = store.dim();
  }
  return in;
}

void require_features(const Inputs& in) {
  if (!in.has_features) throw ConfigError("this command needs per-image features (--features or --data)");
}

void write_log(const fs::path& path, const TrainingLog& log) {
  std::ofstream f(path);
  if (!f) throw ConfigError("cannot write " + path.string());
  log.write_csv(f);
}

int cmd_ingest(const CommonOptions& o, const DataOptions& d) {
  if (d.index.empty() || d.manifest.empty()) throw ConfigError("ingest needs --index and --manifest");
  const auto kv = collect_config(o);
  auto config = run_config_from(kv);
  const auto data = load_pair_index(d.index, d.manifest);
  data.validate();
  std::cout << compute_stats(data);
  if (!d.features.empty()) {
    const auto store = FeatureStore::load(d.features);
    store.matrix_for(data);  // throws on any missing image
    std::cout << "features: " << store.size() << " vectors of dimension " << store.dim() << ", all images covered\n";
  }
  write_effective_config(prepare_out(o), config, "ingest");
  return kOk;
}

int cmd_synth(const CommonOptions& o) {
  const auto kv = collect_config(o);
  const auto config = run_config_from(kv);
  const auto split = make_synthetic_split(config);
  const auto out = prepare_out(o);
  auto write = [&](const std::string& name, auto&& fn) {
    std::ofstream f(out / name);
    if (!f) throw ConfigError("cannot write " + (out / name).string());
    fn(f);
  };
  const auto& data = split.data.dataset;
  write("pairs.csv", [&](std::ostream& f) { write_pair_index(f, data, data.pairs()); });
  write("train_pairs.csv", [&](std::ostream& f) { write_pair_index(f, data, split.train); });
  write("test_pairs.csv", [&](std::ostream& f) { write_pair_index(f, data, split.heldout); });
  write("manifest.csv", [&](std::ostream& f) { write_manifest(f, data); });
  split.data.features.save((out / "features.txt").string());
  write_effective_config(out, config, "synth");
  std::cout << compute_stats(data) << "train pairs: " << split.train.size() << "\nheld-out pairs: " << split.heldout.size()
            << "\nwritten to " << out.string() << "\n";
  return kOk;
}

int cmd_dry_run(const CommonOptions& o, const DataOptions& d, std::optional<std::size_t> epochs,
                std::optional<std::size_t> batch_size) {
  const auto kv = collect_config(o);
  auto config = run_config_from(kv);
  if (epochs) config.dry_run_epochs = *epochs;
  if (batch_size) config.stage1.batch_size = *batch_size;
  const auto in = load_inputs(d, kv, config);
  write_effective_config(prepare_out(o), config, "sample-dry-run");

  Sampler sampler(in.data, in.train, config.stage1.batch_size, derive_seed(config.seed, "sampler"));
  std::cout << "epoch,batch,family,person1,image1,person2,image2\n";
  std::size_t total_batches = 0, violations = 0;
  for (std::size_t epoch = 1; epoch <= config.dry_run_epochs; ++epoch) {
    if (epoch > 1) sampler.start_epoch();
    std::size_t b = 0;
    while (auto batch = sampler.next_batch()) {
      ++b;
      ++total_batches;
      for (const auto& item : batch->items) {
        std::cout << epoch << ',' << b << ',' << item.pair.family_id << ','
                  << in.data.individual(item.pair.person1).person_id << ',' << in.data.image(item.image_x).image_id << ','
                  << in.data.individual(item.pair.person2).person_id << ',' << in.data.image(item.image_y).image_id
                  << '\n';
      }
      for (const auto& v : audit_batch(in.data, *batch)) {
        std::cerr << "violation: epoch " << epoch << " batch " << b << ": " << v << "\n";
        ++violations;
      }
    }
    if (const auto spread = max_count_spread(sampler); spread > 1) {
      std::cerr << "violation: epoch " << epoch << " end: balance: image-count spread " << spread << " exceeds 1\n";
      ++violations;
    }
  }
  for (const auto& w : sampler.warnings()) std::cerr << "warning: " << w << "\n";
  std::cerr << "audited " << total_batches << " batches over " << config.dry_run_epochs << " epochs: " << violations
            << " violations, " << sampler.displacements() << " displacements, " << sampler.dropped_windows()
            << " dropped windows\n";
  return violations ? kInvariant : kOk;
}

int cmd_train_contrastive(const CommonOptions& o, const DataOptions& d, std::optional<std::size_t> steps,
                          const std::string& mode, const std::string& init_checkpoint) {
  const auto kv = collect_config(o);
  auto config = run_config_from(kv);
  if (steps) config.stage1.steps = *steps;
  if (!mode.empty()) config.stage1.encoder_mode = parse_trainable_mode(mode);
  const auto in = load_inputs(d, kv, config);
  require_features(in);
  auto model = init_checkpoint.empty() ? KinshipModel::create(config.model) : load_checkpoint(init_checkpoint);
  const auto out = prepare_out(o);
  write_effective_config(out, config, "train-contrastive");

  Sampler sampler(in.data, in.train, config.stage1.batch_size, derive_seed(config.seed, "sampler"));
  const auto log = train_contrastive(in.features, sampler, model, config.stage1);
  save_checkpoint(model, (out / "checkpoint.json").string(), config_json(config));
  write_log(out / "stage1_log.csv", log);
  if (!log.empty()) {
    const auto n = log.steps().size(), w = std::min<std::size_t>(50, n);
    std::cout << "stage 1: " << n << " steps, mean loss first " << w << ": " << log.mean_loss(0, w) << ", last " << w
              << ": " << log.mean_loss(n - w, n) << "\n";
  } else {
    std::cout << "stage 1: 0 steps, checkpoint equals initialisation\n";
  }
  return kOk;
}

EvaluationReport evaluate_on_test(const Inputs& in, const KinshipModel& model, const RunConfig& config) {
  const auto pairs = build_eval_pairs(in.data, in.test, config.seed);
  return evaluate(pairs, model, in.features, config.threshold);
}

void write_reports(const fs::path& out, const EvaluationReport& r, const std::string& method) {
  std::ofstream table(out / "report.txt"), csv(out / "report.csv");
  if (!table || !csv) throw ConfigError("cannot write report files in " + out.string());
  write_report_table(table, r, method);
  write_report_csv(csv, r);
  write_report_table(std::cout, r, method);
}

int cmd_train_classifier(const CommonOptions& o, const DataOptions& d, std::optional<std::size_t> steps,
                         const std::string& mode, const std::string& checkpoint, bool allow_no_stage1,
                         std::size_t eval_every) {
  const auto kv = collect_config(o);
  auto config = run_config_from(kv);
  if (steps) config.stage2.steps = *steps;
  if (!mode.empty()) config.stage2.encoder_mode = parse_trainable_mode(mode);
  if (allow_no_stage1) config.stage2.require_stage1 = false;
  const auto in = load_inputs(d, kv, config);
  require_features(in);
  auto model = checkpoint.empty() ? KinshipModel::create(config.model) : load_checkpoint(checkpoint);
  const auto out = prepare_out(o);
  write_effective_config(out, config, "train-classifier");

  SnapshotHook hook;
  if (eval_every) {
    hook = {eval_every, [&](std::size_t) { return evaluate_on_test(in, model, config).average; }};
  }
  Sampler sampler(in.data, in.train, config.stage2.batch_size, derive_seed(config.seed, "sampler2"));
  const auto log = train_classifier(in.features, sampler, model, config.stage2, hook);
  save_checkpoint(model, (out / "checkpoint.json").string(), config_json(config));
  write_log(out / "stage2_log.csv", log);
  const auto n = log.steps().size(), w = std::min<std::size_t>(50, n);
  std::cout << "stage 2 (" << to_string(config.stage2.encoder_mode) << "): " << n << " steps, mean loss last " << w
            << ": " << log.mean_loss(n - w, n) << "\n";
  return kOk;
}

int cmd_evaluate(const CommonOptions& o, const DataOptions& d, const std::string& checkpoint, const std::string& method) {
  const auto kv = collect_config(o);
  auto config = run_config_from(kv);
  const auto in = load_inputs(d, kv, config);
  require_features(in);
  const auto model = load_checkpoint(checkpoint);
  const auto out = prepare_out(o);
  write_effective_config(out, config, "evaluate");
  write_reports(out, evaluate_on_test(in, model, config), method);
  return kOk;
}

int cmd_export(const CommonOptions& o, const DataOptions& d, const std::string& checkpoint) {
  const auto kv = collect_config(o);
  auto config = run_config_from(kv);
  const auto in = load_inputs(d, kv, config);
  require_features(in);
  const auto model = load_checkpoint(checkpoint);
  const auto out = prepare_out(o);
  write_effective_config(out, config, "export-embeddings");

  const Matrix<Real> h = model.encoder.encode(in.features);
  const Matrix<Real> z = model.head.project(h);
  std::ofstream f(out / "embeddings.tsv");
  if (!f) throw ConfigError("cannot write embeddings.tsv");
  f.precision(std::numeric_limits<Real>::max_digits10);
  f << "image_id\tfamily\th\tz\n";
  auto row = [&](const Matrix<Real>& m, Eigen::Index r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) f << (c ? " " : "") << m(r, c);
  };
  for (std::size_t i = 0; i < in.data.images().size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    f << in.data.image(i).image_id << '\t' << in.data.family_of_image(i) << '\t';
    row(h, r);
    f << '\t';
    row(z, r);
    f << '\n';
  }
  std::cout << "exported " << in.data.images().size() << " embeddings (h: " << h.cols() << ", z: " << z.cols()
            << ") to " << (out / "embeddings.tsv").string() << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Kinship verification toolkit: contrastive pretraining and kin classification"};
  app.require_subcommand(1);

  CommonOptions common;
  DataOptions data;
  std::optional<std::size_t> steps, epochs, batch_size;
  std::string mode, checkpoint, method = "model";
  bool allow_no_stage1 = false;
  std::size_t eval_every = 0;

  auto* ingest = app.add_subcommand("ingest", "validate a pair index and print dataset statistics");
  auto* synth = app.add_subcommand("synth", "write a synthetic dataset with oracle features");
  auto* dry = app.add_subcommand("sample-dry-run", "stream sampler batches and audit every invariant");
  auto* stage1 = app.add_subcommand("train-contrastive", "stage 1: contrastive pretraining");
  auto* stage2 = app.add_subcommand("train-classifier", "stage 2: kin classifier on the pretrained encoder");
  auto* eval = app.add_subcommand("evaluate", "balanced held-out evaluation report");
  auto* exporter = app.add_subcommand("export-embeddings", "write per-image embeddings h and projections z");

  for (auto* cmd : {ingest, synth, dry, stage1, stage2, eval, exporter}) add_common(cmd, common);
  for (auto* cmd : {ingest, dry, stage1, stage2, eval, exporter}) add_data(cmd, data);

  dry->add_option("--epochs", epochs, "epochs to audit (default: sampler.epochs)");
  dry->add_option("--batch-size", batch_size, "batch size (default: stage1.batch_size)");
  stage1->add_option("--steps", steps, "training steps (default: stage1.steps)");
  stage1->add_option("--mode", mode, "encoder mode: frozen | finetuned");
  stage1->add_option("--init", checkpoint, "start from this checkpoint instead of a fresh initialisation")
      ->check(CLI::ExistingFile);
  stage2->add_option("--steps", steps, "training steps (default: stage2.steps)");
  stage2->add_option("--mode", mode, "encoder mode: frozen | finetuned");
  stage2->add_option("--checkpoint", checkpoint, "stage-1 checkpoint")->check(CLI::ExistingFile);
  stage2->add_flag("--allow-no-stage1", allow_no_stage1, "train on an encoder that skipped stage 1");
  stage2->add_option("--eval-every", eval_every, "log held-out average accuracy every K steps");
  eval->add_option("--checkpoint", checkpoint, "trained checkpoint")->required()->check(CLI::ExistingFile);
  eval->add_option("--method", method, "row label in the report table");
  exporter->add_option("--checkpoint", checkpoint, "trained checkpoint")->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  }

  try {
    if (*ingest) return cmd_ingest(common, data);
    if (*synth) return cmd_synth(common);
    if (*dry) return cmd_dry_run(common, data, epochs, batch_size);
    if (*stage1) return cmd_train_contrastive(common, data, steps, mode, checkpoint);
    if (*stage2) return cmd_train_classifier(common, data, steps, mode, checkpoint, allow_no_stage1, eval_every);
    if (*eval) return cmd_evaluate(common, data, checkpoint, method);
    if (*exporter) return cmd_export(common, data, checkpoint);
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kNumerical;
  } catch (const InvariantViolation& e) {
    std::cerr << "invariant violation: " << e.what() << "\n";
    return kInvariant;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }
  return kUsage;
}
