#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "diskcd/checkpoint.hpp"
#include "diskcd/corpus.hpp"
#include "diskcd/error.hpp"
#include "diskcd/graph.hpp"
#include "diskcd/harness.hpp"
#include "diskcd/log.hpp"

namespace {

using diskcd::Dataset;
using diskcd::DiskcdModel;
using diskcd::Err;
using diskcd::Error;
using diskcd::ExperimentConfig;
using diskcd::fail;
using ordered_json = nlohmann::ordered_json;
namespace fs = std::filesystem;

std::string read_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(Err::Io, "cannot read " + path);
  std::ostringstream body;
  body << in.rdbuf();
  return body.str();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) fail(Err::Io, "cannot write " + path);
  out << text;
}

ordered_json parse_json(const std::string& text, const std::string& what) {
  ordered_json j = ordered_json::parse(text, nullptr, false);
  if (j.is_discarded()) fail(Err::InvalidConfig, what + ": malformed JSON");
  return j;
}

// Fills cfg from a config object; unknown keys are rejected so typos fail
// loudly instead of silently running defaults.
void apply_config_json(const ordered_json& j, ExperimentConfig& cfg) {
  for (const auto& [key, value] : j.items()) {
    if (key == "label") cfg.label = value.get<std::string>();
    else if (key == "data_dir") cfg.data_dir = value.get<std::string>();
    else if (key == "out_dir") cfg.out_dir = value.get<std::string>();
    else if (key == "offline") cfg.offline = value.get<bool>();
    else if (key == "grade_hidden") cfg.grade_hidden = value.get<int64_t>();
    else if (key == "head") cfg.head = diskcd::parse_head_kind(value.get<std::string>());
    else if (key == "d_k") cfg.d_k = value.get<int64_t>();
    else if (key == "mirt_dim") cfg.mirt_dim = value.get<int64_t>();
    else if (key == "hetero_enabled") cfg.hetero_enabled = value.get<bool>();
    else if (key == "layers") cfg.layers = value.get<int64_t>();
    else if (key == "leaky_slope") cfg.leaky_slope = value.get<double>();
    else if (key == "per_relation_proj") cfg.per_relation_proj = value.get<bool>();
    else if (key == "normalize_across_relations") cfg.normalize_across_relations = value.get<bool>();
    else if (key == "fusion_softmax") cfg.fusion_softmax = value.get<bool>();
    else if (key == "lr") cfg.lr = value.get<double>();
    else if (key == "batch") cfg.batch = value.get<int64_t>();
    else if (key == "epochs") cfg.epochs = value.get<int64_t>();
    else if (key == "validation_fraction") cfg.validation_fraction = value.get<double>();
    else if (key == "tkc_holdout_fraction") cfg.tkc_holdout_fraction = value.get<double>();
    else if (key == "seed") cfg.seed = value.get<uint64_t>();
    else if (key == "untested_fraction") cfg.untested_fraction = value.get<double>();
    else fail(Err::InvalidConfig, "config key '" + key + "' is not recognized");
  }
}

// The --config file is applied before CLI11 parses the remaining flags, so
// explicitly passed flags always win over file values.
ExperimentConfig preload_config(int argc, char** argv) {
  ExperimentConfig cfg;
  for (int i = 1; i + 1 < argc; ++i) {
    if (std::string(argv[i]) == "--config")
      apply_config_json(parse_json(read_text(argv[i + 1]), argv[i + 1]), cfg);
  }
  return cfg;
}

void add_experiment_flags(CLI::App* cmd, ExperimentConfig& cfg, std::string& head_name) {
  cmd->add_option("--config", "JSON config file; flags override its values")
      ->check(CLI::ExistingFile);
  cmd->add_option("--label", cfg.label, "experiment label for reports");
  cmd->add_option("--data-dir", cfg.data_dir, "corpus directory");
  cmd->add_option("--out-dir", cfg.out_dir, "artifact directory");
  cmd->add_flag("--offline,!--online", cfg.offline,
                "derive embeddings from grades/vector files instead of id tables");
  cmd->add_option("--grade-hidden", cfg.grade_hidden, "hidden width of the grade transform");
  cmd->add_option("--head", head_name, "diagnosis head: irt, mirt, dina, neuralcd, rcd");
  cmd->add_option("--d-k", cfg.d_k, "embedding width (0 = concept count)");
  cmd->add_option("--mirt-dim", cfg.mirt_dim, "latent trait dimension for the mirt head");
  cmd->add_flag("--hetero,!--no-hetero", cfg.hetero_enabled, "toggle relation propagation");
  cmd->add_option("--layers", cfg.layers, "propagation layers");
  cmd->add_option("--leaky-slope", cfg.leaky_slope, "leaky relu slope in attention scoring");
  cmd->add_flag("--per-relation-proj", cfg.per_relation_proj,
                "ablation: per-relation projections");
  cmd->add_flag("--normalize-across-relations", cfg.normalize_across_relations,
                "ablation: one softmax across a subgraph's relations");
  cmd->add_flag("--fusion-softmax", cfg.fusion_softmax, "ablation: normalized fusion gates");
  cmd->add_option("--lr", cfg.lr, "Adam learning rate");
  cmd->add_option("--batch", cfg.batch, "minibatch size");
  cmd->add_option("--epochs", cfg.epochs, "training epochs");
  cmd->add_option("--validation-fraction", cfg.validation_fraction,
                  "train-side fraction held out for best-epoch selection (0 disables)");
  cmd->add_option("--tkc-holdout-fraction", cfg.tkc_holdout_fraction,
                  "train-side fraction held out as a tested-concept eval split");
  cmd->add_option("--seed", cfg.seed, "experiment seed");
  cmd->add_option("--untested-fraction", cfg.untested_fraction,
                  "simulated untested designation when the corpus has no exam list");
}

diskcd::HeadKind resolve_head(const std::string& head_name) {
  return diskcd::parse_head_kind(head_name);
}

// Shared by train/eval: everything up to (but excluding) the training loop.
// unique_ptrs keep dataset addresses stable because the graph points into
// the owning Dataset.
struct Pipeline {
  std::unique_ptr<Dataset> ds;  // partition attached; the graph points into it
  diskcd::ConceptPartition partition;
  diskcd::SplitResult split;
  std::vector<diskcd::ResponseRecord> train_records;
  std::unique_ptr<diskcd::HeteroGraph> graph;
  diskcd::ExternalVectors exercise_vecs, concept_vecs;
  bool have_ev = false, have_kv = false;
  std::unique_ptr<DiskcdModel> model;
};

Pipeline build_pipeline(const ExperimentConfig& cfg) {
  if (cfg.data_dir.empty()) fail(Err::InvalidConfig, "--data-dir is required");
  Pipeline p;
  p.ds = std::make_unique<Dataset>(diskcd::load_dataset(cfg.data_dir));
  p.partition = p.ds->has_exam ? p.ds->partition
                               : diskcd::simulate_partition(p.ds->q, cfg.untested_fraction, cfg.seed);
  p.ds->partition = p.partition;
  p.split = diskcd::ukc_split(p.ds->responses, p.ds->q, p.partition);
  p.train_records = p.split.train;
  // attempt incidence from the whole log; response values never enter the graph
  p.graph = std::make_unique<diskcd::HeteroGraph>(diskcd::build_hetero_graph(*p.ds));
  if (cfg.offline) {
    fs::path ev = fs::path(cfg.data_dir) / "vectors_exercise.csv";
    fs::path kv = fs::path(cfg.data_dir) / "vectors_concept.csv";
    if (fs::exists(ev)) {
      p.exercise_vecs = diskcd::load_external_vectors(ev.string(), -1);
      p.have_ev = true;
    }
    if (fs::exists(kv)) {
      p.concept_vecs = diskcd::load_external_vectors(kv.string(), -1);
      p.have_kv = true;
    }
  }
  p.model = std::make_unique<DiskcdModel>(*p.ds, *p.graph, cfg,
                                          p.have_ev ? &p.exercise_vecs : nullptr,
                                          p.have_kv ? &p.concept_vecs : nullptr);
  return p;
}

ordered_json metrics_json(const diskcd::Metrics& m) {
  ordered_json j;
  j["n"] = m.n;
  j["acc"] = m.acc;
  j["rmse"] = m.rmse;
  if (m.auc_defined)
    j["auc"] = m.auc;
  else
    j["auc"] = nullptr;
  return j;
}

int cmd_synth(const diskcd::SyntheticConfig& sc, const std::string& out_dir) {
  diskcd::SyntheticData data = diskcd::generate_synthetic(sc);
  diskcd::write_synthetic(data, out_dir);
  std::cout << "wrote synthetic corpus to " << out_dir << ": " << sc.n_students << " students, "
            << sc.n_exercises << " exercises, " << sc.n_concepts << " concepts, "
            << data.responses.size() << " responses, " << data.untested_concepts.size()
            << " untested concept(s)\n";
  return 0;
}

int cmd_split(const ExperimentConfig& cfg) {
  if (cfg.data_dir.empty()) fail(Err::InvalidConfig, "--data-dir is required");
  if (cfg.out_dir.empty()) fail(Err::InvalidConfig, "--out-dir is required");
  Dataset ds = diskcd::load_dataset(cfg.data_dir);
  diskcd::ConceptPartition partition =
      ds.has_exam ? ds.partition : diskcd::simulate_partition(ds.q, cfg.untested_fraction, cfg.seed);
  diskcd::SplitResult sr = diskcd::ukc_split(ds.responses, ds.q, partition);

  fs::create_directories(cfg.out_dir);
  auto dump = [&](const char* name, const std::vector<diskcd::ResponseRecord>& records) {
    std::string text = "student_id,exercise_id,score\n";
    for (const auto& r : records)
      text += r.student + "," + r.exercise + "," + std::to_string(r.score) + "\n";
    write_text((fs::path(cfg.out_dir) / name).string(), text);
  };
  dump("train.csv", sr.train);
  dump("test.csv", sr.test);
  std::string linkage = "exercise_id,untested_concept_id\n";
  for (const auto& [exercise, ukcs] : sr.test_exercise_ukcs)
    for (const auto& k : ukcs) linkage += exercise + "," + k + "\n";
  write_text((fs::path(cfg.out_dir) / "test_exercises.csv").string(), linkage);
  std::cout << "split " << ds.responses.size() << " responses: " << sr.train.size() << " train, "
            << sr.test.size() << " test (" << sr.test_exercise_ukcs.size()
            << " test exercises)\n";
  return 0;
}

int cmd_train(const ExperimentConfig& cfg) {
  cfg.validate();
  if (cfg.out_dir.empty()) fail(Err::InvalidConfig, "--out-dir is required to store the checkpoint");
  Pipeline p = build_pipeline(cfg);
  diskcd::TrainResult tr = diskcd::train_model(*p.model, p.train_records, cfg);

  fs::create_directories(cfg.out_dir);
  ordered_json meta;
  meta["label"] = cfg.label;
  meta["data_dir"] = cfg.data_dir;
  meta["out_dir"] = cfg.out_dir;
  meta["offline"] = cfg.offline;
  meta["grade_hidden"] = cfg.grade_hidden;
  meta["head"] = diskcd::head_kind_name(cfg.head);
  meta["d_k"] = cfg.d_k;
  meta["mirt_dim"] = cfg.mirt_dim;
  meta["hetero_enabled"] = cfg.hetero_enabled;
  meta["layers"] = cfg.layers;
  meta["leaky_slope"] = cfg.leaky_slope;
  meta["per_relation_proj"] = cfg.per_relation_proj;
  meta["normalize_across_relations"] = cfg.normalize_across_relations;
  meta["fusion_softmax"] = cfg.fusion_softmax;
  meta["lr"] = cfg.lr;
  meta["batch"] = cfg.batch;
  meta["epochs"] = cfg.epochs;
  meta["validation_fraction"] = cfg.validation_fraction;
  meta["tkc_holdout_fraction"] = cfg.tkc_holdout_fraction;
  meta["seed"] = cfg.seed;
  meta["untested_fraction"] = cfg.untested_fraction;
  diskcd::save_checkpoint((fs::path(cfg.out_dir) / "model.ckpt").string(),
                          p.model->state().to_checkpoint(meta.dump()));
  ordered_json curve;
  curve["epoch_losses"] = tr.epoch_losses;
  curve["val_aucs"] = tr.val_aucs;
  curve["best_epoch"] = tr.best_epoch;
  write_text((fs::path(cfg.out_dir) / "train.json").string(), curve.dump(2) + "\n");
  std::cout << "trained " << cfg.epochs << " epoch(s); final mean loss "
            << tr.epoch_losses.back();
  if (tr.best_epoch > 0) std::cout << "; kept epoch " << tr.best_epoch;
  std::cout << "; checkpoint at " << (fs::path(cfg.out_dir) / "model.ckpt").string() << "\n";
  return 0;
}

// Evaluation reuses the architecture stored in the checkpoint; only the data
// location may be overridden, since architecture flags would change parameter
// shapes and the split seed must match training for the graph to line up.
int cmd_eval(const std::string& ckpt_path, const std::string& data_dir_override,
             const std::string& out_dir, const std::string& split) {
  diskcd::Checkpoint ckpt = diskcd::load_checkpoint(ckpt_path);
  ExperimentConfig cfg;
  apply_config_json(parse_json(ckpt.meta, ckpt_path + " meta"), cfg);
  if (!data_dir_override.empty()) cfg.data_dir = data_dir_override;
  cfg.out_dir.clear();

  Pipeline p = build_pipeline(cfg);
  p.model->state().load(ckpt);

  ordered_json out;
  if (split == "train" || split == "both")
    out["train"] = metrics_json(diskcd::evaluate_model(*p.model, p.train_records));
  if (split == "ukc_test" || split == "both")
    out["ukc_test"] = metrics_json(diskcd::evaluate_model(*p.model, p.split.test));
  std::string text = out.dump(2) + "\n";
  std::cout << text;
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    write_text((fs::path(out_dir) / "metrics.json").string(), text);
  }
  return 0;
}

int cmd_run(const ExperimentConfig& cfg) {
  diskcd::ExperimentResult r = diskcd::run_experiment(cfg);
  if (cfg.out_dir.empty()) {
    std::cout << r.report_json;
  } else {
    std::cout << "label=" << cfg.label << " head=" << diskcd::head_kind_name(cfg.head)
              << " variant=" << (cfg.hetero_enabled && cfg.layers > 0 ? "diskcd" : "wo-hrl")
              << "\n";
    std::cout << "ukc_test: n=" << r.ukc_test.n << " acc=" << r.ukc_test.acc
              << " rmse=" << r.ukc_test.rmse << " auc=";
    if (r.ukc_test.auc_defined)
      std::cout << r.ukc_test.auc;
    else
      std::cout << "undefined";
    std::cout << "\n";
    if (r.doa_defined && r.doa_test.defined_count > 0)
      std::cout << "doa: mean=" << r.doa_test.mean << " over " << r.doa_test.defined_count
                << " concept(s)\n";
    std::cout << "artifacts in " << cfg.out_dir << "\n";
  }
  return 0;
}

// Renders a report.json into the plot-ready CSV, so stored reports can be
// re-plotted without rerunning the experiment.
int cmd_report(const std::string& report_path, const std::string& out_path) {
  ordered_json j = parse_json(read_text(report_path), report_path);
  if (!j.contains("schema_version") || j["schema_version"].get<int64_t>() != 1)
    fail(Err::InvalidConfig, report_path + ": unsupported or missing schema_version");
  const auto& cfgj = j["config"];
  const auto& res = j["results"];
  std::string variant =
      cfgj["hetero_enabled"].get<bool>() && cfgj["layers"].get<int64_t>() > 0 ? "diskcd" : "wo-hrl";
  std::string doa_mean;
  if (res["doa"]["defined"].get<bool>()) {
    std::ostringstream v;
    v.precision(17);
    v << res["doa"]["mean"].get<double>();
    doa_mean = v.str();
  }
  std::string csv = "label,head,variant,split,metric,value,doa_mean\n";
  for (const auto& [split, m] : res["metrics"].items()) {
    if (m.is_null()) continue;
    std::string prefix = cfgj["label"].get<std::string>() + "," +
                         cfgj["head"].get<std::string>() + "," + variant + "," + split;
    auto value = [&](const char* key) {
      if (m[key].is_null()) return std::string();
      std::ostringstream v;
      v.precision(17);
      v << m[key].get<double>();
      return v.str();
    };
    csv += prefix + ",acc," + value("acc") + "," + doa_mean + "\n";
    csv += prefix + ",rmse," + value("rmse") + "," + doa_mean + "\n";
    csv += prefix + ",auc," + value("auc") + "," + doa_mean + "\n";
  }
  if (out_path.empty())
    std::cout << csv;
  else
    write_text(out_path, csv);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DisKCD cognitive diagnosis: corpus tools, training, and evaluation"};
  app.require_subcommand(1);

  ExperimentConfig cfg;
  try {
    cfg = preload_config(argc, argv);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  std::string head_name = diskcd::head_kind_name(cfg.head);

  // synth
  diskcd::SyntheticConfig sc;
  std::string synth_out;
  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic corpus");
  synth->add_option("--out-dir", synth_out, "target directory")->required();
  synth->add_option("--students", sc.n_students, "cohort size");
  synth->add_option("--exercises", sc.n_exercises, "exercise count");
  synth->add_option("--concepts", sc.n_concepts, "concept count");
  synth->add_option("--untested-fraction", sc.untested_fraction, "untested concept share");
  synth->add_option("--slip", sc.slip, "slip probability");
  synth->add_option("--guess", sc.guess, "guess probability");
  synth->add_option("--relation-density", sc.relation_density, "extra relation density");
  synth->add_option("--attempt-prob", sc.attempt_prob, "chance a student attempts an exercise");
  synth->add_option("--mixed-fraction", sc.mixed_fraction,
                    "chance an off-exam exercise covers untested concepts");
  synth->add_option("--related-cover", sc.related_cover,
                    "chance an extra covered concept comes from relation neighbors");
  synth->add_option("--similarity-coupling", sc.similarity_coupling,
                    "pull toward the mastery of similar concepts");
  synth->add_option("--min-concepts", sc.min_concepts_per_exercise, "min concepts per exercise");
  synth->add_option("--max-concepts", sc.max_concepts_per_exercise, "max concepts per exercise");
  synth->add_option("--seed", sc.seed, "generator seed");

  // split
  CLI::App* split = app.add_subcommand("split", "emit train/test response CSVs");
  add_experiment_flags(split, cfg, head_name);

  // train
  CLI::App* train = app.add_subcommand("train", "fit a model and store a checkpoint");
  add_experiment_flags(train, cfg, head_name);

  // eval
  std::string ckpt_path, eval_data_dir, eval_out_dir, eval_split = "both";
  CLI::App* eval = app.add_subcommand("eval", "score records from a stored checkpoint");
  eval->add_option("--checkpoint", ckpt_path, "model.ckpt from train")->required();
  eval->add_option("--data-dir", eval_data_dir, "override the corpus directory");
  eval->add_option("--out-dir", eval_out_dir, "also write metrics.json here");
  eval->add_option("--split", eval_split, "train, ukc_test, or both")
      ->check(CLI::IsMember({"train", "ukc_test", "both"}));

  // run
  CLI::App* run = app.add_subcommand("run", "full pipeline: train, evaluate, report");
  add_experiment_flags(run, cfg, head_name);

  // report
  std::string report_path, report_out;
  CLI::App* report = app.add_subcommand("report", "render a report.json into plot-ready CSV");
  report->add_option("--report", report_path, "report.json path")->required();
  report->add_option("--out", report_out, "CSV destination (default stdout)");

  CLI11_PARSE(app, argc, argv);

  try {
    cfg.head = resolve_head(head_name);
    if (synth->parsed()) return cmd_synth(sc, synth_out);
    if (split->parsed()) return cmd_split(cfg);
    if (train->parsed()) return cmd_train(cfg);
    if (eval->parsed()) return cmd_eval(ckpt_path, eval_data_dir, eval_out_dir, eval_split);
    if (run->parsed()) return cmd_run(cfg);
    if (report->parsed()) return cmd_report(report_path, report_out);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
