#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "diskcd/error.hpp"
#include "diskcd/harness.hpp"
#include "diskcd/log.hpp"
#include "diskcd/rng.hpp"

namespace diskcd {

namespace {

using ordered_json = nlohmann::ordered_json;
namespace fs = std::filesystem;

std::string fmt_g(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

EmbeddingConfig embedding_config(const ExperimentConfig& cfg, bool have_exercise_vecs,
                                 bool have_concept_vecs) {
  EmbeddingConfig e;
  e.d_k = cfg.d_k;
  e.grade_hidden = cfg.grade_hidden;
  if (cfg.offline) {
    e.student_from_grades = true;
    e.exercise_from_vectors = have_exercise_vecs;
    e.concept_from_vectors = have_concept_vecs;
  }
  return e;
}

HeadConfig head_config(const ExperimentConfig& cfg, int64_t d_k, int64_t n_concepts) {
  HeadConfig h;
  h.kind = cfg.head;
  h.d_k = d_k;
  h.n_concepts = n_concepts;
  h.mirt_dim = cfg.mirt_dim;
  return h;
}

LayerOptions layer_options(const ExperimentConfig& cfg) {
  LayerOptions o;
  o.layers = cfg.layers;
  o.leaky_slope = cfg.leaky_slope;
  o.per_relation_proj = cfg.per_relation_proj;
  o.normalize_across_relations = cfg.normalize_across_relations;
  o.fusion_softmax = cfg.fusion_softmax;
  return o;
}

template <class F>
auto run_stage(const char* name, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const Error& e) {
    throw Error(e.code(), std::string("stage ") + name + ": " + e.what());
  }
}

ordered_json metrics_json(const Metrics& m) {
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

ordered_json config_json(const ExperimentConfig& cfg) {
  ordered_json j;
  j["label"] = cfg.label;
  j["data_dir"] = cfg.data_dir;
  j["offline"] = cfg.offline;
  j["grade_hidden"] = cfg.grade_hidden;
  j["head"] = head_kind_name(cfg.head);
  j["d_k"] = cfg.d_k;
  j["mirt_dim"] = cfg.mirt_dim;
  j["hetero_enabled"] = cfg.hetero_enabled;
  j["layers"] = cfg.layers;
  j["leaky_slope"] = cfg.leaky_slope;
  j["per_relation_proj"] = cfg.per_relation_proj;
  j["normalize_across_relations"] = cfg.normalize_across_relations;
  j["fusion_softmax"] = cfg.fusion_softmax;
  j["lr"] = cfg.lr;
  j["batch"] = cfg.batch;
  j["epochs"] = cfg.epochs;
  j["validation_fraction"] = cfg.validation_fraction;
  j["tkc_holdout_fraction"] = cfg.tkc_holdout_fraction;
  j["seed"] = cfg.seed;
  j["untested_fraction"] = cfg.untested_fraction;
  return j;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) fail(Err::Io, "cannot write " + path.string());
  out << text;
  if (!out) fail(Err::Io, "short write to " + path.string());
}

}  // namespace

// ---------------------------------------------------------------------------
// DiskcdModel
// ---------------------------------------------------------------------------

DiskcdModel::DiskcdModel(const Dataset& ds, const HeteroGraph& graph, const ExperimentConfig& cfg,
                         const ExternalVectors* exercise_vecs, const ExternalVectors* concept_vecs)
    : ds_(&ds),
      graph_(&graph),
      state_(cfg.seed),
      embedding_(state_, ds, embedding_config(cfg, exercise_vecs != nullptr, concept_vecs != nullptr),
                 exercise_vecs, concept_vecs),
      head_(state_, head_config(cfg, embedding_.d_k(), ds.q.n_concepts())) {
  if (cfg.hetero_enabled && cfg.layers > 0)
    hrl_.emplace(state_, embedding_.d_k(), layer_options(cfg));
}

NodeEmbeddings DiskcdModel::forward_nodes(Tape& t, const std::vector<Tape::Val>& bound,
                                          PropagateDiagnostics* diag) const {
  NodeEmbeddings nodes = embedding_.build(t, bound);
  if (hrl_) nodes = hrl_->propagate(t, bound, *graph_, nodes, diag);
  return nodes;
}

Prediction DiskcdModel::predict_record(Tape& t, const std::vector<Tape::Val>& bound,
                                       const NodeEmbeddings& nodes, int32_t student,
                                       int32_t exercise) const {
  const std::vector<int32_t>& qrow = ds_->q.concepts_of[static_cast<size_t>(exercise)];
  return head_.predict(t, bound, nodes.students[static_cast<size_t>(student)],
                       nodes.exercises[static_cast<size_t>(exercise)], qrow);
}

std::optional<Tensor> DiskcdModel::mastery_matrix() const {
  if (!head_.exports_mastery()) return std::nullopt;
  Tape t;
  std::vector<Tape::Val> bound = state_.bind(t, false);
  NodeEmbeddings nodes = forward_nodes(t, bound);
  int64_t S = ds_->n_students();
  int64_t K = ds_->q.n_concepts();
  Tensor out = Tensor::zeros({S, K});
  for (int64_t s = 0; s < S; ++s) {
    Tape::Val m = head_.mastery_vector(t, bound, nodes.students[static_cast<size_t>(s)]);
    const Tensor& mv = t.value(m);
    for (int64_t k = 0; k < K; ++k) out.at(s, k) = mv.at(k);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Full pipeline
// ---------------------------------------------------------------------------

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  auto t0 = std::chrono::steady_clock::now();
  cfg.validate();
  if (cfg.data_dir.empty()) fail(Err::InvalidConfig, "data_dir is required");

  Dataset ds = run_stage("load", [&] { return load_dataset(cfg.data_dir); });

  ConceptPartition partition = run_stage("partition", [&] {
    if (ds.has_exam) return ds.partition;
    return simulate_partition(ds.q, cfg.untested_fraction, cfg.seed);
  });

  SplitResult split = run_stage("split", [&] { return ukc_split(ds.responses, ds.q, partition); });

  std::vector<ResponseRecord> train_records = split.train;
  std::vector<ResponseRecord> holdout;
  if (cfg.tkc_holdout_fraction > 0.0) {
    run_stage("split", [&] {
      Rng rng(named_seed(cfg.seed, "tkc.holdout"));
      rng.shuffle(train_records);
      int64_t n_hold = static_cast<int64_t>(cfg.tkc_holdout_fraction *
                                            static_cast<double>(train_records.size()));
      if (n_hold >= 1 && n_hold < static_cast<int64_t>(train_records.size())) {
        holdout.assign(train_records.begin(), train_records.begin() + n_hold);
        train_records.erase(train_records.begin(), train_records.begin() + n_hold);
      } else {
        warn("tkc_holdout_fraction leaves no usable holdout; skipping the held-out split");
      }
      return 0;
    });
  }
  if (train_records.empty())
    fail(Err::EmptyTrainSet, "stage split: every record moved to an evaluation split");

  // The graph is built from the whole log's attempt incidence — scores never
  // enter it, so evaluation labels stay held out while evaluation exercises
  // keep their student edges.
  Dataset graph_view = ds;
  graph_view.partition = partition;
  HeteroGraph graph = run_stage("graph", [&] { return build_hetero_graph(graph_view); });

  ExternalVectors exercise_vecs, concept_vecs;
  bool have_ev = false, have_kv = false;
  if (cfg.offline) {
    run_stage("load", [&] {
      fs::path ev = fs::path(cfg.data_dir) / "vectors_exercise.csv";
      fs::path kv = fs::path(cfg.data_dir) / "vectors_concept.csv";
      if (fs::exists(ev)) {
        exercise_vecs = load_external_vectors(ev.string(), -1);
        have_ev = true;
      }
      if (fs::exists(kv)) {
        concept_vecs = load_external_vectors(kv.string(), -1);
        have_kv = true;
      }
      return 0;
    });
  }

  DiskcdModel model(graph_view, graph, cfg, have_ev ? &exercise_vecs : nullptr,
                    have_kv ? &concept_vecs : nullptr);

  ExperimentResult r;
  r.training = run_stage("train", [&] { return train_model(model, train_records, cfg); });

  r.train_metrics = run_stage("evaluate", [&] { return evaluate_model(model, train_records); });
  r.ukc_test = run_stage("evaluate", [&] { return evaluate_model(model, split.test); });
  if (!holdout.empty())
    r.tkc_holdout = run_stage("evaluate", [&] { return evaluate_model(model, holdout); });

  std::optional<Tensor> mastery = model.mastery_matrix();
  if (mastery) {
    r.doa_defined = true;
    r.doa_test = run_stage("doa", [&] { return doa(*mastery, split.test, ds); });
  }

  auto t1 = std::chrono::steady_clock::now();
  r.wall_clock_seconds = std::chrono::duration<double>(t1 - t0).count();

  ordered_json report;
  report["schema_version"] = 1;
  report["config"] = config_json(cfg);
  {
    ordered_json d;
    d["students"] = ds.n_students();
    d["exercises"] = ds.q.n_exercises();
    d["concepts"] = ds.q.n_concepts();
    d["tested_concepts"] = partition.tested_count();
    d["untested_concepts"] = partition.untested_count();
    d["partition_source"] = ds.has_exam ? "exam" : "simulated";
    ordered_json names = ordered_json::array();
    for (int64_t k = 0; k < ds.q.n_concepts(); ++k)
      if (partition.is_untested(static_cast<int32_t>(k)))
        names.push_back(ds.q.concepts[static_cast<size_t>(k)]);
    d["untested"] = std::move(names);
    d["responses"] = static_cast<int64_t>(ds.responses.size());
    d["train_records"] = static_cast<int64_t>(train_records.size());
    d["test_records"] = static_cast<int64_t>(split.test.size());
    d["holdout_records"] = static_cast<int64_t>(holdout.size());
    report["data"] = std::move(d);
  }
  {
    ordered_json res;
    ordered_json tr;
    tr["epoch_losses"] = r.training.epoch_losses;
    tr["val_aucs"] = r.training.val_aucs;
    tr["best_epoch"] = r.training.best_epoch;
    res["training"] = std::move(tr);
    ordered_json mets;
    mets["train"] = metrics_json(r.train_metrics);
    mets["ukc_test"] = metrics_json(r.ukc_test);
    if (r.tkc_holdout)
      mets["tkc_holdout"] = metrics_json(*r.tkc_holdout);
    else
      mets["tkc_holdout"] = nullptr;
    res["metrics"] = std::move(mets);
    ordered_json dj;
    dj["defined"] = r.doa_defined && r.doa_test.defined_count > 0;
    if (r.doa_defined) {
      dj["mean"] = r.doa_test.defined_count > 0 ? ordered_json(r.doa_test.mean) : ordered_json(nullptr);
      dj["defined_count"] = r.doa_test.defined_count;
      ordered_json per;
      for (size_t k = 0; k < r.doa_test.per_concept.size(); ++k)
        if (r.doa_test.defined[k]) per[ds.q.concepts[k]] = r.doa_test.per_concept[k];
      dj["per_concept"] = std::move(per);
    } else {
      dj["mean"] = nullptr;
      dj["defined_count"] = 0;
      dj["per_concept"] = ordered_json::object();
    }
    res["doa"] = std::move(dj);
    ordered_json tex = ordered_json::array();
    for (const auto& [exercise, ukcs] : split.test_exercise_ukcs) {
      ordered_json row;
      row["exercise"] = exercise;
      row["untested"] = ukcs;
      tex.push_back(std::move(row));
    }
    res["test_exercises"] = std::move(tex);
    report["results"] = std::move(res);
  }
  report["wall_clock_seconds"] = r.wall_clock_seconds;
  r.report_json = report.dump(2) + "\n";

  if (!cfg.out_dir.empty()) {
    run_stage("report", [&] {
      fs::create_directories(cfg.out_dir);
      fs::path base(cfg.out_dir);
      write_text(base / "report.json", r.report_json);
      write_text(base / "plot.csv", plot_csv(r, cfg));
      if (mastery) {
        std::string csv = "student";
        for (const std::string& c : ds.q.concepts) csv += "," + c;
        csv += "\n";
        for (int64_t s = 0; s < ds.n_students(); ++s) {
          csv += ds.students[static_cast<size_t>(s)];
          for (int64_t k = 0; k < ds.q.n_concepts(); ++k)
            csv += "," + fmt_g(mastery->at(s, k));
          csv += "\n";
        }
        write_text(base / "mastery.csv", csv);
      }
      save_checkpoint((base / "model.ckpt").string(),
                      model.state().to_checkpoint(config_json(cfg).dump()));
      return 0;
    });
  }
  return r;
}

std::string plot_csv(const ExperimentResult& r, const ExperimentConfig& cfg) {
  // One row per (split, metric) pairing the value with the test-split DOA
  // mean, so each row is directly a metric-vs-DOA point.
  std::string out = "label,head,variant,split,metric,value,doa_mean\n";
  std::string doa_mean =
      (r.doa_defined && r.doa_test.defined_count > 0) ? fmt_g(r.doa_test.mean) : "";
  auto rows = [&](const char* split, const Metrics& m) {
    std::string prefix = cfg.label + "," + head_kind_name(cfg.head) + "," +
                         (cfg.hetero_enabled && cfg.layers > 0 ? "diskcd" : "wo-hrl") + "," + split;
    out += prefix + ",acc," + fmt_g(m.acc) + "," + doa_mean + "\n";
    out += prefix + ",rmse," + fmt_g(m.rmse) + "," + doa_mean + "\n";
    out += prefix + ",auc," + (m.auc_defined ? fmt_g(m.auc) : "") + "," + doa_mean + "\n";
  };
  rows("train", r.train_metrics);
  rows("ukc_test", r.ukc_test);
  if (r.tkc_holdout) rows("tkc_holdout", *r.tkc_holdout);
  return out;
}

}  // namespace diskcd
