#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "diskcd/checkpoint.hpp"
#include "diskcd/corpus.hpp"
#include "diskcd/diagnosis.hpp"
#include "diskcd/embedding.hpp"
#include "diskcd/graph.hpp"
#include "diskcd/hetero_layer.hpp"
#include "diskcd/model.hpp"

namespace diskcd {

// ---------------------------------------------------------------------------
// Experiment configuration
// ---------------------------------------------------------------------------

struct ExperimentConfig {
  std::string label = "diskcd";
  std::string data_dir;
  std::string out_dir;

  // offline mode feeds student embeddings from grades and, when vector files
  // are present, exercise/concept embeddings from external vectors
  bool offline = false;
  int64_t grade_hidden = 0;

  HeadKind head = HeadKind::NeuralCd;
  int64_t d_k = 0;  // 0: concept count
  int64_t mirt_dim = 5;

  bool hetero_enabled = true;  // false: the w/o-HRL ablation
  int64_t layers = 2;
  double leaky_slope = 0.01;
  bool per_relation_proj = false;
  bool normalize_across_relations = false;
  bool fusion_softmax = false;

  double lr = 0.001;
  int64_t batch = 8;
  int64_t epochs = 20;
  double validation_fraction = 0.1;  // 0 disables best-checkpoint selection
  double tkc_holdout_fraction = 0.0; // carve a tested-side eval split from train
  uint64_t seed = 1;
  double untested_fraction = 0.25;  // simulated designation when no exam file

  void validate() const;  // InvalidConfig on out-of-range fields
};

// ---------------------------------------------------------------------------
// Splits
// ---------------------------------------------------------------------------

struct SplitResult {
  std::vector<ResponseRecord> train;
  std::vector<ResponseRecord> test;
  // test exercise -> the untested concepts that sent it to the test side
  std::vector<std::pair<std::string, std::vector<std::string>>> test_exercise_ukcs;
};

// A record tests iff its exercise covers at least one untested concept; any
// untested involvement means the record could not have existed at exam time.
SplitResult ukc_split(const std::vector<ResponseRecord>& responses, const QMatrix& q,
                      const ConceptPartition& partition);

// Seeded designation for datasets without an exam file: ceil(fraction * K)
// concepts become untested, resampling (up to 100 draws) until at least one
// exercise stays purely tested.
ConceptPartition simulate_partition(const QMatrix& q, double untested_fraction, uint64_t seed);

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

struct Metrics {
  int64_t n = 0;
  double acc = 0.0;
  double rmse = 0.0;
  double auc = 0.0;
  bool auc_defined = false;
};

// Threshold-0.5 accuracy, RMSE, and rank-statistic AUC with tie-averaged
// ranks; AUC is undefined when only one class is present.
Metrics evaluate_predictions(const std::vector<double>& preds, const std::vector<double>& labels);

struct DoaResult {
  std::vector<double> per_concept;  // meaningful where defined[k]
  std::vector<uint8_t> defined;
  double mean = 0.0;  // over defined concepts only
  int64_t defined_count = 0;
};

// Degree of agreement between mastery orderings and pairwise response
// outcomes. For each concept: over ordered student pairs with strictly
// greater mastery, the fraction of commonly-answered covering exercises where
// the higher-mastery student scored strictly better; pairs with no common
// covering exercise contribute zero. Concepts with no strict mastery order or
// no contributing pair are flagged undefined.
DoaResult doa(const Tensor& mastery, const std::vector<ResponseRecord>& records,
              const Dataset& ds);

// ---------------------------------------------------------------------------
// Model bundle
// ---------------------------------------------------------------------------

// Everything trainable for one experiment: parameter store, embedding
// builder, optional relation-propagation stack, and the diagnosis head.
// The propagation stack exists only when enabled with layers >= 1, so a
// zero-layer configuration is parameter-identical to the disabled ablation.
class DiskcdModel {
 public:
  DiskcdModel(const Dataset& ds, const HeteroGraph& graph, const ExperimentConfig& cfg,
              const ExternalVectors* exercise_vecs = nullptr,
              const ExternalVectors* concept_vecs = nullptr);

  ModelState& state() { return state_; }
  const ModelState& state() const { return state_; }
  const DiagnosisHead& head() const { return head_; }
  const Dataset* dataset() const { return ds_; }
  int64_t d_k() const { return embedding_.d_k(); }
  bool propagates() const { return hrl_.has_value(); }

  // Embeddings for every node, propagated when the relation stack is on.
  NodeEmbeddings forward_nodes(Tape& t, const std::vector<Tape::Val>& bound,
                               PropagateDiagnostics* diag = nullptr) const;

  Prediction predict_record(Tape& t, const std::vector<Tape::Val>& bound,
                            const NodeEmbeddings& nodes, int32_t student,
                            int32_t exercise) const;

  // Dense student-by-concept mastery snapshot under the current parameters;
  // empty optional for heads without concept-aligned mastery.
  std::optional<Tensor> mastery_matrix() const;

 private:
  const Dataset* ds_;
  const HeteroGraph* graph_;
  ModelState state_;
  EmbeddingBuilder embedding_;
  std::optional<HrlModule> hrl_;
  DiagnosisHead head_;
};

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct TrainResult {
  std::vector<double> epoch_losses;  // mean per-record train loss
  std::vector<double> val_aucs;      // empty when validation is off
  int64_t best_epoch = -1;           // 1-based; -1 when validation is off
};

// Seeded minibatch training: per-epoch shuffle, batch-mean loss, Adam step,
// monotonicity clip after every step. With validation enabled the parameters
// are restored to the epoch with the best validation AUC.
TrainResult train_model(DiskcdModel& model, const std::vector<ResponseRecord>& records,
                        const ExperimentConfig& cfg);

// Forward the whole graph once and score the given records.
Metrics evaluate_model(const DiskcdModel& model, const std::vector<ResponseRecord>& records);

// ---------------------------------------------------------------------------
// Full pipeline
// ---------------------------------------------------------------------------

struct ExperimentResult {
  std::string report_json;  // serialized report (schema_version inside)
  Metrics train_metrics;
  Metrics ukc_test;
  std::optional<Metrics> tkc_holdout;
  DoaResult doa_test;
  bool doa_defined = false;  // head exports mastery at all
  TrainResult training;
  double wall_clock_seconds = 0.0;
};

// load -> partition -> split -> graph(train records) -> model -> train ->
// evaluate -> doa -> artifacts. Writes report.json, plot.csv, mastery.csv
// (when defined), and model.ckpt under cfg.out_dir unless out_dir is empty.
ExperimentResult run_experiment(const ExperimentConfig& cfg);

// One plot row per split, mirroring the report's metric/DOA pairing.
std::string plot_csv(const ExperimentResult& r, const ExperimentConfig& cfg);

}  // namespace diskcd
