#include "diskcd/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "diskcd/error.hpp"
#include "diskcd/log.hpp"
#include "diskcd/rng.hpp"

namespace diskcd {

void ExperimentConfig::validate() const {
  auto bad = [](const std::string& what) { fail(Err::InvalidConfig, what); };
  if (grade_hidden < 0) bad("grade_hidden must be >= 0");
  if (d_k < 0) bad("d_k must be >= 0");
  if (mirt_dim < 1) bad("mirt_dim must be >= 1");
  if (layers < 0) bad("layers must be >= 0");
  if (!(leaky_slope > 0.0) || leaky_slope >= 1.0) bad("leaky_slope must lie in (0, 1)");
  if (!(lr > 0.0)) bad("lr must be > 0");
  if (batch < 1) bad("batch must be >= 1");
  if (epochs < 1) bad("epochs must be >= 1");
  if (validation_fraction < 0.0 || validation_fraction >= 1.0)
    bad("validation_fraction must lie in [0, 1)");
  if (tkc_holdout_fraction < 0.0 || tkc_holdout_fraction >= 1.0)
    bad("tkc_holdout_fraction must lie in [0, 1)");
  if (untested_fraction <= 0.0 || untested_fraction >= 1.0)
    bad("untested_fraction must lie in (0, 1)");
}

// ---------------------------------------------------------------------------
// Splits
// ---------------------------------------------------------------------------

SplitResult ukc_split(const std::vector<ResponseRecord>& responses, const QMatrix& q,
                      const ConceptPartition& partition) {
  if (partition.untested.size() != static_cast<size_t>(q.n_concepts()))
    fail(Err::ShapeMismatch, "partition covers " + std::to_string(partition.untested.size()) +
                                 " concepts, q-matrix has " + std::to_string(q.n_concepts()));
  if (partition.untested_count() == 0)
    warn("no concepts are designated untested; every record stays on the train side");
  if (partition.tested_count() == 0)
    warn("every concept is designated untested; every record moves to the test side");

  std::vector<uint8_t> covers_ukc(static_cast<size_t>(q.n_exercises()), 0);
  for (int32_t e = 0; e < q.n_exercises(); ++e)
    for (int32_t k : q.concepts_of[static_cast<size_t>(e)])
      if (partition.is_untested(k)) covers_ukc[static_cast<size_t>(e)] = 1;

  SplitResult out;
  std::vector<uint8_t> seen_test_exercise(static_cast<size_t>(q.n_exercises()), 0);
  for (const ResponseRecord& r : responses) {
    int32_t e = q.exercise_id(r.exercise);
    if (covers_ukc[static_cast<size_t>(e)]) {
      out.test.push_back(r);
      seen_test_exercise[static_cast<size_t>(e)] = 1;
    } else {
      out.train.push_back(r);
    }
  }
  for (int32_t e = 0; e < q.n_exercises(); ++e) {
    if (!seen_test_exercise[static_cast<size_t>(e)]) continue;
    std::vector<std::string> ukcs;
    for (int32_t k : q.concepts_of[static_cast<size_t>(e)])
      if (partition.is_untested(k)) ukcs.push_back(q.concepts[static_cast<size_t>(k)]);
    out.test_exercise_ukcs.emplace_back(q.exercises[static_cast<size_t>(e)], std::move(ukcs));
  }
  if (out.test.empty())
    fail(Err::NoTestRecords, "no response involves an untested concept; nothing to evaluate");
  return out;
}

ConceptPartition simulate_partition(const QMatrix& q, double untested_fraction, uint64_t seed) {
  if (untested_fraction <= 0.0 || untested_fraction >= 1.0)
    fail(Err::InvalidConfig, "untested_fraction must lie in (0, 1)");
  int64_t n = q.n_concepts();
  if (n < 2) fail(Err::InvalidConfig, "need at least two concepts to designate an untested subset");
  int64_t count = static_cast<int64_t>(std::ceil(untested_fraction * static_cast<double>(n)));
  count = std::clamp<int64_t>(count, 1, n - 1);

  Rng rng(named_seed(seed, "ukc.designation"));
  std::vector<int32_t> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  for (int attempt = 0; attempt < 100; ++attempt) {
    rng.shuffle(order);
    ConceptPartition p;
    p.untested.assign(static_cast<size_t>(n), 0);
    for (int64_t i = 0; i < count; ++i) p.untested[static_cast<size_t>(order[static_cast<size_t>(i)])] = 1;
    bool has_pure = false;
    for (const auto& row : q.concepts_of) {
      bool pure = true;
      for (int32_t k : row)
        if (p.is_untested(k)) { pure = false; break; }
      if (pure && !row.empty()) { has_pure = true; break; }
    }
    if (has_pure) return p;
  }
  fail(Err::InvalidConfig,
       "could not find an untested designation leaving at least one purely-tested exercise "
       "after 100 draws");
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

Metrics evaluate_predictions(const std::vector<double>& preds, const std::vector<double>& labels) {
  if (preds.size() != labels.size())
    fail(Err::ShapeMismatch, "prediction and label counts differ");
  if (preds.empty()) fail(Err::EmptyEvalSet, "no records to evaluate");
  int64_t n = static_cast<int64_t>(preds.size());

  Metrics m;
  m.n = n;
  double sq = 0.0;
  int64_t correct = 0;
  for (int64_t i = 0; i < n; ++i) {
    double p = preds[static_cast<size_t>(i)], y = labels[static_cast<size_t>(i)];
    double d = p - y;
    sq += d * d;
    bool hit = (p >= 0.5) == (y >= 0.5);
    correct += hit ? 1 : 0;
  }
  m.acc = static_cast<double>(correct) / static_cast<double>(n);
  m.rmse = std::sqrt(sq / static_cast<double>(n));

  // Mann-Whitney AUC via tie-averaged ranks of the positive class.
  std::vector<int64_t> idx(static_cast<size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int64_t a, int64_t b) {
    return preds[static_cast<size_t>(a)] < preds[static_cast<size_t>(b)];
  });
  std::vector<double> rank(static_cast<size_t>(n), 0.0);
  int64_t i = 0;
  while (i < n) {
    int64_t j = i;
    while (j + 1 < n && preds[static_cast<size_t>(idx[static_cast<size_t>(j + 1)])] ==
                            preds[static_cast<size_t>(idx[static_cast<size_t>(i)])])
      ++j;
    double avg = 0.5 * static_cast<double>(i + j) + 1.0;  // 1-based average rank
    for (int64_t k = i; k <= j; ++k) rank[static_cast<size_t>(idx[static_cast<size_t>(k)])] = avg;
    i = j + 1;
  }
  int64_t pos = 0;
  double pos_rank_sum = 0.0;
  for (int64_t r = 0; r < n; ++r) {
    if (labels[static_cast<size_t>(r)] >= 0.5) {
      ++pos;
      pos_rank_sum += rank[static_cast<size_t>(r)];
    }
  }
  int64_t neg = n - pos;
  if (pos > 0 && neg > 0) {
    m.auc = (pos_rank_sum - 0.5 * static_cast<double>(pos) * static_cast<double>(pos + 1)) /
            (static_cast<double>(pos) * static_cast<double>(neg));
    m.auc_defined = true;
  }
  return m;
}

DoaResult doa(const Tensor& mastery, const std::vector<ResponseRecord>& records,
              const Dataset& ds) {
  int64_t S = ds.n_students();
  int64_t K = ds.q.n_concepts();
  int64_t E = ds.q.n_exercises();
  if (mastery.shape != std::vector<int64_t>{S, K})
    fail(Err::ShapeMismatch, "mastery matrix must be students x concepts");

  // -1 marks an unanswered exercise; duplicate records keep the last score.
  std::vector<int8_t> resp(static_cast<size_t>(S * E), -1);
  for (const ResponseRecord& r : records) {
    int32_t s = ds.student_id(r.student);
    int32_t e = ds.q.exercise_id(r.exercise);
    resp[static_cast<size_t>(s) * static_cast<size_t>(E) + static_cast<size_t>(e)] =
        static_cast<int8_t>(r.score);
  }
  std::vector<std::vector<int32_t>> covering(static_cast<size_t>(K));
  for (int32_t e = 0; e < E; ++e)
    for (int32_t k : ds.q.concepts_of[static_cast<size_t>(e)])
      covering[static_cast<size_t>(k)].push_back(e);

  DoaResult out;
  out.per_concept.assign(static_cast<size_t>(K), 0.0);
  out.defined.assign(static_cast<size_t>(K), 0);
  double total = 0.0;
  for (int64_t k = 0; k < K; ++k) {
    const std::vector<int32_t>& ex = covering[static_cast<size_t>(k)];
    int64_t ordered_pairs = 0;
    int64_t contributing = 0;
    double sum = 0.0;
    for (int64_t a = 0; a < S; ++a) {
      for (int64_t b = 0; b < S; ++b) {
        if (a == b) continue;
        if (!(mastery.at(a, k) > mastery.at(b, k))) continue;
        ++ordered_pairs;
        int64_t common = 0, concordant = 0;
        for (int32_t e : ex) {
          int8_t ra = resp[static_cast<size_t>(a) * static_cast<size_t>(E) + static_cast<size_t>(e)];
          int8_t rb = resp[static_cast<size_t>(b) * static_cast<size_t>(E) + static_cast<size_t>(e)];
          if (ra < 0 || rb < 0) continue;
          ++common;
          if (ra > rb) ++concordant;
        }
        if (common > 0) {
          ++contributing;
          sum += static_cast<double>(concordant) / static_cast<double>(common);
        }
      }
    }
    if (ordered_pairs > 0 && contributing > 0) {
      out.per_concept[static_cast<size_t>(k)] = sum / static_cast<double>(ordered_pairs);
      out.defined[static_cast<size_t>(k)] = 1;
      total += out.per_concept[static_cast<size_t>(k)];
      ++out.defined_count;
    }
  }
  if (out.defined_count > 0) out.mean = total / static_cast<double>(out.defined_count);
  return out;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

Metrics evaluate_model(const DiskcdModel& model, const std::vector<ResponseRecord>& records) {
  if (records.empty()) fail(Err::EmptyEvalSet, "no records to evaluate");
  Tape t;
  std::vector<Tape::Val> bound = model.state().bind(t, false);
  NodeEmbeddings nodes = model.forward_nodes(t, bound);
  const Dataset& ds = *model.dataset();
  std::vector<double> preds, labels;
  preds.reserve(records.size());
  labels.reserve(records.size());
  for (const ResponseRecord& r : records) {
    int32_t s = ds.student_id(r.student);
    int32_t e = ds.q.exercise_id(r.exercise);
    Prediction p = model.predict_record(t, bound, nodes, s, e);
    preds.push_back(t.value(p.prob).at(0));
    labels.push_back(static_cast<double>(r.score));
  }
  return evaluate_predictions(preds, labels);
}

TrainResult train_model(DiskcdModel& model, const std::vector<ResponseRecord>& records,
                        const ExperimentConfig& cfg) {
  cfg.validate();
  if (records.empty()) fail(Err::EmptyTrainSet, "no training records");

  std::vector<ResponseRecord> pool = records;
  std::vector<ResponseRecord> val;
  if (cfg.validation_fraction > 0.0) {
    Rng split_rng(named_seed(cfg.seed, "validation.split"));
    split_rng.shuffle(pool);
    int64_t n_val = static_cast<int64_t>(cfg.validation_fraction *
                                         static_cast<double>(pool.size()));
    if (n_val >= 1 && n_val < static_cast<int64_t>(pool.size())) {
      val.assign(pool.begin(), pool.begin() + n_val);
      pool.erase(pool.begin(), pool.begin() + n_val);
    }
  }
  if (pool.empty()) fail(Err::EmptyTrainSet, "validation split consumed every record");

  const Dataset& ds = *model.dataset();
  AdamConfig adam;
  adam.lr = cfg.lr;

  TrainResult out;
  Checkpoint best;
  double best_auc = -1.0;
  Rng shuffle_rng(named_seed(cfg.seed, "train.shuffle"));
  for (int64_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(pool);
    double loss_sum = 0.0;
    int64_t seen = 0;
    for (size_t start = 0; start < pool.size(); start += static_cast<size_t>(cfg.batch)) {
      size_t stop = std::min(pool.size(), start + static_cast<size_t>(cfg.batch));
      Tape t;
      std::vector<Tape::Val> bound = model.state().bind(t, true);
      NodeEmbeddings nodes = model.forward_nodes(t, bound);
      std::vector<Tape::Val> preds;
      std::vector<double> labels;
      preds.reserve(stop - start);
      labels.reserve(stop - start);
      for (size_t i = start; i < stop; ++i) {
        const ResponseRecord& r = pool[i];
        int32_t s = ds.student_id(r.student);
        int32_t e = ds.q.exercise_id(r.exercise);
        preds.push_back(model.predict_record(t, bound, nodes, s, e).prob);
        labels.push_back(static_cast<double>(r.score));
      }
      Tape::Val sum = bce_loss(t, preds, labels);
      double batch_sum = t.value(sum).at(0);
      if (!std::isfinite(batch_sum))
        fail(Err::DivergedLoss, "non-finite loss at epoch " + std::to_string(epoch));
      loss_sum += batch_sum;
      seen += static_cast<int64_t>(stop - start);
      Tape::Val objective = t.scalar_mul(sum, 1.0 / static_cast<double>(stop - start));
      t.backward(objective);
      model.state().apply_gradients(t, bound, adam);
    }
    out.epoch_losses.push_back(loss_sum / static_cast<double>(seen));
    if (!val.empty()) {
      Metrics vm = evaluate_model(model, val);
      double auc = vm.auc_defined ? vm.auc : 0.5;
      out.val_aucs.push_back(auc);
      if (auc > best_auc) {
        best_auc = auc;
        out.best_epoch = epoch;
        best = model.state().to_checkpoint("{}");
      }
    }
  }
  if (out.best_epoch > 0) model.state().load(best);
  return out;
}

}  // namespace diskcd
