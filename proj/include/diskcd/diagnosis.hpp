#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "diskcd/model.hpp"
#include "diskcd/tape.hpp"

namespace diskcd {

enum class HeadKind { Irt, Mirt, Dina, NeuralCd, RcdStyle };

const char* head_kind_name(HeadKind k);
HeadKind parse_head_kind(const std::string& name);  // InvalidConfig on unknown

struct HeadConfig {
  HeadKind kind = HeadKind::NeuralCd;
  int64_t d_k = 0;        // width of the propagated embeddings
  int64_t n_concepts = 0; // concept-space width for mastery vectors
  int64_t mirt_dim = 5;   // latent trait dimensionality of the MIRT head
};

struct Prediction {
  Tape::Val prob{};     // clamped into [1e-7, 1-1e-7]
  Tape::Val mastery{};  // per-concept mastery, when the head defines one
  bool has_mastery = false;
};

// One cognitive-diagnosis scoring head. Affine transforms map the propagated
// student/exercise vectors into the head's native parameters; the response
// probability follows the head's own model:
//
//   irt       sigmoid(a (theta - b)), discrimination a squashed into (0,1)
//   mirt      sigmoid(a . theta - b) with a 5-dimensional trait vector
//   dina      (1-s) eta + g (1-eta), eta = product of required masteries
//   neuralcd  monotone two-layer net over qrow * (h_s - h_diff) * disc
//   rcd       same interaction form, mastery read straight off the student map
//
// The interaction-network weights of neuralcd/rcd are registered with the
// monotonicity clip, so mastery gains never lower the predicted probability.
class DiagnosisHead {
 public:
  DiagnosisHead(ModelState& state, const HeadConfig& cfg);

  const HeadConfig& config() const { return cfg_; }

  // Per-concept mastery from the student vector alone; invalid Val for mirt
  // (which has no concept-aligned trait).
  bool exports_mastery() const { return cfg_.kind != HeadKind::Mirt; }
  Tape::Val mastery_vector(Tape& t, const std::vector<Tape::Val>& bound, Tape::Val u) const;

  Prediction predict(Tape& t, const std::vector<Tape::Val>& bound, Tape::Val u, Tape::Val v,
                     const std::vector<int32_t>& qrow_concepts) const;

  // neuralcd/rcd only: probability as a function of an explicit mastery
  // vector, the hook for monotonicity checks.
  Tape::Val predict_from_mastery(Tape& t, const std::vector<Tape::Val>& bound, Tape::Val h_s,
                                 Tape::Val v, const std::vector<int32_t>& qrow_concepts) const;

 private:
  Tape::Val affine_vec(Tape& t, const std::vector<Tape::Val>& bound, int32_t w, int32_t b,
                       Tape::Val x) const;
  Tape::Val affine_scalar(Tape& t, const std::vector<Tape::Val>& bound, int32_t w, int32_t b,
                          Tape::Val x) const;
  Tape::Val concept_mask(Tape& t, const std::vector<int32_t>& qrow_concepts) const;

  HeadConfig cfg_;
  int64_t hidden_ = 0;  // interaction-net hidden width
  // parameter ids; unused ones stay -1
  int32_t theta_w_ = -1, theta_b_ = -1;
  int32_t diff_w_ = -1, diff_b_ = -1;
  int32_t disc_w_ = -1, disc_b_ = -1;
  int32_t a_w_ = -1, a_b_ = -1;
  int32_t b_w_ = -1, b_b_ = -1;
  int32_t mastery_w_ = -1, mastery_b_ = -1;
  int32_t slip_w_ = -1, slip_b_ = -1;
  int32_t guess_w_ = -1, guess_b_ = -1;
  int32_t hdiff_w_ = -1, hdiff_b_ = -1;
  int32_t int1_w_ = -1, int1_b_ = -1;
  int32_t int2_w_ = -1, int2_b_ = -1;
};

// Summed binary cross-entropy over a batch of clamped probabilities.
Tape::Val bce_loss(Tape& t, const std::vector<Tape::Val>& preds, const std::vector<double>& labels);

}  // namespace diskcd
