#include "diskcd/diagnosis.hpp"

#include <algorithm>

#include "diskcd/error.hpp"

namespace diskcd {

namespace {
constexpr double kProbLo = 1e-7;
constexpr double kProbHi = 1.0 - 1e-7;
}  // namespace

const char* head_kind_name(HeadKind k) {
  switch (k) {
    case HeadKind::Irt: return "irt";
    case HeadKind::Mirt: return "mirt";
    case HeadKind::Dina: return "dina";
    case HeadKind::NeuralCd: return "neuralcd";
    case HeadKind::RcdStyle: return "rcd";
  }
  return "?";
}

HeadKind parse_head_kind(const std::string& name) {
  for (HeadKind k : {HeadKind::Irt, HeadKind::Mirt, HeadKind::Dina, HeadKind::NeuralCd,
                     HeadKind::RcdStyle})
    if (name == head_kind_name(k)) return k;
  fail(Err::InvalidConfig, "unknown diagnosis head '" + name +
                               "' (expected irt, mirt, dina, neuralcd, or rcd)");
}

DiagnosisHead::DiagnosisHead(ModelState& state, const HeadConfig& cfg) : cfg_(cfg) {
  if (cfg_.d_k < 1) fail(Err::InvalidConfig, "diagnosis head: d_k must be >= 1");
  if (cfg_.n_concepts < 1) fail(Err::InvalidConfig, "diagnosis head: need at least one concept");
  if (cfg_.mirt_dim < 1) fail(Err::InvalidConfig, "diagnosis head: mirt_dim must be >= 1");

  std::string p = std::string("head.") + head_kind_name(cfg_.kind) + ".";
  int64_t d = cfg_.d_k;
  int64_t K = cfg_.n_concepts;

  switch (cfg_.kind) {
    case HeadKind::Irt:
      theta_w_ = state.add_xavier(p + "theta.w", {d});
      theta_b_ = state.add_zeros(p + "theta.b", {1});
      diff_w_ = state.add_xavier(p + "diff.w", {d});
      diff_b_ = state.add_zeros(p + "diff.b", {1});
      disc_w_ = state.add_xavier(p + "disc.w", {d});
      disc_b_ = state.add_zeros(p + "disc.b", {1});
      break;
    case HeadKind::Mirt:
      theta_w_ = state.add_xavier(p + "theta.w", {cfg_.mirt_dim, d});
      theta_b_ = state.add_zeros(p + "theta.b", {cfg_.mirt_dim});
      a_w_ = state.add_xavier(p + "a.w", {cfg_.mirt_dim, d});
      a_b_ = state.add_zeros(p + "a.b", {cfg_.mirt_dim});
      b_w_ = state.add_xavier(p + "b.w", {d});
      b_b_ = state.add_zeros(p + "b.b", {1});
      break;
    case HeadKind::Dina:
      mastery_w_ = state.add_xavier(p + "mastery.w", {K, d});
      mastery_b_ = state.add_zeros(p + "mastery.b", {K});
      slip_w_ = state.add_xavier(p + "slip.w", {d});
      slip_b_ = state.add_zeros(p + "slip.b", {1});
      guess_w_ = state.add_xavier(p + "guess.w", {d});
      guess_b_ = state.add_zeros(p + "guess.b", {1});
      break;
    case HeadKind::NeuralCd:
    case HeadKind::RcdStyle:
      hidden_ = std::max<int64_t>(4, K / 2);
      mastery_w_ = state.add_xavier(p + "hs.w", {K, d});
      mastery_b_ = state.add_zeros(p + "hs.b", {K});
      hdiff_w_ = state.add_xavier(p + "hdiff.w", {K, d});
      hdiff_b_ = state.add_zeros(p + "hdiff.b", {K});
      disc_w_ = state.add_xavier(p + "disc.w", {d});
      disc_b_ = state.add_zeros(p + "disc.b", {1});
      int1_w_ = state.add_xavier(p + "int1.w", {hidden_, K}, /*monotone_clip=*/true);
      int1_b_ = state.add_zeros(p + "int1.b", {hidden_});
      int2_w_ = state.add_xavier(p + "int2.w", {hidden_}, /*monotone_clip=*/true);
      int2_b_ = state.add_zeros(p + "int2.b", {1});
      break;
  }
}

Tape::Val DiagnosisHead::affine_vec(Tape& t, const std::vector<Tape::Val>& bound, int32_t w,
                                    int32_t b, Tape::Val x) const {
  return t.add(t.matmul(bound[static_cast<size_t>(w)], x), bound[static_cast<size_t>(b)]);
}

Tape::Val DiagnosisHead::affine_scalar(Tape& t, const std::vector<Tape::Val>& bound, int32_t w,
                                       int32_t b, Tape::Val x) const {
  return t.add(t.dot(bound[static_cast<size_t>(w)], x), bound[static_cast<size_t>(b)]);
}

Tape::Val DiagnosisHead::concept_mask(Tape& t, const std::vector<int32_t>& qrow_concepts) const {
  Tensor mask = Tensor::zeros({cfg_.n_concepts});
  for (int32_t k : qrow_concepts) {
    if (k < 0 || k >= cfg_.n_concepts)
      fail(Err::UnknownConcept, "concept index " + std::to_string(k) + " outside the mastery space");
    mask.at(k) = 1.0;
  }
  return t.constant(std::move(mask));
}

Tape::Val DiagnosisHead::mastery_vector(Tape& t, const std::vector<Tape::Val>& bound,
                                        Tape::Val u) const {
  switch (cfg_.kind) {
    case HeadKind::Irt: {
      // a single trait: broadcast the squashed ability over every concept
      Tape::Val theta = t.sigmoid(affine_scalar(t, bound, theta_w_, theta_b_, u));
      Tensor ones = Tensor::zeros({cfg_.n_concepts});
      for (double& x : ones.data) x = 1.0;
      return t.scale(t.constant(std::move(ones)), theta);
    }
    case HeadKind::Mirt:
      return {};
    case HeadKind::Dina:
    case HeadKind::NeuralCd:
    case HeadKind::RcdStyle:
      return t.sigmoid(affine_vec(t, bound, mastery_w_, mastery_b_, u));
  }
  return {};
}

Tape::Val DiagnosisHead::predict_from_mastery(Tape& t, const std::vector<Tape::Val>& bound,
                                              Tape::Val h_s, Tape::Val v,
                                              const std::vector<int32_t>& qrow_concepts) const {
  if (cfg_.kind != HeadKind::NeuralCd && cfg_.kind != HeadKind::RcdStyle)
    fail(Err::InvalidConfig, "predict_from_mastery applies to the neuralcd/rcd heads only");
  if (qrow_concepts.empty()) fail(Err::EmptyConceptRow, "exercise covers no concepts");

  Tape::Val h_diff = t.sigmoid(affine_vec(t, bound, hdiff_w_, hdiff_b_, v));
  Tape::Val disc = t.sigmoid(affine_scalar(t, bound, disc_w_, disc_b_, v));
  Tape::Val x = t.scale(t.mul(concept_mask(t, qrow_concepts), t.sub(h_s, h_diff)), disc);
  Tape::Val h1 = t.sigmoid(affine_vec(t, bound, int1_w_, int1_b_, x));
  Tape::Val out = t.sigmoid(affine_scalar(t, bound, int2_w_, int2_b_, h1));
  return t.clamp(out, kProbLo, kProbHi);
}

Prediction DiagnosisHead::predict(Tape& t, const std::vector<Tape::Val>& bound, Tape::Val u,
                                  Tape::Val v, const std::vector<int32_t>& qrow_concepts) const {
  if (qrow_concepts.empty()) fail(Err::EmptyConceptRow, "exercise covers no concepts");

  Prediction out;
  switch (cfg_.kind) {
    case HeadKind::Irt: {
      Tape::Val theta = affine_scalar(t, bound, theta_w_, theta_b_, u);
      Tape::Val b = affine_scalar(t, bound, diff_w_, diff_b_, v);
      Tape::Val a = t.sigmoid(affine_scalar(t, bound, disc_w_, disc_b_, v));
      out.prob = t.clamp(t.sigmoid(t.mul(a, t.sub(theta, b))), kProbLo, kProbHi);
      out.mastery = mastery_vector(t, bound, u);
      out.has_mastery = true;
      break;
    }
    case HeadKind::Mirt: {
      Tape::Val theta = affine_vec(t, bound, theta_w_, theta_b_, u);
      Tape::Val a = affine_vec(t, bound, a_w_, a_b_, v);
      Tape::Val b = affine_scalar(t, bound, b_w_, b_b_, v);
      out.prob = t.clamp(t.sigmoid(t.sub(t.dot(a, theta), b)), kProbLo, kProbHi);
      break;
    }
    case HeadKind::Dina: {
      Tape::Val m = mastery_vector(t, bound, u);
      std::vector<int64_t> picks(qrow_concepts.begin(), qrow_concepts.end());
      Tape::Val eta = t.prod(t.select(m, picks));
      Tape::Val s = t.sigmoid(affine_scalar(t, bound, slip_w_, slip_b_, v));
      Tape::Val g = t.sigmoid(affine_scalar(t, bound, guess_w_, guess_b_, v));
      Tape::Val one = t.constant(Tensor::scalar(1.0));
      Tape::Val hit = t.mul(t.sub(one, s), eta);
      Tape::Val lucky = t.mul(g, t.sub(one, eta));
      out.prob = t.clamp(t.add(hit, lucky), kProbLo, kProbHi);
      out.mastery = m;
      out.has_mastery = true;
      break;
    }
    case HeadKind::NeuralCd:
    case HeadKind::RcdStyle: {
      Tape::Val h_s = mastery_vector(t, bound, u);
      out.prob = predict_from_mastery(t, bound, h_s, v, qrow_concepts);
      out.mastery = h_s;
      out.has_mastery = true;
      break;
    }
  }
  return out;
}

Tape::Val bce_loss(Tape& t, const std::vector<Tape::Val>& preds, const std::vector<double>& labels) {
  if (preds.empty()) fail(Err::EmptyBatch, "loss over an empty batch");
  if (preds.size() != labels.size())
    fail(Err::ShapeMismatch, "loss: " + std::to_string(preds.size()) + " predictions vs " +
                                 std::to_string(labels.size()) + " labels");
  for (double y : labels)
    if (y != 0.0 && y != 1.0) fail(Err::InvalidScore, "loss labels must be 0 or 1");
  return t.bce_sum(t.pack(preds), Tensor::vec(labels));
}

}  // namespace diskcd
