#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <vector>

#include "diskcd/embedding.hpp"
#include "diskcd/graph.hpp"
#include "diskcd/model.hpp"
#include "diskcd/tape.hpp"

namespace diskcd {

// Options for the relation-propagation stack. The ablation switches change
// how scores are pooled; the default configuration is the reference model.
struct LayerOptions {
  int64_t layers = 2;
  double leaky_slope = 0.01;
  // One projection per (subgraph, relation) slot instead of one shared
  // projection per layer.
  bool per_relation_proj = false;
  // Pool attention logits across all relations of a subgraph into a single
  // softmax instead of normalizing each relation separately.
  bool normalize_across_relations = false;
  // Replace the independent sigmoid fusion gates with a softmax over the
  // gates of the terms that are present.
  bool fusion_softmax = false;
};

// One attention coefficient, as realized on the tape during propagate().
struct AttentionRecord {
  int64_t layer = 0;
  Subgraph subgraph = Subgraph::SE;
  EdgeRel rel = EdgeRel::Attempt;
  NodeRef target{NodeKind::Student, 0};
  NodeRef source{NodeKind::Student, 0};
  double alpha = 0.0;
};

struct NormRecord {
  int64_t layer = 0;  // 0 = input embeddings, 1..L = after that layer
  NodeRef node{NodeKind::Student, 0};
  double l2 = 0.0;
};

struct PropagateDiagnostics {
  std::vector<AttentionRecord> attention;
  std::vector<NormRecord> norms;
};

// Stack of relation-attention layers over the heterogeneous graph.
//
// Each layer projects every node once, scores graph neighbors with a
// per-relation additive attention head, normalizes the scores with a softmax
// within the relation, and folds the per-subgraph aggregates back into the
// node state through sigmoid-gated residual updates:
//
//   students:  s' = s + agg_SE
//   exercises: e' = e + mu_se * agg_SE + mu_ek * agg_EK
//   tested:    k' = k + mu_ek * agg_EK + mu_kk * agg_KK + mu_ku * agg_KU
//   untested:  u' = u + mu_ku * agg_KU + mu_uu * agg_UU
//
// Terms whose neighborhood is empty are dropped. Attention heads and fusion
// gates are shared across layers; the projection is per layer.
class HrlModule {
 public:
  HrlModule(ModelState& state, int64_t d_k, LayerOptions opts = {});

  const LayerOptions& options() const { return opts_; }
  int64_t d_k() const { return d_k_; }

  // Runs the full stack. `state` must hold one vector of width d_k per node.
  // All nodes advance synchronously: layer l+1 only sees layer-l outputs.
  NodeEmbeddings propagate(Tape& t, const std::vector<Tape::Val>& bound,
                           const HeteroGraph& g, const NodeEmbeddings& state,
                           PropagateDiagnostics* diag = nullptr) const;

  struct Scorer {
    int32_t w = -1;
    int32_t b = -1;
  };
  // Read-only view of the parameter ids handed to the layer workspace.
  struct Internals {
    int64_t d_k;
    const std::vector<int32_t>& proj;
    const std::array<Scorer, 8>& att;
    const std::array<Scorer, 7>& fuse;
  };

 private:
  int64_t d_k_ = 0;
  LayerOptions opts_;
  // Shared mode: one id per layer. Per-relation mode: layer * 8 + slot.
  std::vector<int32_t> proj_;
  std::array<Scorer, 8> att_{};    // one per (subgraph, relation) slot
  std::array<Scorer, 7> fuse_{};   // one per (entity, subgraph) pair
};

void write_attention_csv(const PropagateDiagnostics& diag, const HeteroGraph& g,
                         std::ostream& out);
void write_norms_csv(const PropagateDiagnostics& diag, const HeteroGraph& g,
                     std::ostream& out);

}  // namespace diskcd
