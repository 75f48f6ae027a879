#include "diskcd/hetero_layer.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <string>
#include <utility>

#include "diskcd/error.hpp"

namespace diskcd {

namespace {

struct SlotDef {
  Subgraph sg;
  EdgeRel rel;
  const char* name;
};

constexpr SlotDef kSlotDefs[8] = {
    {Subgraph::SE, EdgeRel::Attempt, "se.attempt"},
    {Subgraph::EK, EdgeRel::Correlation, "ek.correlation"},
    {Subgraph::KK, EdgeRel::Prerequisite, "kk.prerequisite"},
    {Subgraph::KK, EdgeRel::Similarity, "kk.similarity"},
    {Subgraph::KU, EdgeRel::Prerequisite, "ku.prerequisite"},
    {Subgraph::KU, EdgeRel::Similarity, "ku.similarity"},
    {Subgraph::UU, EdgeRel::Prerequisite, "uu.prerequisite"},
    {Subgraph::UU, EdgeRel::Similarity, "uu.similarity"},
};

int slot_index(Subgraph sg, EdgeRel rel) {
  for (int i = 0; i < 8; ++i)
    if (kSlotDefs[i].sg == sg && kSlotDefs[i].rel == rel) return i;
  fail(Err::UnknownNode, "no attention slot for this subgraph/relation pair");
}

// Relations that can occur in each subgraph.
std::vector<EdgeRel> relations_of(Subgraph sg) {
  switch (sg) {
    case Subgraph::SE: return {EdgeRel::Attempt};
    case Subgraph::EK: return {EdgeRel::Correlation};
    default: return {EdgeRel::Prerequisite, EdgeRel::Similarity};
  }
}

// Fusion gate slots, keyed by (updated entity, contributing subgraph).
enum FuseSlot {
  kFuseExSe = 0,
  kFuseExEk = 1,
  kFuseTkcEk = 2,
  kFuseTkcKk = 3,
  kFuseTkcKu = 4,
  kFuseUkcKu = 5,
  kFuseUkcUu = 6,
};

constexpr const char* kFuseNames[7] = {
    "exercise.se", "exercise.ek", "tkc.ek", "tkc.kk", "tkc.ku", "ukc.ku", "ukc.uu",
};

constexpr Subgraph kFuseSubgraph[7] = {
    Subgraph::SE, Subgraph::EK, Subgraph::EK, Subgraph::KK,
    Subgraph::KU, Subgraph::KU, Subgraph::UU,
};

// Per-layer workspace: lazily built projections and scorer partial sums so
// each is put on the tape at most once per layer.
struct LayerCtx {
  Tape& t;
  const std::vector<Tape::Val>& bound;
  const HeteroGraph& g;
  const HrlModule::Internals& m;
  const LayerOptions& opts;
  int64_t layer;
  const std::vector<Tape::Val>& cur;  // flat node states for this layer
  PropagateDiagnostics* diag;

  std::vector<Tape::Val> proj_shared;
  std::vector<std::array<Tape::Val, 8>> proj_rel;
  std::array<Tape::Val, 8> att_wl{};
  std::array<Tape::Val, 8> att_wr{};
  std::array<std::vector<Tape::Val>, 8> s_left;    // dot(wl, proj) + bias, per target
  std::array<std::vector<Tape::Val>, 8> s_right;   // dot(wr, proj), per source

  LayerCtx(Tape& t_, const std::vector<Tape::Val>& bound_, const HeteroGraph& g_,
           const HrlModule::Internals& m_, const LayerOptions& opts_, int64_t layer_,
           const std::vector<Tape::Val>& cur_, PropagateDiagnostics* diag_)
      : t(t_), bound(bound_), g(g_), m(m_), opts(opts_), layer(layer_), cur(cur_),
        diag(diag_) {
    int64_t n = g.total_nodes();
    if (opts.per_relation_proj)
      proj_rel.resize(static_cast<size_t>(n));
    else
      proj_shared.resize(static_cast<size_t>(n));
  }

  Tape::Val proj_param(int slot) const {
    size_t i = opts.per_relation_proj
                   ? static_cast<size_t>(layer * 8 + slot)
                   : static_cast<size_t>(layer);
    return bound[static_cast<size_t>(m.proj[i])];
  }

  Tape::Val proj_of(int slot, int64_t f) {
    Tape::Val& v = opts.per_relation_proj ? proj_rel[static_cast<size_t>(f)][static_cast<size_t>(slot)]
                                          : proj_shared[static_cast<size_t>(f)];
    if (!v.valid()) v = t.matmul(proj_param(slot), cur[static_cast<size_t>(f)]);
    return v;
  }

  void ensure_halves(int slot) {
    if (att_wl[static_cast<size_t>(slot)].valid()) return;
    Tape::Val w = bound[static_cast<size_t>(m.att[static_cast<size_t>(slot)].w)];
    int64_t d = m.d_k;
    std::vector<int64_t> lo(static_cast<size_t>(d)), hi(static_cast<size_t>(d));
    std::iota(lo.begin(), lo.end(), int64_t{0});
    std::iota(hi.begin(), hi.end(), d);
    att_wl[static_cast<size_t>(slot)] = t.select(w, lo);
    att_wr[static_cast<size_t>(slot)] = t.select(w, hi);
  }

  // Target half of the additive score, with the bias folded in.
  Tape::Val score_left(int slot, int64_t f) {
    auto& cache = s_left[static_cast<size_t>(slot)];
    if (cache.empty()) cache.resize(static_cast<size_t>(g.total_nodes()));
    Tape::Val& v = cache[static_cast<size_t>(f)];
    if (!v.valid()) {
      ensure_halves(slot);
      Tape::Val d = t.dot(att_wl[static_cast<size_t>(slot)], proj_of(slot, f));
      v = t.add(d, bound[static_cast<size_t>(m.att[static_cast<size_t>(slot)].b)]);
    }
    return v;
  }

  Tape::Val score_right(int slot, int64_t f) {
    auto& cache = s_right[static_cast<size_t>(slot)];
    if (cache.empty()) cache.resize(static_cast<size_t>(g.total_nodes()));
    Tape::Val& v = cache[static_cast<size_t>(f)];
    if (!v.valid()) {
      ensure_halves(slot);
      v = t.dot(att_wr[static_cast<size_t>(slot)], proj_of(slot, f));
    }
    return v;
  }

  struct Aggregate {
    Tape::Val value{};
    bool present = false;
  };

  // Attention-weighted neighbor aggregate for `target` within one subgraph.
  // Scores are normalized within each relation kind; the weighted projections
  // are then summed across relations. Empty neighborhoods contribute nothing.
  Aggregate relation_attention(NodeRef target, Subgraph sg) {
    int64_t tf = g.flat_index(target);

    struct Group {
      EdgeRel rel;
      int slot;
      const std::vector<NodeRef>* sources;
    };
    std::vector<Group> groups;
    for (EdgeRel rel : relations_of(sg)) {
      const std::vector<NodeRef>& src = g.in_neighbors(target, sg, rel);
      if (!src.empty()) groups.push_back({rel, slot_index(sg, rel), &src});
    }
    if (groups.empty()) return {};

    auto attend = [&](const std::vector<std::pair<int, NodeRef>>& edges,
                      EdgeRel rel_for_diag, bool pooled) -> Tape::Val {
      std::vector<Tape::Val> scores;
      std::vector<Tape::Val> projections;
      scores.reserve(edges.size());
      projections.reserve(edges.size());
      for (const auto& [slot, src] : edges) {
        int64_t sf = g.flat_index(src);
        scores.push_back(t.add(score_left(slot, tf), score_right(slot, sf)));
        projections.push_back(proj_of(slot, sf));
      }
      Tape::Val alpha = t.softmax(t.leaky_relu(t.pack(scores), opts.leaky_slope));
      if (diag) {
        const Tensor& av = t.value(alpha);
        for (size_t i = 0; i < edges.size(); ++i) {
          EdgeRel rel = pooled ? kSlotDefs[edges[i].first].rel : rel_for_diag;
          diag->attention.push_back(
              {layer + 1, sg, rel, target, edges[i].second, av.at(static_cast<int64_t>(i))});
        }
      }
      return t.weighted_sum(alpha, projections);
    };

    if (opts.normalize_across_relations) {
      std::vector<std::pair<int, NodeRef>> edges;
      for (const Group& grp : groups)
        for (const NodeRef& src : *grp.sources) edges.emplace_back(grp.slot, src);
      return {attend(edges, groups.front().rel, /*pooled=*/true), true};
    }

    Tape::Val acc{};
    for (const Group& grp : groups) {
      std::vector<std::pair<int, NodeRef>> edges;
      edges.reserve(grp.sources->size());
      for (const NodeRef& src : *grp.sources) edges.emplace_back(grp.slot, src);
      Tape::Val part = attend(edges, grp.rel, /*pooled=*/false);
      acc = acc.valid() ? t.add(acc, part) : part;
    }
    return {acc, true};
  }

  Tape::Val gate_logit(int fuse_slot, int64_t f, Tape::Val agg) {
    const HrlModule::Scorer& sc = m.fuse[static_cast<size_t>(fuse_slot)];
    Tape::Val pair = t.concat(cur[static_cast<size_t>(f)], agg);
    return t.add(t.dot(bound[static_cast<size_t>(sc.w)], pair),
                 bound[static_cast<size_t>(sc.b)]);
  }

  // anchor + sum of gated subgraph aggregates; terms with empty neighborhoods
  // drop out, and a node with no neighbors anywhere passes through unchanged.
  Tape::Val fused_update(NodeRef node, const std::vector<int>& fuse_slots) {
    int64_t f = g.flat_index(node);
    std::vector<int> slots;
    std::vector<Tape::Val> aggs;
    for (int fs : fuse_slots) {
      Aggregate a = relation_attention(node, kFuseSubgraph[fs]);
      if (a.present) {
        slots.push_back(fs);
        aggs.push_back(a.value);
      }
    }
    if (aggs.empty()) return cur[static_cast<size_t>(f)];

    Tape::Val total{};
    if (opts.fusion_softmax) {
      std::vector<Tape::Val> logits;
      logits.reserve(aggs.size());
      for (size_t i = 0; i < aggs.size(); ++i)
        logits.push_back(gate_logit(slots[i], f, aggs[i]));
      Tape::Val weights = t.softmax(t.pack(logits));
      total = t.weighted_sum(weights, aggs);
    } else {
      for (size_t i = 0; i < aggs.size(); ++i) {
        Tape::Val mu = t.sigmoid(gate_logit(slots[i], f, aggs[i]));
        Tape::Val term = t.scale(aggs[i], mu);
        total = total.valid() ? t.add(total, term) : term;
      }
    }
    return t.add(cur[static_cast<size_t>(f)], total);
  }

  Tape::Val update_node(NodeRef node) {
    switch (node.kind) {
      case NodeKind::Student: {
        Aggregate a = relation_attention(node, Subgraph::SE);
        int64_t f = g.flat_index(node);
        return a.present ? t.add(cur[static_cast<size_t>(f)], a.value)
                         : cur[static_cast<size_t>(f)];
      }
      case NodeKind::Exercise:
        return fused_update(node, {kFuseExSe, kFuseExEk});
      case NodeKind::Tkc:
        return fused_update(node, {kFuseTkcEk, kFuseTkcKk, kFuseTkcKu});
      case NodeKind::Ukc:
        return fused_update(node, {kFuseUkcKu, kFuseUkcUu});
    }
    fail(Err::UnknownNode, "unhandled node kind");
  }
};

double l2_norm(const Tensor& v) {
  double acc = 0.0;
  for (double x : v.data) acc += x * x;
  return std::sqrt(acc);
}

}  // namespace

HrlModule::HrlModule(ModelState& state, int64_t d_k, LayerOptions opts)
    : d_k_(d_k), opts_(std::move(opts)) {
  if (d_k_ <= 0) fail(Err::InvalidConfig, "relation layer: d_k must be positive");
  if (opts_.layers < 0) fail(Err::InvalidConfig, "relation layer: layers must be >= 0");
  if (opts_.leaky_slope < 0.0)
    fail(Err::InvalidConfig, "relation layer: leaky slope must be >= 0");

  for (int64_t l = 0; l < opts_.layers; ++l) {
    if (opts_.per_relation_proj) {
      for (int s = 0; s < 8; ++s)
        proj_.push_back(state.add_xavier(
            "hrl.proj." + std::to_string(l) + "." + kSlotDefs[s].name, {d_k_, d_k_}));
    } else {
      proj_.push_back(state.add_xavier("hrl.proj." + std::to_string(l), {d_k_, d_k_}));
    }
  }
  for (int s = 0; s < 8; ++s) {
    std::string base = std::string("hrl.att.") + kSlotDefs[s].name;
    att_[static_cast<size_t>(s)].w = state.add_xavier(base + ".w", {2 * d_k_});
    att_[static_cast<size_t>(s)].b = state.add_zeros(base + ".b", {1});
  }
  for (int s = 0; s < 7; ++s) {
    std::string base = std::string("hrl.fuse.") + kFuseNames[s];
    fuse_[static_cast<size_t>(s)].w = state.add_xavier(base + ".w", {2 * d_k_});
    fuse_[static_cast<size_t>(s)].b = state.add_zeros(base + ".b", {1});
  }
}

NodeEmbeddings HrlModule::propagate(Tape& t, const std::vector<Tape::Val>& bound,
                                    const HeteroGraph& g, const NodeEmbeddings& state,
                                    PropagateDiagnostics* diag) const {
  int64_t S = g.n_students();
  int64_t E = g.n_exercises();
  int64_t K = g.n_concepts();
  if (static_cast<int64_t>(state.students.size()) != S ||
      static_cast<int64_t>(state.exercises.size()) != E ||
      static_cast<int64_t>(state.concepts.size()) != K)
    fail(Err::ShapeMismatch, "propagate: embedding state does not match the graph");

  std::vector<NodeRef> order;
  order.reserve(static_cast<size_t>(g.total_nodes()));
  for (int32_t i = 0; i < S; ++i) order.push_back(student_node(i));
  for (int32_t i = 0; i < E; ++i) order.push_back(exercise_node(i));
  for (int32_t i = 0; i < K; ++i) order.push_back(g.concept_node(i));

  std::vector<Tape::Val> cur(static_cast<size_t>(g.total_nodes()));
  auto place = [&](NodeRef n, Tape::Val v) {
    const Tensor& tv = t.value(v);
    if (tv.ndim() != 1 || tv.numel() != d_k_)
      fail(Err::ShapeMismatch, "propagate: node embeddings must be vectors of width d_k");
    cur[static_cast<size_t>(g.flat_index(n))] = v;
  };
  for (int32_t i = 0; i < S; ++i) place(student_node(i), state.students[static_cast<size_t>(i)]);
  for (int32_t i = 0; i < E; ++i) place(exercise_node(i), state.exercises[static_cast<size_t>(i)]);
  for (int32_t i = 0; i < K; ++i) place(g.concept_node(i), state.concepts[static_cast<size_t>(i)]);

  auto record_norms = [&](int64_t layer) {
    if (!diag) return;
    for (NodeRef n : order)
      diag->norms.push_back(
          {layer, n, l2_norm(t.value(cur[static_cast<size_t>(g.flat_index(n))]))});
  };
  record_norms(0);

  Internals internals{d_k_, proj_, att_, fuse_};
  for (int64_t l = 0; l < opts_.layers; ++l) {
    LayerCtx ctx(t, bound, g, internals, opts_, l, cur, diag);
    std::vector<Tape::Val> next(cur.size());
    for (NodeRef n : order)
      next[static_cast<size_t>(g.flat_index(n))] = ctx.update_node(n);
    cur = std::move(next);
    record_norms(l + 1);
  }

  NodeEmbeddings out;
  out.students.reserve(static_cast<size_t>(S));
  out.exercises.reserve(static_cast<size_t>(E));
  out.concepts.reserve(static_cast<size_t>(K));
  for (int32_t i = 0; i < S; ++i)
    out.students.push_back(cur[static_cast<size_t>(g.flat_index(student_node(i)))]);
  for (int32_t i = 0; i < E; ++i)
    out.exercises.push_back(cur[static_cast<size_t>(g.flat_index(exercise_node(i)))]);
  for (int32_t i = 0; i < K; ++i)
    out.concepts.push_back(cur[static_cast<size_t>(g.flat_index(g.concept_node(i)))]);
  return out;
}

void write_attention_csv(const PropagateDiagnostics& diag, const HeteroGraph& g,
                         std::ostream& out) {
  out << "layer,subgraph,relation,target,source,alpha\n";
  char buf[40];
  for (const AttentionRecord& r : diag.attention) {
    std::snprintf(buf, sizeof(buf), "%.17g", r.alpha);
    out << r.layer << ',' << subgraph_name(r.subgraph) << ',' << edge_rel_name(r.rel)
        << ',' << g.node_name(r.target) << ',' << g.node_name(r.source) << ',' << buf
        << '\n';
  }
}

void write_norms_csv(const PropagateDiagnostics& diag, const HeteroGraph& g,
                     std::ostream& out) {
  out << "layer,node,l2_norm\n";
  char buf[40];
  for (const NormRecord& r : diag.norms) {
    std::snprintf(buf, sizeof(buf), "%.17g", r.l2);
    out << r.layer << ',' << g.node_name(r.node) << ',' << buf << '\n';
  }
}

}  // namespace diskcd
