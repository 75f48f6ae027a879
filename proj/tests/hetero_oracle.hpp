#pragma once

// Independent reference for hetero-layer propagation, written directly from
// the update rules in plain double arithmetic: project every node, score each
// relation-typed neighborhood with the full concatenated affine form, softmax
// within the relation, sum weighted projections across relations, then apply
// the entity-specific residual/fusion rule. No tape machinery is reused; the
// unit suite and the acceptance checks share this one oracle.

#include <cmath>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "diskcd/embedding.hpp"
#include "diskcd/graph.hpp"
#include "diskcd/hetero_layer.hpp"
#include "diskcd/model.hpp"
#include "diskcd/tape.hpp"
#include "diskcd/tensor.hpp"

namespace heteroracle {

using namespace diskcd;

using Vec = std::vector<double>;
using Mat = std::vector<Vec>;

inline Vec matvec(const Mat& w, const Vec& x) {
  Vec y(w.size(), 0.0);
  for (size_t i = 0; i < w.size(); ++i)
    for (size_t j = 0; j < x.size(); ++j) y[i] += w[i][j] * x[j];
  return y;
}

inline double dotv(const Vec& a, const Vec& b) {
  double acc = 0.0;
  for (size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

inline Vec softmax_v(const Vec& z) {
  double m = z[0];
  for (double x : z) m = std::max(m, x);
  Vec e(z.size());
  double sum = 0.0;
  for (size_t i = 0; i < z.size(); ++i) {
    e[i] = std::exp(z[i] - m);
    sum += e[i];
  }
  for (double& x : e) x /= sum;
  return e;
}

inline double leaky_v(double x, double slope) { return x >= 0.0 ? x : slope * x; }
inline double sigmoid_v(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline Vec concat_v(const Vec& a, const Vec& b) {
  Vec out = a;
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

inline Mat to_mat(const Tensor& t) {
  Mat m(static_cast<size_t>(t.rows()), Vec(static_cast<size_t>(t.cols())));
  for (int64_t i = 0; i < t.rows(); ++i)
    for (int64_t j = 0; j < t.cols(); ++j)
      m[static_cast<size_t>(i)][static_cast<size_t>(j)] = t.at(i, j);
  return m;
}

inline Vec to_vec(const Tensor& t) { return t.data; }

struct OracleScorer {
  Vec w;
  double b = 0.0;
};

struct OracleParams {
  double slope = 0.01;
  std::map<std::pair<Subgraph, EdgeRel>, OracleScorer> att;
  std::map<std::string, OracleScorer> fuse;  // keyed "entity.subgraph"

  static OracleParams from_state(const ModelState& st, double slope) {
    OracleParams p;
    p.slope = slope;
    auto scorer = [&](const std::string& base) {
      OracleScorer s;
      s.w = to_vec(st.find(base + ".w")->value);
      s.b = st.find(base + ".b")->value.at(0);
      return s;
    };
    const std::pair<Subgraph, EdgeRel> slots[8] = {
        {Subgraph::SE, EdgeRel::Attempt},      {Subgraph::EK, EdgeRel::Correlation},
        {Subgraph::KK, EdgeRel::Prerequisite}, {Subgraph::KK, EdgeRel::Similarity},
        {Subgraph::KU, EdgeRel::Prerequisite}, {Subgraph::KU, EdgeRel::Similarity},
        {Subgraph::UU, EdgeRel::Prerequisite}, {Subgraph::UU, EdgeRel::Similarity}};
    for (auto [sg, rel] : slots)
      p.att[{sg, rel}] = scorer(std::string("hrl.att.") + subgraph_name(sg) + "." + edge_rel_name(rel));
    for (const char* name : {"exercise.se", "exercise.ek", "tkc.ek", "tkc.kk", "tkc.ku",
                             "ukc.ku", "ukc.uu"})
      p.fuse[name] = scorer(std::string("hrl.fuse.") + name);
    return p;
  }
};

// Flat node states for the oracle, same dense numbering as the graph.
struct OracleState {
  std::vector<Vec> x;

  static OracleState capture(const Tape& t, const HeteroGraph& g, const NodeEmbeddings& emb) {
    OracleState s;
    s.x.resize(static_cast<size_t>(g.total_nodes()));
    for (int32_t i = 0; i < g.n_students(); ++i)
      s.x[static_cast<size_t>(g.flat_index(student_node(i)))] = to_vec(t.value(emb.students[static_cast<size_t>(i)]));
    for (int32_t i = 0; i < g.n_exercises(); ++i)
      s.x[static_cast<size_t>(g.flat_index(exercise_node(i)))] = to_vec(t.value(emb.exercises[static_cast<size_t>(i)]));
    for (int32_t i = 0; i < g.n_concepts(); ++i)
      s.x[static_cast<size_t>(g.flat_index(g.concept_node(i)))] = to_vec(t.value(emb.concepts[static_cast<size_t>(i)]));
    return s;
  }
};

inline std::vector<EdgeRel> oracle_rels(Subgraph sg) {
  if (sg == Subgraph::SE) return {EdgeRel::Attempt};
  if (sg == Subgraph::EK) return {EdgeRel::Correlation};
  return {EdgeRel::Prerequisite, EdgeRel::Similarity};
}

inline OracleState oracle_layer(const OracleState& in, const HeteroGraph& g, const Mat& w,
                         const OracleParams& p) {
  std::vector<Vec> proj(in.x.size());
  for (size_t f = 0; f < in.x.size(); ++f) proj[f] = matvec(w, in.x[f]);

  auto aggregate = [&](NodeRef t, Subgraph sg, bool& present) {
    size_t tf = static_cast<size_t>(g.flat_index(t));
    Vec acc(proj[tf].size(), 0.0);
    present = false;
    for (EdgeRel rel : oracle_rels(sg)) {
      const auto& srcs = g.in_neighbors(t, sg, rel);
      if (srcs.empty()) continue;
      present = true;
      const OracleScorer& sc = p.att.at({sg, rel});
      Vec scores;
      for (const NodeRef& n : srcs) {
        size_t nf = static_cast<size_t>(g.flat_index(n));
        scores.push_back(leaky_v(dotv(sc.w, concat_v(proj[tf], proj[nf])) + sc.b, p.slope));
      }
      Vec alpha = softmax_v(scores);
      for (size_t i = 0; i < srcs.size(); ++i) {
        size_t nf = static_cast<size_t>(g.flat_index(srcs[i]));
        for (size_t j = 0; j < acc.size(); ++j) acc[j] += alpha[i] * proj[nf][j];
      }
    }
    return acc;
  };

  auto mu = [&](const std::string& key, const Vec& anchor, const Vec& agg) {
    const OracleScorer& sc = p.fuse.at(key);
    return sigmoid_v(dotv(sc.w, concat_v(anchor, agg)) + sc.b);
  };

  OracleState out;
  out.x.resize(in.x.size());

  auto fused = [&](NodeRef node, const std::vector<std::pair<std::string, Subgraph>>& terms) {
    size_t f = static_cast<size_t>(g.flat_index(node));
    Vec y = in.x[f];
    for (const auto& [key, sg] : terms) {
      bool present = false;
      Vec agg = aggregate(node, sg, present);
      if (!present) continue;
      double gate = mu(key, in.x[f], agg);
      for (size_t j = 0; j < y.size(); ++j) y[j] += gate * agg[j];
    }
    return y;
  };

  for (int32_t i = 0; i < g.n_students(); ++i) {
    NodeRef node = student_node(i);
    size_t f = static_cast<size_t>(g.flat_index(node));
    bool present = false;
    Vec agg = aggregate(node, Subgraph::SE, present);
    Vec y = in.x[f];
    if (present)
      for (size_t j = 0; j < y.size(); ++j) y[j] += agg[j];
    out.x[f] = y;
  }
  for (int32_t i = 0; i < g.n_exercises(); ++i) {
    NodeRef node = exercise_node(i);
    out.x[static_cast<size_t>(g.flat_index(node))] =
        fused(node, {{"exercise.se", Subgraph::SE}, {"exercise.ek", Subgraph::EK}});
  }
  for (int32_t i = 0; i < g.n_concepts(); ++i) {
    NodeRef node = g.concept_node(i);
    if (node.kind == NodeKind::Tkc)
      out.x[static_cast<size_t>(g.flat_index(node))] = fused(
          node, {{"tkc.ek", Subgraph::EK}, {"tkc.kk", Subgraph::KK}, {"tkc.ku", Subgraph::KU}});
    else
      out.x[static_cast<size_t>(g.flat_index(node))] =
          fused(node, {{"ukc.ku", Subgraph::KU}, {"ukc.uu", Subgraph::UU}});
  }
  return out;
}

inline double max_node_gap(const Tape& t, const HeteroGraph& g, const NodeEmbeddings& emb,
                    const OracleState& want) {
  OracleState got = OracleState::capture(t, g, emb);
  double worst = 0.0;
  for (size_t f = 0; f < want.x.size(); ++f)
    for (size_t j = 0; j < want.x[f].size(); ++j)
      worst = std::max(worst, std::abs(got.x[f][j] - want.x[f][j]));
  return worst;
}

}  // namespace heteroracle
