#include <array>
#include <cmath>
#include <map>
#include <tuple>
#include <vector>

#include "diskcd/embedding.hpp"
#include "diskcd/error.hpp"
#include "diskcd/graph.hpp"
#include "diskcd/hetero_layer.hpp"
#include "doctest.h"
#include "hetero_oracle.hpp"
#include "test_util.hpp"

using namespace diskcd;
using testutil::tiny_dataset;
using namespace heteroracle;

namespace {

struct Built {
  Dataset ds;
  HeteroGraph graph;
  ModelState state;
  EmbeddingBuilder emb;
  HrlModule hrl;

  Built(Dataset d, uint64_t seed, LayerOptions opts, int64_t d_k = 0)
      : ds(std::move(d)),
        graph(build_hetero_graph(ds)),
        state(seed),
        emb(state, ds, make_cfg(d_k)),
        hrl(state, emb.d_k(), opts) {}

  static EmbeddingConfig make_cfg(int64_t d_k) {
    EmbeddingConfig cfg;
    cfg.d_k = d_k;
    return cfg;
  }
};

void zero_hrl_params(ModelState& st) {
  for (int32_t i = 0; i < st.count(); ++i) {
    Param& p = st.at(i);
    if (p.name.rfind("hrl.", 0) == 0)
      for (double& x : p.value.data) x = 0.0;
  }
}

}  // namespace

TEST_CASE("single neighbor gets attention weight one") {
  // one student, one exercise, one tested concept
  QMatrix q;
  q.exercises = {"e1"};
  q.exercise_index = {{"e1", 0}};
  q.concepts = {"k1"};
  q.concept_index = {{"k1", 0}};
  q.concepts_of = {{0}};
  Dataset ds = assemble_dataset({{"s1", "e1", 1}}, std::move(q), {}, {}, false, {}, false);

  LayerOptions opts;
  opts.layers = 1;
  Built b(std::move(ds), 17, opts, 3);

  Tape t;
  auto bound = b.state.bind(t);
  NodeEmbeddings in = b.emb.build(t, bound);
  Vec s0 = to_vec(t.value(in.students[0]));
  Mat w = to_mat(b.state.find("hrl.proj.0")->value);
  Vec e0 = to_vec(t.value(in.exercises[0]));

  PropagateDiagnostics diag;
  NodeEmbeddings out = b.hrl.propagate(t, bound, b.graph, in, &diag);

  for (const AttentionRecord& r : diag.attention) CHECK(r.alpha == doctest::Approx(1.0).epsilon(1e-12));

  // student residual: s' = s + W e
  Vec we = matvec(w, e0);
  const Tensor& s1 = t.value(out.students[0]);
  for (size_t j = 0; j < s0.size(); ++j)
    CHECK(s1.at(static_cast<int64_t>(j)) == doctest::Approx(s0[j] + we[j]).epsilon(1e-12));
}

TEST_CASE("identical neighbors share attention equally") {
  QMatrix q;
  q.exercises = {"e1", "e2"};
  q.exercise_index = {{"e1", 0}, {"e2", 1}};
  q.concepts = {"k1"};
  q.concept_index = {{"k1", 0}};
  q.concepts_of = {{0}, {0}};
  Dataset ds =
      assemble_dataset({{"s1", "e1", 1}, {"s1", "e2", 0}}, std::move(q), {}, {}, false, {}, false);

  LayerOptions opts;
  opts.layers = 1;
  Built b(std::move(ds), 23, opts, 3);

  // force the two exercise embeddings identical
  Param* table = b.state.find("emb.exercise");
  for (int64_t j = 0; j < 3; ++j) table->value.at(1, j) = table->value.at(0, j);

  Tape t;
  auto bound = b.state.bind(t);
  NodeEmbeddings in = b.emb.build(t, bound);
  PropagateDiagnostics diag;
  b.hrl.propagate(t, bound, b.graph, in, &diag);

  int seen = 0;
  for (const AttentionRecord& r : diag.attention)
    if (r.target.kind == NodeKind::Student) {
      CHECK(r.alpha == doctest::Approx(0.5).epsilon(1e-12));
      ++seen;
    }
  CHECK(seen == 2);
}

TEST_CASE("propagate matches the literal-equation oracle") {
  LayerOptions opts;
  opts.layers = 1;
  Built b(tiny_dataset(), 31, opts);

  Tape t;
  auto bound = b.state.bind(t);
  NodeEmbeddings in = b.emb.build(t, bound);
  NodeEmbeddings out = b.hrl.propagate(t, bound, b.graph, in);

  OracleParams p = OracleParams::from_state(b.state, opts.leaky_slope);
  OracleState in0 = OracleState::capture(t, b.graph, in);
  OracleState want = oracle_layer(in0, b.graph, to_mat(b.state.find("hrl.proj.0")->value), p);

  CHECK(max_node_gap(t, b.graph, out, want) < 1e-11);
}

TEST_CASE("two layers compose the oracle twice") {
  LayerOptions opts;
  opts.layers = 2;
  Built b(tiny_dataset(), 37, opts);

  Tape t;
  auto bound = b.state.bind(t);
  NodeEmbeddings in = b.emb.build(t, bound);
  NodeEmbeddings out = b.hrl.propagate(t, bound, b.graph, in);

  OracleParams p = OracleParams::from_state(b.state, opts.leaky_slope);
  OracleState s = OracleState::capture(t, b.graph, in);
  s = oracle_layer(s, b.graph, to_mat(b.state.find("hrl.proj.0")->value), p);
  s = oracle_layer(s, b.graph, to_mat(b.state.find("hrl.proj.1")->value), p);

  CHECK(max_node_gap(t, b.graph, out, s) < 1e-10);
}

TEST_CASE("attention normalizes within every relation neighborhood") {
  SyntheticConfig cfg;
  cfg.n_students = 25;
  cfg.n_exercises = 14;
  cfg.n_concepts = 9;
  cfg.seed = 91;
  SyntheticData sd = generate_synthetic(cfg);
  Dataset ds = assemble_dataset(sd.responses, sd.q, sd.relations, sd.grades, true,
                                sd.exam_exercises, true);

  LayerOptions opts;
  opts.layers = 2;
  Built b(std::move(ds), 41, opts);

  Tape t;
  auto bound = b.state.bind(t);
  NodeEmbeddings in = b.emb.build(t, bound);
  PropagateDiagnostics diag;
  b.hrl.propagate(t, bound, b.graph, in, &diag);

  REQUIRE(!diag.attention.empty());
  std::map<std::tuple<int64_t, int, int, int64_t>, double> sums;
  for (const AttentionRecord& r : diag.attention) {
    CHECK(r.alpha >= 0.0);
    CHECK(r.alpha <= 1.0 + 1e-12);
    sums[{r.layer, static_cast<int>(r.subgraph), static_cast<int>(r.rel),
          b.graph.flat_index(r.target)}] += r.alpha;
  }
  for (const auto& [key, sum] : sums) CHECK(std::abs(sum - 1.0) <= 1e-6);
}

TEST_CASE("zeroed parameters make propagate the identity") {
  for (bool fusion_softmax : {false, true}) {
    LayerOptions opts;
    opts.layers = 2;
    opts.fusion_softmax = fusion_softmax;
    Built b(tiny_dataset(), 43, opts);
    zero_hrl_params(b.state);

    Tape t;
    auto bound = b.state.bind(t);
    NodeEmbeddings in = b.emb.build(t, bound);
    NodeEmbeddings out = b.hrl.propagate(t, bound, b.graph, in);

    auto same = [&](const std::vector<Tape::Val>& a, const std::vector<Tape::Val>& bv) {
      for (size_t i = 0; i < a.size(); ++i) {
        const Tensor& x = t.value(a[i]);
        const Tensor& y = t.value(bv[i]);
        for (int64_t j = 0; j < x.numel(); ++j)
          if (x.at(j) != y.at(j)) return false;
      }
      return true;
    };
    CHECK(same(in.students, out.students));
    CHECK(same(in.exercises, out.exercises));
    CHECK(same(in.concepts, out.concepts));
  }
}

TEST_CASE("nodes with empty neighborhoods pass through unchanged") {
  // e2 covers only the untested u1, no student attempted it, and u2 is fully
  // isolated: both must come out of propagate() exactly as they went in.
  QMatrix q;
  q.exercises = {"e1", "e2"};
  q.exercise_index = {{"e1", 0}, {"e2", 1}};
  q.concepts = {"k1", "u1", "u2"};
  q.concept_index = {{"k1", 0}, {"u1", 1}, {"u2", 2}};
  q.concepts_of = {{0}, {1}};
  Dataset ds = assemble_dataset({{"s1", "e1", 1}}, std::move(q),
                                {{"k1", "u1", RelationKind::Prerequisite}}, {}, false, {"e1"}, true);

  LayerOptions opts;
  opts.layers = 2;
  Built b(std::move(ds), 47, opts, 3);

  Tape t;
  auto bound = b.state.bind(t);
  NodeEmbeddings in = b.emb.build(t, bound);
  NodeEmbeddings out = b.hrl.propagate(t, bound, b.graph, in);

  const Tensor& e2_in = t.value(in.exercises[1]);
  const Tensor& e2_out = t.value(out.exercises[1]);
  const Tensor& u2_in = t.value(in.concepts[2]);
  const Tensor& u2_out = t.value(out.concepts[2]);
  for (int64_t j = 0; j < 3; ++j) {
    CHECK(e2_out.at(j) == e2_in.at(j));
    CHECK(u2_out.at(j) == u2_in.at(j));
  }
}

TEST_CASE("layer updates are synchronous") {
  // chain s1 - e1 - k1 with the projection pinned to identity and all scorer
  // weights zeroed: every gate is exactly 0.5 and each aggregate is the raw
  // input embedding of the single neighbor. The concept must therefore move
  // by half of e1's *input* embedding, not of e1's updated one.
  QMatrix q;
  q.exercises = {"e1"};
  q.exercise_index = {{"e1", 0}};
  q.concepts = {"k1"};
  q.concept_index = {{"k1", 0}};
  q.concepts_of = {{0}};
  Dataset ds = assemble_dataset({{"s1", "e1", 1}}, std::move(q), {}, {}, false, {}, false);

  LayerOptions opts;
  opts.layers = 1;
  Built b(std::move(ds), 53, opts, 2);
  zero_hrl_params(b.state);
  Param* w = b.state.find("hrl.proj.0");
  w->value.at(0, 0) = 1.0;
  w->value.at(1, 1) = 1.0;

  Tape t;
  auto bound = b.state.bind(t);
  NodeEmbeddings in = b.emb.build(t, bound);
  NodeEmbeddings out = b.hrl.propagate(t, bound, b.graph, in);

  Vec s_in = to_vec(t.value(in.students[0]));
  Vec e_in = to_vec(t.value(in.exercises[0]));
  Vec k_in = to_vec(t.value(in.concepts[0]));

  const Tensor& k_out = t.value(out.concepts[0]);
  const Tensor& e_out = t.value(out.exercises[0]);
  const Tensor& s_out = t.value(out.students[0]);
  for (int64_t j = 0; j < 2; ++j) {
    CHECK(k_out.at(j) == doctest::Approx(k_in[static_cast<size_t>(j)] +
                                         0.5 * e_in[static_cast<size_t>(j)]).epsilon(1e-12));
    CHECK(e_out.at(j) == doctest::Approx(e_in[static_cast<size_t>(j)] +
                                         0.5 * s_in[static_cast<size_t>(j)] +
                                         0.5 * k_in[static_cast<size_t>(j)]).epsilon(1e-12));
    CHECK(s_out.at(j) == doctest::Approx(s_in[static_cast<size_t>(j)] +
                                         e_in[static_cast<size_t>(j)]).epsilon(1e-12));
  }
}

TEST_CASE("untested concepts receive gradient through the ku path") {
  // u1 is similar to the tested k2; with two layers the chain
  // u1 -> k2 -> e1 reaches a loss on the exercise output, so the untested
  // row of the concept table must pick up a nonzero gradient.
  Dataset ds = tiny_dataset();
  LayerOptions opts;
  opts.layers = 2;
  Built b(std::move(ds), 59, opts);

  Tape t;
  auto bound = b.state.bind(t);
  NodeEmbeddings in = b.emb.build(t, bound);
  NodeEmbeddings out = b.hrl.propagate(t, bound, b.graph, in);

  Tape::Val loss = t.sigmoid(t.sum(out.exercises[0]));
  t.backward(loss);

  const Tensor& g = t.grad(bound[static_cast<size_t>(b.state.id_of("emb.concept"))]);
  int32_t u2 = b.ds.q.concept_id("u2");  // k2 ~ u2 similarity feeds k2's ku term
  double mag = 0.0;
  for (int64_t j = 0; j < g.cols(); ++j) mag += std::abs(g.at(u2, j));
  CHECK(mag > 0.0);
}

TEST_CASE("hetero layer gradients match finite differences") {
  LayerOptions opts;
  opts.layers = 2;
  Built b(tiny_dataset(), 61, opts);

  auto loss_val = [&]() {
    Tape t;
    auto bound = b.state.bind(t);
    NodeEmbeddings in = b.emb.build(t, bound);
    NodeEmbeddings out = b.hrl.propagate(t, bound, b.graph, in);
    Tape::Val acc = t.sigmoid(t.sum(out.students[0]));
    acc = t.add(acc, t.sigmoid(t.sum(out.exercises[1])));
    acc = t.add(acc, t.sigmoid(t.sum(out.concepts[2])));
    return t.value(acc).at(0);
  };

  Tape t;
  auto bound = b.state.bind(t);
  NodeEmbeddings in = b.emb.build(t, bound);
  NodeEmbeddings out = b.hrl.propagate(t, bound, b.graph, in);
  Tape::Val acc = t.sigmoid(t.sum(out.students[0]));
  acc = t.add(acc, t.sigmoid(t.sum(out.exercises[1])));
  acc = t.add(acc, t.sigmoid(t.sum(out.concepts[2])));
  t.backward(acc);

  for (const char* name :
       {"hrl.proj.0", "hrl.proj.1", "hrl.att.se.attempt.w", "hrl.att.ku.similarity.w",
        "hrl.att.kk.prerequisite.b", "hrl.fuse.tkc.ku.w", "hrl.fuse.exercise.se.b",
        "emb.student", "emb.concept"}) {
    const Tensor& analytic = t.grad(bound[static_cast<size_t>(b.state.id_of(name))]);
    Tensor fd = testutil::fd_state_grad(b.state, name, loss_val);
    CHECK_MESSAGE(testutil::max_rel_err(analytic, fd) < 1e-5, name);
  }
}

TEST_CASE("ablation flags rewire scoring as advertised") {
  Dataset ds = tiny_dataset();

  SUBCASE("per-relation projections get their own parameters") {
    LayerOptions opts;
    opts.layers = 1;
    opts.per_relation_proj = true;
    Built b(std::move(ds), 67, opts);
    CHECK(b.state.find("hrl.proj.0.se.attempt") != nullptr);
    CHECK(b.state.find("hrl.proj.0.uu.similarity") != nullptr);
    CHECK(b.state.find("hrl.proj.0") == nullptr);

    Tape t;
    auto bound = b.state.bind(t);
    NodeEmbeddings in = b.emb.build(t, bound);
    NodeEmbeddings out = b.hrl.propagate(t, bound, b.graph, in);
    CHECK(t.value(out.students[0]).numel() == b.emb.d_k());
  }

  SUBCASE("cross-relation normalization pools the softmax per subgraph") {
    LayerOptions opts;
    opts.layers = 1;
    opts.normalize_across_relations = true;
    Built b(std::move(ds), 71, opts);

    Tape t;
    auto bound = b.state.bind(t);
    NodeEmbeddings in = b.emb.build(t, bound);
    PropagateDiagnostics diag;
    b.hrl.propagate(t, bound, b.graph, in, &diag);

    // k2 has kk-prerequisite and ku-similarity neighbors; pooled mode makes
    // them one normalization group
    std::map<std::tuple<int64_t, int, int64_t>, double> sums;
    for (const AttentionRecord& r : diag.attention)
      sums[{r.layer, static_cast<int>(r.subgraph), b.graph.flat_index(r.target)}] += r.alpha;
    for (const auto& [key, sum] : sums) CHECK(std::abs(sum - 1.0) <= 1e-6);
  }

  SUBCASE("fusion softmax keeps outputs finite and well-formed") {
    LayerOptions opts;
    opts.layers = 2;
    opts.fusion_softmax = true;
    Built b(std::move(ds), 73, opts);

    Tape t;
    auto bound = b.state.bind(t);
    NodeEmbeddings in = b.emb.build(t, bound);
    NodeEmbeddings out = b.hrl.propagate(t, bound, b.graph, in);
    for (const auto& v : out.concepts)
      for (int64_t j = 0; j < t.value(v).numel(); ++j) CHECK(std::isfinite(t.value(v).at(j)));
  }
}
