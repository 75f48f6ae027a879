#include "diskcd/graph.hpp"

#include <algorithm>
#include <ostream>

#include "diskcd/error.hpp"
#include "diskcd/log.hpp"

namespace diskcd {

const char* subgraph_name(Subgraph g) {
  switch (g) {
    case Subgraph::SE: return "se";
    case Subgraph::EK: return "ek";
    case Subgraph::KK: return "kk";
    case Subgraph::KU: return "ku";
    case Subgraph::UU: return "uu";
  }
  return "?";
}

const char* edge_rel_name(EdgeRel r) {
  switch (r) {
    case EdgeRel::Attempt: return "attempt";
    case EdgeRel::Correlation: return "correlation";
    case EdgeRel::Prerequisite: return "prerequisite";
    case EdgeRel::Similarity: return "similarity";
  }
  return "?";
}

int HeteroGraph::slot_of(Subgraph g, EdgeRel r) {
  switch (g) {
    case Subgraph::SE: return r == EdgeRel::Attempt ? 0 : -1;
    case Subgraph::EK: return r == EdgeRel::Correlation ? 1 : -1;
    case Subgraph::KK:
      if (r == EdgeRel::Prerequisite) return 2;
      return r == EdgeRel::Similarity ? 3 : -1;
    case Subgraph::KU:
      if (r == EdgeRel::Prerequisite) return 4;
      return r == EdgeRel::Similarity ? 5 : -1;
    case Subgraph::UU:
      if (r == EdgeRel::Prerequisite) return 6;
      return r == EdgeRel::Similarity ? 7 : -1;
  }
  return -1;
}

int64_t HeteroGraph::flat(NodeRef n) const {
  switch (n.kind) {
    case NodeKind::Student: return n.index;
    case NodeKind::Exercise: return n_students() + n.index;
    case NodeKind::Tkc:
    case NodeKind::Ukc: return n_students() + n_exercises() + n.index;
  }
  return -1;
}

void HeteroGraph::check_node(NodeRef n) const {
  int64_t limit = n.kind == NodeKind::Student    ? n_students()
                  : n.kind == NodeKind::Exercise ? n_exercises()
                                                 : n_concepts();
  if (n.index < 0 || n.index >= limit)
    fail(Err::UnknownNode, std::string("node index out of range for ") + std::to_string(n.index));
  if ((n.kind == NodeKind::Tkc || n.kind == NodeKind::Ukc) && concept_kind(n.index) != n.kind)
    fail(Err::UnknownNode, "concept '" + q_->concepts[static_cast<size_t>(n.index)] +
                               "' queried under the wrong partition side");
}

const std::string& HeteroGraph::node_name(NodeRef n) const {
  switch (n.kind) {
    case NodeKind::Student: return (*student_names_)[static_cast<size_t>(n.index)];
    case NodeKind::Exercise: return q_->exercises[static_cast<size_t>(n.index)];
    case NodeKind::Tkc:
    case NodeKind::Ukc: return q_->concepts[static_cast<size_t>(n.index)];
  }
  fail(Err::UnknownNode, "bad node kind");
}

const std::vector<NodeRef>& HeteroGraph::neighbors(NodeRef n, Subgraph g, EdgeRel r) const {
  static const std::vector<NodeRef> empty;
  check_node(n);
  int s = slot_of(g, r);
  if (s < 0) return empty;
  return out_[s][static_cast<size_t>(flat(n))];
}

const std::vector<NodeRef>& HeteroGraph::in_neighbors(NodeRef n, Subgraph g, EdgeRel r) const {
  static const std::vector<NodeRef> empty;
  check_node(n);
  int s = slot_of(g, r);
  if (s < 0) return empty;
  return in_[s][static_cast<size_t>(flat(n))];
}

const std::vector<int32_t>& HeteroGraph::exercise_ukcs(int32_t exercise) const {
  if (exercise < 0 || exercise >= n_exercises())
    fail(Err::UnknownNode, "exercise index out of range: " + std::to_string(exercise));
  return ukcs_of_exercise_[static_cast<size_t>(exercise)];
}

void HeteroGraph::dump_edges(std::ostream& outstream) const {
  const Subgraph graphs[] = {Subgraph::SE, Subgraph::EK, Subgraph::KK, Subgraph::KU, Subgraph::UU};
  const EdgeRel rels[] = {EdgeRel::Attempt, EdgeRel::Correlation, EdgeRel::Prerequisite, EdgeRel::Similarity};
  for (Subgraph g : graphs)
    for (EdgeRel r : rels) {
      int s = slot_of(g, r);
      if (s < 0) continue;
      for (size_t f = 0; f < out_[s].size(); ++f)
        for (const NodeRef& dst : out_[s][f]) {
          // recover the src NodeRef from the flat index
          NodeRef src{NodeKind::Student, 0};
          int64_t fi = static_cast<int64_t>(f);
          if (fi < n_students())
            src = student_node(static_cast<int32_t>(fi));
          else if (fi < n_students() + n_exercises())
            src = exercise_node(static_cast<int32_t>(fi - n_students()));
          else
            src = concept_node(static_cast<int32_t>(fi - n_students() - n_exercises()));
          outstream << subgraph_name(g) << "," << edge_rel_name(r) << "," << node_name(src) << ","
                    << node_name(dst) << "\n";
        }
    }
}

HeteroGraph build_hetero_graph(const Dataset& ds) {
  if (static_cast<int64_t>(ds.partition.untested.size()) != ds.q.n_concepts())
    fail(Err::InconsistentPartition, "partition covers " + std::to_string(ds.partition.untested.size()) +
                                         " concepts, Q-matrix has " + std::to_string(ds.q.n_concepts()));

  HeteroGraph g;
  g.student_names_ = &ds.students;
  g.q_ = &ds.q;
  g.partition_ = ds.partition;
  int64_t total = g.n_students() + g.n_exercises() + g.n_concepts();
  for (int s = 0; s < HeteroGraph::kSlots; ++s) {
    g.out_[s].resize(static_cast<size_t>(total));
    g.in_[s].resize(static_cast<size_t>(total));
  }
  g.ukcs_of_exercise_.resize(static_cast<size_t>(g.n_exercises()));

  auto link = [&](int slot, NodeRef a, NodeRef b) {
    g.out_[slot][static_cast<size_t>(g.flat(a))].push_back(b);
    g.in_[slot][static_cast<size_t>(g.flat(b))].push_back(a);
  };
  auto link_both = [&](int slot, NodeRef a, NodeRef b) {
    link(slot, a, b);
    link(slot, b, a);
  };

  // G_se: bidirectional attempt edges
  for (const auto& r : ds.responses) {
    NodeRef s = student_node(ds.student_id(r.student));
    NodeRef e = exercise_node(ds.q.exercise_id(r.exercise));
    link_both(HeteroGraph::slot_of(Subgraph::SE, EdgeRel::Attempt), s, e);
  }

  // G_ek: exercise-TKC incidences only; untested incidences are kept aside
  for (int32_t e = 0; e < g.n_exercises(); ++e)
    for (int32_t k : ds.q.concepts_of[static_cast<size_t>(e)]) {
      if (ds.partition.is_untested(k)) {
        g.ukcs_of_exercise_[static_cast<size_t>(e)].push_back(k);
        ++g.excluded_ek_;
        continue;
      }
      link_both(HeteroGraph::slot_of(Subgraph::EK, EdgeRel::Correlation), exercise_node(e),
                g.concept_node(k));
    }
  if (g.excluded_ek_ > 0)
    info("excluded " + std::to_string(g.excluded_ek_) +
         " exercise-concept incidence(s) from G_ek (untested side); kept for the evaluation split");

  // concept relations routed by partition membership
  for (const auto& rel : ds.relations) {
    int32_t h = ds.q.concept_id(rel.head);
    int32_t t = ds.q.concept_id(rel.tail);
    bool hu = ds.partition.is_untested(h), tu = ds.partition.is_untested(t);
    Subgraph target = (!hu && !tu) ? Subgraph::KK : (hu && tu) ? Subgraph::UU : Subgraph::KU;
    if (rel.kind == RelationKind::Prerequisite)
      link(HeteroGraph::slot_of(target, EdgeRel::Prerequisite), g.concept_node(h), g.concept_node(t));
    else
      link_both(HeteroGraph::slot_of(target, EdgeRel::Similarity), g.concept_node(h), g.concept_node(t));
  }

  // deterministic neighbor order: sort by identifier
  for (int s = 0; s < HeteroGraph::kSlots; ++s)
    for (auto* lists : {&g.out_[s], &g.in_[s]})
      for (auto& list : *lists)
        std::sort(list.begin(), list.end(),
                  [&](const NodeRef& a, const NodeRef& b) { return g.node_name(a) < g.node_name(b); });

  // a UKC with no concept edges at all cannot receive any propagated signal
  int64_t orphaned = 0;
  for (int32_t k = 0; k < g.n_concepts(); ++k) {
    if (!ds.partition.is_untested(k)) continue;
    NodeRef u = g.concept_node(k);
    size_t degree = 0;
    for (Subgraph sg : {Subgraph::KU, Subgraph::UU})
      for (EdgeRel r : {EdgeRel::Prerequisite, EdgeRel::Similarity})
        degree += g.neighbors(u, sg, r).size() + g.in_neighbors(u, sg, r).size();
    if (degree == 0) ++orphaned;
  }
  if (orphaned > 0)
    warn(std::to_string(orphaned) +
         " untested concept(s) have no concept relations; their embeddings stay at initialization");

  return g;
}

}  // namespace diskcd
