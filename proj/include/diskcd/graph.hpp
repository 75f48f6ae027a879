#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "diskcd/corpus.hpp"

namespace diskcd {

enum class NodeKind : uint8_t { Student, Exercise, Tkc, Ukc };

// Typed node handle; the index points into the owning vocabulary (students,
// exercises, or concepts — tested and untested concepts share one index space).
struct NodeRef {
  NodeKind kind;
  int32_t index;

  bool operator==(const NodeRef&) const = default;
};

inline NodeRef student_node(int32_t i) { return {NodeKind::Student, i}; }
inline NodeRef exercise_node(int32_t i) { return {NodeKind::Exercise, i}; }

enum class Subgraph : uint8_t { SE, EK, KK, KU, UU };
enum class EdgeRel : uint8_t { Attempt, Correlation, Prerequisite, Similarity };

const char* subgraph_name(Subgraph g);
const char* edge_rel_name(EdgeRel r);

// The five relation subgraphs over students, exercises, tested concepts
// (TKCs) and untested concepts (UKCs). Attempt and correlation edges are
// bidirectional, similarity is stored in both directions, prerequisite only
// from prerequisite to successor. Immutable once built; neighbor lists are
// sorted by node identifier.
class HeteroGraph {
 public:
  int64_t n_students() const { return static_cast<int64_t>(student_names_->size()); }
  int64_t n_exercises() const { return q_->n_exercises(); }
  int64_t n_concepts() const { return q_->n_concepts(); }

  NodeKind concept_kind(int32_t k) const {
    return partition_.is_untested(k) ? NodeKind::Ukc : NodeKind::Tkc;
  }
  NodeRef concept_node(int32_t k) const { return {concept_kind(k), k}; }

  // Dense node numbering: students, then exercises, then concepts. Stable for
  // a given dataset; handy for per-node caches.
  int64_t flat_index(NodeRef n) const { return flat(n); }
  int64_t total_nodes() const { return n_students() + n_exercises() + n_concepts(); }
  const ConceptPartition& partition() const { return partition_; }
  const std::string& node_name(NodeRef n) const;

  // Stored (outgoing) edges for the node under one subgraph and relation.
  // Queries for a relation the subgraph does not carry return an empty list.
  const std::vector<NodeRef>& neighbors(NodeRef n, Subgraph g, EdgeRel r) const;

  // Sources with an edge pointing at the node; equals neighbors() for the
  // symmetric relations, and reverses prerequisite direction. This is the
  // neighborhood a propagation step aggregates over.
  const std::vector<NodeRef>& in_neighbors(NodeRef n, Subgraph g, EdgeRel r) const;

  // Untested concepts the exercise covers; such incidences never enter G_ek
  // but drive the evaluation split.
  const std::vector<int32_t>& exercise_ukcs(int32_t exercise) const;
  int64_t excluded_exercise_ukc_count() const { return excluded_ek_; }

  // Debug dump of the stored adjacency: subgraph,relation,src,dst per line.
  void dump_edges(std::ostream& out) const;

 private:
  friend HeteroGraph build_hetero_graph(const Dataset& ds);

  static constexpr int kSlots = 8;
  static int slot_of(Subgraph g, EdgeRel r);
  int64_t flat(NodeRef n) const;
  void check_node(NodeRef n) const;

  const std::vector<std::string>* student_names_ = nullptr;
  const QMatrix* q_ = nullptr;
  ConceptPartition partition_;
  std::vector<std::vector<NodeRef>> out_[kSlots];
  std::vector<std::vector<NodeRef>> in_[kSlots];
  std::vector<std::vector<int32_t>> ukcs_of_exercise_;
  int64_t excluded_ek_ = 0;
};

// Routes every relation triple into G_kk, G_ku, or G_uu by the partition
// membership of its endpoints, and wires attempts plus exercise-TKC
// incidences. The dataset outlives the graph (names are referenced, not
// copied).
HeteroGraph build_hetero_graph(const Dataset& ds);

}  // namespace diskcd
