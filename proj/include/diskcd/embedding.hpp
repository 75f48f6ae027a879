#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "diskcd/corpus.hpp"
#include "diskcd/model.hpp"
#include "diskcd/tape.hpp"

namespace diskcd {

// External entity vectors (e.g. text-encoder output ingested from disk).
struct ExternalVectors {
  std::vector<std::string> ids;
  Tensor values;  // (n, dim)
  std::unordered_map<std::string, int32_t> index;

  int64_t dim() const { return values.ndim() == 2 ? values.cols() : 0; }
  int32_t index_of(const std::string& id) const {
    auto it = index.find(id);
    return it == index.end() ? -1 : it->second;
  }
};

// vectors file: entity_id,v1,...,vd header. Duplicate ids keep the last row
// (warned); expected_dim < 0 accepts whatever width the file carries.
ExternalVectors load_external_vectors(const std::string& path, int64_t expected_dim);

// Per-node embeddings as 1-D tape values of width d_k; concepts cover both
// partition sides in Q-matrix index order.
struct NodeEmbeddings {
  std::vector<Tape::Val> students;
  std::vector<Tape::Val> exercises;
  std::vector<Tape::Val> concepts;
};

struct EmbeddingConfig {
  int64_t d_k = 0;  // 0: use the concept count, per the reference setup
  bool student_from_grades = false;  // offline mode for students (grade z-scores)
  bool exercise_from_vectors = false;
  bool concept_from_vectors = false;
  int64_t grade_hidden = 0;  // optional hidden width for the grade transform
};

// Owns the embedding parameters: identifier tables in online mode, affine
// adapters over fixed inputs in offline mode. Both modes emit width-d_k rows,
// so downstream modules never see the difference.
class EmbeddingBuilder {
 public:
  EmbeddingBuilder(ModelState& state, const Dataset& ds, const EmbeddingConfig& cfg,
                   const ExternalVectors* exercise_vecs = nullptr,
                   const ExternalVectors* concept_vecs = nullptr);

  int64_t d_k() const { return d_k_; }
  NodeEmbeddings build(Tape& t, const std::vector<Tape::Val>& bound) const;

 private:
  int64_t d_k_;
  int64_t n_students_, n_exercises_, n_concepts_;
  EmbeddingConfig cfg_;

  // online tables (-1 when the mode does not use them)
  int32_t student_table_ = -1, exercise_table_ = -1, concept_table_ = -1;
  // offline inputs and adapters
  Tensor student_z_;       // (n_students, C)
  Tensor exercise_input_;  // (n_exercises, dim)
  Tensor concept_input_;   // (n_concepts, dim)
  int32_t grade_w_ = -1, grade_b_ = -1, grade_hw_ = -1, grade_hb_ = -1;
  int32_t exercise_w_ = -1, exercise_b_ = -1;
  int32_t concept_w_ = -1, concept_b_ = -1;
};

}  // namespace diskcd
