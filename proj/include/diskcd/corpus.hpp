#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "diskcd/tensor.hpp"

namespace diskcd {

struct ResponseRecord {
  std::string student;
  std::string exercise;
  int score = 0;  // exactly 0 or 1
};

enum class RelationKind { Prerequisite, Similarity };

const char* relation_kind_name(RelationKind k);

struct ConceptRelation {
  std::string head;
  std::string tail;
  RelationKind kind = RelationKind::Prerequisite;
};

// Long-form Q-matrix over a shared concept vocabulary. Exercise and concept
// orders follow first appearance in the source.
struct QMatrix {
  std::vector<std::string> exercises;
  std::vector<std::string> concepts;
  std::vector<std::vector<int32_t>> concepts_of;  // per exercise, sorted unique
  std::unordered_map<std::string, int32_t> exercise_index;
  std::unordered_map<std::string, int32_t> concept_index;

  int64_t n_exercises() const { return static_cast<int64_t>(exercises.size()); }
  int64_t n_concepts() const { return static_cast<int64_t>(concepts.size()); }
  int32_t exercise_id(const std::string& name) const;  // throws UnknownExercise
  int32_t concept_id(const std::string& name) const;   // throws UnknownConcept
  std::vector<double> dense_row(int32_t exercise) const;  // 0/1 over all concepts
};

struct ConceptPartition {
  std::vector<uint8_t> untested;  // per concept index, 1 = untested

  bool is_untested(int32_t k) const { return untested[static_cast<size_t>(k)] != 0; }
  int64_t untested_count() const;
  int64_t tested_count() const { return static_cast<int64_t>(untested.size()) - untested_count(); }
};

// Dense student-by-course grade matrix; NaN marks a missing grade.
struct GradeTable {
  std::vector<std::string> students;
  std::vector<std::string> courses;
  std::vector<double> grades;  // row-major, students x courses
  std::unordered_map<std::string, int32_t> student_index;
  std::unordered_map<std::string, int32_t> course_index;

  bool empty() const { return students.empty(); }
  int64_t n_students() const { return static_cast<int64_t>(students.size()); }
  int64_t n_courses() const { return static_cast<int64_t>(courses.size()); }
  double at(int32_t student, int32_t course) const {
    return grades[static_cast<size_t>(student) * courses.size() + static_cast<size_t>(course)];
  }
};

// ---- loaders ------------------------------------------------------------

// responses.csv: student_id,exercise_id,score. Duplicate (student, exercise)
// keeps the last occurrence at the first occurrence's position.
std::vector<ResponseRecord> load_responses(const std::string& path);

// qmatrix.csv: exercise_id,concept_id, one row per incidence.
QMatrix load_qmatrix(const std::string& path);

// relations.csv: head_concept,tail_concept,kind. Unknown concepts are
// rejected with a line number; duplicates (including a reversed similarity
// pair) are dropped with a warning.
std::vector<ConceptRelation> load_relations(const std::string& path, const QMatrix& q);

// grades.csv: student_id,course_id,grade. Duplicate cells keep the last value.
GradeTable load_grades(const std::string& path);

// exam.csv: exercise_id per row; each must exist in the Q-matrix.
std::vector<std::string> load_exam(const std::string& path, const QMatrix& q);

// ---- derived views ------------------------------------------------------

// tested = union of the exam exercises' concepts; untested = the rest.
ConceptPartition partition_concepts(const QMatrix& q, const std::vector<std::string>& exam_exercises);

// Per-course z-scores with the population standard deviation; a zero-variance
// course maps to all-zero (warned), as do missing grades.
Tensor zscore_normalize(const GradeTable& g);  // (n_students, n_courses)

// ---- assembled dataset --------------------------------------------------

struct Dataset {
  QMatrix q;
  std::vector<std::string> students;  // first appearance in responses
  std::unordered_map<std::string, int32_t> student_index;
  std::vector<ResponseRecord> responses;
  std::vector<ConceptRelation> relations;
  std::vector<std::string> exam_exercises;
  bool has_exam = false;
  ConceptPartition partition;  // all-tested when no exam list was given
  GradeTable grades;
  bool has_grades = false;

  int64_t n_students() const { return static_cast<int64_t>(students.size()); }
  int32_t student_id(const std::string& name) const;  // throws UnknownStudent
};

// Validates cross-file references and computes the partition.
Dataset assemble_dataset(std::vector<ResponseRecord> responses, QMatrix q,
                         std::vector<ConceptRelation> relations, GradeTable grades, bool has_grades,
                         std::vector<std::string> exam_exercises, bool has_exam);

// Reads responses.csv, qmatrix.csv, relations.csv and, when present,
// grades.csv and exam.csv from one directory.
Dataset load_dataset(const std::string& dir);

// Normalized grades aligned to the dataset's student order; students absent
// from the grade table get zero rows (counted in one warning).
Tensor aligned_zscores(const Dataset& ds);  // (ds.n_students, n_courses)

// ---- synthetic cohorts --------------------------------------------------

struct SyntheticTruth {
  Tensor mastery;  // (n_students, n_concepts), 0/1, concept columns in k0..kN order
  double slip = 0.0;
  double guess = 0.0;
};

struct SyntheticConfig {
  int64_t n_students = 50;
  int64_t n_exercises = 20;
  int64_t n_concepts = 10;
  double untested_fraction = 0.25;
  double slip = 0.1;
  double guess = 0.1;
  double relation_density = 0.15;  // chance of an extra edge per concept pair
  uint64_t seed = 1;

  // shape of the generative story
  double prereq_coupling = 0.3;  // mastery-probability multiplier per unmastered prerequisite
  double similarity_coupling = 0.5;  // pull toward the realized mastery of similar concepts
  double related_cover = 0.7;    // chance an extra covered concept is drawn from relation neighbors
  double ability_low = 0.1;
  double ability_high = 0.9;
  int64_t min_concepts_per_exercise = 2;
  int64_t max_concepts_per_exercise = 3;
  double mixed_fraction = 0.5;  // chance an exercise covers untested concepts
  double attempt_prob = 1.0;    // chance a student attempts an exercise
  int64_t n_courses = 4;        // historical courses behind grades.csv
  double grade_noise = 5.0;
};

struct SyntheticData {
  std::vector<ResponseRecord> responses;
  QMatrix q;
  std::vector<ConceptRelation> relations;
  GradeTable grades;
  std::vector<std::string> exam_exercises;     // the pure tested-concept exercises
  std::vector<std::string> untested_concepts;  // intended designation
  SyntheticTruth truth;
};

// DINA-style cohort: ability-driven mastery with prerequisite coupling, exam
// exercises covering only tested concepts, responses via slip/guess.
// Bit-reproducible for a fixed seed.
SyntheticData generate_synthetic(const SyntheticConfig& cfg);

// Writes the CSV family (responses, qmatrix, relations, grades, exam), plus
// offline-mode vectors derived from Q-matrix rows and the mastery truth.
void write_synthetic(const SyntheticData& data, const std::string& dir);

}  // namespace diskcd
