#include "diskcd/embedding.hpp"

#include "diskcd/csv.hpp"
#include "diskcd/error.hpp"
#include "diskcd/log.hpp"

namespace diskcd {

ExternalVectors load_external_vectors(const std::string& path, int64_t expected_dim) {
  Csv csv = read_csv(path);
  if (csv.header.size() < 2 || csv.header[0] != "entity_id")
    fail(Err::MalformedHeader, path + ": header must be entity_id,v1,...,vd");
  for (size_t i = 1; i < csv.header.size(); ++i)
    if (csv.header[i] != "v" + std::to_string(i))
      fail(Err::MalformedHeader, path + ": column " + std::to_string(i + 1) + " must be v" +
                                     std::to_string(i) + ", got '" + csv.header[i] + "'");
  int64_t dim = static_cast<int64_t>(csv.header.size()) - 1;
  if (expected_dim >= 0 && dim != expected_dim)
    fail(Err::DimMismatch, path + ": vectors have " + std::to_string(dim) + " entries, expected " +
                               std::to_string(expected_dim));

  ExternalVectors out;
  std::vector<std::vector<double>> rows;
  int64_t dupes = 0;
  for (size_t r = 0; r < csv.rows.size(); ++r) {
    const auto& row = csv.rows[r];
    std::string where = path + ":" + std::to_string(csv.line_of(r));
    std::vector<double> vec(static_cast<size_t>(dim));
    for (int64_t j = 0; j < dim; ++j) {
      char* end = nullptr;
      vec[static_cast<size_t>(j)] = std::strtod(row[static_cast<size_t>(j) + 1].c_str(), &end);
      if (end == row[static_cast<size_t>(j) + 1].c_str() || *end != '\0')
        fail(Err::MalformedRow, where + ": bad vector entry '" + row[static_cast<size_t>(j) + 1] + "'");
    }
    auto [it, fresh] = out.index.try_emplace(row[0], static_cast<int32_t>(out.ids.size()));
    if (fresh) {
      out.ids.push_back(row[0]);
      rows.push_back(std::move(vec));
    } else {
      rows[static_cast<size_t>(it->second)] = std::move(vec);  // last occurrence wins
      ++dupes;
    }
  }
  if (dupes > 0) warn(path + ": " + std::to_string(dupes) + " duplicate entity id(s), last row kept");

  out.values = Tensor::zeros({static_cast<int64_t>(out.ids.size()), dim});
  for (size_t i = 0; i < rows.size(); ++i)
    for (int64_t j = 0; j < dim; ++j) out.values.at(static_cast<int64_t>(i), j) = rows[i][static_cast<size_t>(j)];
  return out;
}

namespace {

// Stacks the named vectors in entity order; every entity must be covered.
Tensor gather_vectors(const ExternalVectors& vecs, const std::vector<std::string>& names,
                      const char* what) {
  Tensor out = Tensor::zeros({static_cast<int64_t>(names.size()), vecs.dim()});
  for (size_t i = 0; i < names.size(); ++i) {
    int32_t at = vecs.index_of(names[i]);
    if (at < 0) fail(Err::MissingEntity, std::string(what) + " '" + names[i] + "' has no external vector");
    for (int64_t j = 0; j < vecs.dim(); ++j)
      out.at(static_cast<int64_t>(i), j) = vecs.values.at(at, j);
  }
  return out;
}

}  // namespace

EmbeddingBuilder::EmbeddingBuilder(ModelState& state, const Dataset& ds, const EmbeddingConfig& cfg,
                                   const ExternalVectors* exercise_vecs,
                                   const ExternalVectors* concept_vecs)
    : d_k_(cfg.d_k > 0 ? cfg.d_k : ds.q.n_concepts()),
      n_students_(ds.n_students()),
      n_exercises_(ds.q.n_exercises()),
      n_concepts_(ds.q.n_concepts()),
      cfg_(cfg) {
  if (d_k_ < 1) fail(Err::InvalidConfig, "embedding width must be >= 1");
  if (n_students_ < 1 || n_exercises_ < 1 || n_concepts_ < 1)
    fail(Err::InvalidConfig, "embeddings need at least one entity of each kind");

  if (cfg.student_from_grades) {
    student_z_ = aligned_zscores(ds);  // throws when the dataset has no grades
    int64_t c = student_z_.cols();
    if (c < 1) fail(Err::WidthMismatch, "grade table has no courses to transform");
    if (cfg.grade_hidden > 0) {
      grade_hw_ = state.add_xavier("emb.grade.hw", {cfg.grade_hidden, c});
      grade_hb_ = state.add_zeros("emb.grade.hb", {cfg.grade_hidden});
      grade_w_ = state.add_xavier("emb.grade.w", {d_k_, cfg.grade_hidden});
    } else {
      grade_w_ = state.add_xavier("emb.grade.w", {d_k_, c});
    }
    grade_b_ = state.add_zeros("emb.grade.b", {d_k_});
  } else {
    student_table_ = state.add_xavier("emb.student", {n_students_, d_k_});
  }

  if (cfg.exercise_from_vectors) {
    if (!exercise_vecs) fail(Err::InvalidConfig, "exercise vectors requested but none supplied");
    exercise_input_ = gather_vectors(*exercise_vecs, ds.q.exercises, "exercise");
    exercise_w_ = state.add_xavier("emb.exercise.w", {d_k_, exercise_vecs->dim()});
    exercise_b_ = state.add_zeros("emb.exercise.b", {d_k_});
  } else {
    exercise_table_ = state.add_xavier("emb.exercise", {n_exercises_, d_k_});
  }

  if (cfg.concept_from_vectors) {
    if (!concept_vecs) fail(Err::InvalidConfig, "concept vectors requested but none supplied");
    concept_input_ = gather_vectors(*concept_vecs, ds.q.concepts, "concept");
    concept_w_ = state.add_xavier("emb.concept.w", {d_k_, concept_vecs->dim()});
    concept_b_ = state.add_zeros("emb.concept.b", {d_k_});
  } else {
    concept_table_ = state.add_xavier("emb.concept", {n_concepts_, d_k_});
  }
}

NodeEmbeddings EmbeddingBuilder::build(Tape& t, const std::vector<Tape::Val>& bound) const {
  NodeEmbeddings out;

  auto table_rows = [&](int32_t table, int64_t n, std::vector<Tape::Val>& dst) {
    for (int64_t i = 0; i < n; ++i) dst.push_back(t.row(bound[static_cast<size_t>(table)], i));
  };
  auto adapted_rows = [&](const Tensor& input, int32_t w, int32_t b, std::vector<Tape::Val>& dst) {
    Tape::Val in = t.constant(input);
    for (int64_t i = 0; i < input.rows(); ++i) {
      Tape::Val x = t.row(in, i);
      dst.push_back(t.add(t.matmul(bound[static_cast<size_t>(w)], x), bound[static_cast<size_t>(b)]));
    }
  };

  if (student_table_ >= 0) {
    table_rows(student_table_, n_students_, out.students);
  } else if (grade_hw_ >= 0) {
    Tape::Val in = t.constant(student_z_);
    for (int64_t i = 0; i < n_students_; ++i) {
      Tape::Val h = t.sigmoid(t.add(t.matmul(bound[static_cast<size_t>(grade_hw_)], t.row(in, i)),
                                    bound[static_cast<size_t>(grade_hb_)]));
      out.students.push_back(
          t.add(t.matmul(bound[static_cast<size_t>(grade_w_)], h), bound[static_cast<size_t>(grade_b_)]));
    }
  } else {
    adapted_rows(student_z_, grade_w_, grade_b_, out.students);
  }

  if (exercise_table_ >= 0)
    table_rows(exercise_table_, n_exercises_, out.exercises);
  else
    adapted_rows(exercise_input_, exercise_w_, exercise_b_, out.exercises);

  if (concept_table_ >= 0)
    table_rows(concept_table_, n_concepts_, out.concepts);
  else
    adapted_rows(concept_input_, concept_w_, concept_b_, out.concepts);

  return out;
}

}  // namespace diskcd
