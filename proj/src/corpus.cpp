#include "diskcd/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "diskcd/csv.hpp"
#include "diskcd/error.hpp"
#include "diskcd/log.hpp"
#include "diskcd/rng.hpp"

namespace fs = std::filesystem;

namespace diskcd {

namespace {

int parse_binary_score(const std::string& s, const std::string& where) {
  if (s == "0") return 0;
  if (s == "1") return 1;
  fail(Err::InvalidScore, where + ": score must be 0 or 1, got '" + s + "'");
}

double parse_real(const std::string& s, const std::string& where) {
  char* end = nullptr;
  double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0' || !std::isfinite(v))
    fail(Err::MalformedRow, where + ": expected a finite number, got '" + s + "'");
  return v;
}

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void insert_sorted_unique(std::vector<int32_t>& v, int32_t x) {
  auto it = std::lower_bound(v.begin(), v.end(), x);
  if (it == v.end() || *it != x) v.insert(it, x);
}

}  // namespace

const char* relation_kind_name(RelationKind k) {
  return k == RelationKind::Prerequisite ? "prerequisite" : "similarity";
}

int32_t QMatrix::exercise_id(const std::string& name) const {
  auto it = exercise_index.find(name);
  if (it == exercise_index.end()) fail(Err::UnknownExercise, "unknown exercise: " + name);
  return it->second;
}

int32_t QMatrix::concept_id(const std::string& name) const {
  auto it = concept_index.find(name);
  if (it == concept_index.end()) fail(Err::UnknownConcept, "unknown concept: " + name);
  return it->second;
}

std::vector<double> QMatrix::dense_row(int32_t exercise) const {
  if (exercise < 0 || exercise >= n_exercises())
    fail(Err::UnknownExercise, "exercise index out of range: " + std::to_string(exercise));
  std::vector<double> row(static_cast<size_t>(n_concepts()), 0.0);
  for (int32_t c : concepts_of[static_cast<size_t>(exercise)]) row[static_cast<size_t>(c)] = 1.0;
  return row;
}

int64_t ConceptPartition::untested_count() const {
  int64_t n = 0;
  for (uint8_t u : untested) n += u;
  return n;
}

std::vector<ResponseRecord> load_responses(const std::string& path) {
  Csv csv = read_csv(path);
  require_header(csv, {"student_id", "exercise_id", "score"});
  if (csv.rows.empty()) warn(path + ": no response rows (header only)");

  std::vector<ResponseRecord> out;
  std::unordered_map<std::string, size_t> seen;  // "student\x1fexercise" -> position
  for (size_t r = 0; r < csv.rows.size(); ++r) {
    const auto& row = csv.rows[r];
    std::string where = path + ":" + std::to_string(csv.line_of(r));
    int score = parse_binary_score(row[2], where);
    std::string key = row[0] + '\x1f' + row[1];
    auto it = seen.find(key);
    if (it != seen.end()) {
      out[it->second].score = score;  // re-attempt: last occurrence wins
    } else {
      seen.emplace(std::move(key), out.size());
      out.push_back({row[0], row[1], score});
    }
  }
  return out;
}

QMatrix load_qmatrix(const std::string& path) {
  Csv csv = read_csv(path);
  require_header(csv, {"exercise_id", "concept_id"});
  QMatrix q;
  for (const auto& row : csv.rows) {
    auto [eit, enew] = q.exercise_index.try_emplace(row[0], static_cast<int32_t>(q.exercises.size()));
    if (enew) {
      q.exercises.push_back(row[0]);
      q.concepts_of.emplace_back();
    }
    auto [cit, cnew] = q.concept_index.try_emplace(row[1], static_cast<int32_t>(q.concepts.size()));
    if (cnew) q.concepts.push_back(row[1]);
    insert_sorted_unique(q.concepts_of[static_cast<size_t>(eit->second)], cit->second);
  }
  if (q.exercises.empty()) fail(Err::MalformedRow, path + ": Q-matrix has no incidence rows");
  return q;
}

std::vector<ConceptRelation> load_relations(const std::string& path, const QMatrix& q) {
  Csv csv = read_csv(path);
  require_header(csv, {"head_concept", "tail_concept", "kind"});
  std::vector<ConceptRelation> out;
  std::set<std::tuple<int32_t, int32_t, int>> seen;
  int64_t dropped = 0;
  for (size_t r = 0; r < csv.rows.size(); ++r) {
    const auto& row = csv.rows[r];
    std::string where = path + ":" + std::to_string(csv.line_of(r));
    RelationKind kind;
    if (row[2] == "prerequisite")
      kind = RelationKind::Prerequisite;
    else if (row[2] == "similarity")
      kind = RelationKind::Similarity;
    else
      fail(Err::InvalidRelation, where + ": kind must be prerequisite or similarity, got '" + row[2] + "'");
    if (row[0] == row[1])
      fail(Err::InvalidRelation, where + ": self-relation on concept '" + row[0] + "'");
    auto hit = q.concept_index.find(row[0]);
    if (hit == q.concept_index.end()) fail(Err::UnknownConcept, where + ": unknown concept '" + row[0] + "'");
    auto tit = q.concept_index.find(row[1]);
    if (tit == q.concept_index.end()) fail(Err::UnknownConcept, where + ": unknown concept '" + row[1] + "'");

    int32_t h = hit->second, t = tit->second;
    // similarity is undirected: canonicalize the key so a reversed duplicate
    // is still recognized
    auto key = kind == RelationKind::Similarity
                   ? std::make_tuple(std::min(h, t), std::max(h, t), 1)
                   : std::make_tuple(h, t, 0);
    if (!seen.insert(key).second) {
      ++dropped;
      continue;
    }
    out.push_back({row[0], row[1], kind});
  }
  if (dropped > 0) warn(path + ": dropped " + std::to_string(dropped) + " duplicate relation row(s)");
  return out;
}

GradeTable load_grades(const std::string& path) {
  Csv csv = read_csv(path);
  require_header(csv, {"student_id", "course_id", "grade"});
  GradeTable g;
  // first pass fixes the vocabulary so the matrix can be sized up front
  for (const auto& row : csv.rows) {
    if (g.student_index.try_emplace(row[0], static_cast<int32_t>(g.students.size())).second)
      g.students.push_back(row[0]);
    if (g.course_index.try_emplace(row[1], static_cast<int32_t>(g.courses.size())).second)
      g.courses.push_back(row[1]);
  }
  g.grades.assign(g.students.size() * g.courses.size(), std::numeric_limits<double>::quiet_NaN());
  for (size_t r = 0; r < csv.rows.size(); ++r) {
    const auto& row = csv.rows[r];
    std::string where = path + ":" + std::to_string(csv.line_of(r));
    double v = parse_real(row[2], where);
    size_t s = static_cast<size_t>(g.student_index.at(row[0]));
    size_t c = static_cast<size_t>(g.course_index.at(row[1]));
    g.grades[s * g.courses.size() + c] = v;  // duplicate cell: last wins
  }
  return g;
}

std::vector<std::string> load_exam(const std::string& path, const QMatrix& q) {
  Csv csv = read_csv(path);
  require_header(csv, {"exercise_id"});
  std::vector<std::string> out;
  std::set<std::string> seen;
  int64_t dupes = 0;
  for (size_t r = 0; r < csv.rows.size(); ++r) {
    const auto& row = csv.rows[r];
    if (q.exercise_index.find(row[0]) == q.exercise_index.end())
      fail(Err::UnknownExercise, path + ":" + std::to_string(csv.line_of(r)) +
                                     ": exam exercise '" + row[0] + "' is not in the Q-matrix");
    if (!seen.insert(row[0]).second) {
      ++dupes;
      continue;
    }
    out.push_back(row[0]);
  }
  if (dupes > 0) warn(path + ": dropped " + std::to_string(dupes) + " duplicate exam row(s)");
  return out;
}

ConceptPartition partition_concepts(const QMatrix& q, const std::vector<std::string>& exam_exercises) {
  ConceptPartition p;
  p.untested.assign(static_cast<size_t>(q.n_concepts()), 1);
  for (const auto& name : exam_exercises) {
    int32_t e = q.exercise_id(name);
    for (int32_t c : q.concepts_of[static_cast<size_t>(e)]) p.untested[static_cast<size_t>(c)] = 0;
  }
  if (p.untested_count() == 0)
    warn("exam covers every concept; nothing left to diagnose as untested");
  if (exam_exercises.empty())
    warn("empty exam list; every concept is treated as untested");
  return p;
}

Tensor zscore_normalize(const GradeTable& g) {
  Tensor z = Tensor::zeros({g.n_students(), std::max<int64_t>(g.n_courses(), 0)});
  int64_t missing = 0;
  for (int64_t c = 0; c < g.n_courses(); ++c) {
    double sum = 0.0;
    int64_t n = 0;
    for (int64_t s = 0; s < g.n_students(); ++s) {
      double v = g.at(static_cast<int32_t>(s), static_cast<int32_t>(c));
      if (std::isnan(v)) continue;
      sum += v;
      ++n;
    }
    if (n == 0) fail(Err::InvalidConfig, "course '" + g.courses[static_cast<size_t>(c)] + "' has no grades");
    double mu = sum / static_cast<double>(n);
    double var = 0.0;
    for (int64_t s = 0; s < g.n_students(); ++s) {
      double v = g.at(static_cast<int32_t>(s), static_cast<int32_t>(c));
      if (!std::isnan(v)) var += (v - mu) * (v - mu);
    }
    var /= static_cast<double>(n);  // population variance
    double sigma = std::sqrt(var);
    if (sigma == 0.0)
      warn("course '" + g.courses[static_cast<size_t>(c)] + "' has zero grade variance; z-scores set to 0");
    for (int64_t s = 0; s < g.n_students(); ++s) {
      double v = g.at(static_cast<int32_t>(s), static_cast<int32_t>(c));
      if (std::isnan(v)) {
        ++missing;
        continue;  // stays 0
      }
      z.at(s, c) = sigma == 0.0 ? 0.0 : (v - mu) / sigma;
    }
  }
  if (missing > 0)
    warn("grade table: " + std::to_string(missing) + " missing (student, course) cell(s) filled with z = 0");
  return z;
}

int32_t Dataset::student_id(const std::string& name) const {
  auto it = student_index.find(name);
  if (it == student_index.end()) fail(Err::UnknownStudent, "unknown student: " + name);
  return it->second;
}

Dataset assemble_dataset(std::vector<ResponseRecord> responses, QMatrix q,
                         std::vector<ConceptRelation> relations, GradeTable grades, bool has_grades,
                         std::vector<std::string> exam_exercises, bool has_exam) {
  Dataset ds;
  ds.q = std::move(q);
  ds.responses = std::move(responses);
  ds.relations = std::move(relations);
  ds.grades = std::move(grades);
  ds.has_grades = has_grades;
  ds.exam_exercises = std::move(exam_exercises);
  ds.has_exam = has_exam;

  for (const auto& r : ds.responses) {
    if (r.score != 0 && r.score != 1)
      fail(Err::InvalidScore, "response (" + r.student + ", " + r.exercise + ") has non-binary score");
    ds.q.exercise_id(r.exercise);  // throws UnknownExercise on drift
    if (ds.student_index.try_emplace(r.student, static_cast<int32_t>(ds.students.size())).second)
      ds.students.push_back(r.student);
  }
  for (const auto& rel : ds.relations) {
    ds.q.concept_id(rel.head);
    ds.q.concept_id(rel.tail);
    if (rel.head == rel.tail) fail(Err::InvalidRelation, "self-relation on concept '" + rel.head + "'");
  }
  if (ds.has_exam) {
    ds.partition = partition_concepts(ds.q, ds.exam_exercises);
  } else {
    ds.partition.untested.assign(static_cast<size_t>(ds.q.n_concepts()), 0);
    info("no exam list given; all concepts start as tested (use a simulated split to designate untested ones)");
  }
  if (ds.has_grades) {
    int64_t unmatched = 0;
    for (const auto& s : ds.grades.students)
      if (ds.student_index.find(s) == ds.student_index.end()) ++unmatched;
    if (unmatched > 0)
      info("grade table has " + std::to_string(unmatched) + " student(s) with no responses; their rows are ignored");
  }
  return ds;
}

Dataset load_dataset(const std::string& dir) {
  fs::path base(dir);
  auto need = [&](const char* name) {
    fs::path p = base / name;
    if (!fs::exists(p)) fail(Err::Io, "missing required file: " + p.string());
    return p.string();
  };
  auto responses = load_responses(need("responses.csv"));
  QMatrix q = load_qmatrix(need("qmatrix.csv"));
  auto relations = load_relations(need("relations.csv"), q);

  GradeTable grades;
  bool has_grades = fs::exists(base / "grades.csv");
  if (has_grades) grades = load_grades((base / "grades.csv").string());

  std::vector<std::string> exam;
  bool has_exam = fs::exists(base / "exam.csv");
  if (has_exam) exam = load_exam((base / "exam.csv").string(), q);

  return assemble_dataset(std::move(responses), std::move(q), std::move(relations), std::move(grades),
                          has_grades, std::move(exam), has_exam);
}

Tensor aligned_zscores(const Dataset& ds) {
  if (!ds.has_grades) fail(Err::InvalidConfig, "dataset has no grade table to normalize");
  Tensor z = zscore_normalize(ds.grades);
  Tensor out = Tensor::zeros({ds.n_students(), ds.grades.n_courses()});
  int64_t ungraded = 0;
  for (int64_t s = 0; s < ds.n_students(); ++s) {
    auto it = ds.grades.student_index.find(ds.students[static_cast<size_t>(s)]);
    if (it == ds.grades.student_index.end()) {
      ++ungraded;
      continue;  // zero row
    }
    for (int64_t c = 0; c < ds.grades.n_courses(); ++c) out.at(s, c) = z.at(it->second, c);
  }
  if (ungraded > 0)
    warn(std::to_string(ungraded) + " student(s) have responses but no grades; zero z-score rows used");
  return out;
}

// ---- synthetic cohorts --------------------------------------------------

namespace {

void validate_synth_config(const SyntheticConfig& cfg, int64_t n_tested) {
  if (cfg.n_students < 1 || cfg.n_exercises < 2 || cfg.n_concepts < 2)
    fail(Err::InvalidConfig, "synthetic cohort needs >= 1 student, >= 2 exercises, >= 2 concepts");
  if (cfg.slip < 0 || cfg.guess < 0 || cfg.slip + cfg.guess >= 1.0)
    fail(Err::InvalidConfig, "need slip, guess >= 0 and slip + guess < 1");
  if (cfg.untested_fraction <= 0.0 || cfg.untested_fraction >= 1.0)
    fail(Err::InvalidConfig, "untested_fraction must lie in (0, 1)");
  if (cfg.relation_density < 0.0 || cfg.relation_density > 1.0)
    fail(Err::InvalidConfig, "relation_density must lie in [0, 1]");
  if (cfg.min_concepts_per_exercise < 1 || cfg.max_concepts_per_exercise < cfg.min_concepts_per_exercise)
    fail(Err::InvalidConfig, "bad concepts-per-exercise range");
  if (cfg.max_concepts_per_exercise > n_tested)
    fail(Err::InvalidConfig, "max_concepts_per_exercise exceeds the tested-concept pool (" +
                                 std::to_string(n_tested) + ")");
  if (cfg.mixed_fraction < 0.0 || cfg.mixed_fraction > 1.0 || cfg.attempt_prob <= 0.0 ||
      cfg.attempt_prob > 1.0)
    fail(Err::InvalidConfig, "mixed_fraction in [0,1] and attempt_prob in (0,1] required");
  if (cfg.prereq_coupling < 0.0 || cfg.prereq_coupling > 1.0)
    fail(Err::InvalidConfig, "prereq_coupling must lie in [0, 1]");
  if (cfg.similarity_coupling < 0.0 || cfg.similarity_coupling >= 1.0)
    fail(Err::InvalidConfig, "similarity_coupling must lie in [0, 1)");
  if (cfg.related_cover < 0.0 || cfg.related_cover > 1.0)
    fail(Err::InvalidConfig, "related_cover must lie in [0, 1]");
  if (cfg.ability_low > cfg.ability_high)
    fail(Err::InvalidConfig, "ability_low must not exceed ability_high");
  if (cfg.n_courses < 0) fail(Err::InvalidConfig, "n_courses must be >= 0");
}

}  // namespace

SyntheticData generate_synthetic(const SyntheticConfig& cfg) {
  int64_t K = cfg.n_concepts;
  int64_t n_untested = std::clamp<int64_t>(std::llround(cfg.untested_fraction * static_cast<double>(K)),
                                           1, K - 1);
  validate_synth_config(cfg, K - n_untested);
  Rng rng(cfg.seed);

  // 1. designate untested concepts
  std::vector<int32_t> designation(static_cast<size_t>(K));
  for (int64_t i = 0; i < K; ++i) designation[static_cast<size_t>(i)] = static_cast<int32_t>(i);
  rng.shuffle(designation);
  std::vector<uint8_t> untested(static_cast<size_t>(K), 0);
  for (int64_t i = 0; i < n_untested; ++i) untested[static_cast<size_t>(designation[static_cast<size_t>(i)])] = 1;
  std::vector<int32_t> untested_ids, tested_ids;
  for (int32_t k = 0; k < K; ++k) (untested[static_cast<size_t>(k)] ? untested_ids : tested_ids).push_back(k);

  // 2. concept relations: a prerequisite chain over a random order plus
  // density-sampled extras; all prerequisite edges point forward in the
  // order, so the prerequisite graph stays acyclic
  std::vector<int32_t> order(designation);
  rng.shuffle(order);
  struct Edge {
    int32_t head, tail;
    RelationKind kind;
  };
  std::vector<Edge> edges;
  for (int64_t t = 0; t + 1 < K; ++t)
    edges.push_back({order[static_cast<size_t>(t)], order[static_cast<size_t>(t + 1)], RelationKind::Prerequisite});
  for (int64_t i = 0; i < K; ++i)
    for (int64_t j = i + 1; j < K; ++j) {
      if (!rng.bernoulli(cfg.relation_density)) continue;
      bool prereq = rng.bernoulli(0.5);
      if (prereq && j == i + 1) continue;  // chain edge already present
      edges.push_back({order[static_cast<size_t>(i)], order[static_cast<size_t>(j)],
                       prereq ? RelationKind::Prerequisite : RelationKind::Similarity});
    }
  std::vector<std::vector<int32_t>> prereqs_of(static_cast<size_t>(K));
  std::vector<std::vector<int32_t>> similar_of(static_cast<size_t>(K));
  for (const Edge& e : edges) {
    if (e.kind == RelationKind::Prerequisite) {
      prereqs_of[static_cast<size_t>(e.tail)].push_back(e.head);
    } else {
      similar_of[static_cast<size_t>(e.head)].push_back(e.tail);
      similar_of[static_cast<size_t>(e.tail)].push_back(e.head);
    }
  }
  std::vector<int64_t> pos_of(static_cast<size_t>(K));
  for (int64_t pos = 0; pos < K; ++pos) pos_of[static_cast<size_t>(order[static_cast<size_t>(pos)])] = pos;

  // 3. mastery: ability plus concept offset, damped by unmastered
  // prerequisites and pulled toward the realized mastery of similar concepts
  // earlier in the order (similar skills tend to be mastered together)
  std::vector<double> ability(static_cast<size_t>(cfg.n_students));
  for (double& a : ability) a = rng.uniform(cfg.ability_low, cfg.ability_high);
  std::vector<double> offset(static_cast<size_t>(K));
  for (double& o : offset) o = rng.uniform(-0.2, 0.2);

  Tensor mastery = Tensor::zeros({cfg.n_students, K});
  for (int64_t u = 0; u < cfg.n_students; ++u)
    for (int64_t pos = 0; pos < K; ++pos) {
      int32_t k = order[static_cast<size_t>(pos)];  // topological order of the chain
      double p = std::clamp(ability[static_cast<size_t>(u)] + offset[static_cast<size_t>(k)], 0.02, 0.98);
      for (int32_t r : prereqs_of[static_cast<size_t>(k)])
        if (mastery.at(u, r) == 0.0) p *= cfg.prereq_coupling;
      if (cfg.similarity_coupling > 0.0) {
        double sum = 0.0;
        int64_t n = 0;
        for (int32_t s : similar_of[static_cast<size_t>(k)])
          if (pos_of[static_cast<size_t>(s)] < pos) {
            sum += mastery.at(u, s);
            ++n;
          }
        if (n > 0) {
          double p_sim = 0.05 + 0.9 * sum / static_cast<double>(n);
          p = (1.0 - cfg.similarity_coupling) * p + cfg.similarity_coupling * p_sim;
        }
      }
      mastery.at(u, k) = rng.bernoulli(p) ? 1.0 : 0.0;
    }

  // 4. exercises: "pure" ones touch only tested concepts and make up the
  // exam; "mixed" ones cover at least one untested concept
  std::vector<uint8_t> mixed(static_cast<size_t>(cfg.n_exercises));
  for (auto& m : mixed) m = rng.bernoulli(cfg.mixed_fraction) ? 1 : 0;
  if (std::count(mixed.begin(), mixed.end(), 0) == 0) mixed[0] = 0;
  if (std::count(mixed.begin(), mixed.end(), 1) == 0) mixed[mixed.size() - 1] = 1;

  // exercises usually test related skills: extra covered concepts are drawn
  // from the relation neighborhood of the ones already chosen when possible
  std::vector<std::vector<int32_t>> related_of(static_cast<size_t>(K));
  for (const Edge& e : edges) {
    related_of[static_cast<size_t>(e.head)].push_back(e.tail);
    related_of[static_cast<size_t>(e.tail)].push_back(e.head);
  }
  std::vector<std::vector<int32_t>> covers(static_cast<size_t>(cfg.n_exercises));
  int64_t span = cfg.max_concepts_per_exercise - cfg.min_concepts_per_exercise + 1;
  for (int64_t e = 0; e < cfg.n_exercises; ++e) {
    int64_t want = cfg.min_concepts_per_exercise + rng.below(span);
    auto& cov = covers[static_cast<size_t>(e)];
    auto add = [&](int32_t k) { insert_sorted_unique(cov, k); };
    bool is_mixed = mixed[static_cast<size_t>(e)] != 0;
    auto draw_related = [&]() -> int32_t {
      std::vector<int32_t> cand;
      for (int32_t c : cov)
        for (int32_t r : related_of[static_cast<size_t>(c)])
          if ((is_mixed || !untested[static_cast<size_t>(r)]) &&
              std::find(cov.begin(), cov.end(), r) == cov.end())
            cand.push_back(r);
      if (cand.empty()) return -1;
      return cand[static_cast<size_t>(rng.below(static_cast<int64_t>(cand.size())))];
    };
    if (is_mixed)
      add(untested_ids[static_cast<size_t>(rng.below(static_cast<int64_t>(untested_ids.size())))]);
    while (static_cast<int64_t>(cov.size()) < want) {
      int32_t k = rng.bernoulli(cfg.related_cover) ? draw_related() : -1;
      if (k < 0)
        k = is_mixed ? static_cast<int32_t>(rng.below(K))
                     : tested_ids[static_cast<size_t>(rng.below(static_cast<int64_t>(tested_ids.size())))];
      add(k);
    }
  }
  // coverage fix-ups keep the designation recoverable from the exam list:
  // every tested concept must appear in some pure exercise, every untested
  // one in some mixed exercise
  std::vector<int32_t> pure_ex, mixed_ex;
  for (int64_t e = 0; e < cfg.n_exercises; ++e)
    (mixed[static_cast<size_t>(e)] ? mixed_ex : pure_ex).push_back(static_cast<int32_t>(e));
  std::vector<uint8_t> covered_pure(static_cast<size_t>(K), 0), covered_mixed(static_cast<size_t>(K), 0);
  for (int64_t e = 0; e < cfg.n_exercises; ++e)
    for (int32_t k : covers[static_cast<size_t>(e)])
      (mixed[static_cast<size_t>(e)] ? covered_mixed : covered_pure)[static_cast<size_t>(k)] = 1;
  for (int32_t k : tested_ids)
    if (!covered_pure[static_cast<size_t>(k)]) {
      int32_t e = pure_ex[static_cast<size_t>(rng.below(static_cast<int64_t>(pure_ex.size())))];
      insert_sorted_unique(covers[static_cast<size_t>(e)], k);
    }
  for (int32_t k : untested_ids)
    if (!covered_mixed[static_cast<size_t>(k)]) {
      int32_t e = mixed_ex[static_cast<size_t>(rng.below(static_cast<int64_t>(mixed_ex.size())))];
      insert_sorted_unique(covers[static_cast<size_t>(e)], k);
    }

  // 5. responses via the slip/guess observation model
  auto student_name = [](int64_t u) { return "s" + std::to_string(u); };
  auto exercise_name = [](int64_t e) { return "e" + std::to_string(e); };
  auto concept_name = [](int64_t k) { return "k" + std::to_string(k); };

  SyntheticData data;
  for (int64_t u = 0; u < cfg.n_students; ++u)
    for (int64_t e = 0; e < cfg.n_exercises; ++e) {
      if (cfg.attempt_prob < 1.0 && !rng.bernoulli(cfg.attempt_prob)) continue;
      bool eta = true;
      for (int32_t k : covers[static_cast<size_t>(e)])
        if (mastery.at(u, k) == 0.0) {
          eta = false;
          break;
        }
      double p = eta ? 1.0 - cfg.slip : cfg.guess;
      data.responses.push_back({student_name(u), exercise_name(e), rng.bernoulli(p) ? 1 : 0});
    }

  // 6. grades: a noisy linear readout of ability per historical course
  GradeTable g;
  if (cfg.n_courses > 0) {
    std::vector<double> course_offset(static_cast<size_t>(cfg.n_courses));
    for (double& o : course_offset) o = rng.uniform(-5.0, 5.0);
    for (int64_t u = 0; u < cfg.n_students; ++u) {
      g.student_index.emplace(student_name(u), static_cast<int32_t>(u));
      g.students.push_back(student_name(u));
    }
    for (int64_t c = 0; c < cfg.n_courses; ++c) {
      g.course_index.emplace("c" + std::to_string(c), static_cast<int32_t>(c));
      g.courses.push_back("c" + std::to_string(c));
    }
    g.grades.resize(static_cast<size_t>(cfg.n_students * cfg.n_courses));
    for (int64_t u = 0; u < cfg.n_students; ++u)
      for (int64_t c = 0; c < cfg.n_courses; ++c)
        g.grades[static_cast<size_t>(u * cfg.n_courses + c)] =
            std::clamp(55.0 + 35.0 * ability[static_cast<size_t>(u)] + course_offset[static_cast<size_t>(c)] +
                           rng.normal() * cfg.grade_noise,
                       0.0, 100.0);
  }
  data.grades = std::move(g);

  // assemble the Q-matrix and names
  QMatrix q;
  for (int64_t e = 0; e < cfg.n_exercises; ++e) {
    q.exercise_index.emplace(exercise_name(e), static_cast<int32_t>(e));
    q.exercises.push_back(exercise_name(e));
  }
  for (int64_t k = 0; k < K; ++k) {
    q.concept_index.emplace(concept_name(k), static_cast<int32_t>(k));
    q.concepts.push_back(concept_name(k));
  }
  q.concepts_of = std::move(covers);
  data.q = std::move(q);

  for (const Edge& e : edges)
    data.relations.push_back({concept_name(e.head), concept_name(e.tail), e.kind});
  for (int32_t e : pure_ex) data.exam_exercises.push_back(exercise_name(e));
  for (int32_t k : untested_ids) data.untested_concepts.push_back(concept_name(k));
  data.truth.mastery = std::move(mastery);
  data.truth.slip = cfg.slip;
  data.truth.guess = cfg.guess;
  return data;
}

void write_synthetic(const SyntheticData& data, const std::string& dir) {
  fs::path base(dir);
  fs::create_directories(base);
  auto open = [&](const char* name) {
    std::ofstream out(base / name);
    if (!out) fail(Err::Io, "cannot write " + (base / name).string());
    return out;
  };

  {
    auto out = open("responses.csv");
    out << "student_id,exercise_id,score\n";
    for (const auto& r : data.responses) out << r.student << "," << r.exercise << "," << r.score << "\n";
  }
  {
    auto out = open("qmatrix.csv");
    out << "exercise_id,concept_id\n";
    for (int64_t e = 0; e < data.q.n_exercises(); ++e)
      for (int32_t k : data.q.concepts_of[static_cast<size_t>(e)])
        out << data.q.exercises[static_cast<size_t>(e)] << "," << data.q.concepts[static_cast<size_t>(k)]
            << "\n";
  }
  {
    auto out = open("relations.csv");
    out << "head_concept,tail_concept,kind\n";
    for (const auto& r : data.relations)
      out << r.head << "," << r.tail << "," << relation_kind_name(r.kind) << "\n";
  }
  if (!data.grades.empty()) {
    auto out = open("grades.csv");
    out << "student_id,course_id,grade\n";
    for (int64_t s = 0; s < data.grades.n_students(); ++s)
      for (int64_t c = 0; c < data.grades.n_courses(); ++c)
        out << data.grades.students[static_cast<size_t>(s)] << ","
            << data.grades.courses[static_cast<size_t>(c)] << ","
            << fmt_double(data.grades.at(static_cast<int32_t>(s), static_cast<int32_t>(c))) << "\n";
  }
  {
    auto out = open("exam.csv");
    out << "exercise_id\n";
    for (const auto& e : data.exam_exercises) out << e << "\n";
  }
  // offline-mode stand-ins: exercises described by their Q-matrix rows,
  // concepts by one-hot vectors
  {
    auto out = open("vectors_exercise.csv");
    out << "entity_id";
    for (int64_t k = 0; k < data.q.n_concepts(); ++k) out << ",v" << (k + 1);
    out << "\n";
    for (int64_t e = 0; e < data.q.n_exercises(); ++e) {
      out << data.q.exercises[static_cast<size_t>(e)];
      for (double v : data.q.dense_row(static_cast<int32_t>(e))) out << "," << v;
      out << "\n";
    }
  }
  {
    auto out = open("vectors_concept.csv");
    out << "entity_id";
    for (int64_t k = 0; k < data.q.n_concepts(); ++k) out << ",v" << (k + 1);
    out << "\n";
    for (int64_t k = 0; k < data.q.n_concepts(); ++k) {
      out << data.q.concepts[static_cast<size_t>(k)];
      for (int64_t j = 0; j < data.q.n_concepts(); ++j) out << "," << (j == k ? 1 : 0);
      out << "\n";
    }
  }
  {
    auto out = open("mastery.csv");
    out << "student_id,concept_id,mastered\n";
    for (int64_t u = 0; u < data.truth.mastery.rows(); ++u)
      for (int64_t k = 0; k < data.truth.mastery.cols(); ++k)
        out << "s" << u << ",k" << k << "," << static_cast<int>(data.truth.mastery.at(u, k)) << "\n";
  }
}

}  // namespace diskcd
