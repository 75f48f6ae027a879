#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <stdexcept>
#include <string>

#include "diskcd/corpus.hpp"
#include "diskcd/model.hpp"
#include "diskcd/tape.hpp"

namespace testutil {

using diskcd::Tape;
using diskcd::Tensor;

using ScalarBuilder = std::function<Tape::Val(Tape&, Tape::Val)>;

// Central finite differences of a scalar-valued builder at x0. Each probe
// rebuilds the graph on a fresh tape.
inline Tensor fd_grad(const Tensor& x0, const ScalarBuilder& build, double h = 1e-5) {
  Tensor g = Tensor::zeros(x0.shape);
  for (int64_t i = 0; i < x0.numel(); ++i) {
    double lp, lm;
    {
      Tensor xp = x0;
      xp.at(i) += h;
      Tape t;
      lp = t.value(build(t, t.leaf(std::move(xp), false))).at(0);
    }
    {
      Tensor xm = x0;
      xm.at(i) -= h;
      Tape t;
      lm = t.value(build(t, t.leaf(std::move(xm), false))).at(0);
    }
    g.at(i) = (lp - lm) / (2.0 * h);
  }
  return g;
}

inline Tensor tape_grad(const Tensor& x0, const ScalarBuilder& build) {
  Tape t;
  auto x = t.leaf(x0, true);
  t.backward(build(t, x));
  return t.grad(x);
}

inline double max_rel_err(const Tensor& a, const Tensor& b) {
  double worst = 0.0;
  for (int64_t i = 0; i < a.numel(); ++i) {
    double denom = std::max({std::abs(a.at(i)), std::abs(b.at(i)), 1e-8});
    worst = std::max(worst, std::abs(a.at(i) - b.at(i)) / denom);
  }
  return worst;
}

// Analytic gradient against finite differences, max relative error.
inline double grad_gap(const Tensor& x0, const ScalarBuilder& build) {
  return max_rel_err(tape_grad(x0, build), fd_grad(x0, build));
}

// Central finite differences of a model loss with respect to one named
// parameter. `loss` must rebuild the forward pass from the live state values
// on every call; the parameter is restored afterwards.
inline Tensor fd_state_grad(diskcd::ModelState& st, const std::string& name,
                            const std::function<double()>& loss, double h = 1e-5) {
  diskcd::Param* p = st.find(name);
  if (!p) throw std::runtime_error("fd_state_grad: no parameter named " + name);
  Tensor g = Tensor::zeros(p->value.shape);
  for (int64_t i = 0; i < p->value.numel(); ++i) {
    double keep = p->value.at(i);
    p->value.at(i) = keep + h;
    double lp = loss();
    p->value.at(i) = keep - h;
    double lm = loss();
    p->value.at(i) = keep;
    g.at(i) = (lp - lm) / (2.0 * h);
  }
  return g;
}

// Unique scratch directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() / ("diskcd_test_" + tag + "_" + std::to_string(counter_++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  std::string file(const std::string& name) const { return (path_ / name).string(); }
  const std::filesystem::path& path() const { return path_; }

 private:
  static inline int counter_ = 0;
  std::filesystem::path path_;
};

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  out << content;
}

// Hand-assembled four-concept dataset shared by the module tests:
//   concepts: k1 k2 tested, u1 u2 untested
//   exercises: e1 -> {k1,k2}, e2 -> {k2,u1}
//   students: s1 answered e1 and e2; s2 answered e1
//   relations: prerequisite k1->k2 (kk), prerequisite k1->u1 (ku),
//              similarity u1~u2 (uu), similarity k2~u2 (ku)
inline diskcd::Dataset tiny_dataset() {
  diskcd::QMatrix q;
  q.exercises = {"e1", "e2"};
  q.exercise_index = {{"e1", 0}, {"e2", 1}};
  q.concepts = {"k1", "k2", "u1", "u2"};
  q.concept_index = {{"k1", 0}, {"k2", 1}, {"u1", 2}, {"u2", 3}};
  q.concepts_of = {{0, 1}, {1, 2}};

  std::vector<diskcd::ResponseRecord> responses = {
      {"s1", "e1", 1}, {"s1", "e2", 0}, {"s2", "e1", 1}};
  std::vector<diskcd::ConceptRelation> relations = {
      {"k1", "k2", diskcd::RelationKind::Prerequisite},
      {"k1", "u1", diskcd::RelationKind::Prerequisite},
      {"u1", "u2", diskcd::RelationKind::Similarity},
      {"k2", "u2", diskcd::RelationKind::Similarity},
  };
  return diskcd::assemble_dataset(std::move(responses), std::move(q), std::move(relations), {},
                                  false, {"e1"}, true);
}

}  // namespace testutil
