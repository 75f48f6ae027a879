#pragma once

#include <stdexcept>
#include <string>

namespace diskcd {

// Error codes cover every named failure mode across the pipeline so tests and
// callers can match on the cause instead of parsing messages.
enum class Err {
  // input parsing / validation
  MalformedHeader,
  MalformedRow,
  InvalidScore,
  InvalidRelation,
  UnknownStudent,
  UnknownExercise,
  UnknownConcept,
  InvalidConfig,
  Io,
  // graph
  InconsistentPartition,
  UnknownNode,
  // numerics
  ShapeMismatch,
  NonScalarLoss,
  NonFiniteValue,
  // embedding
  WidthMismatch,
  DimMismatch,
  MissingEntity,
  // diagnosis
  EmptyConceptRow,
  EmptyBatch,
  // harness
  EmptyTrainSet,
  DivergedLoss,
  EmptyEvalSet,
  NoTestRecords,
};

class Error : public std::runtime_error {
 public:
  Error(Err code, const std::string& msg) : std::runtime_error(msg), code_(code) {}
  Err code() const { return code_; }

 private:
  Err code_;
};

[[noreturn]] inline void fail(Err code, const std::string& msg) { throw Error(code, msg); }

}  // namespace diskcd
