#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "diskcd/checkpoint.hpp"
#include "diskcd/optim.hpp"
#include "diskcd/tape.hpp"
#include "diskcd/tensor.hpp"

namespace diskcd {

struct Param {
  std::string name;
  Tensor value;
  Tensor m, v;  // Adam moments
  bool monotone_clip = false;  // negatives forced to zero after every step
};

// Named parameter store. Initialization is derived per name from the base
// seed, so adding or removing one parameter never shifts another's values,
// and ablated configurations stay bit-comparable.
class ModelState {
 public:
  explicit ModelState(uint64_t seed) : seed_(seed) {}

  int32_t add_xavier(const std::string& name, std::vector<int64_t> shape, bool monotone_clip = false);
  int32_t add_zeros(const std::string& name, std::vector<int64_t> shape);

  int64_t count() const { return static_cast<int64_t>(params_.size()); }
  int64_t numel() const;
  Param& at(int32_t id) { return params_[static_cast<size_t>(id)]; }
  const Param& at(int32_t id) const { return params_[static_cast<size_t>(id)]; }
  const Param* find(const std::string& name) const;
  Param* find(const std::string& name);
  int32_t id_of(const std::string& name) const;  // -1 when absent

  // One tape leaf per parameter, in id order. Evaluation passes bind
  // constants so the tape skips backward bookkeeping.
  std::vector<Tape::Val> bind(Tape& t, bool train = true) const;

  // Adam over every parameter using the gradients of `bound`, then the
  // monotonicity clip where flagged.
  void apply_gradients(Tape& t, const std::vector<Tape::Val>& bound, const AdamConfig& cfg);

  int64_t step() const { return step_; }
  uint64_t seed() const { return seed_; }

  Checkpoint to_checkpoint(std::string meta) const;
  void load(const Checkpoint& ckpt);  // names and shapes must match exactly

 private:
  int32_t add(Param p);

  uint64_t seed_;
  int64_t step_ = 0;
  std::vector<Param> params_;
  std::unordered_map<std::string, int32_t> index_;
};

}  // namespace diskcd
