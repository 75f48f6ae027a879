#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "diskcd/tensor.hpp"

namespace diskcd {

// Text checkpoint holding named tensors plus a free-form JSON meta line.
// Values are written as hexfloats so a save/load round trip is bit exact.
struct Checkpoint {
  std::string meta;  // JSON text, "{}" if absent
  std::vector<std::pair<std::string, Tensor>> params;  // in file order

  const Tensor* find(const std::string& name) const;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace diskcd
