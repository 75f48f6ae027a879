#include "diskcd/model.hpp"

#include <algorithm>

#include "diskcd/error.hpp"
#include "diskcd/rng.hpp"

namespace diskcd {

int32_t ModelState::add(Param p) {
  if (!index_.try_emplace(p.name, static_cast<int32_t>(params_.size())).second)
    fail(Err::InvalidConfig, "duplicate parameter name: " + p.name);
  p.m = Tensor::zeros(p.value.shape);
  p.v = Tensor::zeros(p.value.shape);
  params_.push_back(std::move(p));
  return static_cast<int32_t>(params_.size()) - 1;
}

int32_t ModelState::add_xavier(const std::string& name, std::vector<int64_t> shape, bool monotone_clip) {
  Rng rng(named_seed(seed_, name));
  Param p;
  p.name = name;
  p.value = xavier_uniform(std::move(shape), rng);
  p.monotone_clip = monotone_clip;
  // clipped parameters start inside the constraint set
  if (monotone_clip)
    for (double& x : p.value.data) x = std::max(x, 0.0);
  return add(std::move(p));
}

int32_t ModelState::add_zeros(const std::string& name, std::vector<int64_t> shape) {
  Param p;
  p.name = name;
  p.value = Tensor::zeros(std::move(shape));
  return add(std::move(p));
}

int64_t ModelState::numel() const {
  int64_t n = 0;
  for (const auto& p : params_) n += p.value.numel();
  return n;
}

const Param* ModelState::find(const std::string& name) const {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : &params_[static_cast<size_t>(it->second)];
}

Param* ModelState::find(const std::string& name) {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : &params_[static_cast<size_t>(it->second)];
}

int32_t ModelState::id_of(const std::string& name) const {
  auto it = index_.find(name);
  return it == index_.end() ? -1 : it->second;
}

std::vector<Tape::Val> ModelState::bind(Tape& t, bool train) const {
  std::vector<Tape::Val> bound;
  bound.reserve(params_.size());
  for (const auto& p : params_) bound.push_back(t.leaf(p.value, train));
  return bound;
}

void ModelState::apply_gradients(Tape& t, const std::vector<Tape::Val>& bound, const AdamConfig& cfg) {
  if (bound.size() != params_.size())
    fail(Err::ShapeMismatch, "bound value count does not match the parameter count");
  ++step_;
  for (size_t i = 0; i < params_.size(); ++i) {
    Param& p = params_[i];
    adam_step(p.value, p.m, p.v, t.grad(bound[i]), cfg, step_);
    if (p.monotone_clip)
      for (double& x : p.value.data) x = std::max(x, 0.0);
  }
}

Checkpoint ModelState::to_checkpoint(std::string meta) const {
  Checkpoint c;
  c.meta = std::move(meta);
  for (const auto& p : params_) {
    c.params.emplace_back("p:" + p.name, p.value);
    c.params.emplace_back("m:" + p.name, p.m);
    c.params.emplace_back("v:" + p.name, p.v);
  }
  c.params.emplace_back("step", Tensor::scalar(static_cast<double>(step_)));
  return c;
}

void ModelState::load(const Checkpoint& ckpt) {
  size_t expected = params_.size() * 3 + 1;
  if (ckpt.params.size() != expected)
    fail(Err::ShapeMismatch, "checkpoint holds " + std::to_string(ckpt.params.size()) +
                                 " tensors, model expects " + std::to_string(expected));
  for (auto& p : params_) {
    for (auto [prefix, dst] : {std::pair{"p:", &p.value}, {"m:", &p.m}, {"v:", &p.v}}) {
      const Tensor* src = ckpt.find(prefix + p.name);
      if (!src) fail(Err::ShapeMismatch, "checkpoint is missing parameter " + p.name);
      if (src->shape != dst->shape)
        fail(Err::ShapeMismatch, "checkpoint shape mismatch for " + p.name);
      *dst = *src;
    }
  }
  const Tensor* step = ckpt.find("step");
  if (!step) fail(Err::ShapeMismatch, "checkpoint is missing the step counter");
  step_ = static_cast<int64_t>(step->at(0));
}

}  // namespace diskcd
