#include "diskcd/tape.hpp"

#include <cmath>
#include <string>

namespace diskcd {

namespace {

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) fail(Err::ShapeMismatch, std::string(op) + ": operand shapes differ");
}

void check_1d(const Tensor& t, const char* op) {
  if (t.ndim() != 1) fail(Err::ShapeMismatch, std::string(op) + ": expected a 1-D tensor");
}

double sigmoid_scalar(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

Tape::Val Tape::push(Node n) {
  if (check_finite_) {
    for (double x : n.value.data) {
      if (!std::isfinite(x)) fail(Err::NonFiniteValue, "non-finite value produced on tape");
    }
  }
  if (!n.requires_grad) {
    // backward will never visit this node; drop the record
    n.inputs.clear();
    n.op = Op::Leaf;
  }
  nodes_.push_back(std::move(n));
  return Val{static_cast<int32_t>(nodes_.size() - 1)};
}

bool Tape::any_requires(const std::vector<int32_t>& ids) const {
  for (int32_t id : ids)
    if (nodes_[static_cast<size_t>(id)].requires_grad) return true;
  return false;
}

Tape::Val Tape::leaf(Tensor value, bool requires_grad) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return Val{static_cast<int32_t>(nodes_.size() - 1)};
}

Tape::Val Tape::add(Val a, Val b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  check_same_shape(ta, tb, "add");
  Node n;
  n.value = ta;
  for (int64_t i = 0; i < n.value.numel(); ++i) n.value.at(i) += tb.at(i);
  n.op = Op::Add;
  n.inputs = {a.id, b.id};
  n.requires_grad = any_requires(n.inputs);
  return push(std::move(n));
}

Tape::Val Tape::sub(Val a, Val b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  check_same_shape(ta, tb, "sub");
  Node n;
  n.value = ta;
  for (int64_t i = 0; i < n.value.numel(); ++i) n.value.at(i) -= tb.at(i);
  n.op = Op::Sub;
  n.inputs = {a.id, b.id};
  n.requires_grad = any_requires(n.inputs);
  return push(std::move(n));
}

Tape::Val Tape::mul(Val a, Val b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  check_same_shape(ta, tb, "mul");
  Node n;
  n.value = ta;
  for (int64_t i = 0; i < n.value.numel(); ++i) n.value.at(i) *= tb.at(i);
  n.op = Op::Mul;
  n.inputs = {a.id, b.id};
  n.requires_grad = any_requires(n.inputs);
  return push(std::move(n));
}

Tape::Val Tape::scalar_mul(Val a, double c) {
  Node n;
  n.value = value(a);
  for (double& x : n.value.data) x *= c;
  n.op = Op::ScalarMul;
  n.inputs = {a.id};
  n.aux = {c};
  n.requires_grad = any_requires(n.inputs);
  return push(std::move(n));
}

Tape::Val Tape::scale(Val v, Val s) {
  const Tensor& ts = value(s);
  if (!ts.is_scalar()) fail(Err::ShapeMismatch, "scale: scaling factor must be a scalar");
  Node n;
  n.value = value(v);
  double c = ts.at(0);
  for (double& x : n.value.data) x *= c;
  n.op = Op::Scale;
  n.inputs = {v.id, s.id};
  n.requires_grad = any_requires(n.inputs);
  return push(std::move(n));
}

Tape::Val Tape::matmul(Val a, Val b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  if (ta.ndim() != 2) fail(Err::ShapeMismatch, "matmul: left operand must be 2-D");
  Node n;
  if (tb.ndim() == 2) {
    if (ta.cols() != tb.rows()) fail(Err::ShapeMismatch, "matmul: inner dimensions differ");
    n.value = Tensor::zeros({ta.rows(), tb.cols()});
    for (int64_t i = 0; i < ta.rows(); ++i)
      for (int64_t k = 0; k < ta.cols(); ++k) {
        double aik = ta.at(i, k);
        if (aik == 0.0) continue;
        for (int64_t j = 0; j < tb.cols(); ++j) n.value.at(i, j) += aik * tb.at(k, j);
      }
  } else if (tb.ndim() == 1) {
    if (ta.cols() != tb.numel()) fail(Err::ShapeMismatch, "matmul: inner dimensions differ");
    n.value = Tensor::zeros({ta.rows()});
    for (int64_t i = 0; i < ta.rows(); ++i) {
      double acc = 0.0;
      for (int64_t k = 0; k < ta.cols(); ++k) acc += ta.at(i, k) * tb.at(k);
      n.value.at(i) = acc;
    }
  } else {
    fail(Err::ShapeMismatch, "matmul: right operand must be 1-D or 2-D");
  }
  n.op = Op::Matmul;
  n.inputs = {a.id, b.id};
  n.requires_grad = any_requires(n.inputs);
  return push(std::move(n));
}

Tape::Val Tape::dot(Val a, Val b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  check_1d(ta, "dot");
  check_same_shape(ta, tb, "dot");
  double acc = 0.0;
  for (int64_t i = 0; i < ta.numel(); ++i) acc += ta.at(i) * tb.at(i);
  Node n;
  n.value = Tensor::scalar(acc);
  n.op = Op::Dot;
  n.inputs = {a.id, b.id};
  n.requires_grad = any_requires(n.inputs);
  return push(std::move(n));
}

Tape::Val Tape::concat(Val a, Val b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  check_1d(ta, "concat");
  check_1d(tb, "concat");
  Node n;
  n.value = Tensor::zeros({ta.numel() + tb.numel()});
  for (int64_t i = 0; i < ta.numel(); ++i) n.value.at(i) = ta.at(i);
  for (int64_t i = 0; i < tb.numel(); ++i) n.value.at(ta.numel() + i) = tb.at(i);
  n.op = Op::Concat;
  n.inputs = {a.id, b.id};
  n.requires_grad = any_requires(n.inputs);
  return push(std::move(n));
}

Tape::Val Tape::pack(const std::vector<Val>& scalars) {
  if (scalars.empty()) fail(Err::ShapeMismatch, "pack: empty input list");
  Node n;
  n.value = Tensor::zeros({static_cast<int64_t>(scalars.size())});
  n.inputs.reserve(scalars.size());
  for (size_t i = 0; i < scalars.size(); ++i) {
    const Tensor& t = value(scalars[i]);
    if (!t.is_scalar()) fail(Err::ShapeMismatch, "pack: inputs must be scalars");
    n.value.at(static_cast<int64_t>(i)) = t.at(0);
    n.inputs.push_back(scalars[i].id);
  }
  n.op = Op::Pack;
  n.requires_grad = any_requires(n.inputs);
  return push(std::move(n));
}

Tape::Val Tape::row(Val m, int64_t i) {
  const Tensor& tm = value(m);
  if (tm.ndim() != 2) fail(Err::ShapeMismatch, "row: expected a 2-D tensor");
  if (i < 0 || i >= tm.rows()) fail(Err::ShapeMismatch, "row: index out of range");
  Node n;
  n.value = Tensor::zeros({tm.cols()});
  for (int64_t j = 0; j < tm.cols(); ++j) n.value.at(j) = tm.at(i, j);
  n.op = Op::Row;
  n.inputs = {m.id};
  n.iaux = {i};
  n.requires_grad = any_requires(n.inputs);
  return push(std::move(n));
}

Tape::Val Tape::select(Val v, std::vector<int64_t> indices) {
  const Tensor& tv = value(v);
  check_1d(tv, "select");
  if (indices.empty()) fail(Err::ShapeMismatch, "select: empty index list");
  Node n;
  n.value = Tensor::zeros({static_cast<int64_t>(indices.size())});
  for (size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] < 0 || indices[i] >= tv.numel()) fail(Err::ShapeMismatch, "select: index out of range");
    n.value.at(static_cast<int64_t>(i)) = tv.at(indices[i]);
  }
  n.op = Op::Select;
  n.inputs = {v.id};
  n.iaux = std::move(indices);
  n.requires_grad = any_requires(n.inputs);
  return push(std::move(n));
}

Tape::Val Tape::sigmoid(Val a) {
  Node n;
  n.value = value(a);
  for (double& x : n.value.data) x = sigmoid_scalar(x);
  n.op = Op::Sigmoid;
  n.inputs = {a.id};
  n.requires_grad = any_requires(n.inputs);
  return push(std::move(n));
}

Tape::Val Tape::leaky_relu(Val a, double slope) {
  Node n;
  n.value = value(a);
  for (double& x : n.value.data) x = x > 0.0 ? x : slope * x;
  n.op = Op::LeakyRelu;
  n.inputs = {a.id};
  n.aux = {slope};
  n.requires_grad = any_requires(n.inputs);
  return push(std::move(n));
}

Tape::Val Tape::softmax(Val a) {
  const Tensor& ta = value(a);
  check_1d(ta, "softmax");
  Node n;
  n.value = ta;
  double mx = n.value.at(0);
  for (double x : n.value.data) mx = std::max(mx, x);
  double z = 0.0;
  for (double& x : n.value.data) {
    x = std::exp(x - mx);
    z += x;
  }
  for (double& x : n.value.data) x /= z;
  n.op = Op::Softmax;
  n.inputs = {a.id};
  n.requires_grad = any_requires(n.inputs);
  return push(std::move(n));
}

Tape::Val Tape::mean(Val a) {
  const Tensor& ta = value(a);
  double acc = 0.0;
  for (double x : ta.data) acc += x;
  Node n;
  n.value = Tensor::scalar(acc / static_cast<double>(ta.numel()));
  n.op = Op::Mean;
  n.inputs = {a.id};
  n.requires_grad = any_requires(n.inputs);
  return push(std::move(n));
}

Tape::Val Tape::sum(Val a) {
  const Tensor& ta = value(a);
  double acc = 0.0;
  for (double x : ta.data) acc += x;
  Node n;
  n.value = Tensor::scalar(acc);
  n.op = Op::Sum;
  n.inputs = {a.id};
  n.requires_grad = any_requires(n.inputs);
  return push(std::move(n));
}

Tape::Val Tape::prod(Val a) {
  const Tensor& ta = value(a);
  check_1d(ta, "prod");
  double acc = 1.0;
  for (double x : ta.data) acc *= x;
  Node n;
  n.value = Tensor::scalar(acc);
  n.op = Op::Prod;
  n.inputs = {a.id};
  n.requires_grad = any_requires(n.inputs);
  return push(std::move(n));
}

Tape::Val Tape::log(Val a) {
  Node n;
  n.value = value(a);
  for (double& x : n.value.data) x = std::log(x);
  n.op = Op::Log;
  n.inputs = {a.id};
  n.requires_grad = any_requires(n.inputs);
  return push(std::move(n));
}

Tape::Val Tape::clamp(Val a, double lo, double hi) {
  Node n;
  n.value = value(a);
  for (double& x : n.value.data) x = std::min(std::max(x, lo), hi);
  n.op = Op::Clamp;
  n.inputs = {a.id};
  n.aux = {lo, hi};
  n.requires_grad = any_requires(n.inputs);
  return push(std::move(n));
}

Tape::Val Tape::weighted_sum(Val weights, const std::vector<Val>& vecs) {
  const Tensor& tw = value(weights);
  check_1d(tw, "weighted_sum");
  if (tw.numel() != static_cast<int64_t>(vecs.size()))
    fail(Err::ShapeMismatch, "weighted_sum: weight count does not match vector count");
  if (vecs.empty()) fail(Err::ShapeMismatch, "weighted_sum: empty vector list");
  Node n;
  n.value = Tensor::zeros(value(vecs[0]).shape);
  n.inputs.reserve(vecs.size() + 1);
  n.inputs.push_back(weights.id);
  for (size_t i = 0; i < vecs.size(); ++i) {
    const Tensor& tv = value(vecs[i]);
    check_same_shape(n.value, tv, "weighted_sum");
    double w = tw.at(static_cast<int64_t>(i));
    for (int64_t j = 0; j < tv.numel(); ++j) n.value.at(j) += w * tv.at(j);
    n.inputs.push_back(vecs[i].id);
  }
  n.op = Op::WeightedSum;
  n.requires_grad = any_requires(n.inputs);
  return push(std::move(n));
}

Tape::Val Tape::bce_sum(Val preds, Tensor labels) {
  const Tensor& tp = value(preds);
  check_1d(tp, "bce_sum");
  if (!tp.same_shape(labels)) fail(Err::ShapeMismatch, "bce_sum: labels do not match predictions");
  double acc = 0.0;
  for (int64_t i = 0; i < tp.numel(); ++i) {
    double p = tp.at(i);
    double y = labels.at(i);
    acc -= y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
  }
  Node n;
  n.value = Tensor::scalar(acc);
  n.op = Op::BceSum;
  n.inputs = {preds.id};
  n.aux = std::move(labels.data);
  n.requires_grad = any_requires(n.inputs);
  return push(std::move(n));
}

Tensor& Tape::grad_buf(int32_t id) {
  Node& n = nodes_[static_cast<size_t>(id)];
  if (n.grad.data.empty()) n.grad = Tensor::zeros(n.value.shape);
  return n.grad;
}

const Tensor& Tape::grad(Val v) { return grad_buf(v.id); }

void Tape::backward(Val loss) {
  const Tensor& lt = value(loss);
  if (!lt.is_scalar()) fail(Err::NonScalarLoss, "backward: loss must be a scalar");
  // reset any gradients from a previous sweep
  for (Node& n : nodes_) n.grad.data.clear();
  if (!node(loss).requires_grad) return;
  grad_buf(loss.id).at(0) = 1.0;
  for (int32_t id = loss.id; id >= 0; --id) {
    const Node& n = nodes_[static_cast<size_t>(id)];
    if (!n.requires_grad || n.op == Op::Leaf) continue;
    if (n.grad.data.empty()) continue;  // not on any path to the loss
    backward_node(id);
  }
}

void Tape::backward_node(int32_t id) {
  Node& n = nodes_[static_cast<size_t>(id)];
  const Tensor& g = n.grad;
  auto in = [&](size_t k) -> Node& { return nodes_[static_cast<size_t>(n.inputs[k])]; };
  auto gin = [&](size_t k) -> Tensor& { return grad_buf(n.inputs[k]); };
  auto needs = [&](size_t k) { return in(k).requires_grad; };

  switch (n.op) {
    case Op::Add:
      if (needs(0)) {
        Tensor& ga = gin(0);
        for (int64_t i = 0; i < g.numel(); ++i) ga.at(i) += g.at(i);
      }
      if (needs(1)) {
        Tensor& gb = gin(1);
        for (int64_t i = 0; i < g.numel(); ++i) gb.at(i) += g.at(i);
      }
      break;
    case Op::Sub:
      if (needs(0)) {
        Tensor& ga = gin(0);
        for (int64_t i = 0; i < g.numel(); ++i) ga.at(i) += g.at(i);
      }
      if (needs(1)) {
        Tensor& gb = gin(1);
        for (int64_t i = 0; i < g.numel(); ++i) gb.at(i) -= g.at(i);
      }
      break;
    case Op::Mul: {
      const Tensor& a = in(0).value;
      const Tensor& b = in(1).value;
      if (needs(0)) {
        Tensor& ga = gin(0);
        for (int64_t i = 0; i < g.numel(); ++i) ga.at(i) += g.at(i) * b.at(i);
      }
      if (needs(1)) {
        Tensor& gb = gin(1);
        for (int64_t i = 0; i < g.numel(); ++i) gb.at(i) += g.at(i) * a.at(i);
      }
      break;
    }
    case Op::ScalarMul:
      if (needs(0)) {
        Tensor& ga = gin(0);
        for (int64_t i = 0; i < g.numel(); ++i) ga.at(i) += n.aux[0] * g.at(i);
      }
      break;
    case Op::Scale: {
      const Tensor& v = in(0).value;
      double s = in(1).value.at(0);
      if (needs(0)) {
        Tensor& gv = gin(0);
        for (int64_t i = 0; i < g.numel(); ++i) gv.at(i) += s * g.at(i);
      }
      if (needs(1)) {
        double acc = 0.0;
        for (int64_t i = 0; i < g.numel(); ++i) acc += v.at(i) * g.at(i);
        gin(1).at(0) += acc;
      }
      break;
    }
    case Op::Matmul: {
      const Tensor& a = in(0).value;
      const Tensor& b = in(1).value;
      if (b.ndim() == 2) {
        if (needs(0)) {
          Tensor& ga = gin(0);
          for (int64_t i = 0; i < a.rows(); ++i)
            for (int64_t k = 0; k < a.cols(); ++k) {
              double acc = 0.0;
              for (int64_t j = 0; j < b.cols(); ++j) acc += g.at(i, j) * b.at(k, j);
              ga.at(i, k) += acc;
            }
        }
        if (needs(1)) {
          Tensor& gb = gin(1);
          for (int64_t i = 0; i < a.rows(); ++i)
            for (int64_t k = 0; k < a.cols(); ++k) {
              double aik = a.at(i, k);
              if (aik == 0.0) continue;
              for (int64_t j = 0; j < b.cols(); ++j) gb.at(k, j) += aik * g.at(i, j);
            }
        }
      } else {
        if (needs(0)) {
          Tensor& ga = gin(0);
          for (int64_t i = 0; i < a.rows(); ++i)
            for (int64_t k = 0; k < a.cols(); ++k) ga.at(i, k) += g.at(i) * b.at(k);
        }
        if (needs(1)) {
          Tensor& gb = gin(1);
          for (int64_t i = 0; i < a.rows(); ++i) {
            double gi = g.at(i);
            if (gi == 0.0) continue;
            for (int64_t k = 0; k < a.cols(); ++k) gb.at(k) += gi * a.at(i, k);
          }
        }
      }
      break;
    }
    case Op::Dot: {
      const Tensor& a = in(0).value;
      const Tensor& b = in(1).value;
      double g0 = g.at(0);
      if (needs(0)) {
        Tensor& ga = gin(0);
        for (int64_t i = 0; i < a.numel(); ++i) ga.at(i) += g0 * b.at(i);
      }
      if (needs(1)) {
        Tensor& gb = gin(1);
        for (int64_t i = 0; i < a.numel(); ++i) gb.at(i) += g0 * a.at(i);
      }
      break;
    }
    case Op::Concat: {
      int64_t na = in(0).value.numel();
      if (needs(0)) {
        Tensor& ga = gin(0);
        for (int64_t i = 0; i < na; ++i) ga.at(i) += g.at(i);
      }
      if (needs(1)) {
        Tensor& gb = gin(1);
        for (int64_t i = 0; i < g.numel() - na; ++i) gb.at(i) += g.at(na + i);
      }
      break;
    }
    case Op::Pack:
      for (size_t k = 0; k < n.inputs.size(); ++k)
        if (needs(k)) gin(k).at(0) += g.at(static_cast<int64_t>(k));
      break;
    case Op::Row:
      if (needs(0)) {
        Tensor& gm = gin(0);
        int64_t i = n.iaux[0];
        for (int64_t j = 0; j < g.numel(); ++j) gm.at(i, j) += g.at(j);
      }
      break;
    case Op::Select:
      if (needs(0)) {
        Tensor& gv = gin(0);
        for (size_t k = 0; k < n.iaux.size(); ++k) gv.at(n.iaux[k]) += g.at(static_cast<int64_t>(k));
      }
      break;
    case Op::Sigmoid:
      if (needs(0)) {
        Tensor& ga = gin(0);
        for (int64_t i = 0; i < g.numel(); ++i) {
          double y = n.value.at(i);
          ga.at(i) += g.at(i) * y * (1.0 - y);
        }
      }
      break;
    case Op::LeakyRelu:
      if (needs(0)) {
        Tensor& ga = gin(0);
        const Tensor& x = in(0).value;
        for (int64_t i = 0; i < g.numel(); ++i) ga.at(i) += g.at(i) * (x.at(i) > 0.0 ? 1.0 : n.aux[0]);
      }
      break;
    case Op::Softmax:
      if (needs(0)) {
        Tensor& ga = gin(0);
        double gy = 0.0;
        for (int64_t i = 0; i < g.numel(); ++i) gy += g.at(i) * n.value.at(i);
        for (int64_t i = 0; i < g.numel(); ++i) ga.at(i) += n.value.at(i) * (g.at(i) - gy);
      }
      break;
    case Op::Mean:
      if (needs(0)) {
        Tensor& ga = gin(0);
        double c = g.at(0) / static_cast<double>(ga.numel());
        for (int64_t i = 0; i < ga.numel(); ++i) ga.at(i) += c;
      }
      break;
    case Op::Sum:
      if (needs(0)) {
        Tensor& ga = gin(0);
        for (int64_t i = 0; i < ga.numel(); ++i) ga.at(i) += g.at(0);
      }
      break;
    case Op::Prod:
      if (needs(0)) {
        // prefix/suffix products avoid dividing by near-zero entries
        Tensor& ga = gin(0);
        const Tensor& x = in(0).value;
        int64_t k = x.numel();
        std::vector<double> pre(static_cast<size_t>(k) + 1, 1.0), suf(static_cast<size_t>(k) + 1, 1.0);
        for (int64_t i = 0; i < k; ++i) pre[static_cast<size_t>(i) + 1] = pre[static_cast<size_t>(i)] * x.at(i);
        for (int64_t i = k - 1; i >= 0; --i) suf[static_cast<size_t>(i)] = suf[static_cast<size_t>(i) + 1] * x.at(i);
        for (int64_t i = 0; i < k; ++i)
          ga.at(i) += g.at(0) * pre[static_cast<size_t>(i)] * suf[static_cast<size_t>(i) + 1];
      }
      break;
    case Op::Log:
      if (needs(0)) {
        Tensor& ga = gin(0);
        const Tensor& x = in(0).value;
        for (int64_t i = 0; i < g.numel(); ++i) ga.at(i) += g.at(i) / x.at(i);
      }
      break;
    case Op::Clamp:
      if (needs(0)) {
        Tensor& ga = gin(0);
        const Tensor& x = in(0).value;
        for (int64_t i = 0; i < g.numel(); ++i)
          if (x.at(i) >= n.aux[0] && x.at(i) <= n.aux[1]) ga.at(i) += g.at(i);
      }
      break;
    case Op::WeightedSum: {
      const Tensor& w = in(0).value;
      if (needs(0)) {
        Tensor& gw = gin(0);
        for (size_t k = 1; k < n.inputs.size(); ++k) {
          const Tensor& v = in(k).value;
          double acc = 0.0;
          for (int64_t i = 0; i < g.numel(); ++i) acc += v.at(i) * g.at(i);
          gw.at(static_cast<int64_t>(k) - 1) += acc;
        }
      }
      for (size_t k = 1; k < n.inputs.size(); ++k) {
        if (!needs(k)) continue;
        Tensor& gv = gin(k);
        double wk = w.at(static_cast<int64_t>(k) - 1);
        for (int64_t i = 0; i < g.numel(); ++i) gv.at(i) += wk * g.at(i);
      }
      break;
    }
    case Op::BceSum:
      if (needs(0)) {
        Tensor& gp = gin(0);
        const Tensor& p = in(0).value;
        double g0 = g.at(0);
        for (int64_t i = 0; i < p.numel(); ++i) {
          double pi = p.at(i);
          double yi = n.aux[static_cast<size_t>(i)];
          gp.at(i) += g0 * (pi - yi) / (pi * (1.0 - pi));
        }
      }
      break;
    case Op::Leaf:
      break;
  }
}

}  // namespace diskcd
