#include "oscbp/tensor.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <numeric>
#include <tuple>
#include <ostream>
#include <unordered_set>

#include "oscbp/error.hpp"

namespace oscbp::ad {

std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string to_string(const Shape& shape) {
  std::string s;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += 'x';
    s += std::to_string(shape[i]);
  }
  return s.empty() ? "scalar" : s;
}

Tensor::Tensor(Shape s, double fill) : shape(std::move(s)), values(numel(shape), fill) {}

Tensor::Tensor(Shape s, std::vector<double> v) : shape(std::move(s)), values(std::move(v)) {
  if (values.size() != numel(shape)) {
    throw Error(ErrorKind::Shape, "tensor of shape " + to_string(shape) + " given " +
                                      std::to_string(values.size()) + " values");
  }
}

std::span<const double> Var::grad() const {
  if (node_->grad.empty()) {
    // Callers expect a span of the right length even before any backward pass.
    node_->grad.assign(node_->value.size(), 0.0);
  }
  return node_->grad;
}

std::vector<double>& Var::mutable_grad() {
  if (node_->grad.empty()) node_->grad.assign(node_->value.size(), 0.0);
  return node_->grad;
}

double Var::item() const {
  if (size() != 1) throw Error(ErrorKind::Shape, "item() on tensor of shape " + to_string(shape()));
  return node_->value.values[0];
}

namespace {

Var make_leaf(Tensor t, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->value = std::move(t);
  n->requires_grad = requires_grad;
  return Var(std::move(n));
}

// Output node wired to its inputs; backward_fn is only kept when a gradient can flow.
Var make_op(Tensor value, std::vector<NodePtr> parents, std::function<void(Node&)> fn) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = std::any_of(parents.begin(), parents.end(),
                                 [](const NodePtr& p) { return p->requires_grad; });
  if (n->requires_grad) {
    n->parents = std::move(parents);
    n->backward_fn = std::move(fn);
  }
  return Var(std::move(n));
}

std::vector<double>* grad_of(const NodePtr& n) {
  if (!n->requires_grad) return nullptr;
  if (n->grad.empty()) n->grad.assign(n->value.size(), 0.0);
  return &n->grad;
}

void require_shape(const Var& v, const Shape& expected, const char* what) {
  if (v.shape() != expected) {
    throw Error(ErrorKind::Shape, std::string(what) + ": expected " + to_string(expected) +
                                      ", got " + to_string(v.shape()));
  }
}

void require_rank(const Var& v, std::size_t rank, const char* what) {
  if (v.shape().size() != rank) {
    throw Error(ErrorKind::Shape, std::string(what) + ": expected rank " + std::to_string(rank) +
                                      ", got " + to_string(v.shape()));
  }
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

Var parameter(Tensor t) { return make_leaf(std::move(t), true); }
Var constant(Tensor t) { return make_leaf(std::move(t), false); }
Var deep_copy(const Var& v) { return make_leaf(v.value(), v.requires_grad()); }

Var add(const Var& a, const Var& b) {
  require_shape(b, a.shape(), "add");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out.values[i] = a.data()[i] + b.data()[i];
  return make_op(std::move(out), {a.node(), b.node()}, [](Node& self) {
    for (const auto& p : self.parents) {
      if (auto* g = grad_of(p)) {
        for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
      }
    }
  });
}

Var mul(const Var& a, const Var& b) {
  require_shape(b, a.shape(), "mul");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out.values[i] = a.data()[i] * b.data()[i];
  return make_op(std::move(out), {a.node(), b.node()}, [](Node& self) {
    const auto& av = self.parents[0]->value.values;
    const auto& bv = self.parents[1]->value.values;
    if (auto* g = grad_of(self.parents[0])) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * bv[i];
    }
    if (auto* g = grad_of(self.parents[1])) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * av[i];
    }
  });
}

Var scale(const Var& a, double s) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out.values[i] = a.data()[i] * s;
  return make_op(std::move(out), {a.node()}, [s](Node& self) {
    if (auto* g = grad_of(self.parents[0])) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * s;
    }
  });
}

Var sum(const Var& a) {
  Tensor out({1});
  out.values[0] = std::accumulate(a.data().begin(), a.data().end(), 0.0);
  return make_op(std::move(out), {a.node()}, [](Node& self) {
    if (auto* g = grad_of(self.parents[0])) {
      for (double& v : *g) v += self.grad[0];
    }
  });
}

Var relu(const Var& a) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out.values[i] = std::max(a.data()[i], 0.0);
  return make_op(std::move(out), {a.node()}, [](Node& self) {
    const auto& x = self.parents[0]->value.values;
    if (auto* g = grad_of(self.parents[0])) {
      for (std::size_t i = 0; i < g->size(); ++i) {
        if (x[i] > 0.0) (*g)[i] += self.grad[i];
      }
    }
  });
}

Var reshape(const Var& a, Shape shape) {
  if (numel(shape) != a.size()) {
    throw Error(ErrorKind::Shape, "reshape " + to_string(a.shape()) + " -> " + to_string(shape));
  }
  return make_op(Tensor(std::move(shape), a.value().values), {a.node()}, [](Node& self) {
    if (auto* g = grad_of(self.parents[0])) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
    }
  });
}

Var flatten(const Var& a) { return reshape(a, {a.size()}); }

Var transpose(const Var& a) {
  require_rank(a, 2, "transpose");
  const std::size_t r = a.shape()[0], c = a.shape()[1];
  Tensor out({c, r});
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) out.values[j * r + i] = a.data()[i * c + j];
  }
  return make_op(std::move(out), {a.node()}, [r, c](Node& self) {
    if (auto* g = grad_of(self.parents[0])) {
      for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < c; ++j) (*g)[i * c + j] += self.grad[j * r + i];
      }
    }
  });
}

Var reverse_rows(const Var& a) {
  require_rank(a, 2, "reverse_rows");
  const std::size_t r = a.shape()[0], c = a.shape()[1];
  Tensor out(a.shape());
  for (std::size_t i = 0; i < r; ++i) {
    std::copy_n(a.data().begin() + static_cast<std::ptrdiff_t>(i * c), c,
                out.values.begin() + static_cast<std::ptrdiff_t>((r - 1 - i) * c));
  }
  return make_op(std::move(out), {a.node()}, [r, c](Node& self) {
    if (auto* g = grad_of(self.parents[0])) {
      for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < c; ++j) (*g)[i * c + j] += self.grad[(r - 1 - i) * c + j];
      }
    }
  });
}

Var concat(std::span<const Var> parts) {
  std::vector<NodePtr> parents;
  std::vector<double> values;
  for (const Var& p : parts) {
    parents.push_back(p.node());
    values.insert(values.end(), p.data().begin(), p.data().end());
  }
  const std::size_t n = values.size();
  return make_op(Tensor({n}, std::move(values)), std::move(parents), [](Node& self) {
    std::size_t offset = 0;
    for (const auto& p : self.parents) {
      const std::size_t len = p->value.size();
      if (auto* g = grad_of(p)) {
        for (std::size_t i = 0; i < len; ++i) (*g)[i] += self.grad[offset + i];
      }
      offset += len;
    }
  });
}

Var conv1d(const Var& x, const Var& kernels, const Var& bias, std::size_t pad_left,
           std::size_t pad_right) {
  require_rank(x, 2, "conv1d input");
  require_rank(kernels, 3, "conv1d kernels");
  const std::size_t c_in = x.shape()[0], len = x.shape()[1];
  const std::size_t c_out = kernels.shape()[0], width = kernels.shape()[2];
  if (kernels.shape()[1] != c_in) {
    throw Error(ErrorKind::Shape, "conv1d: kernels " + to_string(kernels.shape()) +
                                      " do not match input " + to_string(x.shape()));
  }
  require_shape(bias, {c_out}, "conv1d bias");
  if (pad_left + pad_right + 1 != width) {
    throw Error(ErrorKind::Shape, "conv1d: padding must total kernel width - 1");
  }

  // Output position j reads input j - pad_left + w; returns the valid [j0, j1) range.
  auto valid = [len, pad_left](std::size_t w) {
    const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(w) - static_cast<std::ptrdiff_t>(pad_left);
    const std::ptrdiff_t j0 = std::max<std::ptrdiff_t>(0, -shift);
    const std::ptrdiff_t j1 =
        std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(len), static_cast<std::ptrdiff_t>(len) - shift);
    return std::tuple{shift, j0, j1};
  };

  Tensor out({c_out, len});
  const double* xv = x.data().data();
  const double* kv = kernels.data().data();
  for (std::size_t o = 0; o < c_out; ++o) {
    double* row = out.values.data() + o * len;
    std::fill_n(row, len, bias.data()[o]);
    for (std::size_t c = 0; c < c_in; ++c) {
      const double* xr = xv + c * len;
      const double* kr = kv + (o * c_in + c) * width;
      for (std::size_t w = 0; w < width; ++w) {
        const auto [shift, j0, j1] = valid(w);
        const double k = kr[w];
        for (std::ptrdiff_t j = j0; j < j1; ++j) row[j] += k * xr[j + shift];
      }
    }
  }

  return make_op(std::move(out), {x.node(), kernels.node(), bias.node()},
                 [=](Node& self) {
                   const double* xv = self.parents[0]->value.values.data();
                   const double* kv = self.parents[1]->value.values.data();
                   auto* gx = grad_of(self.parents[0]);
                   auto* gk = grad_of(self.parents[1]);
                   auto* gb = grad_of(self.parents[2]);
                   for (std::size_t o = 0; o < c_out; ++o) {
                     const double* go = self.grad.data() + o * len;
                     if (gb) {
                       double s = 0.0;
                       for (std::size_t j = 0; j < len; ++j) s += go[j];
                       (*gb)[o] += s;
                     }
                     for (std::size_t c = 0; c < c_in; ++c) {
                       const double* xr = xv + c * len;
                       const std::size_t kbase = (o * c_in + c) * width;
                       if (gk) {
                         // Tap-contiguous accumulation vectorizes where a per-tap dot product would not.
                         double* gkr = gk->data() + kbase;
                         for (std::size_t j = 0; j < len; ++j) {
                           const std::size_t w0 = j < pad_left ? pad_left - j : 0;
                           const std::size_t w1 = std::min(width, len + pad_left - j);
                           const double g = go[j];
                           const double* xs = xr + j + w0 - pad_left;
                           for (std::size_t w = w0; w < w1; ++w) gkr[w] += g * xs[w - w0];
                         }
                       }
                       for (std::size_t w = 0; w < width; ++w) {
                         const auto [shift, j0, j1] = valid(w);
                         if (gx) {
                           const double k = kv[kbase + w];
                           double* gxr = gx->data() + c * len;
                           for (std::ptrdiff_t j = j0; j < j1; ++j) gxr[j + shift] += k * go[j];
                         }
                       }
                     }
                   }
                 });
}

std::size_t LstmParams::hidden() const { return recurrent_weights.shape().at(1); }
std::size_t LstmParams::input_dim() const { return input_weights.shape().at(1); }

Var lstm_layer(const Var& seq, const LstmParams& params) {
  require_rank(seq, 2, "lstm input");
  require_rank(params.recurrent_weights, 2, "lstm recurrent weights");
  const std::size_t steps = seq.shape()[0], d = seq.shape()[1];
  const std::size_t h = params.hidden();
  const std::size_t g4 = 4 * h;
  require_shape(params.recurrent_weights, {g4, h}, "lstm recurrent weights");
  require_shape(params.input_weights, {g4, d}, "lstm input weights");
  require_shape(params.bias, {g4}, "lstm bias");

  const double* wx = params.input_weights.data().data();
  const double* wh = params.recurrent_weights.data().data();
  const double* bv = params.bias.data().data();
  const double* xv = seq.data().data();

  // Per step: activated gates [i f g o], cell state, hidden state.
  auto gates = std::make_shared<std::vector<double>>(steps * g4);
  auto cells = std::make_shared<std::vector<double>>(steps * h);
  Tensor out({steps, h});

  std::vector<double> pre(g4);
  for (std::size_t t = 0; t < steps; ++t) {
    const double* x_t = xv + t * d;
    const double* h_prev = t ? out.values.data() + (t - 1) * h : nullptr;
    const double* c_prev = t ? cells->data() + (t - 1) * h : nullptr;
    for (std::size_t r = 0; r < g4; ++r) {
      double z = bv[r];
      const double* wr = wx + r * d;
      for (std::size_t k = 0; k < d; ++k) z += wr[k] * x_t[k];
      if (h_prev) {
        const double* ur = wh + r * h;
        for (std::size_t k = 0; k < h; ++k) z += ur[k] * h_prev[k];
      }
      pre[r] = z;
    }
    double* gt = gates->data() + t * g4;
    for (std::size_t k = 0; k < h; ++k) {
      gt[k] = sigmoid(pre[k]);
      gt[h + k] = sigmoid(pre[h + k]);
      gt[2 * h + k] = std::tanh(pre[2 * h + k]);
      gt[3 * h + k] = sigmoid(pre[3 * h + k]);
      const double c = (c_prev ? gt[h + k] * c_prev[k] : 0.0) + gt[k] * gt[2 * h + k];
      (*cells)[t * h + k] = c;
      out.values[t * h + k] = gt[3 * h + k] * std::tanh(c);
    }
  }

  return make_op(
      std::move(out),
      {seq.node(), params.input_weights.node(), params.recurrent_weights.node(),
       params.bias.node()},
      [=](Node& self) {
        const double* xv = self.parents[0]->value.values.data();
        const double* wx = self.parents[1]->value.values.data();
        const double* wh = self.parents[2]->value.values.data();
        const double* hv = self.value.values.data();
        auto* gx = grad_of(self.parents[0]);
        auto* gwx = grad_of(self.parents[1]);
        auto* gwh = grad_of(self.parents[2]);
        auto* gb = grad_of(self.parents[3]);

        std::vector<double> dh_next(h, 0.0), dc_next(h, 0.0), da(g4);
        for (std::size_t t = steps; t-- > 0;) {
          const double* gt = gates->data() + t * g4;
          const double* c_t = cells->data() + t * h;
          const double* c_prev = t ? cells->data() + (t - 1) * h : nullptr;
          const double* h_prev = t ? hv + (t - 1) * h : nullptr;
          for (std::size_t k = 0; k < h; ++k) {
            const double i = gt[k], f = gt[h + k], g = gt[2 * h + k], o = gt[3 * h + k];
            const double tc = std::tanh(c_t[k]);
            const double dh = self.grad[t * h + k] + dh_next[k];
            const double dc = dh * o * (1.0 - tc * tc) + dc_next[k];
            da[k] = dc * g * i * (1.0 - i);
            da[h + k] = (c_prev ? dc * c_prev[k] : 0.0) * f * (1.0 - f);
            da[2 * h + k] = dc * i * (1.0 - g * g);
            da[3 * h + k] = dh * tc * o * (1.0 - o);
            dc_next[k] = dc * f;
          }
          const double* x_t = xv + t * d;
          std::fill(dh_next.begin(), dh_next.end(), 0.0);
          for (std::size_t r = 0; r < g4; ++r) {
            const double a = da[r];
            if (gb) (*gb)[r] += a;
            if (gwx) {
              double* row = gwx->data() + r * d;
              for (std::size_t k = 0; k < d; ++k) row[k] += a * x_t[k];
            }
            if (gx) {
              double* gxt = gx->data() + t * d;
              const double* wr = wx + r * d;
              for (std::size_t k = 0; k < d; ++k) gxt[k] += a * wr[k];
            }
            if (h_prev) {
              const double* ur = wh + r * h;
              if (gwh) {
                double* row = gwh->data() + r * h;
                for (std::size_t k = 0; k < h; ++k) row[k] += a * h_prev[k];
              }
              for (std::size_t k = 0; k < h; ++k) dh_next[k] += a * ur[k];
            }
          }
        }
      });
}

Var dense(const Var& x, const Var& weights, const Var& bias, Activation act) {
  require_rank(weights, 2, "dense weights");
  const std::size_t d_out = weights.shape()[0], d_in = weights.shape()[1];
  require_shape(x, {d_in}, "dense input");
  require_shape(bias, {d_out}, "dense bias");

  Tensor out({d_out});
  const double* w = weights.data().data();
  const double* xv = x.data().data();
  for (std::size_t r = 0; r < d_out; ++r) {
    double z = bias.data()[r];
    const double* wr = w + r * d_in;
    for (std::size_t k = 0; k < d_in; ++k) z += wr[k] * xv[k];
    out.values[r] = act == Activation::Relu ? std::max(z, 0.0) : z;
  }

  return make_op(std::move(out), {x.node(), weights.node(), bias.node()},
                 [=](Node& self) {
                   const double* xv = self.parents[0]->value.values.data();
                   const double* w = self.parents[1]->value.values.data();
                   auto* gx = grad_of(self.parents[0]);
                   auto* gw = grad_of(self.parents[1]);
                   auto* gb = grad_of(self.parents[2]);
                   for (std::size_t r = 0; r < d_out; ++r) {
                     double g = self.grad[r];
                     if (act == Activation::Relu && !(self.value.values[r] > 0.0)) g = 0.0;
                     if (g == 0.0) continue;
                     if (gb) (*gb)[r] += g;
                     if (gw) {
                       double* row = gw->data() + r * d_in;
                       for (std::size_t k = 0; k < d_in; ++k) row[k] += g * xv[k];
                     }
                     if (gx) {
                       const double* wr = w + r * d_in;
                       for (std::size_t k = 0; k < d_in; ++k) (*gx)[k] += g * wr[k];
                     }
                   }
                 });
}

Var mse(const Var& pred, const Var& target) {
  require_shape(target, pred.shape(), "mse");
  const std::size_t n = pred.size();
  if (n == 0) throw Error(ErrorKind::EmptyBatch, "mse over an empty batch");
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = pred.data()[i] - target.data()[i];
    s += r * r;
  }
  const double nd = static_cast<double>(n);
  return make_op(Tensor({1}, {s / nd}), {pred.node(), target.node()}, [nd](Node& self) {
    const auto& p = self.parents[0]->value.values;
    const auto& t = self.parents[1]->value.values;
    const double g = self.grad[0] * 2.0 / nd;
    if (auto* gp = grad_of(self.parents[0])) {
      for (std::size_t i = 0; i < p.size(); ++i) (*gp)[i] += g * (p[i] - t[i]);
    }
    if (auto* gt = grad_of(self.parents[1])) {
      for (std::size_t i = 0; i < p.size(); ++i) (*gt)[i] -= g * (p[i] - t[i]);
    }
  });
}

Var l1_penalty(std::span<const Var> weights) {
  std::vector<NodePtr> parents;
  double s = 0.0;
  for (const Var& w : weights) {
    parents.push_back(w.node());
    for (double v : w.data()) s += std::abs(v);
  }
  return make_op(Tensor({1}, {s}), std::move(parents), [](Node& self) {
    const double g = self.grad[0];
    for (const auto& p : self.parents) {
      if (auto* gp = grad_of(p)) {
        const auto& v = p->value.values;
        for (std::size_t i = 0; i < v.size(); ++i) {
          if (v[i] > 0.0) (*gp)[i] += g;
          else if (v[i] < 0.0) (*gp)[i] -= g;
        }
      }
    }
  });
}

void backward(const Var& loss) {
  if (!loss) throw Error(ErrorKind::InvalidGraph, "backward on an empty handle");
  if (loss.size() != 1) {
    throw Error(ErrorKind::InvalidGraph,
                "backward needs a scalar loss, got shape " + to_string(loss.shape()));
  }
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS gives a topological order of nodes that need gradients.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{loss.node().get(), 0}};
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (Node* n : order) {
    if (n->backward_fn) n->grad.assign(n->value.size(), 0.0);
  }
  loss.node()->grad.assign(1, 1.0);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backward_fn) (*it)->backward_fn(**it);
  }
}

// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'O', 'S', 'C', 'B', 'P', 'T', 'N', 'S'};

template <typename T>
void put(std::ostream& out, T v) {
  static_assert(std::endian::native == std::endian::little, "little-endian host expected");
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(std::istream& in) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) {
    throw Error(ErrorKind::Parse, "checkpoint truncated");
  }
  return v;
}

}  // namespace

void write_tensors(std::ostream& out, std::span<const NamedTensor> tensors) {
  out.write(kMagic, sizeof kMagic);
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& nt : tensors) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(nt.name.size()));
    out.write(nt.name.data(), static_cast<std::streamsize>(nt.name.size()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(nt.tensor.shape.size()));
    for (std::size_t e : nt.tensor.shape) put<std::uint64_t>(out, e);
    out.write(reinterpret_cast<const char*>(nt.tensor.values.data()),
              static_cast<std::streamsize>(nt.tensor.values.size() * sizeof(double)));
  }
  if (!out) throw Error(ErrorKind::Io, "failed writing checkpoint");
}

std::vector<NamedTensor> read_tensors(std::istream& in) {
  char magic[8];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof magic) != 0) {
    throw Error(ErrorKind::Parse, "not a tensor checkpoint (bad magic)");
  }
  const auto version = get<std::uint32_t>(in);
  if (version != kCheckpointVersion) {
    throw Error(ErrorKind::Parse, "unsupported checkpoint version " + std::to_string(version));
  }
  const auto count = get<std::uint32_t>(in);
  std::vector<NamedTensor> out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor nt;
    nt.name.resize(get<std::uint32_t>(in));
    if (!in.read(nt.name.data(), static_cast<std::streamsize>(nt.name.size()))) {
      throw Error(ErrorKind::Parse, "checkpoint truncated in tensor name");
    }
    const auto rank = get<std::uint32_t>(in);
    Shape shape(rank);
    for (auto& e : shape) e = static_cast<std::size_t>(get<std::uint64_t>(in));
    std::vector<double> values(numel(shape));
    if (!in.read(reinterpret_cast<char*>(values.data()),
                 static_cast<std::streamsize>(values.size() * sizeof(double)))) {
      throw Error(ErrorKind::Parse, "checkpoint truncated in tensor '" + nt.name + "'");
    }
    nt.tensor = Tensor(std::move(shape), std::move(values));
    out.push_back(std::move(nt));
  }
  return out;
}

}  // namespace oscbp::ad
