// Copyright 2026 The iscon Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "iscon/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>

#include "lstm_kernel.hpp"

namespace iscon {

namespace {

void add_into(Vec& dst, const Vec& src) {
  if (dst.empty()) {
    dst = src;
    return;
  }
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] += src[i];
}

}  // namespace

Var Tape::push(Vec value, std::function<void(Tape&, Gradients&, const Vec&)> backprop) {
  nodes_.push_back(Node{std::move(value), {}, std::move(backprop)});
  return Var{nodes_.size() - 1};
}

double Tape::scalar(Var v) const {
  const Vec& x = value(v);
  if (x.size() != 1) throw std::invalid_argument("node is not a scalar");
  return x[0];
}

Var Tape::constant(Vec value) { return push(std::move(value), nullptr); }

Var Tape::parameter(ParamId id) {
  const Tensor& t = params_->value(id);
  return push(t.data, [id](Tape&, Gradients& grads, const Vec& g) {
    auto& dst = grads[id].data;
    for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
  });
}

Var Tape::embedding(const EmbeddingTable& table, std::size_t row) {
  Vec v = table.lookup(*params_, row);
  const ParamId id = table.table;
  const std::size_t dim = table.dim;
  return push(std::move(v), [id, row, dim](Tape&, Gradients& grads, const Vec& g) {
    double* dst = grads[id].data.data() + row * dim;
    for (std::size_t i = 0; i < dim; ++i) dst[i] += g[i];
    grads.mark_row(id, row);
  });
}

Var Tape::dense(const DenseLayer& layer, Var input) {
  Vec out = layer.forward(*params_, value(input));
  return push(std::move(out), [layer, input](Tape& tape, Gradients& grads, const Vec& g) {
    const Tensor& w = tape.params_->value(layer.weight);
    const Vec& x = tape.value(input);
    Tensor& gw = grads[layer.weight];
    Tensor& gb = grads[layer.bias];
    Vec& dx = tape.grad_of(input);
    if (dx.empty()) dx.assign(layer.in_dim, 0.0);
    for (std::size_t r = 0; r < layer.out_dim; ++r) {
      const double gr = g[r];
      if (gr == 0.0) continue;
      gb.data[r] += gr;
      double* gwr = gw.data.data() + r * layer.in_dim;
      const double* wr = w.data.data() + r * layer.in_dim;
      for (std::size_t k = 0; k < layer.in_dim; ++k) {
        gwr[k] += gr * x[k];
        dx[k] += gr * wr[k];
      }
    }
  });
}

Var Tape::bilstm(const BiLstm& model, std::span<const Var> sequence) {
  if (sequence.empty()) throw std::invalid_argument("bilstm: empty sequence");
  const std::size_t n = sequence.size();
  std::vector<std::size_t> ids(n);
  std::vector<const double*> fwd(n);
  std::vector<const double*> bwd(n);
  for (std::size_t t = 0; t < n; ++t) {
    const Vec& x = value(sequence[t]);
    if (x.size() != model.input_dim) {
      throw std::invalid_argument("bilstm: input width " + std::to_string(x.size()) + ", expected " +
                                  std::to_string(model.input_dim));
    }
    ids[t] = sequence[t].index;
    fwd[t] = x.data();
    bwd[n - 1 - t] = x.data();
  }
  auto traces = std::make_shared<std::pair<detail::LstmTrace, detail::LstmTrace>>();
  detail::lstm_run(*params_, model.forward, model.input_dim, model.hidden_dim, fwd, traces->first);
  detail::lstm_run(*params_, model.backward, model.input_dim, model.hidden_dim, bwd, traces->second);
  Vec out(model.output_dim());
  std::copy(traces->first.final_hidden().begin(), traces->first.final_hidden().end(), out.begin());
  std::copy(traces->second.final_hidden().begin(), traces->second.final_hidden().end(),
            out.begin() + static_cast<std::ptrdiff_t>(model.hidden_dim));

  return push(std::move(out), [model, ids, traces](Tape& tape, Gradients& grads, const Vec& g) {
    const std::size_t n = ids.size();
    const std::size_t h = model.hidden_dim;
    std::vector<const double*> xf(n), xb(n);
    std::vector<double*> dxf(n), dxb(n);
    for (std::size_t t = 0; t < n; ++t) {
      Var v{ids[t]};
      Vec& dx = tape.grad_of(v);
      if (dx.empty()) dx.assign(model.input_dim, 0.0);
      xf[t] = tape.value(v).data();
      dxf[t] = dx.data();
      xb[n - 1 - t] = xf[t];
      dxb[n - 1 - t] = dx.data();
    }
    const std::span<const double> g_all(g);
    detail::lstm_backprop(*tape.params_, model.forward, model.input_dim, h, xf, traces->first,
                          g_all.subspan(0, h), grads, dxf);
    detail::lstm_backprop(*tape.params_, model.backward, model.input_dim, h, xb, traces->second,
                          g_all.subspan(h, h), grads, dxb);
  });
}

Var Tape::concat(std::span<const Var> parts) {
  Vec out;
  std::vector<std::pair<std::size_t, std::size_t>> layout;  // node, width
  for (Var p : parts) {
    const Vec& x = value(p);
    out.insert(out.end(), x.begin(), x.end());
    layout.emplace_back(p.index, x.size());
  }
  return push(std::move(out), [layout](Tape& tape, Gradients&, const Vec& g) {
    std::size_t offset = 0;
    for (auto [index, width] : layout) {
      Vec& dx = tape.grad_of(Var{index});
      if (dx.empty()) dx.assign(width, 0.0);
      for (std::size_t i = 0; i < width; ++i) dx[i] += g[offset + i];
      offset += width;
    }
  });
}

Var Tape::add(Var a, Var b) {
  const Vec& x = value(a);
  const Vec& y = value(b);
  if (x.size() != y.size()) throw std::invalid_argument("add: size mismatch");
  Vec out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + y[i];
  return push(std::move(out), [a, b](Tape& tape, Gradients&, const Vec& g) {
    add_into(tape.grad_of(a), g);
    add_into(tape.grad_of(b), g);
  });
}

Var Tape::scale(Var a, double factor) {
  Vec out = value(a);
  for (double& x : out) x *= factor;
  return push(std::move(out), [a, factor](Tape& tape, Gradients&, const Vec& g) {
    Vec& dx = tape.grad_of(a);
    if (dx.empty()) dx.assign(g.size(), 0.0);
    for (std::size_t i = 0; i < g.size(); ++i) dx[i] += factor * g[i];
  });
}

Var Tape::mean(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("mean: no inputs");
  const std::size_t width = value(parts[0]).size();
  Vec out(width, 0.0);
  std::vector<std::size_t> ids;
  ids.reserve(parts.size());
  for (Var p : parts) {
    const Vec& x = value(p);
    if (x.size() != width) throw std::invalid_argument("mean: size mismatch");
    for (std::size_t i = 0; i < width; ++i) out[i] += x[i];
    ids.push_back(p.index);
  }
  const double inv = 1.0 / static_cast<double>(parts.size());
  for (double& x : out) x *= inv;
  return push(std::move(out), [ids, inv](Tape& tape, Gradients&, const Vec& g) {
    for (std::size_t index : ids) {
      Vec& dx = tape.grad_of(Var{index});
      if (dx.empty()) dx.assign(g.size(), 0.0);
      for (std::size_t i = 0; i < g.size(); ++i) dx[i] += inv * g[i];
    }
  });
}

Var Tape::relu(Var a) {
  Vec out = value(a);
  for (double& x : out) x = x > 0.0 ? x : 0.0;
  return push(std::move(out), [a](Tape& tape, Gradients&, const Vec& g) {
    const Vec& x = tape.value(a);
    Vec& dx = tape.grad_of(a);
    if (dx.empty()) dx.assign(g.size(), 0.0);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (x[i] > 0.0) dx[i] += g[i];
    }
  });
}

Var Tape::l2_normalize(Var a) {
  const Vec& x = value(a);
  double sq = 0.0;
  for (double v : x) sq += v * v;
  const double norm = std::max(std::sqrt(sq), 1e-12);
  Vec out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] / norm;
  const Var result = push(std::move(out), nullptr);
  const bool clamped = std::sqrt(sq) < 1e-12;
  nodes_[result.index].backprop = [a, result, norm, clamped](Tape& tape, Gradients&, const Vec& g) {
    const Vec& y = tape.value(result);
    Vec& dx = tape.grad_of(a);
    if (dx.empty()) dx.assign(g.size(), 0.0);
    if (clamped) {
      for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] / norm;
      return;
    }
    // d(x/|x|) = (g - y (y . g)) / |x|
    double yg = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) yg += y[i] * g[i];
    for (std::size_t i = 0; i < g.size(); ++i) dx[i] += (g[i] - y[i] * yg) / norm;
  };
  return result;
}

Var Tape::dot(Var a, Var b) {
  const Vec& x = value(a);
  const Vec& y = value(b);
  if (x.size() != y.size()) throw std::invalid_argument("dot: size mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) acc += x[i] * y[i];
  return push(Vec{acc}, [a, b](Tape& tape, Gradients&, const Vec& g) {
    const Vec x = tape.value(a);
    const Vec y = tape.value(b);
    Vec& dx = tape.grad_of(a);
    if (dx.empty()) dx.assign(x.size(), 0.0);
    for (std::size_t i = 0; i < x.size(); ++i) dx[i] += g[0] * y[i];
    Vec& dy = tape.grad_of(b);
    if (dy.empty()) dy.assign(y.size(), 0.0);
    for (std::size_t i = 0; i < y.size(); ++i) dy[i] += g[0] * x[i];
  });
}

Var Tape::sum(Var a) {
  const Vec& x = value(a);
  double acc = 0.0;
  for (double v : x) acc += v;
  const std::size_t width = x.size();
  return push(Vec{acc}, [a, width](Tape& tape, Gradients&, const Vec& g) {
    Vec& dx = tape.grad_of(a);
    if (dx.empty()) dx.assign(width, 0.0);
    for (double& d : dx) d += g[0];
  });
}

Var Tape::add_scalars(std::span<const Var> scalars) {
  double acc = 0.0;
  std::vector<std::size_t> ids;
  ids.reserve(scalars.size());
  for (Var s : scalars) {
    acc += scalar(s);
    ids.push_back(s.index);
  }
  return push(Vec{acc}, [ids](Tape& tape, Gradients&, const Vec& g) {
    for (std::size_t index : ids) {
      Vec& dx = tape.grad_of(Var{index});
      if (dx.empty()) dx.assign(1, 0.0);
      dx[0] += g[0];
    }
  });
}

Var Tape::log_sigmoid(Var a) {
  const double x = scalar(a);
  // log sigmoid(x) = -log1p(exp(-x)), evaluated without overflow.
  const double y = x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
  return push(Vec{y}, [a, x](Tape& tape, Gradients&, const Vec& g) {
    Vec& dx = tape.grad_of(a);
    if (dx.empty()) dx.assign(1, 0.0);
    dx[0] += g[0] * detail::sigmoid(-x);
  });
}

Var Tape::softmax_cross_entropy(Var logits, std::size_t target) {
  Vec probs = softmax(value(logits));
  const double loss = cross_entropy(probs, target);
  const bool clamped = probs[target] < kProbabilityFloor;
  return push(Vec{loss}, [logits, target, clamped, probs = std::move(probs)](
                             Tape& tape, Gradients&, const Vec& g) {
    Vec& dx = tape.grad_of(logits);
    if (dx.empty()) dx.assign(probs.size(), 0.0);
    // The floor is flat: no gradient flows once it is engaged.
    if (clamped) return;
    for (std::size_t i = 0; i < probs.size(); ++i) dx[i] += g[0] * probs[i];
    dx[target] -= g[0];
  });
}

void Tape::backward(Var loss, Gradients& grads) {
  if (loss.index >= nodes_.size()) throw std::invalid_argument("backward: unknown node");
  if (nodes_[loss.index].value.size() != 1) {
    throw std::invalid_argument("backward: loss must be a scalar, got " +
                                std::to_string(nodes_[loss.index].value.size()) + " values");
  }
  if (grads.size() != params_->size()) {
    throw std::invalid_argument("backward: gradient buffer does not match parameter set");
  }
  for (auto& node : nodes_) node.grad.clear();
  nodes_[loss.index].grad = {1.0};
  for (std::size_t i = loss.index + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (node.grad.empty() || !node.backprop) continue;
    // Callbacks only write to their inputs, which always precede the node.
    node.backprop(*this, grads, node.grad);
  }
}

}  // namespace iscon
