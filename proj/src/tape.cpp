// Copyright 2026 The cvae Authors.
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

#include "cvae/tape.hpp"

#include <algorithm>
#include <cmath>

#include "cvae/error.hpp"
#include "cvae/nn.hpp"

namespace cvae {

Tape::Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, false, {}});
  return Var{nodes_.size() - 1};
}

Tape::Var Tape::parameter(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, true, {}});
  return Var{nodes_.size() - 1};
}

Tensor Tape::grad(Var v) const {
  const Node& node = nodes_[v.index];
  return node.grad.empty() && node.value.size() > 0 ? Tensor(node.value.shape())
                                                    : node.grad;
}

Tensor& Tape::grad_buffer(Var v) {
  Node& node = nodes_[v.index];
  if (node.grad.shape() != node.value.shape()) node.grad = Tensor(node.value.shape());
  return node.grad;
}

Tape::Var Tape::record(Tensor value, std::initializer_list<Var> inputs,
                       BackwardFn fn) {
  return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()),
                std::move(fn));
}

Tape::Var Tape::record(Tensor value, std::span<const Var> inputs, BackwardFn fn) {
  const bool needs = std::any_of(inputs.begin(), inputs.end(),
                                 [&](Var v) { return requires_grad(v); });
  nodes_.push_back(Node{std::move(value), {}, needs, needs ? std::move(fn) : BackwardFn{}});
  return Var{nodes_.size() - 1};
}

void Tape::backward(Var out) {
  if (value(out).size() != 1) {
    fail(ErrorKind::kInvalidArgument, "Tape::backward: output is not a scalar");
  }
  for (Node& node : nodes_) node.grad = Tensor();
  grad_buffer(out)[0] = 1.0;
  for (std::size_t i = out.index + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!node.requires_grad || !node.backward || node.grad.empty()) continue;
    // Copy: the callback may grow other nodes' buffers but never this one.
    const Tensor upstream = node.grad;
    node.backward(*this, upstream);
  }
}

namespace ops {

namespace {

void accumulate(Tape& tape, Var target, const Tensor& delta) {
  if (!tape.requires_grad(target)) return;
  Tensor& g = tape.grad_buffer(target);
  g.view() += delta.view();
}

double clamp_prob(double p) { return std::clamp(p, kProbClamp, 1.0 - kProbClamp); }

}  // namespace

Var dense(Tape& tape, Var x, Var w, std::optional<Var> b) {
  const Tensor& xv = tape.value(x);
  const Tensor& wv = tape.value(w);
  if (xv.rank() != 2 || xv.cols() != wv.rows()) {
    fail(ErrorKind::kInvalidArgument,
         "dense: input " + shape_to_string(xv.shape()) +
             " does not match weights " + shape_to_string(wv.shape()));
  }
  Tensor out = Tensor::matrix(xv.rows(), wv.cols());
  out.view().noalias() = xv.view() * wv.view();
  if (b) out.view().rowwise() += tape.value(*b).view().row(0);
  if (b) {
    const Var bias = *b;
    return tape.record(std::move(out), {x, w, bias},
                       [x, w, bias](Tape& t, const Tensor& g) {
                         if (t.requires_grad(x)) {
                           t.grad_buffer(x).view().noalias() +=
                               g.view() * t.value(w).view().transpose();
                         }
                         if (t.requires_grad(w)) {
                           t.grad_buffer(w).view().noalias() +=
                               t.value(x).view().transpose() * g.view();
                         }
                         if (t.requires_grad(bias)) {
                           t.grad_buffer(bias).view().row(0) +=
                               g.view().colwise().sum();
                         }
                       });
  }
  return tape.record(std::move(out), {x, w}, [x, w](Tape& t, const Tensor& g) {
    if (t.requires_grad(x)) {
      t.grad_buffer(x).view().noalias() += g.view() * t.value(w).view().transpose();
    }
    if (t.requires_grad(w)) {
      t.grad_buffer(w).view().noalias() += t.value(x).view().transpose() * g.view();
    }
  });
}

Var relu(Tape& tape, Var x) {
  return tape.record(cvae::relu(tape.value(x)), {x}, [x](Tape& t, const Tensor& g) {
    Tensor d = g;
    const auto in = t.value(x).values();
    auto dv = d.values();
    for (std::size_t i = 0; i < dv.size(); ++i) {
      if (!(in[i] > 0.0)) dv[i] = 0.0;
    }
    accumulate(t, x, d);
  });
}

Var sigmoid(Tape& tape, Var x) {
  Tensor out = cvae::sigmoid(tape.value(x));
  Tensor saved = out;
  return tape.record(std::move(out), {x},
                     [x, saved = std::move(saved)](Tape& t, const Tensor& g) {
                       Tensor d = g;
                       const auto s = saved.values();
                       auto dv = d.values();
                       for (std::size_t i = 0; i < dv.size(); ++i) {
                         dv[i] *= s[i] * (1.0 - s[i]);
                       }
                       accumulate(t, x, d);
                     });
}

Var clamp(Tape& tape, Var x, double lo, double hi) {
  Tensor out = tape.value(x);
  for (double& v : out.values()) v = std::clamp(v, lo, hi);
  return tape.record(std::move(out), {x}, [x, lo, hi](Tape& t, const Tensor& g) {
    Tensor d = g;
    const auto in = t.value(x).values();
    auto dv = d.values();
    for (std::size_t i = 0; i < dv.size(); ++i) {
      if (!(in[i] > lo && in[i] < hi)) dv[i] = 0.0;
    }
    accumulate(t, x, d);
  });
}

Var concat(Tape& tape, Var a, Var b) {
  const std::size_t wa = tape.value(a).cols();
  return tape.record(concat_columns(tape.value(a), tape.value(b)), {a, b},
                     [a, b, wa](Tape& t, const Tensor& g) {
                       const auto n = static_cast<Eigen::Index>(g.rows());
                       const auto left = static_cast<Eigen::Index>(wa);
                       const auto right = static_cast<Eigen::Index>(g.cols()) - left;
                       if (t.requires_grad(a)) {
                         t.grad_buffer(a).view() += g.view().block(0, 0, n, left);
                       }
                       if (t.requires_grad(b)) {
                         t.grad_buffer(b).view() += g.view().block(0, left, n, right);
                       }
                     });
}

Var reparameterize(Tape& tape, Var mu, Var log_var, const Tensor& eps) {
  require_same_shape(tape.value(mu), eps, "reparameterize");
  require_same_shape(tape.value(mu), tape.value(log_var), "reparameterize");
  Tensor out = tape.value(mu);
  Tensor scaled_noise(eps.shape());  // exp(0.5 lv) * eps
  {
    const auto lv = tape.value(log_var).values();
    const auto e = eps.values();
    auto o = out.values();
    auto sn = scaled_noise.values();
    for (std::size_t i = 0; i < o.size(); ++i) {
      sn[i] = std::exp(0.5 * lv[i]) * e[i];
      o[i] += sn[i];
    }
  }
  return tape.record(std::move(out), {mu, log_var},
                     [mu, log_var, sn = std::move(scaled_noise)](Tape& t, const Tensor& g) {
                       accumulate(t, mu, g);
                       if (t.requires_grad(log_var)) {
                         Tensor d = g;
                         auto dv = d.values();
                         const auto s = sn.values();
                         for (std::size_t i = 0; i < dv.size(); ++i) dv[i] *= 0.5 * s[i];
                         accumulate(t, log_var, d);
                       }
                     });
}

Var kl_standard_normal(Tape& tape, Var mu, Var log_var) {
  GaussianParams params(tape.value(mu), tape.value(log_var));
  // Inputs are already clamped upstream; GaussianParams only re-clamps.
  Tensor out = kl_to_standard_normal(params);
  return tape.record(std::move(out), {mu, log_var},
                     [mu, log_var](Tape& t, const Tensor& g) {
                       const Tensor& m = t.value(mu);
                       const Tensor& l = t.value(log_var);
                       const std::size_t rows = m.rows();
                       const std::size_t cols = m.cols();
                       if (t.requires_grad(mu)) {
                         Tensor d(m.shape());
                         for (std::size_t r = 0; r < rows; ++r)
                           for (std::size_t c = 0; c < cols; ++c) d(r, c) = g[r] * m(r, c);
                         accumulate(t, mu, d);
                       }
                       if (t.requires_grad(log_var)) {
                         Tensor d(l.shape());
                         for (std::size_t r = 0; r < rows; ++r)
                           for (std::size_t c = 0; c < cols; ++c)
                             d(r, c) = g[r] * 0.5 * (std::exp(l(r, c)) - 1.0);
                         accumulate(t, log_var, d);
                       }
                     });
}

Var bernoulli_nll(Tape& tape, Var logits, const Tensor& target) {
  const Tensor& lv = tape.value(logits);
  require_same_shape(lv, target, "bernoulli_nll");
  Tensor out = Tensor::vector(lv.rows());
  for (std::size_t r = 0; r < lv.rows(); ++r) {
    double acc = 0.0;
    for (std::size_t c = 0; c < lv.cols(); ++c) {
      const double l = lv(r, c);
      // softplus(l) = max(l, 0) + log1p(exp(-|l|))
      acc += std::max(l, 0.0) + std::log1p(std::exp(-std::abs(l))) - target(r, c) * l;
    }
    out[r] = acc;
  }
  return tape.record(std::move(out), {logits}, [logits, target](Tape& t, const Tensor& g) {
    const Tensor& l = t.value(logits);
    Tensor d(l.shape());
    for (std::size_t r = 0; r < l.rows(); ++r)
      for (std::size_t c = 0; c < l.cols(); ++c)
        d(r, c) = g[r] * (1.0 / (1.0 + std::exp(-l(r, c))) - target(r, c));
    accumulate(t, logits, d);
  });
}

Var gaussian_nll(Tape& tape, Var output, const Tensor& target) {
  const Tensor& ov = tape.value(output);
  require_same_shape(ov, target, "gaussian_nll");
  Tensor out = Tensor::vector(ov.rows());
  for (std::size_t r = 0; r < ov.rows(); ++r) {
    double acc = 0.0;
    for (std::size_t c = 0; c < ov.cols(); ++c) {
      const double e = ov(r, c) - target(r, c);
      acc += e * e;
    }
    out[r] = 0.5 * acc;
  }
  return tape.record(std::move(out), {output}, [output, target](Tape& t, const Tensor& g) {
    const Tensor& o = t.value(output);
    Tensor d(o.shape());
    for (std::size_t r = 0; r < o.rows(); ++r)
      for (std::size_t c = 0; c < o.cols(); ++c)
        d(r, c) = g[r] * (o(r, c) - target(r, c));
    accumulate(t, output, d);
  });
}

Var mean(Tape& tape, Var x) {
  const Tensor& xv = tape.value(x);
  if (xv.size() == 0) fail(ErrorKind::kInvalidArgument, "mean of empty tensor");
  double acc = 0.0;
  for (double v : xv.values()) acc += v;
  const double n = static_cast<double>(xv.size());
  return tape.record(Tensor::vector(1, acc / n), {x}, [x, n](Tape& t, const Tensor& g) {
    Tensor d(t.value(x).shape(), g[0] / n);
    accumulate(t, x, d);
  });
}

Var log_odds(Tape& tape, Var probs) {
  Tensor out = tape.value(probs);
  for (double& v : out.values()) {
    const double p = clamp_prob(v);
    v = std::log(p) - std::log1p(-p);
  }
  return tape.record(std::move(out), {probs}, [probs](Tape& t, const Tensor& g) {
    Tensor d = g;
    const auto p = t.value(probs).values();
    auto dv = d.values();
    for (std::size_t i = 0; i < dv.size(); ++i) {
      const bool inside = p[i] > kProbClamp && p[i] < 1.0 - kProbClamp;
      dv[i] = inside ? dv[i] / (p[i] * (1.0 - p[i])) : 0.0;
    }
    accumulate(t, probs, d);
  });
}

Var binary_cross_entropy(Tape& tape, Var probs, std::span<const double> labels) {
  const Tensor& pv = tape.value(probs);
  if (pv.size() != labels.size() || labels.empty()) {
    fail(ErrorKind::kInvalidArgument, "binary_cross_entropy: label count mismatch");
  }
  std::vector<double> y(labels.begin(), labels.end());
  double acc = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double p = clamp_prob(pv[i]);
    acc -= y[i] * std::log(p) + (1.0 - y[i]) * std::log1p(-p);
  }
  const double n = static_cast<double>(y.size());
  return tape.record(Tensor::vector(1, acc / n), {probs},
                     [probs, y = std::move(y), n](Tape& t, const Tensor& g) {
                       const Tensor& p = t.value(probs);
                       Tensor d(p.shape());
                       for (std::size_t i = 0; i < y.size(); ++i) {
                         const bool inside = p[i] > kProbClamp && p[i] < 1.0 - kProbClamp;
                         if (!inside) continue;
                         d[i] = g[0] / n * (-y[i] / p[i] + (1.0 - y[i]) / (1.0 - p[i]));
                       }
                       accumulate(t, probs, d);
                     });
}

Var weighted_sum(Tape& tape, std::span<const std::pair<Var, double>> terms) {
  double acc = 0.0;
  std::vector<Var> inputs;
  for (const auto& [v, w] : terms) {
    if (tape.value(v).size() != 1) {
      fail(ErrorKind::kInvalidArgument, "weighted_sum: term is not a scalar");
    }
    acc += w * tape.value(v)[0];
    inputs.push_back(v);
  }
  std::vector<std::pair<Var, double>> saved(terms.begin(), terms.end());
  return tape.record(Tensor::vector(1, acc), inputs,
                     [saved = std::move(saved)](Tape& t, const Tensor& g) {
                       for (const auto& [v, w] : saved) {
                         if (t.requires_grad(v)) t.grad_buffer(v)[0] += w * g[0];
                       }
                     });
}

}  // namespace ops

}  // namespace cvae
