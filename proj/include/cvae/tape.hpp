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

#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <optional>
#include <span>
#include <vector>

#include "cvae/tensor.hpp"

namespace cvae {

/// Reverse-mode gradient tape.
///
/// Every value produced by an op in `cvae::ops` is appended to the tape
/// together with a hand-written backward pass. `backward` walks the tape in
/// reverse order, so inputs always precede outputs.
class Tape {
 public:
  struct Var {
    std::size_t index;
  };
  using BackwardFn = std::function<void(Tape&, const Tensor& out_grad)>;

  Var constant(Tensor value);
  Var parameter(Tensor value);

  const Tensor& value(Var v) const { return nodes_[v.index].value; }
  /// Gradient accumulated by the last `backward`; zeros if never reached.
  Tensor grad(Var v) const;
  bool requires_grad(Var v) const { return nodes_[v.index].requires_grad; }

  /// Seeds d(out)/d(out) = 1 for a single-element `out` and propagates.
  void backward(Var out);

  Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn);
  Var record(Tensor value, std::span<const Var> inputs, BackwardFn fn);
  /// Gradient buffer for `v`, zero-initialized on first access.
  Tensor& grad_buffer(Var v);

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
};

namespace ops {

using Var = Tape::Var;

/// x * w (+ b); x [batch x in], w [in x out], b [out].
Var dense(Tape& tape, Var x, Var w, std::optional<Var> b);
Var relu(Tape& tape, Var x);
Var sigmoid(Tape& tape, Var x);
/// Elementwise clamp; gradient passes only strictly inside (lo, hi).
Var clamp(Tape& tape, Var x, double lo, double hi);
Var concat(Tape& tape, Var a, Var b);
/// mu + exp(0.5 * log_var) * eps with `eps` held constant.
Var reparameterize(Tape& tape, Var mu, Var log_var, const Tensor& eps);
/// Per-row KL(N(mu, exp(log_var)) || N(0, I)) -> [batch].
Var kl_standard_normal(Tape& tape, Var mu, Var log_var);
/// Per-row Bernoulli negative log-likelihood summed over features, from
/// logits: sum softplus(l) - x * l -> [batch].
Var bernoulli_nll(Tape& tape, Var logits, const Tensor& target);
/// Per-row unit-variance Gaussian negative log-likelihood without the
/// constant: 0.5 * sum (out - x)^2 -> [batch].
Var gaussian_nll(Tape& tape, Var output, const Tensor& target);
/// Mean of all elements -> [1].
Var mean(Tape& tape, Var x);
/// log(p / (1 - p)) with p clamped to [kProbClamp, 1 - kProbClamp].
Var log_odds(Tape& tape, Var probs);
/// Mean binary cross-entropy of clamped probabilities against 0/1 labels.
Var binary_cross_entropy(Tape& tape, Var probs, std::span<const double> labels);
/// sum_i weight_i * term_i over single-element terms -> [1].
Var weighted_sum(Tape& tape, std::span<const std::pair<Var, double>> terms);

}  // namespace ops

}  // namespace cvae
