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

#include "cvae/nn.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "cvae/error.hpp"

namespace cvae {

DenseLayer DenseLayer::he_normal(std::size_t in, std::size_t out,
                                 bool use_bias, Stream& rng) {
  DenseLayer layer;
  layer.weights = Tensor::matrix(in, out);
  const double stddev = std::sqrt(2.0 / static_cast<double>(in));
  for (double& w : layer.weights.values()) w = stddev * rng.normal();
  layer.bias = Tensor::vector(out);
  layer.use_bias = use_bias;
  return layer;
}

GaussianParams::GaussianParams(Tensor mu, Tensor log_var)
    : mu_(std::move(mu)), log_var_(std::move(log_var)) {
  require_same_shape(mu_, log_var_, "GaussianParams");
  for (double& v : log_var_.values()) v = std::clamp(v, kLogVarMin, kLogVarMax);
}

AdamState AdamState::for_parameter(const Tensor& param, double learning_rate,
                                   double beta1, double beta2,
                                   double epsilon) {
  AdamState state;
  state.first_moment = Tensor(param.shape());
  state.second_moment = Tensor(param.shape());
  state.learning_rate = learning_rate;
  state.beta1 = beta1;
  state.beta2 = beta2;
  state.epsilon = epsilon;
  return state;
}

Tensor dense_forward(const Tensor& input, const DenseLayer& layer) {
  if (input.rank() != 2 || input.cols() != layer.in_dim()) {
    fail(ErrorKind::kInvalidArgument,
         "dense_forward: input " + shape_to_string(input.shape()) +
             " does not match weights " +
             shape_to_string(layer.weights.shape()));
  }
  Tensor out = Tensor::matrix(input.rows(), layer.out_dim());
  out.view().noalias() = input.view() * layer.weights.view();
  if (layer.use_bias) {
    out.view().rowwise() += layer.bias.view().row(0);
  }
  return out;
}

Tensor relu(const Tensor& x) {
  Tensor out = x;
  for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
  return out;
}

Tensor sigmoid(const Tensor& x) {
  Tensor out = x;
  for (double& v : out.values()) v = 1.0 / (1.0 + std::exp(-v));
  return out;
}

Tensor reparameterize(const GaussianParams& params, const Tensor& epsilon) {
  require_same_shape(params.mu(), epsilon, "reparameterize");
  Tensor out = params.mu();
  const auto lv = params.log_var().values();
  const auto eps = epsilon.values();
  auto o = out.values();
  for (std::size_t i = 0; i < o.size(); ++i) {
    o[i] += std::exp(0.5 * lv[i]) * eps[i];
  }
  return out;
}

Tensor kl_to_standard_normal(const GaussianParams& params) {
  const Tensor& mu = params.mu();
  const Tensor& lv = params.log_var();
  Tensor out = Tensor::vector(mu.rows());
  for (std::size_t r = 0; r < mu.rows(); ++r) {
    double acc = 0.0;
    for (std::size_t c = 0; c < mu.cols(); ++c) {
      const double m = mu(r, c);
      const double l = lv(r, c);
      acc += 1.0 + l - m * m - std::exp(l);
    }
    out[r] = -0.5 * acc;
  }
  return out;
}

void adam_step(Tensor& param, const Tensor& grad, AdamState& state) {
  require_same_shape(param, grad, "adam_step");
  require_same_shape(param, state.first_moment, "adam_step moments");
  ++state.step_count;
  const double t = static_cast<double>(state.step_count);
  const double correction1 = 1.0 - std::pow(state.beta1, t);
  const double correction2 = 1.0 - std::pow(state.beta2, t);
  auto p = param.values();
  const auto g = grad.values();
  auto m = state.first_moment.values();
  auto v = state.second_moment.values();
  for (std::size_t i = 0; i < p.size(); ++i) {
    m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
    v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
    const double m_hat = m[i] / correction1;
    const double v_hat = v[i] / correction2;
    p[i] -= state.learning_rate * m_hat / (std::sqrt(v_hat) + state.epsilon);
  }
}

GradientCheckReport gradient_check(const std::function<double()>& loss,
                                   std::span<Tensor* const> params,
                                   std::span<const Tensor> analytic,
                                   std::size_t probe_count, double h,
                                   Stream rng) {
  if (params.size() != analytic.size()) {
    fail(ErrorKind::kInvalidArgument,
         "gradient_check: parameter and gradient counts differ");
  }
  if (!(h > 0.0)) fail(ErrorKind::kInvalidArgument, "gradient_check: h must be > 0");
  std::vector<std::size_t> candidates;
  for (std::size_t k = 0; k < params.size(); ++k) {
    require_same_shape(*params[k], analytic[k], "gradient_check");
    if (params[k]->size() > 0) candidates.push_back(k);
  }
  GradientCheckReport report;
  if (candidates.empty()) return report;

  auto evaluate = [&](const char* where) {
    const double value = loss();
    if (!std::isfinite(value)) {
      fail(ErrorKind::kNumeric,
           std::string("gradient_check: non-finite loss at ") + where);
    }
    return value;
  };
  evaluate("base point");

  // Round-robin over tensors so every parameter block is probed.
  for (std::size_t probe = 0; probe < probe_count; ++probe) {
    const std::size_t k = candidates[probe % candidates.size()];
    Tensor& p = *params[k];
    const auto i = static_cast<std::size_t>(rng.below(p.size()));
    const double saved = p[i];
    p[i] = saved + h;
    const double up = evaluate("+h probe");
    p[i] = saved - h;
    const double down = evaluate("-h probe");
    p[i] = saved;
    const double numeric = (up - down) / (2.0 * h);
    const double exact = analytic[k][i];
    const double denom =
        std::max({std::abs(numeric), std::abs(exact), kGradCheckFloor});
    const double rel = std::abs(numeric - exact) / denom;
    ++report.probes;
    if (rel > report.max_relative_error) {
      report.max_relative_error = rel;
      std::ostringstream where;
      where << "param " << k << " index " << i << " analytic " << exact
            << " numeric " << numeric;
      report.worst_coordinate = where.str();
    }
  }
  return report;
}

}  // namespace cvae
