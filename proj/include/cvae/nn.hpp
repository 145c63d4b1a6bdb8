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
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "cvae/rng.hpp"
#include "cvae/tensor.hpp"

namespace cvae {

inline constexpr double kLogVarMin = -10.0;
inline constexpr double kLogVarMax = 10.0;
inline constexpr double kProbClamp = 1e-7;

/// Fully-connected layer computing input * weights + bias.
struct DenseLayer {
  Tensor weights;  // [in x out]
  Tensor bias;     // [out]; identically zero when !use_bias
  bool use_bias = true;

  std::size_t in_dim() const { return weights.rows(); }
  std::size_t out_dim() const { return weights.cols(); }

  /// He-normal weights (std = sqrt(2 / in)), zero bias.
  static DenseLayer he_normal(std::size_t in, std::size_t out, bool use_bias,
                              Stream& rng);
};

/// Diagonal Gaussian posterior parameters; log_var is clamped on construction.
class GaussianParams {
 public:
  GaussianParams(Tensor mu, Tensor log_var);

  const Tensor& mu() const noexcept { return mu_; }
  const Tensor& log_var() const noexcept { return log_var_; }

 private:
  Tensor mu_;
  Tensor log_var_;
};

struct AdamState {
  Tensor first_moment;
  Tensor second_moment;
  std::uint64_t step_count = 0;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static AdamState for_parameter(const Tensor& param, double learning_rate,
                                 double beta1, double beta2,
                                 double epsilon = 1e-8);
};

Tensor dense_forward(const Tensor& input, const DenseLayer& layer);
Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor reparameterize(const GaussianParams& params, const Tensor& epsilon);
/// Per-sample KL(q || N(0, I)) -> [batch].
Tensor kl_to_standard_normal(const GaussianParams& params);

/// One Adam update with bias correction; mutates `param` and `state`.
void adam_step(Tensor& param, const Tensor& grad, AdamState& state);

struct GradientCheckReport {
  double max_relative_error = 0.0;
  std::size_t probes = 0;
  std::string worst_coordinate;
};

/// Compares `analytic[k]` (the gradient of `loss` w.r.t. `*params[k]`)
/// against central differences at `probe_count` sampled coordinates.
///
/// The relative error of a probe is |a - n| / max(|a|, |n|, kGradCheckFloor).
/// `loss` must read the parameters through the given pointers and be
/// deterministic; parameters are restored after each probe.
GradientCheckReport gradient_check(const std::function<double()>& loss,
                                   std::span<Tensor* const> params,
                                   std::span<const Tensor> analytic,
                                   std::size_t probe_count, double h,
                                   Stream rng);

inline constexpr double kGradCheckFloor = 1e-3;

}  // namespace cvae
