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
#include <string>
#include <vector>

#include "cvae/nn.hpp"
#include "cvae/rng.hpp"
#include "cvae/tensor.hpp"

namespace cvae {

enum class ReconModel { kBernoulli, kGaussian };
enum class LatentSpace { kSalient, kIrrelevant };

const char* to_string(ReconModel model);
ReconModel parse_recon_model(const std::string& name);

inline constexpr std::size_t kDefaultHiddenWidth = 128;

/// input -> hidden (ReLU) -> {mean, log_var} heads.
struct GaussianEncoder {
  DenseLayer hidden;
  DenseLayer mean;
  DenseLayer log_var;
};

/// latent -> hidden (ReLU) -> output (logits for Bernoulli, values for Gaussian).
struct Decoder {
  DenseLayer hidden;
  DenseLayer output;
};

/// A named view of one trainable tensor inside a model.
struct ParamRef {
  std::string name;
  Tensor* tensor;
};

struct CvaeArchitecture {
  std::size_t input_dim = 784;
  std::size_t s_dim = 2;
  std::size_t z_dim = 2;
  std::size_t hidden_dim = kDefaultHiddenWidth;
  bool zero_bias = false;
  ReconModel recon = ReconModel::kBernoulli;
};

struct CvaeModel {
  CvaeArchitecture arch;
  GaussianEncoder encoder_s;
  GaussianEncoder encoder_z;
  Decoder decoder;
  DenseLayer discriminator;  // [s_dim + z_dim -> 1], always biased

  /// He-normal initialization from `init`.
  static CvaeModel create(const CvaeArchitecture& arch, Stream init);

  /// Encoders and decoder, in checkpoint order. Bias tensors are listed only
  /// for layers with use_bias.
  std::vector<ParamRef> generator_parameters();
  std::vector<ParamRef> discriminator_parameters();
  std::vector<ParamRef> all_parameters();

  friend bool operator==(const CvaeModel&, const CvaeModel&);
};

struct VaeArchitecture {
  std::size_t input_dim = 784;
  std::size_t latent_dim = 2;
  std::size_t hidden_dim = kDefaultHiddenWidth;
  bool zero_bias = false;
  ReconModel recon = ReconModel::kBernoulli;
};

struct VaeModel {
  VaeArchitecture arch;
  GaussianEncoder encoder;
  Decoder decoder;

  static VaeModel create(const VaeArchitecture& arch, Stream init);
  std::vector<ParamRef> all_parameters();

  friend bool operator==(const VaeModel&, const VaeModel&);
};

std::size_t parameter_count(const std::vector<ParamRef>& params);

/// Per-batch means of every objective term.
struct LossBreakdown {
  double recon_target = 0.0;
  double kl_s = 0.0;
  double kl_z_target = 0.0;
  double recon_background = 0.0;
  double kl_z_background = 0.0;
  double tc_estimate = 0.0;
  double discriminator_loss = 0.0;
  double total = 0.0;

  /// recon_target + kl_s + kl_z_target + recon_background + kl_z_background
  /// + tc_weight * tc_estimate.
  double weighted_total(double tc_weight) const;
};

// --- inference -------------------------------------------------------------

GaussianParams encode(const CvaeModel& model, const Tensor& x, LatentSpace which);
GaussianParams encode(const VaeModel& model, const Tensor& x);

/// Decoder output before the Bernoulli sigmoid head.
Tensor decode_preactivation(const CvaeModel& model, const Tensor& s, const Tensor& z);
/// Decoder mean: sigmoid probabilities for Bernoulli, raw values for Gaussian.
Tensor decode(const CvaeModel& model, const Tensor& s, const Tensor& z);
Tensor decode(const VaeModel& model, const Tensor& latent);
/// Runs the decoder stack on an already concatenated [s | z] input.
Tensor decode_concatenated(const CvaeModel& model, const Tensor& latent);

/// Discriminator probabilities for rows v = [s | z] -> [batch].
Tensor discriminator_forward(const CvaeModel& model, const Tensor& v);

/// Mean over the batch of log(p / (1 - p)) with clamped p.
double tc_estimate(std::span<const double> probs);
/// Binary cross-entropy with joint rows labeled 1 and shuffled rows 0,
/// averaged over all rows.
double discriminator_loss(std::span<const double> probs_joint,
                          std::span<const double> probs_shuffled);

struct ShuffledLatents {
  Tensor s;
  Tensor z;
  std::vector<std::size_t> permutation;
};

/// Permutes the rows of z with a uniform permutation; s is returned as is.
ShuffledLatents shuffle_latents(const Tensor& s, const Tensor& z, Stream& rng);

/// Posterior means of the salient encoder.
Tensor infer_salient(const CvaeModel& model, const Tensor& x);
/// One draw from the salient posterior using caller-supplied noise.
Tensor infer_salient_sample(const CvaeModel& model, const Tensor& x, const Tensor& eps);

enum class DecoderOutput { kMean, kPreActivation };

/// decode(s_k, 0) for every grid row s_k, in grid order.
Tensor generate_salient_sweep(const CvaeModel& model, const Tensor& grid,
                              DecoderOutput output = DecoderOutput::kMean);

/// decode(infer_salient(x), 0). Requires a zero-bias model.
Tensor denoise(const CvaeModel& model, const Tensor& x,
               DecoderOutput output = DecoderOutput::kMean);

/// Square lattice of `side` x `side` points over [lo, hi]^2, row-major with
/// the first coordinate varying slowest.
Tensor lattice_grid(std::size_t side, double lo, double hi);

// --- objectives ------------------------------------------------------------

/// Standard-normal noise for one cVAE step.
struct CvaeNoise {
  Tensor eps_s;             // [batch x s_dim], target
  Tensor eps_z;             // [batch x z_dim], target
  Tensor eps_z_background;  // [batch x z_dim]

  static CvaeNoise draw(const CvaeArchitecture& arch, std::size_t target_rows,
                        std::size_t background_rows, Stream& rng);
};

/// Which parts of the generator objective to evaluate.
struct ObjectiveTerms {
  bool target = true;
  bool background = true;
  double tc_weight = 1.0;
};

struct CvaeObjective {
  LossBreakdown losses;
  /// Aligned with CvaeModel::generator_parameters().
  std::vector<Tensor> gradients;
  /// Sampled target latents from the forward pass.
  Tensor s_sample;
  Tensor z_sample;
};

/// Generator objective and its gradient w.r.t. encoders and decoder.
///
/// The TC penalty is tc_weight * tc_estimate(D([s | z])) with the
/// discriminator held fixed; its gradient reaches both encoders through the
/// sampled latents. `x` or `b` may be empty when the matching term is off.
CvaeObjective cvae_objective(const CvaeModel& model, const Tensor& x, const Tensor& b,
                             const CvaeNoise& noise, const ObjectiveTerms& terms);

/// Target bound terms (recon_target, kl_s, kl_z_target; total = their sum).
LossBreakdown target_loss(const CvaeModel& model, const Tensor& x, const Tensor& eps_s,
                          const Tensor& eps_z);
/// Background bound terms (recon_background, kl_z_background; total = sum).
/// The salient slot of the decoder input is a zero tensor.
LossBreakdown background_loss(const CvaeModel& model, const Tensor& b, const Tensor& eps_z);

struct DiscriminatorObjective {
  double loss = 0.0;
  std::vector<Tensor> gradients;  // aligned with discriminator_parameters()
};

/// Discriminator BCE on detached joint rows and shuffled rows.
DiscriminatorObjective discriminator_objective(const CvaeModel& model,
                                               const Tensor& joint,
                                               const Tensor& shuffled);

struct VaeObjective {
  double recon = 0.0;
  double kl = 0.0;
  double total = 0.0;
  std::vector<Tensor> gradients;  // aligned with VaeModel::all_parameters()
};

VaeObjective vae_objective(const VaeModel& model, const Tensor& x, const Tensor& eps);

// --- training --------------------------------------------------------------

struct TrainConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 128;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  double tc_weight = 1.0;
  std::uint64_t seed = 0;
  bool zero_bias = false;
  std::size_t s_dim = 2;
  std::size_t z_dim = 2;
  std::size_t hidden_dim = kDefaultHiddenWidth;
  ReconModel recon = ReconModel::kBernoulli;

  /// Throws kInvalidArgument on batch_size < 2, zero dims, negative rates.
  void validate() const;
  CvaeArchitecture cvae_architecture(std::size_t input_dim) const;
  /// Latent width s_dim + z_dim is not implied; the VAE uses `latent_dim`.
  VaeArchitecture vae_architecture(std::size_t input_dim, std::size_t latent_dim) const;
};

/// Adam states for every generator and discriminator tensor.
struct CvaeOptimizer {
  std::vector<AdamState> generator;
  std::vector<AdamState> discriminator;

  static CvaeOptimizer create(CvaeModel& model, const TrainConfig& config);
};

struct VaeOptimizer {
  std::vector<AdamState> states;
  static VaeOptimizer create(VaeModel& model, const TrainConfig& config);
};

/// One joint update: generator Adam step on the full objective, then one
/// discriminator Adam step on freshly shuffled latents.
LossBreakdown train_step(CvaeModel& model, const Tensor& x_batch, const Tensor& b_batch,
                         CvaeOptimizer& optimizer, Stream& rng, const TrainConfig& config);

/// Returns (recon, kl, total) in a LossBreakdown's target fields.
LossBreakdown vae_train_step(VaeModel& model, const Tensor& x_batch, VaeOptimizer& optimizer,
                             Stream& rng);

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  std::size_t steps = 0;
  LossBreakdown mean;
};

struct TrainReport {
  std::vector<EpochLog> epochs;
  std::size_t steps = 0;
  /// JSON run manifest: seed, config, initialization scheme, final losses.
  std::string manifest;
};

/// Streams derived from `config.seed`; `create_*` below use the "init" child.
Stream init_stream(std::uint64_t seed);

/// Row order of one epoch: every target row once, background rows cycled.
struct EpochPlan {
  std::vector<std::vector<std::size_t>> target_batches;
  std::vector<std::vector<std::size_t>> background_batches;
};
EpochPlan plan_epoch(std::size_t target_rows, std::size_t background_rows,
                     std::size_t batch_size, std::uint64_t seed, std::size_t epoch);

using EpochCallback = std::function<void(const EpochLog&)>;

TrainReport train(CvaeModel& model, const Tensor& target, const Tensor& background,
                  const TrainConfig& config, const EpochCallback& on_epoch = {});
TrainReport vae_train(VaeModel& model, const Tensor& data, const TrainConfig& config,
                      const EpochCallback& on_epoch = {});

/// Posterior means of the VAE encoder.
Tensor vae_embed(const VaeModel& model, const Tensor& x);

}  // namespace cvae
