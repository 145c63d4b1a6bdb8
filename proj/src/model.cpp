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

#include "cvae/model.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <utility>

#include "json.hpp"

#include "cvae/error.hpp"
#include "cvae/tape.hpp"

namespace cvae {

namespace {

using Var = Tape::Var;

struct BoundLayer {
  Var weights;
  std::optional<Var> bias;
};

struct BoundEncoder {
  BoundLayer hidden, mean, log_var;
};

struct BoundDecoder {
  BoundLayer hidden, output;
};

BoundLayer bind(Tape& tape, const DenseLayer& layer, bool trainable,
                std::vector<Var>* order) {
  auto leaf = [&](const Tensor& t) {
    Var v = trainable ? tape.parameter(t) : tape.constant(t);
    if (order) order->push_back(v);
    return v;
  };
  BoundLayer bound{leaf(layer.weights), std::nullopt};
  if (layer.use_bias) bound.bias = leaf(layer.bias);
  return bound;
}

BoundEncoder bind(Tape& tape, const GaussianEncoder& enc, bool trainable,
                  std::vector<Var>* order) {
  BoundEncoder b{};
  b.hidden = bind(tape, enc.hidden, trainable, order);
  b.mean = bind(tape, enc.mean, trainable, order);
  b.log_var = bind(tape, enc.log_var, trainable, order);
  return b;
}

BoundDecoder bind(Tape& tape, const Decoder& dec, bool trainable,
                  std::vector<Var>* order) {
  BoundDecoder b{};
  b.hidden = bind(tape, dec.hidden, trainable, order);
  b.output = bind(tape, dec.output, trainable, order);
  return b;
}

Var apply(Tape& tape, const BoundLayer& layer, Var x) {
  return ops::dense(tape, x, layer.weights, layer.bias);
}

std::pair<Var, Var> encode_on_tape(Tape& tape, const BoundEncoder& enc, Var x) {
  const Var h = ops::relu(tape, apply(tape, enc.hidden, x));
  const Var mu = apply(tape, enc.mean, h);
  const Var log_var = ops::clamp(tape, apply(tape, enc.log_var, h), kLogVarMin, kLogVarMax);
  return {mu, log_var};
}

Var decode_on_tape(Tape& tape, const BoundDecoder& dec, Var latent) {
  const Var h = ops::relu(tape, apply(tape, dec.hidden, latent));
  return apply(tape, dec.output, h);
}

Var recon_nll(Tape& tape, ReconModel recon, Var preactivation, const Tensor& target) {
  return recon == ReconModel::kBernoulli ? ops::bernoulli_nll(tape, preactivation, target)
                                         : ops::gaussian_nll(tape, preactivation, target);
}

GaussianEncoder make_encoder(std::size_t in, std::size_t hidden, std::size_t latent,
                             bool use_bias, Stream& rng) {
  GaussianEncoder enc;
  enc.hidden = DenseLayer::he_normal(in, hidden, use_bias, rng);
  enc.mean = DenseLayer::he_normal(hidden, latent, use_bias, rng);
  enc.log_var = DenseLayer::he_normal(hidden, latent, use_bias, rng);
  return enc;
}

Decoder make_decoder(std::size_t latent, std::size_t hidden, std::size_t out,
                     bool use_bias, Stream& rng) {
  Decoder dec;
  dec.hidden = DenseLayer::he_normal(latent, hidden, use_bias, rng);
  dec.output = DenseLayer::he_normal(hidden, out, use_bias, rng);
  return dec;
}

void append(std::vector<ParamRef>& out, const std::string& prefix, DenseLayer& layer) {
  out.push_back({prefix + ".weights", &layer.weights});
  if (layer.use_bias) out.push_back({prefix + ".bias", &layer.bias});
}

void append(std::vector<ParamRef>& out, const std::string& prefix, GaussianEncoder& enc) {
  append(out, prefix + ".hidden", enc.hidden);
  append(out, prefix + ".mean", enc.mean);
  append(out, prefix + ".log_var", enc.log_var);
}

void append(std::vector<ParamRef>& out, const std::string& prefix, Decoder& dec) {
  append(out, prefix + ".hidden", dec.hidden);
  append(out, prefix + ".output", dec.output);
}

bool same_layer(const DenseLayer& a, const DenseLayer& b) {
  return a.use_bias == b.use_bias && a.weights == b.weights && a.bias == b.bias;
}

bool same_encoder(const GaussianEncoder& a, const GaussianEncoder& b) {
  return same_layer(a.hidden, b.hidden) && same_layer(a.mean, b.mean) &&
         same_layer(a.log_var, b.log_var);
}

bool same_decoder(const Decoder& a, const Decoder& b) {
  return same_layer(a.hidden, b.hidden) && same_layer(a.output, b.output);
}

Tensor hidden_forward(const DenseLayer& layer, const Tensor& x) {
  return relu(dense_forward(x, layer));
}

GaussianParams encode_plain(const GaussianEncoder& enc, const Tensor& x) {
  const Tensor h = hidden_forward(enc.hidden, x);
  return GaussianParams(dense_forward(h, enc.mean), dense_forward(h, enc.log_var));
}

Tensor decode_plain(const Decoder& dec, const Tensor& latent) {
  return dense_forward(hidden_forward(dec.hidden, latent), dec.output);
}

Tensor apply_head(ReconModel recon, Tensor preactivation) {
  return recon == ReconModel::kBernoulli ? sigmoid(preactivation) : preactivation;
}

void require_width(const Tensor& x, std::size_t width, const char* what) {
  if (x.rank() != 2 || x.cols() != width) {
    fail(ErrorKind::kInvalidArgument, std::string(what) + ": expected width " +
                                          std::to_string(width) + ", got " +
                                          shape_to_string(x.shape()));
  }
}

void require_finite_term(double value, const char* term) {
  if (!std::isfinite(value)) {
    fail(ErrorKind::kNumeric, std::string("non-finite loss term: ") + term);
  }
}

std::vector<Tensor> gradients_of(const Tape& tape, const std::vector<Var>& order) {
  std::vector<Tensor> grads;
  grads.reserve(order.size());
  for (Var v : order) grads.push_back(tape.grad(v));
  return grads;
}

nlohmann::ordered_json losses_json(const LossBreakdown& l) {
  nlohmann::ordered_json j;
  j["recon_target"] = l.recon_target;
  j["kl_s"] = l.kl_s;
  j["kl_z_target"] = l.kl_z_target;
  j["recon_background"] = l.recon_background;
  j["kl_z_background"] = l.kl_z_background;
  j["tc_estimate"] = l.tc_estimate;
  j["discriminator_loss"] = l.discriminator_loss;
  j["total"] = l.total;
  return j;
}

nlohmann::ordered_json config_json(const TrainConfig& c) {
  nlohmann::ordered_json j;
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["learning_rate"] = c.learning_rate;
  j["beta1"] = c.beta1;
  j["beta2"] = c.beta2;
  j["adam_epsilon"] = c.adam_epsilon;
  j["tc_weight"] = c.tc_weight;
  j["seed"] = c.seed;
  j["zero_bias"] = c.zero_bias;
  j["s_dim"] = c.s_dim;
  j["z_dim"] = c.z_dim;
  j["hidden_dim"] = c.hidden_dim;
  j["recon_model"] = to_string(c.recon);
  return j;
}

void accumulate_mean(LossBreakdown& acc, const LossBreakdown& step, double weight) {
  acc.recon_target += weight * step.recon_target;
  acc.kl_s += weight * step.kl_s;
  acc.kl_z_target += weight * step.kl_z_target;
  acc.recon_background += weight * step.recon_background;
  acc.kl_z_background += weight * step.kl_z_background;
  acc.tc_estimate += weight * step.tc_estimate;
  acc.discriminator_loss += weight * step.discriminator_loss;
  acc.total += weight * step.total;
}

Stream step_stream(std::uint64_t seed, std::size_t step) {
  return Stream(seed).split("step").split(static_cast<std::uint64_t>(step));
}

constexpr const char* kInitScheme = "he_normal(std=sqrt(2/fan_in)); biases zero";

}  // namespace

const char* to_string(ReconModel model) {
  return model == ReconModel::kBernoulli ? "bernoulli" : "gaussian";
}

ReconModel parse_recon_model(const std::string& name) {
  if (name == "bernoulli") return ReconModel::kBernoulli;
  if (name == "gaussian") return ReconModel::kGaussian;
  fail(ErrorKind::kInvalidArgument,
       "unknown reconstruction model '" + name + "' (expected bernoulli|gaussian)");
}

CvaeModel CvaeModel::create(const CvaeArchitecture& arch, Stream init) {
  if (arch.input_dim == 0 || arch.s_dim == 0 || arch.z_dim == 0 || arch.hidden_dim == 0) {
    fail(ErrorKind::kInvalidArgument, "cVAE dimensions must be >= 1");
  }
  const bool use_bias = !arch.zero_bias;
  CvaeModel m;
  m.arch = arch;
  m.encoder_s = make_encoder(arch.input_dim, arch.hidden_dim, arch.s_dim, use_bias, init);
  m.encoder_z = make_encoder(arch.input_dim, arch.hidden_dim, arch.z_dim, use_bias, init);
  m.decoder = make_decoder(arch.s_dim + arch.z_dim, arch.hidden_dim, arch.input_dim,
                           use_bias, init);
  m.discriminator = DenseLayer::he_normal(arch.s_dim + arch.z_dim, 1, true, init);
  return m;
}

std::vector<ParamRef> CvaeModel::generator_parameters() {
  std::vector<ParamRef> out;
  append(out, "encoder_s", encoder_s);
  append(out, "encoder_z", encoder_z);
  append(out, "decoder", decoder);
  return out;
}

std::vector<ParamRef> CvaeModel::discriminator_parameters() {
  std::vector<ParamRef> out;
  append(out, "discriminator", discriminator);
  return out;
}

std::vector<ParamRef> CvaeModel::all_parameters() {
  auto out = generator_parameters();
  for (auto& p : discriminator_parameters()) out.push_back(p);
  return out;
}

bool operator==(const CvaeModel& a, const CvaeModel& b) {
  return a.arch.input_dim == b.arch.input_dim && a.arch.s_dim == b.arch.s_dim &&
         a.arch.z_dim == b.arch.z_dim && a.arch.hidden_dim == b.arch.hidden_dim &&
         a.arch.zero_bias == b.arch.zero_bias && a.arch.recon == b.arch.recon &&
         same_encoder(a.encoder_s, b.encoder_s) && same_encoder(a.encoder_z, b.encoder_z) &&
         same_decoder(a.decoder, b.decoder) && same_layer(a.discriminator, b.discriminator);
}

VaeModel VaeModel::create(const VaeArchitecture& arch, Stream init) {
  if (arch.input_dim == 0 || arch.latent_dim == 0 || arch.hidden_dim == 0) {
    fail(ErrorKind::kInvalidArgument, "VAE dimensions must be >= 1");
  }
  const bool use_bias = !arch.zero_bias;
  VaeModel m;
  m.arch = arch;
  m.encoder = make_encoder(arch.input_dim, arch.hidden_dim, arch.latent_dim, use_bias, init);
  m.decoder = make_decoder(arch.latent_dim, arch.hidden_dim, arch.input_dim, use_bias, init);
  return m;
}

std::vector<ParamRef> VaeModel::all_parameters() {
  std::vector<ParamRef> out;
  append(out, "encoder", encoder);
  append(out, "decoder", decoder);
  return out;
}

bool operator==(const VaeModel& a, const VaeModel& b) {
  return a.arch.input_dim == b.arch.input_dim && a.arch.latent_dim == b.arch.latent_dim &&
         a.arch.hidden_dim == b.arch.hidden_dim && a.arch.zero_bias == b.arch.zero_bias &&
         a.arch.recon == b.arch.recon && same_encoder(a.encoder, b.encoder) &&
         same_decoder(a.decoder, b.decoder);
}

std::size_t parameter_count(const std::vector<ParamRef>& params) {
  std::size_t n = 0;
  for (const auto& p : params) n += p.tensor->size();
  return n;
}

double LossBreakdown::weighted_total(double tc_weight) const {
  return recon_target + kl_s + kl_z_target + recon_background + kl_z_background +
         tc_weight * tc_estimate;
}

// --- inference -------------------------------------------------------------

GaussianParams encode(const CvaeModel& model, const Tensor& x, LatentSpace which) {
  require_width(x, model.arch.input_dim, "encode");
  return encode_plain(which == LatentSpace::kSalient ? model.encoder_s : model.encoder_z, x);
}

GaussianParams encode(const VaeModel& model, const Tensor& x) {
  require_width(x, model.arch.input_dim, "encode");
  return encode_plain(model.encoder, x);
}

Tensor decode_concatenated(const CvaeModel& model, const Tensor& latent) {
  require_width(latent, model.arch.s_dim + model.arch.z_dim, "decode");
  return decode_plain(model.decoder, latent);
}

Tensor decode_preactivation(const CvaeModel& model, const Tensor& s, const Tensor& z) {
  require_width(s, model.arch.s_dim, "decode (s)");
  require_width(z, model.arch.z_dim, "decode (z)");
  return decode_concatenated(model, concat_columns(s, z));
}

Tensor decode(const CvaeModel& model, const Tensor& s, const Tensor& z) {
  return apply_head(model.arch.recon, decode_preactivation(model, s, z));
}

Tensor decode(const VaeModel& model, const Tensor& latent) {
  require_width(latent, model.arch.latent_dim, "decode");
  return apply_head(model.arch.recon, decode_plain(model.decoder, latent));
}

Tensor discriminator_forward(const CvaeModel& model, const Tensor& v) {
  require_width(v, model.arch.s_dim + model.arch.z_dim, "discriminator_forward");
  Tensor p = sigmoid(dense_forward(v, model.discriminator));
  Tensor out = Tensor::vector(p.rows());
  for (std::size_t i = 0; i < p.rows(); ++i) {
    out[i] = std::clamp(p(i, 0), kProbClamp, 1.0 - kProbClamp);
  }
  return out;
}

double tc_estimate(std::span<const double> probs) {
  if (probs.empty()) fail(ErrorKind::kInvalidArgument, "tc_estimate: empty batch");
  double acc = 0.0;
  for (double p : probs) {
    const double c = std::clamp(p, kProbClamp, 1.0 - kProbClamp);
    acc += std::log(c) - std::log1p(-c);
  }
  return acc / static_cast<double>(probs.size());
}

double discriminator_loss(std::span<const double> probs_joint,
                          std::span<const double> probs_shuffled) {
  if (probs_joint.empty() || probs_shuffled.empty()) {
    fail(ErrorKind::kInvalidArgument, "discriminator_loss: empty batch");
  }
  double acc = 0.0;
  for (double p : probs_joint) acc -= std::log(std::clamp(p, kProbClamp, 1.0 - kProbClamp));
  for (double p : probs_shuffled) {
    acc -= std::log1p(-std::clamp(p, kProbClamp, 1.0 - kProbClamp));
  }
  return acc / static_cast<double>(probs_joint.size() + probs_shuffled.size());
}

ShuffledLatents shuffle_latents(const Tensor& s, const Tensor& z, Stream& rng) {
  if (s.rows() != z.rows() || s.rank() != 2 || z.rank() != 2) {
    fail(ErrorKind::kInvalidArgument, "shuffle_latents: batch mismatch " +
                                          shape_to_string(s.shape()) + " vs " +
                                          shape_to_string(z.shape()));
  }
  if (s.rows() == 0) fail(ErrorKind::kInvalidArgument, "shuffle_latents: empty batch");
  ShuffledLatents out;
  out.permutation = rng.permutation(z.rows());
  out.s = s;
  out.z = gather_rows(z, out.permutation);
  return out;
}

Tensor infer_salient(const CvaeModel& model, const Tensor& x) {
  return encode(model, x, LatentSpace::kSalient).mu();
}

Tensor infer_salient_sample(const CvaeModel& model, const Tensor& x, const Tensor& eps) {
  return reparameterize(encode(model, x, LatentSpace::kSalient), eps);
}

Tensor generate_salient_sweep(const CvaeModel& model, const Tensor& grid,
                              DecoderOutput output) {
  require_width(grid, model.arch.s_dim, "generate_salient_sweep");
  const Tensor zeros = Tensor::matrix(grid.rows(), model.arch.z_dim);
  Tensor pre = decode_preactivation(model, grid, zeros);
  return output == DecoderOutput::kMean ? apply_head(model.arch.recon, std::move(pre)) : pre;
}

Tensor denoise(const CvaeModel& model, const Tensor& x, DecoderOutput output) {
  if (!model.arch.zero_bias) {
    fail(ErrorKind::kUnsupported,
         "denoise requires a zero-bias model: with biases, a zeroed irrelevant "
         "latent is not guaranteed to map to a zero contribution; retrain with "
         "zero_bias = true");
  }
  return generate_salient_sweep(model, infer_salient(model, x), output);
}

Tensor lattice_grid(std::size_t side, double lo, double hi) {
  if (side == 0) fail(ErrorKind::kInvalidArgument, "lattice_grid: side must be >= 1");
  Tensor grid = Tensor::matrix(side * side, 2);
  const double step = side > 1 ? (hi - lo) / static_cast<double>(side - 1) : 0.0;
  for (std::size_t i = 0; i < side; ++i) {
    for (std::size_t j = 0; j < side; ++j) {
      grid(i * side + j, 0) = side > 1 ? lo + step * static_cast<double>(i) : 0.5 * (lo + hi);
      grid(i * side + j, 1) = side > 1 ? lo + step * static_cast<double>(j) : 0.5 * (lo + hi);
    }
  }
  return grid;
}

// --- objectives ------------------------------------------------------------

CvaeNoise CvaeNoise::draw(const CvaeArchitecture& arch, std::size_t target_rows,
                          std::size_t background_rows, Stream& rng) {
  CvaeNoise noise;
  noise.eps_s = rng.normal_tensor({target_rows, arch.s_dim});
  noise.eps_z = rng.normal_tensor({target_rows, arch.z_dim});
  noise.eps_z_background = rng.normal_tensor({background_rows, arch.z_dim});
  return noise;
}

CvaeObjective cvae_objective(const CvaeModel& model, const Tensor& x, const Tensor& b,
                             const CvaeNoise& noise, const ObjectiveTerms& terms) {
  if (!terms.target && !terms.background) {
    fail(ErrorKind::kInvalidArgument, "cvae_objective: no terms selected");
  }
  if (terms.tc_weight < 0.0) fail(ErrorKind::kInvalidArgument, "tc_weight must be >= 0");
  Tape tape;
  std::vector<Var> order;
  const BoundEncoder enc_s = bind(tape, model.encoder_s, true, &order);
  const BoundEncoder enc_z = bind(tape, model.encoder_z, true, &order);
  const BoundDecoder dec = bind(tape, model.decoder, true, &order);
  const BoundLayer disc = bind(tape, model.discriminator, false, nullptr);

  CvaeObjective result;
  std::vector<std::pair<Var, double>> total_terms;

  if (terms.target) {
    require_width(x, model.arch.input_dim, "target batch");
    const Var xv = tape.constant(x);
    const auto [mu_s, lv_s] = encode_on_tape(tape, enc_s, xv);
    const auto [mu_z, lv_z] = encode_on_tape(tape, enc_z, xv);
    const Var s = ops::reparameterize(tape, mu_s, lv_s, noise.eps_s);
    const Var z = ops::reparameterize(tape, mu_z, lv_z, noise.eps_z);
    const Var latent = ops::concat(tape, s, z);
    const Var recon = ops::mean(tape, recon_nll(tape, model.arch.recon,
                                                decode_on_tape(tape, dec, latent), x));
    const Var kl_s = ops::mean(tape, ops::kl_standard_normal(tape, mu_s, lv_s));
    const Var kl_z = ops::mean(tape, ops::kl_standard_normal(tape, mu_z, lv_z));
    const Var probs = ops::sigmoid(tape, apply(tape, disc, latent));
    const Var tc = ops::mean(tape, ops::log_odds(tape, probs));
    total_terms.insert(total_terms.end(),
                       {{recon, 1.0}, {kl_s, 1.0}, {kl_z, 1.0}, {tc, terms.tc_weight}});
    result.losses.recon_target = tape.value(recon)[0];
    result.losses.kl_s = tape.value(kl_s)[0];
    result.losses.kl_z_target = tape.value(kl_z)[0];
    result.losses.tc_estimate = tape.value(tc)[0];
    result.s_sample = tape.value(s);
    result.z_sample = tape.value(z);
  }
  if (terms.background) {
    require_width(b, model.arch.input_dim, "background batch");
    const Var bv = tape.constant(b);
    const auto [mu_z, lv_z] = encode_on_tape(tape, enc_z, bv);
    const Var z = ops::reparameterize(tape, mu_z, lv_z, noise.eps_z_background);
    const Var zeros = tape.constant(Tensor::matrix(b.rows(), model.arch.s_dim));
    const Var latent = ops::concat(tape, zeros, z);
    const Var recon = ops::mean(tape, recon_nll(tape, model.arch.recon,
                                                decode_on_tape(tape, dec, latent), b));
    const Var kl_z = ops::mean(tape, ops::kl_standard_normal(tape, mu_z, lv_z));
    total_terms.insert(total_terms.end(), {{recon, 1.0}, {kl_z, 1.0}});
    result.losses.recon_background = tape.value(recon)[0];
    result.losses.kl_z_background = tape.value(kl_z)[0];
  }

  const Var total = ops::weighted_sum(tape, total_terms);
  result.losses.total = tape.value(total)[0];
  require_finite_term(result.losses.recon_target, "recon_target");
  require_finite_term(result.losses.kl_s, "kl_s");
  require_finite_term(result.losses.kl_z_target, "kl_z_target");
  require_finite_term(result.losses.tc_estimate, "tc_estimate");
  require_finite_term(result.losses.recon_background, "recon_background");
  require_finite_term(result.losses.kl_z_background, "kl_z_background");
  tape.backward(total);
  result.gradients = gradients_of(tape, order);
  return result;
}

LossBreakdown target_loss(const CvaeModel& model, const Tensor& x, const Tensor& eps_s,
                          const Tensor& eps_z) {
  require_width(x, model.arch.input_dim, "target_loss");
  const GaussianParams qs = encode(model, x, LatentSpace::kSalient);
  const GaussianParams qz = encode(model, x, LatentSpace::kIrrelevant);
  const Tensor pre = decode_preactivation(model, reparameterize(qs, eps_s),
                                          reparameterize(qz, eps_z));
  Tape tape;
  const Var recon = ops::mean(tape, recon_nll(tape, model.arch.recon, tape.constant(pre), x));
  LossBreakdown out;
  out.recon_target = tape.value(recon)[0];
  const Tensor kl_s = kl_to_standard_normal(qs);
  const Tensor kl_z = kl_to_standard_normal(qz);
  for (double v : kl_s.values()) out.kl_s += v;
  for (double v : kl_z.values()) out.kl_z_target += v;
  out.kl_s /= static_cast<double>(x.rows());
  out.kl_z_target /= static_cast<double>(x.rows());
  out.total = out.recon_target + out.kl_s + out.kl_z_target;
  require_finite_term(out.recon_target, "recon_target");
  require_finite_term(out.kl_s, "kl_s");
  require_finite_term(out.kl_z_target, "kl_z_target");
  return out;
}

LossBreakdown background_loss(const CvaeModel& model, const Tensor& b, const Tensor& eps_z) {
  require_width(b, model.arch.input_dim, "background_loss");
  const GaussianParams qz = encode(model, b, LatentSpace::kIrrelevant);
  const Tensor zeros = Tensor::matrix(b.rows(), model.arch.s_dim);
  const Tensor pre = decode_preactivation(model, zeros, reparameterize(qz, eps_z));
  Tape tape;
  const Var recon = ops::mean(tape, recon_nll(tape, model.arch.recon, tape.constant(pre), b));
  LossBreakdown out;
  out.recon_background = tape.value(recon)[0];
  const Tensor kl_z = kl_to_standard_normal(qz);
  for (double v : kl_z.values()) out.kl_z_background += v;
  out.kl_z_background /= static_cast<double>(b.rows());
  out.total = out.recon_background + out.kl_z_background;
  require_finite_term(out.recon_background, "recon_background");
  require_finite_term(out.kl_z_background, "kl_z_background");
  return out;
}

DiscriminatorObjective discriminator_objective(const CvaeModel& model, const Tensor& joint,
                                               const Tensor& shuffled) {
  const std::size_t width = model.arch.s_dim + model.arch.z_dim;
  require_width(joint, width, "discriminator (joint)");
  require_width(shuffled, width, "discriminator (shuffled)");
  if (joint.rows() == 0 || shuffled.rows() == 0) {
    fail(ErrorKind::kInvalidArgument, "discriminator_objective: empty batch");
  }
  Tape tape;
  std::vector<Var> order;
  const BoundLayer disc = bind(tape, model.discriminator, true, &order);
  const Var pj = ops::sigmoid(tape, apply(tape, disc, tape.constant(joint)));
  const Var ps = ops::sigmoid(tape, apply(tape, disc, tape.constant(shuffled)));
  const std::vector<double> ones(joint.rows(), 1.0);
  const std::vector<double> zeros(shuffled.rows(), 0.0);
  const Var lj = ops::binary_cross_entropy(tape, pj, ones);
  const Var ls = ops::binary_cross_entropy(tape, ps, zeros);
  const double n = static_cast<double>(joint.rows() + shuffled.rows());
  const std::pair<Var, double> parts[] = {
      {lj, static_cast<double>(joint.rows()) / n},
      {ls, static_cast<double>(shuffled.rows()) / n}};
  const Var loss = ops::weighted_sum(tape, parts);
  tape.backward(loss);
  DiscriminatorObjective out;
  out.loss = tape.value(loss)[0];
  require_finite_term(out.loss, "discriminator_loss");
  out.gradients = gradients_of(tape, order);
  return out;
}

VaeObjective vae_objective(const VaeModel& model, const Tensor& x, const Tensor& eps) {
  require_width(x, model.arch.input_dim, "vae batch");
  Tape tape;
  std::vector<Var> order;
  const BoundEncoder enc = bind(tape, model.encoder, true, &order);
  const BoundDecoder dec = bind(tape, model.decoder, true, &order);
  const Var xv = tape.constant(x);
  const auto [mu, lv] = encode_on_tape(tape, enc, xv);
  const Var latent = ops::reparameterize(tape, mu, lv, eps);
  const Var recon =
      ops::mean(tape, recon_nll(tape, model.arch.recon, decode_on_tape(tape, dec, latent), x));
  const Var kl = ops::mean(tape, ops::kl_standard_normal(tape, mu, lv));
  const std::pair<Var, double> parts[] = {{recon, 1.0}, {kl, 1.0}};
  const Var total = ops::weighted_sum(tape, parts);
  VaeObjective out;
  out.recon = tape.value(recon)[0];
  out.kl = tape.value(kl)[0];
  out.total = tape.value(total)[0];
  require_finite_term(out.recon, "recon");
  require_finite_term(out.kl, "kl");
  tape.backward(total);
  out.gradients = gradients_of(tape, order);
  return out;
}

// --- training --------------------------------------------------------------

void TrainConfig::validate() const {
  if (batch_size < 2) fail(ErrorKind::kInvalidArgument, "batch_size must be >= 2");
  if (s_dim == 0 || z_dim == 0 || hidden_dim == 0) {
    fail(ErrorKind::kInvalidArgument, "latent and hidden dimensions must be >= 1");
  }
  if (!(learning_rate > 0.0)) fail(ErrorKind::kInvalidArgument, "learning_rate must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    fail(ErrorKind::kInvalidArgument, "beta1 and beta2 must lie in [0, 1)");
  }
  if (!(tc_weight >= 0.0)) fail(ErrorKind::kInvalidArgument, "tc_weight must be >= 0");
}

CvaeArchitecture TrainConfig::cvae_architecture(std::size_t input_dim) const {
  return CvaeArchitecture{input_dim, s_dim, z_dim, hidden_dim, zero_bias, recon};
}

VaeArchitecture TrainConfig::vae_architecture(std::size_t input_dim,
                                              std::size_t latent_dim) const {
  return VaeArchitecture{input_dim, latent_dim, hidden_dim, zero_bias, recon};
}

CvaeOptimizer CvaeOptimizer::create(CvaeModel& model, const TrainConfig& config) {
  CvaeOptimizer opt;
  for (const auto& p : model.generator_parameters()) {
    opt.generator.push_back(AdamState::for_parameter(*p.tensor, config.learning_rate,
                                                     config.beta1, config.beta2,
                                                     config.adam_epsilon));
  }
  for (const auto& p : model.discriminator_parameters()) {
    opt.discriminator.push_back(AdamState::for_parameter(*p.tensor, config.learning_rate,
                                                         config.beta1, config.beta2,
                                                         config.adam_epsilon));
  }
  return opt;
}

VaeOptimizer VaeOptimizer::create(VaeModel& model, const TrainConfig& config) {
  VaeOptimizer opt;
  for (const auto& p : model.all_parameters()) {
    opt.states.push_back(AdamState::for_parameter(*p.tensor, config.learning_rate,
                                                  config.beta1, config.beta2,
                                                  config.adam_epsilon));
  }
  return opt;
}

LossBreakdown train_step(CvaeModel& model, const Tensor& x_batch, const Tensor& b_batch,
                         CvaeOptimizer& optimizer, Stream& rng, const TrainConfig& config) {
  const CvaeNoise noise = CvaeNoise::draw(model.arch, x_batch.rows(), b_batch.rows(), rng);
  CvaeObjective objective =
      cvae_objective(model, x_batch, b_batch, noise, ObjectiveTerms{true, true, config.tc_weight});
  auto generator = model.generator_parameters();
  if (generator.size() != optimizer.generator.size()) {
    fail(ErrorKind::kInvalidArgument, "train_step: optimizer does not match model");
  }
  for (std::size_t k = 0; k < generator.size(); ++k) {
    if (!objective.gradients[k].all_finite()) {
      fail(ErrorKind::kNumeric, "non-finite gradient for " + generator[k].name);
    }
    adam_step(*generator[k].tensor, objective.gradients[k], optimizer.generator[k]);
  }

  const ShuffledLatents shuffled = shuffle_latents(objective.s_sample, objective.z_sample, rng);
  const Tensor joint = concat_columns(objective.s_sample, objective.z_sample);
  const DiscriminatorObjective disc =
      discriminator_objective(model, joint, concat_columns(shuffled.s, shuffled.z));
  auto disc_params = model.discriminator_parameters();
  for (std::size_t k = 0; k < disc_params.size(); ++k) {
    adam_step(*disc_params[k].tensor, disc.gradients[k], optimizer.discriminator[k]);
  }
  objective.losses.discriminator_loss = disc.loss;
  return objective.losses;
}

LossBreakdown vae_train_step(VaeModel& model, const Tensor& x_batch, VaeOptimizer& optimizer,
                             Stream& rng) {
  const Tensor eps = rng.normal_tensor({x_batch.rows(), model.arch.latent_dim});
  const VaeObjective objective = vae_objective(model, x_batch, eps);
  auto params = model.all_parameters();
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (!objective.gradients[k].all_finite()) {
      fail(ErrorKind::kNumeric, "non-finite gradient for " + params[k].name);
    }
    adam_step(*params[k].tensor, objective.gradients[k], optimizer.states[k]);
  }
  LossBreakdown out;
  out.recon_target = objective.recon;
  out.kl_z_target = objective.kl;
  out.total = objective.total;
  return out;
}

Stream init_stream(std::uint64_t seed) { return Stream(seed).split("init"); }

EpochPlan plan_epoch(std::size_t target_rows, std::size_t background_rows,
                     std::size_t batch_size, std::uint64_t seed, std::size_t epoch) {
  EpochPlan plan;
  if (target_rows == 0 || batch_size == 0) return plan;
  const auto target_order =
      Stream(seed).split("target-order").split(static_cast<std::uint64_t>(epoch)).permutation(
          target_rows);
  std::vector<std::size_t> background_order;
  if (background_rows > 0) {
    background_order = Stream(seed)
                           .split("background-order")
                           .split(static_cast<std::uint64_t>(epoch))
                           .permutation(background_rows);
  }
  const std::size_t batches = (target_rows + batch_size - 1) / batch_size;
  for (std::size_t k = 0; k < batches; ++k) {
    std::vector<std::size_t> t(batch_size);
    std::vector<std::size_t> b;
    for (std::size_t j = 0; j < batch_size; ++j) {
      t[j] = target_order[(k * batch_size + j) % target_rows];
    }
    if (background_rows > 0) {
      b.resize(batch_size);
      for (std::size_t j = 0; j < batch_size; ++j) {
        b[j] = background_order[(k * batch_size + j) % background_rows];
      }
    }
    plan.target_batches.push_back(std::move(t));
    plan.background_batches.push_back(std::move(b));
  }
  return plan;
}

TrainReport train(CvaeModel& model, const Tensor& target, const Tensor& background,
                  const TrainConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  if (target.rows() == 0 || background.rows() == 0) {
    fail(ErrorKind::kInvalidArgument, "train: target and background must be non-empty");
  }
  require_width(target, model.arch.input_dim, "train (target)");
  require_width(background, model.arch.input_dim, "train (background)");

  CvaeOptimizer optimizer = CvaeOptimizer::create(model, config);
  TrainReport report;
  std::size_t step = 0;
  LossBreakdown last_good;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const EpochPlan plan =
        plan_epoch(target.rows(), background.rows(), config.batch_size, config.seed, epoch);
    EpochLog log;
    log.epoch = epoch + 1;
    const double weight = 1.0 / static_cast<double>(plan.target_batches.size());
    for (std::size_t k = 0; k < plan.target_batches.size(); ++k, ++step) {
      const Tensor x = gather_rows(target, plan.target_batches[k]);
      const Tensor b = gather_rows(background, plan.background_batches[k]);
      Stream rng = step_stream(config.seed, step);
      LossBreakdown losses;
      try {
        losses = train_step(model, x, b, optimizer, rng, config);
      } catch (const Error& e) {
        fail(e.kind(), std::string(e.what()) + " (epoch " + std::to_string(epoch + 1) +
                           ", step " + std::to_string(step) + "; last good total " +
                           std::to_string(last_good.total) + ")");
      }
      last_good = losses;
      accumulate_mean(log.mean, losses, weight);
      ++log.steps;
    }
    report.epochs.push_back(log);
    if (on_epoch) on_epoch(log);
  }
  report.steps = step;

  nlohmann::ordered_json manifest;
  manifest["model"] = "cvae";
  manifest["seed"] = config.seed;
  manifest["config"] = config_json(config);
  manifest["architecture"] = {{"input_dim", model.arch.input_dim},
                              {"hidden_dim", model.arch.hidden_dim},
                              {"s_dim", model.arch.s_dim},
                              {"z_dim", model.arch.z_dim},
                              {"zero_bias", model.arch.zero_bias},
                              {"recon_model", to_string(model.arch.recon)},
                              {"parameters", parameter_count(model.all_parameters())}};
  manifest["init"] = kInitScheme;
  manifest["target_rows"] = target.rows();
  manifest["background_rows"] = background.rows();
  manifest["steps"] = report.steps;
  manifest["final_losses"] =
      report.epochs.empty() ? nlohmann::ordered_json() : losses_json(report.epochs.back().mean);
  report.manifest = manifest.dump(2);
  return report;
}

TrainReport vae_train(VaeModel& model, const Tensor& data, const TrainConfig& config,
                      const EpochCallback& on_epoch) {
  config.validate();
  if (data.rows() == 0) fail(ErrorKind::kInvalidArgument, "vae_train: empty dataset");
  require_width(data, model.arch.input_dim, "vae_train");
  VaeOptimizer optimizer = VaeOptimizer::create(model, config);
  TrainReport report;
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const EpochPlan plan = plan_epoch(data.rows(), 0, config.batch_size, config.seed, epoch);
    EpochLog log;
    log.epoch = epoch + 1;
    const double weight = 1.0 / static_cast<double>(plan.target_batches.size());
    for (std::size_t k = 0; k < plan.target_batches.size(); ++k, ++step) {
      Stream rng = step_stream(config.seed, step);
      LossBreakdown losses;
      try {
        losses = vae_train_step(model, gather_rows(data, plan.target_batches[k]), optimizer, rng);
      } catch (const Error& e) {
        fail(e.kind(), std::string(e.what()) + " (epoch " + std::to_string(epoch + 1) +
                           ", step " + std::to_string(step) + ")");
      }
      accumulate_mean(log.mean, losses, weight);
      ++log.steps;
    }
    report.epochs.push_back(log);
    if (on_epoch) on_epoch(log);
  }
  report.steps = step;
  nlohmann::ordered_json manifest;
  manifest["model"] = "vae";
  manifest["seed"] = config.seed;
  manifest["config"] = config_json(config);
  manifest["architecture"] = {{"input_dim", model.arch.input_dim},
                              {"hidden_dim", model.arch.hidden_dim},
                              {"latent_dim", model.arch.latent_dim},
                              {"zero_bias", model.arch.zero_bias},
                              {"recon_model", to_string(model.arch.recon)},
                              {"parameters", parameter_count(model.all_parameters())}};
  manifest["init"] = kInitScheme;
  manifest["rows"] = data.rows();
  manifest["steps"] = report.steps;
  manifest["final_losses"] =
      report.epochs.empty() ? nlohmann::ordered_json() : losses_json(report.epochs.back().mean);
  report.manifest = manifest.dump(2);
  return report;
}

Tensor vae_embed(const VaeModel& model, const Tensor& x) { return encode(model, x).mu(); }

}  // namespace cvae
