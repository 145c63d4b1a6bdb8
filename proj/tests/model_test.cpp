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

#include <algorithm>
#include <cmath>
#include <vector>

#include "cvae/checkpoint.hpp"
#include "cvae/error.hpp"
#include "cvae/model.hpp"
#include "cvae/rng.hpp"
#include "doctest.h"

using namespace cvae;

namespace {

CvaeArchitecture small_arch(bool zero_bias = false, ReconModel recon = ReconModel::kBernoulli) {
  CvaeArchitecture a;
  a.input_dim = 12;
  a.s_dim = 2;
  a.z_dim = 3;
  a.hidden_dim = 8;
  a.zero_bias = zero_bias;
  a.recon = recon;
  return a;
}

Tensor unit_data(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  Stream rng(seed);
  Tensor x({rows, cols});
  for (double& v : x.values()) v = rng.uniform();
  return x;
}

void zero_layer(DenseLayer& l) {
  l.weights.fill(0.0);
  l.bias.fill(0.0);
}

// Sets every bias in the generator to a nonzero value so bias paths are
// exercised by gradient checks.
void jitter_biases(CvaeModel& m, Stream rng) {
  for (auto* l : {&m.encoder_s.hidden, &m.encoder_s.mean, &m.encoder_s.log_var,
                  &m.encoder_z.hidden, &m.encoder_z.mean, &m.encoder_z.log_var,
                  &m.decoder.hidden, &m.decoder.output, &m.discriminator}) {
    if (l->use_bias) {
      for (double& b : l->bias.values()) b = 0.1 * rng.normal();
    }
  }
}

double sum_abs(const Tensor& t) {
  double s = 0.0;
  for (double v : t.values()) s += std::abs(v);
  return s;
}

}  // namespace

TEST_CASE("zero-bias encoders send zero input to the prior parameters") {
  const auto m = CvaeModel::create(small_arch(true), Stream(1));
  const Tensor x({4, 12}, 0.0);
  for (auto which : {LatentSpace::kSalient, LatentSpace::kIrrelevant}) {
    const auto p = encode(m, x, which);
    CHECK(sum_abs(p.mu()) == 0.0);
    CHECK(sum_abs(p.log_var()) == 0.0);
  }
  CHECK(decode_preactivation(m, Tensor({4, 2}, 0.0), Tensor({4, 3}, 0.0)) == Tensor({4, 12}, 0.0));
  // The composed map x = 0 -> encoders -> decoder is exactly zero.
  const Tensor s = encode(m, x, LatentSpace::kSalient).mu();
  const Tensor z = encode(m, x, LatentSpace::kIrrelevant).mu();
  CHECK(decode_preactivation(m, s, z) == Tensor({4, 12}, 0.0));
}

TEST_CASE("zero-bias models carry no bias parameters") {
  auto m = CvaeModel::create(small_arch(true), Stream(2));
  for (const auto& p : m.generator_parameters()) CHECK(p.name.find("bias") == std::string::npos);
  CHECK(m.discriminator.use_bias);
  CHECK(m.discriminator.out_dim() == 1);
  CHECK(m.decoder.hidden.in_dim() == m.arch.s_dim + m.arch.z_dim);
}

TEST_CASE("encode shape and determinism") {
  CvaeArchitecture a;
  const auto m = CvaeModel::create(a, Stream(3));
  const Tensor x = unit_data(128, 784, 4);
  const auto p1 = encode(m, x, LatentSpace::kSalient);
  const auto p2 = encode(m, x, LatentSpace::kSalient);
  CHECK(p1.mu().shape() == Shape{128, 2});
  CHECK(p1.log_var().shape() == Shape{128, 2});
  CHECK(p1.mu() == p2.mu());
  CHECK(p1.log_var() == p2.log_var());
  CHECK_THROWS_AS(encode(m, unit_data(2, 783, 1), LatentSpace::kSalient), Error);
}

TEST_CASE("decode matches the concatenated decoder path") {
  for (auto recon : {ReconModel::kBernoulli, ReconModel::kGaussian}) {
    const auto m = CvaeModel::create(small_arch(false, recon), Stream(5));
    Stream rng(6);
    const Tensor s = rng.normal_tensor({3, 2});
    const Tensor z = rng.normal_tensor({3, 3});
    // Independent path: manual concatenation, then the raw layer stack.
    Tensor v({3, 5});
    for (std::size_t r = 0; r < 3; ++r) {
      for (std::size_t c = 0; c < 2; ++c) v(r, c) = s(r, c);
      for (std::size_t c = 0; c < 3; ++c) v(r, 2 + c) = z(r, c);
    }
    const Tensor pre = dense_forward(relu(dense_forward(v, m.decoder.hidden)), m.decoder.output);
    CHECK(decode_preactivation(m, s, z) == pre);
    CHECK(decode_concatenated(m, v) == pre);
    const Tensor out = decode(m, s, z);
    CHECK(out.shape() == Shape{3, 12});
    if (recon == ReconModel::kBernoulli) {
      CHECK(out == sigmoid(pre));
      for (double p : out.values()) CHECK((p > 0.0 && p < 1.0));
    } else {
      CHECK(out == pre);
    }
  }
}

TEST_CASE("target_loss with prior-matching encoders has zero KL") {
  auto m = CvaeModel::create(small_arch(), Stream(7));
  for (auto* e : {&m.encoder_s, &m.encoder_z}) {
    zero_layer(e->mean);
    zero_layer(e->log_var);
  }
  Stream rng(8);
  const Tensor x = unit_data(5, 12, 9);
  const auto l = target_loss(m, x, rng.normal_tensor({5, 2}), rng.normal_tensor({5, 3}));
  CHECK(l.kl_s == 0.0);
  CHECK(l.kl_z_target == 0.0);
  CHECK(l.total == l.recon_target);

  const auto lb = background_loss(m, x, rng.normal_tensor({5, 3}));
  CHECK(lb.kl_z_background == 0.0);
}

TEST_CASE("Bernoulli reconstruction at p = 0.5 costs ln 2 per pixel") {
  CvaeArchitecture a;
  auto m = CvaeModel::create(a, Stream(10));
  zero_layer(m.decoder.output);
  Tensor x({3, 784});
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = double((i * 7) % 5 == 0);
  Stream rng(11);
  const auto l = target_loss(m, x, rng.normal_tensor({3, 2}), rng.normal_tensor({3, 2}));
  CHECK(l.recon_target == doctest::Approx(784 * std::log(2.0)).epsilon(1e-12));
  CHECK(l.recon_target == doctest::Approx(543.43).epsilon(1e-5));
}

TEST_CASE("Gaussian reconstruction is half the squared error") {
  auto m = CvaeModel::create(small_arch(false, ReconModel::kGaussian), Stream(12));
  zero_layer(m.decoder.output);
  const Tensor x = unit_data(2, 12, 13);
  Stream rng(14);
  const auto l = target_loss(m, x, rng.normal_tensor({2, 2}), rng.normal_tensor({2, 3}));
  double ref = 0.0;
  for (double v : x.values()) ref += 0.5 * v * v;
  CHECK(l.recon_target == doctest::Approx(ref / 2).epsilon(1e-13));
}

TEST_CASE("background_loss equals target_loss with a zero salient stub") {
  auto m = CvaeModel::create(small_arch(), Stream(15));
  jitter_biases(m, Stream(16));
  Stream rng(17);
  const Tensor b = unit_data(6, 12, 18);
  const Tensor eps_z = rng.normal_tensor({6, 3});
  const auto lb = background_loss(m, b, eps_z);

  // Stub: the salient encoder outputs mu = 0 and log_var = 0 everywhere, and
  // eps_s = 0, so s = 0 and its KL vanishes.
  auto stub = m;
  zero_layer(stub.encoder_s.mean);
  zero_layer(stub.encoder_s.log_var);
  const auto lt = target_loss(stub, b, Tensor({6, 2}, 0.0), eps_z);
  CHECK(lt.kl_s == 0.0);
  CHECK(lb.recon_background == doctest::Approx(lt.recon_target).epsilon(1e-13));
  CHECK(lb.kl_z_background == doctest::Approx(lt.kl_z_target).epsilon(1e-13));
  CHECK(lb.total == doctest::Approx(lt.total).epsilon(1e-13));
}

TEST_CASE("background objective does not touch the salient encoder") {
  auto m = CvaeModel::create(small_arch(), Stream(19));
  jitter_biases(m, Stream(20));
  Stream rng(21);
  const Tensor b = unit_data(4, 12, 22);
  const auto noise = CvaeNoise::draw(m.arch, 4, 4, rng);
  const auto obj = cvae_objective(m, Tensor(), b, noise, ObjectiveTerms{false, true, 1.0});
  const auto params = m.generator_parameters();
  std::size_t salient = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].name.rfind("encoder_s.", 0) == 0) {
      ++salient;
      CHECK(obj.gradients[i] == Tensor(params[i].tensor->shape(), 0.0));
    }
  }
  CHECK(salient == 6);
}

TEST_CASE("loss breakdown total is the documented weighted sum") {
  auto m = CvaeModel::create(small_arch(), Stream(23));
  jitter_biases(m, Stream(24));
  for (double& w : m.discriminator.weights.values()) w += 0.5;
  Stream rng(25);
  const Tensor x = unit_data(4, 12, 26), b = unit_data(4, 12, 27);
  const auto noise = CvaeNoise::draw(m.arch, 4, 4, rng);
  for (double tcw : {0.0, 1.0, 2.5}) {
    const auto l = cvae_objective(m, x, b, noise, ObjectiveTerms{true, true, tcw}).losses;
    const double sum = l.recon_target + l.kl_s + l.kl_z_target + l.recon_background +
                       l.kl_z_background + tcw * l.tc_estimate;
    CHECK(std::abs(l.total - sum) <= 1e-12 * std::abs(sum));
    CHECK(l.weighted_total(tcw) == doctest::Approx(l.total).epsilon(1e-12));
    CHECK(l.kl_s >= 0.0);
    CHECK(l.kl_z_target >= 0.0);
    CHECK(l.kl_z_background >= 0.0);
  }
}

TEST_CASE("full objective passes central-difference gradient checks") {
  for (bool zero_bias : {false, true}) {
    for (auto recon : {ReconModel::kBernoulli, ReconModel::kGaussian}) {
      for (double tcw : {0.0, 1.0}) {
        CAPTURE(zero_bias);
        CAPTURE(tcw);
        auto m = CvaeModel::create(small_arch(zero_bias, recon), Stream(28));
        jitter_biases(m, Stream(29));
        Stream rng(30);
        for (double& w : m.discriminator.weights.values()) w = rng.normal();
        const Tensor x = unit_data(4, 12, 31), b = unit_data(4, 12, 32);
        const auto noise = CvaeNoise::draw(m.arch, 4, 4, rng);
        const ObjectiveTerms terms{true, true, tcw};
        const auto obj = cvae_objective(m, x, b, noise, terms);
        auto refs = m.generator_parameters();
        std::vector<Tensor*> ptrs;
        for (auto& r : refs) ptrs.push_back(r.tensor);
        const auto report = gradient_check(
            [&] { return cvae_objective(m, x, b, noise, terms).losses.total; }, ptrs,
            obj.gradients, 400, 1e-5, Stream(33));
        CAPTURE(report.worst_coordinate);
        CHECK(report.max_relative_error < 1e-4);
      }
    }
  }
}

TEST_CASE("VAE objective passes a gradient check") {
  VaeArchitecture a;
  a.input_dim = 12;
  a.latent_dim = 3;
  a.hidden_dim = 8;
  auto m = VaeModel::create(a, Stream(34));
  Stream rng(35);
  const Tensor x = unit_data(4, 12, 36);
  const Tensor eps = rng.normal_tensor({4, 3});
  const auto obj = vae_objective(m, x, eps);
  CHECK(obj.kl >= 0.0);
  CHECK(obj.total == doctest::Approx(obj.recon + obj.kl).epsilon(1e-14));
  auto refs = m.all_parameters();
  std::vector<Tensor*> ptrs;
  for (auto& r : refs) ptrs.push_back(r.tensor);
  const auto report = gradient_check([&] { return vae_objective(m, x, eps).total; }, ptrs,
                                     obj.gradients, 200, 1e-5, Stream(37));
  CHECK(report.max_relative_error < 1e-4);
}

TEST_CASE("shuffle_latents") {
  Stream rng(38);
  const Tensor s = rng.normal_tensor({6, 2});
  const Tensor z = rng.normal_tensor({6, 3});
  Stream a(39), b(39);
  const auto r1 = shuffle_latents(s, z, a);
  const auto r2 = shuffle_latents(s, z, b);
  CHECK(r1.s == s);
  CHECK(r1.z == r2.z);
  CHECK(r1.permutation == r2.permutation);
  auto rows = [](const Tensor& t) {
    std::vector<std::vector<double>> out;
    for (std::size_t r = 0; r < t.rows(); ++r) out.emplace_back(t.row(r).begin(), t.row(r).end());
    std::sort(out.begin(), out.end());
    return out;
  };
  CHECK(rows(r1.z) == rows(z));
  for (std::size_t i = 0; i < 6; ++i) {
    for (std::size_t c = 0; c < 3; ++c) CHECK(r1.z(i, c) == z(r1.permutation[i], c));
  }

  Stream one(40);
  const auto single = shuffle_latents(Tensor({1, 2}, {1, 2}), Tensor({1, 3}, {3, 4, 5}), one);
  CHECK(single.z == Tensor({1, 3}, {3, 4, 5}));
  CHECK_THROWS_AS(shuffle_latents(s, rng.normal_tensor({5, 3}), one), Error);
}

TEST_CASE("discriminator_forward") {
  CvaeArchitecture a = small_arch();
  a.z_dim = 1;
  a.s_dim = 1;
  auto m = CvaeModel::create(a, Stream(41));
  zero_layer(m.discriminator);
  const Tensor p0 = discriminator_forward(m, Tensor({3, 2}, {1, 2, -3, 4, 100, -100}));
  CHECK(p0 == Tensor({3}, 0.5));
  m.discriminator.weights = Tensor({2, 1}, {std::log(3.0), 0.0});
  const Tensor p = discriminator_forward(m, Tensor({1, 2}, {1, 7}));
  CHECK(p[0] == doctest::Approx(0.75).epsilon(1e-15));
  m.discriminator.weights = Tensor({2, 1}, {1e6, 0.0});
  const Tensor ext = discriminator_forward(m, Tensor({2, 2}, {1, 0, -1, 0}));
  CHECK(ext[0] < 1.0);
  CHECK(ext[1] > 0.0);
  CHECK_THROWS_AS(discriminator_forward(m, Tensor({1, 3}, 0.0)), Error);
}

TEST_CASE("tc_estimate") {
  const double half[] = {0.5, 0.5, 0.5};
  CHECK(tc_estimate(half) == 0.0);
  const double one[] = {0.73};
  CHECK(tc_estimate(one) == doctest::Approx(std::log(0.73 / 0.27)).epsilon(1e-14));
  CHECK(tc_estimate(one) == doctest::Approx(0.9946).epsilon(1e-4));
  const double sym[] = {0.8, 0.2};
  CHECK(tc_estimate(sym) == doctest::Approx(0.0));
  const double edge[] = {1.0, 0.0};
  CHECK(std::isfinite(tc_estimate(edge)));
}

TEST_CASE("discriminator_loss") {
  const double half[] = {0.5, 0.5};
  CHECK(discriminator_loss(half, half) == doctest::Approx(std::log(2.0)).epsilon(1e-14));
  const double hi[] = {1 - 1e-7, 1.0};
  const double lo[] = {1e-7, 0.0};
  CHECK(discriminator_loss(hi, lo) < 2e-7);
  CHECK(discriminator_loss(hi, lo) > 0.0);
}

TEST_CASE("discriminator learns to separate two fixed Gaussians") {
  auto m = CvaeModel::create(small_arch(), Stream(42));
  Stream rng(43);
  Tensor joint = rng.normal_tensor({64, 5});
  Tensor shuffled = rng.normal_tensor({64, 5});
  for (std::size_t r = 0; r < 64; ++r) {
    joint(r, 0) += 2.0;
    shuffled(r, 0) -= 2.0;
  }
  TrainConfig cfg;
  auto opt = CvaeOptimizer::create(m, cfg);
  auto params = m.discriminator_parameters();
  const double first = discriminator_objective(m, joint, shuffled).loss;
  double last = first;
  // Default learning rate 1e-3: the loss needs on the order of 1000 steps to
  // fall below half of ln 2.
  for (int step = 0; step < 2000; ++step) {
    const auto obj = discriminator_objective(m, joint, shuffled);
    for (std::size_t i = 0; i < params.size(); ++i) {
      adam_step(*params[i].tensor, obj.gradients[i], opt.discriminator[i]);
    }
    last = obj.loss;
  }
  CHECK(last < first);
  CHECK(last < 0.5 * std::log(2.0));
}

TEST_CASE("with tc_weight 0 the discriminator cannot influence generator gradients") {
  auto m = CvaeModel::create(small_arch(), Stream(44));
  jitter_biases(m, Stream(45));
  Stream rng(46);
  const Tensor x = unit_data(4, 12, 47), b = unit_data(4, 12, 48);
  const auto noise = CvaeNoise::draw(m.arch, 4, 4, rng);
  const auto with_tc = cvae_objective(m, x, b, noise, ObjectiveTerms{true, true, 0.0});

  // TC-free reference: target and background bounds evaluated separately and
  // summed, with a different discriminator installed.
  auto other = m;
  for (double& w : other.discriminator.weights.values()) w = 3.0 * rng.normal();
  const auto t = cvae_objective(other, x, Tensor(), noise, ObjectiveTerms{true, false, 0.0});
  const auto bg = cvae_objective(other, Tensor(), b, noise, ObjectiveTerms{false, true, 0.0});
  REQUIRE(with_tc.gradients.size() == t.gradients.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < t.gradients.size(); ++i) {
    for (std::size_t j = 0; j < t.gradients[i].size(); ++j) {
      worst = std::max(worst, std::abs(with_tc.gradients[i][j] -
                                       (t.gradients[i][j] + bg.gradients[i][j])));
    }
  }
  CHECK(worst <= 1e-10);

  // And with tc_weight 1 the discriminator does matter.
  const auto on = cvae_objective(m, x, b, noise, ObjectiveTerms{true, true, 1.0});
  for (double& w : m.discriminator.weights.values()) w += 1.0;
  const auto on2 = cvae_objective(m, x, b, noise, ObjectiveTerms{true, true, 1.0});
  CHECK_FALSE(on.gradients[0] == on2.gradients[0]);
}

TEST_CASE("train_step is deterministic and keeps parameters finite") {
  TrainConfig cfg;
  cfg.batch_size = 8;
  const auto arch = small_arch();
  const Tensor x = unit_data(8, 12, 49), b = unit_data(8, 12, 50);
  auto m1 = CvaeModel::create(arch, Stream(51));
  auto m2 = m1;
  auto o1 = CvaeOptimizer::create(m1, cfg);
  auto o2 = CvaeOptimizer::create(m2, cfg);
  Stream r1(52), r2(52);
  const auto l1 = train_step(m1, x, b, o1, r1, cfg);
  const auto l2 = train_step(m2, x, b, o2, r2, cfg);
  CHECK(l1.total == l2.total);
  CHECK(l1.discriminator_loss == l2.discriminator_loss);
  CHECK(m1 == m2);
  for (const auto& p : m1.all_parameters()) CHECK(p.tensor->all_finite());
}

TEST_CASE("training lowers the loss on a fixed batch") {
  TrainConfig cfg;
  cfg.batch_size = 64;
  auto m = CvaeModel::create(small_arch(), Stream(53));
  const Tensor x = unit_data(64, 12, 54), b = unit_data(64, 12, 55);
  auto opt = CvaeOptimizer::create(m, cfg);
  Stream rng(56);
  const auto noise = CvaeNoise::draw(m.arch, 64, 64, rng);
  const double before = cvae_objective(m, x, b, noise, ObjectiveTerms{}).losses.total;
  for (int i = 0; i < 50; ++i) train_step(m, x, b, opt, rng, cfg);
  const double after = cvae_objective(m, x, b, noise, ObjectiveTerms{}).losses.total;
  CHECK(after < before);
}

TEST_CASE("train with zero epochs leaves the initialization untouched") {
  TrainConfig cfg;
  cfg.epochs = 0;
  cfg.seed = 57;
  const auto arch = small_arch();
  auto m = CvaeModel::create(arch, init_stream(cfg.seed));
  const auto init = m;
  const auto report = train(m, unit_data(10, 12, 58), unit_data(7, 12, 59), cfg);
  CHECK(m == init);
  CHECK(report.steps == 0);
}

TEST_CASE("plan_epoch consumes every target row and cycles the background") {
  const auto plan = plan_epoch(5000, 3000, 128, 60, 0);
  CHECK(plan.target_batches.size() == 40);
  std::vector<int> seen(5000, 0);
  for (const auto& batch : plan.target_batches) {
    CHECK(batch.size() == 128);
    for (auto i : batch) ++seen[i];
  }
  // 40 * 128 = 5120 slots: every row at least once, 120 rows twice.
  CHECK(std::count(seen.begin(), seen.end(), 0) == 0);
  CHECK(std::count(seen.begin(), seen.end(), 2) == 120);
  std::vector<int> bseen(3000, 0);
  for (const auto& batch : plan.background_batches) {
    CHECK(batch.size() == 128);
    for (auto i : batch) ++bseen[i];
  }
  CHECK(std::count(bseen.begin(), bseen.end(), 0) == 0);
  CHECK(*std::max_element(bseen.begin(), bseen.end()) == 2);

  const auto again = plan_epoch(5000, 3000, 128, 60, 0);
  CHECK(again.target_batches == plan.target_batches);
  const auto next = plan_epoch(5000, 3000, 128, 60, 1);
  CHECK(next.target_batches != plan.target_batches);
}

TEST_CASE("training is bit-reproducible for a fixed seed") {
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 16;
  cfg.seed = 61;
  const Tensor x = unit_data(40, 12, 62), b = unit_data(30, 12, 63);
  auto run = [&] {
    auto m = CvaeModel::create(small_arch(), init_stream(cfg.seed));
    const auto report = train(m, x, b, cfg);
    return std::make_pair(serialize(m), report.manifest);
  };
  const auto a = run();
  const auto b2 = run();
  CHECK(a.first == b2.first);
  CHECK(a.second == b2.second);

  cfg.seed = 64;
  auto m = CvaeModel::create(small_arch(), init_stream(cfg.seed));
  train(m, x, b, cfg);
  CHECK(serialize(m) != a.first);
}

TEST_CASE("train reports per-epoch logs and a manifest") {
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 8;
  auto m = CvaeModel::create(small_arch(), init_stream(cfg.seed));
  std::size_t calls = 0;
  const auto report = train(m, unit_data(20, 12, 65), unit_data(9, 12, 66), cfg,
                            [&](const EpochLog& log) { CHECK(log.epoch == ++calls); });
  CHECK(calls == 3);
  CHECK(report.epochs.size() == 3);
  CHECK(report.steps == 9);
  for (const char* key : {"\"seed\"", "\"init\"", "\"final_losses\"", "\"tc_weight\""}) {
    CHECK(report.manifest.find(key) != std::string::npos);
  }
}

TEST_CASE("train validates its inputs") {
  TrainConfig cfg;
  auto m = CvaeModel::create(small_arch(), Stream(67));
  CHECK_THROWS_AS(train(m, Tensor::matrix(0, 12), unit_data(3, 12, 1), cfg), Error);
  CHECK_THROWS_AS(train(m, unit_data(3, 11, 1), unit_data(3, 12, 1), cfg), Error);
  cfg.batch_size = 1;
  CHECK_THROWS_AS(cfg.validate(), Error);
}

TEST_CASE("salient inference, lattice sweeps and denoising") {
  auto m = CvaeModel::create(small_arch(true), Stream(68));
  const Tensor x = unit_data(5, 12, 69);
  CHECK(infer_salient(m, x) == encode(m, x, LatentSpace::kSalient).mu());
  CHECK(infer_salient(m, Tensor({2, 12}, 0.0)) == Tensor({2, 2}, 0.0));
  CHECK(infer_salient(m, x).shape() == Shape{5, 2});

  const Tensor grid = lattice_grid(7, -3, 3);
  CHECK(grid.shape() == Shape{49, 2});
  CHECK(grid(0, 0) == -3.0);
  CHECK(grid(0, 1) == -3.0);
  CHECK(grid(1, 0) == -3.0);
  CHECK(grid(1, 1) == -2.0);
  CHECK(grid(48, 0) == 3.0);
  const Tensor sweep = generate_salient_sweep(m, grid);
  CHECK(sweep.shape() == Shape{49, 12});
  CHECK(sweep == decode(m, grid, Tensor({49, 3}, 0.0)));
  CHECK(generate_salient_sweep(m, Tensor({1, 2}, 0.0), DecoderOutput::kPreActivation) ==
        Tensor({1, 12}, 0.0));

  CHECK(denoise(m, x) == decode(m, infer_salient(m, x), Tensor({5, 3}, 0.0)));
  CHECK(denoise(m, Tensor({3, 12}, 0.0), DecoderOutput::kPreActivation) == Tensor({3, 12}, 0.0));
  // A sample whose inferred s equals a grid point denoises to that grid output.
  const Tensor s = infer_salient(m, x);
  CHECK(denoise(m, x) == generate_salient_sweep(m, s));

  const auto biased = CvaeModel::create(small_arch(false), Stream(70));
  try {
    denoise(biased, x);
    FAIL("expected refusal");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kUnsupported);
    CHECK(std::string(e.what()).find("zero-bias") != std::string::npos);
  }
}

TEST_CASE("VAE baseline") {
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 8;
  cfg.seed = 71;
  const Tensor x = unit_data(24, 12, 72);
  auto run = [&] {
    auto v = VaeModel::create(cfg.vae_architecture(12, 5), init_stream(cfg.seed));
    vae_train(v, x, cfg);
    return v;
  };
  const auto a = run();
  CHECK(a == run());
  CHECK(vae_embed(a, x) == encode(a, x).mu());
  CHECK(vae_embed(a, x).shape() == Shape{24, 5});

  // Same total latent width as a 2+3 cVAE: comparable generator size.
  auto c = CvaeModel::create(cfg.cvae_architecture(12), Stream(1));
  auto v = VaeModel::create(cfg.vae_architecture(12, cfg.s_dim + cfg.z_dim), Stream(1));
  const double ratio = double(parameter_count(c.generator_parameters())) /
                       double(parameter_count(v.all_parameters()));
  CHECK(ratio > 1.0);
  CHECK(ratio < 2.0);
}
