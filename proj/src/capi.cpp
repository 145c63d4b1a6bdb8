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

#include "cvae/cvae.h"

#include <algorithm>
#include <cstdio>
#include <memory>
#include <new>
#include <set>
#include <sstream>
#include <string>
#include <variant>

#include "cvae/checkpoint.hpp"
#include "cvae/config.hpp"
#include "cvae/data.hpp"
#include "cvae/error.hpp"
#include "cvae/eval.hpp"
#include "cvae/experiments.hpp"
#include "cvae/model.hpp"

struct cvae_dataset {
  cvae::Dataset ds;
};

struct cvae_model {
  std::variant<cvae::CvaeModel, cvae::VaeModel> model;
  std::string manifest;
  std::string loss_csv;
};

namespace {

thread_local std::string g_last_error;

cvae_status to_status(cvae::ErrorKind kind) {
  switch (kind) {
    case cvae::ErrorKind::kInvalidArgument: return CVAE_ERR_INVALID_ARGUMENT;
    case cvae::ErrorKind::kFormat: return CVAE_ERR_FORMAT;
    case cvae::ErrorKind::kIo: return CVAE_ERR_IO;
    case cvae::ErrorKind::kNumeric: return CVAE_ERR_NUMERIC;
    case cvae::ErrorKind::kUnsupported: return CVAE_ERR_UNSUPPORTED;
  }
  return CVAE_ERR_INTERNAL;
}

template <typename Fn>
cvae_status guarded(Fn&& fn) {
  try {
    fn();
    g_last_error.clear();
    return CVAE_OK;
  } catch (const cvae::Error& e) {
    g_last_error = e.what();
    return to_status(e.kind());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return CVAE_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return CVAE_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return CVAE_ERR_INTERNAL;
  }
}

template <typename T>
const T& deref(const T* p, const char* what) {
  if (!p) cvae::fail(cvae::ErrorKind::kInvalidArgument, std::string(what) + " is NULL");
  return *p;
}

template <typename T>
T* out_ptr(T* p, const char* what) {
  if (!p) cvae::fail(cvae::ErrorKind::kInvalidArgument, std::string(what) + " is NULL");
  return p;
}

// One config file can serve every command, so training and recipe keys are
// accepted everywhere and ignored where they do not apply.
const std::set<std::string>& all_keys() {
  static const std::set<std::string> keys = [] {
    std::set<std::string> k = cvae::train_keys();
    k.insert(cvae::recipe_keys().begin(), cvae::recipe_keys().end());
    return k;
  }();
  return keys;
}

std::string text(const char* s) { return s ? std::string(s) : std::string(); }

void copy_out(const cvae::Tensor& t, double* out, std::size_t len) {
  if (!out || len != t.size()) {
    cvae::fail(cvae::ErrorKind::kInvalidArgument, "output buffer holds " + std::to_string(len) +
                                                      " values, need " + std::to_string(t.size()));
  }
  std::copy(t.values().begin(), t.values().end(), out);
}

cvae_dataset* wrap(cvae::Dataset ds) { return new cvae_dataset{std::move(ds)}; }

cvae_losses to_c(const cvae::LossBreakdown& l) {
  return {l.recon_target,     l.kl_s,        l.kl_z_target,        l.recon_background,
          l.kl_z_background, l.tc_estimate, l.discriminator_loss, l.total};
}

std::string loss_csv(const cvae::TrainReport& report) {
  std::ostringstream out;
  out << "epoch,steps,recon_target,kl_s,kl_z_target,recon_background,kl_z_background,"
         "tc_estimate,discriminator_loss,total\n";
  out.precision(17);
  for (const auto& e : report.epochs) {
    const auto& l = e.mean;
    out << e.epoch << ',' << e.steps << ',' << l.recon_target << ',' << l.kl_s << ','
        << l.kl_z_target << ',' << l.recon_background << ',' << l.kl_z_background << ','
        << l.tc_estimate << ',' << l.discriminator_loss << ',' << l.total << '\n';
  }
  return out.str();
}

}  // namespace

extern "C" {

const char* cvae_version(void) { return "1.0.0"; }

const char* cvae_last_error(void) { return g_last_error.c_str(); }

const char* cvae_status_name(cvae_status status) {
  switch (status) {
    case CVAE_OK: return "ok";
    case CVAE_ERR_INVALID_ARGUMENT: return "invalid argument";
    case CVAE_ERR_FORMAT: return "format error";
    case CVAE_ERR_IO: return "I/O error";
    case CVAE_ERR_NUMERIC: return "numeric error";
    case CVAE_ERR_UNSUPPORTED: return "unsupported";
    case CVAE_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

cvae_status cvae_synthesize(const char* recipe, cvae_dataset** target,
                            cvae_dataset** background) {
  return guarded([&] {
    out_ptr(target, "target");
    out_ptr(background, "background");
    const auto cfg = cvae::KeyValueConfig::parse(text(recipe), "recipe");
    cfg.require_known(all_keys());
    cvae::DatasetRecipe r;
    cvae::apply_recipe_keys(cfg, r);
    cvae::PreparedData data = cvae::prepare_data(r);
    *target = wrap(std::move(data.target));
    *background = wrap(std::move(data.background));
  });
}

cvae_status cvae_dataset_load_idx(const char* images_path, const char* labels_path,
                                  cvae_dataset** out) {
  return guarded([&] {
    *out_ptr(out, "out") = wrap(cvae::load_idx(text(images_path), text(labels_path)));
  });
}

cvae_status cvae_dataset_load_csv(const char* path, size_t expected_width, int min_max,
                                  cvae_dataset** out) {
  return guarded([&] {
    cvae::CsvOptions options;
    if (expected_width) options.expected_width = expected_width;
    options.min_max = min_max != 0;
    *out_ptr(out, "out") = wrap(cvae::load_tabular_csv(text(path), options));
  });
}

cvae_status cvae_dataset_load(const char* path, cvae_dataset** out) {
  return guarded([&] { *out_ptr(out, "out") = wrap(cvae::load_dataset(text(path))); });
}

cvae_status cvae_dataset_save(const cvae_dataset* ds, const char* path) {
  return guarded([&] { cvae::save_dataset(text(path), deref(ds, "dataset").ds); });
}

cvae_status cvae_dataset_add_noise(const cvae_dataset* ds, double noise_scale, uint64_t seed,
                                   cvae_dataset** out) {
  return guarded([&] {
    cvae::Stream rng = cvae::Stream(seed).split("noise");
    *out_ptr(out, "out") =
        wrap(cvae::add_isotropic_noise(deref(ds, "dataset").ds, noise_scale, rng));
  });
}

cvae_status cvae_dataset_contaminate(const cvae_dataset* primary, const cvae_dataset* contaminant,
                                     double fraction, uint64_t seed, cvae_dataset** out) {
  return guarded([&] {
    cvae::Stream rng = cvae::Stream(seed).split("contaminate");
    *out_ptr(out, "out") = wrap(cvae::contaminate(deref(primary, "primary").ds,
                                                  deref(contaminant, "contaminant").ds,
                                                  fraction, rng));
  });
}

cvae_status cvae_dataset_shape(const cvae_dataset* ds, size_t* rows, size_t* width) {
  return guarded([&] {
    const auto& d = deref(ds, "dataset").ds;
    *out_ptr(rows, "rows") = d.size();
    *out_ptr(width, "width") = d.width();
  });
}

cvae_status cvae_dataset_has_labels(const cvae_dataset* ds, int* has_labels) {
  return guarded([&] {
    *out_ptr(has_labels, "has_labels") = deref(ds, "dataset").ds.labels.has_value() ? 1 : 0;
  });
}

cvae_status cvae_dataset_copy_samples(const cvae_dataset* ds, double* out, size_t len) {
  return guarded([&] { copy_out(deref(ds, "dataset").ds.samples, out, len); });
}

cvae_status cvae_dataset_copy_labels(const cvae_dataset* ds, int* out, size_t len) {
  return guarded([&] {
    const auto& d = deref(ds, "dataset").ds;
    if (!d.labels) cvae::fail(cvae::ErrorKind::kInvalidArgument, "dataset has no labels");
    if (!out || len != d.labels->size()) {
      cvae::fail(cvae::ErrorKind::kInvalidArgument, "label buffer size mismatch");
    }
    std::copy(d.labels->begin(), d.labels->end(), out);
  });
}

cvae_status cvae_dataset_provenance(const cvae_dataset* ds, const char** out) {
  return guarded([&] { *out_ptr(out, "text") = deref(ds, "dataset").ds.provenance.c_str(); });
}

void cvae_dataset_free(cvae_dataset* ds) { delete ds; }

cvae_status cvae_model_train(cvae_model_kind kind, const char* config, size_t latent_dim,
                             const cvae_dataset* target, const cvae_dataset* background,
                             cvae_epoch_callback on_epoch, void* user, cvae_model** out) {
  return guarded([&] {
    out_ptr(out, "out");
    const auto cfg = cvae::KeyValueConfig::parse(text(config), "config");
    cfg.require_known(all_keys());
    cvae::TrainConfig tc;
    cvae::apply_train_keys(cfg, tc);
    const auto& t = deref(target, "target").ds;
    cvae::EpochCallback callback;
    if (on_epoch) {
      callback = [&](const cvae::EpochLog& log) {
        const cvae_losses l = to_c(log.mean);
        on_epoch(log.epoch, &l, user);
      };
    }
    auto handle = std::make_unique<cvae_model>();
    if (kind == CVAE_MODEL_CVAE) {
      const auto& b = deref(background, "background").ds;
      auto model = cvae::CvaeModel::create(tc.cvae_architecture(t.width()),
                                           cvae::init_stream(tc.seed));
      const auto report = cvae::train(model, t.samples, b.samples, tc, callback);
      handle->model = std::move(model);
      handle->manifest = report.manifest;
      handle->loss_csv = loss_csv(report);
    } else if (kind == CVAE_MODEL_VAE) {
      if (latent_dim == 0) cvae::fail(cvae::ErrorKind::kInvalidArgument, "latent_dim must be >= 1");
      auto model = cvae::VaeModel::create(tc.vae_architecture(t.width(), latent_dim),
                                          cvae::init_stream(tc.seed));
      const auto report = cvae::vae_train(model, t.samples, tc, callback);
      handle->model = std::move(model);
      handle->manifest = report.manifest;
      handle->loss_csv = loss_csv(report);
    } else {
      cvae::fail(cvae::ErrorKind::kInvalidArgument, "unknown model kind");
    }
    *out = handle.release();
  });
}

cvae_status cvae_model_load(const char* path, cvae_model** out) {
  return guarded([&] {
    out_ptr(out, "out");
    const std::string p = text(path);
    auto handle = std::make_unique<cvae_model>();
    if (cvae::peek_model_kind(p) == cvae::ModelKind::kCvae) {
      handle->model = cvae::load_cvae_checkpoint(p);
    } else {
      handle->model = cvae::load_vae_checkpoint(p);
    }
    *out = handle.release();
  });
}

cvae_status cvae_model_save(const cvae_model* model, const char* path) {
  return guarded([&] {
    std::visit([&](const auto& m) { cvae::save_checkpoint(text(path), m); },
               deref(model, "model").model);
  });
}

cvae_status cvae_model_info(const cvae_model* model, cvae_model_kind* kind, size_t* input_dim,
                            size_t* latent_a, size_t* latent_b, int* zero_bias) {
  return guarded([&] {
    const auto& m = deref(model, "model").model;
    if (const auto* c = std::get_if<cvae::CvaeModel>(&m)) {
      if (kind) *kind = CVAE_MODEL_CVAE;
      if (input_dim) *input_dim = c->arch.input_dim;
      if (latent_a) *latent_a = c->arch.s_dim;
      if (latent_b) *latent_b = c->arch.z_dim;
      if (zero_bias) *zero_bias = c->arch.zero_bias;
    } else {
      const auto& v = std::get<cvae::VaeModel>(m);
      if (kind) *kind = CVAE_MODEL_VAE;
      if (input_dim) *input_dim = v.arch.input_dim;
      if (latent_a) *latent_a = v.arch.latent_dim;
      if (latent_b) *latent_b = 0;
      if (zero_bias) *zero_bias = v.arch.zero_bias;
    }
  });
}

cvae_status cvae_model_manifest(const cvae_model* model, const char** json) {
  return guarded([&] { *out_ptr(json, "json") = deref(model, "model").manifest.c_str(); });
}

cvae_status cvae_model_loss_csv(const cvae_model* model, const char** csv) {
  return guarded([&] { *out_ptr(csv, "csv") = deref(model, "model").loss_csv.c_str(); });
}

cvae_status cvae_model_embed(const cvae_model* model, const cvae_dataset* ds, cvae_space space,
                             double* out, size_t len) {
  return guarded([&] {
    const auto& m = deref(model, "model").model;
    const auto& x = deref(ds, "dataset").ds.samples;
    if (const auto* c = std::get_if<cvae::CvaeModel>(&m)) {
      if (space == CVAE_SPACE_VAE_LATENT) {
        cvae::fail(cvae::ErrorKind::kInvalidArgument, "a cVAE has salient and irrelevant spaces");
      }
      const auto which = space == CVAE_SPACE_SALIENT ? cvae::LatentSpace::kSalient
                                                     : cvae::LatentSpace::kIrrelevant;
      copy_out(cvae::encode(*c, x, which).mu(), out, len);
    } else {
      if (space != CVAE_SPACE_VAE_LATENT) {
        cvae::fail(cvae::ErrorKind::kInvalidArgument, "a VAE has a single latent space");
      }
      copy_out(cvae::vae_embed(std::get<cvae::VaeModel>(m), x), out, len);
    }
  });
}

cvae_status cvae_model_generate(const cvae_model* model, const double* latents, size_t rows,
                                size_t cols, double* out, size_t len) {
  return guarded([&] {
    if (!latents && rows * cols != 0) cvae::fail(cvae::ErrorKind::kInvalidArgument, "latents is NULL");
    cvae::Tensor grid({rows, cols}, std::vector<double>(latents, latents + rows * cols));
    const auto& m = deref(model, "model").model;
    if (const auto* c = std::get_if<cvae::CvaeModel>(&m)) {
      copy_out(cvae::generate_salient_sweep(*c, grid), out, len);
    } else {
      copy_out(cvae::decode(std::get<cvae::VaeModel>(m), grid), out, len);
    }
  });
}

cvae_status cvae_model_denoise(const cvae_model* model, const cvae_dataset* ds, double* out,
                               size_t len) {
  return guarded([&] {
    const auto& m = deref(model, "model").model;
    const auto* c = std::get_if<cvae::CvaeModel>(&m);
    if (!c) cvae::fail(cvae::ErrorKind::kUnsupported, "denoise needs a cVAE checkpoint");
    copy_out(cvae::denoise(*c, deref(ds, "dataset").ds.samples), out, len);
  });
}

void cvae_model_free(cvae_model* model) { delete model; }

cvae_status cvae_silhouette(const double* points, size_t n, size_t k, const int* labels,
                            double* score) {
  return guarded([&] {
    if (!points || !labels) cvae::fail(cvae::ErrorKind::kInvalidArgument, "NULL input");
    cvae::Tensor p({n, k}, std::vector<double>(points, points + n * k));
    *out_ptr(score, "score") = cvae::silhouette_score(p, std::span<const int>(labels, n));
  });
}

cvae_status cvae_embedding_write(const double* points, size_t n, size_t k, const int* labels,
                                 const char* path) {
  return guarded([&] {
    if (!points || !labels) cvae::fail(cvae::ErrorKind::kInvalidArgument, "NULL input");
    cvae::Embedding e;
    e.points = cvae::Tensor({n, k}, std::vector<double>(points, points + n * k));
    e.labels.assign(labels, labels + n);
    cvae::export_embedding(e, text(path));
  });
}

cvae_status cvae_embedding_score(const char* path, double* score) {
  return guarded([&] {
    const auto e = cvae::read_embedding(text(path));
    *out_ptr(score, "score") = cvae::silhouette_score(e.points, e.labels);
  });
}

cvae_status cvae_render_grid(const double* images, size_t count, size_t rows, size_t cols,
                             const char* path) {
  return guarded([&] {
    if (!images) cvae::fail(cvae::ErrorKind::kInvalidArgument, "images is NULL");
    cvae::Tensor t({count, cvae::kImagePixels},
                   std::vector<double>(images, images + count * cvae::kImagePixels));
    cvae::render_image_grid(t, rows, cols, text(path));
  });
}

cvae_status cvae_file_hash(const char* path, char* out, size_t len) {
  return guarded([&] {
    const std::string h = cvae::content_hash(cvae::read_file(text(path)));
    if (!out || len < h.size() + 1) {
      cvae::fail(cvae::ErrorKind::kInvalidArgument, "hash buffer too small");
    }
    std::copy(h.begin(), h.end(), out);
    out[h.size()] = '\0';
  });
}

cvae_status cvae_sweep_run(const char* spec, const char* csv_path, cvae_log_callback log,
                           void* user, size_t* rows) {
  return guarded([&] {
    const auto s = cvae::parse_sweep_spec(cvae::KeyValueConfig::parse(text(spec), "sweep spec"));
    const auto result = cvae::run_sweep(s, text(csv_path), [&](const cvae::SweepRow& r,
                                                              std::size_t done,
                                                              std::size_t total) {
      if (!log) return;
      char line[256];
      std::snprintf(line, sizeof(line), "[%zu/%zu] %s %s=%s seed=%llu silhouette=%.4f", done,
                    total, cvae::to_string(r.model), cvae::to_string(r.kind), r.value.c_str(),
                    static_cast<unsigned long long>(r.seed), r.silhouette);
      log(line, user);
    });
    if (rows) *rows = result.rows.size();
  });
}

namespace {

class CallbackBuf : public std::stringbuf {
 public:
  CallbackBuf(cvae_log_callback log, void* user) : log_(log), user_(user) {}
  int sync() override {
    std::string s = str();
    std::size_t pos;
    while ((pos = s.find('\n')) != std::string::npos) {
      if (log_) log_(s.substr(0, pos).c_str(), user_);
      s.erase(0, pos + 1);
    }
    str(s);
    return 0;
  }

 private:
  cvae_log_callback log_;
  void* user_;
};

}  // namespace

cvae_status cvae_reproduce(const char* figure, const char* config, uint64_t seed, size_t trials,
                           size_t workers, const char* out_dir, cvae_log_callback log,
                           void* user) {
  return guarded([&] {
    const auto cfg = cvae::KeyValueConfig::parse(text(config), "config");
    cfg.require_known(all_keys());
    cvae::ReproduceOptions o;
    o.out_dir = text(out_dir);
    o.seed = seed;
    o.trials = trials;
    o.workers = workers;
    cvae::apply_train_keys(cfg, o.train);
    cvae::apply_recipe_keys(cfg, o.recipe);
    CallbackBuf buf(log, user);
    std::ostream stream(&buf);
    cvae::reproduce_figure(text(figure), o, log ? &stream : nullptr);
    stream.flush();
  });
}

}  // extern "C"
