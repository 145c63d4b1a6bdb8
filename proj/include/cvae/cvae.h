/*
 * Copyright 2026 The cvae Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

/*
 * C interface to the cvae library.
 *
 * Every function returns a cvae_status. On failure, cvae_last_error()
 * returns a message for the calling thread; it stays valid until the next
 * call on that thread. Handles are opaque and owned by the caller, who
 * releases them with the matching *_free function. Strings returned through
 * `const char**` are owned by the handle they came from.
 *
 * Configuration is passed as "key = value" text, one setting per line.
 */
#ifndef CVAE_CVAE_H_
#define CVAE_CVAE_H_

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define CVAE_API __declspec(dllexport)
#else
#define CVAE_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum cvae_status {
  CVAE_OK = 0,
  CVAE_ERR_INVALID_ARGUMENT = 1,
  CVAE_ERR_FORMAT = 2,
  CVAE_ERR_IO = 3,
  CVAE_ERR_NUMERIC = 4,
  CVAE_ERR_UNSUPPORTED = 5,
  CVAE_ERR_INTERNAL = 6
} cvae_status;

typedef enum cvae_model_kind { CVAE_MODEL_CVAE = 0, CVAE_MODEL_VAE = 1 } cvae_model_kind;

typedef enum cvae_space {
  CVAE_SPACE_SALIENT = 0,
  CVAE_SPACE_IRRELEVANT = 1,
  CVAE_SPACE_VAE_LATENT = 2
} cvae_space;

typedef struct cvae_dataset cvae_dataset;
typedef struct cvae_model cvae_model;

typedef struct cvae_losses {
  double recon_target;
  double kl_s;
  double kl_z_target;
  double recon_background;
  double kl_z_background;
  double tc_estimate;
  double discriminator_loss;
  double total;
} cvae_losses;

typedef void (*cvae_epoch_callback)(size_t epoch, const cvae_losses* mean, void* user);
typedef void (*cvae_log_callback)(const char* line, void* user);

CVAE_API const char* cvae_version(void);
CVAE_API const char* cvae_last_error(void);
CVAE_API const char* cvae_status_name(cvae_status status);

/* --- datasets ------------------------------------------------------------ */

/* Builds the grassy target and the texture background from a recipe
 * (mnist_images, mnist_labels, digits, target_count, background_count,
 * scale, texture_dir, texture_seed, data_seed). */
CVAE_API cvae_status cvae_synthesize(const char* recipe, cvae_dataset** target,
                                     cvae_dataset** background);
CVAE_API cvae_status cvae_dataset_load_idx(const char* images_path, const char* labels_path,
                                           cvae_dataset** out);
/* expected_width 0 accepts any width. */
CVAE_API cvae_status cvae_dataset_load_csv(const char* path, size_t expected_width,
                                           int min_max, cvae_dataset** out);
CVAE_API cvae_status cvae_dataset_load(const char* path, cvae_dataset** out);
CVAE_API cvae_status cvae_dataset_save(const cvae_dataset* ds, const char* path);
CVAE_API cvae_status cvae_dataset_add_noise(const cvae_dataset* ds, double noise_scale,
                                            uint64_t seed, cvae_dataset** out);
CVAE_API cvae_status cvae_dataset_contaminate(const cvae_dataset* primary,
                                              const cvae_dataset* contaminant, double fraction,
                                              uint64_t seed, cvae_dataset** out);
CVAE_API cvae_status cvae_dataset_shape(const cvae_dataset* ds, size_t* rows, size_t* width);
CVAE_API cvae_status cvae_dataset_has_labels(const cvae_dataset* ds, int* has_labels);
/* `len` must equal rows * width. */
CVAE_API cvae_status cvae_dataset_copy_samples(const cvae_dataset* ds, double* out, size_t len);
/* `len` must equal rows. */
CVAE_API cvae_status cvae_dataset_copy_labels(const cvae_dataset* ds, int* out, size_t len);
CVAE_API cvae_status cvae_dataset_provenance(const cvae_dataset* ds, const char** text);
CVAE_API void cvae_dataset_free(cvae_dataset* ds);

/* --- models -------------------------------------------------------------- */

/* Trains a fresh model. `config` holds training keys (epochs, batch_size,
 * learning_rate, beta1, beta2, adam_epsilon, tc_weight, seed, zero_bias,
 * s_dim, z_dim, hidden_dim, recon). A VAE uses `latent_dim` and ignores
 * `background`, which may be NULL. */
CVAE_API cvae_status cvae_model_train(cvae_model_kind kind, const char* config,
                                      size_t latent_dim, const cvae_dataset* target,
                                      const cvae_dataset* background,
                                      cvae_epoch_callback on_epoch, void* user,
                                      cvae_model** out);
CVAE_API cvae_status cvae_model_load(const char* path, cvae_model** out);
CVAE_API cvae_status cvae_model_save(const cvae_model* model, const char* path);
CVAE_API cvae_status cvae_model_info(const cvae_model* model, cvae_model_kind* kind,
                                     size_t* input_dim, size_t* latent_a, size_t* latent_b,
                                     int* zero_bias);
/* JSON run manifest and per-epoch loss CSV of the training call that made
 * this model; empty for loaded models. */
CVAE_API cvae_status cvae_model_manifest(const cvae_model* model, const char** json);
CVAE_API cvae_status cvae_model_loss_csv(const cvae_model* model, const char** csv);
/* Posterior means, [rows x dim] where dim is s_dim, z_dim, or latent_dim. */
CVAE_API cvae_status cvae_model_embed(const cvae_model* model, const cvae_dataset* ds,
                                      cvae_space space, double* out, size_t len);
/* Decoder means for each latent row. For a cVAE the rows are salient
 * vectors and the irrelevant slot is zero. */
CVAE_API cvae_status cvae_model_generate(const cvae_model* model, const double* latents,
                                         size_t rows, size_t cols, double* out, size_t len);
/* decode(infer_salient(x), 0); refuses models with biases. */
CVAE_API cvae_status cvae_model_denoise(const cvae_model* model, const cvae_dataset* ds,
                                        double* out, size_t len);
CVAE_API void cvae_model_free(cvae_model* model);

/* --- evaluation ---------------------------------------------------------- */

CVAE_API cvae_status cvae_silhouette(const double* points, size_t n, size_t k,
                                     const int* labels, double* score);
CVAE_API cvae_status cvae_embedding_write(const double* points, size_t n, size_t k,
                                          const int* labels, const char* path);
CVAE_API cvae_status cvae_embedding_score(const char* path, double* score);
/* images: [count x 784] in [0, 1], count == rows * cols. */
CVAE_API cvae_status cvae_render_grid(const double* images, size_t count, size_t rows,
                                      size_t cols, const char* path);

/* Content hash (16 hex digits, FNV-1a 64) of a file's bytes. `out` must hold
 * at least 17 chars. */
CVAE_API cvae_status cvae_file_hash(const char* path, char* out, size_t len);

/* --- experiments --------------------------------------------------------- */

/* Runs a sweep described by `spec` (see the README for keys), resuming from
 * and writing to `csv_path`. */
CVAE_API cvae_status cvae_sweep_run(const char* spec, const char* csv_path,
                                    cvae_log_callback log, void* user, size_t* rows);
/* figure: fig4, fig6a, fig6b, fig6c or appG. `config` holds training and
 * recipe keys. */
CVAE_API cvae_status cvae_reproduce(const char* figure, const char* config, uint64_t seed,
                                    size_t trials, size_t workers, const char* out_dir,
                                    cvae_log_callback log, void* user);

#ifdef __cplusplus
}
#endif

#endif /* CVAE_CVAE_H_ */
