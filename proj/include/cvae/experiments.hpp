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
#include <iosfwd>
#include <set>
#include <string>
#include <vector>

#include "cvae/config.hpp"
#include "cvae/data.hpp"
#include "cvae/eval.hpp"
#include "cvae/model.hpp"

namespace cvae {

// --- dataset recipe --------------------------------------------------------

struct DatasetRecipe {
  std::string mnist_images = "data/mnist/mnist10k-images-idx3-ubyte";
  std::string mnist_labels = "data/mnist/mnist10k-labels-idx1-ubyte";
  std::set<int> digits = {0, 1, 2};
  std::size_t target_count = 5000;      // capped by the digits available
  std::size_t background_count = 5000;
  double scale = 2.0;
  std::string texture_dir;              // empty selects procedural textures
  std::uint64_t texture_seed = 1;
  std::uint64_t seed = 0;               // background split and texture draws
};

struct PreparedData {
  DatasetRecipe recipe;
  Dataset digits;       // clean, filtered, capped
  Dataset target;       // grassy digits at recipe.scale
  Dataset background;   // textures disjoint from target_bank
  TextureBank target_bank;
};

/// Loads and composes the target/background pair. Missing MNIST files raise
/// kIo listing the expected paths.
PreparedData prepare_data(const DatasetRecipe& recipe);

/// Re-synthesizes the target at another scale. Texture choices are the same
/// for every scale.
Dataset synthesize_target(const PreparedData& data, double scale);

/// Rows whose label is not kContaminantLabel.
Dataset genuine_rows(const Dataset& ds);

double score_cvae(const CvaeModel& model, const Dataset& target);
double score_vae(const VaeModel& model, const Dataset& target);

/// Highest silhouette over all 2-column projections of `embedding`.
double best_pair_silhouette(const Tensor& embedding, std::span<const int> labels);

// --- sweeps ----------------------------------------------------------------

enum class SweepKind {
  kBackgroundScale,
  kBackgroundNoise,
  kLatentDims,
  kTargetContamination,
  kBackgroundContamination,
};

const char* to_string(SweepKind kind);
SweepKind parse_sweep_kind(const std::string& name);

enum class ModelType { kVae, kCvae };
const char* to_string(ModelType model);
ModelType parse_model_type(const std::string& name);

struct DimPair {
  std::size_t s_dim = 2;
  std::size_t z_dim = 2;
};

struct SweepSpec {
  SweepKind kind = SweepKind::kBackgroundScale;
  std::vector<double> grid;    // scalar sweeps
  std::vector<DimPair> dims;   // latent_dims
  std::size_t trials = 3;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  std::size_t vae_latent_dim = 2;
  /// When false the seconds column is written as 0 so reruns are identical.
  bool record_timing = true;
  TrainConfig train;
  DatasetRecipe recipe;

  void validate() const;
  std::size_t grid_size() const;
  /// CSV value for grid entry `index`: "%.17g" or "SxZ" for dims.
  std::string value_label(std::size_t index) const;
  std::vector<ModelType> models() const;
};

/// All 36 pairs of {1..6} x {1..6}, s_dim varying slowest.
std::vector<DimPair> full_dim_grid();

/// Keys: kind, grid, dims ("2x2, 2x3" or "full"), trials, seed, workers,
/// vae_latent_dim, record_timing, plus every training and recipe key.
SweepSpec parse_sweep_spec(const KeyValueConfig& cfg);
SweepSpec load_sweep_spec(const std::string& path);

/// Training keys: epochs, batch_size, learning_rate, beta1, beta2,
/// adam_epsilon, tc_weight, seed, zero_bias, s_dim, z_dim, hidden_dim, recon.
void apply_train_keys(const KeyValueConfig& cfg, TrainConfig& config);
/// Recipe keys: mnist_images, mnist_labels, digits, target_count,
/// background_count, scale, texture_dir, texture_seed, data_seed.
void apply_recipe_keys(const KeyValueConfig& cfg, DatasetRecipe& recipe);
const std::set<std::string>& train_keys();
const std::set<std::string>& recipe_keys();

std::string describe(const TrainConfig& config);
std::string describe(const DatasetRecipe& recipe);
std::string describe(const SweepSpec& spec);

struct SweepRow {
  SweepKind kind = SweepKind::kBackgroundScale;
  std::string value;
  std::uint64_t seed = 0;
  ModelType model = ModelType::kCvae;
  double silhouette = 0.0;
  double seconds = 0.0;
};

struct SweepResult {
  std::vector<SweepRow> rows;
};

/// Seed of trial `trial` at grid entry `value_index`.
std::uint64_t trial_seed(std::uint64_t base, std::size_t value_index, std::size_t trial);

inline constexpr const char* kSweepCsvHeader = "sweep_kind,value,seed,model,silhouette,seconds";

std::string format_sweep_csv(const SweepResult& result);
void write_sweep_csv(const SweepResult& result, const std::string& path);
SweepResult parse_sweep_csv(const std::string& text, const std::string& source = "memory");
SweepResult read_sweep_csv(const std::string& path);

using SweepProgress = std::function<void(const SweepRow& row, std::size_t done, std::size_t total)>;

/// Runs every (value, trial, model) cell of `spec`. With a non-empty
/// `ledger_path`, cells already present in that CSV are skipped, finished
/// cells are appended as they complete, and the file is rewritten in
/// canonical order at the end.
SweepResult run_sweep(const SweepSpec& spec, const std::string& ledger_path = "",
                      const SweepProgress& progress = {});

SweepResult run_scale_sweep(const SweepSpec& spec, const std::string& ledger_path = "");
SweepResult run_noise_sweep(const SweepSpec& spec, const std::string& ledger_path = "");
SweepResult run_dim_grid(const SweepSpec& spec, const std::string& ledger_path = "");
SweepResult run_contamination_sweep(const SweepSpec& spec, const std::string& ledger_path = "");

/// Boxplot rows keyed "model@value".
std::vector<ScoreRow> to_score_rows(const SweepResult& result);

// --- figure reproduction ---------------------------------------------------

// Default epochs for figure recipes. The bundled MNIST subset has 3119
// digits 0-2, so 20 epochs at batch 128 is roughly the optimizer step count
// of 10 epochs over 5000 rows.
inline constexpr std::size_t kFigureEpochs = 20;

struct ReproduceOptions {
  std::string out_dir;
  std::uint64_t seed = 0;
  std::size_t trials = 3;
  std::size_t workers = 1;
  bool record_timing = false;
  TrainConfig train = [] {
    TrainConfig t;
    t.epochs = kFigureEpochs;
    return t;
  }();
  DatasetRecipe recipe;
};

const std::vector<std::string>& figure_ids();

/// Runs the named recipe and writes its CSVs, PGM grids and manifest.json
/// under options.out_dir. Progress lines go to `log` when given.
void reproduce_figure(const std::string& figure_id, const ReproduceOptions& options,
                      std::ostream* log = nullptr);

}  // namespace cvae
