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
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "cvae/rng.hpp"
#include "cvae/tensor.hpp"

namespace cvae {

inline constexpr std::size_t kImageSide = 28;
inline constexpr std::size_t kImagePixels = kImageSide * kImageSide;

/// Label given to rows replaced by `contaminate`.
inline constexpr int kContaminantLabel = -1;

enum class FeatureKind : std::uint32_t { kImage28x28 = 0, kTabular = 1 };

const char* to_string(FeatureKind kind);

struct Dataset {
  Tensor samples;  // [n x d]
  std::optional<std::vector<int>> labels;
  FeatureKind kind = FeatureKind::kImage28x28;
  std::string provenance;

  std::size_t size() const { return samples.rows(); }
  std::size_t width() const { return samples.cols(); }

  /// Label alignment, finiteness, and the [0, 1] range for image data.
  void validate() const;
};

/// Rows `indices` of `ds`, labels carried along.
Dataset select_rows(const Dataset& ds, std::span<const std::size_t> indices);

/// First `count` rows (all rows if count exceeds the size).
Dataset head(const Dataset& ds, std::size_t count);

/// Reorders rows round-robin over labels (ascending label order, original
/// order within a label), so a prefix is class balanced. Unlabeled input is
/// returned unchanged.
Dataset interleave_labels(const Dataset& ds);

// --- IDX -------------------------------------------------------------------

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

/// Parses big-endian IDX image and label files. Pixels are scaled by 1/255.
Dataset load_idx(const std::string& images_path, const std::string& labels_path);
Dataset parse_idx(const std::string& image_bytes, const std::string& label_bytes,
                  const std::string& source = "memory");

/// Keeps rows whose label is in `keep`, order preserved.
Dataset filter_digits(const Dataset& ds, const std::set<int>& keep);

// --- PGM -------------------------------------------------------------------

struct GrayImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<double> pixels;  // row-major, scaled to [0, 1] by maxval

  double at(std::size_t row, std::size_t col) const { return pixels[row * width + col]; }
};

/// Reads binary (P5) or ASCII (P2) graymaps with maxval up to 65535.
GrayImage read_pgm(const std::string& path);
GrayImage parse_pgm(const std::string& bytes, const std::string& source = "memory");

/// Writes a P5 graymap with maxval 255.
void write_pgm(const std::string& path, std::size_t width, std::size_t height,
               std::span<const std::uint8_t> pixels);
std::string encode_pgm(std::size_t width, std::size_t height,
                       std::span<const std::uint8_t> pixels);

// --- textures --------------------------------------------------------------

enum class TextureSource { kFiles, kProcedural };

struct TextureBank {
  Tensor textures;  // [count x 784], values in [0, 1]
  TextureSource source = TextureSource::kProcedural;
  std::uint64_t seed = 0;
  std::string origin;  // directory for file banks

  std::size_t size() const { return textures.rows(); }
};

/// Center crop to a square, area-average down to 28 x 28.
Tensor image_to_texture(const GrayImage& image);

/// Every *.pgm file in `dir`, sorted by file name.
TextureBank make_texture_bank(const std::string& dir);

/// Seeded grass-like textures in [0, 1]: brightness, a vertical gradient,
/// value noise and fine streaks. Texture k depends only on (seed, k).
TextureBank make_texture_bank(std::uint64_t seed, std::size_t count);

/// One procedural texture as 784 row-major values.
Tensor procedural_texture(Stream rng);

// --- Grassy-MNIST ----------------------------------------------------------

/// x = digit + scale * texture, divided by max(1, max(x)) per image.
/// Textures are drawn uniformly with replacement.
Dataset synthesize_grassy(const Dataset& digits, const TextureBank& bank, double scale,
                          Stream& rng);

struct BackgroundSplit {
  Dataset background;               // plain textures, unlabeled
  TextureBank target_bank;          // the textures left for synthesis
  std::vector<std::size_t> background_indices;  // into the source bank
  std::vector<std::size_t> target_indices;      // into the source bank
};

/// Moves `count` randomly chosen textures to a background dataset; the rest
/// stays available for synthesis, so the two index sets are disjoint.
BackgroundSplit make_background_split(const TextureBank& bank, std::size_t count,
                                      Stream& rng);

// --- perturbations ---------------------------------------------------------

/// x + noise_scale * N(0, 1) per value, clipped to [0, 1].
Dataset add_isotropic_noise(const Dataset& ds, double noise_scale, Stream& rng);

/// Replaces round(fraction * n) uniformly chosen rows with rows drawn
/// uniformly (with replacement) from `contaminant`. Replaced rows get
/// kContaminantLabel when `primary` is labeled.
Dataset contaminate(const Dataset& primary, const Dataset& contaminant, double fraction,
                    Stream& rng);

// --- tabular ---------------------------------------------------------------

struct CsvOptions {
  std::optional<std::size_t> expected_width;
  /// Per-feature min-max scaling to [0, 1]; constant columns map to 0.
  bool min_max = false;
};

/// Numeric CSV, optionally preceded by one header line. A header whose last
/// field is "label" marks the final column as integer labels.
Dataset load_tabular_csv(const std::string& path, const CsvOptions& options = {});
Dataset parse_tabular_csv(const std::string& text, const CsvOptions& options = {},
                          const std::string& source = "memory");

}  // namespace cvae
