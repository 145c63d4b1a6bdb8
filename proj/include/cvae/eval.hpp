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
#include <span>
#include <string>
#include <vector>

#include "cvae/tensor.hpp"

namespace cvae {

/// Mean silhouette over all points with Euclidean distances.
///
/// A point whose cluster has no other members scores 0, as does a point with
/// a(i) = b(i) = 0. Needs at least 3 points and 2 distinct labels.
double silhouette_score(const Tensor& points, std::span<const int> labels);

/// Per-point silhouette values in input order.
std::vector<double> silhouette_samples(const Tensor& points, std::span<const int> labels);

enum class SpaceTag { kVaeLatent, kCvaeSalient, kCvaeIrrelevant };

const char* to_string(SpaceTag tag);

struct Embedding {
  Tensor points;  // [n x k]
  std::vector<int> labels;
  SpaceTag space = SpaceTag::kCvaeSalient;
};

/// Header "dim_0,...,dim_{k-1},label", then one row per point with values
/// printed to 17 significant digits.
std::string format_embedding_csv(const Embedding& embedding);
void export_embedding(const Embedding& embedding, const std::string& path);
Embedding parse_embedding_csv(const std::string& text, const std::string& source = "memory");
Embedding read_embedding(const std::string& path);

/// Tiles 28 x 28 images row-major into a rows x cols grid with 2-pixel white
/// gutters; each pixel becomes round(255 v).
struct GrayRaster {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;
};
GrayRaster image_grid(const Tensor& images, std::size_t rows, std::size_t cols);
void render_image_grid(const Tensor& images, std::size_t rows, std::size_t cols,
                       const std::string& path);

inline constexpr std::size_t kGridGutter = 2;

struct ScoreRow {
  std::string condition;
  std::size_t trial = 0;
  double value = 0.0;
};

struct BoxSummary {
  std::string condition;
  std::size_t count = 0;
  double min = 0.0, q1 = 0.0, median = 0.0, q3 = 0.0, max = 0.0;
};

/// Linear interpolation between order statistics: position p * (n - 1).
double quantile(std::vector<double> values, double p);
double median(std::vector<double> values);

/// Summaries per condition in order of first appearance.
std::vector<BoxSummary> summarize(const std::vector<ScoreRow>& scores);

/// Long-format "condition,trial,score" rows, a blank line, then the summary
/// block "condition,n,min,q1,median,q3,max".
std::string boxplot_table(const std::vector<ScoreRow>& scores);

}  // namespace cvae
