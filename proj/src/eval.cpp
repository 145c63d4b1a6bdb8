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

#include "cvae/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <sstream>

#include "cvae/checkpoint.hpp"
#include "cvae/error.hpp"

namespace cvae {

namespace {

std::string g17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::vector<double> silhouette_samples(const Tensor& points, std::span<const int> labels) {
  if (points.rank() != 2) fail(ErrorKind::kInvalidArgument, "silhouette: points must be [n x k]");
  const std::size_t n = points.rows();
  const std::size_t k = points.cols();
  if (labels.size() != n) {
    fail(ErrorKind::kInvalidArgument, "silhouette: " + std::to_string(n) + " points but " +
                                          std::to_string(labels.size()) + " labels");
  }
  if (n < 3) fail(ErrorKind::kInvalidArgument, "silhouette: need at least 3 points");

  // Dense cluster ids in order of first appearance.
  std::map<int, std::size_t> ids;
  std::vector<std::size_t> cluster(n);
  for (std::size_t i = 0; i < n; ++i) {
    cluster[i] = ids.emplace(labels[i], ids.size()).first->second;
  }
  const std::size_t m = ids.size();
  if (m < 2) fail(ErrorKind::kInvalidArgument, "silhouette: need at least 2 distinct labels");
  std::vector<std::size_t> sizes(m, 0);
  for (std::size_t c : cluster) ++sizes[c];

  const auto values = points.values();
  std::vector<double> out(n, 0.0);
  std::vector<double> sums(m);
  for (std::size_t i = 0; i < n; ++i) {
    std::fill(sums.begin(), sums.end(), 0.0);
    const double* pi = values.data() + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const double* pj = values.data() + j * k;
      double d2 = 0.0;
      for (std::size_t t = 0; t < k; ++t) {
        const double d = pi[t] - pj[t];
        d2 += d * d;
      }
      sums[cluster[j]] += std::sqrt(d2);
    }
    const std::size_t own = cluster[i];
    if (sizes[own] == 1) continue;
    const double a = sums[own] / static_cast<double>(sizes[own] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < m; ++c) {
      if (c != own) b = std::min(b, sums[c] / static_cast<double>(sizes[c]));
    }
    const double denom = std::max(a, b);
    out[i] = denom > 0.0 ? (b - a) / denom : 0.0;
  }
  return out;
}

double silhouette_score(const Tensor& points, std::span<const int> labels) {
  const auto s = silhouette_samples(points, labels);
  double acc = 0.0;
  for (double v : s) acc += v;
  return acc / static_cast<double>(s.size());
}

const char* to_string(SpaceTag tag) {
  switch (tag) {
    case SpaceTag::kVaeLatent: return "vae_latent";
    case SpaceTag::kCvaeSalient: return "cvae_salient";
    case SpaceTag::kCvaeIrrelevant: return "cvae_irrelevant";
  }
  return "unknown";
}

std::string format_embedding_csv(const Embedding& e) {
  if (e.points.rank() != 2 || e.points.rows() == 0 || e.points.cols() == 0) {
    fail(ErrorKind::kInvalidArgument, "export_embedding: empty embedding");
  }
  if (e.labels.size() != e.points.rows()) {
    fail(ErrorKind::kInvalidArgument, "export_embedding: labels do not align with points");
  }
  std::string out;
  for (std::size_t d = 0; d < e.points.cols(); ++d) out += "dim_" + std::to_string(d) + ",";
  out += "label\n";
  for (std::size_t i = 0; i < e.points.rows(); ++i) {
    for (std::size_t d = 0; d < e.points.cols(); ++d) out += g17(e.points(i, d)) + ",";
    out += std::to_string(e.labels[i]) + "\n";
  }
  return out;
}

void export_embedding(const Embedding& embedding, const std::string& path) {
  write_file(path, format_embedding_csv(embedding));
}

Embedding parse_embedding_csv(const std::string& text, const std::string& source) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line.rfind("dim_0", 0) != 0) {
    fail(ErrorKind::kFormat, source + ": missing 'dim_0,...,label' header");
  }
  const std::size_t cols = static_cast<std::size_t>(std::count(line.begin(), line.end(), ','));
  if (cols == 0 || line.substr(line.rfind(',') + 1) != "label") {
    fail(ErrorKind::kFormat, source + ": header must end with 'label'");
  }
  std::vector<std::vector<double>> rows;
  Embedding e;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<double> row;
    std::istringstream fields(line);
    std::string field;
    while (std::getline(fields, field, ',')) {
      char* end = nullptr;
      const double v = std::strtod(field.c_str(), &end);
      if (field.empty() || end != field.c_str() + field.size()) {
        fail(ErrorKind::kFormat, source + ": bad number '" + field + "' on line " +
                                     std::to_string(line_no));
      }
      row.push_back(v);
    }
    if (row.size() != cols + 1) {
      fail(ErrorKind::kFormat, source + ": line " + std::to_string(line_no) + " has " +
                                   std::to_string(row.size()) + " fields, expected " +
                                   std::to_string(cols + 1));
    }
    e.labels.push_back(static_cast<int>(row.back()));
    row.pop_back();
    rows.push_back(std::move(row));
  }
  if (rows.empty()) fail(ErrorKind::kFormat, source + ": embedding has no rows");
  e.points = Tensor::from_rows(rows);
  return e;
}

Embedding read_embedding(const std::string& path) {
  return parse_embedding_csv(read_file(path), path);
}

GrayRaster image_grid(const Tensor& images, std::size_t rows, std::size_t cols) {
  constexpr std::size_t side = 28;
  if (rows == 0 || cols == 0 || images.rank() != 2 || images.rows() != rows * cols ||
      images.cols() != side * side) {
    fail(ErrorKind::kInvalidArgument, "render_image_grid: need " + std::to_string(rows * cols) +
                                          " images of 784 pixels, got " +
                                          shape_to_string(images.shape()));
  }
  GrayRaster r;
  r.height = rows * side + (rows + 1) * kGridGutter;
  r.width = cols * side + (cols + 1) * kGridGutter;
  r.pixels.assign(r.width * r.height, 255);
  for (std::size_t g = 0; g < rows * cols; ++g) {
    const std::size_t top = kGridGutter + (g / cols) * (side + kGridGutter);
    const std::size_t left = kGridGutter + (g % cols) * (side + kGridGutter);
    const auto img = images.row(g);
    for (std::size_t y = 0; y < side; ++y) {
      for (std::size_t x = 0; x < side; ++x) {
        const double v = img[y * side + x];
        if (!(v >= 0.0 && v <= 1.0)) {
          fail(ErrorKind::kInvalidArgument, "render_image_grid: pixel value " + g17(v) +
                                                " outside [0, 1] in image " + std::to_string(g));
        }
        r.pixels[(top + y) * r.width + left + x] =
            static_cast<std::uint8_t>(std::lround(255.0 * v));
      }
    }
  }
  return r;
}

void render_image_grid(const Tensor& images, std::size_t rows, std::size_t cols,
                       const std::string& path) {
  const GrayRaster r = image_grid(images, rows, cols);
  std::string out = "P5\n" + std::to_string(r.width) + " " + std::to_string(r.height) + "\n255\n";
  out.append(reinterpret_cast<const char*>(r.pixels.data()), r.pixels.size());
  write_file(path, out);
}

double quantile(std::vector<double> values, double p) {
  if (values.empty()) fail(ErrorKind::kInvalidArgument, "quantile of an empty sample");
  std::sort(values.begin(), values.end());
  const double pos = p * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

double median(std::vector<double> values) { return quantile(std::move(values), 0.5); }

std::vector<BoxSummary> summarize(const std::vector<ScoreRow>& scores) {
  std::vector<std::string> order;
  std::map<std::string, std::vector<double>> groups;
  for (const auto& s : scores) {
    if (!groups.count(s.condition)) order.push_back(s.condition);
    groups[s.condition].push_back(s.value);
  }
  std::vector<BoxSummary> out;
  for (const auto& c : order) {
    const auto& v = groups[c];
    BoxSummary b;
    b.condition = c;
    b.count = v.size();
    b.min = *std::min_element(v.begin(), v.end());
    b.max = *std::max_element(v.begin(), v.end());
    b.q1 = quantile(v, 0.25);
    b.median = quantile(v, 0.5);
    b.q3 = quantile(v, 0.75);
    out.push_back(b);
  }
  return out;
}

std::string boxplot_table(const std::vector<ScoreRow>& scores) {
  if (scores.empty()) fail(ErrorKind::kInvalidArgument, "boxplot_table: no scores");
  std::string out = "condition,trial,score\n";
  for (const auto& s : scores) {
    out += s.condition + "," + std::to_string(s.trial) + "," + g17(s.value) + "\n";
  }
  out += "\n# quartiles: linear interpolation between order statistics at p*(n-1)\n";
  out += "condition,n,min,q1,median,q3,max\n";
  for (const auto& b : summarize(scores)) {
    out += b.condition + "," + std::to_string(b.count) + "," + g17(b.min) + "," + g17(b.q1) +
           "," + g17(b.median) + "," + g17(b.q3) + "," + g17(b.max) + "\n";
  }
  return out;
}

}  // namespace cvae
