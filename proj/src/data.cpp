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

#include "cvae/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <numeric>
#include <sstream>

#include "cvae/checkpoint.hpp"
#include "cvae/error.hpp"

namespace cvae {

namespace {

std::uint32_t read_be32(const std::string& bytes, std::size_t offset) {
  std::uint32_t v = 0;
  for (std::size_t i = 0; i < 4; ++i) {
    v = (v << 8) | static_cast<unsigned char>(bytes[offset + i]);
  }
  return v;
}

std::string hex_bytes(const std::string& bytes, std::size_t count) {
  std::ostringstream out;
  static const char* digits = "0123456789abcdef";
  for (std::size_t i = 0; i < std::min(count, bytes.size()); ++i) {
    const auto c = static_cast<unsigned char>(bytes[i]);
    if (i) out << ' ';
    out << digits[c >> 4] << digits[c & 15];
  }
  return out.str();
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void append_provenance(Dataset& ds, const std::string& line) {
  if (!ds.provenance.empty() && ds.provenance.back() != '\n') ds.provenance += '\n';
  ds.provenance += line;
  ds.provenance += '\n';
}

std::string bank_description(const TextureBank& bank) {
  if (bank.source == TextureSource::kProcedural) {
    return "procedural(seed=" + std::to_string(bank.seed) +
           ", count=" + std::to_string(bank.size()) + ")";
  }
  return "files(dir=" + bank.origin + ", count=" + std::to_string(bank.size()) + ")";
}

// Weights of source pixels [0, n) covering output cell i of `out` cells when
// the n-pixel span is resampled by area averaging.
std::vector<std::pair<std::size_t, double>> area_weights(std::size_t n, std::size_t out,
                                                         std::size_t i) {
  const double scale = static_cast<double>(n) / static_cast<double>(out);
  const double lo = scale * static_cast<double>(i);
  const double hi = scale * static_cast<double>(i + 1);
  std::vector<std::pair<std::size_t, double>> w;
  const auto first = static_cast<std::size_t>(std::floor(lo));
  const auto last = std::min(n, static_cast<std::size_t>(std::ceil(hi)));
  for (std::size_t p = first; p < last; ++p) {
    const double overlap =
        std::min(hi, static_cast<double>(p + 1)) - std::max(lo, static_cast<double>(p));
    if (overlap > 0.0) w.emplace_back(p, overlap / scale);
  }
  return w;
}

// Bilinear upsampling of a (k+1) x (k+1) lattice to 28 x 28, the lattice
// spanning the image corner to corner.
void add_value_noise(Stream& rng, std::size_t k, double amplitude, std::vector<double>& out) {
  std::vector<double> lattice((k + 1) * (k + 1));
  for (auto& v : lattice) v = rng.uniform();
  for (std::size_t r = 0; r < kImageSide; ++r) {
    const double yr = static_cast<double>(r) * static_cast<double>(k) / (kImageSide - 1);
    const auto r0 = std::min(static_cast<std::size_t>(yr), k);
    const auto r1 = std::min(r0 + 1, k);
    const double fr = yr - static_cast<double>(r0);
    for (std::size_t c = 0; c < kImageSide; ++c) {
      const double xc = static_cast<double>(c) * static_cast<double>(k) / (kImageSide - 1);
      const auto c0 = std::min(static_cast<std::size_t>(xc), k);
      const auto c1 = std::min(c0 + 1, k);
      const double fc = xc - static_cast<double>(c0);
      const double top = lattice[r0 * (k + 1) + c0] * (1 - fc) + lattice[r0 * (k + 1) + c1] * fc;
      const double bottom =
          lattice[r1 * (k + 1) + c0] * (1 - fc) + lattice[r1 * (k + 1) + c1] * fc;
      const double v = top * (1 - fr) + bottom * fr;
      out[r * kImageSide + c] += amplitude * 2.0 * (v - 0.5);
    }
  }
}

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) fields.push_back(trim(field));
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

bool parse_number(const std::string& s, double& out) {
  if (s.empty()) return false;
  char* end = nullptr;
  out = std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size() && std::isfinite(out);
}

}  // namespace

const char* to_string(FeatureKind kind) {
  return kind == FeatureKind::kImage28x28 ? "image_28x28" : "tabular";
}

void Dataset::validate() const {
  if (samples.rank() != 2) {
    fail(ErrorKind::kInvalidArgument, "dataset samples must be [n x d], got " +
                                          shape_to_string(samples.shape()));
  }
  if (labels && labels->size() != samples.rows()) {
    fail(ErrorKind::kInvalidArgument, "dataset has " + std::to_string(samples.rows()) +
                                          " samples but " + std::to_string(labels->size()) +
                                          " labels");
  }
  if (!samples.all_finite()) fail(ErrorKind::kNumeric, "dataset contains non-finite values");
  if (kind == FeatureKind::kImage28x28) {
    for (double v : samples.values()) {
      if (v < 0.0 || v > 1.0) {
        fail(ErrorKind::kInvalidArgument, "image dataset value outside [0, 1]: " +
                                              format_double(v));
      }
    }
  }
}

Dataset select_rows(const Dataset& ds, std::span<const std::size_t> indices) {
  Dataset out;
  out.samples = gather_rows(ds.samples, indices);
  out.kind = ds.kind;
  out.provenance = ds.provenance;
  if (ds.labels) {
    std::vector<int> labels;
    labels.reserve(indices.size());
    for (std::size_t i : indices) labels.push_back((*ds.labels)[i]);
    out.labels = std::move(labels);
  }
  return out;
}

Dataset head(const Dataset& ds, std::size_t count) {
  std::vector<std::size_t> idx(std::min(count, ds.size()));
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Dataset out = select_rows(ds, idx);
  if (idx.size() < ds.size()) append_provenance(out, "head " + std::to_string(idx.size()));
  return out;
}

Dataset interleave_labels(const Dataset& ds) {
  if (!ds.labels) return ds;
  std::map<int, std::vector<std::size_t>> by_label;
  for (std::size_t i = 0; i < ds.size(); ++i) by_label[(*ds.labels)[i]].push_back(i);
  std::vector<std::size_t> order;
  order.reserve(ds.size());
  for (std::size_t k = 0; order.size() < ds.size(); ++k) {
    for (const auto& [label, rows] : by_label) {
      if (k < rows.size()) order.push_back(rows[k]);
    }
  }
  return select_rows(ds, order);
}

// --- IDX -------------------------------------------------------------------

Dataset parse_idx(const std::string& image_bytes, const std::string& label_bytes,
                  const std::string& source) {
  if (image_bytes.size() < 16) {
    fail(ErrorKind::kFormat, source + ": image file too short for an IDX header (" +
                                 std::to_string(image_bytes.size()) + " bytes)");
  }
  if (read_be32(image_bytes, 0) != kIdxImageMagic) {
    fail(ErrorKind::kFormat, source + ": bad image magic, observed bytes " +
                                 hex_bytes(image_bytes, 4) + ", expected 00 00 08 03");
  }
  if (label_bytes.size() < 8) {
    fail(ErrorKind::kFormat, source + ": label file too short for an IDX header (" +
                                 std::to_string(label_bytes.size()) + " bytes)");
  }
  if (read_be32(label_bytes, 0) != kIdxLabelMagic) {
    fail(ErrorKind::kFormat, source + ": bad label magic, observed bytes " +
                                 hex_bytes(label_bytes, 4) + ", expected 00 00 08 01");
  }
  const std::size_t n = read_be32(image_bytes, 4);
  const std::size_t rows = read_be32(image_bytes, 8);
  const std::size_t cols = read_be32(image_bytes, 12);
  const std::size_t n_labels = read_be32(label_bytes, 4);
  const std::size_t width = rows * cols;
  if (image_bytes.size() != 16 + n * width) {
    fail(ErrorKind::kFormat, source + ": image file length " +
                                 std::to_string(image_bytes.size()) + " does not match header (" +
                                 std::to_string(16 + n * width) + " expected)");
  }
  if (label_bytes.size() != 8 + n_labels) {
    fail(ErrorKind::kFormat, source + ": label file length " +
                                 std::to_string(label_bytes.size()) + " does not match header (" +
                                 std::to_string(8 + n_labels) + " expected)");
  }
  if (n_labels != n) {
    fail(ErrorKind::kFormat, source + ": " + std::to_string(n) + " images but " +
                                 std::to_string(n_labels) + " labels");
  }
  Dataset ds;
  ds.kind = rows == kImageSide && cols == kImageSide ? FeatureKind::kImage28x28
                                                      : FeatureKind::kTabular;
  ds.samples = Tensor::matrix(n, width);
  auto values = ds.samples.values();
  for (std::size_t i = 0; i < n * width; ++i) {
    values[i] = static_cast<unsigned char>(image_bytes[16 + i]) / 255.0;
  }
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<unsigned char>(label_bytes[8 + i]);
  ds.labels = std::move(labels);
  append_provenance(ds, "load_idx " + source + " n=" + std::to_string(n) + " dims=" +
                            std::to_string(rows) + "x" + std::to_string(cols));
  return ds;
}

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
  return parse_idx(read_file(images_path), read_file(labels_path),
                   images_path + " + " + labels_path);
}

Dataset filter_digits(const Dataset& ds, const std::set<int>& keep) {
  if (!ds.labels) fail(ErrorKind::kInvalidArgument, "filter_digits: dataset has no labels");
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (keep.count((*ds.labels)[i])) idx.push_back(i);
  }
  Dataset out = select_rows(ds, idx);
  std::string digits;
  for (int d : keep) digits += (digits.empty() ? "" : ",") + std::to_string(d);
  append_provenance(out, "filter_digits {" + digits + "} kept=" + std::to_string(idx.size()));
  return out;
}

// --- PGM -------------------------------------------------------------------

GrayImage parse_pgm(const std::string& bytes, const std::string& source) {
  std::size_t pos = 0;
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_uint = [&](const char* what) {
    skip_space();
    std::size_t start = pos;
    while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) ++pos;
    if (start == pos) fail(ErrorKind::kFormat, source + ": expected " + what);
    return static_cast<std::size_t>(std::stoull(bytes.substr(start, pos - start)));
  };
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '2')) {
    fail(ErrorKind::kFormat, source + ": not a P5/P2 graymap (observed bytes " +
                                 hex_bytes(bytes, 2) + ")");
  }
  const bool binary = bytes[1] == '5';
  pos = 2;
  GrayImage img;
  img.width = read_uint("width");
  img.height = read_uint("height");
  const std::size_t maxval = read_uint("maxval");
  if (img.width == 0 || img.height == 0 || maxval == 0 || maxval > 65535) {
    fail(ErrorKind::kFormat, source + ": invalid PGM header");
  }
  const std::size_t count = img.width * img.height;
  img.pixels.resize(count);
  if (binary) {
    ++pos;  // single whitespace after maxval
    const std::size_t bpp = maxval > 255 ? 2 : 1;
    if (bytes.size() < pos + count * bpp) {
      fail(ErrorKind::kFormat, source + ": truncated P5 raster");
    }
    for (std::size_t i = 0; i < count; ++i) {
      std::size_t v = static_cast<unsigned char>(bytes[pos + i * bpp]);
      if (bpp == 2) v = (v << 8) | static_cast<unsigned char>(bytes[pos + i * bpp + 1]);
      if (v > maxval) fail(ErrorKind::kFormat, source + ": pixel exceeds maxval");
      img.pixels[i] = static_cast<double>(v) / static_cast<double>(maxval);
    }
  } else {
    for (std::size_t i = 0; i < count; ++i) {
      const std::size_t v = read_uint("pixel value");
      if (v > maxval) fail(ErrorKind::kFormat, source + ": pixel exceeds maxval");
      img.pixels[i] = static_cast<double>(v) / static_cast<double>(maxval);
    }
  }
  return img;
}

GrayImage read_pgm(const std::string& path) { return parse_pgm(read_file(path), path); }

std::string encode_pgm(std::size_t width, std::size_t height,
                       std::span<const std::uint8_t> pixels) {
  if (width == 0 || height == 0 || pixels.size() != width * height) {
    fail(ErrorKind::kInvalidArgument, "encode_pgm: " + std::to_string(pixels.size()) +
                                          " pixels for " + std::to_string(width) + "x" +
                                          std::to_string(height));
  }
  std::string out = "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  out.append(reinterpret_cast<const char*>(pixels.data()), pixels.size());
  return out;
}

void write_pgm(const std::string& path, std::size_t width, std::size_t height,
               std::span<const std::uint8_t> pixels) {
  write_file(path, encode_pgm(width, height, pixels));
}

// --- textures --------------------------------------------------------------

Tensor image_to_texture(const GrayImage& image) {
  const std::size_t side = std::min(image.width, image.height);
  if (side == 0) fail(ErrorKind::kInvalidArgument, "image_to_texture: empty image");
  const std::size_t x0 = (image.width - side) / 2;
  const std::size_t y0 = (image.height - side) / 2;
  Tensor out = Tensor::vector(kImagePixels);
  for (std::size_t r = 0; r < kImageSide; ++r) {
    const auto wr = area_weights(side, kImageSide, r);
    for (std::size_t c = 0; c < kImageSide; ++c) {
      const auto wc = area_weights(side, kImageSide, c);
      double acc = 0.0;
      for (const auto& [pr, a] : wr) {
        for (const auto& [pc, b] : wc) acc += a * b * image.at(y0 + pr, x0 + pc);
      }
      out[r * kImageSide + c] = std::clamp(acc, 0.0, 1.0);
    }
  }
  return out;
}

TextureBank make_texture_bank(const std::string& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) {
    fail(ErrorKind::kIo, "texture directory '" + dir + "' does not exist");
  }
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".pgm") {
      files.push_back(entry.path());
    }
  }
  if (files.empty()) fail(ErrorKind::kInvalidArgument, "no .pgm files in '" + dir + "'");
  std::sort(files.begin(), files.end());
  TextureBank bank;
  bank.source = TextureSource::kFiles;
  bank.origin = dir;
  bank.textures = Tensor::matrix(files.size(), kImagePixels);
  for (std::size_t i = 0; i < files.size(); ++i) {
    const Tensor t = image_to_texture(read_pgm(files[i].string()));
    std::copy(t.values().begin(), t.values().end(), bank.textures.row(i).begin());
  }
  return bank;
}

// Texture recipe: uniform brightness, a vertical light gradient, one
// value-noise octave on a 7-cell lattice, and fine vertical streaks (white
// noise averaged over two adjacent rows). Tuned so that brightness and
// gradient dominate pixel variance, as grass photographs do.
constexpr double kBrightnessLo = 0.1;
constexpr double kBrightnessHi = 0.9;
constexpr double kMaxGradient = 0.8;
constexpr std::size_t kLattice = 7;
constexpr double kLatticeAmplitude = 0.1;
constexpr double kStreakAmplitude = 0.1;

Tensor procedural_texture(Stream rng) {
  const double brightness = rng.uniform(kBrightnessLo, kBrightnessHi);
  const double gradient = rng.uniform(-kMaxGradient, kMaxGradient);
  std::vector<double> t(kImagePixels);
  for (std::size_t i = 0; i < kImagePixels; ++i) {
    const double y = static_cast<double>(i / kImageSide) / (kImageSide - 1);
    t[i] = brightness + gradient * (y - 0.5);
  }
  add_value_noise(rng, kLattice, kLatticeAmplitude, t);
  std::vector<double> white(kImagePixels);
  for (double& w : white) w = rng.normal();
  for (std::size_t r = 0; r < kImageSide; ++r) {
    const std::size_t above = (r + kImageSide - 1) % kImageSide;
    for (std::size_t c = 0; c < kImageSide; ++c) {
      t[r * kImageSide + c] +=
          kStreakAmplitude * 0.5 * (white[r * kImageSide + c] + white[above * kImageSide + c]);
    }
  }
  Tensor out = Tensor::vector(kImagePixels);
  for (std::size_t i = 0; i < kImagePixels; ++i) out[i] = std::clamp(t[i], 0.0, 1.0);
  return out;
}

TextureBank make_texture_bank(std::uint64_t seed, std::size_t count) {
  if (count == 0) fail(ErrorKind::kInvalidArgument, "texture bank must be nonempty");
  TextureBank bank;
  bank.source = TextureSource::kProcedural;
  bank.seed = seed;
  bank.textures = Tensor::matrix(count, kImagePixels);
  const Stream root = Stream(seed).split("texture");
  for (std::size_t k = 0; k < count; ++k) {
    const Tensor t = procedural_texture(root.split(static_cast<std::uint64_t>(k)));
    std::copy(t.values().begin(), t.values().end(), bank.textures.row(k).begin());
  }
  return bank;
}

// --- Grassy-MNIST ----------------------------------------------------------

Dataset synthesize_grassy(const Dataset& digits, const TextureBank& bank, double scale,
                          Stream& rng) {
  if (bank.size() == 0) fail(ErrorKind::kInvalidArgument, "synthesize_grassy: empty bank");
  if (!(scale >= 0.0) || !std::isfinite(scale)) {
    fail(ErrorKind::kInvalidArgument, "synthesize_grassy: scale must be >= 0");
  }
  if (digits.width() != kImagePixels || bank.textures.cols() != kImagePixels) {
    fail(ErrorKind::kInvalidArgument, "synthesize_grassy: digits and textures must be 28x28");
  }
  Dataset out = digits;
  out.kind = FeatureKind::kImage28x28;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto tex = bank.textures.row(rng.below(bank.size()));
    auto row = out.samples.row(i);
    double peak = 0.0;
    for (std::size_t p = 0; p < kImagePixels; ++p) {
      row[p] = row[p] + scale * tex[p];
      peak = std::max(peak, row[p]);
    }
    if (peak > 1.0) {
      for (auto& v : row) v /= peak;
    }
  }
  append_provenance(out, "synthesize_grassy scale=" + format_double(scale) +
                             " bank=" + bank_description(bank));
  return out;
}

BackgroundSplit make_background_split(const TextureBank& bank, std::size_t count,
                                      Stream& rng) {
  if (count >= bank.size()) {
    fail(ErrorKind::kInvalidArgument,
         "make_background_split: need more than " + std::to_string(count) +
             " textures to keep a disjoint target pool, bank has " +
             std::to_string(bank.size()));
  }
  const auto perm = rng.permutation(bank.size());
  BackgroundSplit split;
  split.background_indices.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(count));
  split.target_indices.assign(perm.begin() + static_cast<std::ptrdiff_t>(count), perm.end());
  std::sort(split.target_indices.begin(), split.target_indices.end());

  split.background.kind = FeatureKind::kImage28x28;
  split.background.samples = gather_rows(bank.textures, split.background_indices);
  append_provenance(split.background, "background textures count=" + std::to_string(count) +
                                          " bank=" + bank_description(bank));

  split.target_bank = bank;
  split.target_bank.textures = gather_rows(bank.textures, split.target_indices);
  return split;
}

// --- perturbations ---------------------------------------------------------

Dataset add_isotropic_noise(const Dataset& ds, double noise_scale, Stream& rng) {
  if (!(noise_scale >= 0.0) || !std::isfinite(noise_scale)) {
    fail(ErrorKind::kInvalidArgument, "add_isotropic_noise: noise_scale must be >= 0");
  }
  Dataset out = ds;
  for (auto& v : out.samples.values()) v = std::clamp(v + noise_scale * rng.normal(), 0.0, 1.0);
  append_provenance(out, "add_isotropic_noise scale=" + format_double(noise_scale));
  return out;
}

Dataset contaminate(const Dataset& primary, const Dataset& contaminant, double fraction,
                    Stream& rng) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) {
    fail(ErrorKind::kInvalidArgument, "contaminate: fraction must lie in [0, 1]");
  }
  if (primary.width() != contaminant.width()) {
    fail(ErrorKind::kInvalidArgument, "contaminate: width mismatch " +
                                          std::to_string(primary.width()) + " vs " +
                                          std::to_string(contaminant.width()));
  }
  const auto n = primary.size();
  const auto replace = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  if (replace > 0 && contaminant.size() == 0) {
    fail(ErrorKind::kInvalidArgument, "contaminate: contaminant dataset is empty");
  }
  auto perm = rng.permutation(n);
  perm.resize(replace);
  std::sort(perm.begin(), perm.end());
  Dataset out = primary;
  for (std::size_t i : perm) {
    const auto src = contaminant.samples.row(rng.below(contaminant.size()));
    std::copy(src.begin(), src.end(), out.samples.row(i).begin());
    if (out.labels) (*out.labels)[i] = kContaminantLabel;
  }
  append_provenance(out, "contaminate fraction=" + format_double(fraction) +
                             " replaced=" + std::to_string(replace));
  return out;
}

// --- tabular ---------------------------------------------------------------

Dataset parse_tabular_csv(const std::string& text, const CsvOptions& options,
                          const std::string& source) {
  std::istringstream in(text);
  std::string line;
  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  bool has_label = false;
  std::size_t width = 0;
  std::size_t line_no = 0;
  bool first = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    auto fields = split_csv_line(line);
    if (first) {
      first = false;
      double probe;
      const bool numeric = std::all_of(fields.begin(), fields.end(), [&](const std::string& f) {
        return parse_number(f, probe);
      });
      if (!numeric) {
        std::string last = fields.back();
        std::transform(last.begin(), last.end(), last.begin(),
                       [](unsigned char c) { return std::tolower(c); });
        has_label = last == "label";
        width = fields.size();
        continue;
      }
    }
    if (width == 0) width = fields.size();
    if (fields.size() != width) {
      fail(ErrorKind::kFormat, source + ": line " + std::to_string(line_no) + " has " +
                                   std::to_string(fields.size()) + " fields, expected " +
                                   std::to_string(width));
    }
    std::vector<double> row(fields.size());
    for (std::size_t c = 0; c < fields.size(); ++c) {
      if (!parse_number(fields[c], row[c])) {
        fail(ErrorKind::kFormat, source + ": non-numeric cell '" + fields[c] + "' at line " +
                                     std::to_string(line_no) + ", column " +
                                     std::to_string(c + 1));
      }
    }
    if (has_label) {
      const double label = row.back();
      if (label != std::floor(label)) {
        fail(ErrorKind::kFormat, source + ": non-integer label at line " +
                                     std::to_string(line_no));
      }
      labels.push_back(static_cast<int>(label));
      row.pop_back();
    }
    rows.push_back(std::move(row));
  }
  const std::size_t features = has_label ? width - 1 : width;
  if (rows.empty()) fail(ErrorKind::kFormat, source + ": no data rows");
  if (features == 0) fail(ErrorKind::kFormat, source + ": no feature columns");
  if (options.expected_width && *options.expected_width != features) {
    fail(ErrorKind::kFormat, source + ": expected " + std::to_string(*options.expected_width) +
                                 " features, found " + std::to_string(features));
  }
  Dataset ds;
  ds.kind = FeatureKind::kTabular;
  ds.samples = Tensor::from_rows(rows);
  if (has_label) ds.labels = std::move(labels);
  append_provenance(ds, "load_tabular_csv " + source + " rows=" + std::to_string(rows.size()) +
                            " features=" + std::to_string(features));
  if (options.min_max) {
    std::string mins = "min_max mins=", maxs = " maxs=";
    for (std::size_t c = 0; c < features; ++c) {
      double lo = ds.samples(0, c), hi = lo;
      for (std::size_t r = 0; r < ds.size(); ++r) {
        lo = std::min(lo, ds.samples(r, c));
        hi = std::max(hi, ds.samples(r, c));
      }
      for (std::size_t r = 0; r < ds.size(); ++r) {
        ds.samples(r, c) = hi > lo ? (ds.samples(r, c) - lo) / (hi - lo) : 0.0;
      }
      mins += (c ? ";" : "") + format_double(lo);
      maxs += (c ? ";" : "") + format_double(hi);
    }
    append_provenance(ds, mins + maxs);
  }
  return ds;
}

Dataset load_tabular_csv(const std::string& path, const CsvOptions& options) {
  return parse_tabular_csv(read_file(path), options, path);
}

}  // namespace cvae
