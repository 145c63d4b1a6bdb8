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
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cvae/checkpoint.hpp"
#include "cvae/data.hpp"
#include "cvae/error.hpp"
#include "cvae/rng.hpp"
#include "doctest.h"

using namespace cvae;
namespace fs = std::filesystem;

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int shift = 24; shift >= 0; shift -= 8) out.push_back(char((v >> shift) & 0xff));
}

std::string idx_images(std::uint32_t n, std::uint32_t rows, std::uint32_t cols,
                       const std::vector<std::uint8_t>& pixels) {
  std::string out;
  put_u32(out, 0x00000803);
  put_u32(out, n);
  put_u32(out, rows);
  put_u32(out, cols);
  out.append(pixels.begin(), pixels.end());
  return out;
}

std::string idx_labels(const std::vector<std::uint8_t>& labels) {
  std::string out;
  put_u32(out, 0x00000801);
  put_u32(out, std::uint32_t(labels.size()));
  out.append(labels.begin(), labels.end());
  return out;
}

Dataset digit_images(std::size_t n, std::uint64_t seed) {
  Stream rng(seed);
  Dataset ds;
  ds.samples = Tensor({n, kImagePixels});
  for (double& v : ds.samples.values()) v = rng.uniform() < 0.2 ? rng.uniform() : 0.0;
  ds.labels = std::vector<int>(n);
  for (std::size_t i = 0; i < n; ++i) (*ds.labels)[i] = int(i % 3);
  return ds;
}

TextureBank constant_bank(double value, std::size_t count = 1) {
  TextureBank bank;
  bank.textures = Tensor({count, kImagePixels}, value);
  return bank;
}

std::string bytes_of(const Tensor& t) {
  return std::string(reinterpret_cast<const char*>(t.values().data()), t.size() * sizeof(double));
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "cvae_data_test";
  fs::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_CASE("IDX parsing scales pixels and attaches labels") {
  std::vector<std::uint8_t> px(3 * 4, 0);
  px[0] = 255;
  px[5] = 51;
  const auto ds = parse_idx(idx_images(3, 2, 2, px), idx_labels({7, 0, 2}));
  CHECK(ds.size() == 3);
  CHECK(ds.width() == 4);
  CHECK(ds.samples(0, 0) == 1.0);
  CHECK(ds.samples(0, 1) == 0.0);
  CHECK(ds.samples(1, 1) == doctest::Approx(0.2).epsilon(1e-15));
  CHECK(*ds.labels == std::vector<int>{7, 0, 2});
}

TEST_CASE("IDX header dimensions decide the sample width") {
  // Reference reading: big-endian u32 magic, count, rows, cols.
  const std::string bytes = idx_images(60000, 28, 28, std::vector<std::uint8_t>(60000 * 784, 0));
  CHECK(std::uint8_t(bytes[2]) == 0x08);
  CHECK(std::uint8_t(bytes[3]) == 0x03);
  const auto ds = parse_idx(bytes, idx_labels(std::vector<std::uint8_t>(60000, 1)));
  CHECK(ds.size() == 60000);
  CHECK(ds.width() == 784);
}

TEST_CASE("IDX errors") {
  const std::vector<std::uint8_t> px(9 * 4, 0);
  std::string bad = idx_images(9, 2, 2, px);
  bad[3] = 0x04;
  try {
    parse_idx(bad, idx_labels(std::vector<std::uint8_t>(9, 0)));
    FAIL("expected a magic error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kFormat);
    CHECK(std::string(e.what()).find("00 00 08 04") != std::string::npos);
  }
  std::string truncated = idx_images(9, 2, 2, px);
  truncated.pop_back();
  CHECK_THROWS_AS(parse_idx(truncated, idx_labels(std::vector<std::uint8_t>(9, 0))), Error);
  try {
    parse_idx(idx_images(9, 2, 2, px), idx_labels(std::vector<std::uint8_t>(10, 0)));
    FAIL("expected a count mismatch");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("9 images") != std::string::npos);
  }
  CHECK_THROWS_AS(load_idx("/nonexistent/images", "/nonexistent/labels"), Error);
}

TEST_CASE("bundled MNIST subset loads and filters by direct tally") {
  const std::string dir = CVAE_SOURCE_DIR "/data/mnist/";
  const auto ds = load_idx(dir + "mnist10k-images-idx3-ubyte", dir + "mnist10k-labels-idx1-ubyte");
  CHECK(ds.width() == 784);
  std::size_t expected = 0;
  for (int l : *ds.labels) expected += (l >= 0 && l <= 2);
  const auto kept = filter_digits(ds, {0, 1, 2});
  CHECK(kept.size() == expected);
  for (int l : *kept.labels) CHECK((l >= 0 && l <= 2));
  ds.validate();
}

TEST_CASE("filter_digits") {
  const auto ds = digit_images(9, 1);
  const auto all = filter_digits(ds, {0, 1, 2, 3, 4, 5, 6, 7, 8, 9});
  CHECK(all.samples == ds.samples);
  CHECK(*all.labels == *ds.labels);
  CHECK(filter_digits(ds, {}).size() == 0);
  const auto ones = filter_digits(ds, {1});
  CHECK(ones.size() == 3);
  CHECK(ones.samples.row(1)[0] == ds.samples.row(4)[0]);
  Dataset unlabeled = ds;
  unlabeled.labels.reset();
  CHECK_THROWS_AS(filter_digits(unlabeled, {1}), Error);
}

TEST_CASE("PGM round trip in binary and ASCII forms") {
  std::vector<std::uint8_t> px = {0, 128, 255, 7, 9, 200};
  const auto img = parse_pgm(encode_pgm(3, 2, px));
  CHECK(img.width == 3);
  CHECK(img.height == 2);
  CHECK(img.at(0, 2) == 1.0);
  CHECK(img.at(0, 1) == doctest::Approx(128.0 / 255.0));
  const auto ascii = parse_pgm("P2\n# comment\n2 1\n15\n0 15\n");
  CHECK(ascii.pixels == std::vector<double>{0.0, 1.0});
  CHECK_THROWS_AS(parse_pgm("P6\n1 1\n255\n\x01\x02\x03"), Error);
  CHECK_THROWS_AS(parse_pgm("P5\n4 4\n255\n\x01"), Error);
}

TEST_CASE("texture from a constant image") {
  GrayImage img{56, 56, std::vector<double>(56 * 56, 0.5)};
  const Tensor t = image_to_texture(img);
  CHECK(t.size() == 784);
  for (double v : t.values()) CHECK(v == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("texture from a wide image crops the center then averages") {
  // 84 x 56: the crop starts at column (84 - 56) / 2 = 14; each output pixel
  // averages a 2x2 block of the crop.
  GrayImage img{84, 56, std::vector<double>(84 * 56)};
  for (std::size_t r = 0; r < 56; ++r) {
    for (std::size_t c = 0; c < 84; ++c) img.pixels[r * 84 + c] = double((r * 84 + c) % 97) / 96.0;
  }
  const Tensor t = image_to_texture(img);
  for (std::size_t r = 0; r < 28; ++r) {
    for (std::size_t c = 0; c < 28; ++c) {
      double acc = 0.0;
      for (std::size_t dr = 0; dr < 2; ++dr) {
        for (std::size_t dc = 0; dc < 2; ++dc) acc += img.at(2 * r + dr, 14 + 2 * c + dc);
      }
      CHECK(t[r * 28 + c] == doctest::Approx(acc / 4).epsilon(1e-12));
    }
  }
}

TEST_CASE("texture bank from a directory of PGM files") {
  const fs::path dir = scratch("bank");
  fs::remove_all(dir);
  fs::create_directories(dir);
  write_pgm((dir / "b.pgm").string(), 28, 28, std::vector<std::uint8_t>(784, 255));
  write_pgm((dir / "a.pgm").string(), 56, 56, std::vector<std::uint8_t>(56 * 56, 0));
  const auto bank = make_texture_bank(dir.string());
  CHECK(bank.size() == 2);
  CHECK(bank.source == TextureSource::kFiles);
  CHECK(bank.textures(0, 0) == 0.0);  // sorted by name
  CHECK(bank.textures(1, 0) == 1.0);
  fs::remove_all(dir);
  fs::create_directories(dir);
  CHECK_THROWS_AS(make_texture_bank(dir.string()), Error);
}

TEST_CASE("procedural textures are seeded, varied and in range") {
  const auto a = make_texture_bank(5, 20);
  const auto b = make_texture_bank(5, 20);
  const auto c = make_texture_bank(6, 20);
  CHECK(a.textures == b.textures);
  CHECK_FALSE(a.textures == c.textures);
  CHECK(a.source == TextureSource::kProcedural);
  for (double v : a.textures.values()) CHECK((v >= 0.0 && v <= 1.0));
  // Textures are not flat and differ from each other.
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto row = a.textures.row(i);
    const auto [lo, hi] = std::minmax_element(row.begin(), row.end());
    CHECK(*hi - *lo > 0.1);
  }
  CHECK_FALSE(std::equal(a.textures.row(0).begin(), a.textures.row(0).end(),
                         a.textures.row(1).begin()));
  // Texture k depends only on (seed, k), not on the bank size.
  const auto longer = make_texture_bank(5, 30);
  CHECK(std::equal(a.textures.row(19).begin(), a.textures.row(19).end(),
                   longer.textures.row(19).begin()));
  CHECK(content_hash(bytes_of(a.textures)) == content_hash(bytes_of(b.textures)));
}

TEST_CASE("synthesize_grassy at scale 0 is the identity") {
  const auto digits = digit_images(12, 2);
  Stream rng(3);
  const auto out = synthesize_grassy(digits, make_texture_bank(1, 4), 0.0, rng);
  CHECK(out.samples == digits.samples);
  CHECK(*out.labels == *digits.labels);
}

TEST_CASE("synthesize_grassy hand arithmetic") {
  // Pixels 0, 1 and 0.5 over a constant 0.5 texture at scale 2: raw values
  // 1, 2 and 1.5, peak 2, so the image is divided by 2.
  Dataset d;
  d.samples = Tensor({1, kImagePixels}, 0.0);
  d.samples[1] = 1.0;
  d.samples[2] = 0.5;
  Stream rng(4);
  const auto out = synthesize_grassy(d, constant_bank(0.5), 2.0, rng);
  CHECK(out.samples[0] == 0.5);
  CHECK(out.samples[1] == 1.0);
  CHECK(out.samples[2] == 0.75);
  CHECK(out.samples[700] == 0.5);

  // Below a peak of 1 nothing is rescaled.
  d.samples[1] = 0.9;
  Stream rng2(4);
  const auto faint = synthesize_grassy(d, constant_bank(0.1), 0.5, rng2);
  CHECK(faint.samples[0] == doctest::Approx(0.05).epsilon(1e-15));
  CHECK(faint.samples[1] == doctest::Approx(0.95).epsilon(1e-15));
  CHECK(faint.samples[2] == doctest::Approx(0.55).epsilon(1e-15));
  CHECK(out.provenance.find("scale=2") != std::string::npos);
}

TEST_CASE("synthesize_grassy stays in range and is reproducible") {
  const auto digits = digit_images(30, 5);
  const auto bank = make_texture_bank(9, 6);
  Stream a(10), b(10);
  const auto x = synthesize_grassy(digits, bank, 2.0, a);
  const auto y = synthesize_grassy(digits, bank, 2.0, b);
  CHECK(x.samples == y.samples);
  x.validate();
  TextureBank empty;
  empty.textures = Tensor::matrix(0, kImagePixels);
  CHECK_THROWS_AS(synthesize_grassy(digits, empty, 2.0, a), Error);
  CHECK_THROWS_AS(synthesize_grassy(digits, bank, -1.0, a), Error);
}

TEST_CASE("background split is disjoint and reproducible") {
  const auto bank = make_texture_bank(11, 40);
  Stream a(12), b(12);
  const auto s1 = make_background_split(bank, 15, a);
  const auto s2 = make_background_split(bank, 15, b);
  CHECK(s1.background_indices == s2.background_indices);
  CHECK(s1.background.size() == 15);
  CHECK(s1.target_bank.size() == 25);
  CHECK_FALSE(s1.background.labels.has_value());
  std::vector<std::size_t> inter;
  auto bg = s1.background_indices;
  std::sort(bg.begin(), bg.end());
  std::set_intersection(bg.begin(), bg.end(), s1.target_indices.begin(), s1.target_indices.end(),
                        std::back_inserter(inter));
  CHECK(inter.empty());
  CHECK(bg.size() + s1.target_indices.size() == 40);
  for (std::size_t k = 0; k < 15; ++k) {
    CHECK(std::equal(s1.background.samples.row(k).begin(), s1.background.samples.row(k).end(),
                     bank.textures.row(s1.background_indices[k]).begin()));
  }

  Stream c(13);
  CHECK(make_background_split(bank, 0, c).background.size() == 0);
  CHECK_THROWS_AS(make_background_split(bank, 40, c), Error);
}

TEST_CASE("isotropic noise") {
  const auto ds = digit_images(10, 14);
  Stream a(15);
  CHECK(add_isotropic_noise(ds, 0.0, a).samples == ds.samples);
  Stream b(16);
  const auto noisy = add_isotropic_noise(ds, 2.0, b);
  for (double v : noisy.samples.values()) CHECK((v >= 0.0 && v <= 1.0));
  CHECK_FALSE(noisy.samples == ds.samples);
  CHECK(noisy.provenance.find("add_isotropic_noise scale=2") != std::string::npos);
  CHECK_THROWS_AS(add_isotropic_noise(ds, -0.1, b), Error);
}

TEST_CASE("contamination counts and labels") {
  const auto primary = digit_images(100, 17);
  Dataset other;
  other.samples = Tensor({7, kImagePixels}, 0.25);
  Stream a(18);
  CHECK(contaminate(primary, other, 0.0, a).samples == primary.samples);

  Stream b(19);
  const auto quarter = contaminate(primary, other, 0.25, b);
  const auto& labels = *quarter.labels;
  CHECK(std::count(labels.begin(), labels.end(), kContaminantLabel) == 25);
  for (std::size_t i = 0; i < 100; ++i) {
    const bool replaced = labels[i] == kContaminantLabel;
    CHECK((quarter.samples(i, 3) == 0.25) == (replaced || primary.samples(i, 3) == 0.25));
    if (!replaced) CHECK(labels[i] == (*primary.labels)[i]);
  }

  Stream c(20);
  const auto full = contaminate(primary, other, 1.0, c);
  CHECK(full.samples == Tensor({100, kImagePixels}, 0.25));

  Dataset narrow;
  narrow.samples = Tensor({3, 5}, 0.0);
  CHECK_THROWS_AS(contaminate(primary, narrow, 0.5, c), Error);
  CHECK_THROWS_AS(contaminate(primary, other, 1.5, c), Error);
}

TEST_CASE("tabular CSV parsing") {
  const auto plain = parse_tabular_csv("1,2\n3.5,-4\n0,1e3\n");
  CHECK(plain.samples == Tensor::from_rows({{1, 2}, {3.5, -4}, {0, 1000}}));
  CHECK_FALSE(plain.labels.has_value());
  CHECK(plain.kind == FeatureKind::kTabular);

  const auto labeled = parse_tabular_csv("g1,g2,label\n1,2,0\n3,4,1\n");
  CHECK(labeled.samples == Tensor::from_rows({{1, 2}, {3, 4}}));
  CHECK(*labeled.labels == std::vector<int>{0, 1});

  try {
    parse_tabular_csv("a,b\n1,2\n3\n");
    FAIL("expected a ragged-row error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
  try {
    parse_tabular_csv("1,2\n3,x\n");
    FAIL("expected a non-numeric error");
  } catch (const Error& e) {
    const std::string msg = e.what();
    CHECK(msg.find("line 2") != std::string::npos);
    CHECK(msg.find("column 2") != std::string::npos);
  }
  CsvOptions width;
  width.expected_width = 3;
  CHECK_THROWS_AS(parse_tabular_csv("1,2\n", width), Error);
}

TEST_CASE("tabular min-max scaling") {
  CsvOptions o;
  o.min_max = true;
  const auto ds = parse_tabular_csv("2,5,-1\n4,5,3\n3,5,1\n6,5,-1\n", o);
  // Column 0: min 2, max 6. Column 1: constant -> 0. Column 2: min -1, max 3.
  CHECK(ds.samples == Tensor::from_rows({{0, 0, 0}, {0.5, 0, 1}, {0.25, 0, 0.5}, {1, 0, 0}}));
  CHECK(ds.provenance.find("min_max") != std::string::npos);
}

TEST_CASE("dataset cache round trip") {
  auto ds = digit_images(6, 21);
  ds.provenance = "unit test\n";
  const auto path = scratch("cache.ds").string();
  save_dataset(path, ds);
  const auto back = load_dataset(path);
  CHECK(back.samples == ds.samples);
  CHECK(*back.labels == *ds.labels);
  CHECK(back.kind == ds.kind);
  CHECK(back.provenance == ds.provenance);
  CHECK(fs::exists(path + ".provenance.txt"));
  save_dataset(path + "2", back);
  CHECK(read_file(path) == read_file(path + "2"));
}

TEST_CASE("dataset validation") {
  auto ds = digit_images(4, 22);
  ds.validate();
  ds.samples[3] = 1.5;
  CHECK_THROWS_AS(ds.validate(), Error);
  ds.samples[3] = 0.5;
  ds.labels->pop_back();
  CHECK_THROWS_AS(ds.validate(), Error);
}
