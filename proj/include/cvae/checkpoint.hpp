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

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "cvae/model.hpp"
#include "cvae/tensor.hpp"

namespace cvae {

// Model files start with the 8-byte magic "CVAECKPT" followed by a u32
// format version and an architecture header:
//
//   u32 model_kind (0 = cvae, 1 = vae)
//   u64 input_dim, u64 s_dim (latent_dim for vae), u64 z_dim (0 for vae),
//   u64 hidden_dim, u8 zero_bias, u8 recon_model (0 = bernoulli, 1 = gaussian)
//   u32 tensor_count
//
// then tensor_count tensor blocks. Every integer and double is little-endian.
//
// Tensor block:
//   u32 name_length, name bytes (no terminator), u32 rank, rank x u64 dims,
//   product(dims) x f64 values.

inline constexpr char kCheckpointMagic[8] = {'C', 'V', 'A', 'E', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

void write_tensor_block(std::ostream& out, const std::string& name, const Tensor& tensor);
NamedTensor read_tensor_block(std::istream& in);

enum class ModelKind : std::uint32_t { kCvae = 0, kVae = 1 };

std::string serialize(const CvaeModel& model);
std::string serialize(const VaeModel& model);

void save_checkpoint(const std::string& path, const CvaeModel& model);
void save_checkpoint(const std::string& path, const VaeModel& model);

/// Reads the header only.
ModelKind peek_model_kind(const std::string& path);

CvaeModel load_cvae_checkpoint(const std::string& path);
VaeModel load_vae_checkpoint(const std::string& path);

// Dataset cache: magic "CVAEDSET", u32 version, u32 feature kind, u8
// has_labels, then a "samples" tensor block and, when labeled, a "labels"
// block holding the integer labels as doubles. The provenance text goes to
// `<path>.provenance.txt`.

inline constexpr char kDatasetMagic[8] = {'C', 'V', 'A', 'E', 'D', 'S', 'E', 'T'};

struct Dataset;
void save_dataset(const std::string& path, const Dataset& ds);
Dataset load_dataset(const std::string& path);

std::string read_file(const std::string& path);
/// Writes through a temporary file and renames it into place.
void write_file(const std::string& path, const std::string& bytes);

/// FNV-1a 64 of a byte string, hex encoded. Used for artifact hashes in
/// manifests.
std::string content_hash(const std::string& bytes);

}  // namespace cvae
