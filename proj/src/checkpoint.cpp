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

#include "cvae/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "cvae/data.hpp"
#include "cvae/error.hpp"

namespace cvae {

namespace {

constexpr std::uint64_t kMaxDim = std::uint64_t{1} << 40;
constexpr std::uint32_t kMaxNameLength = 4096;
constexpr std::uint32_t kMaxRank = 8;

template <typename T>
void put(std::ostream& out, T value) {
  static_assert(std::is_unsigned_v<T>);
  char bytes[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    bytes[i] = static_cast<char>((value >> (8 * i)) & 0xff);
  }
  out.write(bytes, sizeof(T));
}

void put_f64(std::ostream& out, double value) { put(out, std::bit_cast<std::uint64_t>(value)); }

template <typename T>
T get(std::istream& in, const char* what) {
  unsigned char bytes[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T))) {
    fail(ErrorKind::kFormat, std::string("truncated file while reading ") + what);
  }
  T value = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) value |= static_cast<T>(bytes[i]) << (8 * i);
  return value;
}

double get_f64(std::istream& in) {
  return std::bit_cast<double>(get<std::uint64_t>(in, "tensor data"));
}

void put_magic(std::ostream& out, const char (&magic)[8]) { out.write(magic, 8); }

void expect_magic(std::istream& in, const char (&magic)[8], const std::string& path) {
  char seen[8] = {};
  if (!in.read(seen, 8) || std::memcmp(seen, magic, 8) != 0) {
    fail(ErrorKind::kFormat, path + ": bad magic, expected '" + std::string(magic, 8) + "'");
  }
}

void expect_version(std::istream& in, const std::string& path) {
  const auto version = get<std::uint32_t>(in, "version");
  if (version != kCheckpointVersion) {
    fail(ErrorKind::kFormat, path + ": unsupported format version " + std::to_string(version));
  }
}

struct Header {
  ModelKind kind = ModelKind::kCvae;
  std::uint64_t input_dim = 0, dim_a = 0, dim_b = 0, hidden_dim = 0;
  bool zero_bias = false;
  ReconModel recon = ReconModel::kBernoulli;
  std::uint32_t tensor_count = 0;
};

void put_header(std::ostream& out, const Header& h) {
  put_magic(out, kCheckpointMagic);
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(h.kind));
  put<std::uint64_t>(out, h.input_dim);
  put<std::uint64_t>(out, h.dim_a);
  put<std::uint64_t>(out, h.dim_b);
  put<std::uint64_t>(out, h.hidden_dim);
  put<std::uint8_t>(out, h.zero_bias ? 1 : 0);
  put<std::uint8_t>(out, h.recon == ReconModel::kBernoulli ? 0 : 1);
  put<std::uint32_t>(out, h.tensor_count);
}

Header get_header(std::istream& in, const std::string& path) {
  expect_magic(in, kCheckpointMagic, path);
  expect_version(in, path);
  Header h;
  const auto kind = get<std::uint32_t>(in, "model kind");
  if (kind > 1) fail(ErrorKind::kFormat, path + ": unknown model kind " + std::to_string(kind));
  h.kind = static_cast<ModelKind>(kind);
  h.input_dim = get<std::uint64_t>(in, "input_dim");
  h.dim_a = get<std::uint64_t>(in, "latent dims");
  h.dim_b = get<std::uint64_t>(in, "latent dims");
  h.hidden_dim = get<std::uint64_t>(in, "hidden_dim");
  const auto zero_bias = get<std::uint8_t>(in, "zero_bias");
  const auto recon = get<std::uint8_t>(in, "recon_model");
  if (zero_bias > 1 || recon > 1) fail(ErrorKind::kFormat, path + ": corrupt header flags");
  h.zero_bias = zero_bias == 1;
  h.recon = recon == 0 ? ReconModel::kBernoulli : ReconModel::kGaussian;
  h.tensor_count = get<std::uint32_t>(in, "tensor count");
  for (auto d : {h.input_dim, h.dim_a, h.hidden_dim}) {
    if (d == 0 || d > kMaxDim) fail(ErrorKind::kFormat, path + ": implausible dimension");
  }
  return h;
}

std::string serialize_params(const Header& header, std::vector<ParamRef> params) {
  std::ostringstream out(std::ios::binary);
  Header h = header;
  h.tensor_count = static_cast<std::uint32_t>(params.size());
  put_header(out, h);
  for (const auto& p : params) write_tensor_block(out, p.name, *p.tensor);
  return out.str();
}

void load_params(std::istream& in, const Header& h, std::vector<ParamRef> params,
                 const std::string& path) {
  if (h.tensor_count != params.size()) {
    fail(ErrorKind::kFormat, path + ": expected " + std::to_string(params.size()) +
                                 " tensors for this architecture, found " +
                                 std::to_string(h.tensor_count));
  }
  for (auto& p : params) {
    NamedTensor block = read_tensor_block(in);
    if (block.name != p.name) {
      fail(ErrorKind::kFormat, path + ": expected tensor '" + p.name + "', found '" +
                                   block.name + "'");
    }
    if (block.tensor.shape() != p.tensor->shape()) {
      fail(ErrorKind::kFormat, path + ": tensor '" + p.name + "' has shape " +
                                   shape_to_string(block.tensor.shape()) + ", expected " +
                                   shape_to_string(p.tensor->shape()));
    }
    *p.tensor = std::move(block.tensor);
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    fail(ErrorKind::kFormat, path + ": trailing bytes after last tensor");
  }
}

void put_string_block(std::ostream& out, const std::string& text) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(text.size()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
}

}  // namespace

void write_tensor_block(std::ostream& out, const std::string& name, const Tensor& tensor) {
  if (name.size() > kMaxNameLength) fail(ErrorKind::kInvalidArgument, "tensor name too long");
  put_string_block(out, name);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(tensor.rank()));
  for (std::size_t d : tensor.shape()) put<std::uint64_t>(out, d);
  for (double v : tensor.values()) put_f64(out, v);
}

NamedTensor read_tensor_block(std::istream& in) {
  NamedTensor block;
  const auto name_length = get<std::uint32_t>(in, "tensor name length");
  if (name_length > kMaxNameLength) fail(ErrorKind::kFormat, "tensor name length too large");
  block.name.resize(name_length);
  if (!in.read(block.name.data(), name_length)) {
    fail(ErrorKind::kFormat, "truncated file while reading tensor name");
  }
  const auto rank = get<std::uint32_t>(in, "tensor rank");
  if (rank > kMaxRank) fail(ErrorKind::kFormat, "tensor '" + block.name + "': rank too large");
  Shape shape(rank);
  std::uint64_t count = 1;
  for (auto& d : shape) {
    const auto dim = get<std::uint64_t>(in, "tensor dims");
    if (dim > kMaxDim || (dim != 0 && count > kMaxDim / dim)) {
      fail(ErrorKind::kFormat, "tensor '" + block.name + "': implausible dimensions");
    }
    count *= dim;
    d = static_cast<std::size_t>(dim);
  }
  std::vector<double> values(static_cast<std::size_t>(count));
  for (auto& v : values) v = get_f64(in);
  block.tensor = Tensor(std::move(shape), std::move(values));
  return block;
}

std::string serialize(const CvaeModel& model) {
  Header h;
  h.kind = ModelKind::kCvae;
  h.input_dim = model.arch.input_dim;
  h.dim_a = model.arch.s_dim;
  h.dim_b = model.arch.z_dim;
  h.hidden_dim = model.arch.hidden_dim;
  h.zero_bias = model.arch.zero_bias;
  h.recon = model.arch.recon;
  return serialize_params(h, const_cast<CvaeModel&>(model).all_parameters());
}

std::string serialize(const VaeModel& model) {
  Header h;
  h.kind = ModelKind::kVae;
  h.input_dim = model.arch.input_dim;
  h.dim_a = model.arch.latent_dim;
  h.dim_b = 0;
  h.hidden_dim = model.arch.hidden_dim;
  h.zero_bias = model.arch.zero_bias;
  h.recon = model.arch.recon;
  return serialize_params(h, const_cast<VaeModel&>(model).all_parameters());
}

void save_checkpoint(const std::string& path, const CvaeModel& model) {
  write_file(path, serialize(model));
}

void save_checkpoint(const std::string& path, const VaeModel& model) {
  write_file(path, serialize(model));
}

ModelKind peek_model_kind(const std::string& path) {
  std::istringstream in(read_file(path), std::ios::binary);
  return get_header(in, path).kind;
}

CvaeModel load_cvae_checkpoint(const std::string& path) {
  std::istringstream in(read_file(path), std::ios::binary);
  const Header h = get_header(in, path);
  if (h.kind != ModelKind::kCvae) fail(ErrorKind::kFormat, path + ": not a cVAE checkpoint");
  if (h.dim_b == 0 || h.dim_b > kMaxDim) fail(ErrorKind::kFormat, path + ": bad z_dim");
  CvaeArchitecture arch{h.input_dim, h.dim_a, h.dim_b, h.hidden_dim, h.zero_bias, h.recon};
  CvaeModel model = CvaeModel::create(arch, Stream(0));
  load_params(in, h, model.all_parameters(), path);
  return model;
}

VaeModel load_vae_checkpoint(const std::string& path) {
  std::istringstream in(read_file(path), std::ios::binary);
  const Header h = get_header(in, path);
  if (h.kind != ModelKind::kVae) fail(ErrorKind::kFormat, path + ": not a VAE checkpoint");
  VaeArchitecture arch{h.input_dim, h.dim_a, h.hidden_dim, h.zero_bias, h.recon};
  VaeModel model = VaeModel::create(arch, Stream(0));
  load_params(in, h, model.all_parameters(), path);
  return model;
}

void save_dataset(const std::string& path, const Dataset& ds) {
  std::ostringstream out(std::ios::binary);
  put_magic(out, kDatasetMagic);
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ds.kind));
  put<std::uint8_t>(out, ds.labels ? 1 : 0);
  write_tensor_block(out, "samples", ds.samples);
  if (ds.labels) {
    Tensor labels = Tensor::vector(ds.labels->size());
    for (std::size_t i = 0; i < ds.labels->size(); ++i) labels[i] = (*ds.labels)[i];
    write_tensor_block(out, "labels", labels);
  }
  write_file(path, out.str());
  write_file(path + ".provenance.txt", ds.provenance);
}

Dataset load_dataset(const std::string& path) {
  std::istringstream in(read_file(path), std::ios::binary);
  expect_magic(in, kDatasetMagic, path);
  expect_version(in, path);
  Dataset ds;
  const auto kind = get<std::uint32_t>(in, "feature kind");
  if (kind > 1) fail(ErrorKind::kFormat, path + ": unknown feature kind");
  ds.kind = static_cast<FeatureKind>(kind);
  const auto has_labels = get<std::uint8_t>(in, "label flag");
  NamedTensor samples = read_tensor_block(in);
  if (samples.name != "samples" || samples.tensor.rank() != 2) {
    fail(ErrorKind::kFormat, path + ": missing [n x d] samples block");
  }
  ds.samples = std::move(samples.tensor);
  if (has_labels) {
    NamedTensor labels = read_tensor_block(in);
    if (labels.name != "labels" || labels.tensor.size() != ds.samples.rows()) {
      fail(ErrorKind::kFormat, path + ": labels block does not match samples");
    }
    std::vector<int> out(labels.tensor.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<int>(labels.tensor[i]);
    ds.labels = std::move(out);
  }
  const std::string sidecar = path + ".provenance.txt";
  if (std::filesystem::exists(sidecar)) ds.provenance = read_file(sidecar);
  ds.validate();
  return ds;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kIo, "cannot open '" + path + "' for reading");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  if (in.bad()) fail(ErrorKind::kIo, "read error on '" + path + "'");
  return buffer.str();
}

void write_file(const std::string& path, const std::string& bytes) {
  const std::filesystem::path target(path);
  if (target.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(target.parent_path(), ec);
  }
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::kIo, "cannot open '" + path + "' for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out.flush()) fail(ErrorKind::kIo, "write error on '" + path + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, target, ec);
  if (ec) fail(ErrorKind::kIo, "cannot move '" + tmp + "' to '" + path + "': " + ec.message());
}

std::string content_hash(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char out[17];
  std::snprintf(out, sizeof(out), "%016llx", static_cast<unsigned long long>(h));
  return out;
}

}  // namespace cvae
