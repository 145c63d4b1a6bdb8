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

#include "cvae/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include "cvae/checkpoint.hpp"
#include "cvae/error.hpp"
#include "json.hpp"

namespace cvae {

namespace {

using Json = nlohmann::ordered_json;

std::string g17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string join_digits(const std::set<int>& digits) {
  std::string out;
  for (int d : digits) out += (out.empty() ? "" : ",") + std::to_string(d);
  return out;
}

Stream recipe_stream(const DatasetRecipe& recipe) { return Stream(recipe.seed).split("recipe"); }

// Runs fn(i) for i in [0, n) on up to `workers` threads. The first exception
// stops further work and is rethrown.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> stop{false};
  std::exception_ptr error;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      while (!stop) {
        const std::size_t i = next++;
        if (i >= n) break;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(mu);
          if (!error) error = std::current_exception();
          stop = true;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

Tensor clamp_unit(Tensor t) {
  for (auto& v : t.values()) v = std::clamp(v, 0.0, 1.0);
  return t;
}

// `count` rows spread evenly over the dataset.
Tensor spread_rows(const Tensor& samples, std::size_t count) {
  std::vector<std::size_t> idx(count);
  for (std::size_t i = 0; i < count; ++i) idx[i] = i * samples.rows() / count;
  return gather_rows(samples, idx);
}

Tensor salient_lattice(std::size_t s_dim, std::size_t side) {
  const Tensor lattice = lattice_grid(side, -3.0, 3.0);
  Tensor grid = Tensor::matrix(lattice.rows(), s_dim);
  for (std::size_t i = 0; i < lattice.rows(); ++i) {
    for (std::size_t d = 0; d < std::min<std::size_t>(2, s_dim); ++d) grid(i, d) = lattice(i, d);
  }
  return grid;
}

std::string format_loss_csv(const TrainReport& report) {
  std::string out =
      "epoch,steps,recon_target,kl_s,kl_z_target,recon_background,kl_z_background,"
      "tc_estimate,discriminator_loss,total\n";
  for (const auto& e : report.epochs) {
    const auto& l = e.mean;
    out += std::to_string(e.epoch) + "," + std::to_string(e.steps) + "," + g17(l.recon_target) +
           "," + g17(l.kl_s) + "," + g17(l.kl_z_target) + "," + g17(l.recon_background) + "," +
           g17(l.kl_z_background) + "," + g17(l.tc_estimate) + "," +
           g17(l.discriminator_loss) + "," + g17(l.total) + "\n";
  }
  return out;
}

Json config_object(const std::string& described) {
  Json out = Json::object();
  std::istringstream in(described);
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find(" = ");
    if (eq != std::string::npos) out[line.substr(0, eq)] = line.substr(eq + 3);
  }
  return out;
}

class OutputDir {
 public:
  explicit OutputDir(std::string dir) : dir_(std::move(dir)) {
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    if (ec) fail(ErrorKind::kIo, "cannot create output directory '" + dir_ + "'");
  }

  std::string path(const std::string& name) const { return dir_ + "/" + name; }

  void write(const std::string& name, const std::string& bytes) {
    write_file(path(name), bytes);
    hashes_[name] = content_hash(bytes);
  }

  void record(const std::string& name) { hashes_[name] = content_hash(read_file(path(name))); }

  void write_grid(const std::string& name, const Tensor& images, std::size_t rows,
                  std::size_t cols) {
    const GrayRaster r = image_grid(images, rows, cols);
    write(name, encode_pgm(r.width, r.height, r.pixels));
  }

  Json hashes() const {
    Json out = Json::object();
    for (const auto& [name, hash] : hashes_) out[name] = hash;
    return out;
  }

 private:
  std::string dir_;
  std::map<std::string, std::string> hashes_;
};

void log_line(std::ostream* log, const std::string& line) {
  if (log) *log << line << std::endl;
}

}  // namespace

// --- dataset recipe --------------------------------------------------------

PreparedData prepare_data(const DatasetRecipe& recipe) {
  namespace fs = std::filesystem;
  if (!fs::exists(recipe.mnist_images) || !fs::exists(recipe.mnist_labels)) {
    fail(ErrorKind::kIo,
         "MNIST IDX files not found. Expected:\n  " + recipe.mnist_images + "\n  " +
             recipe.mnist_labels +
             "\nCreate them with `python3 tools/prepare_mnist.py data/mnist` or point "
             "mnist_images / mnist_labels at existing IDX files.");
  }
  PreparedData data;
  data.recipe = recipe;
  data.digits = head(interleave_labels(filter_digits(
                         load_idx(recipe.mnist_images, recipe.mnist_labels), recipe.digits)),
                     recipe.target_count);
  if (data.digits.size() == 0) {
    fail(ErrorKind::kInvalidArgument, "recipe selects no digits");
  }
  const TextureBank bank =
      recipe.texture_dir.empty()
          ? make_texture_bank(recipe.texture_seed, data.digits.size() + recipe.background_count)
          : make_texture_bank(recipe.texture_dir);
  Stream split_rng = recipe_stream(recipe).split("split");
  BackgroundSplit split = make_background_split(bank, recipe.background_count, split_rng);
  data.background = std::move(split.background);
  data.background.provenance = describe(recipe) + data.background.provenance;
  data.target_bank = std::move(split.target_bank);
  data.target = synthesize_target(data, recipe.scale);
  return data;
}

Dataset synthesize_target(const PreparedData& data, double scale) {
  Stream rng = recipe_stream(data.recipe).split("synthesize");
  Dataset out = synthesize_grassy(data.digits, data.target_bank, scale, rng);
  out.provenance = describe(data.recipe) + out.provenance;
  return out;
}

Dataset genuine_rows(const Dataset& ds) {
  if (!ds.labels) return ds;
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if ((*ds.labels)[i] != kContaminantLabel) keep.push_back(i);
  }
  return select_rows(ds, keep);
}

double score_cvae(const CvaeModel& model, const Dataset& target) {
  const Dataset genuine = genuine_rows(target);
  if (!genuine.labels) fail(ErrorKind::kInvalidArgument, "scoring needs labeled targets");
  return silhouette_score(infer_salient(model, genuine.samples), *genuine.labels);
}

double score_vae(const VaeModel& model, const Dataset& target) {
  const Dataset genuine = genuine_rows(target);
  if (!genuine.labels) fail(ErrorKind::kInvalidArgument, "scoring needs labeled targets");
  return silhouette_score(vae_embed(model, genuine.samples), *genuine.labels);
}

double best_pair_silhouette(const Tensor& embedding, std::span<const int> labels) {
  const std::size_t k = embedding.cols();
  if (k < 2) fail(ErrorKind::kInvalidArgument, "best_pair_silhouette: need >= 2 columns");
  double best = -1.0;
  Tensor pair = Tensor::matrix(embedding.rows(), 2);
  for (std::size_t a = 0; a < k; ++a) {
    for (std::size_t b = a + 1; b < k; ++b) {
      for (std::size_t i = 0; i < embedding.rows(); ++i) {
        pair(i, 0) = embedding(i, a);
        pair(i, 1) = embedding(i, b);
      }
      best = std::max(best, silhouette_score(pair, labels));
    }
  }
  return best;
}

// --- names -----------------------------------------------------------------

const char* to_string(SweepKind kind) {
  switch (kind) {
    case SweepKind::kBackgroundScale: return "background_scale";
    case SweepKind::kBackgroundNoise: return "background_noise";
    case SweepKind::kLatentDims: return "latent_dims";
    case SweepKind::kTargetContamination: return "target_contamination";
    case SweepKind::kBackgroundContamination: return "background_contamination";
  }
  return "unknown";
}

SweepKind parse_sweep_kind(const std::string& name) {
  for (auto k : {SweepKind::kBackgroundScale, SweepKind::kBackgroundNoise, SweepKind::kLatentDims,
                 SweepKind::kTargetContamination, SweepKind::kBackgroundContamination}) {
    if (name == to_string(k)) return k;
  }
  fail(ErrorKind::kInvalidArgument, "unknown sweep kind '" + name + "'");
}

const char* to_string(ModelType model) { return model == ModelType::kVae ? "vae" : "cvae"; }

ModelType parse_model_type(const std::string& name) {
  if (name == "vae") return ModelType::kVae;
  if (name == "cvae") return ModelType::kCvae;
  fail(ErrorKind::kInvalidArgument, "unknown model '" + name + "' (expected vae|cvae)");
}

// --- sweep spec ------------------------------------------------------------

std::vector<DimPair> full_dim_grid() {
  std::vector<DimPair> out;
  for (std::size_t s = 1; s <= 6; ++s) {
    for (std::size_t z = 1; z <= 6; ++z) out.push_back({s, z});
  }
  return out;
}

void SweepSpec::validate() const {
  train.validate();
  if (trials == 0) fail(ErrorKind::kInvalidArgument, "sweep: trials must be >= 1");
  if (kind == SweepKind::kLatentDims) {
    if (dims.empty()) fail(ErrorKind::kInvalidArgument, "sweep: dims grid is empty");
    for (const auto& d : dims) {
      if (d.s_dim == 0 || d.z_dim == 0) {
        fail(ErrorKind::kInvalidArgument, "sweep: latent dims must be >= 1");
      }
    }
    return;
  }
  if (grid.empty()) fail(ErrorKind::kInvalidArgument, "sweep: grid is empty");
  for (double v : grid) {
    const bool fraction = kind == SweepKind::kTargetContamination ||
                          kind == SweepKind::kBackgroundContamination;
    if (!(v >= 0.0) || (fraction && v > 1.0)) {
      fail(ErrorKind::kInvalidArgument, std::string("sweep: grid value ") + g17(v) +
                                            " out of range for " + to_string(kind));
    }
  }
}

std::size_t SweepSpec::grid_size() const {
  return kind == SweepKind::kLatentDims ? dims.size() : grid.size();
}

std::string SweepSpec::value_label(std::size_t index) const {
  if (kind == SweepKind::kLatentDims) {
    return std::to_string(dims[index].s_dim) + "x" + std::to_string(dims[index].z_dim);
  }
  return g17(grid[index]);
}

std::vector<ModelType> SweepSpec::models() const {
  if (kind == SweepKind::kBackgroundScale) return {ModelType::kVae, ModelType::kCvae};
  return {ModelType::kCvae};
}

const std::set<std::string>& train_keys() {
  static const std::set<std::string> keys = {
      "epochs", "batch_size", "learning_rate", "beta1", "beta2", "adam_epsilon", "tc_weight",
      "seed", "zero_bias", "s_dim", "z_dim", "hidden_dim", "recon"};
  return keys;
}

const std::set<std::string>& recipe_keys() {
  static const std::set<std::string> keys = {
      "mnist_images", "mnist_labels", "digits",       "target_count", "background_count",
      "scale",        "texture_dir",  "texture_seed", "data_seed"};
  return keys;
}

void apply_train_keys(const KeyValueConfig& cfg, TrainConfig& c) {
  c.epochs = cfg.get_uint("epochs", c.epochs);
  c.batch_size = cfg.get_uint("batch_size", c.batch_size);
  c.learning_rate = cfg.get_double("learning_rate", c.learning_rate);
  c.beta1 = cfg.get_double("beta1", c.beta1);
  c.beta2 = cfg.get_double("beta2", c.beta2);
  c.adam_epsilon = cfg.get_double("adam_epsilon", c.adam_epsilon);
  c.tc_weight = cfg.get_double("tc_weight", c.tc_weight);
  c.seed = cfg.get_uint("seed", c.seed);
  c.zero_bias = cfg.get_bool("zero_bias", c.zero_bias);
  c.s_dim = cfg.get_uint("s_dim", c.s_dim);
  c.z_dim = cfg.get_uint("z_dim", c.z_dim);
  c.hidden_dim = cfg.get_uint("hidden_dim", c.hidden_dim);
  if (const auto r = cfg.get("recon")) c.recon = parse_recon_model(*r);
}

void apply_recipe_keys(const KeyValueConfig& cfg, DatasetRecipe& r) {
  r.mnist_images = cfg.get_string("mnist_images", r.mnist_images);
  r.mnist_labels = cfg.get_string("mnist_labels", r.mnist_labels);
  if (cfg.has("digits")) {
    r.digits.clear();
    for (double d : cfg.get_doubles("digits", {})) {
      if (d != std::floor(d) || d < 0 || d > 9) {
        fail(ErrorKind::kInvalidArgument, "digits: expected integers 0..9");
      }
      r.digits.insert(static_cast<int>(d));
    }
  }
  r.target_count = cfg.get_uint("target_count", r.target_count);
  r.background_count = cfg.get_uint("background_count", r.background_count);
  r.scale = cfg.get_double("scale", r.scale);
  r.texture_dir = cfg.get_string("texture_dir", r.texture_dir);
  r.texture_seed = cfg.get_uint("texture_seed", r.texture_seed);
  r.seed = cfg.get_uint("data_seed", r.seed);
}

SweepSpec parse_sweep_spec(const KeyValueConfig& cfg) {
  std::set<std::string> known = {"kind", "grid", "dims", "trials", "workers", "vae_latent_dim",
                                 "record_timing"};
  known.insert(train_keys().begin(), train_keys().end());
  known.insert(recipe_keys().begin(), recipe_keys().end());
  cfg.require_known(known);
  SweepSpec spec;
  const auto kind = cfg.get("kind");
  if (!kind) fail(ErrorKind::kInvalidArgument, "sweep spec: missing 'kind'");
  spec.kind = parse_sweep_kind(*kind);
  apply_train_keys(cfg, spec.train);
  apply_recipe_keys(cfg, spec.recipe);
  spec.seed = spec.train.seed;
  spec.trials = cfg.get_uint("trials", spec.trials);
  spec.workers = cfg.get_uint("workers", spec.workers);
  spec.vae_latent_dim = cfg.get_uint("vae_latent_dim", spec.vae_latent_dim);
  spec.record_timing = cfg.get_bool("record_timing", spec.record_timing);
  if (spec.kind == SweepKind::kLatentDims) {
    const std::string dims = cfg.get_string("dims", "full");
    if (dims == "full") {
      spec.dims = full_dim_grid();
    } else {
      std::istringstream in(dims);
      std::string item;
      while (std::getline(in, item, ',')) {
        const auto x = item.find('x');
        if (x == std::string::npos) {
          fail(ErrorKind::kInvalidArgument, "dims: expected entries like '2x3', got '" + item + "'");
        }
        spec.dims.push_back({static_cast<std::size_t>(parse_uint(item.substr(0, x), "dims")),
                             static_cast<std::size_t>(parse_uint(item.substr(x + 1), "dims"))});
      }
    }
  } else {
    spec.grid = cfg.get_doubles("grid", {});
  }
  spec.validate();
  return spec;
}

SweepSpec load_sweep_spec(const std::string& path) {
  return parse_sweep_spec(KeyValueConfig::load(path));
}

std::string describe(const TrainConfig& c) {
  std::string out;
  out += "epochs = " + std::to_string(c.epochs) + "\n";
  out += "batch_size = " + std::to_string(c.batch_size) + "\n";
  out += "learning_rate = " + g17(c.learning_rate) + "\n";
  out += "beta1 = " + g17(c.beta1) + "\n";
  out += "beta2 = " + g17(c.beta2) + "\n";
  out += "adam_epsilon = " + g17(c.adam_epsilon) + "\n";
  out += "tc_weight = " + g17(c.tc_weight) + "\n";
  out += "seed = " + std::to_string(c.seed) + "\n";
  out += std::string("zero_bias = ") + (c.zero_bias ? "true" : "false") + "\n";
  out += "s_dim = " + std::to_string(c.s_dim) + "\n";
  out += "z_dim = " + std::to_string(c.z_dim) + "\n";
  out += "hidden_dim = " + std::to_string(c.hidden_dim) + "\n";
  out += std::string("recon = ") + to_string(c.recon) + "\n";
  return out;
}

std::string describe(const DatasetRecipe& r) {
  std::string out;
  out += "mnist_images = " + r.mnist_images + "\n";
  out += "mnist_labels = " + r.mnist_labels + "\n";
  out += "digits = " + join_digits(r.digits) + "\n";
  out += "target_count = " + std::to_string(r.target_count) + "\n";
  out += "background_count = " + std::to_string(r.background_count) + "\n";
  out += "scale = " + g17(r.scale) + "\n";
  out += "texture_dir = " + r.texture_dir + "\n";
  out += "texture_seed = " + std::to_string(r.texture_seed) + "\n";
  out += "data_seed = " + std::to_string(r.seed) + "\n";
  return out;
}

std::string describe(const SweepSpec& spec) {
  std::string out = std::string("kind = ") + to_string(spec.kind) + "\n";
  if (spec.kind == SweepKind::kLatentDims) {
    out += "dims = ";
    for (std::size_t i = 0; i < spec.dims.size(); ++i) {
      out += (i ? "," : "") + spec.value_label(i);
    }
    out += "\n";
  } else {
    out += "grid = ";
    for (std::size_t i = 0; i < spec.grid.size(); ++i) out += (i ? "," : "") + g17(spec.grid[i]);
    out += "\n";
  }
  out += "trials = " + std::to_string(spec.trials) + "\n";
  out += "workers = " + std::to_string(spec.workers) + "\n";
  out += "vae_latent_dim = " + std::to_string(spec.vae_latent_dim) + "\n";
  out += std::string("record_timing = ") + (spec.record_timing ? "true" : "false") + "\n";
  TrainConfig t = spec.train;
  t.seed = spec.seed;
  return out + describe(t) + describe(spec.recipe);
}

// --- sweep execution -------------------------------------------------------

std::uint64_t trial_seed(std::uint64_t base, std::size_t value_index, std::size_t trial) {
  Stream s = Stream(base).split("trial").split(static_cast<std::uint64_t>(value_index))
                 .split(static_cast<std::uint64_t>(trial));
  return s.next_u64() >> 1;  // keep seeds printable as signed 64-bit too
}

std::string format_sweep_csv(const SweepResult& result) {
  if (result.rows.empty()) fail(ErrorKind::kInvalidArgument, "sweep result has no rows");
  std::string out = std::string(kSweepCsvHeader) + "\n";
  for (const auto& r : result.rows) {
    out += std::string(to_string(r.kind)) + "," + r.value + "," + std::to_string(r.seed) + "," +
           to_string(r.model) + "," + g17(r.silhouette) + "," + g17(r.seconds) + "\n";
  }
  return out;
}

void write_sweep_csv(const SweepResult& result, const std::string& path) {
  write_file(path, format_sweep_csv(result));
}

SweepResult parse_sweep_csv(const std::string& text, const std::string& source) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kSweepCsvHeader) {
    fail(ErrorKind::kFormat, source + ": expected header '" + std::string(kSweepCsvHeader) + "'");
  }
  SweepResult result;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::istringstream fields(line);
    std::string item;
    while (std::getline(fields, item, ',')) f.push_back(item);
    if (f.size() != 6) {
      fail(ErrorKind::kFormat, source + ": line " + std::to_string(line_no) + " has " +
                                   std::to_string(f.size()) + " fields, expected 6");
    }
    const std::string where = source + ":" + std::to_string(line_no);
    SweepRow r;
    r.kind = parse_sweep_kind(f[0]);
    r.value = f[1];
    r.seed = parse_uint(f[2], where + " seed");
    r.model = parse_model_type(f[3]);
    r.silhouette = parse_double(f[4], where + " silhouette");
    r.seconds = parse_double(f[5], where + " seconds");
    result.rows.push_back(std::move(r));
  }
  return result;
}

SweepResult read_sweep_csv(const std::string& path) {
  return parse_sweep_csv(read_file(path), path);
}

namespace {

struct Cell {
  std::size_t value_index = 0;
  std::size_t trial = 0;
  ModelType model = ModelType::kCvae;
  std::uint64_t seed = 0;
};

std::string cell_key(const std::string& value, std::uint64_t seed, ModelType model) {
  return value + "|" + std::to_string(seed) + "|" + to_string(model);
}

double run_cell(const SweepSpec& spec, const PreparedData& data, const Cell& cell) {
  TrainConfig config = spec.train;
  config.seed = cell.seed;
  Dataset target = data.target;
  Dataset background = data.background;
  const Stream perturb = Stream(cell.seed).split("perturb");
  switch (spec.kind) {
    case SweepKind::kBackgroundScale:
      target = synthesize_target(data, spec.grid[cell.value_index]);
      break;
    case SweepKind::kBackgroundNoise: {
      Stream rng = perturb.split("noise");
      background = add_isotropic_noise(data.background, spec.grid[cell.value_index], rng);
      break;
    }
    case SweepKind::kLatentDims:
      config.s_dim = spec.dims[cell.value_index].s_dim;
      config.z_dim = spec.dims[cell.value_index].z_dim;
      break;
    case SweepKind::kTargetContamination: {
      Stream rng = perturb.split("contaminate");
      target = contaminate(data.target, data.background, spec.grid[cell.value_index], rng);
      break;
    }
    case SweepKind::kBackgroundContamination: {
      Stream rng = perturb.split("contaminate");
      background = contaminate(data.background, data.target, spec.grid[cell.value_index], rng);
      break;
    }
  }
  const std::size_t width = target.width();
  if (cell.model == ModelType::kVae) {
    VaeModel model =
        VaeModel::create(config.vae_architecture(width, spec.vae_latent_dim), init_stream(cell.seed));
    vae_train(model, target.samples, config);
    return score_vae(model, target);
  }
  CvaeModel model = CvaeModel::create(config.cvae_architecture(width), init_stream(cell.seed));
  train(model, target.samples, background.samples, config);
  return score_cvae(model, target);
}

}  // namespace

SweepResult run_sweep(const SweepSpec& spec, const std::string& ledger_path,
                      const SweepProgress& progress) {
  spec.validate();
  std::vector<Cell> cells;
  for (std::size_t v = 0; v < spec.grid_size(); ++v) {
    for (std::size_t t = 0; t < spec.trials; ++t) {
      for (ModelType m : spec.models()) cells.push_back({v, t, m, trial_seed(spec.seed, v, t)});
    }
  }

  std::vector<std::optional<SweepRow>> slots(cells.size());
  std::size_t done = 0;
  if (!ledger_path.empty() && std::filesystem::exists(ledger_path)) {
    const SweepResult previous = read_sweep_csv(ledger_path);
    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      index[cell_key(spec.value_label(cells[i].value_index), cells[i].seed, cells[i].model)] = i;
    }
    for (const auto& row : previous.rows) {
      const auto it = index.find(cell_key(row.value, row.seed, row.model));
      if (row.kind != spec.kind || it == index.end()) {
        fail(ErrorKind::kInvalidArgument,
             ledger_path + ": contains a row (" + to_string(row.kind) + ", value " + row.value +
                 ", seed " + std::to_string(row.seed) +
                 ") that is not part of this sweep; use another output path");
      }
      if (!slots[it->second]) ++done;
      slots[it->second] = row;
    }
  }

  std::vector<std::size_t> pending;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (!slots[i]) pending.push_back(i);
  }

  if (!pending.empty()) {
    const PreparedData data = prepare_data(spec.recipe);
    std::mutex mu;
    std::ofstream ledger;
    if (!ledger_path.empty()) {
      const bool fresh = !std::filesystem::exists(ledger_path) ||
                         std::filesystem::file_size(ledger_path) == 0;
      const std::filesystem::path parent = std::filesystem::path(ledger_path).parent_path();
      if (!parent.empty()) std::filesystem::create_directories(parent);
      ledger.open(ledger_path, std::ios::app | std::ios::binary);
      if (!ledger) fail(ErrorKind::kIo, "cannot open sweep ledger '" + ledger_path + "'");
      if (fresh) ledger << kSweepCsvHeader << "\n" << std::flush;
    }
    parallel_for(pending.size(), spec.workers, [&](std::size_t p) {
      const Cell& cell = cells[pending[p]];
      const auto start = std::chrono::steady_clock::now();
      SweepRow row;
      row.kind = spec.kind;
      row.value = spec.value_label(cell.value_index);
      row.seed = cell.seed;
      row.model = cell.model;
      try {
        row.silhouette = run_cell(spec, data, cell);
      } catch (const Error& e) {
        fail(e.kind(), std::string("sweep ") + to_string(spec.kind) + " value=" + row.value +
                           " trial=" + std::to_string(cell.trial) + " model=" +
                           to_string(cell.model) + ": " + e.what());
      }
      row.seconds = spec.record_timing
                        ? std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
                              .count()
                        : 0.0;
      std::lock_guard lock(mu);
      slots[pending[p]] = row;
      ++done;
      if (ledger.is_open()) {
        SweepResult one;
        one.rows.push_back(row);
        const std::string csv = format_sweep_csv(one);
        ledger << csv.substr(csv.find('\n') + 1) << std::flush;
      }
      if (progress) progress(row, done, cells.size());
    });
  }

  SweepResult result;
  for (auto& slot : slots) result.rows.push_back(*slot);
  if (!ledger_path.empty()) write_sweep_csv(result, ledger_path);
  return result;
}

namespace {

SweepResult run_checked(const SweepSpec& spec, std::initializer_list<SweepKind> allowed,
                        const std::string& ledger_path, const char* name) {
  if (std::find(allowed.begin(), allowed.end(), spec.kind) == allowed.end()) {
    fail(ErrorKind::kInvalidArgument,
         std::string(name) + ": unexpected sweep kind " + to_string(spec.kind));
  }
  return run_sweep(spec, ledger_path);
}

}  // namespace

SweepResult run_scale_sweep(const SweepSpec& spec, const std::string& ledger_path) {
  return run_checked(spec, {SweepKind::kBackgroundScale}, ledger_path, "run_scale_sweep");
}

SweepResult run_noise_sweep(const SweepSpec& spec, const std::string& ledger_path) {
  return run_checked(spec, {SweepKind::kBackgroundNoise}, ledger_path, "run_noise_sweep");
}

SweepResult run_dim_grid(const SweepSpec& spec, const std::string& ledger_path) {
  return run_checked(spec, {SweepKind::kLatentDims}, ledger_path, "run_dim_grid");
}

SweepResult run_contamination_sweep(const SweepSpec& spec, const std::string& ledger_path) {
  return run_checked(spec,
                     {SweepKind::kTargetContamination, SweepKind::kBackgroundContamination},
                     ledger_path, "run_contamination_sweep");
}

std::vector<ScoreRow> to_score_rows(const SweepResult& result) {
  std::map<std::string, std::size_t> trials;
  std::vector<ScoreRow> out;
  for (const auto& r : result.rows) {
    const std::string condition = std::string(to_string(r.model)) + "@" + r.value;
    out.push_back({condition, trials[condition]++, r.silhouette});
  }
  return out;
}

// --- figure reproduction ---------------------------------------------------

const std::vector<std::string>& figure_ids() {
  static const std::vector<std::string> ids = {"fig4", "fig6a", "fig6b", "fig6c", "appG"};
  return ids;
}

namespace {

std::vector<double> steps(double lo, double hi, double step) {
  std::vector<double> out;
  const auto n = static_cast<std::size_t>(std::llround((hi - lo) / step));
  for (std::size_t i = 0; i <= n; ++i) out.push_back(lo + step * static_cast<double>(i));
  return out;
}

Json base_manifest(const std::string& figure, const ReproduceOptions& o) {
  Json m;
  m["figure"] = figure;
  m["seed"] = o.seed;
  m["trials"] = o.trials;
  TrainConfig t = o.train;
  t.seed = o.seed;
  m["train"] = config_object(describe(t));
  m["recipe"] = config_object(describe(o.recipe));
  m["init"] = "he_normal(std=sqrt(2/fan_in)); biases zero";
  m["record_timing"] = o.record_timing;
  return m;
}

Json summary_json(const std::vector<ScoreRow>& scores) {
  Json out = Json::object();
  for (const auto& b : summarize(scores)) {
    out[b.condition] = {{"n", b.count}, {"median", b.median}, {"q1", b.q1}, {"q3", b.q3}};
  }
  return out;
}

void reproduce_fig4(const ReproduceOptions& o, std::ostream* log) {
  OutputDir out(o.out_dir);
  const PreparedData data = prepare_data(o.recipe);
  log_line(log, "fig4: target " + std::to_string(data.target.size()) + " rows, background " +
                    std::to_string(data.background.size()) + " rows");
  struct TrialScores {
    double vae = 0, vae4 = 0, cvae = 0;
  };
  std::vector<TrialScores> scores(o.trials);
  std::mutex mu;
  parallel_for(o.trials, o.workers, [&](std::size_t t) {
    TrainConfig config = o.train;
    config.seed = trial_seed(o.seed, 0, t);
    const std::size_t width = data.target.width();

    VaeModel vae = VaeModel::create(config.vae_architecture(width, 2), init_stream(config.seed));
    const TrainReport vae_report = vae_train(vae, data.target.samples, config);
    const Tensor vae_latent = vae_embed(vae, data.target.samples);
    scores[t].vae = silhouette_score(vae_latent, *data.target.labels);

    VaeModel vae4 = VaeModel::create(config.vae_architecture(width, 4), init_stream(config.seed));
    vae_train(vae4, data.target.samples, config);
    scores[t].vae4 = best_pair_silhouette(vae_embed(vae4, data.target.samples),
                                          *data.target.labels);

    CvaeModel cvae = CvaeModel::create(config.cvae_architecture(width), init_stream(config.seed));
    const TrainReport cvae_report =
        train(cvae, data.target.samples, data.background.samples, config);
    const Tensor salient = infer_salient(cvae, data.target.samples);
    scores[t].cvae = silhouette_score(salient, *data.target.labels);

    std::lock_guard lock(mu);
    log_line(log, "fig4: trial " + std::to_string(t) + " vae " + g17(scores[t].vae) + " vae4 " +
                      g17(scores[t].vae4) + " cvae " + g17(scores[t].cvae));
    if (t != 0) return;
    out.write("cvae.ckpt", serialize(cvae));
    out.write("vae.ckpt", serialize(vae));
    out.write("cvae_manifest.json", cvae_report.manifest + "\n");
    out.write("vae_manifest.json", vae_report.manifest + "\n");
    out.write("cvae_losses.csv", format_loss_csv(cvae_report));
    out.write("vae_losses.csv", format_loss_csv(vae_report));
    out.write("vae_embedding.csv",
              format_embedding_csv({vae_latent, *data.target.labels, SpaceTag::kVaeLatent}));
    out.write("cvae_salient_embedding.csv",
              format_embedding_csv({salient, *data.target.labels, SpaceTag::kCvaeSalient}));
    const Tensor irrelevant = encode(cvae, data.target.samples, LatentSpace::kIrrelevant).mu();
    out.write("cvae_irrelevant_embedding.csv",
              format_embedding_csv({irrelevant, *data.target.labels, SpaceTag::kCvaeIrrelevant}));
    out.write_grid("cvae_salient_sweep.pgm",
                   clamp_unit(generate_salient_sweep(cvae, salient_lattice(config.s_dim, 7))), 7, 7);
    out.write_grid("vae_latent_sweep.pgm", clamp_unit(decode(vae, salient_lattice(2, 7))), 7, 7);
  });
  out.write_grid("target_examples.pgm", spread_rows(data.target.samples, 30), 3, 10);
  out.write_grid("background_examples.pgm", spread_rows(data.background.samples, 10), 1, 10);

  std::vector<ScoreRow> rows;
  for (std::size_t t = 0; t < o.trials; ++t) rows.push_back({"vae", t, scores[t].vae});
  for (std::size_t t = 0; t < o.trials; ++t) rows.push_back({"vae4_best_pair", t, scores[t].vae4});
  for (std::size_t t = 0; t < o.trials; ++t) rows.push_back({"cvae_salient", t, scores[t].cvae});
  out.write("scores.csv", boxplot_table(rows));

  Json m = base_manifest("fig4", o);
  m["summary"] = summary_json(rows);
  m["outputs"] = out.hashes();
  write_file(out.path("manifest.json"), m.dump(2) + "\n");
}

void reproduce_sweep(const std::string& figure, SweepSpec spec, const ReproduceOptions& o,
                     const std::string& stem, OutputDir& out, Json& manifest, std::ostream* log) {
  spec.trials = o.trials;
  spec.seed = o.seed;
  spec.workers = o.workers;
  spec.record_timing = o.record_timing;
  spec.train = o.train;
  spec.recipe = o.recipe;
  const std::string ledger = out.path(stem + ".csv");
  const SweepResult result = run_sweep(spec, ledger, [&](const SweepRow& r, std::size_t done,
                                                          std::size_t total) {
    log_line(log, figure + ": [" + std::to_string(done) + "/" + std::to_string(total) + "] " +
                      to_string(r.model) + " @ " + r.value + " -> " + g17(r.silhouette));
  });
  out.record(stem + ".csv");
  const auto rows = to_score_rows(result);
  out.write(stem + "_summary.csv", boxplot_table(rows));
  manifest[stem] = {{"spec", config_object(describe(spec))}, {"summary", summary_json(rows)}};
}

void reproduce_fig6a(const ReproduceOptions& o, std::ostream* log) {
  OutputDir out(o.out_dir);
  Json m = base_manifest("fig6a", o);
  SweepSpec spec;
  spec.kind = SweepKind::kBackgroundScale;
  spec.grid = steps(0.0, 2.0, 0.25);
  reproduce_sweep("fig6a", spec, o, "scale_sweep", out, m, log);
  const PreparedData data = prepare_data(o.recipe);
  Tensor tiles = Tensor::matrix(3 * spec.grid.size(), kImagePixels);
  for (std::size_t c = 0; c < spec.grid.size(); ++c) {
    const Tensor at = spread_rows(synthesize_target(data, spec.grid[c]).samples, 3);
    for (std::size_t r = 0; r < 3; ++r) {
      std::copy(at.row(r).begin(), at.row(r).end(), tiles.row(r * spec.grid.size() + c).begin());
    }
  }
  out.write_grid("scale_examples.pgm", tiles, 3, spec.grid.size());
  m["outputs"] = out.hashes();
  write_file(out.path("manifest.json"), m.dump(2) + "\n");
}

void reproduce_fig6b(const ReproduceOptions& o, std::ostream* log) {
  OutputDir out(o.out_dir);
  Json m = base_manifest("fig6b", o);
  SweepSpec spec;
  spec.kind = SweepKind::kBackgroundNoise;
  spec.grid = steps(0.0, 2.0, 0.25);
  reproduce_sweep("fig6b", spec, o, "noise_sweep", out, m, log);
  const PreparedData data = prepare_data(o.recipe);
  Tensor tiles = Tensor::matrix(spec.grid.size(), kImagePixels);
  const Dataset first = head(data.background, 1);
  for (std::size_t c = 0; c < spec.grid.size(); ++c) {
    Stream rng = Stream(o.seed).split("noise-examples");
    const Dataset noisy = add_isotropic_noise(first, spec.grid[c], rng);
    std::copy(noisy.samples.row(0).begin(), noisy.samples.row(0).end(), tiles.row(c).begin());
  }
  out.write_grid("noise_examples.pgm", tiles, 1, spec.grid.size());
  m["outputs"] = out.hashes();
  write_file(out.path("manifest.json"), m.dump(2) + "\n");
}

void reproduce_fig6c(const ReproduceOptions& o, std::ostream* log) {
  OutputDir out(o.out_dir);
  Json m = base_manifest("fig6c", o);
  SweepSpec spec;
  spec.kind = SweepKind::kLatentDims;
  spec.dims = full_dim_grid();
  reproduce_sweep("fig6c", spec, o, "dims_sweep", out, m, log);
  const SweepResult result = read_sweep_csv(out.path("dims_sweep.csv"));
  std::map<std::string, std::vector<double>> by_value;
  for (const auto& r : result.rows) by_value[r.value].push_back(r.silhouette);
  std::string matrix = "# median silhouette; rows s_dim, columns z_dim\ns_dim";
  for (std::size_t z = 1; z <= 6; ++z) matrix += ",z" + std::to_string(z);
  matrix += "\n";
  for (std::size_t s = 1; s <= 6; ++s) {
    matrix += std::to_string(s);
    for (std::size_t z = 1; z <= 6; ++z) {
      matrix += "," + g17(median(by_value[std::to_string(s) + "x" + std::to_string(z)]));
    }
    matrix += "\n";
  }
  out.write("dims_matrix.csv", matrix);
  m["outputs"] = out.hashes();
  write_file(out.path("manifest.json"), m.dump(2) + "\n");
}

void reproduce_appg(const ReproduceOptions& o, std::ostream* log) {
  OutputDir out(o.out_dir);
  Json m = base_manifest("appG", o);
  SweepSpec spec;
  spec.grid = {0.0, 0.25, 0.5, 0.75};
  spec.kind = SweepKind::kTargetContamination;
  reproduce_sweep("appG", spec, o, "target_contamination", out, m, log);
  spec.kind = SweepKind::kBackgroundContamination;
  reproduce_sweep("appG", spec, o, "background_contamination", out, m, log);
  m["outputs"] = out.hashes();
  write_file(out.path("manifest.json"), m.dump(2) + "\n");
}

}  // namespace

void reproduce_figure(const std::string& figure_id, const ReproduceOptions& options,
                      std::ostream* log) {
  if (options.out_dir.empty()) fail(ErrorKind::kInvalidArgument, "reproduce: empty output dir");
  if (options.trials == 0) fail(ErrorKind::kInvalidArgument, "reproduce: trials must be >= 1");
  options.train.validate();
  if (figure_id == "fig4") return reproduce_fig4(options, log);
  if (figure_id == "fig6a") return reproduce_fig6a(options, log);
  if (figure_id == "fig6b") return reproduce_fig6b(options, log);
  if (figure_id == "fig6c") return reproduce_fig6c(options, log);
  if (figure_id == "appG") return reproduce_appg(options, log);
  fail(ErrorKind::kInvalidArgument,
       "unknown figure '" + figure_id + "' (expected fig4, fig6a, fig6b, fig6c or appG)");
}

}  // namespace cvae
