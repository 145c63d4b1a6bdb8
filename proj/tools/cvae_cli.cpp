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

// Command-line front end. Links only the C API in libcvae.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cvae/cvae.h"
#include "json.hpp"

namespace {

using json = nlohmann::ordered_json;

// Library failure; maps to exit code 2.
struct RuntimeFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void check(cvae_status status, const std::string& what) {
  if (status != CVAE_OK) {
    throw RuntimeFailure(what + ": " + cvae_status_name(status) + ": " + cvae_last_error());
  }
}

struct DatasetPtr {
  cvae_dataset* p = nullptr;
  DatasetPtr() = default;
  DatasetPtr(const DatasetPtr&) = delete;
  DatasetPtr& operator=(const DatasetPtr&) = delete;
  ~DatasetPtr() { cvae_dataset_free(p); }
};

struct ModelPtr {
  cvae_model* p = nullptr;
  ModelPtr() = default;
  ModelPtr(const ModelPtr&) = delete;
  ModelPtr& operator=(const ModelPtr&) = delete;
  ~ModelPtr() { cvae_model_free(p); }
};

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw RuntimeFailure("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out || !(out << text)) throw RuntimeFailure("cannot write " + path);
}

std::string file_hash(const std::string& path) {
  char buf[32];
  check(cvae_file_hash(path.c_str(), buf, sizeof buf), "hash " + path);
  return buf;
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

std::string strip_extension(const std::string& path) {
  const auto slash = path.find_last_of('/');
  const auto dot = path.find_last_of('.');
  if (dot == std::string::npos || (slash != std::string::npos && dot < slash)) return path;
  return path.substr(0, dot);
}

// Config file first, then flags in the order given; later keys win.
class Settings {
 public:
  void load(const std::string& path) {
    if (path.empty()) return;
    config_path_ = path;
    std::istringstream in(read_text(path));
    std::string line;
    while (std::getline(in, line)) {
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      const auto eq = line.find('=');
      if (eq == std::string::npos) {
        if (line.find_first_not_of(" \t\r") != std::string::npos) {
          throw CLI::ValidationError("--config", path + ": expected 'key = value': " + line);
        }
        continue;
      }
      set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
  }
  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  void set_all(const std::vector<std::string>& assignments) {
    for (const auto& a : assignments) {
      const auto eq = a.find('=');
      if (eq == std::string::npos) throw CLI::ValidationError("--set", "expected key=value: " + a);
      set(trim(a.substr(0, eq)), trim(a.substr(eq + 1)));
    }
  }
  std::string text() const {
    std::string out;
    for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
    return out;
  }
  json to_json() const {
    json j = json::object();
    for (const auto& [k, v] : values_) j[k] = v;
    return j;
  }
  const std::string& config_path() const { return config_path_; }

 private:
  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
  }
  std::string config_path_;
  std::map<std::string, std::string> values_;
};

struct Common {
  std::string config;
  std::vector<std::string> sets;
  bool quiet = false;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "key = value config file")->check(CLI::ExistingFile);
  cmd->add_option("--set", c.sets, "override a config key (key=value), repeatable");
  cmd->add_flag("-q,--quiet", c.quiet, "suppress progress on stderr");
}

json manifest_base(const std::string& command, const Settings& s, const std::vector<std::string>& argv) {
  json m;
  m["command"] = command;
  m["library_version"] = cvae_version();
  m["argv"] = argv;
  m["config_file"] = s.config_path();
  m["resolved_config"] = s.to_json();
  return m;
}

json hashes(const std::vector<std::string>& paths) {
  json j = json::object();
  for (const auto& p : paths) j[p] = file_hash(p);
  return j;
}

void write_manifest(const std::string& path, const json& m) { write_text(path, m.dump(2) + "\n"); }

void load_data(const std::string& path, DatasetPtr& out) {
  if (ends_with(path, ".csv")) {
    check(cvae_dataset_load_csv(path.c_str(), 0, 1, &out.p), "load " + path);
  } else {
    check(cvae_dataset_load(path.c_str(), &out.p), "load " + path);
  }
}

std::pair<std::size_t, std::size_t> shape(const cvae_dataset* ds) {
  std::size_t rows = 0, width = 0;
  check(cvae_dataset_shape(ds, &rows, &width), "dataset shape");
  return {rows, width};
}

std::vector<int> labels_or_zero(const cvae_dataset* ds, std::size_t rows) {
  std::vector<int> labels(rows, 0);
  int has = 0;
  check(cvae_dataset_has_labels(ds, &has), "dataset labels");
  if (has) check(cvae_dataset_copy_labels(ds, labels.data(), rows), "dataset labels");
  return labels;
}

struct ModelInfo {
  cvae_model_kind kind = CVAE_MODEL_CVAE;
  std::size_t input = 0, a = 0, b = 0;
  int zero_bias = 0;
};

ModelInfo info(const cvae_model* m) {
  ModelInfo i;
  check(cvae_model_info(m, &i.kind, &i.input, &i.a, &i.b, &i.zero_bias), "model info");
  return i;
}

void print_log(const char* line, void* user) {
  if (!*static_cast<bool*>(user)) std::cerr << line << '\n';
}

// ---- subcommands ---------------------------------------------------------

struct SynthesizeArgs {
  Common common;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<double> scale;
  std::optional<std::size_t> target_count, background_count;
};

void run_synthesize(const SynthesizeArgs& a, const std::vector<std::string>& argv) {
  Settings s;
  s.load(a.common.config);
  if (a.seed) s.set("data_seed", std::to_string(*a.seed));
  if (a.scale) {
    std::ostringstream v;
    v.precision(17);
    v << *a.scale;
    s.set("scale", v.str());
  }
  if (a.target_count) s.set("target_count", std::to_string(*a.target_count));
  if (a.background_count) s.set("background_count", std::to_string(*a.background_count));
  s.set_all(a.common.sets);

  DatasetPtr target, background;
  check(cvae_synthesize(s.text().c_str(), &target.p, &background.p), "synthesize");
  const std::string t = a.out_dir + "/target.ds", b = a.out_dir + "/background.ds";
  check(cvae_dataset_save(target.p, t.c_str()), "save " + t);
  check(cvae_dataset_save(background.p, b.c_str()), "save " + b);

  json m = manifest_base("synthesize", s, argv);
  m["rows"] = {{"target", shape(target.p).first}, {"background", shape(background.p).first}};
  m["outputs"] = hashes({t, b, t + ".provenance.txt", b + ".provenance.txt"});
  write_manifest(a.out_dir + "/manifest.json", m);
  if (!a.common.quiet) {
    std::cerr << "wrote " << t << " (" << shape(target.p).first << " rows) and " << b << " ("
              << shape(background.p).first << " rows)\n";
  }
}

struct TrainArgs {
  Common common;
  std::string model = "cvae";
  std::string target, background, out;
  std::size_t latent_dim = 2;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs;
};

void epoch_log(std::size_t epoch, const cvae_losses* l, void* user) {
  if (*static_cast<bool*>(user)) return;
  std::fprintf(stderr, "epoch %zu  total %.4f  recon_t %.4f  recon_b %.4f  tc %.4f  disc %.4f\n",
               epoch, l->total, l->recon_target, l->recon_background, l->tc_estimate,
               l->discriminator_loss);
}

void run_train(const TrainArgs& a, const std::vector<std::string>& argv) {
  Settings s;
  s.load(a.common.config);
  if (a.seed) s.set("seed", std::to_string(*a.seed));
  if (a.epochs) s.set("epochs", std::to_string(*a.epochs));
  s.set_all(a.common.sets);

  const bool is_cvae = a.model == "cvae";
  if (is_cvae && a.background.empty()) {
    throw CLI::ValidationError("--background", "required for --model cvae");
  }
  DatasetPtr target, background;
  load_data(a.target, target);
  if (is_cvae) load_data(a.background, background);

  ModelPtr model;
  bool quiet = a.common.quiet;
  check(cvae_model_train(is_cvae ? CVAE_MODEL_CVAE : CVAE_MODEL_VAE, s.text().c_str(),
                         a.latent_dim, target.p, background.p, epoch_log, &quiet, &model.p),
        "train");
  check(cvae_model_save(model.p, a.out.c_str()), "save " + a.out);
  const char* losses = nullptr;
  const char* train_manifest = nullptr;
  check(cvae_model_loss_csv(model.p, &losses), "loss csv");
  check(cvae_model_manifest(model.p, &train_manifest), "manifest");
  const std::string stem = strip_extension(a.out);
  write_text(stem + ".losses.csv", losses);

  json m = manifest_base("train", s, argv);
  m["model"] = a.model;
  if (!is_cvae) m["latent_dim"] = a.latent_dim;
  std::vector<std::string> inputs = {a.target};
  if (is_cvae) inputs.push_back(a.background);
  m["inputs"] = hashes(inputs);
  m["training"] = json::parse(train_manifest);
  m["outputs"] = hashes({a.out, stem + ".losses.csv"});
  write_manifest(stem + ".manifest.json", m);
}

struct EmbedArgs {
  Common common;
  std::string model, data, out, space;
};

void run_embed(const EmbedArgs& a, const std::vector<std::string>& argv) {
  ModelPtr model;
  check(cvae_model_load(a.model.c_str(), &model.p), "load " + a.model);
  DatasetPtr data;
  load_data(a.data, data);
  const ModelInfo mi = info(model.p);

  cvae_space space = CVAE_SPACE_VAE_LATENT;
  std::size_t dim = mi.a;
  if (mi.kind == CVAE_MODEL_CVAE) {
    const std::string sp = a.space.empty() ? "salient" : a.space;
    if (sp == "salient") {
      space = CVAE_SPACE_SALIENT;
    } else if (sp == "irrelevant") {
      space = CVAE_SPACE_IRRELEVANT;
      dim = mi.b;
    } else {
      throw CLI::ValidationError("--space", "a cVAE has 'salient' or 'irrelevant' spaces");
    }
  } else if (!a.space.empty() && a.space != "latent") {
    throw CLI::ValidationError("--space", "a VAE has only the 'latent' space");
  }
  const auto [rows, width] = shape(data.p);
  std::vector<double> points(rows * dim);
  check(cvae_model_embed(model.p, data.p, space, points.data(), points.size()), "embed");
  const auto labels = labels_or_zero(data.p, rows);
  check(cvae_embedding_write(points.data(), rows, dim, labels.data(), a.out.c_str()),
        "write " + a.out);

  Settings s;
  json m = manifest_base("embed", s, argv);
  m["space"] = space == CVAE_SPACE_SALIENT      ? "salient"
               : space == CVAE_SPACE_IRRELEVANT ? "irrelevant"
                                                : "latent";
  m["inputs"] = hashes({a.model, a.data});
  m["outputs"] = hashes({a.out});
  write_manifest(strip_extension(a.out) + ".manifest.json", m);
}

struct GenerateArgs {
  Common common;
  std::string model, out;
  std::size_t steps = 7;
  double range = 3.0;
};

void run_generate(const GenerateArgs& a, const std::vector<std::string>& argv) {
  ModelPtr model;
  check(cvae_model_load(a.model.c_str(), &model.p), "load " + a.model);
  const ModelInfo mi = info(model.p);
  if (mi.input != 784) throw RuntimeFailure("generate renders 28x28 images; model input is " +
                                            std::to_string(mi.input));
  // Sweep the first two latent coordinates over [-range, range]; any others stay 0.
  const std::size_t k = mi.a;
  const std::size_t rows = k >= 2 ? a.steps : 1, cols = a.steps;
  std::vector<double> latents(rows * cols * k, 0.0);
  auto at = [&](std::size_t i) {
    return a.steps == 1 ? 0.0 : -a.range + 2.0 * a.range * double(i) / double(a.steps - 1);
  };
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      double* z = &latents[(r * cols + c) * k];
      if (k >= 2) {
        z[0] = at(r);
        z[1] = at(c);
      } else {
        z[0] = at(c);
      }
    }
  }
  std::vector<double> images(rows * cols * mi.input);
  check(cvae_model_generate(model.p, latents.data(), rows * cols, k, images.data(), images.size()),
        "generate");
  check(cvae_render_grid(images.data(), rows * cols, rows, cols, a.out.c_str()), "render");

  Settings s;
  json m = manifest_base("generate", s, argv);
  m["grid"] = {{"steps", a.steps}, {"range", a.range}, {"latent_dim", k}};
  m["inputs"] = hashes({a.model});
  m["outputs"] = hashes({a.out});
  write_manifest(strip_extension(a.out) + ".manifest.json", m);
}

struct DenoiseArgs {
  Common common;
  std::string model, data, out, grid;
  std::size_t grid_count = 16;
};

void run_denoise(const DenoiseArgs& a, const std::vector<std::string>& argv) {
  ModelPtr model;
  check(cvae_model_load(a.model.c_str(), &model.p), "load " + a.model);
  DatasetPtr data;
  load_data(a.data, data);
  const auto [rows, width] = shape(data.p);
  std::vector<double> clean(rows * width);
  check(cvae_model_denoise(model.p, data.p, clean.data(), clean.size()), "denoise");

  std::ostringstream csv;
  csv.precision(17);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < width; ++c) csv << (c ? "," : "") << clean[r * width + c];
    csv << '\n';
  }
  write_text(a.out, csv.str());
  std::vector<std::string> outputs = {a.out};
  if (!a.grid.empty()) {
    if (width != 784) throw RuntimeFailure("--grid needs 28x28 images");
    const std::size_t n = std::min(a.grid_count, rows);
    std::vector<double> pair(2 * n * width);
    std::vector<double> noisy(rows * width);
    check(cvae_dataset_copy_samples(data.p, noisy.data(), noisy.size()), "samples");
    // Row 0: inputs; row 1: denoised. Inputs are clipped for display only.
    for (std::size_t i = 0; i < n * width; ++i) {
      pair[i] = std::clamp(noisy[i], 0.0, 1.0);
      pair[n * width + i] = std::clamp(clean[i], 0.0, 1.0);
    }
    check(cvae_render_grid(pair.data(), 2 * n, 2, n, a.grid.c_str()), "render");
    outputs.push_back(a.grid);
  }
  Settings s;
  json m = manifest_base("denoise", s, argv);
  m["inputs"] = hashes({a.model, a.data});
  m["outputs"] = hashes(outputs);
  write_manifest(strip_extension(a.out) + ".manifest.json", m);
}

struct SweepArgs {
  Common common;
  std::string spec, out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> trials, workers;
};

void run_sweep(const SweepArgs& a, const std::vector<std::string>& argv) {
  Settings s;
  s.load(a.spec);
  if (!a.common.config.empty()) s.load(a.common.config);
  if (a.seed) s.set("seed", std::to_string(*a.seed));
  if (a.trials) s.set("trials", std::to_string(*a.trials));
  if (a.workers) s.set("workers", std::to_string(*a.workers));
  s.set_all(a.common.sets);

  bool quiet = a.common.quiet;
  std::size_t rows = 0;
  check(cvae_sweep_run(s.text().c_str(), a.out.c_str(), print_log, &quiet, &rows), "sweep");
  json m = manifest_base("sweep", s, argv);
  m["rows"] = rows;
  m["outputs"] = hashes({a.out});
  write_manifest(strip_extension(a.out) + ".manifest.json", m);
}

struct ReproduceArgs {
  Common common;
  std::string figure, out_dir;
  std::uint64_t seed = 0;
  std::size_t trials = 3, workers = 1;
  std::optional<std::size_t> epochs;
};

void run_reproduce(const ReproduceArgs& a) {
  Settings s;
  s.load(a.common.config);
  if (a.epochs) s.set("epochs", std::to_string(*a.epochs));
  s.set_all(a.common.sets);
  const std::string out = a.out_dir.empty() ? "out/" + a.figure : a.out_dir;
  bool quiet = a.common.quiet;
  check(cvae_reproduce(a.figure.c_str(), s.text().c_str(), a.seed, a.trials, a.workers,
                       out.c_str(), print_log, &quiet),
        "reproduce " + a.figure);
  if (!quiet) std::cerr << "outputs in " << out << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Contrastive VAE toolkit: synthesize data, train, embed, generate, denoise, "
               "score and sweep."};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(cvae_version()));
  const std::vector<std::string> args(argv, argv + argc);

  SynthesizeArgs syn;
  auto* c_syn = app.add_subcommand("synthesize", "build target/background datasets");
  add_common(c_syn, syn.common);
  c_syn->add_option("--out-dir", syn.out_dir, "output directory")->required();
  c_syn->add_option("--seed", syn.seed, "split and texture-draw seed (data_seed)");
  c_syn->add_option("--scale", syn.scale, "texture amplitude relative to digits");
  c_syn->add_option("--target-count", syn.target_count, "target rows");
  c_syn->add_option("--background-count", syn.background_count, "background rows");

  TrainArgs tr;
  auto* c_tr = app.add_subcommand("train", "train a cVAE or a baseline VAE");
  add_common(c_tr, tr.common);
  c_tr->add_option("--model", tr.model, "cvae or vae")->check(CLI::IsMember({"cvae", "vae"}));
  c_tr->add_option("--target", tr.target, ".ds or .csv")->required()->check(CLI::ExistingFile);
  c_tr->add_option("--background", tr.background, ".ds or .csv")->check(CLI::ExistingFile);
  c_tr->add_option("--out", tr.out, "checkpoint path")->required();
  c_tr->add_option("--latent-dim", tr.latent_dim, "VAE latent size")->check(CLI::PositiveNumber);
  c_tr->add_option("--seed", tr.seed, "training seed");
  c_tr->add_option("--epochs", tr.epochs, "epochs");

  EmbedArgs em;
  auto* c_em = app.add_subcommand("embed", "export latent means as CSV");
  add_common(c_em, em.common);
  c_em->add_option("--model", em.model, "checkpoint")->required()->check(CLI::ExistingFile);
  c_em->add_option("--data", em.data, ".ds or .csv")->required()->check(CLI::ExistingFile);
  c_em->add_option("--out", em.out, "embedding CSV")->required();
  c_em->add_option("--space", em.space, "salient | irrelevant | latent");

  GenerateArgs ge;
  auto* c_ge = app.add_subcommand("generate", "decode a latent lattice into an image grid");
  add_common(c_ge, ge.common);
  c_ge->add_option("--model", ge.model, "checkpoint")->required()->check(CLI::ExistingFile);
  c_ge->add_option("--out", ge.out, "PGM path")->required();
  c_ge->add_option("--steps", ge.steps, "lattice points per axis")->check(CLI::PositiveNumber);
  c_ge->add_option("--range", ge.range, "lattice spans [-range, range]");

  DenoiseArgs de;
  auto* c_de = app.add_subcommand("denoise", "reconstruct from salient features only");
  add_common(c_de, de.common);
  c_de->add_option("--model", de.model, "zero-bias cVAE checkpoint")->required()->check(CLI::ExistingFile);
  c_de->add_option("--data", de.data, ".ds or .csv")->required()->check(CLI::ExistingFile);
  c_de->add_option("--out", de.out, "denoised rows as CSV")->required();
  c_de->add_option("--grid", de.grid, "optional PGM comparing inputs and outputs");
  c_de->add_option("--grid-count", de.grid_count, "images in the comparison grid");

  std::string score_path;
  auto* c_sc = app.add_subcommand("score", "print the silhouette score of an embedding CSV");
  c_sc->add_option("--embedding", score_path, "embedding CSV")->required()->check(CLI::ExistingFile);

  SweepArgs sw;
  auto* c_sw = app.add_subcommand("sweep", "run a resumable sensitivity sweep");
  add_common(c_sw, sw.common);
  c_sw->add_option("--spec", sw.spec, "sweep spec file")->required()->check(CLI::ExistingFile);
  c_sw->add_option("--out", sw.out, "results CSV (also the resume ledger)")->required();
  c_sw->add_option("--seed", sw.seed, "base seed");
  c_sw->add_option("--trials", sw.trials, "trials per grid value");
  c_sw->add_option("--workers", sw.workers, "parallel trials");

  ReproduceArgs re;
  auto* c_re = app.add_subcommand("reproduce", "run a figure recipe end to end");
  add_common(c_re, re.common);
  c_re->add_option("figure", re.figure, "fig4 | fig6a | fig6b | fig6c | appG")
      ->required()
      ->check(CLI::IsMember({"fig4", "fig6a", "fig6b", "fig6c", "appG"}));
  c_re->add_option("--out-dir", re.out_dir, "output directory (default out/<figure>)");
  c_re->add_option("--seed", re.seed, "base seed");
  c_re->add_option("--trials", re.trials, "trials per grid value")->check(CLI::PositiveNumber);
  c_re->add_option("--workers", re.workers, "parallel trials")->check(CLI::PositiveNumber);
  c_re->add_option("--epochs", re.epochs, "epochs (default 20)");

  if (argc < 2) {
    std::cerr << app.help();
    return 1;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (*c_syn) run_synthesize(syn, args);
    if (*c_tr) run_train(tr, args);
    if (*c_em) run_embed(em, args);
    if (*c_ge) run_generate(ge, args);
    if (*c_de) run_denoise(de, args);
    if (*c_sw) run_sweep(sw, args);
    if (*c_re) run_reproduce(re);
    if (*c_sc) {
      double score = 0.0;
      check(cvae_embedding_score(score_path.c_str(), &score), "score " + score_path);
      std::printf("%.4f\n", score);
    }
  } catch (const CLI::ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
