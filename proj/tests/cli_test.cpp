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

// Runs the command-line tool as a subprocess and checks exit codes, outputs
// and manifests.

#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "json.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

struct Run {
  int code = -1;
  std::string out;
};

const fs::path& work_dir() {
  static const fs::path dir = [] {
    const fs::path d = fs::temp_directory_path() / "cvae_cli_test";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

Run cli(const std::string& args) {
  const std::string cmd = std::string("cd '") + work_dir().string() + "' && '" CVAE_CLI_PATH "' " +
                          args + " 2>stderr.txt";
  Run r;
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, n);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json manifest(const std::string& name) { return json::parse(slurp(work_dir() / name)); }

void write(const std::string& name, const std::string& text) {
  std::ofstream(work_dir() / name) << text;
}

const std::string kData = std::string("--set mnist_images=") + CVAE_SOURCE_DIR +
                          "/data/mnist/mnist10k-images-idx3-ubyte --set mnist_labels=" +
                          CVAE_SOURCE_DIR + "/data/mnist/mnist10k-labels-idx1-ubyte";

}  // namespace

TEST_CASE("usage errors exit with 1") {
  CHECK(cli("").code == 1);
  CHECK(cli("frobnicate").code == 1);
  CHECK(cli("train --bogus-flag").code == 1);
  CHECK(cli("reproduce fig9").code == 1);
  CHECK(cli("score").code == 1);
  CHECK(cli("score --embedding missing.csv").code == 1);
  CHECK(cli("--help").code == 0);
}

TEST_CASE("end-to-end pipeline") {
  write("small.cfg",
        "# shared by every command below\n"
        "target_count = 60\nbackground_count = 50\n"
        "epochs = 5\nbatch_size = 16\nhidden_dim = 16\n");

  REQUIRE(cli("synthesize --config small.cfg " + kData + " --seed 3 --out-dir data").code == 0);
  CHECK(fs::exists(work_dir() / "data/target.ds"));
  CHECK(fs::exists(work_dir() / "data/background.ds.provenance.txt"));
  const json sm = manifest("data/manifest.json");
  CHECK(sm["resolved_config"]["data_seed"] == "3");
  CHECK(sm["rows"]["target"] == 60);
  CHECK(sm["outputs"].contains("data/target.ds"));

  // --epochs overrides the config file and the manifest records the result.
  REQUIRE(cli("train --model cvae --config small.cfg --epochs 2 --seed 4 --target data/target.ds "
              "--background data/background.ds --out m.ckpt -q")
              .code == 0);
  const json tm = manifest("m.manifest.json");
  CHECK(tm["resolved_config"]["epochs"] == "2");
  CHECK(tm["training"]["config"]["epochs"] == 2);
  CHECK(tm["training"]["seed"] == 4);
  CHECK(tm["inputs"].contains("data/target.ds"));
  CHECK(tm["outputs"]["m.ckpt"].get<std::string>().size() == 16);
  const std::string losses = slurp(work_dir() / "m.losses.csv");
  CHECK(losses.rfind("epoch,", 0) == 0);
  CHECK(std::count(losses.begin(), losses.end(), '\n') == 3);

  // Same inputs, same bytes.
  REQUIRE(cli("train --model cvae --config small.cfg --epochs 2 --seed 4 --target data/target.ds "
              "--background data/background.ds --out m2.ckpt -q")
              .code == 0);
  CHECK(slurp(work_dir() / "m.ckpt") == slurp(work_dir() / "m2.ckpt"));

  REQUIRE(cli("embed --model m.ckpt --data data/target.ds --out e.csv").code == 0);
  CHECK(slurp(work_dir() / "e.csv").rfind("dim_0,dim_1,label\n", 0) == 0);
  const Run score = cli("score --embedding e.csv");
  CHECK(score.code == 0);
  CHECK(score.out.size() >= 7);
  const auto dot = score.out.find('.');
  REQUIRE(dot != std::string::npos);
  CHECK(score.out.substr(dot + 1) .size() == 5);  // four decimals and a newline

  CHECK(cli("embed --model m.ckpt --data data/target.ds --space irrelevant --out z.csv").code == 0);
  CHECK(cli("embed --model m.ckpt --data data/target.ds --space latent --out bad.csv").code == 1);

  REQUIRE(cli("generate --model m.ckpt --steps 3 --out g.pgm").code == 0);
  CHECK(slurp(work_dir() / "g.pgm").rfind("P5\n92 92\n255\n", 0) == 0);

  // Denoising a model with biases is a runtime refusal.
  CHECK(cli("denoise --model m.ckpt --data data/target.ds --out d.csv").code == 2);
  REQUIRE(cli("train --model cvae --config small.cfg --set zero_bias=true --target data/target.ds "
              "--background data/background.ds --out zb.ckpt -q")
              .code == 0);
  REQUIRE(cli("denoise --model zb.ckpt --data data/target.ds --out d.csv --grid d.pgm --grid-count 4")
              .code == 0);
  CHECK(fs::exists(work_dir() / "d.pgm"));
  CHECK(manifest("d.manifest.json")["outputs"].contains("d.pgm"));

  REQUIRE(cli("train --model vae --latent-dim 3 --config small.cfg --target data/target.ds --out v.ckpt -q")
              .code == 0);
  REQUIRE(cli("embed --model v.ckpt --data data/target.ds --out ve.csv").code == 0);
  CHECK(slurp(work_dir() / "ve.csv").rfind("dim_0,dim_1,dim_2,label\n", 0) == 0);

  CHECK(cli("train --model cvae --config small.cfg --target data/target.ds --out x.ckpt").code == 1);
  CHECK(cli("train --model cvae --config small.cfg --set epochs=zero --target data/target.ds "
            "--background data/background.ds --out x.ckpt")
            .code == 2);
}

TEST_CASE("sweep command writes a resumable table and a manifest") {
  write("sweep.cfg",
        "kind = background_noise\ngrid = 0, 1\ntrials = 1\nrecord_timing = false\n"
        "target_count = 40\nbackground_count = 30\nepochs = 1\nbatch_size = 16\nhidden_dim = 8\n");
  REQUIRE(cli("sweep --spec sweep.cfg " + kData + " --out s.csv -q").code == 0);
  const std::string first = slurp(work_dir() / "s.csv");
  CHECK(first.rfind("sweep_kind,value,seed,model,silhouette,seconds\n", 0) == 0);
  CHECK(std::count(first.begin(), first.end(), '\n') == 3);
  CHECK(manifest("s.manifest.json")["rows"] == 2);
  REQUIRE(cli("sweep --spec sweep.cfg " + kData + " --out s.csv -q").code == 0);
  CHECK(slurp(work_dir() / "s.csv") == first);
}
