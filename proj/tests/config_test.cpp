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

#include <string>

#include "cvae/config.hpp"
#include "cvae/error.hpp"
#include "doctest.h"

using namespace cvae;

TEST_CASE("key-value parsing") {
  const auto cfg = KeyValueConfig::parse(
      "# comment\n"
      "epochs = 12\n"
      "  learning_rate=0.002   # trailing comment\n"
      "\n"
      "grid = 0, 0.5, 1\n"
      "zero_bias = true\n"
      "epochs = 15\n");
  CHECK(cfg.get_uint("epochs", 0) == 15);
  CHECK(cfg.get_double("learning_rate", 0) == 0.002);
  CHECK(cfg.get_doubles("grid", {}) == std::vector<double>{0, 0.5, 1});
  CHECK(cfg.get_bool("zero_bias", false));
  CHECK(cfg.get_string("missing", "x") == "x");
  CHECK_FALSE(cfg.has("missing"));
  CHECK(cfg.dump() == "epochs = 15\ngrid = 0, 0.5, 1\nlearning_rate = 0.002\nzero_bias = true\n");
  CHECK(KeyValueConfig::parse(cfg.dump()).values() == cfg.values());
}

TEST_CASE("key-value errors") {
  CHECK_THROWS_AS(KeyValueConfig::parse("no equals sign\n"), Error);
  CHECK_THROWS_AS(KeyValueConfig::parse(" = 3\n"), Error);
  const auto cfg = KeyValueConfig::parse("epochs = ten\nflag = maybe\nn = -3\n");
  CHECK_THROWS_AS(cfg.get_uint("epochs", 0), Error);
  CHECK_THROWS_AS(cfg.get_bool("flag", false), Error);
  CHECK_THROWS_AS(cfg.get_uint("n", 0), Error);
  try {
    cfg.require_known({"epochs", "flag"});
    FAIL("expected unknown key");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("'n'") != std::string::npos);
  }
  CHECK_THROWS_AS(KeyValueConfig::load("/nonexistent/config.cfg"), Error);
}

TEST_CASE("scalar parsers") {
  CHECK(parse_double("1e-3", "x") == 1e-3);
  CHECK_THROWS_AS(parse_double("1.0abc", "x"), Error);
  CHECK_THROWS_AS(parse_double("nan", "x"), Error);
  CHECK(parse_uint("42", "x") == 42);
  CHECK(parse_bool("0", "x") == false);
  CHECK(parse_bool("yes", "x") == true);
  CHECK(parse_double_list("1,2 , 3.5", "x") == std::vector<double>{1, 2, 3.5});
}
