#include <doctest.h>

#include <cstdio>
#include <fstream>

#include "mtpp/config.hpp"
#include "mtpp/errors.hpp"
#include "mtpp/rng.hpp"

using namespace mtpp;

TEST_CASE("config: sections, comments, and typed access") {
  ConfigMap cfg = ConfigMap::parse_ini(
      "# a comment\n"
      "[run]\n"
      "seed = 42\n"
      "out_dir = /tmp/x\n"
      "; another comment\n"
      "[train]\n"
      "lr_base = 0.02\n"
      "use_mean_baseline = yes\n");
  CHECK(cfg.get_int("run", "seed") == 42);
  CHECK(cfg.get_string("run", "out_dir") == "/tmp/x");
  CHECK(cfg.get_real("train", "lr_base") == 0.02);
  CHECK(cfg.get_bool("train", "use_mean_baseline", false) == true);
  cfg.finish();
}

TEST_CASE("config: defaults are written back for the manifest") {
  ConfigMap cfg = ConfigMap::parse_ini("[run]\nseed = 1\n");
  CHECK(cfg.get_int("run", "seed") == 1);
  CHECK(cfg.get_int("run", "threads", 4) == 4);
  CHECK(cfg.has("run", "threads"));
  cfg.finish();
}

TEST_CASE("config: misspelled keys are an error, never ignored") {
  ConfigMap cfg = ConfigMap::parse_ini("[run]\nseed = 1\nsede = 2\n");
  CHECK(cfg.get_int("run", "seed") == 1);
  CHECK_THROWS_AS(cfg.finish(), config_error);
}

TEST_CASE("config: malformed inputs") {
  CHECK_THROWS_AS(ConfigMap::parse_ini("[run\nseed=1\n"), config_error);
  CHECK_THROWS_AS(ConfigMap::parse_ini("seed = 1\n"), config_error);
  CHECK_THROWS_AS(ConfigMap::parse_ini("[run]\nnoequals\n"), config_error);
  CHECK_THROWS_AS(ConfigMap::parse_ini("[run]\nseed = 1\nseed = 2\n"), config_error);
  ConfigMap bad_type = ConfigMap::parse_ini("[run]\nseed = banana\n");
  CHECK_THROWS_AS(bad_type.get_int("run", "seed"), config_error);
}

TEST_CASE("config: overrides") {
  ConfigMap cfg = ConfigMap::parse_ini("[run]\nseed = 1\n");
  cfg.apply_override("run.seed=9");
  cfg.apply_override("train.iterations = 30");
  CHECK(cfg.get_int("run", "seed") == 9);
  CHECK(cfg.get_int("train", "iterations") == 30);
  CHECK_THROWS_AS(cfg.apply_override("notakeyvalue"), config_error);
}

TEST_CASE("config: manifest round trip preserves every resolved value") {
  ConfigMap cfg = ConfigMap::parse_ini("[run]\nseed = 7\n[env]\nkind = toy\n");
  CHECK(cfg.get_int("run", "seed") == 7);
  CHECK(cfg.get_real("env", "horizon", 2.5) == 2.5);
  const std::string manifest = cfg.manifest_json(7);
  const std::string path = "/tmp/mtpp_manifest_roundtrip.json";
  {
    std::ofstream os(path);
    os << manifest;
  }
  ConfigMap back = ConfigMap::from_manifest_file(path);
  CHECK(back.get_int("run", "seed") == 7);
  CHECK(back.get_string("env", "kind") == "toy");
  CHECK(back.get_real("env", "horizon") == 2.5);
  std::remove(path.c_str());
}

TEST_CASE("format_real: shortest round-trip representation") {
  RandomStream rng(33);
  for (int i = 0; i < 2000; ++i) {
    double v = rng.next_uniform(-1e6, 1e6);
    if (i % 3 == 0) v = std::exp(rng.next_uniform(-40.0, 40.0));
    double back = 0.0;
    std::sscanf(format_real(v).c_str(), "%lf", &back);
    CHECK(back == v);
  }
  CHECK(format_real(0.02) == "0.02");
}
