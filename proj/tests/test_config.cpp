#include "bkg/config.hpp"

#include "doctest.h"
#include "support/testutil.hpp"

using namespace bkg;

TEST_CASE("defaults pass validation and round-trip through resolved()") {
  PipelineConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  auto kv = cfg.resolved();
  CHECK(kv.at("budget") == "300");
  CHECK(kv.at("hop_bound") == "3");
  CHECK(kv.at("k1") == "30");
  CHECK(kv.at("k2") == "3");
  CHECK(kv.at("lr") == "0.001");
  CHECK(kv.at("epochs") == "3");
  CHECK(kv.at("batch") == "4");
  CHECK(kv.at("seed") == "42");
  CHECK(kv.at("d") == "64");
  CHECK(kv.at("lang") == "en");

  PipelineConfig echo;
  for (const auto& [k, v] : kv) echo.set(k, v);  // every emitted pair re-applies
  CHECK(echo.resolved() == kv);
}

TEST_CASE("set parses and rejects by type") {
  PipelineConfig cfg;
  cfg.set("budget", "12");
  CHECK(cfg.budget == 12);
  cfg.set("lr", "4e-5");
  CHECK(cfg.train.lr == 4e-5);
  cfg.set("float32", "yes");
  CHECK(cfg.float32);
  cfg.set("downsample_negatives", "off");
  CHECK(!cfg.train.downsample_negatives);
  cfg.set("checkpoint", "model.bkgm");
  CHECK(cfg.checkpoint == "model.bkgm");

  CHECK_THROWS_AS(cfg.set("no_such_key", "1"), ConfigError);
  CHECK_THROWS_AS(cfg.set("budget", "-3"), ConfigError);
  CHECK_THROWS_AS(cfg.set("budget", "3.5"), ConfigError);
  CHECK_THROWS_AS(cfg.set("lr", "fast"), ConfigError);
  CHECK_THROWS_AS(cfg.set("lr", "inf"), ConfigError);
  CHECK_THROWS_AS(cfg.set("float32", "maybe"), ConfigError);
  CHECK_THROWS_AS(cfg.set("epochs", "99999999999"), ConfigError);
}

TEST_CASE("validation rejects inconsistent settings") {
  auto bad = [](auto&& mutate) {
    PipelineConfig c;
    mutate(c);
    CHECK_THROWS_AS(c.validate(), ConfigError);
  };
  bad([](PipelineConfig& c) { c.lang = ""; });
  bad([](PipelineConfig& c) { c.hop_bound = 0; });
  bad([](PipelineConfig& c) { c.d = 0; });
  bad([](PipelineConfig& c) { c.max_dist = 0; });
  bad([](PipelineConfig& c) { c.train_ratio = 0.9; c.dev_ratio = 0.2; });
  bad([](PipelineConfig& c) { c.train.k2 = c.train.k1 + 1; });
}

TEST_CASE("config files apply with comments, blanks, and line numbers") {
  bkgtest::TempDir tmp;
  auto path = tmp.file("run.conf");
  bkgtest::write_text(path,
                      "# training overrides\n"
                      "lr = 4e-5\n"
                      "\n"
                      "epochs=5   # inline comment\n"
                      "  batch =\t8\n");
  PipelineConfig cfg;
  apply_config_file(cfg, path);
  CHECK(cfg.train.lr == 4e-5);
  CHECK(cfg.train.epochs == 5);
  CHECK(cfg.train.batch == 8);
  CHECK(cfg.budget == 300);  // untouched keys keep defaults

  SUBCASE("missing separator names the line") {
    bkgtest::write_text(path, "lr = 1e-3\nbroken line\n");
    PipelineConfig c2;
    try {
      apply_config_file(c2, path);
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find(":2:") != std::string::npos);
    }
  }
  SUBCASE("bad value names the line and key") {
    bkgtest::write_text(path, "\n\nepochs = soon\n");
    PipelineConfig c2;
    try {
      apply_config_file(c2, path);
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      std::string msg = e.what();
      CHECK(msg.find(":3:") != std::string::npos);
      CHECK(msg.find("epochs") != std::string::npos);
    }
  }
  SUBCASE("missing file raises IoError") {
    PipelineConfig c2;
    CHECK_THROWS_AS(apply_config_file(c2, tmp.file("absent.conf")), IoError);
  }
}
