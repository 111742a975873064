#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "cli.hpp"

namespace fs = std::filesystem;

namespace {

int run(std::initializer_list<std::string> args) {
  return gels::cli::run(std::vector<std::string>(args));
}

}  // namespace

TEST_CASE("usage errors exit 2") {
  CHECK(run({"gels"}) == 2);
  CHECK(run({"gels", "bogus"}) == 2);
  CHECK(run({"gels", "gen", "--no-such-flag"}) == 2);
}

TEST_CASE("validation errors exit 1") {
  CHECK(run({"gels", "gen"}) == 1);  // --out missing
  CHECK(run({"gels", "eval", "--events", "/nonexistent", "--out", "/tmp/gels_t1"}) == 1);
  const auto dir = fs::temp_directory_path() / "gels_cli_empty";
  fs::create_directories(dir);
  CHECK(run({"gels", "train", "--events", dir.string(),
             "--out", (dir / "out").string()}) == 1);  // no events
  fs::remove_all(dir);
}

TEST_CASE("unknown config keys are rejected") {
  const auto dir = fs::temp_directory_path() / "gels_cli_cfg";
  fs::create_directories(dir);
  const auto cfg = dir / "bad.json";
  std::ofstream(cfg) << R"({"gen.event_count": 3})";  // misspelled key
  CHECK(run({"gels", "gen", "--config", cfg.string(),
             "--out", (dir / "out").string()}) == 1);
  fs::remove_all(dir);
}

TEST_CASE("selftest passes on a correct build") {
  CHECK(run({"gels", "selftest"}) == 0);
}

TEST_CASE("gen output is identical across thread counts") {
  const auto dir = fs::temp_directory_path() / "gels_cli_threads";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const auto cfg = dir / "cfg.json";
  std::ofstream(cfg) << R"({"seed": 9, "gen.events": 4, "gen.n_viewers": 12,
                            "gen.minutes": 6})";
  REQUIRE(run({"gels", "gen", "--config", cfg.string(), "--threads", "1",
               "--out", (dir / "a").string()}) == 0);
  REQUIRE(run({"gels", "gen", "--config", cfg.string(), "--threads", "4",
               "--out", (dir / "b").string()}) == 0);
  for (const auto& entry : fs::directory_iterator(dir / "a")) {
    const auto name = entry.path().filename();
    if (name == "manifest.json") continue;  // records the thread count
    std::ifstream fa(entry.path(), std::ios::binary);
    std::ifstream fb(dir / "b" / name, std::ios::binary);
    const std::string ba((std::istreambuf_iterator<char>(fa)), {});
    const std::string bb((std::istreambuf_iterator<char>(fb)), {});
    CHECK(ba == bb);
  }
  fs::remove_all(dir);
}

TEST_CASE("help exits cleanly") {
  CHECK(run({"gels", "--help"}) == 0);
}
