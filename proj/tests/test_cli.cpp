#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "flowguide/checkpoint.hpp"
#include "flowguide/sample_io.hpp"
#include "flowguide/toy_world.hpp"

using namespace flowguide;
namespace fs = std::filesystem;

namespace {

const fs::path kWork = fs::temp_directory_path() / "flowguide_cli_test";

struct Run {
  int status;
  std::string err;
};

Run run(const std::string& args) {
  const fs::path err = kWork / "stderr.txt";
  const std::string cmd = std::string(FLOWGUIDE_CLI) + " " + args + " 2> " + err.string() + " > " + (kWork / "stdout.txt").string();
  const int raw = std::system(cmd.c_str());
  return {WIFEXITED(raw) ? WEXITSTATUS(raw) : -1, read_file_bytes(err)};
}

std::string path(const std::string& name) { return (kWork / name).string(); }

struct Setup {
  Setup() {
    fs::remove_all(kWork);
    fs::create_directories(kWork);
    std::ofstream(kWork / "tiny.cfg") << "# tiny run\nepochs = 2\nbatch_size = 64\ndataset_size = 512\nwidth = 16\n"
                                         "head_width = 16\ndepth = 4\ntap = 2\nseed = 3\n";
  }
};
const Setup setup;

}  // namespace

TEST_CASE("missing config file exits 2 naming the path") {
  const Run r = run("train --config " + path("nope.cfg") + " --out " + path("x.ckpt"));
  CHECK(r.status == 2);
  CHECK(r.err.find(path("nope.cfg")) != std::string::npos);
}

TEST_CASE("unknown config key exits 2") {
  std::ofstream(kWork / "typo.cfg") << "epoch = 3\n";
  CHECK(run("train --config " + path("typo.cfg")).status == 2);
}

TEST_CASE("bad flags exit 2") {
  CHECK(run("train --no-such-flag").status == 2);
  CHECK(run("oracle --lambda -1 --out " + path("o.csv")).status == 2);
  CHECK(run("guide --checkpoint " + path("none.ckpt") + " --potential nonsense").status == 2);
}

TEST_CASE("train, sample, guide, oracle, eval, plot") {
  REQUIRE(run("train --config " + path("tiny.cfg") + " --out " + path("m.ckpt")).status == 0);
  CHECK(fs::exists(path("m.ckpt.loss.csv")));
  CHECK(read_file_bytes(path("m.ckpt.config")).find("epochs = 2") != std::string::npos);
  CHECK(load_checkpoint_header(path("m.ckpt"))["config"]["epochs"] == 2);

  SUBCASE("zero epochs gives the initialization") {
    REQUIRE(run("train --config " + path("tiny.cfg") + " --epochs 0 --out " + path("z.ckpt")).status == 0);
    Arch arch;
    arch.depth = 4;
    arch.width = 16;
    arch.head_width = 16;
    arch.tap = 2;
    const ModelParams init = init_params(arch, 3);
    const ModelParams loaded = load_checkpoint(path("z.ckpt"));
    CHECK(loaded.trunk[1].weight == init.trunk[1].weight);
    CHECK(loaded.head[1].weight == init.head[1].weight);
  }

  SUBCASE("zero guidance equals plain sde") {
    const std::string common = "--checkpoint " + path("m.ckpt") + " --n 200 --steps 20 --seed 4";
    REQUIRE(run("sample " + common + " --mode sde --out " + path("s.csv")).status == 0);
    REQUIRE(run("guide " + common + " --lambda 0 --feature 0,1 --out " + path("g.csv")).status == 0);
    CHECK(read_file_bytes(path("s.csv")) == read_file_bytes(path("g.csv")));
  }

  SUBCASE("feature auto-normalization warns") {
    const Run r = run("guide --checkpoint " + path("m.ckpt") + " --n 10 --steps 5 --feature 3,4 --out " + path("w.csv"));
    CHECK(r.status == 0);
    CHECK(r.err.find("warning") != std::string::npos);
  }

  SUBCASE("oracle rows are in the support") {
    REQUIRE(run("oracle --feature \"-1,0\" --lambda 2 --n 2000 --out " + path("o.csv")).status == 0);
    const SampleBatch b = read_sample_csv(path("o.csv"));
    CHECK(b.size() == 2000);
    for (const auto& p : b.points) CHECK(ToyDensity::in_support(p));
  }

  SUBCASE("eval of a batch against itself") {
    REQUIRE(run("oracle --n 300 --out " + path("o2.csv")).status == 0);
    REQUIRE(run("eval --a " + path("o2.csv") + " --b " + path("o2.csv") + " --out " + path("e.json")).status == 0);
    const auto j = nlohmann::json::parse(read_file_bytes(path("e.json")));
    CHECK(j["energy_distance"].get<double>() == 0.0);
    CHECK(j["skl"].get<double>() == 0.0);
    CHECK(j["coverage"]["a"]["fraction_in_support"].get<double>() == 1.0);
    CHECK(j.contains("config"));
  }

  SUBCASE("malformed CSV reports the line") {
    std::ofstream(kWork / "bad.csv") << "x1,x2\n0.1,0.2\noops\n";
    const Run r = run("eval --a " + path("bad.csv") + " --metric coverage");
    CHECK(r.status != 0);
    CHECK(r.err.find(":3") != std::string::npos);
  }

  SUBCASE("plot") {
    REQUIRE(run("oracle --n 50 --out " + path("p.csv")).status == 0);
    REQUIRE(run("plot --a " + path("p.csv") + " --overlay " + path("p.csv") + " --out " + path("p.svg")).status == 0);
    CHECK(read_file_bytes(path("p.svg")).find("<svg") != std::string::npos);
  }

  SUBCASE("embedscan") {
    REQUIRE(run("embedscan --checkpoint " + path("m.ckpt") + " --pairs 3 --n 20 --steps 5 --out " + path("es.json"))
                .status == 0);
    const auto j = nlohmann::json::parse(read_file_bytes(path("es.json")));
    CHECK(j["embed_scan"]["A"].get<double>() <= j["embed_scan"]["B"].get<double>());
    CHECK(j["embed_scan"].contains("correlation"));
  }
}

TEST_CASE("gradcheck command") {
  CHECK(run("gradcheck --seed 21 --trials 10 --out " + path("gc.json")).status == 0);
  const auto j = nlohmann::json::parse(read_file_bytes(path("gc.json")));
  CHECK(j["passed"].get<bool>());
  CHECK(j["suites"].size() == 10);
}
