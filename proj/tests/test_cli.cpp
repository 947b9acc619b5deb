// Drives the built command-line tool as a subprocess.

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "doctest.h"
#include "json.hpp"
#include "support.hpp"

#ifndef UDFFORGE_CLI
#error "UDFFORGE_CLI must name the built tool"
#endif

namespace fs = std::filesystem;

namespace {

int run(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + " " + std::string(UDFFORGE_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Every regular file under `a` has a byte-identical twin under `b`.
bool same_tree(const fs::path& a, const fs::path& b) {
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    const fs::path twin = b / fs::relative(e.path(), a);
    if (!fs::exists(twin) || slurp(e.path()) != slurp(twin)) return false;
    ++files;
  }
  return files > 0;
}

const char* kTiny =
    "--set arch.num_layers=3 --set arch.hidden_width=8 --set arch.encoding_frequencies=0 "
    "--set sampler.planes_per_batch=30 --set sampler.knn_k=5 --iters 20";

}  // namespace

TEST_CASE("cli: usage errors exit 2") {
  testing::TempDir dir("cli_usage");
  CHECK(run("") == 2);
  CHECK(run("frobnicate") == 2);
  CHECK(run("synth --kind torus -o " + dir.file("x")) == 2);
  CHECK(run("synth --n abc -o " + dir.file("x")) == 2);
  CHECK(run("synth --set nope=1 -o " + dir.file("x")) == 2);
  CHECK(run("synth --config " + dir.file("missing.json")) == 2);
  CHECK(run("synth -o " + dir.file("x"), "UDFFORGE_SEED=abc") == 2);
  CHECK(run("synth") == 2);  // no output directory
  CHECK_FALSE(fs::exists(dir.file("x")));
  CHECK(run("--help") == 0);
}

TEST_CASE("cli: synth writes the scene and is idempotent") {
  testing::TempDir dir("cli_synth");
  REQUIRE(run("synth --kind disk --n 2000 --noise 0 --seed 1 -o " + dir.file("a")) == 0);
  fs::copy(dir.file("a"), dir.file("b"), fs::copy_options::recursive);
  REQUIRE(run("synth --kind disk --n 2000 --noise 0 --seed 1 -o " + dir.file("a")) == 0);
  CHECK(same_tree(dir.file("a"), dir.file("b")));
  CHECK(same_tree(dir.file("b"), dir.file("a")));
  std::ifstream cloud(dir.file("a/cloud.surfels"));
  std::size_t records = 0;
  bool header = false;
  for (std::string line; std::getline(cloud, line);) {
    if (line.empty() || line[0] == '#') continue;
    if (line.rfind("surfelcloud", 0) == 0) {
      header = true;
      continue;
    }
    std::istringstream ls(line);
    double x, y, z;
    ls >> x >> y >> z;
    CHECK(z == 0.0);
    CHECK(std::hypot(x, y) <= 0.6);
    ++records;
  }
  CHECK(header);
  CHECK(records == 2000);
  const auto cfg = nlohmann::json::parse(slurp(dir.file("a/config.json")));
  CHECK(cfg["seed"] == 1);
  CHECK(cfg["synth"]["n"] == 2000);
}

TEST_CASE("cli: seed fallback from the environment") {
  testing::TempDir dir("cli_seed");
  REQUIRE(run("synth --n 50 -o " + dir.file("env"), "UDFFORGE_SEED=77") == 0);
  REQUIRE(run("synth --n 50 --seed 77 -o " + dir.file("flag")) == 0);
  REQUIRE(run("synth --n 50 --seed 78 -o " + dir.file("other"), "UDFFORGE_SEED=77") == 0);
  CHECK(slurp(dir.file("env/cloud.surfels")) == slurp(dir.file("flag/cloud.surfels")));
  CHECK(slurp(dir.file("env/cloud.surfels")) != slurp(dir.file("other/cloud.surfels")));
}

TEST_CASE("cli: train, resume and the downstream commands") {
  testing::TempDir dir("cli_pipeline");
  const std::string scene = dir.file("scene");
  REQUIRE(run("synth --kind disk --n 300 -o " + scene) == 0);

  SUBCASE("missing cloud exits 2 without outputs") {
    CHECK(run("train --cloud " + dir.file("none.surfels") + " -o " + dir.file("t")) == 2);
    CHECK_FALSE(fs::exists(dir.file("t")));
  }

  SUBCASE("full pipeline") {
    const std::string train = std::string("train --cloud ") + scene + "/cloud.surfels " + kTiny +
                              " --set train.checkpoint_every=10 --set train.far_only_until=5";
    REQUIRE(run(train + " -o " + dir.file("t")) == 0);
    for (const char* f : {"field.udf", "cloud.surfels", "metrics.ndjson", "config.json",
                          "checkpoints/ckpt_00000010.udf", "checkpoints/ckpt_00000010.surfels"}) {
      CHECK(fs::exists(dir.path() / "t" / f));
    }
    std::ifstream log(dir.file("t/metrics.ndjson"));
    int lines = 0;
    for (std::string line; std::getline(log, line); ++lines) {
      const auto j = nlohmann::json::parse(line);
      CHECK(j.contains("l_far"));
      CHECK(j.contains("degenerate_fraction"));
      if (lines == 0) CHECK(j["l_near"].is_null());
    }
    CHECK(lines == 20);

    REQUIRE(run(train + " --resume " + dir.file("t/checkpoints/ckpt_00000010.udf") + " -o " + dir.file("r")) == 0);
    const auto first = nlohmann::json::parse(slurp(dir.file("r/metrics.ndjson")).substr(0, slurp(dir.file("r/metrics.ndjson")).find('\n')));
    CHECK(first["iter"] == 10);
    CHECK(slurp(dir.file("r/field.udf")) == slurp(dir.file("t/field.udf")));

    const std::string ckpt = " --checkpoint " + dir.file("t/field.udf");
    CHECK(run("extract --res 16" + ckpt + " -o " + dir.file("e")) <= 1);
    REQUIRE(run("export-field --res 32" + ckpt + " -o " + dir.file("x")) == 0);
    CHECK(fs::file_size(dir.file("x/field.f32")) == 32u * 32u * 32u * 4u);
    CHECK(fs::exists(dir.file("x/field.json")));
    CHECK(fs::exists(dir.file("x/config.json")));
    REQUIRE(run("deform --steps 4 --set deform.points=50" + ckpt + " -o " + dir.file("d")) == 0);
    for (int s = 0; s <= 4; ++s) CHECK(fs::exists(dir.path() / "d" / ("step_00" + std::to_string(s) + ".xyz")));
    CHECK(run("eval --set eval.surface_points=100 --set eval.mesh_resolution=0 --res 16" + ckpt + " --gt " + scene +
              "/gt.xyz --oracle " + scene + "/oracle.udf -o " + dir.file("v")) == 0);
    const auto report = nlohmann::json::parse(slurp(dir.file("v/report.json")));
    CHECK(report["udf_mae_band"].get<double>() >= 0.0);
    CHECK(report.contains("config"));
  }

  SUBCASE("oracle checkpoint evaluates to zero field error") {
    REQUIRE(run("eval --set eval.surface_points=500 --res 24 --checkpoint " + scene + "/oracle.udf --oracle " + scene +
                "/oracle.udf --gt " + scene + "/gt.xyz -o " + dir.file("v")) == 0);
    const auto report = nlohmann::json::parse(slurp(dir.file("v/report.json")));
    CHECK(report["udf_mae_band"] == 0.0);
    CHECK(report["udf_max_band"] == 0.0);
    CHECK(report["grad_check_max_rel_err"].get<double>() < 1e-6);
    CHECK(report["boundary_loop_count"] == 1);
  }

  SUBCASE("extract on an analytic sphere is closed") {
    REQUIRE(run("synth --kind sphere --n 100 -o " + dir.file("s")) == 0);
    REQUIRE(run("extract --res 64 --checkpoint " + dir.file("s/oracle.udf") + " -o " + dir.file("m")) == 0);
    CHECK(slurp(dir.file("m/boundary.obj")).find("\nl ") == std::string::npos);
    CHECK(slurp(dir.file("m/mesh.obj")).find("\nf ") != std::string::npos);
  }

  SUBCASE("inputs are never modified") {
    const std::string before = slurp(scene + "/cloud.surfels");
    REQUIRE(run(std::string("train --cloud ") + scene + "/cloud.surfels " + kTiny + " -o " + dir.file("t")) == 0);
    CHECK(slurp(scene + "/cloud.surfels") == before);
  }
}

TEST_CASE("cli: runtime failures exit 1") {
  testing::TempDir dir("cli_runtime");
  {
    std::ofstream bad(dir.file("bad.udf"));
    bad << "not a field\n";
  }
  CHECK(run("extract --checkpoint " + dir.file("bad.udf") + " -o " + dir.file("e")) == 1);
}
