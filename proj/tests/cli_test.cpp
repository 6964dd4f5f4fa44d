#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <string>
#include <vector>

#include "dpcn/data.hpp"
#include "dpcn/model_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string g_cli;  // path to the binary under test, from argv

struct RunResult {
  int code = -1;
  std::string out;
  std::string err;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Runs the binary with the given arguments from inside `dir`.
RunResult run(const std::string& dir, const std::string& args) {
  const std::string out = dir + "/stdout.txt";
  const std::string err = dir + "/stderr.txt";
  const std::string cmd = "cd '" + dir + "' && '" + g_cli + "' " + args +
                          " > stdout.txt 2> stderr.txt";
  const int status = std::system(cmd.c_str());
  RunResult r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = read_file(out);
  r.err = read_file(err);
  return r;
}

std::string fresh_dir(const std::string& name) {
  const std::string dir = "cli_scratch/" + name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// Small two-layer architecture on a 20 x 20 frame with 10 x 10 patches.
json tiny_config() {
  json topo = {{"frame_rows", 20},
               {"frame_cols", 20},
               {"patch_size", 10},
               {"layers",
                {{{"group_rows", 1},
                  {"group_cols", 1},
                  {"child_stride", 0},
                  {"grid_rows", 2},
                  {"grid_cols", 2},
                  {"block_stride", 10}},
                 {{"group_rows", 2},
                  {"group_cols", 2},
                  {"child_stride", 10},
                  {"grid_rows", 1},
                  {"grid_cols", 1},
                  {"block_stride", 0}}}}};
  json dims = {{{"K", 12}, {"P", 100}, {"D", 4}, {"N", 1}},
               {{"K", 8}, {"P", 4}, {"D", 3}, {"N", 4}}};
  json hyper = {{"lambda", 0.1},    {"gamma0", 0.1},  {"mu", 0.05},
                {"max_iters", 40},  {"tol", 1e-6},    {"learn_rate", 0.1},
                {"batch_size", 16}, {"epochs", 2},    {"param_smooth", 0.5}};
  json cfg;
  cfg["generate"] = {{"frame_rows", 20},
                     {"frame_cols", 20},
                     {"frames_per_class", 12},
                     {"classes", {0, 1, 2}}};
  cfg["train"] = {{"topology", topo}, {"dims", dims}, {"hyper", hyper}};
  return cfg;
}

void write_config(const std::string& dir, const json& cfg) {
  std::ofstream out(dir + "/config.json");
  out << cfg.dump(2);
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> fields;
  std::istringstream in(line);
  std::string f;
  while (std::getline(in, f, ',')) fields.push_back(f);
  return fields;
}

}  // namespace

TEST_CASE("generate writes deterministic labeled videos") {
  const std::string dir = fresh_dir("generate");
  write_config(dir, tiny_config());

  RunResult r = run(dir, "--config config.json --seed 5 generate");
  REQUIRE(r.code == 0);
  CHECK(r.out.find("generate: wrote 36 frames") != std::string::npos);

  const dpcn::Video clean = dpcn::load_video(dir + "/clean.dpcv");
  REQUIRE(clean.frames.size() == 36);
  CHECK(clean.rows == 20);
  CHECK(clean.cols == 20);
  REQUIRE(clean.labels.size() == 36);
  for (int t = 0; t < 36; ++t)
    CHECK(clean.labels[static_cast<std::size_t>(t)] ==
          static_cast<std::uint32_t>(t / 12));
  for (const dpcn::Matrix& f : clean.frames)
    for (dpcn::Index i = 0; i < f.size(); ++i)
      CHECK((f(i) == 0.0 || f(i) == 1.0));

  // Noise only ever adds mass.
  const dpcn::Video noisy = dpcn::load_video(dir + "/noisy.dpcv");
  REQUIRE(noisy.frames.size() == 36);
  for (std::size_t t = 0; t < 36; ++t)
    CHECK(noisy.frames[t].sum() >= clean.frames[t].sum());

  const std::string labels = read_file(dir + "/labels.csv");
  CHECK(labels.find("frame,label") == 0);

  // Same seed, same bytes; different seed, different bytes.
  const std::string clean_bytes = read_file(dir + "/clean.dpcv");
  const std::string noisy_bytes = read_file(dir + "/noisy.dpcv");
  r = run(dir, "--config config.json --seed 5 generate");
  REQUIRE(r.code == 0);
  CHECK(read_file(dir + "/clean.dpcv") == clean_bytes);
  CHECK(read_file(dir + "/noisy.dpcv") == noisy_bytes);
  CHECK(read_file(dir + "/labels.csv") == labels);
  r = run(dir, "--config config.json --seed 6 generate");
  REQUIRE(r.code == 0);
  CHECK(read_file(dir + "/clean.dpcv") != clean_bytes);

  // Zero noise collapses the corrupted copy onto the clean one.
  r = run(dir,
          "--config config.json --seed 5 generate --noise-mean 0 "
          "--noisy-path same.dpcv");
  REQUIRE(r.code == 0);
  CHECK(read_file(dir + "/same.dpcv") == read_file(dir + "/clean.dpcv"));
}

TEST_CASE("train fits layered models reproducibly") {
  const std::string dir = fresh_dir("train");
  write_config(dir, tiny_config());
  REQUIRE(run(dir, "--config config.json --seed 5 generate").code == 0);

  RunResult r = run(dir,
                    "--config config.json --seed 7 train --video clean.dpcv "
                    "--model one.json --layers 1");
  REQUIRE(r.code == 0);
  CHECK(r.out.find("train: wrote model to one.json") != std::string::npos);
  const dpcn::Network one = dpcn::load_model(dir + "/one.json");
  REQUIRE(one.layers.size() == 1);
  CHECK(one.trained);
  CHECK(one.layers[0].params.K == 12);
  CHECK(one.layers[0].blocks.size() == 4);

  r = run(dir,
          "--config config.json --seed 7 train --video clean.dpcv "
          "--model two.json");
  REQUIRE(r.code == 0);
  const dpcn::Network two = dpcn::load_model(dir + "/two.json");
  REQUIRE(two.layers.size() == 2);
  CHECK(two.trained);
  CHECK(two.layers[1].params.D == 3);
  CHECK(two.layers[1].blocks.size() == 1);

  // Training is a pure function of video, config and seed.
  r = run(dir,
          "--config config.json --seed 7 train --video clean.dpcv "
          "--model two_again.json");
  REQUIRE(r.code == 0);
  CHECK(read_file(dir + "/two_again.json") == read_file(dir + "/two.json"));

  CHECK(run(dir, "--config config.json train --video missing.dpcv").code == 2);

  json broken = tiny_config();
  broken["train"].erase("dims");
  std::ofstream(dir + "/broken.json") << broken.dump();
  CHECK(run(dir, "--config broken.json train --video clean.dpcv").code == 1);

  CHECK(run(dir,
            "--config config.json train --video clean.dpcv --layers 9")
            .code == 1);
}

TEST_CASE("infer emits cause and state tables") {
  const std::string dir = fresh_dir("infer");
  write_config(dir, tiny_config());
  REQUIRE(run(dir, "--config config.json --seed 5 generate").code == 0);
  REQUIRE(run(dir,
              "--config config.json --seed 7 train --video clean.dpcv "
              "--model two.json")
              .code == 0);

  RunResult r = run(dir,
                    "infer --model two.json --video clean.dpcv "
                    "--causes causes.csv");
  REQUIRE(r.code == 0);
  CHECK(r.out.find("infer: wrote 36 rows") != std::string::npos);
  const auto rows = lines_of(read_file(dir + "/causes.csv"));
  REQUIRE(rows.size() == 37);
  CHECK(rows[0] == "u0,u1,u2");
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto fields = split_csv(rows[i]);
    REQUIRE(fields.size() == 3);
    for (const std::string& f : fields)
      CHECK(std::isfinite(std::stod(f)));
  }

  // Top-down inference runs and writes the same table shape.
  r = run(dir,
          "infer --model two.json --video clean.dpcv --causes td.csv "
          "--top-down --states states.csv");
  REQUIRE(r.code == 0);
  const auto td_rows = lines_of(read_file(dir + "/td.csv"));
  REQUIRE(td_rows.size() == 37);
  CHECK(td_rows[0] == "u0,u1,u2");

  // One row per frame, layer, block, member and state index.
  const auto st = lines_of(read_file(dir + "/states.csv"));
  CHECK(st[0] == "frame,layer,block,member,index,value");
  CHECK(st.size() == 1 + 36 * (4 * 1 * 12 + 1 * 4 * 8));

  // A one-layer model widens the cause table to D x blocks.
  REQUIRE(run(dir,
              "--config config.json --seed 7 train --video clean.dpcv "
              "--model one.json --layers 1")
              .code == 0);
  r = run(dir, "infer --model one.json --video clean.dpcv --causes c1.csv");
  REQUIRE(r.code == 0);
  const auto c1 = lines_of(read_file(dir + "/c1.csv"));
  REQUIRE(c1.size() == 37);
  CHECK(split_csv(c1[0]).size() == 16);
  CHECK(c1[0].substr(0, 9) == "u0,u1,u2,");

  // An empty video still produces a well-formed header-only table.
  dpcn::Video empty;
  empty.rows = 20;
  empty.cols = 20;
  dpcn::save_video(empty, dir + "/empty.dpcv");
  r = run(dir, "infer --model two.json --video empty.dpcv --causes e.csv");
  REQUIRE(r.code == 0);
  CHECK(r.out.find("infer: wrote 0 rows") != std::string::npos);
  CHECK(lines_of(read_file(dir + "/e.csv")).size() == 1);

  CHECK(run(dir, "infer --model missing.json --video clean.dpcv").code == 2);
  CHECK(run(dir, "infer --model two.json --video missing.dpcv").code == 2);
}

TEST_CASE("benchmark writes a deterministic csv grid") {
  const std::string dir = fresh_dir("benchmark");
  json cfg;
  cfg["benchmark"] = {{"K", 30},
                      {"active", 5},
                      {"T", 60},
                      {"P_grid", {20, 30}},
                      {"runs", 2},
                      {"hyper",
                       {{"lambda", 0.05},
                        {"gamma0", 0.05},
                        {"mu", 0.05},
                        {"max_iters", 100},
                        {"tol", 1e-6}}}};
  write_config(dir, cfg);

  RunResult r = run(dir, "--config config.json --seed 3 benchmark --csv b.csv");
  REQUIRE(r.code == 0);
  CHECK(r.out.find("benchmark: kalman process_var") != std::string::npos);
  const auto rows = lines_of(read_file(dir + "/b.csv"));
  REQUIRE(rows.size() == 7);
  CHECK(rows[0] == "method,P,runs,rmse_mean,rmse_std,seconds");
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto fields = split_csv(rows[i]);
    REQUIRE(fields.size() == 6);
    CHECK(fields[2] == "2");
    CHECK(std::stod(fields[3]) > 0);
    CHECK(fields[5] == "0.000");  // timings never leak into the table
  }

  // Re-running with the same seed reproduces the bytes; threads don't matter.
  const std::string bytes = read_file(dir + "/b.csv");
  r = run(dir, "--config config.json --seed 3 --threads 2 benchmark --csv b2.csv");
  REQUIRE(r.code == 0);
  CHECK(read_file(dir + "/b2.csv") == bytes);

  // The runs flag overrides the config.
  r = run(dir, "--config config.json --seed 3 benchmark --runs 1 --csv b3.csv");
  REQUIRE(r.code == 0);
  const auto rows3 = lines_of(read_file(dir + "/b3.csv"));
  REQUIRE(rows3.size() == 7);
  CHECK(split_csv(rows3[1])[2] == "1");
}

TEST_CASE("rf exports receptive field images") {
  const std::string dir = fresh_dir("rf");
  write_config(dir, tiny_config());
  REQUIRE(run(dir, "--config config.json --seed 5 generate").code == 0);
  REQUIRE(run(dir,
              "--config config.json --seed 7 train --video clean.dpcv "
              "--model two.json")
              .code == 0);

  RunResult r = run(dir, "rf --model two.json --layer 1 --units 0..3 --out-dir fields");
  REQUIRE(r.code == 0);
  CHECK(r.out.find("rf: wrote 4 files") != std::string::npos);
  for (int u = 0; u < 4; ++u) {
    const std::string pgm =
        read_file(dir + "/fields/rf_L1_U" + std::to_string(u) + ".pgm");
    REQUIRE_FALSE(pgm.empty());
    CHECK(pgm.substr(0, 2) == "P5");
  }
  CHECK_FALSE(fs::exists(dir + "/fields/rf_L1_U4.pgm"));

  r = run(dir, "rf --model two.json --layer 2 --units all --out-dir top");
  REQUIRE(r.code == 0);
  CHECK(r.out.find("rf: wrote 3 files") != std::string::npos);
  CHECK(fs::exists(dir + "/top/rf_L2_U2.pgm"));

  r = run(dir, "rf --model two.json --layer 1 --units 2 --out-dir single");
  REQUIRE(r.code == 0);
  CHECK(fs::exists(dir + "/single/rf_L1_U2.pgm"));
  CHECK_FALSE(fs::exists(dir + "/single/rf_L1_U0.pgm"));

  CHECK(run(dir, "rf --model two.json --layer 5 --units all").code == 1);
  CHECK(run(dir, "rf --model two.json --layer 1 --units 7..3").code == 1);
  CHECK(run(dir, "rf --model two.json --layer 1 --units abc").code == 1);
  CHECK(run(dir, "rf --model missing.json --layer 1 --units all").code == 2);
}

TEST_CASE("argument and config errors exit with distinct codes") {
  const std::string dir = fresh_dir("errors");

  CHECK(run(dir, "").code == 1);                  // a subcommand is required
  CHECK(run(dir, "--bogus generate").code == 1);  // unknown flag
  CHECK(run(dir, "--config missing.json generate").code == 1);

  std::ofstream(dir + "/array.json") << "[1,2,3]";
  CHECK(run(dir, "--config array.json generate").code == 1);

  std::ofstream(dir + "/mangled.json") << "{\"generate\": ";
  CHECK(run(dir, "--config mangled.json generate").code == 1);

  std::ofstream(dir + "/badval.json") << "{\"generate\": {\"frames_per_class\": \"many\"}}";
  CHECK(run(dir, "--config badval.json generate").code == 1);

  CHECK(run(dir, "--help").code == 0);
}

int main(int argc, char** argv) {
  for (int i = 1; i < argc; ++i)
    if (argv[i][0] != '-') g_cli = fs::absolute(argv[i]).string();
  if (g_cli.empty()) {
    std::fprintf(stderr, "usage: cli_test <dpcn-binary> [doctest options]\n");
    return 1;
  }
  doctest::Context ctx;
  ctx.applyCommandLine(argc, argv);
  return ctx.run();
}
