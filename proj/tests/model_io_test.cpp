#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <doctest.h>
#include <json.hpp>

#include "dpcn/model_io.hpp"

using namespace dpcn;

namespace {

std::filesystem::path temp_file(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "dpcn_model_test";
  std::filesystem::create_directories(dir);
  return dir / name;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

void spit(const std::filesystem::path& p, const std::string& bytes) {
  std::ofstream os(p, std::ios::binary);
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

// Two-layer network with overlapping parents, distinct hypers per
// layer, and fully random parameter matrices.
Network sample_network() {
  Topology t;
  t.frame_rows = 8;
  t.frame_cols = 4;
  t.patch_size = 4;
  LayerTopology l0;
  l0.grid_rows = 3;
  l0.block_stride = 2;
  LayerTopology l1;
  l1.group_rows = 2;
  l1.child_stride = 2;
  l1.grid_rows = 2;
  l1.block_stride = 2;
  t.layers = {l0, l1};

  HyperParams h0;
  h0.lambda = 0.25;
  h0.gamma0 = 0.3;
  h0.max_iters = 77;
  HyperParams h1;
  h1.beta = 0.05;
  h1.mu = 0.11;
  h1.epochs = 4;

  return build_network(t, {LayerDims{3, 16, 2, 1}, LayerDims{4, 2, 2, 2}},
                       {h0, h1}, 29);
}

}  // namespace

TEST_CASE("model round-trips bitwise through JSON") {
  Network net = sample_network();
  net.trained = true;

  const auto path = temp_file("model.json");
  save_model(net, path.string());
  Network r = load_model(path.string());

  CHECK(r.trained);
  CHECK(r.topology.frame_rows == net.topology.frame_rows);
  CHECK(r.topology.patch_size == net.topology.patch_size);
  REQUIRE(r.topology.layers.size() == 2);
  CHECK(r.topology.layers[1].group_rows == 2);
  CHECK(r.topology.layers[1].child_stride == 2);

  REQUIRE(r.layers.size() == 2);
  for (std::size_t l = 0; l < 2; ++l) {
    const LayerParams& a = net.layers[l].params;
    const LayerParams& b = r.layers[l].params;
    CHECK(a.K == b.K);
    CHECK(a.P == b.P);
    CHECK(a.D == b.D);
    CHECK(a.N == b.N);
    // Doubles survive the text format exactly.
    CHECK(a.A == b.A);
    CHECK(a.C == b.C);
    CHECK(a.B == b.B);

    const HyperParams& ha = net.layers[l].hyper;
    const HyperParams& hb = r.layers[l].hyper;
    CHECK(ha.lambda == hb.lambda);
    CHECK(ha.gamma0 == hb.gamma0);
    CHECK(ha.beta == hb.beta);
    CHECK(ha.mu == hb.mu);
    CHECK(ha.eta == hb.eta);
    CHECK(ha.L0_x == hb.L0_x);
    CHECK(ha.L0_u == hb.L0_u);
    CHECK(ha.max_iters == hb.max_iters);
    CHECK(ha.tol == hb.tol);
    CHECK(ha.learn_rate == hb.learn_rate);
    CHECK(ha.batch_size == hb.batch_size);
    CHECK(ha.param_smooth == hb.param_smooth);
    CHECK(ha.epochs == hb.epochs);

    // Wiring is rebuilt from the topology, not stored.
    REQUIRE(r.layers[l].blocks.size() == net.layers[l].blocks.size());
    for (std::size_t b2 = 0; b2 < r.layers[l].blocks.size(); ++b2) {
      CHECK(r.layers[l].blocks[b2].row == net.layers[l].blocks[b2].row);
      CHECK(r.layers[l].blocks[b2].children == net.layers[l].blocks[b2].children);
    }
  }

  // Fresh zeroed context.
  REQUIRE(r.context.size() == 2);
  for (const auto& layer : r.context)
    for (const BlockContext& bc : layer) {
      for (const Vector& x : bc.x_prev) CHECK(x.isZero(0.0));
      CHECK(bc.u_prev.isZero(0.0));
    }

  // The untrained flag round-trips too.
  Network raw = sample_network();
  const auto path2 = temp_file("untrained.json");
  save_model(raw, path2.string());
  CHECK(!load_model(path2.string()).trained);
}

TEST_CASE("load_model rejects damaged and foreign files") {
  Network net = sample_network();
  const auto donor = temp_file("donor.json");
  save_model(net, donor.string());
  const std::string good = slurp(donor);
  const auto bad = temp_file("bad.json");

  // Truncation and non-JSON garbage are parse failures.
  spit(bad, good.substr(0, good.size() / 2));
  CHECK_THROWS_AS(load_model(bad.string()), ParseError);
  spit(bad, "not a model at all");
  CHECK_THROWS_AS(load_model(bad.string()), ParseError);

  using nlohmann::json;

  // Version gate.
  json j = json::parse(good);
  j["version"] = "dpcn-9";
  spit(bad, j.dump());
  CHECK_THROWS_AS(load_model(bad.string()), VersionError);
  j = json::parse(good);
  j.erase("version");
  spit(bad, j.dump());
  CHECK_THROWS_AS(load_model(bad.string()), VersionError);
  j = json::parse(good);
  j["version"] = 7;
  spit(bad, j.dump());
  CHECK_THROWS_AS(load_model(bad.string()), VersionError);

  // Missing structure inside an otherwise valid document.
  j = json::parse(good);
  j["layers"][0].erase("hyper");
  spit(bad, j.dump());
  CHECK_THROWS_AS(load_model(bad.string()), ParseError);

  // A parameter matrix with the wrong shape.
  j = json::parse(good);
  j["layers"][0]["A"].erase(0);
  spit(bad, j.dump());
  CHECK_THROWS_AS(load_model(bad.string()), DimensionError);

  // A broken dimension chain between layers.
  j = json::parse(good);
  j["layers"][0]["D"] = 5;
  j["layers"][0]["B"] = json::array();
  spit(bad, j.dump());
  CHECK_THROWS_AS(load_model(bad.string()), TopologyError);

  // Invalid hyper values die in validation.
  j = json::parse(good);
  j["layers"][0]["hyper"]["gamma0"] = -1.0;
  spit(bad, j.dump());
  CHECK_THROWS_AS(load_model(bad.string()), ParameterError);

  // ParseError carries the byte offset of the truncation point.
  spit(bad, good.substr(0, 40));
  try {
    load_model(bad.string());
    CHECK(false);
  } catch (const ParseError& e) {
    CHECK(e.byte_offset > 0);
    CHECK(e.byte_offset <= 41);
  }
}

TEST_CASE("model io propagates filesystem failures") {
  CHECK_THROWS_AS(load_model(temp_file("missing.json").string()), IoError);
  Network net = sample_network();
  CHECK_THROWS_AS(save_model(net, "/nonexistent_dir_dpcn/model.json"), IoError);
}
