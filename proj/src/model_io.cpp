#include "dpcn/model_io.hpp"

#include <fstream>
#include <json.hpp>
#include <string>
#include <vector>

namespace dpcn {

namespace {

using nlohmann::json;

json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix matrix_from_json(const json& j, Index rows, Index cols, const char* what) {
  if (!j.is_array() || static_cast<Index>(j.size()) != rows)
    throw DimensionError(std::string("load_model: ") + what + " row count mismatch");
  Matrix m(rows, cols);
  for (Index r = 0; r < rows; ++r) {
    const json& row = j[static_cast<std::size_t>(r)];
    if (!row.is_array() || static_cast<Index>(row.size()) != cols)
      throw DimensionError(std::string("load_model: ") + what +
                           " column count mismatch");
    for (Index c = 0; c < cols; ++c)
      m(r, c) = row[static_cast<std::size_t>(c)].get<Real>();
  }
  return m;
}

json hyper_to_json(const HyperParams& h) {
  return json{{"lambda", h.lambda},
              {"gamma0", h.gamma0},
              {"beta", h.beta},
              {"mu", h.mu},
              {"eta", h.eta},
              {"L0_x", h.L0_x},
              {"L0_u", h.L0_u},
              {"max_iters", h.max_iters},
              {"tol", h.tol},
              {"learn_rate", h.learn_rate},
              {"batch_size", h.batch_size},
              {"param_smooth", h.param_smooth},
              {"epochs", h.epochs}};
}

HyperParams hyper_from_json(const json& j) {
  HyperParams h;
  h.lambda = j.at("lambda").get<Real>();
  h.gamma0 = j.at("gamma0").get<Real>();
  h.beta = j.at("beta").get<Real>();
  h.mu = j.at("mu").get<Real>();
  h.eta = j.at("eta").get<Real>();
  h.L0_x = j.at("L0_x").get<Real>();
  h.L0_u = j.at("L0_u").get<Real>();
  h.max_iters = j.at("max_iters").get<int>();
  h.tol = j.at("tol").get<Real>();
  h.learn_rate = j.at("learn_rate").get<Real>();
  h.batch_size = j.at("batch_size").get<int>();
  h.param_smooth = j.at("param_smooth").get<Real>();
  h.epochs = j.at("epochs").get<int>();
  return h;
}

json topology_to_json(const Topology& t) {
  json layers = json::array();
  for (const LayerTopology& lt : t.layers)
    layers.push_back(json{{"group_rows", lt.group_rows},
                          {"group_cols", lt.group_cols},
                          {"child_stride", lt.child_stride},
                          {"grid_rows", lt.grid_rows},
                          {"grid_cols", lt.grid_cols},
                          {"block_stride", lt.block_stride}});
  return json{{"frame_rows", t.frame_rows},
              {"frame_cols", t.frame_cols},
              {"patch_size", t.patch_size},
              {"layers", std::move(layers)}};
}

Topology topology_from_json(const json& j) {
  Topology t;
  t.frame_rows = j.at("frame_rows").get<int>();
  t.frame_cols = j.at("frame_cols").get<int>();
  t.patch_size = j.at("patch_size").get<int>();
  for (const json& lj : j.at("layers")) {
    LayerTopology lt;
    lt.group_rows = lj.at("group_rows").get<int>();
    lt.group_cols = lj.at("group_cols").get<int>();
    lt.child_stride = lj.at("child_stride").get<int>();
    lt.grid_rows = lj.at("grid_rows").get<int>();
    lt.grid_cols = lj.at("grid_cols").get<int>();
    lt.block_stride = lj.at("block_stride").get<int>();
    t.layers.push_back(lt);
  }
  return t;
}

}  // namespace

void save_model(const Network& net, const std::string& path) {
  net.validate();
  json layers = json::array();
  for (const NetworkLayer& layer : net.layers) {
    const LayerParams& p = layer.params;
    layers.push_back(json{{"K", p.K},
                          {"P", p.P},
                          {"D", p.D},
                          {"N", p.N},
                          {"hyper", hyper_to_json(layer.hyper)},
                          {"A", matrix_to_json(p.A)},
                          {"C", matrix_to_json(p.C)},
                          {"B", matrix_to_json(p.B)}});
  }
  const json j{{"version", kModelVersion},
               {"topology", topology_to_json(net.topology)},
               {"trained", net.trained},
               {"layers", std::move(layers)}};
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("save_model: cannot open " + path);
  os << j.dump();
  if (!os) throw IoError("save_model: write failed for " + path);
}

Network load_model(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("load_model: cannot open " + path);

  json j;
  try {
    j = json::parse(is);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("load_model: ") + e.what(), e.byte);
  }

  try {
    if (!j.contains("version") || !j.at("version").is_string())
      throw VersionError("load_model: missing version tag");
    const std::string version = j.at("version").get<std::string>();
    if (version != kModelVersion)
      throw VersionError("load_model: unsupported version '" + version +
                         "', expected '" + kModelVersion + "'");

    const Topology topo = topology_from_json(j.at("topology"));
    std::vector<LayerDims> dims;
    std::vector<HyperParams> hypers;
    for (const json& lj : j.at("layers")) {
      LayerDims d;
      d.K = lj.at("K").get<Index>();
      d.P = lj.at("P").get<Index>();
      d.D = lj.at("D").get<Index>();
      d.N = lj.at("N").get<Index>();
      dims.push_back(d);
      hypers.push_back(hyper_from_json(lj.at("hyper")));
    }

    Network net = build_network(topo, dims, hypers, 0);
    const json& layers = j.at("layers");
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
      LayerParams& p = net.layers[l].params;
      p.A = matrix_from_json(layers[l].at("A"), p.K, p.K, "A");
      p.C = matrix_from_json(layers[l].at("C"), p.P, p.K, "C");
      p.B = matrix_from_json(layers[l].at("B"), p.K, p.D, "B");
      p.validate();
    }
    net.trained = j.value("trained", true);
    net.reset_context();
    net.validate();
    return net;
  } catch (const json::exception& e) {
    throw ParseError(std::string("load_model: malformed model: ") + e.what(), 0);
  }
}

}  // namespace dpcn
