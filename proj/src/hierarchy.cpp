#include "dpcn/hierarchy.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <utility>

#include "dpcn/inference.hpp"
#include "dpcn/learning.hpp"
#include "dpcn/rng.hpp"

namespace dpcn {

int Topology::span_rows(int layer) const {
  if (layer < 0 || layer >= layer_count())
    throw IndexError("Topology::span_rows: layer out of range");
  int s = patch_size;
  for (int l = 0; l <= layer; ++l)
    s += (layers[l].group_rows - 1) * layers[l].child_stride;
  return s;
}

int Topology::span_cols(int layer) const {
  if (layer < 0 || layer >= layer_count())
    throw IndexError("Topology::span_cols: layer out of range");
  int s = patch_size;
  for (int l = 0; l <= layer; ++l)
    s += (layers[l].group_cols - 1) * layers[l].child_stride;
  return s;
}

void Topology::validate() const {
  if (frame_rows <= 0 || frame_cols <= 0)
    throw GeometryError("Topology: frame dimensions must be positive");
  if (patch_size <= 0) throw GeometryError("Topology: patch_size must be positive");
  if (layers.empty()) throw TopologyError("Topology: no layers");
  for (int l = 0; l < layer_count(); ++l) {
    const LayerTopology& lt = layers[l];
    if (lt.group_rows <= 0 || lt.group_cols <= 0)
      throw TopologyError("Topology: layer " + std::to_string(l) +
                          " group shape must be positive");
    if ((lt.group_rows > 1 || lt.group_cols > 1) && lt.child_stride <= 0)
      throw TopologyError("Topology: layer " + std::to_string(l) +
                          " needs a positive child_stride");
    if (lt.grid_rows <= 0 || lt.grid_cols <= 0)
      throw TopologyError("Topology: layer " + std::to_string(l) +
                          " grid shape must be positive");
    if ((lt.grid_rows > 1 || lt.grid_cols > 1) && lt.block_stride <= 0)
      throw TopologyError("Topology: layer " + std::to_string(l) +
                          " needs a positive block_stride");
    if (l > 0 && layers[l].child_stride != layers[l - 1].block_stride &&
        (layers[l].group_rows > 1 || layers[l].group_cols > 1))
      throw TopologyError("Topology: layer " + std::to_string(l) +
                          " child_stride must equal layer " + std::to_string(l - 1) +
                          " block_stride");
  }
  for (int l = 0; l < layer_count(); ++l) {
    const LayerTopology& lt = layers[l];
    const int last_r = (lt.grid_rows - 1) * lt.block_stride + span_rows(l);
    const int last_c = (lt.grid_cols - 1) * lt.block_stride + span_cols(l);
    if (last_r > frame_rows || last_c > frame_cols)
      throw GeometryError("Topology: layer " + std::to_string(l) +
                          " blocks do not fit the frame");
  }
}

void Network::reset_context() {
  context.assign(layers.size(), {});
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const LayerParams& p = layers[l].params;
    BlockContext zero;
    zero.x_prev.assign(static_cast<std::size_t>(p.N), Vector::Zero(p.K));
    zero.u_prev = Vector::Zero(p.D);
    context[l].assign(layers[l].blocks.size(), zero);
  }
}

void Network::validate() const {
  topology.validate();
  if (layers.size() != static_cast<std::size_t>(topology.layer_count()))
    throw TopologyError("Network: layer count mismatch");
  if (context.size() != layers.size())
    throw StateError("Network: context not initialised");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    layers[l].params.validate();
    layers[l].hyper.validate();
    if (context[l].size() != layers[l].blocks.size())
      throw StateError("Network: context shape mismatch at layer " +
                       std::to_string(l));
    for (const BlockContext& bc : context[l]) {
      if (bc.x_prev.size() != static_cast<std::size_t>(layers[l].params.N))
        throw StateError("Network: context members mismatch at layer " +
                         std::to_string(l));
      for (const Vector& x : bc.x_prev)
        if (x.size() != layers[l].params.K)
          throw StateError("Network: context state size mismatch at layer " +
                           std::to_string(l));
      if (bc.u_prev.size() != layers[l].params.D)
        throw StateError("Network: context cause size mismatch at layer " +
                         std::to_string(l));
    }
  }
}

Network build_network(const Topology& topology, const std::vector<LayerDims>& dims,
                      const std::vector<HyperParams>& hypers, std::uint64_t seed) {
  topology.validate();
  const int L = topology.layer_count();
  if (dims.size() != static_cast<std::size_t>(L))
    throw TopologyError("build_network: dims count != layer count");
  if (hypers.size() != static_cast<std::size_t>(L))
    throw TopologyError("build_network: hyper count != layer count");

  for (int l = 0; l < L; ++l) {
    const LayerTopology& lt = topology.layers[l];
    const Index group = static_cast<Index>(lt.group_rows) * lt.group_cols;
    if (dims[l].N != group)
      throw TopologyError("build_network: layer " + std::to_string(l) + " N=" +
                          std::to_string(dims[l].N) + " but group has " +
                          std::to_string(group) + " members");
    const Index want_p =
        l == 0 ? static_cast<Index>(topology.patch_size) * topology.patch_size
               : dims[l - 1].D;
    if (dims[l].P != want_p)
      throw TopologyError("build_network: layer " + std::to_string(l) + " P=" +
                          std::to_string(dims[l].P) + " but inputs have dimension " +
                          std::to_string(want_p));
    hypers[l].validate();
  }

  Network net;
  net.topology = topology;
  net.layers.resize(L);
  for (int l = 0; l < L; ++l) {
    net.layers[l].params = new_layer(dims[l], split_seed(seed, l));
    net.layers[l].hyper = hypers[l];
    const LayerTopology& lt = topology.layers[l];
    for (int i = 0; i < lt.grid_rows; ++i)
      for (int j = 0; j < lt.grid_cols; ++j) {
        Block b;
        b.row = i * lt.block_stride;
        b.col = j * lt.block_stride;
        if (l > 0) {
          const LayerTopology& lo = topology.layers[l - 1];
          for (int gi = 0; gi < lt.group_rows; ++gi)
            for (int gj = 0; gj < lt.group_cols; ++gj) {
              const int cr = b.row + gi * lt.child_stride;
              const int cc = b.col + gj * lt.child_stride;
              if (lo.block_stride <= 0 ||
                  cr % lo.block_stride != 0 || cc % lo.block_stride != 0)
                if (cr != 0 || cc != 0)
                  throw TopologyError("build_network: layer " + std::to_string(l) +
                                      " block at (" + std::to_string(b.row) + "," +
                                      std::to_string(b.col) +
                                      ") has no child block at (" +
                                      std::to_string(cr) + "," + std::to_string(cc) +
                                      ")");
              const int ci = lo.block_stride > 0 ? cr / lo.block_stride : 0;
              const int cj = lo.block_stride > 0 ? cc / lo.block_stride : 0;
              if (ci >= lo.grid_rows || cj >= lo.grid_cols)
                throw TopologyError("build_network: layer " + std::to_string(l) +
                                    " block at (" + std::to_string(b.row) + "," +
                                    std::to_string(b.col) +
                                    ") has no child block at (" + std::to_string(cr) +
                                    "," + std::to_string(cc) + ")");
              b.children.push_back(ci * lo.grid_cols + cj);
            }
        }
        net.layers[l].blocks.push_back(std::move(b));
      }
  }
  net.reset_context();
  net.validate();
  return net;
}

namespace {

bool is_zero(const Vector& v) { return v.size() == 0 || v.isZero(0.0); }

// Member patch corners of a bottom-layer block.
std::vector<std::pair<int, int>> member_corners(const Topology& topo,
                                                const Block& block) {
  const LayerTopology& lt = topo.layers[0];
  std::vector<std::pair<int, int>> out;
  out.reserve(static_cast<std::size_t>(lt.group_rows) * lt.group_cols);
  for (int gi = 0; gi < lt.group_rows; ++gi)
    for (int gj = 0; gj < lt.group_cols; ++gj)
      out.emplace_back(block.row + gi * lt.child_stride,
                       block.col + gj * lt.child_stride);
  return out;
}

GroupFrame patch_members(const Topology& topo, const Block& block,
                         const Matrix& frame) {
  const int ps = topo.patch_size;
  GroupFrame members;
  for (const auto& [pr, pc] : member_corners(topo, block)) {
    Vector v(ps * ps);
    for (int r = 0; r < ps; ++r)
      for (int c = 0; c < ps; ++c) v(r * ps + c) = frame(pr + r, pc + c);
    members.push_back(std::move(v));
  }
  return members;
}

}  // namespace

std::vector<std::vector<Vector>> top_down_pass(const Network& net) {
  net.validate();
  if (!net.trained) throw StateError("top_down_pass: network is untrained");
  const int L = static_cast<int>(net.layers.size());

  std::vector<std::vector<Vector>> pred(L);
  for (int l = 0; l < L; ++l)
    pred[l].assign(net.layers[l].blocks.size(),
                   Vector::Zero(net.layers[l].params.D));

  // The top layer is biased toward its previous causes.
  for (std::size_t b = 0; b < net.layers[L - 1].blocks.size(); ++b)
    pred[L - 1][b] = net.context[L - 1][b].u_prev;

  for (int l = L - 1; l >= 1; --l) {
    const NetworkLayer& layer = net.layers[l];
    for (std::size_t b = 0; b < layer.blocks.size(); ++b) {
      const Block& block = layer.blocks[b];
      for (std::size_t n = 0; n < block.children.size(); ++n) {
        const Vector x_hat = predict_states(
            net.context[l][b].x_prev[n], layer.params.A, layer.params.B,
            pred[l][b], layer.hyper.lambda, layer.hyper.gamma0);
        pred[l - 1][static_cast<std::size_t>(block.children[n])] +=
            predict_causes(x_hat, layer.params.C);
      }
    }
  }
  return pred;
}

std::vector<LayerState> layer_forward(const NetworkLayer& layer,
                                      const std::vector<GroupFrame>& inputs,
                                      const std::vector<BlockContext>& context,
                                      const std::vector<Vector>& predictions) {
  if (inputs.size() != layer.blocks.size())
    throw DimensionError("layer_forward: one input group per block required");
  if (context.size() != layer.blocks.size())
    throw StateError("layer_forward: one context per block required");
  if (!predictions.empty() && predictions.size() != layer.blocks.size())
    throw DimensionError("layer_forward: prediction count mismatch");

  std::vector<LayerState> states;
  states.reserve(layer.blocks.size());
  for (std::size_t b = 0; b < layer.blocks.size(); ++b) {
    const Vector* u_hat = nullptr;
    if (!predictions.empty() && !is_zero(predictions[b])) u_hat = &predictions[b];
    states.push_back(joint_infer(inputs[b], context[b].x_prev, layer.params,
                                 layer.hyper, u_hat));
  }
  return states;
}

std::vector<std::vector<LayerState>> infer_frame(Network& net, const Matrix& frame,
                                                 bool use_top_down) {
  net.validate();
  if (!net.trained) throw StateError("infer_frame: network is untrained");
  if (frame.rows() != net.topology.frame_rows ||
      frame.cols() != net.topology.frame_cols)
    throw DimensionError("infer_frame: frame shape mismatch");

  const int L = static_cast<int>(net.layers.size());
  std::vector<std::vector<Vector>> pred;
  if (use_top_down) pred = top_down_pass(net);

  std::vector<std::vector<LayerState>> result(L);
  std::vector<Vector> lower_causes;
  for (int l = 0; l < L; ++l) {
    const NetworkLayer& layer = net.layers[l];
    std::vector<GroupFrame> inputs;
    inputs.reserve(layer.blocks.size());
    for (const Block& block : layer.blocks) {
      if (l == 0) {
        inputs.push_back(patch_members(net.topology, block, frame));
      } else {
        GroupFrame members;
        members.reserve(block.children.size());
        for (int child : block.children)
          members.push_back(lower_causes[static_cast<std::size_t>(child)]);
        inputs.push_back(std::move(members));
      }
    }
    try {
      result[l] = layer_forward(layer, inputs, net.context[l],
                                use_top_down ? pred[l] : std::vector<Vector>{});
    } catch (const InferenceError& e) {
      throw InferenceError("layer " + std::to_string(l) + ": " + e.what(), l,
                           e.member);
    }
    lower_causes.clear();
    for (const LayerState& st : result[l]) lower_causes.push_back(st.u);
  }

  for (int l = 0; l < L; ++l)
    for (std::size_t b = 0; b < result[l].size(); ++b) {
      net.context[l][b].x_prev = result[l][b].x;
      net.context[l][b].u_prev = result[l][b].u;
    }
  return result;
}

Matrix infer_sequence(Network& net, const Video& video, bool use_top_down) {
  net.validate();
  if (!net.trained) throw StateError("infer_sequence: network is untrained");
  video.validate();
  net.reset_context();

  const NetworkLayer& top = net.layers.back();
  const Index width = top.params.D * static_cast<Index>(top.blocks.size());
  Matrix causes(static_cast<Index>(video.frames.size()), width);
  for (std::size_t t = 0; t < video.frames.size(); ++t) {
    const auto result = infer_frame(net, video.frames[t], use_top_down);
    const auto& top_states = result.back();
    for (std::size_t b = 0; b < top_states.size(); ++b)
      causes.row(static_cast<Index>(t))
          .segment(static_cast<Index>(b) * top.params.D, top.params.D) =
          top_states[b].u.transpose();
  }
  return causes;
}

Network train_network(const Video& video, const Topology& topology,
                      const std::vector<LayerDims>& dims,
                      const std::vector<HyperParams>& hypers, std::uint64_t seed,
                      std::ostream* log) {
  video.validate();
  if (video.frames.empty()) throw TrainingError("train_network: empty video");
  if (video.rows != topology.frame_rows || video.cols != topology.frame_cols)
    throw DimensionError("train_network: video shape does not match topology");

  Network net = build_network(topology, dims, hypers, seed);
  const int L = topology.layer_count();
  const std::size_t T = video.frames.size();

  // causes[b][t] for the layer just trained; inputs for the next one.
  std::vector<std::vector<Vector>> causes;

  for (int l = 0; l < L; ++l) {
    const NetworkLayer& layer = net.layers[l];
    std::vector<GroupSequence> streams;
    streams.reserve(layer.blocks.size());
    for (const Block& block : layer.blocks) {
      GroupSequence stream;
      stream.reserve(T);
      for (std::size_t t = 0; t < T; ++t) {
        if (l == 0) {
          stream.push_back(patch_members(topology, block, video.frames[t]));
        } else {
          GroupFrame members;
          members.reserve(block.children.size());
          for (int child : block.children)
            members.push_back(causes[static_cast<std::size_t>(child)][t]);
          stream.push_back(std::move(members));
        }
      }
      streams.push_back(std::move(stream));
    }

    if (log) (*log) << "# layer " << l << '\n';
    try {
      net.layers[l].params =
          train_layer(streams, dims[static_cast<std::size_t>(l)],
                      hypers[static_cast<std::size_t>(l)], split_seed(seed, 100 + l),
                      log);
    } catch (const TrainingError& e) {
      throw TrainingError("layer " + std::to_string(l) + ": " + e.what(),
                          e.timestep);
    }

    if (l + 1 < L) {
      // Freeze the layer and infer its cause sequences for the next one.
      causes.assign(layer.blocks.size(), {});
      for (std::size_t b = 0; b < layer.blocks.size(); ++b) {
        std::vector<Vector> x_prev(static_cast<std::size_t>(layer.params.N),
                                   Vector::Zero(layer.params.K));
        causes[b].reserve(T);
        for (std::size_t t = 0; t < T; ++t) {
          LayerState st;
          try {
            st = joint_infer(streams[b][t], x_prev, net.layers[l].params,
                             layer.hyper);
          } catch (const InferenceError& e) {
            throw TrainingError("layer " + std::to_string(l) +
                                    ": cause pass failed at timestep " +
                                    std::to_string(t) + ": " + e.what(),
                                static_cast<long>(t));
          }
          causes[b].push_back(st.u);
          x_prev = st.x;
        }
      }
    }
  }

  net.trained = true;
  net.reset_context();
  return net;
}

namespace {

// Unnormalised pixel field of each cause unit, built bottom-up.
std::vector<Matrix> raw_fields(const Network& net, int layer) {
  const Topology& topo = net.topology;
  std::vector<Matrix> below;
  for (int l = 0; l <= layer; ++l) {
    const LayerParams& p = net.layers[l].params;
    const LayerTopology& lt = topo.layers[l];
    const int ps = topo.patch_size;
    const int sr = topo.span_rows(l);
    const int sc = topo.span_cols(l);
    std::vector<Matrix> fields(static_cast<std::size_t>(p.D));
    for (Index d = 0; d < p.D; ++d) {
      const Vector v = p.C * p.B.col(d).cwiseAbs();
      Matrix child(l == 0 ? ps : topo.span_rows(l - 1),
                   l == 0 ? ps : topo.span_cols(l - 1));
      if (l == 0) {
        for (int r = 0; r < ps; ++r)
          for (int c = 0; c < ps; ++c) child(r, c) = v(r * ps + c);
      } else {
        child.setZero();
        for (Index j = 0; j < v.size(); ++j)
          child += v(j) * below[static_cast<std::size_t>(j)];
      }
      Matrix canvas = Matrix::Zero(sr, sc);
      for (int gi = 0; gi < lt.group_rows; ++gi)
        for (int gj = 0; gj < lt.group_cols; ++gj)
          canvas.block(gi * lt.child_stride, gj * lt.child_stride, child.rows(),
                       child.cols()) += child;
      fields[static_cast<std::size_t>(d)] = std::move(canvas);
    }
    below = std::move(fields);
  }
  return below;
}

}  // namespace

Matrix receptive_field(const Network& net, int layer, int unit) {
  net.validate();
  if (layer < 0 || layer >= static_cast<int>(net.layers.size()))
    throw IndexError("receptive_field: layer out of range");
  const Index D = net.layers[static_cast<std::size_t>(layer)].params.D;
  if (unit < 0 || unit >= D) throw IndexError("receptive_field: unit out of range");

  const Matrix raw = raw_fields(net, layer)[static_cast<std::size_t>(unit)];
  const Real lo = raw.minCoeff();
  const Real hi = raw.maxCoeff();
  if (hi - lo <= 0) return Matrix::Zero(raw.rows(), raw.cols());
  return (raw.array() - lo) / (hi - lo);
}

void save_receptive_fields_pgm(const Network& net, int layer,
                               const std::vector<int>& units,
                               const std::string& dir) {
  std::filesystem::create_directories(dir);
  for (int unit : units) {
    const Matrix rf = receptive_field(net, layer, unit);
    char name[64];
    std::snprintf(name, sizeof(name), "rf_L%d_U%d.pgm", layer + 1, unit);
    const std::filesystem::path path = std::filesystem::path(dir) / name;
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("save_receptive_fields_pgm: cannot open " + path.string());
    os << "P5\n" << rf.cols() << ' ' << rf.rows() << "\n255\n";
    for (Index r = 0; r < rf.rows(); ++r)
      for (Index c = 0; c < rf.cols(); ++c) {
        const unsigned char px =
            static_cast<unsigned char>(std::lround(255.0 * rf(r, c)));
        os.write(reinterpret_cast<const char*>(&px), 1);
      }
    if (!os) throw IoError("save_receptive_fields_pgm: write failed for " +
                           path.string());
  }
}

}  // namespace dpcn
