#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "dpcn/data.hpp"
#include "dpcn/types.hpp"

namespace dpcn {

// Grouping geometry of one layer, bottom layer first. A block pools a
// group_rows x group_cols grid of children (patches for the bottom
// layer, blocks of the layer below otherwise) whose pixel corners are
// child_stride apart. Blocks themselves sit on a grid_rows x grid_cols
// grid with corners block_stride apart.
struct LayerTopology {
  int group_rows = 1;
  int group_cols = 1;
  int child_stride = 0;
  int grid_rows = 1;
  int grid_cols = 1;
  int block_stride = 0;
};

struct Topology {
  int frame_rows = 0;
  int frame_cols = 0;
  int patch_size = 0;
  std::vector<LayerTopology> layers;

  int layer_count() const { return static_cast<int>(layers.size()); }
  // Pixel extent of the field one layer-l block sees (0-based layer).
  int span_rows(int layer) const;
  int span_cols(int layer) const;
  void validate() const;
};

// children index into the layer below; empty for the bottom layer,
// whose members are patches at the group offsets from (row, col).
struct Block {
  int row = 0;
  int col = 0;
  std::vector<int> children;
};

struct NetworkLayer {
  LayerParams params;
  HyperParams hyper;
  std::vector<Block> blocks;
};

// Previous-frame inference results of one block.
struct BlockContext {
  std::vector<Vector> x_prev;
  Vector u_prev;
};

struct Network {
  Topology topology;
  std::vector<NetworkLayer> layers;
  std::vector<std::vector<BlockContext>> context;  // [layer][block]
  bool trained = false;

  void reset_context();
  void validate() const;
};

// Lays out blocks from the topology, wires children, checks the
// dimension chain (P of layer l = D of layer l-1, N = group size) and
// allocates zeroed context.
Network build_network(const Topology& topology, const std::vector<LayerDims>& dims,
                      const std::vector<HyperParams>& hypers, std::uint64_t seed);

// Cause predictions for every block of every layer, from the stored
// context: the top layer carries its previous causes, lower layers
// receive C x_hat from their parent blocks (overlapping parents sum).
std::vector<std::vector<Vector>> top_down_pass(const Network& net);

// Joint inference of one layer given its per-block member inputs and
// optional per-block cause predictions (empty vector = bottom-up; an
// all-zero prediction is treated the same). This is the complete
// dependency set of a layer's output.
std::vector<LayerState> layer_forward(const NetworkLayer& layer,
                                      const std::vector<GroupFrame>& inputs,
                                      const std::vector<BlockContext>& context,
                                      const std::vector<Vector>& predictions);

// One frame of hierarchical inference, bottom layer first; updates the
// stored context. With use_top_down the predictions come from
// top_down_pass before the sweep.
std::vector<std::vector<LayerState>> infer_frame(Network& net, const Matrix& frame,
                                                 bool use_top_down);

// Resets the context, then streams the video through infer_frame.
// Row t holds the concatenated top-layer causes at frame t.
Matrix infer_sequence(Network& net, const Video& video, bool use_top_down);

// Greedy layer-by-layer training: fit the bottom layer on patch
// groups, freeze it, infer its causes over the video, train the next
// layer on those, and so on.
Network train_network(const Video& video, const Topology& topology,
                      const std::vector<LayerDims>& dims,
                      const std::vector<HyperParams>& hypers, std::uint64_t seed,
                      std::ostream* log = nullptr);

// Pixel-domain receptive field of one cause unit, min-max normalised
// to [0,1]. layer is 0-based.
Matrix receptive_field(const Network& net, int layer, int unit);

// 8-bit PGM export, one file per unit, named rf_L{layer+1}_U{unit}.pgm.
void save_receptive_fields_pgm(const Network& net, int layer,
                               const std::vector<int>& units,
                               const std::string& dir);

}  // namespace dpcn
