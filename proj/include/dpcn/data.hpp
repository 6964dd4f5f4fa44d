#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "dpcn/types.hpp"

namespace dpcn {

struct Video {
  int rows = 0;
  int cols = 0;
  std::vector<Matrix> frames;
  std::vector<std::uint32_t> labels;  // empty or one per frame

  bool has_labels() const { return !labels.empty(); }
  void validate() const;
};

constexpr int kGlyphSide = 9;

// 9x9 binary mask of a shape kind (0 square, 1 triangle, 2 disc).
Matrix glyph_mask(int kind);

// Per-frame object poses, kept so trajectories can be replayed.
struct ShapesTrace {
  // trace[frame][object] = {row, col, vrow, vcol}
  std::vector<std::array<std::array<int, 4>, 2>> poses;
};

// Video of bouncing shape pairs. Each entry of class_sequence selects a
// shape kind and yields frames_per_class frames of two such shapes
// moving with constant integer velocity, reflecting off walls and
// swapping velocities when their bounding boxes would overlap. Labels
// hold the class index per frame.
Video generate_shapes_video(int shape_kinds, int frame_rows, int frame_cols,
                            int frames_per_class,
                            const std::vector<int>& class_sequence,
                            std::uint64_t seed, ShapesTrace* trace = nullptr);

// Pastes Poisson(mean)-many uniformly placed random glyphs per frame by
// max composition. mean = 0 leaves the video untouched. Labels pass
// through unchanged.
Video add_structured_noise(const Video& video, Real mean, std::uint64_t seed);

// Subtracts a Gaussian-weighted local mean and divides by the local
// standard deviation floored at its own mean over the frame.
Video contrast_normalize(const Video& video, int radius = 4);

// The row-major patch origins of a group anchored at (origin_r, origin_c):
// group_rows x group_cols patches of side patch_size, child corners
// spaced by stride pixels.
struct PatchGroupSequence {
  int patch_size = 0;
  int group_rows = 0;
  int group_cols = 0;
  int stride = 0;
  int origin_r = 0;
  int origin_c = 0;
  GroupSequence steps;  // time -> member -> vectorised patch (row-major)
};

PatchGroupSequence extract_patch_groups(const Video& video, int patch_size,
                                        int stride, int group_rows,
                                        int group_cols, int origin_r,
                                        int origin_c);

// DPCV container: "DPCV" magic, little-endian u32 width, height,
// frame count, label flag, float32 frame data (row-major, frame after
// frame), then u32 labels when the flag is set.
void save_video(const Video& video, const std::string& path);
Video load_video(const std::string& path);

// CSV with a "frame,label" header, one row per frame.
void save_labels_csv(const Video& video, const std::string& path);

}  // namespace dpcn
