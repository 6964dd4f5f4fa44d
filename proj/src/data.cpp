#include "dpcn/data.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <string>

#include "dpcn/rng.hpp"

namespace dpcn {

void Video::validate() const {
  if (rows <= 0 || cols <= 0) {
    if (!frames.empty()) throw DimensionError("Video: empty geometry with frames");
    return;
  }
  for (const Matrix& f : frames)
    if (f.rows() != rows || f.cols() != cols)
      throw DimensionError("Video: frame shape mismatch");
  if (!labels.empty() && labels.size() != frames.size())
    throw DimensionError("Video: label count mismatch");
}

Matrix glyph_mask(int kind) {
  const int s = kGlyphSide;
  Matrix m = Matrix::Zero(s, s);
  switch (kind) {
    case 0:  // square
      m.setOnes();
      break;
    case 1:  // filled triangle, apex at the top row, widening downward
      for (int r = 0; r < s; ++r) {
        const int half = r / 2;
        for (int c = 4 - half; c <= 4 + half; ++c) m(r, c) = 1.0;
      }
      break;
    case 2:  // disc
      for (int r = 0; r < s; ++r)
        for (int c = 0; c < s; ++c)
          if ((r - 4) * (r - 4) + (c - 4) * (c - 4) <= 18) m(r, c) = 1.0;
      break;
    default:
      throw ParameterError("glyph_mask: unknown shape kind " + std::to_string(kind));
  }
  return m;
}

namespace {

void paste_max(Matrix& frame, const Matrix& mask, int r0, int c0) {
  for (int r = 0; r < mask.rows(); ++r)
    for (int c = 0; c < mask.cols(); ++c)
      if (mask(r, c) > frame(r0 + r, c0 + c)) frame(r0 + r, c0 + c) = mask(r, c);
}

// One reflecting move along one axis; position stays in [0, limit].
void bounce(int& p, int& v, int limit) {
  p += v;
  if (p < 0) {
    p = -p;
    v = -v;
  }
  if (p > limit) {
    p = 2 * limit - p;
    v = -v;
  }
}

bool boxes_overlap(int r1, int c1, int r2, int c2) {
  return std::abs(r1 - r2) < kGlyphSide && std::abs(c1 - c2) < kGlyphSide;
}

}  // namespace

Video generate_shapes_video(int shape_kinds, int frame_rows, int frame_cols,
                            int frames_per_class,
                            const std::vector<int>& class_sequence,
                            std::uint64_t seed, ShapesTrace* trace) {
  if (shape_kinds < 1 || shape_kinds > 3)
    throw ParameterError("generate_shapes_video: shape_kinds must be in [1, 3]");
  if (frames_per_class <= 0)
    throw ParameterError("generate_shapes_video: frames_per_class must be > 0");
  if (frame_rows < 2 * kGlyphSide || frame_cols < 2 * kGlyphSide)
    throw GeometryError("generate_shapes_video: frame too small for two glyphs");
  for (int k : class_sequence)
    if (k < 0 || k >= shape_kinds)
      throw ParameterError("generate_shapes_video: class index out of range");

  auto rng = make_rng(seed);
  const int rmax = frame_rows - kGlyphSide;
  const int cmax = frame_cols - kGlyphSide;
  std::uniform_int_distribution<int> rpos(0, rmax);
  std::uniform_int_distribution<int> cpos(0, cmax);
  std::uniform_int_distribution<int> vel(0, 3);  // maps to {-2,-1,1,2}
  const int vmap[4] = {-2, -1, 1, 2};

  Video video;
  video.rows = frame_rows;
  video.cols = frame_cols;
  video.frames.reserve(class_sequence.size() * frames_per_class);
  if (trace) trace->poses.clear();

  for (int cls : class_sequence) {
    const Matrix mask = glyph_mask(cls);
    int r[2], c[2], vr[2], vc[2];
    do {
      for (int o = 0; o < 2; ++o) {
        r[o] = rpos(rng);
        c[o] = cpos(rng);
      }
    } while (boxes_overlap(r[0], c[0], r[1], c[1]));
    for (int o = 0; o < 2; ++o) {
      vr[o] = vmap[vel(rng)];
      vc[o] = vmap[vel(rng)];
    }

    for (int t = 0; t < frames_per_class; ++t) {
      Matrix frame = Matrix::Zero(frame_rows, frame_cols);
      for (int o = 0; o < 2; ++o) paste_max(frame, mask, r[o], c[o]);
      video.frames.push_back(std::move(frame));
      video.labels.push_back(static_cast<std::uint32_t>(cls));
      if (trace)
        trace->poses.push_back(
            {{{r[0], c[0], vr[0], vc[0]}, {r[1], c[1], vr[1], vc[1]}}});

      const int pr[2] = {r[0], r[1]}, pc[2] = {c[0], c[1]};
      for (int o = 0; o < 2; ++o) {
        bounce(r[o], vr[o], rmax);
        bounce(c[o], vc[o], cmax);
      }
      if (boxes_overlap(r[0], c[0], r[1], c[1])) {
        for (int o = 0; o < 2; ++o) {
          r[o] = pr[o];
          c[o] = pc[o];
        }
        std::swap(vr[0], vr[1]);
        std::swap(vc[0], vc[1]);
      }
    }
  }
  video.validate();
  return video;
}

Video add_structured_noise(const Video& video, Real mean, std::uint64_t seed) {
  video.validate();
  if (mean < 0) throw ParameterError("add_structured_noise: mean must be >= 0");
  if (mean == 0) return video;
  if (video.rows < kGlyphSide || video.cols < kGlyphSide)
    throw GeometryError("add_structured_noise: frame smaller than a glyph");

  auto rng = make_rng(seed);
  std::poisson_distribution<int> count(mean);
  std::uniform_int_distribution<int> kind(0, 2);
  std::uniform_int_distribution<int> rpos(0, video.rows - kGlyphSide);
  std::uniform_int_distribution<int> cpos(0, video.cols - kGlyphSide);

  Video out = video;
  for (Matrix& frame : out.frames) {
    const int k = count(rng);
    for (int i = 0; i < k; ++i)
      paste_max(frame, glyph_mask(kind(rng)), rpos(rng), cpos(rng));
  }
  return out;
}

Video contrast_normalize(const Video& video, int radius) {
  video.validate();
  if (radius <= 0) throw ParameterError("contrast_normalize: radius must be > 0");

  const int w = 2 * radius + 1;
  Matrix kernel(w, w);
  const Real sigma = radius / 2.0;
  for (int r = 0; r < w; ++r)
    for (int c = 0; c < w; ++c) {
      const Real dr = r - radius, dc = c - radius;
      kernel(r, c) = std::exp(-(dr * dr + dc * dc) / (2.0 * sigma * sigma));
    }

  Video out = video;
  for (std::size_t f = 0; f < video.frames.size(); ++f) {
    const Matrix& src = video.frames[f];
    Matrix mean(video.rows, video.cols), sd(video.rows, video.cols);
    for (int r = 0; r < video.rows; ++r)
      for (int c = 0; c < video.cols; ++c) {
        Real wsum = 0, m1 = 0, m2 = 0;
        const int r0 = std::max(0, r - radius), r1 = std::min(video.rows - 1, r + radius);
        const int c0 = std::max(0, c - radius), c1 = std::min(video.cols - 1, c + radius);
        for (int rr = r0; rr <= r1; ++rr)
          for (int cc = c0; cc <= c1; ++cc) {
            const Real kw = kernel(rr - r + radius, cc - c + radius);
            wsum += kw;
            m1 += kw * src(rr, cc);
            m2 += kw * src(rr, cc) * src(rr, cc);
          }
        m1 /= wsum;
        m2 /= wsum;
        mean(r, c) = m1;
        sd(r, c) = std::sqrt(std::max(0.0, m2 - m1 * m1));
      }
    const Real floor = sd.mean();
    Matrix& dst = out.frames[f];
    if (floor <= 0) {
      // Constant frame: nothing to divide by, only the mean comes off.
      dst = src - mean;
      continue;
    }
    for (int r = 0; r < video.rows; ++r)
      for (int c = 0; c < video.cols; ++c)
        dst(r, c) = (src(r, c) - mean(r, c)) / std::max(sd(r, c), floor);
  }
  return out;
}

PatchGroupSequence extract_patch_groups(const Video& video, int patch_size,
                                        int stride, int group_rows,
                                        int group_cols, int origin_r,
                                        int origin_c) {
  video.validate();
  if (patch_size <= 0 || stride <= 0 || group_rows <= 0 || group_cols <= 0)
    throw ParameterError("extract_patch_groups: sizes must be positive");
  const int span_r = patch_size + (group_rows - 1) * stride;
  const int span_c = patch_size + (group_cols - 1) * stride;
  if (origin_r < 0 || origin_c < 0 || origin_r + span_r > video.rows ||
      origin_c + span_c > video.cols)
    throw GeometryError("extract_patch_groups: group does not fit the frame");

  PatchGroupSequence seq;
  seq.patch_size = patch_size;
  seq.group_rows = group_rows;
  seq.group_cols = group_cols;
  seq.stride = stride;
  seq.origin_r = origin_r;
  seq.origin_c = origin_c;
  seq.steps.reserve(video.frames.size());

  for (const Matrix& frame : video.frames) {
    GroupFrame members;
    members.reserve(static_cast<std::size_t>(group_rows) * group_cols);
    for (int gr = 0; gr < group_rows; ++gr)
      for (int gc = 0; gc < group_cols; ++gc) {
        const int pr = origin_r + gr * stride;
        const int pc = origin_c + gc * stride;
        Vector v(patch_size * patch_size);
        for (int r = 0; r < patch_size; ++r)
          for (int c = 0; c < patch_size; ++c)
            v(r * patch_size + c) = frame(pr + r, pc + c);
        members.push_back(std::move(v));
      }
    seq.steps.push_back(std::move(members));
  }
  return seq;
}

namespace {

void write_u32(std::ofstream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::ifstream& is, std::size_t& offset) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw ParseError("unexpected end of DPCV header", offset);
  offset += 4;
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void save_video(const Video& video, const std::string& path) {
  video.validate();
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("save_video: cannot open " + path);
  os.write("DPCV", 4);
  write_u32(os, static_cast<std::uint32_t>(video.cols));
  write_u32(os, static_cast<std::uint32_t>(video.rows));
  write_u32(os, static_cast<std::uint32_t>(video.frames.size()));
  write_u32(os, video.has_labels() ? 1u : 0u);
  for (const Matrix& frame : video.frames)
    for (int r = 0; r < video.rows; ++r)
      for (int c = 0; c < video.cols; ++c) {
        const float px = static_cast<float>(frame(r, c));
        os.write(reinterpret_cast<const char*>(&px), sizeof(float));
      }
  if (video.has_labels())
    for (std::uint32_t lab : video.labels) write_u32(os, lab);
  if (!os) throw IoError("save_video: write failed for " + path);
}

Video load_video(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("load_video: cannot open " + path);
  std::size_t offset = 0;

  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "DPCV", 4) != 0)
    throw ParseError("bad DPCV magic", 0);
  offset = 4;

  Video video;
  const std::uint32_t width = read_u32(is, offset);
  const std::uint32_t height = read_u32(is, offset);
  const std::uint32_t count = read_u32(is, offset);
  const std::uint32_t flag = read_u32(is, offset);
  if (flag > 1) throw ParseError("bad DPCV label flag", offset - 4);
  if (width == 0 || height == 0)
    throw ParseError("bad DPCV frame geometry", 8);
  video.cols = static_cast<int>(width);
  video.rows = static_cast<int>(height);

  video.frames.reserve(count);
  std::vector<float> buf(static_cast<std::size_t>(width) * height);
  for (std::uint32_t f = 0; f < count; ++f) {
    is.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!is) throw ParseError("unexpected end of DPCV frame data", offset);
    offset += buf.size() * sizeof(float);
    Matrix frame(video.rows, video.cols);
    for (int r = 0; r < video.rows; ++r)
      for (int c = 0; c < video.cols; ++c)
        frame(r, c) = buf[static_cast<std::size_t>(r) * width + c];
    video.frames.push_back(std::move(frame));
  }
  if (flag == 1) {
    video.labels.reserve(count);
    for (std::uint32_t f = 0; f < count; ++f) video.labels.push_back(read_u32(is, offset));
  }
  video.validate();
  return video;
}

void save_labels_csv(const Video& video, const std::string& path) {
  video.validate();
  if (!video.has_labels()) throw StateError("save_labels_csv: video has no labels");
  std::ofstream os(path);
  if (!os) throw IoError("save_labels_csv: cannot open " + path);
  os << "frame,label\n";
  for (std::size_t f = 0; f < video.labels.size(); ++f)
    os << f << ',' << video.labels[f] << '\n';
  if (!os) throw IoError("save_labels_csv: write failed for " + path);
}

}  // namespace dpcn
