#include "tbn/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "tbn/tensor.hpp"

namespace tbn {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Pair-specific colors; within a pair the two blobs differ so the pose of the
// pair (which blob is where) is visible in every frame.
constexpr double kPalette[2][2][3] = {
    {{1.0, 0.3, 0.1}, {0.1, 0.3, 1.0}},
    {{1.0, 0.9, 0.1}, {0.1, 1.0, 0.5}},
};

}  // namespace

Trajectory make_trajectory(const MotionProgram& prog, Rng& rng) {
  if (prog.class_id < 0 || prog.class_id > 3)
    throw ConfigError(detail::cat("class id ", prog.class_id, " out of range"));
  if (prog.t_raw < 2) throw ConfigError("need at least 2 frames");
  int pair = prog.class_id / 2;
  double theta = rng.uniform(0.0, 2.0 * kPi);
  double ux = std::cos(theta), uy = std::sin(theta);
  double c0x = rng.uniform(prog.margin, prog.width - prog.margin);
  double c0y = rng.uniform(prog.margin, prog.height - prog.margin);
  Trajectory traj;
  traj.ax.resize(prog.t_raw);
  traj.ay.resize(prog.t_raw);
  traj.bx.resize(prog.t_raw);
  traj.by.resize(prog.t_raw);
  if (pair == 0) {
    // Separation shrinks linearly over the whole video; class 1 reverses it.
    // Same speed both directions, so only the order of poses distinguishes
    // the two classes, never any single frame.
    double r_hi = rng.uniform(12.0, 14.0);
    double r_lo = rng.uniform(2.5, 3.5);
    for (int t = 0; t < prog.t_raw; ++t) {
      double r = r_hi + (r_lo - r_hi) * t / (prog.t_raw - 1);
      traj.ax[t] = c0x - 0.5 * r * ux;
      traj.ay[t] = c0y - 0.5 * r * uy;
      traj.bx[t] = c0x + 0.5 * r * ux;
      traj.by[t] = c0y + 0.5 * r * uy;
    }
    if (prog.class_id == 1) return reverse_trajectory(traj);
  } else {
    // A rigid pair of blobs on opposite ends of a rotating rod, one full
    // revolution per video. Class 2 plays the rotation in order; class 3
    // visits the same poses in a random frame order, which keeps every
    // per-frame statistic identical and destroys adjacent-frame overlap.
    double d = rng.uniform(6.0, 7.5);
    double phase0 = rng.uniform(0.0, 2.0 * kPi);
    std::vector<int> order(prog.t_raw);
    for (int t = 0; t < prog.t_raw; ++t) order[t] = t;
    if (prog.class_id == 3)
      for (int t = prog.t_raw - 1; t > 0; --t)
        std::swap(order[t], order[rng.uniform_int(t + 1)]);
    for (int t = 0; t < prog.t_raw; ++t) {
      double ang = phase0 + 2.0 * kPi * order[t] / prog.t_raw;
      double rx = std::cos(theta + ang), ry = std::sin(theta + ang);
      traj.ax[t] = c0x - 0.5 * d * rx;
      traj.ay[t] = c0y - 0.5 * d * ry;
      traj.bx[t] = c0x + 0.5 * d * rx;
      traj.by[t] = c0y + 0.5 * d * ry;
    }
  }
  return traj;
}

Trajectory reverse_trajectory(const Trajectory& traj) {
  Trajectory out = traj;
  std::reverse(out.ax.begin(), out.ax.end());
  std::reverse(out.ay.begin(), out.ay.end());
  std::reverse(out.bx.begin(), out.bx.end());
  std::reverse(out.by.begin(), out.by.end());
  return out;
}

int classify_trajectory(const Trajectory& traj) {
  int64_t n = traj.frames();
  if (n < 2) throw ContractError("trajectory too short to classify");
  // Pair test: pair-A separation sweeps a wide range; pair-B rods are rigid.
  double r_min = 1e300, r_max = 0.0;
  for (int64_t t = 0; t < n; ++t) {
    double r = std::hypot(traj.bx[t] - traj.ax[t], traj.by[t] - traj.ay[t]);
    r_min = std::min(r_min, r);
    r_max = std::max(r_max, r);
  }
  if (r_max - r_min > 2.0) {
    // Pair A: shrinking steps outnumber growing steps iff converging.
    int neg = 0, pos = 0;
    double prev = std::hypot(traj.bx[0] - traj.ax[0], traj.by[0] - traj.ay[0]);
    for (int64_t t = 1; t < n; ++t) {
      double r = std::hypot(traj.bx[t] - traj.ax[t], traj.by[t] - traj.ay[t]);
      if (r < prev) ++neg;
      else if (r > prev) ++pos;
      prev = r;
    }
    return neg > pos ? 0 : 1;
  }
  // Pair B: the orderly glide moves pi*d/n per frame along the orbit; random
  // pose order jumps by the mean chord, about 0.64*d. Split the difference.
  double d = 0.5 * (r_min + r_max);
  double glide = kPi * d / static_cast<double>(n);
  double threshold = 0.5 * (glide + 0.64 * d);
  double step_sum = 0.0;
  for (int64_t t = 1; t < n; ++t)
    step_sum += std::hypot(traj.ax[t] - traj.ax[t - 1],
                           traj.ay[t] - traj.ay[t - 1]);
  return step_sum / (n - 1) < threshold ? 2 : 3;
}

SyntheticVideo generate_video(const MotionProgram& prog, uint64_t seed) {
  Rng rng(seed);
  Trajectory traj = make_trajectory(prog, rng);
  int pair = prog.class_id / 2;
  double amp_a = rng.uniform(0.75, 1.0);
  double sigma_a = rng.uniform(1.6, 2.0);
  double amp_b = rng.uniform(0.75, 1.0);
  double sigma_b = rng.uniform(1.6, 2.0);
  SyntheticVideo v;
  v.label = prog.class_id;
  v.seed = seed;
  v.t = prog.t_raw;
  v.c = prog.channels;
  v.h = prog.height;
  v.w = prog.width;
  v.pix.assign(static_cast<size_t>(v.t) * v.c * v.h * v.w, 0);
  std::vector<double> frame(static_cast<size_t>(v.c) * v.h * v.w);
  auto splat = [&](double cx, double cy, double amp, double sigma,
                   const double* color) {
    double inv = 1.0 / (2.0 * sigma * sigma);
    int x0 = std::max<int>(0, static_cast<int>(std::floor(cx - 4 * sigma)));
    int x1 = std::min<int>(v.w - 1, static_cast<int>(std::ceil(cx + 4 * sigma)));
    int y0 = std::max<int>(0, static_cast<int>(std::floor(cy - 4 * sigma)));
    int y1 = std::min<int>(v.h - 1, static_cast<int>(std::ceil(cy + 4 * sigma)));
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) {
        double g = amp * std::exp(-((x - cx) * (x - cx) + (y - cy) * (y - cy)) * inv);
        for (int ch = 0; ch < v.c; ++ch)
          frame[(static_cast<size_t>(ch) * v.h + y) * v.w + x] +=
              g * color[std::min(ch, 2)];
      }
  };
  for (int t = 0; t < v.t; ++t) {
    std::fill(frame.begin(), frame.end(), 0.0);
    splat(traj.ax[t], traj.ay[t], amp_a, sigma_a, kPalette[pair][0]);
    splat(traj.bx[t], traj.by[t], amp_b, sigma_b, kPalette[pair][1]);
    uint8_t* dst = v.pix.data() + static_cast<size_t>(t) * v.c * v.h * v.w;
    for (size_t i = 0; i < frame.size(); ++i) {
      double val = frame[i] + rng.uniform(0.0, prog.noise);
      val = std::clamp(val, 0.0, 1.0);
      dst[i] = static_cast<uint8_t>(std::lround(val * 255.0));
    }
  }
  return v;
}

VideoDataset generate_dataset(const MotionProgram& base, int classes, int count,
                              uint64_t seed) {
  if (classes != 2 && classes != 4)
    throw ConfigError(detail::cat("classes must be 2 or 4, got ", classes));
  if (count < 0) throw ConfigError("negative video count");
  VideoDataset ds;
  ds.classes = classes;
  ds.videos.reserve(count);
  for (int i = 0; i < count; ++i) {
    MotionProgram prog = base;
    prog.class_id = i % classes;
    ds.videos.push_back(generate_video(prog, mix64(seed, i)));
  }
  return ds;
}

std::vector<std::string> class_manifest(int classes) {
  std::vector<std::string> names = {
      "pair A: blobs drift steadily together",
      "pair A reversed: blobs drift steadily apart",
      "pair B: blob pair glides around one rotation in order",
      "pair B scrambled: the same rotation poses in random order",
  };
  if (classes < 1 || classes > static_cast<int>(names.size()))
    throw ConfigError(detail::cat("no manifest for ", classes, " classes"));
  names.resize(classes);
  return names;
}

// ---------------------------------------------------------------------------
// File container

namespace {

constexpr char kVidMagic[8] = {'T', 'B', 'N', 'V', 'I', 'D', '1', '\0'};

struct ByteReader {
  std::ifstream f;
  std::string path;
  uint64_t off = 0;

  void read(void* dst, size_t n, const char* what) {
    f.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (static_cast<size_t>(f.gcount()) != n)
      throw FormatError(detail::cat("dataset '", path, "': truncated ", what,
                                    " at byte ", off));
    off += n;
  }
  uint32_t u32(const char* what) {
    uint32_t v = 0;
    read(&v, 4, what);
    return v;
  }
  uint64_t u64(const char* what) {
    uint64_t v = 0;
    read(&v, 8, what);
    return v;
  }
};

}  // namespace

void write_dataset(const VideoDataset& ds, const std::string& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw FormatError(detail::cat("cannot open '", path, "' for writing"));
  f.write(kVidMagic, 8);
  uint32_t count = static_cast<uint32_t>(ds.videos.size());
  f.write(reinterpret_cast<const char*>(&count), 4);
  std::vector<float> buf;
  for (const auto& v : ds.videos) {
    uint32_t rec[5] = {static_cast<uint32_t>(v.label),
                       static_cast<uint32_t>(v.t), static_cast<uint32_t>(v.c),
                       static_cast<uint32_t>(v.h), static_cast<uint32_t>(v.w)};
    f.write(reinterpret_cast<const char*>(rec), 20);
    buf.resize(v.pix.size());
    for (size_t i = 0; i < buf.size(); ++i)
      buf[i] = v.pix[i] * (1.0f / 255.0f);
    f.write(reinterpret_cast<const char*>(buf.data()), 4 * buf.size());
  }
  if (!f) throw FormatError(detail::cat("short write to '", path, "'"));
}

VideoDataset read_dataset(const std::string& path) {
  ByteReader r;
  r.path = path;
  r.f.open(path, std::ios::binary);
  if (!r.f) throw FormatError(detail::cat("cannot open '", path, "'"));
  char magic[8];
  r.read(magic, 8, "magic");
  if (std::memcmp(magic, kVidMagic, 8) != 0)
    throw FormatError(detail::cat("dataset '", path, "': bad magic at byte 0"));
  VideoDataset ds;
  uint32_t count = r.u32("video count");
  ds.videos.reserve(count);
  std::vector<float> buf;
  for (uint32_t i = 0; i < count; ++i) {
    SyntheticVideo v;
    uint64_t rec_off = r.off;
    v.label = static_cast<int>(r.u32("video label"));
    uint32_t t = r.u32("frame count"), c = r.u32("channel count");
    uint32_t h = r.u32("height"), w = r.u32("width");
    if (v.label < 0 || v.label > 1000000)
      throw FormatError(detail::cat("dataset '", path,
                                    "': label out of range at byte ", rec_off));
    if (t < 1 || c < 1 || h < 1 || w < 1 || t > 1000000 || c > 1000000 ||
        h > 100000 || w > 100000)
      throw FormatError(detail::cat("dataset '", path,
                                    "': bad dimensions at byte ", rec_off + 4));
    v.t = t;
    v.c = c;
    v.h = h;
    v.w = w;
    buf.resize(static_cast<size_t>(t) * c * h * w);
    r.read(buf.data(), 4 * buf.size(), "pixel data");
    v.pix.resize(buf.size());
    for (size_t j = 0; j < buf.size(); ++j) {
      float val = std::clamp(buf[j], 0.0f, 1.0f);
      v.pix[j] = static_cast<uint8_t>(std::lround(val * 255.0f));
    }
    ds.classes = std::max(ds.classes, v.label + 1);
    ds.videos.push_back(std::move(v));
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Clip sampling and augmentation

Clip sample_clip_at(const SyntheticVideo& v, int clip_len, int stride,
                    int start) {
  if (clip_len < 1 || stride < 1)
    throw ContractError("clip_len and stride must be positive");
  int span = (clip_len - 1) * stride + 1;
  if (start < 0 || start + span > v.t)
    throw IndexError(detail::cat("clip start ", start, " with span ", span,
                                 " exceeds ", v.t, " frames"));
  Clip clip;
  clip.t = clip_len;
  clip.c = v.c;
  clip.h = v.h;
  clip.w = v.w;
  clip.data.resize(static_cast<size_t>(clip_len) * v.c * v.h * v.w);
  size_t frame = static_cast<size_t>(v.c) * v.h * v.w;
  for (int i = 0; i < clip_len; ++i) {
    const uint8_t* src = v.pix.data() + (start + static_cast<size_t>(i) * stride) * frame;
    float* dst = clip.data.data() + i * frame;
    for (size_t j = 0; j < frame; ++j) dst[j] = src[j] * (1.0f / 255.0f);
  }
  return clip;
}

Clip sample_clip(const SyntheticVideo& v, int clip_len, int stride, Rng& rng) {
  int span = (clip_len - 1) * stride + 1;
  if (span > v.t)
    throw ContractError(detail::cat("video has ", v.t, " frames, clip needs ", span));
  int start = static_cast<int>(rng.uniform_int(v.t - span + 1));
  return sample_clip_at(v, clip_len, stride, start);
}

Clip crop_region(const Clip& clip, int y0, int x0, int crop, bool flip) {
  if (crop < 1 || y0 < 0 || x0 < 0 || y0 + crop > clip.h || x0 + crop > clip.w)
    throw IndexError(detail::cat("crop ", crop, "x", crop, " at (", y0, ",", x0,
                                 ") exceeds ", clip.h, "x", clip.w));
  Clip out;
  out.t = clip.t;
  out.c = clip.c;
  out.h = crop;
  out.w = crop;
  out.data.resize(static_cast<size_t>(clip.t) * clip.c * crop * crop);
  for (int64_t ti = 0; ti < clip.t; ++ti)
    for (int64_t ci = 0; ci < clip.c; ++ci)
      for (int y = 0; y < crop; ++y)
        for (int x = 0; x < crop; ++x)
          out.at(ti, ci, y, x) =
              clip.at(ti, ci, y0 + y, flip ? x0 + crop - 1 - x : x0 + x);
  return out;
}

Clip augment(const Clip& clip, AugmentMode mode, int crop, uint64_t seed) {
  if (crop > clip.h || crop > clip.w)
    throw ContractError(detail::cat("crop ", crop, " larger than frame ", clip.h,
                                    "x", clip.w));
  if (mode == AugmentMode::kEval)
    return crop_region(clip, static_cast<int>((clip.h - crop) / 2),
                       static_cast<int>((clip.w - crop) / 2), crop, false);
  Rng rng(seed);
  int y0 = static_cast<int>(rng.uniform_int(clip.h - crop + 1));
  int x0 = static_cast<int>(rng.uniform_int(clip.w - crop + 1));
  bool flip = rng.bernoulli(0.5);
  return crop_region(clip, y0, x0, crop, flip);
}

}  // namespace tbn
