#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tbn/errors.hpp"
#include "tbn/rng.hpp"

namespace tbn {

// Four-class synthetic motion task. Classes form two pairs that differ only
// in frame ORDER: within a pair, the two classes visit the same set of poses,
// so any order-insensitive statistic (time-averaged frames, pooled per-frame
// features) carries no within-pair signal. Colors are pair-specific, so
// telling pairs apart is easy.
//
//   0: two blobs drift steadily together (separation shrinks all video long)
//   1: time reversal of 0 (the blobs drift steadily apart)
//   2: a rigid blob pair glides smoothly around one full rotation
//   3: the same rotation poses as 2, visited in a scrambled frame order
//
// Pair A (0/1) rewards reading which end of a clip has the blobs closer:
// adjacent-frame products pooled over time keep exactly that endpoint
// difference, while per-frame pooling sees identical value multisets for the
// two directions. Pair B (2/3) rewards adjacent-frame overlap: consecutive
// frames nearly coincide for the glide and are nearly independent for the
// scramble, yet each class 3 video is literally a frame permutation of a
// class 2 style video, so per-frame statistics match exactly.
//
// All motion parameters are invariant under horizontal flips, so flip
// augmentation never changes a label.

struct MotionProgram {
  int class_id = 0;
  int t_raw = 64;       // rendered frames per video
  int channels = 3;
  int height = 37;
  int width = 49;
  double noise = 0.03;  // uniform per-pixel noise amplitude
  double margin = 16.0; // blob-pair center kept this far from frame edges
};

// Blob centers per frame, in pixel coordinates (x right, y down).
struct Trajectory {
  std::vector<double> ax, ay, bx, by;
  int64_t frames() const { return static_cast<int64_t>(ax.size()); }
};

Trajectory make_trajectory(const MotionProgram& prog, Rng& rng);
Trajectory reverse_trajectory(const Trajectory& traj);

// Analytic label from blob centers alone. Ground truth for generated videos:
// generate_video(prog, seed).label always matches it. Reversing a trajectory
// flips the label within pair A (0 <-> 1) and preserves it within pair B
// (a reversed glide is still a glide, a reversed scramble still a scramble).
int classify_trajectory(const Trajectory& traj);

struct SyntheticVideo {
  int label = 0;
  uint64_t seed = 0;  // generation metadata; not part of the file format
  int t = 0, c = 0, h = 0, w = 0;
  std::vector<uint8_t> pix;  // (t,c,h,w), value = round(intensity*255)

  float at(int64_t ti, int64_t ci, int64_t y, int64_t x) const {
    return pix[((ti * c + ci) * h + y) * w + x] * (1.0f / 255.0f);
  }
};

SyntheticVideo generate_video(const MotionProgram& prog, uint64_t seed);

struct VideoDataset {
  int classes = 0;
  std::vector<SyntheticVideo> videos;
};

// Video i gets class i % classes and seed mix64(seed, i).
VideoDataset generate_dataset(const MotionProgram& base, int classes, int count,
                              uint64_t seed);

std::vector<std::string> class_manifest(int classes);

// Binary container: magic "TBNVID1\0", u32 video count, then one record per
// video {u32 label, u32 t, u32 c, u32 h, u32 w, t*c*h*w little-endian f32
// pixels}. Pixel values are multiples of 1/255 so the u8 round trip is exact.
// The class count is recovered as max(label)+1 on read.
void write_dataset(const VideoDataset& ds, const std::string& path);
VideoDataset read_dataset(const std::string& path);

// Frames gathered from a video at a fixed temporal stride, as f32 (t,c,h,w).
struct Clip {
  int64_t t = 0, c = 0, h = 0, w = 0;
  std::vector<float> data;

  float& at(int64_t ti, int64_t ci, int64_t y, int64_t x) {
    return data[((ti * c + ci) * h + y) * w + x];
  }
  float at(int64_t ti, int64_t ci, int64_t y, int64_t x) const {
    return data[((ti * c + ci) * h + y) * w + x];
  }
};

Clip sample_clip_at(const SyntheticVideo& v, int clip_len, int stride,
                    int start);
// Uniform random start; throws ContractError when the video is too short.
Clip sample_clip(const SyntheticVideo& v, int clip_len, int stride, Rng& rng);

// Fixed crop window, optionally mirrored horizontally (same for every frame).
Clip crop_region(const Clip& clip, int y0, int x0, int crop, bool flip);

enum class AugmentMode { kTrain, kEval };

// kTrain: random crop position and a fair-coin flip, both drawn from `seed`.
// kEval: centered crop, no flip.
Clip augment(const Clip& clip, AugmentMode mode, int crop, uint64_t seed);

}  // namespace tbn
