#include "tbn/data.hpp"

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "doctest.h"

using namespace tbn;

namespace {

SyntheticVideo tiny_video(int label, uint64_t seed, int t = 3, int c = 2,
                          int h = 4, int w = 5) {
  SyntheticVideo v;
  v.label = label;
  v.t = t;
  v.c = c;
  v.h = h;
  v.w = w;
  Rng rng(seed);
  v.pix.resize(static_cast<size_t>(t) * c * h * w);
  for (auto& p : v.pix) p = static_cast<uint8_t>(rng.uniform_int(256));
  return v;
}

double video_mean(const SyntheticVideo& v) {
  double sum = std::accumulate(v.pix.begin(), v.pix.end(), 0.0);
  return sum / (255.0 * v.pix.size());
}

}  // namespace

TEST_CASE("video generation is deterministic in (program, seed)") {
  MotionProgram prog;
  prog.class_id = 2;
  auto a = generate_video(prog, 99);
  auto b = generate_video(prog, 99);
  CHECK(a.pix == b.pix);
  CHECK(a.label == 2);
  auto c = generate_video(prog, 100);
  CHECK(a.pix != c.pix);
}

TEST_CASE("reversing a trajectory flips the label within its pair") {
  MotionProgram prog;
  for (int cls = 0; cls < 4; ++cls) {
    prog.class_id = cls;
    for (uint64_t s = 1; s <= 20; ++s) {
      Rng rng(mix64(s, cls));
      auto traj = make_trajectory(prog, rng);
      CHECK(classify_trajectory(traj) == cls);
      // Reversal flips direction within pair A; a reversed glide is still a
      // glide and a reversed scramble still a scramble.
      int reversed = cls < 2 ? cls ^ 1 : cls;
      CHECK(classify_trajectory(reverse_trajectory(traj)) == reversed);
    }
  }
}

TEST_CASE("paired classes share per-frame mean intensity within one percent") {
  MotionProgram prog;
  double mean_by_class[4] = {0, 0, 0, 0};
  const int per_class = 250;
  for (int cls = 0; cls < 4; ++cls) {
    prog.class_id = cls;
    for (int i = 0; i < per_class; ++i)
      mean_by_class[cls] += video_mean(generate_video(prog, mix64(400 + cls, i)));
    mean_by_class[cls] /= per_class;
  }
  CHECK(mean_by_class[0] ==
        doctest::Approx(mean_by_class[1]).epsilon(0.01));
  CHECK(mean_by_class[2] ==
        doctest::Approx(mean_by_class[3]).epsilon(0.01));
}

TEST_CASE("generated datasets follow the count and label cycle") {
  MotionProgram prog;
  auto ds = generate_dataset(prog, 4, 10, 5);
  CHECK(ds.classes == 4);
  REQUIRE(ds.videos.size() == 10);
  for (int i = 0; i < 10; ++i) CHECK(ds.videos[i].label == i % 4);
  CHECK_THROWS_AS(generate_dataset(prog, 3, 4, 5), ConfigError);
  CHECK_THROWS_AS(generate_dataset(prog, 4, -1, 5), ConfigError);
}

TEST_CASE("class manifest names all four classes") {
  auto names = class_manifest(4);
  REQUIRE(names.size() == 4);
  CHECK(names[0].find("pair A") != std::string::npos);
  CHECK_THROWS_AS(class_manifest(9), ConfigError);
}

TEST_CASE("clip sampling at stride 1 start 0 copies the leading frames") {
  auto v = tiny_video(0, 7, 6, 2, 3, 3);
  auto clip = sample_clip_at(v, 4, 1, 0);
  REQUIRE(clip.t == 4);
  for (int64_t t = 0; t < 4; ++t)
    for (int64_t c = 0; c < 2; ++c)
      for (int64_t y = 0; y < 3; ++y)
        for (int64_t x = 0; x < 3; ++x)
          CHECK(clip.at(t, c, y, x) == v.at(t, c, y, x));
}

TEST_CASE("strided clips gather frames s, s+4, ..., s+28 inside the video") {
  MotionProgram prog;
  prog.class_id = 1;
  auto v = generate_video(prog, 12);
  Rng rng(31);
  for (int draw = 0; draw < 20; ++draw) {
    auto clip = sample_clip(v, 8, 4, rng);
    // Recover the start frame by matching the first clip frame.
    int64_t frame = static_cast<int64_t>(v.c) * v.h * v.w;
    int start = -1;
    for (int s = 0; s + 29 <= v.t && start < 0; ++s) {
      bool same = true;
      for (int64_t i = 0; i < frame && same; ++i)
        same = clip.data[i] == v.pix[s * frame + i] * (1.0f / 255.0f);
      if (same) start = s;
    }
    REQUIRE(start >= 0);
    CHECK(start + 7 * 4 < v.t);
    for (int64_t t = 0; t < 8; ++t)
      for (int64_t i = 0; i < frame; ++i)
        CHECK(clip.data[t * frame + i] ==
              v.pix[(start + t * 4) * frame + i] * (1.0f / 255.0f));
  }
}

TEST_CASE("clips longer than the video are rejected") {
  auto v = tiny_video(0, 3, 10);
  CHECK_THROWS_AS(sample_clip_at(v, 8, 4, 0), IndexError);
  Rng rng(1);
  CHECK_THROWS_AS(sample_clip(v, 8, 4, rng), ContractError);
  CHECK_THROWS_AS(sample_clip_at(v, 0, 1, 0), ContractError);
}

TEST_CASE("eval augmentation is a fixed center crop") {
  MotionProgram prog;
  auto v = generate_video(prog, 8);
  auto clip = sample_clip_at(v, 8, 4, 0);
  auto a = augment(clip, AugmentMode::kEval, 32, 1);
  auto b = augment(clip, AugmentMode::kEval, 32, 999);  // seed ignored
  CHECK(a.h == 32);
  CHECK(a.w == 32);
  CHECK(a.data == b.data);
  auto direct = crop_region(clip, (clip.h - 32) / 2, (clip.w - 32) / 2, 32, false);
  CHECK(a.data == direct.data);
}

TEST_CASE("horizontal flip is an involution") {
  auto v = tiny_video(0, 17, 4, 3, 8, 8);
  auto clip = sample_clip_at(v, 4, 1, 0);
  auto once = crop_region(clip, 0, 0, 8, true);
  auto twice = crop_region(once, 0, 0, 8, true);
  CHECK(twice.data == clip.data);
}

TEST_CASE("train augmentation stays in bounds across many seeds") {
  auto v = tiny_video(0, 23, 4, 3, 9, 12);
  auto clip = sample_clip_at(v, 4, 1, 0);
  for (uint64_t seed = 0; seed < 10000; ++seed) {
    auto out = augment(clip, AugmentMode::kTrain, 7, seed);
    CHECK(out.h == 7);
    CHECK(out.w == 7);
  }
  CHECK_THROWS_AS(augment(clip, AugmentMode::kTrain, 13, 0), ContractError);
  CHECK_THROWS_AS(crop_region(clip, 5, 0, 7, false), IndexError);
}

TEST_CASE("dataset files round-trip labels, dims, and pixels bitwise") {
  VideoDataset ds;
  ds.classes = 3;
  ds.videos.push_back(tiny_video(0, 1));
  ds.videos.push_back(tiny_video(2, 2, 5, 3, 6, 7));
  ds.videos.push_back(tiny_video(1, 3, 2, 1, 8, 2));
  auto path = (std::filesystem::temp_directory_path() / "tbn_ds.tbv").string();
  write_dataset(ds, path);

  uint64_t want_size = 12;
  for (const auto& v : ds.videos) want_size += 20 + 4ull * v.pix.size();
  CHECK(std::filesystem::file_size(path) == want_size);

  auto rd = read_dataset(path);
  CHECK(rd.classes == 3);  // recovered as max(label)+1
  REQUIRE(rd.videos.size() == 3);
  for (size_t i = 0; i < 3; ++i) {
    CHECK(rd.videos[i].label == ds.videos[i].label);
    CHECK(rd.videos[i].t == ds.videos[i].t);
    CHECK(rd.videos[i].c == ds.videos[i].c);
    CHECK(rd.videos[i].h == ds.videos[i].h);
    CHECK(rd.videos[i].w == ds.videos[i].w);
    CHECK(rd.videos[i].pix == ds.videos[i].pix);
  }

  // A second write of the re-read dataset is byte-identical.
  auto path2 = (std::filesystem::temp_directory_path() / "tbn_ds2.tbv").string();
  write_dataset(rd, path2);
  std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
  std::string b1((std::istreambuf_iterator<char>(f1)), {});
  std::string b2((std::istreambuf_iterator<char>(f2)), {});
  CHECK(b1 == b2);
  std::filesystem::remove(path);
  std::filesystem::remove(path2);
}

TEST_CASE("corrupt dataset files fail with located format errors") {
  VideoDataset ds;
  ds.classes = 2;
  ds.videos.push_back(tiny_video(1, 9));
  auto dir = std::filesystem::temp_directory_path();
  auto path = (dir / "tbn_ds3.tbv").string();
  write_dataset(ds, path);
  std::ifstream in(path, std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)), {});
  in.close();

  SUBCASE("bad magic") {
    auto bad = bytes;
    bad[0] = 'X';
    auto p = (dir / "bad_magic.tbv").string();
    std::ofstream(p, std::ios::binary).write(bad.data(), bad.size());
    CHECK_THROWS_WITH_AS(read_dataset(p), doctest::Contains("bad magic"),
                         FormatError);
    std::filesystem::remove(p);
  }
  SUBCASE("truncated pixels") {
    auto p = (dir / "cut.tbv").string();
    std::ofstream(p, std::ios::binary).write(bytes.data(), bytes.size() - 10);
    CHECK_THROWS_WITH_AS(read_dataset(p), doctest::Contains("at byte"),
                         FormatError);
    std::filesystem::remove(p);
  }
  SUBCASE("missing file") {
    CHECK_THROWS_AS(read_dataset((dir / "nonexistent.tbv").string()),
                    FormatError);
  }
  std::filesystem::remove(path);
}
