// data-io: PNM parsing, folder loading, splits, synthetic blobs.
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "stmunet/data.hpp"
#include "stmunet/rng.hpp"

using namespace stmunet;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir(const char* name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("pnm roundtrip is lossless for 8-bit data") {
  TempDir dir("stmunet_pnm_rt");
  CounterRng rng(1);
  RasterU8 img;
  img.width = 7;
  img.height = 5;
  img.channels = 3;
  img.pixels.resize(105);
  for (auto& p : img.pixels) p = static_cast<uint8_t>(rng.below(256));
  const std::string path = (dir.path / "x.ppm").string();
  write_pnm(path, img);
  const RasterU8 back = read_pnm(path);
  CHECK(back.width == 7);
  CHECK(back.height == 5);
  CHECK(back.channels == 3);
  CHECK(back.pixels == img.pixels);

  RasterU8 mask;
  mask.width = 4;
  mask.height = 4;
  mask.channels = 1;
  mask.pixels.assign(16, 255);
  const std::string mpath = (dir.path / "m.pgm").string();
  write_pnm(mpath, mask);
  CHECK(read_pnm(mpath).pixels == mask.pixels);
}

TEST_CASE("malformed headers are rejected") {
  TempDir dir("stmunet_pnm_bad");
  const auto write_raw = [&](const char* name, const std::string& content) {
    std::ofstream os(dir.path / name, std::ios::binary);
    os << content;
    return (dir.path / name).string();
  };
  CHECK_THROWS_WITH_AS(read_pnm(write_raw("a.ppm", "P3\n2 2\n255\n")),
                       doctest::Contains("expected P5 or P6"), std::runtime_error);
  CHECK_THROWS_WITH_AS(read_pnm(write_raw("b.ppm", "P6\nx 2\n255\n")),
                       doctest::Contains("malformed header"), std::runtime_error);
  CHECK_THROWS_WITH_AS(read_pnm(write_raw("c.ppm", "P6\n2 2\n127\n")),
                       doctest::Contains("maxval"), std::runtime_error);
  CHECK_THROWS_WITH_AS(read_pnm(write_raw("d.ppm", "P6\n2 2\n255\nab")),
                       doctest::Contains("truncated"), std::runtime_error);
}

TEST_CASE("load_folder: white image scales to ones, mask binarizes") {
  TempDir dir("stmunet_load_folder");
  fs::create_directories(dir.path / "images");
  fs::create_directories(dir.path / "masks");
  RasterU8 img;
  img.width = img.height = 2;
  img.channels = 3;
  img.pixels.assign(12, 255);
  write_pnm((dir.path / "images" / "a.ppm").string(), img);
  RasterU8 msk;
  msk.width = msk.height = 2;
  msk.channels = 1;
  msk.pixels.assign(4, 255);
  write_pnm((dir.path / "masks" / "a.pgm").string(), msk);

  const auto samples =
      load_folder((dir.path / "images").string(), (dir.path / "masks").string(), 2, 2);
  REQUIRE(samples.size() == 1);
  CHECK(samples[0].id == "a");
  for (float v : samples[0].image.vec()) CHECK(v == 1.0f);
  for (float v : samples[0].mask.vec()) CHECK(v == 1.0f);
}

TEST_CASE("load_folder: nearest mask upscale maps one pixel to a 2x2 block") {
  TempDir dir("stmunet_load_nearest");
  fs::create_directories(dir.path / "images");
  fs::create_directories(dir.path / "masks");
  RasterU8 img;
  img.width = img.height = 3;
  img.channels = 3;
  img.pixels.assign(27, 100);
  write_pnm((dir.path / "images" / "p.ppm").string(), img);
  RasterU8 msk;
  msk.width = msk.height = 3;
  msk.channels = 1;
  msk.pixels.assign(9, 0);
  msk.pixels[4] = 255;  // center pixel on
  write_pnm((dir.path / "masks" / "p.pgm").string(), msk);

  const auto samples =
      load_folder((dir.path / "images").string(), (dir.path / "masks").string(), 6, 6);
  REQUIRE(samples.size() == 1);
  const float* m = samples[0].mask.data();
  int64_t on = 0;
  for (int64_t y = 0; y < 6; ++y) {
    for (int64_t x = 0; x < 6; ++x) {
      const bool expect = (y == 2 || y == 3) && (x == 2 || x == 3);
      CHECK(m[y * 6 + x] == (expect ? 1.0f : 0.0f));
      on += m[y * 6 + x] == 1.0f;
    }
  }
  CHECK(on == 4);
  // resizing never leaves the binary set
  for (float v : samples[0].mask.vec()) CHECK((v == 0.0f || v == 1.0f));
}

TEST_CASE("load_folder: missing mask is reported with the id") {
  TempDir dir("stmunet_load_missing");
  fs::create_directories(dir.path / "images");
  fs::create_directories(dir.path / "masks");
  RasterU8 img;
  img.width = img.height = 2;
  img.channels = 3;
  img.pixels.assign(12, 10);
  write_pnm((dir.path / "images" / "orphan.ppm").string(), img);
  CHECK_THROWS_WITH_AS(
      load_folder((dir.path / "images").string(), (dir.path / "masks").string(), 2, 2),
      doctest::Contains("missing mask for 'orphan'"), std::runtime_error);
}

TEST_CASE("load_folder sorts samples by id") {
  TempDir dir("stmunet_load_sorted");
  fs::create_directories(dir.path / "images");
  fs::create_directories(dir.path / "masks");
  for (const char* id : {"zeta", "alpha", "mid"}) {
    RasterU8 img;
    img.width = img.height = 2;
    img.channels = 3;
    img.pixels.assign(12, 50);
    write_pnm((dir.path / "images" / (std::string(id) + ".ppm")).string(), img);
    RasterU8 msk;
    msk.width = msk.height = 2;
    msk.channels = 1;
    msk.pixels.assign(4, 0);
    write_pnm((dir.path / "masks" / (std::string(id) + ".pgm")).string(), msk);
  }
  const auto samples =
      load_folder((dir.path / "images").string(), (dir.path / "masks").string(), 2, 2);
  REQUIRE(samples.size() == 3);
  CHECK(samples[0].id == "alpha");
  CHECK(samples[1].id == "mid");
  CHECK(samples[2].id == "zeta");
}

TEST_CASE("split: ratios, determinism, partition") {
  const auto samples = synth_blobs(10, 16, 1);
  const DatasetSplit sp = split(samples, 0.8, 42);
  CHECK(sp.train.size() == 8);
  CHECK(sp.val.size() == 2);

  const DatasetSplit again = split(samples, 0.8, 42);
  CHECK(sp.train == again.train);
  CHECK(sp.val == again.val);
  CHECK(split_checksum(sp) == split_checksum(again));

  const DatasetSplit other = split(samples, 0.8, 43);
  CHECK(split_checksum(sp) != split_checksum(other));

  // partition: disjoint, union covers everything
  std::vector<std::string> all = sp.train;
  all.insert(all.end(), sp.val.begin(), sp.val.end());
  std::sort(all.begin(), all.end());
  std::vector<std::string> ids;
  for (const auto& s : samples) ids.push_back(s.id);
  std::sort(ids.begin(), ids.end());
  CHECK(all == ids);
}

TEST_CASE("split: 5 samples floor to 4/1; tiny sets rejected") {
  const auto samples = synth_blobs(5, 16, 2);
  const DatasetSplit sp = split(samples, 0.8, 1);
  CHECK(sp.train.size() == 4);
  CHECK(sp.val.size() == 1);

  const auto one = synth_blobs(1, 16, 3);
  CHECK_THROWS_WITH_AS(split(one, 0.8, 1), doctest::Contains("at least 2"),
                       std::invalid_argument);
}

TEST_CASE("synth blobs: masks equal their analytic indicator exactly") {
  std::vector<std::vector<Ellipse>> shapes;
  const auto samples = synth_blobs(6, 24, 77, &shapes);
  REQUIRE(shapes.size() == 6);
  for (size_t i = 0; i < samples.size(); ++i) {
    const float* m = samples[i].mask.data();
    int64_t on = 0;
    for (int64_t y = 0; y < 24; ++y) {
      for (int64_t x = 0; x < 24; ++x) {
        bool inside = false;
        for (const Ellipse& e : shapes[i]) inside = inside || ellipse_contains(e, x, y);
        CHECK(m[y * 24 + x] == (inside ? 1.0f : 0.0f));
        on += inside;
      }
    }
    CHECK(on > 0);
    CHECK(on * 10 < 24 * 24 * 6);  // below 60% coverage
  }
}

TEST_CASE("synth blobs: seed determinism and image range") {
  const auto a = synth_blobs(4, 16, 5);
  const auto b = synth_blobs(4, 16, 5);
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].id == b[i].id);
    CHECK(a[i].image.vec() == b[i].image.vec());
    CHECK(a[i].mask.vec() == b[i].mask.vec());
    for (float v : a[i].image.vec()) {
      CHECK(v >= 0.0f);
      CHECK(v <= 1.0f);
    }
  }
  const auto c = synth_blobs(4, 16, 6);
  CHECK(a[0].image.vec() != c[0].image.vec());
}

TEST_CASE("dataset save/load roundtrip keeps masks binary") {
  TempDir dir("stmunet_ds_rt");
  const auto samples = synth_blobs(3, 16, 9);
  write_dataset(samples, dir.path.string());
  const auto back =
      load_folder((dir.path / "images").string(), (dir.path / "masks").string(), 16, 16);
  REQUIRE(back.size() == 3);
  for (size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].id == samples[i].id);
    CHECK(back[i].mask.vec() == samples[i].mask.vec());  // 0/255 encoding is exact
  }
}
