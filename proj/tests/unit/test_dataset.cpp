#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "deeprank/dataset.hpp"
#include "deeprank/eval.hpp"
#include "deeprank/png_io.hpp"
#include "deeprank/sampler.hpp"
#include "deeprank/synth.hpp"

using namespace deeprank;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / "deeprank_unit" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

DatasetIndex label_only(int identities) {
  DatasetIndex index;
  for (const char* cam : {"a", "b"}) {
    for (int i = 1; i <= identities; ++i) index.entries.push_back({i, cam, 0, {}, nullptr});
  }
  return index;
}

}  // namespace

TEST(Ingest, TwoCameraSingleIdentity) {
  auto root = fresh_dir("ingest_ok");
  fs::create_directories(root / "cam_a");
  fs::create_directories(root / "cam_b");
  write_png(Tensor<float>({3, 16, 8}, 0.5f), root / "cam_a" / "0001_00.png");
  write_png(Tensor<float>({3, 16, 8}, 0.25f), root / "cam_b" / "0001_00.png");
  auto index = ingest(root);
  EXPECT_EQ(index.entries.size(), 2u);
  EXPECT_EQ(index.identities(), std::vector<int>{1});
  EXPECT_EQ(index.cameras(), (std::vector<std::string>{"a", "b"}));
  EXPECT_EQ(ingest(root).entries, index.entries);
  auto img = load_image(index.entries[1]);
  EXPECT_EQ(img.camera, "b");
  EXPECT_NEAR(img.pixels[0], 64.0f / 255.0f, 1e-6);
}

TEST(Ingest, MalformedNameCitesPath) {
  auto root = fresh_dir("ingest_bad");
  fs::create_directories(root / "cam_a");
  write_png(Tensor<float>({3, 16, 8}, 0.5f), root / "cam_a" / "abc.png");
  try {
    ingest(root);
    FAIL() << "expected an ingest error";
  } catch (const DatasetError& e) {
    EXPECT_NE(std::string(e.what()).find("abc.png"), std::string::npos) << e.what();
  }
}

TEST(Ingest, EmptyOrMissingRootRejected) {
  auto root = fresh_dir("ingest_empty");
  EXPECT_THROW(ingest(root), DatasetError);
  EXPECT_THROW(ingest(root / "nope"), DatasetError);
}

TEST(LoadImage, ScalingRule) {
  auto dir = fresh_dir("load");
  write_png(Tensor<float>({3, 8, 8}, 1.0f), dir / "white.png");
  auto white = read_png(dir / "white.png");
  for (float v : white.values()) EXPECT_EQ(v, 1.0f);
  write_png(Tensor<float>({3, 8, 8}, 128.0f / 255.0f), dir / "grey.png");
  DatasetEntry e{1, "a", 0, dir / "grey.png", nullptr};
  auto grey = load_image(e);
  for (float v : grey.pixels.values()) EXPECT_NEAR(v, 0.50196f, 1e-5);
  EXPECT_EQ(load_image(e).pixels, grey.pixels);
  std::ofstream(dir / "junk.png") << "not a png";
  EXPECT_THROW(load_image(DatasetEntry{1, "a", 1, dir / "junk.png", nullptr}), DatasetError);
}

TEST(LoadImage, ChannelOrderIsRgb) {
  auto dir = fresh_dir("rgb");
  Tensor<float> img({3, 8, 8}, 0.0f);
  for (std::size_t i = 0; i < 64; ++i) img[i] = 1.0f;  // red plane only
  write_png(img, dir / "red.png");
  auto back = read_png(dir / "red.png");
  EXPECT_EQ(back, img);
}

TEST(Split, HalfOf632Identities) {
  auto spec = split(label_only(632), 0.5, 1);
  EXPECT_EQ(spec.train_identities.size(), 316u);
  EXPECT_EQ(spec.test_identities.size(), 316u);
}

TEST(Split, DisjointAndDeterministicForEverySeed) {
  auto index = label_only(40);
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    auto s = split(index, 0.5, seed);
    std::set<int> train(s.train_identities.begin(), s.train_identities.end());
    for (int t : s.test_identities) EXPECT_FALSE(train.contains(t));
    EXPECT_EQ(train.size() + s.test_identities.size(), 40u);
    EXPECT_EQ(split(index, 0.5, seed).train_identities, s.train_identities);
  }
  EXPECT_NE(split(index, 0.5, 1).train_identities, split(index, 0.5, 2).train_identities);
  EXPECT_THROW(split(label_only(1), 0.5, 1), std::invalid_argument);
  EXPECT_THROW(split(index, 1.0, 1), std::invalid_argument);
  EXPECT_THROW(split(index, 0.0, 1), std::invalid_argument);
}

TEST(Synth, DegenerateTransformGivesIdenticalViews) {
  SynthParams p;
  p.identities = 6;
  p.images_per_view = 1;
  p.noise = 0;
  p.brightness_shift = 0;
  p.hue_shift = 0;
  p.jitter = 0;
  p.clutter = 0;
  auto images = load_images(synth_generate(p));
  for (const auto& a : images) {
    if (a.camera != "a") continue;
    for (const auto& b : images) {
      if (b.camera == "b" && b.identity == a.identity) EXPECT_EQ(a.pixels, b.pixels);
    }
  }
}

TEST(Synth, PureFunctionOfParams) {
  SynthParams p;
  p.identities = 4;
  auto a = load_images(synth_generate(p)), b = load_images(synth_generate(p));
  ASSERT_EQ(a.size(), 16u);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].pixels, b[i].pixels);
  p.seed = 2;
  auto c = load_images(synth_generate(p));
  EXPECT_NE(a[0].pixels, c[0].pixels);
  for (const auto& im : a) {
    for (float v : im.pixels.values()) {
      ASSERT_GE(v, 0.0f);
      ASSERT_LE(v, 1.0f);
    }
  }
}

TEST(Synth, DifferentSeedsDifferentPalettes) {
  SynthParams p;
  p.identities = 8;
  p.noise = p.brightness_shift = p.hue_shift = p.clutter = 0;
  p.jitter = 0;
  auto a = load_images(synth_generate(p));
  p.seed = 77;
  auto b = load_images(synth_generate(p));
  int differing = 0;
  for (std::size_t i = 0; i < a.size(); ++i) differing += a[i].pixels != b[i].pixels;
  EXPECT_EQ(differing, static_cast<int>(a.size()));
}

TEST(Synth, RejectsTinyExtents) {
  SynthParams p;
  p.height = 15;
  EXPECT_THROW(synth_generate(p), std::invalid_argument);
  p.height = 16;
  p.width = 7;
  EXPECT_THROW(synth_generate(p), std::invalid_argument);
}

TEST(Synth, DeskPresetRawPixelBaselineIsWeak) {
  SynthParams p;
  auto index = synth_generate(p);
  auto s = split(index, 0.5, 1);
  auto test = load_images(restrict_to(index, s.test_identities));
  std::vector<PersonImage> probes, gallery;
  for (auto& im : test) (im.camera == "a" ? probes : gallery).push_back(im);
  TrialOptions opts;
  opts.trials = 10;
  auto cmc = cmc_trials(raw_pixel_scores(probes, gallery), opts);
  EXPECT_LE(cmc.rates[0], 0.6);
}

TEST(Export, RoundTripsThroughTheLayout) {
  SynthParams p;
  p.identities = 3;
  p.images_per_view = 2;
  auto index = synth_generate(p);
  auto root = fresh_dir("export");
  export_dataset(index, root);
  EXPECT_TRUE(fs::exists(root / "cam_a" / "0001_00.png"));
  EXPECT_TRUE(fs::exists(root / "cam_b" / "0003_01.png"));
  auto back = ingest(root);
  ASSERT_EQ(back.entries.size(), index.entries.size());
  for (std::size_t i = 0; i < back.entries.size(); ++i) {
    const auto a = load_image(index.entries[i]), b = load_image(back.entries[i]);
    EXPECT_EQ(a.identity, b.identity);
    EXPECT_EQ(a.camera, b.camera);
    for (std::size_t j = 0; j < a.pixels.size(); ++j) ASSERT_NEAR(a.pixels[j], b.pixels[j], 0.5 / 255 + 1e-6);
  }
}

TEST(Composition, NoTestIdentityLeaksIntoUnits) {
  SynthParams p;
  p.identities = 20;
  auto index = synth_generate(p);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto s = split(index, 0.5, seed);
    std::set<int> test(s.test_identities.begin(), s.test_identities.end());
    auto train = load_images(restrict_to(index, s.train_identities));
    for (const auto& u : build_units(train, 0, 4, true, seed)) {
      EXPECT_FALSE(test.contains(train[u.probe].identity));
      EXPECT_FALSE(test.contains(train[u.positive].identity));
      for (auto r : u.references) EXPECT_FALSE(test.contains(train[r].identity));
    }
  }
}
