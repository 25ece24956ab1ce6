#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>
#include <opencv2/core.hpp>
#include <opencv2/imgproc.hpp>
#include <set>

#include "ssdr/augment.hpp"
#include "ssdr/image_io.hpp"
#include "ssdr/noise.hpp"
#include "ssdr/preprocess.hpp"
#include "ssdr/split.hpp"
#include "ssdr/synth.hpp"
#include "support.hpp"

using namespace ssdr;
using ssdr::testing::natural_image;

namespace {

GrayImage random_image(std::mt19937_64& rng, std::size_t h = 200, std::size_t w = 200) {
  GrayImage img(h, w);
  for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng() & 0xff);
  return img;
}

Dataset tiny_dataset(std::size_t per_class, std::mt19937_64& rng, std::size_t side = 8) {
  Dataset ds{{}, "tiny"};
  for (int c = 0; c < 6; ++c)
    for (std::size_t i = 0; i < per_class; ++i)
      ds.images.push_back({random_image(rng, side, side), c, std::to_string(c) + "/" + std::to_string(i)});
  return ds;
}

std::set<std::string> sources(const Dataset& ds) {
  std::set<std::string> s;
  for (const auto& im : ds.images) s.insert(im.source);
  return s;
}

}  // namespace

TEST(Brightness, FormulaAndClamp) {
  GrayImage img(1, 4);
  img.pixels = {100, 250, 0, 255};
  const auto b12 = scale_brightness(img, 1.2), b16 = scale_brightness(img, 1.6);
  EXPECT_EQ(b12.pixels[0], 130);
  EXPECT_EQ(b16.pixels[1], 255);
  EXPECT_EQ(b12.pixels[2], 10);
  EXPECT_EQ(b16.pixels[2], 10);
  std::mt19937_64 rng(1);
  const auto r = random_image(rng);
  for (double k : kBrightnessGains) {
    const auto out = scale_brightness(r, k);
    for (std::size_t i = 0; i < r.pixels.size(); ++i) {
      const double expected = std::min(255.0, std::floor(r.pixels[i] * k + 10.0 + 0.5));
      ASSERT_EQ(out.pixels[i], expected) << "p=" << int(r.pixels[i]) << " k=" << k;
    }
  }
}

TEST(Brightness, ThreeVariantsKeepLabel) {
  std::mt19937_64 rng(2);
  LabeledImage im{random_image(rng), 4, "x"};
  const auto v = augment_brightness(im);
  ASSERT_EQ(v.size(), 3u);
  for (const auto& o : v) EXPECT_EQ(o.label, 4);
  EXPECT_EQ(v[1].image, scale_brightness(im.image, 1.4));
}

TEST(Flips, GroupIdentities) {
  std::mt19937_64 rng(3);
  const auto img = random_image(rng, 200, 200);
  EXPECT_EQ(flip_horizontal(flip_horizontal(img)), img);
  EXPECT_EQ(flip_vertical(flip_vertical(img)), img);
  LabeledImage li{img, 2, "x"};
  const auto v = augment_flips(li);
  ASSERT_EQ(v.size(), 3u);
  EXPECT_EQ(v[2].image, flip_vertical(flip_horizontal(img)));
  EXPECT_EQ(v[2].image, flip_horizontal(flip_vertical(img)));
  GrayImage dot(200, 200);
  dot.at(0, 0) = 255;
  EXPECT_EQ(flip_horizontal(dot).at(0, 199), 255);
  EXPECT_EQ(flip_vertical(dot).at(199, 0), 255);
  const auto rect = random_image(rng, 3, 5);
  EXPECT_EQ(flip_horizontal(flip_horizontal(rect)), rect);
}

TEST(Rotations, GroupIdentities) {
  std::mt19937_64 rng(4);
  const auto img = random_image(rng);
  auto r = img;
  for (int i = 0; i < 4; ++i) r = rotate_quarter_turns(r, 1);
  EXPECT_EQ(r, img);
  EXPECT_EQ(rotate_quarter_turns(img, 2), flip_vertical(flip_horizontal(img)));
  EXPECT_EQ(rotate_quarter_turns(img, 3), rotate_quarter_turns(img, -1));
  GrayImage dot(200, 200);
  dot.at(0, 0) = 255;
  EXPECT_EQ(rotate_quarter_turns(dot, 1).at(0, 199), 255);
  EXPECT_EQ(rotate_quarter_turns(dot, 2).at(199, 199), 255);
  EXPECT_THROW(rotate_quarter_turns(GrayImage(3, 4), 1), DataError);
  LabeledImage li{img, 5, "x"};
  for (const auto& o : augment_rotations(li)) {
    EXPECT_EQ(o.label, 5);
    EXPECT_EQ(o.image.height, 200u);
  }
}

TEST(Expand, CountsAndOrdering) {
  std::mt19937_64 rng(5);
  const auto ds = tiny_dataset(10, rng);
  EXPECT_EQ(expand(ds, AugmentationPlan::none()).size(), ds.size());
  EXPECT_EQ(expand(ds, {true, false, false}).size(), 4 * ds.size());
  EXPECT_EQ(expand(ds, {false, true, false}).size(), 4 * ds.size());
  EXPECT_EQ(expand(ds, {false, false, true}).size(), 4 * ds.size());
  EXPECT_EQ(expand(ds, {true, true, false}).size(), 16 * ds.size());
  const auto all = expand(ds, AugmentationPlan::combined());
  EXPECT_EQ(AugmentationPlan::combined().expansion_factor(), 64u);
  ASSERT_EQ(all.size(), 64u * ds.size());
  for (std::size_t c = 0; c < 6; ++c) EXPECT_EQ(all.class_counts()[c], 640u);
  // Image-major: block i holds the 64 variants of input image i, original first.
  for (std::size_t i = 0; i < ds.size(); ++i) {
    EXPECT_EQ(all.images[64 * i].image, ds.images[i].image);
    for (std::size_t k = 0; k < 64; ++k) ASSERT_EQ(all.images[64 * i + k].label, ds.images[i].label);
  }
  EXPECT_EQ(sources(all).size(), all.size());
  EXPECT_EQ(all.images[1].image, rotate_quarter_turns(ds.images[0].image, 1));
  EXPECT_EQ(all.images[16].image, scale_brightness(ds.images[0].image, 1.2));
}

TEST(Expand, EmptyPlanIsIdentity) {
  std::mt19937_64 rng(6);
  const auto ds = tiny_dataset(2, rng);
  const auto out = expand(ds, AugmentationPlan::none());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    EXPECT_EQ(out.images[i].image, ds.images[i].image);
    EXPECT_EQ(out.images[i].source, ds.images[i].source);
  }
}

TEST(Noise, VarianceFormula) {
  std::mt19937_64 gen(7);
  LabeledImage im{natural_image(gen), 0, "x"};
  Rng rng(1);
  const auto r = add_gaussian_noise(im, 30.0, rng);
  EXPECT_NEAR(std::sqrt(r.target_noise_variance), std::sqrt(r.signal_variance) / 31.6228, 1e-4);
  double var = 0.0, mean = 0.0;
  for (auto p : im.image.pixels) mean += p;
  mean /= 40000.0;
  for (auto p : im.image.pixels) var += (p - mean) * (p - mean);
  EXPECT_NEAR(r.signal_variance, var / 40000.0, 1e-9);
}

TEST(Noise, RealizedSnrNearTarget) {
  std::mt19937_64 gen(8);
  for (double snr : {30.0, 5.0}) {
    for (int i = 0; i < 20; ++i) {
      LabeledImage im{natural_image(gen), 0, "x"};
      Rng rng = make_rng(1, "noise-train", static_cast<std::uint64_t>(i));
      EXPECT_NEAR(realized_snr_db(add_gaussian_noise(im, snr, rng)), snr, 0.5);
    }
  }
}

TEST(Noise, VanishingNoiseLeavesImageUnchanged) {
  std::mt19937_64 gen(9);
  LabeledImage im{natural_image(gen), 3, "x"};
  Rng rng(2);
  const auto r = add_gaussian_noise(im, 100.0, rng);
  EXPECT_EQ(r.image.image, im.image);
  EXPECT_EQ(r.image.label, 3);
}

TEST(Noise, MeanShiftBelowHalfGrayLevelAt30dB) {
  std::mt19937_64 gen(10);
  for (int i = 0; i < 20; ++i) {
    LabeledImage im{natural_image(gen), 0, "x"};
    Rng rng(static_cast<std::uint64_t>(i));
    const auto r = add_gaussian_noise(im, 30.0, rng);
    double before = 0.0, after = 0.0;
    for (std::size_t k = 0; k < im.image.pixels.size(); ++k) {
      before += im.image.pixels[k];
      after += r.image.image.pixels[k];
    }
    EXPECT_LT(std::fabs(after - before) / 40000.0, 0.5);
  }
}

TEST(Noise, ConstantImagePassesThrough) {
  LabeledImage im{GrayImage(200, 200, 77), 1, "x"};
  Rng rng(3);
  const auto r = add_gaussian_noise(im, 5.0, rng);
  EXPECT_TRUE(r.passthrough);
  EXPECT_EQ(r.image.image, im.image);
  EXPECT_THROW(add_gaussian_noise(im, std::numeric_limits<double>::infinity(), rng), ConfigError);
}

TEST(Split, DisjointDeterministicAndSeeded) {
  std::mt19937_64 rng(11);
  const auto ds = tiny_dataset(300, rng, 2);
  const auto a = split(ds, {});
  EXPECT_EQ(a.train.size(), 900u);
  EXPECT_EQ(a.test.size(), 900u);
  for (std::size_t c = 0; c < 6; ++c) {
    EXPECT_EQ(a.train.class_counts()[c], 150u);
    EXPECT_EQ(a.test.class_counts()[c], 150u);
  }
  const auto tr = sources(a.train), te = sources(a.test);
  for (const auto& s : tr) EXPECT_EQ(te.count(s), 0u);
  const auto b = split(ds, {});
  for (std::size_t i = 0; i < 900; ++i) EXPECT_EQ(a.train.images[i].source, b.train.images[i].source);
  SplitSpec other;
  other.seed = 1;
  EXPECT_NE(sources(split(ds, other).train), tr);
  EXPECT_THROW(split(tiny_dataset(299, rng, 2), {}), DataError);
}

TEST(Sample, CountsRangeAndNesting) {
  std::mt19937_64 rng(12);
  const auto ds = tiny_dataset(150, rng, 2);
  EXPECT_EQ(sample_n_per_class(ds, 10, 3).size(), 60u);
  EXPECT_EQ(sources(sample_n_per_class(ds, 150, 3)), sources(ds));
  EXPECT_THROW(sample_n_per_class(ds, 0, 3), ConfigError);
  EXPECT_THROW(sample_n_per_class(ds, 151, 3), ConfigError);
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto s10 = sources(sample_n_per_class(ds, 10, seed)), s30 = sources(sample_n_per_class(ds, 30, seed));
    for (const auto& s : s10) EXPECT_EQ(s30.count(s), 1u);
    for (std::size_t c = 0; c < 6; ++c) EXPECT_EQ(sample_n_per_class(ds, 30, seed).class_counts()[c], 30u);
  }
  EXPECT_NE(sources(sample_n_per_class(ds, 10, 1)), sources(sample_n_per_class(ds, 10, 2)));
}

TEST(Preprocess, ConstantImageBecomesZero) {
  const auto t = preprocess(GrayImage(200, 200, 128));
  EXPECT_EQ(t.shape(), (Shape{3, 224, 224}));
  for (float v : t.data()) ASSERT_EQ(v, 0.0f);
}

TEST(Preprocess, ChannelsIdenticalAndMeanNearZero) {
  std::mt19937_64 rng(13);
  for (int i = 0; i < 5; ++i) {
    const auto t = preprocess(natural_image(rng));
    const std::size_t plane = 224 * 224;
    for (std::size_t k = 0; k < plane; ++k) {
      ASSERT_EQ(t[k], t[plane + k]);
      ASSERT_EQ(t[k], t[2 * plane + k]);
    }
    double mean = 0.0;
    for (float v : t.data()) mean += v;
    EXPECT_LT(std::fabs(mean / static_cast<double>(t.size())), 0.5);
  }
}

TEST(Preprocess, ResizeMatchesOpenCvHalfPixelBilinear) {
  std::mt19937_64 rng(14);
  const auto img = random_image(rng);
  std::vector<float> src(img.pixels.begin(), img.pixels.end());
  const auto ours = resize_bilinear(src, 200, 200, 224, 224);
  cv::Mat in(200, 200, CV_32F, src.data()), out;
  cv::resize(in, out, cv::Size(224, 224), 0, 0, cv::INTER_LINEAR);
  double worst = 0.0;
  for (int y = 0; y < 224; ++y)
    for (int x = 0; x < 224; ++x) worst = std::max<double>(worst, std::fabs(out.at<float>(y, x) - ours[y * 224 + x]));
  // Both sides use float weights on 0..255 data; an off-by-half-pixel error
  // would show up as differences of tens of gray levels.
  EXPECT_LT(worst, 1e-2);
}

TEST(Preprocess, ResizeHandComputedCorner) {
  // Destination (0, 1) maps to source x = 1.5 * 200 / 224 - 0.5.
  std::vector<float> src(200 * 200);
  for (std::size_t x = 0; x < 200; ++x) src[x] = static_cast<float>(x);
  const auto out = resize_bilinear(src, 200, 200, 224, 224);
  EXPECT_FLOAT_EQ(out[0], 0.0f);
  EXPECT_NEAR(out[1], 1.5 * 200.0 / 224.0 - 0.5, 1e-5);
  EXPECT_FLOAT_EQ(out[223], 199.0f);
}

TEST(Synth, DeterministicAndExtensible) {
  const auto a = synth_dataset(3, 7), b = synth_dataset(3, 7), c = synth_dataset(5, 7);
  ASSERT_EQ(a.size(), 18u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a.images[i].image, b.images[i].image);
    EXPECT_EQ(a.images[i].image.height, 200u);
  }
  EXPECT_EQ(a.images[3].image, c.images[5].image);  // class 1, image 0
  EXPECT_FALSE(a.images[0].image == synth_dataset(3, 8).images[0].image);
  EXPECT_THROW(synth_dataset(0, 1), ConfigError);
}

TEST(Synth, ClassMeansAreDistinct) {
  const auto ds = synth_dataset(30, 1);
  std::vector<std::vector<double>> means(6, std::vector<double>(40000));
  for (const auto& im : ds.images)
    for (std::size_t k = 0; k < 40000; ++k) means[im.label][k] += im.image.pixels[k] / 30.0;
  for (int a = 0; a < 6; ++a)
    for (int b = a + 1; b < 6; ++b) {
      double mad = 0.0;
      for (std::size_t k = 0; k < 40000; ++k) mad += std::fabs(means[a][k] - means[b][k]);
      EXPECT_GT(mad / 40000.0, 5.0) << a << " vs " << b;
    }
}

TEST(Synth, ThreeNearestNeighboursSeparateClasses) {
  const auto all = synth_dataset(60, 2);
  Dataset train{{}, ""}, test{{}, ""};
  for (std::size_t i = 0; i < all.size(); ++i) (i % 60 < 30 ? train : test).images.push_back(all.images[i]);
  std::size_t correct = 0;
  for (const auto& q : test.images) {
    std::vector<std::pair<double, int>> d;
    for (const auto& t : train.images) {
      double s = 0.0;
      for (std::size_t k = 0; k < 40000; ++k) {
        const double diff = double(q.image.pixels[k]) - double(t.image.pixels[k]);
        s += diff * diff;
      }
      d.push_back({s, t.label});
    }
    std::partial_sort(d.begin(), d.begin() + 3, d.end());
    std::array<int, 6> votes{};
    for (int k = 0; k < 3; ++k) ++votes[d[k].second];
    // Ties go to the nearest neighbour.
    int best = d[0].second;
    for (int c = 0; c < 6; ++c)
      if (votes[c] > votes[best]) best = c;
    correct += best == q.label;
  }
  EXPECT_GT(static_cast<double>(correct) / test.size(), 0.8);
}

TEST(ImageIo, RoundTripAndLayoutErrors) {
  const auto dir = ssdr::testing::temp_dir("imageio");
  const auto ds = synth_dataset(2, 3);
  save_dataset(ds, dir / "data");
  const auto back = load_dataset(dir / "data");
  ASSERT_EQ(back.size(), ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    EXPECT_EQ(back.images[i].image, ds.images[i].image);
    EXPECT_EQ(back.images[i].label, ds.images[i].label);
  }
  std::filesystem::create_directories(dir / "empty");
  try {
    load_dataset(dir / "empty");
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("missing class"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("rolled-in_scale"), std::string::npos);
  }
  std::filesystem::rename(dir / "data" / "rolled-in_scale", dir / "data" / "Rolled_In_Scale");
  EXPECT_EQ(load_dataset(dir / "data").size(), ds.size());
  const auto bad = dir / "data" / "scratches" / "zz_small.png";
  write_png(bad, GrayImage(100, 100, 5));
  try {
    load_dataset(dir / "data");
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("zz_small.png"), std::string::npos);
  }
  std::filesystem::remove(bad);
  { std::ofstream(dir / "data" / "patches" / "junk.png") << "not an image"; }
  EXPECT_THROW(load_dataset(dir / "data"), DataError);
}
