#include <gtest/gtest.h>

#include <random>

#include "ntscan/despeckle.hpp"
#include "ntscan/phantom.hpp"
#include "oracles.hpp"

using namespace ntscan;

TEST(WindowMedian, SortedMidpointAndConstant) {
  GrayImage img(3, 3);
  const std::uint8_t vals[9] = {90, 10, 70, 30, 50, 20, 80, 60, 40};
  for (int i = 0; i < 9; ++i) img.data()[static_cast<std::size_t>(i)] = vals[i];
  EXPECT_EQ(window_median(img, 1, 1, 3), 50);
  EXPECT_EQ(window_median(GrayImage(5, 5, 128), 2, 2, 3), 128);
}

TEST(WindowMedian, MatchesSortOracleOnRandomFiveByFive) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const GrayImage img = oracle::random_image(9, 8, rng);
    std::uniform_int_distribution<int> rr(0, 7), cc(0, 8);
    const int r = rr(rng), c = cc(rng);
    EXPECT_EQ(window_median(img, r, c, 5), oracle::window_median(img, r, c, 5));
  }
}

TEST(WindowMedian, EvenWindowThrows) {
  EXPECT_THROW(window_median(GrayImage(4, 4), 1, 1, 4), std::invalid_argument);
  DespeckleParams p;
  p.window = 4;
  EXPECT_THROW(p.validate(), std::invalid_argument);
  p.window = 3;
  p.threshold = 0;
  EXPECT_THROW(p.validate(), std::invalid_argument);
  p.threshold = 256;
  EXPECT_THROW(p.validate(), std::invalid_argument);
}

TEST(SpeckleFlags, ConstantImageAllGood) {
  const FlagMap f = speckle_flags(GrayImage(6, 5, 77), DespeckleParams{});
  EXPECT_EQ(popcount(f), f.size());
}

TEST(SpeckleFlags, ImpulseFlaggedExactlyAtImpulse) {
  GrayImage img(7, 7, 0);
  img(3, 3) = 255;
  const FlagMap f = speckle_flags(img, DespeckleParams{});
  for (int r = 0; r < 7; ++r) {
    for (int c = 0; c < 7; ++c) EXPECT_EQ(f(r, c), (r == 3 && c == 3) ? 0 : 1) << r << "," << c;
  }
}

TEST(SpeckleFlags, ThresholdAboveMaxDeviationFlagsNothing) {
  std::mt19937_64 rng(2);
  const GrayImage img = oracle::random_image(10, 10, rng, 20, 220);
  DespeckleParams p;
  p.threshold = 255;
  const FlagMap f = speckle_flags(img, p);
  EXPECT_EQ(popcount(f), f.size());
}

TEST(Despeckle, ConstantImageOneIterationAllClean) {
  const GrayImage img(8, 8, 42);
  const auto [out, rep] = despeckle(img, DespeckleParams{});
  EXPECT_EQ(out, img);
  EXPECT_EQ(rep.iterations_run, 1);
  EXPECT_EQ(rep.terminated_by, DespeckleTermination::AllClean);
  EXPECT_EQ(rep.flags_per_iteration, std::vector<std::size_t>{0});
}

TEST(Despeckle, ImpulseRemoved) {
  GrayImage img(7, 7, 0);
  img(3, 3) = 255;
  const auto [out, rep] = despeckle(img, DespeckleParams{});
  EXPECT_EQ(out, GrayImage(7, 7, 0));
  EXPECT_EQ(rep.flags_per_iteration.front(), 1u);
}

TEST(Despeckle, FirstPassMatchesSelectiveMedianOracle) {
  std::mt19937_64 rng(3);
  DespeckleParams p;
  p.max_iters = 1;
  for (int trial = 0; trial < 20; ++trial) {
    const GrayImage img = oracle::random_image(12, 11, rng);
    const auto [out, rep] = despeckle(img, p);
    GrayImage expect = img;
    std::size_t flagged = 0;
    for (int r = 0; r < img.height(); ++r) {
      for (int c = 0; c < img.width(); ++c) {
        const int m = oracle::window_median(img, r, c, 3);
        if (std::abs(m - img(r, c)) >= p.threshold) {
          expect(r, c) = static_cast<std::uint8_t>(m);
          ++flagged;
        }
      }
    }
    EXPECT_EQ(out, expect);
    EXPECT_EQ(rep.flags_per_iteration.front(), flagged);
  }
}

TEST(Despeckle, FlaggedPixelsTakeThePlainMedianFilterValue) {
  // Threshold 1 flags every pixel that differs from its median, so where
  // flags are 0 the first pass must agree with a full median filter.
  std::mt19937_64 rng(5);
  DespeckleParams p;
  p.max_iters = 1;
  p.threshold = 1;
  const GrayImage img = oracle::random_image(16, 16, rng);
  const FlagMap f = speckle_flags(img, p);
  ASSERT_LT(popcount(f), img.size() / 4);
  const GrayImage full = median_filter(img, 3);
  const GrayImage once = despeckle(img, p).first;
  for (std::size_t i = 0; i < img.size(); ++i) {
    EXPECT_EQ(once.data()[i], f.data()[i] ? img.data()[i] : full.data()[i]);
  }
}

TEST(Despeckle, GoodPixelsNeverChangeAndCountsNonIncreasing) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    PhantomSpec spec;
    spec.width = 48;
    spec.height = 48;
    spec.band_thickness_mm = 1.0;
    spec.skin_thickness_px = 4;
    spec.seed = rng();
    const GrayImage noisy = generate_phantom(spec).image;
    const FlagMap first = speckle_flags(noisy, DespeckleParams{});
    const auto [out, rep] = despeckle(noisy, DespeckleParams{});
    for (std::size_t i = 0; i < noisy.size(); ++i) {
      if (first.data()[i]) {
        EXPECT_EQ(out.data()[i], noisy.data()[i]);
      }
    }
    for (std::size_t k = 1; k < rep.flags_per_iteration.size(); ++k) {
      EXPECT_LE(rep.flags_per_iteration[k], rep.flags_per_iteration[k - 1]);
    }
    EXPECT_EQ(rep.iterations_run, static_cast<int>(rep.flags_per_iteration.size()));
  }
}

TEST(Despeckle, IdempotentOnCleanImages) {
  // Two flat halves with +-6 noise: every residual stays below 20.
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> noise(-6, 6);
  for (int trial = 0; trial < 10; ++trial) {
    GrayImage img(24, 24);
    for (int r = 0; r < 24; ++r) {
      for (int c = 0; c < 24; ++c) {
        img(r, c) = static_cast<std::uint8_t>((r < 11 ? 60 : 170) + noise(rng));
      }
    }
    ASSERT_EQ(popcount(speckle_flags(img, DespeckleParams{})), img.size());
    const auto [out, rep] = despeckle(img, DespeckleParams{});
    EXPECT_EQ(out, img);
    EXPECT_EQ(despeckle(out, DespeckleParams{}).first, out);
  }
}

TEST(Despeckle, MaxItersTerminationReported) {
  std::mt19937_64 rng(8);
  const GrayImage img = oracle::random_image(20, 20, rng);
  DespeckleParams p;
  p.max_iters = 1;
  const auto [out, rep] = despeckle(img, p);
  EXPECT_EQ(rep.terminated_by, DespeckleTermination::MaxIters);
  EXPECT_STREQ(to_string(rep.terminated_by), "max-iters");
}

TEST(Despeckle, ImprovesPsnrOnSpeckledPhantom) {
  PhantomSpec spec;
  spec.seed = 99;
  const Phantom ph = generate_phantom(spec);
  const GrayImage out = despeckle(ph.image, DespeckleParams{}).first;
  EXPECT_GT(psnr(out, ph.clean), psnr(ph.image, ph.clean));
  EXPECT_NEAR(psnr(out, ph.clean), oracle::psnr(out, ph.clean), 1e-9);
}
