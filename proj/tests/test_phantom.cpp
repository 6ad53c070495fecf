#include <gtest/gtest.h>

#include <filesystem>

#include "ntscan/codec.hpp"
#include "ntscan/measure.hpp"
#include "ntscan/phantom.hpp"
#include "ntscan/report.hpp"

using namespace ntscan;

TEST(Phantom, TwoMillimetreBandIsTwentyRowsTall) {
  PhantomSpec spec;
  spec.band_thickness_mm = 2.0;
  const Phantom ph = generate_phantom(spec);
  for (int c = 0; c < spec.width; ++c) {
    int count = 0, first = -1, last = -1;
    for (int r = 0; r < spec.height; ++r) {
      if (ph.truth_mask(r, c)) {
        ++count;
        if (first < 0) first = r;
        last = r;
      }
    }
    EXPECT_EQ(count, 20);
    EXPECT_EQ(last - first + 1, 20);
  }
  EXPECT_EQ(ph.truth_thickness_mm, 2.0);
  EXPECT_EQ(ph.image.mm_per_px(), std::optional<double>(0.1));
}

TEST(Phantom, SeedChangesOnlyTheSpeckle) {
  PhantomSpec a;
  a.seed = 5;
  PhantomSpec b = a;
  b.seed = 6;
  const Phantom pa = generate_phantom(a);
  const Phantom pb = generate_phantom(b);
  EXPECT_EQ(pa.truth_mask, pb.truth_mask);
  EXPECT_EQ(pa.clean, pb.clean);
  EXPECT_NE(pa.image, pb.image);
}

TEST(Phantom, RejectsUnmeasurableAndOversizedBands) {
  PhantomSpec s;
  s.band_thickness_mm = 0.2;
  EXPECT_THROW(generate_phantom(s), std::invalid_argument);
  s.band_thickness_mm = 0.4;
  EXPECT_NO_THROW(s.validate());
  s.band_thickness_mm = 12.0;
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s = {};
  s.fluid_intensity = 200;
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s = {};
  s.speckle_looks = 0.5;
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s = {};
  s.band_curvature_radius_px = 5.0;
  EXPECT_THROW(s.validate(), std::invalid_argument);
}

TEST(Speckle, HugeLooksLeavesImageNearlyUnchanged) {
  GrayImage img(64, 64);
  for (std::size_t i = 0; i < img.size(); ++i) img.data()[i] = static_cast<std::uint8_t>(i % 200);
  const GrayImage out = apply_speckle(img, 1e6, 3);
  std::size_t close = 0;
  for (std::size_t i = 0; i < img.size(); ++i) {
    close += std::abs(int(out.data()[i]) - int(img.data()[i])) <= 2;
  }
  EXPECT_GE(static_cast<double>(close) / static_cast<double>(img.size()), 0.99);
}

TEST(Speckle, ZerosStayZeros) {
  EXPECT_EQ(apply_speckle(GrayImage(20, 20, 0), 4.0, 9), GrayImage(20, 20, 0));
  EXPECT_THROW(apply_speckle(GrayImage(2, 2, 0), 0.9, 1), std::invalid_argument);
}

TEST(Speckle, PerPixelMeanOverManySeeds) {
  // 16 looks puts the standard error of a 10^4-sample mean at 0.25, so the
  // +-1 band is a four-sigma check, and clipping at 255 is negligible.
  const GrayImage img(3, 1, 100);
  double sum[3] = {0, 0, 0};
  constexpr int kSeeds = 10000;
  for (int s = 0; s < kSeeds; ++s) {
    const GrayImage out = apply_speckle(img, 16.0, static_cast<std::uint64_t>(s));
    for (int c = 0; c < 3; ++c) sum[c] += out(0, c);
  }
  for (double v : sum) EXPECT_NEAR(v / kSeeds, 100.0, 1.0);
}

TEST(Speckle, FactorsHaveUnitMean) {
  const SpeckleOutput out = apply_speckle_counted(GrayImage(300, 300, 50), 4.0, 77);
  EXPECT_LE(out.saturated, 5u);
  double mean = 0;
  for (auto v : out.image.data()) mean += v;
  mean /= 50.0 * static_cast<double>(out.image.size());
  EXPECT_NEAR(mean, 1.0, 0.01);
}

TEST(Phantom, DeterministicForFixedSeed) {
  PhantomSpec s;
  s.band_orientation_deg = 30;
  s.seed = 1234;
  const Phantom a = generate_phantom(s);
  const Phantom b = generate_phantom(s);
  EXPECT_EQ(a.image, b.image);
  EXPECT_EQ(a.truth_mask, b.truth_mask);
  EXPECT_EQ(a.saturation_fraction, b.saturation_fraction);
  EXPECT_GE(a.saturation_fraction, 0.0);
  EXPECT_LT(a.saturation_fraction, 0.05);
}

TEST(Phantom, TruthMaskMeasuresItsOwnThickness) {
  for (double th : {1.0, 1.5, 2.0, 2.5, 3.0}) {
    for (double ang : {0.0, 30.0, 60.0, 90.0, 135.0}) {
      PhantomSpec s;
      s.band_thickness_mm = th;
      s.band_orientation_deg = ang;
      const Phantom ph = generate_phantom(s);
      const auto blobs = connected_components(ph.truth_mask);
      ASSERT_EQ(blobs.size(), 1u) << th << " " << ang;
      const NtMeasurement m = nt_thickness(blobs[0], blob_axis(blobs[0]), s.mm_per_px);
      EXPECT_NEAR(m.thickness_mm, th, s.mm_per_px + 1e-9) << th << " mm at " << ang;
    }
  }
}

TEST(Phantom, CurvedBandKeepsRadialThickness) {
  PhantomSpec s;
  s.band_curvature_radius_px = 90.0;
  s.band_thickness_mm = 2.4;
  const Phantom ph = generate_phantom(s);
  // At the apex column the radial direction is vertical.
  const int apex = s.width / 2;
  int count = 0;
  for (int r = 0; r < s.height; ++r) count += ph.truth_mask(r, apex);
  EXPECT_NEAR(count, 24, 1);
  // Away from the apex the band bends toward the skin side.
  int first_apex = -1, first_edge = -1;
  for (int r = 0; r < s.height && (first_apex < 0 || first_edge < 0); ++r) {
    if (first_apex < 0 && ph.truth_mask(r, apex)) first_apex = r;
    if (first_edge < 0 && ph.truth_mask(r, 10)) first_edge = r;
  }
  EXPECT_GT(first_edge, first_apex);
}

TEST(Phantom, BundleRoundTrips) {
  const auto dir = std::filesystem::temp_directory_path() / "ntscan_test_bundle";
  std::filesystem::remove_all(dir);
  PhantomSpec s;
  s.seed = 8;
  s.band_orientation_deg = 15;
  const Phantom ph = generate_phantom(s);
  write_phantom_bundle(ph, s, dir);
  const GrayImage img = load_image(dir / "image.pgm");
  EXPECT_EQ(img.data(), ph.image.data());
  EXPECT_EQ(load_image(dir / "clean.pgm").data(), ph.clean.data());
  const GrayImage truth = load_image(dir / "truth.pgm");
  for (std::size_t i = 0; i < truth.size(); ++i) {
    EXPECT_EQ(truth.data()[i], ph.truth_mask.data()[i] ? 255 : 0);
  }
  const Json j = read_json_file(dir / "truth.json");
  EXPECT_EQ(j.at("truth_thickness_mm").get<double>(), 2.0);
  EXPECT_EQ(j.at("truth_thickness_px").get<double>(), 20.0);
  const PhantomSpec back = phantom_spec_from_json(j.at("spec"));
  EXPECT_EQ(back.seed, 8u);
  EXPECT_EQ(back.band_orientation_deg, 15.0);
  EXPECT_EQ(generate_phantom(back).image, ph.image);
  std::filesystem::remove_all(dir);
}
