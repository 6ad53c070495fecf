#include <gtest/gtest.h>

#include <numbers>
#include <random>

#include "ntscan/measure.hpp"
#include "oracles.hpp"

using namespace ntscan;

namespace {

LabelMap labels_from(const Raster<int>& labels, int count) {
  LabelMap lm;
  lm.labels = labels;
  lm.cluster_count = count;
  lm.cluster_modes.assign(static_cast<std::size_t>(count), FeaturePoint{});
  return lm;
}

Mask rect_mask(int w, int h, int r0, int c0, int rows, int cols) {
  Mask m(w, h, 0);
  for (int r = r0; r < r0 + rows; ++r) {
    for (int c = c0; c < c0 + cols; ++c) m(r, c) = 1;
  }
  return m;
}

NtMeasurement measure_mask(const Mask& m, double mm, int window = 1) {
  const auto blobs = connected_components(m);
  const Blob& b = select_nt_blob(blobs);
  return nt_thickness(b, blob_axis(b), mm, std::nullopt, window);
}

NtMeasurement at(double mm, double weeks) {
  NtMeasurement m;
  m.thickness_mm = mm;
  m.gestation_weeks = weeks;
  return m;
}

}  // namespace

TEST(Binarize, DarkBandOfTwoClusters) {
  GrayImage img(10, 10, 200);
  Raster<int> labels(10, 10, 0);
  for (int r = 4; r < 7; ++r) {
    for (int c = 0; c < 10; ++c) {
      img(r, c) = 20;
      labels(r, c) = 1;
    }
  }
  const Mask m = binarize(labels_from(labels, 2), img);
  for (int r = 0; r < 10; ++r) {
    for (int c = 0; c < 10; ++c) EXPECT_EQ(m(r, c), (r >= 4 && r < 7) ? 1 : 0);
  }
}

TEST(Binarize, ArgminOfThreeMeansAndMergeRange) {
  GrayImage img(9, 1);
  Raster<int> labels(9, 1);
  const int means[3] = {100, 10, 200};
  for (int i = 0; i < 9; ++i) {
    labels.data()[static_cast<std::size_t>(i)] = i / 3;
    img.data()[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(means[i / 3] + (i % 3) - 1);
  }
  const LabelMap lm = labels_from(labels, 3);
  EXPECT_EQ(binarize(lm, img).data(), (std::vector<std::uint8_t>{0, 0, 0, 1, 1, 1, 0, 0, 0}));
  EXPECT_EQ(binarize(lm, img, 89.0).data(), (std::vector<std::uint8_t>{0, 0, 0, 1, 1, 1, 0, 0, 0}));
  EXPECT_EQ(binarize(lm, img, 90.0).data(), (std::vector<std::uint8_t>{1, 1, 1, 1, 1, 1, 0, 0, 0}));
  EXPECT_THROW(binarize(lm, img, -1.0), std::invalid_argument);
}

TEST(Binarize, SingleClusterIsNoTranslucency) {
  EXPECT_THROW(binarize(labels_from(Raster<int>(4, 4, 0), 1), GrayImage(4, 4, 9)), NoTranslucency);
  EXPECT_THROW(binarize(labels_from(Raster<int>(4, 4, 0), 2), GrayImage(5, 4, 9)),
               std::invalid_argument);
}

TEST(OpenMask, RemovesSpursKeepsSolidBlocks) {
  Mask m = rect_mask(12, 12, 2, 2, 5, 5);
  m(7, 7) = 1;  // diagonal spur
  m(10, 1) = 1;  // isolated pixel
  const Mask opened = open_mask(m, 1);
  EXPECT_EQ(opened, rect_mask(12, 12, 2, 2, 5, 5));
  EXPECT_EQ(open_mask(m, 0), m);
  EXPECT_THROW(open_mask(m, -1), std::invalid_argument);
}

TEST(Components, FullSquareAndDiagonalTouch) {
  const auto full = connected_components(Mask(4, 4, 1));
  ASSERT_EQ(full.size(), 1u);
  EXPECT_EQ(full[0].area, 16u);
  EXPECT_DOUBLE_EQ(full[0].centroid.row, 1.5);
  EXPECT_DOUBLE_EQ(full[0].centroid.col, 1.5);

  Mask diag(3, 3, 0);
  diag(0, 0) = 1;
  diag(1, 1) = 1;
  EXPECT_EQ(connected_components(diag).size(), 1u);
  EXPECT_TRUE(connected_components(Mask(3, 3, 0)).empty());
}

TEST(Components, MatchFloodFillOracle) {
  std::mt19937_64 rng(50);
  std::bernoulli_distribution on(0.35);
  for (int trial = 0; trial < 40; ++trial) {
    Mask m(17, 13, 0);
    for (auto& v : m.data()) v = on(rng) ? 1 : 0;
    const auto blobs = connected_components(m);
    auto expect = oracle::components(m);
    std::stable_sort(expect.begin(), expect.end(),
                     [](const auto& a, const auto& b) { return a.area > b.area; });
    ASSERT_EQ(blobs.size(), expect.size());
    for (std::size_t i = 0; i < blobs.size(); ++i) {
      EXPECT_EQ(blobs[i].area, expect[i].area);
      EXPECT_EQ(blobs[i].pixels.front(), (PixelPos{expect[i].first_row, expect[i].first_col}));
      EXPECT_NEAR(blobs[i].centroid.row, expect[i].mean_row, 1e-12);
      EXPECT_NEAR(blobs[i].centroid.col, expect[i].mean_col, 1e-12);
    }
  }
}

TEST(SelectBlob, ThinBandBeatsSquare) {
  Mask m = rect_mask(64, 40, 2, 2, 12, 12);
  for (int r = 30; r < 34; ++r) {
    for (int c = 10; c < 50; ++c) m(r, c) = 1;
  }
  const auto blobs = connected_components(m);
  ASSERT_EQ(blobs.size(), 2u);
  const Blob& chosen = select_nt_blob(blobs);
  EXPECT_EQ(chosen.area, 160u);
  // Eigenvalue ratio of a 40x4 block: (40^2/12) / (4^2/12) = 100.
  EXPECT_NEAR(chosen.elongation(), 100.0, 1e-9);
  EXPECT_NEAR(blobs[1].elongation(), 1.0, 1e-12);
  EXPECT_THROW(select_nt_blob({}), NoTranslucency);
}

TEST(SelectBlob, IdenticalBlobsFirstInRowMajorOrderWins) {
  Mask m = rect_mask(40, 20, 12, 2, 3, 10);
  for (int r = 2; r < 5; ++r) {
    for (int c = 25; c < 35; ++c) m(r, c) = 1;
  }
  const auto blobs = connected_components(m);
  ASSERT_EQ(blobs.size(), 2u);
  EXPECT_EQ(&select_nt_blob(blobs), &blobs[0]);
  EXPECT_EQ(blobs[0].pixels.front(), (PixelPos{2, 25}));
}

TEST(BlobAxis, LinesAndSquare) {
  std::vector<PixelPos> line;
  for (int c = 0; c < 50; ++c) line.push_back({7, c});
  const BlobAxis h = blob_axis(make_blob(line));
  EXPECT_EQ(h.direction, (Point2{0.0, 1.0}));

  std::vector<PixelPos> diag;
  for (int i = 0; i < 30; ++i) diag.push_back({i, i});
  const BlobAxis d = blob_axis(make_blob(diag));
  EXPECT_NEAR(d.direction.row, std::numbers::sqrt2 / 2, 1e-12);
  EXPECT_NEAR(d.direction.col, std::numbers::sqrt2 / 2, 1e-12);

  std::vector<PixelPos> anti;
  for (int i = 0; i < 30; ++i) anti.push_back({i, 29 - i});
  const BlobAxis ad = blob_axis(make_blob(anti));
  EXPECT_GT(ad.direction.row, 0.0);
  EXPECT_NEAR(ad.direction.col, -std::numbers::sqrt2 / 2, 1e-12);

  EXPECT_THROW(blob_axis(connected_components(Mask(6, 6, 1))[0]), AxisIllDefined);
  EXPECT_THROW(blob_axis(make_blob({{0, 0}, {0, 1}})), AxisIllDefined);
}

TEST(Thickness, AxisAlignedRectangle) {
  const NtMeasurement m = measure_mask(rect_mask(80, 60, 20, 10, 20, 50), 0.1);
  EXPECT_DOUBLE_EQ(m.thickness_px, 20.0);
  EXPECT_NEAR(m.thickness_mm, 2.0, 1e-12);
  EXPECT_EQ(m.blob_area_px, 1000u);
  EXPECT_NEAR(std::abs(m.chord.first.row - m.chord.second.row), 20.0, 1e-12);
  EXPECT_NEAR(m.chord.first.col, m.chord.second.col, 1e-12);
}

TEST(Thickness, RotatedRectangleWithinOnePixel) {
  const Mask m = oracle::rotated_rect(100, 50, 20, 30);
  EXPECT_NEAR(measure_mask(m, 0.1).thickness_mm, 2.0, 0.1 + 1e-9);
}

TEST(Thickness, MissingCalibrationAndBadWindow) {
  const auto blobs = connected_components(rect_mask(40, 40, 5, 5, 6, 30));
  const BlobAxis axis = blob_axis(blobs[0]);
  EXPECT_THROW(nt_thickness(blobs[0], axis, std::nullopt), CalibrationRequired);
  EXPECT_THROW(nt_thickness(blobs[0], axis, 0.0), std::invalid_argument);
  EXPECT_THROW(nt_thickness(blobs[0], axis, 0.1, std::nullopt, 4), std::invalid_argument);
}

TEST(Thickness, MedianProfileIgnoresANarrowBulge) {
  Mask m = rect_mask(80, 60, 20, 10, 20, 50);
  for (int r = 14; r < 20; ++r) m(r, 40) = 1;  // one-column spike on top
  // The spike tilts the principal axis very slightly.
  EXPECT_NEAR(measure_mask(m, 0.1, 1).thickness_px, 26.0, 0.01);
  EXPECT_NEAR(measure_mask(m, 0.1, 5).thickness_px, 20.0, 0.01);
}

TEST(Thickness, CalibrationDoublingStaysWithinOneOriginalPixel) {
  for (double deg : {0.0, 20.0, 45.0, 70.0}) {
    const double coarse = measure_mask(oracle::rotated_rect(100, 50, 20, deg), 0.1).thickness_mm;
    const double fine = measure_mask(oracle::rotated_rect(200, 100, 40, deg), 0.05).thickness_mm;
    EXPECT_LE(std::abs(fine - coarse), 0.1 + 1e-9) << deg;
  }
}

TEST(Thickness, RotationByFifteenDegreeStepsWithinTwoPixels) {
  const double base = measure_mask(oracle::rotated_rect(100, 60, 18, 0), 0.1).thickness_mm;
  for (int k = 1; k < 24; ++k) {
    const double mm = measure_mask(oracle::rotated_rect(100, 60, 18, 15.0 * k), 0.1).thickness_mm;
    EXPECT_LE(std::abs(mm - base), 2 * 0.1 + 1e-9) << 15 * k << " deg";
  }
}

TEST(Thickness, ChordIsPerpendicularAndEndsOnTheBoundary) {
  for (double deg : {0.0, 15.0, 30.0, 60.0, 90.0, 135.0}) {
    const Mask m = oracle::rotated_rect(90, 50, 14, deg);
    const auto blobs = connected_components(m);
    const BlobAxis axis = blob_axis(blobs[0]);
    const NtMeasurement meas = nt_thickness(blobs[0], axis, 0.1);
    const double vr = meas.chord.second.row - meas.chord.first.row;
    const double vc = meas.chord.second.col - meas.chord.first.col;
    const double len = std::hypot(vr, vc);
    EXPECT_NEAR(len, meas.thickness_px, 1e-9);
    EXPECT_NEAR((vr * axis.direction.row + vc * axis.direction.col) / len, 0.0, 1e-6);
    // Half a pixel inward from each end sits on a boundary pixel centre, up
    // to the half-bin slack along the axis.
    for (int end = 0; end < 2; ++end) {
      const Point2 p = end == 0 ? meas.chord.first : meas.chord.second;
      const double sgn = end == 0 ? 1.0 : -1.0;
      const Point2 in{p.row + sgn * 0.5 * vr / len, p.col + sgn * 0.5 * vc / len};
      double best = 1e9;
      PixelPos nearest{};
      for (const auto& px : blobs[0].pixels) {
        const double d = std::hypot(px.row - in.row, px.col - in.col);
        if (d < best) {
          best = d;
          nearest = px;
        }
      }
      EXPECT_LE(best, 0.5 + 1e-9) << deg;
      bool boundary = false;
      for (auto [dr, dc] : {std::pair{-1, 0}, {1, 0}, {0, -1}, {0, 1}}) {
        boundary = boundary || !m.contains(nearest.row + dr, nearest.col + dc) ||
                   !m(nearest.row + dr, nearest.col + dc);
      }
      EXPECT_TRUE(boundary) << deg;
    }
  }
}

TEST(Classify, DecisionPoints) {
  const NormTable norms = default_norm_table();
  const Classification a = classify(at(2.6, 12), norms);
  EXPECT_EQ(a.status, NtStatus::Increased);
  EXPECT_EQ(a.rule_fired, "global_cutoff");

  const Classification b = classify(at(1.87, 14), norms);
  EXPECT_EQ(b.status, NtStatus::Normal);
  EXPECT_EQ(b.rule_fired, "none");

  const Classification c = classify(at(2.13, 14), norms);
  EXPECT_EQ(c.status, NtStatus::Increased);
  EXPECT_EQ(c.rule_fired, "week_mean_plus_sd");
  ASSERT_TRUE(c.week_threshold_mm);
  EXPECT_NEAR(*c.week_threshold_mm, 2.12, 1e-12);

  EXPECT_EQ(classify(at(2.12, 14), norms).status, NtStatus::Normal);
  EXPECT_EQ(classify(at(2.5, 10.5), norms).status, NtStatus::Normal);
  EXPECT_EQ(classify(at(2.51, 10.5), norms).rule_fired, "global_cutoff");
}

TEST(Classify, WeekRangeAndMissingWeeks) {
  const NormTable norms = default_norm_table();
  EXPECT_THROW(classify(at(1.0, 9.9), norms), std::invalid_argument);
  EXPECT_THROW(classify(at(1.0, 15.0), norms), std::invalid_argument);
  NtMeasurement m;
  m.thickness_mm = 1.0;
  EXPECT_THROW(classify(m, norms), std::invalid_argument);
}

TEST(Classify, MonotoneInThickness) {
  const NormTable norms = default_norm_table();
  for (double weeks : {10.2, 11.0, 12.5, 13.9, 14.0}) {
    bool increased = false;
    for (int k = 0; k <= 400; ++k) {
      const bool now = classify(at(0.01 * k, weeks), norms).status == NtStatus::Increased;
      EXPECT_TRUE(now || !increased) << weeks << " " << 0.01 * k;
      increased = now;
    }
  }
}

TEST(Cohort, TextbookTripleAndSingleSubject) {
  const CohortStats s =
      aggregate_cohort({at(1.0, 13.2), at(2.0, 13.0), at(3.0, 13.9), at(1.5, 12)});
  ASSERT_EQ(s.weeks.size(), 2u);
  EXPECT_EQ(s.weeks[0].week, 12);
  EXPECT_EQ(s.weeks[0].n, 1u);
  EXPECT_DOUBLE_EQ(s.weeks[0].mean_mm, 1.5);
  EXPECT_FALSE(s.weeks[0].sd_defined);
  EXPECT_EQ(s.weeks[0].sd_mm, 0.0);
  EXPECT_EQ(s.weeks[1].week, 13);
  EXPECT_EQ(s.weeks[1].n, 3u);
  EXPECT_DOUBLE_EQ(s.weeks[1].mean_mm, 2.0);
  EXPECT_DOUBLE_EQ(s.weeks[1].sd_mm, 1.0);
  EXPECT_DOUBLE_EQ(s.weeks[1].variance_mm2, 1.0);
  EXPECT_TRUE(aggregate_cohort({}).weeks.empty());
  EXPECT_THROW(aggregate_cohort({NtMeasurement{}}), std::invalid_argument);
}

TEST(Cohort, MatchesTwoPassOracleAndIgnoresOrder) {
  std::mt19937_64 rng(51);
  std::normal_distribution<double> g(1.6, 0.4);
  std::uniform_int_distribution<int> week(11, 14);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<NtMeasurement> ms;
    std::map<int, std::vector<double>> by_week;
    for (int i = 0; i < 60; ++i) {
      const int w = week(rng);
      const double v = g(rng);
      ms.push_back(at(v, w + 0.3));
      by_week[w].push_back(v);
    }
    const CohortStats s = aggregate_cohort(ms);
    std::shuffle(ms.begin(), ms.end(), rng);
    const CohortStats t = aggregate_cohort(ms);
    ASSERT_EQ(s.weeks.size(), by_week.size());
    for (std::size_t i = 0; i < s.weeks.size(); ++i) {
      const auto o = oracle::two_pass(by_week[s.weeks[i].week]);
      EXPECT_EQ(s.weeks[i].n, by_week[s.weeks[i].week].size());
      EXPECT_NEAR(s.weeks[i].mean_mm, o.mean, 1e-12);
      EXPECT_NEAR(s.weeks[i].sd_mm, o.sd, 1e-12);
      EXPECT_NEAR(s.weeks[i].variance_mm2, o.var, 1e-12);
      EXPECT_NEAR(t.weeks[i].mean_mm, s.weeks[i].mean_mm, 1e-12);
      EXPECT_NEAR(t.weeks[i].sd_mm, s.weeks[i].sd_mm, 1e-12);
    }
  }
}
