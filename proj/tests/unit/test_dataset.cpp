#include <tubegcn/dataset.hpp>

#include <gtest/gtest.h>

#include <unistd.h>
#include <set>

using namespace tubegcn;

namespace {

io::fs::path scratch_dir(const std::string& name) {
  const auto d = io::fs::temp_directory_path() / ("tubegcn_dataset_" + name + "_" + std::to_string(::getpid()));
  io::fs::remove_all(d);
  io::fs::create_directories(d);
  return d;
}

PhantomSpec straight(double radius, double length = 8.0) {
  PhantomSpec s;
  s.curve.type = CurveType::straight;
  s.curve.start = Vec3(0, 0, 0);
  s.curve.end = Vec3(0, 0, length);
  s.radius.nominal_mm = radius;
  s.blur_sigma_mm = 0.0;
  return s;
}

}  // namespace

TEST(PrepareSample, GraphFeaturesAndRadiiLineUp) {
  const auto ph = generate_phantom(straight(1.5));
  const auto s = prepare_sample("seg", "pat", ph);
  EXPECT_EQ(s.graph.n_planes, static_cast<int>(s.centerline.size()));
  EXPECT_EQ(s.graph.n_angles, 24);
  ASSERT_TRUE(s.graph.has_features());
  ASSERT_TRUE(s.graph.has_radii());
  EXPECT_EQ(s.graph.features.cols(), 32);
  EXPECT_FALSE(s.diseased);
  for (double r : s.graph.radii) EXPECT_NEAR(r, 1.5, 1e-12);
  // Without blur or noise, ray samples inside the lumen see 400 HU and the
  // samples beyond the wall see 50 HU.
  for (int v = 0; v < s.graph.vertex_count(); ++v) {
    EXPECT_NEAR(s.graph.features(v, 0), 0.4, 1e-6);
    EXPECT_NEAR(s.graph.features(v, 10), 0.4, 1e-6);
    EXPECT_NEAR(s.graph.features(v, 20), 0.05, 1e-6);
    EXPECT_NEAR(s.graph.features(v, 31), 0.05, 1e-6);
  }
}

TEST(PrepareSample, ReferenceRadiiFollowTheNarrowing) {
  PhantomSpec spec = straight(2.0, 12.0);
  spec.radius.stenoses.push_back({6.0, 4.0, 0.5});
  const auto s = prepare_sample("seg", "pat", generate_phantom(spec));
  EXPECT_TRUE(s.diseased);
  const auto arc = s.centerline.arclengths();
  for (int i = 0; i < s.graph.n_planes; ++i)
    for (int a = 0; a < 24; ++a) EXPECT_NEAR(s.graph.radii[s.graph.vertex(i, a)], spec.radius.at(arc[i]), 1e-9);
  EXPECT_NEAR(s.graph.radii[s.graph.vertex(12, 0)], 1.0, 1e-9);
}

TEST(SegmentFiles, WriteThenLoadReproducesTheSample) {
  const auto dir = scratch_dir("roundtrip");
  PhantomSpec spec = straight(1.2);
  spec.noise_sigma_hu = 20.0;
  spec.seed = 4;
  const auto ph = generate_phantom(spec);
  const auto files = segment_files::write_phantom(dir / "a", ph);
  ASSERT_EQ(files.size(), 4u);
  for (const auto& f : files) EXPECT_TRUE(io::fs::exists(f)) << f;
  const auto direct = prepare_sample("a", "a", ph);
  const auto loaded = segment_files::load_sample(dir / "a", "a", "a", true);
  EXPECT_EQ(loaded.graph.features, direct.graph.features);
  EXPECT_EQ(loaded.graph.radii, direct.graph.radii);
  io::fs::remove_all(dir);
}

TEST(SegmentFiles, MissingTruthIsRejectedOnlyWhenRequired) {
  const auto dir = scratch_dir("notruth");
  segment_files::write_phantom(dir / "a", generate_phantom(straight(1.2)));
  io::fs::remove(dir / "a" / segment_files::kTruth);
  EXPECT_FALSE(segment_files::load_sample(dir / "a", "a", "a", false).graph.has_radii());
  try {
    segment_files::load_sample(dir / "a", "seg-a", "a", true);
    FAIL() << "expected a validation error";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("seg-a"), std::string::npos);
  }
  io::fs::remove_all(dir);
}

TEST(SegmentFiles, ListingFromIndexDirectoryScanAndSingleSegment) {
  const auto dir = scratch_dir("list");
  const auto ph = generate_phantom(straight(1.2, 4.0));
  for (const char* name : {"c", "a", "b"}) segment_files::write_phantom(dir / name, ph);
  io::fs::create_directories(dir / "not-a-segment");

  const auto scanned = segment_files::list_segments(dir);
  ASSERT_EQ(scanned.size(), 3u);
  EXPECT_EQ(scanned[0].id, "a");
  EXPECT_EQ(scanned[2].id, "c");

  const auto single = segment_files::list_segments(dir / "b");
  ASSERT_EQ(single.size(), 1u);
  EXPECT_EQ(single[0].dir, ".");

  io::write_json(dir / segment_files::kIndex,
                 {{"segments", {{{"id", "x"}, {"patient", "p1"}, {"dir", "c"}, {"split", "test"}}, {{"id", "y"}, {"dir", "a"}}}}});
  const auto indexed = segment_files::list_segments(dir);
  ASSERT_EQ(indexed.size(), 2u);
  EXPECT_EQ(indexed[0].patient, "p1");
  EXPECT_EQ(indexed[0].split, "test");
  EXPECT_EQ(indexed[1].patient, "y");
  EXPECT_EQ(indexed[1].split, "");
  io::fs::remove_all(dir);
}

TEST(RandomPhantom, DeterministicValidAndVaried) {
  std::set<int> kinds;
  int diseased = 0, calcified = 0;
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const auto a = random_phantom_spec(seed);
    EXPECT_EQ(phantom_io::to_json(a), phantom_io::to_json(random_phantom_spec(seed)));
    EXPECT_NO_THROW(validate(a));
    EXPECT_GE(a.radius.min_base(), 1.0);
    EXPECT_LE(a.radius.max_base(), 2.5);
    EXPECT_DOUBLE_EQ(a.noise_sigma_hu, 20.0);
    EXPECT_DOUBLE_EQ(a.blur_sigma_mm, 0.3);
    kinds.insert(static_cast<int>(a.curve.type));
    diseased += !a.radius.stenoses.empty();
    calcified += !a.calcifications.empty();
  }
  EXPECT_EQ(kinds.size(), 3u);
  EXPECT_GT(diseased, 5);
  EXPECT_GT(calcified, 5);
}

TEST(RandomPhantom, CalcificationsSitOutsideTheLumen) {
  RandomPhantomOptions opt;
  opt.force_calcification = true;
  for (std::uint64_t seed = 100; seed < 110; ++seed) {
    const auto spec = random_phantom_spec(seed, opt);
    ASSERT_FALSE(spec.calcifications.empty());
    const auto pc = painted_curve(spec);
    for (const auto& c : spec.calcifications) {
      EXPECT_DOUBLE_EQ(c.hu, 900.0);
      for (std::size_t i = 0; i < pc.visible.size(); ++i) {
        const double s = pc.arclength[i + (spec.end_extension_mm > 0 ? 1 : 0)];
        EXPECT_GE((pc.visible[i] - c.center).norm(), spec.radius.at(s) + c.radius_mm - 0.05) << "seed " << seed;
      }
    }
  }
}
