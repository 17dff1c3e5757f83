#include <doctest.h>

#include "ristcorr/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <set>
#include <vector>

using namespace ristcorr;
namespace fs = std::filesystem;

namespace {

Points random_points(int n, Rng& rng) {
  std::normal_distribution<double> gauss;
  Points p(n, 3);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < 3; ++j) p(i, j) = gauss(rng);
  return p;
}

// Asymptotic Kolmogorov-Smirnov p-value (Stephens' small-sample correction).
double ks_pvalue(double d, int n) {
  const double en = std::sqrt(static_cast<double>(n));
  const double lambda = (en + 0.12 + 0.11 / en) * d;
  double sum = 0.0, sign = 1.0;
  for (int k = 1; k <= 200; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    sum += sign * term;
    sign = -sign;
    if (term < 1e-14) break;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

fs::path temp_dir() {
  auto dir = fs::temp_directory_path() / "ristcorr_geometry_test";
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_SUITE("geometry") {

TEST_CASE("uniform rotation is deterministic for a fixed seed") {
  const Rotation a = sample_uniform_rotation(42);
  const Rotation b = sample_uniform_rotation(42);
  CHECK((a.matrix - b.matrix).cwiseAbs().maxCoeff() == 0.0);
  const Rotation c = sample_uniform_rotation(43);
  CHECK((a.matrix - c.matrix).cwiseAbs().maxCoeff() > 1e-6);
}

TEST_CASE("uniform rotation outputs lie in SO(3)") {
  Rng rng(7);
  for (int i = 0; i < 200; ++i) {
    const Rotation r = sample_uniform_rotation(rng);
    CHECK_NOTHROW(r.validate(1e-6));
  }
}

TEST_CASE("rotation angles follow the Haar density (1-cos t)/pi") {
  const int n = 10000;
  Rng rng(1234);
  std::vector<double> angles(n);
  for (int i = 0; i < n; ++i) angles[i] = sample_uniform_rotation(rng).angle();
  std::sort(angles.begin(), angles.end());
  auto cdf = [](double t) { return (t - std::sin(t)) / std::numbers::pi; };
  double d = 0.0;
  for (int i = 0; i < n; ++i) {
    const double f = cdf(angles[i]);
    d = std::max(d, std::max(f - i / double(n), (i + 1) / double(n) - f));
  }
  const double p = ks_pvalue(d, n);
  INFO("KS statistic ", d, " p-value ", p);
  CHECK(p > 0.01);
}

TEST_CASE("rotate by identity returns the cloud exactly") {
  Rng rng(3);
  PointCloud cloud;
  cloud.points = random_points(17, rng);
  const PointCloud out = rotate(cloud, Rotation::identity());
  CHECK((out.points - cloud.points).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("rotate then rotate by the transpose restores the cloud") {
  Rng rng(4);
  PointCloud cloud;
  cloud.points = random_points(25, rng);
  const Rotation r = sample_uniform_rotation(rng);
  const PointCloud back = rotate(rotate(cloud, r), r.inverse());
  CHECK((back.points - cloud.points).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("hand case: (1,0,0) rotated 90 degrees about z lands on (0,1,0)") {
  Points p(1, 3);
  p << 1.0, 0.0, 0.0;
  const Rotation r = Rotation::about_axis({0, 0, 1}, std::numbers::pi / 2);
  const Points q = rotate_points(p, r);
  CHECK(std::abs(q(0, 0) - 0.0) < 1e-12);
  CHECK(std::abs(q(0, 1) - 1.0) < 1e-12);
  CHECK(std::abs(q(0, 2) - 0.0) < 1e-12);
}

TEST_CASE("rotate preserves pairwise distances") {
  Rng rng(5);
  PointCloud cloud;
  cloud.points = random_points(20, rng);
  const Rotation r = sample_uniform_rotation(rng);
  const PointCloud rotated = rotate(cloud, r);
  for (int i = 0; i < 20; ++i)
    for (int j = i + 1; j < 20; ++j) {
      const double before = (cloud.points.row(i) - cloud.points.row(j)).norm();
      const double after = (rotated.points.row(i) - rotated.points.row(j)).norm();
      CHECK(std::abs(after - before) / before < 1e-6);
    }
}

TEST_CASE("rotate carries labels, keypoints, and category unchanged") {
  Rng rng(6);
  PointCloud cloud;
  cloud.points = random_points(8, rng);
  cloud.labels = {0, 1, 0, 1, 0, 1, 0, 1};
  cloud.keypoints = {{0, 2}, {1, 5}};
  cloud.category = "demo";
  const PointCloud out = rotate(cloud, sample_uniform_rotation(rng));
  CHECK(out.labels == cloud.labels);
  CHECK(out.keypoints == cloud.keypoints);
  CHECK(out.category == cloud.category);
}

TEST_CASE("knn on three collinear points") {
  PointCloud cloud;
  cloud.points.resize(3, 3);
  cloud.points << 0, 0, 0, 1, 0, 0, 2, 0, 0;
  const Eigen::MatrixXi nbrs = knn_graph(cloud, 1);
  CHECK(nbrs(0, 0) == 1);
  CHECK(nbrs(2, 0) == 1);
  // Middle point ties; the lower index wins.
  CHECK(nbrs(1, 0) == 0);
}

TEST_CASE("knn matches the brute-force distance sort") {
  Rng rng(8);
  for (int n : {5, 16, 32, 64}) {
    const Points pts = random_points(n, rng);
    const int k = std::min(4, n - 1);
    const Eigen::MatrixXi nbrs = knn_graph(pts, k);
    for (int i = 0; i < n; ++i) {
      std::vector<std::pair<double, int>> all;
      for (int j = 0; j < n; ++j)
        if (j != i) all.emplace_back((pts.row(i) - pts.row(j)).squaredNorm(), j);
      std::sort(all.begin(), all.end());
      for (int a = 0; a < k; ++a) CHECK(nbrs(i, a) == all[a].second);
    }
  }
}

TEST_CASE("knn prefers a duplicate point and breaks ties by lower index") {
  PointCloud cloud;
  cloud.points.resize(4, 3);
  cloud.points << 0, 0, 0,
                  0, 0, 0,
                  5, 0, 0,
                  0, 0, 0;
  const Eigen::MatrixXi nbrs = knn_graph(cloud, 2);
  CHECK(nbrs(0, 0) == 1);  // duplicate before the far point, lower index first
  CHECK(nbrs(0, 1) == 3);
  CHECK(nbrs(2, 0) == 0);
  CHECK(nbrs(2, 1) == 1);
}

TEST_CASE("knn rejects out-of-range k") {
  Rng rng(9);
  const Points pts = random_points(6, rng);
  CHECK_THROWS_AS(knn_graph(pts, 0), std::invalid_argument);
  CHECK_THROWS_AS(knn_graph(pts, 6), std::invalid_argument);
  CHECK_THROWS_AS(knn_graph(pts, 7), std::invalid_argument);
}

TEST_CASE("normalize centers and scales to the unit sphere") {
  Rng rng(10);
  PointCloud cloud;
  cloud.points = 3.7 * random_points(40, rng);
  cloud.points.rowwise() += Eigen::RowVector3d(5, -2, 1);
  const PointCloud out = normalize_to_unit_sphere(cloud);
  CHECK(out.points.colwise().mean().norm() < 1e-7);
  CHECK(std::abs(out.points.rowwise().norm().maxCoeff() - 1.0) < 1e-7);
}

TEST_CASE("normalize is idempotent") {
  Rng rng(11);
  PointCloud cloud;
  cloud.points = random_points(15, rng);
  const PointCloud once = normalize_to_unit_sphere(cloud);
  const PointCloud twice = normalize_to_unit_sphere(once);
  CHECK((twice.points - once.points).cwiseAbs().maxCoeff() < 1e-7);
}

TEST_CASE("normalize hand case: segment endpoints land on the poles") {
  PointCloud cloud;
  cloud.points.resize(2, 3);
  cloud.points << 0, 0, 0, 0, 0, 2;
  const PointCloud out = normalize_to_unit_sphere(cloud);
  CHECK((out.points.row(0) - Eigen::RowVector3d(0, 0, -1)).norm() < 1e-12);
  CHECK((out.points.row(1) - Eigen::RowVector3d(0, 0, 1)).norm() < 1e-12);
}

TEST_CASE("normalize tolerates a degenerate all-identical cloud") {
  PointCloud cloud;
  cloud.points.resize(3, 3);
  cloud.points << 2, 2, 2, 2, 2, 2, 2, 2, 2;
  const PointCloud out = normalize_to_unit_sphere(cloud);
  CHECK(out.points.cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("identical specs give identical clouds and identity correspondence") {
  SyntheticPairSpec spec;
  spec.family = ShapeFamily::Dumbbell;
  spec.n = 64;
  spec.seed = 77;
  const SyntheticPair pair = generate_synthetic_pair(spec, spec);
  CHECK((pair.source.points - pair.target.points).cwiseAbs().maxCoeff() == 0.0);
  for (int i = 0; i < spec.n; ++i) {
    CHECK(pair.correspondence[i].first == i);
    CHECK(pair.correspondence[i].second == i);
  }
}

TEST_CASE("ellipsoid ground truth survives a z-stretch") {
  SyntheticPairSpec s1, s2;
  s1.family = s2.family = ShapeFamily::Ellipsoid2Part;
  s1.n = s2.n = 48;
  s1.seed = s2.seed = 5;
  s1.instance_params = {1, 1, 1};
  s2.instance_params = {1, 1, 2};
  const SyntheticPair pair = generate_synthetic_pair(s1, s2);
  for (int i = 0; i < s1.n; ++i) {
    const auto [si, ti] = pair.correspondence[i];
    CHECK(std::abs(pair.target.points(ti, 0) - pair.source.points(si, 0)) < 1e-12);
    CHECK(std::abs(pair.target.points(ti, 1) - pair.source.points(si, 1)) < 1e-12);
    CHECK(std::abs(pair.target.points(ti, 2) - 2.0 * pair.source.points(si, 2)) < 1e-12);
    CHECK(pair.source.labels[si] == pair.target.labels[ti]);
  }
}

TEST_CASE("dumbbell instances carry exactly two part labels") {
  SyntheticPairSpec spec;
  spec.family = ShapeFamily::Dumbbell;
  spec.n = 128;
  spec.seed = 3;
  const PointCloud cloud = generate_synthetic_instance(spec);
  const std::set<int> labels(cloud.labels.begin(), cloud.labels.end());
  CHECK(labels == std::set<int>{0, 1});
}

TEST_CASE("synthetic correspondence is a bijection on indices") {
  Rng rng(12);
  for (ShapeFamily family : {ShapeFamily::Ellipsoid2Part, ShapeFamily::Dumbbell,
                             ShapeFamily::BentRod}) {
    const SyntheticPairSpec s1 = random_instance_spec(family, 32, rng);
    SyntheticPairSpec s2 = random_instance_spec(family, 32, rng);
    s2.seed = s1.seed;
    const SyntheticPair pair = generate_synthetic_pair(s1, s2);
    std::set<int> sources, targets;
    for (const auto& [a, b] : pair.correspondence) {
      sources.insert(a);
      targets.insert(b);
    }
    CHECK(static_cast<int>(sources.size()) == 32);
    CHECK(static_cast<int>(targets.size()) == 32);
  }
}

TEST_CASE("pair generation rejects mismatched specs") {
  SyntheticPairSpec s1, s2;
  s1.family = ShapeFamily::Dumbbell;
  s2.family = ShapeFamily::BentRod;
  s1.n = s2.n = 16;
  CHECK_THROWS_AS(generate_synthetic_pair(s1, s2), std::invalid_argument);
  s2.family = ShapeFamily::Dumbbell;
  s2.n = 8;
  CHECK_THROWS_AS(generate_synthetic_pair(s1, s2), std::invalid_argument);
}

TEST_CASE("family names round-trip and unknown names are rejected") {
  for (ShapeFamily family : {ShapeFamily::Ellipsoid2Part, ShapeFamily::Dumbbell,
                             ShapeFamily::BentRod})
    CHECK(family_from_string(to_string(family)) == family);
  CHECK_THROWS_AS(family_from_string("torus"), std::invalid_argument);
}

TEST_CASE("point cloud validation rejects bad instances") {
  PointCloud cloud;
  CHECK_THROWS_AS(cloud.validate(), std::invalid_argument);  // empty
  cloud.points.resize(2, 3);
  cloud.points << 0, 0, 0, 1, 1, 1;
  CHECK_NOTHROW(cloud.validate());
  cloud.labels = {1};
  CHECK_THROWS_AS(cloud.validate(), std::invalid_argument);  // length mismatch
  cloud.labels = {1, 2};
  cloud.keypoints = {{0, 2}};
  CHECK_THROWS_AS(cloud.validate(), std::invalid_argument);  // index range
  cloud.keypoints = {{0, 1}};
  CHECK_NOTHROW(cloud.validate());
  cloud.points(0, 0) = std::nan("");
  CHECK_THROWS_AS(cloud.validate(), std::invalid_argument);  // non-finite
}

TEST_CASE("point cloud text round-trips with labels and comments") {
  const fs::path dir = temp_dir();
  const fs::path file = dir / "cloud.xyz";
  PointCloud cloud;
  cloud.points.resize(3, 3);
  cloud.points << 0.25, -1.5, 3.0, 1e-7, 2.0, -0.125, 4.0, 5.0, 6.0;
  cloud.labels = {2, 0, 7};
  save_point_cloud(cloud, file);
  const PointCloud loaded = load_point_cloud(file);
  CHECK((loaded.points - cloud.points).cwiseAbs().maxCoeff() == 0.0);
  CHECK(loaded.labels == cloud.labels);

  atomic_write_file(file, "# header comment\n1 2 3\n\n4 5 6 # trailing comment\n");
  const PointCloud commented = load_point_cloud(file);
  CHECK(commented.size() == 2);
  CHECK(commented.points(1, 2) == 6.0);
  CHECK_FALSE(commented.has_labels());

  atomic_write_file(file, "1 2\n");
  CHECK_THROWS_AS(load_point_cloud(file), DataError);
  CHECK_THROWS_AS(load_point_cloud(dir / "missing.xyz"), DataError);
}

TEST_CASE("keypoint files round-trip") {
  const fs::path file = temp_dir() / "kp.txt";
  const std::vector<std::pair<int, int>> kps = {{0, 5}, {1, 9}, {2, 0}};
  save_keypoints(kps, file);
  CHECK(load_keypoints(file) == kps);
}

TEST_CASE("manifest JSON round-trips") {
  const fs::path file = temp_dir() / "manifest.json";
  DatasetManifest manifest;
  manifest.category = "dumbbell";
  manifest.pairs.push_back({"a.xyz", "b.xyz", "a_kp.txt", "b_kp.txt"});
  manifest.pairs.push_back({"c.xyz", "d.xyz", "", ""});
  save_manifest(manifest, file);
  const DatasetManifest loaded = load_manifest(file);
  CHECK(loaded.category == "dumbbell");
  REQUIRE(loaded.pairs.size() == 2);
  CHECK(loaded.pairs[0].source == "a.xyz");
  CHECK(loaded.pairs[0].keypoints_target == "b_kp.txt");
  CHECK(loaded.pairs[1].keypoints_source.empty());
  CHECK(loaded.base_dir == file.parent_path());

  atomic_write_file(file, "{not json");
  CHECK_THROWS_AS(load_manifest(file), DataError);
  atomic_write_file(file, "{\"pairs\": []}");
  CHECK_THROWS_AS(load_manifest(file), DataError);
}

}  // TEST_SUITE
