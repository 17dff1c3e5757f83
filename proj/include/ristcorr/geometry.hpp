#pragma once

#include "ristcorr/common.hpp"

#include <array>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace ristcorr {

// A point cloud with optional per-point part labels and semantic keypoints.
// Keypoints are (semantic id, point index) pairs.
struct PointCloud {
  Points points;                              // N x 3
  std::vector<int> labels;                    // empty, or exactly N entries
  std::vector<std::pair<int, int>> keypoints; // (semantic id, point index)
  std::string category;

  int size() const { return static_cast<int>(points.rows()); }
  bool has_labels() const { return !labels.empty(); }

  // Throws std::invalid_argument on violated invariants (empty cloud,
  // non-finite coordinates, label length mismatch, keypoint index range).
  void validate() const;
};

// 3x3 orthonormal matrix with det +1.
struct Rotation {
  Mat3 matrix = Mat3::Identity();

  static Rotation identity() { return {}; }
  static Rotation from_quaternion(double w, double x, double y, double z);
  static Rotation about_axis(const Eigen::Vector3d& axis, double angle);

  Rotation inverse() const { return {matrix.transpose()}; }
  // Rotation angle in [0, pi].
  double angle() const;
  void validate(double tol = 1e-6) const;
};

// Haar-uniform rotation via Shoemake's uniform unit-quaternion construction
// (three uniform variates). Deterministic given the RNG state / seed.
Rotation sample_uniform_rotation(Rng& rng);
Rotation sample_uniform_rotation(std::uint64_t seed);

// Row-vector convention used project-wide: a point p (row) maps to p * R^T,
// i.e. the classical column-vector action R p. Vector-list features use the
// same action per channel row, so one rotation matrix serves both levels.
Points rotate_points(const Points& pts, const Rotation& r);
PointCloud rotate(const PointCloud& cloud, const Rotation& r);

// Indices of the k nearest Euclidean neighbors of each point, self excluded,
// ties broken by lower index. Throws std::invalid_argument unless 1 <= k < N.
Eigen::MatrixXi knn_graph(const Points& pts, int k);
Eigen::MatrixXi knn_graph(const PointCloud& cloud, int k);

// Centers at the centroid and scales so the farthest point has norm 1.
// A degenerate cloud (all points coincident) is returned centered, unscaled.
PointCloud normalize_to_unit_sphere(const PointCloud& cloud);

// ---------------------------------------------------------------------------
// Synthetic shapes for desk-scale experiments.

enum class ShapeFamily { Ellipsoid2Part, Dumbbell, BentRod };

const char* to_string(ShapeFamily family);
ShapeFamily family_from_string(const std::string& name);

struct SyntheticPairSpec {
  ShapeFamily family = ShapeFamily::Dumbbell;
  std::vector<double> instance_params;  // empty -> family default
  int n = 128;
  std::uint64_t seed = 0;
};

struct SyntheticPair {
  PointCloud source;
  PointCloud target;
  // Ground truth (source index, target index); a bijection on indices.
  std::vector<std::pair<int, int>> correspondence;
};

// One shape instance sampled at surface parameters drawn from spec.seed.
// The first few indices hold the family's canonical keypoint locations and
// are registered in the cloud's keypoint list.
PointCloud generate_synthetic_instance(const SyntheticPairSpec& spec);

// Two instances sampled at identical surface-parameter values (drawn from
// spec1.seed), so index i <-> index i is ground-truth correspondence.
// Throws std::invalid_argument if the specs disagree on family or N.
SyntheticPair generate_synthetic_pair(const SyntheticPairSpec& spec1,
                                      const SyntheticPairSpec& spec2);

// Instance parameters drawn from the family's nominal variation ranges.
SyntheticPairSpec random_instance_spec(ShapeFamily family, int n, Rng& rng);

// ---------------------------------------------------------------------------
// File formats.
//
// Point-cloud text: one point per line, "x y z" or "x y z label",
// whitespace-separated, '#' comments ignored.
// Keypoint file: lines "semantic_id point_index".
// Dataset manifest: JSON {"category": str, "pairs": [{"source": path,
// "target": path, "keypoints_source": path?, "keypoints_target": path?}]}.

PointCloud load_point_cloud(const std::filesystem::path& path);
void save_point_cloud(const PointCloud& cloud, const std::filesystem::path& path);

std::vector<std::pair<int, int>> load_keypoints(const std::filesystem::path& path);
void save_keypoints(const std::vector<std::pair<int, int>>& kps,
                    const std::filesystem::path& path);

struct ManifestPair {
  std::string source;
  std::string target;
  std::string keypoints_source;  // optional, empty if absent
  std::string keypoints_target;
};

struct DatasetManifest {
  std::string category;
  std::vector<ManifestPair> pairs;
  // Paths in the manifest are resolved relative to the manifest file.
  std::filesystem::path base_dir;
};

DatasetManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

}  // namespace ristcorr
