#include "ristcorr/geometry.hpp"

#include <Eigen/Geometry>

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

namespace ristcorr {

namespace {
constexpr double kTwoPi = 2.0 * std::numbers::pi;
}

void atomic_write_file(const std::filesystem::path& path, const std::string& content) {
  namespace fs = std::filesystem;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open for writing: " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw DataError("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

void PointCloud::validate() const {
  if (points.rows() < 1) throw std::invalid_argument("point cloud must contain at least one point");
  if (!points.allFinite()) throw std::invalid_argument("point cloud contains non-finite coordinates");
  if (!labels.empty() && static_cast<int>(labels.size()) != size())
    throw std::invalid_argument("label array length does not match point count");
  for (const auto& [sem, idx] : keypoints) {
    if (idx < 0 || idx >= size())
      throw std::invalid_argument("keypoint index out of range: " + std::to_string(idx));
    (void)sem;
  }
}

Rotation Rotation::from_quaternion(double w, double x, double y, double z) {
  Eigen::Quaterniond q(w, x, y, z);
  q.normalize();
  return {q.toRotationMatrix()};
}

Rotation Rotation::about_axis(const Eigen::Vector3d& axis, double angle) {
  return {Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix()};
}

double Rotation::angle() const {
  double c = (matrix.trace() - 1.0) / 2.0;
  return std::acos(std::clamp(c, -1.0, 1.0));
}

void Rotation::validate(double tol) const {
  Mat3 err = matrix.transpose() * matrix - Mat3::Identity();
  if (err.cwiseAbs().maxCoeff() > tol)
    throw std::invalid_argument("rotation matrix is not orthonormal");
  if (std::abs(matrix.determinant() - 1.0) > tol)
    throw std::invalid_argument("rotation matrix determinant is not +1");
}

Rotation sample_uniform_rotation(Rng& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double u1 = unit(rng);
  const double u2 = unit(rng);
  const double u3 = unit(rng);
  const double r1 = std::sqrt(1.0 - u1);
  const double r2 = std::sqrt(u1);
  const double t1 = kTwoPi * u2;
  const double t2 = kTwoPi * u3;
  return Rotation::from_quaternion(std::cos(t2) * r2, std::sin(t1) * r1,
                                   std::cos(t1) * r1, std::sin(t2) * r2);
}

Rotation sample_uniform_rotation(std::uint64_t seed) {
  Rng rng(seed);
  return sample_uniform_rotation(rng);
}

Points rotate_points(const Points& pts, const Rotation& r) {
  return pts * r.matrix.transpose();
}

PointCloud rotate(const PointCloud& cloud, const Rotation& r) {
  PointCloud out = cloud;
  out.points = rotate_points(cloud.points, r);
  return out;
}

Eigen::MatrixXi knn_graph(const Points& pts, int k) {
  const int n = static_cast<int>(pts.rows());
  if (k < 1 || k >= n)
    throw std::invalid_argument("knn_graph requires 1 <= k < N, got k=" + std::to_string(k) +
                                " N=" + std::to_string(n));
  Eigen::MatrixXi nbrs(n, k);
  std::vector<std::pair<double, int>> order;
  order.reserve(n - 1);
  for (int i = 0; i < n; ++i) {
    order.clear();
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      order.emplace_back((pts.row(i) - pts.row(j)).squaredNorm(), j);
    }
    std::partial_sort(order.begin(), order.begin() + k, order.end());
    for (int a = 0; a < k; ++a) nbrs(i, a) = order[a].second;
  }
  return nbrs;
}

Eigen::MatrixXi knn_graph(const PointCloud& cloud, int k) {
  return knn_graph(cloud.points, k);
}

PointCloud normalize_to_unit_sphere(const PointCloud& cloud) {
  cloud.validate();
  PointCloud out = cloud;
  Eigen::RowVector3d centroid = cloud.points.colwise().mean();
  out.points = cloud.points.rowwise() - centroid;
  double scale = out.points.rowwise().norm().maxCoeff();
  if (scale > 1e-15) out.points /= scale;
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic shapes.
//
// Every family has a low-dimensional surface parameterization; two instances
// sampled at the same parameter values correspond point-by-point, and part
// labels are functions of the parameters alone, so they survive instance
// deformation.

namespace {

struct SurfaceParam {
  double a = 0;  // family-specific (z or t)
  double b = 0;  // family-specific (azimuth)
  int region = 0;
};

std::vector<double> default_params(ShapeFamily family) {
  switch (family) {
    case ShapeFamily::Ellipsoid2Part: return {1.0, 1.0, 1.0};
    case ShapeFamily::Dumbbell: return {0.9, 0.5, 1.9};
    case ShapeFamily::BentRod: return {2.0, 0.3, 0.7};
  }
  throw std::invalid_argument("unknown shape family");
}

// Canonical keypoint parameter locations, fixed per family. They occupy the
// first indices of every generated instance.
std::vector<SurfaceParam> keypoint_params(ShapeFamily family) {
  switch (family) {
    case ShapeFamily::Ellipsoid2Part:
      return {{1.0, 0.0, 1}, {-1.0, 0.0, 0}, {0.0, 0.0, 1}, {0.0, std::numbers::pi / 2, 1}};
    case ShapeFamily::Dumbbell:
      return {{-1.0, 0.0, 0}, {1.0, 0.0, 1}, {0.0, 0.0, 0}, {0.0, 0.0, 1}};
    case ShapeFamily::BentRod:
      return {{0.0, 0.0, 0}, {0.5, 0.0, 1}, {1.0, 0.0, 1}};
  }
  throw std::invalid_argument("unknown shape family");
}

std::vector<SurfaceParam> sample_params(ShapeFamily family, int n, std::uint64_t seed) {
  auto params = keypoint_params(family);
  if (n < static_cast<int>(params.size()))
    throw std::invalid_argument("synthetic N too small for keypoint set");
  params.resize(n);
  Rng rng(seed ^ 0x5350415241u);  // decorrelate from other uses of the seed
  std::uniform_real_distribution<double> sym(-1.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int i = static_cast<int>(keypoint_params(family).size()); i < n; ++i) {
    SurfaceParam p;
    switch (family) {
      case ShapeFamily::Ellipsoid2Part:
        p.a = sym(rng);
        p.b = kTwoPi * unit(rng);
        p.region = p.a >= 0 ? 1 : 0;
        break;
      case ShapeFamily::Dumbbell:
        p.region = unit(rng) < 0.5 ? 0 : 1;
        p.a = sym(rng);
        p.b = kTwoPi * unit(rng);
        break;
      case ShapeFamily::BentRod:
        p.a = unit(rng);
        p.b = kTwoPi * unit(rng);
        p.region = p.a < 0.5 ? 0 : 1;
        break;
    }
    params[i] = p;
  }
  return params;
}

Eigen::RowVector3d sphere_dir(double z, double azimuth) {
  double s = std::sqrt(std::max(0.0, 1.0 - z * z));
  return {s * std::cos(azimuth), s * std::sin(azimuth), z};
}

Eigen::RowVector3d surface_point(ShapeFamily family, const SurfaceParam& p,
                                 const std::vector<double>& ip) {
  switch (family) {
    case ShapeFamily::Ellipsoid2Part: {
      Eigen::RowVector3d n = sphere_dir(p.a, p.b);
      return {ip[0] * n.x(), ip[1] * n.y(), ip[2] * n.z()};
    }
    case ShapeFamily::Dumbbell: {
      const double radius = p.region == 0 ? ip[0] : ip[1];
      const double cz = (p.region == 0 ? -1.0 : 1.0) * ip[2] / 2.0;
      return Eigen::RowVector3d{0.0, 0.0, cz} + radius * sphere_dir(p.a, p.b);
    }
    case ShapeFamily::BentRod: {
      const double length = ip[0], radius = ip[1], bend = ip[2];
      Eigen::RowVector3d center, n1{1.0, 0.0, 0.0}, n2;
      if (p.a < 0.5) {
        center = {0.0, 0.0, length * p.a};
        n2 = {0.0, 1.0, 0.0};
      } else {
        Eigen::RowVector3d dir{0.0, std::sin(bend), std::cos(bend)};
        center = Eigen::RowVector3d{0.0, 0.0, length / 2.0} + length * (p.a - 0.5) * dir;
        n2 = {0.0, std::cos(bend), -std::sin(bend)};
      }
      return center + radius * (std::cos(p.b) * n1 + std::sin(p.b) * n2);
    }
  }
  throw std::invalid_argument("unknown shape family");
}

PointCloud instantiate(const SyntheticPairSpec& spec, const std::vector<SurfaceParam>& params) {
  const auto ip = spec.instance_params.empty() ? default_params(spec.family) : spec.instance_params;
  if (ip.size() != 3) throw std::invalid_argument("synthetic instance params must have 3 entries");
  PointCloud cloud;
  cloud.points.resize(spec.n, 3);
  cloud.labels.resize(spec.n);
  for (int i = 0; i < spec.n; ++i) {
    cloud.points.row(i) = surface_point(spec.family, params[i], ip);
    cloud.labels[i] = params[i].region;
  }
  const int n_kp = static_cast<int>(keypoint_params(spec.family).size());
  for (int m = 0; m < n_kp; ++m) cloud.keypoints.emplace_back(m, m);
  cloud.category = to_string(spec.family);
  return cloud;
}

}  // namespace

const char* to_string(ShapeFamily family) {
  switch (family) {
    case ShapeFamily::Ellipsoid2Part: return "ellipsoid-2part";
    case ShapeFamily::Dumbbell: return "dumbbell";
    case ShapeFamily::BentRod: return "bent-rod";
  }
  return "unknown";
}

ShapeFamily family_from_string(const std::string& name) {
  if (name == "ellipsoid-2part") return ShapeFamily::Ellipsoid2Part;
  if (name == "dumbbell") return ShapeFamily::Dumbbell;
  if (name == "bent-rod") return ShapeFamily::BentRod;
  throw std::invalid_argument("unknown shape family: " + name);
}

PointCloud generate_synthetic_instance(const SyntheticPairSpec& spec) {
  if (spec.n < 1) throw std::invalid_argument("synthetic N must be positive");
  return instantiate(spec, sample_params(spec.family, spec.n, spec.seed));
}

SyntheticPair generate_synthetic_pair(const SyntheticPairSpec& spec1,
                                      const SyntheticPairSpec& spec2) {
  if (spec1.family != spec2.family)
    throw std::invalid_argument("synthetic pair specs must share a family");
  if (spec1.n != spec2.n)
    throw std::invalid_argument("synthetic pair specs must share N");
  if (spec1.n < 1) throw std::invalid_argument("synthetic N must be positive");
  // Shared parameterization comes from the first spec's seed.
  const auto params = sample_params(spec1.family, spec1.n, spec1.seed);
  SyntheticPair pair;
  pair.source = instantiate(spec1, params);
  pair.target = instantiate(spec2, params);
  pair.correspondence.reserve(spec1.n);
  for (int i = 0; i < spec1.n; ++i) pair.correspondence.emplace_back(i, i);
  return pair;
}

SyntheticPairSpec random_instance_spec(ShapeFamily family, int n, Rng& rng) {
  auto in_range = [&rng](double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
  };
  SyntheticPairSpec spec;
  spec.family = family;
  spec.n = n;
  switch (family) {
    case ShapeFamily::Ellipsoid2Part:
      spec.instance_params = {in_range(0.6, 1.4), in_range(0.6, 1.4), in_range(0.6, 1.4)};
      break;
    case ShapeFamily::Dumbbell:
      spec.instance_params = {in_range(0.75, 1.0), in_range(0.4, 0.55), in_range(1.6, 2.2)};
      break;
    case ShapeFamily::BentRod:
      spec.instance_params = {in_range(1.6, 2.4), in_range(0.25, 0.4), in_range(0.3, 1.2)};
      break;
  }
  spec.seed = rng();
  return spec;
}

// ---------------------------------------------------------------------------
// File I/O.

PointCloud load_point_cloud(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open point cloud file: " + path.string());
  PointCloud cloud;
  std::vector<Eigen::RowVector3d> pts;
  std::vector<int> labels;
  bool any_label = false;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ss(line);
    double x, y, z;
    if (!(ss >> x)) continue;  // blank line
    if (!(ss >> y >> z))
      throw DataError("malformed point at " + path.string() + ":" + std::to_string(lineno));
    pts.emplace_back(x, y, z);
    int label;
    if (ss >> label) {
      any_label = true;
      labels.push_back(label);
    } else {
      labels.push_back(0);
    }
  }
  if (pts.empty()) throw DataError("empty point cloud file: " + path.string());
  cloud.points.resize(static_cast<int>(pts.size()), 3);
  for (int i = 0; i < static_cast<int>(pts.size()); ++i) cloud.points.row(i) = pts[i];
  if (any_label) cloud.labels = std::move(labels);
  cloud.validate();
  return cloud;
}

void save_point_cloud(const PointCloud& cloud, const std::filesystem::path& path) {
  cloud.validate();
  std::ostringstream out;
  out.precision(17);
  for (int i = 0; i < cloud.size(); ++i) {
    out << cloud.points(i, 0) << ' ' << cloud.points(i, 1) << ' ' << cloud.points(i, 2);
    if (cloud.has_labels()) out << ' ' << cloud.labels[i];
    out << '\n';
  }
  atomic_write_file(path, out.str());
}

std::vector<std::pair<int, int>> load_keypoints(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open keypoint file: " + path.string());
  std::vector<std::pair<int, int>> kps;
  std::string line;
  while (std::getline(in, line)) {
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ss(line);
    int sem, idx;
    if (ss >> sem >> idx) kps.emplace_back(sem, idx);
  }
  return kps;
}

void save_keypoints(const std::vector<std::pair<int, int>>& kps,
                    const std::filesystem::path& path) {
  std::ostringstream out;
  for (const auto& [sem, idx] : kps) out << sem << ' ' << idx << '\n';
  atomic_write_file(path, out.str());
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed manifest " + path.string() + ": " + e.what());
  }
  DatasetManifest manifest;
  manifest.base_dir = path.has_parent_path() ? path.parent_path() : ".";
  try {
    manifest.category = j.at("category").get<std::string>();
    for (const auto& p : j.at("pairs")) {
      ManifestPair mp;
      mp.source = p.at("source").get<std::string>();
      mp.target = p.at("target").get<std::string>();
      if (p.contains("keypoints_source")) mp.keypoints_source = p["keypoints_source"].get<std::string>();
      if (p.contains("keypoints_target")) mp.keypoints_target = p["keypoints_target"].get<std::string>();
      manifest.pairs.push_back(std::move(mp));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError("manifest " + path.string() + " missing field: " + e.what());
  }
  return manifest;
}

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
  nlohmann::json j;
  j["category"] = manifest.category;
  j["pairs"] = nlohmann::json::array();
  for (const auto& p : manifest.pairs) {
    nlohmann::json jp;
    jp["source"] = p.source;
    jp["target"] = p.target;
    if (!p.keypoints_source.empty()) jp["keypoints_source"] = p.keypoints_source;
    if (!p.keypoints_target.empty()) jp["keypoints_target"] = p.keypoints_target;
    j["pairs"].push_back(std::move(jp));
  }
  atomic_write_file(path, j.dump(2) + "\n");
}

}  // namespace ristcorr
