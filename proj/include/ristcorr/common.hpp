#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <random>
#include <stdexcept>
#include <string>

namespace ristcorr {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using Mat3 = Eigen::Matrix3d;
using Points = Eigen::Matrix<double, Eigen::Dynamic, 3>;
using Rng = std::mt19937_64;

// Thrown when a numeric pipeline produces non-finite values; the message
// names the stage that failed.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Dataset / file-content problems (missing manifest, bad cloud file, ...).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Configuration problems (unknown key, bad value, missing checkpoint).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class CorruptCheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class CheckpointVersionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ||a - b|| / max(||b||, floor). Used by equivariance and gradient checks.
inline double relative_error(const Mat& a, const Mat& b, double floor = 1e-12) {
  return (a - b).norm() / std::max(b.norm(), floor);
}

inline bool all_finite(const Mat& m) { return m.allFinite(); }

// Writes `content` to `path` via a temporary file in the same directory plus
// rename, so readers never observe a partially written file.
void atomic_write_file(const std::filesystem::path& path, const std::string& content);

}  // namespace ristcorr
