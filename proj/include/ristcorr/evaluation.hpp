#pragma once

#include "ristcorr/geometry.hpp"
#include "ristcorr/inference.hpp"
#include "ristcorr/model.hpp"

#include <string>
#include <vector>

namespace ristcorr {

enum class EvalProtocol { Aligned, Rotated };

std::string to_string(EvalProtocol p);
EvalProtocol protocol_from_string(const std::string& s);

// Mean over the label universe of per-part IoU; a part absent from both
// prediction and ground truth scores 1. Throws std::invalid_argument on
// length mismatch.
double iou_transfer(const std::vector<int>& pred, const std::vector<int>& gt,
                    const std::vector<int>& label_universe);

// Fraction of keypoints within (inclusive) Euclidean distance tau of ground
// truth. Rows are matched by position in the two lists.
double pck(const Points& transferred, const Points& gt, double tau);

// {0.01, 0.02, ..., 0.10} on the unit-sphere-normalized scale.
std::vector<double> default_tau_grid();

struct PairMetrics {
  double iou = 0.0;
  std::vector<double> pck;  // one entry per tau in the grid
  bool has_keypoints = false;
};

struct EvalReport {
  std::string protocol;
  std::string category;
  std::vector<PairMetrics> pairs;
  double mean_iou = 0.0;
  std::vector<std::pair<double, double>> pck_curve;  // (tau, mean pck)
};

struct EvalPair {
  PointCloud source;  // labeled; keypoints optional
  PointCloud target;
};

// Runs correspondence on each pair (rotating the clouds independently first
// under the rotated protocol), transfers labels and keypoints, and
// aggregates the metrics. Deterministic given the seed.
EvalReport evaluate_pairs(const std::vector<EvalPair>& pairs,
                          const Model& model, EvalProtocol protocol,
                          const std::vector<double>& tau_grid,
                          std::uint64_t seed, const std::string& category = "");

// Manifest-driven variant: loads, normalizes, and pairs the clouds, then
// defers to evaluate_pairs.
EvalReport evaluate(const DatasetManifest& manifest, const Model& model,
                    EvalProtocol protocol, const std::vector<double>& tau_grid,
                    std::uint64_t seed);

std::string report_json(const EvalReport& report);
std::string pck_curve_csv(const EvalReport& report);

}  // namespace ristcorr
