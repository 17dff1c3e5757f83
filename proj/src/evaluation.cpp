#include "ristcorr/evaluation.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <map>
#include <set>
#include <stdexcept>

#include <json.hpp>

namespace ristcorr {

std::string to_string(EvalProtocol p) {
  return p == EvalProtocol::Aligned ? "aligned" : "rotated";
}

EvalProtocol protocol_from_string(const std::string& s) {
  if (s == "aligned") return EvalProtocol::Aligned;
  if (s == "rotated") return EvalProtocol::Rotated;
  throw ConfigError("unknown protocol: " + s + " (expected aligned|rotated)");
}

double iou_transfer(const std::vector<int>& pred, const std::vector<int>& gt,
                    const std::vector<int>& label_universe) {
  if (pred.size() != gt.size())
    throw std::invalid_argument("iou_transfer: label list length mismatch");
  if (label_universe.empty())
    throw std::invalid_argument("iou_transfer: empty label universe");
  double sum = 0.0;
  for (int label : label_universe) {
    int inter = 0, uni = 0;
    for (size_t i = 0; i < pred.size(); ++i) {
      const bool p = pred[i] == label;
      const bool g = gt[i] == label;
      inter += p && g;
      uni += p || g;
    }
    sum += uni == 0 ? 1.0 : static_cast<double>(inter) / uni;
  }
  return sum / static_cast<double>(label_universe.size());
}

double pck(const Points& transferred, const Points& gt, double tau) {
  if (transferred.rows() != gt.rows())
    throw std::invalid_argument("pck: keypoint count mismatch");
  if (transferred.rows() == 0)
    throw std::invalid_argument("pck: needs at least one keypoint");
  if (tau < 0) throw std::invalid_argument("pck: tau must be >= 0");
  int hit = 0;
  for (int m = 0; m < transferred.rows(); ++m)
    if ((transferred.row(m) - gt.row(m)).norm() <= tau) ++hit;
  return static_cast<double>(hit) / static_cast<double>(transferred.rows());
}

std::vector<double> default_tau_grid() {
  std::vector<double> grid;
  for (int i = 1; i <= 10; ++i) grid.push_back(0.01 * i);
  return grid;
}

EvalReport evaluate_pairs(const std::vector<EvalPair>& pairs,
                          const Model& model, EvalProtocol protocol,
                          const std::vector<double>& tau_grid,
                          std::uint64_t seed, const std::string& category) {
  if (pairs.empty()) throw DataError("evaluate: no pairs");
  Rng rng(seed);

  std::set<int> universe_set;
  for (const auto& pr : pairs) {
    if (!pr.source.has_labels() || !pr.target.has_labels())
      throw DataError("evaluate: IoU needs labels on both clouds");
    universe_set.insert(pr.source.labels.begin(), pr.source.labels.end());
    universe_set.insert(pr.target.labels.begin(), pr.target.labels.end());
  }
  const std::vector<int> universe(universe_set.begin(), universe_set.end());

  EvalReport report;
  report.protocol = to_string(protocol);
  report.category = category;

  for (const auto& pr : pairs) {
    PointCloud src = normalize_to_unit_sphere(pr.source);
    PointCloud tgt = normalize_to_unit_sphere(pr.target);
    if (protocol == EvalProtocol::Rotated) {
      src = rotate(src, sample_uniform_rotation(rng));
      tgt = rotate(tgt, sample_uniform_rotation(rng));
    }
    const CorrespondenceSet corr = correspond(src.points, tgt.points, model);

    PairMetrics metrics;
    metrics.iou =
        iou_transfer(transfer_labels(src, corr, tgt), tgt.labels, universe);

    if (!tau_grid.empty() && !src.keypoints.empty() && !tgt.keypoints.empty()) {
      std::map<int, int> target_of;  // semantic id -> target point index
      for (const auto& [sem, idx] : tgt.keypoints) target_of[sem] = idx;
      Points transferred(static_cast<int>(src.keypoints.size()), 3);
      Points gt(transferred.rows(), 3);
      int row = 0;
      for (const auto& [sem, idx] : src.keypoints) {
        const auto it = target_of.find(sem);
        if (it == target_of.end())
          throw DataError("evaluate: keypoint id " + std::to_string(sem) +
                          " missing from target");
        transferred.row(row) = tgt.points.row(corr.pairs[idx].second);
        gt.row(row) = tgt.points.row(it->second);
        ++row;
      }
      metrics.has_keypoints = true;
      metrics.pck.reserve(tau_grid.size());
      for (double tau : tau_grid) metrics.pck.push_back(pck(transferred, gt, tau));
    }
    report.pairs.push_back(std::move(metrics));
  }

  double iou_sum = 0.0;
  for (const auto& m : report.pairs) iou_sum += m.iou;
  report.mean_iou = iou_sum / static_cast<double>(report.pairs.size());

  int with_kp = 0;
  std::vector<double> pck_sum(tau_grid.size(), 0.0);
  for (const auto& m : report.pairs) {
    if (!m.has_keypoints) continue;
    ++with_kp;
    for (size_t t = 0; t < tau_grid.size(); ++t) pck_sum[t] += m.pck[t];
  }
  if (with_kp > 0)
    for (size_t t = 0; t < tau_grid.size(); ++t)
      report.pck_curve.emplace_back(tau_grid[t], pck_sum[t] / with_kp);
  return report;
}

EvalReport evaluate(const DatasetManifest& manifest, const Model& model,
                    EvalProtocol protocol, const std::vector<double>& tau_grid,
                    std::uint64_t seed) {
  if (manifest.pairs.empty()) throw DataError("evaluate: manifest has no pairs");
  std::vector<EvalPair> pairs;
  const std::filesystem::path base(manifest.base_dir);
  for (const auto& pr : manifest.pairs) {
    EvalPair ep;
    ep.source = load_point_cloud((base / pr.source).string());
    ep.target = load_point_cloud((base / pr.target).string());
    if (!pr.keypoints_source.empty())
      ep.source.keypoints = load_keypoints((base / pr.keypoints_source).string());
    if (!pr.keypoints_target.empty())
      ep.target.keypoints = load_keypoints((base / pr.keypoints_target).string());
    pairs.push_back(std::move(ep));
  }
  return evaluate_pairs(pairs, model, protocol, tau_grid, seed,
                        manifest.category);
}

std::string report_json(const EvalReport& report) {
  nlohmann::json j;
  j["protocol"] = report.protocol;
  j["category"] = report.category;
  j["mean_iou"] = report.mean_iou;
  j["pairs"] = nlohmann::json::array();
  for (const auto& m : report.pairs) {
    nlohmann::json p{{"iou", m.iou}};
    if (m.has_keypoints) p["pck"] = m.pck;
    j["pairs"].push_back(std::move(p));
  }
  j["pck_curve"] = nlohmann::json::array();
  for (const auto& [tau, value] : report.pck_curve)
    j["pck_curve"].push_back({tau, value});
  return j.dump(2) + "\n";
}

std::string pck_curve_csv(const EvalReport& report) {
  std::string out = "tau,pck\n";
  char buf[80];
  for (const auto& [tau, value] : report.pck_curve) {
    std::snprintf(buf, sizeof(buf), "%.4g,%.17g\n", tau, value);
    out += buf;
  }
  return out;
}

}  // namespace ristcorr
