#include "ristcorr/inference.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <stdexcept>

namespace ristcorr {

namespace {

int nearest_index(const Points& cloud, const Eigen::RowVector3d& p) {
  int best = 0;
  double best_d = (cloud.row(0) - p).squaredNorm();
  for (int j = 1; j < cloud.rows(); ++j) {
    const double d = (cloud.row(j) - p).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = j;
    }
  }
  return best;
}

}  // namespace

CorrespondenceSet correspond(const Points& source, const Points& target,
                             const Model& model) {
  const EncoderOutput es = model.encoder.forward(source);
  const EncoderOutput et = model.encoder.forward(target);
  CorrespondenceSet out;
  // Reconstruction of the source's transforms in the target's pose: point i
  // is the source point i rendered where the target's frame puts it.
  out.reconstructed = model.cross_reconstruct(es, et);
  const int n = static_cast<int>(source.rows());
  out.pairs.reserve(n);
  for (int i = 0; i < n; ++i)
    out.pairs.emplace_back(i, nearest_index(target, out.reconstructed.row(i)));
  return out;
}

CorrespondenceSet correspond_lst(const Points& source, const Points& target,
                                 const Model& model) {
  const EncoderOutput es = model.encoder.forward(source);
  const EncoderOutput et = model.encoder.forward(target);
  const int n = static_cast<int>(source.rows());
  const int m = static_cast<int>(target.rows());

  std::vector<double> target_norm(m);
  for (int j = 0; j < m; ++j) target_norm[j] = et.transforms[j].norm();

  CorrespondenceSet out;
  out.pairs.reserve(n);
  for (int i = 0; i < n; ++i) {
    const double ni = es.transforms[i].norm();
    int best = 0;
    double best_sim = -2.0;
    for (int j = 0; j < m; ++j) {
      const double denom = std::max(ni * target_norm[j], 1e-300);
      const double sim =
          (es.transforms[i].array() * et.transforms[j].array()).sum() / denom;
      if (sim > best_sim) {
        best_sim = sim;
        best = j;
      }
    }
    out.pairs.emplace_back(i, best);
  }
  return out;
}

std::vector<int> transfer_labels(const PointCloud& source,
                                 const CorrespondenceSet& corr,
                                 const PointCloud& target) {
  if (!source.has_labels())
    throw DataError("transfer_labels: source cloud has no labels");
  const int nt = target.size();

  // label -> count per target point; plurality with lowest-label tie-break.
  std::vector<std::map<int, int>> votes(nt);
  for (const auto& [src, tgt] : corr.pairs) {
    if (tgt < 0 || tgt >= nt)
      throw DataError("transfer_labels: target index out of range");
    ++votes[tgt][source.labels[src]];
  }

  std::vector<int> labels(nt);
  for (int t = 0; t < nt; ++t) {
    if (votes[t].empty()) {
      const int i = nearest_index(corr.reconstructed, target.points.row(t));
      labels[t] = source.labels[corr.pairs[i].first];
      continue;
    }
    int best_label = 0, best_count = -1;
    for (const auto& [label, count] : votes[t]) {
      if (count > best_count) {
        best_count = count;
        best_label = label;
      }
    }
    labels[t] = best_label;
  }
  return labels;
}

double correspondence_agreement(const CorrespondenceSet& a,
                                const CorrespondenceSet& b) {
  if (a.pairs.size() != b.pairs.size())
    throw std::invalid_argument("correspondence_agreement: size mismatch");
  if (a.pairs.empty()) return 1.0;
  int same = 0;
  for (size_t i = 0; i < a.pairs.size(); ++i)
    if (a.pairs[i] == b.pairs[i]) ++same;
  return static_cast<double>(same) / static_cast<double>(a.pairs.size());
}

std::string correspondence_csv(const CorrespondenceSet& corr,
                               const std::string& matcher,
                               std::uint64_t checkpoint_hash) {
  char header[160];
  std::snprintf(header, sizeof(header),
                "# direction=%s matcher=%s checkpoint=%016llx\n",
                corr.direction.c_str(), matcher.c_str(),
                static_cast<unsigned long long>(checkpoint_hash));
  std::string out = header;
  out += "source_index,target_index\n";
  for (const auto& [s, t] : corr.pairs)
    out += std::to_string(s) + "," + std::to_string(t) + "\n";
  return out;
}

}  // namespace ristcorr
