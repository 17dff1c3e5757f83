#pragma once

#include "ristcorr/geometry.hpp"
#include "ristcorr/model.hpp"

#include <string>
#include <utility>
#include <vector>

namespace ristcorr {

// Dense matching result: one (source_index, target_index) pair per source
// point,plus the cross-reconstructed cloud the nearest-neighbor search ran
// against. Target indices may repeat.
struct CorrespondenceSet {
  std::vector<std::pair<int, int>> pairs;
  Points reconstructed;
  std::string direction = "source->target";
};

// Cross-reconstructs the source into the target's pose and matches each
// reconstructed point to its exact nearest neighbor in the target (ties to
// the lower index).
CorrespondenceSet correspond(const Points& source, const Points& target,
                             const Model& model);

// Matches by cosine similarity between vectorized local shape transforms;
// ties to the lower index.
CorrespondenceSet correspond_lst(const Points& source, const Points& target,
                                 const Model& model);

// Propagates source labels through the correspondence. A target point
// matched by several sources takes the plurality label (ties to the lowest
// label); a target point never matched takes the label of the nearest
// cross-reconstructed point. Throws DataError when the source is unlabeled.
std::vector<int> transfer_labels(const PointCloud& source,
                                 const CorrespondenceSet& corr,
                                 const PointCloud& target);

// Fraction of source points whose match agrees between the two sets.
double correspondence_agreement(const CorrespondenceSet& a,
                                const CorrespondenceSet& b);

std::string correspondence_csv(const CorrespondenceSet& corr,
                               const std::string& matcher,
                               std::uint64_t checkpoint_hash);

}  // namespace ristcorr
