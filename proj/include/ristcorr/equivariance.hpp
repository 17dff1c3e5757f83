#pragma once

#include "ristcorr/model.hpp"

#include <string>
#include <vector>

namespace ristcorr {

struct GateResult {
  std::string component;
  double max_rel_err = 0.0;
  double gate = 0.0;
  bool pass = true;
};

struct EquivarianceReport {
  std::vector<GateResult> gates;
  bool all_pass = true;

  const GateResult* first_failure() const;
};

// Measures, over `trials` random clouds and Haar-uniform rotations, how far
// each pipeline component drifts from its equivariance/invariance contract:
// the global descriptor and transforms of the encoder, the local
// descriptors, the decoder, and both cross-reconstruction directions.
// The gates are the acceptance thresholds (1e-8 for Z in double precision,
// 1e-4 elsewhere).
EquivarianceReport check_equivariance(const Model& model, int trials,
                                      int n_points, std::uint64_t seed);

std::string format_report(const EquivarianceReport& report);

}  // namespace ristcorr
