#pragma once

#include "ristcorr/common.hpp"
#include "ristcorr/vn.hpp"

#include <vector>

namespace ristcorr {

struct DecoderConfig {
  int local_channels = 64;      // C': channels of each input descriptor
  std::vector<int> hidden{128, 64, 32};

  static DecoderConfig full();
  static DecoderConfig test_scale();
  static DecoderConfig mini();
  void validate() const;
};

// Pointwise equivariant decoder: each local shape descriptor (C' x 3) runs
// through the same vn_linear + vn_nonlinearity stack ending in a single
// vector channel, read as the reconstructed 3D point. No cross-point mixing
// and no bias terms, so decode(V R) = decode(V) R and decode(0) = 0.
class Decoder {
 public:
  Decoder() = default;
  explicit Decoder(const DecoderConfig& cfg);

  void init(Rng& rng);

  struct Cache {
    std::vector<vn::Feature> inputs;             // input to each linear
    std::vector<vn::VNNonlinearity::Cache> nl;   // one per hidden stage
  };

  // descriptors: (C' x 3N) packed per-point features.
  Points decode(const vn::Feature& descriptors, Cache* cache = nullptr) const;

  // Returns the gradient wrt the input descriptors.
  vn::Feature backward(const Cache& cache, const Points& grad_points);

  std::vector<vn::ParamRef> params(const std::string& prefix = "decoder");
  const DecoderConfig& config() const { return cfg_; }

 private:
  DecoderConfig cfg_;
  std::vector<vn::VNLinear> linears_;
  std::vector<vn::VNNonlinearity> nonlins_;
};

}  // namespace ristcorr
