#pragma once

#include "ristcorr/common.hpp"
#include "ristcorr/geometry.hpp"
#include "ristcorr/vn.hpp"

#include <array>
#include <vector>

namespace ristcorr {

struct EncoderConfig {
  // Output widths of the four edge-conv stages, then the fused width.
  std::array<int, 4> stage_channels{21, 64, 64, 128};
  int fusion_channels = 256;
  int descriptor_channels = 170;  // C: rows of the global descriptor Z
  int local_channels = 64;        // C': rows of each local shape transform
  int theta_hidden = 768;         // width of both hidden MLP layers (12*C')
  int k_neighbors = 20;
  bool max_aggregation = false;   // edge-conv aggregation: mean unless set

  static EncoderConfig full();
  static EncoderConfig test_scale();  // widths /8, k=4
  static EncoderConfig mini();        // C=4, C'=2: small enough for FD checks
  void validate() const;             // throws ConfigError
};

// Result of encoding one cloud: the equivariant global shape descriptor Z
// (C x 3), one invariant local shape transform theta_i (C' x C) per point,
// and the fused per-point equivariant features for inspection.
struct EncoderOutput {
  Mat Z;
  std::vector<Mat> transforms;
  vn::Feature features;
};

// Local shape descriptor v'_i = theta_i * Z (C' x 3). Exactly equivariant
// in Z. Throws std::invalid_argument on dimension mismatch.
Mat apply_transform(const Mat& theta, const Mat& Z);

// Packs {theta_i * Z} for all points into a (C' x 3N) feature.
vn::Feature local_descriptors(const std::vector<Mat>& transforms, const Mat& Z);

class Encoder {
 public:
  Encoder() = default;
  explicit Encoder(const EncoderConfig& cfg);

  void init(Rng& rng);

  struct Cache {
    Eigen::MatrixXi neighbors;
    vn::Feature v0, v1, v2, v3, v4;
    vn::VNEdgeConv::Cache ec1, ec2, ec3, ec4;
    vn::Feature concat;  // input to the fusion linear
    vn::VNNonlinearity::Cache fuse_nl;
    vn::Feature fused;
    vn::Feature pooled;    // fusion_channels x 3
    vn::Feature frame_in;  // concat(fused_i, pooled) per point
    vn::Feature frame;     // 3 x 3N
    vn::Feature inv_in;    // C' x 3N, equivariant input to the product
    Mat mlp_in;            // 3C' x N, vectorized invariant features
    Mat h1, h1_pre, h2, h2_pre;
    int n = 0;
  };

  EncoderOutput forward(const Points& points, Cache* cache = nullptr) const;

  // Accumulates parameter gradients from upstream gradients on Z and on
  // each transform. grad_thetas may be empty when only Z feeds the loss.
  void backward(const Cache& cache, const Mat& grad_Z,
                const std::vector<Mat>& grad_thetas);

  std::vector<vn::ParamRef> params(const std::string& prefix = "encoder");
  const EncoderConfig& config() const { return cfg_; }

  // Fault injection for the equivariance checker: a nonzero value adds a
  // fixed world-frame offset to the fused features, which no equivariant
  // architecture can produce.
  double debug_bias = 0.0;

 private:
  EncoderConfig cfg_;
  vn::VNEdgeConv ec1_, ec2_, ec3_, ec4_;
  vn::VNLinear fuse_;
  vn::VNNonlinearity fuse_nl_;
  vn::VNLinear proj_z_;
  vn::VNLinear frame_;
  vn::VNLinear proj_inv_;
  vn::Dense mlp1_, mlp2_, mlp3_;
};

}  // namespace ristcorr
