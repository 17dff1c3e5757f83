#pragma once

#include "ristcorr/common.hpp"
#include "ristcorr/geometry.hpp"

#include <string>
#include <vector>

namespace ristcorr::vn {

// A batch of vector-list features: C channels of 3-vectors for each of N
// points, stored as a (C x 3N) matrix with point i in columns [3i, 3i+3).
// Rotation acts per point block by right-multiplication with R^T, matching
// the point-level convention in geometry.hpp.
struct Feature {
  Mat data;

  Feature() = default;
  Feature(int channels, int npoints) : data(Mat::Zero(channels, 3 * npoints)) {}
  explicit Feature(Mat d) : data(std::move(d)) {}

  int channels() const { return static_cast<int>(data.rows()); }
  int npoints() const { return static_cast<int>(data.cols()) / 3; }

  auto point(int i) { return data.middleCols(3 * i, 3); }
  auto point(int i) const { return data.middleCols(3 * i, 3); }

  // Lift raw points to a 1-channel feature.
  static Feature from_points(const Points& pts);
};

Feature rotated(const Feature& f, const Rotation& r);

// Stacks features along the channel dimension.
Feature channel_concat(const std::vector<const Feature*>& parts);

// Named view of one parameter tensor and its gradient accumulator.
struct ParamRef {
  std::string name;
  Mat* value;
  Mat* grad;
};

// Channel-mixing linear map W * V. Exactly equivariant: W (V R) = (W V) R.
class VNLinear {
 public:
  VNLinear() = default;
  VNLinear(int out_channels, int in_channels);

  void init(Rng& rng);
  Feature forward(const Feature& in) const;
  // Accumulates the weight gradient and returns the input gradient.
  Feature backward(const Feature& in, const Feature& grad_out);
  void collect(const std::string& prefix, std::vector<ParamRef>& out);

  Mat weight, grad_weight;
};

// Direction-conditional half-space nonlinearity: per channel, a learned
// equivariant direction d gates the vector; v passes unchanged when
// <v,d> >= 0 and otherwise loses its component along d. The predicate is
// rotation-invariant, so the map is equivariant.
class VNNonlinearity {
 public:
  VNNonlinearity() = default;
  explicit VNNonlinearity(int channels);

  struct Cache {
    Feature input;
    Mat dirs;  // C x 3N
  };

  void init(Rng& rng);
  Feature forward(const Feature& in, Cache* cache = nullptr) const;
  Feature backward(const Cache& cache, const Feature& grad_out);
  void collect(const std::string& prefix, std::vector<ParamRef>& out);

  Mat weight_dir, grad_weight_dir;  // C x C
  double eps = 1e-8;
};

// Edge convolution over a fixed neighbor graph: edge features
// concat(V_i, V_j - V_i) pass through VNLinear + VNNonlinearity and are
// aggregated over each point's neighbors (mean by default; max selects the
// largest-norm response per channel).
class VNEdgeConv {
 public:
  VNEdgeConv() = default;
  VNEdgeConv(int out_channels, int in_channels, bool max_aggregate = false);

  struct Cache {
    Feature edge_in;               // 2C_in x 3NK
    VNNonlinearity::Cache nonlin;
    Feature edge_out;              // C_out x 3NK
    Eigen::MatrixXi argmax;        // C_out x N (max aggregation only)
    int n = 0, k = 0;
  };

  void init(Rng& rng);
  Feature forward(const Feature& in, const Eigen::MatrixXi& neighbors,
                  Cache* cache = nullptr) const;
  Feature backward(const Eigen::MatrixXi& neighbors, const Cache& cache,
                   const Feature& grad_out);
  void collect(const std::string& prefix, std::vector<ParamRef>& out);

  VNLinear linear;
  VNNonlinearity nonlin;
  bool max_aggregate = false;
};

// Channelwise mean over points; equivariant and permutation-invariant.
// Returns a single-point feature (C x 3).
Feature mean_pool(const Feature& in);
Feature mean_pool_backward(const Feature& grad_pooled, int npoints);

// Per-point product V_i * U_i^T with a 3-channel frame feature U. Invariant
// under simultaneous rotation of both inputs. Throws std::invalid_argument
// unless the frame has exactly 3 channels.
Feature invariant_product(const Feature& v, const Feature& frame);
void invariant_product_backward(const Feature& v, const Feature& frame,
                                const Feature& grad_out, Feature& grad_v,
                                Feature& grad_frame);

// Ordinary scalar dense layer (used on invariant features, where biases are
// harmless). Operates column-wise on an (in x batch) matrix.
class Dense {
 public:
  Dense() = default;
  Dense(int out_dim, int in_dim, bool tanh_activation);

  void init(Rng& rng);
  Mat forward(const Mat& in, Mat* pre_activation = nullptr) const;
  Mat backward(const Mat& in, const Mat& pre_activation, const Mat& grad_out);
  void collect(const std::string& prefix, std::vector<ParamRef>& out);

  Mat weight, grad_weight;
  Mat bias, grad_bias;  // column vector
  bool tanh_activation = false;
};

void zero_grads(std::vector<ParamRef>& params);

}  // namespace ristcorr::vn
