#include "ristcorr/encoder.hpp"

#include <stdexcept>
#include <string>

namespace ristcorr {

namespace {

void check_finite(const Mat& m, const char* stage) {
  if (!all_finite(m))
    throw NumericalError(std::string("non-finite values after stage ") + stage);
}

}  // namespace

EncoderConfig EncoderConfig::full() { return EncoderConfig{}; }

EncoderConfig EncoderConfig::test_scale() {
  EncoderConfig c;
  c.stage_channels = {3, 8, 8, 16};
  c.fusion_channels = 32;
  c.descriptor_channels = 16;
  c.local_channels = 8;
  c.theta_hidden = 96;
  c.k_neighbors = 4;
  return c;
}

EncoderConfig EncoderConfig::mini() {
  EncoderConfig c;
  c.stage_channels = {2, 4, 4, 4};
  c.fusion_channels = 8;
  c.descriptor_channels = 4;
  c.local_channels = 2;
  c.theta_hidden = 24;
  c.k_neighbors = 4;
  return c;
}

void EncoderConfig::validate() const {
  for (int s : stage_channels)
    if (s < 1) throw ConfigError("encoder stage channel width must be >= 1");
  if (fusion_channels < 1) throw ConfigError("encoder fusion_channels must be >= 1");
  if (descriptor_channels < 1) throw ConfigError("encoder descriptor_channels must be >= 1");
  if (local_channels < 1) throw ConfigError("encoder local_channels must be >= 1");
  if (theta_hidden < 1) throw ConfigError("encoder theta_hidden must be >= 1");
  if (k_neighbors < 1) throw ConfigError("encoder k_neighbors must be >= 1");
}

Mat apply_transform(const Mat& theta, const Mat& Z) {
  if (theta.cols() != Z.rows() || Z.cols() != 3)
    throw std::invalid_argument("apply_transform: dimension mismatch");
  return theta * Z;
}

vn::Feature local_descriptors(const std::vector<Mat>& transforms, const Mat& Z) {
  if (transforms.empty())
    throw std::invalid_argument("local_descriptors: no transforms");
  const int n = static_cast<int>(transforms.size());
  vn::Feature out(static_cast<int>(transforms.front().rows()), n);
  for (int i = 0; i < n; ++i) out.point(i) = apply_transform(transforms[i], Z);
  return out;
}

Encoder::Encoder(const EncoderConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  const auto& s = cfg_.stage_channels;
  ec1_ = vn::VNEdgeConv(s[0], 1, cfg_.max_aggregation);
  ec2_ = vn::VNEdgeConv(s[1], s[0], cfg_.max_aggregation);
  ec3_ = vn::VNEdgeConv(s[2], s[1], cfg_.max_aggregation);
  ec4_ = vn::VNEdgeConv(s[3], s[2], cfg_.max_aggregation);
  const int cat = s[0] + s[1] + s[2] + s[3];
  fuse_ = vn::VNLinear(cfg_.fusion_channels, cat);
  fuse_nl_ = vn::VNNonlinearity(cfg_.fusion_channels);
  proj_z_ = vn::VNLinear(cfg_.descriptor_channels, cfg_.fusion_channels);
  frame_ = vn::VNLinear(3, 2 * cfg_.fusion_channels);
  proj_inv_ = vn::VNLinear(cfg_.local_channels, cfg_.fusion_channels);
  mlp1_ = vn::Dense(cfg_.theta_hidden, 3 * cfg_.local_channels, true);
  mlp2_ = vn::Dense(cfg_.theta_hidden, cfg_.theta_hidden, true);
  mlp3_ = vn::Dense(cfg_.local_channels * cfg_.descriptor_channels,
                    cfg_.theta_hidden, false);
}

void Encoder::init(Rng& rng) {
  ec1_.init(rng);
  ec2_.init(rng);
  ec3_.init(rng);
  ec4_.init(rng);
  fuse_.init(rng);
  fuse_nl_.init(rng);
  proj_z_.init(rng);
  frame_.init(rng);
  proj_inv_.init(rng);
  mlp1_.init(rng);
  mlp2_.init(rng);
  mlp3_.init(rng);
  // The descriptors theta_i * Z multiply two small activations: Z inherits
  // the 1/sqrt(N) mean-pool attenuation and theta the squared scale of the
  // invariant features. Boost both projections so reconstructions start at
  // the same order as the unit-sphere targets instead of ~1e-4.
  proj_z_.weight *= 8.0;
  mlp3_.weight *= 8.0;
}

EncoderOutput Encoder::forward(const Points& points, Cache* cache) const {
  const int n = static_cast<int>(points.rows());
  if (n <= cfg_.k_neighbors)
    throw std::invalid_argument("encode: need more points than k_neighbors");

  const Eigen::MatrixXi neighbors = knn_graph(points, cfg_.k_neighbors);
  const vn::Feature v0 = vn::Feature::from_points(points);
  vn::Feature v1 = ec1_.forward(v0, neighbors, cache ? &cache->ec1 : nullptr);
  check_finite(v1.data, "edge_conv1");
  vn::Feature v2 = ec2_.forward(v1, neighbors, cache ? &cache->ec2 : nullptr);
  check_finite(v2.data, "edge_conv2");
  vn::Feature v3 = ec3_.forward(v2, neighbors, cache ? &cache->ec3 : nullptr);
  check_finite(v3.data, "edge_conv3");
  vn::Feature v4 = ec4_.forward(v3, neighbors, cache ? &cache->ec4 : nullptr);
  check_finite(v4.data, "edge_conv4");

  vn::Feature cat = vn::channel_concat({&v1, &v2, &v3, &v4});
  vn::Feature fused =
      fuse_nl_.forward(fuse_.forward(cat), cache ? &cache->fuse_nl : nullptr);
  if (debug_bias != 0.0)
    for (int i = 0; i < n; ++i) fused.data.col(3 * i).array() += debug_bias;
  check_finite(fused.data, "fusion");

  vn::Feature pooled = vn::mean_pool(fused);
  check_finite(pooled.data, "global_pool");

  const vn::Feature zf = proj_z_.forward(pooled);
  Mat Z = zf.point(0);
  check_finite(Z, "descriptor_projection");

  vn::Feature frame_in(2 * cfg_.fusion_channels, n);
  for (int i = 0; i < n; ++i) {
    frame_in.point(i).topRows(cfg_.fusion_channels) = fused.point(i);
    frame_in.point(i).bottomRows(cfg_.fusion_channels) = pooled.point(0);
  }
  vn::Feature frame = frame_.forward(frame_in);
  check_finite(frame.data, "frame_head");

  vn::Feature inv_in = proj_inv_.forward(fused);
  vn::Feature vin = vn::invariant_product(inv_in, frame);
  check_finite(vin.data, "invariant_features");

  // vin is C' x 3N column-major, so viewing it as (3C' x N) stacks each
  // point's three columns into one vectorized invariant feature.
  const int cp = cfg_.local_channels;
  Mat mlp_in = Eigen::Map<const Mat>(vin.data.data(), 3 * cp, n);
  Mat h1_pre, h2_pre;
  Mat h1 = mlp1_.forward(mlp_in, &h1_pre);
  Mat h2 = mlp2_.forward(h1, &h2_pre);
  Mat theta_flat = mlp3_.forward(h2);
  check_finite(theta_flat, "theta_mlp");

  EncoderOutput out;
  out.Z = std::move(Z);
  out.transforms.reserve(n);
  for (int i = 0; i < n; ++i)
    out.transforms.emplace_back(Eigen::Map<const Mat>(
        theta_flat.col(i).data(), cp, cfg_.descriptor_channels));
  out.features = fused;

  if (cache) {
    cache->neighbors = neighbors;
    cache->v0 = v0;
    cache->v1 = std::move(v1);
    cache->v2 = std::move(v2);
    cache->v3 = std::move(v3);
    cache->v4 = std::move(v4);
    cache->concat = std::move(cat);
    cache->fused = std::move(fused);
    cache->pooled = std::move(pooled);
    cache->frame_in = std::move(frame_in);
    cache->frame = std::move(frame);
    cache->inv_in = std::move(inv_in);
    cache->mlp_in = std::move(mlp_in);
    cache->h1 = std::move(h1);
    cache->h1_pre = std::move(h1_pre);
    cache->h2 = std::move(h2);
    cache->h2_pre = std::move(h2_pre);
    cache->n = n;
  }
  return out;
}

void Encoder::backward(const Cache& cache, const Mat& grad_Z,
                       const std::vector<Mat>& grad_thetas) {
  const int n = cache.n;
  const int f = cfg_.fusion_channels;
  const int cp = cfg_.local_channels;

  vn::Feature grad_fused(f, n);
  vn::Feature grad_pooled(f, 1);

  if (!grad_thetas.empty()) {
    if (static_cast<int>(grad_thetas.size()) != n)
      throw std::invalid_argument("encoder backward: grad_thetas size mismatch");
    Mat grad_theta_flat(cp * cfg_.descriptor_channels, n);
    for (int i = 0; i < n; ++i)
      grad_theta_flat.col(i) =
          Eigen::Map<const Vec>(grad_thetas[i].data(), grad_theta_flat.rows());
    const Mat g_h2 = mlp3_.backward(cache.h2, Mat(), grad_theta_flat);
    const Mat g_h1 = mlp2_.backward(cache.h1, cache.h2_pre, g_h2);
    const Mat g_mlp_in = mlp1_.backward(cache.mlp_in, cache.h1_pre, g_h1);

    vn::Feature g_vin(Eigen::Map<const Mat>(g_mlp_in.data(), cp, 3 * n));
    vn::Feature g_inv_in, g_frame;
    vn::invariant_product_backward(cache.inv_in, cache.frame, g_vin, g_inv_in,
                                   g_frame);
    grad_fused.data += proj_inv_.backward(cache.fused, g_inv_in).data;

    const vn::Feature g_frame_in = frame_.backward(cache.frame_in, g_frame);
    for (int i = 0; i < n; ++i) {
      grad_fused.point(i) += g_frame_in.point(i).topRows(f);
      grad_pooled.point(0) += g_frame_in.point(i).bottomRows(f);
    }
  }

  grad_pooled.data += proj_z_.backward(cache.pooled, vn::Feature(grad_Z)).data;
  grad_fused.data += vn::mean_pool_backward(grad_pooled, n).data;

  const vn::Feature g_cat_pre = fuse_nl_.backward(cache.fuse_nl, grad_fused);
  const vn::Feature g_cat = fuse_.backward(cache.concat, g_cat_pre);

  const auto& s = cfg_.stage_channels;
  vn::Feature g1(Mat(g_cat.data.topRows(s[0])));
  vn::Feature g2(Mat(g_cat.data.middleRows(s[0], s[1])));
  vn::Feature g3(Mat(g_cat.data.middleRows(s[0] + s[1], s[2])));
  vn::Feature g4(Mat(g_cat.data.bottomRows(s[3])));

  g3.data += ec4_.backward(cache.neighbors, cache.ec4, g4).data;
  g2.data += ec3_.backward(cache.neighbors, cache.ec3, g3).data;
  g1.data += ec2_.backward(cache.neighbors, cache.ec2, g2).data;
  ec1_.backward(cache.neighbors, cache.ec1, g1);
}

std::vector<vn::ParamRef> Encoder::params(const std::string& prefix) {
  std::vector<vn::ParamRef> out;
  ec1_.collect(prefix + ".edge_conv1", out);
  ec2_.collect(prefix + ".edge_conv2", out);
  ec3_.collect(prefix + ".edge_conv3", out);
  ec4_.collect(prefix + ".edge_conv4", out);
  fuse_.collect(prefix + ".fuse", out);
  fuse_nl_.collect(prefix + ".fuse_nl", out);
  proj_z_.collect(prefix + ".proj_z", out);
  frame_.collect(prefix + ".frame", out);
  proj_inv_.collect(prefix + ".proj_inv", out);
  mlp1_.collect(prefix + ".theta_mlp1", out);
  mlp2_.collect(prefix + ".theta_mlp2", out);
  mlp3_.collect(prefix + ".theta_mlp3", out);
  return out;
}

}  // namespace ristcorr
