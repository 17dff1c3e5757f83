#include "ristcorr/vn.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace ristcorr::vn {

namespace {

// Variance-preserving uniform init (std 1/sqrt(fan_in)); with ~10 stacked
// stages anything smaller collapses the activations toward zero.
void uniform_init(Mat& m, int fan_in, Rng& rng) {
  const double bound = std::sqrt(3.0 / static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = dist(rng);
}

}  // namespace

Feature Feature::from_points(const Points& pts) {
  Feature f(1, static_cast<int>(pts.rows()));
  for (Eigen::Index i = 0; i < pts.rows(); ++i)
    f.data.block(0, 3 * i, 1, 3) = pts.row(i);
  return f;
}

Feature rotated(const Feature& f, const Rotation& r) {
  Feature out(f.channels(), f.npoints());
  const Mat3 rt = r.matrix.transpose();
  for (int i = 0; i < f.npoints(); ++i) out.point(i) = f.point(i) * rt;
  return out;
}

Feature channel_concat(const std::vector<const Feature*>& parts) {
  if (parts.empty()) throw std::invalid_argument("channel_concat: empty input");
  const Eigen::Index cols = parts.front()->data.cols();
  Eigen::Index rows = 0;
  for (const Feature* p : parts) {
    if (p->data.cols() != cols)
      throw std::invalid_argument("channel_concat: point count mismatch");
    rows += p->data.rows();
  }
  Feature out;
  out.data.resize(rows, cols);
  Eigen::Index at = 0;
  for (const Feature* p : parts) {
    out.data.middleRows(at, p->data.rows()) = p->data;
    at += p->data.rows();
  }
  return out;
}

VNLinear::VNLinear(int out_channels, int in_channels)
    : weight(Mat::Zero(out_channels, in_channels)),
      grad_weight(Mat::Zero(out_channels, in_channels)) {}

void VNLinear::init(Rng& rng) {
  uniform_init(weight, static_cast<int>(weight.cols()), rng);
  grad_weight.setZero();
}

Feature VNLinear::forward(const Feature& in) const {
  if (in.data.rows() != weight.cols())
    throw std::invalid_argument("VNLinear: channel mismatch");
  return Feature(weight * in.data);
}

Feature VNLinear::backward(const Feature& in, const Feature& grad_out) {
  grad_weight.noalias() += grad_out.data * in.data.transpose();
  return Feature(weight.transpose() * grad_out.data);
}

void VNLinear::collect(const std::string& prefix, std::vector<ParamRef>& out) {
  out.push_back({prefix + ".weight", &weight, &grad_weight});
}

VNNonlinearity::VNNonlinearity(int channels)
    : weight_dir(Mat::Zero(channels, channels)),
      grad_weight_dir(Mat::Zero(channels, channels)) {}

void VNNonlinearity::init(Rng& rng) {
  uniform_init(weight_dir, static_cast<int>(weight_dir.cols()), rng);
  grad_weight_dir.setZero();
}

Feature VNNonlinearity::forward(const Feature& in, Cache* cache) const {
  if (in.data.rows() != weight_dir.cols())
    throw std::invalid_argument("VNNonlinearity: channel mismatch");
  Mat dirs = weight_dir * in.data;
  Feature out(in.channels(), in.npoints());
  for (int i = 0; i < in.npoints(); ++i) {
    for (int c = 0; c < in.channels(); ++c) {
      const Eigen::RowVector3d v = in.data.block(c, 3 * i, 1, 3);
      const Eigen::RowVector3d d = dirs.block(c, 3 * i, 1, 3);
      const double dot = v.dot(d);
      if (dot >= 0.0) {
        out.data.block(c, 3 * i, 1, 3) = v;
      } else {
        const double q = d.squaredNorm() + eps;
        out.data.block(c, 3 * i, 1, 3) = v - (dot / q) * d;
      }
    }
  }
  if (cache) {
    cache->input = in;
    cache->dirs = std::move(dirs);
  }
  return out;
}

Feature VNNonlinearity::backward(const Cache& cache, const Feature& grad_out) {
  const Feature& in = cache.input;
  Mat grad_dirs = Mat::Zero(cache.dirs.rows(), cache.dirs.cols());
  Feature grad_in(in.channels(), in.npoints());
  for (int i = 0; i < in.npoints(); ++i) {
    for (int c = 0; c < in.channels(); ++c) {
      const Eigen::RowVector3d v = in.data.block(c, 3 * i, 1, 3);
      const Eigen::RowVector3d d = cache.dirs.block(c, 3 * i, 1, 3);
      const Eigen::RowVector3d g = grad_out.data.block(c, 3 * i, 1, 3);
      const double dot = v.dot(d);
      if (dot >= 0.0) {
        grad_in.data.block(c, 3 * i, 1, 3) = g;
      } else {
        const double q = d.squaredNorm() + eps;
        const double gd = g.dot(d);
        grad_in.data.block(c, 3 * i, 1, 3) = g - (gd / q) * d;
        grad_dirs.block(c, 3 * i, 1, 3) =
            -((gd / q) * v + (dot / q) * g - (2.0 * dot * gd / (q * q)) * d);
      }
    }
  }
  grad_weight_dir.noalias() += grad_dirs * in.data.transpose();
  grad_in.data.noalias() += weight_dir.transpose() * grad_dirs;
  return grad_in;
}

void VNNonlinearity::collect(const std::string& prefix,
                             std::vector<ParamRef>& out) {
  out.push_back({prefix + ".weight_dir", &weight_dir, &grad_weight_dir});
}

VNEdgeConv::VNEdgeConv(int out_channels, int in_channels, bool max_aggregate)
    : linear(out_channels, 2 * in_channels),
      nonlin(out_channels),
      max_aggregate(max_aggregate) {}

void VNEdgeConv::init(Rng& rng) {
  linear.init(rng);
  nonlin.init(rng);
}

Feature VNEdgeConv::forward(const Feature& in, const Eigen::MatrixXi& neighbors,
                            Cache* cache) const {
  const int n = in.npoints();
  const int k = static_cast<int>(neighbors.cols());
  const int cin = in.channels();
  if (neighbors.rows() != n)
    throw std::invalid_argument("VNEdgeConv: neighbor rows != point count");

  Feature edge_in(2 * cin, n * k);
  for (int i = 0; i < n; ++i) {
    const auto vi = in.point(i);
    for (int kk = 0; kk < k; ++kk) {
      const int j = neighbors(i, kk);
      if (j < 0 || j >= n)
        throw std::invalid_argument("VNEdgeConv: neighbor index out of range");
      const int e = i * k + kk;
      edge_in.point(e).topRows(cin) = vi;
      edge_in.point(e).bottomRows(cin) = in.point(j) - vi;
    }
  }

  const Feature lin = linear.forward(edge_in);
  Feature edge_out = nonlin.forward(lin, cache ? &cache->nonlin : nullptr);
  const int cout = edge_out.channels();

  Feature out(cout, n);
  if (!max_aggregate) {
    for (int i = 0; i < n; ++i) {
      auto acc = out.point(i);
      for (int kk = 0; kk < k; ++kk) acc += edge_out.point(i * k + kk);
      acc /= static_cast<double>(k);
    }
  } else {
    Eigen::MatrixXi argmax = Eigen::MatrixXi::Zero(cout, n);
    for (int i = 0; i < n; ++i) {
      for (int c = 0; c < cout; ++c) {
        int best = 0;
        double best_norm = -1.0;
        for (int kk = 0; kk < k; ++kk) {
          const double nn =
              edge_out.data.block(c, 3 * (i * k + kk), 1, 3).squaredNorm();
          if (nn > best_norm) {
            best_norm = nn;
            best = kk;
          }
        }
        out.data.block(c, 3 * i, 1, 3) =
            edge_out.data.block(c, 3 * (i * k + best), 1, 3);
        argmax(c, i) = best;
      }
    }
    if (cache) cache->argmax = std::move(argmax);
  }

  if (cache) {
    cache->edge_in = std::move(edge_in);
    cache->edge_out = std::move(edge_out);
    cache->n = n;
    cache->k = k;
  }
  return out;
}

Feature VNEdgeConv::backward(const Eigen::MatrixXi& neighbors,
                             const Cache& cache, const Feature& grad_out) {
  const int n = cache.n, k = cache.k;
  const int cout = grad_out.channels();
  const int cin = cache.edge_in.channels() / 2;

  Feature grad_edge_out(cout, n * k);
  if (!max_aggregate) {
    for (int i = 0; i < n; ++i) {
      const Mat g = grad_out.point(i) / static_cast<double>(k);
      for (int kk = 0; kk < k; ++kk) grad_edge_out.point(i * k + kk) = g;
    }
  } else {
    for (int i = 0; i < n; ++i)
      for (int c = 0; c < cout; ++c)
        grad_edge_out.data.block(c, 3 * (i * k + cache.argmax(c, i)), 1, 3) =
            grad_out.data.block(c, 3 * i, 1, 3);
  }

  const Feature grad_lin = nonlin.backward(cache.nonlin, grad_edge_out);
  const Feature grad_edge_in = linear.backward(cache.edge_in, grad_lin);

  Feature grad_in(cin, n);
  for (int i = 0; i < n; ++i) {
    auto gi = grad_in.point(i);
    for (int kk = 0; kk < k; ++kk) {
      const int e = i * k + kk;
      const int j = neighbors(i, kk);
      gi += grad_edge_in.point(e).topRows(cin);
      gi -= grad_edge_in.point(e).bottomRows(cin);
      grad_in.point(j) += grad_edge_in.point(e).bottomRows(cin);
    }
  }
  return grad_in;
}

void VNEdgeConv::collect(const std::string& prefix,
                         std::vector<ParamRef>& out) {
  linear.collect(prefix + ".linear", out);
  nonlin.collect(prefix + ".nonlin", out);
}

Feature mean_pool(const Feature& in) {
  const int n = in.npoints();
  Feature out(in.channels(), 1);
  for (int i = 0; i < n; ++i) out.point(0) += in.point(i);
  out.data /= static_cast<double>(n);
  return out;
}

Feature mean_pool_backward(const Feature& grad_pooled, int npoints) {
  Feature out(grad_pooled.channels(), npoints);
  const Mat g = grad_pooled.point(0) / static_cast<double>(npoints);
  for (int i = 0; i < npoints; ++i) out.point(i) = g;
  return out;
}

Feature invariant_product(const Feature& v, const Feature& frame) {
  if (frame.channels() != 3)
    throw std::invalid_argument("invariant_product: frame must have 3 channels");
  if (v.npoints() != frame.npoints())
    throw std::invalid_argument("invariant_product: point count mismatch");
  Feature out(v.channels(), v.npoints());
  for (int i = 0; i < v.npoints(); ++i)
    out.point(i) = v.point(i) * frame.point(i).transpose();
  return out;
}

void invariant_product_backward(const Feature& v, const Feature& frame,
                                const Feature& grad_out, Feature& grad_v,
                                Feature& grad_frame) {
  grad_v = Feature(v.channels(), v.npoints());
  grad_frame = Feature(3, frame.npoints());
  for (int i = 0; i < v.npoints(); ++i) {
    grad_v.point(i) = grad_out.point(i) * frame.point(i);
    grad_frame.point(i) = grad_out.point(i).transpose() * v.point(i);
  }
}

Dense::Dense(int out_dim, int in_dim, bool tanh_activation)
    : weight(Mat::Zero(out_dim, in_dim)),
      grad_weight(Mat::Zero(out_dim, in_dim)),
      bias(Mat::Zero(out_dim, 1)),
      grad_bias(Mat::Zero(out_dim, 1)),
      tanh_activation(tanh_activation) {}

void Dense::init(Rng& rng) {
  uniform_init(weight, static_cast<int>(weight.cols()), rng);
  bias.setZero();
  grad_weight.setZero();
  grad_bias.setZero();
}

Mat Dense::forward(const Mat& in, Mat* pre_activation) const {
  if (in.rows() != weight.cols())
    throw std::invalid_argument("Dense: input dim mismatch");
  Mat pre = (weight * in).colwise() + Vec(bias.col(0));
  Mat out = tanh_activation ? pre.array().tanh().matrix() : pre;
  if (pre_activation) *pre_activation = std::move(pre);
  return out;
}

Mat Dense::backward(const Mat& in, const Mat& pre_activation,
                    const Mat& grad_out) {
  Mat gpre = grad_out;
  if (tanh_activation) {
    const Mat t = pre_activation.array().tanh().matrix();
    gpre = (grad_out.array() * (1.0 - t.array().square())).matrix();
  }
  grad_weight.noalias() += gpre * in.transpose();
  grad_bias.col(0) += gpre.rowwise().sum();
  return weight.transpose() * gpre;
}

void Dense::collect(const std::string& prefix, std::vector<ParamRef>& out) {
  out.push_back({prefix + ".weight", &weight, &grad_weight});
  out.push_back({prefix + ".bias", &bias, &grad_bias});
}

void zero_grads(std::vector<ParamRef>& params) {
  for (auto& p : params) p.grad->setZero();
}

}  // namespace ristcorr::vn
