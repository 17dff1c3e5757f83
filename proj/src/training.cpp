#include "ristcorr/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "ristcorr/checkpoint.hpp"

namespace ristcorr {

namespace {

LossValue sr_emd_term(const Points& pred, const Points& target) {
  if (pred.rows() <= 512) return emd_exact(pred, target);
  return emd_approx(pred, target, 0.02, 300);
}

void check_component(double v, const char* name) {
  if (!std::isfinite(v))
    throw NumericalError(std::string("non-finite loss component ") + name);
}

}  // namespace

void TrainConfig::validate() const {
  if (lambda_mse < 0 || lambda_emd < 0 || lambda_cd < 0)
    throw ConfigError("loss weights must be >= 0");
  if (lr <= 0) throw ConfigError("learning rate must be > 0");
  if (batch_pairs < 1) throw ConfigError("batch_pairs must be >= 1");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (iters_per_epoch < 1) throw ConfigError("iters_per_epoch must be >= 1");
  if (n_points < 2) throw ConfigError("n_points must be >= 2");
}

LossBreakdown compute_loss(const Points& p1, const Points& p2, Model& model,
                           const TrainConfig& cfg, bool with_grad) {
  if (p1.rows() != p2.rows())
    throw std::invalid_argument(
        "compute_loss: clouds must share a point count (resample at ingestion)");
  const int n = static_cast<int>(p1.rows());
  const LossFlags& fl = cfg.flags;
  const bool need_self = fl.sr_mse || fl.sr_emd || fl.sr_cd;

  Encoder::Cache c1, c2;
  const EncoderOutput e1 = model.encoder.forward(p1, with_grad ? &c1 : nullptr);
  const EncoderOutput e2 = model.encoder.forward(p2, with_grad ? &c2 : nullptr);

  Decoder::Cache dc1, dc2, dc21, dc12;
  Points r1, r2, r21, r12;
  if (need_self) {
    r1 = model.decoder.decode(local_descriptors(e1.transforms, e1.Z),
                              with_grad ? &dc1 : nullptr);
    r2 = model.decoder.decode(local_descriptors(e2.transforms, e2.Z),
                              with_grad ? &dc2 : nullptr);
  }
  if (fl.cr_cd) {
    r21 = model.decoder.decode(local_descriptors(e2.transforms, e1.Z),
                               with_grad ? &dc21 : nullptr);
    r12 = model.decoder.decode(local_descriptors(e1.transforms, e2.Z),
                               with_grad ? &dc12 : nullptr);
  }

  LossValue mse1, mse2, emd1, emd2, cds1, cds2, cd21, cd12;
  LossBreakdown out;
  if (fl.sr_mse) {
    mse1 = mse_paired(r1, p1);
    mse2 = mse_paired(r2, p2);
    out.sr_mse = 0.5 * (mse1.value + mse2.value);
    check_component(out.sr_mse, "L_SR_MSE");
  }
  if (fl.sr_emd) {
    emd1 = sr_emd_term(r1, p1);
    emd2 = sr_emd_term(r2, p2);
    out.sr_emd = 0.5 * (emd1.value + emd2.value);
    check_component(out.sr_emd, "L_SR_EMD");
  }
  if (fl.sr_cd) {
    cds1 = chamfer(r1, p1);
    cds2 = chamfer(r2, p2);
    out.sr_cd = 0.5 * (cds1.value + cds2.value);
    check_component(out.sr_cd, "L_SR_CD");
  }
  if (fl.cr_cd) {
    cd21 = chamfer(r21, p1);
    cd12 = chamfer(r12, p2);
    out.cr_cd = 0.5 * (cd21.value + cd12.value);
    check_component(out.cr_cd, "L_CR_CD");
  }
  double total = 0.0;
  if (fl.sr_mse) total += cfg.lambda_mse * out.sr_mse;
  if (fl.sr_emd) total += cfg.lambda_emd * out.sr_emd;
  if (fl.sr_cd) total += cfg.lambda_cd * out.sr_cd;
  if (fl.cr_cd) total += cfg.lambda_cd * out.cr_cd;
  out.total = total;

  if (!with_grad) return out;

  Mat gz1 = Mat::Zero(e1.Z.rows(), 3);
  Mat gz2 = Mat::Zero(e2.Z.rows(), 3);
  std::vector<Mat> gth1(n, Mat::Zero(e1.transforms[0].rows(), e1.Z.rows()));
  std::vector<Mat> gth2 = gth1;

  auto descriptor_grads = [&](const vn::Feature& gdesc,
                              const EncoderOutput& transform_provider,
                              const EncoderOutput& pose_provider,
                              std::vector<Mat>& gtheta, Mat& gz) {
    for (int i = 0; i < n; ++i) {
      gtheta[i] += gdesc.point(i) * pose_provider.Z.transpose();
      gz += transform_provider.transforms[i].transpose() * gdesc.point(i);
    }
  };

  if (need_self) {
    Points g1 = Points::Zero(n, 3), g2 = Points::Zero(n, 3);
    if (fl.sr_mse) {
      g1 += 0.5 * cfg.lambda_mse * mse1.grad_pred;
      g2 += 0.5 * cfg.lambda_mse * mse2.grad_pred;
    }
    if (fl.sr_emd) {
      g1 += 0.5 * cfg.lambda_emd * emd1.grad_pred;
      g2 += 0.5 * cfg.lambda_emd * emd2.grad_pred;
    }
    if (fl.sr_cd) {
      g1 += 0.5 * cfg.lambda_cd * cds1.grad_pred;
      g2 += 0.5 * cfg.lambda_cd * cds2.grad_pred;
    }
    descriptor_grads(model.decoder.backward(dc1, g1), e1, e1, gth1, gz1);
    descriptor_grads(model.decoder.backward(dc2, g2), e2, e2, gth2, gz2);
  }
  if (fl.cr_cd) {
    const Points g21 = 0.5 * cfg.lambda_cd * cd21.grad_pred;
    const Points g12 = 0.5 * cfg.lambda_cd * cd12.grad_pred;
    descriptor_grads(model.decoder.backward(dc21, g21), e2, e1, gth2, gz1);
    descriptor_grads(model.decoder.backward(dc12, g12), e1, e2, gth1, gz2);
  }
  model.encoder.backward(c1, gz1, gth1);
  model.encoder.backward(c2, gz2, gth2);
  return out;
}

Adam::Adam(std::vector<vn::ParamRef> params, double lr)
    : lr(lr), params_(std::move(params)) {
  m.reserve(params_.size());
  v.reserve(params_.size());
  for (const auto& p : params_) {
    m.push_back(Mat::Zero(p.value->rows(), p.value->cols()));
    v.push_back(Mat::Zero(p.value->rows(), p.value->cols()));
  }
}

void Adam::step() {
  ++t;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  for (size_t i = 0; i < params_.size(); ++i) {
    const Mat& g = *params_[i].grad;
    m[i] = beta1 * m[i] + (1.0 - beta1) * g;
    v[i] = beta2 * v[i] + (1.0 - beta2) * g.cwiseProduct(g);
    const Mat mhat = m[i] / bc1;
    const Mat vhat = v[i] / bc2;
    *params_[i].value -=
        lr * (mhat.array() / (vhat.array().sqrt() + eps)).matrix();
  }
}

Points resample_to(const Points& pts, int n, Rng& rng) {
  const int src = static_cast<int>(pts.rows());
  if (src == 0) throw DataError("cannot resample an empty cloud");
  Points out(n, 3);
  if (src == n) return pts;
  if (n < src) {
    std::vector<int> idx(src);
    std::iota(idx.begin(), idx.end(), 0);
    for (int i = 0; i < n; ++i) {
      std::uniform_int_distribution<int> pick(i, src - 1);
      std::swap(idx[i], idx[pick(rng)]);
      out.row(i) = pts.row(idx[i]);
    }
  } else {
    std::uniform_int_distribution<int> pick(0, src - 1);
    for (int i = 0; i < n; ++i) out.row(i) = pts.row(pick(rng));
  }
  return out;
}

namespace {

int effective_workers(int num_workers) {
  if (num_workers >= 0) return num_workers;
  const char* env = std::getenv("RISTCORR_NUM_WORKERS");
  if (!env || !*env) return 0;
  return std::max(0, std::atoi(env));
}

}  // namespace

TrainData load_train_data(const std::vector<DatasetManifest>& manifests,
                          const TrainConfig& cfg, int num_workers) {
  if (manifests.empty()) throw DataError("no manifest given");
  for (const auto& m : manifests) {
    if (m.pairs.empty())
      throw DataError("manifest for category '" + m.category + "' has no pairs");
    if (!cfg.categories.empty() &&
        std::find(cfg.categories.begin(), cfg.categories.end(), m.category) ==
            cfg.categories.end())
      throw DataError("manifest category '" + m.category +
                      "' is not in the configured category list");
  }

  TrainData data;
  std::vector<std::string> paths;
  std::map<std::string, int> index_of;
  for (const auto& m : manifests) {
    for (const auto& pr : m.pairs) {
      for (const std::string& rel : {pr.source, pr.target}) {
        const std::string full =
            (std::filesystem::path(m.base_dir) / rel).string();
        if (index_of.emplace(full, static_cast<int>(paths.size())).second)
          paths.push_back(full);
      }
      data.pairs.push_back(
          {index_of[(std::filesystem::path(m.base_dir) / pr.source).string()],
           index_of[(std::filesystem::path(m.base_dir) / pr.target).string()]});
    }
  }

  data.clouds.resize(paths.size());
  auto load_one = [&](int i) {
    const PointCloud cloud = normalize_to_unit_sphere(load_point_cloud(paths[i]));
    Rng rng(cfg.seed ^ (0x9e3779b97f4a7c15ULL * (static_cast<std::uint64_t>(i) + 1)));
    data.clouds[i] = resample_to(cloud.points, cfg.n_points, rng);
  };

  const int workers =
      std::min<int>(effective_workers(num_workers), static_cast<int>(paths.size()));
  if (workers <= 1) {
    for (int i = 0; i < static_cast<int>(paths.size()); ++i) load_one(i);
  } else {
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (int i = w; i < static_cast<int>(paths.size()); i += workers)
            load_one(i);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }
  return data;
}

TrainData load_train_data(const DatasetManifest& manifest,
                          const TrainConfig& cfg, int num_workers) {
  return load_train_data(std::vector<DatasetManifest>{manifest}, cfg,
                         num_workers);
}

std::string metrics_csv(const std::vector<IterationRecord>& history) {
  std::string out = "epoch,iter,L_total,L_SR_MSE,L_SR_EMD,L_CR_CD\n";
  char buf[256];
  for (const auto& r : history) {
    std::snprintf(buf, sizeof(buf), "%d,%d,%.17g,%.17g,%.17g,%.17g\n", r.epoch,
                  r.iter, r.loss.total, r.loss.sr_mse, r.loss.sr_emd,
                  r.loss.cr_cd);
    out += buf;
  }
  return out;
}

TrainResult train(Model& model, const TrainData& data, const TrainConfig& cfg,
                  const std::string& out_dir) {
  cfg.validate();
  if (data.pairs.empty()) throw DataError("training data has no pairs");
  for (const auto& c : data.clouds)
    if (c.rows() != data.clouds.front().rows())
      throw DataError("training clouds must share a point count");

  Rng master(cfg.seed);
  Rng init_rng(master());
  Rng sample_rng(master());
  Rng augment_rng(master());
  model.init(init_rng);

  auto params = model.params();
  Adam adam(params, cfg.lr);
  std::uniform_int_distribution<int> pick_pair(
      0, static_cast<int>(data.pairs.size()) - 1);

  TrainResult result;
  int global_iter = 0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (int it = 0; it < cfg.iters_per_epoch; ++it) {
      ++global_iter;
      vn::zero_grads(params);
      LossBreakdown avg;
      for (int b = 0; b < cfg.batch_pairs; ++b) {
        const TrainPair pr = data.pairs[pick_pair(sample_rng)];
        Points pa = data.clouds[pr.a];
        Points pb = data.clouds[pr.b];
        if (cfg.rotation_augmentation) {
          pa = rotate_points(pa, sample_uniform_rotation(augment_rng));
          pb = rotate_points(pb, sample_uniform_rotation(augment_rng));
        }
        const LossBreakdown l = compute_loss(pa, pb, model, cfg, true);
        avg.total += l.total;
        avg.sr_mse += l.sr_mse;
        avg.sr_emd += l.sr_emd;
        avg.sr_cd += l.sr_cd;
        avg.cr_cd += l.cr_cd;
      }
      const double inv = 1.0 / cfg.batch_pairs;
      avg.total *= inv;
      avg.sr_mse *= inv;
      avg.sr_emd *= inv;
      avg.sr_cd *= inv;
      avg.cr_cd *= inv;
      for (auto& p : params) *p.grad *= inv;
      adam.step();
      result.history.push_back({epoch, global_iter, avg});
    }
    if (!out_dir.empty()) {
      std::filesystem::create_directories(out_dir);
      std::string rng_state;
      {
        std::ostringstream ss;
        ss << sample_rng << ' ' << augment_rng;
        rng_state = ss.str();
      }
      const Checkpoint ckpt = make_checkpoint(
          model, cfg, &adam, static_cast<std::uint64_t>(epoch), rng_state);
      char name[64];
      std::snprintf(name, sizeof(name), "checkpoint_epoch_%03d.bin", epoch);
      save_checkpoint(ckpt, (std::filesystem::path(out_dir) / name).string());
      result.checkpoint_path =
          (std::filesystem::path(out_dir) / "checkpoint.bin").string();
      save_checkpoint(ckpt, result.checkpoint_path);
      result.metrics_path =
          (std::filesystem::path(out_dir) / "metrics.csv").string();
      atomic_write_file(result.metrics_path, metrics_csv(result.history));
    }
  }
  return result;
}

}  // namespace ristcorr
