#pragma once

#include "ristcorr/geometry.hpp"
#include "ristcorr/losses.hpp"
#include "ristcorr/model.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace ristcorr {

// Which terms participate in the loss. The seven self-reconstruction
// ablation rows are the non-empty subsets of {mse, emd, cd}; the shipped
// default keeps mse+emd for self-reconstruction and chamfer for
// cross-reconstruction.
struct LossFlags {
  bool sr_mse = true;
  bool sr_emd = true;
  bool sr_cd = false;
  bool cr_cd = true;
};

struct TrainConfig {
  double lambda_mse = 1000.0;
  double lambda_emd = 1.0;
  double lambda_cd = 10.0;
  double lr = 1e-3;
  int batch_pairs = 2;
  int epochs = 10;
  int iters_per_epoch = 100;
  int n_points = 2048;
  bool rotation_augmentation = true;
  std::uint64_t seed = 0;
  std::vector<std::string> categories;
  LossFlags flags;

  void validate() const;
};

// Unweighted per-term values (each already averaged over the two clouds /
// directions); total is the weighted sum of the enabled terms.
struct LossBreakdown {
  double total = 0.0;
  double sr_mse = 0.0;
  double sr_emd = 0.0;
  double sr_cd = 0.0;
  double cr_cd = 0.0;
};

// Evaluates the full objective on one pair. When with_grad is set,
// parameter gradients are accumulated into the model (caller zeroes them).
LossBreakdown compute_loss(const Points& p1, const Points& p2, Model& model,
                           const TrainConfig& cfg, bool with_grad = false);

class Adam {
 public:
  Adam() = default;
  Adam(std::vector<vn::ParamRef> params, double lr);

  void step();

  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t t = 0;
  std::vector<Mat> m, v;

 private:
  std::vector<vn::ParamRef> params_;
};

struct TrainPair {
  int a = 0;
  int b = 0;
};

struct TrainData {
  std::vector<Points> clouds;  // normalized, resampled to a common N
  std::vector<TrainPair> pairs;
};

// Loads every cloud referenced by the manifest, normalizes it, resamples it
// to cfg.n_points, and maps the manifest's pairs onto cloud indices.
// RISTCORR_NUM_WORKERS (or num_workers >= 1) bounds loader parallelism;
// results are identical regardless of worker count.
TrainData load_train_data(const DatasetManifest& manifest,
                          const TrainConfig& cfg, int num_workers = -1);
TrainData load_train_data(const std::vector<DatasetManifest>& manifests,
                          const TrainConfig& cfg, int num_workers = -1);

Points resample_to(const Points& pts, int n, Rng& rng);

struct IterationRecord {
  int epoch = 0;
  int iter = 0;  // global, 1-based
  LossBreakdown loss;
};

struct TrainResult {
  std::vector<IterationRecord> history;
  std::string checkpoint_path;  // empty when out_dir is empty
  std::string metrics_path;
};

// Runs the optimization loop. When out_dir is non-empty, writes
// metrics.csv and checkpoint.bin (refreshed each epoch, atomically).
TrainResult train(Model& model, const TrainData& data, const TrainConfig& cfg,
                  const std::string& out_dir = "");

std::string metrics_csv(const std::vector<IterationRecord>& history);

}  // namespace ristcorr
