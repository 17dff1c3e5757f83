#include "ristcorr/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#include "ristcorr/checkpoint.hpp"
#include "ristcorr/config.hpp"
#include "ristcorr/equivariance.hpp"
#include "ristcorr/evaluation.hpp"
#include "ristcorr/inference.hpp"
#include "ristcorr/training.hpp"

namespace ristcorr {

namespace {

namespace fs = std::filesystem;

struct CommonArgs {
  std::string config_file;
  std::vector<std::string> overrides;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string out_dir;
};

void add_common(CLI::App* cmd, CommonArgs& c, bool with_out) {
  cmd->add_option("--config", c.config_file, "key=value config file");
  cmd->add_option("--override", c.overrides, "config override key=value")
      ->take_all();
  cmd->add_option("--seed", c.seed, "RNG seed")
      ->each([&c](const std::string&) { c.seed_set = true; });
  if (with_out)
    cmd->add_option("--out", c.out_dir, "output directory")->required();
}

AppSettings resolve_settings(const CommonArgs& c) {
  ConfigMap cfg;
  if (!c.config_file.empty()) cfg = parse_config_file(c.config_file);
  for (const auto& kv : c.overrides) apply_override(cfg, kv);
  AppSettings s = settings_from(cfg);
  if (c.seed_set) s.train.seed = c.seed;
  return s;
}

Model load_model_checked(const std::string& checkpoint_path) {
  if (!fs::exists(checkpoint_path))
    throw ConfigError("missing checkpoint: " + checkpoint_path);
  return restore_model(load_checkpoint(checkpoint_path));
}

int cmd_train(const CommonArgs& common, const std::vector<std::string>& manifests) {
  const AppSettings s = resolve_settings(common);
  std::cout << "effective config:\n" << settings_echo(s);

  std::vector<DatasetManifest> loaded;
  for (const auto& path : manifests) {
    if (!fs::exists(path)) throw DataError("manifest not found: " + path);
    loaded.push_back(load_manifest(path));
  }
  const TrainData data = load_train_data(loaded, s.train);

  Model model(s.model_config());
  const TrainResult result = train(model, data, s.train, common.out_dir);
  std::cout << "trained " << result.history.back().iter
            << " iterations; final L_total=" << result.history.back().loss.total
            << "\n"
            << "checkpoint: " << result.checkpoint_path << "\n"
            << "metrics: " << result.metrics_path << "\n";
  return 0;
}

int cmd_infer(const CommonArgs& common, const std::string& checkpoint,
              const std::string& source_path, const std::string& target_path,
              std::string matcher, bool save_recon) {
  const AppSettings s = resolve_settings(common);
  if (matcher.empty()) matcher = s.matcher;
  if (matcher != "recon" && matcher != "lst")
    throw ConfigError("matcher must be recon or lst, got '" + matcher + "'");

  const Model model = load_model_checked(checkpoint);
  for (const auto& p : {source_path, target_path})
    if (!fs::exists(p)) throw DataError("point cloud not found: " + p);
  const PointCloud source = normalize_to_unit_sphere(load_point_cloud(source_path));
  const PointCloud target = normalize_to_unit_sphere(load_point_cloud(target_path));

  CorrespondenceSet corr = matcher == "lst"
                               ? correspond_lst(source.points, target.points, model)
                               : correspond(source.points, target.points, model);
  corr.direction = fs::path(source_path).filename().string() + "->" +
                   fs::path(target_path).filename().string();

  fs::create_directories(common.out_dir);
  const fs::path out_csv = fs::path(common.out_dir) / "correspondence.csv";
  atomic_write_file(out_csv, correspondence_csv(corr, matcher, file_hash(checkpoint)));
  if (save_recon && corr.reconstructed.size() > 0) {
    PointCloud recon;
    recon.points = corr.reconstructed;
    save_point_cloud(recon, fs::path(common.out_dir) / "cross_reconstruction.xyz");
  }
  std::cout << "matched " << corr.pairs.size() << " source points; wrote "
            << out_csv.string() << "\n";
  return 0;
}

int cmd_eval(const CommonArgs& common, const std::string& checkpoint,
             const std::string& manifest_path, std::string protocol) {
  const AppSettings s = resolve_settings(common);
  if (protocol.empty()) protocol = s.eval_protocol;
  const EvalProtocol proto = protocol_from_string(protocol);

  const Model model = load_model_checked(checkpoint);
  if (!fs::exists(manifest_path))
    throw DataError("manifest not found: " + manifest_path);
  const DatasetManifest manifest = load_manifest(manifest_path);

  const EvalReport report =
      evaluate(manifest, model, proto, default_tau_grid(), s.train.seed);

  fs::create_directories(common.out_dir);
  atomic_write_file(fs::path(common.out_dir) / "report.json", report_json(report));
  atomic_write_file(fs::path(common.out_dir) / "pck_curve.csv",
                    pck_curve_csv(report));
  char summary[128];
  std::snprintf(summary, sizeof(summary), "protocol=%s pairs=%zu mean_iou=%.4f\n",
                report.protocol.c_str(), report.pairs.size(), report.mean_iou);
  std::cout << summary;
  return 0;
}

int cmd_check_equivariance(const CommonArgs& common,
                           const std::string& checkpoint, int trials,
                           double inject_bias) {
  if (trials < 1) throw ConfigError("--trials must be >= 1");
  Model model;
  if (!checkpoint.empty()) {
    model = load_model_checked(checkpoint);
  } else {
    model = Model(ModelConfig::test_scale());
    Rng rng(common.seed);
    model.init(rng);
  }
  model.encoder.debug_bias = inject_bias;

  const EquivarianceReport report =
      check_equivariance(model, trials, 128, common.seed + 1);
  std::cout << format_report(report);
  if (!report.all_pass) {
    std::cerr << "equivariance gate exceeded: " << report.first_failure()->component
              << "\n";
    return 5;
  }
  return 0;
}

int cmd_gen_synthetic(const CommonArgs& common, const std::string& family_name,
                      int count, int n_points) {
  if (count < 2) throw ConfigError("--count must be >= 2");
  if (n_points < 8) throw ConfigError("--n-points must be >= 8");
  ShapeFamily family;
  try {
    family = family_from_string(family_name);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }

  Rng rng(common.seed);
  fs::create_directories(common.out_dir);
  DatasetManifest manifest;
  manifest.category = to_string(family);
  manifest.base_dir = common.out_dir;

  std::vector<std::string> cloud_files, kp_files;
  for (int i = 0; i < count; ++i) {
    const SyntheticPairSpec spec = random_instance_spec(family, n_points, rng);
    const PointCloud cloud = generate_synthetic_instance(spec);
    char cloud_name[48], kp_name[48];
    std::snprintf(cloud_name, sizeof(cloud_name), "cloud_%03d.xyz", i);
    std::snprintf(kp_name, sizeof(kp_name), "keypoints_%03d.txt", i);
    save_point_cloud(cloud, fs::path(common.out_dir) / cloud_name);
    save_keypoints(cloud.keypoints, fs::path(common.out_dir) / kp_name);
    cloud_files.emplace_back(cloud_name);
    kp_files.emplace_back(kp_name);
  }
  for (int i = 0; i < count; ++i) {
    const int j = (i + 1) % count;
    manifest.pairs.push_back(
        {cloud_files[i], cloud_files[j], kp_files[i], kp_files[j]});
  }
  save_manifest(manifest, fs::path(common.out_dir) / "manifest.json");
  std::cout << "wrote " << count << " " << manifest.category
            << " instances and manifest.json under " << common.out_dir << "\n";
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"rotation-invariant dense point-cloud correspondence"};
  app.require_subcommand(1);

  CommonArgs train_args, infer_args, eval_args, check_args, gen_args;
  std::vector<std::string> manifests;
  std::string checkpoint, source, target, matcher, eval_manifest, protocol;
  std::string family = "dumbbell";
  bool save_recon = false;
  int trials = 100, count = 50, n_points = 128;
  double inject_bias = 0.0;

  CLI::App* t = app.add_subcommand("train", "train a model from a manifest");
  add_common(t, train_args, true);
  t->add_option("--manifest", manifests, "dataset manifest (repeatable)")
      ->required()
      ->take_all();

  CLI::App* inf = app.add_subcommand("infer", "dense correspondence for one pair");
  add_common(inf, infer_args, true);
  inf->add_option("--checkpoint", checkpoint, "trained checkpoint")->required();
  inf->add_option("--source", source, "source cloud file")->required();
  inf->add_option("--target", target, "target cloud file")->required();
  inf->add_option("--matcher", matcher, "recon|lst");
  inf->add_flag("--save-recon", save_recon, "also write the cross-reconstruction");

  CLI::App* ev = app.add_subcommand("eval", "label/keypoint transfer metrics");
  add_common(ev, eval_args, true);
  ev->add_option("--checkpoint", checkpoint, "trained checkpoint")->required();
  ev->add_option("--manifest", eval_manifest, "dataset manifest")->required();
  ev->add_option("--protocol", protocol, "aligned|rotated");

  CLI::App* ch = app.add_subcommand("check-equivariance",
                                    "verify rotation contracts of the model");
  add_common(ch, check_args, false);
  ch->add_option("--checkpoint", checkpoint,
                 "checkpoint to check (random test-config model if absent)");
  ch->add_option("--trials", trials, "number of random rotations");
  ch->add_option("--inject-bias", inject_bias,
                 "debug: add a fixed world-frame bias to break equivariance");

  CLI::App* gen = app.add_subcommand("gen-synthetic",
                                     "generate a synthetic shape dataset");
  add_common(gen, gen_args, true);
  gen->add_option("--family", family, "ellipsoid-2part|dumbbell|bent-rod");
  gen->add_option("--count", count, "number of instances");
  gen->add_option("--n-points", n_points, "points per instance");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (t->parsed()) return cmd_train(train_args, manifests);
    if (inf->parsed())
      return cmd_infer(infer_args, checkpoint, source, target, matcher, save_recon);
    if (ev->parsed()) return cmd_eval(eval_args, checkpoint, eval_manifest, protocol);
    if (ch->parsed())
      return cmd_check_equivariance(check_args, checkpoint, trials, inject_bias);
    if (gen->parsed()) return cmd_gen_synthetic(gen_args, family, count, n_points);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const CorruptCheckpointError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const CheckpointVersionError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 4;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}

}  // namespace ristcorr
