#pragma once

#include "ristcorr/model.hpp"
#include "ristcorr/training.hpp"

#include <map>
#include <string>
#include <vector>

namespace ristcorr {

// Flat key=value configuration: '#' comments, blank lines ignored, keys use
// section dots (train.lr=1e-3). Later assignments win.
using ConfigMap = std::map<std::string, std::string>;

ConfigMap parse_config_text(const std::string& text);
ConfigMap parse_config_file(const std::string& path);
// kv must look like "key=value"; throws ConfigError otherwise.
void apply_override(ConfigMap& cfg, const std::string& kv);

struct AppSettings {
  std::string model_preset = "full";
  bool max_aggregation = false;
  TrainConfig train;
  std::string eval_protocol = "rotated";
  std::string matcher = "recon";

  ModelConfig model_config() const;
};

// Typed extraction. Unknown keys are rejected with an error naming the key;
// a few short aliases (lr, seed, epochs) map onto their train.* keys.
AppSettings settings_from(const ConfigMap& cfg);

// The effective configuration, one key=value per line, for logging.
std::string settings_echo(const AppSettings& s);

}  // namespace ristcorr
