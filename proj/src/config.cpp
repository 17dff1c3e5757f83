#include "ristcorr/config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace ristcorr {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    throw ConfigError("bad numeric value for " + key + ": '" + v + "'");
  }
  if (used != v.size())
    throw ConfigError("bad numeric value for " + key + ": '" + v + "'");
  return out;
}

long long parse_int(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  long long out;
  try {
    out = std::stoll(v, &used);
  } catch (const std::exception&) {
    throw ConfigError("bad integer value for " + key + ": '" + v + "'");
  }
  if (used != v.size())
    throw ConfigError("bad integer value for " + key + ": '" + v + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "off" || v == "no") return false;
  throw ConfigError("bad boolean value for " + key + ": '" + v + "'");
}

std::vector<std::string> split_csv(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

const std::map<std::string, std::string> kAliases = {
    {"lr", "train.lr"}, {"seed", "train.seed"}, {"epochs", "train.epochs"}};

}  // namespace

ConfigMap parse_config_text(const std::string& text) {
  ConfigMap cfg;
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) +
                        " is not key=value: '" + line + "'");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty())
      throw ConfigError("config line " + std::to_string(lineno) +
                        " has an empty key");
    cfg[key] = trim(line.substr(eq + 1));
  }
  return cfg;
}

ConfigMap parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

void apply_override(ConfigMap& cfg, const std::string& kv) {
  const auto eq = kv.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("override is not key=value: '" + kv + "'");
  cfg[trim(kv.substr(0, eq))] = trim(kv.substr(eq + 1));
}

ModelConfig AppSettings::model_config() const {
  ModelConfig mc = ModelConfig::from_preset(model_preset);
  mc.encoder.max_aggregation = max_aggregation;
  return mc;
}

AppSettings settings_from(const ConfigMap& cfg) {
  AppSettings s;
  for (const auto& [raw_key, value] : cfg) {
    const auto alias = kAliases.find(raw_key);
    const std::string key = alias == kAliases.end() ? raw_key : alias->second;
    if (key == "model.preset") {
      s.model_preset = value;
      ModelConfig::from_preset(value);  // validates the name
    } else if (key == "model.max_aggregation") {
      s.max_aggregation = parse_bool(key, value);
    } else if (key == "train.lambda_mse") {
      s.train.lambda_mse = parse_double(key, value);
    } else if (key == "train.lambda_emd") {
      s.train.lambda_emd = parse_double(key, value);
    } else if (key == "train.lambda_cd") {
      s.train.lambda_cd = parse_double(key, value);
    } else if (key == "train.lr") {
      s.train.lr = parse_double(key, value);
    } else if (key == "train.batch_pairs") {
      s.train.batch_pairs = static_cast<int>(parse_int(key, value));
    } else if (key == "train.epochs") {
      s.train.epochs = static_cast<int>(parse_int(key, value));
    } else if (key == "train.iters_per_epoch") {
      s.train.iters_per_epoch = static_cast<int>(parse_int(key, value));
    } else if (key == "train.n_points") {
      s.train.n_points = static_cast<int>(parse_int(key, value));
    } else if (key == "train.rotation_augmentation") {
      s.train.rotation_augmentation = parse_bool(key, value);
    } else if (key == "train.seed") {
      s.train.seed = static_cast<std::uint64_t>(parse_int(key, value));
    } else if (key == "train.categories") {
      s.train.categories = split_csv(value);
    } else if (key == "train.sr_mse") {
      s.train.flags.sr_mse = parse_bool(key, value);
    } else if (key == "train.sr_emd") {
      s.train.flags.sr_emd = parse_bool(key, value);
    } else if (key == "train.sr_cd") {
      s.train.flags.sr_cd = parse_bool(key, value);
    } else if (key == "train.cr_cd") {
      s.train.flags.cr_cd = parse_bool(key, value);
    } else if (key == "eval.protocol") {
      if (value != "aligned" && value != "rotated")
        throw ConfigError("eval.protocol must be aligned or rotated, got '" +
                          value + "'");
      s.eval_protocol = value;
    } else if (key == "infer.matcher") {
      if (value != "recon" && value != "lst")
        throw ConfigError("infer.matcher must be recon or lst, got '" + value +
                          "'");
      s.matcher = value;
    } else {
      throw ConfigError("unknown config key: " + raw_key);
    }
  }
  s.train.validate();
  return s;
}

std::string settings_echo(const AppSettings& s) {
  std::ostringstream out;
  auto num = [](double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%g", v);
    return std::string(buf);
  };
  out << "model.preset=" << s.model_preset << '\n'
      << "model.max_aggregation=" << (s.max_aggregation ? "true" : "false") << '\n'
      << "train.lambda_mse=" << num(s.train.lambda_mse) << '\n'
      << "train.lambda_emd=" << num(s.train.lambda_emd) << '\n'
      << "train.lambda_cd=" << num(s.train.lambda_cd) << '\n'
      << "train.lr=" << num(s.train.lr) << '\n'
      << "train.batch_pairs=" << s.train.batch_pairs << '\n'
      << "train.epochs=" << s.train.epochs << '\n'
      << "train.iters_per_epoch=" << s.train.iters_per_epoch << '\n'
      << "train.n_points=" << s.train.n_points << '\n'
      << "train.rotation_augmentation="
      << (s.train.rotation_augmentation ? "true" : "false") << '\n'
      << "train.seed=" << s.train.seed << '\n';
  out << "train.categories=";
  for (size_t i = 0; i < s.train.categories.size(); ++i)
    out << (i ? "," : "") << s.train.categories[i];
  out << '\n';
  out << "train.sr_mse=" << (s.train.flags.sr_mse ? "true" : "false") << '\n'
      << "train.sr_emd=" << (s.train.flags.sr_emd ? "true" : "false") << '\n'
      << "train.sr_cd=" << (s.train.flags.sr_cd ? "true" : "false") << '\n'
      << "train.cr_cd=" << (s.train.flags.cr_cd ? "true" : "false") << '\n'
      << "eval.protocol=" << s.eval_protocol << '\n'
      << "infer.matcher=" << s.matcher << '\n';
  return out.str();
}

}  // namespace ristcorr
