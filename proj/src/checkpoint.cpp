#include "ristcorr/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include <json.hpp>

namespace ristcorr {

namespace {

using nlohmann::json;

constexpr char kMagic[8] = {'R', 'I', 'S', 'T', 'C', 'K', 'P', 'T'};

json encoder_to_json(const EncoderConfig& c) {
  return json{{"stage_channels", c.stage_channels},
              {"fusion_channels", c.fusion_channels},
              {"descriptor_channels", c.descriptor_channels},
              {"local_channels", c.local_channels},
              {"theta_hidden", c.theta_hidden},
              {"k_neighbors", c.k_neighbors},
              {"max_aggregation", c.max_aggregation}};
}

EncoderConfig encoder_from_json(const json& j) {
  EncoderConfig c;
  j.at("stage_channels").get_to(c.stage_channels);
  j.at("fusion_channels").get_to(c.fusion_channels);
  j.at("descriptor_channels").get_to(c.descriptor_channels);
  j.at("local_channels").get_to(c.local_channels);
  j.at("theta_hidden").get_to(c.theta_hidden);
  j.at("k_neighbors").get_to(c.k_neighbors);
  j.at("max_aggregation").get_to(c.max_aggregation);
  return c;
}

json decoder_to_json(const DecoderConfig& c) {
  return json{{"local_channels", c.local_channels}, {"hidden", c.hidden}};
}

DecoderConfig decoder_from_json(const json& j) {
  DecoderConfig c;
  j.at("local_channels").get_to(c.local_channels);
  j.at("hidden").get_to(c.hidden);
  return c;
}

json train_to_json(const TrainConfig& c) {
  return json{{"lambda_mse", c.lambda_mse},
              {"lambda_emd", c.lambda_emd},
              {"lambda_cd", c.lambda_cd},
              {"lr", c.lr},
              {"batch_pairs", c.batch_pairs},
              {"epochs", c.epochs},
              {"iters_per_epoch", c.iters_per_epoch},
              {"n_points", c.n_points},
              {"rotation_augmentation", c.rotation_augmentation},
              {"seed", c.seed},
              {"categories", c.categories},
              {"flags",
               {{"sr_mse", c.flags.sr_mse},
                {"sr_emd", c.flags.sr_emd},
                {"sr_cd", c.flags.sr_cd},
                {"cr_cd", c.flags.cr_cd}}}};
}

TrainConfig train_from_json(const json& j) {
  TrainConfig c;
  j.at("lambda_mse").get_to(c.lambda_mse);
  j.at("lambda_emd").get_to(c.lambda_emd);
  j.at("lambda_cd").get_to(c.lambda_cd);
  j.at("lr").get_to(c.lr);
  j.at("batch_pairs").get_to(c.batch_pairs);
  j.at("epochs").get_to(c.epochs);
  j.at("iters_per_epoch").get_to(c.iters_per_epoch);
  j.at("n_points").get_to(c.n_points);
  j.at("rotation_augmentation").get_to(c.rotation_augmentation);
  j.at("seed").get_to(c.seed);
  j.at("categories").get_to(c.categories);
  const json& f = j.at("flags");
  f.at("sr_mse").get_to(c.flags.sr_mse);
  f.at("sr_emd").get_to(c.flags.sr_emd);
  f.at("sr_cd").get_to(c.flags.sr_cd);
  f.at("cr_cd").get_to(c.flags.cr_cd);
  return c;
}

void put_u32(std::string& out, std::uint32_t v) {
  out.append(reinterpret_cast<const char*>(&v), sizeof(v));
}

void put_u64(std::string& out, std::uint64_t v) {
  out.append(reinterpret_cast<const char*>(&v), sizeof(v));
}

class Reader {
 public:
  explicit Reader(const std::string& path) : in_(path, std::ios::binary) {
    if (!in_) throw CorruptCheckpointError("cannot open checkpoint: " + path);
  }

  void bytes(void* dst, std::size_t count) {
    in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(count));
    if (in_.gcount() != static_cast<std::streamsize>(count))
      throw CorruptCheckpointError("truncated checkpoint file");
  }

  std::uint32_t u32() {
    std::uint32_t v;
    bytes(&v, sizeof(v));
    return v;
  }

  std::uint64_t u64() {
    std::uint64_t v;
    bytes(&v, sizeof(v));
    return v;
  }

  std::string str(std::size_t len) {
    if (len > (1ull << 32))
      throw CorruptCheckpointError("implausible string length in checkpoint");
    std::string s(len, '\0');
    if (len) bytes(s.data(), len);
    return s;
  }

 private:
  std::ifstream in_;
};

}  // namespace

Checkpoint make_checkpoint(Model& model, const TrainConfig& train_cfg,
                           const Adam* adam, std::uint64_t epoch,
                           const std::string& rng_state) {
  Checkpoint ckpt;
  ckpt.model_config = model.config();
  ckpt.train_config = train_cfg;
  ckpt.epoch = epoch;
  ckpt.rng_state = rng_state;
  auto params = model.params();
  for (const auto& p : params) ckpt.tensors[p.name] = *p.value;
  if (adam) {
    ckpt.has_optimizer = true;
    ckpt.adam_step = adam->t;
    for (size_t i = 0; i < params.size(); ++i) {
      ckpt.tensors["adam.m/" + params[i].name] = adam->m[i];
      ckpt.tensors["adam.v/" + params[i].name] = adam->v[i];
    }
  }
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::string buf;
  buf.append(kMagic, sizeof(kMagic));
  put_u32(buf, kCheckpointVersion);

  const json cfg{{"model",
                  {{"encoder", encoder_to_json(ckpt.model_config.encoder)},
                   {"decoder", decoder_to_json(ckpt.model_config.decoder)}}},
                 {"train", train_to_json(ckpt.train_config)}};
  const std::string cfg_text = cfg.dump();
  put_u64(buf, cfg_text.size());
  buf += cfg_text;

  buf.push_back(ckpt.has_optimizer ? 1 : 0);
  put_u64(buf, ckpt.adam_step);
  put_u64(buf, ckpt.epoch);
  put_u64(buf, ckpt.rng_state.size());
  buf += ckpt.rng_state;

  put_u64(buf, ckpt.tensors.size());
  for (const auto& [name, tensor] : ckpt.tensors) {
    put_u32(buf, static_cast<std::uint32_t>(name.size()));
    buf += name;
    put_u64(buf, static_cast<std::uint64_t>(tensor.rows()));
    put_u64(buf, static_cast<std::uint64_t>(tensor.cols()));
    buf.append(reinterpret_cast<const char*>(tensor.data()),
               sizeof(double) * static_cast<std::size_t>(tensor.size()));
  }
  atomic_write_file(path, buf);
}

Checkpoint load_checkpoint(const std::string& path) {
  Reader in(path);
  char magic[8];
  in.bytes(magic, sizeof(magic));
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw CorruptCheckpointError("bad checkpoint magic in " + path);
  const std::uint32_t version = in.u32();
  if (version != kCheckpointVersion)
    throw CheckpointVersionError("unsupported checkpoint version " +
                                 std::to_string(version));

  Checkpoint ckpt;
  const std::string cfg_text = in.str(in.u64());
  try {
    const json cfg = json::parse(cfg_text);
    ckpt.model_config.encoder = encoder_from_json(cfg.at("model").at("encoder"));
    ckpt.model_config.decoder = decoder_from_json(cfg.at("model").at("decoder"));
    ckpt.train_config = train_from_json(cfg.at("train"));
  } catch (const json::exception& e) {
    throw CorruptCheckpointError(std::string("bad checkpoint config: ") +
                                 e.what());
  }

  std::uint8_t has_opt;
  in.bytes(&has_opt, 1);
  ckpt.has_optimizer = has_opt != 0;
  ckpt.adam_step = in.u64();
  ckpt.epoch = in.u64();
  ckpt.rng_state = in.str(in.u64());

  const std::uint64_t count = in.u64();
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::string name = in.str(in.u32());
    const std::uint64_t rows = in.u64();
    const std::uint64_t cols = in.u64();
    if (rows > (1ull << 24) || cols > (1ull << 24))
      throw CorruptCheckpointError("implausible tensor shape in checkpoint");
    Mat tensor(rows, cols);
    in.bytes(tensor.data(), sizeof(double) * rows * cols);
    ckpt.tensors.emplace(name, std::move(tensor));
  }
  return ckpt;
}

Model restore_model(const Checkpoint& ckpt) {
  Model model(ckpt.model_config);
  for (auto& p : model.params()) {
    const auto it = ckpt.tensors.find(p.name);
    if (it == ckpt.tensors.end())
      throw CorruptCheckpointError("checkpoint missing tensor " + p.name);
    if (it->second.rows() != p.value->rows() ||
        it->second.cols() != p.value->cols())
      throw CorruptCheckpointError("checkpoint tensor shape mismatch for " +
                                   p.name);
    *p.value = it->second;
  }
  return model;
}

void restore_adam(const Checkpoint& ckpt, Model& model, Adam& adam) {
  if (!ckpt.has_optimizer)
    throw CorruptCheckpointError("checkpoint carries no optimizer state");
  auto params = model.params();
  adam = Adam(params, ckpt.train_config.lr);
  adam.t = ckpt.adam_step;
  for (size_t i = 0; i < params.size(); ++i) {
    const auto m = ckpt.tensors.find("adam.m/" + params[i].name);
    const auto v = ckpt.tensors.find("adam.v/" + params[i].name);
    if (m == ckpt.tensors.end() || v == ckpt.tensors.end())
      throw CorruptCheckpointError("checkpoint missing optimizer moments for " +
                                   params[i].name);
    adam.m[i] = m->second;
    adam.v[i] = v->second;
  }
}

std::uint64_t file_hash(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open file for hashing: " + path);
  std::uint64_t h = 1469598103934665603ull;
  char buf[4096];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ull;
    }
    if (!in) break;
  }
  return h;
}

}  // namespace ristcorr
