#include "ristcorr/model.hpp"

namespace ristcorr {

ModelConfig ModelConfig::full() {
  return {EncoderConfig::full(), DecoderConfig::full()};
}

ModelConfig ModelConfig::test_scale() {
  return {EncoderConfig::test_scale(), DecoderConfig::test_scale()};
}

ModelConfig ModelConfig::mini() {
  return {EncoderConfig::mini(), DecoderConfig::mini()};
}

ModelConfig ModelConfig::from_preset(const std::string& name) {
  if (name == "full") return full();
  if (name == "test") return test_scale();
  if (name == "mini") return mini();
  throw ConfigError("unknown model preset: " + name);
}

void ModelConfig::validate() const {
  encoder.validate();
  decoder.validate();
  if (encoder.local_channels != decoder.local_channels)
    throw ConfigError("encoder and decoder disagree on local channel count");
}

Model::Model(const ModelConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  encoder = Encoder(cfg_.encoder);
  decoder = Decoder(cfg_.decoder);
}

void Model::init(Rng& rng) {
  encoder.init(rng);
  decoder.init(rng);
}

std::vector<vn::ParamRef> Model::params() {
  std::vector<vn::ParamRef> out = encoder.params("encoder");
  for (auto& p : decoder.params("decoder")) out.push_back(p);
  return out;
}

Points Model::self_reconstruct(const Points& pts) const {
  const EncoderOutput enc = encoder.forward(pts);
  return decoder.decode(local_descriptors(enc.transforms, enc.Z));
}

Points Model::cross_reconstruct(const EncoderOutput& transform_provider,
                                const EncoderOutput& pose_provider) const {
  return decoder.decode(
      local_descriptors(transform_provider.transforms, pose_provider.Z));
}

}  // namespace ristcorr
