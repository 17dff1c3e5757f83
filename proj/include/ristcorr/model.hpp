#pragma once

#include "ristcorr/decoder.hpp"
#include "ristcorr/encoder.hpp"

#include <string>
#include <vector>

namespace ristcorr {

struct ModelConfig {
  EncoderConfig encoder;
  DecoderConfig decoder;

  static ModelConfig full();
  static ModelConfig test_scale();
  static ModelConfig mini();
  static ModelConfig from_preset(const std::string& name);  // full|test|mini
  void validate() const;  // including C' agreement between the halves
};

// Encoder + decoder pair. Forward evaluation is const and reentrant;
// parameter updates go through params().
class Model {
 public:
  Model() = default;
  explicit Model(const ModelConfig& cfg);

  void init(Rng& rng);
  std::vector<vn::ParamRef> params();

  Points self_reconstruct(const Points& pts) const;

  // Decode transform-provider's transforms against pose-provider's Z. The
  // output inherits the pose-provider's orientation and the
  // transform-provider's point indexing.
  Points cross_reconstruct(const EncoderOutput& transform_provider,
                           const EncoderOutput& pose_provider) const;

  const ModelConfig& config() const { return cfg_; }

  Encoder encoder;
  Decoder decoder;

 private:
  ModelConfig cfg_;
};

}  // namespace ristcorr
