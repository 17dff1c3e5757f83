#include "ristcorr/decoder.hpp"

#include <stdexcept>

namespace ristcorr {

DecoderConfig DecoderConfig::full() { return DecoderConfig{}; }

DecoderConfig DecoderConfig::test_scale() { return {8, {8, 4}}; }

DecoderConfig DecoderConfig::mini() { return {2, {4}}; }

void DecoderConfig::validate() const {
  if (local_channels < 1) throw ConfigError("decoder local_channels must be >= 1");
  if (hidden.empty()) throw ConfigError("decoder needs at least one hidden stage");
  for (int h : hidden)
    if (h < 1) throw ConfigError("decoder hidden width must be >= 1");
}

Decoder::Decoder(const DecoderConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  int in = cfg_.local_channels;
  for (int h : cfg_.hidden) {
    linears_.emplace_back(h, in);
    nonlins_.emplace_back(h);
    in = h;
  }
  linears_.emplace_back(1, in);
}

void Decoder::init(Rng& rng) {
  for (size_t i = 0; i < nonlins_.size(); ++i) {
    linears_[i].init(rng);
    nonlins_[i].init(rng);
  }
  linears_.back().init(rng);
}

Points Decoder::decode(const vn::Feature& descriptors, Cache* cache) const {
  if (descriptors.channels() != cfg_.local_channels)
    throw std::invalid_argument("decode: descriptor channel mismatch");
  if (cache) {
    cache->inputs.clear();
    cache->nl.resize(nonlins_.size());
  }
  vn::Feature x = descriptors;
  for (size_t i = 0; i < nonlins_.size(); ++i) {
    if (cache) cache->inputs.push_back(x);
    x = nonlins_[i].forward(linears_[i].forward(x),
                            cache ? &cache->nl[i] : nullptr);
  }
  if (cache) cache->inputs.push_back(x);
  x = linears_.back().forward(x);
  if (!all_finite(x.data)) throw NumericalError("non-finite decoder output");

  const int n = x.npoints();
  Points out(n, 3);
  for (int i = 0; i < n; ++i) out.row(i) = x.point(i);
  return out;
}

vn::Feature Decoder::backward(const Cache& cache, const Points& grad_points) {
  const int n = static_cast<int>(grad_points.rows());
  vn::Feature g(1, n);
  for (int i = 0; i < n; ++i) g.point(i) = grad_points.row(i);

  g = linears_.back().backward(cache.inputs.back(), g);
  for (size_t i = nonlins_.size(); i-- > 0;) {
    g = nonlins_[i].backward(cache.nl[i], g);
    g = linears_[i].backward(cache.inputs[i], g);
  }
  return g;
}

std::vector<vn::ParamRef> Decoder::params(const std::string& prefix) {
  std::vector<vn::ParamRef> out;
  for (size_t i = 0; i < nonlins_.size(); ++i) {
    linears_[i].collect(prefix + ".linear" + std::to_string(i + 1), out);
    nonlins_[i].collect(prefix + ".nonlin" + std::to_string(i + 1), out);
  }
  linears_.back().collect(prefix + ".output", out);
  return out;
}

}  // namespace ristcorr
