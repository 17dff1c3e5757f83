#include "ristcorr/equivariance.hpp"

#include <algorithm>
#include <cstdio>
#include <random>

#include "ristcorr/geometry.hpp"

namespace ristcorr {

namespace {

Points random_ball_cloud(int n, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Points pts(n, 3);
  for (int i = 0; i < n; ++i) {
    Eigen::RowVector3d dir(normal(rng), normal(rng), normal(rng));
    dir /= std::max(dir.norm(), 1e-12);
    pts.row(i) = dir * std::cbrt(unit(rng));
  }
  return pts;
}

Mat rotate_rows(const Mat& m, const Rotation& r) {
  return m * r.matrix.transpose();
}

}  // namespace

const GateResult* EquivarianceReport::first_failure() const {
  for (const auto& g : gates)
    if (!g.pass) return &g;
  return nullptr;
}

EquivarianceReport check_equivariance(const Model& model, int trials,
                                      int n_points, std::uint64_t seed) {
  if (trials < 1) throw ConfigError("check_equivariance needs trials >= 1");
  Rng rng(seed);

  EquivarianceReport report;
  report.gates = {
      {"encoder_Z", 0.0, 1e-8, true},
      {"encoder_theta", 0.0, 1e-4, true},
      {"local_descriptor", 0.0, 1e-4, true},
      {"decoder", 0.0, 1e-4, true},
      {"cross_source_invariance", 0.0, 1e-4, true},
      {"cross_target_equivariance", 0.0, 1e-4, true},
  };
  GateResult& gz = report.gates[0];
  GateResult& gtheta = report.gates[1];
  GateResult& gdesc = report.gates[2];
  GateResult& gdec = report.gates[3];
  GateResult& gcs = report.gates[4];
  GateResult& gct = report.gates[5];

  for (int t = 0; t < trials; ++t) {
    const Points p = random_ball_cloud(n_points, rng);
    const Points q = random_ball_cloud(n_points, rng);
    const Rotation r1 = sample_uniform_rotation(rng);
    const Rotation r2 = sample_uniform_rotation(rng);

    const EncoderOutput ep = model.encoder.forward(p);
    const EncoderOutput ep_rot = model.encoder.forward(rotate_points(p, r1));
    const EncoderOutput eq = model.encoder.forward(q);
    const EncoderOutput eq_rot = model.encoder.forward(rotate_points(q, r2));

    gz.max_rel_err = std::max(
        gz.max_rel_err, relative_error(ep_rot.Z, rotate_rows(ep.Z, r1)));
    for (int i = 0; i < n_points; ++i)
      gtheta.max_rel_err = std::max(
          gtheta.max_rel_err,
          relative_error(ep_rot.transforms[i], ep.transforms[i]));

    const vn::Feature desc = local_descriptors(ep.transforms, ep.Z);
    const vn::Feature desc_rot = local_descriptors(ep_rot.transforms, ep_rot.Z);
    gdesc.max_rel_err =
        std::max(gdesc.max_rel_err,
                 relative_error(desc_rot.data, vn::rotated(desc, r1).data));

    const Points dec = model.decoder.decode(desc);
    const Points dec_rot = model.decoder.decode(vn::rotated(desc, r1));
    gdec.max_rel_err = std::max(
        gdec.max_rel_err, relative_error(dec_rot, rotate_points(dec, r1)));

    const Points cross = model.cross_reconstruct(ep, eq);
    const Points cross_src_rot = model.cross_reconstruct(ep_rot, eq);
    const Points cross_tgt_rot = model.cross_reconstruct(ep, eq_rot);
    gcs.max_rel_err =
        std::max(gcs.max_rel_err, relative_error(cross_src_rot, cross));
    gct.max_rel_err = std::max(
        gct.max_rel_err, relative_error(cross_tgt_rot, rotate_points(cross, r2)));
  }

  for (auto& g : report.gates) {
    g.pass = g.max_rel_err < g.gate;
    report.all_pass = report.all_pass && g.pass;
  }
  return report;
}

std::string format_report(const EquivarianceReport& report) {
  std::string out =
      "component                     max_rel_err      gate  status\n";
  char buf[128];
  for (const auto& g : report.gates) {
    std::snprintf(buf, sizeof(buf), "%-28s  %10.3e  %8.0e  %s\n",
                  g.component.c_str(), g.max_rel_err, g.gate,
                  g.pass ? "pass" : "FAIL");
    out += buf;
  }
  return out;
}

}  // namespace ristcorr
