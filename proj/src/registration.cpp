#include "fnav/registration.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "fnav/pose.hpp"

namespace fnav {

namespace {

// Sobel gradient pair with replicate borders.
void sobel(const Image2D& img, std::vector<double>* gx, std::vector<double>* gy) {
  const int w = img.width, h = img.height;
  gx->assign(static_cast<std::size_t>(w) * h, 0.0);
  gy->assign(static_cast<std::size_t>(w) * h, 0.0);
  auto px = [&](int x, int y) {
    return img.at(std::clamp(x, 0, w - 1), std::clamp(y, 0, h - 1));
  };
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double a = px(x - 1, y - 1), b = px(x, y - 1), c = px(x + 1, y - 1);
      const double d = px(x - 1, y), f = px(x + 1, y);
      const double g = px(x - 1, y + 1), i = px(x, y + 1), j = px(x + 1, y + 1);
      (*gx)[static_cast<std::size_t>(y) * w + x] = (c + 2.0 * f + j) - (a + 2.0 * d + g);
      (*gy)[static_cast<std::size_t>(y) * w + x] = (g + 2.0 * i + j) - (a + 2.0 * b + c);
    }
  }
}

}  // namespace

double grad_ncc(const Image2D& a, const Image2D& b, const SimilarityConfig& cfg) {
  if (a.width != b.width || a.height != b.height) {
    throw DimensionMismatch("grad_ncc images must share dimensions");
  }
  if (cfg.patch_radius < 1 || cfg.patch_stride < 1) {
    throw InvalidConfig("patch_radius and patch_stride must be >= 1");
  }
  std::vector<double> agx, agy, bgx, bgy;
  sobel(a, &agx, &agy);
  sobel(b, &bgx, &bgy);
  const int w = a.width, h = a.height, r = cfg.patch_radius;

  double sum = 0.0;
  int count = 0;
  auto patch_ncc = [&](const std::vector<double>& ca, const std::vector<double>& cb, int cx,
                       int cy) {
    const double n = static_cast<double>((2 * r + 1) * (2 * r + 1));
    double ma = 0.0, mb = 0.0;
    for (int y = cy - r; y <= cy + r; ++y) {
      for (int x = cx - r; x <= cx + r; ++x) {
        ma += ca[static_cast<std::size_t>(y) * w + x];
        mb += cb[static_cast<std::size_t>(y) * w + x];
      }
    }
    ma /= n;
    mb /= n;
    double va = 0.0, vb = 0.0, cov = 0.0;
    for (int y = cy - r; y <= cy + r; ++y) {
      for (int x = cx - r; x <= cx + r; ++x) {
        const double da = ca[static_cast<std::size_t>(y) * w + x] - ma;
        const double db = cb[static_cast<std::size_t>(y) * w + x] - mb;
        va += da * da;
        vb += db * db;
        cov += da * db;
      }
    }
    va /= n;
    vb /= n;
    cov /= n;
    if (va <= cfg.epsilon || vb <= cfg.epsilon) return;
    sum += cov / std::sqrt(va * vb);
    ++count;
  };

  for (int cy = r; cy + r < h; cy += cfg.patch_stride) {
    for (int cx = r; cx + r < w; cx += cfg.patch_stride) {
      patch_ncc(agx, bgx, cx, cy);
      patch_ncc(agy, bgy, cx, cy);
    }
  }
  return count == 0 ? 0.0 : sum / static_cast<double>(count);
}

std::string to_string(RegistrationMode m) {
  switch (m) {
    case RegistrationMode::Naive:
      return "naive";
    case RegistrationMode::PoseOnly:
      return "poseonly";
    case RegistrationMode::Full:
      return "full";
  }
  return "full";
}

RegistrationMode registration_mode_from_string(const std::string& s) {
  if (s == "naive") return RegistrationMode::Naive;
  if (s == "poseonly") return RegistrationMode::PoseOnly;
  if (s == "full") return RegistrationMode::Full;
  throw InvalidConfig("unknown registration mode: " + s);
}

void RegistrationConfig::validate() const {
  if (coarse_factor < 1 || fine_factor < 1) throw InvalidConfig("downsample factors must be >= 1");
  if (coarse_budget <= 0 || fine_budget <= 13) {
    throw InvalidConfig("coarse_budget > 0 and fine_budget > 13 required");
  }
  if (coarse_rot_bound_rad <= 0.0 || coarse_trans_bound_mm <= 0.0 || fine_rot_bound_rad <= 0.0 ||
      fine_trans_bound_mm <= 0.0) {
    throw InvalidConfig("search bounds must be positive");
  }
  if (render_step_mm <= 0.0) throw InvalidConfig("render_step_mm must be positive");
}

namespace {

// Intrinsics matching a block-mean downsampled detector: same sid, spacing
// scaled by the factor, principal point mapped through the block centers.
Intrinsics scale_intrinsics(const Intrinsics& k, int factor) {
  Intrinsics s = k;
  s.pixel_spacing_u = k.pixel_spacing_u * factor;
  s.pixel_spacing_v = k.pixel_spacing_v * factor;
  s.image_width = k.image_width / factor;
  s.image_height = k.image_height / factor;
  s.u0 = (k.u0 - (factor - 1) / 2.0) / factor;
  s.v0 = (k.v0 - (factor - 1) / 2.0) / factor;
  return s;
}

struct Level {
  Image2D target;
  Intrinsics k;
  double rot_bound;
  double trans_bound;
};

// Objective over the scaled 6-vector q in [-1,1]^6: a perturbation of `init`
// pivoting about a caller-chosen point in the source frame. The coarse stage
// pivots about the source (the C-arm focal point): in those coordinates a
// residual rotation sweeps the whole projection across the detector, which a
// bounded translation cannot imitate, so the bounds delimit a real capture
// range instead of admitting look-alike compensating poses. The fine stage
// pivots about the volume center, where rotation and translation effects are
// well separated, to polish the pose to high precision.
class LevelObjective {
 public:
  LevelObjective(const Volume3D& v, const Level& level, const RigidTransform& init,
                 const RegistrationConfig& cfg, const Eigen::Vector3d& pivot)
      : v_(v), level_(level), init_(init), cfg_(cfg), center_(pivot) {
    rc_.step_mm = cfg.render_step_mm;
  }

  RigidTransform extrinsic(const Eigen::VectorXd& q) const {
    PoseParams p;
    p.rotation_vector = q.head<3>() * level_.rot_bound;
    p.translation = q.tail<3>() * level_.trans_bound;
    p.center = center_;
    return compose(pose_to_transform(p), init_);
  }

  double operator()(const Eigen::VectorXd& q) const {
    const Image2D drr = render_drr(v_, level_.k, extrinsic(q), rc_, cfg_.attenuation);
    return 1.0 - grad_ncc(level_.target, drr, cfg_.similarity);
  }

 private:
  const Volume3D& v_;
  const Level& level_;
  RigidTransform init_;
  const RegistrationConfig& cfg_;
  Eigen::Vector3d center_;
  RenderConfig rc_;
};

Level make_level(const Image2D& fluoro, const Intrinsics& k, int factor, double rot_bound,
                 double trans_bound) {
  Level lv;
  lv.target = downsample_image(fluoro, factor);
  lv.k = scale_intrinsics(k, factor);
  if (lv.k.image_width != lv.target.width || lv.k.image_height != lv.target.height) {
    throw RenderFailure("fluoro dimensions disagree with the intrinsics");
  }
  lv.rot_bound = rot_bound;
  lv.trans_bound = trans_bound;
  return lv;
}

}  // namespace

RegistrationResult register_intensity(const Volume3D& v, const Image2D& fluoro,
                                      const Intrinsics& k, const RigidTransform& init,
                                      const RegistrationConfig& cfg) {
  cfg.validate();
  RegistrationResult out;
  out.mode = cfg.mode;
  out.init_pose = init;

  OptimizerConfig oc;
  oc.x0 = Eigen::VectorXd::Zero(6);
  oc.lower = Eigen::VectorXd::Constant(6, -1.0);
  oc.upper = Eigen::VectorXd::Constant(6, 1.0);
  oc.seed = cfg.seed;

  const Level coarse =
      make_level(fluoro, k, cfg.coarse_factor, cfg.coarse_rot_bound_rad, cfg.coarse_trans_bound_mm);
  const LevelObjective coarse_f(v, coarse, init, cfg);
  oc.max_evals = cfg.coarse_budget;
  // Local search by design: the step size stays near the init's basin and the
  // stall window spans the whole budget so no restart re-explores the box.
  // A good init (fiducial-based) converges either way; a miscalibrated init
  // outside the capture range is reported as a failure instead of being
  // rescued by a pose that merely mimics the projection.
  oc.sigma0 = 0.1;
  oc.stall_evals = cfg.coarse_budget;
  out.coarse_trace = cmaes_minimize(std::cref(coarse_f), oc);
  const RigidTransform mid = coarse_f.extrinsic(out.coarse_trace.best_x);

  const Level fine =
      make_level(fluoro, k, cfg.fine_factor, cfg.fine_rot_bound_rad, cfg.fine_trans_bound_mm);
  const LevelObjective fine_f(v, fine, mid, cfg);
  oc.max_evals = cfg.fine_budget;
  oc.rho_begin = 0.1;
  oc.rho_end = 1e-5;
  out.fine_trace = bobyqa_minimize(std::cref(fine_f), oc);

  out.extrinsic = fine_f.extrinsic(out.fine_trace.best_x);
  out.similarity_final = out.fine_trace.best_f;
  return out;
}

RegistrationResult run_mode(const RegistrationScene& scene, const RegistrationConfig& cfg) {
  cfg.validate();
  if (scene.volume == nullptr) throw ModeInputMissing("scene volume is required");

  if (cfg.mode == RegistrationMode::Naive) {
    RegistrationConfig c = cfg;
    c.mode = RegistrationMode::Naive;
    return register_intensity(*scene.volume, scene.fluoro, scene.k, scene.ap_init, c);
  }

  if (scene.model == nullptr || scene.model->points.empty()) {
    throw ModeInputMissing("fiducial model required for pose-initialized modes");
  }
  if (scene.blobs.size() < 4) {
    throw ModeInputMissing("at least 4 detected fiducial blobs required");
  }

  const CorrespondenceSet corr = match_2d_3d(scene.blobs, *scene.model, scene.k, scene.ransac);
  const RigidTransform t_fg_source = pnp_pose(corr, scene.k);
  const RigidTransform init = compose(t_fg_source, scene.patient_from_fg);
  const bool degenerate = scene.model->coplanarity_diagnostic() < 1.0;

  if (cfg.mode == RegistrationMode::PoseOnly) {
    RegistrationResult out;
    out.mode = RegistrationMode::PoseOnly;
    out.extrinsic = init;
    out.init_pose = init;
    out.degenerate_fiducials = degenerate;
    // One fine-level similarity evaluation for reporting; no optimization.
    const Level fine = make_level(scene.fluoro, scene.k, cfg.fine_factor, cfg.fine_rot_bound_rad,
                                  cfg.fine_trans_bound_mm);
    const LevelObjective fine_f(*scene.volume, fine, init, cfg);
    out.similarity_final = fine_f(Eigen::VectorXd::Zero(6));
    return out;
  }

  RegistrationConfig c = cfg;
  c.mode = RegistrationMode::Full;
  RegistrationResult out = register_intensity(*scene.volume, scene.fluoro, scene.k, init, c);
  out.degenerate_fiducials = degenerate;
  return out;
}

void save_registration_report(const RegistrationResult& r, const std::string& path) {
  auto pose_json = [](const RigidTransform& t) {
    nlohmann::json rows = nlohmann::json::array();
    const Eigen::Matrix4d m = t.matrix();
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 4; ++j) rows.push_back(m(i, j));
    }
    return rows;
  };
  nlohmann::json j;
  j["mode"] = to_string(r.mode);
  j["init_pose_row_major"] = pose_json(r.init_pose);
  j["final_pose_row_major"] = pose_json(r.extrinsic);
  j["similarity_final"] = r.similarity_final;
  j["coarse_evals"] = r.coarse_trace.evals_used;
  j["fine_evals"] = r.fine_trace.evals_used;
  j["coarse_best_f"] = r.coarse_trace.best_f;
  j["degenerate_fiducials"] = r.degenerate_fiducials;
  std::ofstream f(path);
  if (!f) throw ParseError("cannot open for writing: " + path);
  f << j.dump(2) << "\n";
}

void save_registration_overlay(const Volume3D& v, const Image2D& fluoro, const Intrinsics& k,
                               const RegistrationResult& r, const RegistrationConfig& cfg,
                               const std::string& path) {
  RenderConfig rc;
  rc.step_mm = cfg.render_step_mm;
  const Image2D drr = render_drr(v, k, r.extrinsic, rc, cfg.attenuation);
  std::vector<double> gx, gy;
  sobel(drr, &gx, &gy);
  double gmax = 0.0;
  for (std::size_t i = 0; i < gx.size(); ++i) {
    gmax = std::max(gmax, std::abs(gx[i]) + std::abs(gy[i]));
  }
  Image2D out = fluoro;
  double lo = out.pixels[0], hi = out.pixels[0];
  for (double p : out.pixels) {
    lo = std::min(lo, p);
    hi = std::max(hi, p);
  }
  if (hi <= lo) hi = lo + 1.0;
  for (std::size_t i = 0; i < out.pixels.size(); ++i) {
    if (gmax > 0.0 && std::abs(gx[i]) + std::abs(gy[i]) > 0.25 * gmax) out.pixels[i] = hi;
  }
  save_image(out, path, lo, hi);
}

}  // namespace fnav
