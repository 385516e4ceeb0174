#include "fnav/phantom.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

namespace fnav {

namespace {

constexpr int kMaxPlacementAttempts = 10000;

void paint_sphere(Volume3D* v, const Eigen::Vector3d& center, double radius, double hu) {
  const Eigen::Vector3d lo = center.array() - radius;
  const Eigen::Vector3d hi = center.array() + radius;
  int i0[3], i1[3];
  for (int a = 0; a < 3; ++a) {
    i0[a] = std::max(0, static_cast<int>(std::floor((lo[a] - v->origin[a]) / v->spacing[a])));
    i1[a] = std::min(v->dims[a] - 1,
                     static_cast<int>(std::ceil((hi[a] - v->origin[a]) / v->spacing[a])));
  }
  const double r2 = radius * radius;
  for (int z = i0[2]; z <= i1[2]; ++z) {
    for (int y = i0[1]; y <= i1[1]; ++y) {
      for (int x = i0[0]; x <= i1[0]; ++x) {
        if ((v->voxel_center(x, y, z) - center).squaredNorm() <= r2) {
          v->at(x, y, z) = static_cast<float>(hu);
        }
      }
    }
  }
}

Eigen::Vector3d helix_point(const PhantomSpec& spec, double t) {
  const double theta = 2.0 * M_PI * t / spec.stent_pitch_mm;
  return spec.stent_center +
         Eigen::Vector3d(t, spec.stent_radius_mm * std::cos(theta),
                         spec.stent_radius_mm * std::sin(theta));
}

Volume3D make_anatomy(const PhantomSpec& spec) {
  const Eigen::Vector3d extent((spec.dims[0] - 1) * spec.spacing.x(),
                               (spec.dims[1] - 1) * spec.spacing.y(),
                               (spec.dims[2] - 1) * spec.spacing.z());
  Volume3D v = Volume3D::filled(spec.dims, spec.spacing, -0.5 * extent,
                                static_cast<float>(spec.background_hu));

  // Soft-tissue cylinder along x: y^2 + (z - 20)^2 <= 40^2.
  for (int z = 0; z < v.dims[2]; ++z) {
    for (int y = 0; y < v.dims[1]; ++y) {
      const Eigen::Vector3d c = v.voxel_center(0, y, z);
      if (c.y() * c.y() + (c.z() - 20.0) * (c.z() - 20.0) > 40.0 * 40.0) continue;
      for (int x = 0; x < v.dims[0]; ++x) v.at(x, y, z) = static_cast<float>(spec.water_hu);
    }
  }

  // Vertebra-like ellipsoids along the cylinder.
  const double vx[] = {-60.0, -20.0, 20.0, 60.0};
  const Eigen::Vector3d semi(14.0, 12.0, 10.0);
  for (double cx : vx) {
    const Eigen::Vector3d c(cx, 0.0, 35.0);
    for (int z = 0; z < v.dims[2]; ++z) {
      for (int y = 0; y < v.dims[1]; ++y) {
        for (int x = 0; x < v.dims[0]; ++x) {
          const Eigen::Vector3d d = (v.voxel_center(x, y, z) - c).cwiseQuotient(semi);
          if (d.squaredNorm() <= 1.0) v.at(x, y, z) = static_cast<float>(spec.vertebra_hu);
        }
      }
    }
  }

  // Wire-stent helix: spheres swept along the centerline.
  for (double t = -spec.stent_half_length_mm; t <= spec.stent_half_length_mm; t += 0.25) {
    paint_sphere(&v, helix_point(spec, t), spec.stent_wire_radius_mm, spec.stent_hu);
  }
  return v;
}

}  // namespace

FiducialModel make_fiducial_model(const PhantomSpec& spec) {
  const double margin = 0.5 * spec.fiducial_diameter_mm;
  const double half = 0.5 * spec.fiducial_region_mm - margin;
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> coord(-half, half);

  FiducialModel m;
  int attempts = 0;
  const int total = spec.top_count + spec.bottom_count;
  while (static_cast<int>(m.points.size()) < total) {
    if (++attempts > kMaxPlacementAttempts) {
      throw PlacementFailure("could not place fiducials with the requested spacing");
    }
    const Eigen::Vector2d xy(coord(rng), coord(rng));
    bool ok = true;
    for (const auto& p : m.points) {
      if ((xy - p.position.head<2>()).norm() < spec.min_fiducial_spacing_mm) {
        ok = false;
        break;
      }
    }
    if (!ok) continue;
    FiducialPoint p;
    p.label = static_cast<int>(m.points.size()) + 1;
    const bool top = static_cast<int>(m.points.size()) < spec.top_count;
    p.layer = top ? FiducialLayer::Top : FiducialLayer::Bottom;
    p.position = Eigen::Vector3d(xy.x(), xy.y(), top ? spec.layer_top_z : spec.layer_bottom_z);
    m.points.push_back(p);
  }
  return m;
}

PhantomAssets make_phantom_assets(const PhantomSpec& spec) {
  return make_phantom_assets(spec, make_fiducial_model(spec));
}

PhantomAssets make_phantom_assets(const PhantomSpec& spec, const FiducialModel& model) {
  PhantomAssets a;
  a.model = model;
  a.anatomy = make_anatomy(spec);
  a.combined = a.anatomy;

  const double radius = 0.5 * spec.fiducial_diameter_mm;
  // Tight fiducial-only grid whose voxel centers coincide with the combined
  // grid, so the two render identically where they overlap.
  Eigen::Vector3d lo = Eigen::Vector3d::Constant(1e30), hi = Eigen::Vector3d::Constant(-1e30);
  for (const auto& p : model.points) {
    lo = lo.cwiseMin((p.position.array() - (radius + 3.0)).matrix());
    hi = hi.cwiseMax((p.position.array() + (radius + 3.0)).matrix());
  }
  Volume3D fid;
  fid.spacing = spec.spacing;
  for (int axis = 0; axis < 3; ++axis) {
    const Eigen::Vector3d combined_origin = a.combined.origin;
    const double s = spec.spacing[axis];
    const double idx = std::floor((lo[axis] - combined_origin[axis]) / s);
    fid.origin[axis] = combined_origin[axis] + idx * s;
    fid.dims[axis] =
        static_cast<int>(std::ceil((hi[axis] - fid.origin[axis]) / s)) + 1;
  }
  fid.voxels.assign(static_cast<std::size_t>(fid.dims[0]) * fid.dims[1] * fid.dims[2],
                    static_cast<float>(spec.background_hu));

  for (const auto& p : model.points) {
    paint_sphere(&a.combined, p.position, radius, spec.fiducial_hu);
    paint_sphere(&fid, p.position, radius, spec.fiducial_hu);
  }
  a.fiducials_only = std::move(fid);

  std::mt19937_64 rng(spec.seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_real_distribution<double> tdist(-spec.stent_half_length_mm + 5.0,
                                               spec.stent_half_length_mm - 5.0);
  for (int i = 0; i < spec.target_count; ++i) a.targets.points.push_back(helix_point(spec, tdist(rng)));
  return a;
}

std::pair<Volume3D, TargetSet> make_phantom_volume(const PhantomSpec& spec) {
  PhantomAssets a = make_phantom_assets(spec);
  return {std::move(a.combined), std::move(a.targets)};
}

void erase_fiducials(Volume3D* v, const FiducialModel& model, double radius_mm,
                     double background_hu) {
  for (const auto& p : model.points) paint_sphere(v, p.position, radius_mm, background_hu);
}

RigidTransform frontal_pose(double depth_mm) {
  RigidTransform t;
  t.translation = Eigen::Vector3d(0.0, 0.0, depth_mm);
  return t;
}

RigidTransform sweep_pose(const Eigen::Vector3d& axis, double angle_rad, double depth_mm) {
  if (axis.norm() < 1e-12) throw InvalidConfig("sweep axis must be nonzero");
  RigidTransform t;
  t.rotation = rotation_from_axis_angle(angle_rad * axis.normalized());
  t.translation = Eigen::Vector3d(0.0, 0.0, depth_mm);
  return t;
}

Intrinsics default_intrinsics() { return Intrinsics::centered(320, 320, 1.0, 1000.0); }

Scene make_scene(const PhantomAssets& assets, const RigidTransform& fg_pose,
                 const RigidTransform& patient_offset, const Intrinsics& k, double photons,
                 std::uint64_t seed) {
  Scene s;
  s.fg_pose = fg_pose;
  s.patient_offset = patient_offset;
  s.k = k;
  s.photons = photons;

  RenderConfig rc;  // default step: half the voxel spacing
  const RigidTransform patient_pose = compose(fg_pose, patient_offset);
  const AttenuationModel att;
  const Image2D anat = render_drr(assets.anatomy, k, patient_pose, rc, att);
  s.residual = render_drr(assets.fiducials_only, k, fg_pose, rc, att);

  Image2D total = anat;
  for (std::size_t i = 0; i < total.pixels.size(); ++i) total.pixels[i] += s.residual.pixels[i];
  RenderConfig noise = rc;
  noise.photons = photons;
  noise.rng_seed = seed;
  s.fluoro = simulate_fluoro(total, noise);

  const ProjectionMatrix p = build_projection(k, fg_pose);
  for (const auto& f : assets.model.points) {
    try {
      const Eigen::Vector2d uv = project(p, f.position);
      if (uv.x() >= 0.0 && uv.y() >= 0.0 && uv.x() <= k.image_width - 1 &&
          uv.y() <= k.image_height - 1) {
        s.blobs_gt.push_back(uv);
      }
    } catch (const DepthNonPositive&) {
    }
  }
  return s;
}

namespace {

void write_pose_line(std::ostream& os, const std::string& key, const RigidTransform& t) {
  os << key;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) os << " " << t.rotation(r, c);
  }
  for (int i = 0; i < 3; ++i) os << " " << t.translation[i];
  os << "\n";
}

RigidTransform read_pose_values(std::istringstream& is, const std::string& what) {
  double v[12];
  for (int i = 0; i < 12; ++i) {
    if (!(is >> v[i])) throw ParseError("truth.txt: truncated " + what);
  }
  RigidTransform t;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) t.rotation(r, c) = v[3 * r + c];
  }
  t.translation = Eigen::Vector3d(v[9], v[10], v[11]);
  t.rotation = orthonormalize(t.rotation);
  return t;
}

}  // namespace

void save_scene(const std::string& dir, const PhantomAssets& assets, const Scene& scene) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  save_volume(assets.combined, (fs::path(dir) / "volume").string());
  save_fiducial_model(assets.model, (fs::path(dir) / "fiducials.txt").string());
  save_targets(assets.targets, (fs::path(dir) / "targets.txt").string());
  save_image(scene.fluoro, (fs::path(dir) / "fluoro.pgm").string());
  save_image(scene.residual, (fs::path(dir) / "residual.pgm").string());

  std::ofstream f(fs::path(dir) / "truth.txt");
  if (!f) throw ParseError("cannot open for writing: " + dir + "/truth.txt");
  f.precision(17);
  write_pose_line(f, "fg_pose", scene.fg_pose);
  write_pose_line(f, "patient_offset", scene.patient_offset);
  f << "intrinsics " << scene.k.pixel_spacing_u << " " << scene.k.pixel_spacing_v << " "
    << scene.k.image_width << " " << scene.k.image_height << " " << scene.k.sid << " "
    << scene.k.u0 << " " << scene.k.v0 << "\n";
  f << "photons " << scene.photons << "\n";
}

LoadedScene load_scene(const std::string& dir) {
  namespace fs = std::filesystem;
  LoadedScene s;
  s.volume = load_volume((fs::path(dir) / "volume").string());
  s.model = load_fiducial_model((fs::path(dir) / "fiducials.txt").string());
  s.targets = load_targets((fs::path(dir) / "targets.txt").string());
  s.fluoro = load_image((fs::path(dir) / "fluoro.pgm").string());
  s.residual = load_image((fs::path(dir) / "residual.pgm").string());

  std::ifstream f(fs::path(dir) / "truth.txt");
  if (!f) throw ParseError("cannot open: " + dir + "/truth.txt");
  std::string line;
  bool have_fg = false, have_k = false;
  while (std::getline(f, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream is(line);
    std::string key;
    is >> key;
    if (key == "fg_pose") {
      s.fg_pose = read_pose_values(is, "fg_pose");
      have_fg = true;
    } else if (key == "patient_offset") {
      s.patient_offset = read_pose_values(is, "patient_offset");
    } else if (key == "intrinsics") {
      if (!(is >> s.k.pixel_spacing_u >> s.k.pixel_spacing_v >> s.k.image_width >>
            s.k.image_height >> s.k.sid >> s.k.u0 >> s.k.v0)) {
        throw ParseError("truth.txt: truncated intrinsics");
      }
      have_k = true;
    } else if (key == "photons") {
      if (!(is >> s.photons)) throw ParseError("truth.txt: truncated photons");
    } else {
      throw ParseError("truth.txt: unknown key " + key);
    }
  }
  if (!have_fg || !have_k) throw ParseError("truth.txt: missing fg_pose or intrinsics");
  return s;
}

}  // namespace fnav
