#include <doctest.h>

#include <filesystem>
#include <queue>
#include <set>

#include "fnav/phantom.hpp"

using namespace fnav;

namespace {

// Counts 26-connected components above a HU threshold.
int count_components(const Volume3D& v, float threshold) {
  const int nx = v.dims[0], ny = v.dims[1], nz = v.dims[2];
  std::vector<char> seen(static_cast<std::size_t>(nx) * ny * nz, 0);
  auto idx = [&](int x, int y, int z) {
    return (static_cast<std::size_t>(z) * ny + y) * nx + x;
  };
  int components = 0;
  for (int z = 0; z < nz; ++z) {
    for (int y = 0; y < ny; ++y) {
      for (int x = 0; x < nx; ++x) {
        if (seen[idx(x, y, z)] || v.at(x, y, z) <= threshold) continue;
        ++components;
        std::queue<std::array<int, 3>> q;
        q.push({x, y, z});
        seen[idx(x, y, z)] = 1;
        while (!q.empty()) {
          const auto [cx, cy, cz] = q.front();
          q.pop();
          for (int dz = -1; dz <= 1; ++dz) {
            for (int dy = -1; dy <= 1; ++dy) {
              for (int dx = -1; dx <= 1; ++dx) {
                const int px = cx + dx, py = cy + dy, pz = cz + dz;
                if (px < 0 || py < 0 || pz < 0 || px >= nx || py >= ny || pz >= nz) continue;
                if (seen[idx(px, py, pz)] || v.at(px, py, pz) <= threshold) continue;
                seen[idx(px, py, pz)] = 1;
                q.push({px, py, pz});
              }
            }
          }
        }
      }
    }
  }
  return components;
}

}  // namespace

TEST_CASE("constellation layout satisfies the placement contract") {
  PhantomSpec spec;
  const FiducialModel m = make_fiducial_model(spec);
  REQUIRE(m.points.size() == 19);

  int top = 0, bottom = 0;
  std::set<int> labels;
  for (const auto& p : m.points) {
    labels.insert(p.label);
    if (p.layer == FiducialLayer::Top) {
      ++top;
      CHECK(p.position.z() == doctest::Approx(spec.layer_top_z));
    } else {
      ++bottom;
      CHECK(p.position.z() == doctest::Approx(spec.layer_bottom_z));
    }
    CHECK(std::abs(p.position.x()) <= spec.fiducial_region_mm / 2.0);
    CHECK(std::abs(p.position.y()) <= spec.fiducial_region_mm / 2.0);
  }
  CHECK(top == 9);
  CHECK(bottom == 10);
  CHECK(labels.size() == 19);

  for (std::size_t i = 0; i < m.points.size(); ++i) {
    for (std::size_t j = i + 1; j < m.points.size(); ++j) {
      const Eigen::Vector2d a = m.points[i].position.head<2>();
      const Eigen::Vector2d b = m.points[j].position.head<2>();
      CHECK((a - b).norm() >= spec.min_fiducial_spacing_mm - 1e-9);
    }
  }
  CHECK(m.coplanarity_diagnostic() > 1.0);
}

TEST_CASE("constellation generation is seed deterministic") {
  PhantomSpec spec;
  spec.seed = 42;
  const FiducialModel a = make_fiducial_model(spec);
  const FiducialModel b = make_fiducial_model(spec);
  REQUIRE(a.points.size() == b.points.size());
  for (std::size_t i = 0; i < a.points.size(); ++i) {
    CHECK(a.points[i].position == b.points[i].position);
  }
  spec.seed = 43;
  const FiducialModel c = make_fiducial_model(spec);
  bool differs = false;
  for (std::size_t i = 0; i < a.points.size(); ++i) {
    if (a.points[i].position != c.points[i].position) differs = true;
  }
  CHECK(differs);
}

TEST_CASE("impossible spacing constraints raise") {
  PhantomSpec spec;
  spec.min_fiducial_spacing_mm = 40.0;  // 19 points cannot fit at this spacing
  CHECK_THROWS_AS(make_fiducial_model(spec), PlacementFailure);
}

TEST_CASE("phantom volume embeds exactly the fiducial spheres above 2200 HU") {
  PhantomSpec spec;
  const PhantomAssets assets = make_phantom_assets(spec);
  CHECK(count_components(assets.combined, 2200.0f) == 19);
  CHECK(count_components(assets.anatomy, 2200.0f) == 0);

  // Volume grid is centered on the origin.
  const Eigen::Vector3d lo = assets.combined.voxel_center(0, 0, 0);
  const Eigen::Vector3d hi = assets.combined.voxel_center(
      spec.dims[0] - 1, spec.dims[1] - 1, spec.dims[2] - 1);
  CHECK((lo + hi).norm() < 1e-12);
}

TEST_CASE("fiducial extraction from the volume matches the model") {
  PhantomSpec spec;
  const PhantomAssets assets = make_phantom_assets(spec);
  const auto found = extract_fiducials_3d(assets.combined, 2200.0, 5);
  REQUIRE(found.size() == 19);
  for (const auto& p : assets.model.points) {
    double best = 1e9;
    for (const auto& f : found) best = std::min(best, (f - p.position).norm());
    CHECK(best < 0.3);
  }
}

TEST_CASE("erase_fiducials removes the hardware and nothing else") {
  PhantomSpec spec;
  const PhantomAssets assets = make_phantom_assets(spec);
  Volume3D erased = assets.combined;
  erase_fiducials(&erased, assets.model, 3.0);
  CHECK(count_components(erased, 2200.0f) == 0);

  // Anatomy far from the frame is untouched; check a vertebra voxel.
  bool vertebra_kept = false;
  for (int z = 0; z < spec.dims[2] && !vertebra_kept; ++z) {
    for (int y = 0; y < spec.dims[1] && !vertebra_kept; ++y) {
      for (int x = 0; x < spec.dims[0] && !vertebra_kept; ++x) {
        if (assets.combined.at(x, y, z) == 800.0f) {
          CHECK(erased.at(x, y, z) == 800.0f);
          vertebra_kept = true;
        }
      }
    }
  }
  CHECK(vertebra_kept);
}

TEST_CASE("targets sit on the stent wire") {
  PhantomSpec spec;
  const PhantomAssets assets = make_phantom_assets(spec);
  REQUIRE(assets.targets.points.size() == 20);
  for (const auto& p : assets.targets.points) {
    // Distance from the helix axis (x axis through stent_center).
    const double r = std::hypot(p.y() - spec.stent_center.y(), p.z() - spec.stent_center.z());
    CHECK(std::abs(r - spec.stent_radius_mm) < 1e-9);
    CHECK(std::abs(p.x() - spec.stent_center.x()) <= spec.stent_half_length_mm + 1e-9);
  }
}

TEST_CASE("scene fluoro statistics and ground-truth blobs") {
  PhantomSpec spec;
  const PhantomAssets assets = make_phantom_assets(spec);
  const Intrinsics k = default_intrinsics();
  const RigidTransform fg = sweep_pose(Eigen::Vector3d::UnitY(), 0.15, kDefaultSceneDepthMm);
  const Scene s = make_scene(assets, fg, RigidTransform{}, k, 2000.0, 7);

  CHECK(s.fluoro.width == k.image_width);
  CHECK(s.blobs_gt.size() == 19);

  // Projections that overlap between the two layers can merge into one blob,
  // so the centroid accuracy contract applies to isolated projections only.
  const auto detected = detect_blobs_2d(s.residual, 3, 2000, 0.1);
  int isolated = 0, tracked = 0;
  for (std::size_t i = 0; i < s.blobs_gt.size(); ++i) {
    double nearest = 1e9;
    for (std::size_t j = 0; j < s.blobs_gt.size(); ++j) {
      if (j != i) nearest = std::min(nearest, (s.blobs_gt[j] - s.blobs_gt[i]).norm());
    }
    if (nearest < 12.0) continue;
    ++isolated;
    double best = 1e9;
    for (const auto& d : detected) best = std::min(best, (d - s.blobs_gt[i]).norm());
    if (best < 0.3) ++tracked;
  }
  CHECK(isolated >= 10);
  CHECK(tracked == isolated);
  CHECK(detected.size() <= s.blobs_gt.size());
  CHECK(static_cast<int>(detected.size()) >= isolated);

  // Same seed reproduces the noise; another seed does not.
  const Scene again = make_scene(assets, fg, RigidTransform{}, k, 2000.0, 7);
  CHECK(again.fluoro.pixels == s.fluoro.pixels);
  const Scene other = make_scene(assets, fg, RigidTransform{}, k, 2000.0, 8);
  CHECK(other.fluoro.pixels != s.fluoro.pixels);
}

TEST_CASE("scene directory round trip") {
  PhantomSpec spec;
  const PhantomAssets assets = make_phantom_assets(spec);
  const Intrinsics k = default_intrinsics();
  const RigidTransform fg = sweep_pose(Eigen::Vector3d::UnitX(), -0.2, kDefaultSceneDepthMm);
  RigidTransform offset;
  offset.translation = {4.0, -6.0, 2.0};
  const Scene s = make_scene(assets, fg, offset, k, 2000.0, 99);

  const std::string dir = "/tmp/fnav_scene_test";
  std::filesystem::remove_all(dir);
  save_scene(dir, assets, s);
  const LoadedScene r = load_scene(dir);

  CHECK(r.volume.dims == assets.combined.dims);
  CHECK(r.model.points.size() == 19);
  CHECK(r.targets.points.size() == 20);
  CHECK((r.fg_pose.matrix() - fg.matrix()).norm() < 1e-9);
  CHECK((r.patient_offset.matrix() - offset.matrix()).norm() < 1e-9);
  CHECK(r.k.sid == doctest::Approx(k.sid));
  CHECK(r.k.image_width == k.image_width);
  CHECK(r.photons == doctest::Approx(2000.0));

  // Images survive the 16-bit quantized round trip within one LSB of the
  // stored window.
  REQUIRE(r.fluoro.pixels.size() == s.fluoro.pixels.size());
  double max_err = 0.0, span = 0.0;
  for (const double p : s.fluoro.pixels) span = std::max(span, std::abs(p));
  for (std::size_t i = 0; i < s.fluoro.pixels.size(); ++i) {
    max_err = std::max(max_err, std::abs(r.fluoro.pixels[i] - s.fluoro.pixels[i]));
  }
  CHECK(max_err <= span / 65535.0 + 1e-12);
}
