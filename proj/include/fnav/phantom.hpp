#pragma once

// Synthetic ground-truth generation: seeded two-layer fiducial constellation,
// endoleak-like phantom volume with stent/vertebra structures and target
// points, simulated fluoro/residual image pairs, and scene directory I/O.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "fnav/drr.hpp"
#include "fnav/fiducials.hpp"
#include "fnav/geometry.hpp"
#include "fnav/imaging.hpp"
#include "fnav/metrics.hpp"

namespace fnav {

struct PhantomSpec {
  std::array<int, 3> dims = {192, 192, 128};
  Eigen::Vector3d spacing = {1.0, 1.0, 1.0};  // mm

  double fiducial_region_mm = 60.0;    // square side, centered on the frame axis
  double fiducial_diameter_mm = 4.0;
  double layer_top_z = -25.0;          // mm, frame coordinates
  double layer_bottom_z = -55.0;
  int top_count = 9;
  int bottom_count = 10;
  double min_fiducial_spacing_mm = 8.0;  // in-plane, across both layers

  double background_hu = -1000.0;
  double water_hu = 0.0;
  double vertebra_hu = 800.0;
  double stent_hu = 2000.0;
  double fiducial_hu = 2500.0;

  // Wire-stent helix: axis along x, circular cross section of the wire.
  double stent_radius_mm = 18.0;
  double stent_pitch_mm = 30.0;
  double stent_wire_radius_mm = 1.5;
  double stent_half_length_mm = 60.0;
  Eigen::Vector3d stent_center = {0.0, 0.0, 10.0};

  int target_count = 20;
  std::uint64_t seed = 0;
};

/// Seeded rejection-sampled constellation: top/bottom layer counts from the
/// spec, in-plane minimum pairwise spacing across both layers. Throws
/// PlacementFailure after 10^4 attempts.
FiducialModel make_fiducial_model(const PhantomSpec& spec);

struct PhantomAssets {
  FiducialModel model;
  Volume3D combined;        // anatomy plus fiducial spheres, the "patient CT"
  Volume3D anatomy;         // without fiducials, for movement simulation
  Volume3D fiducials_only;  // tight grid around the constellation
  TargetSet targets;        // on the stent helix, patient frame
};

PhantomAssets make_phantom_assets(const PhantomSpec& spec);
PhantomAssets make_phantom_assets(const PhantomSpec& spec, const FiducialModel& model);

/// Combined volume and targets only.
std::pair<Volume3D, TargetSet> make_phantom_volume(const PhantomSpec& spec);

/// Sets voxels within radius_mm of any fiducial position to background; used
/// to mask frame hardware out of the CT before intensity registration.
void erase_fiducials(Volume3D* v, const FiducialModel& model, double radius_mm,
                     double background_hu = -1000.0);

/// Frontal view: identity rotation, frame center at the given source depth.
RigidTransform frontal_pose(double depth_mm);

/// Frontal view rotated by angle about the given axis through the frame
/// center, center kept at depth_mm.
RigidTransform sweep_pose(const Eigen::Vector3d& axis, double angle_rad, double depth_mm);

/// 320x320 detector, 1 mm pixels, sid 1000 mm, centered principal point.
Intrinsics default_intrinsics();

inline constexpr double kDefaultSceneDepthMm = 700.0;

struct Scene {
  Image2D fluoro;
  Image2D residual;                      // noiseless fiducial-only projection
  std::vector<Eigen::Vector2d> blobs_gt; // analytic in-field fiducial centers
  RigidTransform fg_pose;                // frame -> source
  RigidTransform patient_offset;         // patient -> frame; identity = no movement
  Intrinsics k;
  double photons = 2000.0;
};

/// Fluoro = Poisson-noised sum of the anatomy projection at the moved patient
/// pose and the fiducial projection at the frame pose. Residual is the
/// noiseless fiducial projection.
Scene make_scene(const PhantomAssets& assets, const RigidTransform& fg_pose,
                 const RigidTransform& patient_offset, const Intrinsics& k, double photons,
                 std::uint64_t seed);

/// Scene directory: volume.vh/.vraw, fiducials.txt, targets.txt,
/// fluoro.pgm(+.imeta), residual.pgm(+.imeta), truth.txt.
void save_scene(const std::string& dir, const PhantomAssets& assets, const Scene& scene);

struct LoadedScene {
  Volume3D volume;  // combined patient CT
  FiducialModel model;
  TargetSet targets;
  Image2D fluoro;
  Image2D residual;
  RigidTransform fg_pose;
  RigidTransform patient_offset;
  Intrinsics k;
  double photons = 2000.0;
};

LoadedScene load_scene(const std::string& dir);

}  // namespace fnav
