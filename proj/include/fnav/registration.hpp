#pragma once

// Patch-based gradient NCC similarity and the two-level (coarse CMA-ES, fine
// trust-region) intensity registration pipeline with its three experimental
// modes.

#include <cstdint>
#include <string>
#include <vector>

#include "fnav/drr.hpp"
#include "fnav/fiducials.hpp"
#include "fnav/geometry.hpp"
#include "fnav/imaging.hpp"
#include "fnav/optim.hpp"

namespace fnav {

struct SimilarityConfig {
  int patch_radius = 5;  // 11x11 patches
  int patch_stride = 5;
  double epsilon = 1e-8;  // variance floor below which a patch is uninformative
};

/// Mean patch NCC between the Sobel gradient channels of a and b, in [-1, 1];
/// higher is more similar. Patches whose variance falls below epsilon in
/// either image are excluded. Throws DimensionMismatch.
double grad_ncc(const Image2D& a, const Image2D& b, const SimilarityConfig& cfg);

enum class RegistrationMode { Naive, PoseOnly, Full };

std::string to_string(RegistrationMode m);
RegistrationMode registration_mode_from_string(const std::string& s);

struct RegistrationConfig {
  RegistrationMode mode = RegistrationMode::Full;
  int coarse_factor = 8;
  int fine_factor = 4;
  int coarse_budget = 400;
  int fine_budget = 150;
  // Search half-widths around the init pose. These define the capture range
  // of the intensity stage: wide enough for fiducial-seeded inits and for a
  // few degrees / millimetres of calibration drift, narrow enough that a
  // badly miscalibrated init is reported as a failure instead of being
  // compensated by a look-alike pose.
  double coarse_rot_bound_rad = 4.0 * M_PI / 180.0;
  double coarse_trans_bound_mm = 10.0;
  double fine_rot_bound_rad = 1.5 * M_PI / 180.0;
  double fine_trans_bound_mm = 4.0;
  double render_step_mm = 1.0;
  std::uint64_t seed = 0;
  SimilarityConfig similarity;
  AttenuationModel attenuation;

  void validate() const;
};

struct RegistrationResult {
  RigidTransform extrinsic;  // volume (patient) frame -> source frame
  double similarity_final = 0.0;  // objective 1 - grad_ncc at the fine level
  OptimizerTrace coarse_trace;
  OptimizerTrace fine_trace;
  RegistrationMode mode = RegistrationMode::Full;
  RigidTransform init_pose;
  bool degenerate_fiducials = false;  // near-coplanar constellation warning
};

/// Two-level intensity registration: CMA-ES over a 6-DOF pose box at
/// coarse_factor downsampling, then trust-region refinement at fine_factor
/// starting from the coarse optimum. The objective is 1 - grad_ncc between
/// the (downsampled) fluoro and a DRR rendered at matched coarse geometry.
RegistrationResult register_intensity(const Volume3D& v, const Image2D& fluoro,
                                      const Intrinsics& k, const RigidTransform& init,
                                      const RegistrationConfig& cfg);

/// Inputs for a full experimental case. `patient_from_fg` is the correction
/// mapping the patient CT frame into the fiducial-frame (FG) coordinates,
/// computed once per session; identity when volume and FG frames coincide.
struct RegistrationScene {
  const Volume3D* volume = nullptr;
  Image2D fluoro;
  Intrinsics k;
  std::vector<Eigen::Vector2d> blobs;  // detected fiducial centroids, px
  const FiducialModel* model = nullptr;
  RigidTransform ap_init;  // canonical frontal extrinsic for Naive mode
  RigidTransform patient_from_fg;
  RansacConfig ransac;
};

/// Naive: ap_init then intensity registration. PoseOnly: fiducial PnP
/// composed with patient_from_fg, no intensity step. Full: PnP init then
/// intensity registration. Throws ModeInputMissing / MatchFailed.
RegistrationResult run_mode(const RegistrationScene& scene, const RegistrationConfig& cfg);

/// JSON report: mode, init/final poses (row-major), similarity, eval counts.
void save_registration_report(const RegistrationResult& r, const std::string& path);

/// Fluoro image with the DRR edge mask at the registered pose burned in at
/// the maximum intensity; cosmetic.
void save_registration_overlay(const Volume3D& v, const Image2D& fluoro, const Intrinsics& k,
                               const RegistrationResult& r, const RegistrationConfig& cfg,
                               const std::string& path);

}  // namespace fnav
