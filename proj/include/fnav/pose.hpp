#pragma once

// Closed-form and refined pose estimators: rigid point-set registration
// (SVD), DLT projection estimation, and PnP extrinsic estimation.

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fnav/geometry.hpp"

namespace fnav {

struct CorrespondencePair {
  Eigen::Vector2d p2;  // px
  Eigen::Vector3d p3;  // mm
  int label = -1;
};

struct CorrespondenceSet {
  std::vector<CorrespondencePair> pairs;
  std::vector<bool> inlier_flags;  // empty means all inliers
};

CorrespondenceSet load_correspondences(const std::string& path);
void save_correspondences(const CorrespondenceSet& c, const std::string& path);

struct PointRegistrationResult {
  RigidTransform transform;
  double fre_rms = 0.0;  // mm
};

/// Least-squares rigid transform mapping src onto dst (Arun/Umeyama,
/// reflection-corrected). Throws DegenerateConfiguration for collinear or
/// coincident sources.
PointRegistrationResult rigid_point_register(const std::vector<Eigen::Vector3d>& src,
                                             const std::vector<Eigen::Vector3d>& dst);

struct DltResult {
  ProjectionMatrix projection;
  double reproj_rms_px = 0.0;
};

/// Hartley-normalized homogeneous least squares over >= 6 correspondences.
/// Throws InsufficientPoints / DegenerateConfiguration (coplanar 3D set).
DltResult dlt_projection(const CorrespondenceSet& c);

/// Smallest singular value of the centered 3D point set; near zero means
/// coplanar.
double coplanarity_smallest_singular(const std::vector<Eigen::Vector3d>& pts);

/// RMS reprojection error of correspondences under (k, extrinsic), px.
double reprojection_rms(const CorrespondenceSet& c, const Intrinsics& k,
                        const RigidTransform& extrinsic);

/// Extrinsic from >= 4 correspondences and known intrinsics. DLT
/// initialization when >= 6 non-coplanar pairs, otherwise depth/Procrustes
/// alternation on back-projected rays; Gauss-Newton reprojection refinement
/// either way.
RigidTransform pnp_pose(const CorrespondenceSet& c, const Intrinsics& k);

/// Minimal alternation solver used for RANSAC hypotheses and coarse PnP
/// init: estimates per-point depths along the back-projected rays and fits a
/// rigid transform by Procrustes, iterating to a fixed point.
RigidTransform ray_alternation_pose(const std::vector<Eigen::Vector2d>& pixels,
                                    const std::vector<Eigen::Vector3d>& points,
                                    const Intrinsics& k, double init_depth);

/// All perspective-three-point solutions (up to four) for exactly three
/// correspondences: solves the depth quartic along the back-projected rays,
/// keeping branches with positive depths. The depth alternation above only
/// finds one fixed point, which for narrow-baseline triples is often the
/// wrong branch; exhaustive branches make minimal-sample matching reliable.
std::vector<RigidTransform> p3p_poses(const std::vector<Eigen::Vector2d>& pixels,
                                      const std::vector<Eigen::Vector3d>& points,
                                      const Intrinsics& k);

}  // namespace fnav
