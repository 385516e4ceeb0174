#pragma once

// Rigid transforms, C-arm camera model and the 6-DOF pose parameterization.
//
// Camera convention used throughout: the X-ray source sits at the origin of
// the extrinsic (source) frame, the detector plane is at z = sid with +z
// pointing from source to detector, and image u/v axes are aligned with
// +x/+y. Right-handed, no detector flip; real-device ingestion may need a
// per-device flip flag on top of this.

#include <Eigen/Dense>

#include "fnav/errors.hpp"

namespace fnav {

struct RigidTransform {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  static RigidTransform identity() { return {}; }

  Eigen::Matrix4d matrix() const {
    Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
    m.topLeftCorner<3, 3>() = rotation;
    m.topRightCorner<3, 1>() = translation;
    return m;
  }
};

/// Nearest rotation in the Frobenius sense (polar decomposition).
Eigen::Matrix3d orthonormalize(const Eigen::Matrix3d& m);

/// Applies b then a.
RigidTransform compose(const RigidTransform& a, const RigidTransform& b);

RigidTransform invert(const RigidTransform& t);

inline Eigen::Vector3d apply(const RigidTransform& t, const Eigen::Vector3d& p) {
  return t.rotation * p + t.translation;
}

/// Geodesic distance between two rotations, radians.
double rotation_geodesic(const Eigen::Matrix3d& a, const Eigen::Matrix3d& b);

struct Intrinsics {
  double pixel_spacing_u = 1.0;  // mm/px
  double pixel_spacing_v = 1.0;  // mm/px
  int image_width = 1;
  int image_height = 1;
  double sid = 1000.0;  // source-to-detector distance, mm
  double u0 = 0.0;      // principal point, px
  double v0 = 0.0;

  /// Principal point at the image center ((w-1)/2, (h-1)/2).
  static Intrinsics centered(int width, int height, double spacing, double sid) {
    Intrinsics k;
    k.pixel_spacing_u = k.pixel_spacing_v = spacing;
    k.image_width = width;
    k.image_height = height;
    k.sid = sid;
    k.u0 = (width - 1) / 2.0;
    k.v0 = (height - 1) / 2.0;
    return k;
  }
};

/// K = [[sid/su, 0, u0], [0, sid/sv, v0], [0, 0, 1]], focal in pixels.
Eigen::Matrix3d intrinsics_matrix(const Intrinsics& k);

struct ProjectionMatrix {
  // Normalized: ||m.row(2).head(3)|| = 1 and positive depth for points in
  // front of the source.
  Eigen::Matrix<double, 3, 4> m;
};

/// Fixes the projective scale: unit row-3 norm, det(left 3x3) > 0.
ProjectionMatrix normalize_projection(const Eigen::Matrix<double, 3, 4>& raw);

/// Perspective divide of m * [x; 1]. Throws DepthNonPositive when the
/// homogeneous depth is <= 0.
Eigen::Vector2d project(const ProjectionMatrix& p, const Eigen::Vector3d& x);

ProjectionMatrix build_projection(const Intrinsics& k, const RigidTransform& extrinsic);

/// Recovers the extrinsic from a projection matrix formed with intrinsics k.
/// Throws IntrinsicsMismatch when the orthogonality residual of K^-1 * M
/// exceeds 1e-3.
RigidTransform decompose_projection(const ProjectionMatrix& p, const Intrinsics& k);

/// Same recovery without the mismatch gate; always polar-projects onto SO(3).
/// Used for estimator initialization from noisy DLT solutions.
RigidTransform decompose_projection_lenient(const ProjectionMatrix& p, const Intrinsics& k);

// 6-DOF parameterization used by the derivative-free optimizers: axis-angle
// rotation about `center` plus a translation.
struct PoseParams {
  Eigen::Vector3d rotation_vector = Eigen::Vector3d::Zero();  // radians
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();      // mm
  Eigen::Vector3d center = Eigen::Vector3d::Zero();           // rotation pivot, mm
};

Eigen::Matrix3d rotation_from_axis_angle(const Eigen::Vector3d& v);

/// Canonical branch, ||result|| < pi.
Eigen::Vector3d axis_angle_from_rotation(const Eigen::Matrix3d& r);

/// apply(result, center + v) = center + R*v + translation.
RigidTransform pose_to_transform(const PoseParams& q);

PoseParams transform_to_pose(const RigidTransform& t, const Eigen::Vector3d& center);

}  // namespace fnav
