#include "fnav/geometry.hpp"

#include <cmath>

namespace fnav {

Eigen::Matrix3d orthonormalize(const Eigen::Matrix3d& m) {
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d r = svd.matrixU() * svd.matrixV().transpose();
  if (r.determinant() < 0.0) {
    Eigen::Matrix3d flip = Eigen::Matrix3d::Identity();
    flip(2, 2) = -1.0;
    r = svd.matrixU() * flip * svd.matrixV().transpose();
  }
  return r;
}

RigidTransform compose(const RigidTransform& a, const RigidTransform& b) {
  RigidTransform out;
  out.rotation = a.rotation * b.rotation;
  out.translation = a.rotation * b.translation + a.translation;
  const double drift =
      (out.rotation.transpose() * out.rotation - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
  if (drift > 1e-12) {
    out.rotation = orthonormalize(out.rotation);
  }
  return out;
}

RigidTransform invert(const RigidTransform& t) {
  RigidTransform out;
  out.rotation = t.rotation.transpose();
  out.translation = -(out.rotation * t.translation);
  return out;
}

double rotation_geodesic(const Eigen::Matrix3d& a, const Eigen::Matrix3d& b) {
  const double c = ((a.transpose() * b).trace() - 1.0) / 2.0;
  return std::acos(std::clamp(c, -1.0, 1.0));
}

Eigen::Matrix3d intrinsics_matrix(const Intrinsics& k) {
  Eigen::Matrix3d m = Eigen::Matrix3d::Identity();
  m(0, 0) = k.sid / k.pixel_spacing_u;
  m(1, 1) = k.sid / k.pixel_spacing_v;
  m(0, 2) = k.u0;
  m(1, 2) = k.v0;
  return m;
}

ProjectionMatrix normalize_projection(const Eigen::Matrix<double, 3, 4>& raw) {
  const double row3 = raw.row(2).head<3>().norm();
  if (row3 <= 0.0) {
    throw DegenerateConfiguration("projection matrix has zero third row");
  }
  Eigen::Matrix<double, 3, 4> m = raw / row3;
  if (m.leftCols<3>().determinant() < 0.0) {
    m = -m;
  }
  return {m};
}

Eigen::Vector2d project(const ProjectionMatrix& p, const Eigen::Vector3d& x) {
  Eigen::Vector4d xh;
  xh << x, 1.0;
  const Eigen::Vector3d h = p.m * xh;
  if (h(2) <= 0.0) {
    throw DepthNonPositive();
  }
  return {h(0) / h(2), h(1) / h(2)};
}

ProjectionMatrix build_projection(const Intrinsics& k, const RigidTransform& extrinsic) {
  Eigen::Matrix<double, 3, 4> rt;
  rt.leftCols<3>() = extrinsic.rotation;
  rt.col(3) = extrinsic.translation;
  return normalize_projection(intrinsics_matrix(k) * rt);
}

namespace {

RigidTransform decompose_impl(const ProjectionMatrix& p, const Intrinsics& k, double* residual) {
  const Eigen::Matrix3d kinv = intrinsics_matrix(k).inverse();
  const Eigen::Matrix3d a = kinv * p.m.leftCols<3>();
  const double det = a.determinant();
  if (det <= 0.0) {
    throw IntrinsicsMismatch("projection has non-positive chirality under the given intrinsics");
  }
  const double s = std::cbrt(det);
  const Eigen::Matrix3d r0 = a / s;
  *residual = (r0.transpose() * r0 - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
  RigidTransform e;
  e.rotation = orthonormalize(r0);
  e.translation = kinv * p.m.col(3) / s;
  return e;
}

}  // namespace

RigidTransform decompose_projection(const ProjectionMatrix& p, const Intrinsics& k) {
  double residual = 0.0;
  RigidTransform e = decompose_impl(p, k, &residual);
  if (residual > 1e-3) {
    throw IntrinsicsMismatch("orthogonality residual " + std::to_string(residual) +
                             " exceeds 1e-3; intrinsics do not match the projection");
  }
  return e;
}

RigidTransform decompose_projection_lenient(const ProjectionMatrix& p, const Intrinsics& k) {
  double residual = 0.0;
  return decompose_impl(p, k, &residual);
}

Eigen::Matrix3d rotation_from_axis_angle(const Eigen::Vector3d& v) {
  const double theta = v.norm();
  if (theta < 1e-14) {
    return Eigen::Matrix3d::Identity();
  }
  return Eigen::AngleAxisd(theta, v / theta).toRotationMatrix();
}

Eigen::Vector3d axis_angle_from_rotation(const Eigen::Matrix3d& r) {
  Eigen::AngleAxisd aa(r);
  double angle = aa.angle();
  Eigen::Vector3d axis = aa.axis();
  if (angle > M_PI) {  // keep the canonical branch
    angle = 2.0 * M_PI - angle;
    axis = -axis;
  }
  return angle * axis;
}

RigidTransform pose_to_transform(const PoseParams& q) {
  RigidTransform t;
  t.rotation = rotation_from_axis_angle(q.rotation_vector);
  t.translation = q.center + q.translation - t.rotation * q.center;
  return t;
}

PoseParams transform_to_pose(const RigidTransform& t, const Eigen::Vector3d& center) {
  PoseParams q;
  q.rotation_vector = axis_angle_from_rotation(t.rotation);
  q.center = center;
  q.translation = t.translation - center + t.rotation * center;
  return q;
}

}  // namespace fnav
