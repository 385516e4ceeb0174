#include "fnav/pose.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace fnav {

CorrespondenceSet load_correspondences(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ParseError("cannot open: " + path);
  CorrespondenceSet c;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream is(line);
    CorrespondencePair p;
    if (!(is >> p.label >> p.p2.x() >> p.p2.y() >> p.p3.x() >> p.p3.y() >> p.p3.z())) {
      throw ParseError(path + ": malformed correspondence at line " + std::to_string(lineno));
    }
    c.pairs.push_back(p);
  }
  return c;
}

void save_correspondences(const CorrespondenceSet& c, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw ParseError("cannot open for writing: " + path);
  f.precision(17);
  f << "# label u v x y z\n";
  for (const auto& p : c.pairs) {
    f << p.label << " " << p.p2.x() << " " << p.p2.y() << " " << p.p3.x() << " " << p.p3.y() << " "
      << p.p3.z() << "\n";
  }
}

PointRegistrationResult rigid_point_register(const std::vector<Eigen::Vector3d>& src,
                                             const std::vector<Eigen::Vector3d>& dst) {
  if (src.size() != dst.size()) throw DimensionMismatch("point sets differ in size");
  const auto n = src.size();
  if (n < 3) throw InsufficientPoints("rigid registration needs >= 3 points");

  Eigen::Vector3d src_mean = Eigen::Vector3d::Zero();
  Eigen::Vector3d dst_mean = Eigen::Vector3d::Zero();
  for (std::size_t i = 0; i < n; ++i) {
    src_mean += src[i];
    dst_mean += dst[i];
  }
  src_mean /= static_cast<double>(n);
  dst_mean /= static_cast<double>(n);

  Eigen::Matrix3d cross = Eigen::Matrix3d::Zero();
  Eigen::Matrix3d spread = Eigen::Matrix3d::Zero();
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::Vector3d s = src[i] - src_mean;
    cross += (dst[i] - dst_mean) * s.transpose();
    spread += s * s.transpose();
  }
  {
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(spread);
    const double scale = eig.eigenvalues().maxCoeff();
    if (scale <= 0.0 || eig.eigenvalues()(1) < 1e-12 * scale) {
      throw DegenerateConfiguration("source points are collinear or coincident");
    }
  }

  Eigen::JacobiSVD<Eigen::Matrix3d> svd(cross, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d d = Eigen::Matrix3d::Identity();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0) d(2, 2) = -1.0;

  PointRegistrationResult out;
  out.transform.rotation = svd.matrixU() * d * svd.matrixV().transpose();
  out.transform.translation = dst_mean - out.transform.rotation * src_mean;

  double sq = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sq += (apply(out.transform, src[i]) - dst[i]).squaredNorm();
  }
  out.fre_rms = std::sqrt(sq / static_cast<double>(n));
  return out;
}

double coplanarity_smallest_singular(const std::vector<Eigen::Vector3d>& pts) {
  if (pts.size() < 4) return 0.0;
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  for (const auto& p : pts) mean += p;
  mean /= static_cast<double>(pts.size());
  Eigen::MatrixXd centered(pts.size(), 3);
  for (std::size_t i = 0; i < pts.size(); ++i) centered.row(i) = (pts[i] - mean).transpose();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(centered);
  return svd.singularValues().minCoeff();
}

namespace {

double spread_largest_singular(const std::vector<Eigen::Vector3d>& pts) {
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  for (const auto& p : pts) mean += p;
  mean /= static_cast<double>(pts.size());
  Eigen::MatrixXd centered(pts.size(), 3);
  for (std::size_t i = 0; i < pts.size(); ++i) centered.row(i) = (pts[i] - mean).transpose();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(centered);
  return svd.singularValues().maxCoeff();
}

}  // namespace

DltResult dlt_projection(const CorrespondenceSet& c) {
  const auto n = c.pairs.size();
  if (n < 6) throw InsufficientPoints("DLT needs >= 6 correspondences");

  std::vector<Eigen::Vector3d> pts3;
  pts3.reserve(n);
  for (const auto& p : c.pairs) pts3.push_back(p.p3);
  const double spread = spread_largest_singular(pts3);
  if (coplanarity_smallest_singular(pts3) <= 1e-6 * spread) {
    throw DegenerateConfiguration("3D correspondences are coplanar; DLT is degenerate");
  }

  // Hartley normalization: isotropic scaling of both point sets.
  Eigen::Vector2d mean2 = Eigen::Vector2d::Zero();
  Eigen::Vector3d mean3 = Eigen::Vector3d::Zero();
  for (const auto& p : c.pairs) {
    mean2 += p.p2;
    mean3 += p.p3;
  }
  mean2 /= static_cast<double>(n);
  mean3 /= static_cast<double>(n);
  double scale2 = 0.0, scale3 = 0.0;
  for (const auto& p : c.pairs) {
    scale2 += (p.p2 - mean2).norm();
    scale3 += (p.p3 - mean3).norm();
  }
  scale2 = std::sqrt(2.0) * n / std::max(scale2, 1e-300);
  scale3 = std::sqrt(3.0) * n / std::max(scale3, 1e-300);

  Eigen::Matrix3d t2 = Eigen::Matrix3d::Identity();
  t2(0, 0) = t2(1, 1) = scale2;
  t2.block<2, 1>(0, 2) = -scale2 * mean2;
  Eigen::Matrix4d t3 = Eigen::Matrix4d::Identity();
  t3(0, 0) = t3(1, 1) = t3(2, 2) = scale3;
  t3.block<3, 1>(0, 3) = -scale3 * mean3;

  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(2 * n, 12);
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::Vector2d uv = scale2 * (c.pairs[i].p2 - mean2);
    Eigen::Vector4d xh;
    xh << scale3 * (c.pairs[i].p3 - mean3), 1.0;
    a.block<1, 4>(2 * i, 0) = xh.transpose();
    a.block<1, 4>(2 * i, 8) = -uv.x() * xh.transpose();
    a.block<1, 4>(2 * i + 1, 4) = xh.transpose();
    a.block<1, 4>(2 * i + 1, 8) = -uv.y() * xh.transpose();
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinV);
  const Eigen::VectorXd h = svd.matrixV().col(11);
  Eigen::Matrix<double, 3, 4> pn;
  pn.row(0) = h.segment<4>(0).transpose();
  pn.row(1) = h.segment<4>(4).transpose();
  pn.row(2) = h.segment<4>(8).transpose();

  DltResult out;
  out.projection = normalize_projection(t2.inverse() * pn * t3);
  double sq = 0.0;
  for (const auto& p : c.pairs) {
    // Guarded evaluation: a noisy solve can put a point at non-positive
    // depth, which should surface as a huge residual, not an abort.
    Eigen::Vector4d xh;
    xh << p.p3, 1.0;
    const Eigen::Vector3d h = out.projection.m * xh;
    if (h(2) <= 1e-12) {
      sq += 1e12;
      continue;
    }
    sq += (Eigen::Vector2d(h(0) / h(2), h(1) / h(2)) - p.p2).squaredNorm();
  }
  out.reproj_rms_px = std::sqrt(sq / static_cast<double>(n));
  return out;
}

double reprojection_rms(const CorrespondenceSet& c, const Intrinsics& k,
                        const RigidTransform& extrinsic) {
  const ProjectionMatrix p = build_projection(k, extrinsic);
  double sq = 0.0;
  for (const auto& pair : c.pairs) {
    sq += (project(p, pair.p3) - pair.p2).squaredNorm();
  }
  return std::sqrt(sq / static_cast<double>(c.pairs.size()));
}

RigidTransform ray_alternation_pose(const std::vector<Eigen::Vector2d>& pixels,
                                    const std::vector<Eigen::Vector3d>& points,
                                    const Intrinsics& k, double init_depth) {
  if (pixels.size() != points.size() || pixels.size() < 3) {
    throw InsufficientPoints("ray alternation needs >= 3 matched pairs");
  }
  const auto n = pixels.size();
  std::vector<Eigen::Vector3d> rays(n);
  for (std::size_t i = 0; i < n; ++i) {
    rays[i] = Eigen::Vector3d((pixels[i].x() - k.u0) * k.pixel_spacing_u,
                              (pixels[i].y() - k.v0) * k.pixel_spacing_v, k.sid)
                  .normalized();
  }
  std::vector<double> depths(n, init_depth);
  RigidTransform pose;
  std::vector<Eigen::Vector3d> targets(n);
  for (int it = 0; it < 60; ++it) {
    for (std::size_t i = 0; i < n; ++i) targets[i] = depths[i] * rays[i];
    pose = rigid_point_register(points, targets).transform;
    double max_change = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = rays[i].dot(apply(pose, points[i]));
      max_change = std::max(max_change, std::abs(d - depths[i]));
      depths[i] = d;
    }
    if (max_change < 1e-10 * init_depth) break;
  }
  return pose;
}

std::vector<RigidTransform> p3p_poses(const std::vector<Eigen::Vector2d>& pixels,
                                      const std::vector<Eigen::Vector3d>& points,
                                      const Intrinsics& k) {
  if (pixels.size() != 3 || points.size() != 3) {
    throw InsufficientPoints("p3p needs exactly 3 matched pairs");
  }
  Eigen::Vector3d f[3];
  for (int i = 0; i < 3; ++i) {
    f[i] = Eigen::Vector3d((pixels[i].x() - k.u0) * k.pixel_spacing_u,
                           (pixels[i].y() - k.v0) * k.pixel_spacing_v, k.sid)
               .normalized();
  }
  // Side lengths opposite each point and ray-pair cosines (Grunert's setup).
  const double a = (points[1] - points[2]).norm();
  const double b = (points[0] - points[2]).norm();
  const double c = (points[0] - points[1]).norm();
  if (a < 1e-9 || b < 1e-9 || c < 1e-9) return {};
  const double cos_a = f[1].dot(f[2]);
  const double cos_b = f[0].dot(f[2]);
  const double cos_c = f[0].dot(f[1]);

  // With depth ratios u = s2/s1 and v = s3/s1 the three law-of-cosines
  // equations reduce to a quartic in v. Build it by exact interpolation of
  //   F(v) = b^2 (D^2 + N^2 - 2 N D cos_c) - c^2 A D^2,
  // where A = 1 + v^2 - 2 v cos_b, N = ((c^2-a^2)/b^2) A + v^2 - 1, and
  // D = 2 (v cos_a - cos_c), then take eigenvalues of the companion matrix.
  const double r = (c * c - a * a) / (b * b);
  auto quartic_at = [&](double v) {
    const double av = 1.0 + v * v - 2.0 * v * cos_b;
    const double nv = r * av + v * v - 1.0;
    const double dv = 2.0 * (v * cos_a - cos_c);
    return b * b * (dv * dv + nv * nv - 2.0 * nv * dv * cos_c) - c * c * av * dv * dv;
  };
  Eigen::Matrix<double, 5, 5> vand;
  Eigen::Matrix<double, 5, 1> fv;
  for (int i = 0; i < 5; ++i) {
    const double v = static_cast<double>(i - 2);
    double p = 1.0;
    for (int j = 0; j < 5; ++j) {
      vand(i, j) = p;
      p *= v;
    }
    fv(i) = quartic_at(v);
  }
  const Eigen::Matrix<double, 5, 1> coef = vand.fullPivLu().solve(fv);
  const double scale = coef.cwiseAbs().maxCoeff();
  if (!(scale > 0.0) || !coef.allFinite()) return {};

  // Companion-matrix roots of the quartic (degree-deflated if the leading
  // coefficients vanish).
  int deg = 4;
  while (deg > 0 && std::abs(coef(deg)) < 1e-12 * scale) --deg;
  if (deg < 1) return {};
  Eigen::MatrixXd comp = Eigen::MatrixXd::Zero(deg, deg);
  for (int i = 1; i < deg; ++i) comp(i, i - 1) = 1.0;
  for (int i = 0; i < deg; ++i) comp(i, deg - 1) = -coef(i) / coef(deg);
  const Eigen::EigenSolver<Eigen::MatrixXd> es(comp);

  std::vector<RigidTransform> out;
  for (int ri = 0; ri < deg; ++ri) {
    const std::complex<double> root = es.eigenvalues()(ri);
    if (std::abs(root.imag()) > 1e-7 * std::max(1.0, std::abs(root.real()))) continue;
    const double v = root.real();
    if (v <= 0.0) continue;
    const double av = 1.0 + v * v - 2.0 * v * cos_b;
    if (av <= 0.0) continue;
    const double s1 = b / std::sqrt(av);
    // Recover u from the c-side law of cosines (quadratic; both branches are
    // checked against the a-side equation to pick consistent ones).
    const double disc = cos_c * cos_c - 1.0 + (c * c) / (b * b) * av;
    if (disc < 0.0) continue;
    for (const double sign : {-1.0, 1.0}) {
      const double u = cos_c + sign * std::sqrt(disc);
      if (u <= 0.0) continue;
      const double res_a = u * u + v * v - 2.0 * u * v * cos_a - (a * a) / (b * b) * av;
      if (std::abs(res_a) > 1e-4 * (1.0 + u * u + v * v)) continue;
      const std::vector<Eigen::Vector3d> cam = {s1 * f[0], u * s1 * f[1], v * s1 * f[2]};
      try {
        RigidTransform pose = rigid_point_register(points, cam).transform;
        bool dup = false;
        for (const auto& seen : out) {
          if ((seen.translation - pose.translation).norm() < 1e-6 &&
              rotation_geodesic(seen.rotation, pose.rotation) < 1e-8) {
            dup = true;
            break;
          }
        }
        if (!dup) out.push_back(pose);
      } catch (const std::exception&) {
        // Collinear triple: no rigid fit for this branch.
      }
    }
  }
  return out;
}

namespace {

Eigen::VectorXd reprojection_residuals(const CorrespondenceSet& c, const Intrinsics& k,
                                       const RigidTransform& e) {
  const ProjectionMatrix p = build_projection(k, e);
  Eigen::VectorXd r(2 * c.pairs.size());
  for (std::size_t i = 0; i < c.pairs.size(); ++i) {
    Eigen::Vector4d xh;
    xh << c.pairs[i].p3, 1.0;
    const Eigen::Vector3d h = p.m * xh;
    if (h(2) <= 1e-12) {
      // A candidate that puts a point behind the source is heavily penalized
      // rather than aborted so the line search can back off.
      r.segment<2>(2 * i) = Eigen::Vector2d(1e6, 1e6);
      continue;
    }
    r.segment<2>(2 * i) = Eigen::Vector2d(h(0) / h(2), h(1) / h(2)) - c.pairs[i].p2;
  }
  return r;
}

}  // namespace

RigidTransform pnp_pose(const CorrespondenceSet& c, const Intrinsics& k) {
  const auto n = c.pairs.size();
  if (n < 4) throw InsufficientPoints("PnP needs >= 4 correspondences");

  std::vector<Eigen::Vector3d> pts3;
  std::vector<Eigen::Vector2d> pts2;
  Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
  for (const auto& p : c.pairs) {
    pts3.push_back(p.p3);
    pts2.push_back(p.p2);
    centroid += p.p3;
  }
  centroid /= static_cast<double>(n);

  // A DLT initialization is only trustworthy when the points pin down all of
  // the projection's freedoms; near-planar sets (e.g. one point off a plane)
  // leave it ambiguous in a way no scalar coplanarity test detects reliably.
  // So compute both candidate initializations and keep the better-fitting one.
  RigidTransform init = ray_alternation_pose(pts2, pts3, k, 0.75 * k.sid);
  if (n >= 6) {
    const double spread = spread_largest_singular(pts3);
    if (coplanarity_smallest_singular(pts3) > 1e-6 * spread) {
      try {
        const RigidTransform d = decompose_projection_lenient(dlt_projection(c).projection, k);
        if (reprojection_residuals(c, k, d).squaredNorm() <
            reprojection_residuals(c, k, init).squaredNorm()) {
          init = d;
        }
      } catch (const std::exception&) {
        // Keep the ray-alternation initialization.
      }
    }
  }

  // Gauss-Newton on the 6-DOF perturbation around the initialization, with a
  // forward-difference Jacobian and halving line search.
  const Eigen::Vector3d pivot = apply(init, centroid);
  RigidTransform current = init;
  Eigen::VectorXd r = reprojection_residuals(c, k, current);
  const double init_sq = r.squaredNorm();

  auto perturbed = [&](const Eigen::VectorXd& q) {
    PoseParams pp;
    pp.rotation_vector = q.segment<3>(0);
    pp.translation = q.segment<3>(3);
    pp.center = pivot;
    return compose(pose_to_transform(pp), current);
  };

  for (int iter = 0; iter < 100; ++iter) {
    Eigen::MatrixXd jac(r.size(), 6);
    for (int j = 0; j < 6; ++j) {
      Eigen::VectorXd q = Eigen::VectorXd::Zero(6);
      const double h = 1e-6;
      q[j] = h;
      jac.col(j) = (reprojection_residuals(c, k, perturbed(q)) - r) / h;
    }
    const Eigen::VectorXd step =
        (jac.transpose() * jac + 1e-12 * Eigen::MatrixXd::Identity(6, 6))
            .ldlt()
            .solve(-jac.transpose() * r);
    if (!step.allFinite()) break;

    double alpha = 1.0;
    bool accepted = false;
    for (int ls = 0; ls < 12; ++ls) {
      const RigidTransform cand = perturbed(alpha * step);
      const Eigen::VectorXd rc = reprojection_residuals(c, k, cand);
      if (rc.squaredNorm() < r.squaredNorm()) {
        current = cand;
        r = rc;
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted || (alpha * step).norm() < 1e-10) break;
  }

  if (r.squaredNorm() > 10.0 * init_sq + 1e-12) {
    throw NoConvergence("PnP refinement failed to hold the initialization residual");
  }
  return current;
}

}  // namespace fnav
