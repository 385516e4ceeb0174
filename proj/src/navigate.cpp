#include "fnav/navigate.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "fnav/errors.hpp"

namespace fnav {

RoadmapOverlay tool_to_image(const TrackedTool& tool, const RigidTransform& t_mt_fg,
                             const ProjectionMatrix& p_fg) {
  if (std::abs(tool.direction.norm() - 1.0) > 1e-9) {
    throw InvalidConfig("tool direction must be unit length");
  }
  const RigidTransform tool_fg = compose(t_mt_fg, tool.pose);
  RoadmapOverlay o;
  o.tip_px = project(p_fg, apply(tool_fg, tool.tip));
  o.shaft_px = project(p_fg, apply(tool_fg, tool.tip - kShaftOffsetMm * tool.direction));
  return o;
}

RigidTransform tool_to_patient(const TrackedTool& tool, const RigidTransform& t_mt_fg,
                               const RigidTransform& t_fg_source,
                               const RigidTransform& t_patient_source) {
  return compose(invert(t_patient_source), compose(t_fg_source, compose(t_mt_fg, tool.pose)));
}

TipAngleError score_roadmap(const RoadmapOverlay& overlay, const Eigen::Vector2d& gt_tip_px,
                            const Eigen::Vector2d& gt_shaft_px,
                            const Eigen::Vector2d& pixel_spacing) {
  const Eigen::Vector2d gt_dir = gt_tip_px - gt_shaft_px;
  if (gt_dir.norm() < 1e-12) {
    throw DegenerateDirection("ground-truth tip and shaft points coincide");
  }
  TipAngleError e;
  const Eigen::Vector2d d = (overlay.tip_px - gt_tip_px).cwiseProduct(pixel_spacing);
  e.signed_x_mm = d.x();
  e.signed_y_mm = d.y();
  e.euclid_mm = d.norm();
  const Eigen::Vector2d ov_dir = overlay.tip_px - overlay.shaft_px;
  if (ov_dir.norm() < 1e-12) throw DegenerateDirection("overlay tip and shaft points coincide");
  const Eigen::Vector2d a = gt_dir.normalized();
  const Eigen::Vector2d b = ov_dir.normalized();
  const double cross = a.x() * b.y() - a.y() * b.x();
  e.angle_deg = std::atan2(std::abs(cross), a.dot(b)) * 180.0 / M_PI;
  return e;
}

std::vector<PoseStreamFrame> load_pose_stream(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ParseError("cannot open: " + path);
  std::vector<PoseStreamFrame> frames;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#' || line.rfind("t,", 0) == 0) continue;
    std::istringstream is(line);
    double vals[13];
    std::string field;
    for (int i = 0; i < 13; ++i) {
      if (!std::getline(is, field, ',')) {
        throw ParseError(path + ": truncated pose row at line " + std::to_string(lineno));
      }
      try {
        vals[i] = std::stod(field);
      } catch (const std::exception&) {
        throw ParseError(path + ": malformed number at line " + std::to_string(lineno));
      }
    }
    PoseStreamFrame frame;
    frame.t = vals[0];
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) frame.pose.rotation(r, c) = vals[1 + 3 * r + c];
    }
    frame.pose.translation = Eigen::Vector3d(vals[10], vals[11], vals[12]);
    if ((frame.pose.rotation * frame.pose.rotation.transpose() - Eigen::Matrix3d::Identity())
            .cwiseAbs()
            .maxCoeff() > 1e-6) {
      throw ParseError(path + ": non-orthonormal rotation at line " + std::to_string(lineno));
    }
    frame.pose.rotation = orthonormalize(frame.pose.rotation);
    frames.push_back(frame);
  }
  return frames;
}

void save_pose_stream(const std::vector<PoseStreamFrame>& frames, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw ParseError("cannot open for writing: " + path);
  f << "t,r00,r01,r02,r10,r11,r12,r20,r21,r22,tx,ty,tz\n";
  f.precision(17);
  for (const auto& fr : frames) {
    f << fr.t;
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) f << "," << fr.pose.rotation(r, c);
    }
    for (int i = 0; i < 3; ++i) f << "," << fr.pose.translation[i];
    f << "\n";
  }
}

void draw_segment(Image2D& img, const Eigen::Vector2d& a, const Eigen::Vector2d& b, double value) {
  int x0 = static_cast<int>(std::lround(a.x()));
  int y0 = static_cast<int>(std::lround(a.y()));
  const int x1 = static_cast<int>(std::lround(b.x()));
  const int y1 = static_cast<int>(std::lround(b.y()));
  const int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
  const int sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
  int err = dx + dy;
  while (true) {
    if (x0 >= 0 && y0 >= 0 && x0 < img.width && y0 < img.height) {
      img.pixels[static_cast<std::size_t>(y0) * img.width + x0] = value;
    }
    if (x0 == x1 && y0 == y1) break;
    const int e2 = 2 * err;
    if (e2 >= dy) {
      err += dy;
      x0 += sx;
    }
    if (e2 <= dx) {
      err += dx;
      y0 += sy;
    }
  }
}

}  // namespace fnav
