#pragma once

// Frame-chain evaluation for the 2D instrument roadmap overlay and 3D
// tool-in-patient tracking, plus tip/angle error scoring and pose stream I/O.

#include <string>
#include <vector>

#include "fnav/geometry.hpp"
#include "fnav/imaging.hpp"

namespace fnav {

struct TrackedTool {
  Eigen::Vector3d tip = Eigen::Vector3d::Zero();        // mm, F_tool
  Eigen::Vector3d direction = Eigen::Vector3d::UnitZ(); // unit, F_tool, tip-ward
  RigidTransform pose;                                  // T_tool^MT
};

struct RoadmapOverlay {
  Eigen::Vector2d tip_px = Eigen::Vector2d::Zero();
  Eigen::Vector2d shaft_px = Eigen::Vector2d::Zero();
  int frame_index = 0;
};

struct TipAngleError {
  double euclid_mm = 0.0;
  double signed_x_mm = 0.0;
  double signed_y_mm = 0.0;
  double angle_deg = 0.0;
};

/// Distance behind the tip, along -direction, of the shaft point used for
/// overlay and angle scoring.
inline constexpr double kShaftOffsetMm = 50.0;

/// Maps the tool tip and a shaft point 50 mm behind it through
/// F_tool -> F_MT -> F_FG -> image. Throws DepthNonPositive behind the source.
RoadmapOverlay tool_to_image(const TrackedTool& tool, const RigidTransform& t_mt_fg,
                             const ProjectionMatrix& p_fg);

/// Chains T_tool^MT through the tracked and registered frames into the
/// patient CT frame: (T_patient^source)^-1 * T_FG^source * T_MT^FG * T_tool^MT.
RigidTransform tool_to_patient(const TrackedTool& tool, const RigidTransform& t_mt_fg,
                               const RigidTransform& t_fg_source,
                               const RigidTransform& t_patient_source);

/// Componentwise signed tip offsets and Euclidean distance in detector mm,
/// plus the unsigned in-plane angle between overlay and ground-truth shaft
/// directions. Throws DegenerateDirection when gt points coincide.
TipAngleError score_roadmap(const RoadmapOverlay& overlay, const Eigen::Vector2d& gt_tip_px,
                            const Eigen::Vector2d& gt_shaft_px,
                            const Eigen::Vector2d& pixel_spacing);

struct PoseStreamFrame {
  double t = 0.0;
  RigidTransform pose;  // T_tool^MT
};

/// CSV rows `t,r00,r01,r02,r10,...,r22,tx,ty,tz`. Throws ParseError naming
/// the offending line.
std::vector<PoseStreamFrame> load_pose_stream(const std::string& path);
void save_pose_stream(const std::vector<PoseStreamFrame>& frames, const std::string& path);

/// 1-px Bresenham stroke, clipped to the image; cosmetic overlay rendering.
void draw_segment(Image2D& img, const Eigen::Vector2d& a, const Eigen::Vector2d& b, double value);

}  // namespace fnav
