#pragma once

// Registration error metrics: mean target registration error (3D), mean
// projection distance (detector mm) and mean reprojection distance
// (point-to-ray mm), plus success-rate aggregation.

#include <string>
#include <vector>

#include "fnav/geometry.hpp"

namespace fnav {

struct TargetSet {
  std::vector<Eigen::Vector3d> points;  // mm, patient CT frame
};

TargetSet load_targets(const std::string& path);
void save_targets(const TargetSet& t, const std::string& path);

/// Mean over targets of || t_gt * p - t_est * p ||, mm.
double mtre(const RigidTransform& t_gt, const RigidTransform& t_est, const TargetSet& targets);

/// Mean detector-plane distance between the projections of each target under
/// the two poses, converted from px to mm by the pixel spacing. Throws
/// DepthNonPositive when a target falls behind the source under either pose.
double mpd(const Intrinsics& k, const RigidTransform& t_gt, const RigidTransform& t_est,
           const TargetSet& targets);

/// Mean distance from each true 3D target position to the ray cast from the
/// source through its projection under the estimated pose, mm.
double mrpd(const Intrinsics& k, const RigidTransform& t_gt, const RigidTransform& t_est,
            const TargetSet& targets);

/// Fraction of values strictly below threshold. Throws EmptyInput.
double success_rate(const std::vector<double>& mpds, double threshold = 5.0);

struct MetricsRow {
  std::string case_id;
  std::string mode;
  double mtre = 0.0;
  double mpd = 0.0;
  double mrpd = 0.0;
  bool success = false;
};

/// CSV with a `# schema=1` banner and a `case_id,mode,mtre,mpd,mrpd,success`
/// header, one row per case.
void save_metrics_csv(const std::vector<MetricsRow>& rows, const std::string& path);
std::vector<MetricsRow> load_metrics_csv(const std::string& path);

}  // namespace fnav
