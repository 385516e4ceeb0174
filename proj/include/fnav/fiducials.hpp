#pragma once

// Fiducial centroid detection in 2D residual images and 3D CT volumes, and
// 2D<->3D correspondence via seeded RANSAC over minimal pose hypotheses.

#include <cstdint>
#include <string>
#include <vector>

#include "fnav/geometry.hpp"
#include "fnav/imaging.hpp"
#include "fnav/pose.hpp"

namespace fnav {

enum class FiducialLayer { Top, Bottom };

struct FiducialPoint {
  int label = 0;
  Eigen::Vector3d position = Eigen::Vector3d::Zero();  // mm, F_FG
  FiducialLayer layer = FiducialLayer::Top;
};

struct FiducialModel {
  std::vector<FiducialPoint> points;

  /// Smallest singular value of the centered positions; near zero flags a
  /// single-layer (coplanar) constellation as degenerate for pose work.
  double coplanarity_diagnostic() const;
  std::vector<Eigen::Vector3d> positions() const;
};

FiducialModel load_fiducial_model(const std::string& path);
void save_fiducial_model(const FiducialModel& m, const std::string& path);

/// Thresholds at the given intensity quantile of the nonzero pixels, finds
/// 8-connected components with area in [min,max] and returns their
/// intensity-weighted centroids sorted by descending total intensity.
std::vector<Eigen::Vector2d> detect_blobs_2d(const Image2D& img, int min_area_px, int max_area_px,
                                             double threshold_quantile);

/// 26-connected components above hu_threshold with at least min_voxels;
/// intensity-weighted centroids in mm.
std::vector<Eigen::Vector3d> extract_fiducials_3d(const Volume3D& v, double hu_threshold,
                                                  int min_voxels);

struct RansacConfig {
  int iters = 20000;
  double reproj_tol_px = 3.0;
  std::uint64_t seed = 0;
};

/// Labels detected blobs against the 3D model. Hypotheses are minimal pose
/// fits on small blob/model subsets (plus a deterministic PCA pre-alignment
/// pass); each is scored by greedy nearest-neighbor reprojection inliers and
/// locally refined. Throws MatchFailed when no hypothesis reaches 4 inliers.
CorrespondenceSet match_2d_3d(const std::vector<Eigen::Vector2d>& blobs, const FiducialModel& model,
                              const Intrinsics& k, const RansacConfig& ransac);

}  // namespace fnav
