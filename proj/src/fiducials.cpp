#include "fnav/fiducials.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <random>
#include <sstream>

namespace fnav {

double FiducialModel::coplanarity_diagnostic() const {
  return coplanarity_smallest_singular(positions());
}

std::vector<Eigen::Vector3d> FiducialModel::positions() const {
  std::vector<Eigen::Vector3d> out;
  out.reserve(points.size());
  for (const auto& p : points) out.push_back(p.position);
  return out;
}

FiducialModel load_fiducial_model(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ParseError("cannot open: " + path);
  FiducialModel m;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream is(line);
    FiducialPoint p;
    std::string layer;
    if (!(is >> p.label >> p.position.x() >> p.position.y() >> p.position.z() >> layer)) {
      throw ParseError(path + ": malformed fiducial at line " + std::to_string(lineno));
    }
    if (layer == "top") {
      p.layer = FiducialLayer::Top;
    } else if (layer == "bottom") {
      p.layer = FiducialLayer::Bottom;
    } else {
      throw ParseError(path + ": unknown layer '" + layer + "' at line " + std::to_string(lineno));
    }
    for (const auto& q : m.points) {
      if (q.label == p.label) throw ParseError(path + ": duplicate label " + std::to_string(p.label));
    }
    m.points.push_back(p);
  }
  return m;
}

void save_fiducial_model(const FiducialModel& m, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw ParseError("cannot open for writing: " + path);
  f.precision(17);
  f << "# label x y z layer\n";
  for (const auto& p : m.points) {
    f << p.label << " " << p.position.x() << " " << p.position.y() << " " << p.position.z() << " "
      << (p.layer == FiducialLayer::Top ? "top" : "bottom") << "\n";
  }
}

std::vector<Eigen::Vector2d> detect_blobs_2d(const Image2D& img, int min_area_px, int max_area_px,
                                             double threshold_quantile) {
  std::vector<double> nonzero;
  for (double v : img.pixels) {
    if (v > 0.0) nonzero.push_back(v);
  }
  if (nonzero.empty()) return {};
  std::sort(nonzero.begin(), nonzero.end());
  const auto qi = static_cast<std::size_t>(
      std::clamp(threshold_quantile, 0.0, 1.0) * static_cast<double>(nonzero.size() - 1));
  const double threshold = nonzero[qi];

  struct Blob {
    double sum = 0.0;
    double cx = 0.0, cy = 0.0;
    int area = 0;
  };
  std::vector<Blob> blobs;
  std::vector<std::uint8_t> visited(img.pixels.size(), 0);
  std::deque<std::pair<int, int>> queue;
  for (int sy = 0; sy < img.height; ++sy) {
    for (int sx = 0; sx < img.width; ++sx) {
      const std::size_t si = static_cast<std::size_t>(sy) * img.width + sx;
      if (visited[si] || img.pixels[si] < threshold) continue;
      Blob b;
      visited[si] = 1;
      queue.emplace_back(sx, sy);
      while (!queue.empty()) {
        const auto [x, y] = queue.front();
        queue.pop_front();
        const double w = img.at(x, y);
        b.sum += w;
        b.cx += w * x;
        b.cy += w * y;
        ++b.area;
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            const int nx = x + dx, ny = y + dy;
            if (nx < 0 || ny < 0 || nx >= img.width || ny >= img.height) continue;
            const std::size_t ni = static_cast<std::size_t>(ny) * img.width + nx;
            if (visited[ni] || img.pixels[ni] < threshold) continue;
            visited[ni] = 1;
            queue.emplace_back(nx, ny);
          }
        }
      }
      if (b.area >= min_area_px && b.area <= max_area_px && b.sum > 0.0) blobs.push_back(b);
    }
  }
  std::stable_sort(blobs.begin(), blobs.end(),
                   [](const Blob& a, const Blob& b) { return a.sum > b.sum; });
  std::vector<Eigen::Vector2d> out;
  out.reserve(blobs.size());
  for (const auto& b : blobs) out.emplace_back(b.cx / b.sum, b.cy / b.sum);
  return out;
}

std::vector<Eigen::Vector3d> extract_fiducials_3d(const Volume3D& v, double hu_threshold,
                                                  int min_voxels) {
  std::vector<std::uint8_t> visited(v.voxels.size(), 0);
  std::vector<Eigen::Vector3d> out;
  std::deque<std::array<int, 3>> queue;
  for (int sz = 0; sz < v.dims[2]; ++sz) {
    for (int sy = 0; sy < v.dims[1]; ++sy) {
      for (int sx = 0; sx < v.dims[0]; ++sx) {
        const std::size_t si = v.index(sx, sy, sz);
        if (visited[si] || v.voxels[si] <= hu_threshold) continue;
        double sum = 0.0;
        Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
        int count = 0;
        visited[si] = 1;
        queue.push_back({sx, sy, sz});
        while (!queue.empty()) {
          const auto [x, y, z] = queue.front();
          queue.pop_front();
          const double w = v.at(x, y, z);
          sum += w;
          centroid += w * v.voxel_center(x, y, z);
          ++count;
          for (int dz = -1; dz <= 1; ++dz) {
            for (int dy = -1; dy <= 1; ++dy) {
              for (int dx = -1; dx <= 1; ++dx) {
                const int nx = x + dx, ny = y + dy, nz = z + dz;
                if (nx < 0 || ny < 0 || nz < 0 || nx >= v.dims[0] || ny >= v.dims[1] ||
                    nz >= v.dims[2]) {
                  continue;
                }
                const std::size_t ni = v.index(nx, ny, nz);
                if (visited[ni] || v.voxels[ni] <= hu_threshold) continue;
                visited[ni] = 1;
                queue.push_back({nx, ny, nz});
              }
            }
          }
        }
        if (count >= min_voxels && sum > 0.0) out.push_back(centroid / sum);
      }
    }
  }
  return out;
}

namespace {

struct Assignment {
  std::vector<std::pair<int, int>> pairs;  // (blob index, model index)
  double rms = 0.0;
};

// Greedy nearest-neighbor assignment between blobs and the reprojected model
// under the candidate pose.
Assignment assign_inliers(const std::vector<Eigen::Vector2d>& blobs, const FiducialModel& model,
                          const Intrinsics& k, const RigidTransform& pose, double tol) {
  Assignment out;
  const ProjectionMatrix p = build_projection(k, pose);
  struct Cand {
    double d2;
    int blob, model;
  };
  std::vector<Cand> cands;
  for (std::size_t mi = 0; mi < model.points.size(); ++mi) {
    Eigen::Vector2d uv;
    try {
      uv = project(p, model.points[mi].position);
    } catch (const DepthNonPositive&) {
      continue;
    }
    for (std::size_t bi = 0; bi < blobs.size(); ++bi) {
      const double d2 = (blobs[bi] - uv).squaredNorm();
      if (d2 < tol * tol) cands.push_back({d2, static_cast<int>(bi), static_cast<int>(mi)});
    }
  }
  std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
    if (a.d2 != b.d2) return a.d2 < b.d2;
    return std::tie(a.blob, a.model) < std::tie(b.blob, b.model);
  });
  std::vector<std::uint8_t> blob_used(blobs.size(), 0), model_used(model.points.size(), 0);
  double sq = 0.0;
  for (const auto& c : cands) {
    if (blob_used[c.blob] || model_used[c.model]) continue;
    blob_used[c.blob] = 1;
    model_used[c.model] = 1;
    out.pairs.emplace_back(c.blob, c.model);
    sq += c.d2;
  }
  out.rms = out.pairs.empty() ? 1e30 : std::sqrt(sq / static_cast<double>(out.pairs.size()));
  return out;
}

CorrespondenceSet to_correspondences(const Assignment& a, const std::vector<Eigen::Vector2d>& blobs,
                                     const FiducialModel& model) {
  CorrespondenceSet c;
  for (const auto& [bi, mi] : a.pairs) {
    c.pairs.push_back({blobs[bi], model.points[mi].position, model.points[mi].label});
    c.inlier_flags.push_back(true);
  }
  return c;
}

}  // namespace

CorrespondenceSet match_2d_3d(const std::vector<Eigen::Vector2d>& blobs, const FiducialModel& model,
                              const Intrinsics& k, const RansacConfig& ransac) {
  if (blobs.size() < 4 || model.points.size() < 4) {
    throw MatchFailed("matching needs at least 4 blobs and 4 model points");
  }
  const double tol = ransac.reproj_tol_px;
  const std::size_t target = std::min(blobs.size(), model.points.size());

  Assignment best;
  best.rms = 1e30;
  auto better = [](const Assignment& a, const Assignment& b) {
    if (a.pairs.size() != b.pairs.size()) return a.pairs.size() > b.pairs.size();
    return a.rms < b.rms;
  };

  // Hypothesis scoring with one round of local pose refinement.
  auto consider = [&](const RigidTransform& pose) {
    Assignment a = assign_inliers(blobs, model, k, pose, tol);
    if (a.pairs.size() >= 4) {
      try {
        const RigidTransform refined = pnp_pose(to_correspondences(a, blobs, model), k);
        const Assignment b = assign_inliers(blobs, model, k, refined, tol);
        if (better(b, a)) a = b;
      } catch (const std::runtime_error&) {
        // refinement failure leaves the raw hypothesis score
      }
    }
    if (better(a, best)) best = a;
    return best.pairs.size() >= target && best.rms < 0.5 * tol;
  };

  // Deterministic pre-alignment pass: align the blob cloud with the model
  // projected at a canonical frontal view via centroid/PCA, then promote the
  // tentative nearest-neighbor labeling to a pose hypothesis.
  {
    Eigen::Vector3d mc = Eigen::Vector3d::Zero();
    for (const auto& p : model.points) mc += p.position;
    mc /= static_cast<double>(model.points.size());
    RigidTransform frontal;
    frontal.translation = Eigen::Vector3d(0, 0, 0.75 * k.sid) - mc;
    const ProjectionMatrix fp = build_projection(k, frontal);

    std::vector<Eigen::Vector2d> mproj;
    std::vector<int> mindex;
    for (std::size_t mi = 0; mi < model.points.size(); ++mi) {
      try {
        mproj.push_back(project(fp, model.points[mi].position));
        mindex.push_back(static_cast<int>(mi));
      } catch (const DepthNonPositive&) {
      }
    }
    if (mproj.size() >= 4) {
      auto stats = [](const std::vector<Eigen::Vector2d>& pts) {
        Eigen::Vector2d mean = Eigen::Vector2d::Zero();
        for (const auto& p : pts) mean += p;
        mean /= static_cast<double>(pts.size());
        Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
        for (const auto& p : pts) cov += (p - mean) * (p - mean).transpose();
        cov /= static_cast<double>(pts.size());
        return std::make_pair(mean, cov);
      };
      const auto [bmean, bcov] = stats(blobs);
      const auto [mmean, mcov] = stats(mproj);
      Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> beig(bcov), meig(mcov);
      const Eigen::Vector2d baxis = beig.eigenvectors().col(1);
      const Eigen::Vector2d maxis = meig.eigenvectors().col(1);
      const double theta0 = std::atan2(baxis.y(), baxis.x()) - std::atan2(maxis.y(), maxis.x());
      const double scale = std::sqrt(bcov.trace() / std::max(mcov.trace(), 1e-30));

      for (int quad = 0; quad < 4; ++quad) {
        const double theta = theta0 + quad * M_PI / 2.0;
        Eigen::Matrix2d rot;
        rot << std::cos(theta), -std::sin(theta), std::sin(theta), std::cos(theta);
        // Tentative labeling by nearest neighbor after similarity alignment.
        std::vector<std::pair<int, int>> tentative;
        std::vector<std::uint8_t> used(blobs.size(), 0);
        for (std::size_t j = 0; j < mproj.size(); ++j) {
          const Eigen::Vector2d q = bmean + scale * (rot * (mproj[j] - mmean));
          int nearest = -1;
          double nd = std::numeric_limits<double>::max();
          for (std::size_t bi = 0; bi < blobs.size(); ++bi) {
            if (used[bi]) continue;
            const double d = (blobs[bi] - q).squaredNorm();
            if (d < nd) {
              nd = d;
              nearest = static_cast<int>(bi);
            }
          }
          if (nearest >= 0) {
            used[nearest] = 1;
            tentative.emplace_back(nearest, mindex[j]);
          }
        }
        if (tentative.size() < 4) continue;
        std::vector<Eigen::Vector2d> hp2;
        std::vector<Eigen::Vector3d> hp3;
        for (const auto& [bi, mi] : tentative) {
          hp2.push_back(blobs[bi]);
          hp3.push_back(model.points[mi].position);
        }
        try {
          if (consider(ray_alternation_pose(hp2, hp3, k, 0.75 * k.sid))) {
            return to_correspondences(best, blobs, model);
          }
        } catch (const std::runtime_error&) {
        }
      }
    }
  }

  // Seeded RANSAC over minimal 3-point label assignments with a pairwise
  // distance-ratio prefilter.
  std::mt19937_64 rng(ransac.seed);
  std::uniform_int_distribution<int> blob_pick(0, static_cast<int>(blobs.size()) - 1);
  std::uniform_int_distribution<int> model_pick(0, static_cast<int>(model.points.size()) - 1);
  static constexpr int kPerms[6][3] = {{0, 1, 2}, {0, 2, 1}, {1, 0, 2},
                                       {1, 2, 0}, {2, 0, 1}, {2, 1, 0}};

  for (int it = 0; it < ransac.iters; ++it) {
    int b[3], m[3];
    b[0] = blob_pick(rng);
    do b[1] = blob_pick(rng); while (b[1] == b[0]);
    do b[2] = blob_pick(rng); while (b[2] == b[0] || b[2] == b[1]);
    m[0] = model_pick(rng);
    do m[1] = model_pick(rng); while (m[1] == m[0]);
    do m[2] = model_pick(rng); while (m[2] == m[0] || m[2] == m[1]);

    for (const auto& perm : kPerms) {
      // Pairwise distance ratios must be roughly compatible with a rigid pose
      // seen under moderate perspective before paying for a minimal fit.
      double s_num = 0.0, s_den = 0.0;
      double d2[3], d3[3];
      for (int e = 0; e < 3; ++e) {
        const int i = e, j = (e + 1) % 3;
        d2[e] = (blobs[b[i]] - blobs[b[j]]).norm();
        d3[e] = (model.points[m[perm[i]]].position - model.points[m[perm[j]]].position).norm();
        s_num += d3[e];
        s_den += d2[e];
      }
      if (s_den < 1e-9) continue;
      const double s = s_num / s_den;
      bool compatible = true;
      for (int e = 0; e < 3; ++e) {
        if (std::abs(d2[e] * s - d3[e]) > 0.35 * d3[e] + 1e-9) {
          compatible = false;
          break;
        }
      }
      if (!compatible) continue;

      const std::vector<Eigen::Vector2d> hp2 = {blobs[b[0]], blobs[b[1]], blobs[b[2]]};
      const std::vector<Eigen::Vector3d> hp3 = {model.points[m[perm[0]]].position,
                                                model.points[m[perm[1]]].position,
                                                model.points[m[perm[2]]].position};
      // Every perspective-three-point branch is scored: the depth-alternation
      // solver finds only one fixed point, and for narrow triples that is
      // frequently the wrong branch.
      try {
        for (const RigidTransform& pose : p3p_poses(hp2, hp3, k)) {
          if (consider(pose)) return to_correspondences(best, blobs, model);
        }
      } catch (const std::runtime_error&) {
      }
    }
  }

  if (best.pairs.size() < 4) {
    throw MatchFailed("no hypothesis reached 4 reprojection inliers");
  }
  return to_correspondences(best, blobs, model);
}

}  // namespace fnav
