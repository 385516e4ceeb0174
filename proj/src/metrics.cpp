#include "fnav/metrics.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "fnav/errors.hpp"

namespace fnav {

TargetSet load_targets(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ParseError("cannot open: " + path);
  TargetSet t;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream is(line);
    Eigen::Vector3d p;
    if (!(is >> p.x() >> p.y() >> p.z())) {
      throw ParseError(path + ": malformed target at line " + std::to_string(lineno));
    }
    t.points.push_back(p);
  }
  return t;
}

void save_targets(const TargetSet& t, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw ParseError("cannot open for writing: " + path);
  f.precision(17);
  f << "# x y z (mm)\n";
  for (const auto& p : t.points) f << p.x() << " " << p.y() << " " << p.z() << "\n";
}

double mtre(const RigidTransform& t_gt, const RigidTransform& t_est, const TargetSet& targets) {
  if (targets.points.empty()) throw EmptyInput("mtre requires at least one target");
  double sum = 0.0;
  for (const auto& p : targets.points) sum += (apply(t_gt, p) - apply(t_est, p)).norm();
  return sum / static_cast<double>(targets.points.size());
}

double mpd(const Intrinsics& k, const RigidTransform& t_gt, const RigidTransform& t_est,
           const TargetSet& targets) {
  if (targets.points.empty()) throw EmptyInput("mpd requires at least one target");
  const ProjectionMatrix pg = build_projection(k, t_gt);
  const ProjectionMatrix pe = build_projection(k, t_est);
  const Eigen::Vector2d spacing(k.pixel_spacing_u, k.pixel_spacing_v);
  double sum = 0.0;
  for (const auto& p : targets.points) {
    const Eigen::Vector2d d = project(pg, p) - project(pe, p);
    sum += d.cwiseProduct(spacing).norm();
  }
  return sum / static_cast<double>(targets.points.size());
}

double mrpd(const Intrinsics& k, const RigidTransform& t_gt, const RigidTransform& t_est,
            const TargetSet& targets) {
  if (targets.points.empty()) throw EmptyInput("mrpd requires at least one target");
  const ProjectionMatrix pe = build_projection(k, t_est);
  double sum = 0.0;
  for (const auto& p : targets.points) {
    const Eigen::Vector2d uv = project(pe, p);
    // Ray from the source (camera origin) through the detector pixel.
    const Eigen::Vector3d dir = Eigen::Vector3d((uv.x() - k.u0) * k.pixel_spacing_u,
                                                (uv.y() - k.v0) * k.pixel_spacing_v, k.sid)
                                    .normalized();
    const Eigen::Vector3d q = apply(t_gt, p);
    sum += (q - dir * dir.dot(q)).norm();
  }
  return sum / static_cast<double>(targets.points.size());
}

double success_rate(const std::vector<double>& mpds, double threshold) {
  if (mpds.empty()) throw EmptyInput("success_rate requires at least one value");
  std::size_t ok = 0;
  for (double v : mpds) {
    if (v < threshold) ++ok;
  }
  return static_cast<double>(ok) / static_cast<double>(mpds.size());
}

void save_metrics_csv(const std::vector<MetricsRow>& rows, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw ParseError("cannot open for writing: " + path);
  f << "# schema=1\n";
  f << "case_id,mode,mtre,mpd,mrpd,success\n";
  f.precision(6);
  for (const auto& r : rows) {
    f << r.case_id << "," << r.mode << "," << r.mtre << "," << r.mpd << "," << r.mrpd << ","
      << (r.success ? 1 : 0) << "\n";
  }
}

std::vector<MetricsRow> load_metrics_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ParseError("cannot open: " + path);
  std::vector<MetricsRow> rows;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#' || line.rfind("case_id,", 0) == 0) continue;
    std::istringstream is(line);
    MetricsRow r;
    std::string field;
    int succ = 0;
    auto next = [&](const char* what) {
      if (!std::getline(is, field, ',')) {
        throw ParseError(path + ": missing " + what + " at line " + std::to_string(lineno));
      }
      return field;
    };
    r.case_id = next("case_id");
    r.mode = next("mode");
    try {
      r.mtre = std::stod(next("mtre"));
      r.mpd = std::stod(next("mpd"));
      r.mrpd = std::stod(next("mrpd"));
      succ = std::stoi(next("success"));
    } catch (const std::exception&) {
      throw ParseError(path + ": malformed number at line " + std::to_string(lineno));
    }
    r.success = succ != 0;
    rows.push_back(r);
  }
  return rows;
}

}  // namespace fnav
