#include <doctest.h>

#include <fstream>
#include <random>

#include "fnav/navigate.hpp"

using namespace fnav;

namespace {

std::mt19937_64 g_rng(7);

RigidTransform random_pose(double scale) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> angle(-1.0, 1.0);
  RigidTransform t;
  Eigen::Vector3d axis(n(g_rng), n(g_rng), n(g_rng));
  t.rotation = rotation_from_axis_angle(angle(g_rng) * axis.normalized());
  t.translation = Eigen::Vector3d(n(g_rng), n(g_rng), n(g_rng)) * scale;
  return t;
}

}  // namespace

TEST_CASE("identity chain maps an on-axis tip to the principal point") {
  Intrinsics k = Intrinsics::centered(512, 512, 1.0, 1000.0);
  TrackedTool tool;
  tool.tip = {0, 0, 600};
  tool.direction = Eigen::Vector3d::UnitZ();
  const RoadmapOverlay o = tool_to_image(tool, RigidTransform{},
                                         build_projection(k, RigidTransform{}));
  CHECK((o.tip_px - Eigen::Vector2d(k.u0, k.v0)).norm() < 1e-10);
}

TEST_CASE("overlay equals direct projection of the composed chain") {
  const Intrinsics k = Intrinsics::centered(640, 640, 0.7, 1050.0);
  for (int trial = 0; trial < 20; ++trial) {
    RigidTransform fg = random_pose(20.0);
    fg.translation.z() = 700.0;
    const ProjectionMatrix p_fg = build_projection(k, fg);
    const RigidTransform mt_fg = random_pose(30.0);
    TrackedTool tool;
    tool.tip = Eigen::Vector3d::Random() * 10.0;
    tool.direction = Eigen::Vector3d::Random().normalized();
    tool.pose = random_pose(15.0);

    const RoadmapOverlay o = tool_to_image(tool, mt_fg, p_fg);
    const RigidTransform chain = compose(mt_fg, tool.pose);
    CHECK((o.tip_px - project(p_fg, apply(chain, tool.tip))).norm() < 1e-10);
    const Eigen::Vector3d shaft = tool.tip - kShaftOffsetMm * tool.direction;
    CHECK((o.shaft_px - project(p_fg, apply(chain, shaft))).norm() < 1e-10);
  }
}

TEST_CASE("tool behind the source raises") {
  const Intrinsics k = Intrinsics::centered(128, 128, 1.0, 1000.0);
  TrackedTool tool;
  tool.tip = {0, 0, -50};
  CHECK_THROWS_AS(tool_to_image(tool, RigidTransform{}, build_projection(k, RigidTransform{})),
                  DepthNonPositive);
}

TEST_CASE("tool_to_patient chain") {
  TrackedTool tool;
  CHECK((tool_to_patient(tool, {}, {}, {}).matrix() - Eigen::Matrix4d::Identity()).norm() < 1e-12);

  tool.pose = random_pose(25.0);
  const RigidTransform shared = random_pose(40.0);
  const RigidTransform same = tool_to_patient(tool, RigidTransform{}, shared, shared);
  CHECK((same.matrix() - tool.pose.matrix()).norm() < 1e-12);

  for (int trial = 0; trial < 20; ++trial) {
    const RigidTransform mt_fg = random_pose(10.0), fg_src = random_pose(30.0),
                         pat_src = random_pose(30.0);
    const Eigen::Matrix4d brute = pat_src.matrix().inverse() * fg_src.matrix() *
                                  mt_fg.matrix() * tool.pose.matrix();
    CHECK((tool_to_patient(tool, mt_fg, fg_src, pat_src).matrix() - brute).norm() < 1e-12);
  }
}

TEST_CASE("eq1/eq2 chains describe the same geometry") {
  const Intrinsics k = Intrinsics::centered(512, 512, 0.9, 980.0);
  for (int trial = 0; trial < 20; ++trial) {
    RigidTransform fg_src = random_pose(10.0);
    fg_src.translation.z() = 720.0;
    const RigidTransform mt_fg = random_pose(20.0);
    TrackedTool tool;
    tool.tip = Eigen::Vector3d::Random() * 8.0;
    tool.direction = Eigen::Vector3d::Random().normalized();
    tool.pose = random_pose(10.0);
    RigidTransform pat_src = random_pose(15.0);
    pat_src.translation.z() = 700.0;

    const RoadmapOverlay via_image = tool_to_image(tool, mt_fg, build_projection(k, fg_src));
    const RigidTransform tool_pat = tool_to_patient(tool, mt_fg, fg_src, pat_src);
    const Eigen::Vector2d via_patient =
        project(build_projection(k, pat_src), apply(tool_pat, tool.tip));
    CHECK((via_image.tip_px - via_patient).norm() < 1e-9);
  }
}

TEST_CASE("score_roadmap arithmetic") {
  RoadmapOverlay gt;
  gt.tip_px = {100, 100};
  gt.shaft_px = {100, 150};
  const Eigen::Vector2d spacing(0.29, 0.29);

  const TipAngleError zero = score_roadmap(gt, gt.tip_px, gt.shaft_px, spacing);
  CHECK(zero.euclid_mm == doctest::Approx(0.0));
  CHECK(zero.angle_deg == doctest::Approx(0.0));

  RoadmapOverlay off = gt;
  off.tip_px = {102, 100};
  off.shaft_px = {102, 150};
  const TipAngleError e = score_roadmap(off, gt.tip_px, gt.shaft_px, spacing);
  CHECK(e.signed_x_mm == doctest::Approx(0.58));
  CHECK(e.signed_y_mm == doctest::Approx(0.0));
  CHECK(e.euclid_mm == doctest::Approx(0.58));
  CHECK(e.euclid_mm * e.euclid_mm ==
        doctest::Approx(e.signed_x_mm * e.signed_x_mm + e.signed_y_mm * e.signed_y_mm)
            .epsilon(1e-9));

  // In-plane 1 degree rotation of the direction.
  RoadmapOverlay rot = gt;
  const Eigen::Vector2d d = gt.shaft_px - gt.tip_px;
  const double c = std::cos(M_PI / 180.0), s = std::sin(M_PI / 180.0);
  rot.shaft_px = gt.tip_px + Eigen::Vector2d(c * d.x() - s * d.y(), s * d.x() + c * d.y());
  CHECK(score_roadmap(rot, gt.tip_px, gt.shaft_px, spacing).angle_deg ==
        doctest::Approx(1.0).epsilon(1e-9));

  CHECK_THROWS_AS(score_roadmap(gt, gt.tip_px, gt.tip_px, spacing), DegenerateDirection);
}

TEST_CASE("tracking noise propagates by the magnification factor") {
  const Intrinsics k = Intrinsics::centered(512, 512, 1.0, 1000.0);
  RigidTransform fg;
  fg.translation = {0, 0, 0};
  const ProjectionMatrix p_fg = build_projection(k, fg);
  const double depth = 650.0, sigma = 0.5;
  const Eigen::Vector2d spacing(k.pixel_spacing_u, k.pixel_spacing_v);

  TrackedTool truth;
  truth.tip = {0, 0, depth};
  truth.direction = Eigen::Vector3d(1.0, 0.0, 2.0).normalized();  // off-axis shaft
  const RoadmapOverlay gt = tool_to_image(truth, RigidTransform{}, p_fg);

  std::mt19937_64 rng(4242);
  std::normal_distribution<double> n(0.0, sigma);
  double mean = 0.0;
  const int samples = 10000;
  for (int i = 0; i < samples; ++i) {
    TrackedTool noisy = truth;
    noisy.pose.translation = Eigen::Vector3d(n(rng), n(rng), 0.0);  // in-plane tip noise
    const RoadmapOverlay o = tool_to_image(noisy, RigidTransform{}, p_fg);
    mean += score_roadmap(o, gt.tip_px, gt.shaft_px, spacing).euclid_mm;
  }
  mean /= samples;
  const double focal_px = k.sid / k.pixel_spacing_u;
  // Mean length of a 2D isotropic Gaussian is sigma * sqrt(pi/2).
  const double predicted = sigma * std::sqrt(M_PI / 2.0) * (focal_px / depth) * spacing.x();
  CHECK(std::abs(mean - predicted) / predicted < 0.15);
}

TEST_CASE("pose stream round trip and validation") {
  std::vector<PoseStreamFrame> frames;
  for (int i = 0; i < 5; ++i) {
    PoseStreamFrame f;
    f.t = 0.1 * i;
    f.pose = random_pose(12.0);
    frames.push_back(f);
  }
  save_pose_stream(frames, "/tmp/fnav_stream_test.csv");
  const auto r = load_pose_stream("/tmp/fnav_stream_test.csv");
  REQUIRE(r.size() == 5);
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK((r[i].pose.matrix() - frames[i].pose.matrix()).norm() < 1e-12);
  }

  std::ofstream bad("/tmp/fnav_stream_bad.csv");
  bad << "t,r00,r01,r02,r10,r11,r12,r20,r21,r22,tx,ty,tz\n";
  bad << "0.0,1,0,0,0,1,0,0,0,1,5,6,7\n";
  bad << "0.1,1,0,0,0,1\n";
  bad.close();
  try {
    load_pose_stream("/tmp/fnav_stream_bad.csv");
    CHECK(false);
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
}
