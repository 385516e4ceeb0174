#include <doctest.h>

#include <cmath>

#include "fnav/drr.hpp"

using namespace fnav;

namespace {

RigidTransform at_depth(double z) {
  RigidTransform t;
  t.translation = {0, 0, z};
  return t;
}

}  // namespace

TEST_CASE("attenuation map") {
  AttenuationModel m;
  CHECK(hu_to_mu(-1000, m) == doctest::Approx(0.0));
  CHECK(hu_to_mu(-2000, m) == doctest::Approx(0.0));
  CHECK(hu_to_mu(0, m) == doctest::Approx(0.02));
  CHECK(hu_to_mu(1000, m) == doctest::Approx(0.04));
}

TEST_CASE("empty volume renders zero") {
  Volume3D v = Volume3D::filled({16, 16, 16}, {1, 1, 1}, {-7.5, -7.5, -7.5}, -1000.0f);
  const Intrinsics k = Intrinsics::centered(32, 32, 1.0, 1000.0);
  RenderConfig cfg;
  const Image2D img = render_drr(v, k, at_depth(500), cfg, AttenuationModel{});
  for (double p : img.pixels) CHECK(p == 0.0);
}

TEST_CASE("water slab line integral matches the analytic value") {
  // 100 mm slab of water along z, wide in x/y so the central ray crosses it
  // perpendicularly.
  Volume3D v = Volume3D::filled({61, 61, 101}, {2, 2, 1}, {-60, -60, -50}, 0.0f);
  const Intrinsics k = Intrinsics::centered(9, 9, 0.5, 1000.0);
  AttenuationModel m;
  RenderConfig cfg;
  cfg.step_mm = 0.5;
  const Image2D img = render_drr(v, k, at_depth(500), cfg, m);
  const double center = img.at(4, 4);
  CHECK(std::abs(center - 2.0) <= 2.0 * cfg.step_mm * 0.02 + 0.021);

  RenderConfig half = cfg;
  half.step_mm = 0.25;
  const double center2 = render_drr(v, k, at_depth(500), half, m).at(4, 4);
  CHECK(std::abs(center2 - center) / center < 0.01);
}

TEST_CASE("monotonicity: added material never decreases the integral") {
  Volume3D v = Volume3D::filled({21, 21, 21}, {1, 1, 1}, {-10, -10, -10}, -1000.0f);
  for (int z = 8; z <= 12; ++z) {
    for (int y = 8; y <= 12; ++y) {
      for (int x = 8; x <= 12; ++x) v.at(x, y, z) = 0.0f;
    }
  }
  const Intrinsics k = Intrinsics::centered(41, 41, 0.5, 1000.0);
  RenderConfig cfg;
  const Image2D before = render_drr(v, k, at_depth(500), cfg, AttenuationModel{});
  for (int z = 5; z <= 15; ++z) {
    for (int y = 5; y <= 15; ++y) {
      for (int x = 5; x <= 15; ++x) {
        if (v.at(x, y, z) < 0.0f) v.at(x, y, z) = 500.0f;
      }
    }
  }
  const Image2D after = render_drr(v, k, at_depth(500), cfg, AttenuationModel{});
  for (std::size_t i = 0; i < before.pixels.size(); ++i) {
    CHECK(after.pixels[i] >= before.pixels[i] - 1e-12);
  }
}

TEST_CASE("point target projects within one pixel of the analytic projection") {
  Volume3D v = Volume3D::filled({41, 41, 41}, {1, 1, 1}, {-20, -20, -20}, -1000.0f);
  v.at(27, 14, 20) = 3000.0f;
  const Eigen::Vector3d target = v.voxel_center(27, 14, 20);
  const Intrinsics k = Intrinsics::centered(128, 128, 0.8, 1000.0);
  const RigidTransform pose = at_depth(600);
  RenderConfig cfg;
  const Image2D img = render_drr(v, k, pose, cfg, AttenuationModel{});

  double cx = 0, cy = 0, sum = 0;
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      cx += img.at(x, y) * x;
      cy += img.at(x, y) * y;
      sum += img.at(x, y);
    }
  }
  REQUIRE(sum > 0.0);
  const Eigen::Vector2d analytic = project(build_projection(k, pose), target);
  CHECK(std::abs(cx / sum - analytic.x()) < 1.0);
  CHECK(std::abs(cy / sum - analytic.y()) < 1.0);
}

TEST_CASE("translating the volume shifts the projection by the magnification") {
  Volume3D v = Volume3D::filled({41, 41, 41}, {1, 1, 1}, {-20, -20, -20}, -1000.0f);
  v.at(20, 20, 20) = 3000.0f;
  const Intrinsics k = Intrinsics::centered(256, 256, 0.5, 1000.0);
  RenderConfig cfg;
  auto centroid_x = [&](const RigidTransform& pose) {
    const Image2D img = render_drr(v, k, pose, cfg, AttenuationModel{});
    double cx = 0, sum = 0;
    for (int y = 0; y < img.height; ++y) {
      for (int x = 0; x < img.width; ++x) {
        cx += img.at(x, y) * x;
        sum += img.at(x, y);
      }
    }
    REQUIRE(sum > 0.0);
    return cx / sum;
  };
  const double depth = 600.0;
  RigidTransform shifted = at_depth(depth);
  shifted.translation.x() = 10.0;
  const double dx = centroid_x(shifted) - centroid_x(at_depth(depth));
  const double predicted = (1000.0 / 0.5) * 10.0 / depth;
  CHECK(std::abs(dx - predicted) < 0.5);
}

TEST_CASE("fluoro simulation statistics and determinism") {
  Image2D drr = Image2D::zeros(320, 320);  // L = 0 everywhere, ~1e5 pixels
  RenderConfig cfg;
  cfg.photons = 2000.0;
  cfg.rng_seed = 42;
  const Image2D noisy = simulate_fluoro(drr, cfg);

  double mean = 0.0;
  std::vector<double> counts(noisy.pixels.size());
  for (std::size_t i = 0; i < noisy.pixels.size(); ++i) {
    counts[i] = 2000.0 * std::exp(-noisy.pixels[i]);
    mean += counts[i];
  }
  mean /= static_cast<double>(counts.size());
  CHECK(std::abs(mean - 2000.0) / 2000.0 < 0.01);

  double var = 0.0;
  for (double c : counts) var += (c - mean) * (c - mean);
  var /= static_cast<double>(counts.size() - 1);
  CHECK(std::abs(var / mean - 1.0) < 0.05);

  const Image2D again = simulate_fluoro(drr, cfg);
  CHECK(again.pixels == noisy.pixels);

  RenderConfig big = cfg;
  big.photons = 1e9;
  Image2D smooth = Image2D::zeros(16, 16);
  for (auto& p : smooth.pixels) p = 1.2345;
  const Image2D limit = simulate_fluoro(smooth, big);
  for (double p : limit.pixels) CHECK(std::abs(p - 1.2345) < 1e-3);
}
