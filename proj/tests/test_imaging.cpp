#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "fnav/imaging.hpp"

using namespace fnav;

namespace {

std::string temp_base(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "fnav_imaging_tests";
  std::filesystem::create_directories(dir);
  return (dir / name).string();
}

}  // namespace

TEST_CASE("volume round trip is bit exact") {
  Volume3D v = Volume3D::filled({2, 2, 2}, {1, 1, 1}, {0, 0, 0}, 0.0f);
  const std::string base = temp_base("zeros");
  save_volume(v, base);
  Volume3D r = load_volume(base);
  CHECK(r.dims == v.dims);
  CHECK(r.voxels == v.voxels);

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<float> hu(-1000.0f, 3000.0f);
  Volume3D big = Volume3D::filled({64, 64, 64}, {0.7, 0.8, 0.9}, {-10.5, 3.25, 7.125}, 0.0f);
  for (auto& x : big.voxels) x = hu(rng);
  const std::string base2 = temp_base("rand");
  save_volume(big, base2);
  Volume3D r2 = load_volume(base2);
  CHECK(r2.voxels == big.voxels);
  CHECK(r2.spacing == big.spacing);
  CHECK(r2.origin == big.origin);
}

TEST_CASE("volume payload size mismatch") {
  Volume3D v = Volume3D::filled({10, 10, 10}, {1, 1, 1}, {0, 0, 0}, 1.0f);
  const std::string base = temp_base("badsize");
  save_volume(v, base);
  // Truncate the payload to 999 voxels.
  std::filesystem::resize_file(base + ".vraw", 999 * 4);
  CHECK_THROWS_AS(load_volume(base), SizeMismatch);
}

TEST_CASE("volume malformed header") {
  const std::string base = temp_base("badheader");
  std::ofstream(base + ".vh") << "dims: 2 2\nspacing: 1 1 1\norigin: 0 0 0\n";
  std::ofstream(base + ".vraw") << "xxxx";
  CHECK_THROWS_AS(load_volume(base), ParseError);
}

TEST_CASE("trilinear sampling") {
  Volume3D v = Volume3D::filled({4, 4, 4}, {2, 2, 2}, {0, 0, 0}, 0.0f);
  v.at(1, 2, 3) = 77.0f;
  CHECK(trilinear_sample(v, v.voxel_center(1, 2, 3)) == doctest::Approx(77.0));

  Volume3D w = Volume3D::filled({2, 1, 1}, {1, 1, 1}, {0, 0, 0}, 0.0f);
  w.at(1, 0, 0) = 100.0f;
  CHECK(trilinear_sample(w, {0.5, 0, 0}) == doctest::Approx(50.0));

  CHECK(trilinear_sample(v, {-10, 0, 0}) == doctest::Approx(-1000.0));
}

TEST_CASE("trilinear sampling is exact on affine fields") {
  Volume3D v = Volume3D::filled({8, 8, 8}, {1.5, 1.0, 2.0}, {-3, 2, 5}, 0.0f);
  const auto f = [](const Eigen::Vector3d& p) {
    return 7.0 + 3.0 * p.x() - 2.0 * p.y() + 0.5 * p.z();
  };
  for (int z = 0; z < 8; ++z) {
    for (int y = 0; y < 8; ++y) {
      for (int x = 0; x < 8; ++x) v.at(x, y, z) = static_cast<float>(f(v.voxel_center(x, y, z)));
    }
  }
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.2, 0.8);
  for (int i = 0; i < 200; ++i) {
    const Eigen::Vector3d p = v.bbox_min() + (v.bbox_max() - v.bbox_min()).cwiseProduct(
                                                 Eigen::Vector3d(u(rng), u(rng), u(rng)));
    CHECK(trilinear_sample(v, p) == doctest::Approx(f(p)).epsilon(1e-6));
  }
}

TEST_CASE("downsample") {
  Image2D img = Image2D::zeros(4, 4);
  for (auto& p : img.pixels) p = 3.25;
  Image2D one = downsample_image(img, 4);
  CHECK(one.width == 1);
  CHECK(one.pixels[0] == doctest::Approx(3.25));

  Image2D checker = Image2D::zeros(2, 2);
  checker.at(0, 0) = 0;
  checker.at(1, 0) = 100;
  checker.at(0, 1) = 100;
  checker.at(1, 1) = 0;
  CHECK(downsample_image(checker, 2).pixels[0] == doctest::Approx(50.0));

  Image2D same = downsample_image(checker, 1);
  CHECK(same.pixels == checker.pixels);

  CHECK_THROWS_AS(downsample_image(checker, 3), EmptyOutput);
}

TEST_CASE("downsample preserves the covered-region mean") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.0, 10.0);
  Image2D img = Image2D::zeros(13, 9);
  for (auto& p : img.pixels) p = u(rng);
  const int f = 4;
  Image2D d = downsample_image(img, f);
  double covered = 0.0;
  for (int y = 0; y < d.height * f; ++y) {
    for (int x = 0; x < d.width * f; ++x) covered += img.at(x, y);
  }
  covered /= static_cast<double>(d.width * f * d.height * f);
  double dmean = 0.0;
  for (double p : d.pixels) dmean += p;
  dmean /= static_cast<double>(d.pixels.size());
  CHECK(dmean == doctest::Approx(covered).epsilon(1e-9));
  CHECK(d.pixel_spacing.x() == doctest::Approx(img.pixel_spacing.x() * f));
}

TEST_CASE("image round trips") {
  Image2D zero = Image2D::zeros(8, 8, {0.29, 0.29});
  const std::string p0 = temp_base("zero.pgm");
  save_image(zero, p0);
  Image2D r0 = load_image(p0);
  CHECK(r0.pixels == zero.pixels);
  CHECK(r0.pixel_spacing.x() == doctest::Approx(0.29));

  Image2D maxed = Image2D::zeros(4, 4);
  for (auto& p : maxed.pixels) p = 65535.0;
  const std::string p1 = temp_base("max.pgm");
  save_image(maxed, p1, 0.0, 65535.0);
  Image2D r1 = load_image(p1);
  for (double p : r1.pixels) CHECK(p == doctest::Approx(65535.0));

  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(-2.0, 5.0);
  Image2D rand_img = Image2D::zeros(16, 16);
  for (auto& p : rand_img.pixels) p = u(rng);
  const std::string p2 = temp_base("rand.pgm");
  save_image(rand_img, p2);
  Image2D r2 = load_image(p2);
  const double lsb = 7.0 / 65535.0;
  for (std::size_t i = 0; i < r2.pixels.size(); ++i) {
    CHECK(std::abs(r2.pixels[i] - rand_img.pixels[i]) <= lsb);
  }

  // load(save(load(x))) == load(x)
  const std::string p3 = temp_base("idem.pgm");
  save_image(r2, p3, -2.0, 5.0);
  save_image(load_image(p3), temp_base("idem2.pgm"), -2.0, 5.0);
  Image2D a = load_image(p3), b = load_image(temp_base("idem2.pgm"));
  CHECK(a.pixels == b.pixels);
}
