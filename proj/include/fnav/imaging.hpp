#pragma once

// Volume/image containers, bit-exact file I/O, trilinear sampling and the
// block-mean pyramid used by the multi-resolution registration.
//
// Volume files: <name>.vh text header (dims/spacing/origin) plus <name>.vraw
// little-endian float32 payload, x-fastest.
// Image files: binary PGM P5 maxval 65535 (big-endian samples) plus a
// <name>.imeta sidecar carrying pixel spacing and the quantization window.

#include <array>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fnav/errors.hpp"

namespace fnav {

struct Volume3D {
  std::array<int, 3> dims = {1, 1, 1};          // voxels
  Eigen::Vector3d spacing = {1.0, 1.0, 1.0};    // mm
  Eigen::Vector3d origin = {0.0, 0.0, 0.0};     // mm, center of voxel (0,0,0)
  std::vector<float> voxels;                    // HU, x-fastest

  std::size_t index(int x, int y, int z) const {
    return static_cast<std::size_t>(x) +
           static_cast<std::size_t>(dims[0]) *
               (static_cast<std::size_t>(y) + static_cast<std::size_t>(dims[1]) * z);
  }
  float& at(int x, int y, int z) { return voxels[index(x, y, z)]; }
  float at(int x, int y, int z) const { return voxels[index(x, y, z)]; }

  Eigen::Vector3d voxel_center(int x, int y, int z) const {
    return origin + Eigen::Vector3d(x * spacing.x(), y * spacing.y(), z * spacing.z());
  }
  /// Bounding box of voxel centers.
  Eigen::Vector3d bbox_min() const { return origin; }
  Eigen::Vector3d bbox_max() const {
    return origin + Eigen::Vector3d((dims[0] - 1) * spacing.x(), (dims[1] - 1) * spacing.y(),
                                    (dims[2] - 1) * spacing.z());
  }

  static Volume3D filled(std::array<int, 3> dims, Eigen::Vector3d spacing, Eigen::Vector3d origin,
                         float value);
};

struct Image2D {
  int width = 0;
  int height = 0;
  Eigen::Vector2d pixel_spacing = {1.0, 1.0};  // mm/px
  std::vector<double> pixels;                  // row-major

  double& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  double at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }

  static Image2D zeros(int width, int height, Eigen::Vector2d spacing = {1.0, 1.0});
};

Volume3D load_volume(const std::string& path_base);
void save_volume(const Volume3D& v, const std::string& path_base);

/// Trilinear interpolation in the volume's continuous index space. Points
/// outside the voxel-center bounding box return -1000 HU (air).
double trilinear_sample(const Volume3D& v, const Eigen::Vector3d& p);

/// Block-mean downsampling; output dims = floor(in/factor), spacing scaled by
/// factor. Factor 1 is the identity. Throws EmptyOutput when a dim collapses.
Image2D downsample_image(const Image2D& img, int factor);

/// 16-bit quantized I/O. The window defaults to [min, max] of the image and
/// is stored in the sidecar, so load(save(img)) reproduces pixels within one
/// quantization step.
Image2D load_image(const std::string& pgm_path);
void save_image(const Image2D& img, const std::string& pgm_path);
void save_image(const Image2D& img, const std::string& pgm_path, double window_lo,
                double window_hi);

}  // namespace fnav
