#include "fnav/drr.hpp"

#include <algorithm>
#include <cmath>

namespace fnav {

namespace {

// Slab clipping of the ray o + t*d against [lo, hi]; returns false on miss.
bool clip_ray_aabb(const Eigen::Vector3d& o, const Eigen::Vector3d& d, const Eigen::Vector3d& lo,
                   const Eigen::Vector3d& hi, double* t0, double* t1) {
  double tmin = 0.0;
  double tmax = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 3; ++i) {
    if (std::abs(d[i]) < 1e-300) {
      if (o[i] < lo[i] || o[i] > hi[i]) return false;
      continue;
    }
    double ta = (lo[i] - o[i]) / d[i];
    double tb = (hi[i] - o[i]) / d[i];
    if (ta > tb) std::swap(ta, tb);
    tmin = std::max(tmin, ta);
    tmax = std::min(tmax, tb);
    if (tmin > tmax) return false;
  }
  *t0 = tmin;
  *t1 = tmax;
  return true;
}

struct SplitMix64 {
  std::uint64_t state;
  std::uint64_t next() {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }
  double uniform() {  // (0, 1)
    return (static_cast<double>(next() >> 11) + 0.5) * (1.0 / 9007199254740992.0);
  }
};

// Deterministic Poisson sampler: CDF inversion below mean 30, rounded normal
// approximation above.
double sample_poisson(double mean, SplitMix64& rng) {
  if (mean <= 0.0) return 0.0;
  if (mean < 30.0) {
    const double u = rng.uniform();
    double p = std::exp(-mean);
    double cum = p;
    int k = 0;
    const int kmax = static_cast<int>(mean + 20.0 * std::sqrt(mean) + 120.0);
    while (u > cum && k < kmax) {
      ++k;
      p *= mean / k;
      cum += p;
    }
    return k;
  }
  const double u1 = rng.uniform();
  const double u2 = rng.uniform();
  const double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  const double n = std::round(mean + std::sqrt(mean) * z);
  return n > 0.0 ? n : 0.0;
}

}  // namespace

Image2D render_drr(const Volume3D& v, const Intrinsics& k, const RigidTransform& extrinsic,
                   const RenderConfig& cfg, const AttenuationModel& m) {
  const double step = cfg.step_mm > 0.0 ? cfg.step_mm : 0.5 * v.spacing.minCoeff();
  Image2D out = Image2D::zeros(k.image_width, k.image_height,
                               {k.pixel_spacing_u, k.pixel_spacing_v});

  const RigidTransform vol_from_src = invert(extrinsic);
  const Eigen::Vector3d src_vol = vol_from_src.translation;  // source at the origin
  const Eigen::Vector3d lo = v.bbox_min();
  const Eigen::Vector3d hi = v.bbox_max();

  for (int py = 0; py < k.image_height; ++py) {
    const double y = (py - k.v0) * k.pixel_spacing_v;
    for (int px = 0; px < k.image_width; ++px) {
      const double x = (px - k.u0) * k.pixel_spacing_u;
      Eigen::Vector3d dir_src(x, y, k.sid);
      dir_src.normalize();
      const Eigen::Vector3d dir = vol_from_src.rotation * dir_src;

      double t0 = 0.0, t1 = 0.0;
      if (!clip_ray_aabb(src_vol, dir, lo, hi, &t0, &t1) || t1 <= t0) continue;

      const int nsteps = std::max(1, static_cast<int>(std::ceil((t1 - t0) / step)));
      const double dt = (t1 - t0) / nsteps;
      double integral = 0.0;
      Eigen::Vector3d p = src_vol + (t0 + 0.5 * dt) * dir;
      const Eigen::Vector3d dp = dt * dir;
      for (int i = 0; i < nsteps; ++i) {
        integral += hu_to_mu(trilinear_sample(v, p), m);
        p += dp;
      }
      out.at(px, py) = integral * dt;
    }
  }
  return out;
}

Image2D simulate_fluoro(const Image2D& drr, const RenderConfig& cfg) {
  if (cfg.photons <= 0.0) throw InvalidConfig("photons must be > 0");
  Image2D out = drr;
  for (std::size_t i = 0; i < drr.pixels.size(); ++i) {
    SplitMix64 rng{cfg.rng_seed ^ (0x632be59bd9b4e019ULL * (static_cast<std::uint64_t>(i) + 1))};
    const double mean = cfg.photons * std::exp(-drr.pixels[i]);
    const double n = std::max(1.0, sample_poisson(mean, rng));
    out.pixels[i] = -std::log(n / cfg.photons);
  }
  return out;
}

}  // namespace fnav
