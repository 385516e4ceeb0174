#pragma once

// Digitally reconstructed radiographs by ray casting, plus the photon-noise
// fluoroscopy simulator. DRRs are log-domain line-integral images: pixel
// value = integral of attenuation along the source-to-pixel ray. Noise is
// applied in intensity domain (Poisson photon counts) and re-logged; this
// choice is recorded in the emitted image metadata by callers.

#include <cstdint>

#include "fnav/geometry.hpp"
#include "fnav/imaging.hpp"

namespace fnav {

struct AttenuationModel {
  double mu_water = 0.02;   // 1/mm
  double hu_floor = -1000;  // HU at/below which attenuation is zero
};

struct RenderConfig {
  double step_mm = 0.0;        // <= 0 selects 0.5 * min(volume spacing)
  double photons = 2000.0;     // expected photons per detector pixel
  std::uint64_t rng_seed = 0;
};

/// mu = max(0, mu_water * (1 + hu/1000)); values at/below hu_floor map to 0.
inline double hu_to_mu(double hu, const AttenuationModel& m) {
  if (hu <= m.hu_floor) return 0.0;
  const double mu = m.mu_water * (1.0 + hu / 1000.0);
  return mu > 0.0 ? mu : 0.0;
}

/// Casts one ray per detector pixel from the source through the pixel center
/// and composites the attenuation line integral (midpoint rule) over the
/// ray/volume intersection. `extrinsic` maps volume-frame points into the
/// source frame. Pixels whose ray misses the volume get 0.
Image2D render_drr(const Volume3D& v, const Intrinsics& k, const RigidTransform& extrinsic,
                   const RenderConfig& cfg, const AttenuationModel& m);

/// Poisson photon-count simulation of a log-domain DRR:
/// n ~ Poisson(photons * exp(-L)), output = -ln(max(n,1)/photons).
/// Deterministic given rng_seed; each pixel draws from its own derived
/// stream, so the result is independent of evaluation order.
Image2D simulate_fluoro(const Image2D& drr, const RenderConfig& cfg);

}  // namespace fnav
