#pragma once

// Command-line front end: scene generation, single-case registration,
// manifest-driven sweeps and roadmap replay. Each command returns a process
// exit code: 0 success, 2 I/O, 3 matching, 4 optimization, 5 parse.

#include <string>
#include <vector>

#include "fnav/metrics.hpp"
#include "fnav/phantom.hpp"
#include "fnav/registration.hpp"

namespace fnav {

inline constexpr int kExitOk = 0;
inline constexpr int kExitIo = 2;
inline constexpr int kExitMatch = 3;
inline constexpr int kExitOptim = 4;
inline constexpr int kExitParse = 5;

/// One experiment case: a generated scene plus a registration mode. Parsed
/// from `key=value` tokens (manifest lines and generation spec files).
struct CaseSpec {
  std::string case_id = "case";
  RegistrationMode mode = RegistrationMode::Full;
  double angle_deg = 0.0;
  std::string axis = "angular";  // angular (y) or orbital (x)
  double depth_mm = kDefaultSceneDepthMm;
  double photons = 2000.0;
  std::uint64_t phantom_seed = 0;
  std::uint64_t noise_seed = 0;
  std::uint64_t reg_seed = 0;
  Eigen::Vector3d patient_shift = Eigen::Vector3d::Zero();  // mm, frame axes
  int fiducial_count = 19;
  bool flat_fiducials = false;  // single-layer (degenerate) subset
  Intrinsics k = default_intrinsics();
};

/// Parses `key=value` tokens into a CaseSpec. Throws ParseError on unknown
/// keys or malformed values. `fiducials=` accepts `N` or `N-flat`.
CaseSpec parse_case_tokens(const std::vector<std::string>& tokens);

/// Reads a generation spec file: one `key=value` per line, '#' comments.
CaseSpec load_case_spec(const std::string& path);

/// Reads a manifest: one case per line, `case_id key=value ...`.
std::vector<CaseSpec> load_manifest(const std::string& path);

/// Registration settings overridable from a `key=value` config file.
RegistrationConfig load_registration_config(const std::string& path);

/// Two-layer subset of size n (alternating layers) or a flat single-layer
/// subset of the bottom layer.
FiducialModel subset_fiducials(const FiducialModel& model, int n, bool flat);

/// Frame sweep pose for a case: rotation about the angular/orbital axis with
/// the frame center held at the case depth.
RigidTransform case_fg_pose(const CaseSpec& cs);

struct CaseOutcome {
  MetricsRow row;
  RegistrationResult result;
  bool executed = false;   // pipeline ran to a metrics row (success or not)
  std::string error;       // non-empty when the pipeline aborted
  int fail_code = 0;       // kExitMatch or kExitOptim when aborted
};

/// Detection -> matching -> run_mode -> metrics for one case. The intensity
/// target is fluoro minus the residual, and the fiducial spheres are masked
/// out of the registration volume; `truth` is the patient-to-source pose the
/// metrics are scored against. Registration failures are recorded as
/// unsuccessful rows, not errors.
CaseOutcome run_pipeline(const Volume3D& volume, const FiducialModel& model,
                         const TargetSet& targets, const Image2D& fluoro, const Image2D& residual,
                         const Intrinsics& k, const RigidTransform& truth,
                         const std::string& case_id, const RegistrationConfig& cfg);

/// Generates the case scene in memory and runs the pipeline. `assets` must
/// match the case's fiducial configuration.
CaseOutcome run_generated_case(const PhantomAssets& assets, const CaseSpec& cs,
                               const RegistrationConfig& cfg);

int cmd_phantom(const std::string& spec_path, const std::string& out_dir);
int cmd_register(const std::string& scene_dir, const std::string& mode,
                 const std::string& config_path, const std::string& out_dir);
int cmd_sweep(const std::string& manifest_path, const std::string& out_dir, int threads);
int cmd_roadmap(const std::string& scene_dir, const std::string& stream_csv,
                const std::string& out_dir, const std::string& truth_stream_csv);

}  // namespace fnav
