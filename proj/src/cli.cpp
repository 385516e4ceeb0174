#include "fnav/cli.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <thread>

#include "fnav/navigate.hpp"

namespace fnav {

namespace fs = std::filesystem;

namespace {

std::pair<std::string, std::string> split_kv(const std::string& token) {
  const auto eq = token.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ParseError("expected key=value, got '" + token + "'");
  }
  return {token.substr(0, eq), token.substr(eq + 1)};
}

double to_double(const std::string& s, const std::string& key) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ParseError("malformed value for " + key + ": '" + s + "'");
  }
}

std::uint64_t to_u64(const std::string& s, const std::string& key) {
  try {
    std::size_t pos = 0;
    const std::uint64_t v = std::stoull(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ParseError("malformed value for " + key + ": '" + s + "'");
  }
}

}  // namespace

CaseSpec parse_case_tokens(const std::vector<std::string>& tokens) {
  CaseSpec cs;
  for (const auto& token : tokens) {
    const auto [key, value] = split_kv(token);
    if (key == "mode") {
      cs.mode = registration_mode_from_string(value);
    } else if (key == "angle_deg") {
      cs.angle_deg = to_double(value, key);
    } else if (key == "axis") {
      if (value != "angular" && value != "orbital") {
        throw ParseError("axis must be angular or orbital, got '" + value + "'");
      }
      cs.axis = value;
    } else if (key == "depth") {
      cs.depth_mm = to_double(value, key);
    } else if (key == "photons") {
      cs.photons = to_double(value, key);
    } else if (key == "phantom_seed") {
      cs.phantom_seed = to_u64(value, key);
    } else if (key == "noise_seed") {
      cs.noise_seed = to_u64(value, key);
    } else if (key == "seed") {
      cs.reg_seed = to_u64(value, key);
    } else if (key == "shift_x") {
      cs.patient_shift.x() = to_double(value, key);
    } else if (key == "shift_y") {
      cs.patient_shift.y() = to_double(value, key);
    } else if (key == "shift_z") {
      cs.patient_shift.z() = to_double(value, key);
    } else if (key == "fiducials") {
      std::string n = value;
      cs.flat_fiducials = false;
      const auto dash = value.find("-flat");
      if (dash != std::string::npos) {
        n = value.substr(0, dash);
        cs.flat_fiducials = true;
      }
      cs.fiducial_count = static_cast<int>(to_u64(n, key));
    } else if (key == "detector_width") {
      cs.k.image_width = static_cast<int>(to_u64(value, key));
      cs.k.u0 = (cs.k.image_width - 1) / 2.0;
    } else if (key == "detector_height") {
      cs.k.image_height = static_cast<int>(to_u64(value, key));
      cs.k.v0 = (cs.k.image_height - 1) / 2.0;
    } else if (key == "detector_spacing") {
      cs.k.pixel_spacing_u = cs.k.pixel_spacing_v = to_double(value, key);
    } else if (key == "sid") {
      cs.k.sid = to_double(value, key);
    } else {
      throw ParseError("unknown case key: " + key);
    }
  }
  return cs;
}

CaseSpec load_case_spec(const std::string& path) {
  if (path.empty()) return CaseSpec{};
  std::ifstream f(path);
  if (!f) {
    throw fs::filesystem_error("cannot open", path,
                               std::make_error_code(std::errc::no_such_file_or_directory));
  }
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream is(line);
    std::string tok;
    while (is >> tok) tokens.push_back(tok);
  }
  return parse_case_tokens(tokens);
}

std::vector<CaseSpec> load_manifest(const std::string& path) {
  std::ifstream f(path);
  if (!f) {
    throw fs::filesystem_error("cannot open", path,
                               std::make_error_code(std::errc::no_such_file_or_directory));
  }
  std::vector<CaseSpec> cases;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream is(line);
    std::string case_id;
    is >> case_id;
    std::vector<std::string> tokens;
    std::string tok;
    while (is >> tok) tokens.push_back(tok);
    CaseSpec cs;
    try {
      cs = parse_case_tokens(tokens);
    } catch (const ParseError& e) {
      throw ParseError(path + " line " + std::to_string(lineno) + ": " + e.what());
    }
    cs.case_id = case_id;
    for (const auto& prev : cases) {
      if (prev.case_id == case_id) {
        throw ParseError(path + " line " + std::to_string(lineno) + ": duplicate case id " +
                         case_id);
      }
    }
    cases.push_back(cs);
  }
  return cases;
}

RegistrationConfig load_registration_config(const std::string& path) {
  RegistrationConfig cfg;
  if (path.empty()) return cfg;
  std::ifstream f(path);
  if (!f) {
    throw fs::filesystem_error("cannot open", path,
                               std::make_error_code(std::errc::no_such_file_or_directory));
  }
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream is(line);
    std::string tok;
    while (is >> tok) {
      const auto [key, value] = split_kv(tok);
      if (key == "mode") {
        cfg.mode = registration_mode_from_string(value);
      } else if (key == "coarse_factor") {
        cfg.coarse_factor = static_cast<int>(to_u64(value, key));
      } else if (key == "fine_factor") {
        cfg.fine_factor = static_cast<int>(to_u64(value, key));
      } else if (key == "coarse_budget") {
        cfg.coarse_budget = static_cast<int>(to_u64(value, key));
      } else if (key == "fine_budget") {
        cfg.fine_budget = static_cast<int>(to_u64(value, key));
      } else if (key == "coarse_rot_deg") {
        cfg.coarse_rot_bound_rad = to_double(value, key) * M_PI / 180.0;
      } else if (key == "coarse_trans_mm") {
        cfg.coarse_trans_bound_mm = to_double(value, key);
      } else if (key == "fine_rot_deg") {
        cfg.fine_rot_bound_rad = to_double(value, key) * M_PI / 180.0;
      } else if (key == "fine_trans_mm") {
        cfg.fine_trans_bound_mm = to_double(value, key);
      } else if (key == "render_step_mm") {
        cfg.render_step_mm = to_double(value, key);
      } else if (key == "seed") {
        cfg.seed = to_u64(value, key);
      } else if (key == "patch_radius") {
        cfg.similarity.patch_radius = static_cast<int>(to_u64(value, key));
      } else if (key == "patch_stride") {
        cfg.similarity.patch_stride = static_cast<int>(to_u64(value, key));
      } else {
        throw ParseError("unknown config key: " + key);
      }
    }
  }
  return cfg;
}

FiducialModel subset_fiducials(const FiducialModel& model, int n, bool flat) {
  std::vector<FiducialPoint> top, bottom;
  for (const auto& p : model.points) {
    (p.layer == FiducialLayer::Top ? top : bottom).push_back(p);
  }
  FiducialModel out;
  if (flat) {
    if (static_cast<int>(bottom.size()) < n) {
      throw InvalidConfig("not enough single-layer fiducials for the requested subset");
    }
    out.points.assign(bottom.begin(), bottom.begin() + n);
    return out;
  }
  std::size_t it = 0, ib = 0;
  while (static_cast<int>(out.points.size()) < n) {
    if (it < top.size()) out.points.push_back(top[it++]);
    if (static_cast<int>(out.points.size()) >= n) break;
    if (ib < bottom.size()) out.points.push_back(bottom[ib++]);
    if (it >= top.size() && ib >= bottom.size()) {
      throw InvalidConfig("not enough fiducials for the requested subset");
    }
  }
  return out;
}

RigidTransform case_fg_pose(const CaseSpec& cs) {
  const Eigen::Vector3d axis =
      cs.axis == "orbital" ? Eigen::Vector3d::UnitX() : Eigen::Vector3d::UnitY();
  return sweep_pose(axis, cs.angle_deg * M_PI / 180.0, cs.depth_mm);
}

CaseOutcome run_pipeline(const Volume3D& volume, const FiducialModel& model,
                         const TargetSet& targets, const Image2D& fluoro, const Image2D& residual,
                         const Intrinsics& k, const RigidTransform& truth,
                         const std::string& case_id, const RegistrationConfig& cfg) {
  CaseOutcome out;
  out.row.case_id = case_id;
  out.row.mode = to_string(cfg.mode);
  out.row.mtre = out.row.mpd = out.row.mrpd = 1e9;
  out.row.success = false;

  // Frame hardware is masked out of the CT and subtracted from the fluoro so
  // the intensity objective compares anatomy against anatomy.
  Volume3D reg_vol = volume;
  erase_fiducials(&reg_vol, model, 3.0);
  Image2D target = fluoro;
  if (residual.width == fluoro.width && residual.height == fluoro.height) {
    for (std::size_t i = 0; i < target.pixels.size(); ++i) {
      target.pixels[i] -= residual.pixels[i];
    }
  }

  RegistrationScene scene;
  scene.volume = &reg_vol;
  scene.fluoro = std::move(target);
  scene.k = k;
  scene.model = &model;
  scene.ransac.seed = cfg.seed;
  if (residual.width > 0) scene.blobs = detect_blobs_2d(residual, 3, 2000, 0.1);
  const Eigen::Vector3d center = 0.5 * (reg_vol.bbox_min() + reg_vol.bbox_max());
  scene.ap_init.translation = Eigen::Vector3d(0.0, 0.0, 0.7 * k.sid) - center;

  try {
    out.result = run_mode(scene, cfg);
  } catch (const MatchFailed& e) {
    out.error = e.what();
    out.fail_code = kExitMatch;
    return out;
  } catch (const ModeInputMissing& e) {
    out.error = e.what();
    out.fail_code = kExitMatch;
    return out;
  } catch (const NoConvergence& e) {
    out.error = e.what();
    out.fail_code = kExitOptim;
    return out;
  }

  out.executed = true;
  try {
    out.row.mtre = mtre(truth, out.result.extrinsic, targets);
    out.row.mpd = mpd(k, truth, out.result.extrinsic, targets);
    out.row.mrpd = mrpd(k, truth, out.result.extrinsic, targets);
    out.row.success = out.row.mpd < 5.0;
  } catch (const DepthNonPositive&) {
    // Estimate wild enough to put targets behind the source: failed case.
  }
  return out;
}

CaseOutcome run_generated_case(const PhantomAssets& assets, const CaseSpec& cs,
                               const RegistrationConfig& cfg) {
  const RigidTransform fg = case_fg_pose(cs);
  RigidTransform offset;
  offset.translation = cs.patient_shift;
  const Scene scene = make_scene(assets, fg, offset, cs.k, cs.photons, cs.noise_seed);
  RegistrationConfig c = cfg;
  c.mode = cs.mode;
  c.seed = cs.reg_seed;
  const RigidTransform truth = compose(fg, offset);
  return run_pipeline(assets.combined, assets.model, assets.targets, scene.fluoro, scene.residual,
                      cs.k, truth, cs.case_id, c);
}

namespace {

PhantomAssets make_case_assets(const CaseSpec& cs) {
  PhantomSpec spec;
  spec.seed = cs.phantom_seed;
  const FiducialModel full = make_fiducial_model(spec);
  if (cs.fiducial_count >= static_cast<int>(full.points.size()) && !cs.flat_fiducials) {
    return make_phantom_assets(spec, full);
  }
  return make_phantom_assets(spec, subset_fiducials(full, cs.fiducial_count, cs.flat_fiducials));
}

int io_guard(const std::function<int()>& body) {
  try {
    return body();
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return kExitParse;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  }
}

}  // namespace

int cmd_phantom(const std::string& spec_path, const std::string& out_dir) {
  return io_guard([&]() {
    const CaseSpec cs = load_case_spec(spec_path);
    const PhantomAssets assets = make_case_assets(cs);
    RigidTransform offset;
    offset.translation = cs.patient_shift;
    const Scene scene =
        make_scene(assets, case_fg_pose(cs), offset, cs.k, cs.photons, cs.noise_seed);
    try {
      save_scene(out_dir, assets, scene);
    } catch (const ParseError& e) {
      std::cerr << "i/o error: " << e.what() << "\n";
      return kExitIo;
    }
    std::cout << "scene " << out_dir << ": " << assets.model.points.size() << " fiducials, "
              << assets.targets.points.size() << " targets, " << scene.fluoro.width << "x"
              << scene.fluoro.height << " fluoro, " << scene.blobs_gt.size()
              << " in-field fiducials\n";
    return kExitOk;
  });
}

int cmd_register(const std::string& scene_dir, const std::string& mode,
                 const std::string& config_path, const std::string& out_dir) {
  RegistrationMode m;
  RegistrationConfig cfg;
  try {
    m = registration_mode_from_string(mode);
    cfg = load_registration_config(config_path);
  } catch (const std::runtime_error& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return kExitParse;
  }
  cfg.mode = m;

  for (const char* name : {"volume.vh", "volume.vraw", "fluoro.pgm", "fiducials.txt",
                           "targets.txt", "truth.txt"}) {
    if (!fs::exists(fs::path(scene_dir) / name)) {
      std::cerr << "missing scene file: " << name << "\n";
      return kExitIo;
    }
  }
  const bool have_residual = fs::exists(fs::path(scene_dir) / "residual.pgm");
  if (!have_residual && m != RegistrationMode::Naive) {
    std::cerr << "missing residual.pgm: fiducial matching input unavailable\n";
    return kExitMatch;
  }

  LoadedScene s;
  try {
    if (have_residual) {
      s = load_scene(scene_dir);
    } else {
      // Naive mode tolerates a missing residual: zero image, no subtraction.
      s.volume = load_volume((fs::path(scene_dir) / "volume").string());
      s.model = load_fiducial_model((fs::path(scene_dir) / "fiducials.txt").string());
      s.targets = load_targets((fs::path(scene_dir) / "targets.txt").string());
      s.fluoro = load_image((fs::path(scene_dir) / "fluoro.pgm").string());
      s.residual = Image2D::zeros(s.fluoro.width, s.fluoro.height, s.fluoro.pixel_spacing);
      std::ifstream tf(fs::path(scene_dir) / "truth.txt");
      std::string line;
      while (std::getline(tf, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream is(line);
        std::string key;
        is >> key;
        if (key == "fg_pose" || key == "patient_offset") {
          double v[12];
          for (int i = 0; i < 12; ++i) {
            if (!(is >> v[i])) throw ParseError("truth.txt: truncated " + key);
          }
          RigidTransform t;
          for (int r = 0; r < 3; ++r) {
            for (int c = 0; c < 3; ++c) t.rotation(r, c) = v[3 * r + c];
          }
          t.translation = Eigen::Vector3d(v[9], v[10], v[11]);
          t.rotation = orthonormalize(t.rotation);
          (key == "fg_pose" ? s.fg_pose : s.patient_offset) = t;
        } else if (key == "intrinsics") {
          is >> s.k.pixel_spacing_u >> s.k.pixel_spacing_v >> s.k.image_width >> s.k.image_height >>
              s.k.sid >> s.k.u0 >> s.k.v0;
        } else if (key == "photons") {
          is >> s.photons;
        }
      }
    }
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return kExitParse;
  }

  const RigidTransform truth = compose(s.fg_pose, s.patient_offset);
  const std::string case_id = fs::path(scene_dir).filename().string();
  CaseOutcome outcome;
  try {
    outcome = run_pipeline(s.volume, s.model, s.targets, s.fluoro, s.residual, s.k, truth, case_id,
                           cfg);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitOptim;
  }

  return io_guard([&]() {
    fs::create_directories(out_dir);
    save_metrics_csv({outcome.row}, (fs::path(out_dir) / "metrics.csv").string());
    if (outcome.executed) {
      save_registration_report(outcome.result, (fs::path(out_dir) / "report.json").string());
      save_registration_overlay(s.volume, s.fluoro, s.k, outcome.result, cfg,
                                (fs::path(out_dir) / "overlay.pgm").string());
      std::cout << case_id << " " << outcome.row.mode << ": mpd=" << outcome.row.mpd
                << " mm, success=" << (outcome.row.success ? "true" : "false") << "\n";
      return kExitOk;
    }
    std::cerr << "pipeline failed: " << outcome.error << "\n";
    return outcome.fail_code != 0 ? outcome.fail_code : kExitMatch;
  });
}

int cmd_sweep(const std::string& manifest_path, const std::string& out_dir, int threads) {
  return io_guard([&]() {
    const std::vector<CaseSpec> cases = load_manifest(manifest_path);
    fs::create_directories(out_dir);
    if (cases.empty()) {
      save_metrics_csv({}, (fs::path(out_dir) / "results.csv").string());
      std::cout << "0 cases\n";
      return kExitOk;
    }

    // Assets are deterministic per (seed, fiducial config); built once and
    // shared read-only across workers.
    std::map<std::tuple<std::uint64_t, int, bool>, PhantomAssets> assets;
    for (const auto& cs : cases) {
      const auto key = std::make_tuple(cs.phantom_seed, cs.fiducial_count, cs.flat_fiducials);
      if (!assets.count(key)) assets.emplace(key, make_case_assets(cs));
    }

    std::vector<CaseOutcome> outcomes(cases.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= cases.size()) return;
        const auto& cs = cases[i];
        const auto key = std::make_tuple(cs.phantom_seed, cs.fiducial_count, cs.flat_fiducials);
        outcomes[i] = run_generated_case(assets.at(key), cs, RegistrationConfig{});
      }
    };
    const int nthreads = std::max(1, threads);
    if (nthreads == 1) {
      worker();
    } else {
      std::vector<std::thread> pool;
      for (int i = 0; i < nthreads; ++i) pool.emplace_back(worker);
      for (auto& t : pool) t.join();
    }

    std::vector<MetricsRow> rows;
    for (const auto& o : outcomes) rows.push_back(o.row);
    std::sort(rows.begin(), rows.end(),
              [](const MetricsRow& a, const MetricsRow& b) { return a.case_id < b.case_id; });
    save_metrics_csv(rows, (fs::path(out_dir) / "results.csv").string());

    // Per-mode summary in the mean +/- std mPD and success-rate layout.
    std::map<std::string, std::vector<const MetricsRow*>> by_mode;
    for (const auto& r : rows) by_mode[r.mode].push_back(&r);
    std::printf("%-10s %4s %16s %6s\n", "mode", "n", "mPD(mm)", "SR");
    for (const auto& [mode, group] : by_mode) {
      double mean = 0.0, sr = 0.0;
      int valid = 0;
      for (const auto* r : group) {
        if (r->mpd < 1e8) {
          mean += r->mpd;
          ++valid;
        }
        sr += r->success ? 1.0 : 0.0;
      }
      mean = valid > 0 ? mean / valid : std::nan("");
      double var = 0.0;
      for (const auto* r : group) {
        if (r->mpd < 1e8) var += (r->mpd - mean) * (r->mpd - mean);
      }
      const double sd = valid > 1 ? std::sqrt(var / (valid - 1)) : 0.0;
      sr /= static_cast<double>(group.size());
      std::printf("%-10s %4zu %7.3f +- %5.3f %6.2f\n", mode.c_str(), group.size(), mean, sd, sr);
    }
    return kExitOk;
  });
}

int cmd_roadmap(const std::string& scene_dir, const std::string& stream_csv,
                const std::string& out_dir, const std::string& truth_stream_csv) {
  for (const char* name : {"volume.vh", "fluoro.pgm", "truth.txt"}) {
    if (!fs::exists(fs::path(scene_dir) / name)) {
      std::cerr << "missing scene file: " << name << "\n";
      return kExitIo;
    }
  }
  return io_guard([&]() {
    const LoadedScene s = load_scene(scene_dir);
    const std::vector<PoseStreamFrame> frames = load_pose_stream(stream_csv);
    const std::vector<PoseStreamFrame> truth =
        truth_stream_csv.empty() ? frames : load_pose_stream(truth_stream_csv);
    if (truth.size() != frames.size()) {
      throw ParseError("pose stream and truth stream differ in length");
    }
    fs::create_directories(out_dir);
    const ProjectionMatrix p_fg = build_projection(s.k, s.fg_pose);
    const RigidTransform t_mt_fg;  // tracker frame co-located with the fiducial frame
    const Eigen::Vector2d spacing(s.k.pixel_spacing_u, s.k.pixel_spacing_v);

    std::ofstream csv(fs::path(out_dir) / "roadmap.csv");
    if (!csv) throw ParseError("cannot open for writing: " + out_dir + "/roadmap.csv");
    csv << "# schema=1\nframe,t,euclid_mm,signed_x_mm,signed_y_mm,angle_deg\n";
    csv.precision(6);

    double fluoro_hi = s.fluoro.pixels.empty() ? 1.0 : s.fluoro.pixels[0];
    for (double v : s.fluoro.pixels) fluoro_hi = std::max(fluoro_hi, v);

    double sum_euclid = 0.0, sum_angle = 0.0;
    int scored = 0;
    for (std::size_t i = 0; i < frames.size(); ++i) {
      TrackedTool tracked;
      tracked.pose = frames[i].pose;
      TrackedTool gt_tool;
      gt_tool.pose = truth[i].pose;
      try {
        const RoadmapOverlay ov = tool_to_image(tracked, t_mt_fg, p_fg);
        const RoadmapOverlay gt = tool_to_image(gt_tool, t_mt_fg, p_fg);
        const TipAngleError e = score_roadmap(ov, gt.tip_px, gt.shaft_px, spacing);
        csv << i << "," << frames[i].t << "," << e.euclid_mm << "," << e.signed_x_mm << ","
            << e.signed_y_mm << "," << e.angle_deg << "\n";
        sum_euclid += e.euclid_mm;
        sum_angle += e.angle_deg;
        ++scored;
        if (i < 20) {
          Image2D frame_img = s.fluoro;
          draw_segment(frame_img, gt.shaft_px, gt.tip_px, fluoro_hi);
          draw_segment(frame_img, ov.shaft_px, ov.tip_px, 1.25 * fluoro_hi);
          char name[32];
          std::snprintf(name, sizeof(name), "overlay_%04zu.pgm", i);
          save_image(frame_img, (fs::path(out_dir) / name).string());
        }
      } catch (const DepthNonPositive&) {
        csv << i << "," << frames[i].t << ",nan,nan,nan,nan\n";
      }
    }
    if (scored > 0) {
      std::cout << scored << " frames, mean tip error " << sum_euclid / scored
                << " mm, mean angle error " << sum_angle / scored << " deg\n";
    } else {
      std::cout << "no frames scored\n";
    }
    return kExitOk;
  });
}

}  // namespace fnav
