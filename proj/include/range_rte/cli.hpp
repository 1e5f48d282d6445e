#pragma once

// Command implementations behind the `range_rte` executable: CSV logs, JSON
// configuration, report emission and exit-code mapping. Each command writes
// its outputs atomically and returns a process exit code.

#include <Eigen/Core>

#include <json.hpp>

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "range_rte/core_geometry.hpp"
#include "range_rte/error.hpp"
#include "range_rte/estimators.hpp"
#include "range_rte/fisher.hpp"
#include "range_rte/measurement.hpp"
#include "range_rte/simulation.hpp"

namespace range_rte::cli {

using json = nlohmann::json;
namespace fs = std::filesystem;

inline constexpr int kExitOk = 0;
inline constexpr int kExitParse = 2;
inline constexpr int kExitSingular = 3;
inline constexpr int kExitSolver = 4;

inline int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kParse:
    case ErrorCode::kConfig:
      return kExitParse;
    case ErrorCode::kNoData:
    case ErrorCode::kInsufficientData:
    case ErrorCode::kSingularGeometry:
    case ErrorCode::kOutOfRange:
      return kExitSingular;
    case ErrorCode::kDegenerateSolution:
    case ErrorCode::kHeadingUndefined:
    case ErrorCode::kSolverFailure:
      return kExitSolver;
  }
  return kExitSolver;
}

// ---------------------------------------------------------------------------
// Files

/// Shortest text that parses back to the same double; "nan"/"inf" otherwise.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kParse, "cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Writes to a sibling temporary file and renames it over `path`.
inline void write_atomic(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::kConfig, "cannot write '" + tmp.string() + "'");
    out << content;
    out.flush();
    if (!out) throw Error(ErrorCode::kConfig, "write failed for '" + tmp.string() + "'");
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw Error(ErrorCode::kConfig, "cannot rename onto '" + path.string() + "'");
  }
}

// ---------------------------------------------------------------------------
// CSV logs

namespace detail {

inline std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos
                                                                     : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

inline double parse_field(std::string_view field, const std::string& where) {
  while (!field.empty() && field.front() == ' ') field.remove_prefix(1);
  while (!field.empty() && field.back() == ' ') field.remove_suffix(1);
  double v = 0.0;
  const auto res = std::from_chars(field.data(), field.data() + field.size(), v);
  if (res.ec != std::errc() || res.ptr != field.data() + field.size() || !std::isfinite(v)) {
    throw Error(ErrorCode::kParse, where + ": bad number '" + std::string(field) + "'");
  }
  return v;
}

/// Rows of a numeric CSV with an exact header; blank lines are skipped.
inline std::vector<std::vector<double>> read_numeric_csv(const fs::path& path,
                                                         std::string_view header) {
  const std::string text = read_file(path);
  std::vector<std::vector<double>> rows;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  bool seen_header = false;
  const std::size_t ncols = split_fields(header).size();
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(lineno);
    if (!seen_header) {
      if (line != header) {
        throw Error(ErrorCode::kParse,
                    where + ": expected header '" + std::string(header) + "'");
      }
      seen_header = true;
      continue;
    }
    const auto fields = split_fields(line);
    if (fields.size() != ncols) {
      throw Error(ErrorCode::kParse, where + ": expected " + std::to_string(ncols) + " fields");
    }
    std::vector<double> row;
    row.reserve(ncols);
    for (auto f : fields) row.push_back(parse_field(f, where));
    rows.push_back(std::move(row));
  }
  if (!seen_header) throw Error(ErrorCode::kParse, path.string() + ": empty file");
  return rows;
}

}  // namespace detail

inline constexpr std::string_view kOdometryHeader = "t,px,py,pz,qx,qy,qz,qw";
inline constexpr std::string_view kRangeHeader = "t,d";

/// Odometry log: seconds, meters, scalar-last quaternion. Timestamps must
/// increase strictly.
inline std::vector<Pose> read_odometry_csv(const fs::path& path) {
  const auto rows = detail::read_numeric_csv(path, kOdometryHeader);
  std::vector<Pose> out;
  out.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    Pose p;
    p.t = r[0];
    p.p = Vec3(r[1], r[2], r[3]);
    p.q = Quat(r[7], r[4], r[5], r[6]);
    const double n = p.q.norm();
    if (std::abs(n - 1.0) > 1e-6) {
      throw Error(ErrorCode::kParse, path.string() + ": row " + std::to_string(i + 1) +
                                         " quaternion is not unit length");
    }
    if (std::abs(n - 1.0) > 1e-12) p.q.normalize();
    if (!out.empty() && !(p.t > out.back().t)) {
      throw Error(ErrorCode::kParse, path.string() + ": timestamps not strictly increasing");
    }
    out.push_back(p);
  }
  return out;
}

inline std::vector<RangeSample> read_ranges_csv(const fs::path& path) {
  const auto rows = detail::read_numeric_csv(path, kRangeHeader);
  std::vector<RangeSample> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(RangeSample{r[0], r[1]});
  return out;
}

inline std::string odometry_csv(const std::vector<Pose>& poses) {
  std::string s(kOdometryHeader);
  s += '\n';
  for (const Pose& p : poses) {
    const double v[8] = {p.t, p.p.x(), p.p.y(), p.p.z(), p.q.x(), p.q.y(), p.q.z(), p.q.w()};
    for (int i = 0; i < 8; ++i) {
      if (i) s += ',';
      s += format_double(v[i]);
    }
    s += '\n';
  }
  return s;
}

inline std::string ranges_csv(const std::vector<RangeSample>& ranges) {
  std::string s(kRangeHeader);
  s += '\n';
  for (const RangeSample& r : ranges) s += format_double(r.t) + ',' + format_double(r.d) + '\n';
  return s;
}

// ---------------------------------------------------------------------------
// Configuration

struct OutlierConfig {
  bool enabled = true;
  std::size_t window = 20;
  double threshold_m2 = 0.005;
  OutlierMode mode = OutlierMode::kAbsolute;
};

struct ExcitationConfig {
  bool enabled = true;
  double var_threshold_m2 = 0.05;
  std::size_t n = 100;
};

struct EmitLogsConfig {
  std::size_t trial = 0;
  std::string dir = "logs";
};

struct RunConfig {
  ScenarioConfig scenario;
  bool d0_given = false;  // "d0_m" present; for `estimate` it is the measured d0
  std::vector<Estimator> estimators{Estimator::kQcqp};
  std::vector<json> sweep;
  OutlierConfig outlier;
  ExcitationConfig excitation;
  double kappa_threshold = kDefaultKappaThreshold;
  double sdp_tol = 1e-10;
  int random_restarts = 6;
  std::optional<std::uint64_t> restart_seed;
  bool record_timing = false;
  std::optional<EmitLogsConfig> emit_logs;
  std::string scenario_kind = "random";
  std::optional<Transform4DoF> theta;  // fim evaluation point
  std::optional<Transform4DoF> truth;  // reference for estimate reports
  std::size_t geometric_det_max_samples = 40;
  std::optional<std::string> odom_a, odom_b, ranges;
  json raw = json::object();

  EstimatorOptions estimator_options() const {
    EstimatorOptions eo;
    eo.sdp.tol = sdp_tol;
    eo.random_restarts = random_restarts;
    eo.singularity.kappa_threshold = kappa_threshold;
    if (restart_seed) eo.restart_seed = *restart_seed;
    return eo;
  }
};

namespace detail {

inline void reject_unknown(const json& obj, const std::set<std::string>& allowed,
                           const std::string& where) {
  if (!obj.is_object()) throw Error(ErrorCode::kConfig, where + ": expected an object");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (!allowed.count(it.key())) {
      throw Error(ErrorCode::kConfig, where + ": unknown key '" + it.key() + "'");
    }
  }
}

inline Vec3 vec3_from(const json& j, const std::string& key) {
  if (!j.is_array() || j.size() != 3) {
    throw Error(ErrorCode::kConfig, key + ": expected an array of 3 numbers");
  }
  return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

inline json vec3_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

inline json transform_json(const Transform4DoF& tf) {
  return json{{"t_m", vec3_json(tf.t)}, {"theta_rad", tf.theta}};
}

inline Transform4DoF transform_from(const json& j, const std::string& key) {
  reject_unknown(j, {"t_m", "theta_rad"}, key);
  if (!j.contains("t_m") || !j.contains("theta_rad")) {
    throw Error(ErrorCode::kConfig, key + ": needs t_m and theta_rad");
  }
  Transform4DoF tf;
  tf.t = vec3_from(j.at("t_m"), key + ".t_m");
  tf.theta = j.at("theta_rad").get<double>();
  if (!tf.is_finite()) throw Error(ErrorCode::kConfig, key + ": non-finite value");
  return tf;
}

inline std::size_t count_from(const json& j, const std::string& key) {
  if (!j.is_number_integer() || j.get<std::int64_t>() < 0) {
    throw Error(ErrorCode::kConfig, key + ": expected a nonnegative integer");
  }
  return j.get<std::size_t>();
}

inline const std::set<std::string>& scenario_keys() {
  static const std::set<std::string> keys{"d0_m",      "D_m",           "n_poses",
                                          "sigma_r_m", "sigma_o_m",     "trials",
                                          "use_d0",    "lever_arm_a_m", "lever_arm_b_m"};
  return keys;
}

inline void apply_scenario_keys(const json& j, ScenarioConfig& sc) {
  if (j.contains("d0_m")) sc.d0 = j.at("d0_m").get<double>();
  if (j.contains("D_m")) sc.D = j.at("D_m").get<double>();
  if (j.contains("n_poses")) sc.n_poses = count_from(j.at("n_poses"), "n_poses");
  if (j.contains("sigma_r_m")) sc.sigma_r = j.at("sigma_r_m").get<double>();
  if (j.contains("sigma_o_m")) sc.sigma_o = j.at("sigma_o_m").get<double>();
  if (j.contains("trials")) sc.trials = count_from(j.at("trials"), "trials");
  if (j.contains("use_d0")) sc.use_d0 = j.at("use_d0").get<bool>();
  if (j.contains("lever_arm_a_m")) sc.arm_a.r = vec3_from(j.at("lever_arm_a_m"), "lever_arm_a_m");
  if (j.contains("lever_arm_b_m")) sc.arm_b.r = vec3_from(j.at("lever_arm_b_m"), "lever_arm_b_m");
}

inline json scenario_json(const ScenarioConfig& sc) {
  return json{{"d0_m", sc.d0},
              {"D_m", sc.D},
              {"n_poses", sc.n_poses},
              {"sigma_r_m", sc.sigma_r},
              {"sigma_o_m", sc.sigma_o},
              {"trials", sc.trials},
              {"use_d0", sc.use_d0},
              {"lever_arm_a_m", vec3_json(sc.arm_a.r)},
              {"lever_arm_b_m", vec3_json(sc.arm_b.r)}};
}

inline DriftConfig parse_drift(const json& j) {
  reject_unknown(j,
                 {"sigma_t_m_per_sqrt_s", "sigma_theta_rad_per_sqrt_s",
                  "sigma_theta_deg_per_sqrt_s", "duration_s", "window", "stride", "rate_hz",
                  "pivot"},
                 "drift");
  DriftConfig d;
  if (j.contains("sigma_t_m_per_sqrt_s")) d.sigma_t = j.at("sigma_t_m_per_sqrt_s").get<double>();
  const bool rad = j.contains("sigma_theta_rad_per_sqrt_s");
  const bool deg = j.contains("sigma_theta_deg_per_sqrt_s");
  if (rad && deg) {
    throw Error(ErrorCode::kConfig, "drift: give sigma_theta in radians or degrees, not both");
  }
  if (rad) d.sigma_theta = j.at("sigma_theta_rad_per_sqrt_s").get<double>();
  if (deg) d.sigma_theta = j.at("sigma_theta_deg_per_sqrt_s").get<double>() * std::numbers::pi / 180.0;
  if (j.contains("duration_s")) d.duration = j.at("duration_s").get<double>();
  if (j.contains("window")) d.window = count_from(j.at("window"), "drift.window");
  if (j.contains("stride")) d.stride = count_from(j.at("stride"), "drift.stride");
  if (j.contains("rate_hz")) d.rate_hz = j.at("rate_hz").get<double>();
  if (j.contains("pivot")) d.pivot = parse_drift_pivot(j.at("pivot").get<std::string>());
  return d;
}

inline json drift_json(const DriftConfig& d) {
  return json{{"sigma_t_m_per_sqrt_s", d.sigma_t},
              {"sigma_theta_rad_per_sqrt_s", d.sigma_theta},
              {"duration_s", d.duration},
              {"window", d.window},
              {"stride", d.stride},
              {"rate_hz", d.rate_hz},
              {"pivot", to_string(d.pivot)}};
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace detail

/// Parses and validates a configuration object. Unknown keys are rejected.
inline RunConfig parse_config(const json& j) {
  using detail::count_from;
  std::set<std::string> allowed = detail::scenario_keys();
  allowed.insert({"seed", "estimator", "estimators", "sweep", "drift", "outlier", "excitation",
                  "kappa_threshold", "sdp_tol", "random_restarts", "restart_seed",
                  "record_timing", "emit_logs", "scenario_kind", "theta", "truth",
                  "geometric_det_max_samples", "odom_a", "odom_b", "ranges"});
  detail::reject_unknown(j, allowed, "config");
  RunConfig cfg;
  cfg.raw = j;
  try {
    detail::apply_scenario_keys(j, cfg.scenario);
    cfg.d0_given = j.contains("d0_m");
    if (j.contains("seed")) cfg.scenario.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("estimator") && j.contains("estimators")) {
      throw Error(ErrorCode::kConfig, "config: give estimator or estimators, not both");
    }
    if (j.contains("estimator")) {
      cfg.estimators = {parse_estimator(j.at("estimator").get<std::string>())};
    }
    if (j.contains("estimators")) {
      cfg.estimators.clear();
      for (const auto& e : j.at("estimators")) {
        cfg.estimators.push_back(parse_estimator(e.get<std::string>()));
      }
      if (cfg.estimators.empty()) throw Error(ErrorCode::kConfig, "estimators: empty list");
    }
    if (j.contains("sweep")) {
      const auto& sw = j.at("sweep");
      if (!sw.is_array()) throw Error(ErrorCode::kConfig, "sweep: expected an array");
      for (const auto& entry : sw) {
        detail::reject_unknown(entry, detail::scenario_keys(), "sweep entry");
        ScenarioConfig probe = cfg.scenario;
        detail::apply_scenario_keys(entry, probe);
        probe.validate();
        cfg.sweep.push_back(entry);
      }
    }
    if (j.contains("drift")) cfg.scenario.drift = detail::parse_drift(j.at("drift"));
    if (j.contains("outlier")) {
      const auto& o = j.at("outlier");
      detail::reject_unknown(o, {"enabled", "window", "threshold_m2", "mode"}, "outlier");
      if (o.contains("enabled")) cfg.outlier.enabled = o.at("enabled").get<bool>();
      if (o.contains("window")) cfg.outlier.window = count_from(o.at("window"), "outlier.window");
      if (o.contains("threshold_m2")) cfg.outlier.threshold_m2 = o.at("threshold_m2").get<double>();
      if (o.contains("mode")) {
        const auto m = o.at("mode").get<std::string>();
        if (m == "absolute") {
          cfg.outlier.mode = OutlierMode::kAbsolute;
        } else if (m == "increase") {
          cfg.outlier.mode = OutlierMode::kIncrease;
        } else {
          throw Error(ErrorCode::kConfig, "outlier.mode: expected absolute or increase");
        }
      }
      if (cfg.outlier.window < 2 || !(cfg.outlier.threshold_m2 > 0.0)) {
        throw Error(ErrorCode::kConfig, "outlier: window >= 2 and threshold_m2 > 0 required");
      }
    }
    if (j.contains("excitation")) {
      const auto& e = j.at("excitation");
      detail::reject_unknown(e, {"enabled", "var_threshold_m2", "n"}, "excitation");
      if (e.contains("enabled")) cfg.excitation.enabled = e.at("enabled").get<bool>();
      if (e.contains("var_threshold_m2")) {
        cfg.excitation.var_threshold_m2 = e.at("var_threshold_m2").get<double>();
      }
      if (e.contains("n")) cfg.excitation.n = count_from(e.at("n"), "excitation.n");
      if (cfg.excitation.n < 2 || !(cfg.excitation.var_threshold_m2 >= 0.0)) {
        throw Error(ErrorCode::kConfig, "excitation: n >= 2 and var_threshold_m2 >= 0 required");
      }
    }
    if (j.contains("kappa_threshold")) cfg.kappa_threshold = j.at("kappa_threshold").get<double>();
    if (!(cfg.kappa_threshold > 1.0)) {
      throw Error(ErrorCode::kConfig, "kappa_threshold must exceed 1");
    }
    if (j.contains("sdp_tol")) cfg.sdp_tol = j.at("sdp_tol").get<double>();
    if (!(cfg.sdp_tol > 0.0)) throw Error(ErrorCode::kConfig, "sdp_tol must be positive");
    if (j.contains("random_restarts")) {
      cfg.random_restarts = static_cast<int>(count_from(j.at("random_restarts"), "random_restarts"));
    }
    if (j.contains("restart_seed")) cfg.restart_seed = j.at("restart_seed").get<std::uint64_t>();
    if (j.contains("record_timing")) cfg.record_timing = j.at("record_timing").get<bool>();
    if (j.contains("emit_logs")) {
      const auto& e = j.at("emit_logs");
      detail::reject_unknown(e, {"trial", "dir"}, "emit_logs");
      EmitLogsConfig el;
      if (e.contains("trial")) el.trial = count_from(e.at("trial"), "emit_logs.trial");
      if (e.contains("dir")) el.dir = e.at("dir").get<std::string>();
      cfg.emit_logs = el;
    }
    if (j.contains("scenario_kind")) {
      cfg.scenario_kind = j.at("scenario_kind").get<std::string>();
      if (cfg.scenario_kind != "random") parse_singular_kind(cfg.scenario_kind);
    }
    if (j.contains("theta")) cfg.theta = detail::transform_from(j.at("theta"), "theta");
    if (j.contains("truth")) cfg.truth = detail::transform_from(j.at("truth"), "truth");
    if (j.contains("geometric_det_max_samples")) {
      cfg.geometric_det_max_samples =
          count_from(j.at("geometric_det_max_samples"), "geometric_det_max_samples");
    }
    if (j.contains("odom_a")) cfg.odom_a = j.at("odom_a").get<std::string>();
    if (j.contains("odom_b")) cfg.odom_b = j.at("odom_b").get<std::string>();
    if (j.contains("ranges")) cfg.ranges = j.at("ranges").get<std::string>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kConfig, std::string("config: ") + e.what());
  }
  cfg.scenario.validate();
  return cfg;
}

inline RunConfig load_config(const std::string& path) {
  if (path.empty()) return parse_config(json::object());
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParse, path + ": " + e.what());
  }
  return parse_config(j);
}

/// 64-bit FNV-1a of the canonical (key-sorted, compact) configuration.
inline std::string config_hash(const json& raw) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(detail::fnv1a64(raw.dump())));
  return buf;
}

// ---------------------------------------------------------------------------
// Commands

struct CommandArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> estimator;
  std::string out = ".";
  std::optional<std::string> odom_a, odom_b, ranges;
  bool timing = false;
};

namespace detail {

inline RunConfig resolve(const CommandArgs& args) {
  RunConfig cfg = load_config(args.config);
  if (args.seed) cfg.scenario.seed = *args.seed;
  if (args.estimator) cfg.estimators = {parse_estimator(*args.estimator)};
  if (args.timing) cfg.record_timing = true;
  if (args.odom_a) cfg.odom_a = args.odom_a;
  if (args.odom_b) cfg.odom_b = args.odom_b;
  if (args.ranges) cfg.ranges = args.ranges;
  return cfg;
}

inline json header_json(const char* command, const RunConfig& cfg) {
  return json{{"command", command},
              {"config_hash", config_hash(cfg.raw)},
              {"seed", cfg.scenario.seed}};
}

inline json flags_json(const SingularityFlags& f) {
  return json{{"configuration_singular", f.configuration_singular},
              {"kappa", f.kappa},
              {"kappa_threshold", f.kappa_threshold},
              {"unobservable",
               {{"t_x", f.per_param_unobservable[0]},
                {"t_y", f.per_param_unobservable[1]},
                {"t_z", f.per_param_unobservable[2]},
                {"theta", f.per_param_unobservable[3]}}}};
}

inline json std_errors_json(const std::optional<Vec4>& se) {
  if (!se) return nullptr;
  return json{{"t_m", json::array({(*se)(0), (*se)(1), (*se)(2)})}, {"theta_rad", (*se)(3)}};
}

inline json intervals_json(const ConfidenceReport& ci) {
  if (!ci.intervals) return nullptr;
  static const char* names[4] = {"t_x", "t_y", "t_z", "theta"};
  json out = json::object();
  for (std::size_t i = 0; i < 4; ++i) {
    out[names[i]] = json::array({(*ci.intervals)[i].lo, (*ci.intervals)[i].hi});
  }
  return out;
}

inline json matrix_json(const Mat4& m) {
  json out = json::array();
  for (int r = 0; r < 4; ++r) {
    out.push_back(json::array({m(r, 0), m(r, 1), m(r, 2), m(r, 3)}));
  }
  return out;
}

inline json solver_json(const SolverInfo& s, bool timing) {
  json j{{"method", s.method},
         {"status", s.status},
         {"converged", s.converged},
         {"iterations", s.iterations},
         {"final_cost", s.final_cost},
         {"sdp_cost", s.sdp_cost},
         {"duality_gap", s.duality_gap},
         {"rank", s.rank},
         {"eig_ratio", s.eig_ratio},
         {"heading_renorm_residual", s.heading_renorm_residual},
         {"restarts", s.restarts}};
  if (timing) j["wall_ms"] = s.wall_ms;
  return j;
}

inline fs::path out_path(const CommandArgs& args, const std::string& name) {
  return fs::path(args.out) / name;
}

inline std::string dump(const json& j) { return j.dump(2) + "\n"; }

struct LoadedLogs {
  std::vector<Pose> odom_a, odom_b;
  std::vector<RangeSample> ranges;
};

inline LoadedLogs load_logs(const RunConfig& cfg) {
  if (!cfg.odom_a || !cfg.odom_b || !cfg.ranges) {
    throw Error(ErrorCode::kConfig, "odom_a, odom_b and ranges logs are required");
  }
  LoadedLogs logs;
  logs.odom_a = read_odometry_csv(*cfg.odom_a);
  logs.odom_b = read_odometry_csv(*cfg.odom_b);
  logs.ranges = read_ranges_csv(*cfg.ranges);
  return logs;
}

template <typename Fn>
int guarded(std::ostream& err, Fn&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    err << "error (" << to_string(e.code()) << "): " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const json::exception& e) {
    err << "error (config_error): " << e.what() << "\n";
    return kExitParse;
  } catch (const fs::filesystem_error& e) {
    err << "error (io): " << e.what() << "\n";
    return kExitParse;
  }
}

}  // namespace detail

/// Logs -> outlier rejection -> synchronization -> excitation gate ->
/// estimate -> report.json. The report is written for exit codes 0, 3 and 4
/// once the inputs have parsed.
inline int cmd_estimate(const CommandArgs& args, std::ostream& err = std::cerr) {
  return detail::guarded(err, [&]() -> int {
    const RunConfig cfg = detail::resolve(args);
    const auto logs = detail::load_logs(cfg);
    const Estimator est = cfg.estimators.front();

    json rep = detail::header_json("estimate", cfg);
    rep["estimator"] = to_string(est);

    std::vector<RangeSample> ranges = logs.ranges;
    std::size_t rejected = 0;
    if (cfg.outlier.enabled) {
      auto filtered = sliding_outlier_filter(ranges, cfg.outlier.window,
                                             cfg.outlier.threshold_m2, cfg.outlier.mode);
      rejected = filtered.rejected;
      ranges = std::move(filtered.accepted);
    }
    IngestOptions io;
    io.sigma_r = std::max(cfg.scenario.sigma_r, kMinSigmaR);
    if (cfg.d0_given) io.d0 = cfg.scenario.d0;
    std::size_t dropped = 0;
    SyncedDataset ds;
    int code = kExitOk;
    std::string error_message;
    try {
      auto ing = ingest_logs(logs.odom_a, logs.odom_b, ranges, cfg.scenario.arm_a,
                             cfg.scenario.arm_b, io);
      dropped = ing.dropped;
      ds = std::move(ing.dataset);
      ds.validate();
    } catch (const Error& e) {
      if (e.code() == ErrorCode::kConfig) throw;
      code = exit_code_for(e.code());
      error_message = e.what();
    }
    rep["counts"] = {{"ranges_in", logs.ranges.size()},
                     {"rejected_outliers", rejected},
                     {"dropped_unsynchronized", dropped},
                     {"used", ds.size()}};

    if (code == kExitOk) {
      bool excited = true;
      if (cfg.excitation.enabled) {
        std::vector<Vec3> pa, pb;
        for (const auto& s : ds.samples) {
          pa.push_back(s.pa);
          pb.push_back(s.pb);
        }
        excited = motion_excitation_check(pa, pb, cfg.excitation.var_threshold_m2,
                                          cfg.excitation.n);
      }
      rep["excitation"] = {{"enabled", cfg.excitation.enabled},
                           {"passed", excited},
                           {"var_threshold_m2", cfg.excitation.var_threshold_m2},
                           {"n", cfg.excitation.n}};
      try {
        const EstimatorOptions eo = cfg.estimator_options();
        const EstimateReport er = run_estimator(est, ds, eo);
        rep["theta_hat"] = detail::transform_json(er.theta_hat);
        rep["std_errors"] = detail::std_errors_json(er.std_errors);
        rep["kappa"] = er.kappa;
        rep["flags"] = detail::flags_json(er.flags);
        rep["confidence_intervals_95"] = detail::intervals_json(
            confidence_intervals(er.theta_hat, er.fim.F, eo.singularity));
        rep["solver"] = detail::solver_json(er.solver, cfg.record_timing);
        if (cfg.truth) {
          rep["truth"] = detail::transform_json(*cfg.truth);
          rep["error_vs_truth"] = {
              {"e_t_m", (er.theta_hat.t - cfg.truth->t).norm()},
              {"e_theta_rad", std::abs(wrap_angle(er.theta_hat.theta - cfg.truth->theta))}};
        }
        if (!excited || er.flags.configuration_singular) code = kExitSingular;
      } catch (const Error& e) {
        if (e.code() == ErrorCode::kConfig) throw;
        code = excited ? exit_code_for(e.code()) : kExitSingular;
        error_message = e.what();
        // With a reference transform the flags can still be reported.
        if (cfg.truth && ds.size() > 0) {
          const auto f = fim(*cfg.truth, ds);
          rep["flags"] = detail::flags_json(
              singularity_report(f.F, cfg.estimator_options().singularity));
        }
      }
      if (!excited && error_message.empty()) error_message = "motion excitation check failed";
    }
    if (!error_message.empty()) rep["error"] = error_message;
    rep["exit_code"] = code;
    write_atomic(detail::out_path(args, "report.json"), detail::dump(rep));
    if (code != kExitOk) {
      err << "estimate: " << (error_message.empty() ? "singular configuration" : error_message)
          << "\n";
    }
    return code;
  });
}

namespace detail {

inline json stats_json(const ErrorStats& st, bool timing) {
  json j{{"trials", st.trials.size()},
         {"failures", st.failures},
         {"rmse_t_m", st.rmse_t},
         {"rmse_theta_rad", st.rmse_theta},
         {"mse_t_m2", st.mse_t},
         {"mse_theta_rad2", st.mse_theta},
         {"crlb_t_mean_m2", st.crlb_t_mean},
         {"crlb_theta_mean_rad2", st.crlb_theta_mean},
         {"mse_over_crlb_t", st.mse_t / st.crlb_t_mean},
         {"mse_over_crlb_theta", st.mse_theta / st.crlb_theta_mean}};
  if (timing) j["solve_ms_mean"] = st.solve_ms_mean;
  return j;
}

}  // namespace detail

inline constexpr std::string_view kResultsHeader =
    "block,estimator,trial,e_t,e_theta,crlb_t,crlb_theta,solve_ms,status";

/// Monte-Carlo sweep -> results.csv (one row per trial) + summary.json (one
/// block per sweep entry). solve_ms is left empty unless timing is enabled,
/// so the CSV is byte-identical for a given config and seed.
inline int cmd_simulate(const CommandArgs& args, std::ostream& err = std::cerr) {
  return detail::guarded(err, [&]() -> int {
    const RunConfig cfg = detail::resolve(args);
    std::vector<ScenarioConfig> blocks;
    if (cfg.sweep.empty()) {
      blocks.push_back(cfg.scenario);
    } else {
      for (const auto& entry : cfg.sweep) {
        ScenarioConfig sc = cfg.scenario;
        detail::apply_scenario_keys(entry, sc);
        sc.validate();
        blocks.push_back(sc);
      }
    }
    const EstimatorOptions eo = cfg.estimator_options();
    std::string csv(kResultsHeader);
    csv += '\n';
    json summary = detail::header_json("simulate", cfg);
    summary["estimators"] = json::array();
    for (Estimator e : cfg.estimators) summary["estimators"].push_back(to_string(e));
    summary["blocks"] = json::array();
    std::optional<TrialResult> emitted;
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      json block{{"index", b}, {"scenario", detail::scenario_json(blocks[b])}};
      block["results"] = json::object();
      for (Estimator e : cfg.estimators) {
        const ErrorStats st = monte_carlo_run(blocks[b], e, eo);
        for (const auto& tr : st.trials) {
          csv += std::to_string(b) + ',' + to_string(e) + ',' + std::to_string(tr.trial) + ',' +
                 format_double(tr.e_t) + ',' + format_double(tr.e_theta) + ',' +
                 format_double(tr.crlb_t) + ',' + format_double(tr.crlb_theta) + ',' +
                 (cfg.record_timing ? format_double(tr.solve_ms) : std::string()) + ',' +
                 (tr.status.empty() ? std::string("unknown") : tr.status) + '\n';
        }
        block["results"][to_string(e)] = detail::stats_json(st, cfg.record_timing);
        if (cfg.emit_logs && b == 0 && e == cfg.estimators.front() &&
            cfg.emit_logs->trial < st.trials.size()) {
          emitted = st.trials[cfg.emit_logs->trial];
        }
      }
      summary["blocks"].push_back(block);
    }

    if (cfg.emit_logs) {
      const auto& el = *cfg.emit_logs;
      if (el.trial >= blocks.front().trials) {
        throw Error(ErrorCode::kConfig, "emit_logs.trial exceeds the trial count");
      }
      // The logs carry antenna positions directly, so lever arms are zero
      // and ingestion reproduces the in-process dataset exactly.
      const TrialData td = synthesize_trial(blocks.front(), el.trial);
      std::vector<Pose> oa, ob;
      std::vector<RangeSample> rs;
      for (std::size_t i = 0; i < td.noisy.size(); ++i) {
        const auto& s = td.noisy.samples[i];
        oa.push_back(Pose{s.t, s.pa, td.traj_a[i].q});
        ob.push_back(Pose{s.t, s.pb, td.traj_b[i].q});
        rs.push_back(RangeSample{s.t, s.d});
      }
      const fs::path dir = fs::path(args.out) / el.dir;
      write_atomic(dir / "odom_a.csv", odometry_csv(oa));
      write_atomic(dir / "odom_b.csv", odometry_csv(ob));
      write_atomic(dir / "ranges.csv", ranges_csv(rs));
      json ec{{"sigma_r_m", td.noisy.sigma_r},
              {"estimator", to_string(cfg.estimators.front())},
              {"restart_seed", td.restart_seed},
              {"sdp_tol", cfg.sdp_tol},
              {"random_restarts", cfg.random_restarts},
              {"kappa_threshold", cfg.kappa_threshold},
              {"seed", cfg.scenario.seed},
              {"outlier", {{"enabled", false}}},
              {"excitation", {{"enabled", false}}},
              {"truth", detail::transform_json(td.truth)},
              {"odom_a", (dir / "odom_a.csv").string()},
              {"odom_b", (dir / "odom_b.csv").string()},
              {"ranges", (dir / "ranges.csv").string()}};
      if (td.noisy.d0) ec["d0_m"] = *td.noisy.d0;
      write_atomic(dir / "estimate_config.json", detail::dump(ec));
      json info{{"dir", dir.string()}, {"trial", el.trial},
                {"estimator", to_string(cfg.estimators.front())}};
      info["estimate"] = emitted && emitted->ok ? detail::transform_json(emitted->estimate)
                                                : json(nullptr);
      summary["emitted_logs"] = info;
    }

    write_atomic(detail::out_path(args, "results.csv"), csv);
    write_atomic(detail::out_path(args, "summary.json"), detail::dump(summary));
    return kExitOk;
  });
}

/// Fisher information at a given transform, from logs or a generated
/// scenario. Fewer than 4 samples: determinant fields are omitted and the
/// command exits with the insufficient-data code.
inline int cmd_fim(const CommandArgs& args, std::ostream& err = std::cerr) {
  return detail::guarded(err, [&]() -> int {
    const RunConfig cfg = detail::resolve(args);
    SyncedDataset ds;
    Transform4DoF theta;
    json rep = detail::header_json("fim", cfg);
    if (cfg.odom_a || cfg.odom_b || cfg.ranges) {
      if (!cfg.theta) throw Error(ErrorCode::kConfig, "fim on logs needs 'theta'");
      const auto logs = detail::load_logs(cfg);
      IngestOptions io;
      io.sigma_r = std::max(cfg.scenario.sigma_r, kMinSigmaR);
      ds = ingest_logs(logs.odom_a, logs.odom_b, logs.ranges, cfg.scenario.arm_a,
                       cfg.scenario.arm_b, io)
               .dataset;
      theta = *cfg.theta;
      rep["source"] = "logs";
    } else if (cfg.scenario_kind == "random") {
      const TrialData td = synthesize_trial(cfg.scenario, 0);
      ds = td.exact;
      theta = cfg.theta.value_or(td.truth);
      rep["source"] = "scenario:random";
    } else {
      Rng rng = make_rng(cfg.scenario.seed, kStreamTrials, 0);
      const Scenario sc = singular_scenario(parse_singular_kind(cfg.scenario_kind), cfg.scenario, rng);
      ds = sc.noiseless;
      theta = cfg.theta.value_or(sc.truth);
      rep["source"] = "scenario:" + cfg.scenario_kind;
    }
    rep["theta"] = detail::transform_json(theta);
    rep["k"] = ds.size();
    rep["sigma_r_m"] = ds.sigma_r;

    SingularityOptions so;
    so.kappa_threshold = cfg.kappa_threshold;
    const FimReport f = fim(theta, ds);
    rep["F"] = detail::matrix_json(f.F);
    rep["crlb_t_m2"] = f.crlb_t;
    rep["crlb_theta_rad2"] = f.crlb_theta;
    rep["kappa"] = f.kappa;
    const auto ci = confidence_intervals(theta, f.F, so);
    rep["flags"] = detail::flags_json(ci.flags);
    rep["std_errors"] = detail::std_errors_json(ci.flags.std_errors);
    rep["confidence_intervals_95"] = detail::intervals_json(ci);

    int code = kExitOk;
    if (ds.size() < 4) {
      rep["note"] = "fewer than 4 samples: det(F) is identically zero and not reported";
      code = kExitSingular;
    } else {
      const double det_direct = f.F.determinant();
      rep["det_direct"] = det_direct;
      if (ds.size() <= cfg.geometric_det_max_samples) {
        const double det_geo = det_fim_geometric(theta, ds);
        rep["det_geometric"] = det_geo;
        rep["det_relative_difference"] =
            det_direct != 0.0 ? std::abs(det_geo - det_direct) / std::abs(det_direct) : 0.0;
      } else {
        GeometricDetOptions go;
        go.max_samples = cfg.geometric_det_max_samples;
        go.subsample = true;
        const auto idx = range_rte::detail::evenly_spaced(ds.size(), go.max_samples);
        SyncedDataset sub;
        sub.sigma_r = ds.sigma_r;
        for (auto i : idx) sub.samples.push_back(ds.samples[i]);
        rep["note"] = "k exceeds geometric_det_max_samples: geometric determinant "
                      "reported on an evenly spaced subset";
        rep["det_subset"] = {{"samples", idx.size()},
                             {"det_geometric", det_fim_geometric(theta, sub)},
                             {"det_direct", fim(theta, sub).F.determinant()}};
      }
    }
    rep["exit_code"] = code;
    write_atomic(detail::out_path(args, "fim.json"), detail::dump(rep));
    return code;
  });
}

/// Drift scenario -> drift_report.json plus a plot-ready drift_errors.csv.
inline int cmd_drift(const CommandArgs& args, std::ostream& err = std::cerr) {
  return detail::guarded(err, [&]() -> int {
    const RunConfig cfg = detail::resolve(args);
    if (!cfg.scenario.drift) throw Error(ErrorCode::kConfig, "drift block missing");
    const Estimator est = cfg.estimators.front();
    const DriftResult r = drift_scenario(cfg.scenario, est, cfg.estimator_options());
    json rep = detail::header_json("drift", cfg);
    rep["estimator"] = to_string(est);
    rep["drift"] = detail::drift_json(*cfg.scenario.drift);
    rep["rmse_nc_m"] = r.rmse_nc;
    rep["rmse_corrected_m"] = r.rmse_corrected;
    rep["windows"] = r.windows;
    rep["skipped"] = r.skipped;
    rep["failed"] = r.failed;
    json series = json::array();
    for (std::size_t i = 0; i < r.window_estimates.size(); ++i) {
      const auto& w = r.window_estimates[i];
      json jw{{"first", w.first}, {"last", w.last}, {"t_s", w.t},
              {"skipped", w.skipped}, {"failed", w.failed}};
      jw["estimate"] = w.has_estimate ? detail::transform_json(w.estimate) : json(nullptr);
      jw["truth"] = detail::transform_json(r.truth_at_window[i]);
      if (w.has_estimate) jw["aligned_target_m"] = detail::vec3_json(w.aligned_target);
      series.push_back(jw);
    }
    rep["window_series"] = series;
    std::string csv = "t,err_nc,err_corrected\n";
    for (std::size_t i = 0; i < r.t.size(); ++i) {
      csv += format_double(r.t[i]) + ',' + format_double(r.err_nc[i]) + ',' +
             format_double(r.err_corrected[i]) + '\n';
    }
    write_atomic(detail::out_path(args, "drift_errors.csv"), csv);
    write_atomic(detail::out_path(args, "drift_report.json"), detail::dump(rep));
    return kExitOk;
  });
}

}  // namespace range_rte::cli
