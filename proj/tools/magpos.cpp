// magpos: command line entry point.
//
//   magpos simulate   synthesize one ADC record at a position
//   magpos calibrate  fit alpha/beta per anchor from calibration observations
//   magpos run        real-time pipeline, streams fixes to a PCA
//   magpos pca        position-controlled application server
//   magpos eval       accuracy experiment over the control points
//   magpos replay     offline fixes along a trajectory file
//
// Exit codes: 0 ok, 1 usage, 2 configuration, 3 runtime.

#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <thread>

#include <CLI11.hpp>

#include "magpos/magpos.hpp"

namespace {

using namespace magpos;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

std::atomic<bool> g_interrupted{false};

extern "C" void on_signal(int) { g_interrupted = true; }

struct CommonOptions {
  std::string scenario;
  std::optional<std::uint64_t> seed;
  bool verbose = false;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--scenario", o.scenario, "Scenario file (key = value); default: built-in measured setup");
  cmd->add_option("--seed", o.seed, "Noise seed, overrides the scenario");
  cmd->add_flag("-v,--verbose", o.verbose, "Report statistics on stderr");
}

SimScenario load_common_scenario(const CommonOptions& o) {
  SimScenario s = o.scenario.empty() ? make_scenario(ScenarioPreset::kMeasured) : load_scenario(o.scenario);
  if (o.seed) s.noise.seed = *o.seed;
  s.validate();
  return s;
}

CalibrationMethod parse_method(const std::string& name) {
  if (name == "log-linear") return CalibrationMethod::kLogLinear;
  if (name == "nonlinear") return CalibrationMethod::kNonlinear;
  throw Error(ErrorCode::kConfig, "unknown calibration method '" + name + "'");
}

/// Observation file if given, otherwise a simulated campaign on the calibration points.
CalibrationResult load_or_simulate_calibration(const std::string& path, const SimScenario& scenario,
                                               const SurveyTable& survey, CalibrationMethod method) {
  if (!path.empty()) return calibrate(load_calibration_observations(path), method);
  return calibrate(simulate_calibration_observations(scenario, survey), method);
}

Vec2 anchor_centroid(const AnchorSet& set) {
  Vec2 c = Vec2::Zero();
  for (const Anchor& a : set.anchors) c += a.xy();
  return c / static_cast<double>(set.size());
}

std::pair<Vec2, Vec2> anchor_bounds(const AnchorSet& set) {
  Vec2 lo = set.anchors.front().xy(), hi = lo;
  for (const Anchor& a : set.anchors) {
    lo = lo.cwiseMin(a.xy());
    hi = hi.cwiseMax(a.xy());
  }
  return {lo, hi};
}

/// Default scripted walk: a lap through the control points in label order.
Trajectory default_trajectory(const SurveyTable& survey, const AnchorSet& set, double speed = 0.6) {
  std::vector<TrajectoryPoint> pts;
  double t = 0.0;
  for (const SurveyPoint& p : survey.control_points()) {
    const Vec2 xy = project_to_reference_plane(p.xyz, set);
    if (!pts.empty()) t += std::max(0.1, (xy - pts.back().xy).norm() / speed);
    pts.push_back({t, xy});
  }
  return Trajectory(std::move(pts));
}

void sleep_until_interrupted(std::optional<double> duration) {
  const auto start = std::chrono::steady_clock::now();
  while (!g_interrupted) {
    if (duration && std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() >= *duration) return;
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
  }
}

// --- simulate ---------------------------------------------------------------------------------

struct SimulateOptions {
  CommonOptions common;
  std::string point = "P14";
  std::optional<double> x, y;
  double t0 = 0.0;
  std::string out;
};

int cmd_simulate(const SimulateOptions& o) {
  const SimScenario scenario = load_common_scenario(o.common);
  Vec2 where;
  if (o.x || o.y) {
    if (!o.x || !o.y) throw Error(ErrorCode::kConfig, "--x and --y go together");
    where = {*o.x, *o.y};
  } else {
    where = project_to_reference_plane(load_survey_table().at(o.point).xyz, scenario.anchor_set);
  }
  const SampleRecord rec = synthesize_record(scenario, where, o.t0);
  std::ofstream file;
  if (!o.out.empty()) {
    file.open(o.out);
    if (!file) throw Error(ErrorCode::kConfig, "cannot write " + o.out);
  }
  std::ostream& out = o.out.empty() ? std::cout : file;
  char buf[160];
  std::snprintf(buf, sizeof buf, "# x=%.6f y=%.6f t0=%.6f fs=%.0f bits=%d full_scale=%.6g saturated=%d\n", where.x(),
                where.y(), rec.timestamp, rec.sample_rate, rec.adc_bits, rec.full_scale,
                saturation_flag(rec) ? 1 : 0);
  out << buf;
  for (double s : rec.samples) {
    std::snprintf(buf, sizeof buf, "%.9g\n", s);
    out << buf;
  }
  if (o.common.verbose) {
    const SinefitBasis basis(scenario.anchor_set.frequencies(), rec.sample_rate, rec.samples.size());
    const auto ids = scenario.anchor_set.ids();
    const AmplitudeEstimate est = estimate_amplitudes(rec, basis, ids);
    for (const auto& id : ids) std::cerr << id << " amplitude " << est.per_anchor.at(id) << " V\n";
  }
  return kExitOk;
}

// --- calibrate --------------------------------------------------------------------------------

struct CalibrateOptions {
  CommonOptions common;
  std::string observations;
  std::string method = "log-linear";
  int records = 10;
  std::string save_observations;
};

int cmd_calibrate(const CalibrateOptions& o) {
  const CalibrationMethod method = parse_method(o.method);
  if (o.records < 1) throw Error(ErrorCode::kConfig, "--records must be >= 1");
  std::vector<CalibrationObservation> obs;
  if (!o.observations.empty()) {
    obs = load_calibration_observations(o.observations);
  } else {
    const SimScenario scenario = load_common_scenario(o.common);
    obs = simulate_calibration_observations(scenario, load_survey_table(), o.records);
  }
  if (!o.save_observations.empty()) {
    std::ofstream f(o.save_observations);
    if (!f) throw Error(ErrorCode::kConfig, "cannot write " + o.save_observations);
    write_calibration_observations(f, obs);
  }
  write_calibration_result(std::cout, calibrate(obs, method));
  return kExitOk;
}

// --- run --------------------------------------------------------------------------------------

struct RunOptions {
  CommonOptions common;
  std::string calibration;
  std::string endpoint = "127.0.0.1:5005";
  std::string trajectory;
  std::string bridge = "127.0.0.1:5006";
  double period = 0.5;
  double duration = 10.0;
  bool offline = false;
};

int cmd_run(const RunOptions& o) {
  // Everything is loaded and validated before any thread starts.
  PipelineConfig cfg;
  cfg.scenario = load_common_scenario(o.common);
  cfg.update_period = o.period;
  if (o.duration > 0.0) cfg.duration = o.duration;
  if (!o.offline) cfg.stream_endpoint = net::parse_endpoint(o.endpoint);
  const SurveyTable survey = load_survey_table();
  cfg.calibration = load_or_simulate_calibration(o.calibration, cfg.scenario, survey, CalibrationMethod::kLogLinear);
  cfg.validate();

  std::unique_ptr<pca::BridgeSteering> steering;
  PositionSource source;
  if (o.trajectory == "live") {
    steering = std::make_unique<pca::BridgeSteering>(net::parse_endpoint(o.bridge), anchor_centroid(cfg.scenario.anchor_set));
    const auto [lo, hi] = anchor_bounds(cfg.scenario.anchor_set);
    steering->set_bounds(lo, hi);
    source = steering->source();
  } else if (!o.trajectory.empty()) {
    auto traj = std::make_shared<Trajectory>(Trajectory::load(o.trajectory));
    source = [traj](double t) { return traj->at(t); };
  } else {
    source = static_source(anchor_centroid(cfg.scenario.anchor_set));
  }

  std::stop_source stop;
  std::atomic<bool> done{false};
  PipelineStats stats;
  std::jthread loop([&] {
    try {
      stats = run_pipeline(cfg, source, stop.get_token(), [](const PositionFix& f) {
        std::printf("%.3f %.6f %.6f\n", f.timestamp, f.x, f.y);
        std::fflush(stdout);
      });
    } catch (const std::exception& e) {
      std::cerr << "pipeline stopped: " << e.what() << "\n";
    }
    done = true;
  });
  while (!done) {
    if (g_interrupted) stop.request_stop();
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
  }
  loop.join();

  std::fprintf(stderr, "fixes %ld failures %ld sent %ld dropped %ld connects %ld p95_cycle_ms %.3f\n", stats.fixes,
               stats.failures, stats.stream.sent, stats.stream.dropped, stats.stream.connects,
               1e3 * stats.cycle_time_percentile(0.95));
  return stats.fixes > 0 ? kExitOk : kExitRuntime;
}

// --- pca --------------------------------------------------------------------------------------

struct PcaOptions {
  std::string listen = "127.0.0.1:5005";
  std::string bridge = "127.0.0.1:5006";
  bool no_bridge = false;
  std::string canvas;
  std::string calibration;
  double duration = 0.0;
  bool verbose = false;
};

std::pair<int, int> parse_canvas_size(const std::string& text) {
  const auto x = text.find_first_of("xX");
  int w = 0, h = 0;
  char tail = 0;
  if (x == std::string::npos || std::sscanf(text.c_str(), "%d%*[xX]%d%c", &w, &h, &tail) != 2 || w <= 0 || h <= 0)
    throw Error(ErrorCode::kConfig, "--canvas expects WxH, e.g. 1280x720");
  return {w, h};
}

int cmd_pca(const PcaOptions& o) {
  pca::CanvasCalibration cal;
  if (!o.calibration.empty()) cal = pca::canvas_calibration_from_config(KeyValueConfig::load(o.calibration));
  if (!o.canvas.empty()) std::tie(cal.width, cal.height) = parse_canvas_size(o.canvas);
  cal.validate();
  pca::PcaServerConfig cfg;
  cfg.listen = net::parse_endpoint(o.listen);
  if (!o.no_bridge) cfg.bridge = net::parse_endpoint(o.bridge);

  auto env = pca::ExecutionEnvironment::with_default_apps(cal);
  env.set_prompt_sink([](const std::string& text) { std::cerr << "prompt: " << text << "\n"; });
  pca::PcaServer server(cfg, std::move(env));
  std::cerr << "listening for positions on " << cfg.listen.host << ":" << server.port();
  if (server.bridge_port()) std::cerr << ", UI bridge on " << cfg.bridge->host << ":" << *server.bridge_port();
  std::cerr << "\n";
  if (o.verbose) {
    server.on_state([](const pca::RenderState& s) {
      std::cerr << "app " << s.app_id << " cursor ";
      if (s.cursor) std::cerr << s.cursor->x << "," << s.cursor->y;
      std::cerr << (s.clicked ? " click" : "") << "\n";
    });
  }
  sleep_until_interrupted(o.duration > 0.0 ? std::optional<double>(o.duration) : std::nullopt);
  const auto rc = server.receiver_counters();
  const auto ec = server.environment_counters();
  std::fprintf(stderr, "positions %ld malformed %ld connections %ld events %ld app_errors %ld\n", rc.received,
               rc.malformed, rc.connections, ec.events, ec.app_errors);
  return kExitOk;
}

// --- eval -------------------------------------------------------------------------------------

struct EvalOptions {
  CommonOptions common;
  std::string calibration;
  int repeats = 10;
  double border_threshold = 0.10;
  double gdop_resolution = 0.05;
  std::string out = "report";
};

int cmd_eval(const EvalOptions& o) {
  const SimScenario scenario = load_common_scenario(o.common);
  if (o.repeats < 1) throw Error(ErrorCode::kConfig, "--repeats must be >= 1");
  if (!(o.gdop_resolution > 0.0)) throw Error(ErrorCode::kConfig, "--gdop-resolution must be > 0");
  const SurveyTable survey = load_survey_table();
  ExperimentOptions opts;
  opts.repeats = o.repeats;
  opts.border_threshold = o.border_threshold;
  if (!o.calibration.empty()) opts.calibration = calibrate(load_calibration_observations(o.calibration));
  const ErrorReport report = run_accuracy_experiment(scenario, survey, opts);
  const GdopGrid gdop = gdop_map(scenario.anchor_set, o.gdop_resolution, 0.5);
  write_report(o.out, report, gdop);
  write_summary(std::cout, report);
  return kExitOk;
}

// --- replay -----------------------------------------------------------------------------------

struct ReplayOptions {
  CommonOptions common;
  std::string trajectory;
  std::string calibration;
  double period = 0.5;
  std::string out;
};

int cmd_replay(const ReplayOptions& o) {
  const SimScenario scenario = load_common_scenario(o.common);
  if (!(o.period > 0.0)) throw Error(ErrorCode::kConfig, "--period must be > 0");
  const SurveyTable survey = load_survey_table();
  const Trajectory traj =
      o.trajectory.empty() ? default_trajectory(survey, scenario.anchor_set) : Trajectory::load(o.trajectory);
  const CalibrationResult cal =
      load_or_simulate_calibration(o.calibration, scenario, survey, CalibrationMethod::kLogLinear);
  std::ofstream file;
  if (!o.out.empty()) {
    file.open(o.out);
    if (!file) throw Error(ErrorCode::kConfig, "cannot write " + o.out);
  }
  std::ostream& out = o.out.empty() ? std::cout : file;

  const Locator locator(scenario.anchor_set, scenario.adc, cal);
  const double t_begin = traj.points().front().t;
  out << "t,x_true,y_true,x_est,y_est,error_m\n";
  double sum = 0.0;
  long n = 0, failed = 0;
  char buf[160];
  for (long k = 0;; ++k) {
    const double t = t_begin + static_cast<double>(k) * o.period;
    if (t > traj.points().back().t + 1e-9) break;
    const Vec2 truth = traj.at(t);
    try {
      const PositionFix fix = locator.locate(synthesize_record(scenario, truth, t)).fix;
      const double err = (fix.position() - truth).norm();
      std::snprintf(buf, sizeof buf, "%.3f,%.6f,%.6f,%.6f,%.6f,%.6f\n", t, truth.x(), truth.y(), fix.x, fix.y, err);
      out << buf;
      sum += err;
      ++n;
    } catch (const Error& e) {
      ++failed;
      if (o.common.verbose) std::cerr << "t=" << t << ": " << e.what() << "\n";
    }
  }
  std::fprintf(stderr, "fixes %ld failed %ld mean_error_m %.4f\n", n, failed, n ? sum / static_cast<double>(n) : 0.0);
  return kExitOk;
}

int exit_code_for(const Error& e) {
  switch (e.code()) {
    case ErrorCode::kConfig:
    case ErrorCode::kDomain:
      return kExitConfig;
    default:
      return kExitRuntime;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Magnetic-induction indoor positioning: simulation, estimation and position-controlled apps"};
  app.require_subcommand(1);

  SimulateOptions sim;
  auto* c_sim = app.add_subcommand("simulate", "Synthesize one ADC record at a position");
  add_common(c_sim, sim.common);
  c_sim->add_option("--point", sim.point, "Survey point label")->capture_default_str();
  c_sim->add_option("--x", sim.x, "Position x in meters (with --y)");
  c_sim->add_option("--y", sim.y, "Position y in meters (with --x)");
  c_sim->add_option("--t0", sim.t0, "Record start time in seconds")->capture_default_str();
  c_sim->add_option("--out", sim.out, "Output file; default stdout");

  CalibrateOptions cal;
  auto* c_cal = app.add_subcommand("calibrate", "Fit alpha and beta per anchor");
  add_common(c_cal, cal.common);
  c_cal->add_option("--observations", cal.observations, "Observation file: anchor_id distance_m amplitude_v");
  c_cal->add_option("--method", cal.method, "log-linear or nonlinear")->capture_default_str();
  c_cal->add_option("--records", cal.records, "Simulated records averaged per calibration point")
      ->capture_default_str();
  c_cal->add_option("--save-observations", cal.save_observations, "Write the observations used");

  RunOptions run;
  auto* c_run = app.add_subcommand("run", "Real-time positioning pipeline");
  add_common(c_run, run.common);
  c_run->add_option("--calibration", run.calibration, "Calibration observation file");
  c_run->add_option("--endpoint", run.endpoint, "PCA position endpoint host:port")->capture_default_str();
  c_run->add_option("--trajectory", run.trajectory, "Trajectory file (t x y rows) or 'live'");
  c_run->add_option("--bridge", run.bridge, "UI bridge for --trajectory live")->capture_default_str();
  c_run->add_option("--period", run.period, "Update period in seconds")->capture_default_str();
  c_run->add_option("--duration", run.duration, "Seconds to run; 0 runs until interrupted")->capture_default_str();
  c_run->add_flag("--offline", run.offline, "Do not stream fixes");

  PcaOptions pc;
  auto* c_pca = app.add_subcommand("pca", "Position-controlled application server");
  c_pca->add_option("--listen", pc.listen, "Position stream endpoint host:port")->capture_default_str();
  c_pca->add_option("--bridge", pc.bridge, "UI bridge endpoint host:port")->capture_default_str();
  c_pca->add_flag("--no-bridge", pc.no_bridge, "Do not open the UI bridge");
  c_pca->add_option("--canvas", pc.canvas, "Canvas size WxH; default 1280x720");
  c_pca->add_option("--calibration", pc.calibration, "Canvas calibration file");
  c_pca->add_option("--duration", pc.duration, "Seconds to run; 0 runs until interrupted")->capture_default_str();
  c_pca->add_flag("-v,--verbose", pc.verbose, "Log every state change on stderr");

  EvalOptions ev;
  auto* c_eval = app.add_subcommand("eval", "Accuracy experiment over the surveyed control points");
  add_common(c_eval, ev.common);
  c_eval->add_option("--calibration", ev.calibration, "Calibration observation file");
  c_eval->add_option("--repeats", ev.repeats, "Fixes per control point")->capture_default_str();
  c_eval->add_option("--border-threshold", ev.border_threshold, "Border distance in meters")->capture_default_str();
  c_eval->add_option("--gdop-resolution", ev.gdop_resolution, "GDOP grid step in meters")->capture_default_str();
  c_eval->add_option("--out", ev.out, "Report directory")->capture_default_str();

  ReplayOptions rp;
  auto* c_replay = app.add_subcommand("replay", "Offline fixes along a trajectory");
  add_common(c_replay, rp.common);
  c_replay->add_option("--trajectory", rp.trajectory, "Trajectory file; default: lap through the control points");
  c_replay->add_option("--calibration", rp.calibration, "Calibration observation file");
  c_replay->add_option("--period", rp.period, "Sampling period in seconds")->capture_default_str();
  c_replay->add_option("--out", rp.out, "CSV output; default stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);

  try {
    if (*c_sim) return cmd_simulate(sim);
    if (*c_cal) return cmd_calibrate(cal);
    if (*c_run) return cmd_run(run);
    if (*c_pca) return cmd_pca(pc);
    if (*c_eval) return cmd_eval(ev);
    if (*c_replay) return cmd_replay(rp);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
