#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <deque>
#include <fstream>
#include <functional>
#include <mutex>
#include <optional>
#include <sstream>
#include <stop_token>
#include <string>
#include <thread>
#include <vector>

#include "magpos/locator.hpp"
#include "magpos/net.hpp"
#include "magpos/signal_sim.hpp"
#include "magpos/wire.hpp"

namespace magpos {

/// True receiver position as a function of pipeline time (seconds since start).
using PositionSource = std::function<Vec2(double)>;

inline PositionSource static_source(Vec2 where) {
  return [where](double) { return where; };
}

struct TrajectoryPoint {
  double t = 0.0;
  Vec2 xy = Vec2::Zero();
};

/// Piecewise-linear trajectory; held constant before the first and after the last row.
class Trajectory {
 public:
  explicit Trajectory(std::vector<TrajectoryPoint> points) : points_(std::move(points)) {
    if (points_.empty()) throw Error(ErrorCode::kConfig, "trajectory has no rows");
    for (std::size_t i = 1; i < points_.size(); ++i) {
      if (!(points_[i].t > points_[i - 1].t))
        throw Error(ErrorCode::kConfig, "trajectory times must be strictly increasing");
    }
  }

  Vec2 at(double t) const {
    if (t <= points_.front().t) return points_.front().xy;
    if (t >= points_.back().t) return points_.back().xy;
    const auto hi = std::upper_bound(points_.begin(), points_.end(), t,
                                     [](double v, const TrajectoryPoint& p) { return v < p.t; });
    const auto lo = hi - 1;
    const double w = (t - lo->t) / (hi->t - lo->t);
    return (1.0 - w) * lo->xy + w * hi->xy;
  }

  double duration() const { return points_.back().t - points_.front().t; }
  const std::vector<TrajectoryPoint>& points() const { return points_; }

  /// Rows `t_seconds x_m y_m`; '#' comment lines allowed.
  static Trajectory parse(std::istream& in) {
    std::vector<TrajectoryPoint> pts;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      const auto first = line.find_first_not_of(" \t\r");
      if (first == std::string::npos || line[first] == '#') continue;
      std::istringstream f(line);
      TrajectoryPoint p;
      std::string extra;
      if (!(f >> p.t >> p.xy.x() >> p.xy.y()) || (f >> extra))
        throw Error(ErrorCode::kConfig, "trajectory line " + std::to_string(line_no) + ": expected 't x y'");
      pts.push_back(p);
    }
    return Trajectory(std::move(pts));
  }

  static Trajectory load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::kConfig, "cannot open trajectory " + path);
    return parse(in);
  }

 private:
  std::vector<TrajectoryPoint> points_;
};

/// Simulated visitor walking towards the latest steering target at a capped speed.
/// Thread safe: targets may arrive from a network thread while the pipeline samples position.
class SteeredVisitor {
 public:
  SteeredVisitor(Vec2 start, double max_speed = 1.2) : position_(start), target_(start), max_speed_(max_speed) {}

  void set_target(const Vec2& target) {
    std::lock_guard lock(mutex_);
    target_ = target;
  }

  void set_bounds(const Vec2& lo, const Vec2& hi) {
    std::lock_guard lock(mutex_);
    lo_ = lo;
    hi_ = hi;
  }

  Vec2 advance(double t) {
    std::lock_guard lock(mutex_);
    const double dt = last_t_ ? std::max(0.0, t - *last_t_) : 0.0;
    last_t_ = t;
    Vec2 goal = target_;
    if (lo_ && hi_) goal = goal.cwiseMax(*lo_).cwiseMin(*hi_);
    const Vec2 delta = goal - position_;
    const double reach = max_speed_ * dt;
    position_ = delta.norm() <= reach ? goal : Vec2(position_ + delta.normalized() * reach);
    return position_;
  }

  Vec2 position() const {
    std::lock_guard lock(mutex_);
    return position_;
  }

 private:
  mutable std::mutex mutex_;
  Vec2 position_;
  Vec2 target_;
  std::optional<Vec2> lo_, hi_;
  std::optional<double> last_t_;
  double max_speed_;
};

/// Sends one fix as a wire message. False means the connection is unusable and the fix is lost.
inline bool stream_fix(const PositionFix& fix, const net::Socket& connection) {
  if (!connection) return false;
  return connection.send_all(wire::format_position(fix));
}

struct StreamStats {
  long sent = 0;
  long dropped = 0;       // queue overflow, no connection, or failed send
  long connects = 0;      // successful connections (first one included)
  long connect_failures = 0;
};

/// Background sender: bounded latest-wins queue drained by one thread that owns the
/// connection. Never blocks the producer.
class FixStreamer {
 public:
  static constexpr std::size_t kQueueCapacity = 8;

  FixStreamer(net::Endpoint endpoint, double update_period)
      : endpoint_(std::move(endpoint)),
        min_backoff_(std::max(0.01, update_period / 4.0)),
        max_backoff_(std::max(0.01, 0.9 * update_period)),
        backoff_(min_backoff_),
        worker_([this](std::stop_token st) { run(st); }) {}

  FixStreamer(const FixStreamer&) = delete;
  FixStreamer& operator=(const FixStreamer&) = delete;

  ~FixStreamer() {
    worker_.request_stop();
    cv_.notify_all();
  }

  void submit(const PositionFix& fix) {
    {
      std::lock_guard lock(mutex_);
      if (queue_.size() >= kQueueCapacity) {
        queue_.pop_front();
        ++stats_.dropped;
      }
      queue_.push_back(fix);
    }
    cv_.notify_one();
  }

  StreamStats stats() const {
    std::lock_guard lock(mutex_);
    return stats_;
  }

  bool connected() const { return connected_.load(); }

  /// Blocks until the queue is empty or the timeout elapses. Used to flush before shutdown.
  bool drain(std::chrono::milliseconds timeout) {
    std::unique_lock lock(mutex_);
    return idle_cv_.wait_for(lock, timeout, [&] { return queue_.empty() && !busy_; });
  }

 private:
  using Clock = std::chrono::steady_clock;

  void run(std::stop_token st) {
    net::Socket conn;
    std::optional<Clock::time_point> next_attempt;
    while (!st.stop_requested()) {
      PositionFix fix;
      {
        std::unique_lock lock(mutex_);
        cv_.wait(lock, st, [&] { return !queue_.empty(); });
        if (st.stop_requested()) break;
        fix = queue_.front();
        queue_.pop_front();
        busy_ = true;
      }

      if (conn && conn.peer_closed()) {
        conn.close();
        connected_ = false;
        next_attempt.reset();  // peer went away: reconnect immediately
      }
      if (!conn && (!next_attempt || Clock::now() >= *next_attempt)) {
        const auto timeout = std::chrono::milliseconds(static_cast<long>(max_backoff_ * 1000.0));
        conn = net::connect_to(endpoint_, timeout);
        std::lock_guard lock(mutex_);
        if (conn) {
          ++stats_.connects;
          backoff_ = min_backoff_;
          next_attempt.reset();
        } else {
          ++stats_.connect_failures;
          next_attempt = Clock::now() + std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(backoff_));
          backoff_ = std::min(backoff_ * 2.0, max_backoff_);
        }
      }
      connected_ = conn.valid();

      const bool ok = stream_fix(fix, conn);
      if (!ok && conn) {
        conn.close();
        connected_ = false;
        next_attempt.reset();
      }
      {
        std::lock_guard lock(mutex_);
        if (ok) ++stats_.sent;
        else ++stats_.dropped;
        busy_ = false;
      }
      idle_cv_.notify_all();
    }
    connected_ = false;
  }

  net::Endpoint endpoint_;
  double min_backoff_;
  double max_backoff_;
  double backoff_;
  mutable std::mutex mutex_;
  std::condition_variable_any cv_;
  std::condition_variable_any idle_cv_;
  std::deque<PositionFix> queue_;
  bool busy_ = false;
  StreamStats stats_;
  std::atomic<bool> connected_{false};
  std::jthread worker_;  // last member: starts after everything it touches exists
};

struct PipelineConfig {
  double update_period = 0.5;  // seconds; at most 1.0
  SimScenario scenario;
  CalibrationResult calibration;
  SolverConfig solver;
  std::optional<net::Endpoint> stream_endpoint;  // nullopt: offline
  std::optional<double> duration;                // stop after this many seconds

  void validate() const {
    if (!(update_period > 0.0) || update_period > 1.0)
      throw Error(ErrorCode::kConfig, "update period must be in (0, 1] s for a >= 1 Hz update rate");
    scenario.validate();
  }
};

struct PipelineStats {
  long fixes = 0;
  long failures = 0;               // cycles whose estimation or solve failed
  std::vector<double> cycle_time;  // seconds of compute per produced cycle
  StreamStats stream;

  double cycle_time_percentile(double q) const {
    if (cycle_time.empty()) return 0.0;
    std::vector<double> v = cycle_time;
    std::sort(v.begin(), v.end());
    const std::size_t idx = std::min(v.size() - 1, static_cast<std::size_t>(std::ceil(q * static_cast<double>(v.size()))) - 1);
    return v[idx];
  }
};

/// Real-time loop. Every update_period: sample the true position, synthesize a record,
/// locate, hand the fix to `on_fix` and the streamer. Stops when `stop` is requested (within
/// one period) or when the configured duration is reached.
inline PipelineStats run_pipeline(const PipelineConfig& config, const PositionSource& position_source,
                                  std::stop_token stop, const std::function<void(const PositionFix&)>& on_fix = {}) {
  config.validate();
  const Locator locator(config.scenario.anchor_set, config.scenario.adc, config.calibration, config.solver);
  std::optional<FixStreamer> streamer;
  if (config.stream_endpoint) streamer.emplace(*config.stream_endpoint, config.update_period);

  using Clock = std::chrono::steady_clock;
  const auto start = Clock::now();
  const auto period = std::chrono::duration<double>(config.update_period);
  PipelineStats stats;
  std::mutex m;
  std::condition_variable_any cv;

  for (long k = 0;; ++k) {
    const double t = static_cast<double>(k) * config.update_period;
    if (config.duration && t >= *config.duration - 1e-9) break;
    const auto deadline = start + std::chrono::duration_cast<Clock::duration>(period * static_cast<double>(k));
    {
      std::unique_lock lock(m);
      cv.wait_until(lock, stop, deadline, [] { return false; });
    }
    if (stop.stop_requested()) break;

    const auto c0 = Clock::now();
    try {
      const Vec2 truth = position_source(t);
      const SampleRecord rec = synthesize_record(config.scenario, truth, t);
      LocateResult res = locator.locate(rec);
      stats.cycle_time.push_back(std::chrono::duration<double>(Clock::now() - c0).count());
      ++stats.fixes;
      if (on_fix) on_fix(res.fix);
      if (streamer) streamer->submit(res.fix);
    } catch (const Error&) {
      ++stats.failures;
    }
  }
  if (streamer) {
    streamer->drain(std::chrono::milliseconds(200));
    stats.stream = streamer->stats();
  }
  return stats;
}

}  // namespace magpos
