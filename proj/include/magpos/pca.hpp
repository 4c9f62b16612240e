#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <deque>
#include <functional>
#include <iostream>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "magpos/config.hpp"
#include "magpos/error.hpp"
#include "magpos/types.hpp"

namespace magpos::pca {

/// Physical bounds of the walkable area and the canvas they map onto.
struct CanvasCalibration {
  double x_min = 0.0, x_max = 2.678;
  double y_min = 0.0, y_max = 4.694;
  int width = 1280, height = 720;

  bool valid() const { return x_max > x_min && y_max > y_min && width > 0 && height > 0; }

  void validate() const {
    if (!valid()) throw Error(ErrorCode::kConfig, "canvas calibration needs x_max > x_min, y_max > y_min, W, H > 0");
  }

  bool operator==(const CanvasCalibration&) const = default;
};

inline CanvasCalibration canvas_calibration_from_config(const KeyValueConfig& cfg, CanvasCalibration base = {}) {
  for (const auto& key : cfg.keys()) {
    if (key != "x_min" && key != "x_max" && key != "y_min" && key != "y_max" && key != "width" && key != "height")
      throw Error(ErrorCode::kConfig, "unknown canvas calibration key " + key);
  }
  base.x_min = cfg.get_double("x_min", base.x_min);
  base.x_max = cfg.get_double("x_max", base.x_max);
  base.y_min = cfg.get_double("y_min", base.y_min);
  base.y_max = cfg.get_double("y_max", base.y_max);
  base.width = static_cast<int>(cfg.get_int("width", base.width));
  base.height = static_cast<int>(cfg.get_int("height", base.height));
  base.validate();
  return base;
}

inline std::string to_text(const CanvasCalibration& c) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "x_min = %.6f\nx_max = %.6f\ny_min = %.6f\ny_max = %.6f\nwidth = %d\nheight = %d\n",
                c.x_min, c.x_max, c.y_min, c.y_max, c.width, c.height);
  return buf;
}

struct CanvasPoint {
  int x = 0;
  int y = 0;
  bool operator==(const CanvasPoint&) const = default;
};

struct MappedPoint {
  CanvasPoint point;
  bool clamped = false;  // physical input fell outside the calibrated bounds
};

/// Affine map before rounding: x' = W / (x_max - x_min) * (x - x_min), likewise for y.
inline Vec2 map_to_canvas_exact(const Vec2& position, const CanvasCalibration& cal) {
  return {static_cast<double>(cal.width) / (cal.x_max - cal.x_min) * (position.x() - cal.x_min),
          static_cast<double>(cal.height) / (cal.y_max - cal.y_min) * (position.y() - cal.y_min)};
}

/// Rounded to the nearest pixel and clamped to [0, W] x [0, H].
inline MappedPoint map_to_canvas(const Vec2& position, const CanvasCalibration& cal) {
  const Vec2 exact = map_to_canvas_exact(position, cal);
  const double rx = std::round(exact.x());
  const double ry = std::round(exact.y());
  MappedPoint out;
  out.clamped = rx < 0.0 || ry < 0.0 || rx > cal.width || ry > cal.height || !std::isfinite(rx) || !std::isfinite(ry);
  const double cx = std::isfinite(rx) ? std::clamp(rx, 0.0, static_cast<double>(cal.width)) : 0.0;
  const double cy = std::isfinite(ry) ? std::clamp(ry, 0.0, static_cast<double>(cal.height)) : 0.0;
  out.point = {static_cast<int>(cx), static_cast<int>(cy)};
  return out;
}

enum class EventKind { kUserMoved, kUserClicked };

inline const char* to_string(EventKind k) { return k == EventKind::kUserMoved ? "UserMoved" : "UserClicked"; }

struct AppEvent {
  EventKind kind = EventKind::kUserMoved;
  CanvasPoint canvas_position;
  long sequence_number = 0;
  Vec2 physical = Vec2::Zero();  // meters, as received
  double timestamp = 0.0;        // seconds, receiver clock
};

/// Turns a stream of canvas positions into UserMoved events, plus one UserClicked whenever
/// `click_count` consecutive positions are the same pixel. The repeat counter restarts after a
/// click, so a run of n identical positions clicks floor(n / click_count) times.
class ClickDetector {
 public:
  explicit ClickDetector(int click_count = 5) : click_count_(click_count) {
    if (click_count_ < 1) throw Error(ErrorCode::kConfig, "click count must be >= 1");
  }

  std::vector<AppEvent> process(const CanvasPoint& p, const Vec2& physical = Vec2::Zero(), double t = 0.0) {
    std::vector<AppEvent> out;
    out.push_back({EventKind::kUserMoved, p, next_sequence_++, physical, t});
    if (last_ && *last_ == p) {
      ++run_;
    } else {
      run_ = 1;
      last_ = p;
    }
    if (run_ == click_count_) {
      out.push_back({EventKind::kUserClicked, p, next_sequence_++, physical, t});
      run_ = 0;
    }
    return out;
  }

  /// Identical positions accumulated towards the next click.
  int dwell() const { return run_; }
  int click_count() const { return click_count_; }
  long next_sequence() const { return next_sequence_; }

 private:
  int click_count_;
  std::optional<CanvasPoint> last_;
  int run_ = 0;
  long next_sequence_ = 0;
};

inline std::vector<AppEvent> generate_events(std::span<const CanvasPoint> canvas_stream, int click_count = 5) {
  ClickDetector det(click_count);
  std::vector<AppEvent> out;
  for (const CanvasPoint& p : canvas_stream) {
    auto ev = det.process(p);
    out.insert(out.end(), ev.begin(), ev.end());
  }
  return out;
}

// ---------------------------------------------------------------------------------------------
// Calibration procedure

enum class Side { kLeft, kRight, kBottom, kTop };

inline const char* to_string(Side s) {
  switch (s) {
    case Side::kLeft: return "left";
    case Side::kRight: return "right";
    case Side::kBottom: return "bottom";
    case Side::kTop: return "top";
  }
  return "?";
}

/// Asks the visitor to stand at each side of the area in turn and keeps the extremal
/// coordinate seen during a fixed window after the first position following each prompt.
/// A degenerate axis (min >= max) is rejected and both of its sides are asked again.
class CalibrationProcedure {
 public:
  using PromptSink = std::function<void(const std::string&)>;

  CalibrationProcedure(int width, int height, double window = 3.0, PromptSink prompt_sink = {})
      : width_(width), height_(height), window_(window), prompt_sink_(std::move(prompt_sink)) {}

  void start() {
    pending_ = {Side::kLeft, Side::kRight, Side::kBottom, Side::kTop};
    values_.fill(std::nullopt);
    result_.reset();
    window_start_.reset();
    extremum_.reset();
    prompt_current();
  }

  /// Consumes one received position. Returns true once a valid calibration is available.
  bool feed(const Vec2& p, double t) {
    if (result_ || pending_.empty()) return result_.has_value();
    if (!window_start_) window_start_ = t;
    if (t - *window_start_ >= window_) {
      values_[static_cast<std::size_t>(pending_.front())] = extremum_;
      pending_.pop_front();
      extremum_.reset();
      window_start_ = t;
      if (pending_.empty()) {
        finish();
        if (result_) return true;
      }
      prompt_current();
    }
    absorb(p);
    return false;
  }

  bool done() const { return result_.has_value(); }
  std::optional<CanvasCalibration> result() const { return result_; }
  std::optional<Side> current_side() const {
    return pending_.empty() ? std::nullopt : std::optional<Side>(pending_.front());
  }
  int rejections() const { return rejections_; }
  const std::string& last_prompt() const { return last_prompt_; }

 private:
  void absorb(const Vec2& p) {
    const Side side = pending_.front();
    const double v = side == Side::kLeft || side == Side::kRight ? p.x() : p.y();
    const bool want_min = side == Side::kLeft || side == Side::kBottom;
    if (!extremum_ || (want_min ? v < *extremum_ : v > *extremum_)) extremum_ = v;
  }

  void finish() {
    CanvasCalibration c;
    c.x_min = *values_[0];
    c.x_max = *values_[1];
    c.y_min = *values_[2];
    c.y_max = *values_[3];
    c.width = width_;
    c.height = height_;
    const bool x_bad = !(c.x_max > c.x_min);
    const bool y_bad = !(c.y_max > c.y_min);
    if (!x_bad && !y_bad) {
      result_ = c;
      emit("Calibration complete");
      return;
    }
    ++rejections_;
    emit("Calibration rejected: the area is too small, please repeat");
    if (x_bad) {
      pending_.push_back(Side::kLeft);
      pending_.push_back(Side::kRight);
    }
    if (y_bad) {
      pending_.push_back(Side::kBottom);
      pending_.push_back(Side::kTop);
    }
  }

  void prompt_current() {
    if (pending_.empty()) return;
    emit(std::string("Please move to the ") + to_string(pending_.front()) + " side of the area");
  }

  void emit(const std::string& text) {
    last_prompt_ = text;
    if (prompt_sink_) prompt_sink_(text);
  }

  int width_, height_;
  double window_;
  PromptSink prompt_sink_;
  std::deque<Side> pending_;
  std::array<std::optional<double>, 4> values_{};
  std::optional<double> extremum_;
  std::optional<double> window_start_;
  std::optional<CanvasCalibration> result_;
  int rejections_ = 0;
  std::string last_prompt_;
};

struct TimedPosition {
  double t = 0.0;
  Vec2 xy = Vec2::Zero();
};

/// Runs the calibration procedure over a recorded position stream.
inline CanvasCalibration run_calibration_app(std::span<const TimedPosition> stream,
                                             const CalibrationProcedure::PromptSink& prompt_sink, int width = 1280,
                                             int height = 720, double window = 3.0) {
  CalibrationProcedure proc(width, height, window, prompt_sink);
  proc.start();
  for (const TimedPosition& p : stream) {
    if (proc.feed(p.xy, p.t)) return *proc.result();
  }
  throw Error(ErrorCode::kDegenerateGeometry, proc.rejections() > 0
                                                  ? "calibration rejected: degenerate bounds"
                                                  : "position stream ended before calibration completed");
}

// ---------------------------------------------------------------------------------------------
// Apps

struct Rect {
  int x = 0, y = 0, w = 0, h = 0;
  bool contains(const CanvasPoint& p) const { return p.x >= x && p.x < x + w && p.y >= y && p.y < y + h; }
  bool operator==(const Rect&) const = default;
};

struct Tile {
  std::string app_id;
  std::string name;
  Rect rect;
  bool highlighted = false;
  bool operator==(const Tile&) const = default;
};

/// Immutable snapshot of what the current app wants on screen.
struct RenderState {
  std::string app_id;
  std::string app_name;
  int width = 0, height = 0;
  std::optional<CanvasPoint> cursor;
  int dwell = 0;
  int click_count = 5;
  bool clicked = false;  // the event that produced this state was a UserClicked
  std::vector<Tile> tiles;
  std::optional<Rect> target;
  std::optional<Rect> home_button;
  std::string prompt;
  std::string message;
  int score = 0;
  long sequence = 0;  // sequence number of the last delivered event, -1 before any

  bool operator==(const RenderState&) const = default;
};

struct AppInfo {
  std::string id;
  std::string name;
};

/// What an app may see of and do to its environment.
struct AppContext {
  int width = 1280, height = 720;
  std::vector<AppInfo> launchable;  // every registered app except Home
  std::function<void(const CanvasCalibration&)> set_calibration;
  std::function<void(const std::string&)> prompt_sink;
};

struct AppResponse {
  std::optional<std::string> switch_to;
};

class App {
 public:
  virtual ~App() = default;
  virtual std::string id() const = 0;
  virtual std::string name() const = 0;
  virtual void enter(AppContext&) {}
  virtual AppResponse handle(const AppEvent& event, AppContext& ctx) = 0;
  virtual RenderState render(const AppContext& ctx) const = 0;
};

inline constexpr const char* kHomeAppId = "home";

inline Rect home_button_rect(const AppContext& ctx) { return {0, 0, ctx.width / 8, ctx.height / 8}; }

/// Tile menu of every launchable app; dwell-click on a tile launches it.
class HomeApp : public App {
 public:
  std::string id() const override { return kHomeAppId; }
  std::string name() const override { return "Home"; }

  AppResponse handle(const AppEvent& event, AppContext& ctx) override {
    cursor_ = event.canvas_position;
    if (event.kind == EventKind::kUserClicked) {
      for (const Tile& t : layout(ctx)) {
        if (t.rect.contains(event.canvas_position)) return {t.app_id};
      }
    }
    return {};
  }

  RenderState render(const AppContext& ctx) const override {
    RenderState s;
    s.app_id = id();
    s.app_name = name();
    s.tiles = layout(ctx);
    for (Tile& t : s.tiles) t.highlighted = cursor_ && t.rect.contains(*cursor_);
    s.prompt = "Stand still on a tile to open it";
    return s;
  }

  /// One row of equal tiles across the middle of the canvas.
  static std::vector<Tile> layout(const AppContext& ctx) {
    std::vector<Tile> tiles;
    const int n = static_cast<int>(ctx.launchable.size());
    if (n == 0) return tiles;
    const int margin = ctx.width / 20;
    const int w = (ctx.width - (n + 1) * margin) / n;
    const int h = ctx.height / 3;
    const int y = (ctx.height - h) / 2;
    for (int i = 0; i < n; ++i) {
      const auto& info = ctx.launchable[static_cast<std::size_t>(i)];
      tiles.push_back({info.id, info.name, {margin + i * (w + margin), y, w, h}, false});
    }
    return tiles;
  }

 private:
  std::optional<CanvasPoint> cursor_;
};

/// Records the physical bounds of the area and installs them as the canvas calibration.
class CalibrationApp : public App {
 public:
  explicit CalibrationApp(double window = 3.0) : window_(window) {}

  std::string id() const override { return "calibration"; }
  std::string name() const override { return "Calibration"; }

  void enter(AppContext& ctx) override {
    proc_.emplace(ctx.width, ctx.height, window_, ctx.prompt_sink);
    proc_->start();
    message_.clear();
  }

  AppResponse handle(const AppEvent& event, AppContext& ctx) override {
    if (!proc_) enter(ctx);
    if (event.kind != EventKind::kUserMoved) return {};
    if (proc_->feed(event.physical, event.timestamp)) {
      if (ctx.set_calibration) ctx.set_calibration(*proc_->result());
      return {std::string(kHomeAppId)};
    }
    return {};
  }

  RenderState render(const AppContext&) const override {
    RenderState s;
    s.app_id = id();
    s.app_name = name();
    if (proc_) {
      s.prompt = proc_->last_prompt();
      if (proc_->rejections() > 0) s.message = "rejections: " + std::to_string(proc_->rejections());
    }
    return s;
  }

 private:
  double window_;
  std::optional<CalibrationProcedure> proc_;
  std::string message_;
};

/// Demo game: dwell on the highlighted square to score; dwell on the corner button to leave.
class TargetTouchApp : public App {
 public:
  std::string id() const override { return "target-touch"; }
  std::string name() const override { return "Target Touch"; }

  void enter(AppContext&) override {
    score_ = 0;
    index_ = 0;
    message_.clear();
  }

  AppResponse handle(const AppEvent& event, AppContext& ctx) override {
    if (event.kind != EventKind::kUserClicked) return {};
    if (home_button_rect(ctx).contains(event.canvas_position)) return {std::string(kHomeAppId)};
    if (target(ctx).contains(event.canvas_position)) {
      ++score_;
      index_ = (index_ + 1) % kSpots.size();
      message_ = "Hit!";
    } else {
      message_ = "Missed";
    }
    return {};
  }

  RenderState render(const AppContext& ctx) const override {
    RenderState s;
    s.app_id = id();
    s.app_name = name();
    s.target = target(ctx);
    s.home_button = home_button_rect(ctx);
    s.score = score_;
    s.message = message_;
    s.prompt = "Walk to the square and stand still";
    return s;
  }

  int score() const { return score_; }

 private:
  static constexpr std::array<std::pair<double, double>, 5> kSpots{
      {{0.25, 0.30}, {0.75, 0.30}, {0.75, 0.75}, {0.25, 0.75}, {0.50, 0.50}}};

  Rect target(const AppContext& ctx) const {
    const int w = ctx.width / 6;
    const int h = ctx.height / 6;
    const auto [fx, fy] = kSpots[index_];
    return {static_cast<int>(fx * ctx.width) - w / 2, static_cast<int>(fy * ctx.height) - h / 2, w, h};
  }

  int score_ = 0;
  std::size_t index_ = 0;
  std::string message_;
};

// ---------------------------------------------------------------------------------------------
// Execution environment

struct EnvironmentCounters {
  long positions = 0;
  long events = 0;
  long clamped = 0;
  long app_errors = 0;
  long switches = 0;
};

/// Holds the app registry and the current app, maps positions onto the canvas and delivers
/// UserMoved / UserClicked events to the current app only. Single-threaded by contract.
class ExecutionEnvironment {
 public:
  explicit ExecutionEnvironment(CanvasCalibration calibration = {}, int click_count = 5)
      : calibration_(calibration), clicks_(click_count) {
    calibration_.validate();
    last_state_.sequence = -1;
    ctx_.set_calibration = [this](const CanvasCalibration& c) { pending_calibration_ = c; };
    ctx_.prompt_sink = [this](const std::string& text) {
      if (prompt_sink_) prompt_sink_(text);
    };
    sync_context();
  }

  /// Home, Calibration and Target Touch.
  static ExecutionEnvironment with_default_apps(CanvasCalibration calibration = {}, int click_count = 5) {
    ExecutionEnvironment env(calibration, click_count);
    env.register_app(std::make_unique<HomeApp>());
    env.register_app(std::make_unique<CalibrationApp>());
    env.register_app(std::make_unique<TargetTouchApp>());
    return env;
  }

  ExecutionEnvironment(ExecutionEnvironment&& other) noexcept { *this = std::move(other); }
  ExecutionEnvironment& operator=(ExecutionEnvironment&& other) noexcept {
    calibration_ = other.calibration_;
    clicks_ = other.clicks_;
    apps_ = std::move(other.apps_);
    current_ = other.current_;
    counters_ = other.counters_;
    last_state_ = std::move(other.last_state_);
    pending_calibration_ = other.pending_calibration_;
    prompt_sink_ = std::move(other.prompt_sink_);
    ctx_.set_calibration = [this](const CanvasCalibration& c) { pending_calibration_ = c; };
    ctx_.prompt_sink = [this](const std::string& text) {
      if (prompt_sink_) prompt_sink_(text);
    };
    sync_context();
    return *this;
  }

  void register_app(std::unique_ptr<App> app) {
    for (const auto& a : apps_) {
      if (a->id() == app->id()) throw Error(ErrorCode::kConfig, "duplicate app id " + app->id());
    }
    apps_.push_back(std::move(app));
    sync_context();
    if (apps_.back()->id() == kHomeAppId) {
      current_ = apps_.size() - 1;
      apps_[current_]->enter(ctx_);
    }
    last_state_ = render_current(nullptr);
  }

  void set_prompt_sink(std::function<void(const std::string&)> sink) { prompt_sink_ = std::move(sink); }

  /// Maps a received position and delivers the resulting events. Returns the state after the
  /// last event.
  RenderState on_position(const Vec2& physical, double timestamp = 0.0) {
    require_home();
    ++counters_.positions;
    const MappedPoint mp = map_to_canvas(physical, calibration_);
    if (mp.clamped) ++counters_.clamped;
    for (const AppEvent& ev : clicks_.process(mp.point, physical, timestamp)) last_state_ = step(ev);
    return last_state_;
  }

  /// Delivers one event to the current app, applying any app switch it requests. An app
  /// that throws is evicted to Home.
  RenderState step(const AppEvent& event) {
    require_home();
    ++counters_.events;
    try {
      const AppResponse resp = apps_[current_]->handle(event, ctx_);
      apply_pending_calibration();
      if (resp.switch_to) switch_to(*resp.switch_to);
    } catch (const std::exception& e) {
      ++counters_.app_errors;
      std::clog << "app '" << apps_[current_]->id() << "' failed: " << e.what() << "; returning to Home\n";
      switch_to(kHomeAppId);
    } catch (...) {
      ++counters_.app_errors;
      std::clog << "app '" << apps_[current_]->id() << "' failed; returning to Home\n";
      switch_to(kHomeAppId);
    }
    last_state_ = render_current(&event);
    return last_state_;
  }

  /// Operator selection from the UI bridge.
  bool select(const std::string& app_id) {
    require_home();
    if (!find(app_id)) return false;
    switch_to(app_id);
    last_state_ = render_current(nullptr);
    return true;
  }

  const std::string& current_app_id() const { return current_id_; }
  const RenderState& state() const { return last_state_; }
  const CanvasCalibration& calibration() const { return calibration_; }
  void set_calibration(const CanvasCalibration& c) {
    c.validate();
    calibration_ = c;
    sync_context();
  }
  const EnvironmentCounters& counters() const { return counters_; }
  const ClickDetector& click_detector() const { return clicks_; }
  std::vector<AppInfo> apps() const {
    std::vector<AppInfo> out;
    for (const auto& a : apps_) out.push_back({a->id(), a->name()});
    return out;
  }
  App* find(const std::string& id) const {
    for (const auto& a : apps_) {
      if (a->id() == id) return a.get();
    }
    return nullptr;
  }

 private:
  void require_home() const {
    if (!find(kHomeAppId)) throw Error(ErrorCode::kConfig, "app registry must contain the Home app");
  }

  void switch_to(const std::string& id) {
    for (std::size_t i = 0; i < apps_.size(); ++i) {
      if (apps_[i]->id() != id) continue;
      if (i != current_) ++counters_.switches;
      current_ = i;
      try {
        apps_[current_]->enter(ctx_);
      } catch (const std::exception& e) {
        ++counters_.app_errors;
        std::clog << "app '" << id << "' failed to start: " << e.what() << "\n";
        if (id != kHomeAppId) switch_to(kHomeAppId);
      }
      current_id_ = apps_[current_]->id();
      return;
    }
    // Unknown target: stay put.
  }

  void apply_pending_calibration() {
    if (pending_calibration_) {
      set_calibration(*pending_calibration_);
      pending_calibration_.reset();
    }
  }

  void sync_context() {
    ctx_.width = calibration_.width;
    ctx_.height = calibration_.height;
    ctx_.launchable.clear();
    for (const auto& a : apps_) {
      if (a->id() != kHomeAppId) ctx_.launchable.push_back({a->id(), a->name()});
    }
    if (current_ < apps_.size()) current_id_ = apps_[current_]->id();
  }

  RenderState render_current(const AppEvent* event) const {
    RenderState s;
    if (current_ < apps_.size()) s = apps_[current_]->render(ctx_);
    s.width = calibration_.width;
    s.height = calibration_.height;
    s.dwell = clicks_.dwell();
    s.click_count = clicks_.click_count();
    s.sequence = event ? event->sequence_number : last_state_.sequence;
    s.cursor = event ? std::optional<CanvasPoint>(event->canvas_position) : last_state_.cursor;
    s.clicked = event && event->kind == EventKind::kUserClicked;
    return s;
  }

  CanvasCalibration calibration_;
  ClickDetector clicks_;
  std::vector<std::unique_ptr<App>> apps_;
  std::size_t current_ = 0;
  std::string current_id_;
  AppContext ctx_;
  EnvironmentCounters counters_;
  RenderState last_state_;
  std::optional<CanvasCalibration> pending_calibration_;
  std::function<void(const std::string&)> prompt_sink_;
};

}  // namespace magpos::pca
