#pragma once

#include <charconv>
#include <cstdio>
#include <system_error>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "magpos/types.hpp"

namespace magpos::wire {

// Position stream grammar, one message per fix:
//   message = "POS" SP decimal SP decimal LF
//   decimal = ["-"] 1*DIGIT "." 6DIGIT
// x and y are meters in the local survey frame.

inline constexpr std::size_t kMaxLineLength = 256;

inline std::string format_position(double x, double y) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "POS %.6f %.6f\n", x, y);
  return buf;
}

inline std::string format_position(const PositionFix& fix) { return format_position(fix.x, fix.y); }

namespace detail {

inline std::optional<double> parse_decimal(std::string_view s) {
  std::size_t i = 0;
  if (i < s.size() && s[i] == '-') ++i;
  const std::size_t int_begin = i;
  while (i < s.size() && s[i] >= '0' && s[i] <= '9') ++i;
  if (i == int_begin || i >= s.size() || s[i] != '.') return std::nullopt;
  ++i;
  const std::size_t frac_begin = i;
  while (i < s.size() && s[i] >= '0' && s[i] <= '9') ++i;
  if (i != s.size() || i - frac_begin != 6) return std::nullopt;
  double v = 0.0;
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size()) return std::nullopt;
  return v;
}

}  // namespace detail

/// Parses one message without its trailing LF. nullopt when the line breaks the grammar.
inline std::optional<Vec2> parse_position(std::string_view line) {
  if (line.size() < 4 || line.substr(0, 4) != "POS ") return std::nullopt;
  const std::string_view rest = line.substr(4);
  const auto sp = rest.find(' ');
  if (sp == std::string_view::npos) return std::nullopt;
  const auto x = detail::parse_decimal(rest.substr(0, sp));
  const auto y = detail::parse_decimal(rest.substr(sp + 1));
  if (!x || !y) return std::nullopt;
  return Vec2(*x, *y);
}

/// Splits a byte stream into LF-terminated lines. Lines longer than the limit are
/// discarded up to their terminator and reported as oversized.
class LineFramer {
 public:
  explicit LineFramer(std::size_t max_line_length = kMaxLineLength) : max_(max_line_length) {}

  struct Line {
    std::string text;
    bool oversized = false;
  };

  std::vector<Line> feed(std::string_view bytes) {
    std::vector<Line> out;
    for (char c : bytes) {
      if (c == '\n') {
        out.push_back({discarding_ ? std::string() : buffer_, discarding_});
        buffer_.clear();
        discarding_ = false;
        continue;
      }
      if (discarding_) continue;
      if (buffer_.size() >= max_) {
        buffer_.clear();
        discarding_ = true;
        continue;
      }
      buffer_.push_back(c);
    }
    return out;
  }

  void reset() {
    buffer_.clear();
    discarding_ = false;
  }

  std::size_t pending() const { return buffer_.size(); }
  std::size_t max_line_length() const { return max_; }

 private:
  std::size_t max_;
  std::string buffer_;
  bool discarding_ = false;
};

}  // namespace magpos::wire
