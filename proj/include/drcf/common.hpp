// SPDX-License-Identifier: Apache-2.0
//
// Shared constants, error types and the kinematic state update used by every
// simulator in the library.

#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace drcf {

/// Global sampling period (s). All series in the library live on this grid.
inline constexpr double kDt = 0.1;

/// Index of a time on the dt grid, robust to accumulated rounding.
inline long grid_index(double t) { return std::lround(t / kDt); }

// ─── Errors ──────────────────────────────────────────────────────────────────
// Each error family maps onto one CLI exit code.

enum class ErrorKind : int { kConfig = 2, kData = 3, kNumeric = 4, kInternal = 5 };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }
  int exit_code() const noexcept { return static_cast<int>(kind_); }

 private:
  ErrorKind kind_;
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& w) : Error(ErrorKind::kConfig, w) {}
};
struct DataError : Error {
  explicit DataError(const std::string& w) : Error(ErrorKind::kData, w) {}
};
/// Malformed input row; carries the 1-based line number.
struct ParseError : DataError {
  ParseError(std::size_t line, const std::string& w)
      : DataError("line " + std::to_string(line) + ": " + w), line(line) {}
  std::size_t line;
};
/// Required column absent from a CSV header.
struct SchemaError : DataError {
  explicit SchemaError(const std::string& w) : DataError(w) {}
};
struct NumericError : Error {
  explicit NumericError(const std::string& w) : Error(ErrorKind::kNumeric, w) {}
};
struct InternalError : Error {
  explicit InternalError(const std::string& w) : Error(ErrorKind::kInternal, w) {}
};

inline void require(bool cond, ErrorKind kind, std::string_view msg) {
  if (cond) return;
  switch (kind) {
    case ErrorKind::kConfig: throw ConfigError(std::string(msg));
    case ErrorKind::kData: throw DataError(std::string(msg));
    case ErrorKind::kNumeric: throw NumericError(std::string(msg));
    case ErrorKind::kInternal: throw InternalError(std::string(msg));
  }
}

// ─── Kinematics ──────────────────────────────────────────────────────────────

struct KinematicState {
  double x = 0.0;  // m
  double v = 0.0;  // m/s
};

struct KinematicStep {
  KinematicState next;
  double applied_accel = 0.0;  // acceleration actually integrated
  bool clipped = false;        // requested accel would have reversed the vehicle
};

/// One dt step of the closed-loop update
///   v' = v + a dt,  x' = x + v dt + a dt^2 / 2.
/// Speeds never go negative: a braking request that would reverse the vehicle is
/// replaced by the acceleration that stops it exactly at the end of the step, so
/// the update identity above holds for `applied_accel` in every case.
inline KinematicStep kinematic_step(KinematicState s, double accel, double dt = kDt) {
  KinematicStep out;
  out.applied_accel = accel;
  if (s.v + accel * dt < 0.0) {
    out.applied_accel = -s.v / dt;
    out.clipped = true;
  }
  const double a = out.applied_accel;
  out.next.v = out.clipped ? 0.0 : s.v + a * dt;
  out.next.x = s.x + s.v * dt + 0.5 * a * dt * dt;
  return out;
}

/// 64-bit FNV-1a, used for config hashes embedded in artifacts.
inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = kDigits[v & 0xF];
  return s;
}

}  // namespace drcf
