#pragma once

/**
 * @file geometry.hpp
 * @brief Vector and unit-quaternion kernel plus the gesture-to-transform
 * pipeline shared by every peer.
 *
 * Internal math is 64-bit. Rotation deltas are quantized to float32 only when
 * they cross the wire (see QuaternionWire), so every peer applies identical
 * bits in identical order.
 */

#include <array>
#include <cmath>
#include <cstdint>
#include <span>

namespace cvsync {

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  constexpr Vec3() = default;
  constexpr Vec3(double x_, double y_, double z_) : x(x_), y(y_), z(z_) {}

  constexpr bool operator==(const Vec3&) const = default;

  constexpr Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  constexpr Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  constexpr Vec3 operator-() const { return {-x, -y, -z}; }
  constexpr Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  constexpr Vec3 operator/(double s) const { return {x / s, y / s, z / s}; }
  constexpr Vec3& operator+=(const Vec3& o) {
    x += o.x;
    y += o.y;
    z += o.z;
    return *this;
  }
  constexpr Vec3& operator-=(const Vec3& o) {
    x -= o.x;
    y -= o.y;
    z -= o.z;
    return *this;
  }

  double norm() const { return std::sqrt(x * x + y * y + z * z); }
  constexpr double norm_squared() const { return x * x + y * y + z * z; }
  bool finite() const { return std::isfinite(x) && std::isfinite(y) && std::isfinite(z); }
};

constexpr Vec3 operator*(double s, const Vec3& v) { return v * s; }
constexpr double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
constexpr Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}

// Throws invalid_argument for zero or non-finite input.
Vec3 normalized(const Vec3& v);

using Mat3 = std::array<std::array<double, 3>, 3>;

/// Unit quaternion (x, y, z, w) with w the scalar part.
///
/// Every factory either renormalizes or verifies the norm, so a value is
/// always unit within kUnitTolerance.
class UnitQuaternion {
 public:
  static constexpr double kUnitTolerance = 1e-6;

  constexpr UnitQuaternion() = default;

  static constexpr UnitQuaternion identity() { return {}; }

  /// Normalizes (x, y, z, w). Throws invalid_argument on zero or non-finite input.
  static UnitQuaternion from_components(double x, double y, double z, double w);

  /// Throws invalid_argument when axis is zero or angle is non-finite.
  static UnitQuaternion from_axis_angle(const Vec3& axis, double angle_rad);

  /// Keeps the components verbatim when their norm is already within
  /// kUnitTolerance of 1, otherwise normalizes like from_components.
  static UnitQuaternion from_near_unit(double x, double y, double z, double w);

  /// Nearest rotation quaternion to a proper rotation matrix (Shepperd's method).
  static UnitQuaternion from_matrix(const Mat3& m);

  constexpr double x() const { return x_; }
  constexpr double y() const { return y_; }
  constexpr double z() const { return z_; }
  constexpr double w() const { return w_; }

  constexpr bool operator==(const UnitQuaternion&) const = default;

  UnitQuaternion conjugate() const;
  UnitQuaternion inverse() const { return conjugate(); }

  Vec3 rotate(const Vec3& v) const;
  Mat3 to_matrix() const;
  double norm() const;

  /// Rotation angle in [0, pi] of this * other^-1.
  double angle_to(const UnitQuaternion& other) const;

 private:
  constexpr UnitQuaternion(double x, double y, double z, double w) : x_(x), y_(y), z_(z), w_(w) {}

  double x_ = 0.0;
  double y_ = 0.0;
  double z_ = 0.0;
  double w_ = 1.0;
};

UnitQuaternion quat_from_axis_angle(const Vec3& axis, double angle_rad);

/// Hamilton product a*b, renormalized. Rotating by the result equals rotating
/// by b first, then by a.
UnitQuaternion quat_multiply(const UnitQuaternion& a, const UnitQuaternion& b);

inline UnitQuaternion operator*(const UnitQuaternion& a, const UnitQuaternion& b) {
  return quat_multiply(a, b);
}

// 16 bytes: x, y, z, w as little-endian IEEE-754 float32.
using QuaternionWire = std::array<std::uint8_t, 16>;

inline constexpr double kWireNormTolerance = 1e-3;

QuaternionWire encode_quat(const UnitQuaternion& q);

/// Widens to double and renormalizes components that are not unit within
/// UnitQuaternion::kUnitTolerance; already-unit input is kept verbatim so
/// encode(decode(encode(q))) reproduces encode(q) byte for byte.
/// Throws wire_error when the encoded norm deviates from 1 by
/// kWireNormTolerance or more, or a component is not finite.
UnitQuaternion decode_quat(std::span<const std::uint8_t, 16> bytes);
inline UnitQuaternion decode_quat(const QuaternionWire& bytes) {
  return decode_quat(std::span<const std::uint8_t, 16>(bytes));
}

/// decode(encode(q)): the value every receiver will compute for q.
UnitQuaternion quantize(const UnitQuaternion& q);

/// Camera looks down -z of its local frame; +x is right, +y is up.
struct CameraPose {
  Vec3 position;
  UnitQuaternion orientation;

  Vec3 right() const { return orientation.rotate({1.0, 0.0, 0.0}); }
  Vec3 up() const { return orientation.rotate({0.0, 1.0, 0.0}); }
  Vec3 forward() const { return orientation.rotate({0.0, 0.0, -1.0}); }
};

/// Screen-space pan translation in points; +x rightward, +y downward.
struct PanGesture {
  double dx = 0.0;
  double dy = 0.0;
  CameraPose camera;
};

struct PinchGesture {
  double factor = 1.0;
};

inline constexpr double kDefaultPanSensitivity = 0.01;  // rad per screen point
inline constexpr double kScaleMin = 0.05;
inline constexpr double kScaleMax = 20.0;

struct ModelTransform {
  UnitQuaternion orientation;
  double scale = 1.0;
  Vec3 translation;

  bool operator==(const ModelTransform&) const = default;

  Vec3 apply(const Vec3& model_point) const {
    return orientation.rotate(model_point * scale) + translation;
  }
};

/// World-frame rotation delta for a pan, built as q_up(sensitivity*dx) *
/// q_right(sensitivity*dy) about the camera's axes. A downward drag (dy > 0)
/// is a positive rotation about camera right, tipping the top toward the viewer.
UnitQuaternion pan_to_rotation(const PanGesture& g, double sensitivity = kDefaultPanSensitivity);

/// orientation' = normalize(dq * orientation).
ModelTransform apply_rotation_delta(const ModelTransform& t, const UnitQuaternion& dq);

/// scale' = clamp(scale * factor, kScaleMin, kScaleMax). Throws
/// invalid_argument for a non-positive or non-finite factor.
ModelTransform apply_scale_delta(const ModelTransform& t, const PinchGesture& g);

}  // namespace cvsync
