#include "cvsync/geometry.hpp"

#include <algorithm>
#include <bit>
#include <string>

#include "cvsync/bytes.hpp"
#include "cvsync/error.hpp"

namespace cvsync {

Vec3 normalized(const Vec3& v) {
  const double n = v.norm();
  if (!(n > 0.0) || !std::isfinite(n)) {
    throw Error(ErrorCode::invalid_argument, "cannot normalize a zero or non-finite vector");
  }
  return v / n;
}

UnitQuaternion UnitQuaternion::from_components(double x, double y, double z, double w) {
  const double n = std::sqrt(x * x + y * y + z * z + w * w);
  if (!(n > 0.0) || !std::isfinite(n)) {
    throw Error(ErrorCode::invalid_argument, "quaternion components must be finite and nonzero");
  }
  return UnitQuaternion(x / n, y / n, z / n, w / n);
}

UnitQuaternion UnitQuaternion::from_near_unit(double x, double y, double z, double w) {
  const double n = std::sqrt(x * x + y * y + z * z + w * w);
  if (std::isfinite(n) && std::abs(n - 1.0) <= kUnitTolerance) {
    return UnitQuaternion(x, y, z, w);
  }
  return from_components(x, y, z, w);
}

UnitQuaternion UnitQuaternion::from_axis_angle(const Vec3& axis, double angle_rad) {
  if (!std::isfinite(angle_rad)) {
    throw Error(ErrorCode::invalid_argument, "rotation angle must be finite");
  }
  const double n = axis.norm();
  if (!(n > 0.0) || !std::isfinite(n)) {
    throw Error(ErrorCode::invalid_argument, "rotation axis must be nonzero");
  }
  const double s = std::sin(0.5 * angle_rad) / n;
  return from_components(axis.x * s, axis.y * s, axis.z * s, std::cos(0.5 * angle_rad));
}

UnitQuaternion UnitQuaternion::from_matrix(const Mat3& m) {
  const double trace = m[0][0] + m[1][1] + m[2][2];
  double x, y, z, w;
  if (trace > 0.0) {
    const double s = 2.0 * std::sqrt(1.0 + trace);
    w = 0.25 * s;
    x = (m[2][1] - m[1][2]) / s;
    y = (m[0][2] - m[2][0]) / s;
    z = (m[1][0] - m[0][1]) / s;
  } else if (m[0][0] > m[1][1] && m[0][0] > m[2][2]) {
    const double s = 2.0 * std::sqrt(1.0 + m[0][0] - m[1][1] - m[2][2]);
    w = (m[2][1] - m[1][2]) / s;
    x = 0.25 * s;
    y = (m[0][1] + m[1][0]) / s;
    z = (m[0][2] + m[2][0]) / s;
  } else if (m[1][1] > m[2][2]) {
    const double s = 2.0 * std::sqrt(1.0 + m[1][1] - m[0][0] - m[2][2]);
    w = (m[0][2] - m[2][0]) / s;
    x = (m[0][1] + m[1][0]) / s;
    y = 0.25 * s;
    z = (m[1][2] + m[2][1]) / s;
  } else {
    const double s = 2.0 * std::sqrt(1.0 + m[2][2] - m[0][0] - m[1][1]);
    w = (m[1][0] - m[0][1]) / s;
    x = (m[0][2] + m[2][0]) / s;
    y = (m[1][2] + m[2][1]) / s;
    z = 0.25 * s;
  }
  return from_components(x, y, z, w);
}

UnitQuaternion UnitQuaternion::conjugate() const { return UnitQuaternion(-x_, -y_, -z_, w_); }

Vec3 UnitQuaternion::rotate(const Vec3& v) const {
  // v' = v + 2w(u x v) + 2 u x (u x v), u = vector part
  const Vec3 u{x_, y_, z_};
  const Vec3 t = cross(u, v) * 2.0;
  return v + t * w_ + cross(u, t);
}

Mat3 UnitQuaternion::to_matrix() const {
  const double xx = x_ * x_, yy = y_ * y_, zz = z_ * z_;
  const double xy = x_ * y_, xz = x_ * z_, yz = y_ * z_;
  const double wx = w_ * x_, wy = w_ * y_, wz = w_ * z_;
  return Mat3{{
      {1.0 - 2.0 * (yy + zz), 2.0 * (xy - wz), 2.0 * (xz + wy)},
      {2.0 * (xy + wz), 1.0 - 2.0 * (xx + zz), 2.0 * (yz - wx)},
      {2.0 * (xz - wy), 2.0 * (yz + wx), 1.0 - 2.0 * (xx + yy)},
  }};
}

double UnitQuaternion::norm() const { return std::sqrt(x_ * x_ + y_ * y_ + z_ * z_ + w_ * w_); }

double UnitQuaternion::angle_to(const UnitQuaternion& other) const {
  // p = this * conj(other), unnormalized; atan2 keeps precision near zero.
  const double ox = -other.x_, oy = -other.y_, oz = -other.z_, ow = other.w_;
  const double px = w_ * ox + x_ * ow + y_ * oz - z_ * oy;
  const double py = w_ * oy - x_ * oz + y_ * ow + z_ * ox;
  const double pz = w_ * oz + x_ * oy - y_ * ox + z_ * ow;
  const double pw = w_ * ow - x_ * ox - y_ * oy - z_ * oz;
  return 2.0 * std::atan2(std::sqrt(px * px + py * py + pz * pz), std::abs(pw));
}

UnitQuaternion quat_from_axis_angle(const Vec3& axis, double angle_rad) {
  return UnitQuaternion::from_axis_angle(axis, angle_rad);
}

UnitQuaternion quat_multiply(const UnitQuaternion& a, const UnitQuaternion& b) {
  return UnitQuaternion::from_components(
      a.w() * b.x() + a.x() * b.w() + a.y() * b.z() - a.z() * b.y(),
      a.w() * b.y() - a.x() * b.z() + a.y() * b.w() + a.z() * b.x(),
      a.w() * b.z() + a.x() * b.y() - a.y() * b.x() + a.z() * b.w(),
      a.w() * b.w() - a.x() * b.x() - a.y() * b.y() - a.z() * b.z());
}

QuaternionWire encode_quat(const UnitQuaternion& q) {
  ByteWriter w;
  w.f32(static_cast<float>(q.x()));
  w.f32(static_cast<float>(q.y()));
  w.f32(static_cast<float>(q.z()));
  w.f32(static_cast<float>(q.w()));
  QuaternionWire out{};
  std::copy(w.bytes().begin(), w.bytes().end(), out.begin());
  return out;
}

UnitQuaternion decode_quat(std::span<const std::uint8_t, 16> bytes) {
  ByteReader r{ByteView(bytes)};
  const double x = r.f32("quat.x");
  const double y = r.f32("quat.y");
  const double z = r.f32("quat.z");
  const double w = r.f32("quat.w");
  if (!std::isfinite(x) || !std::isfinite(y) || !std::isfinite(z) || !std::isfinite(w)) {
    throw Error(ErrorCode::wire_error, "quaternion component is not finite");
  }
  const double n = std::sqrt(x * x + y * y + z * z + w * w);
  if (!(std::abs(n - 1.0) < kWireNormTolerance)) {
    throw Error(ErrorCode::wire_error, "quaternion norm " + std::to_string(n) + " is not unit");
  }
  return UnitQuaternion::from_near_unit(x, y, z, w);
}

UnitQuaternion quantize(const UnitQuaternion& q) { return decode_quat(encode_quat(q)); }

UnitQuaternion pan_to_rotation(const PanGesture& g, double sensitivity) {
  if (!std::isfinite(g.dx) || !std::isfinite(g.dy)) {
    throw Error(ErrorCode::invalid_argument, "pan translation must be finite");
  }
  if (!(sensitivity > 0.0) || !std::isfinite(sensitivity)) {
    throw Error(ErrorCode::invalid_argument, "pan sensitivity must be positive");
  }
  const auto about_up = quat_from_axis_angle(g.camera.up(), sensitivity * g.dx);
  const auto about_right = quat_from_axis_angle(g.camera.right(), sensitivity * g.dy);
  return quat_multiply(about_up, about_right);
}

ModelTransform apply_rotation_delta(const ModelTransform& t, const UnitQuaternion& dq) {
  ModelTransform out = t;
  out.orientation = quat_multiply(dq, t.orientation);
  return out;
}

ModelTransform apply_scale_delta(const ModelTransform& t, const PinchGesture& g) {
  if (!(g.factor > 0.0) || !std::isfinite(g.factor)) {
    throw Error(ErrorCode::invalid_argument, "pinch factor must be positive and finite");
  }
  ModelTransform out = t;
  out.scale = std::clamp(t.scale * g.factor, kScaleMin, kScaleMax);
  return out;
}

}  // namespace cvsync
