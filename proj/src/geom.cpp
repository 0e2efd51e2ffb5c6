#include "demofuse/geom.hpp"

#include <cmath>

namespace demofuse {

Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
      -v.y(), v.x(), 0.0;
  return m;
}

Pose compose(const Pose& a, const Pose& b) {
  Pose out;
  out.q = (a.q * b.q).normalized();
  out.t = a.q * b.t + a.t;
  return out;
}

Pose inverse(const Pose& p) {
  Pose out;
  out.q = p.q.conjugate();
  out.t = -(out.q * p.t);
  return out;
}

Vec3 transform_point(const Pose& p, const Vec3& x) { return p.q * x + p.t; }

double geodesic_angle(const Quat& a, const Quat& b) {
  const Quat rel = a.conjugate() * b;
  // atan2 form is robust for both tiny and near-pi angles; |w| folds the
  // double cover.
  return 2.0 * std::atan2(rel.vec().norm(), std::abs(rel.w()));
}

Quat exp_so3(const Vec3& v) {
  const double angle = v.norm();
  if (angle < 1e-8) {
    Quat q(1.0, 0.5 * v.x(), 0.5 * v.y(), 0.5 * v.z());
    return q.normalized();
  }
  const double half = 0.5 * angle;
  const Vec3 axis = v / angle;
  const double s = std::sin(half);
  return Quat(std::cos(half), s * axis.x(), s * axis.y(), s * axis.z());
}

Vec3 log_so3(const Quat& q) {
  const Quat qc = canonical(q.normalized());
  const double vn = qc.vec().norm();
  if (vn < 1e-12) {
    return 2.0 * qc.vec();
  }
  const double angle = 2.0 * std::atan2(vn, qc.w());
  return (angle / vn) * qc.vec();
}

Quat canonical(const Quat& q) {
  if (q.w() < 0.0) {
    return Quat(-q.w(), -q.x(), -q.y(), -q.z());
  }
  return q;
}

}  // namespace demofuse
