#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace demofuse {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Quat = Eigen::Quaterniond;  // Hamilton convention, stored/serialized as (w,x,y,z)

/// Rigid transform mapping child-frame coordinates into the parent frame:
/// x_parent = q * x_child + t.
struct Pose {
  Quat q = Quat::Identity();
  Vec3 t = Vec3::Zero();

  static Pose identity() { return {}; }
};

Mat3 skew(const Vec3& v);

/// a then b, i.e. the transform of b expressed through a. Rotation is
/// renormalized.
Pose compose(const Pose& a, const Pose& b);

Pose inverse(const Pose& p);

Vec3 transform_point(const Pose& p, const Vec3& x);

/// Angle of the relative rotation in [0, pi]. Invariant under sign flips
/// of either argument (quaternion double cover).
double geodesic_angle(const Quat& a, const Quat& b);

/// SO(3) exponential: axis-angle vector (rad) to unit quaternion. Uses the
/// small-angle branch below |v| = 1e-8.
Quat exp_so3(const Vec3& v);

/// SO(3) logarithm: axis-angle with magnitude in [0, pi]. The input is
/// canonicalized to w >= 0 first, so log_so3(-q) == log_so3(q).
Vec3 log_so3(const Quat& q);

/// Sign-canonical form (w >= 0); applied on serialization only.
Quat canonical(const Quat& q);

}  // namespace demofuse
