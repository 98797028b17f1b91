#pragma once

#include <array>

#include "splatloc/types.hpp"

namespace splatloc {

// Rotation matrix of a unit quaternion (w,x,y,z). The input is normalized
// internally; |q| must already be within 1e-6 of 1.
Mat3 quat_to_rotation(const Vec4& q);

// Same map without the unit-length precondition; normalizes any non-zero q.
// Used where parameters are mid-update and may have drifted off the sphere.
Mat3 quat_to_rotation_normalized(const Vec4& q);

// Inverse of quat_to_rotation; returns the representative with w >= 0.
Vec4 rotation_to_quat(const Mat3& rotation);

// Partial derivatives of quat_to_rotation w.r.t. the four raw quaternion
// components, including the internal normalization.
std::array<Mat3, 4> quat_to_rotation_jacobian(const Vec4& q);

// Sigma = R * diag(s)^2 * R^T for per-axis stddevs s (all > 0).
Mat3 covariance_from(const Vec4& q, const Vec3& scale);

Vec3 pose_apply(const Pose& pose, const Vec3& point);
Pose pose_compose(const Pose& a, const Pose& b);  // (a ∘ b)(p) = a(b(p))
Pose pose_inverse(const Pose& pose);

PointCloud transform_cloud(const Pose& pose, const PointCloud& cloud);

// Rodrigues formula: rotation about axis w by angle |w|.
Mat3 exp_so3(const Vec3& w);
Vec3 log_so3(const Mat3& rotation);

Mat3 skew(const Vec3& v);

// Nearest rotation matrix in Frobenius norm (polar projection, det +1).
Mat3 nearest_rotation(const Mat3& m);

// Angle between two rotations in radians.
double rotation_angle_between(const Mat3& a, const Mat3& b);

bool is_valid_rotation(const Mat3& r, double tol = 1e-9);
void validate_pose(const Pose& pose, double tol = 1e-9);
void validate_camera(const Camera& camera);
void validate_map(const GaussianMap& map);

}  // namespace splatloc
