#include "splatloc/geometry.hpp"

#include <Eigen/Dense>
#include <cmath>

#include "splatloc/errors.hpp"

namespace splatloc {

namespace {

Mat3 unit_quat_to_rotation(const Vec4& q) {
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    Mat3 r;
    r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
         2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
         2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
    return r;
}

// dR/dq for a quaternion already on the unit sphere.
std::array<Mat3, 4> unit_quat_rotation_jacobian(const Vec4& q) {
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    std::array<Mat3, 4> d;
    d[0] << 0, -z, y,
            z, 0, -x,
            -y, x, 0;
    d[1] << 0, y, z,
            y, -2 * x, -w,
            z, w, -2 * x;
    d[2] << -2 * y, x, w,
            x, 0, z,
            -w, z, -2 * y;
    d[3] << -2 * z, -w, x,
            w, -2 * z, y,
            x, y, 0;
    for (auto& m : d) m *= 2.0;
    return d;
}

}  // namespace

Mat3 quat_to_rotation(const Vec4& q) {
    if (!q.allFinite()) throw std::invalid_argument("quat_to_rotation: non-finite quaternion");
    const double norm = q.norm();
    if (std::abs(norm - 1.0) > 1e-6) throw std::invalid_argument("quat_to_rotation: quaternion not unit length");
    return unit_quat_to_rotation(q / norm);
}

Mat3 quat_to_rotation_normalized(const Vec4& q) {
    const double norm = q.norm();
    if (!(norm > 0.0) || !q.allFinite())
        throw std::invalid_argument("quat_to_rotation_normalized: degenerate quaternion");
    return unit_quat_to_rotation(q / norm);
}

Vec4 rotation_to_quat(const Mat3& r) {
    // Shepperd's method: pick the largest diagonal pivot for stability.
    const double trace = r.trace();
    Vec4 q;
    if (trace > 0.0) {
        double s = std::sqrt(trace + 1.0) * 2.0;
        q << 0.25 * s, (r(2, 1) - r(1, 2)) / s, (r(0, 2) - r(2, 0)) / s, (r(1, 0) - r(0, 1)) / s;
    } else if (r(0, 0) > r(1, 1) && r(0, 0) > r(2, 2)) {
        double s = std::sqrt(1.0 + r(0, 0) - r(1, 1) - r(2, 2)) * 2.0;
        q << (r(2, 1) - r(1, 2)) / s, 0.25 * s, (r(0, 1) + r(1, 0)) / s, (r(0, 2) + r(2, 0)) / s;
    } else if (r(1, 1) > r(2, 2)) {
        double s = std::sqrt(1.0 + r(1, 1) - r(0, 0) - r(2, 2)) * 2.0;
        q << (r(0, 2) - r(2, 0)) / s, (r(0, 1) + r(1, 0)) / s, 0.25 * s, (r(1, 2) + r(2, 1)) / s;
    } else {
        double s = std::sqrt(1.0 + r(2, 2) - r(0, 0) - r(1, 1)) * 2.0;
        q << (r(1, 0) - r(0, 1)) / s, (r(0, 2) + r(2, 0)) / s, (r(1, 2) + r(2, 1)) / s, 0.25 * s;
    }
    if (q[0] < 0.0) q = -q;
    return q.normalized();
}

std::array<Mat3, 4> quat_to_rotation_jacobian(const Vec4& q) {
    const double norm = q.norm();
    const Vec4 u = q / norm;
    const auto unit_jac = unit_quat_rotation_jacobian(u);
    // Chain through normalization: du/dq = (I - u u^T) / |q|.
    std::array<Mat3, 4> d;
    for (int k = 0; k < 4; ++k) {
        Mat3 acc = Mat3::Zero();
        for (int j = 0; j < 4; ++j) {
            const double dj_dk = ((j == k ? 1.0 : 0.0) - u[j] * u[k]) / norm;
            acc += unit_jac[j] * dj_dk;
        }
        d[k] = acc;
    }
    return d;
}

Mat3 covariance_from(const Vec4& q, const Vec3& scale) {
    if ((scale.array() <= 0.0).any()) throw std::invalid_argument("covariance_from: scales must be positive");
    const Mat3 r = quat_to_rotation(q);
    return r * scale.array().square().matrix().asDiagonal() * r.transpose();
}

Vec3 pose_apply(const Pose& pose, const Vec3& point) {
    return pose.rotation * point + pose.translation;
}

Pose pose_compose(const Pose& a, const Pose& b) {
    return Pose{a.rotation * b.rotation, a.rotation * b.translation + a.translation};
}

Pose pose_inverse(const Pose& pose) {
    Mat3 rt = pose.rotation.transpose();
    return Pose{rt, -(rt * pose.translation)};
}

PointCloud transform_cloud(const Pose& pose, const PointCloud& cloud) {
    PointCloud out;
    out.points.reserve(cloud.size());
    for (const auto& p : cloud.points) out.points.push_back(pose_apply(pose, p));
    return out;
}

Mat3 skew(const Vec3& v) {
    Mat3 m;
    m << 0, -v.z(), v.y(),
         v.z(), 0, -v.x(),
         -v.y(), v.x(), 0;
    return m;
}

Mat3 exp_so3(const Vec3& w) {
    const double theta = w.norm();
    const Mat3 k = skew(w);
    if (theta < 1e-12) {
        return Mat3::Identity() + k + 0.5 * k * k;
    }
    const double a = std::sin(theta) / theta;
    const double b = (1.0 - std::cos(theta)) / (theta * theta);
    return Mat3::Identity() + a * k + b * k * k;
}

Vec3 log_so3(const Mat3& r) {
    const double cos_theta = std::clamp((r.trace() - 1.0) * 0.5, -1.0, 1.0);
    const double theta = std::acos(cos_theta);
    Vec3 axis(r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1));
    if (theta < 1e-9) return 0.5 * axis;
    if (theta > M_PI - 1e-6) {
        // Near pi the skew part degenerates; recover the axis from R + I.
        Mat3 m = 0.5 * (r + Mat3::Identity());
        Vec3 sq = m.diagonal().cwiseMax(0.0);
        int k;
        sq.maxCoeff(&k);
        Vec3 a = m.col(k) / std::sqrt(sq[k]);
        a.normalize();
        if (axis.dot(a) < 0.0) a = -a;
        return theta * a;
    }
    return (theta / (2.0 * std::sin(theta))) * axis;
}

Mat3 nearest_rotation(const Mat3& m) {
    Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Mat3 r = svd.matrixU() * svd.matrixV().transpose();
    if (r.determinant() < 0.0) {
        Vec3 d(1.0, 1.0, -1.0);
        r = svd.matrixU() * d.asDiagonal() * svd.matrixV().transpose();
    }
    return r;
}

double rotation_angle_between(const Mat3& a, const Mat3& b) {
    const Mat3 rel = a.transpose() * b;
    const double c = std::clamp((rel.trace() - 1.0) * 0.5, -1.0, 1.0);
    return std::acos(c);
}

bool is_valid_rotation(const Mat3& r, double tol) {
    return (r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff() <= tol &&
           std::abs(r.determinant() - 1.0) <= tol;
}

void validate_pose(const Pose& pose, double tol) {
    if (!pose.rotation.allFinite() || !pose.translation.allFinite())
        throw std::invalid_argument("pose: non-finite entries");
    if (!is_valid_rotation(pose.rotation, tol))
        throw std::invalid_argument("pose: rotation is not orthonormal with det +1");
}

void validate_camera(const Camera& camera) {
    if (camera.fx <= 0.0 || camera.fy <= 0.0)
        throw std::invalid_argument("camera: focal lengths must be positive");
    if (camera.width <= 0 || camera.height <= 0)
        throw std::invalid_argument("camera: image size must be positive");
    if (!(camera.near > 0.0 && camera.near < camera.far))
        throw std::invalid_argument("camera: require 0 < near < far");
}

void validate_map(const GaussianMap& map) {
    if (map.empty()) throw std::invalid_argument("map: empty gaussian map");
    for (const auto& g : map.gaussians) {
        if (!g.mean.allFinite() || !g.quat.allFinite() || !g.log_scale.allFinite() || !g.color.allFinite())
            throw std::invalid_argument("map: non-finite gaussian parameters");
    }
}

}  // namespace splatloc
