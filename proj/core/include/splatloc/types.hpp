#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "splatloc/math.hpp"

namespace splatloc {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Mat23 = Eigen::Matrix<double, 2, 3>;

// One anisotropic splat. Scale is stored as log(stddev) per axis, opacity and
// the geometric confidence score (gcs) as logits, so unconstrained gradient
// steps cannot leave the valid ranges.
struct Gaussian {
    Vec3 mean = Vec3::Zero();            // meters, world frame
    Vec4 quat = Vec4(1, 0, 0, 0);        // unit quaternion (w,x,y,z)
    Vec3 log_scale = Vec3::Zero();       // log of per-axis stddev in meters
    Vec3 color = Vec3(0.5, 0.5, 0.5);    // RGB in [0,1]
    double opacity_logit = 0.0;
    double gcs_logit = 0.0;

    Vec3 scale() const { return log_scale.array().exp(); }
    double opacity() const { return sigmoid(opacity_logit); }
    double gcs() const { return sigmoid(gcs_logit); }
};

struct GaussianMap {
    std::vector<Gaussian> gaussians;
    Vec3 background = Vec3::Zero();

    std::size_t size() const { return gaussians.size(); }
    bool empty() const { return gaussians.empty(); }
};

struct PointCloud {
    std::vector<Vec3> points;

    std::size_t size() const { return points.size(); }
    bool empty() const { return points.empty(); }
};

// Rigid transform: p_out = rotation * p_in + translation.
// Sensor poses are sensor-to-world.
struct Pose {
    Mat3 rotation = Mat3::Identity();
    Vec3 translation = Vec3::Zero();

    static Pose identity() { return Pose{}; }
};

// Pinhole intrinsics. Pixel (row r, col c) samples the image plane at
// continuous coordinates (u, v) = (c, r).
struct Camera {
    double fx = 0.0, fy = 0.0;
    double cx = 0.0, cy = 0.0;
    int width = 0, height = 0;
    double near = 0.05, far = 100.0;
};

// Row-major H x W x 3 image with values in [0,1].
struct Image {
    int width = 0;
    int height = 0;
    std::vector<double> data;  // height * width * 3

    Image() = default;
    Image(int w, int h, double fill = 0.0) : width(w), height(h), data(static_cast<std::size_t>(w) * h * 3, fill) {}

    double& at(int row, int col, int ch) { return data[(static_cast<std::size_t>(row) * width + col) * 3 + ch]; }
    double at(int row, int col, int ch) const { return data[(static_cast<std::size_t>(row) * width + col) * 3 + ch]; }
    std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
    bool same_shape(const Image& other) const { return width == other.width && height == other.height; }
};

}  // namespace splatloc
