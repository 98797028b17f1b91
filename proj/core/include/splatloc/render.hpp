#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include "splatloc/types.hpp"

namespace splatloc::render {

// Screen-space footprint of one gaussian after EWA projection.
struct Splat2D {
    std::int32_t index = -1;  // gaussian index in the map
    Vec2 mean2d = Vec2::Zero();
    Mat2 cov2d = Mat2::Zero();  // pixels^2, regularized
    Mat2 conic = Mat2::Zero();  // cov2d^{-1}
    double depth = 0.0;         // camera-frame z, meters
    Vec3 p_cam = Vec3::Zero();
};

// Gradients of a scalar image loss w.r.t. stored gaussian parameters, plus an
// optional camera-pose tangent gradient (rotation increment, translation).
struct RenderGradients {
    std::vector<Vec3> d_mean;
    std::vector<Vec4> d_quat;
    std::vector<Vec3> d_log_scale;
    std::vector<Vec3> d_color;
    std::vector<double> d_opacity_logit;
    std::vector<double> screen_grad_norm;  // |dL/d mean2d| per gaussian
    std::vector<std::uint8_t> visible;
    Vec6 d_pose = Vec6::Zero();  // (theta_x, theta_y, theta_z, tau_x, tau_y, tau_z)
    bool has_pose_gradient = false;
};

struct ForwardCache;  // contributor lists and projection state for backward

struct RenderedImage {
    Image image;
    std::vector<double> alpha;  // H*W accumulated opacity
    std::shared_ptr<const ForwardCache> cache;
};

// Projects one gaussian through the pinhole model with the EWA affine
// covariance approximation. Returns nullopt when the depth leaves (near, far)
// or the 3-sigma footprint misses the image.
std::optional<Splat2D> project_gaussian(const Gaussian& g, const Camera& cam, const Pose& camera_to_world);

// Front-to-back alpha compositing of the whole map into an image. The result
// keeps per-pixel contributor lists so render_backward can run on it.
RenderedImage render(const GaussianMap& map, const Camera& cam, const Pose& camera_to_world);

// Analytic gradients of sum(upstream .* image) through compositing, the 2D
// gaussian evaluation, projection, and the covariance factorization.
// `rendered` must come from render() on the same map, camera and pose.
RenderGradients render_backward(const GaussianMap& map, const Camera& cam, const Pose& camera_to_world,
                                const RenderedImage& rendered, const Image& upstream,
                                bool with_pose_gradient = false);

// Tangent update used by pose refinement and by the pose gradient:
// rotation <- exp(skew(theta)) * rotation, translation <- translation + tau.
Pose apply_pose_tangent(const Pose& pose, const Vec6& tangent);

}  // namespace splatloc::render
