#include "splatloc/localize.hpp"

#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <limits>

#include "splatloc/errors.hpp"
#include "splatloc/geometry.hpp"
#include "splatloc/losses.hpp"
#include "splatloc/math.hpp"
#include "splatloc/optimizer.hpp"
#include "splatloc/render.hpp"

namespace splatloc {

namespace {

struct Pair {
    Vec3 source;  // scan point in the current world estimate
    Vec3 target;  // matched gaussian mean
    double weight;
    double residual2;
};

double refinement_loss(const Image& rendered, const Image& gt, const LocalizeConfig& config, Image* upstream) {
    const double lambda = config.refine_l1_only ? 0.0 : config.lambda_rgb;
    const RgbLossResult r = rgb_loss(rendered, rendered, gt, lambda);
    if (upstream) {
        *upstream = r.d_adjusted;
        for (std::size_t i = 0; i < upstream->data.size(); ++i) upstream->data[i] += r.d_rendered.data[i];
    }
    return r.value;
}

}  // namespace

std::pair<double, double> pose_error(const Pose& estimate, const Pose& ground_truth) {
    const double deg = rad_to_deg(rotation_angle_between(estimate.rotation, ground_truth.rotation));
    return {deg, (estimate.translation - ground_truth.translation).norm()};
}

Pose weighted_icp_step(const PointCloud& scan, const GaussianMap& map, const NnIndex& index, const Pose& init,
                       double cutoff, double trim_fraction) {
    if (scan.empty()) throw std::invalid_argument("weighted_icp_step: empty scan");
    if (index.size() != map.size()) throw std::invalid_argument("weighted_icp_step: index does not match the map");

    const double cutoff2 = cutoff * cutoff;
    std::vector<Pair> pairs;
    pairs.reserve(scan.size());
    for (const Vec3& p : scan.points) {
        const Vec3 s = pose_apply(init, p);
        const NnResult nn = index.nearest(s);
        if (nn.index < 0 || nn.squared_distance > cutoff2) continue;
        const Gaussian& g = map.gaussians[static_cast<std::size_t>(nn.index)];
        pairs.push_back({s, g.mean, sigmoid(g.gcs_logit), nn.squared_distance});
    }
    if (pairs.size() < 3) throw DegenerateRegistrationError("weighted_icp_step: fewer than 3 correspondences");

    // Drop the worst residuals but never below the 3-pair minimum.
    if (trim_fraction > 0.0 && pairs.size() > 3) {
        std::size_t drop = static_cast<std::size_t>(std::floor(trim_fraction * static_cast<double>(pairs.size())));
        drop = std::min(drop, pairs.size() - 3);
        if (drop > 0) {
            std::nth_element(pairs.begin(), pairs.begin() + static_cast<std::ptrdiff_t>(pairs.size() - drop),
                             pairs.end(), [](const Pair& a, const Pair& b) { return a.residual2 < b.residual2; });
            pairs.resize(pairs.size() - drop);
        }
    }

    double weight_sum = 0.0;
    Vec3 s_bar = Vec3::Zero(), t_bar = Vec3::Zero();
    for (const Pair& p : pairs) {
        weight_sum += p.weight;
        s_bar += p.weight * p.source;
        t_bar += p.weight * p.target;
    }
    if (weight_sum < 1e-8) throw DegenerateRegistrationError("weighted_icp_step: total correspondence weight < 1e-8");
    s_bar /= weight_sum;
    t_bar /= weight_sum;

    Mat3 h = Mat3::Zero();
    for (const Pair& p : pairs) h += p.weight * (p.source - s_bar) * (p.target - t_bar).transpose();

    const Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Mat3 u = svd.matrixU();
    const Mat3 v = svd.matrixV();
    Mat3 guard = Mat3::Identity();
    guard(2, 2) = (v * u.transpose()).determinant();
    const Mat3 rotation = v * guard * u.transpose();
    const Vec3 translation = t_bar - rotation * s_bar;

    Pose out;
    out.rotation = rotation * init.rotation;
    out.translation = rotation * init.translation + translation;
    return out;
}

RefineResult refine_pose_by_render(const GaussianMap& map, const Camera& cam, const Image& gt_image, const Pose& pose,
                                   int steps, const LocalizeConfig& config) {
    if (gt_image.width != cam.width || gt_image.height != cam.height)
        throw std::invalid_argument("refine_pose_by_render: image does not match the camera");

    RefineResult result;
    result.pose = pose;
    result.residual = std::numeric_limits<double>::infinity();

    Pose current = pose;
    AdamState adam_rot(3), adam_trans(3);

    // Evaluate-then-move: the pose after the last update still gets scored.
    for (int step = 0; step <= steps; ++step) {
        const render::RenderedImage rendered = render::render(map, cam, current);
        Image upstream;
        const double loss = refinement_loss(rendered.image, gt_image, config, step < steps ? &upstream : nullptr);
        if (step == 0) result.initial_residual = loss;
        if (loss < result.residual) {
            result.residual = loss;
            result.pose = current;
        }
        if (step == steps) break;

        const render::RenderGradients grads =
            render::render_backward(map, cam, current, rendered, upstream, true);
        if (!grads.d_pose.allFinite()) {
            result.aborted = true;
            return result;
        }

        double rot[3] = {0, 0, 0}, trans[3] = {0, 0, 0};
        adam_rot.advance_step();
        adam_trans.advance_step();
        adam_rot.apply(rot, grads.d_pose.data(), 3, config.lr_rotation);
        adam_trans.apply(trans, grads.d_pose.data() + 3, 3, config.lr_translation);
        Vec6 tangent;
        tangent << rot[0], rot[1], rot[2], trans[0], trans[1], trans[2];
        current = render::apply_pose_tangent(current, tangent);
    }
    return result;
}

LocalizeResult localize(const GaussianMap& map, const PointCloud& scan, const Image& gt_image, const Camera& cam,
                        const Pose& init, const LocalizeConfig& config, const Pose* gt_pose) {
    if (config.outer_iterations < 1) throw std::invalid_argument("localize: outer_iterations must be >= 1");
    if (map.empty()) throw std::invalid_argument("localize: empty map");

    PointCloud means;
    means.points.reserve(map.size());
    for (const Gaussian& g : map.gaussians) means.points.push_back(g.mean);
    const NnIndex index(means);

    LocalizeResult result;
    result.pose = init;

    for (int outer = 0; outer < config.outer_iterations; ++outer) {
        const Pose before = result.pose;

        bool icp_degenerate = false;
        std::string icp_what;
        try {
            result.pose =
                weighted_icp_step(scan, map, index, result.pose, config.icp_cutoff, config.icp_trim_fraction);
        } catch (const DegenerateRegistrationError& e) {
            icp_degenerate = true;
            icp_what = e.what();
        }

        const RefineResult refined =
            refine_pose_by_render(map, cam, gt_image, result.pose, config.refine_steps, config);
        if (icp_degenerate && !(refined.residual < refined.initial_residual))
            throw DegenerateRegistrationError(icp_what + "; render refinement did not reduce the residual either");
        result.pose = refined.pose;
        if (refined.aborted) result.trace.refine_aborted = true;

        LocalizeStep step;
        step.pose = result.pose;
        step.residual = refined.residual;
        if (gt_pose) {
            const auto [deg, meters] = pose_error(result.pose, *gt_pose);
            step.rotation_error_deg = deg;
            step.translation_error_m = meters;
        } else {
            step.rotation_error_deg = std::numeric_limits<double>::quiet_NaN();
            step.translation_error_m = std::numeric_limits<double>::quiet_NaN();
        }
        result.trace.steps.push_back(step);

        const double rot_delta = rotation_angle_between(before.rotation, result.pose.rotation);
        const double trans_delta = (before.translation - result.pose.translation).norm();
        if (rot_delta < config.tol_rotation && trans_delta < config.tol_translation) break;
    }
    return result;
}

}  // namespace splatloc
