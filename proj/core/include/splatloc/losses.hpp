#pragma once

#include <vector>

#include "splatloc/kdtree.hpp"
#include "splatloc/types.hpp"

namespace splatloc {

struct LossWeights {
    double lambda_rgb = 0.2;
    double lambda_geom = 0.1;
    double lambda_prob = 0.1;
    double lambda_scale = 100.0;
    double lambda_perc = 0.5;  // reserved; the perceptual term is always 0
    double k = 20.0;           // confidence sigmoid steepness
    double d = 0.9;            // confidence sigmoid midpoint
    double scale_max = 0.5;    // meters; hinge threshold of the scale loss
    // Nearest-neighbor distances enter the confidence losses squared; set
    // false to use plain euclidean distances instead.
    bool squared_nn_distance = true;
};

// 1/(1 + exp(k(x-d))): decreasing in x, 0.5 at x = d. Saturates instead of
// overflowing for large |x|.
double asym_sigmoid(double x, double k, double d);

struct GeomLossResult {
    double value = 0.0;
    std::vector<double> d_gcs_logit;
};

// Mean squared gap between each gaussian's confidence and the value the
// nearest-point distance prescribes. Distances are constants per step, so
// gradient flows to the confidence logits only.
GeomLossResult geom_loss(const GaussianMap& map, const NnIndex& index, const LossWeights& weights);

struct ProbLossResult {
    double value = 0.0;
    std::vector<Vec3> d_mean;
    std::vector<double> d_gcs_logit;
};

// mean(ln(1-g) + d/(1-g)) over gaussians, d the nearest-point distance. The
// correspondence is frozen per step; gradient flows to means and confidence.
ProbLossResult prob_loss(const GaussianMap& map, const NnIndex& index, const LossWeights& weights);

struct ScaleLossResult {
    double value = 0.0;
    std::vector<Vec3> d_log_scale;
};

// Per-axis hinge on scales above scale_max, averaged over axes and gaussians.
ScaleLossResult scale_loss(const GaussianMap& map, const LossWeights& weights);

struct RgbLossResult {
    double value = 0.0;
    Image d_adjusted;  // gradient through the L1 term
    Image d_rendered;  // gradient through the D-SSIM term
};

// (1-lambda_rgb) L1(adjusted, gt) + lambda_rgb (1 - SSIM(rendered, gt)) / 2.
// With no appearance model, pass the rendered image as `adjusted` and add the
// two gradient images.
RgbLossResult rgb_loss(const Image& rendered, const Image& adjusted, const Image& gt, double lambda_rgb);

// Per-image affine color correction: out = gain * in + bias, per channel.
struct AppearanceParams {
    Vec3 gain = Vec3::Ones();
    Vec3 bias = Vec3::Zero();
};

Image apply_appearance(const Image& rendered, const AppearanceParams& params);

struct LossBreakdown {
    double rgb = 0.0;
    double geom = 0.0;
    double prob = 0.0;
    double scale = 0.0;
    double total = 0.0;
    // Weighted parameter-space gradients of the non-photometric terms. The
    // photometric gradient lives in image space and flows through the
    // renderer's backward pass separately.
    std::vector<Vec3> d_mean;
    std::vector<double> d_gcs_logit;
    std::vector<Vec3> d_log_scale;
};

LossBreakdown total_loss(const RgbLossResult& rgb, const GeomLossResult& geom, const ProbLossResult& prob,
                         const ScaleLossResult& scale, const LossWeights& weights);

}  // namespace splatloc
