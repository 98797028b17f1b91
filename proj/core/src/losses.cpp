#include "splatloc/losses.hpp"

#include <cmath>
#include <stdexcept>

#include "splatloc/image_quality.hpp"
#include "splatloc/math.hpp"
#include "splatloc/parallel.hpp"

namespace splatloc {

namespace {

constexpr double kGcsCeiling = 1.0 - 1e-4;  // bounds ln(1-g) and 1/(1-g)
constexpr std::size_t kBlock = 256;

double nn_distance(const NnIndex& index, const Vec3& mean, bool squared, Vec3* direction) {
    const NnResult nn = index.nearest(mean);
    const Vec3 diff = mean - index.points()[static_cast<std::size_t>(nn.index)];
    if (squared) {
        if (direction) *direction = 2.0 * diff;
        return nn.squared_distance;
    }
    const double d = std::sqrt(nn.squared_distance);
    if (direction) *direction = d > 1e-12 ? Vec3(diff / d) : Vec3::Zero();
    return d;
}

double reduce(const std::vector<double>& partials) {
    double s = 0.0;
    for (double p : partials) s += p;
    return s;
}

}  // namespace

double asym_sigmoid(double x, double k, double d) { return sigmoid(-k * (x - d)); }

GeomLossResult geom_loss(const GaussianMap& map, const NnIndex& index, const LossWeights& weights) {
    if (map.empty()) throw std::invalid_argument("geom_loss: empty map");
    const std::size_t n = map.size();
    GeomLossResult r;
    r.d_gcs_logit.assign(n, 0.0);
    const std::size_t blocks = (n + kBlock - 1) / kBlock;
    std::vector<double> partial(blocks, 0.0);
    const double inv_n = 1.0 / static_cast<double>(n);
    parallel_blocks(n, kBlock, [&](std::size_t b, std::size_t begin, std::size_t end) {
        double s = 0.0;
        for (std::size_t i = begin; i < end; ++i) {
            const Gaussian& g = map.gaussians[i];
            const double d_i = nn_distance(index, g.mean, weights.squared_nn_distance, nullptr);
            const double target = asym_sigmoid(d_i, weights.k, weights.d);
            const double gcs = g.gcs();
            const double gap = gcs - target;
            s += gap * gap;
            r.d_gcs_logit[i] = inv_n * 2.0 * gap * sigmoid_derivative(gcs);
        }
        partial[b] = s;
    });
    r.value = reduce(partial) * inv_n;
    return r;
}

ProbLossResult prob_loss(const GaussianMap& map, const NnIndex& index, const LossWeights& weights) {
    if (map.empty()) throw std::invalid_argument("prob_loss: empty map");
    const std::size_t n = map.size();
    ProbLossResult r;
    r.d_mean.assign(n, Vec3::Zero());
    r.d_gcs_logit.assign(n, 0.0);
    const std::size_t blocks = (n + kBlock - 1) / kBlock;
    std::vector<double> partial(blocks, 0.0);
    const double inv_n = 1.0 / static_cast<double>(n);
    parallel_blocks(n, kBlock, [&](std::size_t b, std::size_t begin, std::size_t end) {
        double s = 0.0;
        for (std::size_t i = begin; i < end; ++i) {
            const Gaussian& g = map.gaussians[i];
            Vec3 dd;
            const double d_i = nn_distance(index, g.mean, weights.squared_nn_distance, &dd);
            const double gcs = std::min(g.gcs(), kGcsCeiling);
            const double one_minus = 1.0 - gcs;
            s += std::log(one_minus) + d_i / one_minus;
            // The ceiling caps the magnitudes; the logit chain still uses the
            // true sigmoid slope so saturated confidences keep a pull.
            const double d_gcs = -1.0 / one_minus + d_i / (one_minus * one_minus);
            r.d_gcs_logit[i] = inv_n * d_gcs * sigmoid_derivative(g.gcs());
            r.d_mean[i] = inv_n / one_minus * dd;
        }
        partial[b] = s;
    });
    r.value = reduce(partial) * inv_n;
    return r;
}

ScaleLossResult scale_loss(const GaussianMap& map, const LossWeights& weights) {
    if (map.empty()) throw std::invalid_argument("scale_loss: empty map");
    const std::size_t n = map.size();
    ScaleLossResult r;
    r.d_log_scale.assign(n, Vec3::Zero());
    const std::size_t blocks = (n + kBlock - 1) / kBlock;
    std::vector<double> partial(blocks, 0.0);
    const double inv_n3 = 1.0 / (3.0 * static_cast<double>(n));
    parallel_blocks(n, kBlock, [&](std::size_t b, std::size_t begin, std::size_t end) {
        double s = 0.0;
        for (std::size_t i = begin; i < end; ++i) {
            const Vec3 scale = map.gaussians[i].scale();
            for (int axis = 0; axis < 3; ++axis) {
                const double excess = scale[axis] - weights.scale_max;
                if (excess > 0.0) {
                    s += excess * excess;
                    r.d_log_scale[i][axis] = inv_n3 * 2.0 * excess * scale[axis];
                }
            }
        }
        partial[b] = s;
    });
    r.value = reduce(partial) * inv_n3;
    return r;
}

RgbLossResult rgb_loss(const Image& rendered, const Image& adjusted, const Image& gt, double lambda_rgb) {
    if (!rendered.same_shape(gt) || !adjusted.same_shape(gt) || gt.width <= 0)
        throw std::invalid_argument("rgb_loss: image dimensions mismatch");
    RgbLossResult r;
    r.d_adjusted = Image(gt.width, gt.height);
    const double inv_n = 1.0 / static_cast<double>(gt.data.size());
    double l1 = 0.0;
    for (std::size_t i = 0; i < gt.data.size(); ++i) {
        const double diff = adjusted.data[i] - gt.data[i];
        l1 += std::abs(diff);
        const double sign = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
        r.d_adjusted.data[i] = (1.0 - lambda_rgb) * sign * inv_n;
    }
    l1 *= inv_n;

    const SsimGradient s = ssim_with_gradient(rendered, gt);
    r.value = (1.0 - lambda_rgb) * l1 + lambda_rgb * (1.0 - s.value) / 2.0;
    r.d_rendered = s.d_first;
    for (double& v : r.d_rendered.data) v *= -lambda_rgb / 2.0;
    return r;
}

Image apply_appearance(const Image& rendered, const AppearanceParams& params) {
    Image out = rendered;
    for (int y = 0; y < out.height; ++y)
        for (int x = 0; x < out.width; ++x)
            for (int ch = 0; ch < 3; ++ch)
                out.at(y, x, ch) = params.gain[ch] * rendered.at(y, x, ch) + params.bias[ch];
    return out;
}

LossBreakdown total_loss(const RgbLossResult& rgb, const GeomLossResult& geom, const ProbLossResult& prob,
                         const ScaleLossResult& scale, const LossWeights& weights) {
    LossBreakdown b;
    b.rgb = rgb.value;
    b.geom = geom.value;
    b.prob = prob.value;
    b.scale = scale.value;
    b.total = b.rgb + weights.lambda_geom * b.geom + weights.lambda_prob * b.prob + weights.lambda_scale * b.scale;

    const std::size_t n = prob.d_mean.size();
    b.d_mean.assign(n, Vec3::Zero());
    b.d_gcs_logit.assign(n, 0.0);
    b.d_log_scale.assign(n, Vec3::Zero());
    for (std::size_t i = 0; i < n; ++i) {
        b.d_mean[i] = weights.lambda_prob * prob.d_mean[i];
        b.d_gcs_logit[i] = weights.lambda_geom * geom.d_gcs_logit[i] + weights.lambda_prob * prob.d_gcs_logit[i];
        b.d_log_scale[i] = weights.lambda_scale * scale.d_log_scale[i];
    }
    return b;
}

}  // namespace splatloc
