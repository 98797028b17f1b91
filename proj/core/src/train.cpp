#include "splatloc/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "splatloc/errors.hpp"
#include "splatloc/geometry.hpp"
#include "splatloc/image_quality.hpp"
#include "splatloc/kdtree.hpp"
#include "splatloc/math.hpp"
#include "splatloc/metrics.hpp"
#include "splatloc/optimizer.hpp"
#include "splatloc/render.hpp"

namespace splatloc {

namespace {

constexpr double kLogitClamp = 15.0;
constexpr double kLogScaleMin = -9.2;  // ~0.1 mm
constexpr double kLogScaleMax = 1.4;   // ~4 m

struct VoxelKey {
    std::int64_t x, y, z;
    bool operator==(const VoxelKey& o) const { return x == o.x && y == o.y && z == o.z; }
};

struct VoxelHash {
    std::size_t operator()(const VoxelKey& k) const {
        std::size_t h = std::hash<std::int64_t>()(k.x);
        h ^= std::hash<std::int64_t>()(k.y) + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
        h ^= std::hash<std::int64_t>()(k.z) + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
        return h;
    }
};

Gaussian seed_gaussian(const Vec3& point, double nn_distance) {
    Gaussian g;
    g.mean = point;
    const double s = std::clamp(nn_distance, 0.01, 0.5);
    g.log_scale = Vec3::Constant(std::log(s));
    g.quat = Vec4(1, 0, 0, 0);
    g.color = Vec3(0.5, 0.5, 0.5);
    g.opacity_logit = logit(0.1);
    g.gcs_logit = logit(0.5);
    return g;
}

// Flat remap table for a per-gaussian class with `stride` scalars each.
std::vector<long> flat_keep(const std::vector<long>& parent, int stride) {
    std::vector<long> keep(parent.size() * static_cast<std::size_t>(stride));
    for (std::size_t i = 0; i < parent.size(); ++i)
        for (int k = 0; k < stride; ++k)
            keep[i * stride + k] = parent[i] >= 0 ? parent[i] * stride + k : -1;
    return keep;
}

void enforce_map_invariants(GaussianMap& map) {
    for (Gaussian& g : map.gaussians) {
        const double qn = g.quat.norm();
        if (qn < 1e-12 || !std::isfinite(qn))
            g.quat = Vec4(1, 0, 0, 0);
        else
            g.quat /= qn;
        for (int k = 0; k < 3; ++k) {
            g.log_scale[k] = std::clamp(g.log_scale[k], kLogScaleMin, kLogScaleMax);
            g.color[k] = std::clamp(g.color[k], 0.0, 1.0);
        }
        g.opacity_logit = std::clamp(g.opacity_logit, -kLogitClamp, kLogitClamp);
        g.gcs_logit = std::clamp(g.gcs_logit, -kLogitClamp, kLogitClamp);
    }
}

struct ParamGrads {
    std::vector<Vec3> mean;
    std::vector<Vec4> quat;
    std::vector<Vec3> log_scale;
    std::vector<Vec3> color;
    std::vector<double> opacity;
    std::vector<double> gcs;
};

bool all_finite(const ParamGrads& g, std::size_t* bad_index) {
    for (std::size_t i = 0; i < g.mean.size(); ++i) {
        if (!g.mean[i].allFinite() || !g.quat[i].allFinite() || !g.log_scale[i].allFinite() ||
            !g.color[i].allFinite() || !std::isfinite(g.opacity[i]) || !std::isfinite(g.gcs[i])) {
            *bad_index = i;
            return false;
        }
    }
    return true;
}

[[noreturn]] void abort_non_finite(const char* where, int iteration, const GaussianMap& map, const LossScalars& loss,
                                   long gaussian) {
    std::ostringstream msg;
    msg << "non-finite " << where << " at iteration " << iteration << "; map size " << map.size()
        << "; losses rgb=" << loss.rgb << " geom=" << loss.geom << " prob=" << loss.prob << " scale=" << loss.scale;
    if (gaussian >= 0) {
        const Gaussian& g = map.gaussians[static_cast<std::size_t>(gaussian)];
        msg << "; gaussian " << gaussian << " mean=(" << g.mean.transpose() << ") log_scale=("
            << g.log_scale.transpose() << ") opacity_logit=" << g.opacity_logit;
    }
    throw NumericError(msg.str());
}

}  // namespace

PointCloud accumulate_lidar(const std::vector<PointCloud>& scans, const std::vector<Pose>& poses, double voxel_size) {
    if (scans.size() != poses.size()) throw std::invalid_argument("accumulate_lidar: scan/pose count mismatch");
    if (scans.empty()) throw std::invalid_argument("accumulate_lidar: no scans");

    PointCloud world;
    for (std::size_t i = 0; i < scans.size(); ++i)
        for (const Vec3& p : scans[i].points) world.points.push_back(pose_apply(poses[i], p));

    if (voxel_size <= 0.0) return world;

    PointCloud filtered;
    std::unordered_set<VoxelKey, VoxelHash> seen;
    seen.reserve(world.points.size());
    for (const Vec3& p : world.points) {
        const VoxelKey key{static_cast<std::int64_t>(std::floor(p.x() / voxel_size)),
                           static_cast<std::int64_t>(std::floor(p.y() / voxel_size)),
                           static_cast<std::int64_t>(std::floor(p.z() / voxel_size))};
        if (seen.insert(key).second) filtered.points.push_back(p);
    }
    return filtered;
}

GaussianMap init_map(const PointCloud& cloud, const PointCloud& extra) {
    if (cloud.points.empty()) throw std::invalid_argument("init_map: empty cloud");
    PointCloud combined = cloud;
    combined.points.insert(combined.points.end(), extra.points.begin(), extra.points.end());

    const NnIndex index(combined);
    GaussianMap map;
    map.gaussians.reserve(combined.points.size());
    for (std::size_t i = 0; i < combined.points.size(); ++i) {
        const NnResult nn = index.nearest_excluding(combined.points[i], static_cast<std::int64_t>(i));
        const double d = nn.index >= 0 ? std::sqrt(nn.squared_distance) : 0.5;
        map.gaussians.push_back(seed_gaussian(combined.points[i], d));
    }
    return map;
}

DensifyOutcome densify_and_prune(const GaussianMap& map, const DensifyStats& stats, const TrainConfig& config,
                                 double split_scale_cutoff, std::mt19937& rng) {
    if (stats.screen_grad_sum.size() != map.size() || stats.contribution_count.size() != map.size())
        throw std::invalid_argument("densify_and_prune: stats size mismatch");

    std::normal_distribution<double> gauss(0.0, 1.0);
    DensifyOutcome out;
    out.map.background = map.background;
    for (std::size_t i = 0; i < map.size(); ++i) {
        const Gaussian& g = map.gaussians[i];
        if (sigmoid(g.opacity_logit) < config.prune_opacity) {
            ++out.pruned;
            continue;
        }
        const long n = std::max(1l, stats.contribution_count[i]);
        const double avg_grad = stats.screen_grad_sum[i] / static_cast<double>(n);
        const bool hot = stats.contribution_count[i] > 0 && avg_grad > config.densify_grad_threshold;
        const double max_scale = std::exp(g.log_scale.maxCoeff());

        if (hot && max_scale > split_scale_cutoff) {
            // Two children sampled inside the parent footprint, scaled down.
            const Mat3 rot = quat_to_rotation_normalized(g.quat);
            const Vec3 scales = g.log_scale.array().exp();
            for (int child = 0; child < 2; ++child) {
                Gaussian c = g;
                const Vec3 draw(gauss(rng), gauss(rng), gauss(rng));
                c.mean = g.mean + rot * (scales.cwiseProduct(draw));
                c.log_scale = g.log_scale - Vec3::Constant(std::log(1.6));
                out.map.gaussians.push_back(c);
                out.parent.push_back(-1);
            }
            ++out.split;
        } else {
            out.map.gaussians.push_back(g);
            out.parent.push_back(static_cast<long>(i));
            if (hot) {
                out.map.gaussians.push_back(g);
                out.parent.push_back(-1);
                ++out.cloned;
            }
        }
    }
    return out;
}

TrainResult train(const std::vector<TrainView>& views, const std::vector<PointCloud>& scans,
                  const std::vector<Pose>& poses, const TrainConfig& config, const PointCloud& extra_init) {
    if (views.empty()) throw std::invalid_argument("train: no training views");
    if (config.iterations <= 0) throw std::invalid_argument("train: iterations must be positive");
    for (double lr : {config.lr_position, config.lr_rotation, config.lr_log_scale, config.lr_color,
                      config.lr_opacity, config.lr_gcs})
        if (!(lr > 0.0)) throw std::invalid_argument("train: learning rates must be positive");

    const PointCloud cloud = accumulate_lidar(scans, poses, config.voxel_size);
    const NnIndex geo_index(cloud);  // frozen for the whole run

    GaussianMap map = init_map(cloud, extra_init);
    map.background = config.background;

    // Split cutoff: twice the mean point spacing of the accumulated cloud.
    double mean_nn = 0.0;
    if (cloud.points.size() > 1) {
        for (std::size_t i = 0; i < cloud.points.size(); ++i)
            mean_nn += std::sqrt(geo_index.nearest_excluding(cloud.points[i], static_cast<std::int64_t>(i))
                                     .squared_distance);
        mean_nn /= static_cast<double>(cloud.points.size());
    } else {
        mean_nn = 0.1;
    }
    const double split_cutoff = 2.0 * mean_nn;

    // Holdout split: every k-th view is evaluation-only.
    std::vector<std::size_t> train_ids, holdout_ids;
    for (std::size_t i = 0; i < views.size(); ++i) {
        if (config.holdout_every > 0 && (i + 1) % static_cast<std::size_t>(config.holdout_every) == 0)
            holdout_ids.push_back(i);
        else
            train_ids.push_back(i);
    }
    if (train_ids.empty()) train_ids.assign(holdout_ids.begin(), holdout_ids.end());
    if (holdout_ids.empty()) holdout_ids = train_ids;

    std::mt19937 rng(config.seed);
    std::vector<std::size_t> order = train_ids;
    std::size_t cursor = order.size();  // forces a shuffle before the first pick

    const std::size_t n0 = map.size();
    AdamState adam_mean(n0 * 3), adam_quat(n0 * 4), adam_scale(n0 * 3), adam_color(n0 * 3), adam_opacity(n0),
        adam_gcs(n0);
    std::vector<AppearanceParams> appearance(views.size());
    std::vector<AdamState> adam_appearance;
    if (config.appearance_model) adam_appearance.assign(views.size(), AdamState(6));

    DensifyStats stats;
    stats.resize(map.size());

    TrainReport report;
    report.history.reserve(static_cast<std::size_t>(config.iterations));

    for (int iter = 1; iter <= config.iterations; ++iter) {
        if (cursor >= order.size()) {
            std::shuffle(order.begin(), order.end(), rng);
            cursor = 0;
        }
        const std::size_t view_id = order[cursor++];
        const TrainView& view = views[view_id];

        const render::RenderedImage rendered = render::render(map, view.camera, view.pose);
        const Image adjusted =
            config.appearance_model ? apply_appearance(rendered.image, appearance[view_id]) : rendered.image;

        const RgbLossResult rgb = rgb_loss(rendered.image, adjusted, view.image, config.weights.lambda_rgb);
        const GeomLossResult geom = geom_loss(map, geo_index, config.weights);
        const ProbLossResult prob = prob_loss(map, geo_index, config.weights);
        const ScaleLossResult scale = scale_loss(map, config.weights);
        const LossBreakdown breakdown = total_loss(rgb, geom, prob, scale, config.weights);

        LossScalars scalars{breakdown.rgb, breakdown.geom, breakdown.prob, breakdown.scale, breakdown.total};
        if (!std::isfinite(breakdown.total)) abort_non_finite("loss", iter, map, scalars, -1);

        // Image-space gradient feeding the renderer. The L1 part differentiates
        // the adjusted image; with the affine correction active it chains back
        // through the per-channel gain.
        Image upstream = rgb.d_rendered;
        if (config.appearance_model) {
            const Vec3& gain = appearance[view_id].gain;
            for (int row = 0; row < upstream.height; ++row)
                for (int col = 0; col < upstream.width; ++col)
                    for (int ch = 0; ch < 3; ++ch)
                        upstream.at(row, col, ch) += gain[ch] * rgb.d_adjusted.at(row, col, ch);
        } else {
            for (std::size_t i = 0; i < upstream.data.size(); ++i) upstream.data[i] += rgb.d_adjusted.data[i];
        }

        const render::RenderGradients rg = render::render_backward(map, view.camera, view.pose, rendered, upstream);

        ParamGrads grads;
        grads.mean.resize(map.size());
        grads.quat = rg.d_quat;
        grads.log_scale.resize(map.size());
        grads.color = rg.d_color;
        grads.opacity = rg.d_opacity_logit;
        grads.gcs = breakdown.d_gcs_logit;
        for (std::size_t i = 0; i < map.size(); ++i) {
            grads.mean[i] = rg.d_mean[i] + breakdown.d_mean[i];
            grads.log_scale[i] = rg.d_log_scale[i] + breakdown.d_log_scale[i];
        }

        std::size_t bad = 0;
        if (!all_finite(grads, &bad)) abort_non_finite("gradient", iter, map, scalars, static_cast<long>(bad));

        adam_mean.advance_step();
        adam_quat.advance_step();
        adam_scale.advance_step();
        adam_color.advance_step();
        adam_opacity.advance_step();
        adam_gcs.advance_step();
        // Per-gaussian storage is not contiguous, so stage flat buffers.
        {
            const std::size_t n = map.size();
            std::vector<double> p3(n * 3), g3(n * 3), p4(n * 4), g4(n * 4), p1(n), g1(n);

            auto apply_vec3 = [&](AdamState& st, double lr, auto get, auto set, const std::vector<Vec3>& gr) {
                for (std::size_t i = 0; i < n; ++i) {
                    const Vec3 v = get(map.gaussians[i]);
                    for (int k = 0; k < 3; ++k) {
                        p3[i * 3 + k] = v[k];
                        g3[i * 3 + k] = gr[i][k];
                    }
                }
                st.apply(p3.data(), g3.data(), n * 3, lr);
                for (std::size_t i = 0; i < n; ++i) set(map.gaussians[i], Vec3(p3[i * 3], p3[i * 3 + 1], p3[i * 3 + 2]));
            };
            apply_vec3(adam_mean, config.lr_position, [](const Gaussian& g) { return g.mean; },
                       [](Gaussian& g, const Vec3& v) { g.mean = v; }, grads.mean);
            apply_vec3(adam_scale, config.lr_log_scale, [](const Gaussian& g) { return g.log_scale; },
                       [](Gaussian& g, const Vec3& v) { g.log_scale = v; }, grads.log_scale);
            apply_vec3(adam_color, config.lr_color, [](const Gaussian& g) { return g.color; },
                       [](Gaussian& g, const Vec3& v) { g.color = v; }, grads.color);

            for (std::size_t i = 0; i < n; ++i)
                for (int k = 0; k < 4; ++k) {
                    p4[i * 4 + k] = map.gaussians[i].quat[k];
                    g4[i * 4 + k] = grads.quat[i][k];
                }
            adam_quat.apply(p4.data(), g4.data(), n * 4, config.lr_rotation);
            for (std::size_t i = 0; i < n; ++i)
                map.gaussians[i].quat = Vec4(p4[i * 4], p4[i * 4 + 1], p4[i * 4 + 2], p4[i * 4 + 3]);

            for (std::size_t i = 0; i < n; ++i) {
                p1[i] = map.gaussians[i].opacity_logit;
                g1[i] = grads.opacity[i];
            }
            adam_opacity.apply(p1.data(), g1.data(), n, config.lr_opacity);
            for (std::size_t i = 0; i < n; ++i) map.gaussians[i].opacity_logit = p1[i];

            for (std::size_t i = 0; i < n; ++i) {
                p1[i] = map.gaussians[i].gcs_logit;
                g1[i] = grads.gcs[i];
            }
            adam_gcs.apply(p1.data(), g1.data(), n, config.lr_gcs);
            for (std::size_t i = 0; i < n; ++i) map.gaussians[i].gcs_logit = p1[i];
        }

        if (config.appearance_model) {
            double ap[6], ag[6];
            Vec3 d_gain = Vec3::Zero(), d_bias = Vec3::Zero();
            for (int row = 0; row < rendered.image.height; ++row)
                for (int col = 0; col < rendered.image.width; ++col)
                    for (int ch = 0; ch < 3; ++ch) {
                        d_gain[ch] += rgb.d_adjusted.at(row, col, ch) * rendered.image.at(row, col, ch);
                        d_bias[ch] += rgb.d_adjusted.at(row, col, ch);
                    }
            AppearanceParams& app = appearance[view_id];
            for (int k = 0; k < 3; ++k) {
                ap[k] = app.gain[k];
                ap[3 + k] = app.bias[k];
                ag[k] = d_gain[k];
                ag[3 + k] = d_bias[k];
            }
            AdamState& st = adam_appearance[view_id];
            st.advance_step();
            st.apply(ap, ag, 6, config.lr_color);
            for (int k = 0; k < 3; ++k) {
                app.gain[k] = ap[k];
                app.bias[k] = ap[3 + k];
            }
        }

        enforce_map_invariants(map);

        for (std::size_t i = 0; i < map.size(); ++i) {
            if (!rg.visible[i]) continue;
            stats.screen_grad_sum[i] += rg.screen_grad_norm[i];
            ++stats.contribution_count[i];
        }

        if (config.densify_interval > 0 && iter % config.densify_interval == 0 && iter < config.iterations) {
            DensifyOutcome outcome = densify_and_prune(map, stats, config, split_cutoff, rng);
            map = std::move(outcome.map);
            adam_mean.remap(flat_keep(outcome.parent, 3));
            adam_quat.remap(flat_keep(outcome.parent, 4));
            adam_scale.remap(flat_keep(outcome.parent, 3));
            adam_color.remap(flat_keep(outcome.parent, 3));
            adam_opacity.remap(flat_keep(outcome.parent, 1));
            adam_gcs.remap(flat_keep(outcome.parent, 1));
            stats.resize(map.size());
        }

        report.history.push_back(scalars);
    }

    double psnr_sum = 0.0, ssim_sum = 0.0;
    for (std::size_t id : holdout_ids) {
        const render::RenderedImage r = render::render(map, views[id].camera, views[id].pose);
        const Image adj = config.appearance_model ? apply_appearance(r.image, appearance[id]) : r.image;
        psnr_sum += psnr(adj, views[id].image);
        ssim_sum += ssim(adj, views[id].image);
    }
    report.holdout_psnr = psnr_sum / static_cast<double>(holdout_ids.size());
    report.holdout_ssim = ssim_sum / static_cast<double>(holdout_ids.size());

    PointCloud means;
    means.points.reserve(map.size());
    for (const Gaussian& g : map.gaussians) means.points.push_back(g.mean);
    report.chamfer_vs_cloud = chamfer(means, cloud);
    report.fscore_at_1 = fscore(means, cloud, 1.0).fscore;
    report.final_count = map.size();

    OptimizerSnapshot snapshot{std::move(adam_mean),  std::move(adam_quat),    std::move(adam_scale),
                               std::move(adam_color), std::move(adam_opacity), std::move(adam_gcs),
                               config.iterations};
    return {std::move(map), std::move(report), std::move(snapshot)};
}

}  // namespace splatloc
