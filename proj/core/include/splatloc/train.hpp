#pragma once

#include <random>
#include <vector>

#include "splatloc/losses.hpp"
#include "splatloc/optimizer.hpp"
#include "splatloc/types.hpp"

namespace splatloc {

struct TrainConfig {
    int iterations = 500;
    // Per-class step sizes for the adaptive-moment updates.
    double lr_position = 1.6e-5;
    double lr_rotation = 1e-3;
    double lr_log_scale = 5e-3;
    double lr_color = 2.5e-3;
    double lr_opacity = 5e-2;
    double lr_gcs = 5e-2;
    int densify_interval = 100;  // iterations between densify/prune passes; 0 disables
    double densify_grad_threshold = 2e-4;
    double prune_opacity = 0.005;
    double voxel_size = 0.05;  // accumulation downsample cell; <= 0 keeps raw points
    int holdout_every = 8;     // every k-th view is held out of training; 0 trains on all
    unsigned seed = 0;
    bool appearance_model = false;
    Vec3 background = Vec3::Zero();  // compositing background the optimizer assumes
    LossWeights weights;
};

struct TrainView {
    Image image;
    Camera camera;
    Pose pose;
};

struct LossScalars {
    double rgb = 0.0;
    double geom = 0.0;
    double prob = 0.0;
    double scale = 0.0;
    double total = 0.0;
};

struct TrainReport {
    std::vector<LossScalars> history;  // one record per iteration
    double holdout_psnr = 0.0;         // means over held-out views (training views when none held out)
    double holdout_ssim = 0.0;
    double chamfer_vs_cloud = 0.0;  // final map means vs the accumulated cloud
    double fscore_at_1 = 0.0;
    std::size_t final_count = 0;
};

// Optimizer moments at the end of training, one state per parameter class,
// sized 3n/4n/3n/3n/n/n. Lets a checkpoint resume without a moment cold start.
struct OptimizerSnapshot {
    AdamState mean, quat, log_scale, color, opacity, gcs;
    long iteration = 0;
};

struct TrainResult {
    GaussianMap map;
    TrainReport report;
    OptimizerSnapshot optimizer;
};

// Union of the scans transformed into the world frame, then voxel-filtered:
// one representative per occupied cell, the first point wins. voxel_size <= 0
// skips the filter.
PointCloud accumulate_lidar(const std::vector<PointCloud>& scans, const std::vector<Pose>& poses,
                            double voxel_size = 0.05);

// One gaussian per input point: isotropic scale from the nearest-neighbor
// distance clamped to [0.01, 0.5] m, identity rotation, mid-gray color,
// opacity 0.1, confidence 0.5. `extra` points (e.g. image-only structure the
// scanner missed) are appended and initialized the same way.
GaussianMap init_map(const PointCloud& cloud, const PointCloud& extra = {});

// Accumulated view-space positional gradient, reset at every densify pass.
struct DensifyStats {
    std::vector<double> screen_grad_sum;
    std::vector<long> contribution_count;

    void resize(std::size_t n) {
        screen_grad_sum.assign(n, 0.0);
        contribution_count.assign(n, 0);
    }
};

struct DensifyOutcome {
    GaussianMap map;
    std::vector<long> parent;  // old index per surviving/new gaussian (for moment remap)
    int cloned = 0;
    int split = 0;
    int pruned = 0;
};

// Clone small high-gradient gaussians, split large ones into two children
// sampled inside the parent, prune low-opacity ones. Children inherit the
// parent's confidence. split_scale_cutoff separates "small" from "large".
DensifyOutcome densify_and_prune(const GaussianMap& map, const DensifyStats& stats, const TrainConfig& config,
                                 double split_scale_cutoff, std::mt19937& rng);

// Full optimization loop: accumulate, init, iterate over shuffled views with
// the composite loss, densify/prune on schedule, evaluate. Deterministic in
// (inputs, config.seed). Throws NumericError with a state dump on non-finite
// losses or gradients.
TrainResult train(const std::vector<TrainView>& views, const std::vector<PointCloud>& scans,
                  const std::vector<Pose>& poses, const TrainConfig& config, const PointCloud& extra_init = {});

}  // namespace splatloc
