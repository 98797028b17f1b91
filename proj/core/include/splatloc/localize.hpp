#pragma once

#include <utility>
#include <vector>

#include "splatloc/kdtree.hpp"
#include "splatloc/types.hpp"

namespace splatloc {

struct LocalizeConfig {
    int outer_iterations = 20;
    int refine_steps = 20;  // render-refinement steps per outer iteration
    double icp_cutoff = 2.0;         // correspondence rejection radius, meters
    double icp_trim_fraction = 0.1;  // worst residuals dropped per step
    double lr_rotation = 1e-3;       // tangent step sizes for refinement
    double lr_translation = 1e-2;
    double tol_rotation = 1e-4;     // radians; early exit when both deltas fall below
    double tol_translation = 1e-4;  // meters
    double lambda_rgb = 0.2;        // structural share of the refinement loss
    bool refine_l1_only = false;    // drop the structural term entirely
};

struct LocalizeStep {
    Pose pose;
    double rotation_error_deg = 0.0;  // NaN when no ground truth was supplied
    double translation_error_m = 0.0;
    double residual = 0.0;  // photometric loss after refinement
};

struct LocalizeTrace {
    std::vector<LocalizeStep> steps;
    bool refine_aborted = false;  // a refinement hit non-finite gradients
};

struct LocalizeResult {
    Pose pose;
    LocalizeTrace trace;
};

// (rotation error in degrees, translation error in meters).
std::pair<double, double> pose_error(const Pose& estimate, const Pose& ground_truth);

// One confidence-weighted rigid alignment of the scan onto the gaussian
// means: nearest-mean correspondences within cutoff, worst trim_fraction
// dropped, weighted Kabsch with a reflection guard. `index` must be built
// over the map's means in order. Returns the improved scan-to-world pose.
Pose weighted_icp_step(const PointCloud& scan, const GaussianMap& map, const NnIndex& index, const Pose& init,
                       double cutoff, double trim_fraction = 0.1);

struct RefineResult {
    Pose pose;
    double residual = 0.0;          // best loss reached, including the start pose
    double initial_residual = 0.0;  // loss at the start pose
    bool aborted = false;           // non-finite gradient; pose is best-so-far
};

// Gradient refinement of the camera pose against one image. Adaptive-moment
// updates on the 6-D tangent; returns the lowest-loss pose seen, which is the
// input pose when steps == 0 or nothing improves.
RefineResult refine_pose_by_render(const GaussianMap& map, const Camera& cam, const Image& gt_image, const Pose& pose,
                                   int steps, const LocalizeConfig& config = {});

// Alternating scan alignment and render refinement. `gt_pose` only fills the
// per-iteration error fields of the trace. A degenerate alignment is fatal
// only when the same iteration's refinement also fails to reduce the
// residual.
LocalizeResult localize(const GaussianMap& map, const PointCloud& scan, const Image& gt_image, const Camera& cam,
                        const Pose& init, const LocalizeConfig& config = {}, const Pose* gt_pose = nullptr);

}  // namespace splatloc
