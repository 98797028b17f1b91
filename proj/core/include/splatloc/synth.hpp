#pragma once

#include <limits>
#include <vector>

#include "splatloc/types.hpp"

namespace splatloc::synth {

struct SceneConfig {
    int boxes = 6;
    double lidar_max_range = 30.0;
    int views = 10;
    double trajectory_length = 8.0;
    int image_width = 96;
    int image_height = 64;
    double focal = 80.0;
    int azimuth_steps = 180;
    int elevation_steps = 24;
    double lidar_noise = 0.0;  // range sigma in meters
    int sky_points = 0;        // extra init points on the unreachable backdrop
    int floater_points = 0;    // extra init points hovering off-surface
    double gaussian_spacing = 0.4;
    double box_scale = 1.0;  // multiplies box extents; >1 widens the ground and lateral clearance to match
    double lidar_elev_lo_deg = -15.0;
    double lidar_elev_hi_deg = 8.0;
};

// Finite rectangle: center origin, orthonormal tangents u,v, normal = u x v.
struct SurfaceRect {
    Vec3 origin = Vec3::Zero();
    Vec3 u = Vec3::UnitX();
    Vec3 v = Vec3::UnitY();
    Vec3 normal = Vec3::UnitZ();
    double half_u = 1.0, half_v = 1.0;
    Vec3 albedo = Vec3(0.5, 0.5, 0.5);
    bool backdrop = false;  // placed beyond lidar range by construction
};

struct RayHit {
    double t = std::numeric_limits<double>::infinity();
    int surface = -1;
};

// World frame is z-up. The rig frame follows the camera convention: x right,
// y down, z forward; trajectory poses are rig-to-world and are shared by the
// camera and the scanner.
struct SyntheticScene {
    std::vector<SurfaceRect> surfaces;
    GaussianMap gt_map;
    std::vector<Pose> trajectory;
    Camera camera;
    double lidar_max_range = 30.0;
    PointCloud extra_init;  // world-frame seeds beyond the scan coverage
    SceneConfig config;
};

// Deterministic in (seed, config): ground plane, a row of boxes along the
// track, and a backdrop wall the scanner can never reach.
SyntheticScene generate_scene(unsigned seed, const SceneConfig& config = {});

// Nearest surface along origin + t*dir for t in (1e-6, t_max].
RayHit cast_ray(const SyntheticScene& scene, const Vec3& origin, const Vec3& dir, double t_max);

// Spinning scanner: full azimuth sweep, elevation fan. Points come back in
// the rig frame; misses (range beyond lidar_max_range) produce no point.
PointCloud simulate_lidar(const SyntheticScene& scene, const Pose& pose, int azimuth_steps, int elevation_steps,
                          double noise_sigma, unsigned seed);

struct ViewSample {
    Image image;
    Camera camera;
    Pose pose;
};

// Ground-truth photometric targets: the ground-truth map rendered along the
// trajectory. Training against these makes the optimum exactly representable.
std::vector<ViewSample> render_gt_views(const SyntheticScene& scene);

}  // namespace splatloc::synth
