#include "splatloc/synth.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "splatloc/geometry.hpp"
#include "splatloc/math.hpp"
#include "splatloc/render.hpp"

namespace splatloc::synth {

namespace {

double uniform(std::mt19937& g, double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(g);
}

Vec4 rect_quat(const SurfaceRect& r) {
    Mat3 rot;
    rot.col(0) = r.u;
    rot.col(1) = r.v;
    rot.col(2) = r.normal;
    return rotation_to_quat(rot);
}

void add_box(std::vector<SurfaceRect>& out, const Vec3& center, const Vec3& half, const Vec3& albedo) {
    // Four sides plus the top; the bottom sits on the ground.
    SurfaceRect r;
    r.albedo = albedo;

    r.origin = center + Vec3(half.x(), 0, 0);
    r.u = Vec3::UnitY();
    r.v = Vec3::UnitZ();
    r.normal = Vec3::UnitX();
    r.half_u = half.y();
    r.half_v = half.z();
    out.push_back(r);

    r.origin = center - Vec3(half.x(), 0, 0);
    r.u = Vec3::UnitZ();
    r.v = Vec3::UnitY();
    r.normal = -Vec3::UnitX();
    r.half_u = half.z();
    r.half_v = half.y();
    out.push_back(r);

    r.origin = center + Vec3(0, half.y(), 0);
    r.u = Vec3::UnitZ();
    r.v = Vec3::UnitX();
    r.normal = Vec3::UnitY();
    r.half_u = half.z();
    r.half_v = half.x();
    out.push_back(r);

    r.origin = center - Vec3(0, half.y(), 0);
    r.u = Vec3::UnitX();
    r.v = Vec3::UnitZ();
    r.normal = -Vec3::UnitY();
    r.half_u = half.x();
    r.half_v = half.z();
    out.push_back(r);

    r.origin = center + Vec3(0, 0, half.z());
    r.u = Vec3::UnitX();
    r.v = Vec3::UnitY();
    r.normal = Vec3::UnitZ();
    r.half_u = half.x();
    r.half_v = half.y();
    out.push_back(r);
}

// Rig-to-world rotation: camera x right (-y world), y down (-z world),
// z forward (+x world), then yawed about world z.
Mat3 rig_rotation(double yaw) {
    Mat3 base;
    base.col(0) = Vec3(0, -1, 0);
    base.col(1) = Vec3(0, 0, -1);
    base.col(2) = Vec3(1, 0, 0);
    return exp_so3(Vec3(0, 0, yaw)) * base;
}

void sample_rect(const SurfaceRect& rect, double spacing, std::mt19937& rng, double gcs, GaussianMap& map) {
    const Vec4 quat = rect_quat(rect);
    const int nu = std::max(1, static_cast<int>(std::floor(2.0 * rect.half_u / spacing)));
    const int nv = std::max(1, static_cast<int>(std::floor(2.0 * rect.half_v / spacing)));
    const double du = 2.0 * rect.half_u / nu;
    const double dv = 2.0 * rect.half_v / nv;
    for (int iu = 0; iu < nu; ++iu) {
        for (int iv = 0; iv < nv; ++iv) {
            const double a = std::clamp(-rect.half_u + (iu + 0.5) * du + uniform(rng, -0.3, 0.3) * du,
                                        -rect.half_u + 1e-3, rect.half_u - 1e-3);
            const double b = std::clamp(-rect.half_v + (iv + 0.5) * dv + uniform(rng, -0.3, 0.3) * dv,
                                        -rect.half_v + 1e-3, rect.half_v - 1e-3);
            Gaussian g;
            g.mean = rect.origin + a * rect.u + b * rect.v;
            g.quat = quat;
            const double tangent = 0.55 * std::max(du, dv);
            g.log_scale = Vec3(std::log(tangent), std::log(tangent), std::log(0.015));
            for (int ch = 0; ch < 3; ++ch)
                g.color[ch] = std::clamp(rect.albedo[ch] + uniform(rng, -0.12, 0.12), 0.05, 0.95);
            g.opacity_logit = logit(0.85);
            g.gcs_logit = logit(gcs);
            map.gaussians.push_back(g);
        }
    }
}

}  // namespace

SyntheticScene generate_scene(unsigned seed, const SceneConfig& config) {
    std::mt19937 rng(seed);
    SyntheticScene scene;
    scene.config = config;
    scene.lidar_max_range = config.lidar_max_range;

    SurfaceRect ground;
    ground.origin = Vec3(10.0, 0.0, 0.0);
    ground.u = Vec3::UnitX();
    ground.v = Vec3::UnitY();
    ground.normal = Vec3::UnitZ();
    ground.half_u = 14.0 + 4.0 * (config.box_scale - 1.0);
    ground.half_v = 8.0 + 5.0 * (config.box_scale - 1.0);
    ground.albedo = Vec3(0.45, 0.42, 0.38);
    scene.surfaces.push_back(ground);

    const int boxes = std::max(0, config.boxes);
    for (int i = 0; i < boxes; ++i) {
        const double x = 3.0 + 17.0 * (boxes > 1 ? static_cast<double>(i) / (boxes - 1) : 0.5) +
                         uniform(rng, -0.8, 0.8);
        const double side = (i % 2 == 0) ? 1.0 : -1.0;
        const double y = side * (uniform(rng, 3.0, 6.0) + 2.5 * (config.box_scale - 1.0));
        const Vec3 half = config.box_scale *
                          Vec3(uniform(rng, 0.6, 1.5), uniform(rng, 0.6, 1.5), uniform(rng, 0.8, 2.0));
        const Vec3 albedo(uniform(rng, 0.2, 0.9), uniform(rng, 0.2, 0.9), uniform(rng, 0.2, 0.9));
        add_box(scene.surfaces, Vec3(x, y, half.z()), half, albedo);
    }

    SurfaceRect backdrop;
    backdrop.origin = Vec3(45.0, 0.0, 6.0);
    backdrop.u = Vec3::UnitZ();
    backdrop.v = Vec3::UnitY();
    backdrop.normal = -Vec3::UnitX();
    backdrop.half_u = 10.0;
    backdrop.half_v = 30.0;
    backdrop.albedo = Vec3(0.50, 0.64, 0.85);
    backdrop.backdrop = true;
    scene.surfaces.push_back(backdrop);

    scene.camera.fx = config.focal;
    scene.camera.fy = config.focal;
    scene.camera.width = config.image_width;
    scene.camera.height = config.image_height;
    scene.camera.cx = (config.image_width - 1) / 2.0;
    scene.camera.cy = (config.image_height - 1) / 2.0;

    const int views = std::max(1, config.views);
    for (int i = 0; i < views; ++i) {
        const double s = views > 1 ? static_cast<double>(i) / (views - 1) : 0.0;
        Pose p;
        p.rotation = rig_rotation(deg_to_rad(uniform(rng, -3.0, 3.0)));
        p.translation = Vec3(s * config.trajectory_length, uniform(rng, -0.3, 0.3), 1.4);
        scene.trajectory.push_back(p);
    }

    for (const SurfaceRect& rect : scene.surfaces) {
        double spacing = config.gaussian_spacing;
        if (rect.backdrop)
            spacing *= 3.0;
        else if (rect.normal.isApprox(Vec3::UnitZ()) && rect.half_u > 5.0)
            spacing *= 1.25;  // ground
        else
            spacing *= 0.75;  // box faces
        sample_rect(rect, spacing, rng, rect.backdrop ? 0.05 : 0.95, scene.gt_map);
    }
    scene.gt_map.background = Vec3(0.62, 0.75, 0.92);

    for (int i = 0; i < config.sky_points; ++i) {
        const SurfaceRect& r = scene.surfaces.back();  // backdrop
        scene.extra_init.points.push_back(r.origin + uniform(rng, -r.half_u, r.half_u) * r.u +
                                          uniform(rng, -r.half_v, r.half_v) * r.v);
    }
    for (int i = 0; i < config.floater_points; ++i) {
        // Hover off a non-backdrop surface along its normal.
        const std::size_t pick = 1 + static_cast<std::size_t>(uniform(rng, 0.0, 1.0) *
                                                              static_cast<double>(scene.surfaces.size() - 2));
        const SurfaceRect& r = scene.surfaces[std::min(pick, scene.surfaces.size() - 2)];
        const Vec3 on = r.origin + uniform(rng, -r.half_u, r.half_u) * r.u + uniform(rng, -r.half_v, r.half_v) * r.v;
        Vec3 p = on + uniform(rng, 0.8, 1.5) * r.normal;
        p.z() = std::max(p.z(), 0.2);
        scene.extra_init.points.push_back(p);
    }
    return scene;
}

RayHit cast_ray(const SyntheticScene& scene, const Vec3& origin, const Vec3& dir, double t_max) {
    RayHit hit;
    for (int i = 0; i < static_cast<int>(scene.surfaces.size()); ++i) {
        const SurfaceRect& r = scene.surfaces[static_cast<std::size_t>(i)];
        const double denom = dir.dot(r.normal);
        if (std::abs(denom) < 1e-12) continue;
        const double t = (r.origin - origin).dot(r.normal) / denom;
        if (t <= 1e-6 || t > t_max || t >= hit.t) continue;
        const Vec3 local = origin + t * dir - r.origin;
        if (std::abs(local.dot(r.u)) <= r.half_u + 1e-12 && std::abs(local.dot(r.v)) <= r.half_v + 1e-12) {
            hit.t = t;
            hit.surface = i;
        }
    }
    return hit;
}

PointCloud simulate_lidar(const SyntheticScene& scene, const Pose& pose, int azimuth_steps, int elevation_steps,
                          double noise_sigma, unsigned seed) {
    if (azimuth_steps <= 0 || elevation_steps <= 0) throw std::invalid_argument("simulate_lidar: rays must be > 0");
    std::mt19937 rng(seed);
    std::normal_distribution<double> noise(0.0, 1.0);
    PointCloud cloud;
    const double elev_lo = deg_to_rad(scene.config.lidar_elev_lo_deg);
    const double elev_hi = deg_to_rad(scene.config.lidar_elev_hi_deg);
    for (int ei = 0; ei < elevation_steps; ++ei) {
        const double e = elevation_steps > 1
                             ? elev_lo + (elev_hi - elev_lo) * static_cast<double>(ei) / (elevation_steps - 1)
                             : 0.0;
        for (int ai = 0; ai < azimuth_steps; ++ai) {
            const double a = 2.0 * M_PI * static_cast<double>(ai) / azimuth_steps;
            // Rig frame: z forward, x right, up is -y.
            const Vec3 dir_rig(std::sin(a) * std::cos(e), -std::sin(e), std::cos(a) * std::cos(e));
            const Vec3 dir_world = pose.rotation * dir_rig;
            const RayHit hit = cast_ray(scene, pose.translation, dir_world, scene.lidar_max_range);
            if (hit.surface < 0) continue;
            double range = hit.t;
            if (noise_sigma > 0.0) range += noise_sigma * noise(rng);
            cloud.points.push_back(dir_rig * range);
        }
    }
    return cloud;
}

std::vector<ViewSample> render_gt_views(const SyntheticScene& scene) {
    std::vector<ViewSample> views;
    views.reserve(scene.trajectory.size());
    for (const Pose& pose : scene.trajectory) {
        ViewSample v;
        v.camera = scene.camera;
        v.pose = pose;
        v.image = render::render(scene.gt_map, scene.camera, pose).image;
        views.push_back(std::move(v));
    }
    return views;
}

}  // namespace splatloc::synth
