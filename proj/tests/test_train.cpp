#include <cmath>

#include "doctest.h"
#include "splatloc/errors.hpp"
#include "splatloc/geometry.hpp"
#include "splatloc/math.hpp"
#include "splatloc/render.hpp"
#include "splatloc/synth.hpp"
#include "splatloc/train.hpp"
#include "test_support.hpp"

namespace ts = test_support;
using namespace splatloc;

namespace {

// Small scene, few views, coarse splats: keeps full train() runs fast.
synth::SceneConfig small_scene_config() {
    synth::SceneConfig config;
    config.boxes = 2;
    config.views = 4;
    config.image_width = 48;
    config.image_height = 32;
    config.focal = 40.0;
    config.gaussian_spacing = 0.8;
    return config;
}

std::vector<TrainView> views_of(const synth::SyntheticScene& scene) {
    std::vector<TrainView> views;
    for (const auto& v : synth::render_gt_views(scene)) views.push_back({v.image, v.camera, v.pose});
    return views;
}

std::vector<PointCloud> scans_of(const synth::SyntheticScene& scene, int azimuth, int elevation) {
    std::vector<PointCloud> scans;
    for (std::size_t i = 0; i < scene.trajectory.size(); ++i)
        scans.push_back(synth::simulate_lidar(scene, scene.trajectory[i], azimuth, elevation, 0.0, 100 + i));
    return scans;
}

double surface_membership(const synth::SyntheticScene& scene, const Vec3& p) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& r : scene.surfaces) {
        const Vec3 local = p - r.origin;
        if (std::abs(local.dot(r.u)) > r.half_u + 1e-6) continue;
        if (std::abs(local.dot(r.v)) > r.half_v + 1e-6) continue;
        best = std::min(best, std::abs(local.dot(r.normal)));
    }
    return best;
}

}  // namespace

TEST_SUITE("train") {

TEST_CASE("accumulation with one identity scan is the identity") {
    auto rng = ts::rng(41);
    PointCloud scan;
    for (int i = 0; i < 50; ++i) scan.points.push_back(ts::uniform_vec3(rng, -3.0, 3.0));
    const PointCloud out = accumulate_lidar({scan}, {Pose::identity()}, 0.0);
    REQUIRE(out.size() == scan.size());
    for (std::size_t i = 0; i < out.size(); ++i) CHECK(out.points[i] == scan.points[i]);
}

TEST_CASE("accumulation unions transformed scans") {
    auto rng = ts::rng(42);
    PointCloud scan;
    for (int i = 0; i < 30; ++i) scan.points.push_back(ts::uniform_vec3(rng, -1.0, 1.0));
    Pose shifted;
    shifted.translation = Vec3(1.0, 0.0, 0.0);
    const PointCloud out = accumulate_lidar({scan, scan}, {Pose::identity(), shifted}, 0.0);
    REQUIRE(out.size() == 2 * scan.size());
    for (std::size_t i = 0; i < scan.size(); ++i) {
        CHECK(out.points[i] == scan.points[i]);
        CHECK(out.points[scan.size() + i].isApprox(scan.points[i] + Vec3(1, 0, 0), 1e-15));
    }
}

TEST_CASE("voxel filter keeps the first point per cell") {
    PointCloud scan;
    scan.points.push_back(Vec3(0.01, 0.01, 0.01));
    scan.points.push_back(Vec3(0.02, 0.03, 0.01));  // same 0.05 m cell
    scan.points.push_back(Vec3(0.11, 0.01, 0.01));  // different cell
    const PointCloud out = accumulate_lidar({scan}, {Pose::identity()}, 0.05);
    REQUIRE(out.size() == 2);
    CHECK(out.points[0] == Vec3(0.01, 0.01, 0.01));
    CHECK(out.points[1] == Vec3(0.11, 0.01, 0.01));
}

TEST_CASE("accumulation rejects mismatched inputs") {
    CHECK_THROWS_AS(accumulate_lidar({PointCloud{}}, {}, 0.05), std::invalid_argument);
    CHECK_THROWS_AS(accumulate_lidar({}, {}, 0.05), std::invalid_argument);
}

TEST_CASE("accumulated synthetic scans lie on scene surfaces") {
    const synth::SyntheticScene scene = synth::generate_scene(43, small_scene_config());
    const auto scans = scans_of(scene, 60, 8);
    std::vector<Pose> poses(scene.trajectory.begin(), scene.trajectory.end());
    const PointCloud cloud = accumulate_lidar(scans, poses, 0.05);
    CHECK(cloud.size() > 200);
    for (const Vec3& p : cloud.points) CHECK(surface_membership(scene, p) < 1e-6);
}

TEST_CASE("map initialization copies points and applies the scale rule") {
    auto rng = ts::rng(44);
    PointCloud cloud;
    for (int i = 0; i < 100; ++i) cloud.points.push_back(ts::uniform_vec3(rng, -2.0, 2.0));
    const GaussianMap map = init_map(cloud);
    REQUIRE(map.size() == 100);
    for (std::size_t i = 0; i < map.size(); ++i) {
        const Gaussian& g = map.gaussians[i];
        CHECK(g.mean == cloud.points[i]);
        CHECK(g.quat == Vec4(1, 0, 0, 0));
        CHECK(g.color == Vec3(0.5, 0.5, 0.5));
        CHECK(sigmoid(g.opacity_logit) == doctest::Approx(0.1).epsilon(1e-12));
        CHECK(sigmoid(g.gcs_logit) == doctest::Approx(0.5).epsilon(1e-12));
        const auto [idx, d2] = ts::brute_force_nn(cloud.points, cloud.points[i], static_cast<std::int64_t>(i));
        (void)idx;
        const double want = std::clamp(std::sqrt(d2), 0.01, 0.5);
        CHECK(std::exp(g.log_scale[0]) == doctest::Approx(want).epsilon(1e-12));
        CHECK(g.log_scale[0] == g.log_scale[1]);
        CHECK(g.log_scale[1] == g.log_scale[2]);
    }
}

TEST_CASE("initial scales clamp at both ends") {
    PointCloud wide;
    wide.points.push_back(Vec3::Zero());
    wide.points.push_back(Vec3(1.0, 0, 0));
    for (const Gaussian& g : init_map(wide).gaussians)
        CHECK(std::exp(g.log_scale[0]) == doctest::Approx(0.5).epsilon(1e-12));

    PointCloud tight;
    tight.points.push_back(Vec3::Zero());
    tight.points.push_back(Vec3(0.002, 0, 0));
    for (const Gaussian& g : init_map(tight).gaussians)
        CHECK(std::exp(g.log_scale[0]) == doctest::Approx(0.01).epsilon(1e-12));

    CHECK_THROWS_AS(init_map(PointCloud{}), std::invalid_argument);
}

TEST_CASE("extra seed points are appended to the map") {
    PointCloud cloud;
    cloud.points.push_back(Vec3::Zero());
    cloud.points.push_back(Vec3(0.2, 0, 0));
    PointCloud extra;
    extra.points.push_back(Vec3(40.0, 0, 5.0));
    const GaussianMap map = init_map(cloud, extra);
    REQUIRE(map.size() == 3);
    CHECK(map.gaussians[2].mean == Vec3(40.0, 0, 5.0));
    CHECK(std::exp(map.gaussians[2].log_scale[0]) == doctest::Approx(0.5).epsilon(1e-12));  // far neighbor clamps
}

TEST_CASE("densify leaves a quiet map unchanged") {
    auto rng = ts::rng(45);
    PointCloud cloud;
    for (int i = 0; i < 20; ++i) cloud.points.push_back(ts::uniform_vec3(rng, -1.0, 1.0));
    const GaussianMap map = init_map(cloud);
    DensifyStats stats;
    stats.resize(map.size());  // zero gradients, zero counts
    std::mt19937 densify_rng(7);
    const DensifyOutcome out = densify_and_prune(map, stats, TrainConfig{}, 0.1, densify_rng);
    REQUIRE(out.map.size() == map.size());
    CHECK(out.cloned == 0);
    CHECK(out.split == 0);
    CHECK(out.pruned == 0);
    for (std::size_t i = 0; i < map.size(); ++i) {
        CHECK(out.map.gaussians[i].mean == map.gaussians[i].mean);
        CHECK(out.parent[i] == static_cast<long>(i));
    }
}

TEST_CASE("densify prunes transparent gaussians") {
    PointCloud cloud;
    cloud.points.push_back(Vec3::Zero());
    cloud.points.push_back(Vec3(0.3, 0, 0));
    GaussianMap map = init_map(cloud);
    map.gaussians[0].opacity_logit = logit(0.001);
    DensifyStats stats;
    stats.resize(2);
    std::mt19937 rng(7);
    const DensifyOutcome out = densify_and_prune(map, stats, TrainConfig{}, 0.1, rng);
    REQUIRE(out.map.size() == 1);
    CHECK(out.pruned == 1);
    CHECK(out.map.gaussians[0].mean == Vec3(0.3, 0, 0));
    CHECK(out.parent[0] == 1);
}

TEST_CASE("densify clones small and splits large high-gradient gaussians") {
    PointCloud cloud;
    cloud.points.push_back(Vec3::Zero());
    cloud.points.push_back(Vec3(5.0, 0, 0));
    cloud.points.push_back(Vec3(0, 5.0, 0));
    GaussianMap map = init_map(cloud);
    map.gaussians[0].log_scale = Vec3::Constant(std::log(0.05));  // small: clone
    map.gaussians[1].log_scale = Vec3::Constant(std::log(0.4));   // large: split
    map.gaussians[2].log_scale = Vec3::Constant(std::log(0.4));   // large but quiet: keep
    map.gaussians[0].gcs_logit = logit(0.9);
    map.gaussians[1].gcs_logit = logit(0.8);

    TrainConfig config;
    DensifyStats stats;
    stats.resize(3);
    stats.screen_grad_sum = {20 * config.densify_grad_threshold, 20 * config.densify_grad_threshold, 0.0};
    stats.contribution_count = {10, 10, 10};

    std::mt19937 rng(7);
    const DensifyOutcome out = densify_and_prune(map, stats, config, 0.2, rng);
    // size = 3 + 1 clone + 2 children - 1 split parent = 5
    REQUIRE(out.map.size() == 5);
    CHECK(out.cloned == 1);
    CHECK(out.split == 1);
    CHECK(out.pruned == 0);
    REQUIRE(out.parent.size() == 5);
    CHECK(out.parent[0] == 0);   // original of the clone keeps its moments
    CHECK(out.parent[1] == -1);  // the clone starts fresh
    CHECK(out.parent[2] == -1);  // both split children start fresh
    CHECK(out.parent[3] == -1);
    CHECK(out.parent[4] == 2);

    // The clone is an exact copy; children inherit confidence, shrink scales
    // and stay inside the parent's footprint.
    CHECK(out.map.gaussians[1].mean == map.gaussians[0].mean);
    CHECK(out.map.gaussians[1].gcs_logit == map.gaussians[0].gcs_logit);
    for (int child = 2; child <= 3; ++child) {
        CHECK(out.map.gaussians[child].gcs_logit == map.gaussians[1].gcs_logit);
        CHECK(std::exp(out.map.gaussians[child].log_scale[0]) == doctest::Approx(0.4 / 1.6).epsilon(1e-12));
        CHECK((out.map.gaussians[child].mean - map.gaussians[1].mean).norm() < 5 * 0.4);
    }
}

TEST_CASE("training is deterministic and its losses trend down") {
    const synth::SyntheticScene scene = synth::generate_scene(46, small_scene_config());
    const auto views = views_of(scene);
    const auto scans = scans_of(scene, 60, 8);
    std::vector<Pose> poses(scene.trajectory.begin(), scene.trajectory.end());

    TrainConfig config;
    config.iterations = 60;
    config.densify_interval = 25;
    config.holdout_every = 4;
    config.seed = 9;
    config.background = scene.gt_map.background;

    const TrainResult a = train(views, scans, poses, config);
    const TrainResult b = train(views, scans, poses, config);

    REQUIRE(a.report.history.size() == 60);
    REQUIRE(b.report.history.size() == 60);
    for (std::size_t i = 0; i < a.report.history.size(); ++i) {
        CHECK(a.report.history[i].total == b.report.history[i].total);
        CHECK(std::isfinite(a.report.history[i].total));
    }
    CHECK(a.report.holdout_psnr == b.report.holdout_psnr);
    CHECK(a.report.chamfer_vs_cloud == b.report.chamfer_vs_cloud);
    REQUIRE(a.map.size() == b.map.size());
    for (std::size_t i = 0; i < a.map.size(); ++i) {
        CHECK(a.map.gaussians[i].mean == b.map.gaussians[i].mean);
        CHECK(a.map.gaussians[i].opacity_logit == b.map.gaussians[i].opacity_logit);
    }

    double early = 0.0, late = 0.0;
    for (int i = 0; i < 20; ++i) {
        early += a.report.history[static_cast<std::size_t>(i)].total;
        late += a.report.history[a.report.history.size() - 1 - static_cast<std::size_t>(i)].total;
    }
    CHECK(late < early);

    // Map invariants hold after training.
    for (const Gaussian& g : a.map.gaussians) {
        CHECK(g.quat.norm() == doctest::Approx(1.0).epsilon(1e-9));
        CHECK(std::abs(g.opacity_logit) <= 15.0);
        CHECK(std::abs(g.gcs_logit) <= 15.0);
        CHECK(g.log_scale.maxCoeff() <= 1.4);
        CHECK(g.log_scale.minCoeff() >= -9.2);
    }
    CHECK(a.report.final_count == a.map.size());
}

TEST_CASE("a lone gaussian converges to the target color") {
    // Ground truth and the initialized map differ only in color, so the
    // photometric optimum is exactly representable.
    Camera cam;
    cam.fx = cam.fy = 30.0;
    cam.width = 32;
    cam.height = 24;
    cam.cx = (cam.width - 1) / 2.0;
    cam.cy = (cam.height - 1) / 2.0;

    const Vec3 mean(0.0, 0.0, 2.0);
    GaussianMap gt_map;
    {
        PointCloud seed;
        seed.points.push_back(mean);
        gt_map = init_map(seed);
        gt_map.gaussians[0].color = Vec3(0.8, 0.3, 0.4);
        gt_map.background = Vec3(0.1, 0.1, 0.1);
    }
    const Image gt = render::render(gt_map, cam, Pose::identity()).image;

    PointCloud scan;
    scan.points.push_back(mean);

    TrainConfig config;
    config.iterations = 400;
    config.densify_interval = 0;
    config.holdout_every = 0;
    config.voxel_size = 0.0;
    config.background = gt_map.background;
    config.weights.lambda_geom = 0.0;
    config.weights.lambda_prob = 0.0;
    config.seed = 1;

    const TrainResult result = train({TrainView{gt, cam, Pose::identity()}}, {scan}, {Pose::identity()}, config);
    REQUIRE(result.map.size() == 1);
    CHECK(result.report.history.back().rgb < 1e-3);

    // Opacity and color are only identifiable jointly: every pixel sees
    // opacity * (color - background) through the same footprint.
    const Gaussian& fit = result.map.gaussians[0];
    const Vec3 got = sigmoid(fit.opacity_logit) * (fit.color - gt_map.background);
    const Vec3 want = sigmoid(gt_map.gaussians[0].opacity_logit) * (Vec3(0.8, 0.3, 0.4) - gt_map.background);
    CHECK((got - want).norm() < 5e-3);
    CHECK((fit.color - Vec3(0.8, 0.3, 0.4)).norm() < (Vec3(0.5, 0.5, 0.5) - Vec3(0.8, 0.3, 0.4)).norm());
}

TEST_CASE("non-finite data aborts with a diagnostic") {
    Camera cam;
    cam.fx = cam.fy = 20.0;
    cam.width = 16;
    cam.height = 12;
    cam.cx = 7.5;
    cam.cy = 5.5;
    Image bad(16, 12, 0.5);
    bad.data[20] = std::numeric_limits<double>::quiet_NaN();

    PointCloud scan;
    scan.points.push_back(Vec3(0, 0, 2.0));

    TrainConfig config;
    config.iterations = 3;
    config.holdout_every = 0;
    CHECK_THROWS_AS(train({TrainView{bad, cam, Pose::identity()}}, {scan}, {Pose::identity()}, config), NumericError);
}

}  // TEST_SUITE
