#include <cmath>

#include "doctest.h"
#include "splatloc/losses.hpp"
#include "splatloc/math.hpp"
#include "test_support.hpp"

namespace ts = test_support;

using namespace splatloc;

namespace {

// Map and cloud sized so a 1e-6 finite-difference step can never flip a
// nearest-neighbor assignment.
struct LossFixture {
    GaussianMap map;
    PointCloud cloud;
};

LossFixture make_fixture(unsigned seed, int gaussians = 7, int points = 25) {
    auto rng = ts::rng(seed);
    LossFixture f;
    for (int i = 0; i < points; ++i) f.cloud.points.push_back(ts::uniform_vec3(rng, -2.0, 2.0));
    for (int i = 0; i < gaussians; ++i) {
        Gaussian g;
        g.mean = ts::uniform_vec3(rng, -2.0, 2.0);
        g.quat = ts::random_unit_quat(rng);
        g.log_scale = Vec3(std::log(ts::uniform(rng, 0.1, 0.7)), std::log(ts::uniform(rng, 0.1, 0.7)),
                           std::log(ts::uniform(rng, 0.1, 0.7)));
        g.color = ts::uniform_vec3(rng, 0.1, 0.9);
        g.opacity_logit = logit(ts::uniform(rng, 0.2, 0.8));
        g.gcs_logit = logit(ts::uniform(rng, 0.1, 0.9));
        f.map.gaussians.push_back(g);
    }
    return f;
}

Image random_image(std::mt19937& rng, int w, int h) {
    Image img(w, h);
    for (double& v : img.data) v = ts::uniform(rng, 0.1, 0.9);
    return img;
}

}  // namespace

TEST_SUITE("losses") {

TEST_CASE("asym sigmoid hits the midpoint exactly and saturates safely") {
    CHECK(asym_sigmoid(0.9, 20.0, 0.9) == 0.5);
    CHECK(asym_sigmoid(0.0, 20.0, 0.9) == doctest::Approx(1.0 / (1.0 + std::exp(-18.0))).epsilon(1e-15));
    CHECK(asym_sigmoid(2.0, 20.0, 0.9) == doctest::Approx(1.0 / (1.0 + std::exp(22.0))).epsilon(1e-15));
    // No overflow for extreme arguments.
    CHECK(asym_sigmoid(1e6, 20.0, 0.9) == 0.0);
    CHECK(asym_sigmoid(-1e6, 20.0, 0.9) == 1.0);
}

TEST_CASE("asym sigmoid is decreasing and point-symmetric about its midpoint") {
    auto rng = ts::rng(31);
    const double k = 20.0, d = 0.9;
    for (int i = 0; i < 10000; ++i) {
        // Inside |k(x-d)| < 30 the tails stay representable, so strictness
        // holds in doubles; beyond that the function saturates to 0 or 1.
        const double x = ts::uniform(rng, d - 1.5, d + 1.5);
        const double y = asym_sigmoid(x, k, d);
        if (std::abs(k * (x - d)) < 30.0) {
            CHECK(y > 0.0);
            CHECK(y < 1.0);
            CHECK(asym_sigmoid(x + 1e-3, k, d) < y);
        } else {
            CHECK(asym_sigmoid(x + 1e-3, k, d) <= y);
        }
        CHECK(y + asym_sigmoid(2.0 * d - x, k, d) == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("confidence gap loss on a coincident gaussian evaluates directly") {
    GaussianMap map;
    Gaussian g;
    g.mean = Vec3(0.3, -0.1, 0.7);
    g.gcs_logit = logit(0.5);
    map.gaussians.push_back(g);
    PointCloud cloud;
    cloud.points.push_back(g.mean);  // distance 0

    LossWeights w;
    const NnIndex index(cloud);
    const GeomLossResult r = geom_loss(map, index, w);
    const double target = asym_sigmoid(0.0, w.k, w.d);
    CHECK(r.value == doctest::Approx((0.5 - target) * (0.5 - target)).epsilon(1e-12));
    CHECK(r.value == doctest::Approx(0.25).epsilon(1e-6));
}

TEST_CASE("confidence gap loss vanishes when every confidence matches its target") {
    LossFixture f = make_fixture(32);
    LossWeights w;
    const NnIndex index(f.cloud);
    for (Gaussian& g : f.map.gaussians) {
        const auto [idx, d2] = ts::brute_force_nn(f.cloud.points, g.mean);
        (void)idx;
        g.gcs_logit = logit(asym_sigmoid(d2, w.k, w.d));
    }
    CHECK(geom_loss(f.map, index, w).value < 1e-24);
}

TEST_CASE("confidence gap gradient matches finite differences") {
    LossFixture f = make_fixture(33);
    LossWeights w;
    const NnIndex index(f.cloud);
    const GeomLossResult r = geom_loss(f.map, index, w);
    const double h = 1e-6;
    for (std::size_t i = 0; i < f.map.size(); ++i) {
        const double saved = f.map.gaussians[i].gcs_logit;
        f.map.gaussians[i].gcs_logit = saved + h;
        const double up = geom_loss(f.map, index, w).value;
        f.map.gaussians[i].gcs_logit = saved - h;
        const double down = geom_loss(f.map, index, w).value;
        f.map.gaussians[i].gcs_logit = saved;
        CAPTURE(i);
        CHECK(r.d_gcs_logit[i] == doctest::Approx((up - down) / (2 * h)).epsilon(1e-5));
    }
}

TEST_CASE("distance likelihood is minimized at confidence 1 - d") {
    LossWeights w;
    for (double d : {0.1, 0.25, 0.5}) {
        GaussianMap map;
        Gaussian g;
        g.mean = Vec3(std::sqrt(d), 0, 0);  // squared NN distance d to the origin
        map.gaussians.push_back(g);
        PointCloud cloud;
        cloud.points.push_back(Vec3::Zero());
        const NnIndex index(cloud);

        double best_gamma = -1.0, best_value = std::numeric_limits<double>::infinity();
        for (int step = 1; step < 20000; ++step) {
            const double gamma = step / 20000.0 * 0.999;
            map.gaussians[0].gcs_logit = logit(gamma);
            const double v = prob_loss(map, index, w).value;
            if (v < best_value) {
                best_value = v;
                best_gamma = gamma;
            }
        }
        CAPTURE(d);
        CHECK(best_gamma == doctest::Approx(1.0 - d).epsilon(1e-3));

        // The analytic confidence gradient changes sign across the optimum.
        map.gaussians[0].gcs_logit = logit(1.0 - d - 0.01);
        CHECK(prob_loss(map, index, w).d_gcs_logit[0] < 0.0);
        map.gaussians[0].gcs_logit = logit(1.0 - d + 0.01);
        CHECK(prob_loss(map, index, w).d_gcs_logit[0] > 0.0);
    }
}

TEST_CASE("distance likelihood gradients match finite differences") {
    LossFixture f = make_fixture(34);
    LossWeights w;
    const NnIndex index(f.cloud);
    const ProbLossResult r = prob_loss(f.map, index, w);
    const double h = 1e-6;
    for (std::size_t i = 0; i < f.map.size(); ++i) {
        CAPTURE(i);
        {
            const double saved = f.map.gaussians[i].gcs_logit;
            f.map.gaussians[i].gcs_logit = saved + h;
            const double up = prob_loss(f.map, index, w).value;
            f.map.gaussians[i].gcs_logit = saved - h;
            const double down = prob_loss(f.map, index, w).value;
            f.map.gaussians[i].gcs_logit = saved;
            CHECK(r.d_gcs_logit[i] == doctest::Approx((up - down) / (2 * h)).epsilon(5e-5));
        }
        for (int axis = 0; axis < 3; ++axis) {
            CAPTURE(axis);
            const double saved = f.map.gaussians[i].mean[axis];
            f.map.gaussians[i].mean[axis] = saved + h;
            const double up = prob_loss(f.map, index, w).value;
            f.map.gaussians[i].mean[axis] = saved - h;
            const double down = prob_loss(f.map, index, w).value;
            f.map.gaussians[i].mean[axis] = saved;
            CHECK(r.d_mean[i][axis] == doctest::Approx((up - down) / (2 * h)).epsilon(5e-5));
        }
    }
}

TEST_CASE("confidence near one stays finite through the ceiling") {
    GaussianMap map;
    Gaussian g;
    g.mean = Vec3(1.0, 0, 0);
    g.gcs_logit = 40.0;  // sigmoid indistinguishable from 1 in doubles
    map.gaussians.push_back(g);
    PointCloud cloud;
    cloud.points.push_back(Vec3::Zero());
    const NnIndex index(cloud);
    const ProbLossResult r = prob_loss(map, index, LossWeights{});
    CHECK(std::isfinite(r.value));
    CHECK(std::isfinite(r.d_gcs_logit[0]));
    CHECK(std::isfinite(r.d_mean[0].norm()));
}

TEST_CASE("euclidean distance switch changes the confidence targets") {
    GaussianMap map;
    Gaussian g;
    g.mean = Vec3(0.5, 0, 0);  // squared 0.25, euclidean 0.5
    g.gcs_logit = logit(0.5);
    map.gaussians.push_back(g);
    PointCloud cloud;
    cloud.points.push_back(Vec3::Zero());
    const NnIndex index(cloud);

    LossWeights w;
    const double squared_gap = 0.5 - asym_sigmoid(0.25, w.k, w.d);
    CHECK(geom_loss(map, index, w).value == doctest::Approx(squared_gap * squared_gap).epsilon(1e-12));

    w.squared_nn_distance = false;
    const double euclid_gap = 0.5 - asym_sigmoid(0.5, w.k, w.d);
    CHECK(geom_loss(map, index, w).value == doctest::Approx(euclid_gap * euclid_gap).epsilon(1e-12));
}

TEST_CASE("scale hinge on a single offending axis") {
    GaussianMap map;
    Gaussian g;
    g.log_scale = Vec3(std::log(0.6), std::log(0.2), std::log(0.1));
    map.gaussians.push_back(g);
    const ScaleLossResult r = scale_loss(map, LossWeights{});
    CHECK(r.value == doctest::Approx(0.01 / 3.0).epsilon(1e-12));
    CHECK(r.d_log_scale[0][0] > 0.0);
    CHECK(r.d_log_scale[0][1] == 0.0);
    CHECK(r.d_log_scale[0][2] == 0.0);
}

TEST_CASE("scale hinge gradient matches finite differences") {
    LossFixture f = make_fixture(35);
    // Push some axes past the hinge.
    f.map.gaussians[1].log_scale[0] = std::log(0.8);
    f.map.gaussians[3].log_scale[2] = std::log(0.55);
    LossWeights w;
    const ScaleLossResult r = scale_loss(f.map, w);
    const double h = 1e-6;
    for (std::size_t i = 0; i < f.map.size(); ++i) {
        for (int axis = 0; axis < 3; ++axis) {
            const double saved = f.map.gaussians[i].log_scale[axis];
            f.map.gaussians[i].log_scale[axis] = saved + h;
            const double up = scale_loss(f.map, w).value;
            f.map.gaussians[i].log_scale[axis] = saved - h;
            const double down = scale_loss(f.map, w).value;
            f.map.gaussians[i].log_scale[axis] = saved;
            CAPTURE(i);
            CAPTURE(axis);
            CHECK(r.d_log_scale[i][axis] == doctest::Approx((up - down) / (2 * h)).epsilon(1e-5).scale(1.0));
        }
    }
}

TEST_CASE("photometric loss on a uniform offset with a perfect render") {
    auto rng = ts::rng(36);
    const Image gt = random_image(rng, 12, 9);
    Image adjusted = gt;
    for (double& v : adjusted.data) v += 0.1;
    const RgbLossResult r = rgb_loss(gt, adjusted, gt, 0.2);
    CHECK(r.value == doctest::Approx(0.08).epsilon(1e-12));
}

TEST_CASE("photometric gradients match finite differences") {
    auto rng = ts::rng(37);
    const Image gt = random_image(rng, 9, 7);
    const Image rendered = random_image(rng, 9, 7);
    Image adjusted = rendered;
    for (double& v : adjusted.data) v = std::clamp(v + ts::uniform(rng, -0.1, 0.1), 0.0, 1.0);

    const double lambda = 0.2;
    const RgbLossResult r = rgb_loss(rendered, adjusted, gt, lambda);
    const double h = 1e-5;
    Image probe = adjusted;
    for (std::size_t i = 0; i < probe.data.size(); i += 17) {
        const double saved = probe.data[i];
        probe.data[i] = saved + h;
        const double up = rgb_loss(rendered, probe, gt, lambda).value;
        probe.data[i] = saved - h;
        const double down = rgb_loss(rendered, probe, gt, lambda).value;
        probe.data[i] = saved;
        CAPTURE(i);
        CHECK(r.d_adjusted.data[i] == doctest::Approx((up - down) / (2 * h)).epsilon(1e-4));
    }
    probe = rendered;
    for (std::size_t i = 0; i < probe.data.size(); i += 17) {
        const double saved = probe.data[i];
        probe.data[i] = saved + h;
        const double up = rgb_loss(probe, adjusted, gt, lambda).value;
        probe.data[i] = saved - h;
        const double down = rgb_loss(probe, adjusted, gt, lambda).value;
        probe.data[i] = saved;
        CAPTURE(i);
        CHECK(r.d_rendered.data[i] == doctest::Approx((up - down) / (2 * h)).epsilon(1e-4));
    }
}

TEST_CASE("appearance correction is an affine per-channel map") {
    auto rng = ts::rng(38);
    const Image in = random_image(rng, 5, 4);
    AppearanceParams p;
    p.gain = Vec3(1.1, 0.9, 1.0);
    p.bias = Vec3(0.02, -0.01, 0.0);
    const Image out = apply_appearance(in, p);
    for (int row = 0; row < in.height; ++row)
        for (int col = 0; col < in.width; ++col)
            for (int ch = 0; ch < 3; ++ch)
                CHECK(out.at(row, col, ch) ==
                      doctest::Approx(p.gain[ch] * in.at(row, col, ch) + p.bias[ch]).epsilon(1e-15));
}

TEST_CASE("weighted total reproduces the documented arithmetic") {
    RgbLossResult rgb;
    rgb.value = 0.08;
    GeomLossResult geom;
    geom.value = 0.25;
    geom.d_gcs_logit = {0.5};
    ProbLossResult prob;
    prob.value = 0.5;
    prob.d_gcs_logit = {-0.2};
    prob.d_mean = {Vec3(1.0, 2.0, 3.0)};
    ScaleLossResult scale;
    scale.value = 0.0;
    scale.d_log_scale = {Vec3(0.1, 0.0, 0.0)};

    LossWeights w;
    const LossBreakdown b = total_loss(rgb, geom, prob, scale, w);
    CHECK(b.total == doctest::Approx(0.155).epsilon(1e-12));
    CHECK(std::abs(b.total - (b.rgb + w.lambda_geom * b.geom + w.lambda_prob * b.prob + w.lambda_scale * b.scale)) <
          1e-9);
    CHECK(b.d_gcs_logit[0] == doctest::Approx(0.1 * 0.5 + 0.1 * -0.2).epsilon(1e-12));
    CHECK(b.d_mean[0].isApprox(Vec3(0.1, 0.2, 0.3), 1e-12));
    CHECK(b.d_log_scale[0].isApprox(Vec3(10.0, 0.0, 0.0), 1e-12));
}

TEST_CASE("losses reject an empty map") {
    GaussianMap empty;
    PointCloud cloud;
    cloud.points.push_back(Vec3::Zero());
    const NnIndex index(cloud);
    CHECK_THROWS_AS(geom_loss(empty, index, LossWeights{}), std::invalid_argument);
    CHECK_THROWS_AS(prob_loss(empty, index, LossWeights{}), std::invalid_argument);
    CHECK_THROWS_AS(scale_loss(empty, LossWeights{}), std::invalid_argument);
}

}  // TEST_SUITE
