#include <cmath>
#include <cstring>

#include "doctest.h"
#include "splatloc/errors.hpp"
#include "splatloc/parallel.hpp"
#include "splatloc/render.hpp"
#include "test_support.hpp"

using namespace splatloc;
namespace ts = test_support;

namespace {

// Parameter classes the rasterizer differentiates, addressed uniformly so the
// finite-difference sweep can iterate them.
enum class Param { kMean, kQuat, kLogScale, kColor, kOpacity };

double& param_ref(GaussianMap& map, std::size_t gi, Param p, int c) {
    Gaussian& g = map.gaussians[gi];
    switch (p) {
        case Param::kMean: return g.mean[c];
        case Param::kQuat: return g.quat[c];
        case Param::kLogScale: return g.log_scale[c];
        case Param::kColor: return g.color[c];
        default: return g.opacity_logit;
    }
}

double analytic_grad(const render::RenderGradients& gr, std::size_t gi, Param p, int c) {
    switch (p) {
        case Param::kMean: return gr.d_mean[gi][c];
        case Param::kQuat: return gr.d_quat[gi][c];
        case Param::kLogScale: return gr.d_log_scale[gi][c];
        case Param::kColor: return gr.d_color[gi][c];
        default: return gr.d_opacity_logit[gi];
    }
}

void sweep_finite_differences(const ts::RenderFixture& f) {
    const render::RenderedImage fwd = render::render(f.map, f.cam, f.pose);
    const render::RenderGradients gr = render::render_backward(f.map, f.cam, f.pose, fwd, f.upstream);

    const struct {
        Param p;
        int components;
        double h;
    } classes[] = {
        {Param::kMean, 3, 1e-5},   {Param::kQuat, 4, 1e-5},    {Param::kLogScale, 3, 1e-5},
        {Param::kColor, 3, 1e-4},  {Param::kOpacity, 1, 1e-5},
    };

    for (std::size_t gi = 0; gi < f.map.size(); ++gi) {
        for (const auto& cls : classes) {
            for (int c = 0; c < cls.components; ++c) {
                GaussianMap plus = f.map, minus = f.map;
                param_ref(plus, gi, cls.p, c) += cls.h;
                param_ref(minus, gi, cls.p, c) -= cls.h;
                const double fd = (ts::weighted_render_sum(plus, f.cam, f.pose, f.upstream) -
                                   ts::weighted_render_sum(minus, f.cam, f.pose, f.upstream)) /
                                  (2.0 * cls.h);
                const double an = analytic_grad(gr, gi, cls.p, c);
                CAPTURE(gi);
                CAPTURE(static_cast<int>(cls.p));
                CAPTURE(c);
                CAPTURE(an);
                CAPTURE(fd);
                CHECK(ts::grad_matches(an, fd));
            }
        }
    }
}

}  // namespace

TEST_SUITE("render_backward") {

    TEST_CASE("analytic gradients match finite differences") {
        sweep_finite_differences(ts::make_render_fixture(5));
    }

    TEST_CASE("gradients stay correct under a different pose and seed") {
        sweep_finite_differences(ts::make_render_fixture(1234));
    }

    TEST_CASE("gradients survive an active alpha clamp") {
        ts::RenderFixture f = ts::make_render_fixture(9, 4);
        // Land one splat exactly on a pixel center and drive opacity near 1 so
        // min(alpha, 0.99) clamps there; neighbours stay unclamped.
        const int row = 14, col = 22;
        const double z = 3.1;
        Gaussian& g = f.map.gaussians[1];
        g.opacity_logit = 6.0;
        g.mean = pose_apply(f.pose, Vec3((col - f.cam.cx) * z / f.cam.fx, (row - f.cam.cy) * z / f.cam.fy, z));
        sweep_finite_differences(f);
    }

    TEST_CASE("pose tangent gradient matches finite differences") {
        const ts::RenderFixture f = ts::make_render_fixture(21);
        const render::RenderedImage fwd = render::render(f.map, f.cam, f.pose);
        const render::RenderGradients gr = render::render_backward(f.map, f.cam, f.pose, fwd, f.upstream, true);
        REQUIRE(gr.has_pose_gradient);

        const double h = 1e-6;
        for (int k = 0; k < 6; ++k) {
            Vec6 tp = Vec6::Zero(), tm = Vec6::Zero();
            tp[k] = h;
            tm[k] = -h;
            const double fd = (ts::weighted_render_sum(f.map, f.cam, render::apply_pose_tangent(f.pose, tp),
                                                       f.upstream) -
                               ts::weighted_render_sum(f.map, f.cam, render::apply_pose_tangent(f.pose, tm),
                                                       f.upstream)) /
                              (2.0 * h);
            CAPTURE(k);
            CAPTURE(gr.d_pose[k]);
            CAPTURE(fd);
            CHECK(ts::grad_matches(gr.d_pose[k], fd, 5e-4, 1e-5));
        }
    }

    TEST_CASE("invisible gaussians get zero gradients and a clear flag") {
        ts::RenderFixture f = ts::make_render_fixture(33, 3);
        Gaussian behind;
        behind.mean = pose_apply(f.pose, Vec3(0, 0, -4.0));
        behind.color = Vec3(1, 0, 0);
        f.map.gaussians.push_back(behind);

        const render::RenderedImage fwd = render::render(f.map, f.cam, f.pose);
        const render::RenderGradients gr = render::render_backward(f.map, f.cam, f.pose, fwd, f.upstream);
        const std::size_t last = f.map.size() - 1;
        CHECK(gr.visible[last] == 0);
        CHECK(gr.d_mean[last].norm() == 0.0);
        CHECK(gr.d_quat[last].norm() == 0.0);
        CHECK(gr.d_color[last].norm() == 0.0);
        CHECK(gr.d_opacity_logit[last] == 0.0);
        CHECK(gr.screen_grad_norm[last] == 0.0);
        // The in-view splats did receive signal.
        CHECK(gr.visible[0] == 1);
        CHECK(gr.screen_grad_norm[0] > 0.0);
    }

    TEST_CASE("backward rejects a stale or mismatched forward pass") {
        const ts::RenderFixture f = ts::make_render_fixture(41, 3);
        const render::RenderedImage fwd = render::render(f.map, f.cam, f.pose);

        GaussianMap mutated = f.map;
        mutated.gaussians[0].color.x() += 0.1;
        CHECK_THROWS_AS(render::render_backward(mutated, f.cam, f.pose, fwd, f.upstream), ContractError);

        Camera other_cam = f.cam;
        other_cam.fx += 1.0;
        CHECK_THROWS_AS(render::render_backward(f.map, other_cam, f.pose, fwd, f.upstream), ContractError);

        Pose other_pose = render::apply_pose_tangent(f.pose, (Vec6() << 0.01, 0, 0, 0, 0, 0).finished());
        CHECK_THROWS_AS(render::render_backward(f.map, f.cam, other_pose, fwd, f.upstream), ContractError);

        Image small(8, 8);
        CHECK_THROWS_AS(render::render_backward(f.map, f.cam, f.pose, fwd, small), ContractError);
    }

    TEST_CASE("gradients do not depend on the worker count") {
        const ts::RenderFixture f = ts::make_render_fixture(55);
        set_worker_threads(1);
        const render::RenderedImage fwd1 = render::render(f.map, f.cam, f.pose);
        const render::RenderGradients a = render::render_backward(f.map, f.cam, f.pose, fwd1, f.upstream, true);
        set_worker_threads(6);
        const render::RenderedImage fwd6 = render::render(f.map, f.cam, f.pose);
        const render::RenderGradients b = render::render_backward(f.map, f.cam, f.pose, fwd6, f.upstream, true);
        set_worker_threads(0);

        for (std::size_t i = 0; i < f.map.size(); ++i) {
            CHECK(std::memcmp(a.d_mean[i].data(), b.d_mean[i].data(), 3 * sizeof(double)) == 0);
            CHECK(std::memcmp(a.d_quat[i].data(), b.d_quat[i].data(), 4 * sizeof(double)) == 0);
            CHECK(std::memcmp(a.d_log_scale[i].data(), b.d_log_scale[i].data(), 3 * sizeof(double)) == 0);
            CHECK(std::memcmp(a.d_color[i].data(), b.d_color[i].data(), 3 * sizeof(double)) == 0);
            CHECK(a.d_opacity_logit[i] == b.d_opacity_logit[i]);
        }
        CHECK(std::memcmp(a.d_pose.data(), b.d_pose.data(), 6 * sizeof(double)) == 0);
    }

    TEST_CASE("apply_pose_tangent composes on the left") {
        const Pose p = ts::random_pose(*std::make_unique<std::mt19937>(7), 1.0, 3.0);
        CHECK((render::apply_pose_tangent(p, Vec6::Zero()).rotation - p.rotation).cwiseAbs().maxCoeff() == 0.0);

        Vec6 t;
        t << 0.2, -0.1, 0.05, 1.0, 2.0, -3.0;
        const Pose q = render::apply_pose_tangent(p, t);
        CHECK((q.rotation - exp_so3(t.head<3>()) * p.rotation).cwiseAbs().maxCoeff() < 1e-15);
        CHECK((q.translation - (p.translation + t.tail<3>())).norm() == 0.0);

        // Repeated small updates must keep the rotation orthonormal.
        Pose acc = p;
        auto g = ts::rng(99);
        for (int i = 0; i < 1000; ++i) {
            Vec6 dt;
            for (int k = 0; k < 6; ++k) dt[k] = ts::uniform(g, -1e-3, 1e-3);
            acc = render::apply_pose_tangent(acc, dt);
        }
        CHECK(is_valid_rotation(acc.rotation, 1e-9));
    }
}
