#include "splatloc/render.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

#include "splatloc/errors.hpp"
#include "splatloc/geometry.hpp"
#include "splatloc/parallel.hpp"

namespace splatloc::render {

namespace {

constexpr int kTileSize = 16;
constexpr double kCovRegularizer = 0.3;  // px^2, keeps cov2d invertible
constexpr double kAlphaClamp = 0.99;
constexpr double kAlphaMin = 1e-8;  // contributions below this are skipped
constexpr double kTransmittanceStop = 1e-4;
constexpr double kCullSigmas = 3.0;  // visibility test against the image rect
// Tiles list a splat out to where the alpha cutoff already zeroes it, so a
// footprint crossing a tile boundary cannot step the rendered value.
constexpr double kCoverageSigmas = 6.1;  // exp(-6.1^2 / 2) < kAlphaMin
constexpr double kMaxExponent = 37.0;    // exp(-37/2) < kAlphaMin

Mat23 projection_jacobian(const Camera& cam, const Vec3& p) {
    const double z = p.z();
    Mat23 j;
    j << cam.fx / z, 0.0, -cam.fx * p.x() / (z * z),
        0.0, cam.fy / z, -cam.fy * p.y() / (z * z);
    return j;
}

double max_eigenvalue_2x2(const Mat2& m) {
    const double mid = 0.5 * (m(0, 0) + m(1, 1));
    const double diff = 0.5 * (m(0, 0) - m(1, 1));
    return mid + std::sqrt(diff * diff + m(0, 1) * m(0, 1));
}

// FNV-1a over the parameters the rendered image depends on. Detects the map
// being edited between render() and render_backward().
std::uint64_t render_state_checksum(const GaussianMap& map) {
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&h](double d) {
        std::uint64_t bits;
        std::memcpy(&bits, &d, sizeof bits);
        h ^= bits;
        h *= 1099511628211ull;
    };
    for (const Gaussian& g : map.gaussians) {
        for (int i = 0; i < 3; ++i) mix(g.mean[i]);
        for (int i = 0; i < 4; ++i) mix(g.quat[i]);
        for (int i = 0; i < 3; ++i) mix(g.log_scale[i]);
        for (int i = 0; i < 3; ++i) mix(g.color[i]);
        mix(g.opacity_logit);
    }
    for (int i = 0; i < 3; ++i) mix(map.background[i]);
    return h;
}

std::optional<Splat2D> project_with(const Gaussian& g, const Camera& cam, const Mat3& rot_wc, const Vec3& t_wc,
                                    std::int32_t index) {
    const Vec3 p_cam = rot_wc * g.mean + t_wc;
    if (!(p_cam.z() > cam.near) || !(p_cam.z() < cam.far)) return std::nullopt;

    Splat2D s;
    s.index = index;
    s.p_cam = p_cam;
    s.depth = p_cam.z();
    s.mean2d = Vec2(cam.fx * p_cam.x() / p_cam.z() + cam.cx, cam.fy * p_cam.y() / p_cam.z() + cam.cy);

    const Mat3 r = quat_to_rotation_normalized(g.quat);
    const Vec3 sq = g.scale().array().square();
    const Mat3 cov_world = r * sq.asDiagonal() * r.transpose();
    const Mat3 cov_cam = rot_wc * cov_world * rot_wc.transpose();
    const Mat23 j = projection_jacobian(cam, p_cam);
    Mat2 cov2d = j * cov_cam * j.transpose();
    cov2d(0, 0) += kCovRegularizer;
    cov2d(1, 1) += kCovRegularizer;
    if (!cov2d.allFinite()) return std::nullopt;

    const double cull_r = kCullSigmas * std::sqrt(max_eigenvalue_2x2(cov2d));
    if (s.mean2d.x() + cull_r < 0.0 || s.mean2d.x() - cull_r > cam.width - 1.0 || s.mean2d.y() + cull_r < 0.0 ||
        s.mean2d.y() - cull_r > cam.height - 1.0)
        return std::nullopt;

    const double det = cov2d.determinant();
    if (!(det > 0.0)) return std::nullopt;
    s.cov2d = cov2d;
    s.conic << cov2d(1, 1) / det, -cov2d(0, 1) / det, -cov2d(0, 1) / det, cov2d(0, 0) / det;
    return s;
}

// Screen-space gradient of one splat, accumulated within a single tile.
struct ScreenGrad {
    Vec2 d_mean2d = Vec2::Zero();
    double d_conic_a = 0.0;
    double d_conic_b = 0.0;
    double d_conic_c = 0.0;
    Vec3 d_color = Vec3::Zero();
    double d_opacity = 0.0;

    void add(const ScreenGrad& o) {
        d_mean2d += o.d_mean2d;
        d_conic_a += o.d_conic_a;
        d_conic_b += o.d_conic_b;
        d_conic_c += o.d_conic_c;
        d_color += o.d_color;
        d_opacity += o.d_opacity;
    }
};

}  // namespace

struct ForwardCache {
    // One pixel's blend step: which tile-local splat contributed and its
    // unclamped gaussian value. Alpha is recomputed from the map's opacity.
    struct Contribution {
        std::int32_t local;
        double gauss;
    };
    struct Tile {
        int x0 = 0, y0 = 0, x1 = 0, y1 = 0;      // pixel extent, half open
        std::vector<std::int32_t> splats;        // front-to-back order
        std::vector<std::uint32_t> offsets;      // per pixel, size px_count+1
        std::vector<Contribution> contribs;
    };

    std::size_t map_size = 0;
    std::uint64_t checksum = 0;
    Camera cam;
    Pose pose;
    std::vector<Splat2D> splats;
    int tiles_x = 0, tiles_y = 0;
    std::vector<Tile> tiles;
    std::vector<double> transmittance;  // per pixel, after the last contributor
};

std::optional<Splat2D> project_gaussian(const Gaussian& g, const Camera& cam, const Pose& camera_to_world) {
    validate_camera(cam);
    validate_pose(camera_to_world);
    const Pose world_to_cam = pose_inverse(camera_to_world);
    return project_with(g, cam, world_to_cam.rotation, world_to_cam.translation, -1);
}

RenderedImage render(const GaussianMap& map, const Camera& cam, const Pose& camera_to_world) {
    validate_camera(cam);
    validate_pose(camera_to_world);

    auto cache = std::make_shared<ForwardCache>();
    cache->map_size = map.size();
    cache->checksum = render_state_checksum(map);
    cache->cam = cam;
    cache->pose = camera_to_world;

    const Pose world_to_cam = pose_inverse(camera_to_world);

    std::vector<std::optional<Splat2D>> projected(map.size());
    parallel_blocks(map.size(), 256, [&](std::size_t, std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i)
            projected[i] = project_with(map.gaussians[i], cam, world_to_cam.rotation, world_to_cam.translation,
                                        static_cast<std::int32_t>(i));
    });
    for (auto& p : projected)
        if (p) cache->splats.push_back(*p);

    cache->tiles_x = (cam.width + kTileSize - 1) / kTileSize;
    cache->tiles_y = (cam.height + kTileSize - 1) / kTileSize;
    cache->tiles.resize(static_cast<std::size_t>(cache->tiles_x) * cache->tiles_y);
    for (int ty = 0; ty < cache->tiles_y; ++ty) {
        for (int tx = 0; tx < cache->tiles_x; ++tx) {
            ForwardCache::Tile& t = cache->tiles[static_cast<std::size_t>(ty) * cache->tiles_x + tx];
            t.x0 = tx * kTileSize;
            t.y0 = ty * kTileSize;
            t.x1 = std::min(cam.width, t.x0 + kTileSize);
            t.y1 = std::min(cam.height, t.y0 + kTileSize);
        }
    }

    for (std::int32_t sid = 0; sid < static_cast<std::int32_t>(cache->splats.size()); ++sid) {
        const Splat2D& s = cache->splats[sid];
        const double r = kCoverageSigmas * std::sqrt(max_eigenvalue_2x2(s.cov2d));
        const int x0 = std::clamp(static_cast<int>(std::floor(s.mean2d.x() - r)), 0, cam.width - 1);
        const int x1 = std::clamp(static_cast<int>(std::ceil(s.mean2d.x() + r)), 0, cam.width - 1);
        const int y0 = std::clamp(static_cast<int>(std::floor(s.mean2d.y() - r)), 0, cam.height - 1);
        const int y1 = std::clamp(static_cast<int>(std::ceil(s.mean2d.y() + r)), 0, cam.height - 1);
        if (s.mean2d.x() + r < 0.0 || s.mean2d.x() - r > cam.width - 1.0 || s.mean2d.y() + r < 0.0 ||
            s.mean2d.y() - r > cam.height - 1.0)
            continue;
        for (int ty = y0 / kTileSize; ty <= y1 / kTileSize; ++ty)
            for (int tx = x0 / kTileSize; tx <= x1 / kTileSize; ++tx)
                cache->tiles[static_cast<std::size_t>(ty) * cache->tiles_x + tx].splats.push_back(sid);
    }

    RenderedImage out;
    out.image = Image(cam.width, cam.height);
    out.alpha.assign(out.image.pixel_count(), 0.0);
    cache->transmittance.assign(out.image.pixel_count(), 1.0);

    parallel_blocks(cache->tiles.size(), 1, [&](std::size_t, std::size_t begin, std::size_t end) {
        for (std::size_t ti = begin; ti < end; ++ti) {
            ForwardCache::Tile& tile = cache->tiles[ti];
            std::sort(tile.splats.begin(), tile.splats.end(), [&](std::int32_t a, std::int32_t b) {
                const Splat2D& sa = cache->splats[a];
                const Splat2D& sb = cache->splats[b];
                if (sa.depth != sb.depth) return sa.depth < sb.depth;
                return sa.index < sb.index;
            });
            tile.offsets.reserve(static_cast<std::size_t>(tile.x1 - tile.x0) * (tile.y1 - tile.y0) + 1);
            tile.offsets.push_back(0);
            for (int row = tile.y0; row < tile.y1; ++row) {
                for (int col = tile.x0; col < tile.x1; ++col) {
                    double trans = 1.0;
                    Vec3 rgb = Vec3::Zero();
                    for (std::int32_t local = 0; local < static_cast<std::int32_t>(tile.splats.size()); ++local) {
                        const Splat2D& s = cache->splats[tile.splats[local]];
                        const double dx = col - s.mean2d.x();
                        const double dy = row - s.mean2d.y();
                        const double e =
                            s.conic(0, 0) * dx * dx + 2.0 * s.conic(0, 1) * dx * dy + s.conic(1, 1) * dy * dy;
                        if (!(e < kMaxExponent)) continue;
                        const double gauss = std::exp(-0.5 * e);
                        const Gaussian& g = map.gaussians[s.index];
                        const double alpha = std::min(g.opacity() * gauss, kAlphaClamp);
                        if (alpha < kAlphaMin) continue;
                        rgb += (trans * alpha) * g.color;
                        tile.contribs.push_back({local, gauss});
                        trans *= 1.0 - alpha;
                        if (trans < kTransmittanceStop) break;
                    }
                    rgb += trans * map.background;
                    const std::size_t px = static_cast<std::size_t>(row) * cam.width + col;
                    for (int ch = 0; ch < 3; ++ch) out.image.at(row, col, ch) = rgb[ch];
                    out.alpha[px] = 1.0 - trans;
                    cache->transmittance[px] = trans;
                    tile.offsets.push_back(static_cast<std::uint32_t>(tile.contribs.size()));
                }
            }
        }
    });

    out.cache = std::move(cache);
    return out;
}

RenderGradients render_backward(const GaussianMap& map, const Camera& cam, const Pose& camera_to_world,
                                const RenderedImage& rendered, const Image& upstream, bool with_pose_gradient) {
    if (!rendered.cache) throw ContractError("render_backward: rendered image carries no forward cache");
    const ForwardCache& fc = *rendered.cache;
    if (fc.map_size != map.size() || fc.checksum != render_state_checksum(map))
        throw ContractError("render_backward: map changed since render()");
    if (fc.cam.fx != cam.fx || fc.cam.fy != cam.fy || fc.cam.cx != cam.cx || fc.cam.cy != cam.cy ||
        fc.cam.width != cam.width || fc.cam.height != cam.height)
        throw ContractError("render_backward: camera does not match render()");
    if ((fc.pose.rotation - camera_to_world.rotation).cwiseAbs().maxCoeff() > 0.0 ||
        (fc.pose.translation - camera_to_world.translation).cwiseAbs().maxCoeff() > 0.0)
        throw ContractError("render_backward: pose does not match render()");
    if (!upstream.same_shape(rendered.image)) throw ContractError("render_backward: upstream shape mismatch");

    // Phase A: per-tile accumulation of screen-space gradients, replaying each
    // pixel's recorded contributor list front to back and differentiating the
    // blend back to front with a running suffix sum.
    std::vector<std::vector<ScreenGrad>> tile_grads(fc.tiles.size());
    parallel_blocks(fc.tiles.size(), 1, [&](std::size_t, std::size_t begin, std::size_t end) {
        std::vector<double> trans_scratch;
        std::vector<double> alpha_scratch;
        for (std::size_t ti = begin; ti < end; ++ti) {
            const ForwardCache::Tile& tile = fc.tiles[ti];
            if (tile.splats.empty()) continue;
            std::vector<ScreenGrad>& grads = tile_grads[ti];
            grads.resize(tile.splats.size());
            std::size_t pixel_in_tile = 0;
            for (int row = tile.y0; row < tile.y1; ++row) {
                for (int col = tile.x0; col < tile.x1; ++col, ++pixel_in_tile) {
                    const std::uint32_t begin_c = tile.offsets[pixel_in_tile];
                    const std::uint32_t end_c = tile.offsets[pixel_in_tile + 1];
                    if (begin_c == end_c) continue;
                    const Vec3 g_px(upstream.at(row, col, 0), upstream.at(row, col, 1), upstream.at(row, col, 2));
                    const std::size_t px = static_cast<std::size_t>(row) * cam.width + col;

                    trans_scratch.clear();
                    alpha_scratch.clear();
                    double trans = 1.0;
                    for (std::uint32_t i = begin_c; i < end_c; ++i) {
                        const ForwardCache::Contribution& c = tile.contribs[i];
                        const Gaussian& g = map.gaussians[fc.splats[tile.splats[c.local]].index];
                        const double alpha = std::min(g.opacity() * c.gauss, kAlphaClamp);
                        trans_scratch.push_back(trans);
                        alpha_scratch.push_back(alpha);
                        trans *= 1.0 - alpha;
                    }

                    // Suffix S = sum_{j>i} T_j a_j c_j + T_final * background.
                    Vec3 suffix = fc.transmittance[px] * map.background;
                    for (std::uint32_t i = end_c; i-- > begin_c;) {
                        const ForwardCache::Contribution& c = tile.contribs[i];
                        const Splat2D& s = fc.splats[tile.splats[c.local]];
                        const Gaussian& g = map.gaussians[s.index];
                        const std::size_t k = i - begin_c;
                        const double alpha = alpha_scratch[k];
                        const double t_i = trans_scratch[k];
                        const double weight = t_i * alpha;
                        ScreenGrad& sg = grads[static_cast<std::size_t>(c.local)];
                        sg.d_color += weight * g_px;
                        const double d_alpha = t_i * g.color.dot(g_px) - suffix.dot(g_px) / (1.0 - alpha);
                        if (g.opacity() * c.gauss < kAlphaClamp) {
                            sg.d_opacity += d_alpha * c.gauss;
                            const double d_gauss = d_alpha * g.opacity();
                            const double dx = col - s.mean2d.x();
                            const double dy = row - s.mean2d.y();
                            const Vec2 cd = s.conic * Vec2(dx, dy);
                            sg.d_mean2d += (d_gauss * c.gauss) * cd;
                            sg.d_conic_a += d_gauss * c.gauss * (-0.5 * dx * dx);
                            sg.d_conic_b += d_gauss * c.gauss * (-dx * dy);
                            sg.d_conic_c += d_gauss * c.gauss * (-0.5 * dy * dy);
                        }
                        suffix += weight * g.color;
                    }
                }
            }
        }
    });

    // Reduce per-tile grads in tile order so totals do not depend on the
    // worker count.
    std::vector<ScreenGrad> splat_grads(fc.splats.size());
    for (std::size_t ti = 0; ti < fc.tiles.size(); ++ti) {
        if (tile_grads[ti].empty()) continue;
        const ForwardCache::Tile& tile = fc.tiles[ti];
        for (std::size_t local = 0; local < tile.splats.size(); ++local)
            splat_grads[static_cast<std::size_t>(tile.splats[local])].add(tile_grads[ti][local]);
    }

    // Phase B: convert screen-space gradients to parameter space.
    RenderGradients out;
    const std::size_t n = map.size();
    out.d_mean.assign(n, Vec3::Zero());
    out.d_quat.assign(n, Vec4::Zero());
    out.d_log_scale.assign(n, Vec3::Zero());
    out.d_color.assign(n, Vec3::Zero());
    out.d_opacity_logit.assign(n, 0.0);
    out.screen_grad_norm.assign(n, 0.0);
    out.visible.assign(n, 0);
    out.has_pose_gradient = with_pose_gradient;

    const Pose world_to_cam = pose_inverse(camera_to_world);
    const Mat3 v = world_to_cam.rotation;

    constexpr std::size_t kBlock = 128;
    const std::size_t blocks = fc.splats.empty() ? 0 : (fc.splats.size() + kBlock - 1) / kBlock;
    std::vector<Vec6> block_pose(blocks, Vec6::Zero());

    parallel_blocks(fc.splats.size(), kBlock, [&](std::size_t block, std::size_t begin, std::size_t end) {
        for (std::size_t k = begin; k < end; ++k) {
            const Splat2D& s = fc.splats[k];
            const ScreenGrad& sg = splat_grads[k];
            const Gaussian& g = map.gaussians[s.index];
            out.visible[s.index] = 1;
            out.screen_grad_norm[s.index] = sg.d_mean2d.norm();
            out.d_color[s.index] = sg.d_color;
            const double opacity = g.opacity();
            out.d_opacity_logit[s.index] = sg.d_opacity * opacity * (1.0 - opacity);

            Mat2 d_lambda;
            d_lambda << sg.d_conic_a, 0.5 * sg.d_conic_b, 0.5 * sg.d_conic_b, sg.d_conic_c;
            const Mat2 d_cov2d = -(s.conic * d_lambda * s.conic);

            const double z = s.p_cam.z();
            const Mat23 j = projection_jacobian(cam, s.p_cam);
            const Mat3 rot = quat_to_rotation_normalized(g.quat);
            const Vec3 sq = g.scale().array().square();
            const Mat3 cov_w = rot * sq.asDiagonal() * rot.transpose();
            const Mat3 cov_c = v * cov_w * v.transpose();

            Vec3 dp_cam = j.transpose() * sg.d_mean2d;
            const Mat23 dj = 2.0 * d_cov2d * j * cov_c;
            const double z2 = z * z;
            dp_cam.x() += dj(0, 2) * (-cam.fx / z2);
            dp_cam.y() += dj(1, 2) * (-cam.fy / z2);
            dp_cam.z() += dj(0, 0) * (-cam.fx / z2) + dj(0, 2) * (2.0 * cam.fx * s.p_cam.x() / (z2 * z)) +
                          dj(1, 1) * (-cam.fy / z2) + dj(1, 2) * (2.0 * cam.fy * s.p_cam.y() / (z2 * z));

            out.d_mean[s.index] = v.transpose() * dp_cam;

            const Mat23 a = j * v;
            const Mat3 d_cov_w = a.transpose() * d_cov2d * a;
            const Mat3 d_rot = 2.0 * d_cov_w * rot * sq.asDiagonal();
            const std::array<Mat3, 4> rot_jac = quat_to_rotation_jacobian(g.quat);
            for (int q = 0; q < 4; ++q) out.d_quat[s.index][q] = (d_rot.array() * rot_jac[q].array()).sum();
            for (int axis = 0; axis < 3; ++axis)
                out.d_log_scale[s.index][axis] = 2.0 * sq[axis] * rot.col(axis).dot(d_cov_w * rot.col(axis));

            if (with_pose_gradient) {
                Vec6 dpose = Vec6::Zero();
                dpose.tail<3>() = -(v.transpose() * dp_cam);
                const Vec3 w = g.mean - camera_to_world.translation;
                for (int axis = 0; axis < 3; ++axis)
                    dpose[axis] = dp_cam.dot(v * w.cross(Vec3::Unit(axis)));
                const Mat3 gc = j.transpose() * d_cov2d * j;
                const Mat3 nmat = cov_w * v.transpose() * gc * v;
                dpose[0] += -2.0 * (nmat(1, 2) - nmat(2, 1));
                dpose[1] += -2.0 * (nmat(2, 0) - nmat(0, 2));
                dpose[2] += -2.0 * (nmat(0, 1) - nmat(1, 0));
                block_pose[block] += dpose;
            }
        }
    });
    for (const Vec6& bp : block_pose) out.d_pose += bp;
    return out;
}

Pose apply_pose_tangent(const Pose& pose, const Vec6& tangent) {
    Pose out;
    out.rotation = exp_so3(tangent.head<3>()) * pose.rotation;
    out.translation = pose.translation + tangent.tail<3>();
    return out;
}

}  // namespace splatloc::render
