#include "splatloc/image_quality.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace splatloc {

namespace {

constexpr int kRadius = 5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

const std::array<double, 2 * kRadius + 1>& window() {
    static const std::array<double, 2 * kRadius + 1> w = [] {
        std::array<double, 2 * kRadius + 1> v{};
        double sum = 0.0;
        for (int k = -kRadius; k <= kRadius; ++k) {
            v[static_cast<std::size_t>(k + kRadius)] = std::exp(-(k * k) / (2.0 * 1.5 * 1.5));
            sum += v[static_cast<std::size_t>(k + kRadius)];
        }
        for (double& x : v) x /= sum;
        return v;
    }();
    return w;
}

struct Plane {
    int w = 0, h = 0;
    std::vector<double> v;
    Plane() = default;
    Plane(int width, int height) : w(width), h(height), v(static_cast<std::size_t>(width) * height, 0.0) {}
    double& at(int y, int x) { return v[static_cast<std::size_t>(y) * w + x]; }
    double at(int y, int x) const { return v[static_cast<std::size_t>(y) * w + x]; }
};

// Sum of window weights that stay inside [0, n) for a center at i.
double edge_norm(int i, int n) {
    const auto& w = window();
    double s = 0.0;
    for (int k = -kRadius; k <= kRadius; ++k)
        if (i + k >= 0 && i + k < n) s += w[static_cast<std::size_t>(k + kRadius)];
    return s;
}

// out(p) = sum_k w_k in(p+k) / norm(p): truncated, renormalized at p.
Plane blur_x(const Plane& p) {
    const auto& w = window();
    Plane out(p.w, p.h);
    for (int y = 0; y < p.h; ++y) {
        for (int x = 0; x < p.w; ++x) {
            double acc = 0.0;
            for (int k = -kRadius; k <= kRadius; ++k) {
                const int xx = x + k;
                if (xx >= 0 && xx < p.w) acc += w[static_cast<std::size_t>(k + kRadius)] * p.at(y, xx);
            }
            out.at(y, x) = acc / edge_norm(x, p.w);
        }
    }
    return out;
}

Plane blur_y(const Plane& p) {
    const auto& w = window();
    Plane out(p.w, p.h);
    for (int y = 0; y < p.h; ++y) {
        for (int x = 0; x < p.w; ++x) {
            double acc = 0.0;
            for (int k = -kRadius; k <= kRadius; ++k) {
                const int yy = y + k;
                if (yy >= 0 && yy < p.h) acc += w[static_cast<std::size_t>(k + kRadius)] * p.at(yy, x);
            }
            out.at(y, x) = acc / edge_norm(y, p.h);
        }
    }
    return out;
}

Plane blur(const Plane& p) { return blur_y(blur_x(p)); }

// Adjoint of blur_x: out(q) = sum_k w_k in(q-k) / norm(q-k).
Plane adjoint_blur_x(const Plane& p) {
    const auto& w = window();
    Plane out(p.w, p.h);
    for (int y = 0; y < p.h; ++y) {
        for (int x = 0; x < p.w; ++x) {
            double acc = 0.0;
            for (int k = -kRadius; k <= kRadius; ++k) {
                const int c = x - k;
                if (c >= 0 && c < p.w) acc += w[static_cast<std::size_t>(k + kRadius)] * p.at(y, c) / edge_norm(c, p.w);
            }
            out.at(y, x) = acc;
        }
    }
    return out;
}

Plane adjoint_blur_y(const Plane& p) {
    const auto& w = window();
    Plane out(p.w, p.h);
    for (int y = 0; y < p.h; ++y) {
        for (int x = 0; x < p.w; ++x) {
            double acc = 0.0;
            for (int k = -kRadius; k <= kRadius; ++k) {
                const int c = y - k;
                if (c >= 0 && c < p.h) acc += w[static_cast<std::size_t>(k + kRadius)] * p.at(c, x) / edge_norm(c, p.h);
            }
            out.at(y, x) = acc;
        }
    }
    return out;
}

Plane adjoint_blur(const Plane& p) { return adjoint_blur_x(adjoint_blur_y(p)); }

Plane channel(const Image& img, int ch) {
    Plane p(img.width, img.height);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) p.at(y, x) = img.at(y, x, ch);
    return p;
}

Plane multiply(const Plane& a, const Plane& b) {
    Plane out(a.w, a.h);
    for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] = a.v[i] * b.v[i];
    return out;
}

void require_same_shape(const Image& a, const Image& b) {
    if (!a.same_shape(b) || a.width <= 0 || a.height <= 0)
        throw std::invalid_argument("image dimensions mismatch or empty image");
}

struct ChannelSsim {
    double sum = 0.0;           // sum of per-pixel SSIM
    Plane mu_a, mu_b;
    Plane d_mu, d_var, d_cov;   // partials of sum(S) per center pixel
};

ChannelSsim channel_ssim(const Plane& a, const Plane& b, bool with_partials) {
    ChannelSsim r;
    r.mu_a = blur(a);
    r.mu_b = blur(b);
    const Plane m_aa = blur(multiply(a, a));
    const Plane m_bb = blur(multiply(b, b));
    const Plane m_ab = blur(multiply(a, b));
    if (with_partials) {
        r.d_mu = Plane(a.w, a.h);
        r.d_var = Plane(a.w, a.h);
        r.d_cov = Plane(a.w, a.h);
    }
    for (int y = 0; y < a.h; ++y) {
        for (int x = 0; x < a.w; ++x) {
            const double mu_a = r.mu_a.at(y, x);
            const double mu_b = r.mu_b.at(y, x);
            const double var_a = m_aa.at(y, x) - mu_a * mu_a;
            const double var_b = m_bb.at(y, x) - mu_b * mu_b;
            const double cov = m_ab.at(y, x) - mu_a * mu_b;
            const double a1 = 2.0 * mu_a * mu_b + kC1;
            const double a2 = 2.0 * cov + kC2;
            const double b1 = mu_a * mu_a + mu_b * mu_b + kC1;
            const double b2 = var_a + var_b + kC2;
            const double s = (a1 * a2) / (b1 * b2);
            r.sum += s;
            if (with_partials) {
                r.d_mu.at(y, x) = (2.0 * mu_b * a2) / (b1 * b2) - s * 2.0 * mu_a / b1;
                r.d_var.at(y, x) = -s / b2;
                r.d_cov.at(y, x) = 2.0 * a1 / (b1 * b2);
            }
        }
    }
    return r;
}

}  // namespace

double psnr(const Image& a, const Image& b) {
    require_same_shape(a, b);
    double mse = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double d = a.data[i] - b.data[i];
        mse += d * d;
    }
    mse /= static_cast<double>(a.data.size());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return -10.0 * std::log10(mse);
}

double ssim(const Image& a, const Image& b) {
    require_same_shape(a, b);
    double total = 0.0;
    for (int ch = 0; ch < 3; ++ch) total += channel_ssim(channel(a, ch), channel(b, ch), false).sum;
    return total / (static_cast<double>(a.pixel_count()) * 3.0);
}

SsimGradient ssim_with_gradient(const Image& a, const Image& b) {
    require_same_shape(a, b);
    SsimGradient out;
    out.d_first = Image(a.width, a.height);
    const double inv_n = 1.0 / (static_cast<double>(a.pixel_count()) * 3.0);
    for (int ch = 0; ch < 3; ++ch) {
        const Plane pa = channel(a, ch);
        const Plane pb = channel(b, ch);
        ChannelSsim r = channel_ssim(pa, pb, true);
        out.value += r.sum;

        // d a(q) = Adj(d_mu)(q)
        //        + 2 a(q) Adj(d_var)(q) - 2 Adj(d_var .* mu_a)(q)
        //        +   b(q) Adj(d_cov)(q) -   Adj(d_cov .* mu_b)(q)
        const Plane t1 = adjoint_blur(r.d_mu);
        const Plane t2 = adjoint_blur(r.d_var);
        const Plane t2m = adjoint_blur(multiply(r.d_var, r.mu_a));
        const Plane t3 = adjoint_blur(r.d_cov);
        const Plane t3m = adjoint_blur(multiply(r.d_cov, r.mu_b));
        for (int y = 0; y < a.height; ++y) {
            for (int x = 0; x < a.width; ++x) {
                const double g = t1.at(y, x) + 2.0 * pa.at(y, x) * t2.at(y, x) - 2.0 * t2m.at(y, x) +
                                 pb.at(y, x) * t3.at(y, x) - t3m.at(y, x);
                out.d_first.at(y, x, ch) = g * inv_n;
            }
        }
    }
    out.value *= inv_n;
    return out;
}

}  // namespace splatloc
