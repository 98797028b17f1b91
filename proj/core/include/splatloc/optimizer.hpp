#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

namespace splatloc {

// Adam moments over a flat parameter array. Callers own the parameter storage
// and pass matching gradient arrays.
struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    long step_count = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-15;

    explicit AdamState(std::size_t n = 0) : m(n, 0.0), v(n, 0.0) {}

    void resize(std::size_t n) {
        m.assign(n, 0.0);
        v.assign(n, 0.0);
    }

    // One update over params[i] -= lr * mhat / (sqrt(vhat) + eps).
    // advance_step() must be called once per optimizer step before the
    // per-class apply() calls so bias correction stays in sync.
    void apply(double* params, const double* grads, std::size_t n, double lr) {
        const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_count));
        const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_count));
        for (std::size_t i = 0; i < n; ++i) {
            m[i] = beta1 * m[i] + (1.0 - beta1) * grads[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * grads[i] * grads[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            params[i] -= lr * mhat / (std::sqrt(vhat) + epsilon);
        }
    }

    void advance_step() { ++step_count; }

    // Keeps moments for surviving parameters when the parameter set changes.
    // keep[i] gives the old flat index for new slot i, or -1 for a fresh slot.
    void remap(const std::vector<long>& keep) {
        std::vector<double> nm(keep.size(), 0.0), nv(keep.size(), 0.0);
        for (std::size_t i = 0; i < keep.size(); ++i) {
            if (keep[i] >= 0) {
                nm[i] = m[static_cast<std::size_t>(keep[i])];
                nv[i] = v[static_cast<std::size_t>(keep[i])];
            }
        }
        m = std::move(nm);
        v = std::move(nv);
    }
};

}  // namespace splatloc
