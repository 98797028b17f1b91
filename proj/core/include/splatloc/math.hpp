#pragma once

#include <algorithm>
#include <cmath>

namespace splatloc {

// Overflow-safe logistic function.
inline double sigmoid(double x) {
    if (x >= 0.0) {
        double e = std::exp(-x);
        return 1.0 / (1.0 + e);
    }
    double e = std::exp(x);
    return e / (1.0 + e);
}

inline double logit(double p) {
    return std::log(p / (1.0 - p));
}

inline double sigmoid_derivative(double value) {
    // Derivative expressed through the sigmoid value itself.
    return value * (1.0 - value);
}

inline double clamp01(double x) {
    return std::clamp(x, 0.0, 1.0);
}

inline double deg_to_rad(double deg) { return deg * M_PI / 180.0; }
inline double rad_to_deg(double rad) { return rad * 180.0 / M_PI; }

}  // namespace splatloc
