#pragma once

#include <vector>

#include "splatloc/types.hpp"

namespace splatloc {

struct FscoreResult {
    double fscore = 0.0;
    double precision_1 = 0.0;  // fraction of the first cloud near the second
    double precision_2 = 0.0;
};

struct GeomReport {
    double chamfer = 0.0;  // squared-meter units
    std::vector<double> thresholds;
    std::vector<FscoreResult> fscores;  // aligned with thresholds
};

// Symmetric mean squared nearest-neighbor distance between two clouds.
double chamfer(const PointCloud& p1, const PointCloud& p2);

// precision_k counts points whose nearest-neighbor distance to the other
// cloud passes tau. The threshold applies to squared distances by default;
// euclidean_threshold compares plain distances instead.
FscoreResult fscore(const PointCloud& p1, const PointCloud& p2, double tau, bool euclidean_threshold = false);

GeomReport geom_report(const PointCloud& p1, const PointCloud& p2,
                       const std::vector<double>& thresholds = {0.1, 0.2, 1.0},
                       bool euclidean_threshold = false);

}  // namespace splatloc
