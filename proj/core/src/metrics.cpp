#include "splatloc/metrics.hpp"

#include <cmath>
#include <stdexcept>

#include "splatloc/kdtree.hpp"
#include "splatloc/parallel.hpp"

namespace splatloc {

namespace {

constexpr std::size_t kBlock = 512;

// Mean squared NN distance from each point of `from` into `index`.
double mean_squared_nn(const PointCloud& from, const NnIndex& index) {
    const std::size_t blocks = (from.size() + kBlock - 1) / kBlock;
    std::vector<double> partial(blocks, 0.0);
    parallel_blocks(from.size(), kBlock, [&](std::size_t b, std::size_t begin, std::size_t end) {
        double s = 0.0;
        for (std::size_t i = begin; i < end; ++i) s += index.nearest(from.points[i]).squared_distance;
        partial[b] = s;
    });
    double total = 0.0;
    for (double p : partial) total += p;
    return total / static_cast<double>(from.size());
}

double precision(const PointCloud& from, const NnIndex& index, double tau, bool euclidean) {
    const std::size_t blocks = (from.size() + kBlock - 1) / kBlock;
    std::vector<std::size_t> partial(blocks, 0);
    parallel_blocks(from.size(), kBlock, [&](std::size_t b, std::size_t begin, std::size_t end) {
        std::size_t hits = 0;
        for (std::size_t i = begin; i < end; ++i) {
            const double d2 = index.nearest(from.points[i]).squared_distance;
            const double d = euclidean ? std::sqrt(d2) : d2;
            if (d < tau) ++hits;
        }
        partial[b] = hits;
    });
    std::size_t total = 0;
    for (std::size_t p : partial) total += p;
    return static_cast<double>(total) / static_cast<double>(from.size());
}

void require_non_empty(const PointCloud& p1, const PointCloud& p2) {
    if (p1.empty() || p2.empty()) throw std::invalid_argument("point cloud metrics need non-empty clouds");
}

}  // namespace

double chamfer(const PointCloud& p1, const PointCloud& p2) {
    require_non_empty(p1, p2);
    const NnIndex i2(p2), i1(p1);
    return mean_squared_nn(p1, i2) + mean_squared_nn(p2, i1);
}

FscoreResult fscore(const PointCloud& p1, const PointCloud& p2, double tau, bool euclidean_threshold) {
    require_non_empty(p1, p2);
    if (!(tau > 0.0)) throw std::invalid_argument("fscore threshold must be positive");
    const NnIndex i2(p2), i1(p1);
    FscoreResult r;
    r.precision_1 = precision(p1, i2, tau, euclidean_threshold);
    r.precision_2 = precision(p2, i1, tau, euclidean_threshold);
    const double denom = r.precision_1 + r.precision_2;
    r.fscore = denom > 0.0 ? 2.0 * r.precision_1 * r.precision_2 / denom : 0.0;
    return r;
}

GeomReport geom_report(const PointCloud& p1, const PointCloud& p2, const std::vector<double>& thresholds,
                       bool euclidean_threshold) {
    require_non_empty(p1, p2);
    GeomReport report;
    report.chamfer = chamfer(p1, p2);
    report.thresholds = thresholds;
    const NnIndex i2(p2), i1(p1);
    for (double tau : thresholds) {
        if (!(tau > 0.0)) throw std::invalid_argument("fscore threshold must be positive");
        FscoreResult r;
        r.precision_1 = precision(p1, i2, tau, euclidean_threshold);
        r.precision_2 = precision(p2, i1, tau, euclidean_threshold);
        const double denom = r.precision_1 + r.precision_2;
        r.fscore = denom > 0.0 ? 2.0 * r.precision_1 * r.precision_2 / denom : 0.0;
        report.fscores.push_back(r);
    }
    return report;
}

}  // namespace splatloc
