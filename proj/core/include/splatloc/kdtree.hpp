#pragma once

#include <cstdint>
#include <limits>
#include <vector>

#include "splatloc/types.hpp"

namespace splatloc {

struct NnResult {
    std::int64_t index = -1;
    double squared_distance = std::numeric_limits<double>::infinity();
};

// Exact nearest-neighbor index over a point cloud snapshot. Immutable after
// construction; concurrent queries are safe. Ties on squared distance resolve
// to the lowest point index.
class NnIndex {
public:
    explicit NnIndex(const PointCloud& cloud);

    NnResult nearest(const Vec3& query) const;

    // Same search with one point excluded (self-lookups during init).
    NnResult nearest_excluding(const Vec3& query, std::int64_t excluded) const;

    std::size_t size() const { return points_.size(); }
    const std::vector<Vec3>& points() const { return points_; }

private:
    struct Node {
        int axis = -1;           // -1 marks a leaf
        double split = 0.0;
        std::uint32_t begin = 0;  // leaf payload range in order_
        std::uint32_t end = 0;
        std::int32_t left = -1;
        std::int32_t right = -1;
    };

    std::int32_t build(std::uint32_t begin, std::uint32_t end);
    void search(std::int32_t node, const Vec3& query, std::int64_t excluded, NnResult& best) const;

    static constexpr std::uint32_t kLeafSize = 16;

    std::vector<Vec3> points_;
    std::vector<std::uint32_t> order_;
    std::vector<Node> nodes_;
    std::int32_t root_ = -1;
};

inline NnIndex build_index(const PointCloud& cloud) { return NnIndex(cloud); }

}  // namespace splatloc
