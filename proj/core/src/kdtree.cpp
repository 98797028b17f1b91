#include "splatloc/kdtree.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace splatloc {

NnIndex::NnIndex(const PointCloud& cloud) : points_(cloud.points) {
    if (points_.empty()) throw std::invalid_argument("build_index: empty cloud");
    for (const auto& p : points_)
        if (!p.allFinite()) throw std::invalid_argument("build_index: non-finite point");
    order_.resize(points_.size());
    std::iota(order_.begin(), order_.end(), 0u);
    nodes_.reserve(2 * points_.size() / kLeafSize + 4);
    root_ = build(0, static_cast<std::uint32_t>(points_.size()));
}

std::int32_t NnIndex::build(std::uint32_t begin, std::uint32_t end) {
    Node node;
    if (end - begin <= kLeafSize) {
        node.begin = begin;
        node.end = end;
        nodes_.push_back(node);
        return static_cast<std::int32_t>(nodes_.size() - 1);
    }

    Vec3 lo = points_[order_[begin]], hi = lo;
    for (std::uint32_t i = begin + 1; i < end; ++i) {
        lo = lo.cwiseMin(points_[order_[i]]);
        hi = hi.cwiseMax(points_[order_[i]]);
    }
    int axis = 0;
    (hi - lo).maxCoeff(&axis);

    const std::uint32_t mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](std::uint32_t a, std::uint32_t b) {
                         const double ca = points_[a][axis], cb = points_[b][axis];
                         return ca < cb || (ca == cb && a < b);
                     });

    node.axis = axis;
    node.split = points_[order_[mid]][axis];
    nodes_.push_back(node);
    const auto self = static_cast<std::int32_t>(nodes_.size() - 1);
    const auto left = build(begin, mid);
    const auto right = build(mid, end);
    nodes_[self].left = left;
    nodes_[self].right = right;
    return self;
}

void NnIndex::search(std::int32_t node_id, const Vec3& query, std::int64_t excluded, NnResult& best) const {
    const Node& node = nodes_[static_cast<std::size_t>(node_id)];
    if (node.axis < 0) {
        for (std::uint32_t i = node.begin; i < node.end; ++i) {
            const std::uint32_t idx = order_[i];
            if (static_cast<std::int64_t>(idx) == excluded) continue;
            const double d2 = (points_[idx] - query).squaredNorm();
            if (d2 < best.squared_distance ||
                (d2 == best.squared_distance && static_cast<std::int64_t>(idx) < best.index)) {
                best.squared_distance = d2;
                best.index = idx;
            }
        }
        return;
    }
    const double delta = query[node.axis] - node.split;
    const std::int32_t near = delta < 0.0 ? node.left : node.right;
    const std::int32_t far = delta < 0.0 ? node.right : node.left;
    search(near, query, excluded, best);
    if (delta * delta <= best.squared_distance) search(far, query, excluded, best);
}

NnResult NnIndex::nearest(const Vec3& query) const {
    NnResult best;
    search(root_, query, -1, best);
    return best;
}

NnResult NnIndex::nearest_excluding(const Vec3& query, std::int64_t excluded) const {
    NnResult best;
    search(root_, query, excluded, best);
    return best;
}

}  // namespace splatloc
