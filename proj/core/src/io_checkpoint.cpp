#include <cstring>

#include "io_common.hpp"
#include "splatloc/io.hpp"

namespace splatloc::io {
namespace {

constexpr char kMagic[4] = {'G', 'G', 'S', '1'};
constexpr std::uint32_t kVersion = 1;

void write_adam(std::ostream& out, const AdamState& state) {
    detail::put(out, static_cast<std::uint64_t>(state.m.size()));
    detail::put(out, static_cast<std::int64_t>(state.step_count));
    for (const double v : state.m) detail::put(out, v);
    for (const double v : state.v) detail::put(out, v);
}

AdamState read_adam(detail::Reader& reader) {
    const auto n = reader.scalar<std::uint64_t>("optimizer block");
    if (n > (1ull << 32)) throw ParseError("implausible optimizer block size", static_cast<long>(reader.pos()) - 8);
    reader.require(sizeof(std::int64_t) + static_cast<std::size_t>(n) * 2 * sizeof(double), "optimizer block");
    AdamState state(static_cast<std::size_t>(n));
    state.step_count = static_cast<long>(reader.scalar<std::int64_t>("optimizer block"));
    for (double& v : state.m) v = reader.scalar<double>("optimizer moments");
    for (double& v : state.v) v = reader.scalar<double>("optimizer moments");
    return state;
}

}  // namespace

void write_checkpoint(const std::string& path, const Checkpoint& checkpoint) {
    detail::AtomicFile file(path);
    std::ostream& out = file.stream();
    out.write(kMagic, 4);
    detail::put(out, kVersion);
    detail::put(out, static_cast<std::uint64_t>(checkpoint.map.size()));
    for (int axis = 0; axis < 3; ++axis) detail::put(out, checkpoint.map.background[axis]);
    detail::put(out, static_cast<std::int64_t>(checkpoint.optimizer.iteration));
    for (const Gaussian& g : checkpoint.map.gaussians) {
        for (int axis = 0; axis < 3; ++axis) detail::put(out, g.mean[axis]);
        for (int k = 0; k < 4; ++k) detail::put(out, g.quat[k]);
        for (int axis = 0; axis < 3; ++axis) detail::put(out, g.log_scale[axis]);
        for (int axis = 0; axis < 3; ++axis) detail::put(out, g.color[axis]);
        detail::put(out, g.opacity_logit);
        detail::put(out, g.gcs_logit);
    }
    for (const AdamState* state : {&checkpoint.optimizer.mean, &checkpoint.optimizer.quat,
                                   &checkpoint.optimizer.log_scale, &checkpoint.optimizer.color,
                                   &checkpoint.optimizer.opacity, &checkpoint.optimizer.gcs})
        write_adam(out, *state);
    file.commit();
}

Checkpoint read_checkpoint(const std::string& path) {
    const std::string data = detail::read_file(path);
    detail::Reader reader(data);
    const char* magic = reader.take(4, "checkpoint header");
    if (std::memcmp(magic, kMagic, 4) != 0) throw ParseError("not a GGS1 checkpoint: " + path, 0);
    const auto version = reader.scalar<std::uint32_t>("checkpoint header");
    if (version != kVersion) throw ParseError("unsupported checkpoint version " + std::to_string(version), 4);
    const auto count = reader.scalar<std::uint64_t>("checkpoint header");
    if (count > (1ull << 32)) throw ParseError("implausible gaussian count", 8);

    Checkpoint checkpoint;
    for (int axis = 0; axis < 3; ++axis) checkpoint.map.background[axis] = reader.scalar<double>("background");
    checkpoint.optimizer.iteration = static_cast<long>(reader.scalar<std::int64_t>("iteration"));
    reader.require(static_cast<std::size_t>(count) * 15 * sizeof(double), "gaussian payload");
    checkpoint.map.gaussians.reserve(static_cast<std::size_t>(count));
    for (std::uint64_t i = 0; i < count; ++i) {
        Gaussian g;
        for (int axis = 0; axis < 3; ++axis) g.mean[axis] = reader.scalar<double>("gaussian");
        for (int k = 0; k < 4; ++k) g.quat[k] = reader.scalar<double>("gaussian");
        for (int axis = 0; axis < 3; ++axis) g.log_scale[axis] = reader.scalar<double>("gaussian");
        for (int axis = 0; axis < 3; ++axis) g.color[axis] = reader.scalar<double>("gaussian");
        g.opacity_logit = reader.scalar<double>("gaussian");
        g.gcs_logit = reader.scalar<double>("gaussian");
        checkpoint.map.gaussians.push_back(g);
    }
    for (AdamState* state : {&checkpoint.optimizer.mean, &checkpoint.optimizer.quat, &checkpoint.optimizer.log_scale,
                             &checkpoint.optimizer.color, &checkpoint.optimizer.opacity, &checkpoint.optimizer.gcs})
        *state = read_adam(reader);
    if (!reader.done()) throw ParseError("trailing bytes after checkpoint", static_cast<long>(reader.pos()));
    return checkpoint;
}

}  // namespace splatloc::io
