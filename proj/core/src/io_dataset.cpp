#include <cstdio>
#include <filesystem>
#include <sstream>

#include "io_common.hpp"
#include "splatloc/io.hpp"

namespace splatloc::io {
namespace {

namespace fs = std::filesystem;

std::string numbered(const char* stem, std::size_t index, const char* extension) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%s_%04zu%s", stem, index, extension);
    return buf;
}

void write_camera(const std::string& path, const Camera& camera) {
    detail::AtomicFile file(path);
    char buf[256];
    std::snprintf(buf, sizeof(buf), "# fx fy cx cy width height near far\n%.17g %.17g %.17g %.17g %d %d %.17g %.17g\n",
                  camera.fx, camera.fy, camera.cx, camera.cy, camera.width, camera.height, camera.near, camera.far);
    file.stream() << buf;
    file.commit();
}

Camera read_camera(const std::string& path) {
    const std::string data = detail::read_file(path);
    std::istringstream in(data);
    std::string line;
    std::size_t line_number = 0;
    while (std::getline(in, line)) {
        ++line_number;
        const std::size_t comment = line.find('#');
        if (comment != std::string::npos) line.resize(comment);
        std::istringstream tokens(line);
        Camera camera;
        if (tokens >> camera.fx >> camera.fy >> camera.cx >> camera.cy >> camera.width >> camera.height >>
            camera.near >> camera.far)
            return camera;
        if (!line.empty() && line.find_first_not_of(" \t\r") != std::string::npos)
            throw ParseError("line " + std::to_string(line_number) + ": malformed camera line in " + path);
    }
    throw ParseError("no camera record in " + path);
}

}  // namespace

void write_dataset(const std::string& dir, const DatasetBundle& bundle) {
    if (bundle.images.size() != bundle.poses.size() || bundle.scans.size() != bundle.poses.size())
        throw ParseError("dataset bundle: images, scans and poses must align");
    fs::create_directories(fs::path(dir) / "scans");
    fs::create_directories(fs::path(dir) / "images");
    write_camera((fs::path(dir) / "camera.txt").string(), bundle.camera);
    write_poses((fs::path(dir) / "poses.txt").string(), bundle.poses);
    for (std::size_t i = 0; i < bundle.scans.size(); ++i)
        write_cloud((fs::path(dir) / "scans" / numbered("scan", i, ".ply")).string(), bundle.scans[i]);
    for (std::size_t i = 0; i < bundle.images.size(); ++i)
        write_imgf((fs::path(dir) / "images" / numbered("view", i, ".imgf")).string(), bundle.images[i]);
    if (!bundle.extra_points.empty())
        write_cloud((fs::path(dir) / "extra_points.ply").string(), bundle.extra_points);
    if (bundle.has_gt_map) write_map((fs::path(dir) / "gt_map.ply").string(), bundle.gt_map);
}

DatasetBundle read_dataset(const std::string& dir) {
    DatasetBundle bundle;
    bundle.camera = read_camera((fs::path(dir) / "camera.txt").string());
    bundle.poses = read_poses((fs::path(dir) / "poses.txt").string());
    for (std::size_t i = 0; i < bundle.poses.size(); ++i) {
        const fs::path scan = fs::path(dir) / "scans" / numbered("scan", i, ".ply");
        const fs::path view = fs::path(dir) / "images" / numbered("view", i, ".imgf");
        if (!fs::exists(scan)) throw ParseError("dataset is missing " + scan.string());
        if (!fs::exists(view)) throw ParseError("dataset is missing " + view.string());
        bundle.scans.push_back(read_cloud(scan.string()));
        bundle.images.push_back(read_imgf(view.string()));
    }
    const fs::path extra = fs::path(dir) / "extra_points.ply";
    if (fs::exists(extra)) bundle.extra_points = read_cloud(extra.string());
    const fs::path gt_map = fs::path(dir) / "gt_map.ply";
    if (fs::exists(gt_map)) {
        bundle.gt_map = read_map(gt_map.string());
        bundle.has_gt_map = true;
    }
    return bundle;
}

}  // namespace splatloc::io
