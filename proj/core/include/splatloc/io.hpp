#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "splatloc/errors.hpp"
#include "splatloc/localize.hpp"
#include "splatloc/metrics.hpp"
#include "splatloc/synth.hpp"
#include "splatloc/train.hpp"
#include "splatloc/types.hpp"

namespace splatloc::io {

// ---------------------------------------------------------------------------
// PLY: generic single-table codec plus typed adapters. No list properties.

enum class PlyScalar { f32, f64, u8, i8, u16, i16, u32, i32 };

struct PlyProperty {
    std::string name;
    PlyScalar type = PlyScalar::f32;
};

// One element table; values are held as doubles, which represent every
// supported scalar exactly. rows.size() == count * properties.size().
struct PlyElement {
    std::string name;
    std::size_t count = 0;
    std::vector<PlyProperty> properties;
    std::vector<double> rows;

    double at(std::size_t row, std::size_t prop) const { return rows[row * properties.size() + prop]; }
    long find(const std::string& property) const;  // index or -1
};

struct PlyTable {
    std::vector<PlyElement> elements;
    std::vector<std::string> comments;
    bool binary = true;

    const PlyElement* element(const std::string& name) const;
};

// Reading preserves every property, so read + write copies unknown columns
// through untouched. Malformed headers and truncated payloads raise
// ParseError with the byte offset.
PlyTable read_ply_table(const std::string& path);
void write_ply_table(const std::string& path, const PlyTable& table);

// Typed views over the "vertex" element. Clouds need x,y,z; maps add the
// splat convention columns scale_0..2 (log), rot_0..3 (w,x,y,z), f_dc_0..2
// (DC spherical harmonics), opacity (logit) and gcs (plain probability).
// Payloads are float32 on disk; the background color rides in a comment.
PointCloud read_cloud(const std::string& path);
void write_cloud(const std::string& path, const PointCloud& cloud, bool binary = true);
GaussianMap read_map(const std::string& path);
void write_map(const std::string& path, const GaussianMap& map, bool binary = true);

// ---------------------------------------------------------------------------
// Pose files: one pose per line, '#' comments, errors carry line numbers.

enum class PoseFormat {
    matrix3x4,   // 12 tokens, row-major [R | t]
    trans_quat,  // 7 tokens, tx ty tz qw qx qy qz
};

// Rotations are projected to the nearest rotation matrix when orthonormality
// drift exceeds 1e-6; quaternions are renormalized the same way. An empty
// file is a valid empty trajectory.
std::vector<Pose> read_poses(const std::string& path, PoseFormat format = PoseFormat::matrix3x4);
void write_poses(const std::string& path, const std::vector<Pose>& poses,
                 PoseFormat format = PoseFormat::matrix3x4);

// ---------------------------------------------------------------------------
// Config: INI-style text, [section] headers or dotted keys. Unknown keys and
// unparseable values raise ConfigError naming the key; an empty file yields
// all defaults. write(read(x)) is the identity.

struct MetricsConfig {
    std::vector<double> thresholds = {0.1, 0.2, 1.0};
    bool euclidean_threshold = false;
};

struct ProjectConfig {
    TrainConfig train;  // train.weights is exposed as the [losses] section
    LocalizeConfig localize;
    MetricsConfig metrics;
    synth::SceneConfig synth;
};

ProjectConfig read_project_config(const std::string& path);
void write_project_config(const std::string& path, const ProjectConfig& config);

// ---------------------------------------------------------------------------
// Images. PNG is the 8-bit export; the float container (magic "IMGF",
// u32 width/height/channels, float32 rows) is the lossless pipeline format.

void write_png(const std::string& path, const Image& image);
Image read_imgf(const std::string& path);
void write_imgf(const std::string& path, const Image& image);

// ---------------------------------------------------------------------------
// Checkpoints: magic "GGS1", little-endian, map + optimizer moments.

struct Checkpoint {
    GaussianMap map;
    OptimizerSnapshot optimizer;
};

Checkpoint read_checkpoint(const std::string& path);
void write_checkpoint(const std::string& path, const Checkpoint& checkpoint);

// ---------------------------------------------------------------------------
// Reports: line-delimited "key=value" records, full double precision.

void write_train_report(const std::string& path, const TrainReport& report);
TrainReport read_train_report(const std::string& path);
void write_localize_trace(const std::string& path, const LocalizeTrace& trace);
LocalizeTrace read_localize_trace(const std::string& path);

// ---------------------------------------------------------------------------
// Dataset directory: camera.txt, poses.txt, scans/scan_NNNN.ply (sensor
// frame), images/view_NNNN.imgf, optional extra_points.ply and gt_map.ply.

struct DatasetBundle {
    Camera camera;
    std::vector<Pose> poses;  // one per view and per scan
    std::vector<Image> images;
    std::vector<PointCloud> scans;
    PointCloud extra_points;
    GaussianMap gt_map;
    bool has_gt_map = false;
};

DatasetBundle read_dataset(const std::string& dir);
void write_dataset(const std::string& dir, const DatasetBundle& bundle);

}  // namespace splatloc::io
