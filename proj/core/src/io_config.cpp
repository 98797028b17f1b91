#include <cctype>
#include <cstdio>
#include <functional>
#include <map>
#include <sstream>

#include "io_common.hpp"
#include "splatloc/io.hpp"

namespace splatloc::io {
namespace {

std::string format_double(double value) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", value);
    return buf;
}

double parse_double(const std::string& key, const std::string& text) {
    try {
        std::size_t used = 0;
        const double value = std::stod(text, &used);
        if (used != text.size()) throw std::invalid_argument(text);
        return value;
    } catch (const std::exception&) {
        throw ConfigError("bad value for " + key + ": '" + text + "'");
    }
}

long parse_int(const std::string& key, const std::string& text) {
    try {
        std::size_t used = 0;
        const long value = std::stol(text, &used);
        if (used != text.size()) throw std::invalid_argument(text);
        return value;
    } catch (const std::exception&) {
        throw ConfigError("bad value for " + key + ": '" + text + "'");
    }
}

bool parse_bool(const std::string& key, const std::string& text) {
    if (text == "true" || text == "1") return true;
    if (text == "false" || text == "0") return false;
    throw ConfigError("bad value for " + key + ": '" + text + "'");
}

// One entry per config field: how to set it from text and how to print it.
// Getters take a mutable reference only to share the setter's accessor.
struct Field {
    std::function<void(ProjectConfig&, const std::string& key, const std::string& value)> set;
    std::function<std::string(ProjectConfig&)> get;
};

using Registry = std::map<std::string, Field>;

Field field_double(double& (*access)(ProjectConfig&)) {
    return Field{
        [access](ProjectConfig& c, const std::string& key, const std::string& v) { access(c) = parse_double(key, v); },
        [access](ProjectConfig& c) { return format_double(access(c)); }};
}

Field field_int(int& (*access)(ProjectConfig&)) {
    return Field{[access](ProjectConfig& c, const std::string& key, const std::string& v) {
                     access(c) = static_cast<int>(parse_int(key, v));
                 },
                 [access](ProjectConfig& c) { return std::to_string(access(c)); }};
}

Field field_unsigned(unsigned& (*access)(ProjectConfig&)) {
    return Field{[access](ProjectConfig& c, const std::string& key, const std::string& v) {
                     const long value = parse_int(key, v);
                     if (value < 0) throw ConfigError("bad value for " + key + ": '" + v + "'");
                     access(c) = static_cast<unsigned>(value);
                 },
                 [access](ProjectConfig& c) { return std::to_string(access(c)); }};
}

Field field_bool(bool& (*access)(ProjectConfig&)) {
    return Field{
        [access](ProjectConfig& c, const std::string& key, const std::string& v) { access(c) = parse_bool(key, v); },
        [access](ProjectConfig& c) { return access(c) ? "true" : "false"; }};
}

Field field_vec3(Vec3& (*access)(ProjectConfig&)) {
    return Field{[access](ProjectConfig& c, const std::string& key, const std::string& v) {
                     std::istringstream in(v);
                     std::string a, b, d, rest;
                     if (!(in >> a >> b >> d) || (in >> rest))
                         throw ConfigError("bad value for " + key + ": '" + v + "'");
                     access(c) = Vec3(parse_double(key, a), parse_double(key, b), parse_double(key, d));
                 },
                 [access](ProjectConfig& c) {
                     const Vec3& v = access(c);
                     return format_double(v.x()) + " " + format_double(v.y()) + " " + format_double(v.z());
                 }};
}

Field field_double_list(std::vector<double>& (*access)(ProjectConfig&)) {
    return Field{[access](ProjectConfig& c, const std::string& key, const std::string& v) {
                     std::istringstream in(v);
                     std::vector<double> values;
                     std::string token;
                     while (in >> token) values.push_back(parse_double(key, token));
                     if (values.empty()) throw ConfigError("bad value for " + key + ": '" + v + "'");
                     access(c) = std::move(values);
                 },
                 [access](ProjectConfig& c) {
                     const std::vector<double>& values = access(c);
                     std::string text;
                     for (std::size_t i = 0; i < values.size(); ++i)
                         text += (i ? " " : "") + format_double(values[i]);
                     return text;
                 }};
}

#define SPLATLOC_FIELD(kind, expr) \
    field_##kind(+[](ProjectConfig& c) -> decltype((expr)) { return (expr); })

// Section order here is the emission order of write_project_config.
const std::vector<std::pair<std::string, Registry>>& registry() {
    static const std::vector<std::pair<std::string, Registry>> sections = {
        {"train",
         {
             {"iterations", SPLATLOC_FIELD(int, c.train.iterations)},
             {"lr_position", SPLATLOC_FIELD(double, c.train.lr_position)},
             {"lr_rotation", SPLATLOC_FIELD(double, c.train.lr_rotation)},
             {"lr_log_scale", SPLATLOC_FIELD(double, c.train.lr_log_scale)},
             {"lr_color", SPLATLOC_FIELD(double, c.train.lr_color)},
             {"lr_opacity", SPLATLOC_FIELD(double, c.train.lr_opacity)},
             {"lr_gcs", SPLATLOC_FIELD(double, c.train.lr_gcs)},
             {"densify_interval", SPLATLOC_FIELD(int, c.train.densify_interval)},
             {"densify_grad_threshold", SPLATLOC_FIELD(double, c.train.densify_grad_threshold)},
             {"prune_opacity", SPLATLOC_FIELD(double, c.train.prune_opacity)},
             {"voxel_size", SPLATLOC_FIELD(double, c.train.voxel_size)},
             {"holdout_every", SPLATLOC_FIELD(int, c.train.holdout_every)},
             {"seed", SPLATLOC_FIELD(unsigned, c.train.seed)},
             {"appearance_model", SPLATLOC_FIELD(bool, c.train.appearance_model)},
             {"background", SPLATLOC_FIELD(vec3, c.train.background)},
         }},
        {"losses",
         {
             {"lambda_rgb", SPLATLOC_FIELD(double, c.train.weights.lambda_rgb)},
             {"lambda_geom", SPLATLOC_FIELD(double, c.train.weights.lambda_geom)},
             {"lambda_prob", SPLATLOC_FIELD(double, c.train.weights.lambda_prob)},
             {"lambda_scale", SPLATLOC_FIELD(double, c.train.weights.lambda_scale)},
             {"lambda_perc", SPLATLOC_FIELD(double, c.train.weights.lambda_perc)},
             {"k", SPLATLOC_FIELD(double, c.train.weights.k)},
             {"d", SPLATLOC_FIELD(double, c.train.weights.d)},
             {"scale_max", SPLATLOC_FIELD(double, c.train.weights.scale_max)},
         }},
        {"localize",
         {
             {"outer_iterations", SPLATLOC_FIELD(int, c.localize.outer_iterations)},
             {"refine_steps", SPLATLOC_FIELD(int, c.localize.refine_steps)},
             {"icp_cutoff", SPLATLOC_FIELD(double, c.localize.icp_cutoff)},
             {"icp_trim_fraction", SPLATLOC_FIELD(double, c.localize.icp_trim_fraction)},
             {"lr_rotation", SPLATLOC_FIELD(double, c.localize.lr_rotation)},
             {"lr_translation", SPLATLOC_FIELD(double, c.localize.lr_translation)},
             {"tol_rotation", SPLATLOC_FIELD(double, c.localize.tol_rotation)},
             {"tol_translation", SPLATLOC_FIELD(double, c.localize.tol_translation)},
             {"lambda_rgb", SPLATLOC_FIELD(double, c.localize.lambda_rgb)},
             {"refine_l1_only", SPLATLOC_FIELD(bool, c.localize.refine_l1_only)},
         }},
        {"metrics",
         {
             {"thresholds", SPLATLOC_FIELD(double_list, c.metrics.thresholds)},
             {"euclidean_threshold", SPLATLOC_FIELD(bool, c.metrics.euclidean_threshold)},
         }},
        {"synth",
         {
             {"boxes", SPLATLOC_FIELD(int, c.synth.boxes)},
             {"lidar_max_range", SPLATLOC_FIELD(double, c.synth.lidar_max_range)},
             {"views", SPLATLOC_FIELD(int, c.synth.views)},
             {"trajectory_length", SPLATLOC_FIELD(double, c.synth.trajectory_length)},
             {"image_width", SPLATLOC_FIELD(int, c.synth.image_width)},
             {"image_height", SPLATLOC_FIELD(int, c.synth.image_height)},
             {"focal", SPLATLOC_FIELD(double, c.synth.focal)},
             {"azimuth_steps", SPLATLOC_FIELD(int, c.synth.azimuth_steps)},
             {"elevation_steps", SPLATLOC_FIELD(int, c.synth.elevation_steps)},
             {"lidar_noise", SPLATLOC_FIELD(double, c.synth.lidar_noise)},
             {"sky_points", SPLATLOC_FIELD(int, c.synth.sky_points)},
             {"floater_points", SPLATLOC_FIELD(int, c.synth.floater_points)},
             {"gaussian_spacing", SPLATLOC_FIELD(double, c.synth.gaussian_spacing)},
             {"box_scale", SPLATLOC_FIELD(double, c.synth.box_scale)},
             {"lidar_elev_lo_deg", SPLATLOC_FIELD(double, c.synth.lidar_elev_lo_deg)},
             {"lidar_elev_hi_deg", SPLATLOC_FIELD(double, c.synth.lidar_elev_hi_deg)},
         }},
    };
    return sections;
}

#undef SPLATLOC_FIELD

const Registry* find_section(const std::string& name) {
    for (const auto& [section, fields] : registry())
        if (section == name) return &fields;
    return nullptr;
}

std::string trim(const std::string& text) {
    std::size_t lo = 0, hi = text.size();
    while (lo < hi && std::isspace(static_cast<unsigned char>(text[lo]))) ++lo;
    while (hi > lo && std::isspace(static_cast<unsigned char>(text[hi - 1]))) --hi;
    return text.substr(lo, hi - lo);
}

}  // namespace

ProjectConfig read_project_config(const std::string& path) {
    const std::string data = detail::read_file(path);
    std::istringstream in(data);
    ProjectConfig config;
    std::string line, section;
    std::size_t line_number = 0;
    while (std::getline(in, line)) {
        ++line_number;
        const std::size_t comment = line.find_first_of("#;");
        if (comment != std::string::npos) line.resize(comment);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ConfigError("line " + std::to_string(line_number) + ": malformed section header " + line);
            section = trim(line.substr(1, line.size() - 2));
            if (!find_section(section)) throw ConfigError("unknown section '" + section + "'");
            continue;
        }
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(line_number) + ": expected key = value, got '" + line + "'");
        std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        std::string key_section = section;
        const std::size_t dot = key.find('.');
        if (dot != std::string::npos) {
            key_section = key.substr(0, dot);
            key = key.substr(dot + 1);
        }
        const std::string qualified = key_section.empty() ? key : key_section + "." + key;
        const Registry* fields = find_section(key_section);
        if (!fields) throw ConfigError("unknown key '" + qualified + "'");
        const auto it = fields->find(key);
        if (it == fields->end()) throw ConfigError("unknown key '" + qualified + "'");
        it->second.set(config, qualified, value);
    }
    return config;
}

void write_project_config(const std::string& path, const ProjectConfig& config) {
    detail::AtomicFile file(path);
    std::ostream& out = file.stream();
    ProjectConfig copy = config;
    bool first = true;
    for (const auto& [section, fields] : registry()) {
        if (!first) out << '\n';
        first = false;
        out << '[' << section << "]\n";
        for (const auto& [key, field] : fields) out << key << " = " << field.get(copy) << '\n';
    }
    file.commit();
}

}  // namespace splatloc::io
