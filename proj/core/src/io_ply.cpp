#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>

#include "io_common.hpp"
#include "splatloc/io.hpp"
#include "splatloc/math.hpp"

namespace splatloc::io {
namespace {

using detail::Reader;

struct ScalarInfo {
    const char* canonical;
    const char* alias;
    std::size_t size;
};

constexpr std::array<ScalarInfo, 8> kScalars = {{
    {"float", "float32", 4},
    {"double", "float64", 8},
    {"uchar", "uint8", 1},
    {"char", "int8", 1},
    {"ushort", "uint16", 2},
    {"short", "int16", 2},
    {"uint", "uint32", 4},
    {"int", "int32", 4},
}};

const ScalarInfo& info(PlyScalar type) { return kScalars[static_cast<std::size_t>(type)]; }

bool parse_scalar(const std::string& token, PlyScalar& out) {
    for (std::size_t i = 0; i < kScalars.size(); ++i) {
        if (token == kScalars[i].canonical || token == kScalars[i].alias) {
            out = static_cast<PlyScalar>(i);
            return true;
        }
    }
    return false;
}

double decode(Reader& reader, PlyScalar type) {
    switch (type) {
        case PlyScalar::f32: return reader.scalar<float>("payload");
        case PlyScalar::f64: return reader.scalar<double>("payload");
        case PlyScalar::u8: return reader.scalar<std::uint8_t>("payload");
        case PlyScalar::i8: return reader.scalar<std::int8_t>("payload");
        case PlyScalar::u16: return reader.scalar<std::uint16_t>("payload");
        case PlyScalar::i16: return reader.scalar<std::int16_t>("payload");
        case PlyScalar::u32: return reader.scalar<std::uint32_t>("payload");
        case PlyScalar::i32: return reader.scalar<std::int32_t>("payload");
    }
    return 0.0;
}

void encode(std::ostream& out, PlyScalar type, double value) {
    switch (type) {
        case PlyScalar::f32: detail::put(out, static_cast<float>(value)); return;
        case PlyScalar::f64: detail::put(out, value); return;
        case PlyScalar::u8: detail::put(out, static_cast<std::uint8_t>(std::llround(value))); return;
        case PlyScalar::i8: detail::put(out, static_cast<std::int8_t>(std::llround(value))); return;
        case PlyScalar::u16: detail::put(out, static_cast<std::uint16_t>(std::llround(value))); return;
        case PlyScalar::i16: detail::put(out, static_cast<std::int16_t>(std::llround(value))); return;
        case PlyScalar::u32: detail::put(out, static_cast<std::uint32_t>(std::llround(value))); return;
        case PlyScalar::i32: detail::put(out, static_cast<std::int32_t>(std::llround(value))); return;
    }
}

// Rounds like the binary path, so both formats persist identical values.
double narrowed(PlyScalar type, double value) {
    if (type == PlyScalar::f32) return static_cast<double>(static_cast<float>(value));
    if (type == PlyScalar::f64) return value;
    return static_cast<double>(std::llround(value));
}

void print_ascii(std::ostream& out, PlyScalar type, double value) {
    char buf[40];
    if (type == PlyScalar::f32)
        std::snprintf(buf, sizeof(buf), "%.9g", narrowed(type, value));
    else if (type == PlyScalar::f64)
        std::snprintf(buf, sizeof(buf), "%.17g", value);
    else
        std::snprintf(buf, sizeof(buf), "%lld", static_cast<long long>(std::llround(value)));
    out << buf;
}

// Reads one header line; offsets in errors point at the line start.
std::string header_line(Reader& reader) {
    const std::size_t start = reader.pos();
    std::string line;
    while (!reader.done()) {
        const char c = *reader.take(1, "header");
        if (c == '\n') return line;
        if (c != '\r') line.push_back(c);
        if (line.size() > 4096) throw ParseError("unterminated header line", static_cast<long>(start));
    }
    throw ParseError("header ended before end_header", static_cast<long>(start));
}

std::vector<std::string> split_ws(const std::string& line) {
    std::vector<std::string> tokens;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
        std::size_t j = i;
        while (j < line.size() && line[j] != ' ' && line[j] != '\t') ++j;
        if (j > i) tokens.push_back(line.substr(i, j - i));
        i = j;
    }
    return tokens;
}

}  // namespace

long PlyElement::find(const std::string& property) const {
    for (std::size_t i = 0; i < properties.size(); ++i)
        if (properties[i].name == property) return static_cast<long>(i);
    return -1;
}

const PlyElement* PlyTable::element(const std::string& name) const {
    for (const PlyElement& e : elements)
        if (e.name == name) return &e;
    return nullptr;
}

PlyTable read_ply_table(const std::string& path) {
    const std::string data = detail::read_file(path);
    Reader reader(data);

    if (header_line(reader) != "ply") throw ParseError("not a ply file: missing magic", 0);
    PlyTable table;
    bool format_seen = false;
    while (true) {
        const std::size_t line_start = reader.pos();
        const std::string line = header_line(reader);
        const std::vector<std::string> tokens = split_ws(line);
        if (tokens.empty()) continue;
        const std::string& kw = tokens[0];
        if (kw == "end_header") break;
        if (kw == "format") {
            if (tokens.size() != 3 || tokens[2] != "1.0")
                throw ParseError("unsupported ply format line: " + line, static_cast<long>(line_start));
            if (tokens[1] == "ascii")
                table.binary = false;
            else if (tokens[1] == "binary_little_endian")
                table.binary = true;
            else
                throw ParseError("unsupported ply encoding: " + tokens[1], static_cast<long>(line_start));
            format_seen = true;
        } else if (kw == "comment" || kw == "obj_info") {
            table.comments.push_back(line.size() > kw.size() ? line.substr(kw.size() + 1) : "");
        } else if (kw == "element") {
            if (tokens.size() != 3) throw ParseError("malformed element line: " + line, static_cast<long>(line_start));
            PlyElement element;
            element.name = tokens[1];
            try {
                element.count = std::stoull(tokens[2]);
            } catch (const std::exception&) {
                throw ParseError("bad element count: " + tokens[2], static_cast<long>(line_start));
            }
            table.elements.push_back(std::move(element));
        } else if (kw == "property") {
            if (table.elements.empty())
                throw ParseError("property before any element", static_cast<long>(line_start));
            if (tokens.size() == 5 && tokens[1] == "list")
                throw ParseError("list properties are not supported", static_cast<long>(line_start));
            if (tokens.size() != 3) throw ParseError("malformed property line: " + line, static_cast<long>(line_start));
            PlyProperty property;
            if (!parse_scalar(tokens[1], property.type))
                throw ParseError("unknown property type: " + tokens[1], static_cast<long>(line_start));
            property.name = tokens[2];
            table.elements.back().properties.push_back(std::move(property));
        } else {
            throw ParseError("unknown header keyword: " + kw, static_cast<long>(line_start));
        }
    }
    if (!format_seen) throw ParseError("header has no format line", static_cast<long>(reader.pos()));

    // Size sanity before any allocation: a corrupt count cannot be larger
    // than what the remaining payload (at one byte per value) could hold.
    for (const PlyElement& element : table.elements) {
        const std::size_t values = element.count * std::max<std::size_t>(element.properties.size(), 1);
        if (element.count > 0 && values > reader.remaining())
            throw ParseError("element " + element.name + " claims more values than the payload holds",
                             static_cast<long>(reader.pos()));
    }

    if (table.binary) {
        for (PlyElement& element : table.elements) {
            element.rows.reserve(element.count * element.properties.size());
            for (std::size_t r = 0; r < element.count; ++r)
                for (const PlyProperty& p : element.properties) element.rows.push_back(decode(reader, p.type));
        }
    } else {
        // One whitespace token per value; newlines are not significant.
        std::size_t cursor = reader.pos();
        const auto next_token = [&](const char* what) {
            while (cursor < data.size() && std::isspace(static_cast<unsigned char>(data[cursor]))) ++cursor;
            if (cursor >= data.size()) throw ParseError(std::string("truncated ") + what, static_cast<long>(cursor));
            const std::size_t start = cursor;
            while (cursor < data.size() && !std::isspace(static_cast<unsigned char>(data[cursor]))) ++cursor;
            return std::pair<const char*, std::size_t>(data.data() + start, cursor - start);
        };
        for (PlyElement& element : table.elements) {
            element.rows.reserve(element.count * element.properties.size());
            for (std::size_t r = 0; r < element.count; ++r) {
                for (const PlyProperty& p : element.properties) {
                    const auto [ptr, len] = next_token("payload");
                    double value = 0.0;
                    const auto result = std::from_chars(ptr, ptr + len, value);
                    if (result.ec != std::errc() || result.ptr != ptr + len)
                        throw ParseError("bad numeric token: " + std::string(ptr, len),
                                         static_cast<long>(ptr - data.data()));
                    element.rows.push_back(narrowed(p.type, value));
                }
            }
        }
    }
    return table;
}

void write_ply_table(const std::string& path, const PlyTable& table) {
    detail::AtomicFile file(path);
    std::ostream& out = file.stream();
    out << "ply\n";
    out << (table.binary ? "format binary_little_endian 1.0\n" : "format ascii 1.0\n");
    for (const std::string& comment : table.comments) out << "comment " << comment << "\n";
    for (const PlyElement& element : table.elements) {
        out << "element " << element.name << " " << element.count << "\n";
        for (const PlyProperty& p : element.properties)
            out << "property " << info(p.type).canonical << " " << p.name << "\n";
    }
    out << "end_header\n";
    for (const PlyElement& element : table.elements) {
        const std::size_t stride = element.properties.size();
        for (std::size_t r = 0; r < element.count; ++r) {
            for (std::size_t c = 0; c < stride; ++c) {
                const double value = element.rows[r * stride + c];
                if (table.binary) {
                    encode(out, element.properties[c].type, value);
                } else {
                    if (c) out << ' ';
                    print_ascii(out, element.properties[c].type, value);
                }
            }
            if (!table.binary) out << '\n';
        }
    }
    file.commit();
}

namespace {

const PlyElement& vertex_element(const PlyTable& table, const std::string& path) {
    const PlyElement* vertex = table.element("vertex");
    if (!vertex) throw ParseError("no vertex element in " + path);
    return *vertex;
}

std::size_t column(const PlyElement& vertex, const char* name) {
    const long idx = vertex.find(name);
    if (idx < 0) throw ParseError(std::string("vertex element is missing property ") + name);
    return static_cast<std::size_t>(idx);
}

// DC term of the zeroth spherical harmonic; the splat convention stores
// colors as f_dc = (rgb - 0.5) / kSh0.
constexpr double kSh0 = 0.28209479177387814;

}  // namespace

PointCloud read_cloud(const std::string& path) {
    const PlyTable table = read_ply_table(path);
    const PlyElement& vertex = vertex_element(table, path);
    const std::size_t x = column(vertex, "x"), y = column(vertex, "y"), z = column(vertex, "z");
    PointCloud cloud;
    cloud.points.reserve(vertex.count);
    for (std::size_t r = 0; r < vertex.count; ++r)
        cloud.points.emplace_back(vertex.at(r, x), vertex.at(r, y), vertex.at(r, z));
    return cloud;
}

void write_cloud(const std::string& path, const PointCloud& cloud, bool binary) {
    PlyTable table;
    table.binary = binary;
    PlyElement vertex;
    vertex.name = "vertex";
    vertex.count = cloud.size();
    vertex.properties = {{"x", PlyScalar::f32}, {"y", PlyScalar::f32}, {"z", PlyScalar::f32}};
    vertex.rows.reserve(cloud.size() * 3);
    for (const Vec3& p : cloud.points)
        for (int axis = 0; axis < 3; ++axis) vertex.rows.push_back(static_cast<float>(p[axis]));
    table.elements.push_back(std::move(vertex));
    write_ply_table(path, table);
}

GaussianMap read_map(const std::string& path) {
    const PlyTable table = read_ply_table(path);
    const PlyElement& vertex = vertex_element(table, path);
    std::size_t cols[15];
    static const char* kNames[15] = {"x",     "y",     "z",       "f_dc_0",  "f_dc_1",  "f_dc_2",  "opacity", "scale_0",
                                     "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3", "gcs"};
    for (int i = 0; i < 15; ++i) cols[i] = column(vertex, kNames[i]);

    GaussianMap map;
    map.gaussians.reserve(vertex.count);
    for (std::size_t r = 0; r < vertex.count; ++r) {
        Gaussian g;
        for (int axis = 0; axis < 3; ++axis) {
            g.mean[axis] = vertex.at(r, cols[axis]);
            g.color[axis] = 0.5 + kSh0 * vertex.at(r, cols[3 + axis]);
            g.log_scale[axis] = vertex.at(r, cols[7 + axis]);
        }
        g.opacity_logit = vertex.at(r, cols[6]);
        for (int k = 0; k < 4; ++k) g.quat[k] = vertex.at(r, cols[10 + k]);
        g.gcs_logit = logit(std::clamp(vertex.at(r, cols[14]), 1e-12, 1.0 - 1e-12));
        map.gaussians.push_back(g);
    }
    for (const std::string& comment : table.comments) {
        const std::vector<std::string> tokens = split_ws(comment);
        if (tokens.size() == 4 && tokens[0] == "background")
            for (int axis = 0; axis < 3; ++axis) map.background[axis] = std::stod(tokens[1 + axis]);
    }
    return map;
}

void write_map(const std::string& path, const GaussianMap& map, bool binary) {
    PlyTable table;
    table.binary = binary;
    char bg[96];
    std::snprintf(bg, sizeof(bg), "background %.17g %.17g %.17g", map.background.x(), map.background.y(),
                  map.background.z());
    table.comments.emplace_back(bg);

    PlyElement vertex;
    vertex.name = "vertex";
    vertex.count = map.size();
    for (const char* name : {"x", "y", "z", "f_dc_0", "f_dc_1", "f_dc_2", "opacity", "scale_0", "scale_1", "scale_2",
                             "rot_0", "rot_1", "rot_2", "rot_3", "gcs"})
        vertex.properties.push_back({name, PlyScalar::f32});
    vertex.rows.reserve(map.size() * 15);
    const auto push = [&vertex](double value) { vertex.rows.push_back(static_cast<float>(value)); };
    for (const Gaussian& g : map.gaussians) {
        for (int axis = 0; axis < 3; ++axis) push(g.mean[axis]);
        for (int axis = 0; axis < 3; ++axis) push((g.color[axis] - 0.5) / kSh0);
        push(g.opacity_logit);
        for (int axis = 0; axis < 3; ++axis) push(g.log_scale[axis]);
        for (int k = 0; k < 4; ++k) push(g.quat[k]);
        push(g.gcs());
    }
    table.elements.push_back(std::move(vertex));
    write_ply_table(path, table);
}

}  // namespace splatloc::io
