#include <cstdio>
#include <map>
#include <sstream>

#include "io_common.hpp"
#include "splatloc/io.hpp"

namespace splatloc::io {
namespace {

std::string fmt(double value) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", value);
    return buf;
}

// Parses "key=value ..." records; returns empty map for blank lines.
std::map<std::string, std::string> record(const std::string& line, std::size_t line_number) {
    std::map<std::string, std::string> fields;
    std::istringstream in(line);
    std::string token;
    while (in >> token) {
        const std::size_t eq = token.find('=');
        if (eq == std::string::npos)
            throw ParseError("line " + std::to_string(line_number) + ": expected key=value, got '" + token + "'");
        fields[token.substr(0, eq)] = token.substr(eq + 1);
    }
    return fields;
}

double field(const std::map<std::string, std::string>& fields, const std::string& key, std::size_t line_number) {
    const auto it = fields.find(key);
    if (it == fields.end())
        throw ParseError("line " + std::to_string(line_number) + ": missing field '" + key + "'");
    try {
        return std::stod(it->second);
    } catch (const std::exception&) {
        throw ParseError("line " + std::to_string(line_number) + ": bad number for '" + key + "'");
    }
}

}  // namespace

void write_train_report(const std::string& path, const TrainReport& report) {
    detail::AtomicFile file(path);
    std::ostream& out = file.stream();
    for (std::size_t i = 0; i < report.history.size(); ++i) {
        const LossScalars& s = report.history[i];
        out << "iter=" << i << " rgb=" << fmt(s.rgb) << " geom=" << fmt(s.geom) << " prob=" << fmt(s.prob)
            << " scale=" << fmt(s.scale) << " total=" << fmt(s.total) << '\n';
    }
    out << "final count=" << report.final_count << " holdout_psnr=" << fmt(report.holdout_psnr)
        << " holdout_ssim=" << fmt(report.holdout_ssim) << " chamfer_vs_cloud=" << fmt(report.chamfer_vs_cloud)
        << " fscore_at_1=" << fmt(report.fscore_at_1) << '\n';
    file.commit();
}

TrainReport read_train_report(const std::string& path) {
    const std::string data = detail::read_file(path);
    std::istringstream in(data);
    TrainReport report;
    std::string line;
    std::size_t line_number = 0;
    while (std::getline(in, line)) {
        ++line_number;
        if (line.empty()) continue;
        if (line.rfind("final ", 0) == 0) {
            const auto fields = record(line.substr(6), line_number);
            report.final_count = static_cast<std::size_t>(field(fields, "count", line_number));
            report.holdout_psnr = field(fields, "holdout_psnr", line_number);
            report.holdout_ssim = field(fields, "holdout_ssim", line_number);
            report.chamfer_vs_cloud = field(fields, "chamfer_vs_cloud", line_number);
            report.fscore_at_1 = field(fields, "fscore_at_1", line_number);
            continue;
        }
        const auto fields = record(line, line_number);
        if (fields.empty()) continue;
        LossScalars s;
        s.rgb = field(fields, "rgb", line_number);
        s.geom = field(fields, "geom", line_number);
        s.prob = field(fields, "prob", line_number);
        s.scale = field(fields, "scale", line_number);
        s.total = field(fields, "total", line_number);
        report.history.push_back(s);
    }
    return report;
}

void write_localize_trace(const std::string& path, const LocalizeTrace& trace) {
    detail::AtomicFile file(path);
    std::ostream& out = file.stream();
    for (std::size_t i = 0; i < trace.steps.size(); ++i) {
        const LocalizeStep& s = trace.steps[i];
        out << "iter=" << i << " rot_err_deg=" << fmt(s.rotation_error_deg)
            << " trans_err_m=" << fmt(s.translation_error_m) << " residual=" << fmt(s.residual) << '\n';
    }
    file.commit();
}

LocalizeTrace read_localize_trace(const std::string& path) {
    const std::string data = detail::read_file(path);
    std::istringstream in(data);
    LocalizeTrace trace;
    std::string line;
    std::size_t line_number = 0;
    while (std::getline(in, line)) {
        ++line_number;
        if (line.empty()) continue;
        const auto fields = record(line, line_number);
        if (fields.empty()) continue;
        LocalizeStep s;
        s.rotation_error_deg = field(fields, "rot_err_deg", line_number);
        s.translation_error_m = field(fields, "trans_err_m", line_number);
        s.residual = field(fields, "residual", line_number);
        trace.steps.push_back(s);
    }
    return trace;
}

}  // namespace splatloc::io
