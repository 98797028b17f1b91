#include <Eigen/SVD>
#include <cstdio>
#include <sstream>

#include "io_common.hpp"
#include "splatloc/geometry.hpp"
#include "splatloc/io.hpp"

namespace splatloc::io {
namespace {

ParseError line_error(const std::string& what, std::size_t line_number) {
    return ParseError("line " + std::to_string(line_number) + ": " + what);
}

// Nearest rotation in the Frobenius sense, reflection-safe.
Mat3 project_rotation(const Mat3& m) {
    Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Mat3 r = svd.matrixU() * svd.matrixV().transpose();
    if (r.determinant() < 0.0) {
        Mat3 flip = Mat3::Identity();
        flip(2, 2) = -1.0;
        r = svd.matrixU() * flip * svd.matrixV().transpose();
    }
    return r;
}

constexpr double kDriftTolerance = 1e-6;

}  // namespace

std::vector<Pose> read_poses(const std::string& path, PoseFormat format) {
    const std::string data = detail::read_file(path);
    std::istringstream in(data);
    std::vector<Pose> poses;
    std::string line;
    std::size_t line_number = 0;
    const std::size_t expected = format == PoseFormat::matrix3x4 ? 12 : 7;
    while (std::getline(in, line)) {
        ++line_number;
        const std::size_t comment = line.find('#');
        if (comment != std::string::npos) line.resize(comment);
        std::istringstream tokens(line);
        std::vector<double> values;
        std::string token;
        while (tokens >> token) {
            try {
                std::size_t used = 0;
                values.push_back(std::stod(token, &used));
                if (used != token.size()) throw std::invalid_argument(token);
            } catch (const std::exception&) {
                throw line_error("bad numeric token: " + token, line_number);
            }
        }
        if (values.empty()) continue;
        if (values.size() != expected)
            throw line_error("expected " + std::to_string(expected) + " values, got " +
                                 std::to_string(values.size()),
                             line_number);
        Pose pose;
        if (format == PoseFormat::matrix3x4) {
            Mat3 r;
            for (int row = 0; row < 3; ++row) {
                for (int col = 0; col < 3; ++col) r(row, col) = values[row * 4 + col];
                pose.translation[row] = values[row * 4 + 3];
            }
            if ((r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff() > kDriftTolerance)
                r = project_rotation(r);
            pose.rotation = r;
        } else {
            pose.translation = Vec3(values[0], values[1], values[2]);
            Vec4 quat(values[3], values[4], values[5], values[6]);
            const double norm = quat.norm();
            if (norm < 1e-12) throw line_error("zero-length quaternion", line_number);
            if (std::abs(norm - 1.0) > kDriftTolerance) quat /= norm;
            pose.rotation = quat_to_rotation(quat);
        }
        poses.push_back(pose);
    }
    return poses;
}

void write_poses(const std::string& path, const std::vector<Pose>& poses, PoseFormat format) {
    detail::AtomicFile file(path);
    std::ostream& out = file.stream();
    char buf[64];
    for (const Pose& pose : poses) {
        if (format == PoseFormat::matrix3x4) {
            for (int row = 0; row < 3; ++row) {
                for (int col = 0; col < 3; ++col) {
                    std::snprintf(buf, sizeof(buf), "%.17g ", pose.rotation(row, col));
                    out << buf;
                }
                std::snprintf(buf, sizeof(buf), row == 2 ? "%.17g" : "%.17g ", pose.translation[row]);
                out << buf;
            }
        } else {
            const Vec4 quat = rotation_to_quat(pose.rotation);
            for (int axis = 0; axis < 3; ++axis) {
                std::snprintf(buf, sizeof(buf), "%.17g ", pose.translation[axis]);
                out << buf;
            }
            for (int k = 0; k < 4; ++k) {
                std::snprintf(buf, sizeof(buf), k == 3 ? "%.17g" : "%.17g ", quat[k]);
                out << buf;
            }
        }
        out << '\n';
    }
    file.commit();
}

}  // namespace splatloc::io
