#include <png.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <vector>

#include "io_common.hpp"
#include "splatloc/io.hpp"
#include "splatloc/math.hpp"

namespace splatloc::io {
namespace {

constexpr char kImgfMagic[4] = {'I', 'M', 'G', 'F'};

// RAII over the libpng write pair; libpng reports failures via longjmp.
struct PngWriter {
    png_structp png = nullptr;
    png_infop pnginfo = nullptr;
    std::FILE* file = nullptr;

    ~PngWriter() {
        if (png) png_destroy_write_struct(&png, pnginfo ? &pnginfo : nullptr);
        if (file) std::fclose(file);
    }
};

}  // namespace

void write_png(const std::string& path, const Image& image) {
    if (image.width <= 0 || image.height <= 0) throw ParseError("write_png: empty image for " + path);
    const std::string tmp = path + ".tmp~";
    PngWriter writer;
    writer.file = std::fopen(tmp.c_str(), "wb");
    if (!writer.file) throw ParseError("cannot open for writing: " + tmp);
    writer.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (writer.png) writer.pnginfo = png_create_info_struct(writer.png);
    if (!writer.png || !writer.pnginfo) throw ParseError("libpng initialization failed");
    if (setjmp(png_jmpbuf(writer.png))) {
        std::error_code ec;
        std::filesystem::remove(tmp, ec);
        throw ParseError("libpng write failed: " + path);
    }
    png_init_io(writer.png, writer.file);
    png_set_IHDR(writer.png, writer.pnginfo, static_cast<png_uint_32>(image.width),
                 static_cast<png_uint_32>(image.height), 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(writer.png, writer.pnginfo);

    std::vector<png_byte> row(static_cast<std::size_t>(image.width) * 3);
    for (int r = 0; r < image.height; ++r) {
        for (int c = 0; c < image.width; ++c)
            for (int ch = 0; ch < 3; ++ch)
                row[static_cast<std::size_t>(c) * 3 + ch] =
                    static_cast<png_byte>(std::lround(255.0 * clamp01(image.at(r, c, ch))));
        png_write_row(writer.png, row.data());
    }
    png_write_end(writer.png, nullptr);
    std::fflush(writer.file);
    std::fclose(writer.file);
    writer.file = nullptr;
    std::filesystem::rename(tmp, path);
}

Image read_imgf(const std::string& path) {
    const std::string data = detail::read_file(path);
    detail::Reader reader(data);
    const char* magic = reader.take(4, "imgf header");
    if (std::memcmp(magic, kImgfMagic, 4) != 0) throw ParseError("not an imgf file: " + path, 0);
    const auto width = reader.scalar<std::uint32_t>("imgf header");
    const auto height = reader.scalar<std::uint32_t>("imgf header");
    const auto channels = reader.scalar<std::uint32_t>("imgf header");
    if (channels != 3) throw ParseError("imgf carries " + std::to_string(channels) + " channels, expected 3", 8);
    if (width == 0 || height == 0 || width > 1u << 20 || height > 1u << 20)
        throw ParseError("implausible imgf dimensions", 4);
    const std::size_t values = static_cast<std::size_t>(width) * height * 3;
    reader.require(values * sizeof(float), "imgf payload");
    Image image(static_cast<int>(width), static_cast<int>(height));
    for (std::size_t i = 0; i < values; ++i) image.data[i] = reader.scalar<float>("imgf payload");
    return image;
}

void write_imgf(const std::string& path, const Image& image) {
    detail::AtomicFile file(path);
    std::ostream& out = file.stream();
    out.write(kImgfMagic, 4);
    detail::put(out, static_cast<std::uint32_t>(image.width));
    detail::put(out, static_cast<std::uint32_t>(image.height));
    detail::put(out, std::uint32_t{3});
    for (const double value : image.data) detail::put(out, static_cast<float>(value));
    file.commit();
}

}  // namespace splatloc::io
