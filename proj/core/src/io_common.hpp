#pragma once

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "splatloc/errors.hpp"

static_assert(std::endian::native == std::endian::little, "file formats assume a little-endian host");

namespace splatloc::io::detail {

// Writers go through a sibling temp file and rename on commit, so a failed
// write never leaves a partial file at the destination.
class AtomicFile {
public:
    explicit AtomicFile(const std::string& path) : path_(path), tmp_(path + ".tmp~") {
        out_.open(tmp_, std::ios::binary | std::ios::trunc);
        if (!out_) throw ParseError("cannot open for writing: " + tmp_);
    }
    ~AtomicFile() {
        if (!committed_) {
            out_.close();
            std::error_code ec;
            std::filesystem::remove(tmp_, ec);
        }
    }
    std::ostream& stream() { return out_; }
    void commit() {
        out_.flush();
        if (!out_) throw ParseError("write failed: " + tmp_);
        out_.close();
        std::filesystem::rename(tmp_, path_);
        committed_ = true;
    }

private:
    std::string path_, tmp_;
    std::ofstream out_;
    bool committed_ = false;
};

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return std::move(buf).str();
}

// Cursor over an in-memory payload; every read is bounds-checked and failures
// report the exact byte offset.
class Reader {
public:
    Reader(const std::string& data, std::size_t pos = 0) : data_(data), pos_(pos) {}

    std::size_t pos() const { return pos_; }
    std::size_t remaining() const { return data_.size() - pos_; }
    bool done() const { return pos_ >= data_.size(); }

    void require(std::size_t bytes, const char* what) const {
        if (pos_ + bytes > data_.size())
            throw ParseError(std::string("truncated ") + what, static_cast<long>(data_.size()));
    }
    const char* take(std::size_t bytes, const char* what) {
        require(bytes, what);
        const char* p = data_.data() + pos_;
        pos_ += bytes;
        return p;
    }
    template <typename T>
    T scalar(const char* what) {
        T value;
        std::memcpy(&value, take(sizeof(T), what), sizeof(T));
        return value;
    }

private:
    const std::string& data_;
    std::size_t pos_ = 0;
};

template <typename T>
void put(std::ostream& out, T value) {
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

}  // namespace splatloc::io::detail
