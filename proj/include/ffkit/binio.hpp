#pragma once

#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "ffkit/errors.hpp"

namespace ffkit {

// Little-endian binary stream helpers for the artifact's file formats.
// The codebase targets little-endian hosts; the formats are defined LE.

class ByteWriter {
public:
    void raw(const void* p, std::size_t n) {
        const auto* b = static_cast<const std::byte*>(p);
        buf_.insert(buf_.end(), b, b + n);
    }
    void u8(uint8_t v) { raw(&v, 1); }
    void u32(uint32_t v) { raw(&v, 4); }
    void u64(uint64_t v) { raw(&v, 8); }
    void i64(int64_t v) { raw(&v, 8); }
    void f32(float v) { raw(&v, 4); }
    void f64(double v) { raw(&v, 8); }
    void str(const std::string& s) {
        u32(uint32_t(s.size()));
        raw(s.data(), s.size());
    }
    const std::vector<std::byte>& bytes() const { return buf_; }
    std::size_t size() const { return buf_.size(); }

private:
    std::vector<std::byte> buf_;
};

class ByteReader {
public:
    ByteReader(const std::byte* data, std::size_t size) : p_(data), end_(data + size) {}
    explicit ByteReader(const std::vector<std::byte>& v) : ByteReader(v.data(), v.size()) {}

    void raw(void* out, std::size_t n) {
        if (std::size_t(end_ - p_) < n) throw TruncatedFile("unexpected end of data");
        std::memcpy(out, p_, n);
        p_ += n;
    }
    uint8_t u8() { uint8_t v; raw(&v, 1); return v; }
    uint32_t u32() { uint32_t v; raw(&v, 4); return v; }
    uint64_t u64() { uint64_t v; raw(&v, 8); return v; }
    int64_t i64() { int64_t v; raw(&v, 8); return v; }
    float f32() { float v; raw(&v, 4); return v; }
    double f64() { double v; raw(&v, 8); return v; }
    std::string str() {
        uint32_t n = u32();
        if (std::size_t(end_ - p_) < n) throw TruncatedFile("unexpected end of data");
        std::string s(reinterpret_cast<const char*>(p_), n);
        p_ += n;
        return s;
    }
    std::size_t remaining() const { return std::size_t(end_ - p_); }
    std::size_t offset(const std::byte* origin) const { return std::size_t(p_ - origin); }

private:
    const std::byte* p_;
    const std::byte* end_;
};

std::vector<std::byte> read_file_bytes(const std::string& path);
void write_file_bytes(const std::string& path, const void* data, std::size_t size);
std::string read_file_text(const std::string& path);
void write_file_text(const std::string& path, const std::string& text);

}  // namespace ffkit
