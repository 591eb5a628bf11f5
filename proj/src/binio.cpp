#include "ffkit/binio.hpp"

#include <fstream>

namespace ffkit {

std::vector<std::byte> read_file_bytes(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path);
    f.seekg(0, std::ios::end);
    const std::streamoff n = f.tellg();
    f.seekg(0, std::ios::beg);
    std::vector<std::byte> out(static_cast<std::size_t>(n));
    if (n > 0) f.read(reinterpret_cast<char*>(out.data()), n);
    if (!f) throw IoError("short read on " + path);
    return out;
}

void write_file_bytes(const std::string& path, const void* data, std::size_t size) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open " + path + " for writing");
    f.write(static_cast<const char*>(data), std::streamsize(size));
    if (!f) throw IoError("short write on " + path);
}

std::string read_file_text(const std::string& path) {
    auto b = read_file_bytes(path);
    return std::string(reinterpret_cast<const char*>(b.data()), b.size());
}

void write_file_text(const std::string& path, const std::string& text) {
    write_file_bytes(path, text.data(), text.size());
}

}  // namespace ffkit
