#pragma once

#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace nammkit {

// Little-endian binary helpers. The on-disk formats are defined as LE; this
// codebase targets LE hosts and asserts that at startup of the readers.

class FormatError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

inline void write_u32(std::ostream& os, std::uint32_t v) {
    os.write(reinterpret_cast<const char*>(&v), 4);
}

inline void write_f64(std::ostream& os, double v) {
    os.write(reinterpret_cast<const char*>(&v), 8);
}

inline void write_f32(std::ostream& os, float v) {
    os.write(reinterpret_cast<const char*>(&v), 4);
}

inline std::uint32_t read_u32(std::istream& is) {
    std::uint32_t v;
    if (!is.read(reinterpret_cast<char*>(&v), 4)) throw FormatError("unexpected end of stream");
    return v;
}

inline double read_f64(std::istream& is) {
    double v;
    if (!is.read(reinterpret_cast<char*>(&v), 8)) throw FormatError("unexpected end of stream");
    return v;
}

inline float read_f32(std::istream& is) {
    float v;
    if (!is.read(reinterpret_cast<char*>(&v), 4)) throw FormatError("unexpected end of stream");
    return v;
}

inline void write_magic(std::ostream& os, const char magic[4]) { os.write(magic, 4); }

inline void expect_magic(std::istream& is, const char magic[4], const std::string& what) {
    char buf[4];
    if (!is.read(buf, 4) || buf[0] != magic[0] || buf[1] != magic[1] || buf[2] != magic[2] ||
        buf[3] != magic[3]) {
        throw FormatError("bad magic for " + what);
    }
}

inline std::ofstream open_out(const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("cannot open for writing: " + path);
    return os;
}

inline std::ifstream open_in(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot open for reading: " + path);
    return is;
}

}  // namespace nammkit
