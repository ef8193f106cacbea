#include "nammkit/trace.hpp"

#include "nammkit/binio.hpp"

namespace nammkit {

TraceWriter::TraceWriter(const std::string& path, std::size_t n_layers, std::size_t n_heads)
    : os_(path, std::ios::binary), path_(path) {
    if (!os_) throw FormatError("cannot open for writing: " + path);
    write_magic(os_, "ATRC");
    write_u32(os_, 1);
    write_u32(os_, static_cast<std::uint32_t>(n_layers));
    write_u32(os_, static_cast<std::uint32_t>(n_heads));
}

void TraceWriter::add(std::size_t layer, std::size_t head, const Matrix& attn) {
    write_u32(os_, static_cast<std::uint32_t>(layer));
    write_u32(os_, static_cast<std::uint32_t>(head));
    write_u32(os_, static_cast<std::uint32_t>(attn.rows));
    write_u32(os_, static_cast<std::uint32_t>(attn.cols));
    for (double v : attn.data) write_f32(os_, static_cast<float>(v));
    if (!os_) throw FormatError("write failed: " + path_);
}

void TraceWriter::close() {
    os_.close();
    if (os_.fail()) throw FormatError("close failed: " + path_);
}

TraceReader::TraceReader(const std::string& path) : is_(path, std::ios::binary), path_(path) {
    if (!is_) throw FormatError("cannot open for reading: " + path);
    expect_magic(is_, "ATRC", path);
    if (read_u32(is_) != 1) throw FormatError("trace: unsupported version in " + path);
    n_layers_ = read_u32(is_);
    n_heads_ = read_u32(is_);
}

std::optional<TraceRecord> TraceReader::next() {
    const std::streampos offset = is_.tellg();
    is_.peek();
    if (is_.eof()) return std::nullopt;
    auto fail = [&](const std::string& why) -> FormatError {
        return FormatError("trace " + path_ + ": " + why + " at byte offset " +
                           std::to_string(static_cast<long long>(offset)));
    };
    TraceRecord rec;
    try {
        rec.layer = read_u32(is_);
        rec.head = read_u32(is_);
        const std::uint32_t n_queries = read_u32(is_);
        const std::uint32_t n_keys = read_u32(is_);
        if (rec.layer >= n_layers_ || rec.head >= n_heads_) throw fail("layer/head out of range");
        rec.attn = Matrix(n_queries, n_keys);
        for (double& v : rec.attn.data) v = static_cast<double>(read_f32(is_));
    } catch (const FormatError& e) {
        throw fail(e.what());
    }
    for (std::size_t q = 0; q < rec.attn.rows; ++q) {
        double sum = 0.0;
        for (std::size_t i = 0; i < rec.attn.cols; ++i) {
            const double v = rec.attn.at(q, i);
            if (!(v >= 0.0 && v <= 1.0)) throw fail("attention entry outside [0, 1]");
            sum += v;
        }
        if (sum > 1.0 + 1e-4) throw fail("attention row sums above 1 + 1e-4");
    }
    return rec;
}

}  // namespace nammkit
