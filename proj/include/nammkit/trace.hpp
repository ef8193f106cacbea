#pragma once

#include <cstddef>
#include <fstream>
#include <optional>
#include <string>

#include "nammkit/numerics.hpp"

namespace nammkit {

// Attention trace stream: magic "ATRC", u32 version=1, u32 n_layers,
// u32 n_heads, then repeated records {u32 layer, u32 head, u32 n_queries,
// u32 n_keys, real32 LE row-major matrix}. Entries are probabilities; rows
// sum to at most 1 + 1e-4.

struct TraceRecord {
    std::size_t layer = 0;
    std::size_t head = 0;
    Matrix attn;  // n_queries x n_keys, widened to real64
};

class TraceWriter {
  public:
    TraceWriter(const std::string& path, std::size_t n_layers, std::size_t n_heads);
    void add(std::size_t layer, std::size_t head, const Matrix& attn);
    void close();

  private:
    std::ofstream os_;
    std::string path_;
};

class TraceReader {
  public:
    explicit TraceReader(const std::string& path);
    std::size_t n_layers() const { return n_layers_; }
    std::size_t n_heads() const { return n_heads_; }
    // Reads the next record; empty optional at clean end of stream. Malformed
    // data throws FormatError mentioning the byte offset.
    std::optional<TraceRecord> next();

  private:
    std::ifstream is_;
    std::string path_;
    std::size_t n_layers_ = 0;
    std::size_t n_heads_ = 0;
};

}  // namespace nammkit
