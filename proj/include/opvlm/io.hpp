#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "opvlm/matrix.hpp"

namespace opvlm {

// Malformed / corrupt / truncated on-disk data.
struct format_error : std::runtime_error {
    explicit format_error(const std::string& msg) : std::runtime_error(msg) {}
};

std::uint32_t crc32(const std::uint8_t* data, std::size_t len, std::uint32_t seed = 0);

std::uint64_t fnv1a64(const std::uint8_t* data, std::size_t len,
                      std::uint64_t seed = 14695981039346656037ull);

// Append-only little-endian byte buffer.
class ByteWriter {
public:
    void u16(std::uint16_t v);
    void u32(std::uint32_t v);
    void u64(std::uint64_t v);
    void f64(double v);
    void bytes(const void* p, std::size_t n);
    void str(const std::string& s);  // raw bytes, no length prefix

    const std::vector<std::uint8_t>& buffer() const { return buf_; }
    std::size_t size() const { return buf_.size(); }

private:
    std::vector<std::uint8_t> buf_;
};

// Sequential little-endian reader; throws format_error on overrun.
class ByteReader {
public:
    ByteReader(const std::uint8_t* data, std::size_t len) : p_(data), end_(data + len) {}
    explicit ByteReader(const std::vector<std::uint8_t>& buf)
        : ByteReader(buf.data(), buf.size()) {}

    std::uint16_t u16();
    std::uint32_t u32();
    std::uint64_t u64();
    double f64();
    std::string str(std::size_t n);
    std::size_t remaining() const { return static_cast<std::size_t>(end_ - p_); }

private:
    void need(std::size_t n) const;
    const std::uint8_t* p_;
    const std::uint8_t* end_;
};

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

// Feature file "OPVF": magic, version u32, T u32, d u32, row-major LE f64,
// CRC-32 trailer over everything after the magic.
inline constexpr std::uint32_t kFeatureFormatVersion = 1;
void store_features(const Matrix& map, const std::filesystem::path& path);
Matrix load_features(const std::filesystem::path& path);

}  // namespace opvlm
