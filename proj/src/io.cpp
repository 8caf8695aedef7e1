#include "opvlm/io.hpp"

#include <array>
#include <cstring>
#include <fstream>

namespace opvlm {

namespace {

std::array<std::uint32_t, 256> make_crc_table() {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
        std::uint32_t c = i;
        for (int j = 0; j < 8; ++j)
            c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
        t[i] = c;
    }
    return t;
}

}  // namespace

std::uint32_t crc32(const std::uint8_t* data, std::size_t len, std::uint32_t seed) {
    static const auto table = make_crc_table();
    std::uint32_t c = seed ^ 0xFFFFFFFFu;
    for (std::size_t i = 0; i < len; ++i)
        c = table[(c ^ data[i]) & 0xFF] ^ (c >> 8);
    return c ^ 0xFFFFFFFFu;
}

std::uint64_t fnv1a64(const std::uint8_t* data, std::size_t len, std::uint64_t seed) {
    std::uint64_t h = seed;
    for (std::size_t i = 0; i < len; ++i) {
        h ^= data[i];
        h *= 1099511628211ull;
    }
    return h;
}

void ByteWriter::u16(std::uint16_t v) {
    buf_.push_back(static_cast<std::uint8_t>(v & 0xFF));
    buf_.push_back(static_cast<std::uint8_t>(v >> 8));
}

void ByteWriter::u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

void ByteWriter::u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

void ByteWriter::f64(double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof(bits));
    u64(bits);
}

void ByteWriter::bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    buf_.insert(buf_.end(), b, b + n);
}

void ByteWriter::str(const std::string& s) { bytes(s.data(), s.size()); }

void ByteReader::need(std::size_t n) const {
    if (remaining() < n) throw format_error("unexpected end of data");
}

std::uint16_t ByteReader::u16() {
    need(2);
    std::uint16_t v = static_cast<std::uint16_t>(p_[0]) |
                      static_cast<std::uint16_t>(p_[1]) << 8;
    p_ += 2;
    return v;
}

std::uint32_t ByteReader::u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p_[i]) << (8 * i);
    p_ += 4;
    return v;
}

std::uint64_t ByteReader::u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p_[i]) << (8 * i);
    p_ += 8;
    return v;
}

double ByteReader::f64() {
    std::uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, sizeof(v));
    return v;
}

std::string ByteReader::str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(p_), n);
    p_ += n;
    return s;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw format_error("cannot open file: " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    return bytes;
}

void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw format_error("cannot write file: " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw format_error("short write: " + path.string());
}

namespace {
constexpr char kFeatureMagic[4] = {'O', 'P', 'V', 'F'};
}

void store_features(const Matrix& map, const std::filesystem::path& path) {
    require(map.rows >= 1 && map.cols >= 1, "store_features: empty matrix");
    require(all_finite(map), "store_features: non-finite entries");
    ByteWriter w;
    w.bytes(kFeatureMagic, 4);
    w.u32(kFeatureFormatVersion);
    w.u32(static_cast<std::uint32_t>(map.rows));
    w.u32(static_cast<std::uint32_t>(map.cols));
    for (double x : map.data) w.f64(x);
    std::uint32_t crc = crc32(w.buffer().data() + 4, w.size() - 4);
    w.u32(crc);
    write_file(path, w.buffer());
}

Matrix load_features(const std::filesystem::path& path) {
    auto bytes = read_file(path);
    if (bytes.size() < 4 + 4 + 4 + 4 + 4) throw format_error("feature file truncated");
    if (std::memcmp(bytes.data(), kFeatureMagic, 4) != 0)
        throw format_error("bad magic in feature file");
    std::uint32_t stored = 0;
    std::memcpy(&stored, bytes.data() + bytes.size() - 4, 4);
    // stored CRC is little-endian; re-read via reader for portability
    {
        ByteReader tail(bytes.data() + bytes.size() - 4, 4);
        stored = tail.u32();
    }
    std::uint32_t actual = crc32(bytes.data() + 4, bytes.size() - 8);
    if (stored != actual) throw format_error("feature file CRC mismatch");

    ByteReader r(bytes.data() + 4, bytes.size() - 8);
    std::uint32_t version = r.u32();
    if (version != kFeatureFormatVersion) throw format_error("unsupported feature file version");
    std::uint32_t rows = r.u32();
    std::uint32_t cols = r.u32();
    if (rows < 1 || cols < 1) throw format_error("feature file with empty shape");
    if (r.remaining() != static_cast<std::size_t>(rows) * cols * 8)
        throw format_error("feature file payload size mismatch");
    Matrix m(rows, cols);
    for (double& x : m.data) x = r.f64();
    return m;
}

}  // namespace opvlm
