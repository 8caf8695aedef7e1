#include "opvlm/memory_bank.hpp"

#include <algorithm>
#include <chrono>
#include <cstring>

#include "opvlm/io.hpp"

namespace opvlm {

namespace {
constexpr char kBankMagic[4] = {'O', 'P', 'M', 'B'};

std::uint64_t now_seconds() {
    return static_cast<std::uint64_t>(
        std::chrono::duration_cast<std::chrono::seconds>(
            std::chrono::system_clock::now().time_since_epoch())
            .count());
}
}  // namespace

std::uint64_t feature_maps_digest(const std::vector<Matrix>& maps) {
    std::uint64_t h = 14695981039346656037ull;
    auto mix = [&h](std::uint64_t bits) {
        for (int b = 0; b < 8; ++b) {
            h ^= (bits >> (8 * b)) & 0xFF;
            h *= 1099511628211ull;
        }
    };
    for (const Matrix& m : maps) {
        mix(m.rows);
        mix(m.cols);
        for (double x : m.data) {
            std::uint64_t bits;
            std::memcpy(&bits, &x, sizeof(bits));
            mix(bits);
        }
    }
    return h;
}

const ConceptEmbedding& ConceptBank::parse(const std::string& identifier,
                                           const std::vector<Matrix>& ref_maps,
                                           const EmbedderParams& e, const ModelConfig& config,
                                           bool overwrite) {
    require(!identifier.empty(), "parse: empty identifier");
    require(!ref_maps.empty(), "parse: empty reference set");
    if (embedder_fingerprint(e) != fingerprint_)
        throw std::invalid_argument("parse: embedder fingerprint does not match this bank");
    if (!overwrite && entries_.count(identifier))
        throw std::invalid_argument("parse: identifier already present: " + identifier);
    BankEntry entry;
    entry.identifier = identifier;
    entry.embedding = embed_concept(ref_maps, e, config, identifier);
    entry.source_digest = feature_maps_digest(ref_maps);
    entry.created_at = now_seconds();
    auto [it, _] = entries_.insert_or_assign(identifier, std::move(entry));
    return it->second.embedding;
}

const ConceptEmbedding* ConceptBank::retrieve(const std::string& identifier) const {
    auto it = entries_.find(identifier);
    return it == entries_.end() ? nullptr : &it->second.embedding;
}

const BankEntry* ConceptBank::entry(const std::string& identifier) const {
    auto it = entries_.find(identifier);
    return it == entries_.end() ? nullptr : &it->second;
}

void ConceptBank::insert(BankEntry entry, bool overwrite) {
    require(!entry.identifier.empty(), "insert: empty identifier");
    require(all_finite(entry.embedding.tokens), "insert: non-finite embedding");
    if (!entries_.empty()) {
        const auto& ref = entries_.begin()->second.embedding.tokens;
        require(entry.embedding.tokens.rows == ref.rows &&
                    entry.embedding.tokens.cols == ref.cols,
                "insert: embedding shape differs from existing entries");
    }
    if (!overwrite && entries_.count(entry.identifier))
        throw std::invalid_argument("insert: identifier already present: " + entry.identifier);
    std::string key = entry.identifier;
    entries_.insert_or_assign(std::move(key), std::move(entry));
}

bool ConceptBank::remove(const std::string& identifier) {
    return entries_.erase(identifier) > 0;
}

std::vector<std::string> ConceptBank::list() const {
    std::vector<std::string> ids;
    ids.reserve(entries_.size());
    for (const auto& [id, _] : entries_) ids.push_back(id);
    std::sort(ids.begin(), ids.end());
    return ids;
}

void ConceptBank::save(const std::filesystem::path& path) const {
    ByteWriter w;
    w.bytes(kBankMagic, 4);
    w.u32(kBankFormatVersion);
    w.u64(fingerprint_);
    w.u32(static_cast<std::uint32_t>(entries_.size()));
    for (const std::string& id : list()) {
        const BankEntry& e = entries_.at(id);
        require(id.size() <= 0xFFFF, "save: identifier too long");
        w.u16(static_cast<std::uint16_t>(id.size()));
        w.str(id);
        w.u64(e.source_digest);
        w.u64(e.created_at);
        w.u32(static_cast<std::uint32_t>(e.embedding.tokens.rows));
        w.u32(static_cast<std::uint32_t>(e.embedding.tokens.cols));
        for (double x : e.embedding.tokens.data) w.f64(x);
    }
    const std::uint32_t crc = crc32(w.buffer().data() + 4, w.size() - 4);
    w.u32(crc);
    write_file(path, w.buffer());
}

ConceptBank ConceptBank::load(const std::filesystem::path& path) {
    auto bytes = read_file(path);
    if (bytes.size() < 4 + 4 + 8 + 4 + 4) throw format_error("bank file truncated");
    if (std::memcmp(bytes.data(), kBankMagic, 4) != 0)
        throw format_error("bad magic in bank file");
    std::uint32_t stored;
    {
        ByteReader tail(bytes.data() + bytes.size() - 4, 4);
        stored = tail.u32();
    }
    const std::uint32_t actual = crc32(bytes.data() + 4, bytes.size() - 8);
    if (stored != actual) throw format_error("bank file CRC mismatch");

    ByteReader r(bytes.data() + 4, bytes.size() - 8);
    const std::uint32_t version = r.u32();
    if (version != kBankFormatVersion) throw format_error("unsupported bank file version");
    ConceptBank bank(r.u64());
    const std::uint32_t count = r.u32();
    for (std::uint32_t i = 0; i < count; ++i) {
        BankEntry e;
        const std::uint16_t id_len = r.u16();
        e.identifier = r.str(id_len);
        e.source_digest = r.u64();
        e.created_at = r.u64();
        const std::uint32_t rows = r.u32();
        const std::uint32_t cols = r.u32();
        if (rows < 1 || cols < 1) throw format_error("bank entry with empty embedding");
        e.embedding.concept_id = e.identifier;
        e.embedding.tokens = Matrix(rows, cols);
        for (double& x : e.embedding.tokens.data) x = r.f64();
        bank.insert(std::move(e));
    }
    if (r.remaining() != 0) throw format_error("trailing bytes in bank file");
    return bank;
}

ConceptBank ConceptBank::load(const std::filesystem::path& path,
                              std::uint64_t expected_fingerprint) {
    ConceptBank bank = load(path);
    if (bank.fingerprint() != expected_fingerprint)
        throw format_error("bank fingerprint does not match the supplied embedder");
    return bank;
}

}  // namespace opvlm
