#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include "opvlm/concept_model.hpp"
#include "opvlm/matrix.hpp"

namespace opvlm {

struct BankEntry {
    std::string identifier;
    ConceptEmbedding embedding;
    std::uint64_t source_digest = 0;  // hash of the reference feature maps
    std::uint64_t created_at = 0;     // seconds since epoch
};

std::uint64_t feature_maps_digest(const std::vector<Matrix>& maps);

// Identifier -> concept embedding store behind the parse / retrieve inference
// modes. Entries are only meaningful relative to the embedder that produced
// them; the fingerprint pins that association.
class ConceptBank {
public:
    explicit ConceptBank(std::uint64_t model_fingerprint) : fingerprint_(model_fingerprint) {}

    std::uint64_t fingerprint() const { return fingerprint_; }
    std::size_t size() const { return entries_.size(); }

    // Parsing mode: embed once through the frozen embedder and cache.
    const ConceptEmbedding& parse(const std::string& identifier,
                                  const std::vector<Matrix>& ref_maps, const EmbedderParams& e,
                                  const ModelConfig& config, bool overwrite = false);

    // Retrieval mode: constant-expected-time lookup; absence is a normal return.
    const ConceptEmbedding* retrieve(const std::string& identifier) const;
    const BankEntry* entry(const std::string& identifier) const;

    // Insert an externally computed embedding (used by load and the bindings).
    void insert(BankEntry entry, bool overwrite = false);

    bool remove(const std::string& identifier);
    std::vector<std::string> list() const;  // lexicographic

    void save(const std::filesystem::path& path) const;
    static ConceptBank load(const std::filesystem::path& path);
    static ConceptBank load(const std::filesystem::path& path,
                            std::uint64_t expected_fingerprint);

private:
    std::uint64_t fingerprint_;
    std::unordered_map<std::string, BankEntry> entries_;
};

inline constexpr std::uint32_t kBankFormatVersion = 1;

}  // namespace opvlm
