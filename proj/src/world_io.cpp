#include "opvlm/world_io.hpp"

#include <fstream>

#include "opvlm/config_json.hpp"
#include "opvlm/io.hpp"

namespace opvlm {

using nlohmann::json;

void save_world(const ConceptWorld& world, const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir / "refs");
    fs::create_directories(dir / "queries");

    json manifest;
    manifest["spec"] = world.spec;
    json concepts = json::array();
    for (std::size_t ci = 0; ci < world.concepts.size(); ++ci) {
        const Concept& c = world.concepts[ci];
        json refs = json::array();
        for (std::size_t ri = 0; ri < c.references.size(); ++ri) {
            const std::string rel =
                "refs/c" + std::to_string(ci) + "_r" + std::to_string(ri) + ".opvf";
            store_features(c.references[ri], dir / rel);
            refs.push_back(rel);
        }
        concepts.push_back({{"id", c.id}, {"references", refs}});
    }
    manifest["concepts"] = concepts;

    json queries = json::array();
    for (std::size_t qi = 0; qi < world.queries.size(); ++qi) {
        const FeatureQuery& q = world.queries[qi];
        const std::string rel = "queries/q" + std::to_string(qi) + ".opvf";
        store_features(q.features, dir / rel);
        queries.push_back({{"path", rel},
                           {"concept", q.concept_index},
                           {"present", q.present},
                           {"distractor_fraction", q.distractor_fraction}});
    }
    manifest["queries"] = queries;

    std::ofstream out(dir / "world.json", std::ios::trunc);
    if (!out) throw format_error("cannot write world manifest");
    out << manifest.dump(2) << '\n';
}

ConceptWorld load_world(const std::filesystem::path& dir) {
    std::ifstream in(dir / "world.json");
    if (!in) throw format_error("cannot open world manifest: " + (dir / "world.json").string());
    json manifest;
    try {
        in >> manifest;
    } catch (const json::exception& e) {
        throw format_error(std::string("world manifest is not valid JSON: ") + e.what());
    }

    ConceptWorld world;
    world.spec = manifest.at("spec").get<SyntheticSpec>();
    for (const json& cj : manifest.at("concepts")) {
        Concept c;
        c.id = cj.at("id").get<std::string>();
        for (const json& rj : cj.at("references"))
            c.references.push_back(load_features(dir / rj.get<std::string>()));
        world.concepts.push_back(std::move(c));
    }
    for (const json& qj : manifest.at("queries")) {
        FeatureQuery q;
        q.features = load_features(dir / qj.at("path").get<std::string>());
        q.concept_index = qj.at("concept").get<std::size_t>();
        q.present = qj.at("present").get<bool>();
        q.distractor_fraction = qj.at("distractor_fraction").get<double>();
        if (q.concept_index >= world.concepts.size())
            throw format_error("world manifest references unknown concept");
        world.queries.push_back(std::move(q));
    }
    return world;
}

}  // namespace opvlm
