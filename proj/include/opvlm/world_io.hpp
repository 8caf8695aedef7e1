#pragma once

#include <filesystem>

#include "opvlm/dataset.hpp"

namespace opvlm {

// World directory layout: world.json manifest plus one "OPVF" feature file
// per reference image and per query.
void save_world(const ConceptWorld& world, const std::filesystem::path& dir);
ConceptWorld load_world(const std::filesystem::path& dir);

}  // namespace opvlm
