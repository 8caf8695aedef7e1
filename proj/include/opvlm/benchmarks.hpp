#pragma once

#include <cstdint>
#include <vector>

#include "opvlm/dataset.hpp"
#include "opvlm/trainer.hpp"

namespace opvlm {

// Fixed-seed synthetic benchmarks shipped with the tool. The 64-concept flat
// world backs the end-to-end identification run; the small worlds back the
// sweep and ablation trends.

TrainConfig benchmark64_config();
SyntheticSpec benchmark64_spec();

TrainConfig sweep_config();            // flat-world sweeps and the ablation matrix
TrainConfig curvature_sweep_config();  // d_ball 4; pairs with sweep_tree_spec
SyntheticSpec sweep_flat_spec();
SyntheticSpec sweep_tree_spec();

std::vector<std::uint64_t> benchmark_seeds();  // {1, 2, 3, 4, 5}

}  // namespace opvlm
