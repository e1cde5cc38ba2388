#pragma once

#include "scoring.hpp"
#include "tensor.hpp"

#include <cstdint>
#include <limits>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace fedsim {

enum class UpdateStrategy {
    full,   // every tensor taken from the aggregate
    fedtlu, // non-repeated part plus the top scored blocks per group
    random, // non-repeated part plus uniformly drawn blocks per group
    last,   // output projection weight and bias only
};

UpdateStrategy parse_strategy(std::string_view name); // throws on unknown names
std::string_view strategy_name(UpdateStrategy s);

// p_k proportional to shard token counts, normalized to sum to 1.
std::vector<double> client_weights(const std::vector<size_t> & shard_token_counts);

// Weighted average of shape-congruent models; weights must sum to 1 within
// 1e-12. Contributions are summed in the given (ascending client) order so
// results are bit-reproducible.
ModelState aggregate(const std::vector<ModelState> & models, const std::vector<double> & weights);

struct UpdatePlan {
    UpdateStrategy strategy = UpdateStrategy::full;
    std::set<std::string> selected_tensors;
    double portion = 1.0;
    std::vector<int> selected_block_ids; // ascending
};

// Builds the set of tensors the round will take from the aggregate. FedTLU
// and Random select the same number of blocks per group,
// S = max(1, round(portion * group size)), so comparisons stay fair.
UpdatePlan plan_update(UpdateStrategy strategy, const ModelState & before, const ModelState & aggre,
                       double portion, uint64_t round_seed);

// Selected tensors copied bitwise from aggre, everything else from before.
ModelState apply_update(const ModelState & before, const ModelState & aggre, const UpdatePlan & plan);

// Fine-tuning portion decay: a round improves when its global evaluation NLL
// drops below 0.99x the best seen; ten non-improving rounds in a row step the
// portion down 0.75 -> 0.50 -> 0.25 (never lower).
struct PortionSchedule {
    double current_portion = 0.75;
    double best_nll = std::numeric_limits<double>::infinity();
    int rounds_since_improvement = 0;
    std::vector<double> recent_nll; // last 10, newest last
};

PortionSchedule advance_portion(PortionSchedule state, double new_global_nll);

} // namespace fedsim
