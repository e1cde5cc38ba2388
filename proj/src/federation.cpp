#include "federation.hpp"

#include "rng.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace fedsim {

UpdateStrategy parse_strategy(std::string_view name) {
    if (name == "full") {
        return UpdateStrategy::full;
    }
    if (name == "fedtlu") {
        return UpdateStrategy::fedtlu;
    }
    if (name == "random") {
        return UpdateStrategy::random;
    }
    if (name == "last") {
        return UpdateStrategy::last;
    }
    throw std::invalid_argument("unknown update strategy '" + std::string(name) + "'");
}

std::string_view strategy_name(UpdateStrategy s) {
    switch (s) {
        case UpdateStrategy::full: return "full";
        case UpdateStrategy::fedtlu: return "fedtlu";
        case UpdateStrategy::random: return "random";
        case UpdateStrategy::last: return "last";
    }
    throw std::invalid_argument("unknown update strategy");
}

std::vector<double> client_weights(const std::vector<size_t> & shard_token_counts) {
    if (shard_token_counts.empty()) {
        throw std::invalid_argument("client_weights: no participants");
    }
    double total = 0.0;
    for (size_t c : shard_token_counts) {
        total += (double) c;
    }
    if (total <= 0.0) {
        throw std::invalid_argument("client_weights: zero total token count");
    }
    std::vector<double> out;
    out.reserve(shard_token_counts.size());
    for (size_t c : shard_token_counts) {
        out.push_back((double) c / total);
    }
    return out;
}

ModelState aggregate(const std::vector<ModelState> & models, const std::vector<double> & weights) {
    if (models.empty() || models.size() != weights.size()) {
        throw std::invalid_argument("aggregate: need one weight per model");
    }
    double wsum = 0.0;
    for (double w : weights) {
        wsum += w;
    }
    if (std::abs(wsum - 1.0) > 1e-12) {
        throw std::invalid_argument("aggregate: weights must sum to 1");
    }
    for (size_t k = 1; k < models.size(); ++k) {
        if (!same_structure(models[0], models[k])) {
            throw std::invalid_argument("aggregate: models differ in structure");
        }
    }

    ModelState out = models[0];
    for (ParamTensor & t : out.params) {
        t.values.assign(t.values.size(), 0.0);
    }
    for (size_t k = 0; k < models.size(); ++k) {
        const double w = weights[k];
        for (size_t p = 0; p < out.params.size(); ++p) {
            double * dst = out.params[p].values.data();
            const double * src = models[k].params[p].values.data();
            const size_t n = out.params[p].values.size();
            for (size_t i = 0; i < n; ++i) {
                dst[i] += w * src[i];
            }
        }
    }
    return out;
}

UpdatePlan plan_update(UpdateStrategy strategy, const ModelState & before, const ModelState & aggre,
                       double portion, uint64_t round_seed) {
    if (!same_structure(before, aggre)) {
        throw std::invalid_argument("plan_update: models differ in structure");
    }
    if (!(portion > 0.0 && portion <= 1.0)) {
        throw std::invalid_argument("plan_update: portion must be in (0, 1]");
    }

    UpdatePlan plan;
    plan.strategy = strategy;
    plan.portion = strategy == UpdateStrategy::full ? 1.0 : portion;

    if (strategy == UpdateStrategy::full) {
        for (const ParamTensor & t : before.params) {
            plan.selected_tensors.insert(t.name);
            if (t.block_id && (plan.selected_block_ids.empty() || plan.selected_block_ids.back() != *t.block_id)) {
                plan.selected_block_ids.push_back(*t.block_id);
            }
        }
        return plan;
    }

    if (strategy == UpdateStrategy::last) {
        plan.selected_tensors.insert("output_proj.weight");
        plan.selected_tensors.insert("output_proj.bias");
        return plan;
    }

    // FedTLU and Random both refresh the whole non-repeated part; only block
    // membership is contested, group by group.
    for (const ParamTensor & t : before.params) {
        if (!t.block_id) {
            plan.selected_tensors.insert(t.name);
        }
    }

    const std::vector<BlockGroup> groups = group_blocks(before);
    std::vector<BlockScore> scores;
    if (strategy == UpdateStrategy::fedtlu) {
        scores = block_scores(score_layers(before, aggre), before);
    }

    for (const BlockGroup & g : groups) {
        const int size = (int) g.block_ids.size();
        int s = (int) std::llround(portion * (double) size);
        s = std::max(1, std::min(s, size));

        std::vector<int> chosen;
        if (strategy == UpdateStrategy::fedtlu) {
            std::vector<BlockScore> group_scores;
            for (const BlockScore & bs : scores) {
                if (bs.group_id == g.group_id) {
                    group_scores.push_back(bs);
                }
            }
            chosen = select_blocks(group_scores, s);
        } else {
            Rng rng(derive_seed(round_seed, "random-group", (uint64_t) g.group_id));
            for (int idx : rng.sample_without_replacement(size, s)) {
                chosen.push_back(g.block_ids[(size_t) idx]);
            }
        }
        plan.selected_block_ids.insert(plan.selected_block_ids.end(), chosen.begin(), chosen.end());
    }
    std::sort(plan.selected_block_ids.begin(), plan.selected_block_ids.end());

    for (const ParamTensor & t : before.params) {
        if (t.block_id && std::binary_search(plan.selected_block_ids.begin(),
                                             plan.selected_block_ids.end(), *t.block_id)) {
            plan.selected_tensors.insert(t.name);
        }
    }
    return plan;
}

ModelState apply_update(const ModelState & before, const ModelState & aggre, const UpdatePlan & plan) {
    if (!same_structure(before, aggre)) {
        throw std::invalid_argument("apply_update: models differ in structure");
    }
    ModelState out = before;
    for (const std::string & name : plan.selected_tensors) {
        const int i = out.index_of(name);
        if (i < 0) {
            throw std::invalid_argument("apply_update: plan references unknown tensor '" + name + "'");
        }
        out.params[(size_t) i].values = aggre.params[(size_t) i].values;
    }
    return out;
}

PortionSchedule advance_portion(PortionSchedule state, double new_global_nll) {
    if (!std::isfinite(new_global_nll)) {
        throw std::invalid_argument("advance_portion: metric must be finite");
    }
    state.recent_nll.push_back(new_global_nll);
    if (state.recent_nll.size() > 10) {
        state.recent_nll.erase(state.recent_nll.begin());
    }

    if (new_global_nll < 0.99 * state.best_nll) {
        state.best_nll = new_global_nll;
        state.rounds_since_improvement = 0;
        return state;
    }
    if (++state.rounds_since_improvement >= 10) {
        state.current_portion = state.current_portion > 0.5 ? 0.5 : 0.25;
        state.rounds_since_improvement = 0;
    }
    return state;
}

} // namespace fedsim
