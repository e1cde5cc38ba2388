#include "scoring.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <unordered_map>

namespace fedsim {

LayerScore layer_score(const ParamTensor & before, const ParamTensor & after) {
    if (before.name != after.name || before.shape != after.shape ||
        before.values.size() != after.values.size()) {
        throw std::invalid_argument("layer_score: tensors do not match");
    }
    const size_t n = before.values.size();
    if (n == 0) {
        throw std::invalid_argument("layer_score: empty tensor");
    }

    double sum = 0.0;
    double sum_sq = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const double d = after.values[i] - before.values[i];
        sum += d;
        sum_sq += d * d;
    }
    const double mean = sum / (double) n;
    double var = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const double d = after.values[i] - before.values[i] - mean;
        var += d * d;
    }
    var /= (double) n; // population convention
    const double norm = std::sqrt(sum_sq);
    const double std_dev = std::max(std::sqrt(var), 1e-12);
    return {before.name, norm / (std::sqrt((double) n) * std_dev)};
}

std::vector<LayerScore> score_layers(const ModelState & before, const ModelState & aggre) {
    if (!same_structure(before, aggre)) {
        throw std::invalid_argument("score_layers: models differ in structure");
    }
    std::vector<LayerScore> out;
    out.reserve(before.params.size());
    for (size_t i = 0; i < before.params.size(); ++i) {
        out.push_back(layer_score(before.params[i], aggre.params[i]));
    }
    return out;
}

std::vector<BlockSig> block_signatures(const ModelState & model) {
    std::map<int, std::vector<int64_t>> sig; // keyed ascending by block id
    for (const ParamTensor & t : model.params) {
        if (t.block_id) {
            sig[*t.block_id].push_back(t.param_count());
        }
    }
    std::vector<BlockSig> out;
    out.reserve(sig.size());
    for (auto & [id, counts] : sig) {
        out.push_back({id, std::move(counts)});
    }
    return out;
}

std::vector<BlockGroup> group_by_signature(const std::vector<BlockSig> & blocks) {
    std::vector<BlockGroup> groups;
    for (const BlockSig & b : blocks) {
        auto it = std::find_if(groups.begin(), groups.end(),
                               [&](const BlockGroup & g) { return g.signature == b.signature; });
        if (it == groups.end()) {
            groups.push_back({(int) groups.size(), b.signature, {b.block_id}});
        } else {
            it->block_ids.push_back(b.block_id);
        }
    }
    return groups;
}

std::vector<BlockGroup> group_blocks(const ModelState & model) {
    return group_by_signature(block_signatures(model));
}

std::vector<BlockScore> block_scores(const std::vector<LayerScore> & layer_scores, const ModelState & model) {
    std::unordered_map<std::string, double> by_name;
    by_name.reserve(layer_scores.size());
    for (const LayerScore & s : layer_scores) {
        by_name[s.tensor_name] = s.score;
    }

    std::unordered_map<int, int> group_of;
    for (const BlockGroup & g : group_blocks(model)) {
        for (int id : g.block_ids) {
            group_of[id] = g.group_id;
        }
    }

    std::map<int, double> totals;
    for (const ParamTensor & t : model.params) {
        if (!t.block_id) {
            continue;
        }
        auto it = by_name.find(t.name);
        if (it == by_name.end()) {
            throw std::invalid_argument("block_scores: missing layer score for '" + t.name + "'");
        }
        totals[*t.block_id] += it->second;
    }

    std::vector<BlockScore> out;
    out.reserve(totals.size());
    for (const auto & [id, total] : totals) {
        out.push_back({id, group_of.at(id), total});
    }
    return out;
}

std::vector<int> select_blocks(const std::vector<BlockScore> & group, int num_selected) {
    if (num_selected < 1 || (size_t) num_selected > group.size()) {
        throw std::invalid_argument("select_blocks: selection count out of range");
    }
    std::vector<BlockScore> sorted = group;
    std::sort(sorted.begin(), sorted.end(), [](const BlockScore & a, const BlockScore & b) {
        if (a.score != b.score) {
            return a.score > b.score;
        }
        return a.block_id < b.block_id;
    });
    std::vector<int> ids;
    ids.reserve((size_t) num_selected);
    for (int i = 0; i < num_selected; ++i) {
        ids.push_back(sorted[(size_t) i].block_id);
    }
    std::sort(ids.begin(), ids.end());
    return ids;
}

} // namespace fedsim
