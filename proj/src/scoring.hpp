#pragma once

#include "tensor.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace fedsim {

struct LayerScore {
    std::string tensor_name;
    double score = 0.0; // finite, >= 0
};

struct BlockScore {
    int block_id = 0;
    int group_id = 0;
    double score = 0.0; // sum of member layer scores
};

// Blocks whose tensors have the same ordered parameter-count sequence compete
// with each other for selection.
struct BlockGroup {
    int group_id = 0;
    std::vector<int64_t> signature;
    std::vector<int> block_ids; // ascending
};

struct BlockSig {
    int block_id = 0;
    std::vector<int64_t> signature;
};

// Score of one tensor's aggregated change:
//   ||delta||_2 / (sqrt(n) * std(delta))
// with the population standard deviation clamped below at 1e-12 so a constant
// nonzero delta scores very high instead of dividing by zero.
LayerScore layer_score(const ParamTensor & before, const ParamTensor & after);

// Scores every tensor of the model (block members and non-repeated part alike).
std::vector<LayerScore> score_layers(const ModelState & before, const ModelState & aggre);

std::vector<BlockSig> block_signatures(const ModelState & model);

// Partition by exact signature equality; group ids by first occurrence.
std::vector<BlockGroup> group_by_signature(const std::vector<BlockSig> & blocks);

std::vector<BlockGroup> group_blocks(const ModelState & model);

// Sums member layer scores per block; result sorted by block id. Throws if a
// block tensor has no score.
std::vector<BlockScore> block_scores(const std::vector<LayerScore> & layer_scores, const ModelState & model);

// Ids of the S highest-scoring blocks of one group, ties broken by lower
// block id, output sorted ascending.
std::vector<int> select_blocks(const std::vector<BlockScore> & group, int num_selected);

} // namespace fedsim
