#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace fedsim {

using token_id = int32_t;

// Network dimensions. vocab_size is normally filled from the corpus vocab.
struct ArchConfig {
    int64_t vocab_size  = 0;
    int64_t embed_dim   = 32;
    int64_t context_len = 8;
    int64_t hidden_dim  = 64;
    int64_t num_blocks  = 4;

    void validate() const; // throws std::invalid_argument on non-positive dims
    bool operator==(const ArchConfig &) const = default;
};

// One named parameter array, the unit of layer scoring. block_id is set for
// tensors belonging to a repeated block and empty for the non-repeated part.
struct ParamTensor {
    std::string name;
    std::vector<int64_t> shape;
    std::vector<double> values; // row-major, length == param_count()
    std::optional<int> block_id;

    int64_t param_count() const;
};

struct ModelState {
    ArchConfig arch;
    std::vector<ParamTensor> params; // fixed order defined by the architecture

    int index_of(std::string_view name) const; // -1 if absent
    const ParamTensor & tensor(std::string_view name) const;
    ParamTensor & tensor(std::string_view name);
};

// Gradient of the mean NLL, one entry per model tensor in model order.
struct Gradients {
    std::vector<ParamTensor> params;
};

// Builds the tensor layout for an architecture with all values zero:
//   embedding.weight                       {V, d}
//   input_proj.weight / .bias              {h, C*d} / {h}
//   block_<r>.fc1.weight / .fc1.bias
//   block_<r>.fc2.weight / .fc2.bias       4 tensors per repeated block
//   output_proj.weight / .bias             {V, h} / {V}
ModelState make_empty_model(const ArchConfig & arch);

Gradients make_zero_gradients(const ModelState & model);

// Same tensor names, shapes, block ids and order.
bool same_structure(const ModelState & a, const ModelState & b);

// Exact bit-level equality of all values (distinguishes -0.0 from +0.0).
bool bitwise_equal(const ParamTensor & a, const ParamTensor & b);
bool bitwise_equal(const ModelState & a, const ModelState & b);

} // namespace fedsim
