#include "tensor.hpp"

#include <cstring>
#include <stdexcept>

namespace fedsim {

void ArchConfig::validate() const {
    if (vocab_size < 1 || embed_dim < 1 || context_len < 1 || hidden_dim < 1 || num_blocks < 1) {
        throw std::invalid_argument("ArchConfig: all dimensions must be >= 1");
    }
}

int64_t ParamTensor::param_count() const {
    int64_t n = 1;
    for (int64_t s : shape) {
        n *= s;
    }
    return n;
}

int ModelState::index_of(std::string_view name) const {
    for (size_t i = 0; i < params.size(); ++i) {
        if (params[i].name == name) {
            return (int) i;
        }
    }
    return -1;
}

const ParamTensor & ModelState::tensor(std::string_view name) const {
    int i = index_of(name);
    if (i < 0) {
        throw std::out_of_range("ModelState: no tensor named '" + std::string(name) + "'");
    }
    return params[(size_t) i];
}

ParamTensor & ModelState::tensor(std::string_view name) {
    int i = index_of(name);
    if (i < 0) {
        throw std::out_of_range("ModelState: no tensor named '" + std::string(name) + "'");
    }
    return params[(size_t) i];
}

static ParamTensor zero_tensor(std::string name, std::vector<int64_t> shape, std::optional<int> block_id) {
    ParamTensor t;
    t.name = std::move(name);
    t.shape = std::move(shape);
    t.block_id = block_id;
    t.values.assign((size_t) t.param_count(), 0.0);
    return t;
}

ModelState make_empty_model(const ArchConfig & arch) {
    arch.validate();
    const int64_t V = arch.vocab_size;
    const int64_t d = arch.embed_dim;
    const int64_t C = arch.context_len;
    const int64_t h = arch.hidden_dim;

    ModelState m;
    m.arch = arch;
    m.params.push_back(zero_tensor("embedding.weight", {V, d}, std::nullopt));
    m.params.push_back(zero_tensor("input_proj.weight", {h, C * d}, std::nullopt));
    m.params.push_back(zero_tensor("input_proj.bias", {h}, std::nullopt));
    for (int r = 0; r < (int) arch.num_blocks; ++r) {
        const std::string p = "block_" + std::to_string(r) + ".";
        m.params.push_back(zero_tensor(p + "fc1.weight", {h, h}, r));
        m.params.push_back(zero_tensor(p + "fc1.bias", {h}, r));
        m.params.push_back(zero_tensor(p + "fc2.weight", {h, h}, r));
        m.params.push_back(zero_tensor(p + "fc2.bias", {h}, r));
    }
    m.params.push_back(zero_tensor("output_proj.weight", {V, h}, std::nullopt));
    m.params.push_back(zero_tensor("output_proj.bias", {V}, std::nullopt));
    return m;
}

Gradients make_zero_gradients(const ModelState & model) {
    Gradients g;
    g.params.reserve(model.params.size());
    for (const ParamTensor & t : model.params) {
        ParamTensor zt = t;
        zt.values.assign(zt.values.size(), 0.0);
        g.params.push_back(std::move(zt));
    }
    return g;
}

bool same_structure(const ModelState & a, const ModelState & b) {
    if (a.params.size() != b.params.size()) {
        return false;
    }
    for (size_t i = 0; i < a.params.size(); ++i) {
        const ParamTensor & x = a.params[i];
        const ParamTensor & y = b.params[i];
        if (x.name != y.name || x.shape != y.shape || x.block_id != y.block_id) {
            return false;
        }
    }
    return true;
}

bool bitwise_equal(const ParamTensor & a, const ParamTensor & b) {
    if (a.name != b.name || a.shape != b.shape || a.block_id != b.block_id) {
        return false;
    }
    if (a.values.size() != b.values.size()) {
        return false;
    }
    if (a.values.empty()) {
        return true;
    }
    return std::memcmp(a.values.data(), b.values.data(), a.values.size() * sizeof(double)) == 0;
}

bool bitwise_equal(const ModelState & a, const ModelState & b) {
    if (!(a.arch == b.arch) || a.params.size() != b.params.size()) {
        return false;
    }
    for (size_t i = 0; i < a.params.size(); ++i) {
        if (!bitwise_equal(a.params[i], b.params[i])) {
            return false;
        }
    }
    return true;
}

} // namespace fedsim
