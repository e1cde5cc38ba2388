#pragma once

#include "data.hpp"
#include "tensor.hpp"

#include <cstdint>
#include <vector>

namespace fedsim {

// Forward pass: the context_len most recent token ids are embedded (V x d
// table) and concatenated, pushed through an input projection with tanh,
// then num_blocks residual blocks of [dense h->h, tanh, dense h->h, add],
// and finally an output projection to vocab logits with softmax
// cross-entropy against the next token. All arithmetic is in doubles.

// Weights uniform in [-0.05, 0.05] from the seeded generator, biases zero.
ModelState init_model(const ArchConfig & arch, uint64_t seed);

struct LossResult {
    double mean_nll = 0.0;
    Gradients grads;
};

// Mean NLL over the batch and its exact analytic gradient.
LossResult loss_and_grads(const ModelState & model, const std::vector<Sample> & batch);

// Forward-only mean NLL (same example semantics as loss_and_grads).
double batch_mean_nll(const ModelState & model, const std::vector<Sample> & batch);

// FedProx local objective: out[p] = grads[p] + mu * (current[p] - anchor[p]).
Gradients proximal_adjust(const Gradients & grads, const ModelState & current,
                          const ModelState & anchor, double mu);

struct LocalUpdateConfig {
    int epochs = 1;
    double eta = 0.1;
    int batch_size = 16;
    int seq_len = 32;
    double mu = 0.0; // 0 disables the proximal term
};

// Mini-batch SGD on a copy of the received global model. The anchor of the
// proximal term is the received global model for the whole call. Batch order
// per epoch comes from seeds derived from (seed, epoch).
ModelState local_update(const ModelState & global, const TokenShard & shard,
                        const LocalUpdateConfig & cfg, uint64_t seed);

// exp(mean NLL) over every position of the stream with a full context window.
double perplexity(const ModelState & model, const std::vector<token_id> & tokens, int seq_len);

} // namespace fedsim
