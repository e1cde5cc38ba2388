#pragma once

#include "model.hpp"
#include "rng.hpp"
#include "scoring.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

namespace fedsim::test {

// Independent long-double reimplementation of the forward pass, used as the
// finite-difference oracle. The extra precision keeps the central-difference
// noise floor (~eps * |loss| / step) well below the 1e-8 gradient denominator
// that the exactness checks divide by.
struct LdModel {
    ArchConfig arch;
    std::vector<std::vector<long double>> params; // model tensor order

    static LdModel from(const ModelState & m) {
        LdModel out;
        out.arch = m.arch;
        out.params.reserve(m.params.size());
        for (const ParamTensor & t : m.params) {
            out.params.emplace_back(t.values.begin(), t.values.end());
        }
        return out;
    }

    long double mean_nll(const std::vector<Sample> & batch) const {
        const int64_t d = arch.embed_dim;
        const int64_t C = arch.context_len;
        const int64_t h = arch.hidden_dim;
        const int64_t V = arch.vocab_size;
        const int R = (int) arch.num_blocks;
        const int out_w = 3 + 4 * R;

        long double total = 0.0L;
        std::vector<long double> embed((size_t) (C * d));
        std::vector<long double> x((size_t) h), t((size_t) h), z((size_t) h);
        std::vector<long double> logits((size_t) V);

        for (const Sample & s : batch) {
            for (int64_t j = 0; j < C; ++j) {
                for (int64_t i = 0; i < d; ++i) {
                    embed[(size_t) (j * d + i)] = params[0][(size_t) ((int64_t) s.context[(size_t) j] * d + i)];
                }
            }
            for (int64_t i = 0; i < h; ++i) {
                long double acc = params[2][(size_t) i];
                for (int64_t j = 0; j < C * d; ++j) {
                    acc += params[1][(size_t) (i * C * d + j)] * embed[(size_t) j];
                }
                x[(size_t) i] = tanhl(acc);
            }
            for (int r = 0; r < R; ++r) {
                for (int64_t i = 0; i < h; ++i) {
                    long double acc = params[(size_t) (4 + 4 * r)][(size_t) i];
                    for (int64_t j = 0; j < h; ++j) {
                        acc += params[(size_t) (3 + 4 * r)][(size_t) (i * h + j)] * x[(size_t) j];
                    }
                    t[(size_t) i] = tanhl(acc);
                }
                for (int64_t i = 0; i < h; ++i) {
                    long double acc = params[(size_t) (6 + 4 * r)][(size_t) i];
                    for (int64_t j = 0; j < h; ++j) {
                        acc += params[(size_t) (5 + 4 * r)][(size_t) (i * h + j)] * t[(size_t) j];
                    }
                    z[(size_t) i] = x[(size_t) i] + acc;
                }
                std::swap(x, z);
            }
            long double mx = -1e30L;
            for (int64_t i = 0; i < V; ++i) {
                long double acc = params[(size_t) (out_w + 1)][(size_t) i];
                for (int64_t j = 0; j < h; ++j) {
                    acc += params[(size_t) out_w][(size_t) (i * h + j)] * x[(size_t) j];
                }
                logits[(size_t) i] = acc;
                mx = acc > mx ? acc : mx;
            }
            long double sum = 0.0L;
            for (int64_t i = 0; i < V; ++i) {
                sum += expl(logits[(size_t) i] - mx);
            }
            total += mx + logl(sum) - logits[(size_t) s.target];
        }
        return total / (long double) batch.size();
    }
};

// Central finite difference of the mean batch NLL with respect to one
// parameter entry. Perturbs the oracle model in place and restores it.
inline double fd_gradient(LdModel & model, const std::vector<Sample> & batch,
                          size_t param_idx, size_t value_idx, double step = 1e-5) {
    long double & v = model.params[param_idx][value_idx];
    const long double saved = v;
    v = saved + (long double) step;
    const long double up = model.mean_nll(batch);
    v = saved - (long double) step;
    const long double down = model.mean_nll(batch);
    v = saved;
    return (double) ((up - down) / (2.0L * (long double) step));
}

inline std::vector<Sample> random_batch(const ArchConfig & arch, int n, Rng & rng) {
    std::vector<Sample> batch;
    batch.reserve((size_t) n);
    for (int i = 0; i < n; ++i) {
        Sample s;
        for (int64_t j = 0; j < arch.context_len; ++j) {
            s.context.push_back((token_id) rng.below((uint64_t) arch.vocab_size));
        }
        s.target = (token_id) rng.below((uint64_t) arch.vocab_size);
        batch.push_back(std::move(s));
    }
    return batch;
}

// Exhaustive best-subset enumeration: among all size-k subsets with maximal
// total score, picks the lexicographically smallest ascending id list. This
// is the reference select_blocks must reproduce.
inline std::vector<int> brute_force_select(const std::vector<BlockScore> & group, int k) {
    const int n = (int) group.size();
    std::vector<int> best;
    double best_sum = 0.0;
    for (uint32_t mask = 0; mask < (1u << n); ++mask) {
        if (__builtin_popcount(mask) != k) {
            continue;
        }
        double sum = 0.0;
        std::vector<int> ids;
        for (int i = 0; i < n; ++i) {
            if (mask & (1u << i)) {
                sum += group[(size_t) i].score;
                ids.push_back(group[(size_t) i].block_id);
            }
        }
        std::sort(ids.begin(), ids.end());
        if (best.empty() || sum > best_sum || (sum == best_sum && ids < best)) {
            best = ids;
            best_sum = sum;
        }
    }
    return best;
}

// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string & hint) {
    static Rng rng((uint64_t) std::chrono::steady_clock::now().time_since_epoch().count());
    const auto dir = std::filesystem::temp_directory_path() /
                     ("fedsim_" + hint + "_" + std::to_string(rng.next_u64() >> 16));
    std::filesystem::create_directories(dir);
    return dir;
}

inline std::string slurp(const std::filesystem::path & p) {
    std::ifstream in(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

inline void spit(const std::filesystem::path & p, const std::string & text) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out << text;
}

} // namespace fedsim::test
