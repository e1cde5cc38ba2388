#include "data.hpp"

#include "rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

namespace fedsim {

token_id Vocab::encode(unsigned char c) const {
    int32_t id = id_of_byte[c];
    if (id < 0) {
        throw std::out_of_range("Vocab: byte not in vocabulary");
    }
    return id;
}

unsigned char Vocab::decode(token_id id) const {
    if (id < 0 || id >= size()) {
        throw std::out_of_range("Vocab: token id out of range");
    }
    return symbols[(size_t) id];
}

Corpus corpus_from_text(const std::string & text, double test_fraction) {
    if (text.empty()) {
        throw std::invalid_argument("corpus is empty");
    }
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
        throw std::invalid_argument("test_fraction must be in (0, 1)");
    }

    Corpus c;
    c.vocab.id_of_byte.fill(-1);
    std::array<bool, 256> seen{};
    for (unsigned char b : text) {
        seen[b] = true;
    }
    for (int b = 0; b < 256; ++b) {
        if (seen[b]) {
            c.vocab.id_of_byte[(size_t) b] = (int32_t) c.vocab.symbols.size();
            c.vocab.symbols.push_back((unsigned char) b);
        }
    }

    std::vector<token_id> tokens;
    tokens.reserve(text.size());
    for (unsigned char b : text) {
        tokens.push_back(c.vocab.id_of_byte[b]);
    }

    const size_t n = tokens.size();
    const size_t test_count = (size_t) std::ceil(test_fraction * (double) n);
    if (test_count == 0 || test_count >= n) {
        throw std::invalid_argument("test_fraction leaves an empty split");
    }
    c.split.train_tokens.assign(tokens.begin(), tokens.begin() + (ptrdiff_t) (n - test_count));
    c.split.test_tokens.assign(tokens.begin() + (ptrdiff_t) (n - test_count), tokens.end());
    return c;
}

Corpus load_corpus(const std::string & path, double test_fraction) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot open corpus file: " + path);
    }
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (text.empty()) {
        throw std::runtime_error("corpus file is empty: " + path);
    }
    return corpus_from_text(text, test_fraction);
}

std::vector<TokenShard> partition_with_counts(const std::vector<token_id> & train_tokens,
                                              const std::vector<size_t> & counts) {
    size_t total = 0;
    for (size_t c : counts) {
        total += c;
    }
    if (total > train_tokens.size()) {
        throw std::invalid_argument("partition: counts exceed the token stream");
    }
    std::vector<TokenShard> shards;
    shards.reserve(counts.size());
    size_t offset = 0;
    for (size_t k = 0; k < counts.size(); ++k) {
        TokenShard s;
        s.client_id = (int) k;
        s.start = offset;
        s.tokens.assign(train_tokens.begin() + (ptrdiff_t) offset,
                        train_tokens.begin() + (ptrdiff_t) (offset + counts[k]));
        offset += counts[k];
        shards.push_back(std::move(s));
    }
    return shards;
}

std::vector<TokenShard> partition(const std::vector<token_id> & train_tokens, int num_clients, uint64_t seed) {
    if (num_clients < 1) {
        throw std::invalid_argument("partition: need at least one client");
    }
    const size_t n = train_tokens.size();
    const size_t max_tokens = n / (size_t) num_clients;
    const size_t min_tokens = max_tokens / 2;
    if (min_tokens < 1) {
        throw std::invalid_argument("partition: token stream too small for the client count");
    }
    Rng rng(seed);
    std::vector<size_t> counts(static_cast<size_t>(num_clients));
    for (size_t & c : counts) {
        c = (size_t) rng.range((int64_t) min_tokens, (int64_t) max_tokens);
    }
    return partition_with_counts(train_tokens, counts);
}

TokenShard halve_shard(const TokenShard & shard) {
    const size_t n = shard.tokens.size();
    if (n < 4) {
        throw std::invalid_argument("halve_shard: shard too short");
    }
    TokenShard out;
    out.client_id = shard.client_id;
    out.start = shard.start;
    out.corrupted = shard.corrupted;
    const size_t half = n / 2;
    out.tokens.assign(shard.tokens.begin(), shard.tokens.begin() + (ptrdiff_t) half);
    if (!shard.shuffled_targets.empty()) {
        // context length is recoverable from the override length
        const size_t ctx = n - shard.shuffled_targets.size();
        if (half <= ctx) {
            throw std::invalid_argument("halve_shard: halved shard cannot form one example");
        }
        out.shuffled_targets.assign(shard.shuffled_targets.begin(),
                                    shard.shuffled_targets.begin() + (ptrdiff_t) (half - ctx));
    }
    return out;
}

TokenShard shuffle_labels(const TokenShard & shard, int context_len, uint64_t seed) {
    const size_t n = shard.tokens.size();
    if (context_len < 1) {
        throw std::invalid_argument("shuffle_labels: context_len must be >= 1");
    }
    if (n < (size_t) context_len + 2) {
        throw std::invalid_argument("shuffle_labels: shard too short to permute targets");
    }
    const size_t num_targets = n - (size_t) context_len;

    std::vector<token_id> targets(num_targets);
    for (size_t i = 0; i < num_targets; ++i) {
        targets[i] = shard.shuffled_targets.empty() ? shard.tokens[(size_t) context_len + i]
                                                    : shard.shuffled_targets[i];
    }
    Rng rng(seed);
    rng.shuffle(targets);

    TokenShard out = shard;
    out.corrupted = true;
    out.shuffled_targets = std::move(targets);
    return out;
}

std::vector<std::vector<Sample>> batches(const TokenShard & shard, int context_len, int seq_len,
                                         int batch_size, uint64_t seed) {
    const size_t n = shard.tokens.size();
    if (context_len < 1) {
        throw std::invalid_argument("batches: context_len must be >= 1");
    }
    if (seq_len < context_len + 1) {
        throw std::invalid_argument("batches: seq_len must cover one context window plus a target");
    }
    if (batch_size < 1) {
        throw std::invalid_argument("batches: batch_size must be >= 1");
    }
    if (n < (size_t) context_len + 1) {
        throw std::invalid_argument("batches: shard too short for one example");
    }
    if (!shard.shuffled_targets.empty() && shard.shuffled_targets.size() != n - (size_t) context_len) {
        throw std::invalid_argument("batches: target override length mismatch");
    }

    const size_t total = n - (size_t) context_len;
    std::vector<size_t> order(total);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed);
    rng.shuffle(order);

    std::vector<std::vector<Sample>> out;
    out.reserve((total + (size_t) batch_size - 1) / (size_t) batch_size);
    for (size_t i = 0; i < total; i += (size_t) batch_size) {
        std::vector<Sample> batch;
        batch.reserve(std::min((size_t) batch_size, total - i));
        for (size_t j = i; j < std::min(i + (size_t) batch_size, total); ++j) {
            const size_t idx = order[j]; // target position = context_len + idx
            Sample s;
            s.context.assign(shard.tokens.begin() + (ptrdiff_t) idx,
                             shard.tokens.begin() + (ptrdiff_t) (idx + (size_t) context_len));
            s.target = shard.shuffled_targets.empty() ? shard.tokens[idx + (size_t) context_len]
                                                      : shard.shuffled_targets[idx];
            batch.push_back(std::move(s));
        }
        out.push_back(std::move(batch));
    }
    return out;
}

std::string shard_manifest_json(const std::vector<TokenShard> & shards) {
    nlohmann::json arr = nlohmann::json::array();
    for (const TokenShard & s : shards) {
        arr.push_back({
            {"client_id", s.client_id},
            {"start", s.start},
            {"length", s.tokens.size()},
            {"corrupted", s.corrupted},
        });
    }
    return arr.dump();
}

} // namespace fedsim
