#pragma once

#include "tensor.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace fedsim {

// Character-level vocabulary over the corpus bytes. Ids are assigned by
// ascending byte value, so encode/decode round-trips exactly.
struct Vocab {
    std::vector<unsigned char> symbols;     // ascending, distinct
    std::array<int32_t, 256> id_of_byte{};  // -1 where the byte never occurs

    int32_t size() const { return (int32_t) symbols.size(); }
    token_id encode(unsigned char c) const;
    unsigned char decode(token_id id) const;
};

// One client's slice of the training stream. start/length index into the
// train token stream for the audit manifest. When the shard has been label
// shuffled, shuffled_targets[i] replaces tokens[context_len + i] as the
// training target while contexts stay untouched.
struct TokenShard {
    int client_id = 0;
    size_t start = 0;
    std::vector<token_id> tokens;
    bool corrupted = false;
    std::vector<token_id> shuffled_targets; // empty for clean shards
};

struct CorpusSplit {
    std::vector<token_id> train_tokens;
    std::vector<token_id> test_tokens;
};

struct Corpus {
    Vocab vocab;
    CorpusSplit split;
};

// One training example: the context_len most recent tokens plus the target.
struct Sample {
    std::vector<token_id> context;
    token_id target = 0;
};

// Reads a UTF-8 text file byte-wise, builds the vocab from the distinct bytes
// and holds out the last ceil(test_fraction * N) tokens as the test split.
Corpus load_corpus(const std::string & path, double test_fraction);

Corpus corpus_from_text(const std::string & text, double test_fraction);

// Contiguous, non-overlapping shards starting at offset 0, one per client in
// client order. Each shard's token count is drawn uniformly from
// [floor(N/K)/2, floor(N/K)] with the seeded generator, so the assignment
// always fits in N.
std::vector<TokenShard> partition(const std::vector<token_id> & train_tokens, int num_clients, uint64_t seed);

// Deterministic core of partition once the counts are fixed.
std::vector<TokenShard> partition_with_counts(const std::vector<token_id> & train_tokens,
                                              const std::vector<size_t> & counts);

// Keeps the first floor(n/2) tokens; client id, start and corruption carry over.
TokenShard halve_shard(const TokenShard & shard);

// Replaces the shard's training targets with a seeded permutation of them.
// The multiset of targets and the token stream itself are preserved.
TokenShard shuffle_labels(const TokenShard & shard, int context_len, uint64_t seed);

// Every position with a full context window becomes one example; the example
// order is shuffled by the seeded generator and grouped into batches of
// batch_size (the final batch may be short). Windows of seq_len overlap by
// context_len, so the example set is exactly shard_length - context_len.
std::vector<std::vector<Sample>> batches(const TokenShard & shard, int context_len, int seq_len,
                                         int batch_size, uint64_t seed);

// Audit manifest: [{"client_id", "start", "length", "corrupted"}, ...] as a
// JSON array string.
std::string shard_manifest_json(const std::vector<TokenShard> & shards);

} // namespace fedsim
