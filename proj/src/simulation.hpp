#pragma once

#include "data.hpp"
#include "federation.hpp"
#include "model.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace fedsim {

enum class Scenario {
    from_scratch, // fixed portion, pretrain-style participation throughout
    finetune,     // full-update pretraining, then halved shards + decay schedule
    attack,       // finetune with a fraction of label-shuffled clients
};

enum class AggregationKind {
    plain,    // FedAvg: weighted average of plain SGD updates
    proximal, // FedProx: same average, local steps carry the mu proximal pull
};

enum class PlateauMetric { nll, perplexity };

Scenario parse_scenario(std::string_view name);
std::string_view scenario_name(Scenario s);

struct SeedBundle {
    uint64_t experiment = 1;
    uint64_t data = 42;
    uint64_t corruption = 7;
};

struct SimConfig {
    std::string corpus_path;
    double test_fraction = 0.02;
    ArchConfig arch; // vocab_size is filled from the corpus
    int clients = 20;
    double participation_rate = 0.10;
    double finetune_participation = 0.05;
    UpdateStrategy strategy = UpdateStrategy::fedtlu;
    AggregationKind aggregation = AggregationKind::plain;
    double mu = 0.1;
    double eta = 0.3;
    int local_epochs = 1;
    int batch_size = 16;
    int seq_len = 32;
    int rounds = 60;
    int pretrain_rounds = 0;
    double portion = 0.5;
    bool portion_schedule = false;
    PlateauMetric plateau_metric = PlateauMetric::nll;
    Scenario scenario = Scenario::from_scratch;
    double noisy_fraction = 0.0;
    SeedBundle seeds;
    std::string out_dir = "runs";
    std::string score_dump_path; // empty disables the per-round score dump

    void validate() const; // throws std::invalid_argument
    static SimConfig from_json_text(const std::string & text);
    static SimConfig load(const std::string & path);
    std::string to_json_text() const;
};

struct RoundRecord {
    int round = 0;
    UpdateStrategy strategy = UpdateStrategy::full;
    double portion = 1.0;
    double global_ppl = 0.0;
    double local_ppl = 0.0;
    std::vector<int> selected_block_ids;
    int num_selected_tensors = 0;
    std::vector<int> participants;
};

struct SimData {
    Vocab vocab;
    CorpusSplit split;
    std::vector<TokenShard> shards;
};

// Loads the corpus and partitions the training stream with the data seed.
SimData prepare_data(const SimConfig & cfg);

// Seed stream tags. All per-round randomness derives from
// derive_seed(experiment_seed, tag, round[, client]) and never depends on the
// strategy, so every strategy sees identical samples and batch orders.
inline constexpr std::string_view seed_tag_init = "init";
inline constexpr std::string_view seed_tag_sample = "sample";
inline constexpr std::string_view seed_tag_local = "local";
inline constexpr std::string_view seed_tag_plan = "plan";
inline constexpr std::string_view seed_tag_noisy = "noisy-clients";
inline constexpr std::string_view seed_tag_shuffle = "label-shuffle";

struct RoundOutput {
    ModelState model;
    RoundRecord record;
};

// One round of the training loop: sample ceil(participation * K) clients,
// run their local updates from the received global model, aggregate, score,
// plan, apply, and evaluate global/local perplexity on the test split.
RoundOutput run_round(const ModelState & global, const std::vector<TokenShard> & shards,
                      const std::vector<token_id> & test_tokens, const SimConfig & cfg,
                      int round_index, UpdateStrategy strategy, double portion,
                      double participation, std::ostream * score_dump = nullptr);

struct ExperimentOutput {
    std::vector<RoundRecord> records;
    ModelState final_model;
    std::vector<TokenShard> shards; // shard state of the last phase
};

struct PretrainOutput {
    ModelState model;
    std::vector<RoundRecord> records;
};

// Full-update pretraining phase (finetune/attack scenarios).
PretrainOutput run_pretrain(const SimConfig & cfg, const SimData & data, std::ostream * score_dump = nullptr);

// Fine-tuning phase: halves every shard, corrupts noisy clients in the attack
// scenario, then runs the configured strategy with the decay schedule.
// Records continue at round index pretrain_rounds.
ExperimentOutput run_finetune(const SimConfig & cfg, const SimData & data, const ModelState & pretrained,
                              std::ostream * score_dump = nullptr);

ExperimentOutput run_experiment(const SimConfig & cfg);
ExperimentOutput run_experiment(const SimConfig & cfg, const SimData & data);

// CSV columns: round, strategy, portion, global_ppl, local_ppl,
// num_selected_tensors, selected_block_ids, participants (lists ';'-joined).
void write_report(const std::vector<RoundRecord> & records, const std::string & path);
std::string report_csv(const std::vector<RoundRecord> & records);

struct RunSummary {
    double min_global_ppl = 0.0;
    double min_local_ppl = 0.0;
};

// Minimum perplexities over records with round >= skip_rounds (used to
// restrict finetune/attack summaries to the fine-tuning phase).
RunSummary summarize(const std::vector<RoundRecord> & records, int skip_rounds = 0);

// Round-trip exact formatting for doubles ("%.17g").
std::string format_double(double v);

} // namespace fedsim
