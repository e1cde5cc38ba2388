#include "simulation.hpp"

#include "rng.hpp"
#include "scoring.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <ostream>
#include <set>
#include <stdexcept>
#include <unordered_map>

namespace fedsim {

using nlohmann::json;

Scenario parse_scenario(std::string_view name) {
    if (name == "from_scratch") {
        return Scenario::from_scratch;
    }
    if (name == "finetune") {
        return Scenario::finetune;
    }
    if (name == "attack") {
        return Scenario::attack;
    }
    throw std::invalid_argument("unknown scenario '" + std::string(name) + "'");
}

std::string_view scenario_name(Scenario s) {
    switch (s) {
        case Scenario::from_scratch: return "from_scratch";
        case Scenario::finetune: return "finetune";
        case Scenario::attack: return "attack";
    }
    throw std::invalid_argument("unknown scenario");
}

static AggregationKind parse_aggregation(std::string_view name) {
    if (name == "plain") {
        return AggregationKind::plain;
    }
    if (name == "proximal") {
        return AggregationKind::proximal;
    }
    throw std::invalid_argument("unknown aggregation '" + std::string(name) + "'");
}

static PlateauMetric parse_plateau_metric(std::string_view name) {
    if (name == "nll") {
        return PlateauMetric::nll;
    }
    if (name == "perplexity") {
        return PlateauMetric::perplexity;
    }
    throw std::invalid_argument("unknown plateau metric '" + std::string(name) + "'");
}

void SimConfig::validate() const {
    if (corpus_path.empty()) {
        throw std::invalid_argument("config: corpus_path is required");
    }
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
        throw std::invalid_argument("config: test_fraction must be in (0, 1)");
    }
    if (arch.embed_dim < 1 || arch.context_len < 1 || arch.hidden_dim < 1 || arch.num_blocks < 1) {
        throw std::invalid_argument("config: arch dimensions must be >= 1");
    }
    if (clients < 1) {
        throw std::invalid_argument("config: need at least one client");
    }
    if (!(participation_rate > 0.0 && participation_rate <= 1.0) ||
        !(finetune_participation > 0.0 && finetune_participation <= 1.0)) {
        throw std::invalid_argument("config: participation rates must be in (0, 1]");
    }
    if (!(mu >= 0.0) || !std::isfinite(mu)) {
        throw std::invalid_argument("config: mu must be >= 0");
    }
    if (!std::isfinite(eta) || eta < 0.0) {
        throw std::invalid_argument("config: eta must be >= 0");
    }
    if (local_epochs < 0) {
        throw std::invalid_argument("config: local_epochs must be >= 0");
    }
    if (batch_size < 1) {
        throw std::invalid_argument("config: batch_size must be >= 1");
    }
    if (seq_len < (int) arch.context_len + 1) {
        throw std::invalid_argument("config: seq_len must cover one context window plus a target");
    }
    if (rounds < 1) {
        throw std::invalid_argument("config: rounds must be >= 1");
    }
    if (pretrain_rounds < 0) {
        throw std::invalid_argument("config: pretrain_rounds must be >= 0");
    }
    if (!(portion > 0.0 && portion <= 1.0)) {
        throw std::invalid_argument("config: portion must be in (0, 1]");
    }
    if (!(noisy_fraction >= 0.0 && noisy_fraction < 1.0)) {
        throw std::invalid_argument("config: noisy_fraction must be in [0, 1)");
    }
    if (scenario == Scenario::from_scratch && portion_schedule) {
        throw std::invalid_argument("config: the portion schedule only applies to finetune/attack scenarios");
    }
    if (scenario == Scenario::from_scratch && noisy_fraction > 0.0) {
        throw std::invalid_argument("config: noisy clients only apply to the attack scenario");
    }
}

SimConfig SimConfig::from_json_text(const std::string & text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception & e) {
        throw std::invalid_argument(std::string("config: invalid JSON: ") + e.what());
    }

    static const std::set<std::string> known = {
        "corpus_path", "test_fraction", "arch", "clients", "participation_rate",
        "finetune_participation", "strategy", "aggregation", "mu", "eta", "local_epochs",
        "batch_size", "seq_len", "rounds", "pretrain_rounds", "portion", "portion_schedule",
        "plateau_metric", "scenario", "noisy_fraction", "seeds", "out_dir", "score_dump_path",
    };
    for (const auto & [key, value] : j.items()) {
        (void) value;
        if (!known.count(key)) {
            throw std::invalid_argument("config: unknown key '" + key + "'");
        }
    }

    SimConfig cfg;
    try {
        cfg.corpus_path = j.at("corpus_path").get<std::string>();
        if (j.contains("test_fraction")) cfg.test_fraction = j["test_fraction"].get<double>();
        if (j.contains("arch")) {
            const json & a = j["arch"];
            if (a.contains("embed_dim")) cfg.arch.embed_dim = a["embed_dim"].get<int64_t>();
            if (a.contains("context_len")) cfg.arch.context_len = a["context_len"].get<int64_t>();
            if (a.contains("hidden_dim")) cfg.arch.hidden_dim = a["hidden_dim"].get<int64_t>();
            if (a.contains("num_blocks")) cfg.arch.num_blocks = a["num_blocks"].get<int64_t>();
        }
        if (j.contains("clients")) cfg.clients = j["clients"].get<int>();
        if (j.contains("participation_rate")) cfg.participation_rate = j["participation_rate"].get<double>();
        if (j.contains("finetune_participation")) {
            cfg.finetune_participation = j["finetune_participation"].get<double>();
        }
        if (j.contains("strategy")) cfg.strategy = parse_strategy(j["strategy"].get<std::string>());
        if (j.contains("aggregation")) cfg.aggregation = parse_aggregation(j["aggregation"].get<std::string>());
        if (j.contains("mu")) cfg.mu = j["mu"].get<double>();
        if (j.contains("eta")) cfg.eta = j["eta"].get<double>();
        if (j.contains("local_epochs")) cfg.local_epochs = j["local_epochs"].get<int>();
        if (j.contains("batch_size")) cfg.batch_size = j["batch_size"].get<int>();
        if (j.contains("seq_len")) cfg.seq_len = j["seq_len"].get<int>();
        if (j.contains("rounds")) cfg.rounds = j["rounds"].get<int>();
        if (j.contains("pretrain_rounds")) cfg.pretrain_rounds = j["pretrain_rounds"].get<int>();
        if (j.contains("portion")) cfg.portion = j["portion"].get<double>();
        if (j.contains("scenario")) cfg.scenario = parse_scenario(j["scenario"].get<std::string>());
        cfg.portion_schedule = cfg.scenario != Scenario::from_scratch;
        if (j.contains("portion_schedule")) cfg.portion_schedule = j["portion_schedule"].get<bool>();
        if (j.contains("plateau_metric")) {
            cfg.plateau_metric = parse_plateau_metric(j["plateau_metric"].get<std::string>());
        }
        if (j.contains("noisy_fraction")) cfg.noisy_fraction = j["noisy_fraction"].get<double>();
        if (j.contains("seeds")) {
            const json & s = j["seeds"];
            if (s.contains("experiment")) cfg.seeds.experiment = s["experiment"].get<uint64_t>();
            if (s.contains("data")) cfg.seeds.data = s["data"].get<uint64_t>();
            if (s.contains("corruption")) cfg.seeds.corruption = s["corruption"].get<uint64_t>();
        }
        if (j.contains("out_dir")) cfg.out_dir = j["out_dir"].get<std::string>();
        if (j.contains("score_dump_path")) cfg.score_dump_path = j["score_dump_path"].get<std::string>();
    } catch (const json::exception & e) {
        throw std::invalid_argument(std::string("config: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

SimConfig SimConfig::load(const std::string & path) {
    std::ifstream in(path);
    if (!in) {
        throw std::invalid_argument("config: cannot open '" + path + "'");
    }
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return from_json_text(text);
}

std::string SimConfig::to_json_text() const {
    json j = {
        {"corpus_path", corpus_path},
        {"test_fraction", test_fraction},
        {"arch",
         {{"embed_dim", arch.embed_dim},
          {"context_len", arch.context_len},
          {"hidden_dim", arch.hidden_dim},
          {"num_blocks", arch.num_blocks}}},
        {"clients", clients},
        {"participation_rate", participation_rate},
        {"finetune_participation", finetune_participation},
        {"strategy", std::string(strategy_name(strategy))},
        {"aggregation", aggregation == AggregationKind::plain ? "plain" : "proximal"},
        {"mu", mu},
        {"eta", eta},
        {"local_epochs", local_epochs},
        {"batch_size", batch_size},
        {"seq_len", seq_len},
        {"rounds", rounds},
        {"pretrain_rounds", pretrain_rounds},
        {"portion", portion},
        {"portion_schedule", portion_schedule},
        {"plateau_metric", plateau_metric == PlateauMetric::nll ? "nll" : "perplexity"},
        {"scenario", std::string(scenario_name(scenario))},
        {"noisy_fraction", noisy_fraction},
        {"seeds",
         {{"experiment", seeds.experiment}, {"data", seeds.data}, {"corruption", seeds.corruption}}},
        {"out_dir", out_dir},
        {"score_dump_path", score_dump_path},
    };
    return j.dump(2);
}

SimData prepare_data(const SimConfig & cfg) {
    cfg.validate();
    Corpus corpus = [&] {
        try {
            return load_corpus(cfg.corpus_path, cfg.test_fraction);
        } catch (const std::runtime_error & e) {
            // a missing or empty corpus is a configuration problem
            throw std::invalid_argument(e.what());
        }
    }();
    SimData data;
    data.vocab = std::move(corpus.vocab);
    data.split = std::move(corpus.split);
    data.shards = partition(data.split.train_tokens, cfg.clients, cfg.seeds.data);
    for (const TokenShard & s : data.shards) {
        if (s.tokens.size() < (size_t) cfg.arch.context_len + 1) {
            throw std::invalid_argument("config: shard of client " + std::to_string(s.client_id) +
                                        " cannot form one training example");
        }
    }
    if (data.split.test_tokens.size() < (size_t) cfg.arch.context_len + 1) {
        throw std::invalid_argument("config: test split too short to evaluate");
    }
    return data;
}

static void dump_scores(std::ostream & out, int round, const ModelState & before,
                        const ModelState & aggre, const UpdatePlan & plan) {
    const std::vector<LayerScore> scores = score_layers(before, aggre);
    std::unordered_map<int, int> group_of;
    for (const BlockGroup & g : group_blocks(before)) {
        for (int id : g.block_ids) {
            group_of[id] = g.group_id;
        }
    }
    for (size_t i = 0; i < before.params.size(); ++i) {
        const ParamTensor & t = before.params[i];
        json line = {
            {"round", round},
            {"tensor_name", t.name},
            {"score", scores[i].score},
            {"selected", plan.selected_tensors.count(t.name) > 0},
        };
        line["block_id"] = t.block_id ? json(*t.block_id) : json(nullptr);
        line["group_id"] = t.block_id ? json(group_of.at(*t.block_id)) : json(nullptr);
        out << line.dump() << '\n';
    }
}

RoundOutput run_round(const ModelState & global, const std::vector<TokenShard> & shards,
                      const std::vector<token_id> & test_tokens, const SimConfig & cfg,
                      int round_index, UpdateStrategy strategy, double portion,
                      double participation, std::ostream * score_dump) {
    const int num_clients = (int) shards.size();
    const int sampled = std::min(num_clients, (int) std::ceil(participation * (double) num_clients));
    if (sampled < 1) {
        throw std::invalid_argument("run_round: participation selects no clients");
    }

    Rng sampler(derive_seed(cfg.seeds.experiment, seed_tag_sample, (uint64_t) round_index));
    const std::vector<int> participants = sampler.sample_without_replacement(num_clients, sampled);

    LocalUpdateConfig lu;
    lu.epochs = cfg.local_epochs;
    lu.eta = cfg.eta;
    lu.batch_size = cfg.batch_size;
    lu.seq_len = cfg.seq_len;
    lu.mu = cfg.aggregation == AggregationKind::proximal ? cfg.mu : 0.0;

    std::vector<ModelState> locals;
    std::vector<size_t> counts;
    locals.reserve(participants.size());
    counts.reserve(participants.size());
    for (int k : participants) {
        const uint64_t seed = derive_seed(cfg.seeds.experiment, seed_tag_local, (uint64_t) round_index, (uint64_t) k);
        locals.push_back(local_update(global, shards[(size_t) k], lu, seed));
        counts.push_back(shards[(size_t) k].tokens.size());
    }

    const ModelState aggre = aggregate(locals, client_weights(counts));
    const UpdatePlan plan = plan_update(strategy, global, aggre, portion,
                                        derive_seed(cfg.seeds.experiment, seed_tag_plan, (uint64_t) round_index));
    if (score_dump) {
        dump_scores(*score_dump, round_index, global, aggre, plan);
    }

    RoundOutput out{apply_update(global, aggre, plan), {}};

    RoundRecord & rec = out.record;
    rec.round = round_index;
    rec.strategy = strategy;
    rec.portion = plan.portion;
    rec.global_ppl = perplexity(out.model, test_tokens, cfg.seq_len);
    double local_sum = 0.0;
    for (const ModelState & lm : locals) {
        local_sum += perplexity(lm, test_tokens, cfg.seq_len);
    }
    rec.local_ppl = local_sum / (double) locals.size();
    rec.selected_block_ids = plan.selected_block_ids;
    rec.num_selected_tensors = (int) plan.selected_tensors.size();
    rec.participants = participants;
    return out;
}

PretrainOutput run_pretrain(const SimConfig & cfg, const SimData & data, std::ostream * score_dump) {
    ArchConfig arch = cfg.arch;
    arch.vocab_size = data.vocab.size();
    PretrainOutput out{init_model(arch, derive_seed(cfg.seeds.experiment, seed_tag_init)), {}};
    for (int t = 0; t < cfg.pretrain_rounds; ++t) {
        RoundOutput r = run_round(out.model, data.shards, data.split.test_tokens, cfg, t,
                                  UpdateStrategy::full, 1.0, cfg.participation_rate, score_dump);
        out.model = std::move(r.model);
        out.records.push_back(std::move(r.record));
    }
    return out;
}

ExperimentOutput run_finetune(const SimConfig & cfg, const SimData & data, const ModelState & pretrained,
                              std::ostream * score_dump) {
    const int ctx = (int) cfg.arch.context_len;

    std::vector<TokenShard> shards;
    shards.reserve(data.shards.size());
    for (const TokenShard & s : data.shards) {
        shards.push_back(halve_shard(s));
        if (shards.back().tokens.size() < (size_t) ctx + 1) {
            throw std::invalid_argument("finetune: halved shard of client " +
                                        std::to_string(s.client_id) + " cannot form one training example");
        }
    }

    if (cfg.scenario == Scenario::attack) {
        const int noisy = (int) std::floor(cfg.noisy_fraction * (double) cfg.clients);
        if (noisy > 0) {
            Rng picker(derive_seed(cfg.seeds.corruption, seed_tag_noisy));
            for (int id : picker.sample_without_replacement(cfg.clients, noisy)) {
                shards[(size_t) id] = shuffle_labels(shards[(size_t) id], ctx,
                                                     derive_seed(cfg.seeds.corruption, seed_tag_shuffle, (uint64_t) id));
            }
        }
    }

    ExperimentOutput out{{}, pretrained, {}};
    PortionSchedule schedule;
    for (int t = 0; t < cfg.rounds; ++t) {
        const double portion = cfg.portion_schedule ? schedule.current_portion : cfg.portion;
        RoundOutput r = run_round(out.final_model, shards, data.split.test_tokens, cfg,
                                  cfg.pretrain_rounds + t, cfg.strategy, portion,
                                  cfg.finetune_participation, score_dump);
        out.final_model = std::move(r.model);
        if (cfg.portion_schedule) {
            const double metric = cfg.plateau_metric == PlateauMetric::nll
                                      ? std::log(r.record.global_ppl)
                                      : r.record.global_ppl;
            schedule = advance_portion(schedule, metric);
        }
        out.records.push_back(std::move(r.record));
    }
    out.shards = std::move(shards);
    return out;
}

ExperimentOutput run_experiment(const SimConfig & cfg, const SimData & data) {
    std::ofstream dump_file;
    std::ostream * dump = nullptr;
    if (!cfg.score_dump_path.empty()) {
        dump_file.open(cfg.score_dump_path, std::ios::trunc);
        if (!dump_file) {
            throw std::runtime_error("cannot open score dump file: " + cfg.score_dump_path);
        }
        dump = &dump_file;
    }

    if (cfg.scenario == Scenario::from_scratch) {
        ArchConfig arch = cfg.arch;
        arch.vocab_size = data.vocab.size();
        ExperimentOutput out{{}, init_model(arch, derive_seed(cfg.seeds.experiment, seed_tag_init)), data.shards};
        for (int t = 0; t < cfg.rounds; ++t) {
            RoundOutput r = run_round(out.final_model, data.shards, data.split.test_tokens, cfg, t,
                                      cfg.strategy, cfg.portion, cfg.participation_rate, dump);
            out.final_model = std::move(r.model);
            out.records.push_back(std::move(r.record));
        }
        return out;
    }

    PretrainOutput pre = run_pretrain(cfg, data, dump);
    ExperimentOutput out = run_finetune(cfg, data, pre.model, dump);
    out.records.insert(out.records.begin(), std::make_move_iterator(pre.records.begin()),
                       std::make_move_iterator(pre.records.end()));
    return out;
}

ExperimentOutput run_experiment(const SimConfig & cfg) {
    const SimData data = prepare_data(cfg);
    return run_experiment(cfg, data);
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

static std::string join_ints(const std::vector<int> & v) {
    std::string out;
    for (size_t i = 0; i < v.size(); ++i) {
        if (i) {
            out += ';';
        }
        out += std::to_string(v[i]);
    }
    return out;
}

std::string report_csv(const std::vector<RoundRecord> & records) {
    if (records.empty()) {
        throw std::invalid_argument("report: no records");
    }
    std::string out = "round,strategy,portion,global_ppl,local_ppl,num_selected_tensors,"
                      "selected_block_ids,participants\n";
    for (const RoundRecord & r : records) {
        out += std::to_string(r.round);
        out += ',';
        out += strategy_name(r.strategy);
        out += ',';
        out += format_double(r.portion);
        out += ',';
        out += format_double(r.global_ppl);
        out += ',';
        out += format_double(r.local_ppl);
        out += ',';
        out += std::to_string(r.num_selected_tensors);
        out += ',';
        out += join_ints(r.selected_block_ids);
        out += ',';
        out += join_ints(r.participants);
        out += '\n';
    }
    return out;
}

void write_report(const std::vector<RoundRecord> & records, const std::string & path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw std::runtime_error("cannot open report file: " + path);
    }
    out << report_csv(records);
    if (!out) {
        throw std::runtime_error("report write failed: " + path);
    }
}

RunSummary summarize(const std::vector<RoundRecord> & records, int skip_rounds) {
    RunSummary s;
    bool any = false;
    for (const RoundRecord & r : records) {
        if (r.round < skip_rounds) {
            continue;
        }
        if (!any || r.global_ppl < s.min_global_ppl) {
            s.min_global_ppl = r.global_ppl;
        }
        if (!any || r.local_ppl < s.min_local_ppl) {
            s.min_local_ppl = r.local_ppl;
        }
        any = true;
    }
    if (!any) {
        throw std::invalid_argument("summarize: no records in range");
    }
    return s;
}

} // namespace fedsim
