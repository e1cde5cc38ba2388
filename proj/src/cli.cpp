#include "cli.hpp"

#include "rng.hpp"
#include "simulation.hpp"
#include "theory.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

namespace fedsim {

using nlohmann::json;

namespace {

std::string resolve_out_dir(const std::string & cli_value, const std::string & config_value) {
    if (!cli_value.empty()) {
        return cli_value;
    }
    if (const char * env = std::getenv("FEDSIM_OUT_DIR"); env && *env) {
        return env;
    }
    return config_value;
}

std::vector<double> parse_grid(const std::string & csv) {
    std::vector<double> grid;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) {
            grid.push_back(std::stod(item));
        }
    }
    return grid;
}

std::vector<std::string> parse_names(const std::string & csv) {
    std::vector<std::string> names;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) {
            names.push_back(item);
        }
    }
    return names;
}

int cmd_run(const std::string & config_path, const std::string & strategy_override,
            std::optional<uint64_t> seed_override, const std::string & out_override) {
    SimConfig cfg = SimConfig::load(config_path);
    if (!strategy_override.empty()) {
        cfg.strategy = parse_strategy(strategy_override);
    }
    if (seed_override) {
        cfg.seeds.experiment = *seed_override;
    }
    cfg.out_dir = resolve_out_dir(out_override, cfg.out_dir);
    cfg.validate();

    std::filesystem::create_directories(cfg.out_dir);
    const ExperimentOutput out = run_experiment(cfg);

    const std::string base = std::string(strategy_name(cfg.strategy)) + "_seed" +
                             std::to_string(cfg.seeds.experiment);
    const std::string path = (std::filesystem::path(cfg.out_dir) / (base + ".csv")).string();
    write_report(out.records, path);

    // audit manifest of the shard state the run trained on
    std::ofstream shards_out(std::filesystem::path(cfg.out_dir) / (base + "_shards.json"));
    shards_out << shard_manifest_json(out.shards) << '\n';

    const int skip = cfg.scenario == Scenario::from_scratch ? 0 : cfg.pretrain_rounds;
    const RunSummary s = summarize(out.records, skip);
    std::cout << "wrote " << path << "\n"
              << "min_global_ppl=" << format_double(s.min_global_ppl)
              << " min_local_ppl=" << format_double(s.min_local_ppl) << "\n";
    return 0;
}

int cmd_theory_check(int problems, int dim, int layers, uint64_t seed,
                     const std::string & grid_csv, const std::string & out_path) {
    if (problems < 1 || dim < 2 || layers < 2 || dim < layers) {
        throw std::invalid_argument("theory-check: need problems >= 1 and dim >= layers >= 2");
    }
    const std::vector<double> eta_l_grid = parse_grid(grid_csv);
    if (eta_l_grid.empty()) {
        throw std::invalid_argument("theory-check: empty eta grid");
    }

    json reports = json::array();
    int bound_failures = 0;
    int sign_failures = 0;

    for (int i = 0; i < problems; ++i) {
        const QuadraticProblem p = make_quadratic(dim, layers, derive_seed(seed, "problem", (uint64_t) i));
        const double lip = lipschitz(p);

        Rng rng(derive_seed(seed, "point", (uint64_t) i));
        std::vector<double> w((size_t) dim);
        for (double & v : w) {
            v = rng.uniform(-2.0, 2.0);
        }
        // one proper, non-empty subset of layers per problem
        const int subset_size = 1 + (int) rng.below((uint64_t) (layers - 1));
        const std::vector<int> subset = rng.sample_without_replacement(layers, subset_size);

        std::vector<double> eta_grid;
        eta_grid.reserve(eta_l_grid.size());
        for (double x : eta_l_grid) {
            eta_grid.push_back(x / lip);
        }

        const std::vector<BoundReport> scan = crossover_scan(p, w, subset, eta_grid);
        for (size_t g = 0; g < scan.size(); ++g) {
            const BoundReport & r = scan[g];
            const double eta_l = eta_l_grid[g];

            if (eta_l < 2.0 - 1e-9 && !(r.full_holds && r.subset_holds)) {
                ++bound_failures;
            }
            if (r.delta > 0.0) {
                if (eta_l < 2.0 - 1e-9 && !(r.crossover_term < 0.0)) {
                    ++sign_failures;
                } else if (std::abs(eta_l - 2.0) <= 1e-9 &&
                           std::abs(r.crossover_term) > 1e-12 * std::max(1.0, r.eta * r.delta)) {
                    ++sign_failures;
                } else if (eta_l > 2.0 + 1e-9 && !(r.crossover_term > 0.0)) {
                    ++sign_failures;
                }
            }

            json entry = json::parse(bound_report_json(r));
            entry["problem"] = i;
            entry["eta_l"] = eta_l;
            entry["subset"] = subset;
            reports.push_back(std::move(entry));
        }
    }

    const bool pass = bound_failures == 0 && sign_failures == 0;
    const json doc = {
        {"problems", problems},
        {"dim", dim},
        {"layers", layers},
        {"eta_l_grid", eta_l_grid},
        {"reports", reports},
        {"bound_failures", bound_failures},
        {"sign_failures", sign_failures},
        {"pass", pass},
    };
    if (!out_path.empty()) {
        std::ofstream out(out_path, std::ios::trunc);
        if (!out) {
            throw std::runtime_error("cannot open output file: " + out_path);
        }
        out << doc.dump(2) << '\n';
    }

    std::cout << (pass ? "theory-check: PASS" : "theory-check: FAIL") << " (" << reports.size()
              << " reports, " << bound_failures << " bound failures, " << sign_failures
              << " sign failures)\n";
    return pass ? 0 : 2;
}

int cmd_compare(const std::string & config_path, const std::string & strategies_csv, int num_seeds,
                const std::string & out_override, bool vary_data_seed) {
    SimConfig base = SimConfig::load(config_path);
    base.out_dir = resolve_out_dir(out_override, base.out_dir);
    if (num_seeds < 1) {
        throw std::invalid_argument("compare: --seeds must be >= 1");
    }
    std::vector<UpdateStrategy> strategies;
    for (const std::string & name : parse_names(strategies_csv)) {
        strategies.push_back(parse_strategy(name));
    }
    if (strategies.empty()) {
        throw std::invalid_argument("compare: no strategies given");
    }

    std::filesystem::create_directories(base.out_dir);
    const int skip = base.scenario == Scenario::from_scratch ? 0 : base.pretrain_rounds;

    // Shards are shared across strategies (and across seeds unless the data
    // seed varies), so every strategy faces identical client data.
    std::map<uint64_t, SimData> data_cache;
    json summary_strategies = json::object();

    for (UpdateStrategy strategy : strategies) {
        json per_seed = json::array();
        double mean_global = 0.0;
        double mean_local = 0.0;
        for (int i = 0; i < num_seeds; ++i) {
            SimConfig cfg = base;
            cfg.strategy = strategy;
            cfg.seeds.experiment = base.seeds.experiment + (uint64_t) i;
            if (vary_data_seed) {
                cfg.seeds.data = base.seeds.data + (uint64_t) i;
            }
            auto [it, inserted] = data_cache.try_emplace(cfg.seeds.data);
            if (inserted) {
                it->second = prepare_data(cfg);
            }

            const ExperimentOutput out = run_experiment(cfg, it->second);
            const std::string name = std::string(strategy_name(strategy)) + "_seed" +
                                     std::to_string(cfg.seeds.experiment) + ".csv";
            write_report(out.records, (std::filesystem::path(base.out_dir) / name).string());

            const RunSummary s = summarize(out.records, skip);
            mean_global += s.min_global_ppl;
            mean_local += s.min_local_ppl;
            per_seed.push_back({{"experiment_seed", cfg.seeds.experiment},
                                {"data_seed", cfg.seeds.data},
                                {"min_global_ppl", s.min_global_ppl},
                                {"min_local_ppl", s.min_local_ppl}});
        }
        mean_global /= (double) num_seeds;
        mean_local /= (double) num_seeds;
        summary_strategies[std::string(strategy_name(strategy))] = {
            {"per_seed", per_seed},
            {"mean_min_global_ppl", mean_global},
            {"mean_min_local_ppl", mean_local},
        };
        std::cout << strategy_name(strategy) << ": mean_min_global_ppl=" << format_double(mean_global)
                  << " mean_min_local_ppl=" << format_double(mean_local) << "\n";
    }

    const json doc = {
        {"config", json::parse(base.to_json_text())},
        {"num_seeds", num_seeds},
        {"vary_data_seed", vary_data_seed},
        {"skip_rounds", skip},
        {"strategies", summary_strategies},
    };
    const std::string summary_path = (std::filesystem::path(base.out_dir) / "summary.json").string();
    std::ofstream out(summary_path, std::ios::trunc);
    if (!out) {
        throw std::runtime_error("cannot open output file: " + summary_path);
    }
    out << doc.dump(2) << '\n';
    std::cout << "wrote " << summary_path << "\n";
    return 0;
}

} // namespace

int run_cli(const std::vector<std::string> & args) {
    CLI::App app{"deterministic federated-learning simulator with targeted layer updates"};
    app.require_subcommand(1);

    std::string run_config;
    std::string run_strategy;
    std::optional<uint64_t> run_seed;
    std::string run_out;
    CLI::App * run = app.add_subcommand("run", "run one experiment from a JSON config");
    run->add_option("--config", run_config, "config file")->required();
    run->add_option("--strategy", run_strategy, "override the update strategy (full|fedtlu|random|last)");
    run->add_option("--seed", run_seed, "override the experiment seed");
    run->add_option("--out", run_out, "output directory");

    int tc_problems = 50;
    int tc_dim = 6;
    int tc_layers = 3;
    uint64_t tc_seed = 1;
    std::string tc_grid = "0.1,0.5,1.0,1.9,2.0,2.5";
    std::string tc_out;
    CLI::App * tc = app.add_subcommand("theory-check", "verify the loss-reduction bounds on seeded quadratics");
    tc->add_option("--problems", tc_problems, "number of seeded problems");
    tc->add_option("--dim", tc_dim, "problem dimension");
    tc->add_option("--layers", tc_layers, "number of coordinate layers");
    tc->add_option("--seed", tc_seed, "base seed");
    tc->add_option("--eta-grid", tc_grid, "comma-separated eta*L values");
    tc->add_option("--out", tc_out, "JSON report path")->required();

    std::string cmp_config;
    std::string cmp_strategies = "full,fedtlu,random,last";
    int cmp_seeds = 3;
    std::string cmp_out;
    bool cmp_vary_data = false;
    CLI::App * cmp = app.add_subcommand("compare", "run a strategy/seed matrix and summarize minima");
    cmp->add_option("--config", cmp_config, "config file")->required();
    cmp->add_option("--strategies", cmp_strategies, "comma-separated strategies");
    cmp->add_option("--seeds", cmp_seeds, "number of experiment seeds");
    cmp->add_option("--out", cmp_out, "output directory");
    cmp->add_flag("--vary-data-seed", cmp_vary_data, "also vary the data seed per run");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::Success & e) {
        return app.exit(e); // --help and friends
    } catch (const CLI::ParseError & e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }

    try {
        if (run->parsed()) {
            return cmd_run(run_config, run_strategy, run_seed, run_out);
        }
        if (tc->parsed()) {
            return cmd_theory_check(tc_problems, tc_dim, tc_layers, tc_seed, tc_grid, tc_out);
        }
        if (cmp->parsed()) {
            return cmd_compare(cmp_config, cmp_strategies, cmp_seeds, cmp_out, cmp_vary_data);
        }
    } catch (const std::invalid_argument & e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception & e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}

} // namespace fedsim
