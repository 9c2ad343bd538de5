#include "mobiseg/common.hpp"
#include "mobiseg/config.hpp"
#include "mobiseg/pipeline.hpp"
#include "mobiseg/stays.hpp"
#include "mobiseg/synthworld.hpp"
#include "mobiseg/transit.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace mobiseg;

namespace {

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> workers;
    std::string out;
    bool quiet = false;
};

void add_common(CLI::App* app, Common& c, bool config_required)
{
    auto* opt = app->add_option("--config", c.config, "Pipeline configuration (TOML)");
    if (config_required)
        opt->required();
    app->add_option("--seed", c.seed, "Master seed for stochastic stages");
    app->add_option("--workers", c.workers, "Worker threads (results do not depend on this)");
    app->add_option("--out", c.out, "Output directory");
    app->add_flag("--quiet", c.quiet, "Suppress warnings");
}

Config load_config(const Common& c)
{
    Config config = c.config.empty() ? Config() : Config::load(c.config);
    if (c.seed)
        config.set("pipeline.seed", static_cast<std::int64_t>(*c.seed));
    if (c.workers)
        config.set("pipeline.workers", static_cast<std::int64_t>(*c.workers));
    if (!c.out.empty())
        config.set("pipeline.out", fs::absolute(c.out).lexically_normal().string());
    return config;
}

std::string base_dir(const Common& c)
{
    return c.config.empty() ? std::string(".") : fs::path(c.config).parent_path().string();
}

void print(const StageReport& r)
{
    std::printf("%-13s %s", to_string(r.stage).c_str(), r.cached ? "cached" : "done");
    if (!r.cached)
        std::printf(" in %.1f s", r.seconds);
    std::printf("\n");
    for (const auto& n : r.notes)
        std::printf("  %s\n", n.c_str());
    std::fflush(stdout);
}

int run_stages(const Common& c, const std::vector<Stage>& stages, Config config)
{
    Pipeline pipeline(PipelineConfig::from_config(config, base_dir(c)));
    for (Stage s : all_stages())
        if (std::find(stages.begin(), stages.end(), s) != stages.end())
            print(pipeline.run(s));
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Experienced segregation from mobility traces"};
    app.require_subcommand(1);

    Common run_opts;
    std::vector<std::string> run_stage_names;
    auto* run = app.add_subcommand("run", "Run pipeline stages in dependency order with caching");
    add_common(run, run_opts, true);
    run->add_option("--stages", run_stage_names, "Stages to run (default: all)")->delimiter(',');

    std::vector<std::pair<Stage, CLI::App*>> stage_cmds;
    std::map<Stage, Common> stage_opts;
    for (Stage s : all_stages())
        stage_opts[s];

    // Standalone forms.
    std::string stays_input;
    std::string stays_params;
    double max_malformed = 0.1;
    std::string access_gtfs;
    std::string access_grids;
    std::optional<double> access_budget;
    std::string sim_kind;
    std::optional<int> sim_reps;

    for (Stage s : all_stages()) {
        auto* cmd = app.add_subcommand(to_string(s), "Run the " + to_string(s) + " stage");
        add_common(cmd, stage_opts[s], false);
        stage_cmds.emplace_back(s, cmd);
        if (s == Stage::detect_stays) {
            cmd->add_option("--input", stays_input, "Fixes CSV (standalone mode)");
            cmd->add_option("--params", stays_params, "Stay parameters (TOML with a [stays] table)");
            cmd->add_option("--max-malformed", max_malformed, "Tolerated share of malformed rows");
        }
        if (s == Stage::access) {
            cmd->add_option("--gtfs", access_gtfs, "GTFS directory (standalone mode)");
            cmd->add_option("--grids", access_grids, "Grid cells CSV");
            cmd->add_option("--budget", access_budget, "Travel-time budget in minutes");
        }
        if (s == Stage::simulate) {
            cmd->add_option("--kind", sim_kind, "residential-rand, no-pref or equalized");
            cmd->add_option("--reps", sim_reps, "Repetitions");
        }
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (run->parsed()) {
            set_quiet(run_opts.quiet);
            std::vector<Stage> stages;
            for (const auto& name : run_stage_names) {
                auto s = parse_stage(name);
                if (!s)
                    throw InputError("unknown stage '" + name + "'");
                stages.push_back(*s);
            }
            if (stages.empty())
                stages = all_stages();
            return run_stages(run_opts, stages, load_config(run_opts));
        }
        for (auto& [s, cmd] : stage_cmds) {
            if (!cmd->parsed())
                continue;
            Common& c = stage_opts[s];
            set_quiet(c.quiet);
            if (c.workers)
                set_workers(*c.workers);

            if (s == Stage::synth) {
                if (c.config.empty() || c.out.empty())
                    throw InputError("synth needs --config and --out");
                WorldConfig wc = WorldConfig::from_config(Config::load(c.config));
                if (c.seed)
                    wc.seed = *c.seed;
                const World world = gen_world(wc);
                const Trajectories traj = gen_trajectories(world, wc);
                write_world(world, traj, c.out);
                std::printf("%zu agents, %zu fixes written to %s\n", world.agents.size(), traj.fixes.fixes.size(),
                            c.out.c_str());
                return 0;
            }
            if (s == Stage::detect_stays && !stays_input.empty()) {
                if (c.out.empty())
                    throw InputError("detect-stays needs --out");
                const StayParams params =
                    stays_params.empty() ? StayParams{} : StayParams::from_config(Config::load(stays_params));
                const StaySet set = detect_stays(read_fixes(stays_input, max_malformed), params);
                write_stays(set, c.out);
                std::printf("%zu stays from %zu devices\n", set.stays.size(), set.device_ids.size());
                return 0;
            }
            if (s == Stage::access && !access_gtfs.empty()) {
                if (access_grids.empty() || c.out.empty())
                    throw InputError("access needs --gtfs, --grids and --out");
                TransitParams params = c.config.empty() ? TransitParams{}
                                                        : TransitParams::from_config(Config::load(c.config));
                if (access_budget)
                    params.budget_minutes = *access_budget;
                params.validate();
                const auto cells = read_grids(access_grids);
                const TransitNetwork net(read_gtfs(access_gtfs), cells, params);
                std::vector<int> which(cells.size());
                std::vector<double> values(cells.size());
                parallel_for(cells.size(), [&](std::size_t k) {
                    which[k] = static_cast<int>(k);
                    values[k] = net.accessibility(static_cast<int>(k), params.budget_minutes);
                });
                write_access(cells, which, values, c.out);
                std::printf("%zu cells\n", cells.size());
                return 0;
            }
            if (c.config.empty())
                throw InputError(to_string(s) + " needs --config");
            Config config = load_config(c);
            Stage target = s;
            if (s == Stage::simulate && !sim_kind.empty()) {
                const SimKind kind = parse_sim_kind(sim_kind);
                if (kind == SimKind::residential_rand) {
                    target = Stage::classify;
                    config.set("segregation.thresholds", std::string("derive"));
                    if (sim_reps)
                        config.set("simulate.residential_reps", static_cast<std::int64_t>(*sim_reps));
                } else {
                    config.set("simulate.kinds", std::vector<ConfigScalar>{ConfigScalar{sim_kind}});
                    if (sim_reps)
                        config.set(kind == SimKind::no_pref ? "simulate.no_pref_reps" : "simulate.equalized_reps",
                                   static_cast<std::int64_t>(*sim_reps));
                }
            }
            return run_stages(c, {target}, std::move(config));
        }
    } catch (const InputError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const InvariantError& e) {
        std::fprintf(stderr, "internal error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "internal error: %s\n", e.what());
        return 2;
    }
    return 0;
}
