// Command-line front end: generate chemistries, run single trajectories,
// run seed ensembles, and compare CSTR vs protocell arms.
//
// Exit codes: 0 success, 1 configuration/validation error, 2 runtime error.

#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#include "crs/io.hpp"

namespace fs = std::filesystem;

namespace {

struct CommonArgs {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out;
    bool print_config = false;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "Path to the JSON config")->required();
    cmd->add_option("--seed", args.seed, "Override the config's seed list with one seed");
    cmd->add_option("--out", args.out, "Override the output directory (or file for gen-chem)");
    cmd->add_flag("--print-config", args.print_config,
                  "Echo the fully defaulted config to stdout and exit");
}

crs::RunConfig load_and_resolve(const CommonArgs& args) {
    crs::RunConfig cfg = crs::load_config(args.config_path);
    if (args.seed) cfg.seeds = {*args.seed};
    if (!args.out.empty()) cfg.out_dir = args.out;
    return cfg;
}

bool maybe_print_config(const CommonArgs& args, const crs::RunConfig& cfg) {
    if (!args.print_config) return false;
    std::cout << crs::run_config_to_json(cfg).dump(2) << "\n";
    return true;
}

crs::RunOptions run_options(const crs::RunConfig& cfg, std::uint64_t seed) {
    crs::RunOptions opt;
    opt.t_end = cfg.t_end;
    opt.dt_obs = cfg.dt_obs;
    opt.sim_seed = seed;
    opt.record_events = cfg.event_ledger;
    opt.record_species_samples = cfg.species_csv;
    return opt;
}

crs::EnsembleOptions ensemble_options(const crs::RunConfig& cfg) {
    crs::EnsembleOptions opt;
    opt.t_end = cfg.t_end;
    opt.dt_obs = cfg.dt_obs;
    return opt;
}

int cmd_gen_chem(const CommonArgs& args) {
    crs::RunConfig cfg = crs::load_config(args.config_path);
    if (maybe_print_config(args, cfg)) return 0;
    if (!cfg.chem_params)
        throw crs::ConfigError("gen-chem: config must carry inline 'chemistry' params");
    crs::Chemistry chem(*cfg.chem_params);
    fs::path out = args.out.empty() ? cfg.out_dir / "chemistry.json" : fs::path(args.out);
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    crs::save_chemistry(chem, out);
    std::cerr << "wrote " << out.string() << " (" << chem.catalyses().size()
              << " catalyses)\n";
    return 0;
}

int cmd_run(const CommonArgs& args) {
    crs::RunConfig cfg = load_and_resolve(args);
    if (maybe_print_config(args, cfg)) return 0;
    crs::Chemistry chem = cfg.realize_chemistry();
    std::uint64_t seed = cfg.seeds.front();
    crs::Trajectory traj =
        crs::run_simulation(chem, cfg.reactor, cfg.kinetics, cfg.init_counts,
                            run_options(cfg, seed));
    fs::create_directories(cfg.out_dir);
    crs::write_trajectory_csv(traj, cfg.out_dir / "trajectory.csv");
    if (cfg.species_csv)
        crs::atomic_write(cfg.out_dir / "species.csv", crs::species_csv(traj));

    crs::json summary;
    summary["format_version"] = crs::kFormatVersion;
    summary["seed"] = seed;
    summary["event_count"] = traj.event_count;
    summary["events_by_kind"] = std::map<std::string, std::uint64_t>(
        traj.events_by_kind.begin(), traj.events_by_kind.end());
    summary["final_mass"] = traj.observations.back().total_mass;
    summary["final_max_len"] = traj.observations.back().max_len;
    summary["final_richness"] = traj.observations.back().richness;
    summary["trapped_pool"] = traj.trapped_pool;
    summary["trapped_efflux_violations"] = traj.trapped_efflux_violations;
    crs::atomic_write(cfg.out_dir / "summary.json", summary.dump(2) + "\n");
    std::cerr << "wrote " << (cfg.out_dir / "trajectory.csv").string() << ", "
              << (cfg.out_dir / "summary.json").string() << "\n";
    return 0;
}

void write_per_run_csvs(const crs::EnsembleReport& report, const fs::path& dir,
                        const std::string& prefix) {
    for (const auto& run : report.runs)
        crs::atomic_write(dir / (prefix + "run_" + std::to_string(run.seed) + ".csv"),
                          crs::observations_csv(run.observations));
}

int cmd_ensemble(const CommonArgs& args) {
    crs::RunConfig cfg = load_and_resolve(args);
    if (maybe_print_config(args, cfg)) return 0;
    if (cfg.seeds.size() < 2)
        throw crs::ConfigError("ensemble: needs >= 2 seeds");
    crs::Chemistry chem = cfg.realize_chemistry();
    crs::EnsembleReport report = crs::ensemble_run(
        chem, cfg.reactor, cfg.kinetics, cfg.init_counts, ensemble_options(cfg), cfg.seeds);
    fs::create_directories(cfg.out_dir);
    crs::atomic_write(cfg.out_dir / "report.json",
                      crs::ensemble_report_to_json(report).dump(2) + "\n");
    write_per_run_csvs(report, cfg.out_dir, "");
    std::cerr << "wrote " << (cfg.out_dir / "report.json").string() << " and "
              << report.runs.size() << " per-run CSVs\n";
    return 0;
}

int cmd_compare(const CommonArgs& args) {
    crs::RunConfig cfg = load_and_resolve(args);
    if (maybe_print_config(args, cfg)) return 0;
    if (cfg.seeds.size() < 2)
        throw crs::ConfigError("compare: needs >= 2 seeds");
    if (!cfg.reactor_b)
        throw crs::ConfigError("compare: config needs 'reactor_b' for the second arm");
    crs::Chemistry chem = cfg.realize_chemistry();
    crs::ComparisonReport report = crs::compare_environments(
        chem, cfg.reactor, *cfg.reactor_b, cfg.kinetics, cfg.init_counts,
        ensemble_options(cfg), cfg.seeds);
    fs::create_directories(cfg.out_dir);
    crs::atomic_write(cfg.out_dir / "report.json",
                      crs::comparison_report_to_json(report).dump(2) + "\n");
    write_per_run_csvs(report.cstr, cfg.out_dir, "arm_a_");
    write_per_run_csvs(report.protocell, cfg.out_dir, "arm_b_");
    std::cerr << "wrote " << (cfg.out_dir / "report.json").string() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Stochastic simulator for catalytic reaction sets"};
    app.require_subcommand(1);

    CommonArgs gen_args, run_args, ens_args, cmp_args;
    CLI::App* gen = app.add_subcommand("gen-chem", "Generate and save a chemistry");
    add_common(gen, gen_args);
    CLI::App* run = app.add_subcommand("run", "Run one trajectory");
    add_common(run, run_args);
    CLI::App* ens = app.add_subcommand("ensemble", "Run one configuration across seeds");
    add_common(ens, ens_args);
    CLI::App* cmp = app.add_subcommand("compare", "Compare two reactor arms");
    add_common(cmp, cmp_args);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        std::ostringstream usage;
        int code = app.exit(e, usage, usage);
        std::cerr << usage.str();
        return code == 0 ? 0 : 1;
    }

    try {
        if (gen->parsed()) return cmd_gen_chem(gen_args);
        if (run->parsed()) return cmd_run(run_args);
        if (ens->parsed()) return cmd_ensemble(ens_args);
        if (cmp->parsed()) return cmd_compare(cmp_args);
        return 1;
    } catch (const crs::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "runtime error: " << e.what() << "\n";
        return 2;
    }
}
