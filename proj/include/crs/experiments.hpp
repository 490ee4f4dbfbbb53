#pragma once

// Observables over state snapshots, the split-halves stationarity rule, and
// matched-ensemble runs comparing one chemistry in CSTR and protocell
// configurations.

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <map>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "crs/engine.hpp"
#include "crs/stats.hpp"

namespace crs {

// Entity length from a snapshot key: species keys are plain sequences,
// complex keys are "catalyst*bound".
inline std::int64_t entity_key_length(const std::string& key) {
    std::int64_t n = 0;
    for (char c : key)
        if (c != '*') ++n;
    return n;
}

inline bool is_complex_key(const std::string& key) {
    return key.find('*') != std::string::npos;
}

// Total bricks in a counts snapshot; complexes count by combined length.
inline std::int64_t total_mass(const std::unordered_map<std::string, std::int64_t>& counts) {
    std::int64_t m = 0;
    for (const auto& [key, n] : counts) m += n * entity_key_length(key);
    return m;
}

// Longest species with positive count; complexes excluded; 0 when empty.
inline std::int32_t max_species_length(
    const std::unordered_map<std::string, std::int64_t>& counts) {
    std::int32_t m = 0;
    for (const auto& [key, n] : counts)
        if (n > 0 && !is_complex_key(key))
            m = std::max(m, static_cast<std::int32_t>(key.size()));
    return m;
}

enum class Stationarity { Stationary, NonStationary };

// Split-halves drift test: discard the burn-in prefix, compare the means of
// the two halves of what remains.
inline Stationarity stationarity_check(const std::vector<double>& series,
                                       double burn_in_fraction = 0.25,
                                       double tol = 0.05) {
    auto burn = static_cast<std::size_t>(
        std::floor(burn_in_fraction * static_cast<double>(series.size())));
    if (series.size() < burn + 4)
        throw std::invalid_argument("stationarity_check: series too short");
    std::vector<double> rest(series.begin() + static_cast<std::ptrdiff_t>(burn),
                             series.end());
    std::size_t half = rest.size() / 2;
    std::vector<double> first(rest.begin(), rest.begin() + static_cast<std::ptrdiff_t>(half));
    std::vector<double> second(rest.begin() + static_cast<std::ptrdiff_t>(half), rest.end());
    double m1 = stats::mean(first);
    double m2 = stats::mean(second);
    return std::abs(m2 - m1) <= tol * std::max(std::max(m1, m2), 1.0)
               ? Stationarity::Stationary
               : Stationarity::NonStationary;
}

struct RunSummary {
    std::uint64_t seed = 0;
    double time_avg_mass = 0.0;
    double final_mass = 0.0;
    std::int32_t final_max_len = 0;
    Stationarity stationarity = Stationarity::NonStationary;
    std::vector<std::string> trapped_pool;
    std::uint64_t event_count = 0;
    std::uint64_t trapped_efflux_violations = 0;
    std::unordered_map<std::string, std::int64_t> final_counts;
    std::vector<Observation> observations;
};

struct EnsembleReport {
    std::vector<RunSummary> runs;  // seed order
    double mean_time_avg_mass = 0.0;
    double var_time_avg_mass = 0.0;
    double cv_time_avg_mass = 0.0;
    double median_final_max_len = 0.0;
    std::size_t stationary_runs = 0;
    std::size_t runs_with_trapped_pool = 0;
};

struct EnsembleOptions {
    double t_end = 0.0;
    double dt_obs = 1.0;
    double burn_in_fraction = 0.25;
    double stationarity_tol = 0.05;
    bool record_events = false;
};

inline unsigned ensemble_thread_cap() {
    if (const char* env = std::getenv("CRS_SIM_THREADS")) {
        long v = std::strtol(env, nullptr, 10);
        if (v > 0) return static_cast<unsigned>(v);
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw ? hw : 1;
}

namespace detail {

inline RunSummary summarize(std::uint64_t seed, Trajectory traj,
                            const EnsembleOptions& opt) {
    RunSummary s;
    s.seed = seed;
    s.event_count = traj.event_count;
    s.trapped_efflux_violations = traj.trapped_efflux_violations;
    std::vector<double> mass;
    mass.reserve(traj.observations.size());
    for (const auto& o : traj.observations) mass.push_back(static_cast<double>(o.total_mass));
    s.time_avg_mass = stats::mean(mass);
    s.final_mass = mass.back();
    s.final_max_len = traj.observations.back().max_len;
    s.stationarity = stationarity_check(mass, opt.burn_in_fraction, opt.stationarity_tol);
    s.final_counts = traj.final_counts;
    s.trapped_pool = std::move(traj.trapped_pool);
    s.observations = std::move(traj.observations);
    return s;
}

}  // namespace detail

// Runs one configuration across seeds (in parallel) and aggregates.
inline EnsembleReport ensemble_run(const Chemistry& chem, const ReactorConfig& reactor,
                                   const KineticParams& kinetics,
                                   const std::unordered_map<std::string, std::int64_t>& init,
                                   const EnsembleOptions& opt,
                                   const std::vector<std::uint64_t>& seeds) {
    if (seeds.size() < 2)
        throw std::invalid_argument("ensemble_run: needs >= 2 seeds");
    // Validate once up front so a bad configuration aborts before any run.
    {
        kinetics.validate();
        reactor.validate(chem.params().alphabet);
    }

    EnsembleReport report;
    report.runs.resize(seeds.size());
    unsigned workers = std::min<unsigned>(ensemble_thread_cap(),
                                          static_cast<unsigned>(seeds.size()));
    std::vector<std::thread> pool;
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(workers);
    for (unsigned w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (std::size_t i = next.fetch_add(1); i < seeds.size();
                     i = next.fetch_add(1)) {
                    RunOptions ro;
                    ro.t_end = opt.t_end;
                    ro.dt_obs = opt.dt_obs;
                    ro.sim_seed = seeds[i];
                    ro.record_events = opt.record_events;
                    Trajectory traj = run_simulation(chem, reactor, kinetics, init, ro);
                    report.runs[i] = detail::summarize(seeds[i], std::move(traj), opt);
                }
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);

    std::vector<double> avg_mass, max_lens;
    for (const auto& r : report.runs) {
        avg_mass.push_back(r.time_avg_mass);
        max_lens.push_back(static_cast<double>(r.final_max_len));
        if (r.stationarity == Stationarity::Stationary) ++report.stationary_runs;
        if (!r.trapped_pool.empty()) ++report.runs_with_trapped_pool;
    }
    report.mean_time_avg_mass = stats::mean(avg_mass);
    report.var_time_avg_mass = stats::sample_variance(avg_mass);
    report.cv_time_avg_mass = stats::coefficient_of_variation(avg_mass);
    report.median_final_max_len = stats::median(max_lens);
    return report;
}

// L1 distance between normalized count vectors of two snapshots.
inline double compositional_distance(
    const std::unordered_map<std::string, std::int64_t>& a,
    const std::unordered_map<std::string, std::int64_t>& b) {
    double na = 0.0, nb = 0.0;
    for (const auto& [k, v] : a) na += static_cast<double>(v);
    for (const auto& [k, v] : b) nb += static_cast<double>(v);
    std::map<std::string, double> diff;
    if (na > 0)
        for (const auto& [k, v] : a) diff[k] += static_cast<double>(v) / na;
    if (nb > 0)
        for (const auto& [k, v] : b) diff[k] -= static_cast<double>(v) / nb;
    double d = 0.0;
    for (const auto& [k, v] : diff) d += std::abs(v);
    return d;
}

inline double mean_pairwise_compositional_distance(const std::vector<RunSummary>& runs) {
    double sum = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < runs.size(); ++i)
        for (std::size_t j = i + 1; j < runs.size(); ++j) {
            sum += compositional_distance(runs[i].final_counts, runs[j].final_counts);
            ++pairs;
        }
    return pairs ? sum / static_cast<double>(pairs) : 0.0;
}

struct ComparisonReport {
    EnsembleReport cstr;
    EnsembleReport protocell;
    double cv_ratio = 0.0;  // protocell / CSTR
    double cstr_median_max_len = 0.0;
    double protocell_median_max_len = 0.0;
    std::size_t protocell_runs_with_trapped_pool = 0;
    double cstr_mean_pairwise_l1 = 0.0;
    double protocell_mean_pairwise_l1 = 0.0;
    // Per-seed L1 distance between the two arms' final states.
    std::vector<double> cross_arm_l1;
};

// Same chemistry, kinetics, initial counts and seeds through both reactor
// configurations.
inline ComparisonReport compare_environments(
    const Chemistry& chem, const ReactorConfig& cstr_cfg,
    const ReactorConfig& protocell_cfg, const KineticParams& kinetics,
    const std::unordered_map<std::string, std::int64_t>& init,
    const EnsembleOptions& opt, const std::vector<std::uint64_t>& seeds) {
    ComparisonReport rep;
    rep.cstr = ensemble_run(chem, cstr_cfg, kinetics, init, opt, seeds);
    rep.protocell = ensemble_run(chem, protocell_cfg, kinetics, init, opt, seeds);
    rep.cv_ratio = rep.cstr.cv_time_avg_mass > 0.0
                       ? rep.protocell.cv_time_avg_mass / rep.cstr.cv_time_avg_mass
                       : 0.0;
    rep.cstr_median_max_len = rep.cstr.median_final_max_len;
    rep.protocell_median_max_len = rep.protocell.median_final_max_len;
    rep.protocell_runs_with_trapped_pool = rep.protocell.runs_with_trapped_pool;
    rep.cstr_mean_pairwise_l1 = mean_pairwise_compositional_distance(rep.cstr.runs);
    rep.protocell_mean_pairwise_l1 =
        mean_pairwise_compositional_distance(rep.protocell.runs);
    for (std::size_t i = 0; i < seeds.size(); ++i)
        rep.cross_arm_l1.push_back(compositional_distance(
            rep.cstr.runs[i].final_counts, rep.protocell.runs[i].final_counts));
    return rep;
}

}  // namespace crs
