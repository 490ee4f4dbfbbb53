#pragma once

// Configuration loading with strict validation, canonical chemistry
// serialization, trajectory CSV output, and report JSON. All file writes go
// through a temp-file rename so readers never see partial output.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "crs/experiments.hpp"

namespace crs {

using json = nlohmann::json;

constexpr int kFormatVersion = 1;

// Configuration and file-content problems; mapped to exit code 1 by the CLI.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace io_detail {

inline void reject_unknown_keys(const json& j, const std::set<std::string>& allowed,
                                const std::string& where) {
    for (const auto& [key, value] : j.items())
        if (!allowed.count(key))
            throw ConfigError(where + ": unknown key '" + key + "'");
}

inline void check_version(const json& j, const std::string& where) {
    if (j.contains("format_version") && j.at("format_version").get<int>() != kFormatVersion)
        throw ConfigError(where + ": unsupported format_version " +
                          j.at("format_version").dump());
}

template <typename T>
T get_or(const json& j, const std::string& key, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError("bad value for '" + key + "'");
    }
}

}  // namespace io_detail

inline void atomic_write(const std::filesystem::path& path, const std::string& content) {
    std::filesystem::path tmp = path;
    tmp += ".partial";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot open '" + tmp.string() + "' for writing");
        out << content;
        if (!out) throw std::runtime_error("write failed for '" + tmp.string() + "'");
    }
    std::filesystem::rename(tmp, path);
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// ---- chemistry ----

inline json chemistry_params_to_json(const ChemistryParams& p) {
    return json{{"p", p.p},
                {"chem_seed", p.chem_seed},
                {"alphabet", p.alphabet.symbols},
                {"l_max_product", p.l_max_product},
                {"initial_max_len", p.initial_max_len}};
}

inline ChemistryParams chemistry_params_from_json(const json& j) {
    io_detail::reject_unknown_keys(
        j, {"p", "chem_seed", "alphabet", "l_max_product", "initial_max_len"},
        "chemistry params");
    ChemistryParams p;
    if (!j.contains("p")) throw ConfigError("chemistry params: missing 'p'");
    if (!j.contains("chem_seed")) throw ConfigError("chemistry params: missing 'chem_seed'");
    p.p = io_detail::get_or<double>(j, "p", p.p);
    if (!(p.p >= 0.0 && p.p <= 1.0)) throw ConfigError("p: must be in [0,1]");
    p.chem_seed = io_detail::get_or<std::uint64_t>(j, "chem_seed", 0);
    p.alphabet.symbols = io_detail::get_or<std::string>(j, "alphabet", "AB");
    p.l_max_product = io_detail::get_or<std::int32_t>(j, "l_max_product", 16);
    p.initial_max_len = io_detail::get_or<std::int32_t>(j, "initial_max_len", 2);
    try {
        p.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    return p;
}

// Registered species in length-then-lex order; catalyses sorted by canonical
// encoding. Serializing the same chemistry twice is byte-identical.
inline json chemistry_to_json(const Chemistry& chem) {
    std::vector<std::string> species;
    for (std::size_t i = 0; i < chem.species_count(); ++i)
        if (chem.is_registered(static_cast<SpeciesId>(i)))
            species.push_back(chem.sequence(static_cast<SpeciesId>(i)));
    std::sort(species.begin(), species.end(), [](const auto& a, const auto& b) {
        if (a.size() != b.size()) return a.size() < b.size();
        return a < b;
    });

    std::vector<std::pair<std::string, json>> cats;
    for (const Catalysis& c : chem.catalyses()) {
        const Reaction& r = c.reaction;
        json entry{{"kind", r.kind == ReactionKind::Condensation ? "condensation"
                                                                 : "cleavage"},
                   {"fields", {chem.sequence(r.a), chem.sequence(r.b), chem.sequence(r.c)}},
                   {"catalyst", chem.sequence(c.catalyst)}};
        cats.emplace_back(chem.canonical_encode(c), std::move(entry));
    }
    std::sort(cats.begin(), cats.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });

    json out;
    out["format_version"] = kFormatVersion;
    out["params"] = chemistry_params_to_json(chem.params());
    out["species"] = species;
    json jcats = json::array();
    for (auto& [enc, entry] : cats) jcats.push_back(std::move(entry));
    out["catalyses"] = jcats;
    return out;
}

inline Chemistry chemistry_from_json(const json& j) {
    io_detail::reject_unknown_keys(
        j, {"format_version", "params", "species", "catalyses"}, "chemistry file");
    io_detail::check_version(j, "chemistry file");
    if (!j.contains("params")) throw ConfigError("chemistry file: missing 'params'");
    ChemistryParams params = chemistry_params_from_json(j.at("params"));

    // Rebuild generatively: the pure draw reproduces the catalyses from the
    // registered species list alone, then the stored list cross-checks it.
    Chemistry chem(params);
    for (const auto& s : io_detail::get_or<std::vector<std::string>>(j, "species", {})) {
        if (!params.alphabet.spans(s))
            throw ConfigError("chemistry file: species '" + s + "' not over the alphabet");
        chem.expand(s);
    }

    std::set<std::string> rebuilt;
    for (const Catalysis& c : chem.catalyses()) rebuilt.insert(chem.canonical_encode(c));

    std::size_t pos = 0;
    for (const auto& entry : io_detail::get_or<std::vector<json>>(j, "catalyses", {})) {
        io_detail::reject_unknown_keys(entry, {"kind", "fields", "catalyst"},
                                       "catalysis #" + std::to_string(pos));
        auto kind = io_detail::get_or<std::string>(entry, "kind", "");
        auto fields = io_detail::get_or<std::vector<std::string>>(entry, "fields", {});
        auto catalyst = io_detail::get_or<std::string>(entry, "catalyst", "");
        if (fields.size() != 3)
            throw ConfigError("catalysis #" + std::to_string(pos) + ": needs 3 fields");
        std::string enc;
        if (kind == "condensation") {
            if (fields[0] + fields[1] != fields[2])
                throw ConfigError("catalysis #" + std::to_string(pos) +
                                  ": product != first ++ second");
            enc = "C|" + fields[0] + "|" + fields[1] + "|" + fields[2] + "|" + catalyst;
        } else if (kind == "cleavage") {
            if (fields[1] + fields[2] != fields[0])
                throw ConfigError("catalysis #" + std::to_string(pos) +
                                  ": left ++ right != substrate");
            enc = "X|" + fields[0] + "|" + fields[1] + "|" + fields[2] + "|" + catalyst;
        } else {
            throw ConfigError("catalysis #" + std::to_string(pos) + ": bad kind '" +
                              kind + "'");
        }
        if (!rebuilt.count(enc))
            throw ConfigError("catalysis #" + std::to_string(pos) +
                              ": not reproducible from (chem_seed, p) — corrupt file?");
        ++pos;
    }
    if (pos != rebuilt.size())
        throw ConfigError("chemistry file: catalysis count mismatch (file " +
                          std::to_string(pos) + ", rebuilt " +
                          std::to_string(rebuilt.size()) + ")");
    return chem;
}

inline void save_chemistry(const Chemistry& chem, const std::filesystem::path& path) {
    atomic_write(path, chemistry_to_json(chem).dump(2) + "\n");
}

inline Chemistry load_chemistry(const std::filesystem::path& path) {
    json j;
    try {
        j = json::parse(read_file(path));
    } catch (const json::parse_error& e) {
        throw ConfigError("'" + path.string() + "': " + e.what());
    }
    return chemistry_from_json(j);
}

// ---- run configuration ----

struct RunConfig {
    // Either inline params or a path to a saved chemistry.
    std::optional<ChemistryParams> chem_params;
    std::optional<std::filesystem::path> chemistry_path;
    ReactorConfig reactor;
    std::optional<ReactorConfig> reactor_b;  // second arm for `compare`
    KineticParams kinetics;
    std::unordered_map<std::string, std::int64_t> init_counts;
    double t_end = 1000.0;
    double dt_obs = 10.0;
    std::vector<std::uint64_t> seeds{0};
    std::filesystem::path out_dir = ".";
    bool event_ledger = false;
    bool species_csv = false;

    Chemistry realize_chemistry() const {
        if (chemistry_path) return load_chemistry(*chemistry_path);
        if (chem_params) return Chemistry(*chem_params);
        throw ConfigError("config: needs either 'chemistry' params or 'chemistry_path'");
    }
};

inline json reactor_to_json(const ReactorConfig& r) {
    json j;
    j["hybrid_buffered"] = r.hybrid_buffered;
    if (r.mode == ReactorMode::Cstr) {
        j["mode"] = "cstr";
        j["k_in"] = r.k_in;
        j["k_out"] = r.k_out;
        j["feed"] = std::map<std::string, double>(r.feed.begin(), r.feed.end());
    } else {
        j["mode"] = "protocell";
        j["l_perm"] = r.l_perm;
        j["k_mem"] = r.k_mem;
        j["external"] = std::map<std::string, double>(r.external.begin(), r.external.end());
    }
    return j;
}

inline ReactorConfig reactor_from_json(const json& j) {
    ReactorConfig r;
    auto mode = io_detail::get_or<std::string>(j, "mode", "");
    if (mode == "cstr") {
        io_detail::reject_unknown_keys(j, {"mode", "hybrid_buffered", "k_in", "k_out", "feed"},
                                       "reactor");
        r.mode = ReactorMode::Cstr;
        r.k_in = io_detail::get_or<double>(j, "k_in", 0.0);
        r.k_out = io_detail::get_or<double>(j, "k_out", 0.0);
        r.feed = io_detail::get_or<std::unordered_map<std::string, double>>(j, "feed", {});
    } else if (mode == "protocell") {
        io_detail::reject_unknown_keys(
            j, {"mode", "hybrid_buffered", "l_perm", "k_mem", "external"}, "reactor");
        r.mode = ReactorMode::Protocell;
        r.l_perm = io_detail::get_or<std::int32_t>(j, "l_perm", 0);
        r.k_mem = io_detail::get_or<double>(j, "k_mem", 0.0);
        r.external =
            io_detail::get_or<std::unordered_map<std::string, double>>(j, "external", {});
    } else {
        throw ConfigError("reactor.mode: must be 'cstr' or 'protocell'");
    }
    r.hybrid_buffered = io_detail::get_or<bool>(j, "hybrid_buffered", true);
    return r;
}

inline json kinetics_to_json(const KineticParams& k) {
    return json{{"k_complex", k.k_complex},
                {"k_release", k.k_release},
                {"k_cleave", k.k_cleave},
                {"k_diss", k.k_diss}};
}

inline KineticParams kinetics_from_json(const json& j) {
    io_detail::reject_unknown_keys(j, {"k_complex", "k_release", "k_cleave", "k_diss"},
                                   "kinetics");
    KineticParams k;
    k.k_complex = io_detail::get_or<double>(j, "k_complex", k.k_complex);
    k.k_release = io_detail::get_or<double>(j, "k_release", k.k_release);
    k.k_cleave = io_detail::get_or<double>(j, "k_cleave", k.k_cleave);
    k.k_diss = io_detail::get_or<double>(j, "k_diss", k.k_diss);
    try {
        k.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    return k;
}

inline json run_config_to_json(const RunConfig& c) {
    json j;
    j["format_version"] = kFormatVersion;
    if (c.chemistry_path)
        j["chemistry_path"] = c.chemistry_path->string();
    else if (c.chem_params)
        j["chemistry"] = chemistry_params_to_json(*c.chem_params);
    j["reactor"] = reactor_to_json(c.reactor);
    if (c.reactor_b) j["reactor_b"] = reactor_to_json(*c.reactor_b);
    j["kinetics"] = kinetics_to_json(c.kinetics);
    j["init_counts"] =
        std::map<std::string, std::int64_t>(c.init_counts.begin(), c.init_counts.end());
    j["t_end"] = c.t_end;
    j["dt_obs"] = c.dt_obs;
    j["seeds"] = c.seeds;
    j["out_dir"] = c.out_dir.string();
    j["event_ledger"] = c.event_ledger;
    j["species_csv"] = c.species_csv;
    return j;
}

inline RunConfig run_config_from_json(const json& j,
                                      const std::filesystem::path& base_dir = ".") {
    io_detail::reject_unknown_keys(
        j,
        {"format_version", "chemistry", "chemistry_path", "reactor", "reactor_b",
         "kinetics", "init_counts", "init_uniform", "t_end", "dt_obs", "seeds",
         "out_dir", "event_ledger", "species_csv"},
        "config");
    io_detail::check_version(j, "config");
    RunConfig c;
    if (j.contains("chemistry") && j.contains("chemistry_path"))
        throw ConfigError("config: give 'chemistry' or 'chemistry_path', not both");
    if (j.contains("chemistry"))
        c.chem_params = chemistry_params_from_json(j.at("chemistry"));
    if (j.contains("chemistry_path")) {
        std::filesystem::path p = j.at("chemistry_path").get<std::string>();
        c.chemistry_path = p.is_absolute() ? p : base_dir / p;
    }
    if (!c.chem_params && !c.chemistry_path)
        throw ConfigError("config: needs either 'chemistry' params or 'chemistry_path'");
    if (j.contains("reactor")) c.reactor = reactor_from_json(j.at("reactor"));
    if (j.contains("reactor_b")) c.reactor_b = reactor_from_json(j.at("reactor_b"));
    if (j.contains("kinetics")) c.kinetics = kinetics_from_json(j.at("kinetics"));
    c.init_counts = io_detail::get_or<std::unordered_map<std::string, std::int64_t>>(
        j, "init_counts", {});
    for (const auto& [seq, n] : c.init_counts)
        if (n < 0) throw ConfigError("init_counts['" + seq + "']: must be >= 0");
    if (j.contains("init_uniform")) {
        const json& u = j.at("init_uniform");
        io_detail::reject_unknown_keys(u, {"max_len", "count"}, "init_uniform");
        auto max_len = io_detail::get_or<std::int32_t>(u, "max_len", 0);
        auto count = io_detail::get_or<std::int64_t>(u, "count", 0);
        if (max_len < 1) throw ConfigError("init_uniform.max_len: must be >= 1");
        if (count < 0) throw ConfigError("init_uniform.count: must be >= 0");
        // All sequences up to max_len over the configured alphabet.
        std::string alphabet = "AB";
        if (c.chem_params) alphabet = c.chem_params->alphabet.symbols;
        std::vector<std::string> frontier{""};
        for (int l = 1; l <= max_len; ++l) {
            std::vector<std::string> next;
            for (const auto& s : frontier)
                for (char ch : alphabet) {
                    std::string t = s + ch;
                    if (!c.init_counts.count(t)) c.init_counts[t] = count;
                    next.push_back(t);
                }
            frontier = std::move(next);
        }
    }
    c.t_end = io_detail::get_or<double>(j, "t_end", c.t_end);
    if (c.t_end <= 0) throw ConfigError("t_end: must be > 0");
    c.dt_obs = io_detail::get_or<double>(j, "dt_obs", c.dt_obs);
    if (c.dt_obs <= 0) throw ConfigError("dt_obs: must be > 0");
    c.seeds = io_detail::get_or<std::vector<std::uint64_t>>(j, "seeds", c.seeds);
    if (c.seeds.empty()) throw ConfigError("seeds: must not be empty");
    std::filesystem::path out = io_detail::get_or<std::string>(j, "out_dir", ".");
    c.out_dir = (out.is_absolute() ? out : base_dir / out).lexically_normal();
    c.event_ledger = io_detail::get_or<bool>(j, "event_ledger", false);
    c.species_csv = io_detail::get_or<bool>(j, "species_csv", false);

    // Cross-field checks that need the chemistry's alphabet.
    Alphabet alphabet;
    if (c.chem_params) alphabet = c.chem_params->alphabet;
    if (!c.chemistry_path) {
        try {
            c.reactor.validate(alphabet);
        } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
        }
        for (const auto& [seq, n] : c.init_counts)
            if (!alphabet.spans(seq))
                throw ConfigError("init_counts: species '" + seq +
                                  "' not over the alphabet");
    }
    return c;
}

inline RunConfig load_config(const std::filesystem::path& path) {
    json j;
    try {
        j = json::parse(read_file(path));
    } catch (const json::parse_error& e) {
        throw ConfigError("'" + path.string() + "': " + e.what());
    }
    return run_config_from_json(j, path.parent_path().empty() ? "." : path.parent_path());
}

// ---- trajectory output ----

inline std::string format_time(double t) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.10g", t);
    return buf;
}

inline std::string observations_csv(const std::vector<Observation>& obs) {
    std::ostringstream out;
    out << "t,total_mass,richness,max_len\n";
    for (const auto& o : obs)
        out << format_time(o.t) << ',' << o.total_mass << ',' << o.richness << ','
            << o.max_len << '\n';
    return out.str();
}

inline std::string trajectory_csv(const Trajectory& traj) {
    return observations_csv(traj.observations);
}

// Wide per-species file: one column per species ever observed, zero-filled
// for samples taken before the species was discovered.
inline std::string species_csv(const Trajectory& traj) {
    std::ostringstream out;
    out << "t";
    for (const auto& name : traj.species_columns) out << ',' << name;
    out << '\n';
    for (std::size_t i = 0; i < traj.species_samples.size(); ++i) {
        out << format_time(traj.observations[i].t);
        const auto& row = traj.species_samples[i];
        for (std::size_t c = 0; c < traj.species_columns.size(); ++c)
            out << ',' << (c < row.size() ? row[c] : 0);
        out << '\n';
    }
    return out.str();
}

inline void write_trajectory_csv(const Trajectory& traj, const std::filesystem::path& path) {
    atomic_write(path, trajectory_csv(traj));
}

inline json run_summary_to_json(const RunSummary& s) {
    json j;
    j["seed"] = s.seed;
    j["time_avg_mass"] = s.time_avg_mass;
    j["final_mass"] = s.final_mass;
    j["final_max_len"] = s.final_max_len;
    j["stationary"] = s.stationarity == Stationarity::Stationary;
    j["trapped_pool"] = s.trapped_pool;
    j["event_count"] = s.event_count;
    return j;
}

inline json ensemble_report_to_json(const EnsembleReport& r) {
    json j;
    j["format_version"] = kFormatVersion;
    j["mean_time_avg_mass"] = r.mean_time_avg_mass;
    j["var_time_avg_mass"] = r.var_time_avg_mass;
    j["cv_time_avg_mass"] = r.cv_time_avg_mass;
    j["median_final_max_len"] = r.median_final_max_len;
    j["stationary_runs"] = r.stationary_runs;
    j["runs_with_trapped_pool"] = r.runs_with_trapped_pool;
    json runs = json::array();
    for (const auto& s : r.runs) runs.push_back(run_summary_to_json(s));
    j["runs"] = runs;
    return j;
}

inline json comparison_report_to_json(const ComparisonReport& r) {
    json j;
    j["format_version"] = kFormatVersion;
    j["cstr"] = ensemble_report_to_json(r.cstr);
    j["protocell"] = ensemble_report_to_json(r.protocell);
    j["cv_ratio"] = r.cv_ratio;
    j["cstr_median_max_len"] = r.cstr_median_max_len;
    j["protocell_median_max_len"] = r.protocell_median_max_len;
    j["protocell_runs_with_trapped_pool"] = r.protocell_runs_with_trapped_pool;
    j["cstr_mean_pairwise_l1"] = r.cstr_mean_pairwise_l1;
    j["protocell_mean_pairwise_l1"] = r.protocell_mean_pairwise_l1;
    j["cross_arm_l1"] = r.cross_arm_l1;
    return j;
}

}  // namespace crs
