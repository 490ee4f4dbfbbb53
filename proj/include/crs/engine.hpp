#pragma once

// Stochastic simulation engine: mass-action propensities for the two-step
// condensation scheme, cleavage and transport channels, and the Gillespie
// direct-method loop with on-the-fly chemistry expansion when a species
// first appears.

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "crs/chemistry.hpp"

namespace crs {

struct KineticParams {
    double k_complex = 0.001;
    double k_release = 0.001;
    double k_cleave = 0.001;
    double k_diss = 0.0;

    void validate() const {
        if (k_complex < 0 || k_release < 0 || k_cleave < 0 || k_diss < 0)
            throw std::invalid_argument("kinetics: rates must be >= 0");
    }
};

enum class ReactorMode : std::uint8_t { Cstr, Protocell };

struct ReactorConfig {
    ReactorMode mode = ReactorMode::Cstr;
    bool hybrid_buffered = true;

    // CSTR
    double k_in = 0.0;
    double k_out = 0.0;
    std::unordered_map<std::string, double> feed;

    // Protocell
    std::int32_t l_perm = 0;
    double k_mem = 0.0;
    std::unordered_map<std::string, double> external;

    const std::unordered_map<std::string, double>& buffered_levels() const {
        return mode == ReactorMode::Cstr ? feed : external;
    }

    void validate(const Alphabet& alphabet) const {
        if (k_in < 0 || k_out < 0 || k_mem < 0)
            throw std::invalid_argument("reactor: rates must be >= 0");
        if (l_perm < 0)
            throw std::invalid_argument("l_perm: must be >= 0");
        for (const auto& [seq, level] : buffered_levels()) {
            if (!alphabet.spans(seq))
                throw std::invalid_argument("feed/external species '" + seq +
                                            "' not over the alphabet");
            if (level < 0)
                throw std::invalid_argument("feed/external level for '" + seq +
                                            "' must be >= 0");
            if (mode == ReactorMode::Protocell &&
                static_cast<std::int32_t>(seq.size()) > l_perm)
                throw std::invalid_argument("external species '" + seq +
                                            "' is longer than l_perm (impermeable)");
        }
    }
};

enum class EntityKind : std::uint8_t { Species, Complex };

using EntityId = std::int32_t;
constexpr EntityId kNoEntity = -1;

struct Entity {
    EntityKind kind;
    SpeciesId species = kNoSpecies;   // Species entities
    SpeciesId catalyst = kNoSpecies;  // Complex entities
    SpeciesId bound = kNoSpecies;
    std::int32_t length = 0;
};

enum class ChannelKind : std::uint8_t {
    ComplexFormation,
    ProductRelease,
    ComplexDissociation,
    Cleavage,
    Influx,
    Efflux,
};

inline const char* to_string(ChannelKind k) {
    switch (k) {
        case ChannelKind::ComplexFormation: return "complex_formation";
        case ChannelKind::ProductRelease: return "product_release";
        case ChannelKind::ComplexDissociation: return "complex_dissociation";
        case ChannelKind::Cleavage: return "cleavage";
        case ChannelKind::Influx: return "influx";
        case ChannelKind::Efflux: return "efflux";
    }
    return "?";
}

struct Channel {
    ChannelKind kind;
    double rate = 0.0;
    // Reactants entering the mass-action product. r2 == kNoEntity for
    // first-order channels; r1 == kNoEntity for constant (influx) channels,
    // where `rate` already carries the full propensity.
    EntityId r1 = kNoEntity;
    EntityId r2 = kNoEntity;
    struct Delta {
        EntityId entity;
        std::int32_t change;
    };
    std::vector<Delta> deltas;
};

struct Event {
    ChannelKind kind;
    std::int32_t channel;
    double t;
};

struct Observation {
    double t = 0.0;
    std::int64_t total_mass = 0;
    std::int64_t richness = 0;
    std::int32_t max_len = 0;
};

struct Trajectory {
    std::vector<Observation> observations;
    std::vector<Event> events;  // populated only when the ledger is enabled
    // Optional wide samples: one row per observation, columns are species in
    // discovery order (earlier rows are shorter; pad with zeros on output).
    std::vector<std::vector<std::int64_t>> species_samples;
    std::vector<std::string> species_columns;
    std::uint64_t event_count = 0;
    std::unordered_map<std::string, std::uint64_t> events_by_kind;
    std::uint64_t trapped_efflux_violations = 0;
    bool truncated_by_event_cap = false;
    std::vector<std::string> trapped_pool;  // protocell runs only
    // Final state, keyed by sequence (species) or "cat*bound" (complex).
    std::unordered_map<std::string, std::int64_t> final_counts;
};

struct RunOptions {
    double t_end = 0.0;
    double dt_obs = 1.0;
    std::uint64_t sim_seed = 0;
    bool record_events = false;
    bool record_species_samples = false;
    // 0 = unlimited. When the cap is hit the trajectory ends early: remaining
    // sample slots are not filled.
    std::uint64_t max_events = 0;
};

// Flat sum tree over channel propensities: O(log n) update and inverse-CDF
// selection. Rebuilt periodically to shed floating-point drift.
class PropensityTree {
public:
    void resize(std::size_t n) {
        if (n <= leaves_) return;
        if (n <= cap_) {
            leaves_ = n;
            return;
        }
        std::size_t cap = cap_ ? cap_ : 1;
        while (cap < n) cap <<= 1;
        std::vector<double> fresh(2 * cap, 0.0);
        for (std::size_t i = 0; i < leaves_; ++i) fresh[cap + i] = tree_[cap_ + i];
        tree_ = std::move(fresh);
        cap_ = cap;
        leaves_ = n;
        for (std::size_t k = cap_ - 1; k >= 1; --k)
            tree_[k] = tree_[2 * k] + tree_[2 * k + 1];
    }

    void set(std::size_t i, double v) {
        std::size_t k = cap_ + i;
        tree_[k] = v;
        for (k >>= 1; k >= 1; k >>= 1) tree_[k] = tree_[2 * k] + tree_[2 * k + 1];
    }

    double get(std::size_t i) const { return tree_[cap_ + i]; }
    double total() const { return cap_ ? tree_[1] : 0.0; }
    std::size_t size() const { return leaves_; }

    // Smallest leaf index whose prefix sum reaches `target`.
    std::size_t select(double target) const {
        std::size_t k = 1;
        while (k < cap_) {
            k <<= 1;
            if (target > tree_[k]) {
                target -= tree_[k];
                ++k;
            }
        }
        std::size_t i = k - cap_;
        if (i >= leaves_) i = leaves_ - 1;
        // Rounding can land on an empty leaf; back up to a live one.
        while (i > 0 && tree_[cap_ + i] <= 0.0) --i;
        return i;
    }

private:
    std::vector<double> tree_;
    std::size_t cap_ = 0;
    std::size_t leaves_ = 0;
};

struct ProposedStep {
    double tau;
    std::size_t channel;
};

class Reactor {
public:
    Reactor(Chemistry chem, ReactorConfig reactor, KineticParams kinetics)
        : chem_(std::move(chem)), reactor_(std::move(reactor)), kinetics_(kinetics) {
        kinetics_.validate();
        reactor_.validate(chem_.params().alphabet);
        for (std::size_t i = 0; i < chem_.species_count(); ++i)
            entity_for_species(static_cast<SpeciesId>(i));
        for (const Catalysis& c : chem_.catalyses()) add_reaction_channels(c);
        for (const auto& [seq, level] : reactor_.buffered_levels()) {
            EntityId e = entity_for_species(intern_registered(seq));
            buffered_.emplace_back(e, static_cast<std::int64_t>(level));
            if (!reactor_.hybrid_buffered) {
                double k = reactor_.mode == ReactorMode::Cstr ? reactor_.k_in
                                                              : reactor_.k_mem;
                add_channel({ChannelKind::Influx, k * level, kNoEntity, kNoEntity,
                             {{e, +1}}});
            }
        }
        clamp_buffered();
    }

    const Chemistry& chemistry() const { return chem_; }
    const ReactorConfig& config() const { return reactor_; }
    double time() const { return t_; }

    std::int64_t count(EntityId e) const { return counts_[static_cast<std::size_t>(e)]; }
    std::int64_t count_of(const std::string& seq) const {
        SpeciesId s = chem_.find(seq);
        if (s == kNoSpecies) return 0;
        auto it = species_entity_.find(s);
        return it == species_entity_.end() ? 0 : count(it->second);
    }
    const std::vector<Entity>& entities() const { return entities_; }
    const std::vector<std::int64_t>& counts() const { return counts_; }
    const std::vector<Channel>& channels() const { return channels_; }

    void set_count(const std::string& seq, std::int64_t n) {
        if (n < 0) throw std::invalid_argument("count for '" + seq + "' must be >= 0");
        SpeciesId s = intern_registered(seq);
        set_entity_count(entity_for_species(s), n);
        clamp_buffered();  // the feed level wins over explicit inits
    }

    std::int64_t total_mass() const {
        std::int64_t m = 0;
        for (std::size_t i = 0; i < entities_.size(); ++i)
            m += counts_[i] * entities_[i].length;
        return m;
    }

    std::int64_t richness() const {
        std::int64_t r = 0;
        for (std::int64_t n : counts_)
            if (n > 0) ++r;
        return r;
    }

    std::int32_t max_species_length() const {
        std::int32_t m = 0;
        for (std::size_t i = 0; i < entities_.size(); ++i)
            if (counts_[i] > 0 && entities_[i].kind == EntityKind::Species)
                m = std::max(m, entities_[i].length);
        return m;
    }

    double total_propensity() const { return tree_.total(); }
    double propensity(std::size_t ch) const { return tree_.get(ch); }

    double compute_propensity(const Channel& c) const {
        if (c.r1 == kNoEntity) return c.rate;
        std::int64_t n1 = counts_[static_cast<std::size_t>(c.r1)];
        if (c.r2 == kNoEntity) return c.rate * static_cast<double>(n1);
        if (c.r1 == c.r2)
            return c.rate * static_cast<double>(n1) * static_cast<double>(n1 - 1);
        std::int64_t n2 = counts_[static_cast<std::size_t>(c.r2)];
        return c.rate * static_cast<double>(n1) * static_cast<double>(n2);
    }

    // Direct-method draw: does not mutate state, so samples falling before
    // the event time can be recorded from the pre-event state.
    std::optional<ProposedStep> propose(std::mt19937_64& rng) {
        double a0 = tree_.total();
        if (a0 <= 0.0) return std::nullopt;
        double u1 = open_unit(rng);
        double u2 = open_unit(rng);
        return propose_with(u1, u2);
    }

    // u1, u2 uniform in (0,1]; tau = -ln(u1)/a0, chosen is the smallest
    // channel whose cumulative propensity reaches u2*a0.
    std::optional<ProposedStep> propose_with(double u1, double u2) {
        double a0 = tree_.total();
        if (a0 <= 0.0) return std::nullopt;
        if (!std::isfinite(a0)) report_nonfinite();
        return ProposedStep{-std::log(u1) / a0, tree_.select(u2 * a0)};
    }

    void commit(const ProposedStep& s) {
        t_ += s.tau;
        apply(s.channel);
    }

    // Applies channel effects, clamps buffered species, expands the chemistry
    // for any species appearing for the first time.
    void apply(std::size_t ch) {
        const Channel& c = channels_[ch];
        if (c.kind == ChannelKind::Efflux &&
            reactor_.mode == ReactorMode::Protocell &&
            entities_[static_cast<std::size_t>(c.deltas[0].entity)].length >
                reactor_.l_perm)
            ++trapped_efflux_violations_;
        newly_positive_.clear();
        for (const auto& [e, d] : c.deltas) {
            auto i = static_cast<std::size_t>(e);
            // Buffered counts are clamped to their level; the event fires but
            // the count (and every propensity reading it) is unchanged.
            if (i < buffered_flag_.size() && buffered_flag_[i]) continue;
            std::int64_t next = counts_[i] + d;
            if (next < 0)
                throw std::logic_error("count underflow applying " +
                                       std::string(to_string(c.kind)));
            if (counts_[i] == 0 && next > 0) newly_positive_.push_back(e);
            counts_[i] = next;
            touch_entity(e);
        }
        for (EntityId e : newly_positive_) {
            const Entity& ent = entities_[static_cast<std::size_t>(e)];
            if (ent.kind == EntityKind::Species && !chem_.is_registered(ent.species))
                expand_species(ent.species);
        }
    }

    // Recomputes every propensity from counts; returns the largest absolute
    // difference against the maintained table before refreshing it.
    double audit_propensities() {
        double worst = 0.0;
        for (std::size_t i = 0; i < channels_.size(); ++i)
            worst = std::max(worst,
                             std::abs(tree_.get(i) - compute_propensity(channels_[i])));
        refresh_all_propensities();
        return worst;
    }

    void refresh_all_propensities() {
        for (std::size_t i = 0; i < channels_.size(); ++i)
            tree_.set(i, compute_propensity(channels_[i]));
    }

    bool has_influx_channels() const {
        for (const auto& c : channels_)
            if (c.kind == ChannelKind::Influx) return true;
        return false;
    }

    std::uint64_t trapped_efflux_violations() const { return trapped_efflux_violations_; }

    std::string entity_key(EntityId e) const {
        const Entity& ent = entities_[static_cast<std::size_t>(e)];
        if (ent.kind == EntityKind::Species) return chem_.sequence(ent.species);
        return chem_.sequence(ent.catalyst) + "*" + chem_.sequence(ent.bound);
    }

    std::vector<std::string> species_columns() const {
        std::vector<std::string> cols;
        for (const Entity& ent : entities_)
            if (ent.kind == EntityKind::Species)
                cols.push_back(chem_.sequence(ent.species));
        return cols;
    }

    std::vector<std::int64_t> species_row() const {
        std::vector<std::int64_t> row;
        for (std::size_t i = 0; i < entities_.size(); ++i)
            if (entities_[i].kind == EntityKind::Species) row.push_back(counts_[i]);
        return row;
    }

    // Species with positive count, trapped by the membrane, catalyzing at
    // least one stored reaction, with no live production channel.
    std::vector<std::string> trapped_catalyst_pool() const {
        if (reactor_.mode != ReactorMode::Protocell) return {};
        std::vector<bool> is_catalyst(chem_.species_count(), false);
        for (const Catalysis& c : chem_.catalyses())
            is_catalyst[static_cast<std::size_t>(c.catalyst)] = true;
        std::vector<bool> produced(entities_.size(), false);
        for (std::size_t i = 0; i < channels_.size(); ++i) {
            if (tree_.get(i) <= 0.0) continue;
            const Channel& c = channels_[i];
            switch (c.kind) {
                case ChannelKind::ProductRelease:
                    // deltas: complex -1, second -1, product +1, catalyst +1.
                    // The catalyst leg is recycling, not production.
                    produced[static_cast<std::size_t>(c.deltas[2].entity)] = true;
                    break;
                case ChannelKind::Cleavage:
                    produced[static_cast<std::size_t>(c.deltas[1].entity)] = true;
                    produced[static_cast<std::size_t>(c.deltas[2].entity)] = true;
                    break;
                case ChannelKind::Influx:
                    produced[static_cast<std::size_t>(c.deltas[0].entity)] = true;
                    break;
                default:
                    break;
            }
        }
        std::vector<std::string> pool;
        for (std::size_t i = 0; i < entities_.size(); ++i) {
            const Entity& ent = entities_[i];
            if (ent.kind != EntityKind::Species || counts_[i] <= 0) continue;
            if (ent.length <= reactor_.l_perm) continue;
            if (!is_catalyst[static_cast<std::size_t>(ent.species)]) continue;
            if (produced[i]) continue;
            pool.push_back(chem_.sequence(ent.species));
        }
        std::sort(pool.begin(), pool.end());
        return pool;
    }

private:
    static double open_unit(std::mt19937_64& rng) {
        // Uniform in (0,1].
        return (static_cast<double>(rng() >> 11) + 1.0) * 0x1.0p-53;
    }

    [[noreturn]] void report_nonfinite() const {
        for (std::size_t i = 0; i < channels_.size(); ++i)
            if (!std::isfinite(tree_.get(i)))
                throw std::runtime_error(
                    std::string("non-finite propensity in channel ") +
                    std::to_string(i) + " (" + to_string(channels_[i].kind) + ")");
        throw std::runtime_error("non-finite total propensity");
    }

    SpeciesId intern_registered(const std::string& seq) {
        SpeciesId s = chem_.find(seq);
        if (s == kNoSpecies || !chem_.is_registered(s)) {
            auto added = chem_.expand(seq);
            s = chem_.find(seq);
            sync_species_entities();
            for (const Catalysis& c : added) add_reaction_channels(c);
        }
        return s;
    }

    void expand_species(SpeciesId s) {
        auto added = chem_.expand(chem_.sequence(s));
        sync_species_entities();
        for (const Catalysis& c : added) add_reaction_channels(c);
    }

    void sync_species_entities() {
        for (std::size_t i = 0; i < chem_.species_count(); ++i)
            entity_for_species(static_cast<SpeciesId>(i));
    }

    EntityId entity_for_species(SpeciesId s) {
        auto it = species_entity_.find(s);
        if (it != species_entity_.end()) return it->second;
        auto e = static_cast<EntityId>(entities_.size());
        entities_.push_back(
            {EntityKind::Species, s, kNoSpecies, kNoSpecies, chem_.length(s)});
        counts_.push_back(0);
        touched_channels_.emplace_back();
        species_entity_.emplace(s, e);
        add_transport_channel(e);
        return e;
    }

    static std::uint64_t complex_key(SpeciesId catalyst, SpeciesId bound) {
        return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(catalyst)) << 32) |
               static_cast<std::uint32_t>(bound);
    }

    EntityId entity_for_complex(SpeciesId catalyst, SpeciesId bound) {
        auto key = complex_key(catalyst, bound);
        auto it = complex_entity_.find(key);
        if (it != complex_entity_.end()) return it->second;
        auto e = static_cast<EntityId>(entities_.size());
        entities_.push_back({EntityKind::Complex, kNoSpecies, catalyst, bound,
                             chem_.length(catalyst) + chem_.length(bound)});
        counts_.push_back(0);
        touched_channels_.emplace_back();
        complex_entity_.emplace(key, e);
        add_transport_channel(e);
        EntityId cat_e = entity_for_species(catalyst);
        EntityId bound_e = entity_for_species(bound);
        add_channel({ChannelKind::ComplexDissociation, kinetics_.k_diss, e, kNoEntity,
                     {{e, -1}, {cat_e, +1}, {bound_e, +1}}});
        return e;
    }

    void add_transport_channel(EntityId e) {
        const Entity& ent = entities_[static_cast<std::size_t>(e)];
        if (reactor_.mode == ReactorMode::Cstr) {
            if (reactor_.k_out > 0.0)
                add_channel({ChannelKind::Efflux, reactor_.k_out, e, kNoEntity, {{e, -1}}});
        } else {
            if (reactor_.k_mem > 0.0 && ent.length <= reactor_.l_perm)
                add_channel({ChannelKind::Efflux, reactor_.k_mem, e, kNoEntity, {{e, -1}}});
        }
    }

    void add_reaction_channels(const Catalysis& cat) {
        const Reaction& r = cat.reaction;
        EntityId cat_e = entity_for_species(cat.catalyst);
        if (r.kind == ReactionKind::Cleavage) {
            EntityId sub = entity_for_species(r.a);
            EntityId left = entity_for_species(r.b);
            EntityId right = entity_for_species(r.c);
            add_channel({ChannelKind::Cleavage, kinetics_.k_cleave, cat_e, sub,
                         {{sub, -1}, {left, +1}, {right, +1}}});
        } else {
            EntityId first = entity_for_species(r.a);
            EntityId second = entity_for_species(r.b);
            EntityId product = entity_for_species(r.c);
            bool fresh = complex_entity_.find(complex_key(cat.catalyst, r.a)) ==
                         complex_entity_.end();
            EntityId x = entity_for_complex(cat.catalyst, r.a);
            // The formation channel is shared by every condensation with the
            // same catalyst and first substrate; add it once per complex.
            if (fresh)
                add_channel({ChannelKind::ComplexFormation, kinetics_.k_complex, cat_e,
                             first, {{cat_e, -1}, {first, -1}, {x, +1}}});
            add_channel({ChannelKind::ProductRelease, kinetics_.k_release, x, second,
                         {{x, -1}, {second, -1}, {product, +1}, {cat_e, +1}}});
        }
    }

    void add_channel(Channel c) {
        auto id = channels_.size();
        channels_.push_back(std::move(c));
        const Channel& ch = channels_.back();
        tree_.resize(channels_.size());
        if (ch.r1 != kNoEntity)
            touched_channels_[static_cast<std::size_t>(ch.r1)].push_back(id);
        if (ch.r2 != kNoEntity && ch.r2 != ch.r1)
            touched_channels_[static_cast<std::size_t>(ch.r2)].push_back(id);
        tree_.set(id, compute_propensity(ch));
    }

    void touch_entity(EntityId e) {
        for (std::size_t ch : touched_channels_[static_cast<std::size_t>(e)])
            tree_.set(ch, compute_propensity(channels_[ch]));
    }

    void set_entity_count(EntityId e, std::int64_t n) {
        counts_[static_cast<std::size_t>(e)] = n;
        touch_entity(e);
    }

    void clamp_buffered() {
        if (!reactor_.hybrid_buffered) return;
        for (const auto& [e, level] : buffered_) {
            auto i = static_cast<std::size_t>(e);
            if (i >= buffered_flag_.size()) buffered_flag_.resize(i + 1, false);
            buffered_flag_[i] = true;
            if (counts_[i] != level) set_entity_count(e, level);
        }
    }

    Chemistry chem_;
    ReactorConfig reactor_;
    KineticParams kinetics_;
    double t_ = 0.0;

    std::vector<Entity> entities_;
    std::vector<std::int64_t> counts_;
    std::unordered_map<SpeciesId, EntityId> species_entity_;
    std::unordered_map<std::uint64_t, EntityId> complex_entity_;
    std::vector<std::pair<EntityId, std::int64_t>> buffered_;
    std::vector<bool> buffered_flag_;

    std::vector<Channel> channels_;
    std::vector<std::vector<std::size_t>> touched_channels_;
    PropensityTree tree_;
    std::vector<EntityId> newly_positive_;
    std::uint64_t trapped_efflux_violations_ = 0;
};

inline Trajectory run_simulation(const Chemistry& chem, const ReactorConfig& reactor,
                                 const KineticParams& kinetics,
                                 const std::unordered_map<std::string, std::int64_t>& init,
                                 const RunOptions& opt) {
    if (opt.t_end <= 0.0) throw std::invalid_argument("t_end: must be > 0");
    if (opt.dt_obs <= 0.0) throw std::invalid_argument("dt_obs: must be > 0");

    Reactor r(chem, reactor, kinetics);
    for (const auto& [seq, n] : init) r.set_count(seq, n);

    std::mt19937_64 rng(opt.sim_seed);
    Trajectory traj;

    auto n_samples = static_cast<std::size_t>(std::floor(opt.t_end / opt.dt_obs)) + 1;
    traj.observations.reserve(n_samples);

    auto record = [&](double sample_t) {
        traj.observations.push_back(
            {sample_t, r.total_mass(), r.richness(), r.max_species_length()});
        if (opt.record_species_samples)
            traj.species_samples.push_back(r.species_row());
    };

    std::size_t next_sample = 0;
    auto sample_time = [&](std::size_t i) { return static_cast<double>(i) * opt.dt_obs; };

    while (next_sample < n_samples) {
        auto step = r.propose(rng);
        double t_event = step ? r.time() + step->tau
                              : std::numeric_limits<double>::infinity();
        // Samples strictly before the event see the pre-event state; a sample
        // exactly at the event time reports the post-event state.
        while (next_sample < n_samples && sample_time(next_sample) < t_event)
            record(sample_time(next_sample++));
        if (!step || t_event > opt.t_end) break;
        r.commit(*step);
        ++traj.event_count;
        const Channel& ch = r.channels()[step->channel];
        ++traj.events_by_kind[to_string(ch.kind)];
        if (opt.record_events)
            traj.events.push_back(
                {ch.kind, static_cast<std::int32_t>(step->channel), r.time()});
        if (opt.max_events && traj.event_count >= opt.max_events) {
            traj.truncated_by_event_cap = true;
            break;
        }
    }

    traj.species_columns = r.species_columns();
    traj.trapped_efflux_violations = r.trapped_efflux_violations();
    traj.trapped_pool = r.trapped_catalyst_pool();
    for (std::size_t i = 0; i < r.entities().size(); ++i)
        if (r.counts()[i] > 0)
            traj.final_counts[r.entity_key(static_cast<EntityId>(i))] = r.counts()[i];
    return traj;
}

}  // namespace crs
