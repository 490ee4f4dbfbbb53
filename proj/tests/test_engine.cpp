#include <catch_amalgamated.hpp>

#include <cmath>

#include "crs/engine.hpp"
#include "crs/stats.hpp"

using namespace crs;

namespace {

ChemistryParams chem_params(double p, std::uint64_t seed, int l_max = 4) {
    ChemistryParams cp;
    cp.p = p;
    cp.chem_seed = seed;
    cp.l_max_product = l_max;
    return cp;
}

ReactorConfig closed_reactor() {
    ReactorConfig r;
    r.mode = ReactorMode::Cstr;
    r.hybrid_buffered = false;
    return r;  // no rates, no feed: nothing crosses the boundary
}

EntityId entity_of(const Reactor& r, const std::string& key) {
    for (std::size_t i = 0; i < r.entities().size(); ++i)
        if (r.entity_key(static_cast<EntityId>(i)) == key)
            return static_cast<EntityId>(i);
    return kNoEntity;
}

std::size_t find_channel(const Reactor& r, ChannelKind kind, EntityId r1, EntityId r2) {
    for (std::size_t i = 0; i < r.channels().size(); ++i) {
        const Channel& c = r.channels()[i];
        if (c.kind == kind && c.r1 == r1 && c.r2 == r2) return i;
    }
    FAIL("channel not found");
    return 0;
}

}  // namespace

TEST_CASE("cleavage propensity is mass-action with self-pair correction") {
    KineticParams k;
    k.k_cleave = 1.0;
    Reactor r(Chemistry(chem_params(1.0, 2)), closed_reactor(), k);

    EntityId ab = entity_of(r, "AB");
    EntityId bb = entity_of(r, "BB");
    r.set_count("AB", 3);
    r.set_count("BB", 2);
    std::size_t distinct = find_channel(r, ChannelKind::Cleavage, bb, ab);
    CHECK(r.propensity(distinct) == 6.0);

    // Catalyst == substrate: distinct ordered pairs, n(n-1).
    std::size_t self = find_channel(r, ChannelKind::Cleavage, ab, ab);
    CHECK(r.propensity(self) == 6.0);

    r.set_count("BB", 0);
    CHECK(r.propensity(distinct) == 0.0);
}

TEST_CASE("transport propensities") {
    SECTION("protocell traps long entities and passes short ones") {
        ReactorConfig cfg;
        cfg.mode = ReactorMode::Protocell;
        cfg.l_perm = 3;
        cfg.k_mem = 0.5;
        Reactor r(Chemistry(chem_params(0.0, 1, 8)), cfg, KineticParams{});
        r.set_count("ABABA", 7);
        r.set_count("AB", 4);
        EntityId longe = entity_of(r, "ABABA");
        for (const Channel& c : r.channels())
            CHECK_FALSE((c.kind == ChannelKind::Efflux && c.r1 == longe));
        EntityId shorte = entity_of(r, "AB");
        CHECK(r.propensity(find_channel(r, ChannelKind::Efflux, shorte, kNoEntity)) == 2.0);
    }

    SECTION("CSTR flows out every entity including complexes") {
        ReactorConfig cfg;
        cfg.mode = ReactorMode::Cstr;
        cfg.k_out = 1.0;
        cfg.hybrid_buffered = false;
        KineticParams k;
        k.k_complex = 1.0;
        Reactor r(Chemistry(chem_params(1.0, 2)), cfg, k);
        r.set_count("B", 1);
        r.set_count("A", 1);
        // Form complex(B, A) by firing the formation channel directly.
        EntityId a = entity_of(r, "A");
        EntityId b = entity_of(r, "B");
        r.apply(find_channel(r, ChannelKind::ComplexFormation, b, a));
        EntityId x = entity_of(r, "B*A");
        REQUIRE(x != kNoEntity);
        REQUIRE(r.count(x) == 1);

        r.set_count("A", 2);
        r.set_count("AB", 3);
        EntityId ab = entity_of(r, "AB");
        CHECK(r.propensity(find_channel(r, ChannelKind::Efflux, a, kNoEntity)) == 2.0);
        CHECK(r.propensity(find_channel(r, ChannelKind::Efflux, ab, kNoEntity)) == 3.0);
        CHECK(r.propensity(find_channel(r, ChannelKind::Efflux, x, kNoEntity)) == 1.0);
    }
}

TEST_CASE("direct-method step") {
    ReactorConfig cfg;
    cfg.mode = ReactorMode::Cstr;
    cfg.k_out = 1.0;
    cfg.hybrid_buffered = false;
    Reactor r(Chemistry(chem_params(0.0, 1)), cfg, KineticParams{});

    SECTION("all counts zero is quiescent") {
        std::mt19937_64 rng(0);
        CHECK_FALSE(r.propose(rng).has_value());
    }

    SECTION("tau from a single channel") {
        r.set_count("A", 2);  // one efflux channel, a0 = 2
        auto s = r.propose_with(0.5, 0.5);
        REQUIRE(s);
        CHECK(s->tau == Catch::Approx(std::log(2.0) / 2.0).epsilon(1e-12));
    }

    SECTION("selection picks the smallest index reaching u2*a0") {
        r.set_count("A", 1);
        r.set_count("B", 3);
        EntityId a = entity_of(r, "A");
        auto s = r.propose_with(0.5, 0.25);  // target 1.0 over channels (1.0, 3.0)
        REQUIRE(s);
        CHECK(s->channel == find_channel(r, ChannelKind::Efflux, a, kNoEntity));
    }
}

TEST_CASE("event application keeps stoichiometry and bricks") {
    KineticParams k;
    k.k_complex = 1.0;
    k.k_release = 1.0;
    k.k_cleave = 1.0;
    Reactor r(Chemistry(chem_params(1.0, 2)), closed_reactor(), k);

    SECTION("cleavage conserves bricks") {
        r.set_count("AB", 1);
        r.set_count("BB", 1);
        EntityId bb = entity_of(r, "BB");
        EntityId ab = entity_of(r, "AB");
        std::int64_t before = r.total_mass();
        r.apply(find_channel(r, ChannelKind::Cleavage, bb, ab));
        CHECK(r.count_of("AB") == 0);
        CHECK(r.count_of("A") == 1);
        CHECK(r.count_of("B") == 1);
        CHECK(r.count_of("BB") == 1);  // catalyst untouched
        CHECK(r.total_mass() == before);
    }

    SECTION("condensation cycle restores the catalyst") {
        r.set_count("BB", 2);
        r.set_count("A", 1);
        r.set_count("B", 1);
        EntityId a = entity_of(r, "A");
        EntityId b = entity_of(r, "B");
        EntityId bb = entity_of(r, "BB");
        std::int64_t before = r.total_mass();

        r.apply(find_channel(r, ChannelKind::ComplexFormation, bb, a));
        EntityId x = entity_of(r, "BB*A");
        CHECK(r.count_of("BB") == 1);
        CHECK(r.count_of("A") == 0);
        CHECK(r.count(x) == 1);
        CHECK(r.total_mass() == before);

        r.apply(find_channel(r, ChannelKind::ProductRelease, x, b));
        CHECK(r.count(x) == 0);
        CHECK(r.count_of("B") == 0);
        CHECK(r.count_of("AB") == 1);
        CHECK(r.count_of("BB") == 2);
        CHECK(r.total_mass() == before);
    }

    SECTION("applying to a zero count is a fatal consistency error") {
        EntityId bb = entity_of(r, "BB");
        EntityId ab = entity_of(r, "AB");
        CHECK_THROWS_AS(r.apply(find_channel(r, ChannelKind::Cleavage, bb, ab)),
                        std::logic_error);
    }
}

TEST_CASE("incremental propensities match a from-scratch recomputation") {
    KineticParams k;
    k.k_complex = 0.01;
    k.k_release = 0.01;
    k.k_cleave = 0.01;
    Reactor r(Chemistry(chem_params(1.0, 4, 6)), closed_reactor(), k);
    for (const char* s : {"A", "B", "AA", "AB", "BA", "BB"}) r.set_count(s, 20);
    std::mt19937_64 rng(3);
    for (int i = 0; i < 2000; ++i) {
        auto s = r.propose(rng);
        if (!s) break;
        r.commit(*s);
    }
    CHECK(r.audit_propensities() < 1e-9);
}

TEST_CASE("quiescent run holds constant samples") {
    Trajectory traj = run_simulation(Chemistry(chem_params(0.0, 1)), closed_reactor(),
                                     KineticParams{}, {{"AB", 5}},
                                     {.t_end = 10, .dt_obs = 5, .sim_seed = 0});
    REQUIRE(traj.observations.size() == 3);
    for (const auto& o : traj.observations) {
        CHECK(o.total_mass == 10);
        CHECK(o.richness == 1);
        CHECK(o.max_len == 2);
    }
    CHECK(traj.event_count == 0);
}

TEST_CASE("same seed reproduces the trajectory") {
    Chemistry chem(chem_params(0.05, 12, 4));
    ReactorConfig cfg;
    cfg.mode = ReactorMode::Cstr;
    cfg.k_out = 0.05;
    cfg.feed = {{"A", 50}, {"B", 50}};
    KineticParams k;
    k.k_complex = 0.01;
    k.k_release = 0.01;
    k.k_cleave = 0.01;
    RunOptions opt{.t_end = 50, .dt_obs = 5, .sim_seed = 99, .max_events = 50000};
    std::unordered_map<std::string, std::int64_t> init{{"AA", 30}, {"BB", 30}};
    Trajectory t1 = run_simulation(chem, cfg, k, init, opt);
    Trajectory t2 = run_simulation(chem, cfg, k, init, opt);
    REQUIRE(t1.observations.size() == t2.observations.size());
    CHECK(t1.event_count == t2.event_count);
    for (std::size_t i = 0; i < t1.observations.size(); ++i) {
        CHECK(t1.observations[i].total_mass == t2.observations[i].total_mass);
        CHECK(t1.observations[i].richness == t2.observations[i].richness);
    }
    CHECK(t1.final_counts == t2.final_counts);
}

TEST_CASE("brick conservation in closed systems") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        Chemistry chem(chem_params(0.2, seed, 6));
        std::unordered_map<std::string, std::int64_t> init;
        for (const char* s : {"A", "B", "AA", "AB", "BA", "BB"}) init[s] = 25;
        KineticParams k;
        k.k_complex = 0.05;
        k.k_release = 0.05;
        k.k_cleave = 0.05;
        Trajectory traj = run_simulation(chem, closed_reactor(), k, init,
                                         {.t_end = 1000, .dt_obs = 10, .sim_seed = seed,
                                          .max_events = 10000});
        // 25 monomers x2 plus 25 dimers x4: 25 * (2*1 + 4*2) bricks.
        for (const auto& o : traj.observations) CHECK(o.total_mass == 250);
    }
}

TEST_CASE("pure-death mean matches the analytic decay") {
    // Single species, first-order efflux, k = 1, t = 1: E[n] = n0 e^{-1}.
    ReactorConfig cfg;
    cfg.mode = ReactorMode::Cstr;
    cfg.k_out = 1.0;
    cfg.hybrid_buffered = false;
    Chemistry chem(chem_params(0.0, 1));
    const int runs = 1000;
    const double n0 = 1000;
    double sum = 0.0;
    for (int i = 0; i < runs; ++i) {
        Trajectory t = run_simulation(chem, cfg, KineticParams{}, {{"A", 1000}},
                                      {.t_end = 1.0, .dt_obs = 1.0,
                                       .sim_seed = static_cast<std::uint64_t>(i)});
        sum += static_cast<double>(t.observations.back().total_mass);
    }
    double mean = sum / runs;
    double expected = n0 * std::exp(-1.0);
    double sigma_run = std::sqrt(n0 * std::exp(-1.0) * (1 - std::exp(-1.0)));
    double sigma_mean = sigma_run / std::sqrt(static_cast<double>(runs));
    CHECK(std::abs(mean - expected) < 3 * sigma_mean);
}

TEST_CASE("inter-event times of a buffered first-order channel are exponential") {
    // Buffered species clamped at 100 with k_out = 1: a0 is constant at 100.
    ReactorConfig cfg;
    cfg.mode = ReactorMode::Cstr;
    cfg.k_out = 1.0;
    cfg.feed = {{"A", 100}};
    Chemistry chem(chem_params(0.0, 1));
    Trajectory t = run_simulation(chem, cfg, KineticParams{}, {},
                                  {.t_end = 200.0, .dt_obs = 200.0, .sim_seed = 5,
                                   .record_events = true, .max_events = 10000});
    REQUIRE(t.events.size() == 10000);
    std::vector<double> waits;
    double prev = 0.0;
    for (const auto& e : t.events) {
        waits.push_back(e.t - prev);
        prev = e.t;
    }
    CHECK(crs::stats::ks_pvalue_exponential(waits, 100.0) > 0.01);
}

TEST_CASE("protocell trapping invariant") {
    Chemistry chem(chem_params(0.05, 6, 6));
    ReactorConfig cfg;
    cfg.mode = ReactorMode::Protocell;
    cfg.l_perm = 2;
    cfg.k_mem = 0.05;
    cfg.external = {{"A", 30}, {"B", 30}, {"AA", 30}, {"AB", 30}, {"BA", 30}, {"BB", 30}};
    KineticParams k;
    k.k_complex = 0.01;
    k.k_release = 0.01;
    k.k_cleave = 0.01;
    std::unordered_map<std::string, std::int64_t> init{{"AA", 50}, {"BB", 50}};
    Trajectory t = run_simulation(chem, cfg, k, init,
                                  {.t_end = 100, .dt_obs = 10, .sim_seed = 8,
                                   .max_events = 100000});
    CHECK(t.trapped_efflux_violations == 0);
    CHECK(t.event_count > 0);
}

TEST_CASE("hybrid buffering clamps feed counts at every observation") {
    Chemistry chem(chem_params(0.1, 6, 4));
    ReactorConfig cfg;
    cfg.mode = ReactorMode::Cstr;
    cfg.k_out = 0.1;
    cfg.feed = {{"A", 40}, {"B", 40}};
    KineticParams k;
    k.k_complex = 0.02;
    k.k_release = 0.02;
    k.k_cleave = 0.02;
    RunOptions opt{.t_end = 50, .dt_obs = 5, .sim_seed = 4,
                   .record_species_samples = true, .max_events = 100000};
    Trajectory t = run_simulation(chem, cfg, k, {}, opt);
    REQUIRE(t.event_count > 0);
    std::size_t col_a = 0, col_b = 0;
    for (std::size_t i = 0; i < t.species_columns.size(); ++i) {
        if (t.species_columns[i] == "A") col_a = i;
        if (t.species_columns[i] == "B") col_b = i;
    }
    for (const auto& row : t.species_samples) {
        CHECK(row[col_a] == 40);
        CHECK(row[col_b] == 40);
    }
}

TEST_CASE("a dynamically created species expands the chemistry") {
    // p = 1 guarantees A+B -> AB is catalyzed; AB is produced, and its own
    // reactions must then exist.
    Chemistry chem(chem_params(1.0, 3, 4));
    ChemistryParams cp = chem_params(1.0, 3, 4);
    cp.initial_max_len = 1;
    Chemistry small(cp);
    CHECK(small.species_count() >= 2);
    KineticParams k;
    k.k_complex = 1.0;
    k.k_release = 1.0;
    k.k_cleave = 0.0;
    Trajectory t = run_simulation(small, closed_reactor(), k, {{"A", 30}, {"B", 30}},
                                  {.t_end = 100, .dt_obs = 10, .sim_seed = 1,
                                   .max_events = 500});
    bool found_len2 = false;
    for (const auto& [key, n] : t.final_counts)
        if (key.find('*') == std::string::npos && key.size() >= 2) found_len2 = true;
    CHECK(found_len2);
}
