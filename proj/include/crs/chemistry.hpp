#pragma once

// Binary-polymer catalytic reaction sets: species are strings over a small
// alphabet, reactions are catalyzed cleavages and condensations, and the
// catalysis assignment is a pure keyed draw so the same (seed, p) always
// yields the same chemistry regardless of the order in which species are
// discovered.

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace crs {

using SpeciesId = std::int32_t;
constexpr SpeciesId kNoSpecies = -1;

struct Alphabet {
    std::string symbols = "AB";

    void validate() const {
        if (symbols.empty())
            throw std::invalid_argument("alphabet: needs at least one symbol");
        std::string s = symbols;
        std::sort(s.begin(), s.end());
        if (std::adjacent_find(s.begin(), s.end()) != s.end())
            throw std::invalid_argument("alphabet: symbols must be distinct");
        if (symbols.find('|') != std::string::npos)
            throw std::invalid_argument("alphabet: '|' is reserved as a separator");
    }

    bool contains(char c) const { return symbols.find(c) != std::string::npos; }

    bool spans(const std::string& seq) const {
        for (char c : seq)
            if (!contains(c)) return false;
        return !seq.empty();
    }
};

enum class ReactionKind : std::uint8_t { Cleavage, Condensation };

// Cleavage:     a = substrate, b = left, c = right, cut = len(left).
// Condensation: a = first, b = second, c = product.
struct Reaction {
    ReactionKind kind;
    SpeciesId a = kNoSpecies;
    SpeciesId b = kNoSpecies;
    SpeciesId c = kNoSpecies;
    std::int32_t cut = 0;

    friend bool operator==(const Reaction&, const Reaction&) = default;
};

struct Catalysis {
    Reaction reaction;
    SpeciesId catalyst = kNoSpecies;

    friend bool operator==(const Catalysis&, const Catalysis&) = default;
};

struct ChemistryParams {
    double p = 0.5;
    std::uint64_t chem_seed = 0;
    Alphabet alphabet;
    std::int32_t l_max_product = 16;
    std::int32_t initial_max_len = 2;

    void validate() const {
        alphabet.validate();
        if (!(p >= 0.0 && p <= 1.0))
            throw std::invalid_argument("p: must be in [0,1]");
        if (initial_max_len < 1)
            throw std::invalid_argument("initial_max_len: must be >= 1");
        if (l_max_product < initial_max_len)
            throw std::invalid_argument("l_max_product: must be >= initial_max_len");
    }

    friend bool operator==(const ChemistryParams& x, const ChemistryParams& y) {
        return x.p == y.p && x.chem_seed == y.chem_seed &&
               x.alphabet.symbols == y.alphabet.symbols &&
               x.l_max_product == y.l_max_product &&
               x.initial_max_len == y.initial_max_len;
    }
};

// FNV-1a 64-bit.
inline std::uint64_t fnv1a64(const void* data, std::size_t n,
                             std::uint64_t h = 0xcbf29ce484222325ull) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

// murmur3 finalizer. Raw FNV-1a avalanches poorly into the top bits for
// trailing-byte changes, and the draw below compares exactly those bits
// against p, which correlates draws for items sharing a long prefix.
inline std::uint64_t mix64(std::uint64_t h) {
    h ^= h >> 33;
    h *= 0xff51afd7ed558ccdull;
    h ^= h >> 33;
    h *= 0xc4ceb9fe1a85ec53ull;
    h ^= h >> 33;
    return h;
}

// The evolving registry of species and catalyzed reactions.
//
// "Registered" species have had their conceivable reactions enumerated and
// their catalysis draws taken. Products of stored condensations may be known
// by sequence but still unregistered; they join the registry the first time
// the dynamics produces them (expand()).
class Chemistry {
public:
    Chemistry() = default;

    explicit Chemistry(const ChemistryParams& params) : params_(params) {
        params_.validate();
        std::vector<std::string> initial;
        std::string cur;
        enumerate_sequences(cur, params_.initial_max_len, initial);
        std::sort(initial.begin(), initial.end(), len_lex_less);
        for (const auto& s : initial) intern(s);
        for (const auto& s : initial) register_species(s);
    }

    const ChemistryParams& params() const { return params_; }

    SpeciesId find(const std::string& seq) const {
        auto it = index_.find(seq);
        return it == index_.end() ? kNoSpecies : it->second;
    }

    const std::string& sequence(SpeciesId id) const { return seqs_[static_cast<std::size_t>(id)]; }
    std::int32_t length(SpeciesId id) const {
        return static_cast<std::int32_t>(seqs_[static_cast<std::size_t>(id)].size());
    }
    std::size_t species_count() const { return seqs_.size(); }
    bool is_registered(SpeciesId id) const { return registered_[static_cast<std::size_t>(id)]; }

    const std::vector<Catalysis>& catalyses() const { return catalyses_; }

    // Known sequence -> id, adding an unregistered entry if absent.
    SpeciesId intern(const std::string& seq) {
        auto it = index_.find(seq);
        if (it != index_.end()) return it->second;
        if (!params_.alphabet.spans(seq))
            throw std::invalid_argument("species '" + seq + "' not over the alphabet");
        auto id = static_cast<SpeciesId>(seqs_.size());
        seqs_.push_back(seq);
        registered_.push_back(false);
        index_.emplace(seq, id);
        return id;
    }

    std::string canonical_encode(const Catalysis& cat) const {
        const Reaction& r = cat.reaction;
        std::string out;
        out.reserve(8 + seqs_[static_cast<std::size_t>(r.a)].size() * 3);
        out += (r.kind == ReactionKind::Condensation) ? 'C' : 'X';
        out += '|';
        out += sequence(r.a);
        out += '|';
        out += sequence(r.b);
        out += '|';
        out += sequence(r.c);
        out += '|';
        out += sequence(cat.catalyst);
        return out;
    }

    bool catalysis_draw(const Catalysis& cat) const {
        return draw(params_.chem_seed, canonical_encode(cat), params_.p);
    }

    // Pure draw rule shared by every implementation of this chemistry.
    static bool draw(std::uint64_t chem_seed, const std::string& encoded, double p) {
        unsigned char seed_bytes[8];
        for (int i = 0; i < 8; ++i)
            seed_bytes[i] = static_cast<unsigned char>((chem_seed >> (8 * i)) & 0xff);
        std::uint64_t h = fnv1a64(seed_bytes, 8);
        h = mix64(fnv1a64(encoded.data(), encoded.size(), h));
        double u = static_cast<double>(h >> 11) * 0x1.0p-53;
        return u < p;
    }

    // All cuts of s, ascending cut position. Length-1 species yield nothing.
    std::vector<Reaction> enumerate_cleavages(SpeciesId s) {
        const std::string seq = sequence(s);
        std::vector<Reaction> out;
        const auto n = static_cast<std::int32_t>(seq.size());
        out.reserve(static_cast<std::size_t>(n > 0 ? n - 1 : 0));
        for (std::int32_t cut = 1; cut < n; ++cut) {
            SpeciesId left = intern(seq.substr(0, static_cast<std::size_t>(cut)));
            SpeciesId right = intern(seq.substr(static_cast<std::size_t>(cut)));
            out.push_back({ReactionKind::Cleavage, s, left, right, cut});
        }
        return out;
    }

    // Ordered pairs over `partners` that involve `novel` at least once, product
    // length capped. Order is lexicographic by canonical reaction fields.
    std::vector<Reaction> enumerate_condensations(SpeciesId novel,
                                                  const std::vector<SpeciesId>& partners) {
        std::vector<std::pair<SpeciesId, SpeciesId>> pairs;
        const std::int32_t ln = length(novel);
        for (SpeciesId s : partners) {
            if (ln + length(s) > params_.l_max_product) continue;
            pairs.emplace_back(novel, s);
            if (s != novel) pairs.emplace_back(s, novel);
        }
        std::sort(pairs.begin(), pairs.end(), [this](const auto& x, const auto& y) {
            if (sequence(x.first) != sequence(y.first))
                return sequence(x.first) < sequence(y.first);
            return sequence(x.second) < sequence(y.second);
        });
        std::vector<Reaction> out;
        out.reserve(pairs.size());
        for (auto [f, s] : pairs) {
            SpeciesId prod = intern(sequence(f) + sequence(s));
            out.push_back({ReactionKind::Condensation, f, s, prod, 0});
        }
        return out;
    }

    // Registers `seq`, enumerates its reactions against the current registry,
    // draws catalyses, and returns the additions. No-op for registered species.
    std::vector<Catalysis> expand(const std::string& seq) {
        SpeciesId id = intern(seq);
        if (registered_[static_cast<std::size_t>(id)]) return {};
        return register_species(seq);
    }

private:
    static bool len_lex_less(const std::string& x, const std::string& y) {
        if (x.size() != y.size()) return x.size() < y.size();
        return x < y;
    }

    void enumerate_sequences(std::string& cur, std::int32_t max_len,
                             std::vector<std::string>& out) const {
        if (!cur.empty()) out.push_back(cur);
        if (static_cast<std::int32_t>(cur.size()) == max_len) return;
        for (char c : params_.alphabet.symbols) {
            cur.push_back(c);
            enumerate_sequences(cur, max_len, out);
            cur.pop_back();
        }
    }

    // Every conceivable reaction whose substrates all lie in the registry.
    std::vector<Reaction> conceivable_reactions() {
        std::vector<SpeciesId> reg = registered_ids();
        std::vector<Reaction> out;
        for (SpeciesId s : reg) {
            auto cl = enumerate_cleavages(s);
            out.insert(out.end(), cl.begin(), cl.end());
        }
        for (SpeciesId f : reg) {
            const std::int32_t lf = length(f);
            for (SpeciesId s : reg) {
                if (lf + length(s) > params_.l_max_product) continue;
                SpeciesId prod = intern(sequence(f) + sequence(s));
                out.push_back({ReactionKind::Condensation, f, s, prod, 0});
            }
        }
        return out;
    }

    std::vector<SpeciesId> registered_ids() const {
        std::vector<SpeciesId> out;
        for (std::size_t i = 0; i < seqs_.size(); ++i)
            if (registered_[i]) out.push_back(static_cast<SpeciesId>(i));
        return out;
    }

    std::vector<Catalysis> register_species(const std::string& seq) {
        SpeciesId id = intern(seq);
        // Reactions present before this species joins: everything conceivable
        // over the prior registry. Kept implicit (re-enumerated) so storage
        // stays proportional to realized catalyses.
        std::vector<Reaction> prior = conceivable_reactions();

        registered_[static_cast<std::size_t>(id)] = true;
        std::vector<SpeciesId> reg = registered_ids();

        std::vector<Reaction> fresh = enumerate_cleavages(id);
        auto cond = enumerate_condensations(id, reg);
        fresh.insert(fresh.end(), cond.begin(), cond.end());

        std::vector<Catalysis> added;
        for (const Reaction& r : fresh)
            for (SpeciesId cat : reg)
                try_draw({r, cat}, added);
        for (const Reaction& r : prior)
            try_draw({r, id}, added);

        catalyses_.insert(catalyses_.end(), added.begin(), added.end());
        return added;
    }

    void try_draw(const Catalysis& cand, std::vector<Catalysis>& added) const {
        check_sound(cand.reaction);
        if (draw(params_.chem_seed, canonical_encode(cand), params_.p))
            added.push_back(cand);
    }

    void check_sound(const Reaction& r) const {
        if (r.kind == ReactionKind::Cleavage) {
            if (sequence(r.b) + sequence(r.c) != sequence(r.a) ||
                r.cut != length(r.b))
                throw std::logic_error("unsound cleavage template");
        } else {
            if (sequence(r.a) + sequence(r.b) != sequence(r.c))
                throw std::logic_error("unsound condensation template");
            if (length(r.c) > params_.l_max_product)
                throw std::logic_error("condensation product exceeds length cap");
        }
    }

    ChemistryParams params_;
    std::vector<std::string> seqs_;
    std::vector<bool> registered_;
    std::unordered_map<std::string, SpeciesId> index_;
    std::vector<Catalysis> catalyses_;
};

inline Chemistry generate_chemistry(const ChemistryParams& params) {
    return Chemistry(params);
}

}  // namespace crs
