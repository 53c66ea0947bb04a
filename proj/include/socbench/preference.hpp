#ifndef SOCBENCH_PREFERENCE_HPP
#define SOCBENCH_PREFERENCE_HPP

#include <algorithm>
#include <array>
#include <bit>
#include <cctype>
#include <cstdint>
#include <initializer_list>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "socbench/error.hpp"

namespace socbench {

// Canonical truck order; also the tie-break order for exploration.
inline constexpr std::array<char, 5> kTruckLabels = {'X', 'Y', 'Z', 'M', 'N'};

inline int truck_rank(char t) {
    for (int i = 0; i < 5; ++i)
        if (kTruckLabels[i] == t) return i;
    return -1;
}

inline bool is_truck(char t) { return truck_rank(t) >= 0; }

class TruckSet {
public:
    TruckSet() = default;
    TruckSet(std::initializer_list<char> labels) {
        for (char t : labels) insert(t);
    }

    static TruckSet all() {
        TruckSet s;
        s.bits_ = 0x1f;
        return s;
    }

    void insert(char t) {
        int r = truck_rank(t);
        if (r < 0) throw InputError(std::string("unknown truck label '") + t + "'");
        bits_ |= static_cast<uint8_t>(1u << r);
    }
    void erase(char t) {
        int r = truck_rank(t);
        if (r >= 0) bits_ &= static_cast<uint8_t>(~(1u << r));
    }
    bool contains(char t) const {
        int r = truck_rank(t);
        return r >= 0 && (bits_ >> r) & 1u;
    }
    int size() const { return std::popcount(bits_); }
    bool empty() const { return bits_ == 0; }

    // Members in canonical order.
    std::vector<char> labels() const {
        std::vector<char> out;
        for (char t : kTruckLabels)
            if (contains(t)) out.push_back(t);
        return out;
    }

    friend TruckSet operator|(TruckSet a, TruckSet b) { return from_bits(a.bits_ | b.bits_); }
    friend TruckSet operator&(TruckSet a, TruckSet b) { return from_bits(a.bits_ & b.bits_); }
    friend TruckSet operator-(TruckSet a, TruckSet b) { return from_bits(a.bits_ & ~b.bits_); }
    TruckSet& operator|=(TruckSet o) {
        bits_ |= o.bits_;
        return *this;
    }
    friend bool operator==(TruckSet, TruckSet) = default;

private:
    static TruckSet from_bits(unsigned b) {
        TruckSet s;
        s.bits_ = static_cast<uint8_t>(b & 0x1f);
        return s;
    }
    uint8_t bits_ = 0;
};

inline std::string join_labels(const std::vector<char>& labels, std::string_view sep = ",") {
    std::string out;
    for (size_t i = 0; i < labels.size(); ++i) {
        if (i) out += sep;
        out.push_back(labels[i]);
    }
    return out;
}

// A strict total order over all five trucks, most preferred first.
struct RigidPreference {
    std::array<char, 5> order = kTruckLabels;

    char operator[](size_t i) const { return order[i]; }

    int position(char t) const {
        for (int i = 0; i < 5; ++i)
            if (order[i] == t) return i;
        return -1;
    }

    std::string str() const { return join_labels({order.begin(), order.end()}, ">"); }

    static RigidPreference parse(std::string_view text);

    friend auto operator<=>(const RigidPreference&, const RigidPreference&) = default;
};

inline void validate_preference(const RigidPreference& p) {
    TruckSet s;
    for (char t : p.order) {
        if (!is_truck(t)) throw InputError(std::string("unknown truck label '") + t + "' in preference");
        if (s.contains(t)) throw InputError(std::string("truck '") + t + "' repeated in preference");
        s.insert(t);
    }
}

// All 120 permutations in lexicographic order of truck rank.
inline std::vector<RigidPreference> all_preferences() {
    std::array<int, 5> idx = {0, 1, 2, 3, 4};
    std::vector<RigidPreference> out;
    do {
        RigidPreference p;
        for (int i = 0; i < 5; ++i) p.order[i] = kTruckLabels[idx[i]];
        out.push_back(p);
    } while (std::next_permutation(idx.begin(), idx.end()));
    return out;
}

// Ranked groups followed by an undetermined set, e.g. "Z > {M,X,Y}, {N}".
struct PreferenceLabel {
    std::vector<TruckSet> chain;
    TruckSet undetermined;

    TruckSet covered() const {
        TruckSet s = undetermined;
        for (auto g : chain) s |= g;
        return s;
    }

    // Trucks that are most preferred in at least one linear extension.
    TruckSet possible_top() const { return chain.empty() ? undetermined : (chain.front() | undetermined); }

    // The label with `t` deleted everywhere; emptied groups disappear.
    PreferenceLabel without(char t) const {
        PreferenceLabel out;
        for (auto g : chain) {
            g.erase(t);
            if (!g.empty()) out.chain.push_back(g);
        }
        out.undetermined = undetermined;
        out.undetermined.erase(t);
        return out;
    }

    friend bool operator==(const PreferenceLabel&, const PreferenceLabel&) = default;
};

inline void validate_label(const PreferenceLabel& l) {
    if (l.chain.empty()) throw InputError("preference label has an empty chain");
    TruckSet seen = l.undetermined;
    for (auto g : l.chain) {
        if (g.empty()) throw InputError("preference label has an empty group");
        if (!(seen & g).empty()) throw InputError("preference label groups overlap");
        seen |= g;
    }
    if (seen != TruckSet::all()) throw InputError("preference label does not cover all five trucks");
}

// True when every group precedes all later groups in `p`.
inline bool is_linear_extension(const RigidPreference& p, const PreferenceLabel& l) {
    for (size_t i = 0; i < l.chain.size(); ++i)
        for (size_t j = i + 1; j < l.chain.size(); ++j)
            for (char a : l.chain[i].labels())
                for (char b : l.chain[j].labels())
                    if (p.position(a) > p.position(b)) return false;
    return true;
}

enum class LabelStyle {
    Compact, // "N>Y>{X,Z,M}": no spaces, set members in truck order
    Spaced,  // "X > {M,N,Y,Z}": spaced arrows, set members alphabetical
};

inline std::string render_label(const PreferenceLabel& l, LabelStyle style) {
    auto members = [&](TruckSet s) {
        auto v = s.labels();
        if (style == LabelStyle::Spaced) std::sort(v.begin(), v.end());
        return v;
    };
    auto group = [&](TruckSet s, bool force_braces) {
        auto v = members(s);
        if (v.size() == 1 && !force_braces) return std::string(1, v.front());
        return "{" + join_labels(v) + "}";
    };
    std::string out;
    const char* arrow = style == LabelStyle::Compact ? ">" : " > ";
    for (size_t i = 0; i < l.chain.size(); ++i) {
        if (i) out += arrow;
        out += group(l.chain[i], false);
    }
    if (!l.undetermined.empty()) {
        out += style == LabelStyle::Compact ? "," : ", ";
        out += group(l.undetermined, true);
    }
    return out;
}

// Answer-sheet convention: chains of three or more groups are written compactly,
// shorter chains with spaced arrows.
inline std::string render_label(const PreferenceLabel& l) {
    return render_label(l, l.chain.size() >= 3 ? LabelStyle::Compact : LabelStyle::Spaced);
}

// Grammar violations name the rule that failed.
struct GrammarError {
    std::string rule;
    size_t position = 0;
    std::string message;

    std::string str() const { return rule + " at offset " + std::to_string(position) + ": " + message; }
};

// Recursive-descent parser for
//   expr  := chain [ ',' set ]
//   chain := group ( '>' group )*
//   group := label | set
//   set   := '{' label ( ',' label )* '}'
//   label := X | Y | Z | M | N
// Whitespace is allowed between tokens. parse() consumes the whole input;
// parse_prefix() stops after the longest well-formed expression.
class PreferenceGrammar {
public:
    explicit PreferenceGrammar(std::string_view text, size_t start = 0) : text_(text), pos_(start) {}

    struct Result {
        PreferenceLabel label;
        size_t begin = 0;
        size_t end = 0;
    };

    std::optional<Result> parse_prefix(GrammarError* err = nullptr) {
        size_t begin = pos_;
        PreferenceLabel l;
        auto g = group(err);
        if (!g) return std::nullopt;
        l.chain.push_back(*g);
        size_t committed = pos_;
        for (;;) {
            size_t save = pos_;
            skip_ws();
            if (!eat('>')) {
                pos_ = save;
                break;
            }
            skip_ws();
            auto next = group(err);
            if (!next) {
                pos_ = save;
                break;
            }
            l.chain.push_back(*next);
            committed = pos_;
        }
        pos_ = committed;
        size_t save = pos_;
        skip_ws();
        if (eat(',')) {
            skip_ws();
            if (peek() == '{') {
                auto u = set(err);
                if (u) {
                    l.undetermined = *u;
                    committed = pos_;
                }
            }
        }
        pos_ = committed;
        (void)save;
        return Result{l, begin, pos_};
    }

    // Whole-input parse; on failure fills `err` with the violated rule.
    std::optional<PreferenceLabel> parse(GrammarError& err) {
        skip_ws();
        auto g = group(&err);
        if (!g) return std::nullopt;
        PreferenceLabel l;
        l.chain.push_back(*g);
        for (;;) {
            skip_ws();
            if (at_end()) break;
            if (eat('>')) {
                skip_ws();
                auto next = group(&err);
                if (!next) return std::nullopt;
                l.chain.push_back(*next);
                continue;
            }
            if (eat(',')) {
                skip_ws();
                if (peek() != '{') return fail<PreferenceLabel>(&err, "undetermined", "expected '{' after ','");
                auto u = set(&err);
                if (!u) return std::nullopt;
                l.undetermined = *u;
                skip_ws();
                if (!at_end()) return fail<PreferenceLabel>(&err, "expr", "unexpected text after the undetermined set");
                break;
            }
            return fail<PreferenceLabel>(&err, "chain", std::string("expected '>' or ',' but found '") + peek() + "'");
        }
        TruckSet seen = l.undetermined;
        for (auto grp : l.chain) {
            if (!(seen & grp).empty()) {
                err = {"disjoint", pos_, "a truck appears in more than one group"};
                return std::nullopt;
            }
            seen |= grp;
        }
        return l;
    }

private:
    bool at_end() const { return pos_ >= text_.size(); }
    char peek() const { return at_end() ? '\0' : text_[pos_]; }
    bool eat(char c) {
        if (peek() != c) return false;
        ++pos_;
        return true;
    }
    void skip_ws() {
        while (!at_end() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    }

    template <class T = TruckSet>
    std::optional<T> fail(GrammarError* err, std::string rule, std::string msg) {
        if (err) *err = {std::move(rule), pos_, std::move(msg)};
        return std::nullopt;
    }

    std::optional<TruckSet> label(GrammarError* err) {
        char c = peek();
        if (!is_truck(c)) {
            if (at_end()) return fail(err, "label", "expected a truck label but input ended");
            return fail(err, "label", std::string("unknown label '") + c + "'");
        }
        ++pos_;
        // A label must not run into further letters ("XY", "Mexico").
        if (std::isalnum(static_cast<unsigned char>(peek()))) return fail(err, "label", "label runs into other text");
        return TruckSet{c};
    }

    std::optional<TruckSet> set(GrammarError* err) {
        if (!eat('{')) return fail(err, "set", "expected '{'");
        TruckSet s;
        skip_ws();
        for (;;) {
            auto l = label(err);
            if (!l) return std::nullopt;
            if (!(s & *l).empty()) return fail(err, "disjoint", "truck repeated inside a set");
            s |= *l;
            skip_ws();
            if (eat('}')) return s;
            if (!eat(',')) {
                if (at_end()) return fail(err, "set", "unterminated set, expected '}'");
                return fail(err, "set", std::string("expected ',' or '}' but found '") + peek() + "'");
            }
            skip_ws();
        }
    }

    std::optional<TruckSet> group(GrammarError* err) {
        if (peek() == '{') return set(err);
        return label(err);
    }

    std::string_view text_;
    size_t pos_;
};

// Strict parse of a complete label string. Trucks not mentioned are added to
// the undetermined set unless `require_all` is set.
inline PreferenceLabel parse_label(std::string_view text, bool require_all = true) {
    GrammarError err;
    PreferenceGrammar g(text);
    auto l = g.parse(err);
    if (!l) throw InputError("malformed preference '" + std::string(text) + "': " + err.str());
    TruckSet missing = TruckSet::all() - l->covered();
    if (!missing.empty()) {
        if (require_all)
            throw InputError("preference '" + std::string(text) + "' does not mention " + join_labels(missing.labels()));
        l->undetermined |= missing;
    }
    return *l;
}

inline RigidPreference RigidPreference::parse(std::string_view text) {
    RigidPreference p;
    size_t n = 0;
    for (char c : text) {
        if (c == '>' || std::isspace(static_cast<unsigned char>(c))) continue;
        if (n >= 5) throw InputError("preference has more than five trucks");
        p.order[n++] = c;
    }
    if (n != 5) throw InputError("preference must list five trucks");
    validate_preference(p);
    return p;
}

} // namespace socbench

#endif
