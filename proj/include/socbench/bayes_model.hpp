#ifndef SOCBENCH_BAYES_MODEL_HPP
#define SOCBENCH_BAYES_MODEL_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"
#include "socbench/error.hpp"
#include "socbench/iip_task.hpp"
#include "socbench/ir_task.hpp"
#include "socbench/parallel.hpp"

namespace socbench {

using Real = long double;

struct ModelParams {
    Real alpha = 0;  // cost sensitivity
    Real beta = 0;   // signal urgency; -inf allowed for IR only
    Real theta = 0;  // colour-level amplification
    Real delta = 0;  // leaving-target pulse

    // From the (e^-alpha, e^-beta, e^-theta, delta) coordinates used on plot axes.
    static ModelParams from_exp(Real e_alpha, Real e_beta, Real e_theta, Real delta) {
        return {-std::log(e_alpha), -std::log(e_beta), -std::log(e_theta), delta};
    }
};

inline void validate_params(const ModelParams& p, bool allow_neg_inf_beta = false) {
    auto finite_nonneg = [](Real v) { return std::isfinite(v) && v >= 0; };
    if (!finite_nonneg(p.alpha) || !finite_nonneg(p.theta) || !finite_nonneg(p.delta))
        throw InputError("alpha, theta and delta must be finite and non-negative");
    if (std::isnan(p.beta) || p.beta == std::numeric_limits<Real>::infinity() ||
        (!allow_neg_inf_beta && !std::isfinite(p.beta)))
        throw InputError("beta must be finite here");
}

// sum_{k=1}^{len-1} phi(k) e^{-beta k}
template <class Phi>
Real likelihood_M(size_t route_len, Phi&& phi, Real beta) {
    Real total = 0;
    for (size_t k = 1; k < route_len; ++k) total += static_cast<Real>(phi(k)) * std::exp(-beta * static_cast<Real>(k));
    return total;
}

// ---- alternating-order recursion ----

// values[g][h]: even orders hold P(g | h) (each column sums to 1),
// odd orders hold P(h | g) (each row sums to 1).
template <class Scalar>
struct PosteriorTable {
    int order = 0;
    std::vector<std::vector<Scalar>> values;

    bool given_h() const { return order % 2 == 0; }
};

template <class Scalar>
std::vector<PosteriorTable<Scalar>> iterate_orders(const std::vector<Scalar>& prior_gamma,
                                                   const std::vector<Scalar>& prior_h,
                                                   const std::vector<std::vector<Scalar>>& M, int max_order,
                                                   const std::vector<std::string>& gamma_names = {},
                                                   const std::vector<std::string>& h_names = {}) {
    const size_t ng = prior_gamma.size(), nh = prior_h.size();
    if (M.size() != ng) throw InputError("likelihood rows must match the route prior");
    for (auto& row : M)
        if (row.size() != nh) throw InputError("likelihood columns must match the hypothesis prior");
    auto gname = [&](size_t g) { return g < gamma_names.size() ? gamma_names[g] : "route #" + std::to_string(g); };
    auto hname = [&](size_t h) { return h < h_names.size() ? h_names[h] : "hypothesis #" + std::to_string(h); };
    const Scalar zero(0);

    std::vector<PosteriorTable<Scalar>> out;
    PosteriorTable<Scalar> t{0, M};
    for (size_t h = 0; h < nh; ++h) {
        Scalar z = zero;
        for (size_t g = 0; g < ng; ++g) z += M[g][h];
        if (!(z > zero)) throw DegenerateError("likelihood vanishes for every route under " + hname(h));
        for (size_t g = 0; g < ng; ++g) t.values[g][h] = M[g][h] / z;
    }
    out.push_back(t);

    for (int order = 1; order <= max_order; ++order) {
        const auto& prev = out.back().values;
        PosteriorTable<Scalar> next{order, prev};
        if (order % 2 == 1) {
            // P(h|g) = P(g|h) P(h) / sum_h' P(g|h') P(h')
            for (size_t g = 0; g < ng; ++g) {
                Scalar z = zero;
                for (size_t h = 0; h < nh; ++h) z += prev[g][h] * prior_h[h];
                if (!(z > zero))
                    throw DegenerateError("order " + std::to_string(order) + ": " + gname(g) +
                                          " has zero probability under every hypothesis");
                for (size_t h = 0; h < nh; ++h) next.values[g][h] = prev[g][h] * prior_h[h] / z;
            }
        } else {
            // P(g|h) = P(h|g) P(g) / sum_g' P(h|g') P(g')
            for (size_t h = 0; h < nh; ++h) {
                Scalar z = zero;
                for (size_t g = 0; g < ng; ++g) z += prev[g][h] * prior_gamma[g];
                if (!(z > zero))
                    throw DegenerateError("order " + std::to_string(order) + ": " + hname(h) +
                                          " is never inferred from any route");
                for (size_t g = 0; g < ng; ++g) next.values[g][h] = prev[g][h] * prior_gamma[g] / z;
            }
        }
        out.push_back(std::move(next));
    }
    return out;
}

// ---- IR: odd order with beta = -inf ----

// Exploration order of trucks plus the final pick. `departed[i]` marks a
// sighting that was out of view again before the pick.
struct AbstractIrRoute {
    std::vector<char> sightings;
    std::vector<bool> departed;
    char pick = 0;

    // Events after the start: one per sighting, then the pick.
    size_t events() const { return sightings.size() + 1; }
    bool pick_departed() const {
        for (size_t i = 0; i < sightings.size(); ++i)
            if (sightings[i] == pick) return departed[i];
        return false;
    }
};

inline AbstractIrRoute abstract_route(const IrScene& s, const Trajectory& t) {
    auto o = observe(s, t);
    AbstractIrRoute r;
    r.sightings = t.steps.back().memory;
    for (char c : r.sightings) r.departed.push_back(o.E.contains(c));
    r.pick = t.pick;
    return r;
}

// phi = phi+ + phi- at event k (1-based over events; the last event is the pick).
inline int ir_phi(const AbstractIrRoute& r, size_t k, const RigidPreference& h, TruckSet visible, char absent) {
    const bool is_pick = k == r.events();
    const char at = is_pick ? r.pick : r.sightings[k - 1];
    if (!visible.contains(at)) return 0;
    // S: seen so far. E: seen but not chosen directly.
    TruckSet S, E;
    size_t seen_upto = is_pick ? r.sightings.size() : k;
    for (size_t i = 0; i < seen_upto; ++i) S.insert(r.sightings[i]);
    for (size_t i = 0; i < seen_upto; ++i) {
        char c = r.sightings[i];
        if (is_pick ? (c != r.pick || r.departed[i]) : i + 1 < k) E.insert(c);
    }
    int phi = 0;
    if (E.size() < 4 && h[0] == at) phi += 1;
    if (S.size() == 4 && h[0] == absent && h[1] == at) phi += 1;
    return phi;
}

// beta -> -inf keeps only the latest event with any signal: mass goes to the
// hypotheses whose last nonzero phi sits at the global maximum K*, in
// proportion to phi there.
inline std::vector<std::pair<RigidPreference, Real>> ir_posterior(const AbstractIrRoute& r, TruckSet visible,
                                                                 char absent) {
    const auto hyps = all_preferences();
    std::vector<size_t> K(hyps.size(), 0);
    size_t kstar = 0;
    for (size_t i = 0; i < hyps.size(); ++i) {
        for (size_t k = 1; k <= r.events(); ++k)
            if (ir_phi(r, k, hyps[i], visible, absent) != 0) K[i] = k;
        kstar = std::max(kstar, K[i]);
    }
    if (kstar == 0) throw InputError("trajectory carries no preference signal");
    std::vector<std::pair<RigidPreference, Real>> out;
    Real total = 0;
    for (size_t i = 0; i < hyps.size(); ++i) {
        if (K[i] != kstar) continue;
        Real w = ir_phi(r, kstar, hyps[i], visible, absent);
        out.push_back({hyps[i], w});
        total += w;
    }
    for (auto& [h, p] : out) p /= total;
    return out;
}

inline std::vector<std::pair<RigidPreference, Real>> ir_posterior(const IrScene& s, const Trajectory& t) {
    validate_trajectory(s, t);
    return ir_posterior(abstract_route(s, t), s.placed(), s.absent);
}

// Every abstract route over `visible`: each ordered sighting sequence, each
// pick among the sightings, with the pick departed or not.
inline std::vector<AbstractIrRoute> enumerate_abstract_routes(TruckSet visible) {
    std::vector<AbstractIrRoute> out;
    auto labels = visible.labels();
    std::vector<char> seq;
    std::vector<bool> used(labels.size(), false);
    auto rec = [&](auto& self) -> void {
        if (!seq.empty())
            for (char pick : seq)
                for (bool dep : {false, true}) {
                    AbstractIrRoute r;
                    r.sightings = seq;
                    r.pick = pick;
                    for (char c : seq) r.departed.push_back(c == pick && dep);
                    out.push_back(r);
                }
        for (size_t i = 0; i < labels.size(); ++i) {
            if (used[i]) continue;
            used[i] = true;
            seq.push_back(labels[i]);
            self(self);
            seq.pop_back();
            used[i] = false;
        }
    };
    rec(rec);
    return out;
}

// ---- IIP: even order ----

// Per-route signal terms, precomputed once per (scene, route) so that
// likelihoods are cheap to re-evaluate under new parameters.
struct IipRouteFeatures {
    struct Term {
        int k;
        int level;  // colouring level when the cell carries the hypothesis colour, else 0
        bool pulse; // previous cell is the other restaurant
    };
    int moves = 0;
    std::array<std::vector<Term>, 2> terms;  // [0] h = X, [1] h = Y
};

inline IipRouteFeatures route_features(const IipScene& s, const Coloring& col, const ConcreteRoute& r) {
    IipRouteFeatures f;
    f.moves = static_cast<int>(r.moves());
    const std::array<char, 2> hyp = {'X', 'Y'};
    const std::array<Cell, 2> other = {s.y(), s.x()};
    for (int h = 0; h < 2; ++h)
        for (size_t k = 1; k < r.cells.size(); ++k) {
            Cell c = r.cells[k];
            int level = col.color_at(c) == hyp[h] ? col.level_at(c) : 0;
            bool pulse = r.cells[k - 1] == other[h];
            if (level > 0 || pulse) f.terms[h].push_back({static_cast<int>(k), level, pulse});
        }
    return f;
}

// ln M(route, h); -inf when no term fires.
inline Real log_likelihood(const IipRouteFeatures& f, int h, const ModelParams& p) {
    const Real ninf = -std::numeric_limits<Real>::infinity();
    Real best = ninf;
    std::vector<Real> logs;
    logs.reserve(f.terms[h].size());
    const Real log_delta = p.delta > 0 ? std::log(p.delta) : ninf;
    for (auto& t : f.terms[h]) {
        // phi = e^{-theta level} [coloured] + delta [pulse]
        Real a = t.level > 0 ? -p.theta * t.level : ninf;
        Real b = t.pulse ? log_delta : ninf;
        Real hi = std::max(a, b), lo = std::min(a, b);
        if (hi == ninf) continue;
        Real lphi = lo == ninf ? hi : hi + std::log1p(std::exp(lo - hi));
        Real v = lphi - p.beta * t.k;
        logs.push_back(v);
        best = std::max(best, v);
    }
    if (best == ninf) return ninf;
    Real s = 0;
    for (Real v : logs) s += std::exp(v - best);
    return best + std::log(s);
}

// Order-0 table from log-likelihoods, normalised per hypothesis in the log domain.
inline std::vector<std::vector<Real>> normalized_likelihood(const std::vector<IipRouteFeatures>& routes,
                                                            const ModelParams& p) {
    const size_t ng = routes.size();
    std::vector<std::vector<Real>> M(ng, std::vector<Real>(2, 0));
    for (int h = 0; h < 2; ++h) {
        std::vector<Real> l(ng);
        Real best = -std::numeric_limits<Real>::infinity();
        for (size_t g = 0; g < ng; ++g) best = std::max(best, l[g] = log_likelihood(routes[g], h, p));
        if (best == -std::numeric_limits<Real>::infinity()) continue;  // left at zero; iterate_orders reports it
        for (size_t g = 0; g < ng; ++g) M[g][h] = std::exp(l[g] - best);
    }
    return M;
}

inline std::vector<PosteriorTable<Real>> iip_tables(const std::vector<IipRouteFeatures>& routes, const ModelParams& p,
                                                   int max_order = 2, const std::vector<std::string>& names = {}) {
    validate_params(p);
    std::vector<Real> prior_g(routes.size());
    Real best = 0;
    for (size_t g = 0; g < routes.size(); ++g) best = g ? std::min<Real>(best, routes[g].moves) : routes[g].moves;
    Real z = 0;
    for (size_t g = 0; g < routes.size(); ++g) z += prior_g[g] = std::exp(-p.alpha * (routes[g].moves - best));
    for (auto& v : prior_g) v /= z;
    std::vector<Real> prior_h = {0.5L, 0.5L};
    return iterate_orders<Real>(prior_g, prior_h, normalized_likelihood(routes, p), max_order, names, {"X", "Y"});
}

inline std::array<IipRouteFeatures, 4> instance_features(const IipInstance& inst) {
    auto col = color_scene(inst.scene);
    std::array<IipRouteFeatures, 4> f;
    for (RouteStyle st : kRouteStyles)
        f[static_cast<int>(st)] = route_features(inst.scene, col, inst.route(st));
    return f;
}

inline std::vector<std::string> style_names() {
    std::vector<std::string> n;
    for (RouteStyle st : kRouteStyles) n.push_back(to_string(st));
    return n;
}

// P^2(route | h = X), indexed by RouteStyle. Same result as iip_tables()[2]
// without allocating; discount factors are taken relative to the earliest
// signal of each hypothesis so they stay representable.
inline std::array<Real, 4> iip_posterior(const std::array<IipRouteFeatures, 4>& f, const ModelParams& p) {
    validate_params(p);
    const Real eb = std::exp(-p.beta), et = std::exp(-p.theta);
    constexpr int kTable = 64;
    std::array<Real, kTable> eb_pow, et_pow;
    eb_pow[0] = et_pow[0] = 1;
    for (int i = 1; i < kTable; ++i) {
        eb_pow[i] = eb_pow[i - 1] * eb;
        et_pow[i] = et_pow[i - 1] * et;
    }
    auto power = [&](const std::array<Real, kTable>& table, Real base, int n) {
        return n < kTable ? table[n] : std::pow(base, static_cast<Real>(n));
    };
    std::array<std::array<Real, 2>, 4> p0{};
    for (int h = 0; h < 2; ++h) {
        int k0 = std::numeric_limits<int>::max();
        for (auto& r : f)
            for (auto& t : r.terms[h]) k0 = std::min(k0, t.k);
        Real z = 0;
        for (int g = 0; g < 4; ++g) {
            Real m = 0;
            for (auto& t : f[g].terms[h]) {
                Real phi = (t.level > 0 ? power(et_pow, et, t.level) : 0) + (t.pulse ? p.delta : 0);
                m += phi * power(eb_pow, eb, t.k - k0);
            }
            z += p0[g][h] = m;
        }
        if (!(z > 0))
            throw DegenerateError(std::string("likelihood vanishes for every route under ") + (h == 0 ? "X" : "Y"));
        for (int g = 0; g < 4; ++g) p0[g][h] /= z;
    }
    int shortest = f[0].moves;
    for (auto& r : f) shortest = std::min(shortest, r.moves);
    std::array<Real, 4> out;
    Real z = 0;
    for (int g = 0; g < 4; ++g) {
        Real evidence = p0[g][0] + p0[g][1];
        if (!(evidence > 0))
            throw DegenerateError("order 1: " + to_string(kRouteStyles[g]) +
                                  " has zero probability under every hypothesis");
        z += out[g] = p0[g][0] / evidence * std::exp(-p.alpha * (f[g].moves - shortest));
    }
    if (!(z > 0)) throw DegenerateError("order 2: X is never inferred from any route");
    for (auto& v : out) v /= z;
    return out;
}

inline std::array<Real, 4> iip_posterior(const IipInstance& inst, const ModelParams& p) {
    return iip_posterior(instance_features(inst), p);
}

// ---- region maps ----

struct RegionPoint {
    Real e_alpha = 0;
    Real e_beta = 0;
    RouteStyle argmax = RouteStyle::Shortest;
    Real gap = 0;
    std::array<Real, 4> probs{};
};

struct RegionMap {
    int resolution = 0;
    Real e_theta = 0;
    Real delta = 0;
    std::vector<RegionPoint> points;  // e_alpha index major: [i * res + j]

    const RegionPoint& at(int i, int j) const { return points[i * resolution + j]; }
    std::vector<RouteStyle> styles_present() const {
        std::vector<RouteStyle> out;
        for (RouteStyle st : kRouteStyles)
            for (auto& p : points)
                if (p.argmax == st) {
                    out.push_back(st);
                    break;
                }
        return out;
    }
};

// Ties go to the first style in canonical order.
inline std::pair<RouteStyle, Real> argmax_gap(const std::array<Real, 4>& probs) {
    int best = 0;
    for (int g = 1; g < 4; ++g)
        if (probs[g] > probs[best]) best = g;
    Real second = -1;
    for (int g = 0; g < 4; ++g)
        if (g != best) second = std::max(second, probs[g]);
    return {kRouteStyles[best], probs[best] - second};
}

// Sweeps e^-alpha = i/res and e^-beta = j/res for i, j in 1..res.
inline RegionMap region_map(const std::array<IipRouteFeatures, 4>& f, Real e_theta, Real delta, int resolution,
                            unsigned jobs = default_jobs()) {
    if (resolution < 1) throw InputError("region map resolution must be positive");
    if (!(e_theta > 0 && e_theta <= 1)) throw InputError("e^-theta must lie in (0, 1]");
    RegionMap m;
    m.resolution = resolution;
    m.e_theta = e_theta;
    m.delta = delta;
    m.points.resize(static_cast<size_t>(resolution) * resolution);
    parallel_for(m.points.size(), jobs, [&](size_t idx) {
        int i = static_cast<int>(idx) / resolution, j = static_cast<int>(idx) % resolution;
        RegionPoint& pt = m.points[idx];
        pt.e_alpha = static_cast<Real>(i + 1) / resolution;
        pt.e_beta = static_cast<Real>(j + 1) / resolution;
        pt.probs = iip_posterior(f, ModelParams::from_exp(pt.e_alpha, pt.e_beta, e_theta, delta));
        std::tie(pt.argmax, pt.gap) = argmax_gap(pt.probs);
    });
    return m;
}

inline RegionMap region_map(const IipInstance& inst, Real e_theta, Real delta, int resolution,
                            unsigned jobs = default_jobs()) {
    return region_map(instance_features(inst), e_theta, delta, resolution, jobs);
}

inline nlohmann::json to_json(const RegionMap& m) {
    auto pts = nlohmann::json::array();
    for (auto& p : m.points)
        pts.push_back({{"e_alpha", static_cast<double>(p.e_alpha)},
                       {"e_beta", static_cast<double>(p.e_beta)},
                       {"argmax", to_string(p.argmax)},
                       {"gap", static_cast<double>(p.gap)},
                       {"probs",
                        {{"Shortest", static_cast<double>(p.probs[0])},
                         {"Avoidant", static_cast<double>(p.probs[1])},
                         {"Reversed", static_cast<double>(p.probs[2])},
                         {"Hybrid", static_cast<double>(p.probs[3])}}}});
    std::vector<std::string> present;
    for (auto st : m.styles_present()) present.push_back(to_string(st));
    return {{"resolution", m.resolution},
            {"e_theta", static_cast<double>(m.e_theta)},
            {"delta", static_cast<double>(m.delta)},
            {"styles_present", present},
            {"points", pts}};
}

// Binary PPM: e^-alpha grows to the right, e^-beta grows upward. Hue marks
// the winning style, saturation the probability gap.
inline void write_region_ppm(const RegionMap& m, std::ostream& out) {
    static const std::array<std::array<int, 3>, 4> base = {{
        {44, 160, 44},   // Shortest
        {31, 119, 180},  // Avoidant
        {214, 39, 40},   // Reversed
        {255, 127, 14},  // Hybrid
    }};
    const int n = m.resolution;
    out << "P6\n" << n << " " << n << "\n255\n";
    for (int row = 0; row < n; ++row)
        for (int col = 0; col < n; ++col) {
            const auto& p = m.at(col, n - 1 - row);
            Real w = 0.25L + 0.75L * std::clamp<Real>(p.gap, 0, 1);
            for (int c = 0; c < 3; ++c) {
                Real v = 255 * (1 - w) + base[static_cast<int>(p.argmax)][c] * w;
                out.put(static_cast<char>(static_cast<unsigned char>(std::lround(static_cast<double>(v)))));
            }
        }
}

template <class Scalar>
void write_table_csv(const PosteriorTable<Scalar>& t, const std::vector<std::string>& gamma_names,
                     const std::vector<std::string>& h_names, std::ostream& out) {
    out << "order,route,hypothesis,probability\n";
    for (size_t g = 0; g < t.values.size(); ++g)
        for (size_t h = 0; h < t.values[g].size(); ++h)
            out << t.order << "," << gamma_names.at(g) << "," << h_names.at(h) << ","
                << static_cast<double>(t.values[g][h]) << "\n";
}

} // namespace socbench

#endif
