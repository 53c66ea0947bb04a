#ifndef SOCBENCH_IIP_TASK_HPP
#define SOCBENCH_IIP_TASK_HPP

#include <algorithm>
#include <array>
#include <deque>
#include <cstdint>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "socbench/error.hpp"
#include "socbench/grid.hpp"
#include "socbench/parallel.hpp"
#include "socbench/prompt_text.hpp"

namespace socbench {

// Scene with exactly the two restaurants X and Y.
struct IipScene {
    Scene scene;

    Cell agent() const { return scene.agent_start; }
    Cell x() const { return scene.poi('X'); }
    Cell y() const { return scene.poi('Y'); }

    friend bool operator==(const IipScene&, const IipScene&) = default;
};

inline void validate_iip_scene(const IipScene& s) {
    validate_scene(s.scene);
    if (s.scene.pois.size() != 2 || !s.scene.pois.contains('X') || !s.scene.pois.contains('Y'))
        throw InputError("an IIP scene needs exactly the restaurants X and Y");
    DistanceField from_a(s.scene, s.agent());
    if (!from_a.reachable(s.x()) || !from_a.reachable(s.y()))
        throw InputError("restaurants must be reachable from the agent");
}

inline IipScene make_iip_scene(Scene scene) {
    IipScene s{std::move(scene)};
    validate_iip_scene(s);
    return s;
}

// Per-cell colour ('X', 'Y' or 'N') and level; walls stay 'N' at level 0.
struct Coloring {
    int width = 0;
    int height = 0;
    std::vector<char> color;
    std::vector<int> level;
    int rounds = 0;          // expansion rounds until the fixpoint
    bool cycle_cut = false;  // stopped because a previous state recurred

    Coloring() = default;
    Coloring(int w, int h) : width(w), height(h), color(w * h, 'N'), level(w * h, 0) {}

    char color_at(Cell c) const { return color[c.row * width + c.col]; }
    int level_at(Cell c) const { return level[c.row * width + c.col]; }
    void set(Cell c, char col, int lvl) {
        color[c.row * width + c.col] = col;
        level[c.row * width + c.col] = lvl;
    }
    std::vector<Cell> cells_of(char col) const {
        std::vector<Cell> out;
        for (int i = 0; i < width * height; ++i)
            if (color[i] == col) out.push_back({i % width, i / width});
        return out;
    }

    friend bool operator==(const Coloring& a, const Coloring& b) { return a.color == b.color && a.level == b.level; }
};

using RegionTrace = std::vector<std::pair<std::set<Cell>, std::set<Cell>>>;

// Grows the X and Y regions by comparing distance gains relative to the agent.
// A cell keeps the first colour and level it receives. `trace` receives the
// raw (r_X, r_Y) pair of every round.
inline Coloring color_scene(const IipScene& s, RegionTrace* trace = nullptr) {
    const Scene& sc = s.scene;
    const int n = sc.cell_count();
    using Region = std::vector<char>;  // membership by cell index
    auto cells_in = [&](const Region& r) {
        std::vector<Cell> out;
        for (int i = 0; i < n; ++i)
            if (r[i]) out.push_back(sc.cell_at(i));
        return out;
    };
    Coloring col(sc.width, sc.height);
    Region rx(n, 0), ry(n, 0), prev_x(n, 0), prev_y(n, 0);
    rx[sc.index(s.x())] = 1;
    ry[sc.index(s.y())] = 1;
    std::vector<std::pair<Region, Region>> history;
    for (int k = 1;; ++k) {
        bool grew = false;
        for (int i = 0; i < n; ++i) grew |= (rx[i] && !prev_x[i]) || (ry[i] && !prev_y[i]);
        if (!grew) break;
        if (std::find(history.begin(), history.end(), std::make_pair(rx, ry)) != history.end()) {
            col.cycle_cut = true;
            break;
        }
        history.emplace_back(rx, ry);
        for (int i = 0; i < n; ++i) {
            if (col.level[i] != 0) continue;
            if (rx[i]) col.set(sc.cell_at(i), 'X', k);
            else if (ry[i]) col.set(sc.cell_at(i), 'Y', k);
        }
        col.rounds = k;
        if (trace) {
            auto xs = cells_in(rx), ys = cells_in(ry);
            trace->push_back({{xs.begin(), xs.end()}, {ys.begin(), ys.end()}});
        }

        DistanceField dx(sc, cells_in(rx)), dy(sc, cells_in(ry));
        const int ax = dx(s.agent()), ay = dy(s.agent());
        Region nx(n, 0), ny(n, 0);
        for (int i = 0; i < n; ++i) {
            Cell z = sc.cell_at(i);
            if (!sc.walkable(z) || !dx.reachable(z) || !dy.reachable(z)) continue;
            int gx = dx(z) - ax, gy = dy(z) - ay;
            nx[i] = gx < gy;
            ny[i] = gy < gx;
        }
        prev_x = std::move(rx);
        prev_y = std::move(ry);
        rx = std::move(nx);
        ry = std::move(ny);
    }
    return col;
}

enum class RouteStyle { Shortest = 0, Avoidant = 1, Reversed = 2, Hybrid = 3 };

inline constexpr std::array<RouteStyle, 4> kRouteStyles = {RouteStyle::Shortest, RouteStyle::Avoidant,
                                                           RouteStyle::Reversed, RouteStyle::Hybrid};

inline std::string to_string(RouteStyle s) {
    switch (s) {
    case RouteStyle::Shortest: return "Shortest";
    case RouteStyle::Avoidant: return "Avoidant";
    case RouteStyle::Reversed: return "Reversed";
    case RouteStyle::Hybrid: return "Hybrid";
    }
    return "";
}

inline RouteStyle parse_route_style(std::string_view s) {
    for (RouteStyle r : kRouteStyles)
        if (to_string(r) == s) return r;
    throw InputError("unknown route style '" + std::string(s) + "'");
}

enum class IipType { I = 0, II = 1, III = 2, IV = 3 };

inline constexpr std::array<IipType, 4> kIipTypes = {IipType::I, IipType::II, IipType::III, IipType::IV};

inline std::string to_string(IipType t) {
    static const char* names[] = {"I", "II", "III", "IV"};
    return names[static_cast<int>(t)];
}

inline IipType parse_iip_type(std::string_view s) {
    for (IipType t : kIipTypes)
        if (to_string(t) == s) return t;
    throw InputError("unknown IIP type '" + std::string(s) + "'");
}

// ---- route generators ----

inline ConcreteRoute gen_shortest(const IipScene& s) { return shortest_route(s.scene, s.agent(), s.x()); }

// Shortest A -> Y (ties steer clear of X-coloured cells), then shortest Y -> X.
inline ConcreteRoute gen_reversed(const IipScene& s, const Coloring& col) {
    CellWeights pen;
    for (Cell c : col.cells_of('X')) pen[c] = 1.0;
    auto to_y = shortest_route(s.scene, s.agent(), s.y(), pen);
    return concat_routes(to_y, shortest_route(s.scene, s.y(), s.x()));
}

// Carves obstacles outward from Y, keeping only cells whose removal would cut
// A off from X, then walks what is left.
inline ConcreteRoute gen_avoidant(const IipScene& s) {
    Scene carved = s.scene;
    const Cell a = s.agent(), x = s.x();
    auto connected = [&] {
        if (!carved.walkable(a) || !carved.walkable(x)) return false;
        return DistanceField(carved, a).reachable(x);
    };
    std::deque<Cell> front{s.y()};
    std::set<Cell> queued{s.y()};
    while (!front.empty()) {
        Cell h = front.front();
        front.pop_front();
        carved.walls.insert(h);
        if (!connected()) carved.walls.erase(h);
        for (Cell n : s.scene.neighbors(h))
            if (queued.insert(n).second) front.push_back(n);
    }
    carved.pois.erase('Y');
    return shortest_route(carved, a, x);
}

// Candidate waypoints nearest to A among X-coloured cells, narrowed by the
// staged tie-break. Throws GenerationError when nothing or more than one survives.
inline Cell hybrid_waypoint(const IipScene& s, const Coloring& col) {
    const Scene& sc = s.scene;
    DistanceField da(sc, s.agent()), dx(sc, s.x()), dy(sc, s.y());
    std::vector<Cell> psi;
    int best = -1;
    for (Cell c : col.cells_of('X')) {
        if (!da.reachable(c)) continue;
        if (best < 0 || da(c) < best) {
            best = da(c);
            psi.clear();
        }
        if (da(c) == best) psi.push_back(c);
    }
    if (psi.empty()) throw GenerationError("no X-coloured cell is reachable from the agent");

    auto keep_best = [](std::vector<Cell> v, auto key) {
        auto m = key(v.front());
        for (Cell c : v) m = std::max(m, key(c));
        std::erase_if(v, [&](Cell c) { return key(c) != m; });
        return v;
    };
    if (psi.size() > 1) psi = keep_best(psi, [&](Cell c) { return -dx(c); });
    if (psi.size() > 1) psi = keep_best(psi, [&](Cell c) { return dy(c); });
    if (psi.size() > 1) {
        // cos(YX, A psi) compared exactly: sign first, then dot^2 / |A psi|^2 cross-multiplied.
        const long long yx_c = s.x().col - s.y().col, yx_r = s.x().row - s.y().row;
        auto dot = [&](Cell c) { return yx_c * (c.col - s.agent().col) + yx_r * (c.row - s.agent().row); };
        auto norm2 = [&](Cell c) {
            long long dc = c.col - s.agent().col, dr = c.row - s.agent().row;
            return dc * dc + dr * dr;
        };
        // true when cos(p) > cos(q); a zero vector counts as cos 0
        auto greater = [&](Cell p, Cell q) {
            long long np = norm2(p), nq = norm2(q);
            long long dp = np ? dot(p) : 0, dq = nq ? dot(q) : 0;
            np = np ? np : 1;
            nq = nq ? nq : 1;
            __int128 lhs = static_cast<__int128>(dp) * (dp < 0 ? -dp : dp) * nq;
            __int128 rhs = static_cast<__int128>(dq) * (dq < 0 ? -dq : dq) * np;
            return lhs > rhs;
        };
        std::vector<Cell> top{psi.front()};
        for (size_t i = 1; i < psi.size(); ++i) {
            if (greater(psi[i], top.front()))
                top = {psi[i]};
            else if (!greater(top.front(), psi[i]))
                top.push_back(psi[i]);
        }
        psi = top;
        if (psi.size() > 1) throw GenerationError("hybrid waypoint tie survives every stage");
    }
    return psi.front();
}

// Step away to the nearest X-coloured waypoint, then on to X, keeping far
// from the Y-coloured region where lengths tie.
inline ConcreteRoute gen_hybrid(const IipScene& s, const Coloring& col) {
    Cell c = hybrid_waypoint(s, col);
    DistanceField dyr(s.scene, col.cells_of('Y'));
    CellWeights pen;
    const double cap = s.scene.width + s.scene.height;
    for (Cell z : s.scene.walkable_cells()) pen[z] = dyr.reachable(z) ? cap - dyr(z) : 0.0;
    return concat_routes(shortest_route(s.scene, s.agent(), c, pen), shortest_route(s.scene, c, s.x(), pen));
}

inline bool passes_near(const ConcreteRoute& r, Cell y) {
    for (Cell c : r.cells)
        if (chebyshev(c, y) <= 1) return true;
    return false;
}

inline IipType classify_iip(const ConcreteRoute& hybrid, Cell y) {
    bool cyclic = hybrid.revisits();
    bool passes = passes_near(hybrid, y);
    if (cyclic) return passes ? IipType::I : IipType::II;
    return passes ? IipType::III : IipType::IV;
}

struct IipInstance {
    std::string id;
    IipScene scene;
    std::array<ConcreteRoute, 4> routes;      // indexed by RouteStyle
    std::array<RouteStyle, 4> shuffled_order = kRouteStyles;  // option letter i -> style
    IipType type = IipType::I;

    const ConcreteRoute& route(RouteStyle s) const { return routes[static_cast<int>(s)]; }

    // Option letter ('A'..'D') under which `s` is shown.
    char letter_of(RouteStyle s) const {
        for (int i = 0; i < 4; ++i)
            if (shuffled_order[i] == s) return static_cast<char>('A' + i);
        return '?';
    }
    RouteStyle style_of(char letter) const {
        if (letter < 'A' || letter > 'D') throw InputError(std::string("option letter '") + letter + "' out of range");
        return shuffled_order[letter - 'A'];
    }
};

// Checks the per-instance invariants; returns an explanation on failure.
inline std::optional<std::string> check_iip_routes(const IipScene& s, const std::array<ConcreteRoute, 4>& routes) {
    for (RouteStyle st : kRouteStyles) {
        const auto& r = routes[static_cast<int>(st)];
        try {
            validate_route(s.scene, r);
        } catch (const InputError& e) {
            return to_string(st) + ": " + e.what();
        }
        if (r.front() != s.agent() || r.back() != s.x()) return to_string(st) + " does not run from A to X";
        for (size_t i = 0; i + 1 < r.cells.size(); ++i)
            if (r.cells[i] == s.x()) return to_string(st) + " reaches X before its end";
    }
    for (int i = 0; i < 4; ++i)
        for (int j = i + 1; j < 4; ++j)
            if (routes[i] == routes[j])
                return to_string(kRouteStyles[i]) + " and " + to_string(kRouteStyles[j]) + " coincide";
    return std::nullopt;
}

inline std::array<ConcreteRoute, 4> generate_routes(const IipScene& s, const Coloring& col) {
    std::array<ConcreteRoute, 4> routes;
    routes[static_cast<int>(RouteStyle::Shortest)] = gen_shortest(s);
    routes[static_cast<int>(RouteStyle::Avoidant)] = gen_avoidant(s);
    routes[static_cast<int>(RouteStyle::Reversed)] = gen_reversed(s, col);
    routes[static_cast<int>(RouteStyle::Hybrid)] = gen_hybrid(s, col);
    if (auto why = check_iip_routes(s, routes)) throw GenerationError(*why);
    return routes;
}

// ---- prompts ----

inline std::string move_line(Cell from, Cell to) {
    auto d = step_dir(from, to);
    if (!d) throw InputError("route jumps from " + format_cell(from) + " to " + format_cell(to));
    return "Move " + std::string(dir_word(*d)) + " from " + format_cell(from) + " to (" + std::to_string(to.col) + "," +
           std::to_string(to.row) + ")";
}

inline std::string route_block(char letter, const ConcreteRoute& r) {
    std::string out = std::string("Route ") + letter;
    for (size_t i = 1; i < r.cells.size(); ++i) out += "\n" + move_line(r.cells[i - 1], r.cells[i]);
    return out;
}

// Setting, Action, Layout and Task blocks plus the question line.
inline std::string iip_prompt_head(const IipScene& s) {
    const Scene& sc = s.scene;
    std::string out = prompt_text::iip_setting(sc.width, sc.height);
    out += "\n\n" + std::string(prompt_text::kIipAction);
    out += "\n\n" + prompt_text::iip_layout_intro(sc.width, sc.height) + "\n" + render_layout(sc);
    out += "\n\n" + std::string(prompt_text::kIipTask);
    out += "\n\n" + std::string(prompt_text::kIipQuestion);
    return out;
}

inline std::string serialize_iip_prompt(const IipInstance& inst, int shots = 0) {
    std::string out = iip_prompt_head(inst.scene);
    for (int i = 0; i < 4; ++i) {
        out += i ? "\n\n" : "\n";
        out += route_block(static_cast<char>('A' + i), inst.route(inst.shuffled_order[i]));
    }
    if (shots > 0) {
        if (shots != 1) throw InputError("IIP prompts support zero or one shot");
        out = std::string(prompt_text::kIipExample) + "\n\n" + out;
    }
    return out;
}

// ---- generation ----

struct IipSamplerConfig {
    int width = 5;
    int height = 5;
    int min_walls = 3;
    int max_walls = 6;
};

inline std::optional<IipScene> sample_iip_scene(std::mt19937_64& rng, const IipSamplerConfig& cfg = {}) {
    Scene sc;
    sc.width = cfg.width;
    sc.height = cfg.height;
    std::vector<Cell> cells;
    for (int i = 0; i < sc.cell_count(); ++i) cells.push_back(sc.cell_at(i));
    std::shuffle(cells.begin(), cells.end(), rng);
    int walls = std::uniform_int_distribution<int>(cfg.min_walls, cfg.max_walls)(rng);
    sc.agent_start = cells[0];
    sc.pois['X'] = cells[1];
    sc.pois['Y'] = cells[2];
    for (int i = 0; i < walls; ++i) sc.walls.insert(cells[3 + i]);
    if (!walkable_connected(sc)) return std::nullopt;
    return IipScene{sc};
}

// Level k of each colour must be used whenever level k+1 is.
inline bool levels_contiguous(const Coloring& col) {
    for (char c : {'X', 'Y'}) {
        std::set<int> levels;
        for (Cell cell : col.cells_of(c)) levels.insert(col.level_at(cell));
        int expect = 1;
        for (int l : levels)
            if (l != expect++) return false;
    }
    return true;
}

// `wanted[t]` false skips the remaining generators once the Hybrid route
// shows the scene is of type t.
inline std::optional<IipInstance> make_iip_instance(const IipScene& s, std::mt19937_64& rng,
                                                    std::array<bool, 4> wanted = {true, true, true, true}) {
    IipInstance inst;
    inst.scene = s;
    try {
        auto col = color_scene(s);
        if (col.cycle_cut || !levels_contiguous(col)) return std::nullopt;
        auto hybrid = gen_hybrid(s, col);
        inst.type = classify_iip(hybrid, s.y());
        if (!wanted[static_cast<int>(inst.type)]) return std::nullopt;
        inst.routes = generate_routes(s, col);
    } catch (const GenerationError&) {
        return std::nullopt;
    }
    std::shuffle(inst.shuffled_order.begin(), inst.shuffled_order.end(), rng);
    return inst;
}

inline std::vector<IipInstance> generate_iip_dataset(std::array<int, 4> counts, uint64_t seed,
                                                     unsigned jobs = default_jobs(), const IipSamplerConfig& cfg = {}) {
    std::array<int, 4> need = counts;
    int total = 0;
    for (int c : counts) {
        if (c < 0) throw InputError("IIP counts must be non-negative");
        total += c;
    }
    std::vector<IipInstance> out;
    out.reserve(total);
    const uint64_t max_candidates = 20000ull * total + 100000ull;
    const size_t batch = std::max<size_t>(256, 64 * static_cast<size_t>(std::max(1u, jobs)));
    uint64_t index = 0;
    while (static_cast<int>(out.size()) < total) {
        if (index >= max_candidates)
            throw GenerationError("IIP generation gave up after " + std::to_string(index) + " candidates");
        // A type already full before this batch stays full, so skipping it
        // cannot change which candidates are accepted.
        std::array<bool, 4> wanted;
        for (int t = 0; t < 4; ++t) wanted[t] = need[t] > 0;
        std::vector<std::optional<IipInstance>> results(batch);
        parallel_for(batch, jobs, [&](size_t i) {
            auto rng = substream(seed, index + i);
            if (auto s = sample_iip_scene(rng, cfg)) results[i] = make_iip_instance(*s, rng, wanted);
        });
        index += batch;
        for (auto& r : results) {
            if (!r) continue;
            int ti = static_cast<int>(r->type);
            if (need[ti] == 0) continue;
            --need[ti];
            r->id = make_item_id("iip", out.size());
            out.push_back(std::move(*r));
            if (static_cast<int>(out.size()) == total) break;
        }
    }
    return out;
}

// ---- JSON ----

inline nlohmann::json to_json(const IipInstance& inst) {
    nlohmann::json routes = nlohmann::json::object();
    for (RouteStyle st : kRouteStyles) routes[to_string(st)] = inst.route(st);
    std::vector<std::string> order;
    for (RouteStyle st : inst.shuffled_order) order.push_back(to_string(st));
    return {
        {"id", inst.id},
        {"scene_layout", render_layout(inst.scene.scene)},
        {"routes", routes},
        {"shuffled_order", order},
        {"type", to_string(inst.type)},
        {"prompt_zero_shot", serialize_iip_prompt(inst)},
    };
}

// Routes are taken as stored; they are validated but not regenerated, so
// hand-built instances load too.
inline IipInstance iip_instance_from_json(const nlohmann::json& j) {
    try {
        IipInstance inst;
        inst.id = j.value("id", "");
        inst.scene = make_iip_scene(parse_layout(j.at("scene_layout").get<std::string>()));
        for (RouteStyle st : kRouteStyles)
            inst.routes[static_cast<int>(st)] = j.at("routes").at(to_string(st)).get<ConcreteRoute>();
        if (auto why = check_iip_routes(inst.scene, inst.routes)) throw InputError("IIP record " + inst.id + ": " + *why);
        if (j.contains("shuffled_order")) {
            auto& order = j["shuffled_order"];
            if (!order.is_array() || order.size() != 4) throw InputError("shuffled_order must list four styles");
            std::set<RouteStyle> seen;
            for (int i = 0; i < 4; ++i) {
                inst.shuffled_order[i] = parse_route_style(order[i].get<std::string>());
                seen.insert(inst.shuffled_order[i]);
            }
            if (seen.size() != 4) throw InputError("shuffled_order repeats a style");
        }
        inst.type = classify_iip(inst.route(RouteStyle::Hybrid), inst.scene.y());
        if (j.contains("type") && parse_iip_type(j["type"].get<std::string>()) != inst.type)
            throw InputError("IIP record " + inst.id + ": stored type disagrees with its Hybrid route");
        return inst;
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("IIP record: ") + e.what());
    }
}

} // namespace socbench

#endif
