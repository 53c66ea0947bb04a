#ifndef SOCBENCH_IR_TASK_HPP
#define SOCBENCH_IR_TASK_HPP

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"
#include "socbench/error.hpp"
#include "socbench/grid.hpp"
#include "socbench/parallel.hpp"
#include "socbench/preference.hpp"
#include "socbench/prompt_text.hpp"

namespace socbench {

// Four trucks parked on the scene's pois; the fifth label is absent today.
struct IrScene {
    Scene scene;
    char absent = 'N';

    TruckSet placed() const {
        TruckSet s;
        for (auto& [label, c] : scene.pois) s.insert(label);
        return s;
    }
    Cell truck_cell(char t) const { return scene.poi(t); }

    friend bool operator==(const IrScene&, const IrScene&) = default;
};

inline void validate_ir_scene(const IrScene& s) {
    validate_scene(s.scene);
    if (!is_truck(s.absent)) throw InputError(std::string("absent truck '") + s.absent + "' is not a truck label");
    if (s.scene.pois.size() != 4) throw InputError("an IR scene needs exactly four placed trucks");
    if (s.scene.pois.contains(s.absent)) throw InputError(std::string("absent truck '") + s.absent + "' is placed");
}

// The truck that is not on the layout.
inline IrScene make_ir_scene(Scene scene) {
    IrScene s{std::move(scene), '\0'};
    TruckSet missing = TruckSet::all() - s.placed();
    if (missing.size() != 1) throw InputError("an IR layout must show exactly four of X, Y, Z, M, N");
    s.absent = missing.labels().front();
    validate_ir_scene(s);
    return s;
}

// Trucks in the 3x3 block around `c`. Walls do not block sight.
inline TruckSet perceive(const IrScene& s, Cell c) {
    if (!s.scene.walkable(c)) throw InputError("cannot perceive from non-walkable cell " + format_cell(c));
    TruckSet out;
    for (auto& [label, cell] : s.scene.pois)
        if (chebyshev(cell, c) <= 1) out.insert(label);
    return out;
}

struct TrajectoryStep {
    Cell cell;
    TruckSet view;
    std::vector<char> memory; // first-sighting order

    friend bool operator==(const TrajectoryStep&, const TrajectoryStep&) = default;
};

struct Trajectory {
    std::vector<TrajectoryStep> steps;
    char pick = '\0';

    ConcreteRoute route() const {
        ConcreteRoute r;
        for (auto& st : steps) r.cells.push_back(st.cell);
        return r;
    }
    TruckSet seen() const {
        TruckSet s;
        if (!steps.empty())
            for (char t : steps.back().memory) s.insert(t);
        return s;
    }

    friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

// Views and memory for a walk. Trucks first seen on the same step enter
// memory in canonical order.
inline Trajectory build_trajectory(const IrScene& s, const std::vector<Cell>& cells, char pick) {
    if (cells.empty()) throw InputError("trajectory is empty");
    Trajectory t;
    t.pick = pick;
    std::vector<char> memory;
    TruckSet seen;
    for (Cell c : cells) {
        TruckSet view = perceive(s, c);
        for (char lbl : (view - seen).labels()) memory.push_back(lbl);
        seen |= view;
        t.steps.push_back({c, view, memory});
    }
    return t;
}

inline void validate_trajectory(const IrScene& s, const Trajectory& t) {
    validate_route(s.scene, t.route());
    Trajectory rebuilt = build_trajectory(s, t.route().cells, t.pick);
    for (size_t i = 0; i < t.steps.size(); ++i)
        if (t.steps[i] != rebuilt.steps[i])
            throw InputError("trajectory step " + std::to_string(i) + " at " + format_cell(t.steps[i].cell) +
                             " disagrees with what the agent can see");
    if (!t.seen().contains(t.pick)) throw InputError(std::string("picked truck '") + t.pick + "' was never seen");
    if (t.steps.back().cell != s.truck_cell(t.pick))
        throw InputError(std::string("trajectory must end on the picked truck '") + t.pick + "'");
}

// V: placed trucks, S: ever seen, E: seen and later out of view (by the last step).
struct ObservationState {
    TruckSet V, S, E;
};

inline ObservationState observe(const IrScene& s, const Trajectory& t) {
    ObservationState o;
    o.V = s.placed();
    TruckSet seen;
    for (auto& st : t.steps) {
        o.E |= seen - st.view;
        seen |= st.view;
    }
    o.S = seen;
    return o;
}

enum class IrType { Intermediate = 0, Last = 1, Previsited = 2 };

inline constexpr std::array<IrType, 3> kIrTypes = {IrType::Intermediate, IrType::Last, IrType::Previsited};

inline std::string to_string(IrType t) {
    switch (t) {
    case IrType::Intermediate: return "Intermediate";
    case IrType::Last: return "Last";
    case IrType::Previsited: return "Previsited";
    }
    return "";
}

inline IrType parse_ir_type(std::string_view s) {
    for (IrType t : kIrTypes)
        if (to_string(t) == s) return t;
    throw InputError("unknown IR type '" + std::string(s) + "'");
}

inline IrType classify_ir(int seen_count, bool pick_departed) {
    if (seen_count < 4) return IrType::Intermediate;
    return pick_departed ? IrType::Previsited : IrType::Last;
}

inline IrType classify_ir(const IrScene& s, const Trajectory& t) {
    auto o = observe(s, t);
    return classify_ir(o.S.size(), o.E.contains(t.pick));
}

inline PreferenceLabel make_ir_label(IrType type, char pick, TruckSet placed, char absent) {
    TruckSet others = placed;
    others.erase(pick);
    PreferenceLabel l;
    switch (type) {
    case IrType::Intermediate:
        l.chain = {TruckSet{pick}, TruckSet::all() - TruckSet{pick}};
        break;
    case IrType::Last:
        l.chain = {TruckSet{pick}, others};
        l.undetermined = TruckSet{absent};
        break;
    case IrType::Previsited:
        l.chain = {TruckSet{absent}, TruckSet{pick}, others};
        break;
    }
    return l;
}

inline PreferenceLabel label_from_trajectory(const IrScene& s, const Trajectory& t) {
    validate_trajectory(s, t);
    return make_ir_label(classify_ir(s, t), t.pick, s.placed(), s.absent);
}

// Greedy neighbourhood search: pick the top preference as soon as it has been
// seen; if the top is absent, explore everything and settle for the best
// placed truck; otherwise step toward the nearest unseen truck.
inline Trajectory simulate_trajectory(const IrScene& s, const RigidPreference& pref) {
    validate_ir_scene(s);
    validate_preference(pref);
    const Scene& sc = s.scene;
    DistanceField from_start(sc, sc.agent_start);
    for (auto& [label, c] : sc.pois)
        if (!from_start.reachable(c))
            throw GenerationError(std::string("truck ") + label + " is unreachable from the agent start");

    TruckSet placed = s.placed();
    std::vector<Cell> cells{sc.agent_start};
    TruckSet seen = perceive(s, sc.agent_start);

    auto walk_to = [&](char t) {
        auto r = shortest_route(sc, cells.back(), s.truck_cell(t));
        for (size_t i = 1; i < r.cells.size(); ++i) cells.push_back(r.cells[i]);
    };

    const char top = pref[0];
    const int guard = 4 * sc.cell_count() + 16;
    for (int iter = 0;; ++iter) {
        if (iter > guard) throw GenerationError("trajectory simulation did not terminate");
        if (placed.contains(top)) {
            if (seen.contains(top)) {
                walk_to(top);
                return build_trajectory(s, cells, top);
            }
        } else if (seen == placed) {
            char best = 0;
            for (char t : pref.order)
                if (placed.contains(t)) {
                    best = t;
                    break;
                }
            walk_to(best);
            return build_trajectory(s, cells, best);
        }

        DistanceField here(sc, cells.back());
        char target = 0;
        int best_d = 0;
        for (char t : (placed - seen).labels()) {
            int d = here(s.truck_cell(t));
            if (target == 0 || d < best_d) {
                target = t;
                best_d = d;
            }
        }
        auto r = shortest_route(sc, cells.back(), s.truck_cell(target));
        cells.push_back(r.cells[1]);
        seen |= perceive(s, r.cells[1]);
    }
}

struct IrInstance {
    std::string id;
    IrScene scene;
    RigidPreference preference;
    Trajectory trajectory;
    PreferenceLabel label;
    IrType type = IrType::Intermediate;
};

// ---- prompts ----

inline std::string trajectory_line(const TrajectoryStep& st, std::optional<char> pick) {
    std::vector<std::string> parts;
    if (!st.view.empty()) parts.push_back("view " + join_labels(st.view.labels()));
    if (!st.memory.empty()) parts.push_back("memory " + join_labels(st.memory));
    std::string line = format_cell(st.cell);
    for (size_t i = 0; i < parts.size(); ++i) line += (i ? "; " : " ") + parts[i];
    if (pick) line += std::string("; pick ") + *pick;
    return line;
}

inline std::string trajectory_block(const Trajectory& t) {
    std::string out(prompt_text::kIrTrajectoryIntro);
    for (size_t i = 0; i < t.steps.size(); ++i) {
        bool last = i + 1 == t.steps.size();
        out += "\n" + trajectory_line(t.steps[i], last ? std::optional<char>(t.pick) : std::nullopt);
    }
    return out;
}

struct IrExample {
    IrScene scene;
    Trajectory trajectory;
    PreferenceLabel label;
    IrType type;
    std::string_view explanation;
};

// The fixed demonstrations, in insertion order Previsited, Intermediate, Last.
inline const std::vector<IrExample>& canonical_ir_examples() {
    static const std::vector<IrExample> examples = [] {
        IrScene s = make_ir_scene(parse_layout(prompt_text::kIrExampleLayout));
        std::vector<Cell> head = {{4, 4}, {4, 3}, {4, 2}, {3, 2}};
        std::vector<Cell> explore = {{3, 1}, {3, 2}, {2, 2}, {1, 2}, {1, 3}};
        auto cat = [](std::vector<Cell> a, const std::vector<Cell>& b) {
            a.insert(a.end(), b.begin(), b.end());
            return a;
        };
        struct Raw {
            std::vector<Cell> cells;
            char pick;
        };
        std::array<Raw, 3> raw = {{
            {cat(cat(head, explore), {{1, 2}, {1, 1}, {1, 0}, {2, 0}, {3, 0}}), 'Y'},
            {cat(head, {{2, 2}}), 'X'},
            {cat(cat(head, explore), {{1, 4}}), 'Z'},
        }};
        std::vector<IrExample> out;
        for (size_t i = 0; i < raw.size(); ++i) {
            Trajectory t = build_trajectory(s, raw[i].cells, raw[i].pick);
            IrType type = classify_ir(s, t);
            out.push_back({s, t, label_from_trajectory(s, t), type, prompt_text::kIrExampleExplanation[i]});
        }
        return out;
    }();
    return examples;
}

inline std::string ir_examples_block(int shots) {
    auto& ex = canonical_ir_examples();
    if (shots < 1 || shots > static_cast<int>(ex.size())) throw InputError("IR examples come in 1, 2 or 3 shots");
    const Scene& sc = ex.front().scene.scene;
    std::string out = prompt_text::ir_examples_intro(shots, sc.width, sc.height);
    out += "\n\nLayout:\n" + render_layout(sc) + "\n\n";
    for (int i = 0; i < shots; ++i) {
        std::string k = std::to_string(i + 1);
        if (i) out += "\n\n\n";
        out += "Student A's Trajectory " + k + ":\n" + trajectory_block(ex[i].trajectory);
        out += "\n\nAnswer " + k + ": \n" + render_label(ex[i].label);
        out += "\nExplanation " + k + ": \n" + std::string(ex[i].explanation);
    }
    return out;
}

inline std::string serialize_ir_prompt(const IrScene& s, const Trajectory& t, int shots = 0) {
    const Scene& sc = s.scene;
    std::string out(prompt_text::kIrQuestion);
    out += "\n\n" + prompt_text::corner_sentence_ir(sc.width, sc.height);
    out += "\n\nLayout:\n" + render_layout(sc);
    out += "\n\n\nStudent A's Trajectory:\n" + trajectory_block(t);
    out += "\n\n" + std::string(prompt_text::kIrClosing);
    if (shots > 0) out = ir_examples_block(shots) + "\n\n" + out;
    return out;
}

inline std::string serialize_ir_prompt(const IrInstance& inst, int shots = 0) {
    return serialize_ir_prompt(inst.scene, inst.trajectory, shots);
}

// ---- generation ----

// Each truck can be reached from any cell of its 3x3 block without leaving
// the block, so an agent approaching a visible truck never loses sight of it.
inline bool trucks_locally_reachable(const IrScene& s) {
    for (auto& [label, t] : s.scene.pois) {
        DistanceField df(s.scene, t);
        for (int dr = -1; dr <= 1; ++dr)
            for (int dc = -1; dc <= 1; ++dc) {
                Cell c{t.col + dc, t.row + dr};
                if (s.scene.walkable(c) && df(c) != manhattan(c, t)) return false;
            }
    }
    return true;
}

struct IrSamplerConfig {
    int width = 5;
    int height = 5;
    int min_walls = 3;
    int max_walls = 6;
};

// One candidate scene and preference; nullopt when the scene fails validity.
inline std::optional<std::pair<IrScene, RigidPreference>> sample_ir_candidate(std::mt19937_64& rng,
                                                                            const IrSamplerConfig& cfg = {}) {
    Scene sc;
    sc.width = cfg.width;
    sc.height = cfg.height;
    std::vector<Cell> cells;
    for (int i = 0; i < sc.cell_count(); ++i) cells.push_back(sc.cell_at(i));
    std::shuffle(cells.begin(), cells.end(), rng);
    sc.agent_start = cells[0];
    int walls = std::uniform_int_distribution<int>(cfg.min_walls, cfg.max_walls)(rng);
    size_t next = 1;
    for (; next < cells.size() && static_cast<int>(sc.walls.size()) < walls; ++next) sc.walls.insert(cells[next]);
    const std::array<char, 4> slots = {'X', 'Y', 'Z', 'M'};
    size_t placed = 0;
    for (; next < cells.size() && placed < slots.size(); ++next)
        if (chebyshev(cells[next], sc.agent_start) > 1) sc.pois[slots[placed++]] = cells[next];
    if (placed < slots.size()) return std::nullopt;

    IrScene s{sc, 'N'};
    if (!walkable_connected(sc) || !trucks_locally_reachable(s)) return std::nullopt;

    RigidPreference pref;
    std::shuffle(pref.order.begin(), pref.order.end(), rng);
    return std::make_pair(std::move(s), pref);
}

inline std::optional<IrInstance> make_ir_instance(const IrScene& s, const RigidPreference& pref) {
    Trajectory t;
    try {
        t = simulate_trajectory(s, pref);
    } catch (const GenerationError&) {
        return std::nullopt;
    }
    IrInstance inst;
    inst.scene = s;
    inst.preference = pref;
    inst.trajectory = t;
    inst.type = classify_ir(s, t);
    inst.label = label_from_trajectory(s, t);
    if (!is_linear_extension(pref, inst.label))
        throw std::logic_error("simulated trajectory contradicts its own preference on layout\n" +
                               render_layout(s.scene) + "\npreference " + pref.str());
    return inst;
}

// Candidates are drawn from per-index substreams and accepted in index order,
// so the result depends only on (counts, seed), not on `jobs`.
inline std::vector<IrInstance> generate_ir_dataset(std::array<int, 3> counts, uint64_t seed,
                                                   unsigned jobs = default_jobs(), const IrSamplerConfig& cfg = {}) {
    std::array<int, 3> need = counts;
    int total = 0;
    for (int c : counts) {
        if (c < 0) throw InputError("IR counts must be non-negative");
        total += c;
    }
    std::vector<IrInstance> out;
    out.reserve(total);
    const uint64_t max_candidates = 20000ull * total + 100000ull;
    const size_t batch = std::max<size_t>(256, 64 * static_cast<size_t>(std::max(1u, jobs)));
    uint64_t index = 0;
    while (static_cast<int>(out.size()) < total) {
        if (index >= max_candidates)
            throw GenerationError("IR generation gave up after " + std::to_string(index) + " candidates");
        std::vector<std::optional<IrInstance>> results(batch);
        parallel_for(batch, jobs, [&](size_t i) {
            auto rng = substream(seed, index + i);
            auto cand = sample_ir_candidate(rng, cfg);
            if (cand) results[i] = make_ir_instance(cand->first, cand->second);
        });
        index += batch;
        for (auto& r : results) {
            if (!r) continue;
            int ti = static_cast<int>(r->type);
            if (need[ti] == 0) continue;
            --need[ti];
            r->id = make_item_id("ir", out.size());
            out.push_back(std::move(*r));
            if (static_cast<int>(out.size()) == total) break;
        }
    }
    return out;
}

// ---- JSON ----

inline nlohmann::json trajectory_to_json(const Trajectory& t) {
    auto steps = nlohmann::json::array();
    for (auto& st : t.steps) {
        std::vector<std::string> view, memory;
        for (char c : st.view.labels()) view.emplace_back(1, c);
        for (char c : st.memory) memory.emplace_back(1, c);
        steps.push_back({{"cell", st.cell}, {"view", view}, {"memory", memory}});
    }
    return steps;
}

inline char json_label(const nlohmann::json& j, std::string_view what) {
    auto s = j.get<std::string>();
    if (s.size() != 1 || !is_truck(s[0])) throw InputError(std::string(what) + " must be a single truck label");
    return s[0];
}

inline nlohmann::json to_json(const IrInstance& inst) {
    nlohmann::json trucks = nlohmann::json::object();
    for (auto& [label, c] : inst.scene.scene.pois) trucks[std::string(1, label)] = c;
    return {
        {"id", inst.id},
        {"scene_layout", render_layout(inst.scene.scene)},
        {"trucks", trucks},
        {"absent", std::string(1, inst.scene.absent)},
        {"preference", inst.preference.str()},
        {"trajectory", trajectory_to_json(inst.trajectory)},
        {"pick", std::string(1, inst.trajectory.pick)},
        {"label", render_label(inst.label)},
        {"type", to_string(inst.type)},
        {"prompt_zero_shot", serialize_ir_prompt(inst)},
    };
}

// Parses and cross-checks a dataset record: the stored views, label and type
// must agree with what the layout and route imply.
inline IrInstance ir_instance_from_json(const nlohmann::json& j) {
    try {
        IrInstance inst;
        inst.id = j.value("id", "");
        inst.scene = make_ir_scene(parse_layout(j.at("scene_layout").get<std::string>()));
        if (j.contains("absent") && json_label(j["absent"], "absent") != inst.scene.absent)
            throw InputError("absent truck disagrees with the layout");
        if (j.contains("trucks"))
            for (auto& [k, v] : j["trucks"].items())
                if (k.size() != 1 || inst.scene.truck_cell(k[0]) != v.get<Cell>())
                    throw InputError("truck '" + k + "' position disagrees with the layout");
        if (j.contains("preference")) inst.preference = RigidPreference::parse(j["preference"].get<std::string>());
        std::vector<Cell> cells;
        for (auto& st : j.at("trajectory")) cells.push_back(st.at("cell").get<Cell>());
        inst.trajectory = build_trajectory(inst.scene, cells, json_label(j.at("pick"), "pick"));
        for (size_t i = 0; i < cells.size(); ++i) {
            auto& st = j["trajectory"][i];
            if (st.contains("view") && st["view"] != trajectory_to_json(inst.trajectory)[i]["view"])
                throw InputError("trajectory view at step " + std::to_string(i) + " disagrees with the layout");
            if (st.contains("memory") && st["memory"] != trajectory_to_json(inst.trajectory)[i]["memory"])
                throw InputError("trajectory memory at step " + std::to_string(i) + " disagrees with the layout");
        }
        inst.label = label_from_trajectory(inst.scene, inst.trajectory);
        inst.type = classify_ir(inst.scene, inst.trajectory);
        if (j.contains("label") && parse_label(j["label"].get<std::string>()) != inst.label)
            throw InputError("stored label disagrees with the trajectory");
        if (j.contains("type") && parse_ir_type(j["type"].get<std::string>()) != inst.type)
            throw InputError("stored type disagrees with the trajectory");
        return inst;
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("IR record: ") + e.what());
    }
}

} // namespace socbench

#endif
