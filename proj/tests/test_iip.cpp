#include <gtest/gtest.h>

#include <fstream>
#include <random>
#include <sstream>

#include "socbench/iip_task.hpp"

using namespace socbench;

namespace {

std::string read_fixture(const std::string& name) {
    std::ifstream in(std::string(SOCBENCH_FIXTURES) + "/" + name, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

constexpr const char* kZeroShotLayout = "WA***\nW**W*\n*Y*W*\n*****\nX****";

IipInstance one_shot_instance() {
    return iip_instance_from_json(nlohmann::json::parse(read_fixture("iip_one_shot_instance.json")));
}

// Literal coloring rule on all-pairs distances and explicit cell sets.
struct OracleColoring {
    std::map<Cell, std::pair<char, int>> colored;
    bool cycle_cut = false;
};

OracleColoring oracle_coloring(const IipScene& s) {
    const Scene& sc = s.scene;
    auto cells = sc.walkable_cells();
    const int inf = 1 << 20;
    std::map<std::pair<Cell, Cell>, int> d;
    for (Cell a : cells)
        for (Cell b : cells) d[{a, b}] = a == b ? 0 : (manhattan(a, b) == 1 ? 1 : inf);
    for (Cell k : cells)
        for (Cell a : cells)
            for (Cell b : cells) d[{a, b}] = std::min(d[{a, b}], d[{a, k}] + d[{k, b}]);
    auto dist_to = [&](Cell z, const std::set<Cell>& r) {
        int best = inf;
        for (Cell c : r) best = std::min(best, d[{z, c}]);
        return best;
    };

    OracleColoring out;
    std::set<Cell> px, py, rx{s.x()}, ry{s.y()};
    std::vector<std::pair<std::set<Cell>, std::set<Cell>>> seen;
    for (int k = 1;; ++k) {
        bool grew = false;
        for (Cell c : rx) grew |= !px.contains(c);
        for (Cell c : ry) grew |= !py.contains(c);
        if (!grew) break;
        if (std::find(seen.begin(), seen.end(), std::make_pair(rx, ry)) != seen.end()) {
            out.cycle_cut = true;
            break;
        }
        seen.emplace_back(rx, ry);
        for (Cell c : rx) out.colored.emplace(c, std::make_pair('X', k));
        for (Cell c : ry) out.colored.emplace(c, std::make_pair('Y', k));
        std::set<Cell> nx, ny;
        int ax = dist_to(s.agent(), rx), ay = dist_to(s.agent(), ry);
        for (Cell z : cells) {
            int zx = dist_to(z, rx), zy = dist_to(z, ry);
            if (zx >= inf || zy >= inf) continue;
            if (zx - ax < zy - ay) nx.insert(z);
            if (zy - ay < zx - ax) ny.insert(z);
        }
        px = rx;
        py = ry;
        rx = nx;
        ry = ny;
    }
    return out;
}

std::optional<IipScene> random_iip_scene(std::mt19937_64& rng) {
    auto s = sample_iip_scene(rng);
    return s;
}

Scene mirror(const Scene& s) {
    Scene m = s;
    auto flip = [&](Cell c) { return Cell{s.width - 1 - c.col, c.row}; };
    m.walls.clear();
    for (Cell w : s.walls) m.walls.insert(flip(w));
    for (auto& [k, c] : m.pois) c = flip(c);
    m.agent_start = flip(s.agent_start);
    return m;
}

} // namespace

TEST(Coloring, MatchesLiteralOracle) {
    std::mt19937_64 rng(21);
    int checked = 0, cuts = 0;
    while (checked < 300) {
        auto s = random_iip_scene(rng);
        if (!s) continue;
        auto col = color_scene(*s);
        auto oracle = oracle_coloring(*s);
        EXPECT_EQ(col.cycle_cut, oracle.cycle_cut);
        cuts += oracle.cycle_cut;
        for (int i = 0; i < s->scene.cell_count(); ++i) {
            Cell c = s->scene.cell_at(i);
            auto it = oracle.colored.find(c);
            char want = it == oracle.colored.end() ? 'N' : it->second.first;
            int lvl = it == oracle.colored.end() ? 0 : it->second.second;
            ASSERT_EQ(col.color_at(c), want) << render_layout(s->scene) << " at " << format_cell(c);
            ASSERT_EQ(col.level_at(c), lvl) << render_layout(s->scene) << " at " << format_cell(c);
        }
        ++checked;
    }
}

TEST(Coloring, RestaurantsAtLevelOne) {
    std::mt19937_64 rng(4);
    for (int i = 0; i < 200; ++i) {
        auto s = random_iip_scene(rng);
        if (!s) continue;
        auto col = color_scene(*s);
        EXPECT_EQ(col.color_at(s->x()), 'X');
        EXPECT_EQ(col.color_at(s->y()), 'Y');
        EXPECT_EQ(col.level_at(s->x()), 1);
        EXPECT_EQ(col.level_at(s->y()), 1);
        for (Cell w : s->scene.walls) EXPECT_EQ(col.color_at(w), 'N');
    }
}

TEST(Coloring, AdjacentRestaurantsLeaveXAlone) {
    // A is one step nearer X than Y and Y lies just past X: no cell gains
    // strictly more towards X, so X's region never grows.
    auto col = color_scene(make_iip_scene(parse_layout("***XY\n*W***\n*W***\n*****\n*A***")));
    EXPECT_EQ(col.cells_of('X'), (std::vector<Cell>{{3, 0}}));
    auto ys = col.cells_of('Y');
    EXPECT_EQ(ys, (std::vector<Cell>{{4, 0}, {4, 1}, {4, 2}, {4, 3}, {4, 4}}));
    for (int r = 1; r < 5; ++r) EXPECT_EQ(col.level_at({4, r}), 2);
}

TEST(Coloring, MirrorAndRelabelAreEquivariant) {
    std::mt19937_64 rng(8);
    for (int i = 0; i < 150; ++i) {
        auto s = random_iip_scene(rng);
        if (!s) continue;
        auto col = color_scene(*s);
        IipScene m{mirror(s->scene)};
        auto mc = color_scene(m);
        IipScene sw = *s;
        std::swap(sw.scene.pois['X'], sw.scene.pois['Y']);
        auto sc = color_scene(sw);
        auto swap_xy = [](char c) { return c == 'X' ? 'Y' : c == 'Y' ? 'X' : c; };
        for (int k = 0; k < s->scene.cell_count(); ++k) {
            Cell c = s->scene.cell_at(k), f{s->scene.width - 1 - c.col, c.row};
            EXPECT_EQ(col.color_at(c), mc.color_at(f));
            EXPECT_EQ(col.level_at(c), mc.level_at(f));
            EXPECT_EQ(swap_xy(col.color_at(c)), sc.color_at(c));
            EXPECT_EQ(col.level_at(c), sc.level_at(c));
        }
    }
}

TEST(Coloring, TraceHoldsEveryColouredCell) {
    std::mt19937_64 rng(12);
    for (int i = 0; i < 100; ++i) {
        auto s = random_iip_scene(rng);
        if (!s) continue;
        RegionTrace trace;
        auto col = color_scene(*s, &trace);
        ASSERT_EQ(static_cast<int>(trace.size()), col.rounds);
        for (char which : {'X', 'Y'})
            for (Cell c : col.cells_of(which)) {
                auto& round = trace[col.level_at(c) - 1];
                EXPECT_TRUE((which == 'X' ? round.first : round.second).contains(c));
            }
    }
}

TEST(Generators, LengthsAndShapes) {
    auto data = generate_iip_dataset({3, 1, 3, 3}, 17, 1);
    for (auto& inst : data) {
        const auto& s = inst.scene;
        const auto& sc = s.scene;
        int dax = *shortest_distance(sc, s.agent(), s.x());
        int day = *shortest_distance(sc, s.agent(), s.y());
        int dyx = *shortest_distance(sc, s.y(), s.x());
        EXPECT_EQ(static_cast<int>(inst.route(RouteStyle::Shortest).moves()), dax);
        auto& rev = inst.route(RouteStyle::Reversed);
        EXPECT_EQ(static_cast<int>(rev.moves()), day + dyx);
        EXPECT_NE(std::find(rev.cells.begin(), rev.cells.end(), s.y()), rev.cells.end());
        for (RouteStyle st : kRouteStyles) {
            validate_route(sc, inst.route(st));
            EXPECT_GE(static_cast<int>(inst.route(st).moves()), dax);
        }
        // Avoidant skips Y whenever Y is not a cut cell between A and X.
        Scene without_y = sc;
        without_y.walls.insert(s.y());
        auto& av = inst.route(RouteStyle::Avoidant);
        if (DistanceField(without_y, s.agent()).reachable(s.x()))
            EXPECT_EQ(std::find(av.cells.begin(), av.cells.end(), s.y()), av.cells.end());
        // Hybrid goes through its waypoint using shortest legs.
        auto col = color_scene(s);
        Cell c = hybrid_waypoint(s, col);
        auto& hy = inst.route(RouteStyle::Hybrid);
        EXPECT_EQ(col.color_at(c), 'X');
        EXPECT_EQ(static_cast<int>(hy.moves()),
                  *shortest_distance(sc, s.agent(), c) + *shortest_distance(sc, c, s.x()));
        EXPECT_NE(std::find(hy.cells.begin(), hy.cells.end(), c), hy.cells.end());
        EXPECT_EQ(classify_iip(hy, s.y()), inst.type);
    }
}

TEST(Generators, OneShotExampleRoutes) {
    auto inst = one_shot_instance();
    auto col = color_scene(inst.scene);
    EXPECT_EQ(gen_hybrid(inst.scene, col), inst.route(RouteStyle::Hybrid));
    EXPECT_EQ(gen_avoidant(inst.scene), inst.route(RouteStyle::Avoidant));
    // Our Shortest default differs from the example's hand-drawn one but has its length.
    EXPECT_EQ(gen_shortest(inst.scene).moves(), inst.route(RouteStyle::Shortest).moves());
    EXPECT_EQ(gen_reversed(inst.scene, col).moves(), inst.route(RouteStyle::Reversed).moves());
}

TEST(Generators, WaypointAtAgentWhenAgentIsXColoured) {
    auto s = make_iip_scene(parse_layout("*****\n*A***\n*****\n****Y\nX****"));
    auto col = color_scene(s);
    col.set(s.agent(), 'X', 2);
    EXPECT_EQ(hybrid_waypoint(s, col), s.agent());
    auto hy = gen_hybrid(s, col);
    EXPECT_EQ(static_cast<int>(hy.moves()), *shortest_distance(s.scene, s.agent(), s.x()));
}

TEST(Generators, CosineTieIsRejected) {
    // Candidates (2,1) and (3,2) mirror each other about the diagonal YX.
    auto s = make_iip_scene(parse_layout("*****\n***X*\n**A**\n*****\nY****"));
    Coloring col(5, 5);
    col.set(s.x(), 'X', 1);
    col.set(s.y(), 'Y', 1);
    col.set({2, 1}, 'X', 2);
    col.set({3, 2}, 'X', 2);
    EXPECT_THROW(hybrid_waypoint(s, col), GenerationError);
    col.set({3, 2}, 'N', 0);
    EXPECT_EQ(hybrid_waypoint(s, col), (Cell{2, 1}));
}

TEST(Generators, AcceptedInstancesNeverTie) {
    for (auto& inst : generate_iip_dataset({2, 1, 3, 3}, 23, 1))
        EXPECT_NO_THROW(hybrid_waypoint(inst.scene, color_scene(inst.scene)));
}

TEST(Generators, TranslationIsInvariant) {
    // A wall column on the left shifts the scene by one without changing any distance.
    auto data = generate_iip_dataset({2, 1, 2, 2}, 31, 1);
    for (auto& inst : data) {
        Scene wide = inst.scene.scene;
        wide.width += 1;
        wide.walls.clear();
        for (Cell w : inst.scene.scene.walls) wide.walls.insert({w.col + 1, w.row});
        for (int r = 0; r < wide.height; ++r) wide.walls.insert({0, r});
        for (auto& [k, c] : wide.pois) c.col += 1;
        wide.agent_start.col += 1;
        IipScene t{wide};
        auto col = color_scene(t);
        auto routes = generate_routes(t, col);
        for (RouteStyle st : kRouteStyles) {
            auto shifted = inst.route(st);
            for (Cell& c : shifted.cells) c.col += 1;
            EXPECT_EQ(routes[static_cast<int>(st)], shifted) << to_string(st);
        }
        EXPECT_EQ(classify_iip(routes[3], t.y()), inst.type);
    }
}

TEST(Classify, FourTypes) {
    Cell y{2, 2};
    ConcreteRoute near_acyclic{{{0, 0}, {1, 0}, {1, 1}}};
    ConcreteRoute far_acyclic{{{0, 4}, {0, 3}}};
    ConcreteRoute near_cyclic{{{1, 1}, {1, 0}, {1, 1}, {0, 1}}};
    ConcreteRoute far_cyclic{{{0, 4}, {0, 3}, {0, 4}}};
    EXPECT_EQ(classify_iip(near_cyclic, y), IipType::I);
    EXPECT_EQ(classify_iip(far_cyclic, y), IipType::II);
    EXPECT_EQ(classify_iip(near_acyclic, y), IipType::III);
    EXPECT_EQ(classify_iip(far_acyclic, y), IipType::IV);
    EXPECT_EQ(parse_iip_type("III"), IipType::III);
    EXPECT_THROW(parse_iip_type("V"), InputError);
}

TEST(Generate, ExactCountsAndDeterminism) {
    auto a = generate_iip_dataset({2, 1, 2, 2}, 9, 1);
    auto b = generate_iip_dataset({2, 1, 2, 2}, 9, 3);
    ASSERT_EQ(a.size(), 7u);
    std::array<int, 4> counts{};
    for (size_t i = 0; i < a.size(); ++i) {
        ++counts[static_cast<int>(a[i].type)];
        EXPECT_EQ(to_json(a[i]).dump(), to_json(b[i]).dump());
        EXPECT_FALSE(check_iip_routes(a[i].scene, a[i].routes).has_value());
        std::set<RouteStyle> styles(a[i].shuffled_order.begin(), a[i].shuffled_order.end());
        EXPECT_EQ(styles.size(), 4u);
    }
    EXPECT_EQ(counts, (std::array<int, 4>{2, 1, 2, 2}));
    EXPECT_TRUE(generate_iip_dataset({0, 0, 0, 0}, 1).empty());
    EXPECT_THROW(generate_iip_dataset({-1, 0, 0, 0}, 1), InputError);
}

TEST(Prompt, HeadMatchesZeroShotFixture) {
    auto fixture = read_fixture("iip_zero_shot_prompt.txt");
    auto head = iip_prompt_head(make_iip_scene(parse_layout(kZeroShotLayout)));
    ASSERT_GE(fixture.size(), head.size());
    EXPECT_EQ(fixture.substr(0, head.size()), head);
    EXPECT_EQ(fixture.substr(head.size(), 9), "\nRoute A\n");
}

TEST(Prompt, RouteBlockMatchesFixtureRoute) {
    auto fixture = read_fixture("iip_zero_shot_prompt.txt");
    ConcreteRoute r{{{1, 0}, {2, 0}, {2, 1}, {2, 2}, {2, 3}, {2, 4}, {1, 4}, {0, 4}}};
    auto block = route_block('B', r);
    EXPECT_NE(fixture.find(block + "\n\n"), std::string::npos) << block;
}

TEST(Prompt, OneShotPrefix) {
    auto inst = one_shot_instance();
    auto zero = serialize_iip_prompt(inst, 0);
    EXPECT_EQ(serialize_iip_prompt(inst, 1), read_fixture("iip_one_shot_block.txt") + "\n\n" + zero);
    EXPECT_THROW(serialize_iip_prompt(inst, 2), InputError);
    // Options appear in shuffled order.
    EXPECT_NE(zero.find("Route A\nMove up from (1, 4) to (1,3)"), std::string::npos);
    EXPECT_NE(zero.find("Route D\nMove right from (1, 4) to (2,4)"), std::string::npos);
}

TEST(Json, RoundTripAndErrors) {
    auto data = generate_iip_dataset({1, 0, 1, 1}, 5, 1);
    for (auto& inst : data) {
        auto j = to_json(inst);
        EXPECT_EQ(to_json(iip_instance_from_json(j)).dump(), j.dump());
        for (RouteStyle st : kRouteStyles) EXPECT_EQ(inst.style_of(inst.letter_of(st)), st);
    }
    auto j = to_json(data[0]);
    j["type"] = data[0].type == IipType::I ? "IV" : "I";
    EXPECT_THROW(iip_instance_from_json(j), InputError);
    j = to_json(data[0]);
    j["routes"]["Hybrid"] = j["routes"]["Shortest"];
    EXPECT_THROW(iip_instance_from_json(j), InputError);
    j = to_json(data[0]);
    j["shuffled_order"] = {"Hybrid", "Hybrid", "Shortest", "Avoidant"};
    EXPECT_THROW(iip_instance_from_json(j), InputError);
    EXPECT_THROW(data[0].style_of('E'), InputError);
}
