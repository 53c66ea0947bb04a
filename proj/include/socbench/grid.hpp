#ifndef SOCBENCH_GRID_HPP
#define SOCBENCH_GRID_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <compare>
#include <cstdlib>
#include <deque>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "socbench/error.hpp"

namespace socbench {

struct Cell {
    int col = 0;
    int row = 0;

    friend auto operator<=>(const Cell&, const Cell&) = default;
};

inline Cell operator+(Cell a, Cell b) { return {a.col + b.col, a.row + b.row}; }

inline int manhattan(Cell a, Cell b) { return std::abs(a.col - b.col) + std::abs(a.row - b.row); }
inline int chebyshev(Cell a, Cell b) { return std::max(std::abs(a.col - b.col), std::abs(a.row - b.row)); }

// "(c, r)" as used in trajectory lines.
inline std::string format_cell(Cell c) {
    return "(" + std::to_string(c.col) + ", " + std::to_string(c.row) + ")";
}

// Move order doubles as the tie-break order for routes: U < D < L < R.
enum class Dir { Up, Down, Left, Right };

inline constexpr std::array<Dir, 4> kDirs = {Dir::Up, Dir::Down, Dir::Left, Dir::Right};

inline Cell delta(Dir d) {
    switch (d) {
    case Dir::Up: return {0, -1};
    case Dir::Down: return {0, 1};
    case Dir::Left: return {-1, 0};
    case Dir::Right: return {1, 0};
    }
    return {0, 0};
}

inline std::string_view dir_word(Dir d) {
    switch (d) {
    case Dir::Up: return "up";
    case Dir::Down: return "down";
    case Dir::Left: return "left";
    case Dir::Right: return "right";
    }
    return "";
}

// Direction of a single 4-adjacent step, nullopt if a and b are not adjacent.
inline std::optional<Dir> step_dir(Cell a, Cell b) {
    for (Dir d : kDirs)
        if (a + delta(d) == b) return d;
    return std::nullopt;
}

struct Scene {
    int width = 5;
    int height = 5;
    std::set<Cell> walls;
    Cell agent_start;
    std::map<char, Cell> pois;

    bool in_bounds(Cell c) const { return c.col >= 0 && c.row >= 0 && c.col < width && c.row < height; }
    bool walkable(Cell c) const { return in_bounds(c) && !walls.contains(c); }
    int cell_count() const { return width * height; }
    int index(Cell c) const { return c.row * width + c.col; }
    Cell cell_at(int idx) const { return {idx % width, idx / width}; }

    Cell poi(char label) const {
        auto it = pois.find(label);
        if (it == pois.end()) throw InputError(std::string("scene has no point of interest '") + label + "'");
        return it->second;
    }

    // Walkable 4-neighbours in U, D, L, R order.
    std::vector<Cell> neighbors(Cell c) const {
        std::vector<Cell> out;
        out.reserve(4);
        for (Dir d : kDirs) {
            Cell n = c + delta(d);
            if (walkable(n)) out.push_back(n);
        }
        return out;
    }

    std::vector<Cell> walkable_cells() const {
        std::vector<Cell> out;
        for (int r = 0; r < height; ++r)
            for (int c = 0; c < width; ++c)
                if (walkable({c, r})) out.push_back({c, r});
        return out;
    }

    friend bool operator==(const Scene&, const Scene&) = default;
};

inline bool is_poi_label(char ch) {
    return ch == 'X' || ch == 'Y' || ch == 'Z' || ch == 'M' || ch == 'N';
}

inline void validate_scene(const Scene& s) {
    if (s.width <= 0 || s.height <= 0) throw LayoutError("scene dimensions must be positive");
    for (Cell w : s.walls)
        if (!s.in_bounds(w)) throw LayoutError("wall " + format_cell(w) + " out of bounds");
    if (!s.walkable(s.agent_start)) throw LayoutError("agent start " + format_cell(s.agent_start) + " is not walkable");
    std::set<Cell> seen;
    for (auto& [label, c] : s.pois) {
        if (!s.walkable(c)) throw LayoutError(std::string("poi ") + label + " at " + format_cell(c) + " is not walkable");
        if (c == s.agent_start) throw LayoutError(std::string("poi ") + label + " shares the agent cell");
        if (!seen.insert(c).second) throw LayoutError(std::string("poi ") + label + " shares a cell with another poi");
    }
}

// Rows of '*', 'W', 'A' and poi letters joined by '\n', no trailing newline.
inline Scene parse_layout(std::string_view text) {
    std::vector<std::string> rows;
    std::string cur;
    for (char ch : text) {
        if (ch == '\r') continue;
        if (ch == '\n') {
            rows.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(ch);
        }
    }
    if (!cur.empty()) rows.push_back(cur);
    if (rows.empty()) throw LayoutError("empty layout");

    Scene s;
    s.height = static_cast<int>(rows.size());
    s.width = static_cast<int>(rows.front().size());
    if (s.width == 0) throw LayoutError("layout row 0 is empty");
    bool have_agent = false;
    for (int r = 0; r < s.height; ++r) {
        if (static_cast<int>(rows[r].size()) != s.width)
            throw LayoutError("layout row " + std::to_string(r) + " has width " + std::to_string(rows[r].size()) +
                              ", expected " + std::to_string(s.width));
        for (int c = 0; c < s.width; ++c) {
            char ch = rows[r][c];
            Cell cell{c, r};
            if (ch == '*') continue;
            if (ch == 'W') {
                s.walls.insert(cell);
            } else if (ch == 'A') {
                if (have_agent) throw LayoutError("duplicate agent 'A' at " + format_cell(cell));
                have_agent = true;
                s.agent_start = cell;
            } else if (is_poi_label(ch)) {
                if (s.pois.contains(ch)) throw LayoutError(std::string("duplicate label '") + ch + "'");
                s.pois[ch] = cell;
            } else {
                throw LayoutError(std::string("unknown layout character '") + ch + "' at " + format_cell(cell));
            }
        }
    }
    if (!have_agent) throw LayoutError("layout has no agent 'A'");
    validate_scene(s);
    return s;
}

inline std::vector<std::string> layout_rows(const Scene& s) {
    std::vector<std::string> rows(s.height, std::string(s.width, '*'));
    for (Cell w : s.walls) rows[w.row][w.col] = 'W';
    for (auto& [label, c] : s.pois) rows[c.row][c.col] = label;
    rows[s.agent_start.row][s.agent_start.col] = 'A';
    return rows;
}

inline std::string render_layout(const Scene& s) {
    std::string out;
    auto rows = layout_rows(s);
    for (size_t i = 0; i < rows.size(); ++i) {
        if (i) out.push_back('\n');
        out += rows[i];
    }
    return out;
}

// Layout rows concatenated without separators (25 characters on a 5x5 grid).
inline std::string flatten_layout(const Scene& s) {
    std::string out;
    for (auto& r : layout_rows(s)) out += r;
    return out;
}

inline constexpr int kUnreachable = -1;

// BFS distances from a set of source cells; kUnreachable where no path exists.
class DistanceField {
public:
    DistanceField(const Scene& s, const std::vector<Cell>& sources) : scene_(&s), dist_(s.cell_count(), kUnreachable) {
        std::vector<char> blocked(s.cell_count(), 0);
        for (Cell w : s.walls)
            if (s.in_bounds(w)) blocked[s.index(w)] = 1;
        std::vector<int> queue;
        queue.reserve(s.cell_count());
        for (Cell c : sources) {
            if (!s.in_bounds(c) || blocked[s.index(c)] || dist_[s.index(c)] == 0) continue;
            dist_[s.index(c)] = 0;
            queue.push_back(s.index(c));
        }
        for (size_t head = 0; head < queue.size(); ++head) {
            Cell c = s.cell_at(queue[head]);
            int d = dist_[queue[head]];
            for (Dir dir : kDirs) {
                Cell n = c + delta(dir);
                if (!s.in_bounds(n)) continue;
                int ni = s.index(n);
                if (blocked[ni] || dist_[ni] != kUnreachable) continue;
                dist_[ni] = d + 1;
                queue.push_back(ni);
            }
        }
    }

    DistanceField(const Scene& s, Cell source) : DistanceField(s, std::vector<Cell>{source}) {}

    int operator()(Cell c) const { return scene_->in_bounds(c) ? dist_[scene_->index(c)] : kUnreachable; }
    bool reachable(Cell c) const { return (*this)(c) != kUnreachable; }

private:
    const Scene* scene_;
    std::vector<int> dist_;
};

inline std::optional<int> shortest_distance(const Scene& s, Cell a, Cell b) {
    if (!s.walkable(a) || !s.walkable(b)) throw InputError("distance endpoints must be walkable");
    int d = DistanceField(s, b)(a);
    if (d == kUnreachable) return std::nullopt;
    return d;
}

// True when every walkable cell is reachable from every other.
inline bool walkable_connected(const Scene& s) {
    auto cells = s.walkable_cells();
    if (cells.empty()) return true;
    DistanceField df(s, cells.front());
    return std::all_of(cells.begin(), cells.end(), [&](Cell c) { return df.reachable(c); });
}

struct ConcreteRoute {
    std::vector<Cell> cells;

    size_t moves() const { return cells.empty() ? 0 : cells.size() - 1; }
    Cell front() const { return cells.front(); }
    Cell back() const { return cells.back(); }
    bool contains(Cell c) const { return std::find(cells.begin(), cells.end(), c) != cells.end(); }

    bool revisits() const {
        std::set<Cell> seen;
        for (Cell c : cells)
            if (!seen.insert(c).second) return true;
        return false;
    }

    friend bool operator==(const ConcreteRoute&, const ConcreteRoute&) = default;
};

inline void validate_route(const Scene& s, const ConcreteRoute& r) {
    if (r.cells.empty()) throw InputError("route is empty");
    for (size_t i = 0; i < r.cells.size(); ++i) {
        if (!s.walkable(r.cells[i])) throw InputError("route enters non-walkable cell " + format_cell(r.cells[i]));
        if (i > 0 && manhattan(r.cells[i - 1], r.cells[i]) != 1)
            throw InputError("route jumps from " + format_cell(r.cells[i - 1]) + " to " + format_cell(r.cells[i]));
    }
}

inline ConcreteRoute concat_routes(const ConcreteRoute& a, const ConcreteRoute& b) {
    if (a.cells.empty()) return b;
    if (b.cells.empty()) return a;
    if (a.back() != b.front()) throw InputError("routes do not join");
    ConcreteRoute out = a;
    out.cells.insert(out.cells.end(), b.cells.begin() + 1, b.cells.end());
    return out;
}

using CellWeights = std::map<Cell, double>;

// Minimal-length route a -> b; among those, minimal summed weight; remaining ties
// go to the lexicographically smallest move sequence (U < D < L < R).
inline ConcreteRoute shortest_route(const Scene& s, Cell a, Cell b, const CellWeights& penalty = {}) {
    if (!s.walkable(a) || !s.walkable(b)) throw UnreachableError("route endpoints must be walkable");
    DistanceField to_b(s, b);
    if (!to_b.reachable(a))
        throw UnreachableError("no route from " + format_cell(a) + " to " + format_cell(b));

    auto weight = [&](Cell c) {
        auto it = penalty.find(c);
        return it == penalty.end() ? 0.0 : it->second;
    };

    // best[c]: minimal summed weight of a shortest c -> b route, both ends included.
    constexpr double inf = std::numeric_limits<double>::infinity();
    std::vector<double> best(s.cell_count(), inf);
    std::vector<Cell> order = s.walkable_cells();
    std::erase_if(order, [&](Cell c) { return !to_b.reachable(c); });
    std::stable_sort(order.begin(), order.end(), [&](Cell x, Cell y) { return to_b(x) < to_b(y); });
    for (Cell c : order) {
        if (c == b) {
            best[s.index(c)] = weight(c);
            continue;
        }
        double m = inf;
        for (Cell n : s.neighbors(c))
            if (to_b(n) == to_b(c) - 1) m = std::min(m, best[s.index(n)]);
        best[s.index(c)] = weight(c) + m;
    }

    constexpr double eps = 1e-9;
    ConcreteRoute route{{a}};
    Cell cur = a;
    while (cur != b) {
        double target = best[s.index(cur)] - weight(cur);
        for (Dir d : kDirs) {
            Cell n = cur + delta(d);
            if (!s.walkable(n) || to_b(n) != to_b(cur) - 1) continue;
            if (best[s.index(n)] <= target + eps) {
                cur = n;
                break;
            }
        }
        route.cells.push_back(cur);
    }
    return route;
}

inline std::string make_item_id(std::string_view prefix, size_t n) {
    std::string digits = std::to_string(n);
    if (digits.size() < 5) digits.insert(0, 5 - digits.size(), '0');
    return std::string(prefix) + "-" + digits;
}

// JSON: cells as [c, r] pairs.
inline void to_json(nlohmann::json& j, const Cell& c) { j = nlohmann::json::array({c.col, c.row}); }

inline void from_json(const nlohmann::json& j, Cell& c) {
    if (!j.is_array() || j.size() != 2) throw InputError("cell must be a [col, row] pair");
    c.col = j.at(0).get<int>();
    c.row = j.at(1).get<int>();
}

inline void to_json(nlohmann::json& j, const ConcreteRoute& r) { j = r.cells; }
inline void from_json(const nlohmann::json& j, ConcreteRoute& r) { r.cells = j.get<std::vector<Cell>>(); }

inline void to_json(nlohmann::json& j, const Scene& s) {
    j = nlohmann::json{{"width", s.width}, {"height", s.height}, {"layout", render_layout(s)}};
}

inline void from_json(const nlohmann::json& j, Scene& s) {
    if (j.is_string()) {
        s = parse_layout(j.get<std::string>());
        return;
    }
    s = parse_layout(j.at("layout").get<std::string>());
    if (s.width != j.value("width", s.width) || s.height != j.value("height", s.height))
        throw LayoutError("scene dimensions disagree with its layout");
}

} // namespace socbench

#endif
