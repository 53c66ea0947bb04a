#ifndef SOCBENCH_FIT_HPP
#define SOCBENCH_FIT_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"
#include "socbench/bayes_model.hpp"
#include "socbench/error.hpp"
#include "socbench/parallel.hpp"

namespace socbench {

struct ChoiceRecord {
    std::string instance_id;
    RouteStyle chosen_style = RouteStyle::Shortest;
    std::string subject_id;
    std::string condition = "zero_shot/text";  // {zero_shot|one_shot}/{text|image}
};

inline void validate_condition(const std::string& c) {
    static const std::array<std::string, 4> ok = {"zero_shot/text", "zero_shot/image", "one_shot/text",
                                                  "one_shot/image"};
    if (std::find(ok.begin(), ok.end(), c) == ok.end()) throw InputError("unknown condition '" + c + "'");
}

inline nlohmann::json to_json(const ChoiceRecord& r) {
    return {{"instance_id", r.instance_id},
            {"chosen_style", to_string(r.chosen_style)},
            {"subject_id", r.subject_id},
            {"condition", r.condition}};
}

inline ChoiceRecord choice_from_json(const nlohmann::json& j) {
    try {
        ChoiceRecord r;
        r.instance_id = j.at("instance_id").get<std::string>();
        r.chosen_style = parse_route_style(j.at("chosen_style").get<std::string>());
        r.subject_id = j.value("subject_id", "");
        r.condition = j.value("condition", "zero_shot/text");
        validate_condition(r.condition);
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("choice record: ") + e.what());
    }
}

// Search coordinates: (e^-alpha, e^-beta, e^-theta, ln(1 + delta)).
using Coords = std::array<Real, 4>;

inline ModelParams params_from_coords(const Coords& u) {
    return ModelParams::from_exp(u[0], u[1], u[2], std::expm1(u[3]));
}

inline Coords coords_from_params(const ModelParams& p) {
    return {std::exp(-p.alpha), std::exp(-p.beta), std::exp(-p.theta), std::log1p(p.delta)};
}

struct FitBounds {
    std::array<Real, 2> e_alpha{1e-4L, 1};
    std::array<Real, 2> e_beta{1e-4L, 1};
    std::array<Real, 2> e_theta{1e-4L, 1};
    std::array<Real, 2> delta{0, 1e4L};

    std::array<std::array<Real, 2>, 4> coords() const {
        return {e_alpha, e_beta, e_theta, std::array<Real, 2>{std::log1p(delta[0]), std::log1p(delta[1])}};
    }
};

struct FixedParams {
    std::optional<Real> e_alpha, e_beta, e_theta, delta;

    std::array<std::optional<Real>, 4> coords() const {
        return {e_alpha, e_beta, e_theta, delta ? std::optional<Real>(std::log1p(*delta)) : std::nullopt};
    }
};

// Records grouped by instance into per-style counts, in instance-id order,
// so the sum never depends on record order.
class NllObjective {
public:
    NllObjective(const std::vector<ChoiceRecord>& records, const std::vector<IipInstance>& instances) {
        std::map<std::string, const IipInstance*> by_id;
        for (auto& inst : instances) by_id[inst.id] = &inst;
        std::map<std::string, size_t> slot;
        for (auto& r : records) {
            auto it = by_id.find(r.instance_id);
            if (it == by_id.end()) throw InputError("choice record refers to unknown instance '" + r.instance_id + "'");
            slot.emplace(r.instance_id, 0);
        }
        for (auto& [id, s] : slot) {
            s = groups_.size();
            groups_.push_back({id, instance_features(*by_id[id]), {}});
        }
        for (auto& r : records) groups_[slot[r.instance_id]].counts[static_cast<int>(r.chosen_style)] += 1;
        records_ = records.size();
    }

    size_t records() const { return records_; }
    size_t instances() const { return groups_.size(); }

    // +inf when some chosen option has zero probability or the posterior degenerates.
    Real operator()(const ModelParams& p) const {
        Real total = 0;
        for (auto& g : groups_) {
            std::array<Real, 4> post;
            try {
                post = iip_posterior(g.features, p);
            } catch (const DegenerateError&) {
                return std::numeric_limits<Real>::infinity();
            }
            for (int s = 0; s < 4; ++s) {
                if (g.counts[s] == 0) continue;
                if (!(post[s] > 0)) return std::numeric_limits<Real>::infinity();
                total -= g.counts[s] * std::log(post[s]);
            }
        }
        return total;
    }

    // "instance:Style" for every chosen option the model rules out.
    std::vector<std::string> zero_probability_choices(const ModelParams& p) const {
        std::vector<std::string> out;
        for (auto& g : groups_) {
            std::array<Real, 4> post{};
            try {
                post = iip_posterior(g.features, p);
            } catch (const DegenerateError&) {
            }
            for (int s = 0; s < 4; ++s)
                if (g.counts[s] > 0 && !(post[s] > 0)) out.push_back(g.id + ":" + to_string(kRouteStyles[s]));
        }
        return out;
    }

    std::array<Real, 4> mean_posterior(const ModelParams& p) const {
        std::array<Real, 4> acc{};
        for (auto& g : groups_) {
            auto post = iip_posterior(g.features, p);
            for (int s = 0; s < 4; ++s) acc[s] += post[s];
        }
        for (auto& v : acc) v /= std::max<size_t>(1, groups_.size());
        return acc;
    }

private:
    struct Group {
        std::string id;
        std::array<IipRouteFeatures, 4> features;
        std::array<int, 4> counts{};
    };
    std::vector<Group> groups_;
    size_t records_ = 0;
};

inline Real nll(const std::vector<ChoiceRecord>& records, const std::vector<IipInstance>& instances,
                const ModelParams& p) {
    return NllObjective(records, instances)(p);
}

struct FitOptions {
    FixedParams fixed;
    FitBounds bounds;
    uint64_t seed = 0;
    int grid = 0;           // points per free axis; 0 picks 50 for up to two free axes, else 20
    int starts = 4;         // best grid points refined
    int random_starts = 2;  // extra seeded starts drawn uniformly from the box
    int max_iterations = 400;
    unsigned jobs = default_jobs();
};

struct FitResult {
    ModelParams params;
    Coords coords{};
    Real nll = 0;
    int evaluations = 0;
    int iterations = 0;
    bool converged = false;
    std::vector<Real> trajectory;  // best NLL after each refinement iteration of the winning start
};

inline nlohmann::json to_json(const FitResult& r) {
    std::vector<double> traj(r.trajectory.begin(), r.trajectory.end());
    return {{"params",
             {{"alpha", static_cast<double>(r.params.alpha)},
              {"beta", static_cast<double>(r.params.beta)},
              {"theta", static_cast<double>(r.params.theta)},
              {"delta", static_cast<double>(r.params.delta)}}},
            {"e_alpha", static_cast<double>(r.coords[0])},
            {"e_beta", static_cast<double>(r.coords[1])},
            {"e_theta", static_cast<double>(r.coords[2])},
            {"nll", static_cast<double>(r.nll)},
            {"diagnostics",
             {{"evaluations", r.evaluations},
              {"iterations", r.iterations},
              {"converged", r.converged},
              {"trajectory", traj}}}};
}

namespace detail {

inline std::vector<Real> linspace(Real lo, Real hi, int n) {
    std::vector<Real> v(n);
    for (int i = 0; i < n; ++i) v[i] = n == 1 ? lo : (i == n - 1 ? hi : lo + (hi - lo) * i / (n - 1));
    return v;
}

struct BoxProblem {
    const NllObjective* objective;
    std::array<std::array<Real, 2>, 4> box;
    Coords fixed_point;
    std::vector<int> free;

    Coords embed(const std::vector<Real>& x) const {
        Coords u = fixed_point;
        for (size_t i = 0; i < free.size(); ++i)
            u[free[i]] = std::clamp(x[i], box[free[i]][0], box[free[i]][1]);
        return u;
    }
    Real eval(const std::vector<Real>& x) const { return (*objective)(params_from_coords(embed(x))); }
};

// Nelder-Mead on the free axes with projection onto the box.
inline FitResult nelder_mead(const BoxProblem& prob, std::vector<Real> x0, std::vector<Real> step, int max_iter) {
    const size_t n = x0.size();
    FitResult res;
    std::vector<std::vector<Real>> simplex{x0};
    for (size_t i = 0; i < n; ++i) {
        auto x = x0;
        auto [lo, hi] = prob.box[prob.free[i]];
        x[i] = x[i] + step[i] <= hi ? x[i] + step[i] : x[i] - step[i];
        x[i] = std::clamp(x[i], lo, hi);
        simplex.push_back(x);
    }
    auto clampv = [&](std::vector<Real> x) {
        for (size_t i = 0; i < n; ++i) x[i] = std::clamp(x[i], prob.box[prob.free[i]][0], prob.box[prob.free[i]][1]);
        return x;
    };
    std::vector<Real> f(simplex.size());
    for (size_t i = 0; i < simplex.size(); ++i) f[i] = prob.eval(simplex[i]);
    res.evaluations = static_cast<int>(simplex.size());

    std::vector<size_t> order(simplex.size());
    for (int it = 0; it < max_iter; ++it) {
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) { return f[a] < f[b]; });
        const size_t best = order.front(), worst = order.back(), second = order[order.size() - 2];
        res.trajectory.push_back(f[best]);
        res.iterations = it;

        Real spread = 0, size = 0;
        for (size_t i = 0; i < simplex.size(); ++i) {
            if (std::isfinite(f[i]) && std::isfinite(f[best])) spread = std::max(spread, f[i] - f[best]);
            else if (!std::isfinite(f[i]))
                spread = std::numeric_limits<Real>::infinity();
            for (size_t d = 0; d < n; ++d) size = std::max(size, std::abs(simplex[i][d] - simplex[best][d]));
        }
        if (size < 1e-9L || (spread < 1e-10L && size < 1e-6L)) {
            res.converged = true;
            break;
        }

        std::vector<Real> c(n, 0);
        for (size_t i = 0; i < simplex.size(); ++i)
            if (i != worst)
                for (size_t d = 0; d < n; ++d) c[d] += simplex[i][d] / n;
        auto along = [&](Real t) {
            std::vector<Real> x(n);
            for (size_t d = 0; d < n; ++d) x[d] = c[d] + t * (simplex[worst][d] - c[d]);
            return clampv(x);
        };
        auto xr = along(-1);
        Real fr = prob.eval(xr);
        ++res.evaluations;
        if (fr < f[best]) {
            auto xe = along(-2);
            Real fe = prob.eval(xe);
            ++res.evaluations;
            if (fe < fr) simplex[worst] = xe, f[worst] = fe;
            else simplex[worst] = xr, f[worst] = fr;
        } else if (fr < f[second]) {
            simplex[worst] = xr, f[worst] = fr;
        } else {
            bool outside = fr < f[worst];
            auto xc = along(outside ? -0.5L : 0.5L);
            Real fc = prob.eval(xc);
            ++res.evaluations;
            if (fc < (outside ? fr : f[worst])) {
                simplex[worst] = xc, f[worst] = fc;
            } else {
                for (size_t i = 0; i < simplex.size(); ++i) {
                    if (i == best) continue;
                    for (size_t d = 0; d < n; ++d) simplex[i][d] = simplex[best][d] + 0.5L * (simplex[i][d] - simplex[best][d]);
                    f[i] = prob.eval(simplex[i]);
                    ++res.evaluations;
                }
            }
        }
    }
    size_t best = std::min_element(f.begin(), f.end()) - f.begin();
    res.coords = prob.embed(simplex[best]);
    res.nll = f[best];
    if (res.trajectory.empty() || f[best] < res.trajectory.back()) res.trajectory.push_back(f[best]);
    return res;
}

} // namespace detail

inline FitResult fit_mle(const NllObjective& objective, const FitOptions& opt = {}) {
    if (objective.records() == 0) throw InputError("cannot fit an empty dataset");
    detail::BoxProblem prob{&objective, opt.bounds.coords(), {}, {}};
    auto fixed = opt.fixed.coords();
    for (int d = 0; d < 4; ++d) {
        auto [lo, hi] = prob.box[d];
        if (!(lo <= hi)) throw InputError("empty parameter bound on axis " + std::to_string(d));
        if (d < 3 && !(lo > 0 && hi <= 1)) throw InputError("e^-x bounds must lie in (0, 1]");
        if (fixed[d]) {
            if (d < 3 && !(*fixed[d] > 0 && *fixed[d] <= 1)) throw InputError("fixed e^-x value must lie in (0, 1]");
            prob.fixed_point[d] = *fixed[d];
        } else {
            prob.fixed_point[d] = lo;
            prob.free.push_back(d);
        }
    }
    if (prob.free.empty()) {
        FitResult r;
        r.coords = prob.fixed_point;
        r.params = params_from_coords(r.coords);
        r.nll = objective(r.params);
        r.evaluations = 1;
        r.converged = true;
        r.trajectory = {r.nll};
        if (!std::isfinite(r.nll)) throw NoFeasibleParams("fixed parameters give zero likelihood");
        return r;
    }

    const size_t nf = prob.free.size();
    const int per_axis = opt.grid > 0 ? opt.grid : (nf <= 2 ? 50 : 20);
    std::vector<std::vector<Real>> axes;
    for (int d : prob.free) axes.push_back(detail::linspace(prob.box[d][0], prob.box[d][1], per_axis));
    size_t total = 1;
    for (size_t i = 0; i < nf; ++i) total *= per_axis;
    std::vector<Real> values(total);
    auto point = [&](size_t idx) {
        std::vector<Real> x(nf);
        for (size_t i = nf; i-- > 0;) {
            x[i] = axes[i][idx % per_axis];
            idx /= per_axis;
        }
        return x;
    };
    parallel_for(total, opt.jobs, [&](size_t idx) { values[idx] = prob.eval(point(idx)); });

    std::vector<size_t> ranked(total);
    std::iota(ranked.begin(), ranked.end(), 0);
    std::stable_sort(ranked.begin(), ranked.end(), [&](size_t a, size_t b) { return values[a] < values[b]; });
    if (!std::isfinite(values[ranked.front()]))
        throw NoFeasibleParams("every grid point gives zero likelihood to some choice");

    std::vector<std::vector<Real>> starts;
    for (int i = 0; i < opt.starts && i < static_cast<int>(total); ++i) starts.push_back(point(ranked[i]));
    auto rng = substream(opt.seed, 0);
    for (int i = 0; i < opt.random_starts; ++i) {
        std::vector<Real> x(nf);
        for (size_t d = 0; d < nf; ++d)
            x[d] = std::uniform_real_distribution<double>(static_cast<double>(prob.box[prob.free[d]][0]),
                                                          static_cast<double>(prob.box[prob.free[d]][1]))(rng);
        starts.push_back(x);
    }
    std::vector<Real> step(nf);
    for (size_t d = 0; d < nf; ++d)
        step[d] = std::max<Real>((prob.box[prob.free[d]][1] - prob.box[prob.free[d]][0]) / std::max(1, per_axis - 1), 1e-6L);

    std::vector<FitResult> runs(starts.size());
    parallel_for(starts.size(), opt.jobs,
                 [&](size_t i) { runs[i] = detail::nelder_mead(prob, starts[i], step, opt.max_iterations); });
    size_t best = 0;
    for (size_t i = 1; i < runs.size(); ++i)
        if (runs[i].nll < runs[best].nll) best = i;
    FitResult r = runs[best];
    // The grid optimum is kept if refinement somehow ends worse.
    if (!(r.nll <= values[ranked.front()])) {
        r.coords = prob.embed(point(ranked.front()));
        r.nll = values[ranked.front()];
        r.trajectory.push_back(r.nll);
    }
    r.params = params_from_coords(r.coords);
    r.evaluations += static_cast<int>(total);
    for (auto& run : runs) r.evaluations += &run == &runs[best] ? 0 : run.evaluations;
    if (!std::isfinite(r.nll)) throw NoFeasibleParams("no parameters give every choice positive probability");
    return r;
}

inline FitResult fit_mle(const std::vector<ChoiceRecord>& records, const std::vector<IipInstance>& instances,
                         const FitOptions& opt = {}) {
    if (records.empty()) throw InputError("cannot fit an empty dataset");
    return fit_mle(NllObjective(records, instances), opt);
}

// ---- likelihood landscape over (e^-alpha, e^-beta) ----

struct LandscapePoint {
    Real e_alpha = 0;
    Real e_beta = 0;
    Real nll = 0;
    RouteStyle region = RouteStyle::Shortest;  // argmax of the dataset-mean posterior
};

struct Landscape {
    int resolution = 0;
    Real e_theta = 0;
    Real delta = 0;
    std::vector<LandscapePoint> points;  // e_alpha index major

    const LandscapePoint& at(int i, int j) const { return points[i * resolution + j]; }
    const LandscapePoint& minimum() const {
        return *std::min_element(points.begin(), points.end(),
                                 [](auto& a, auto& b) { return a.nll < b.nll; });
    }
};

// Same grid as fit_mle's coarse stage with (theta, delta) fixed at these values.
inline Landscape landscape(const NllObjective& objective, Real e_theta, Real delta, int resolution,
                           const FitBounds& bounds = {}, unsigned jobs = default_jobs()) {
    if (resolution < 2) throw InputError("landscape resolution must be at least 2");
    Landscape l;
    l.resolution = resolution;
    l.e_theta = e_theta;
    l.delta = delta;
    auto ax = detail::linspace(bounds.e_alpha[0], bounds.e_alpha[1], resolution);
    auto bx = detail::linspace(bounds.e_beta[0], bounds.e_beta[1], resolution);
    l.points.resize(static_cast<size_t>(resolution) * resolution);
    parallel_for(l.points.size(), jobs, [&](size_t idx) {
        auto& p = l.points[idx];
        p.e_alpha = ax[idx / resolution];
        p.e_beta = bx[idx % resolution];
        auto params = ModelParams::from_exp(p.e_alpha, p.e_beta, e_theta, delta);
        p.nll = objective(params);
        try {
            p.region = argmax_gap(objective.mean_posterior(params)).first;
        } catch (const DegenerateError&) {
            p.region = RouteStyle::Shortest;
        }
    });
    return l;
}

inline void write_landscape_csv(const Landscape& l, std::ostream& out) {
    out << "e_alpha,e_beta,nll,region\n";
    for (auto& p : l.points)
        out << static_cast<double>(p.e_alpha) << "," << static_cast<double>(p.e_beta) << ","
            << static_cast<double>(p.nll) << "," << to_string(p.region) << "\n";
}

} // namespace socbench

#endif
