#ifndef SOCBENCH_EVAL_HPP
#define SOCBENCH_EVAL_HPP

#include <algorithm>
#include <array>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <random>
#include <regex>
#include <string>
#include <variant>
#include <vector>

#include "socbench/iip_task.hpp"
#include "socbench/ir_task.hpp"
#include "socbench/llm_client.hpp"
#include "socbench/parallel.hpp"

namespace socbench {

enum class Task { IR, IIP };

inline std::string to_string(Task t) { return t == Task::IR ? "ir" : "iip"; }
inline Task parse_task(std::string_view s) {
    if (s == "ir") return Task::IR;
    if (s == "iip") return Task::IIP;
    throw InputError("unknown task '" + std::string(s) + "' (expected ir or iip)");
}

// Ordered from most to least lenient.
enum class Criterion { Favorite = 0, Visible = 1, Strict = 2 };
inline constexpr std::array<Criterion, 3> kCriteria = {Criterion::Favorite, Criterion::Visible, Criterion::Strict};

inline std::string to_string(Criterion c) {
    static const char* names[] = {"Favorite", "Visible", "Strict"};
    return names[static_cast<int>(c)];
}

// ---- answer parsing ----

struct ParsedIrAnswer {
    std::optional<PreferenceLabel> label;
    std::string raw_text;
    std::string error;  // set when no expression was found

    bool ok() const { return label.has_value(); }
};

// Takes the last well-formed preference expression in free text. Trucks the
// answer does not mention join the undetermined set. A lone letter only counts
// when it is the whole answer, so prose like "truck M is close" is skipped.
inline ParsedIrAnswer parse_ir_answer(std::string_view text) {
    ParsedIrAnswer out;
    out.raw_text = std::string(text);
    std::string trimmed = detail::trim(text);
    std::optional<PreferenceLabel> last;
    size_t pos = 0;
    while (pos < text.size()) {
        char c = text[pos];
        bool boundary = pos == 0 || !std::isalnum(static_cast<unsigned char>(text[pos - 1]));
        if (!(c == '{' || (is_truck(c) && boundary))) {
            ++pos;
            continue;
        }
        PreferenceGrammar g(text, pos);
        auto r = g.parse_prefix();
        if (!r) {
            ++pos;
            continue;
        }
        std::string_view span = text.substr(r->begin, r->end - r->begin);
        bool structured = span.find('>') != std::string_view::npos || span.find('{') != std::string_view::npos;
        TruckSet seen = r->label.undetermined;
        bool disjoint = true;
        for (auto grp : r->label.chain) {
            disjoint &= (seen & grp).empty();
            seen |= grp;
        }
        if (disjoint && (structured || detail::trim(span) == trimmed)) {
            PreferenceLabel l = r->label;
            l.undetermined |= TruckSet::all() - seen;
            last = l;
        }
        pos = std::max(r->end, pos + 1);
    }
    if (last) out.label = last;
    else out.error = "no preference expression found";
    return out;
}

// Option letter A-D. Prefers an explicit "Route C" / "Option C" / "Answer: C";
// otherwise the last standalone capital A-D, skipping the article "A".
inline std::optional<char> parse_iip_answer(std::string_view text) {
    std::string s(text);
    static const std::regex labelled(R"((?:[Rr]oute|[Oo]ption|[Aa]nswer|[Cc]hoice)\s*:?\s*\(?([A-D])\)?(?![A-Za-z0-9]))");
    std::optional<char> found;
    for (auto it = std::sregex_iterator(s.begin(), s.end(), labelled); it != std::sregex_iterator(); ++it)
        found = (*it)[1].str()[0];
    if (found) return found;
    std::string t = detail::trim(s);
    while (!t.empty() && std::string(".)!*").find(t.back()) != std::string::npos) t.pop_back();
    while (!t.empty() && std::string("(*").find(t.front()) != std::string::npos) t.erase(t.begin());
    if (t.size() == 1 && t[0] >= 'A' && t[0] <= 'D') return t[0];
    static const std::regex lone(R"((?:^|[^A-Za-z0-9])([B-D])(?![A-Za-z0-9]))");
    for (auto it = std::sregex_iterator(s.begin(), s.end(), lone); it != std::sregex_iterator(); ++it)
        found = (*it)[1].str()[0];
    return found;
}

// ---- scoring ----

// Strict: identical labels. Visible: identical once the absent truck is
// deleted from both. Favorite: identical possible-top sets, or Visible.
inline bool score_ir(const PreferenceLabel& parsed, const PreferenceLabel& label, char absent, Criterion c) {
    switch (c) {
    case Criterion::Strict:
        return parsed == label;
    case Criterion::Visible:
        return parsed.without(absent) == label.without(absent);
    case Criterion::Favorite:
        return parsed.possible_top() == label.possible_top() || parsed.without(absent) == label.without(absent);
    }
    return false;
}

inline std::array<bool, 3> score_ir_all(const ParsedIrAnswer& p, const IrInstance& inst) {
    std::array<bool, 3> s{};
    if (!p.ok()) return s;
    for (Criterion c : kCriteria) s[static_cast<int>(c)] = score_ir(*p.label, inst.label, inst.scene.absent, c);
    return s;
}

// ---- per-item results ----

struct ItemResult {
    std::string item_id;
    Task task = Task::IR;
    std::string type;  // IR or IIP type name
    std::string subject;
    int shots = 0;
    std::string condition;  // free-form tag carried through, e.g. "text"
    std::string prompt_hash;
    std::string raw_response;
    std::string model;
    std::string requested_at;
    std::string received_at;
    int attempts = 0;

    bool parsed_ok = false;
    std::string parsed;  // rendered label or option letter
    std::array<bool, 3> ir_scores{};  // indexed by Criterion
    std::optional<RouteStyle> style;
};

inline ItemResult score_ir_response(const IrInstance& inst, const std::string& raw, int shots) {
    ItemResult r;
    r.item_id = inst.id;
    r.task = Task::IR;
    r.type = to_string(inst.type);
    r.shots = shots;
    r.raw_response = raw;
    auto p = parse_ir_answer(raw);
    r.parsed_ok = p.ok();
    if (p.ok()) r.parsed = render_label(*p.label);
    r.ir_scores = score_ir_all(p, inst);
    return r;
}

inline ItemResult score_iip_response(const IipInstance& inst, const std::string& raw, int shots) {
    ItemResult r;
    r.item_id = inst.id;
    r.task = Task::IIP;
    r.type = to_string(inst.type);
    r.shots = shots;
    r.raw_response = raw;
    if (auto letter = parse_iip_answer(raw)) {
        r.parsed_ok = true;
        r.parsed = std::string(1, *letter);
        r.style = inst.style_of(*letter);
    }
    return r;
}

inline nlohmann::json to_json(const ItemResult& r) {
    nlohmann::json scores;
    if (r.task == Task::IR) {
        for (Criterion c : kCriteria) scores[to_string(c)] = r.ir_scores[static_cast<int>(c)];
    } else {
        scores["style"] = r.style ? nlohmann::json(to_string(*r.style)) : nlohmann::json(nullptr);
    }
    nlohmann::json j = {
        {"item_id", r.item_id},
        {"task", to_string(r.task)},
        {"type", r.type},
        {"subject", r.subject},
        {"shots", r.shots},
        {"prompt_hash", r.prompt_hash},
        {"raw_response", r.raw_response},
        {"parsed", r.parsed_ok ? nlohmann::json(r.parsed) : nlohmann::json(nullptr)},
        {"scores", scores},
        {"timestamps", {{"requested_at", r.requested_at}, {"received_at", r.received_at}}},
        {"model", r.model},
        {"attempts", r.attempts},
    };
    if (!r.condition.empty()) j["condition"] = r.condition;
    return j;
}

// ---- report ----

struct IrCell {
    int n = 0;
    int unparseable = 0;
    std::array<int, 3> correct{};

    double accuracy(Criterion c) const { return n ? static_cast<double>(correct[static_cast<int>(c)]) / n : 0.0; }
    double unparseable_rate() const { return n ? static_cast<double>(unparseable) / n : 0.0; }
    friend bool operator==(const IrCell&, const IrCell&) = default;
};

struct IipCell {
    int n = 0;
    int unparseable = 0;
    std::array<int, 4> counts{};  // indexed by RouteStyle

    // Fractions over Shortest, Avoidant, Reversed, Hybrid, then unparseable.
    std::array<double, 5> distribution() const {
        std::array<double, 5> d{};
        if (!n) return d;
        for (int i = 0; i < 4; ++i) d[i] = static_cast<double>(counts[i]) / n;
        d[4] = static_cast<double>(unparseable) / n;
        return d;
    }
    friend bool operator==(const IipCell&, const IipCell&) = default;
};

inline const std::string kOverall = "Overall";

// Cells keyed by (type or "Overall", shots).
struct EvalReport {
    std::map<std::pair<std::string, int>, IrCell> ir;
    std::map<std::pair<std::string, int>, IipCell> iip;

    friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

inline EvalReport aggregate(const std::vector<ItemResult>& items) {
    EvalReport rep;
    for (auto& r : items) {
        for (const std::string& key : {kOverall, r.type}) {
            if (r.task == Task::IR) {
                auto& c = rep.ir[{key, r.shots}];
                ++c.n;
                c.unparseable += !r.parsed_ok;
                for (int k = 0; k < 3; ++k) c.correct[k] += r.ir_scores[k];
            } else {
                auto& c = rep.iip[{key, r.shots}];
                ++c.n;
                if (r.style) ++c.counts[static_cast<int>(*r.style)];
                else ++c.unparseable;
            }
        }
    }
    return rep;
}

inline nlohmann::json to_json(const EvalReport& rep) {
    auto ir = nlohmann::json::array();
    for (auto& [key, c] : rep.ir) {
        nlohmann::json acc, correct;
        for (Criterion k : kCriteria) {
            acc[to_string(k)] = c.accuracy(k);
            correct[to_string(k)] = c.correct[static_cast<int>(k)];
        }
        ir.push_back({{"type", key.first},
                      {"shots", key.second},
                      {"n", c.n},
                      {"correct", correct},
                      {"accuracy", acc},
                      {"unparseable", c.unparseable},
                      {"unparseable_rate", c.unparseable_rate()}});
    }
    auto iip = nlohmann::json::array();
    for (auto& [key, c] : rep.iip) {
        nlohmann::json counts, dist;
        auto d = c.distribution();
        for (int i = 0; i < 4; ++i) {
            counts[to_string(kRouteStyles[i])] = c.counts[i];
            dist[to_string(kRouteStyles[i])] = d[i];
        }
        counts["Unparseable"] = c.unparseable;
        dist["Unparseable"] = d[4];
        iip.push_back({{"type", key.first}, {"shots", key.second}, {"n", c.n}, {"counts", counts}, {"distribution", dist}});
    }
    return {{"ir", ir}, {"iip", iip}};
}

// One row per (task, type, shots, metric).
inline void write_report_csv(const EvalReport& rep, std::ostream& out) {
    out << "task,type,shots,metric,value,n\n";
    for (auto& [key, c] : rep.ir) {
        auto row = [&](const std::string& metric, double v) {
            out << "ir," << key.first << ',' << key.second << ',' << metric << ',' << v << ',' << c.n << '\n';
        };
        for (Criterion k : kCriteria) row(to_string(k), c.accuracy(k));
        row("unparseable_rate", c.unparseable_rate());
    }
    for (auto& [key, c] : rep.iip) {
        auto d = c.distribution();
        for (int i = 0; i < 5; ++i)
            out << "iip," << key.first << ',' << key.second << ',' << (i < 4 ? to_string(kRouteStyles[i]) : "Unparseable")
                << ',' << d[i] << ',' << c.n << '\n';
    }
}

inline void write_report_table(const EvalReport& rep, std::ostream& out) {
    char buf[160];
    if (!rep.ir.empty()) {
        out << "IR         shots    n  Favorite  Visible  Strict  Unparseable\n";
        for (auto& [key, c] : rep.ir) {
            std::snprintf(buf, sizeof buf, "%-12s %3d %5d  %8.3f %8.3f %7.3f  %11.3f\n", key.first.c_str(), key.second, c.n,
                          c.accuracy(Criterion::Favorite), c.accuracy(Criterion::Visible), c.accuracy(Criterion::Strict),
                          c.unparseable_rate());
            out << buf;
        }
    }
    if (!rep.iip.empty()) {
        out << "IIP        shots    n  Shortest Avoidant Reversed   Hybrid  Unparseable\n";
        for (auto& [key, c] : rep.iip) {
            auto d = c.distribution();
            std::snprintf(buf, sizeof buf, "%-12s %3d %5d  %8.3f %8.3f %8.3f %8.3f  %11.3f\n", key.first.c_str(), key.second,
                          c.n, d[0], d[1], d[2], d[3], d[4]);
            out << buf;
        }
    }
}

// ---- datasets ----

struct EvalDataset {
    std::vector<IrInstance> ir;
    std::vector<IipInstance> iip;
};

// JSONL records; a record with "trajectory" is IR, one with "routes" is IIP.
// Lines whose first key is "_meta" are skipped.
inline void load_dataset_jsonl(std::istream& in, EvalDataset& out, const std::string& name = "dataset") {
    std::string line;
    int n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (detail::trim(line).empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw InputError(name + " line " + std::to_string(n) + ": " + e.what());
        }
        if (j.contains("_meta")) continue;
        try {
            if (j.contains("trajectory")) out.ir.push_back(ir_instance_from_json(j));
            else if (j.contains("routes")) out.iip.push_back(iip_instance_from_json(j));
            else throw InputError("record is neither an IR nor an IIP instance");
        } catch (const InputError& e) {
            throw InputError(name + " line " + std::to_string(n) + ": " + e.what());
        }
    }
}

inline EvalDataset load_dataset_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open dataset " + path);
    EvalDataset d;
    load_dataset_jsonl(in, d, path);
    return d;
}

// ---- prompts ----

struct PromptItem {
    std::string item_id;
    std::string prompt;
};

// k = 0 is the plain zero-shot prompt; k = 1..3 prepend the fixed examples.
inline std::vector<PromptItem> few_shot_variants(const std::vector<IrInstance>& data, int k) {
    if (k < 0 || k > 3) throw InputError("few-shot variants exist for k = 0..3");
    std::vector<PromptItem> out;
    for (auto& inst : data) out.push_back({inst.id, serialize_ir_prompt(inst, k)});
    return out;
}

// ---- evaluation ----

// Replayed answers keyed by (item_id, shots); shots -1 matches any.
class ResponseFile {
public:
    void add(const std::string& item_id, int shots, std::string raw) { map_[{item_id, shots}] = std::move(raw); }

    std::optional<std::string> find(const std::string& item_id, int shots) const {
        if (auto it = map_.find({item_id, shots}); it != map_.end()) return it->second;
        if (auto it = map_.find({item_id, -1}); it != map_.end()) return it->second;
        return std::nullopt;
    }
    size_t size() const { return map_.size(); }

    // JSONL with item_id, raw_response and optional shots.
    static ResponseFile load(std::istream& in, const std::string& name = "responses") {
        ResponseFile f;
        std::string line;
        int n = 0;
        while (std::getline(in, line)) {
            ++n;
            if (detail::trim(line).empty()) continue;
            try {
                auto j = nlohmann::json::parse(line);
                if (j.contains("_meta")) continue;
                f.add(j.at("item_id").get<std::string>(), j.value("shots", -1), j.at("raw_response").get<std::string>());
            } catch (const nlohmann::json::exception& e) {
                throw InputError(name + " line " + std::to_string(n) + ": " + e.what());
            }
        }
        return f;
    }

private:
    std::map<std::pair<std::string, int>, std::string> map_;
};

struct EvalRun {
    std::vector<ItemResult> items;
    EvalReport report;
};

using Subject = std::variant<const LlmClient*, const ResponseFile*>;

struct EvalOptions {
    int shots = 0;
    std::string subject_name;
    unsigned jobs = 1;  // capped by the endpoint's max_concurrency
};

namespace detail {

template <class Inst, class Prompt, class Score>
EvalRun run_items(const std::vector<Inst>& data, const Subject& subject, const EvalOptions& opt, Prompt&& prompt_of,
                  Score&& score) {
    EvalRun run;
    run.items.resize(data.size());
    unsigned jobs = opt.jobs;
    std::string name = opt.subject_name;
    if (auto c = std::get_if<const LlmClient*>(&subject)) {
        jobs = std::min<unsigned>(jobs, static_cast<unsigned>((*c)->config().max_concurrency));
        if (name.empty()) name = (*c)->config().model;
    } else {
        jobs = 1;
        if (name.empty()) name = "response_file";
    }
    parallel_for(data.size(), std::max(jobs, 1u), [&](size_t i) {
        std::string prompt = prompt_of(data[i]);
        ItemResult r;
        std::string raw, model, t0, t1;
        int attempts = 0;
        if (auto c = std::get_if<const LlmClient*>(&subject)) {
            auto comp = (*c)->complete(prompt);
            raw = comp.text;
            model = comp.model;
            t0 = comp.requested_at;
            t1 = comp.received_at;
            attempts = static_cast<int>(comp.attempts.size());
        } else {
            auto found = std::get<const ResponseFile*>(subject)->find(data[i].id, opt.shots);
            if (!found) throw InputError("no recorded response for item " + data[i].id);
            raw = *found;
        }
        r = score(data[i], raw, opt.shots);
        r.subject = name;
        r.prompt_hash = sha256_hex(prompt);
        r.model = model;
        r.requested_at = t0;
        r.received_at = t1;
        r.attempts = attempts;
        run.items[i] = std::move(r);
    });
    run.report = aggregate(run.items);
    return run;
}

} // namespace detail

inline EvalRun run_eval(const std::vector<IrInstance>& data, const Subject& subject, const EvalOptions& opt = {}) {
    if (opt.shots < 0 || opt.shots > 3) throw InputError("IR evaluation supports 0 to 3 shots");
    return detail::run_items(
        data, subject, opt, [&](const IrInstance& i) { return serialize_ir_prompt(i, opt.shots); }, score_ir_response);
}

inline EvalRun run_eval(const std::vector<IipInstance>& data, const Subject& subject, const EvalOptions& opt = {}) {
    if (opt.shots < 0 || opt.shots > 1) throw InputError("IIP evaluation supports 0 or 1 shot");
    return detail::run_items(
        data, subject, opt, [&](const IipInstance& i) { return serialize_iip_prompt(i, opt.shots); }, score_iip_response);
}

// Rescores a response log against a dataset. Only item_id, task, shots,
// subject, condition and raw_response are read; scores are recomputed.
inline std::vector<ItemResult> rescore(std::istream& log, const EvalDataset& data, const std::string& name = "responses") {
    std::map<std::string, const IrInstance*> ir;
    std::map<std::string, const IipInstance*> iip;
    for (auto& i : data.ir) ir[i.id] = &i;
    for (auto& i : data.iip) iip[i.id] = &i;
    std::vector<ItemResult> out;
    std::string line;
    int n = 0;
    while (std::getline(log, line)) {
        ++n;
        if (detail::trim(line).empty()) continue;
        try {
            auto j = nlohmann::json::parse(line);
            if (j.contains("_meta")) continue;
            std::string id = j.at("item_id").get<std::string>();
            std::string raw = j.at("raw_response").get<std::string>();
            int shots = j.value("shots", 0);
            std::optional<Task> task;
            if (j.contains("task")) task = parse_task(j["task"].get<std::string>());
            ItemResult r;
            if ((!task || *task == Task::IR) && ir.count(id)) r = score_ir_response(*ir[id], raw, shots);
            else if ((!task || *task == Task::IIP) && iip.count(id)) r = score_iip_response(*iip[id], raw, shots);
            else throw InputError("item " + id + " is not in the dataset");
            r.subject = j.value("subject", "");
            r.condition = j.value("condition", "");
            r.prompt_hash = j.value("prompt_hash", "");
            r.model = j.value("model", "");
            if (j.contains("timestamps")) {
                r.requested_at = j["timestamps"].value("requested_at", "");
                r.received_at = j["timestamps"].value("received_at", "");
            }
            r.attempts = j.value("attempts", 0);
            out.push_back(std::move(r));
        } catch (const nlohmann::json::exception& e) {
            throw InputError(name + " line " + std::to_string(n) + ": " + e.what());
        } catch (const InputError& e) {
            throw InputError(name + " line " + std::to_string(n) + ": " + e.what());
        }
    }
    return out;
}

// ---- shortcut export ----

struct ShortcutSample {
    std::string id;
    std::string instance_id;
    Task task = Task::IR;
    std::string type;
    std::string split;  // "train" or "test"
    std::string input;
    std::string target;
};

inline nlohmann::json to_json(const ShortcutSample& s) {
    return {{"id", s.id},       {"instance_id", s.instance_id}, {"task", to_string(s.task)}, {"type", s.type},
            {"split", s.split}, {"input", s.input},             {"target", s.target}};
}

// Flattened layout, then the trajectory lines with no prompt prose.
inline std::string shortcut_ir_input(const IrInstance& inst) {
    std::string out = flatten_layout(inst.scene.scene);
    const auto& steps = inst.trajectory.steps;
    for (size_t i = 0; i < steps.size(); ++i)
        out += "\n" + trajectory_line(steps[i], i + 1 == steps.size() ? std::optional<char>(inst.trajectory.pick) : std::nullopt);
    return out;
}

// Flattened layout, then one option's move lines.
inline std::string shortcut_iip_input(const IipInstance& inst, RouteStyle st) {
    std::string out = flatten_layout(inst.scene.scene);
    const auto& r = inst.route(st);
    for (size_t i = 1; i < r.cells.size(); ++i) out += "\n" + move_line(r.cells[i - 1], r.cells[i]);
    return out;
}

namespace detail {

// Per type, a seeded shuffle puts round(n/6) instances in test, the rest in train.
template <class Inst>
std::map<std::string, std::string> split_by_type(const std::vector<Inst>& data, uint64_t seed) {
    std::map<std::string, std::vector<std::string>> by_type;
    for (auto& i : data) by_type[to_string(i.type)].push_back(i.id);
    std::map<std::string, std::string> split;
    uint64_t k = 0;
    for (auto& [type, ids] : by_type) {
        auto rng = substream(seed, k++);
        std::shuffle(ids.begin(), ids.end(), rng);
        size_t test = (ids.size() + 3) / 6;
        for (size_t i = 0; i < ids.size(); ++i) split[ids[i]] = i < test ? "test" : "train";
    }
    return split;
}

} // namespace detail

inline std::vector<ShortcutSample> export_shortcut_dataset(const std::vector<IrInstance>& data, uint64_t seed) {
    auto split = detail::split_by_type(data, seed);
    std::vector<ShortcutSample> out;
    for (auto& inst : data)
        out.push_back({inst.id, inst.id, Task::IR, to_string(inst.type), split[inst.id], shortcut_ir_input(inst),
                       render_label(inst.label)});
    return out;
}

// Four samples per instance, in option order; all four share the instance's split.
inline std::vector<ShortcutSample> export_shortcut_dataset(const std::vector<IipInstance>& data, uint64_t seed) {
    auto split = detail::split_by_type(data, seed);
    std::vector<ShortcutSample> out;
    for (auto& inst : data)
        for (int i = 0; i < 4; ++i) {
            RouteStyle st = inst.shuffled_order[i];
            out.push_back({inst.id + "-" + std::to_string(i + 1), inst.id, Task::IIP, to_string(inst.type), split[inst.id],
                           shortcut_iip_input(inst, st), to_string(st)});
        }
    return out;
}

} // namespace socbench

#endif
