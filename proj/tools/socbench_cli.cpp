#include <CLI11.hpp>

#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>

#include "socbench/bayes_model.hpp"
#include "socbench/eval.hpp"
#include "socbench/fit.hpp"
#include "socbench/study.hpp"

using namespace socbench;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0, kExitUsage = 2, kExitInput = 3, kExitUpstream = 4;

struct Invocation {
    std::vector<std::string> args;
    json meta(const std::string& command, const json& extra = json::object()) const {
        json m = {{"tool", "socbench"}, {"command", command}, {"invocation", args}};
        m.update(extra);
        return {{"_meta", m}};
    }
};

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write " + path);
    return out;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Writes to --out when given, else stdout.
void emit(const std::string& text, const std::string& out_path) {
    if (out_path.empty()) {
        std::cout << text;
        return;
    }
    open_out(out_path) << text;
}

// An instance file is either one JSON object or JSONL; --id picks a record.
json load_instance_json(const std::string& path, const std::string& id) {
    std::string text = read_file(path);
    std::vector<json> records;
    try {
        auto j = json::parse(text);
        records.push_back(j);
    } catch (const json::exception&) {
        std::istringstream in(text);
        std::string line;
        int n = 0;
        while (std::getline(in, line)) {
            ++n;
            if (detail::trim(line).empty()) continue;
            try {
                auto j = json::parse(line);
                if (!j.contains("_meta")) records.push_back(j);
            } catch (const json::exception& e) {
                throw InputError(path + " line " + std::to_string(n) + ": " + e.what());
            }
        }
    }
    if (records.empty()) throw InputError(path + " holds no instance");
    if (!id.empty()) {
        for (auto& r : records)
            if (r.value("id", "") == id) return r;
        throw InputError(path + " has no instance with id " + id);
    }
    if (records.size() > 1) throw InputError(path + " holds several instances; pick one with --id");
    return records.front();
}

std::array<int, 4> parse_counts(const std::string& s, size_t want) {
    std::array<int, 4> out{};
    std::stringstream ss(s);
    std::string part;
    size_t n = 0;
    while (std::getline(ss, part, ',')) {
        if (n >= want) throw CLI::ValidationError("--counts", "expected " + std::to_string(want) + " comma-separated counts");
        try {
            size_t used = 0;
            int v = std::stoi(part, &used);
            if (used != part.size() || v < 0) throw std::invalid_argument(part);
            out[n++] = v;
        } catch (const std::exception&) {
            throw CLI::ValidationError("--counts", "'" + part + "' is not a non-negative integer");
        }
    }
    if (n != want)
        throw CLI::ValidationError("--counts", "expected " + std::to_string(want) + " comma-separated counts");
    return out;
}

std::string fmt(Real v) {
    std::ostringstream o;
    o.precision(10);
    o << static_cast<double>(v);
    return o.str();
}

// ---- subcommands ----

void cmd_gen(const std::string& task, const std::string& counts, uint64_t seed, const std::string& out_path,
             unsigned jobs, const Invocation& inv) {
    auto c = parse_counts(counts, task == "ir" ? 3 : 4);
    std::ostringstream text;
    size_t n = 0;
    if (task == "ir") {
        auto data = generate_ir_dataset({c[0], c[1], c[2]}, seed, jobs);
        text << inv.meta("gen ir", {{"seed", seed}, {"counts", {c[0], c[1], c[2]}}}).dump() << "\n";
        for (auto& i : data) text << to_json(i).dump() << "\n";
        n = data.size();
    } else {
        auto data = generate_iip_dataset(c, seed, jobs);
        text << inv.meta("gen iip", {{"seed", seed}, {"counts", c}}).dump() << "\n";
        for (auto& i : data) text << to_json(i).dump() << "\n";
        n = data.size();
    }
    // Nothing is written until generation has succeeded.
    open_out(out_path) << text.str();
    std::cerr << "wrote " << n << " " << (task == "ir" ? "IR" : "IIP") << " instances to " << out_path << "\n";
}

void cmd_solve_ir(const std::string& path, const std::string& id, const std::string& format, const std::string& out) {
    IrInstance inst = ir_instance_from_json(load_instance_json(path, id));
    auto post = ir_posterior(inst.scene, inst.trajectory);
    std::vector<std::pair<RigidPreference, Real>> support;
    for (auto& [h, p] : post)
        if (p > 0) support.push_back({h, p});
    size_t extensions = 0;
    for (auto& h : all_preferences()) extensions += is_linear_extension(h, inst.label);
    bool matches = support.size() == extensions;
    for (auto& [h, p] : support) matches &= is_linear_extension(h, inst.label);
    std::ostringstream o;
    if (format == "csv") {
        o << "preference,probability\n";
        for (auto& [h, p] : support) o << h.str() << "," << fmt(p) << "\n";
    } else if (format == "json") {
        json s = json::array();
        for (auto& [h, p] : support) s.push_back({{"preference", h.str()}, {"probability", static_cast<double>(p)}});
        o << json{{"id", inst.id}, {"label", render_label(inst.label)}, {"type", to_string(inst.type)},
                  {"support", s}, {"matches_label", matches}}
                 .dump(2)
          << "\n";
    } else {
        o << "instance " << inst.id << "  type " << to_string(inst.type) << "  label " << render_label(inst.label) << "\n";
        o << "support " << support.size() << " of 120 preferences, "
          << (matches ? "equal to the label's linear extensions" : "NOT equal to the label's linear extensions") << "\n";
        for (auto& [h, p] : support) o << "  " << h.str() << "  " << fmt(p) << "\n";
    }
    emit(o.str(), out);
}

void cmd_solve_iip(const std::string& path, const std::string& id, double ea, double eb, double et, double delta,
                   const std::string& format, const std::string& out) {
    IipInstance inst = iip_instance_from_json(load_instance_json(path, id));
    auto post = iip_posterior(inst, ModelParams::from_exp(ea, eb, et, delta));
    std::ostringstream o;
    if (format == "csv") {
        o << "style,letter,probability\n";
        for (RouteStyle st : kRouteStyles)
            o << to_string(st) << "," << inst.letter_of(st) << "," << fmt(post[static_cast<int>(st)]) << "\n";
    } else if (format == "json") {
        json p;
        for (RouteStyle st : kRouteStyles) p[to_string(st)] = static_cast<double>(post[static_cast<int>(st)]);
        o << json{{"id", inst.id}, {"posterior", p}, {"argmax", to_string(argmax_gap(post).first)}}.dump(2) << "\n";
    } else {
        o << "instance " << inst.id << "  type " << to_string(inst.type) << "\n";
        for (RouteStyle st : kRouteStyles)
            o << "  " << inst.letter_of(st) << "  " << to_string(st) << "  " << fmt(post[static_cast<int>(st)]) << "\n";
    }
    emit(o.str(), out);
}

void cmd_regions(const std::string& path, const std::string& id, double et, double delta, int res,
                 const std::string& out_json, const std::string& out_ppm, unsigned jobs, const Invocation& inv) {
    IipInstance inst = iip_instance_from_json(load_instance_json(path, id));
    auto m = region_map(inst, et, delta, res, jobs);
    if (!out_json.empty()) {
        json j = to_json(m);
        j["instance_id"] = inst.id;
        j["_meta"] = inv.meta("regions")["_meta"];
        open_out(out_json) << j.dump() << "\n";
    }
    if (!out_ppm.empty()) {
        auto f = open_out(out_ppm);
        write_region_ppm(m, f);
    }
    std::map<RouteStyle, int> count;
    for (auto& p : m.points) ++count[p.argmax];
    std::cout << "instance " << inst.id << "  " << res << "x" << res << " grid, e^-theta=" << et << ", delta=" << delta << "\n";
    for (RouteStyle st : kRouteStyles) std::cout << "  " << to_string(st) << "  " << count[st] << " cells\n";
    std::cout << "styles present: " << m.styles_present().size() << "\n";
}

FixedParams parse_fixes(const std::vector<std::string>& fixes) {
    FixedParams f;
    for (auto& s : fixes) {
        auto eq = s.find('=');
        if (eq == std::string::npos) throw CLI::ValidationError("--fix", "expected name=value, got '" + s + "'");
        std::string k = s.substr(0, eq);
        double v;
        try {
            v = std::stod(s.substr(eq + 1));
        } catch (const std::exception&) {
            throw CLI::ValidationError("--fix", "value in '" + s + "' is not a number");
        }
        if (k == "ealpha" || k == "e_alpha") f.e_alpha = v;
        else if (k == "ebeta" || k == "e_beta") f.e_beta = v;
        else if (k == "etheta" || k == "e_theta") f.e_theta = v;
        else if (k == "delta") f.delta = v;
        else throw CLI::ValidationError("--fix", "unknown parameter '" + k + "' (ealpha, ebeta, etheta, delta)");
    }
    return f;
}

std::vector<ChoiceRecord> load_choices(const std::string& path, const std::string& condition) {
    std::istringstream in(read_file(path));
    std::vector<ChoiceRecord> out;
    std::string line;
    int n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (detail::trim(line).empty()) continue;
        try {
            auto j = json::parse(line);
            if (j.contains("_meta") || (j.contains("task") && j["task"] != "iip")) continue;
            auto r = choice_from_json(j);
            if (condition == "pooled" || r.condition == condition || r.condition.rfind(condition + "/", 0) == 0)
                out.push_back(r);
        } catch (const json::exception& e) {
            throw InputError(path + " line " + std::to_string(n) + ": " + e.what());
        } catch (const InputError& e) {
            throw InputError(path + " line " + std::to_string(n) + ": " + e.what());
        }
    }
    return out;
}

void cmd_fit(const std::string& data, const std::string& instances, const std::vector<std::string>& fixes,
             const std::string& condition, uint64_t seed, int grid, const std::string& out, const std::string& land,
             int res, const std::string& format, unsigned jobs, const Invocation& inv) {
    auto records = load_choices(data, condition);
    auto ds = load_dataset_file(instances);
    FitOptions opt;
    opt.fixed = parse_fixes(fixes);
    opt.seed = seed;
    opt.grid = grid;
    opt.jobs = jobs;
    NllObjective obj(records, ds.iip);
    if (records.empty()) throw InputError("no choice records match condition '" + condition + "'");
    auto r = fit_mle(obj, opt);
    json j = to_json(r);
    j["records"] = records.size();
    j["condition"] = condition;
    j["seed"] = seed;
    j["_meta"] = inv.meta("fit")["_meta"];
    if (!out.empty()) open_out(out) << j.dump(2) << "\n";
    if (!land.empty()) {
        auto l = landscape(obj, r.coords[2], r.params.delta, res, opt.bounds, jobs);
        auto f = open_out(land);
        write_landscape_csv(l, f);
    }
    if (format == "json") {
        std::cout << j.dump(2) << "\n";
    } else if (format == "csv") {
        std::cout << "e_alpha,e_beta,e_theta,delta,nll,records\n"
                  << fmt(r.coords[0]) << "," << fmt(r.coords[1]) << "," << fmt(r.coords[2]) << "," << fmt(r.params.delta)
                  << "," << fmt(r.nll) << "," << records.size() << "\n";
    } else {
        std::cout << "records   " << records.size() << " (" << condition << ")\n"
                  << "e^-alpha  " << fmt(r.coords[0]) << "\n"
                  << "e^-beta   " << fmt(r.coords[1]) << "\n"
                  << "e^-theta  " << fmt(r.coords[2]) << "\n"
                  << "delta     " << fmt(r.params.delta) << "\n"
                  << "NLL       " << fmt(r.nll) << "  (" << r.evaluations << " evaluations"
                  << (r.converged ? ", converged" : ", iteration cap reached") << ")\n";
    }
}

void write_report(const EvalReport& rep, const std::string& format, const std::string& report_path,
                  const std::string& csv_path) {
    if (!report_path.empty()) open_out(report_path) << to_json(rep).dump(2) << "\n";
    if (!csv_path.empty()) {
        auto f = open_out(csv_path);
        write_report_csv(rep, f);
    }
    if (format == "json") std::cout << to_json(rep).dump(2) << "\n";
    else if (format == "csv") write_report_csv(rep, std::cout);
    else write_report_table(rep, std::cout);
}

void cmd_eval(const std::string& task, const std::string& data, const std::string& endpoint,
              const std::string& responses, int shots, const std::string& subject, const std::string& log_path,
              const std::string& report, const std::string& csv, const std::string& format, unsigned jobs,
              const Invocation& inv) {
    auto ds = load_dataset_file(data);
    std::optional<LlmClient> client;
    std::optional<ResponseFile> rf;
    Subject subj;
    json meta_extra = {{"shots", shots}};
    if (!endpoint.empty()) {
        client.emplace(load_endpoint_config(endpoint));
        subj = &*client;
        meta_extra["endpoint"] = client->config().to_json();  // holds the variable name only
    } else {
        std::istringstream in(read_file(responses));
        rf = ResponseFile::load(in, responses);
        subj = &*rf;
    }
    EvalOptions opt{shots, subject, jobs};
    EvalRun run;
    if (task == "ir") {
        if (ds.ir.empty()) throw InputError(data + " holds no IR instances");
        run = run_eval(ds.ir, subj, opt);
    } else {
        if (ds.iip.empty()) throw InputError(data + " holds no IIP instances");
        run = run_eval(ds.iip, subj, opt);
    }
    if (!log_path.empty()) {
        auto f = open_out(log_path);
        f << inv.meta("eval " + task, meta_extra).dump() << "\n";
        for (auto& it : run.items) f << to_json(it).dump() << "\n";
    }
    write_report(run.report, format, report, csv);
}

void cmd_score(const std::string& responses, const std::vector<std::string>& data, const std::string& report,
               const std::string& csv, const std::string& format) {
    EvalDataset ds;
    for (auto& d : data) {
        auto part = load_dataset_file(d);
        ds.ir.insert(ds.ir.end(), part.ir.begin(), part.ir.end());
        ds.iip.insert(ds.iip.end(), part.iip.begin(), part.iip.end());
    }
    std::istringstream in(read_file(responses));
    auto items = rescore(in, ds, responses);
    write_report(aggregate(items), format, report, csv);
}

void cmd_export(const std::string& task, const std::string& data, uint64_t seed, const std::string& out_path,
                const Invocation& inv) {
    auto ds = load_dataset_file(data);
    std::vector<ShortcutSample> samples;
    if (task == "ir") {
        if (ds.ir.empty()) throw InputError(data + " holds no IR instances");
        samples = export_shortcut_dataset(ds.ir, seed);
    } else {
        if (ds.iip.empty()) throw InputError(data + " holds no IIP instances");
        samples = export_shortcut_dataset(ds.iip, seed);
    }
    auto out = open_out(out_path);
    out << inv.meta("export-shortcut", {{"task", task}, {"seed", seed}}).dump() << "\n";
    std::map<std::string, std::map<std::string, int>> audit;
    for (auto& s : samples) {
        out << to_json(s).dump() << "\n";
        ++audit[s.type][s.split];
    }
    std::cout << "type          train  test\n";
    for (auto& [type, c] : audit) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%-12s %6d %5d\n", type.c_str(), c["train"], c["test"]);
        std::cout << buf;
    }
}

StudyServer* g_server = nullptr;

void cmd_serve(const std::string& host, int port, const std::string& log, const std::string& ir_data,
               const std::string& iip_data, uint64_t seed, const std::string& origin, unsigned jobs) {
    std::vector<IrInstance> ir;
    std::vector<IipInstance> iip;
    if (!ir_data.empty()) ir = load_dataset_file(ir_data).ir;
    else ir = generate_ir_dataset({20, 20, 20}, seed, jobs);
    if (!iip_data.empty()) iip = load_dataset_file(iip_data).iip;
    else iip = generate_iip_dataset({10, 10, 10, 10}, seed, jobs);
    StudyConfig cfg;
    cfg.seed = seed;
    cfg.log_path = log;
    StudyService svc(cfg, std::move(ir), std::move(iip));
    StudyServer server(svc, origin);
    int bound = server.bind(host, port);
    g_server = &server;
    std::signal(SIGINT, [](int) {
        if (g_server) g_server->stop();
    });
    std::signal(SIGTERM, [](int) {
        if (g_server) g_server->stop();
    });
    std::cerr << "study service listening on " << host << ":" << bound << " (log " << log << ")\n";
    server.listen();
    g_server = nullptr;
}

int fail(int code, const std::string& kind, const std::string& msg) {
    std::cerr << json{{"error", kind}, {"message", msg}}.dump() << "\n";
    return code;
}

} // namespace

int main(int argc, char** argv) {
    Invocation inv;
    for (int i = 1; i < argc; ++i) inv.args.emplace_back(argv[i]);

    CLI::App app{"socbench: social-reasoning gridworld benchmark tools"};
    app.require_subcommand(1);
    unsigned jobs = default_jobs();
    uint64_t seed = 0;
    std::string format = "table", out;
    auto add_jobs = [&](CLI::App* c) { c->add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber); };
    auto add_format = [&](CLI::App* c) {
        c->add_option("--format", format, "Output format")->check(CLI::IsMember({"table", "json", "csv"}));
    };

    // gen
    auto* gen = app.add_subcommand("gen", "Generate an IR or IIP dataset");
    std::string task, counts;
    gen->add_option("task", task, "ir or iip")->required()->check(CLI::IsMember({"ir", "iip"}));
    gen->add_option("--counts", counts, "Per-type counts: 3 for ir, 4 for iip")->required();
    gen->add_option("--seed", seed, "Random seed")->required();
    gen->add_option("--out", out, "Output JSONL")->required();
    add_jobs(gen);

    // solve
    auto* solve = app.add_subcommand("solve", "Posterior for one instance");
    std::string instance, id;
    double ea = 0.5, eb = 0.5, et = 0.99, delta = 100;
    solve->add_option("task", task, "ir or iip")->required()->check(CLI::IsMember({"ir", "iip"}));
    solve->add_option("--instance", instance, "Instance JSON or JSONL")->required()->check(CLI::ExistingFile);
    solve->add_option("--id", id, "Instance id inside a JSONL file");
    solve->add_option("--ealpha", ea, "e^-alpha (iip)")->check(CLI::Range(1e-300, 1.0));
    solve->add_option("--ebeta", eb, "e^-beta (iip)")->check(CLI::Range(1e-300, 1.0));
    solve->add_option("--etheta", et, "e^-theta (iip)")->check(CLI::Range(1e-300, 1.0));
    solve->add_option("--delta", delta, "Leaving-target pulse (iip)")->check(CLI::NonNegativeNumber);
    solve->add_option("--out", out, "Write output here instead of stdout");
    add_format(solve);

    // regions
    auto* regions = app.add_subcommand("regions", "Argmax route style over the (e^-alpha, e^-beta) square");
    int res = 50;
    std::string out_json, out_ppm;
    regions->add_option("--instance", instance, "IIP instance JSON or JSONL")->required()->check(CLI::ExistingFile);
    regions->add_option("--id", id, "Instance id inside a JSONL file");
    regions->add_option("--etheta", et, "e^-theta")->check(CLI::Range(1e-300, 1.0));
    regions->add_option("--delta", delta, "Leaving-target pulse")->check(CLI::NonNegativeNumber);
    regions->add_option("--res", res, "Grid points per axis")->check(CLI::Range(1, 2000));
    regions->add_option("--out-json", out_json, "Region map JSON");
    regions->add_option("--out-ppm", out_ppm, "Region map image (binary PPM)");
    add_jobs(regions);

    // fit
    auto* fit = app.add_subcommand("fit", "Maximum-likelihood fit of the IIP model to choices");
    std::string data, instances, condition = "pooled", landscape_path;
    std::vector<std::string> fixes;
    int grid = 0;
    fit->add_option("--data", data, "Choice records JSONL")->required()->check(CLI::ExistingFile);
    fit->add_option("--instances", instances, "IIP dataset JSONL")->required()->check(CLI::ExistingFile);
    fit->add_option("--fix", fixes, "Fix a parameter, e.g. etheta=0.99 delta=100");
    fit->add_option("--condition", condition, "pooled, zero_shot, one_shot, or a full tag like one_shot/image");
    fit->add_option("--seed", seed, "Seed for the random restarts");
    fit->add_option("--grid", grid, "Coarse grid points per free axis (0 = automatic)")->check(CLI::NonNegativeNumber);
    fit->add_option("--out", out, "Fit result JSON");
    fit->add_option("--landscape", landscape_path, "NLL landscape CSV at the fitted (theta, delta)");
    fit->add_option("--res", res, "Landscape grid points per axis")->check(CLI::Range(2, 2000));
    add_format(fit);
    add_jobs(fit);

    // eval
    auto* eval = app.add_subcommand("eval", "Query a model or replay responses, then score");
    std::string endpoint, responses, subject, log_path, report, csv;
    int shots = 0;
    eval->add_option("task", task, "ir or iip")->required()->check(CLI::IsMember({"ir", "iip"}));
    eval->add_option("--data", data, "Dataset JSONL")->required()->check(CLI::ExistingFile);
    auto* ep = eval->add_option("--endpoint", endpoint, "Endpoint config (TOML subset)")->check(CLI::ExistingFile);
    auto* rp = eval->add_option("--responses", responses, "Recorded responses JSONL")->check(CLI::ExistingFile);
    ep->excludes(rp);
    eval->add_option("--shots", shots, "0 or 1 (ir also 2, 3)")->check(CLI::Range(0, 3));
    eval->add_option("--subject", subject, "Subject name for the log");
    eval->add_option("--log", log_path, "Response log JSONL");
    eval->add_option("--report", report, "Report JSON");
    eval->add_option("--csv", csv, "Report CSV");
    eval->add_option("--seed", seed, "Recorded in metadata; evaluation itself is deterministic");
    add_format(eval);
    add_jobs(eval);

    // score
    auto* score = app.add_subcommand("score", "Rescore a response log");
    std::vector<std::string> datas;
    score->add_option("--responses", responses, "Response log JSONL")->required()->check(CLI::ExistingFile);
    score->add_option("--data", datas, "Dataset JSONL (repeatable)")->required()->check(CLI::ExistingFile);
    score->add_option("--report", report, "Report JSON");
    score->add_option("--csv", csv, "Report CSV");
    add_format(score);

    // export-shortcut
    auto* exp = app.add_subcommand("export-shortcut", "Neutralized text pairs with a 5:1 split");
    exp->add_option("--task", task, "ir or iip")->required()->check(CLI::IsMember({"ir", "iip"}));
    exp->add_option("--data", data, "Dataset JSONL")->required()->check(CLI::ExistingFile);
    exp->add_option("--seed", seed, "Split seed");
    exp->add_option("--out", out, "Output JSONL")->required();

    // serve
    auto* serve = app.add_subcommand("serve", "Run the participant study service");
    std::string host = "127.0.0.1", ir_data, iip_data, origin = "*";
    int port = 8080;
    serve->add_option("--host", host, "Bind address");
    serve->add_option("--port", port, "Port (0 picks a free one)")->check(CLI::Range(0, 65535));
    serve->add_option("--log", log_path, "Append-only response log")->required();
    serve->add_option("--ir-data", ir_data, "IR item pool JSONL")->check(CLI::ExistingFile);
    serve->add_option("--iip-data", iip_data, "IIP item pool JSONL")->check(CLI::ExistingFile);
    serve->add_option("--seed", seed, "Seed for session plans and generated pools");
    serve->add_option("--cors-origin", origin, "Allowed browser origin");
    add_jobs(serve);

    try {
        app.parse(argc, argv);
        if (eval->parsed() && endpoint.empty() && responses.empty())
            throw CLI::ValidationError("eval", "one of --endpoint or --responses is required");
        if (eval->parsed() && task == "iip" && shots > 1) throw CLI::ValidationError("--shots", "iip supports 0 or 1");
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        return fail(kExitUsage, "usage", e.what());
    }

    try {
        if (gen->parsed()) cmd_gen(task, counts, seed, out, jobs, inv);
        else if (solve->parsed() && task == "ir") cmd_solve_ir(instance, id, format, out);
        else if (solve->parsed()) cmd_solve_iip(instance, id, ea, eb, et, delta, format, out);
        else if (regions->parsed()) cmd_regions(instance, id, et, delta, res, out_json, out_ppm, jobs, inv);
        else if (fit->parsed())
            cmd_fit(data, instances, fixes, condition, seed, grid, out, landscape_path, res, format, jobs, inv);
        else if (eval->parsed())
            cmd_eval(task, data, endpoint, responses, shots, subject, log_path, report, csv, format, jobs, inv);
        else if (score->parsed()) cmd_score(responses, datas, report, csv, format);
        else if (exp->parsed()) cmd_export(task, data, seed, out, inv);
        else if (serve->parsed()) cmd_serve(host, port, log_path, ir_data, iip_data, seed, origin, jobs);
    } catch (const CLI::ParseError& e) {
        return fail(kExitUsage, "usage", e.what());
    } catch (const UpstreamError& e) {
        return fail(kExitUpstream, "upstream", e.what());
    } catch (const InputError& e) {
        return fail(kExitInput, "input", e.what());
    } catch (const NoFeasibleParams& e) {
        return fail(kExitInput, "no_feasible_params", e.what());
    } catch (const DegenerateError& e) {
        return fail(kExitInput, "degenerate", e.what());
    } catch (const Error& e) {
        return fail(1, "error", e.what());
    }
    return kExitOk;
}
