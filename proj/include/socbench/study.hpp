#ifndef SOCBENCH_STUDY_HPP
#define SOCBENCH_STUDY_HPP

#include <fcntl.h>
#include <unistd.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <random>
#include <set>
#include <shared_mutex>
#include <string>
#include <vector>

#include "socbench/eval.hpp"

namespace socbench {

struct StudyConfig {
    uint64_t seed = 1;
    std::string log_path;  // empty: in-memory only
    std::string debrief =
        "Thank you for taking part. This study looked at how people infer preferences from movement and how they "
        "choose routes that reveal their goal. Your answers are stored without personal identifiers.";
    int ir_per_type = 2;    // before the example
    int ir_after = 2;
    int iip_per_type = 1;
    int iip_after = 2;
};

struct PlanItem {
    Task task = Task::IR;
    std::string item_id;  // dataset id, or the example's id
    bool example = false;
    int shots = 0;        // 1 once the block's example has been shown

    friend bool operator==(const PlanItem&, const PlanItem&) = default;
};

inline const std::string kIrExampleId = "example-ir-previsited";
inline const std::string kIipExampleId = "example-iip-type-iii";

struct SessionPlan {
    std::string session_id;
    std::string token;
    std::string participant_id;
    int index = 0;  // creation order, drives counterbalancing
    std::string modality;  // "text" or "image"
    std::vector<Task> task_order;
    std::vector<PlanItem> items;
};

inline nlohmann::json to_json(const PlanItem& p) {
    return {{"task", to_string(p.task)}, {"item_id", p.item_id}, {"example", p.example}, {"shots", p.shots}};
}

inline nlohmann::json to_json(const SessionPlan& s) {
    auto items = nlohmann::json::array();
    for (auto& p : s.items) items.push_back(to_json(p));
    std::vector<std::string> order;
    for (Task t : s.task_order) order.push_back(to_string(t));
    return {{"session_id", s.session_id}, {"token", s.token},       {"participant_id", s.participant_id},
            {"index", s.index},           {"modality", s.modality}, {"task_order", order},
            {"items", items}};
}

inline SessionPlan session_from_json(const nlohmann::json& j) {
    SessionPlan s;
    s.session_id = j.at("session_id");
    s.token = j.at("token");
    s.participant_id = j.at("participant_id");
    s.index = j.at("index");
    s.modality = j.at("modality");
    for (auto& t : j.at("task_order")) s.task_order.push_back(parse_task(t.get<std::string>()));
    for (auto& p : j.at("items"))
        s.items.push_back({parse_task(p.at("task").get<std::string>()), p.at("item_id"), p.at("example"), p.at("shots")});
    return s;
}

struct ResponseRecord {
    uint64_t seq = 0;
    std::string session_id;
    std::string participant_id;
    int position = 0;
    PlanItem item;
    std::string answer;
    int64_t latency_ms = 0;
    std::string received_at;
    std::string modality;
};

inline std::string condition_tag(int shots, const std::string& modality) {
    return std::string(shots ? "one_shot" : "zero_shot") + "/" + modality;
}

// Outcome of a request, mapped to an HTTP status by the server.
struct StudyReply {
    int status = 200;
    nlohmann::json body;
};

// Session bookkeeping over an append-only JSONL log. Each line is
// {"seq", "kind", "data", "sha256"} where the digest covers data.dump().
class StudyService {
public:
    StudyService(StudyConfig cfg, std::vector<IrInstance> ir, std::vector<IipInstance> iip)
        : cfg_(std::move(cfg)), ir_(std::move(ir)), iip_(std::move(iip)) {
        for (size_t i = 0; i < ir_.size(); ++i) ir_index_[ir_[i].id] = i;
        for (size_t i = 0; i < iip_.size(); ++i) iip_index_[iip_[i].id] = i;
        check_pools();
        if (!cfg_.log_path.empty()) replay();
    }
    ~StudyService() {
        if (fd_ >= 0) ::close(fd_);
    }
    StudyService(const StudyService&) = delete;
    StudyService& operator=(const StudyService&) = delete;

    const std::vector<IrInstance>& ir_pool() const { return ir_; }
    const std::vector<IipInstance>& iip_pool() const { return iip_; }

    // Plan construction is pure in (seed, index).
    SessionPlan make_plan(int index, const std::string& participant) const {
        auto rng = substream(cfg_.seed, static_cast<uint64_t>(index));
        SessionPlan s;
        s.index = index;
        s.participant_id = participant;
        // Counterbalancing: every run of four sessions covers each
        // (task order, modality) pair once, in a seeded order.
        std::array<int, 4> combos = {0, 1, 2, 3};
        auto block_rng = substream(cfg_.seed ^ 0x5bd1e995ULL, static_cast<uint64_t>(index / 4));
        std::shuffle(combos.begin(), combos.end(), block_rng);
        int combo = combos[index % 4];
        s.task_order = combo & 1 ? std::vector<Task>{Task::IIP, Task::IR} : std::vector<Task>{Task::IR, Task::IIP};
        s.modality = combo & 2 ? "image" : "text";
        for (Task t : s.task_order) {
            if (t == Task::IR) append_block(s, rng, ir_, kIrTypes, cfg_.ir_per_type, cfg_.ir_after, Task::IR, kIrExampleId);
            else append_block(s, rng, iip_, kIipTypes, cfg_.iip_per_type, cfg_.iip_after, Task::IIP, kIipExampleId);
        }
        return s;
    }

    StudyReply create_session(const nlohmann::json& body) {
        std::unique_lock lock(mu_);
        std::string participant = body.is_object() ? body.value("participant_id", "") : "";
        int index = static_cast<int>(order_.size());
        if (participant.empty()) participant = "p" + std::to_string(index + 1);
        SessionPlan s = make_plan(index, participant);
        s.session_id = random_hex(8);
        s.token = random_hex(16);
        append("session", to_json(s));
        sessions_[s.session_id] = std::make_unique<State>(State{s, {}});
        order_.push_back(s.session_id);
        return {201, {{"session_id", s.session_id},
                      {"token", s.token},
                      {"participant_id", s.participant_id},
                      {"modality", s.modality},
                      {"task_order", to_json(s)["task_order"]},
                      {"items", s.items.size()}}};
    }

    StudyReply next_item(const std::string& session_id, const std::string& token) const {
        std::shared_lock lock(mu_);
        auto st = find(session_id, token);
        if (!st.first) return st.second;
        const State& s = *st.first;
        size_t pos = s.answers.size();
        if (pos >= s.plan.items.size()) return {200, {{"done", true}, {"debrief", cfg_.debrief}}};
        return {200, item_payload(s.plan, pos)};
    }

    StudyReply submit_answer(const std::string& session_id, const std::string& token, const nlohmann::json& body) {
        std::unique_lock lock(mu_);
        auto st = find(session_id, token);
        if (!st.first) return st.second;
        State& s = *sessions_.at(session_id).get();
        if (!body.is_object() || !body.contains("item_id") || !body["item_id"].is_string())
            return error(400, "schema", "body must be an object with a string item_id");
        std::string item_id = body["item_id"];
        for (auto& a : s.answers)
            if (a.item.item_id == item_id) return error(409, "duplicate", "item " + item_id + " was already answered");
        size_t pos = s.answers.size();
        if (pos >= s.plan.items.size()) return error(409, "complete", "session is complete");
        const PlanItem& item = s.plan.items[pos];
        if (item.item_id != item_id)
            return error(409, "out_of_order", "expected an answer for item " + item.item_id + ", got " + item_id);
        std::string answer;
        if (!item.example) {
            if (!body.contains("answer") || !body["answer"].is_string())
                return error(422, "schema", "answer must be a string");
            answer = body["answer"];
            if (auto bad = validate_answer(item.task, answer)) return {422, *bad};
        }
        int64_t latency = 0;
        if (body.contains("latency_ms")) {
            if (!body["latency_ms"].is_number_integer() || body["latency_ms"].get<int64_t>() < 0)
                return error(422, "schema", "latency_ms must be a non-negative integer");
            latency = body["latency_ms"];
        }
        ResponseRecord r{seq_ + 1, s.plan.session_id, s.plan.participant_id, static_cast<int>(pos), item, answer,
                         latency,  utc_timestamp(),   s.plan.modality};
        append("answer", record_json(r));  // durable before the ack
        s.answers.push_back(r);
        ++responses_;
        return {200, {{"ack", true}, {"item_id", item_id}, {"answer", answer}, {"position", pos}, {"seq", r.seq}}};
    }

    // Non-example responses with seq > since, in eval_harness log format.
    std::vector<nlohmann::json> export_responses(uint64_t since = 0) const {
        std::shared_lock lock(mu_);
        std::vector<const ResponseRecord*> all;
        for (auto& id : order_)
            for (auto& a : sessions_.at(id)->answers)
                if (!a.item.example && a.seq > since) all.push_back(&a);
        std::sort(all.begin(), all.end(), [](auto* a, auto* b) { return a->seq < b->seq; });
        std::vector<nlohmann::json> out;
        for (auto* a : all) out.push_back(export_json(*a));
        return out;
    }

    std::vector<SessionPlan> sessions() const {
        std::shared_lock lock(mu_);
        std::vector<SessionPlan> out;
        for (auto& id : order_) out.push_back(sessions_.at(id)->plan);
        return out;
    }

    nlohmann::json health() const {
        std::shared_lock lock(mu_);
        return {{"status", "ok"},
                {"sessions", order_.size()},
                {"responses", responses_},
                {"ir_pool", ir_.size()},
                {"iip_pool", iip_.size()}};
    }

    // Answer schema check; returns an error body naming the violated rule.
    static std::optional<nlohmann::json> validate_answer(Task task, const std::string& answer) {
        if (task == Task::IIP) {
            if (answer.size() == 1 && answer[0] >= 'A' && answer[0] <= 'D') return std::nullopt;
            return nlohmann::json{{"error", "schema"}, {"rule", "option"}, {"message", "answer must be one of A, B, C, D"}};
        }
        GrammarError err;
        PreferenceGrammar g(answer);
        if (!g.parse(err))
            return nlohmann::json{{"error", "schema"}, {"rule", err.rule}, {"position", err.position}, {"message", err.str()}};
        return std::nullopt;
    }

private:
    struct State {
        SessionPlan plan;
        std::vector<ResponseRecord> answers;
    };

    template <class Inst, class Types>
    void append_block(SessionPlan& s, std::mt19937_64& rng, const std::vector<Inst>& pool, const Types& types, int per_type,
                      int after, Task task, const std::string& example_id) const {
        std::vector<std::string> chosen;
        std::set<std::string> used;
        for (auto t : types) {
            std::vector<std::string> ids;
            for (auto& i : pool)
                if (i.type == t) ids.push_back(i.id);
            std::shuffle(ids.begin(), ids.end(), rng);
            for (int k = 0; k < per_type; ++k) chosen.push_back(ids[k]);
        }
        std::shuffle(chosen.begin(), chosen.end(), rng);
        for (auto& id : chosen) {
            s.items.push_back({task, id, false, 0});
            used.insert(id);
        }
        s.items.push_back({task, example_id, true, 0});
        std::vector<std::string> rest;
        for (auto& i : pool)
            if (!used.count(i.id)) rest.push_back(i.id);
        std::shuffle(rest.begin(), rest.end(), rng);
        for (int k = 0; k < after; ++k) s.items.push_back({task, rest[k], false, 1});
    }

    void check_pools() const {
        auto need = [](auto& pool, auto& types, int per_type, int after, const char* name) {
            std::map<int, int> counts;
            for (auto& i : pool) ++counts[static_cast<int>(i.type)];
            for (auto t : types)
                if (counts[static_cast<int>(t)] < per_type)
                    throw InputError(std::string(name) + " pool lacks items of type " + to_string(t));
            if (static_cast<int>(pool.size()) < per_type * static_cast<int>(types.size()) + after)
                throw InputError(std::string(name) + " pool is too small for a session");
        };
        need(ir_, kIrTypes, cfg_.ir_per_type, cfg_.ir_after, "IR");
        need(iip_, kIipTypes, cfg_.iip_per_type, cfg_.iip_after, "IIP");
    }

    nlohmann::json item_payload(const SessionPlan& plan, size_t pos) const {
        const PlanItem& it = plan.items[pos];
        nlohmann::json j = {{"session_id", plan.session_id}, {"position", pos},      {"total", plan.items.size()},
                            {"item_id", it.item_id},        {"task", to_string(it.task)}, {"example", it.example},
                            {"shots", it.shots},            {"modality", plan.modality}};
        if (it.task == Task::IR) {
            if (it.example) {
                auto& ex = canonical_ir_examples().front();
                j["prompt"] = ir_examples_block(1);
                j["scene"] = ir_scene_json(ex.scene, ex.trajectory);
                j["answer_spec"] = nullptr;
            } else {
                auto& inst = ir_[ir_index_.at(it.item_id)];
                j["prompt"] = serialize_ir_prompt(inst);
                j["scene"] = ir_scene_json(inst.scene, inst.trajectory);
                j["answer_spec"] = {{"kind", "preference"},
                                    {"grammar", "chain [ ',' set ]; chain := group ('>' group)*; group := label | set; "
                                                "set := '{' label (',' label)* '}'; label := X | Y | Z | M | N"}};
            }
        } else {
            if (it.example) {
                j["prompt"] = std::string(prompt_text::kIipExample);
                j["scene"] = nullptr;
                j["answer_spec"] = nullptr;
            } else {
                auto& inst = iip_[iip_index_.at(it.item_id)];
                j["prompt"] = serialize_iip_prompt(inst);
                nlohmann::json options = nlohmann::json::array();
                for (int k = 0; k < 4; ++k)
                    options.push_back({{"letter", std::string(1, static_cast<char>('A' + k))},
                                       {"route", inst.route(inst.shuffled_order[k])}});
                j["scene"] = {{"layout", layout_rows(inst.scene.scene)},
                              {"agent", inst.scene.agent()},
                              {"pois", {{"X", inst.scene.x()}, {"Y", inst.scene.y()}}},
                              {"options", options}};
                j["answer_spec"] = {{"kind", "option"}, {"options", {"A", "B", "C", "D"}}};
            }
        }
        return j;
    }

    static nlohmann::json ir_scene_json(const IrScene& s, const Trajectory& t) {
        nlohmann::json pois = nlohmann::json::object();
        for (auto& [label, c] : s.scene.pois) pois[std::string(1, label)] = c;
        return {{"layout", layout_rows(s.scene)}, {"pois", pois}, {"trajectory", trajectory_to_json(t)},
                {"pick", std::string(1, t.pick)}};
    }

    static nlohmann::json record_json(const ResponseRecord& r) {
        return {{"seq", r.seq},
                {"session_id", r.session_id},
                {"participant_id", r.participant_id},
                {"position", r.position},
                {"item", to_json(r.item)},
                {"answer", r.answer},
                {"latency_ms", r.latency_ms},
                {"received_at", r.received_at},
                {"modality", r.modality}};
    }

    nlohmann::json export_json(const ResponseRecord& r) const {
        nlohmann::json j = {{"item_id", r.item.item_id},
                            {"task", to_string(r.item.task)},
                            {"subject", r.participant_id},
                            {"shots", r.item.shots},
                            {"condition", condition_tag(r.item.shots, r.modality)},
                            {"raw_response", r.answer},
                            {"latency_ms", r.latency_ms},
                            {"timestamps", {{"requested_at", ""}, {"received_at", r.received_at}}},
                            {"session_id", r.session_id},
                            {"position", r.position},
                            {"seq", r.seq}};
        if (r.item.task == Task::IIP) {
            auto& inst = iip_[iip_index_.at(r.item.item_id)];
            j["instance_id"] = inst.id;
            j["chosen_style"] = to_string(inst.style_of(r.answer[0]));
            j["subject_id"] = r.participant_id;
        }
        return j;
    }

    std::pair<const State*, StudyReply> find(const std::string& id, const std::string& token) const {
        auto it = sessions_.find(id);
        if (it == sessions_.end()) return {nullptr, error(404, "unknown_session", "no session " + id)};
        if (it->second->plan.token != token) return {nullptr, error(403, "token", "session token missing or wrong")};
        return {it->second.get(), {}};
    }

    static StudyReply error(int status, const std::string& code, const std::string& msg) {
        return {status, {{"error", code}, {"message", msg}}};
    }

    static std::string random_hex(int bytes) {
        static thread_local std::random_device rd;
        static const char* hex = "0123456789abcdef";
        std::string out;
        for (int i = 0; i < bytes; ++i) {
            unsigned v = rd() & 0xff;
            out += hex[v >> 4];
            out += hex[v & 15];
        }
        return out;
    }

    // Appends one checksummed line and fsyncs it. Caller holds mu_.
    void append(const std::string& kind, const nlohmann::json& data) {
        ++seq_;
        if (fd_ < 0) return;
        std::string payload = data.dump();
        nlohmann::json line = {{"seq", seq_}, {"kind", kind}, {"data", data}, {"sha256", sha256_hex(payload)}};
        std::string text = line.dump() + "\n";
        size_t off = 0;
        while (off < text.size()) {
            ssize_t n = ::write(fd_, text.data() + off, text.size() - off);
            if (n < 0) throw Error("response log write failed: " + std::string(std::strerror(errno)));
            off += static_cast<size_t>(n);
        }
        if (::fsync(fd_) != 0) throw Error("response log fsync failed: " + std::string(std::strerror(errno)));
    }

    // Rebuilds sessions from the log. A torn final line (crash mid-append) is
    // cut off; damage anywhere else is an error.
    void replay() {
        std::vector<std::string> lines;
        {
            std::ifstream in(cfg_.log_path, std::ios::binary);
            std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
            size_t start = 0;
            while (start < content.size()) {
                size_t nl = content.find('\n', start);
                if (nl == std::string::npos) {
                    lines.push_back(content.substr(start));  // no newline: torn
                    break;
                }
                lines.push_back(content.substr(start, nl - start + 1));
                start = nl + 1;
            }
        }
        uint64_t good_bytes = 0;
        for (size_t i = 0; i < lines.size(); ++i) {
            bool last = i + 1 == lines.size();
            std::optional<nlohmann::json> rec;
            try {
                auto j = nlohmann::json::parse(lines[i]);
                if (lines[i].back() == '\n' && j.at("sha256") == sha256_hex(j.at("data").dump())) rec = j;
            } catch (const nlohmann::json::exception&) {
            }
            if (!rec) {
                if (last) break;
                throw InputError("response log " + cfg_.log_path + " is corrupt at line " + std::to_string(i + 1));
            }
            apply(*rec);
            good_bytes += lines[i].size();
        }
        if (std::filesystem::exists(cfg_.log_path) && std::filesystem::file_size(cfg_.log_path) != good_bytes)
            std::filesystem::resize_file(cfg_.log_path, good_bytes);
        fd_ = ::open(cfg_.log_path.c_str(), O_WRONLY | O_CREAT | O_APPEND, 0644);
        if (fd_ < 0) throw InputError("cannot open response log " + cfg_.log_path + ": " + std::strerror(errno));
    }

    void apply(const nlohmann::json& rec) {
        seq_ = rec.at("seq");
        auto& d = rec.at("data");
        if (rec.at("kind") == "session") {
            SessionPlan s = session_from_json(d);
            sessions_[s.session_id] = std::make_unique<State>(State{s, {}});
            order_.push_back(s.session_id);
        } else if (rec.at("kind") == "answer") {
            ResponseRecord r;
            r.seq = d.at("seq");
            r.session_id = d.at("session_id");
            r.participant_id = d.at("participant_id");
            r.position = d.at("position");
            auto& it = d.at("item");
            r.item = {parse_task(it.at("task").get<std::string>()), it.at("item_id"), it.at("example"), it.at("shots")};
            r.answer = d.at("answer");
            r.latency_ms = d.at("latency_ms");
            r.received_at = d.at("received_at");
            r.modality = d.at("modality");
            auto s = sessions_.find(r.session_id);
            if (s == sessions_.end()) throw InputError("response log answers unknown session " + r.session_id);
            s->second->answers.push_back(r);
            ++responses_;
        }
    }

    StudyConfig cfg_;
    std::vector<IrInstance> ir_;
    std::vector<IipInstance> iip_;
    std::map<std::string, size_t> ir_index_, iip_index_;

    mutable std::shared_mutex mu_;
    std::map<std::string, std::unique_ptr<State>> sessions_;
    std::vector<std::string> order_;
    uint64_t seq_ = 0;
    size_t responses_ = 0;
    int fd_ = -1;
};

// HTTP front end. Routes:
//   POST /sessions                   {participant_id?} -> {session_id, token, ...}
//   GET  /sessions/{id}/next         header X-Session-Token
//   POST /sessions/{id}/answers      {item_id, answer, latency_ms?}
//   GET  /export?since=SEQ           JSONL
//   GET  /health
class StudyServer {
public:
    StudyServer(StudyService& svc, std::string cors_origin = "*") : svc_(svc), origin_(std::move(cors_origin)) {
        auto reply = [this](httplib::Response& res, const StudyReply& r) {
            res.status = r.status;
            res.set_content(r.body.dump(), "application/json");
        };
        auto body_json = [](const httplib::Request& req) -> std::optional<nlohmann::json> {
            if (req.body.empty()) return nlohmann::json::object();
            try {
                return nlohmann::json::parse(req.body);
            } catch (const nlohmann::json::exception&) {
                return std::nullopt;
            }
        };
        auto bad_json = StudyReply{400, {{"error", "schema"}, {"message", "request body is not valid JSON"}}};
        srv_.set_post_routing_handler([this](const httplib::Request&, httplib::Response& res) {
            res.set_header("Access-Control-Allow-Origin", origin_);
            res.set_header("Access-Control-Allow-Headers", "Content-Type, X-Session-Token");
            res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
        });
        srv_.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
        srv_.Post("/sessions", [=, this](const httplib::Request& req, httplib::Response& res) {
            auto b = body_json(req);
            reply(res, b ? svc_.create_session(*b) : bad_json);
        });
        srv_.Get(R"(/sessions/([0-9a-f]+)/next)", [=, this](const httplib::Request& req, httplib::Response& res) {
            reply(res, svc_.next_item(req.matches[1], req.get_header_value("X-Session-Token")));
        });
        srv_.Post(R"(/sessions/([0-9a-f]+)/answers)", [=, this](const httplib::Request& req, httplib::Response& res) {
            auto b = body_json(req);
            reply(res, b ? svc_.submit_answer(req.matches[1], req.get_header_value("X-Session-Token"), *b) : bad_json);
        });
        srv_.Get("/export", [this](const httplib::Request& req, httplib::Response& res) {
            uint64_t since = 0;
            if (req.has_param("since")) {
                try {
                    since = std::stoull(req.get_param_value("since"));
                } catch (const std::exception&) {
                    res.status = 400;
                    res.set_content(R"({"error":"schema","message":"since must be a sequence number"})", "application/json");
                    return;
                }
            }
            std::string out;
            for (auto& j : svc_.export_responses(since)) out += j.dump() + "\n";
            res.set_content(out, "application/x-ndjson");
        });
        srv_.Get("/health", [this](const httplib::Request&, httplib::Response& res) {
            res.set_content(svc_.health().dump(), "application/json");
        });
        srv_.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
            std::string msg = "internal error";
            try {
                std::rethrow_exception(ep);
            } catch (const std::exception& e) {
                msg = e.what();
            }
            res.status = 500;
            res.set_content(nlohmann::json{{"error", "internal"}, {"message", msg}}.dump(), "application/json");
        });
    }

    int bind(const std::string& host, int port) {
        if (port == 0) return port_ = srv_.bind_to_any_port(host);
        if (!srv_.bind_to_port(host, port)) throw InputError("cannot bind " + host + ":" + std::to_string(port));
        return port_ = port;
    }
    void listen() { srv_.listen_after_bind(); }
    void start() {
        thread_ = std::thread([this] { srv_.listen_after_bind(); });
        srv_.wait_until_ready();
    }
    void stop() {
        srv_.stop();
        if (thread_.joinable()) thread_.join();
    }
    ~StudyServer() { stop(); }
    int port() const { return port_; }

private:
    StudyService& svc_;
    std::string origin_;
    httplib::Server srv_;
    std::thread thread_;
    int port_ = 0;
};

} // namespace socbench

#endif
