#ifndef SOCBENCH_LLM_CLIENT_HPP
#define SOCBENCH_LLM_CLIENT_HPP

#include <httplib.h>
#include <openssl/evp.h>

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <deque>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <nlohmann/json.hpp>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "socbench/error.hpp"

namespace socbench {

inline std::string sha256_hex(std::string_view data) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1)
        throw Error("SHA-256 digest failed");
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned i = 0; i < len; ++i) {
        out += hex[md[i] >> 4];
        out += hex[md[i] & 15];
    }
    return out;
}

// ISO-8601 UTC with milliseconds.
inline std::string utc_timestamp(std::chrono::system_clock::time_point t = std::chrono::system_clock::now()) {
    auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(t.time_since_epoch()).count();
    std::time_t secs = static_cast<std::time_t>(ms / 1000);
    std::tm tm{};
    gmtime_r(&secs, &tm);
    char buf[40];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
    char out[48];
    std::snprintf(out, sizeof out, "%s.%03dZ", buf, static_cast<int>(ms % 1000));
    return out;
}

// ---- endpoint configuration ----

// Endpoint settings. The secret itself is never stored here: only the name of
// the environment variable that holds it.
struct EndpointConfig {
    std::string base_url = "https://api.openai.com";
    std::string path = "/v1/chat/completions";
    std::string model = "gpt-4";
    std::string api_key_env = "OPENAI_API_KEY";
    double temperature = 0;
    std::string system_prompt;
    int max_attempts = 5;
    int backoff_ms = 500;
    int max_backoff_ms = 30000;
    int timeout_s = 120;
    int max_concurrency = 4;
    int min_interval_ms = 0;

    nlohmann::json to_json() const {
        return {{"base_url", base_url},         {"path", path},
                {"model", model},               {"api_key_env", api_key_env},
                {"temperature", temperature},   {"system_prompt", system_prompt},
                {"max_attempts", max_attempts}, {"backoff_ms", backoff_ms},
                {"timeout_s", timeout_s},       {"max_concurrency", max_concurrency},
                {"min_interval_ms", min_interval_ms}};
    }
};

namespace detail {

inline std::string trim(std::string_view s) {
    size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return "";
    size_t e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

// Basic TOML string with the common escapes.
inline std::string toml_string(std::string_view v, int line) {
    std::string out;
    for (size_t i = 1; i < v.size(); ++i) {
        char c = v[i];
        if (c == '"') {
            if (!trim(v.substr(i + 1)).empty() && trim(v.substr(i + 1))[0] != '#')
                throw InputError("config line " + std::to_string(line) + ": text after closing quote");
            return out;
        }
        if (c == '\\' && i + 1 < v.size()) {
            char n = v[++i];
            out += n == 'n' ? '\n' : n == 't' ? '\t' : n;
        } else {
            out += c;
        }
    }
    throw InputError("config line " + std::to_string(line) + ": unterminated string");
}

} // namespace detail

// Reads the flat `key = value` subset of TOML: strings, numbers, comments, and
// an optional [endpoint] table header.
inline EndpointConfig parse_endpoint_config(std::string_view text) {
    EndpointConfig c;
    std::istringstream in{std::string(text)};
    std::string raw;
    int line = 0;
    while (std::getline(in, raw)) {
        ++line;
        std::string s = detail::trim(raw);
        if (s.empty() || s[0] == '#') continue;
        if (s[0] == '[') {
            if (s != "[endpoint]") throw InputError("config line " + std::to_string(line) + ": only an [endpoint] table is supported");
            continue;
        }
        auto eq = s.find('=');
        if (eq == std::string::npos) throw InputError("config line " + std::to_string(line) + ": expected key = value");
        std::string key = detail::trim(s.substr(0, eq));
        std::string val = detail::trim(s.substr(eq + 1));
        if (key == "api_key" || key == "key" || key == "token")
            throw InputError("config line " + std::to_string(line) +
                             ": secrets are not read from config files; set api_key_env to the environment variable holding the key");
        auto str = [&] {
            if (val.empty() || val[0] != '"') throw InputError("config line " + std::to_string(line) + ": " + key + " must be a quoted string");
            return detail::toml_string(val, line);
        };
        auto num = [&] {
            std::string v = val.substr(0, val.find('#'));
            try {
                size_t used = 0;
                double d = std::stod(v, &used);
                if (!detail::trim(v.substr(used)).empty()) throw std::invalid_argument(v);
                return d;
            } catch (const std::exception&) {
                throw InputError("config line " + std::to_string(line) + ": " + key + " must be a number");
            }
        };
        if (key == "base_url") c.base_url = str();
        else if (key == "path") c.path = str();
        else if (key == "model") c.model = str();
        else if (key == "api_key_env") c.api_key_env = str();
        else if (key == "system_prompt") c.system_prompt = str();
        else if (key == "temperature") c.temperature = num();
        else if (key == "max_attempts") c.max_attempts = static_cast<int>(num());
        else if (key == "backoff_ms") c.backoff_ms = static_cast<int>(num());
        else if (key == "max_backoff_ms") c.max_backoff_ms = static_cast<int>(num());
        else if (key == "timeout_s") c.timeout_s = static_cast<int>(num());
        else if (key == "max_concurrency") c.max_concurrency = static_cast<int>(num());
        else if (key == "min_interval_ms") c.min_interval_ms = static_cast<int>(num());
        else throw InputError("config line " + std::to_string(line) + ": unknown key '" + key + "'");
    }
    if (c.max_attempts < 1) throw InputError("config: max_attempts must be at least 1");
    if (c.max_concurrency < 1) throw InputError("config: max_concurrency must be at least 1");
    if (c.base_url.rfind("http://", 0) != 0 && c.base_url.rfind("https://", 0) != 0)
        throw InputError("config: base_url must start with http:// or https://");
    return c;
}

inline EndpointConfig load_endpoint_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open endpoint config " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_endpoint_config(ss.str());
}

// ---- client ----

struct Attempt {
    int number = 0;
    std::string started_at;
    int status = 0;  // HTTP status, 0 when the transport failed
    std::string error;

    nlohmann::json to_json() const {
        return {{"attempt", number}, {"started_at", started_at}, {"status", status}, {"error", error}};
    }
};

struct Completion {
    std::string text;
    std::string model;
    std::string requested_at;
    std::string received_at;
    std::vector<Attempt> attempts;
};

// Thrown when the endpoint could not produce a completion; carries every attempt.
class UpstreamFailure : public UpstreamError {
public:
    UpstreamFailure(const std::string& msg, std::vector<Attempt> attempts)
        : UpstreamError(msg + describe(attempts)), attempts_(std::move(attempts)) {}
    const std::vector<Attempt>& attempts() const { return attempts_; }

private:
    static std::string describe(const std::vector<Attempt>& a) {
        std::string s;
        for (auto& x : a)
            s += "\n  attempt " + std::to_string(x.number) + " at " + x.started_at + ": status " + std::to_string(x.status) +
                 (x.error.empty() ? "" : " (" + x.error + ")");
        return s;
    }
    std::vector<Attempt> attempts_;
};

// Single-turn chat completion client with bounded retries. Safe to share
// across threads; each call opens its own connection.
class LlmClient {
public:
    // The key is read from the environment once; a missing variable is only
    // an error if the endpoint rejects the unauthenticated request.
    explicit LlmClient(EndpointConfig cfg) : cfg_(std::move(cfg)) {
        if (const char* k = std::getenv(cfg_.api_key_env.c_str())) key_ = k;
    }

    const EndpointConfig& config() const { return cfg_; }
    bool has_key() const { return !key_.empty(); }

    nlohmann::json request_body(const std::string& prompt) const {
        auto messages = nlohmann::json::array();
        if (!cfg_.system_prompt.empty()) messages.push_back({{"role", "system"}, {"content", cfg_.system_prompt}});
        messages.push_back({{"role", "user"}, {"content", prompt}});
        return {{"model", cfg_.model}, {"temperature", cfg_.temperature}, {"messages", messages}};
    }

    Completion complete(const std::string& prompt) const {
        Completion out;
        out.requested_at = utc_timestamp();
        std::string body = request_body(prompt).dump();
        for (int n = 1; n <= cfg_.max_attempts; ++n) {
            throttle();
            Attempt at{n, utc_timestamp(), 0, ""};
            httplib::Client cli(cfg_.base_url);
            cli.set_connection_timeout(std::chrono::seconds(std::min(cfg_.timeout_s, 10)));
            cli.set_read_timeout(std::chrono::seconds(cfg_.timeout_s));
            httplib::Headers headers;
            if (!key_.empty()) headers.emplace("Authorization", "Bearer " + key_);
            auto res = cli.Post(cfg_.path, headers, body, "application/json");
            int wait_ms = backoff(n);
            if (!res) {
                at.error = "transport: " + httplib::to_string(res.error());
                out.attempts.push_back(at);
            } else {
                at.status = res->status;
                if (res->status == 200) {
                    try {
                        auto j = nlohmann::json::parse(res->body);
                        out.text = j.at("choices").at(0).at("message").at("content").get<std::string>();
                        out.model = j.value("model", cfg_.model);
                    } catch (const std::exception&) {
                        at.error = "malformed response body";
                        out.attempts.push_back(at);
                        throw UpstreamFailure("endpoint returned a malformed completion", out.attempts);
                    }
                    out.attempts.push_back(at);
                    out.received_at = utc_timestamp();
                    return out;
                }
                bool retryable = res->status == 429 || res->status >= 500;
                at.error = res->status == 429 ? "rate limited" : "http error";
                out.attempts.push_back(at);
                if (!retryable) throw UpstreamFailure("endpoint rejected the request", out.attempts);
                if (res->status == 429 && res->has_header("Retry-After")) {
                    try {
                        wait_ms = static_cast<int>(std::stod(res->get_header_value("Retry-After")) * 1000);
                    } catch (const std::exception&) {
                    }
                }
            }
            if (n < cfg_.max_attempts) std::this_thread::sleep_for(std::chrono::milliseconds(wait_ms));
        }
        throw UpstreamFailure("endpoint failed after " + std::to_string(cfg_.max_attempts) + " attempts", out.attempts);
    }

private:
    int backoff(int attempt) const {
        long ms = static_cast<long>(cfg_.backoff_ms) << std::min(attempt - 1, 20);
        return static_cast<int>(std::min<long>(ms, cfg_.max_backoff_ms));
    }

    // Spaces request starts at least min_interval_ms apart.
    void throttle() const {
        if (cfg_.min_interval_ms <= 0) return;
        std::unique_lock lock(throttle_mu_);
        auto now = std::chrono::steady_clock::now();
        if (next_slot_ > now) std::this_thread::sleep_until(next_slot_);
        next_slot_ = std::max(now, next_slot_) + std::chrono::milliseconds(cfg_.min_interval_ms);
    }

    EndpointConfig cfg_;
    std::string key_;
    mutable std::mutex throttle_mu_;
    mutable std::chrono::steady_clock::time_point next_slot_{};
};

// ---- mock endpoint ----

// In-process chat-completions server for tests. Answers come from a script
// keyed by SHA-256 of the user message, falling back to `default_answer`.
// Queued status codes are served, one per request, before any answer.
class MockLlmServer {
public:
    std::map<std::string, std::string> answers;  // prompt hash -> completion text
    std::string default_answer;
    std::string model = "mock-llm";

    MockLlmServer() {
        server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
            std::lock_guard lock(mu_);
            ++requests_;
            if (req.has_header("Authorization")) last_auth_ = req.get_header_value("Authorization");
            if (!failures_.empty()) {
                int status = failures_.front();
                failures_.pop_front();
                res.status = status;
                if (status == 429) res.set_header("Retry-After", "0");
                res.set_content(R"({"error":"scripted failure"})", "application/json");
                return;
            }
            std::string prompt;
            try {
                auto j = nlohmann::json::parse(req.body);
                for (auto& m : j.at("messages"))
                    if (m.at("role") == "user") prompt = m.at("content").get<std::string>();
                last_request_ = j;
            } catch (const std::exception&) {
                res.status = 400;
                return;
            }
            auto it = answers.find(sha256_hex(prompt));
            std::string text = it == answers.end() ? default_answer : it->second;
            nlohmann::json body = {{"model", model},
                                   {"choices", {{{"index", 0}, {"message", {{"role", "assistant"}, {"content", text}}}}}}};
            res.set_content(body.dump(), "application/json");
        });
        port_ = server_.bind_to_any_port("127.0.0.1");
        if (port_ <= 0) throw Error("mock LLM server could not bind");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~MockLlmServer() {
        server_.stop();
        if (thread_.joinable()) thread_.join();
    }
    MockLlmServer(const MockLlmServer&) = delete;
    MockLlmServer& operator=(const MockLlmServer&) = delete;

    void script(const std::string& prompt, const std::string& answer) { answers[sha256_hex(prompt)] = answer; }
    void fail_next(int status, int times = 1) {
        std::lock_guard lock(mu_);
        for (int i = 0; i < times; ++i) failures_.push_back(status);
    }

    int port() const { return port_; }
    std::string base_url() const { return "http://127.0.0.1:" + std::to_string(port_); }
    int requests() const {
        std::lock_guard lock(mu_);
        return requests_;
    }
    std::string last_authorization() const {
        std::lock_guard lock(mu_);
        return last_auth_;
    }
    nlohmann::json last_request() const {
        std::lock_guard lock(mu_);
        return last_request_;
    }

    EndpointConfig config() const {
        EndpointConfig c;
        c.base_url = base_url();
        c.model = model;
        c.backoff_ms = 1;
        c.max_attempts = 4;
        c.timeout_s = 10;
        return c;
    }

private:
    httplib::Server server_;
    std::thread thread_;
    int port_ = 0;
    mutable std::mutex mu_;
    std::deque<int> failures_;
    int requests_ = 0;
    std::string last_auth_;
    nlohmann::json last_request_;
};

} // namespace socbench

#endif
