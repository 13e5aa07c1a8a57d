#include "cfdrive/llm.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include <unistd.h>

#include <httplib.h>

namespace cfdrive {

using nlohmann::json;

std::uint64_t fnv1a64(std::string_view data) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::filesystem::path tmp = path;
    tmp += ".tmp." + std::to_string(::getpid()) + "." +
           std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id()));
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write " + tmp.string());
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        out.flush();
        if (!out) throw Error("write failed for " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp);
        throw Error("cannot rename onto " + path.string() + ": " + ec.message());
    }
}

json LlmRequest::to_json() const {
    json msgs = json::array();
    for (const ChatMessage& m : messages) msgs.push_back({{"role", m.role}, {"content", m.content}});
    return {{"model", model},
            {"messages", msgs},
            {"temperature", temperature},
            {"max_tokens", max_tokens},
            {"seed", seed}};
}

std::string LlmRequest::cache_key() const {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(to_json().dump())));
    return buf;
}

// ---------------------------------------------------------------------------

HttpLlmClient::HttpLlmClient(HttpLlmConfig config)
    : config_(std::move(config)),
      slots_(std::make_unique<std::counting_semaphore<>>(std::max(1, config_.max_in_flight))) {}

HttpLlmClient::~HttpLlmClient() = default;

namespace {

struct SlotGuard {
    std::counting_semaphore<>& sem;
    explicit SlotGuard(std::counting_semaphore<>& s) : sem(s) { sem.acquire(); }
    ~SlotGuard() { sem.release(); }
};

}  // namespace

std::string HttpLlmClient::complete(const LlmRequest& request) {
    SlotGuard slot(*slots_);

    std::string host = config_.base_url;
    std::string prefix;
    const auto scheme_end = host.find("://");
    const auto path_start = host.find('/', scheme_end == std::string::npos ? 0 : scheme_end + 3);
    if (path_start != std::string::npos) {
        prefix = host.substr(path_start);
        host.resize(path_start);
    }
    while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();

    json body = request.to_json();
    if (request.model.empty()) body["model"] = config_.model;
    const std::string payload = body.dump();

    std::string last_error;
    for (int attempt = 0; attempt <= config_.retries; ++attempt) {
        if (attempt > 0) std::this_thread::sleep_for(std::chrono::milliseconds(200) * (1 << (attempt - 1)));
        httplib::Client cli(host);
        cli.set_connection_timeout(config_.timeout);
        cli.set_read_timeout(config_.timeout);
        cli.set_write_timeout(config_.timeout);
        if (const char* token = std::getenv(config_.api_key_env.c_str()); token && *token) {
            cli.set_bearer_token_auth(token);
        }
        auto res = cli.Post(prefix + "/v1/chat/completions", payload, "application/json");
        if (!res) {
            last_error = "request failed: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status == 429 || res->status >= 500) {
            last_error = "HTTP " + std::to_string(res->status);
            continue;
        }
        if (res->status != 200) throw LlmError("LLM backend refused request: HTTP " + std::to_string(res->status));
        try {
            const json j = json::parse(res->body);
            return j.at("choices").at(0).at("message").at("content").get<std::string>();
        } catch (const json::exception& e) {
            throw LlmError(std::string("malformed LLM response: ") + e.what());
        }
    }
    throw LlmError("LLM backend unavailable after " + std::to_string(config_.retries + 1) + " attempts: " + last_error);
}

// ---------------------------------------------------------------------------

CachedLlmClient::CachedLlmClient(LlmClient& inner, std::filesystem::path dir) : inner_(inner), dir_(std::move(dir)) {
    std::filesystem::create_directories(dir_);
}

std::string CachedLlmClient::complete(const LlmRequest& request) {
    const json req = request.to_json();
    const std::filesystem::path file = dir_ / (request.cache_key() + ".json");
    if (std::ifstream in(file); in) {
        try {
            const json entry = json::parse(in);
            if (entry.at("request") == req) {
                ++hits_;
                return entry.at("response").get<std::string>();
            }
        } catch (const json::exception&) {
            // unreadable entry: fall through and replace it
        }
    }
    ++misses_;
    std::string response = inner_.complete(request);
    const json entry{{"request", req}, {"response", response}};
    std::lock_guard lock(write_mutex_);
    write_file_atomic(file, entry.dump(2) + "\n");
    return response;
}

}  // namespace cfdrive
