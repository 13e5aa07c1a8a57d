#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <semaphore>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cfdrive/error.hpp"

namespace cfdrive {

class LlmError : public Error {
public:
    using Error::Error;
};

struct ChatMessage {
    std::string role;
    std::string content;
    friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};

/// Ordered messages plus deterministic decoding parameters.
struct LlmRequest {
    std::string model;
    std::vector<ChatMessage> messages;
    double temperature{0.0};
    int max_tokens{512};
    std::uint64_t seed{0};

    /// Canonical JSON (sorted keys) used for hashing and for the HTTP body.
    [[nodiscard]] nlohmann::json to_json() const;
    /// 16 hex digits of FNV-1a 64 over the canonical JSON dump.
    [[nodiscard]] std::string cache_key() const;
};

/// Text completion endpoint. Implementations throw LlmError on failure.
class LlmClient {
public:
    virtual ~LlmClient() = default;
    [[nodiscard]] virtual std::string name() const = 0;
    [[nodiscard]] virtual std::string complete(const LlmRequest& request) = 0;
};

struct HttpLlmConfig {
    std::string base_url{"http://127.0.0.1:8000"};  // scheme://host[:port][/prefix]
    std::string model{"gpt-4"};
    std::string api_key_env{"CFDRIVE_LLM_TOKEN"};
    std::chrono::milliseconds timeout{std::chrono::seconds(60)};
    int retries{2};
    int max_in_flight{4};
};

/// OpenAI-style POST {prefix}/v1/chat/completions.
class HttpLlmClient final : public LlmClient {
public:
    explicit HttpLlmClient(HttpLlmConfig config);
    ~HttpLlmClient() override;
    [[nodiscard]] std::string name() const override { return "http:" + config_.model; }
    [[nodiscard]] std::string complete(const LlmRequest& request) override;

private:
    HttpLlmConfig config_;
    std::unique_ptr<std::counting_semaphore<>> slots_;
};

/// On-disk response cache in front of another client. Entries are `<key>.json` files that
/// store the full request, so hash collisions are detected rather than served.
class CachedLlmClient final : public LlmClient {
public:
    CachedLlmClient(LlmClient& inner, std::filesystem::path dir);
    [[nodiscard]] std::string name() const override { return inner_.name(); }
    [[nodiscard]] std::string complete(const LlmRequest& request) override;

    [[nodiscard]] std::size_t hits() const noexcept { return hits_; }
    [[nodiscard]] std::size_t misses() const noexcept { return misses_; }

private:
    LlmClient& inner_;
    std::filesystem::path dir_;
    std::mutex write_mutex_;
    std::atomic<std::size_t> hits_{0};
    std::atomic<std::size_t> misses_{0};
};

/// FNV-1a 64-bit.
[[nodiscard]] std::uint64_t fnv1a64(std::string_view data) noexcept;

/// Writes to `<path>.tmp.<pid>` then renames over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

}  // namespace cfdrive
