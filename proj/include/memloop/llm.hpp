#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "memloop/errors.hpp"

namespace memloop {

/// Image attachment for vision-capable calls. Pixels are never decoded here;
/// max_edge_px travels with the request as the compression target.
struct ImagePart {
    std::string uri;
    std::string caption;
    int max_edge_px = 1024;
};

struct Message {
    std::string role;  // system | user | assistant
    std::string text;
    std::vector<ImagePart> images;
};

struct ChatRequest {
    std::vector<Message> messages;
    double temperature = 0.0;
    std::optional<int> max_tokens;
    // Name of the calling agent: zoom_in | zoom_out | visual | judge | responder.
    std::string tag;
};

struct TokenUsage {
    long prompt_tokens = 0;
    long completion_tokens = 0;
    long total_tokens = 0;
};

/// Per-run accumulation of token usage, broken down by agent tag.
/// per_tag always sums to totals.
struct TokenLedger {
    TokenUsage totals;
    std::map<std::string, TokenUsage> per_tag;

    void add(const TokenUsage& usage, const std::string& tag);
    nlohmann::json to_json() const;
};

struct ChatResult {
    std::string text;
    TokenUsage usage;
    int retries = 0;
};

/// Abstract model backend: chat completion plus embeddings.
class Backend {
public:
    virtual ~Backend() = default;
    virtual ChatResult chat(const ChatRequest& req) = 0;
    virtual std::vector<double> embed(const std::string& text) = 0;
    virtual bool supports_vision() const = 0;
    virtual std::string name() const = 0;
};

/// One backend per agent role. Roles may alias the same object.
struct BackendSet {
    std::shared_ptr<Backend> perception;
    std::shared_ptr<Backend> judge;
    std::shared_ptr<Backend> responder;
    std::shared_ptr<Backend> vision;  // null disables the visual view

    /// Every role served by the same backend.
    static BackendSet uniform(std::shared_ptr<Backend> b) {
        return BackendSet{b, b, b, b};
    }
};

/// One canned response. tag "*" matches any tag; step, when set, is the
/// 1-based ordinal of calls carrying that tag and the entry fires at most
/// once. Entries without a step are reusable catch-alls tried after all
/// step-bound entries.
struct ScriptEntry {
    std::string tag = "*";
    std::optional<int> step;
    std::string response;
};

/// Deterministic stand-in for a model. Unmatched chat or embed calls throw
/// ScriptError so tests stay total. Not thread-safe: clone one per run.
class ScriptedBackend final : public Backend {
public:
    ScriptedBackend& add(ScriptEntry entry);
    ScriptedBackend& add(const std::string& tag, int step, const std::string& response);
    ScriptedBackend& add_default(const std::string& tag, const std::string& response);
    ScriptedBackend& set_embedding(const std::string& text, std::vector<double> vec);
    ScriptedBackend& set_vision(bool enabled);

    ChatResult chat(const ChatRequest& req) override;
    std::vector<double> embed(const std::string& text) override;
    bool supports_vision() const override { return vision_; }
    std::string name() const override { return "scripted"; }

    /// Parse a script file: {"vision": bool, "entries": [{tag, step?,
    /// response | response_json}], "embeddings": {text: [..]}}.
    static ScriptedBackend from_json(const nlohmann::json& spec);

private:
    std::vector<ScriptEntry> entries_;
    std::vector<bool> fired_;
    std::map<std::string, std::vector<double>> embed_table_;
    std::map<std::string, int> calls_;
    bool vision_ = true;
};

struct HttpBackendOptions {
    std::string base_url;   // e.g. http://localhost:8000/v1
    std::string model;
    std::string api_key;
    std::string embed_model;  // falls back to model when empty
    int max_retries = 3;
    int timeout_sec = 120;
    int backoff_base_ms = 200;
    long max_context_tokens = 128000;
    bool vision = false;
};

/// OpenAI-compatible chat-completions client with bounded retries
/// (transport errors, 429 and 5xx) and token accounting. Usage is read from
/// the response when present, estimated otherwise.
class HttpBackend final : public Backend {
public:
    explicit HttpBackend(HttpBackendOptions options);

    ChatResult chat(const ChatRequest& req) override;
    std::vector<double> embed(const std::string& text) override;
    bool supports_vision() const override { return options_.vision; }
    std::string name() const override { return "http:" + options_.model; }

    /// Request body for a chat call, exposed for tests.
    nlohmann::json build_chat_body(const ChatRequest& req) const;

private:
    HttpBackendOptions options_;
    std::string origin_;       // scheme://host[:port]
    std::string path_prefix_;  // path part of base_url, no trailing slash

    nlohmann::json post_json(const std::string& path, const nlohmann::json& body,
                             int* retries_out);
};

/// Pull a JSON object out of model output. Strategies, in order: parse the
/// whole text; parse the largest brace-balanced substring; strip code
/// fences and retry both. Throws ParseError (carrying the raw text) when
/// everything fails.
nlohmann::json extract_json(const std::string& text);

/// Coerce a JSON value into a list of integer ids. Accepts integers,
/// integral doubles and numeric strings; anything else is counted in
/// *dropped (when given) and skipped.
std::vector<long> coerce_id_list(const nlohmann::json& value, int* dropped = nullptr);

/// Coerce a JSON value into a list of strings; numbers are stringified.
std::vector<std::string> coerce_string_list(const nlohmann::json& value);

/// Usage estimate for backends that do not report one.
TokenUsage estimate_usage(const ChatRequest& req, const std::string& completion);

}  // namespace memloop
