#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "memloop/config.hpp"
#include "memloop/llm.hpp"

namespace memloop {

// Exit codes shared by all commands.
inline constexpr int kExitOk = 0;
inline constexpr int kExitInputError = 2;
inline constexpr int kExitBackendError = 3;

/// Command-line overrides; set fields win over the config file.
struct CliOverrides {
    std::optional<std::string> corpus;
    std::optional<std::string> store;
    std::optional<std::string> index_path;
    std::optional<std::string> retriever;
    std::optional<std::string> backend_profile;
    std::optional<std::string> trace_dir;
    std::optional<std::string> report;
    std::optional<std::string> prompt_dir;
    std::optional<int> k;
    std::optional<int> w;
    std::optional<int> j;
    std::optional<int> jobs;
    std::optional<int> queries_num;
    std::optional<long> chunk_budget;
    std::optional<long> known_budget;
    std::optional<bool> vision;
};

/// Backend connection details for one agent role.
struct RoleEndpoint {
    std::string base_url;
    std::string model;
    std::string key_env = "MEMLOOP_API_KEY";
    std::string api_key;  // resolved from key_env; never serialized
    bool configured = false;

    nlohmann::json to_json() const;
};

struct RunConfig {
    std::string corpus;
    std::string store = "store.v1.jsonl";
    std::string index_path = "index.v1.json";
    std::string retriever = "lexical";
    std::size_t embed_dim = 0;
    std::size_t chunk_budget = 200;
    LoopConfig loop;
    int jobs = 1;
    std::string trace_dir = "trace";
    std::string report = "report.v1.json";
    std::string profile_csv = "distance_profile.csv";
    std::string prompt_dir;
    std::string backend_profile = "http";  // or "scripted:<script.json>"
    std::map<std::string, RoleEndpoint> roles;  // perception/judge/responder/vision/embedding
    int max_retries = 3;
    int timeout_sec = 120;
    long max_context_tokens = 128000;

    nlohmann::json to_json() const;
};

using EnvLookup = std::function<const char*(const char*)>;

/// Pure config resolution: defaults, then the config file, then environment
/// backend triples, then flag overrides. Same file + env + flags always
/// yield the same RunConfig.
RunConfig resolve_config(const std::optional<std::string>& config_path,
                         const CliOverrides& overrides, const EnvLookup& env = nullptr);

/// Build the per-role backends named by the config. The scripted profile
/// returns a fresh deterministic backend each call; http roles raise
/// BackendError when no endpoint is configured.
BackendSet make_backends(const RunConfig& config);
std::shared_ptr<Backend> make_embedding_backend(const RunConfig& config);

/// Stable id for ad-hoc questions: "q_" + fnv1a64 hex of the text.
std::string question_id(const std::string& question);

// Commands; each returns a process exit code.
int cmd_index(const RunConfig& config);
int cmd_ask(const RunConfig& config, const std::string& question);
int cmd_eval(const RunConfig& config, const std::string& items_path);
int cmd_analyze(const RunConfig& config, const std::string& items_path);

}  // namespace memloop
