#include "memloop/cli.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <thread>

#include "memloop/controller.hpp"
#include "memloop/corpus.hpp"
#include "memloop/errors.hpp"
#include "memloop/metrics.hpp"
#include "memloop/retrieval.hpp"

namespace memloop {

namespace fs = std::filesystem;
using nlohmann::json;

json RoleEndpoint::to_json() const {
    return json{{"base_url", base_url},
                {"model", model},
                {"key_env", key_env},
                {"configured", configured}};
}

json RunConfig::to_json() const {
    json role_json = json::object();
    for (const auto& [name, role] : roles) role_json[name] = role.to_json();
    return json{{"corpus", corpus},
                {"store", store},
                {"index", index_path},
                {"retriever", retriever},
                {"embed_dim", embed_dim},
                {"chunk_budget", chunk_budget},
                {"loop", loop.to_json()},
                {"jobs", jobs},
                {"trace_dir", trace_dir},
                {"report", report},
                {"profile_csv", profile_csv},
                {"prompt_dir", prompt_dir},
                {"backend_profile", backend_profile},
                {"roles", std::move(role_json)},
                {"max_retries", max_retries},
                {"timeout_sec", timeout_sec},
                {"max_context_tokens", max_context_tokens}};
}

namespace {

const char* const kRoleNames[] = {"perception", "judge", "responder", "vision", "embedding"};

std::string upper(const std::string& s) {
    std::string out;
    for (char c : s) out.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
    return out;
}

std::string env_or(const EnvLookup& env, const std::string& name) {
    if (!env) return {};
    const char* v = env(name.c_str());
    return v ? std::string(v) : std::string{};
}

void apply_loop_json(LoopConfig& loop, const json& j) {
    if (j.contains("k")) loop.top_k = j["k"].get<int>();
    if (j.contains("w")) loop.window_w = j["w"].get<int>();
    if (j.contains("j")) loop.max_iterations = j["j"].get<int>();
    if (j.contains("queries_num")) loop.queries_num = j["queries_num"].get<int>();
    if (j.contains("temp_perception")) loop.temp_perception = j["temp_perception"].get<double>();
    if (j.contains("temp_judge")) loop.temp_judge = j["temp_judge"].get<double>();
    if (j.contains("temp_responder")) loop.temp_responder = j["temp_responder"].get<double>();
    if (j.contains("vision")) loop.vision_enabled = j["vision"].get<bool>();
    if (j.contains("known_budget")) loop.known_budget = j["known_budget"].get<long>();
    if (j.contains("cue_pattern")) loop.cue_pattern = j["cue_pattern"].get<std::string>();
}

}  // namespace

RunConfig resolve_config(const std::optional<std::string>& config_path,
                         const CliOverrides& overrides, const EnvLookup& env_fn) {
    EnvLookup env = env_fn ? env_fn : EnvLookup([](const char* name) {
        return static_cast<const char*>(std::getenv(name));
    });

    RunConfig cfg;

    if (config_path) {
        std::ifstream in(*config_path);
        if (!in) throw IoError("cannot open config file: " + *config_path);
        json j = json::parse(in, nullptr, false);
        if (j.is_discarded() || !j.is_object()) {
            throw Error("config file is not a JSON object: " + *config_path);
        }
        if (j.contains("corpus")) cfg.corpus = j["corpus"].get<std::string>();
        if (j.contains("store")) cfg.store = j["store"].get<std::string>();
        if (j.contains("index")) cfg.index_path = j["index"].get<std::string>();
        if (j.contains("retriever")) cfg.retriever = j["retriever"].get<std::string>();
        if (j.contains("embed_dim")) cfg.embed_dim = j["embed_dim"].get<std::size_t>();
        if (j.contains("chunk_budget")) cfg.chunk_budget = j["chunk_budget"].get<std::size_t>();
        if (j.contains("jobs")) cfg.jobs = j["jobs"].get<int>();
        if (j.contains("trace_dir")) cfg.trace_dir = j["trace_dir"].get<std::string>();
        if (j.contains("report")) cfg.report = j["report"].get<std::string>();
        if (j.contains("profile_csv")) cfg.profile_csv = j["profile_csv"].get<std::string>();
        if (j.contains("prompt_dir")) cfg.prompt_dir = j["prompt_dir"].get<std::string>();
        if (j.contains("backend_profile")) {
            cfg.backend_profile = j["backend_profile"].get<std::string>();
        }
        if (j.contains("max_retries")) cfg.max_retries = j["max_retries"].get<int>();
        if (j.contains("timeout_sec")) cfg.timeout_sec = j["timeout_sec"].get<int>();
        if (j.contains("max_context_tokens")) {
            cfg.max_context_tokens = j["max_context_tokens"].get<long>();
        }
        apply_loop_json(cfg.loop, j);
        if (j.contains("backends") && j["backends"].is_object()) {
            for (const auto& [role, spec] : j["backends"].items()) {
                RoleEndpoint& ep = cfg.roles[role];
                if (spec.contains("base_url")) ep.base_url = spec["base_url"].get<std::string>();
                if (spec.contains("model")) ep.model = spec["model"].get<std::string>();
                if (spec.contains("key_env")) ep.key_env = spec["key_env"].get<std::string>();
                ep.configured = !ep.base_url.empty();
            }
        }
    }

    // Environment triples: MEMLOOP_<ROLE>_* wins over MEMLOOP_* wins over the
    // config file, per role.
    const std::string default_base = env_or(env, "MEMLOOP_API_BASE");
    const std::string default_model = env_or(env, "MEMLOOP_MODEL");
    const RoleEndpoint file_default = cfg.roles.count("default") ? cfg.roles["default"]
                                                                 : RoleEndpoint{};
    for (const char* role : kRoleNames) {
        RoleEndpoint ep = cfg.roles.count(role) ? cfg.roles[role] : file_default;
        const std::string prefix = "MEMLOOP_" + upper(role) + "_";
        const std::string role_base = env_or(env, prefix + "API_BASE");
        const std::string role_model = env_or(env, prefix + "MODEL");
        if (!role_base.empty()) {
            ep.base_url = role_base;
        } else if (ep.base_url.empty()) {
            ep.base_url = default_base;
        }
        if (!role_model.empty()) {
            ep.model = role_model;
        } else if (ep.model.empty()) {
            ep.model = default_model;
        }
        ep.api_key = env_or(env, prefix + "API_KEY");
        if (ep.api_key.empty()) ep.api_key = env_or(env, ep.key_env);
        if (ep.api_key.empty()) ep.api_key = env_or(env, "MEMLOOP_API_KEY");
        // Vision stays opt-in: only an explicit role entry enables it.
        ep.configured = !ep.base_url.empty() &&
                        (std::string(role) != "vision" || !role_base.empty() ||
                         (cfg.roles.count(role) && cfg.roles.at(role).configured));
        cfg.roles[role] = std::move(ep);
    }
    cfg.roles.erase("default");

    if (overrides.corpus) cfg.corpus = *overrides.corpus;
    if (overrides.store) cfg.store = *overrides.store;
    if (overrides.index_path) cfg.index_path = *overrides.index_path;
    if (overrides.retriever) cfg.retriever = *overrides.retriever;
    if (overrides.backend_profile) cfg.backend_profile = *overrides.backend_profile;
    if (overrides.trace_dir) cfg.trace_dir = *overrides.trace_dir;
    if (overrides.report) cfg.report = *overrides.report;
    if (overrides.prompt_dir) cfg.prompt_dir = *overrides.prompt_dir;
    if (overrides.k) cfg.loop.top_k = *overrides.k;
    if (overrides.w) cfg.loop.window_w = *overrides.w;
    if (overrides.j) cfg.loop.max_iterations = *overrides.j;
    if (overrides.jobs) cfg.jobs = *overrides.jobs;
    if (overrides.queries_num) cfg.loop.queries_num = *overrides.queries_num;
    if (overrides.chunk_budget) cfg.chunk_budget = static_cast<std::size_t>(*overrides.chunk_budget);
    if (overrides.known_budget) cfg.loop.known_budget = *overrides.known_budget;
    if (overrides.vision) cfg.loop.vision_enabled = *overrides.vision;

    if (cfg.retriever != "lexical" && cfg.retriever != "embedding") {
        throw Error("retriever must be 'lexical' or 'embedding', got '" + cfg.retriever + "'");
    }
    if (cfg.jobs < 1) throw Error("jobs must be >= 1");
    if (!cfg.prompt_dir.empty()) cfg.loop.prompts = PromptSet::load_dir(cfg.prompt_dir);
    cfg.loop.validate();
    return cfg;
}

namespace {

std::shared_ptr<Backend> load_scripted(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open script file: " + path);
    json spec = json::parse(in, nullptr, false);
    if (spec.is_discarded()) throw Error("script file is not valid JSON: " + path);
    return std::make_shared<ScriptedBackend>(ScriptedBackend::from_json(spec));
}

std::shared_ptr<Backend> make_http_backend(const RunConfig& cfg, const std::string& role,
                                           bool vision) {
    auto it = cfg.roles.find(role);
    if (it == cfg.roles.end() || !it->second.configured || it->second.base_url.empty()) {
        throw BackendError("no backend configured for role '" + role +
                           "' (set MEMLOOP_API_BASE / MEMLOOP_MODEL or a backends entry)");
    }
    HttpBackendOptions opts;
    opts.base_url = it->second.base_url;
    opts.model = it->second.model;
    opts.api_key = it->second.api_key;
    opts.max_retries = cfg.max_retries;
    opts.timeout_sec = cfg.timeout_sec;
    opts.max_context_tokens = cfg.max_context_tokens;
    opts.vision = vision;
    return std::make_shared<HttpBackend>(std::move(opts));
}

}  // namespace

BackendSet make_backends(const RunConfig& cfg) {
    if (cfg.backend_profile.rfind("scripted:", 0) == 0) {
        return BackendSet::uniform(load_scripted(cfg.backend_profile.substr(9)));
    }
    if (cfg.backend_profile != "http") {
        throw BackendError("unknown backend profile '" + cfg.backend_profile + "'");
    }
    BackendSet set;
    set.perception = make_http_backend(cfg, "perception", false);
    set.judge = make_http_backend(cfg, "judge", false);
    set.responder = make_http_backend(cfg, "responder", false);
    auto vit = cfg.roles.find("vision");
    if (vit != cfg.roles.end() && vit->second.configured) {
        set.vision = make_http_backend(cfg, "vision", true);
    }
    return set;
}

std::shared_ptr<Backend> make_embedding_backend(const RunConfig& cfg) {
    if (cfg.backend_profile.rfind("scripted:", 0) == 0) {
        return load_scripted(cfg.backend_profile.substr(9));
    }
    return make_http_backend(cfg, "embedding", false);
}

std::string question_id(const std::string& question) {
    std::uint64_t hash = 1469598103934665603ull;
    for (unsigned char c : question) {
        hash ^= c;
        hash *= 1099511628211ull;
    }
    char buf[32];
    std::snprintf(buf, sizeof(buf), "q_%016llx", static_cast<unsigned long long>(hash));
    return buf;
}

namespace {

std::string sanitize_id(const std::string& id) {
    std::string out;
    for (char c : id) {
        out.push_back(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_'
                          ? c
                          : '_');
    }
    return out;
}

void write_text(const std::string& path, const std::string& content) {
    if (fs::path(path).has_parent_path()) {
        std::error_code ec;
        fs::create_directories(fs::path(path).parent_path(), ec);
    }
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write file: " + path);
    out << content;
    if (!out) throw IoError("write failed: " + path);
}

void write_trace(const RunConfig& cfg, const std::string& query_id, const RunTrace& trace) {
    std::error_code ec;
    fs::create_directories(cfg.trace_dir, ec);
    const std::string path =
        (fs::path(cfg.trace_dir) / (sanitize_id(query_id) + ".v1.json")).string();
    write_text(path, trace.to_json().dump(2) + "\n");
}

RetrieverKind retriever_kind(const RunConfig& cfg) {
    if (cfg.retriever == "lexical") return RetrieverKind::lexical();
    if (cfg.embed_dim == 0) throw Error("embedding retriever requires embed_dim > 0");
    return RetrieverKind::embedding("embedding", cfg.embed_dim);
}

struct LoadedEngine {
    MemoryStore store;
    RetrievalIndex index;
};

LoadedEngine load_engine(const RunConfig& cfg) {
    LoadedEngine engine;
    engine.store = load_store(cfg.store);
    std::shared_ptr<Backend> embed;
    if (cfg.retriever == "embedding") embed = make_embedding_backend(cfg);
    engine.index = load_index(cfg.index_path, embed);
    return engine;
}

int exit_code_for(const Error& e) {
    if (dynamic_cast<const BackendError*>(&e) || dynamic_cast<const ScriptError*>(&e)) {
        return kExitBackendError;
    }
    return kExitInputError;
}

}  // namespace

int cmd_index(const RunConfig& cfg) {
    try {
        if (cfg.corpus.empty()) throw Error("no corpus path configured");
        MemoryStore store = ingest_file(cfg.corpus, cfg.chunk_budget);
        save_store(store, cfg.store);

        std::shared_ptr<Backend> embed;
        if (cfg.retriever == "embedding") embed = make_embedding_backend(cfg);
        RetrievalIndex index = build_index(store, retriever_kind(cfg), embed);
        save_index(index, cfg.index_path);

        std::size_t total_tokens = 0;
        std::size_t max_tokens = 0;
        for (const Chunk& c : store.chunks) {
            total_tokens += c.token_estimate;
            max_tokens = std::max(max_tokens, c.token_estimate);
        }
        std::cout << "chunks: " << store.size() << "\n"
                  << "utterances: " << store.utterances.size() << "\n"
                  << "token estimate total/mean/max: " << total_tokens << " / "
                  << (store.size() ? total_tokens / store.size() : 0) << " / " << max_tokens
                  << "\n"
                  << "store: " << cfg.store << "\n"
                  << "index: " << cfg.index_path << " (" << cfg.retriever << ")\n";
        return kExitOk;
    } catch (const Error& e) {
        std::cerr << "index: " << e.what() << "\n";
        return exit_code_for(e);
    }
}

int cmd_ask(const RunConfig& cfg, const std::string& question) {
    try {
        LoadedEngine engine = load_engine(cfg);
        BackendSet backends = make_backends(cfg);
        RunResult result = run_query(question, engine.store, engine.index, cfg.loop, backends);

        const std::string qid = question_id(question);
        write_trace(cfg, qid, result.trace);

        if (result.failed) {
            std::cerr << "ask: run failed: " << result.error << "\n";
            std::cerr << "trace: " << cfg.trace_dir << "/" << qid << ".v1.json\n";
            return kExitBackendError;
        }
        std::cout << result.answer.text << "\n\n";
        std::cout << "evidence dia_ids:";
        std::vector<std::string> dia_ids = result.answer.evidence_dia_ids;
        for (std::size_t c : result.answer.evidence_chunks) {
            for (const std::string& id : engine.store.chunks[c].utterance_ids) {
                dia_ids.push_back(id);
            }
        }
        std::sort(dia_ids.begin(), dia_ids.end());
        dia_ids.erase(std::unique(dia_ids.begin(), dia_ids.end()), dia_ids.end());
        for (const std::string& id : dia_ids) std::cout << " " << id;
        std::cout << "\niterations: " << result.answer.iterations_used << " ("
                  << to_string(result.answer.terminated_by) << ")\n"
                  << "tokens: " << result.answer.usage.totals.total_tokens << "\n"
                  << "trace: " << cfg.trace_dir << "/" << qid << ".v1.json\n";
        return kExitOk;
    } catch (const Error& e) {
        std::cerr << "ask: " << e.what() << "\n";
        return exit_code_for(e);
    }
}

int cmd_eval(const RunConfig& cfg, const std::string& items_path) {
    try {
        const std::vector<EvalItem> items = load_eval_items(items_path);
        LoadedEngine engine = load_engine(cfg);

        std::vector<RunOutcome> outcomes(items.size());
        std::atomic<std::size_t> next{0};
        std::string abort_message;
        std::mutex abort_mutex;

        auto worker = [&]() {
            while (true) {
                const std::size_t i = next.fetch_add(1);
                if (i >= items.size()) return;
                const EvalItem& item = items[i];
                RunOutcome& outcome = outcomes[i];
                outcome.query_id = item.query_id;
                try {
                    BackendSet backends = make_backends(cfg);
                    RunResult r =
                        run_query(item.question, engine.store, engine.index, cfg.loop, backends);
                    write_trace(cfg, item.query_id, r.trace);
                    outcome.answer_text = r.answer.text;
                    outcome.iterations = r.answer.iterations_used;
                    outcome.evidence = r.answer.evidence_chunks;
                    outcome.visual = r.answer.evidence_dia_ids;
                    outcome.usage = r.answer.usage;
                    outcome.failed = r.failed;
                    outcome.error = r.error;
                } catch (const Error& e) {
                    outcome.failed = true;
                    outcome.error = e.what();
                    std::lock_guard<std::mutex> lock(abort_mutex);
                    if (abort_message.empty()) abort_message = e.what();
                }
            }
        };

        const std::size_t n_workers =
            std::min<std::size_t>(static_cast<std::size_t>(cfg.jobs),
                                  std::max<std::size_t>(items.size(), 1));
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < n_workers; ++t) pool.emplace_back(worker);
        for (std::thread& t : pool) t.join();

        EvalReport report = aggregate(items, outcomes, engine.store);
        write_text(cfg.report, report.to_json().dump(2) + "\n");
        std::cout << report.to_table();
        std::cout << "report: " << cfg.report << "\n";

        const bool all_failed = !items.empty() && report.failed_items.size() == items.size();
        if (all_failed) {
            std::cerr << "eval: every item failed";
            if (!abort_message.empty()) std::cerr << " (" << abort_message << ")";
            std::cerr << "\n";
            return kExitBackendError;
        }
        return kExitOk;
    } catch (const Error& e) {
        std::cerr << "eval: " << e.what() << "\n";
        return exit_code_for(e);
    }
}

int cmd_analyze(const RunConfig& cfg, const std::string& items_path) {
    try {
        if (!fs::is_directory(cfg.trace_dir)) {
            throw IoError("trace dir not found: " + cfg.trace_dir);
        }
        bool any_trace = false;
        for (const auto& entry : fs::directory_iterator(cfg.trace_dir)) {
            if (entry.path().extension() == ".json") {
                any_trace = true;
                break;
            }
        }
        if (!any_trace) throw IoError("no traces in " + cfg.trace_dir);

        const std::vector<EvalItem> items = load_eval_items(items_path);
        const MemoryStore store = load_store(cfg.store);

        std::map<std::string, long> dia_to_chunk;
        for (const Chunk& c : store.chunks) {
            for (const std::string& id : c.utterance_ids) {
                dia_to_chunk[id] = static_cast<long>(c.index);
            }
        }

        std::vector<std::pair<std::vector<long>, std::vector<long>>> runs;
        std::size_t skipped = 0;
        for (const EvalItem& item : items) {
            if (item.evidence_dia_ids.empty()) {
                ++skipped;
                continue;
            }
            const std::string path =
                (fs::path(cfg.trace_dir) / (sanitize_id(item.query_id) + ".v1.json")).string();
            std::ifstream in(path);
            if (!in) {
                ++skipped;
                continue;
            }
            json trace = json::parse(in, nullptr, false);
            if (trace.is_discarded()) {
                ++skipped;
                continue;
            }

            std::vector<long> gold;
            bool unknown = false;
            for (const std::string& id : item.evidence_dia_ids) {
                auto it = dia_to_chunk.find(id);
                if (it == dia_to_chunk.end()) {
                    unknown = true;
                    break;
                }
                gold.push_back(it->second);
            }
            if (unknown || gold.empty()) {
                ++skipped;
                continue;
            }
            std::sort(gold.begin(), gold.end());
            gold.erase(std::unique(gold.begin(), gold.end()), gold.end());

            std::vector<long> retrieved;
            for (const json& iter : trace.value("iterations", json::array())) {
                for (const json& c : iter.value("zoom_in_candidates", json::array())) {
                    retrieved.push_back(c.get<long>());
                }
            }
            std::sort(retrieved.begin(), retrieved.end());
            retrieved.erase(std::unique(retrieved.begin(), retrieved.end()), retrieved.end());
            runs.emplace_back(std::move(retrieved), std::move(gold));
        }

        const DistanceProfile profile = chunk_distance_profile(runs);
        write_text(cfg.profile_csv, profile.to_csv());

        std::cout << "analyzed runs: " << runs.size() << " (skipped " << skipped << ")\n"
                  << "false retrievals: " << profile.total << "\n";
        if (profile.total == 0) {
            std::cout << "no false retrievals; profile is empty\n";
        } else {
            char buf[160];
            std::snprintf(buf, sizeof(buf),
                          "distance shares: [1,10]=%.1f%%  (10,100]=%.1f%%  (100,inf)=%.1f%%\n",
                          profile.share_1_10(), profile.share_11_100(),
                          profile.share_over_100());
            std::cout << buf;
            std::snprintf(buf, sizeof(buf),
                          "within 10 chunks: %.1f%%; within 100 chunks: %.1f%%\n",
                          profile.cumulative_pct(10), profile.cumulative_pct(100));
            std::cout << buf;
        }
        std::cout << "profile: " << cfg.profile_csv << "\n";
        return kExitOk;
    } catch (const Error& e) {
        std::cerr << "analyze: " << e.what() << "\n";
        return exit_code_for(e);
    }
}

}  // namespace memloop
