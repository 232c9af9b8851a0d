#include "memloop/llm.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

#include <httplib.h>

#include "memloop/corpus.hpp"

namespace memloop {

using nlohmann::json;

void TokenLedger::add(const TokenUsage& usage, const std::string& tag) {
    totals.prompt_tokens += usage.prompt_tokens;
    totals.completion_tokens += usage.completion_tokens;
    totals.total_tokens += usage.total_tokens;
    TokenUsage& slot = per_tag[tag];
    slot.prompt_tokens += usage.prompt_tokens;
    slot.completion_tokens += usage.completion_tokens;
    slot.total_tokens += usage.total_tokens;
}

json TokenLedger::to_json() const {
    json tags = json::object();
    for (const auto& [tag, u] : per_tag) {
        tags[tag] = json{{"prompt_tokens", u.prompt_tokens},
                         {"completion_tokens", u.completion_tokens},
                         {"total_tokens", u.total_tokens}};
    }
    return json{{"prompt_tokens", totals.prompt_tokens},
                {"completion_tokens", totals.completion_tokens},
                {"total_tokens", totals.total_tokens},
                {"per_tag", tags}};
}

namespace {

/// ChatRequest invariants: known roles, image parts only on vision-capable
/// backends.
template <typename ErrorType>
void check_request(const ChatRequest& req, bool vision) {
    for (const Message& m : req.messages) {
        if (m.role != "system" && m.role != "user" && m.role != "assistant") {
            throw ErrorType("invalid message role '" + m.role + "'");
        }
        if (!m.images.empty() && !vision) {
            throw ErrorType("image parts sent to a backend without vision capability");
        }
    }
}

}  // namespace

TokenUsage estimate_usage(const ChatRequest& req, const std::string& completion) {
    TokenUsage usage;
    for (const Message& m : req.messages) {
        usage.prompt_tokens += static_cast<long>(estimate_tokens(m.text));
    }
    usage.completion_tokens = static_cast<long>(estimate_tokens(completion));
    usage.total_tokens = usage.prompt_tokens + usage.completion_tokens;
    return usage;
}

// ---------------------------------------------------------------------------
// ScriptedBackend

ScriptedBackend& ScriptedBackend::add(ScriptEntry entry) {
    entries_.push_back(std::move(entry));
    fired_.push_back(false);
    return *this;
}

ScriptedBackend& ScriptedBackend::add(const std::string& tag, int step,
                                      const std::string& response) {
    return add(ScriptEntry{tag, step, response});
}

ScriptedBackend& ScriptedBackend::add_default(const std::string& tag,
                                              const std::string& response) {
    return add(ScriptEntry{tag, std::nullopt, response});
}

ScriptedBackend& ScriptedBackend::set_embedding(const std::string& text,
                                                std::vector<double> vec) {
    embed_table_[text] = std::move(vec);
    return *this;
}

ScriptedBackend& ScriptedBackend::set_vision(bool enabled) {
    vision_ = enabled;
    return *this;
}

ChatResult ScriptedBackend::chat(const ChatRequest& req) {
    check_request<ScriptError>(req, vision_);
    const int step = ++calls_[req.tag];
    auto matches_tag = [&](const ScriptEntry& e) {
        return e.tag == "*" || e.tag == req.tag;
    };
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        const ScriptEntry& e = entries_[i];
        if (!fired_[i] && e.step && *e.step == step && matches_tag(e)) {
            fired_[i] = true;
            return ChatResult{e.response, estimate_usage(req, e.response), 0};
        }
    }
    for (const ScriptEntry& e : entries_) {
        if (!e.step && matches_tag(e)) {
            return ChatResult{e.response, estimate_usage(req, e.response), 0};
        }
    }
    throw ScriptError("no scripted response for tag '" + req.tag + "' call #" +
                      std::to_string(step));
}

std::vector<double> ScriptedBackend::embed(const std::string& text) {
    auto it = embed_table_.find(text);
    if (it == embed_table_.end()) {
        throw ScriptError("no scripted embedding for text: " + text.substr(0, 80));
    }
    return it->second;
}

ScriptedBackend ScriptedBackend::from_json(const json& spec) {
    ScriptedBackend backend;
    backend.set_vision(spec.value("vision", true));
    if (spec.contains("entries")) {
        for (const json& e : spec.at("entries")) {
            ScriptEntry entry;
            entry.tag = e.value("tag", std::string{"*"});
            if (e.contains("step")) entry.step = e.at("step").get<int>();
            if (e.contains("response_json")) {
                entry.response = e.at("response_json").dump();
            } else {
                entry.response = e.at("response").get<std::string>();
            }
            backend.add(std::move(entry));
        }
    }
    if (spec.contains("embeddings")) {
        for (const auto& [text, vec] : spec.at("embeddings").items()) {
            backend.set_embedding(text, vec.get<std::vector<double>>());
        }
    }
    return backend;
}

// ---------------------------------------------------------------------------
// JSON extraction

namespace {

std::optional<json> try_parse_object(const std::string& text) {
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded() || !j.is_object()) return std::nullopt;
    return j;
}

/// Largest substring that starts at '{', is brace-balanced outside string
/// literals, and parses as a JSON object.
std::optional<json> largest_balanced_object(const std::string& text) {
    std::optional<json> best;
    std::size_t best_len = 0;
    for (std::size_t start = 0; start < text.size(); ++start) {
        if (text[start] != '{') continue;
        int depth = 0;
        bool in_string = false;
        bool escaped = false;
        for (std::size_t i = start; i < text.size(); ++i) {
            char c = text[i];
            if (in_string) {
                if (escaped) {
                    escaped = false;
                } else if (c == '\\') {
                    escaped = true;
                } else if (c == '"') {
                    in_string = false;
                }
                continue;
            }
            if (c == '"') {
                in_string = true;
            } else if (c == '{') {
                ++depth;
            } else if (c == '}') {
                if (--depth == 0) {
                    std::size_t len = i - start + 1;
                    if (len > best_len) {
                        if (auto j = try_parse_object(text.substr(start, len))) {
                            best = std::move(j);
                            best_len = len;
                        }
                    }
                    break;
                }
            }
        }
    }
    return best;
}

std::string strip_code_fences(const std::string& text) {
    std::string out;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        std::string trimmed = line;
        std::size_t first = trimmed.find_first_not_of(" \t");
        if (first != std::string::npos && trimmed.compare(first, 3, "```") == 0) continue;
        out += line;
        out += '\n';
    }
    return out;
}

}  // namespace

json extract_json(const std::string& text) {
    if (auto j = try_parse_object(text)) return *j;
    if (auto j = largest_balanced_object(text)) return *j;
    std::string stripped = strip_code_fences(text);
    if (stripped != text) {
        if (auto j = try_parse_object(stripped)) return *j;
        if (auto j = largest_balanced_object(stripped)) return *j;
    }
    throw ParseError("no JSON object found in model output", text);
}

std::vector<long> coerce_id_list(const json& value, int* dropped) {
    auto drop = [&] {
        if (dropped) ++*dropped;
    };
    std::vector<long> out;
    if (!value.is_array()) {
        if (!value.is_null()) drop();
        return out;
    }
    for (const json& v : value) {
        if (v.is_number_integer() || v.is_number_unsigned()) {
            out.push_back(v.get<long>());
        } else if (v.is_number_float()) {
            double d = v.get<double>();
            if (d == std::floor(d)) {
                out.push_back(static_cast<long>(d));
            } else {
                drop();
            }
        } else if (v.is_string()) {
            try {
                std::size_t pos = 0;
                long n = std::stol(v.get<std::string>(), &pos);
                if (pos == v.get<std::string>().size()) {
                    out.push_back(n);
                } else {
                    drop();
                }
            } catch (const std::exception&) {
                drop();
            }
        } else {
            drop();
        }
    }
    return out;
}

std::vector<std::string> coerce_string_list(const json& value) {
    std::vector<std::string> out;
    if (value.is_string()) {
        out.push_back(value.get<std::string>());
        return out;
    }
    if (!value.is_array()) return out;
    for (const json& v : value) {
        if (v.is_string()) {
            out.push_back(v.get<std::string>());
        } else if (v.is_number_integer() || v.is_number_unsigned()) {
            out.push_back(std::to_string(v.get<long>()));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// HttpBackend

namespace {

const char kBase64Alphabet[] =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

std::string base64_encode(const std::string& bytes) {
    std::string out;
    out.reserve((bytes.size() + 2) / 3 * 4);
    std::size_t i = 0;
    while (i + 2 < bytes.size()) {
        unsigned v = (static_cast<unsigned char>(bytes[i]) << 16) |
                     (static_cast<unsigned char>(bytes[i + 1]) << 8) |
                     static_cast<unsigned char>(bytes[i + 2]);
        out.push_back(kBase64Alphabet[(v >> 18) & 63]);
        out.push_back(kBase64Alphabet[(v >> 12) & 63]);
        out.push_back(kBase64Alphabet[(v >> 6) & 63]);
        out.push_back(kBase64Alphabet[v & 63]);
        i += 3;
    }
    if (i + 1 == bytes.size()) {
        unsigned v = static_cast<unsigned char>(bytes[i]) << 16;
        out.push_back(kBase64Alphabet[(v >> 18) & 63]);
        out.push_back(kBase64Alphabet[(v >> 12) & 63]);
        out += "==";
    } else if (i + 2 == bytes.size()) {
        unsigned v = (static_cast<unsigned char>(bytes[i]) << 16) |
                     (static_cast<unsigned char>(bytes[i + 1]) << 8);
        out.push_back(kBase64Alphabet[(v >> 18) & 63]);
        out.push_back(kBase64Alphabet[(v >> 12) & 63]);
        out.push_back(kBase64Alphabet[(v >> 6) & 63]);
        out.push_back('=');
    }
    return out;
}

std::string mime_for(const std::string& uri) {
    auto ends_with = [&](const char* ext) {
        std::string_view sv(uri);
        std::string_view e(ext);
        return sv.size() >= e.size() &&
               sv.compare(sv.size() - e.size(), e.size(), e) == 0;
    };
    if (ends_with(".png")) return "image/png";
    if (ends_with(".gif")) return "image/gif";
    if (ends_with(".webp")) return "image/webp";
    return "image/jpeg";
}

/// Local file paths become base64 data URLs; http(s) and data URIs pass
/// through untouched.
std::string image_url_for(const ImagePart& part) {
    const std::string& uri = part.uri;
    if (uri.rfind("http://", 0) == 0 || uri.rfind("https://", 0) == 0 ||
        uri.rfind("data:", 0) == 0) {
        return uri;
    }
    std::ifstream in(uri, std::ios::binary);
    if (!in) throw BackendError("cannot read image file: " + uri);
    std::ostringstream buf;
    buf << in.rdbuf();
    return "data:" + mime_for(uri) + ";base64," + base64_encode(buf.str());
}

bool retryable_status(int status) { return status == 429 || status >= 500; }

}  // namespace

HttpBackend::HttpBackend(HttpBackendOptions options) : options_(std::move(options)) {
    std::string url = options_.base_url;
    while (!url.empty() && url.back() == '/') url.pop_back();
    std::size_t scheme = url.find("://");
    std::size_t path_start =
        scheme == std::string::npos ? url.find('/') : url.find('/', scheme + 3);
    if (path_start == std::string::npos) {
        origin_ = url;
    } else {
        origin_ = url.substr(0, path_start);
        path_prefix_ = url.substr(path_start);
    }
}

json HttpBackend::build_chat_body(const ChatRequest& req) const {
    json messages = json::array();
    for (const Message& m : req.messages) {
        if (m.images.empty()) {
            messages.push_back(json{{"role", m.role}, {"content", m.text}});
            continue;
        }
        json parts = json::array();
        parts.push_back(json{{"type", "text"}, {"text", m.text}});
        for (const ImagePart& img : m.images) {
            parts.push_back(json{
                {"type", "image_url"},
                {"image_url", json{{"url", image_url_for(img)},
                                   {"max_edge_px", img.max_edge_px}}}});
        }
        messages.push_back(json{{"role", m.role}, {"content", std::move(parts)}});
    }
    json body{{"model", options_.model},
              {"messages", std::move(messages)},
              {"temperature", req.temperature}};
    if (req.max_tokens) body["max_tokens"] = *req.max_tokens;
    return body;
}

json HttpBackend::post_json(const std::string& path, const json& body, int* retries_out) {
    httplib::Client client(origin_);
    client.set_connection_timeout(options_.timeout_sec, 0);
    client.set_read_timeout(options_.timeout_sec, 0);

    httplib::Headers headers;
    if (!options_.api_key.empty()) {
        headers.emplace("Authorization", "Bearer " + options_.api_key);
    }

    const std::string payload = body.dump();
    std::string last_error;
    for (int attempt = 0; attempt <= options_.max_retries; ++attempt) {
        if (attempt > 0) {
            std::this_thread::sleep_for(std::chrono::milliseconds(
                static_cast<long>(options_.backoff_base_ms) << (attempt - 1)));
        }
        auto res = client.Post(path_prefix_ + path, headers, payload, "application/json");
        if (!res) {
            last_error = "transport error: " + httplib::to_string(res.error());
            if (retries_out) *retries_out = attempt;
            continue;
        }
        if (res->status == 200) {
            if (retries_out) *retries_out = attempt;
            json parsed = json::parse(res->body, nullptr, false);
            if (parsed.is_discarded()) {
                throw BackendError("backend returned invalid JSON from " + path);
            }
            return parsed;
        }
        last_error = "HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200);
        if (retries_out) *retries_out = attempt;
        if (!retryable_status(res->status)) break;
    }
    throw BackendError("request to " + origin_ + path_prefix_ + path +
                       " failed: " + last_error);
}

ChatResult HttpBackend::chat(const ChatRequest& req) {
    check_request<BackendError>(req, options_.vision);
    long prompt_estimate = 0;
    for (const Message& m : req.messages) {
        prompt_estimate += static_cast<long>(estimate_tokens(m.text));
    }
    if (prompt_estimate > options_.max_context_tokens) {
        throw BackendError("prompt estimate " + std::to_string(prompt_estimate) +
                           " tokens exceeds max context " +
                           std::to_string(options_.max_context_tokens));
    }

    int retries = 0;
    json resp = post_json("/chat/completions", build_chat_body(req), &retries);

    ChatResult result;
    result.retries = retries;
    try {
        result.text = resp.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception& e) {
        throw BackendError(std::string("malformed chat completion: ") + e.what());
    }
    if (resp.contains("usage") && resp["usage"].is_object()) {
        const json& u = resp["usage"];
        result.usage.prompt_tokens = u.value("prompt_tokens", 0L);
        result.usage.completion_tokens = u.value("completion_tokens", 0L);
        result.usage.total_tokens =
            u.value("total_tokens",
                    result.usage.prompt_tokens + result.usage.completion_tokens);
    } else {
        result.usage = estimate_usage(req, result.text);
    }
    return result;
}

std::vector<double> HttpBackend::embed(const std::string& text) {
    json body{{"model", options_.embed_model.empty() ? options_.model : options_.embed_model},
              {"input", text}};
    json resp = post_json("/embeddings", body, nullptr);
    try {
        return resp.at("data").at(0).at("embedding").get<std::vector<double>>();
    } catch (const json::exception& e) {
        throw BackendError(std::string("malformed embedding response: ") + e.what());
    }
}

}  // namespace memloop
