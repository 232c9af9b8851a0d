#include "memloop/perception.hpp"

#include <algorithm>
#include <regex>
#include <set>

#include "memloop/errors.hpp"

namespace memloop {

using nlohmann::json;

namespace {

std::string query_block(const std::string& query) { return "Query: " + query; }

std::string known_block(const std::string& known) {
    return known.empty() ? "Known information: (none)" : "Known information:\n" + known;
}

std::string field_string(const json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end() || !it->is_string()) return "";
    return it->get<std::string>();
}

json field(const json& j, const char* key) {
    auto it = j.find(key);
    return it == j.end() ? json() : *it;
}

void sort_dedup(std::vector<std::size_t>& v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
}

}  // namespace

ViewOutcome zoom_in(const RetrievalIndex& index, const MemoryStore& store,
                    const std::string& query, std::size_t k, Backend& backend,
                    double temperature, const std::string& known, const PromptSet& prompts,
                    TokenLedger& ledger) {
    ViewOutcome out;
    const std::vector<RetrievalHit> hits = search(index, query, k);
    if (hits.empty()) return out;

    std::string rendered;
    for (std::size_t i = 0; i < hits.size(); ++i) {
        out.candidates.push_back(hits[i].chunk_index);
        if (i) rendered += "\n\n";
        rendered += "[" + std::to_string(i + 1) + "] " + store.chunks[hits[i].chunk_index].text;
    }

    ChatRequest req;
    req.tag = "zoom_in";
    req.temperature = temperature;
    req.messages.push_back(
        Message{"user",
                render_prompt(prompts.zoom_in, {{"query_information", query_block(query)},
                                                {"known_information", known_block(known)},
                                                {"rag_results_text", rendered}}),
                {}});

    json parsed;
    try {
        ChatResult result = backend.chat(req);
        ledger.add(result.usage, req.tag);
        parsed = extract_json(result.text);
    } catch (const Error& e) {
        throw PerceptionError(std::string("zoom-in: ") + e.what());
    }

    out.missing = field_string(parsed, "missing_information");
    for (long id : coerce_id_list(field(parsed, "useful_ids"), &out.dropped_ids)) {
        if (id >= 1 && id <= static_cast<long>(out.candidates.size())) {
            out.useful.push_back(out.candidates[static_cast<std::size_t>(id - 1)]);
        } else {
            ++out.dropped_ids;
        }
    }
    sort_dedup(out.useful);
    return out;
}

std::vector<WindowSpan> expand_windows(const std::vector<std::size_t>& seeds, std::size_t w,
                                       std::size_t store_size) {
    std::vector<WindowSpan> spans;
    if (store_size == 0) return spans;
    std::vector<std::size_t> sorted = seeds;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t seed : sorted) {
        if (seed >= store_size) {
            throw Error("window seed " + std::to_string(seed) + " out of range (size " +
                        std::to_string(store_size) + ")");
        }
        WindowSpan span{seed >= w ? seed - w : 0, std::min(store_size - 1, seed + w)};
        if (!spans.empty() && span.lo <= spans.back().hi + 1) {
            spans.back().hi = std::max(spans.back().hi, span.hi);
        } else {
            spans.push_back(span);
        }
    }
    return spans;
}

ViewOutcome zoom_out(const MemoryStore& store, const std::vector<WindowSpan>& spans,
                     const std::string& query, const std::string& known, Backend& backend,
                     double temperature, const PromptSet& prompts, TokenLedger& ledger) {
    ViewOutcome out;
    if (spans.empty()) return out;

    std::string rendered = "Context windows:";
    for (std::size_t i = 0; i < spans.size(); ++i) {
        if (spans[i].lo > spans[i].hi || spans[i].hi >= store.size()) {
            throw Error("invalid window span [" + std::to_string(spans[i].lo) + ", " +
                        std::to_string(spans[i].hi) + "]");
        }
        rendered += "\n\n[" + std::to_string(i) + "] ";
        for (std::size_t c = spans[i].lo; c <= spans[i].hi; ++c) {
            if (c > spans[i].lo) rendered += '\n';
            rendered += store.chunks[c].text;
            out.candidates.push_back(c);
        }
    }

    ChatRequest req;
    req.tag = "zoom_out";
    req.temperature = temperature;
    req.messages.push_back(
        Message{"user",
                render_prompt(prompts.zoom_out, {{"query_information", query_block(query)},
                                                 {"known_information", known_block(known)},
                                                 {"middle_context_text", rendered}}),
                {}});

    json parsed;
    try {
        ChatResult result = backend.chat(req);
        ledger.add(result.usage, req.tag);
        parsed = extract_json(result.text);
    } catch (const Error& e) {
        throw PerceptionError(std::string("zoom-out: ") + e.what());
    }

    out.missing = field_string(parsed, "missing_information");
    for (long id : coerce_id_list(field(parsed, "useful_ids"), &out.dropped_ids)) {
        if (id >= 0 && id < static_cast<long>(spans.size())) {
            const WindowSpan& span = spans[static_cast<std::size_t>(id)];
            for (std::size_t c = span.lo; c <= span.hi; ++c) out.useful.push_back(c);
        } else {
            ++out.dropped_ids;
        }
    }
    sort_dedup(out.useful);
    return out;
}

std::vector<std::string> visual_ground(const MemoryStore& store,
                                       const std::vector<std::size_t>& cue_chunks,
                                       const std::string& query, const std::string& known,
                                       Backend* backend, const PromptSet& prompts,
                                       TokenLedger& ledger, std::vector<std::string>& notes) {
    if (!backend) {
        notes.push_back("vision skipped: no vision backend configured");
        return {};
    }
    if (!backend->supports_vision()) {
        notes.push_back("vision skipped: backend lacks vision capability");
        return {};
    }

    // Sessions of the cue chunks, in first-appearance order.
    std::vector<std::string> sessions;
    for (std::size_t c : cue_chunks) {
        const std::string& s = store.session_of(c);
        if (std::find(sessions.begin(), sessions.end(), s) == sessions.end()) {
            sessions.push_back(s);
        }
    }
    std::string session_list;
    for (std::size_t i = 0; i < sessions.size(); ++i) {
        if (i) session_list += ", ";
        session_list += sessions[i];
    }

    std::string context = "Retrieved context:";
    for (std::size_t c : cue_chunks) {
        context += "\n\n" + store.chunks[c].text;
    }

    // All images belonging to those sessions travel with the request.
    std::vector<ImagePart> images;
    for (const std::string& s : sessions) {
        for (const auto& [sess, range] : store.session_index) {
            if (sess != s) continue;
            for (std::size_t c = range.lo; c < range.hi; ++c) {
                for (const std::string& id : store.chunks[c].utterance_ids) {
                    const Utterance& u = store.utterances.at(id);
                    if (u.image) {
                        images.push_back(
                            ImagePart{u.image->uri, u.image->caption, u.image->max_edge_px});
                    }
                }
            }
        }
    }

    ChatRequest req;
    req.tag = "visual";
    req.temperature = 1.0;
    Message msg{"user",
                render_prompt(prompts.visual, {{"query_information", query_block(query)},
                                               {"known_information", known_block(known)},
                                               {"rag_information", context},
                                               {"session_list_str", session_list}}),
                std::move(images)};
    req.messages.push_back(std::move(msg));

    json parsed;
    try {
        ChatResult result = backend->chat(req);
        ledger.add(result.usage, req.tag);
        parsed = extract_json(result.text);
    } catch (const Error& e) {
        notes.push_back(std::string("visual grounding failed: ") + e.what());
        return {};
    }

    std::vector<std::string> ids;
    for (std::string& id : coerce_string_list(field(parsed, "useful_dia_ids"))) {
        if (store.has_utterance(id)) ids.push_back(std::move(id));
    }
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    return ids;
}

PerceptionResult perceive(const std::string& query, const LoopConfig& config,
                          const MemoryStore& store, const RetrievalIndex& index,
                          const BackendSet& backends, const std::string& known,
                          TokenLedger& ledger) {
    PerceptionResult result;

    // Zoom-in feeds every other view; its failure is the total failure.
    ViewOutcome zi = zoom_in(index, store, query, static_cast<std::size_t>(config.top_k),
                             *backends.perception, config.temp_perception, known,
                             config.prompts, ledger);
    result.zoom_in = zi.useful;
    result.raw_candidates = zi.candidates;
    std::sort(result.raw_candidates.begin(), result.raw_candidates.end());
    result.dropped_ids += zi.dropped_ids;

    const std::vector<WindowSpan> spans =
        expand_windows(zi.useful, static_cast<std::size_t>(config.window_w), store.size());

    ViewOutcome zo;
    if (!spans.empty()) {
        try {
            zo = zoom_out(store, spans, query, known, *backends.perception,
                          config.temp_perception, config.prompts, ledger);
        } catch (const Error& e) {
            result.notes.push_back(std::string("zoom-out failed: ") + e.what());
        }
    }
    result.zoom_out = zo.useful;
    result.dropped_ids += zo.dropped_ids;

    std::vector<std::size_t> cue_chunks;
    if (!zo.useful.empty()) {
        const std::regex cue(config.cue_pattern);
        for (std::size_t c : zo.useful) {
            if (store.chunks[c].has_image_cue || std::regex_search(store.chunks[c].text, cue)) {
                cue_chunks.push_back(c);
            }
        }
    }
    if (!cue_chunks.empty()) {
        if (!config.vision_enabled) {
            result.notes.push_back("vision skipped: disabled by config");
        } else {
            result.visual = visual_ground(store, cue_chunks, query, known,
                                          backends.vision.get(), config.prompts, ledger,
                                          result.notes);
        }
    }

    if (!zi.missing.empty()) result.missing_information = zi.missing;
    if (!zo.missing.empty()) {
        if (!result.missing_information.empty()) result.missing_information += '\n';
        result.missing_information += zo.missing;
    }
    return result;
}

}  // namespace memloop
