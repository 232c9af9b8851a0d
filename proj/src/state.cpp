#include "memloop/state.hpp"

#include <algorithm>
#include <cctype>

#include "memloop/errors.hpp"

namespace memloop {

using nlohmann::json;

const char* to_string(QueryAction action) {
    switch (action) {
        case QueryAction::Break: return "Break";
        case QueryAction::Delete: return "Delete";
        case QueryAction::None: return "none";
    }
    return "none";
}

QueryAction query_action_from(const std::string& s) {
    std::string lower;
    for (char c : s) lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    if (lower == "break") return QueryAction::Break;
    if (lower == "delete") return QueryAction::Delete;
    return QueryAction::None;
}

json JudgeVerdict::to_json() const {
    return json{{"thinking", thinking},
                {"useful_id", useful_id},
                {"can_answer", can_answer},
                {"action", to_string(action)},
                {"new_queries", new_queries},
                {"parse_failed", parse_failed}};
}

json EvidenceDelta::to_json() const {
    return json{{"chunks", chunks}, {"dia_ids", dia_ids}};
}

json TrajectoryRecord::to_json() const {
    json j{{"iteration", iteration},
           {"query", query},
           {"zoom_in_count", zoom_in_count},
           {"zoom_out_count", zoom_out_count},
           {"visual_count", visual_count},
           {"missing_information", missing_information},
           {"new_evidence", new_evidence.to_json()}};
    j["verdict"] = verdict ? verdict->to_json() : json();
    return j;
}

ShortTermMemory ShortTermMemory::with_verdict(JudgeVerdict verdict) const {
    if (trajectory.empty()) throw Error("with_verdict on a state without iterations");
    ShortTermMemory next = *this;
    next.trajectory.back().verdict = std::move(verdict);
    return next;
}

std::string normalize_query(const std::string& q) {
    std::size_t begin = 0;
    std::size_t end = q.size();
    while (begin < end && std::isspace(static_cast<unsigned char>(q[begin]))) ++begin;
    while (end > begin && std::isspace(static_cast<unsigned char>(q[end - 1]))) --end;
    std::string out;
    out.reserve(end - begin);
    for (std::size_t i = begin; i < end; ++i) {
        out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(q[i]))));
    }
    return out;
}

ShortTermMemory evolve(const ShortTermMemory& prev, const PerceptionResult& perceived,
                       const std::string& query, int iteration) {
    if (iteration != static_cast<int>(prev.trajectory.size()) + 1) {
        throw Error("evolve: iteration " + std::to_string(iteration) + " does not follow " +
                    std::to_string(prev.trajectory.size()) + " records");
    }

    ShortTermMemory next = prev;
    TrajectoryRecord record;
    record.iteration = iteration;
    record.query = query;
    record.zoom_in_count = perceived.zoom_in.size();
    record.zoom_out_count = perceived.zoom_out.size();
    record.visual_count = perceived.visual.size();
    record.missing_information = perceived.missing_information;

    // Union of the text views, ascending so the delta is deterministic.
    std::vector<std::size_t> incoming = perceived.zoom_in;
    incoming.insert(incoming.end(), perceived.zoom_out.begin(), perceived.zoom_out.end());
    std::sort(incoming.begin(), incoming.end());
    incoming.erase(std::unique(incoming.begin(), incoming.end()), incoming.end());
    for (std::size_t chunk : incoming) {
        if (next.semantic.has_chunk(chunk)) continue;
        next.semantic.evidence.push_back(chunk);
        next.semantic.first_seen_chunk[chunk] = iteration;
        record.new_evidence.chunks.push_back(chunk);
    }
    for (const std::string& dia : perceived.visual) {
        if (next.semantic.has_dia(dia)) continue;
        next.semantic.visual_evidence.push_back(dia);
        next.semantic.first_seen_dia[dia] = iteration;
        record.new_evidence.dia_ids.push_back(dia);
    }

    next.trajectory.push_back(std::move(record));
    return next;
}

ShortTermMemory record_failure(const ShortTermMemory& state, const std::string& query) {
    const std::string norm = normalize_query(query);
    for (const std::string& q : state.failed_queries) {
        if (normalize_query(q) == norm) return state;
    }
    ShortTermMemory next = state;
    next.failed_queries.push_back(query);
    return next;
}

RenderedKnown render_known(const ShortTermMemory& state, const MemoryStore& store,
                           long budget) {
    if (budget < 0) throw Error("render_known: negative budget");

    std::vector<std::size_t> chunks = state.semantic.evidence;
    std::sort(chunks.begin(), chunks.end());
    std::vector<std::string> dia_ids = state.semantic.visual_evidence;
    std::sort(dia_ids.begin(), dia_ids.end());

    RenderedKnown out;
    long spent = 0;
    bool truncated = false;
    auto try_append = [&](const std::string& block) {
        const long cost = static_cast<long>(estimate_tokens(block));
        if (truncated || spent + cost > budget) {
            truncated = true;
            ++out.omitted;
            return;
        }
        if (!out.text.empty()) out.text += '\n';
        out.text += block;
        spent += cost;
    };

    for (std::size_t c : chunks) {
        if (c >= store.size()) throw Error("render_known: chunk " + std::to_string(c) +
                                           " outside store");
        try_append(store.chunks[c].text);
    }
    for (const std::string& id : dia_ids) {
        auto it = store.utterances.find(id);
        if (it == store.utterances.end()) continue;
        try_append(render_utterance_line(it->second));
    }

    if (out.omitted > 0) {
        if (!out.text.empty()) out.text += '\n';
        out.text += "…" + std::to_string(out.omitted) + " chunks omitted";
    }
    return out;
}

}  // namespace memloop
