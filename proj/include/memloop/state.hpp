#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "memloop/corpus.hpp"
#include "memloop/perception.hpp"

namespace memloop {

enum class QueryAction { Break, Delete, None };
const char* to_string(QueryAction action);
QueryAction query_action_from(const std::string& s);

/// Parsed judge decision. useful_id is advisory annotation kept for traces.
struct JudgeVerdict {
    std::string thinking;
    std::vector<std::string> useful_id;
    bool can_answer = false;
    QueryAction action = QueryAction::None;
    std::vector<std::string> new_queries;
    bool parse_failed = false;  // defaulted after a failed repair retry

    nlohmann::json to_json() const;
};

/// Evidence added by one iteration.
struct EvidenceDelta {
    std::vector<std::size_t> chunks;
    std::vector<std::string> dia_ids;

    bool empty() const { return chunks.empty() && dia_ids.empty(); }
    nlohmann::json to_json() const;
};

/// Accumulating factual evidence. Insertion order records discovery order;
/// first_seen stamps the iteration each element arrived.
struct SemanticMemory {
    std::vector<std::size_t> evidence;
    std::vector<std::string> visual_evidence;
    std::map<std::size_t, int> first_seen_chunk;
    std::map<std::string, int> first_seen_dia;

    bool has_chunk(std::size_t index) const { return first_seen_chunk.count(index) > 0; }
    bool has_dia(const std::string& id) const { return first_seen_dia.count(id) > 0; }
};

struct TrajectoryRecord {
    int iteration = 0;
    std::string query;
    std::size_t zoom_in_count = 0;
    std::size_t zoom_out_count = 0;
    std::size_t visual_count = 0;
    std::string missing_information;
    std::optional<JudgeVerdict> verdict;  // filled once the iteration is judged
    EvidenceDelta new_evidence;

    nlohmann::json to_json() const;
};

/// The evolving per-run state m_j: semantic evidence set, episodic
/// trajectory, failed-query queue. Values are immutable snapshots; the
/// operations below return new states. m_0 is the default-constructed value.
struct ShortTermMemory {
    SemanticMemory semantic;
    std::vector<TrajectoryRecord> trajectory;
    std::vector<std::string> failed_queries;  // insertion order

    /// New state whose latest record carries the verdict. Earlier records
    /// are never touched.
    ShortTermMemory with_verdict(JudgeVerdict verdict) const;
};

/// Case-insensitive trimmed form used for failed-query comparisons.
std::string normalize_query(const std::string& q);

/// One evolution step: fold the perceived evidence into the state and append
/// the iteration's trajectory record. Requires j == prev.trajectory.size()+1.
/// Only ever adds evidence.
ShortTermMemory evolve(const ShortTermMemory& prev, const PerceptionResult& perceived,
                       const std::string& query, int iteration);

/// Mark the latest iteration's query as failed; idempotent under
/// normalization.
ShortTermMemory record_failure(const ShortTermMemory& state, const std::string& query);

struct RenderedKnown {
    std::string text;
    std::size_t omitted = 0;
};

/// Deterministic serialization of the semantic memory: evidence chunks in
/// ascending index order, whole chunks dropped from the tail once the token
/// budget is spent, with a final "…N chunks omitted" line when anything was
/// dropped.
RenderedKnown render_known(const ShortTermMemory& state, const MemoryStore& store,
                           long budget);

}  // namespace memloop
