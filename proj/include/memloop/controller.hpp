#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "memloop/config.hpp"
#include "memloop/corpus.hpp"
#include "memloop/llm.hpp"
#include "memloop/retrieval.hpp"
#include "memloop/state.hpp"

namespace memloop {

/// Root query plus the current rewrite, with the full rewrite history.
struct QueryState {
    std::string root;
    std::string current;
    std::vector<std::pair<std::string, std::string>> history;  // (query, action)
    bool reset_used = false;

    static QueryState init(const std::string& query) {
        return QueryState{query, query, {{query, "init"}}, false};
    }
};

struct Answer {
    enum class TerminatedBy { judge_sufficient, iteration_cap };

    std::string text;
    std::vector<std::size_t> evidence_chunks;   // ascending
    std::vector<std::string> evidence_dia_ids;  // ascending
    int iterations_used = 0;
    TerminatedBy terminated_by = TerminatedBy::iteration_cap;
    TokenLedger usage;
};

const char* to_string(Answer::TerminatedBy t);

struct IterationTrace {
    int iteration = 0;
    std::string query;
    std::vector<std::size_t> zoom_in_candidates;
    std::vector<std::size_t> zoom_in;
    std::vector<std::size_t> zoom_out;
    std::vector<std::string> visual;
    EvidenceDelta new_evidence;
    std::string missing_information;
    JudgeVerdict verdict;
    std::vector<std::string> notes;

    nlohmann::json to_json() const;
};

/// Everything a run did, serializable as trace/<query_id>.v1.json.
struct RunTrace {
    std::string root_query;
    nlohmann::json config;
    std::vector<IterationTrace> iterations;
    std::vector<std::size_t> evidence;
    std::vector<std::string> visual_evidence;
    std::vector<std::string> failed_queries;
    std::string answer_text;
    int iterations_used = 0;
    std::string terminated_by;
    TokenLedger usage;
    std::vector<std::string> notes;
    bool failed = false;
    std::string error;

    nlohmann::json to_json() const;
};

struct RunResult {
    Answer answer;
    RunTrace trace;
    bool failed = false;  // responder could not produce an answer
    std::string error;
};

/// Decide sufficiency and the next action from the short-term memory. Parse
/// failures get one repair retry (a second chat call); if that also fails
/// the verdict defaults to {can_answer:false, action:none, new_queries:[]}.
/// Proposed queries matching a failed query (after trim/casefold) are
/// discarded; survivors are truncated to queries_num.
JudgeVerdict judge(const ShortTermMemory& state, const QueryState& qs,
                   const LoopConfig& config, const MemoryStore& store, Backend& backend,
                   TokenLedger& ledger);

/// Rewrite the query per the verdict. Survivor filtering re-checks the
/// failed set (the current query has just joined it). No survivor: fall
/// back to the root query once per run; afterwards nullopt tells the loop
/// to stop at the cap.
std::optional<QueryState> apply_action(QueryState qs, const JudgeVerdict& verdict,
                                       const std::vector<std::string>& failed_queries);

/// Final answer from whatever the state holds. Evidence list is the
/// semantic memory contents; usage snapshots the ledger after the call.
Answer respond(const ShortTermMemory& state, const std::string& root_query,
               const MemoryStore& store, const LoopConfig& config, Backend& backend,
               TokenLedger& ledger);

/// The whole loop: perceive -> evolve -> judge, rewriting the query until
/// the judge is satisfied or the iteration cap is hit, then respond.
/// Backend trouble inside an iteration degrades that iteration (failed
/// query, fallback); only a responder failure marks the result failed.
RunResult run_query(const std::string& query, const MemoryStore& store,
                    const RetrievalIndex& index, const LoopConfig& config,
                    const BackendSet& backends);

}  // namespace memloop
