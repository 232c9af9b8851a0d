#include "memloop/controller.hpp"

#include <algorithm>
#include <set>

#include "memloop/errors.hpp"
#include "memloop/perception.hpp"

namespace memloop {

using nlohmann::json;

void LoopConfig::validate() const {
    if (top_k < 1) throw Error("config: top_k must be >= 1");
    if (window_w < 0) throw Error("config: window_w must be >= 0");
    if (max_iterations < 1) throw Error("config: max_iterations must be >= 1");
    if (queries_num < 1) throw Error("config: queries_num must be >= 1");
    for (double t : {temp_perception, temp_judge, temp_responder}) {
        if (t < 0.0 || t > 2.0) throw Error("config: temperatures must lie in [0, 2]");
    }
    if (known_budget < 0) throw Error("config: known_budget must be >= 0");
}

json LoopConfig::to_json() const {
    return json{{"top_k", top_k},
                {"window_w", window_w},
                {"max_iterations", max_iterations},
                {"queries_num", queries_num},
                {"temp_perception", temp_perception},
                {"temp_judge", temp_judge},
                {"temp_responder", temp_responder},
                {"vision_enabled", vision_enabled},
                {"known_budget", known_budget},
                {"cue_pattern", cue_pattern}};
}

const char* to_string(Answer::TerminatedBy t) {
    return t == Answer::TerminatedBy::judge_sufficient ? "judge_sufficient" : "iteration_cap";
}

json IterationTrace::to_json() const {
    return json{{"iteration", iteration},
                {"query", query},
                {"zoom_in_candidates", zoom_in_candidates},
                {"zoom_in", zoom_in},
                {"zoom_out", zoom_out},
                {"visual", visual},
                {"new_evidence", new_evidence.to_json()},
                {"missing_information", missing_information},
                {"verdict", verdict.to_json()},
                {"notes", notes}};
}

json RunTrace::to_json() const {
    json iters = json::array();
    for (const IterationTrace& it : iterations) iters.push_back(it.to_json());
    return json{{"version", 1},
                {"root_query", root_query},
                {"config", config},
                {"iterations", std::move(iters)},
                {"evidence", evidence},
                {"visual_evidence", visual_evidence},
                {"failed_queries", failed_queries},
                {"answer", json{{"text", answer_text},
                                {"iterations_used", iterations_used},
                                {"terminated_by", terminated_by}}},
                {"usage", usage.to_json()},
                {"notes", notes},
                {"failed", failed},
                {"error", error}};
}

namespace {

std::string render_short_memory(const ShortTermMemory& state, const MemoryStore& store,
                                long budget) {
    RenderedKnown known = render_known(state, store, budget);
    return "Short memory:\n" + (known.text.empty() ? std::string("(none)") : known.text);
}

std::string render_trajectory(const ShortTermMemory& state) {
    std::string out = "Recent trajectory:";
    const std::size_t n = state.trajectory.size();
    const std::size_t from = n > 3 ? n - 3 : 0;
    for (std::size_t i = from; i < n; ++i) {
        const TrajectoryRecord& r = state.trajectory[i];
        out += "\n- iteration " + std::to_string(r.iteration) + ": query=\"" + r.query +
               "\"; zoom_in=" + std::to_string(r.zoom_in_count) +
               "; zoom_out=" + std::to_string(r.zoom_out_count) +
               "; visual=" + std::to_string(r.visual_count) + "; new_evidence=" +
               std::to_string(r.new_evidence.chunks.size() + r.new_evidence.dia_ids.size());
        if (!r.missing_information.empty()) {
            out += "; missing=\"" + r.missing_information + "\"";
        }
    }
    return out;
}

std::string render_fail_queue(const std::vector<std::string>& failed) {
    if (failed.empty()) return "Fail query: (none)";
    std::string out = "Fail query: ";
    for (std::size_t i = 0; i < failed.size(); ++i) {
        if (i) out += " | ";
        out += failed[i];
    }
    return out;
}

bool matches_failed(const std::string& query, const std::vector<std::string>& failed) {
    const std::string norm = normalize_query(query);
    for (const std::string& f : failed) {
        if (normalize_query(f) == norm) return true;
    }
    return false;
}

std::vector<std::string> surviving_queries(const std::vector<std::string>& proposed,
                                           const std::vector<std::string>& failed) {
    std::vector<std::string> out;
    std::set<std::string> seen;
    for (const std::string& q : proposed) {
        const std::string norm = normalize_query(q);
        if (norm.empty()) continue;
        if (matches_failed(q, failed)) continue;
        if (!seen.insert(norm).second) continue;
        out.push_back(q);
    }
    return out;
}

}  // namespace

JudgeVerdict judge(const ShortTermMemory& state, const QueryState& qs,
                   const LoopConfig& config, const MemoryStore& store, Backend& backend,
                   TokenLedger& ledger) {
    if (state.trajectory.empty()) throw Error("judge requires at least one iteration");

    ChatRequest req;
    req.tag = "judge";
    req.temperature = config.temp_judge;
    req.messages.push_back(Message{
        "user",
        render_prompt(config.prompts.judge,
                      {{"query", qs.current},
                       {"short_memory_text",
                        render_short_memory(state, store, config.known_budget)},
                       {"conv_memory_text", render_trajectory(state)},
                       {"fail_queue_information", render_fail_queue(state.failed_queries)},
                       {"queries_num", std::to_string(config.queries_num)}}),
        {}});

    auto attempt = [&]() -> std::optional<json> {
        ChatResult result = backend.chat(req);
        ledger.add(result.usage, req.tag);
        try {
            return extract_json(result.text);
        } catch (const ParseError&) {
            return std::nullopt;
        }
    };

    std::optional<json> parsed;
    try {
        parsed = attempt();
        if (!parsed) parsed = attempt();  // one repair retry
    } catch (const Error&) {
        parsed = std::nullopt;
    }

    JudgeVerdict verdict;
    if (!parsed) {
        verdict.parse_failed = true;
        return verdict;
    }
    const json& j = *parsed;

    if (auto it = j.find("thinking"); it != j.end() && it->is_string()) {
        verdict.thinking = it->get<std::string>();
    }
    if (auto it = j.find("useful_id"); it != j.end()) {
        verdict.useful_id = coerce_string_list(*it);
    }
    if (auto it = j.find("can_answer"); it != j.end()) {
        if (it->is_boolean()) {
            verdict.can_answer = it->get<bool>();
        } else if (it->is_string()) {
            verdict.can_answer = normalize_query(it->get<std::string>()) == "true";
        }
    }
    if (auto it = j.find("action"); it != j.end() && it->is_string()) {
        verdict.action = query_action_from(it->get<std::string>());
    }
    if (auto it = j.find("new_queries"); it != j.end()) {
        verdict.new_queries =
            surviving_queries(coerce_string_list(*it), state.failed_queries);
        if (verdict.new_queries.size() > static_cast<std::size_t>(config.queries_num)) {
            verdict.new_queries.resize(static_cast<std::size_t>(config.queries_num));
        }
    }
    return verdict;
}

std::optional<QueryState> apply_action(QueryState qs, const JudgeVerdict& verdict,
                                       const std::vector<std::string>& failed_queries) {
    const std::vector<std::string> survivors =
        surviving_queries(verdict.new_queries, failed_queries);
    if (!survivors.empty()) {
        qs.current = survivors.front();
        qs.history.emplace_back(qs.current, to_string(verdict.action));
        return qs;
    }
    if (!qs.reset_used) {
        qs.reset_used = true;
        qs.current = qs.root;
        qs.history.emplace_back(qs.root, "reset");
        return qs;
    }
    return std::nullopt;
}

Answer respond(const ShortTermMemory& state, const std::string& root_query,
               const MemoryStore& store, const LoopConfig& config, Backend& backend,
               TokenLedger& ledger) {
    RenderedKnown known = render_known(state, store, config.known_budget);

    ChatRequest req;
    req.tag = "responder";
    req.temperature = config.temp_responder;
    req.messages.push_back(Message{
        "user",
        render_prompt(config.prompts.responder,
                      {{"query", root_query},
                       {"known_information",
                        known.text.empty() ? std::string("Known information: (none)")
                                           : "Known information:\n" + known.text}}),
        {}});

    ChatResult result = backend.chat(req);
    ledger.add(result.usage, req.tag);

    Answer answer;
    answer.text = result.text;
    answer.evidence_chunks = state.semantic.evidence;
    std::sort(answer.evidence_chunks.begin(), answer.evidence_chunks.end());
    answer.evidence_dia_ids = state.semantic.visual_evidence;
    std::sort(answer.evidence_dia_ids.begin(), answer.evidence_dia_ids.end());
    answer.usage = ledger;
    return answer;
}

RunResult run_query(const std::string& query, const MemoryStore& store,
                    const RetrievalIndex& index, const LoopConfig& config,
                    const BackendSet& backends) {
    config.validate();
    if (!backends.perception || !backends.judge || !backends.responder) {
        throw Error("run_query: perception, judge and responder backends are required");
    }

    RunResult out;
    RunTrace& trace = out.trace;
    trace.root_query = query;
    trace.config = config.to_json();

    ShortTermMemory memory;
    QueryState qs = QueryState::init(query);
    TokenLedger ledger;
    Answer::TerminatedBy terminated = Answer::TerminatedBy::iteration_cap;
    int used = 0;

    for (int j = 1; j <= config.max_iterations; ++j) {
        used = j;
        const std::string known = render_known(memory, store, config.known_budget).text;

        PerceptionResult perceived;
        std::vector<std::string> iteration_notes;
        try {
            perceived = perceive(qs.current, config, store, index, backends, known, ledger);
        } catch (const Error& e) {
            perceived = {};
            iteration_notes.push_back(std::string("perception failed: ") + e.what());
        }

        memory = evolve(memory, perceived, qs.current, j);
        JudgeVerdict verdict =
            judge(memory, qs, config, store, *backends.judge, ledger);
        memory = memory.with_verdict(verdict);

        IterationTrace it;
        it.iteration = j;
        it.query = qs.current;
        it.zoom_in_candidates = perceived.raw_candidates;
        it.zoom_in = perceived.zoom_in;
        it.zoom_out = perceived.zoom_out;
        it.visual = perceived.visual;
        it.new_evidence = memory.trajectory.back().new_evidence;
        it.missing_information = perceived.missing_information;
        it.verdict = verdict;
        it.notes = perceived.notes;
        it.notes.insert(it.notes.end(), iteration_notes.begin(), iteration_notes.end());
        trace.iterations.push_back(std::move(it));

        if (verdict.can_answer) {
            terminated = Answer::TerminatedBy::judge_sufficient;
            break;
        }
        memory = record_failure(memory, qs.current);
        if (j == config.max_iterations) break;

        auto next = apply_action(std::move(qs), verdict, memory.failed_queries);
        if (!next) {
            trace.notes.push_back("query fallback exhausted; stopping early at iteration " +
                                  std::to_string(j));
            break;
        }
        qs = *std::move(next);
    }

    try {
        out.answer = respond(memory, query, store, config, *backends.responder, ledger);
    } catch (const Error& e) {
        out.failed = true;
        out.error = e.what();
        out.answer.usage = ledger;
        trace.failed = true;
        trace.error = out.error;
    }
    out.answer.iterations_used = used;
    out.answer.terminated_by = terminated;
    out.answer.usage = ledger;

    trace.evidence = memory.semantic.evidence;
    std::sort(trace.evidence.begin(), trace.evidence.end());
    trace.visual_evidence = memory.semantic.visual_evidence;
    std::sort(trace.visual_evidence.begin(), trace.visual_evidence.end());
    trace.failed_queries = memory.failed_queries;
    trace.answer_text = out.answer.text;
    trace.iterations_used = used;
    trace.terminated_by = to_string(terminated);
    trace.usage = ledger;
    return out;
}

}  // namespace memloop
