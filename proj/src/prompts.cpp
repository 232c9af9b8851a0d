#include "memloop/prompts.hpp"

#include <cctype>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "memloop/errors.hpp"

namespace memloop {

namespace {

const char* kZoomIn =
    R"({query_information}
{known_information}
RAG retrieval results:
{rag_results_text}

Task: Identify useful retrieval chunks based on "Constraint Matching".

Analysis Rules:
1. **Temporal Check**: If the query mentions a specific time or duration, ANY result mentioning a matching time/duration is HIGHLY relevant.
2. **Descriptive Matches**: If the query asks for a specific name (e.g., a place or person), but the text only provides a generic description (e.g., "my place", "that person", "my origin"), mark it as USEFUL. It confirms the context.
3. **Partial Information**: Do not discard a result just because it lacks the final answer. If it provides the *background* or *cause* of the queried event, it is useful.

Output a JSON object:
1. thinking: A brief explanation covering, including why specific IDs were selected (mention the matching time or description).
3. missing_information: What specific missing_information is still missing. You can analyze the disadvantage of search_query.
4. useful_ids: List of indices (e.g., [1, 2]). Include IDs that contain matching timeframes or descriptions of the target, even if the specific name is missing.

Output ONLY valid JSON.
)";

const char* kZoomOut =
    R"({query_information}
{known_information}
{middle_context_text}

Task: Identify useful information to answer the query.

Analysis Rules:
1. **Temporal Check**: If the query mentions a specific time or duration, ANY result mentioning a matching time/duration is HIGHLY relevant.
1. **Descriptive Matches**: If the query asks for a specific name but the text only provides a generic description, mark it as USEFUL.
2. **Contextual Clues**: Surrounding turns may provide context, causation, or temporal references that help answer the query.

Output a JSON object:
1. thinking: Your reasoning about what useful information these context windows contain.
2. thinking_choice:  Why specific IDs were selected (mention the matching time or description);
3. missing_information: What specific information is still missing to fully answer the query.
4. useful_ids: List of 0-based indices (e.g., [0, 2]) from the context windows that are useful.

Output ONLY valid JSON.
)";

const char* kVisual =
    R"({query_information}
{known_information}
{rag_information}

You are viewing conversation session images from sessions: {session_list_str}.
Each image is a page from a conversation PDF. Dialogue entries are formatted as:
  {{dia_id}}- {{speaker}}: {{text}}
Some entries may include embedded images with captions.

Your task:
1. Carefully read ALL dialogue content visible in the images.
2. Identify dialogue entries (by their dia_id, e.g., "D1:5") that contain information relevant to answering the query.
3. Explain your reasoning.

Output a JSON object:
{{
"thinking": ...,
"useful_dia_ids": ...,
}}
Output ONLY valid JSON.
)";

const char* kJudge =
    R"(Query: {query}
{short_memory_text}
{conv_memory_text}
{fail_queue_information}
Output a JSON object:
1.{thinking}
2.useful_id: List of dia_id strings from the useful results (e.g., [0, 2]). If can_answer, include those that support the answer. If not, include those with relevant partial info.
3.can_answer: true if the results contain enough information to answer the query, false otherwise.
4. action: Check the **Fail query**. You can choose only one action to generate for each new query:
    1. Break: Break down the last query into sub-queries to get a shorter but more exact query. if Q=[Q_A,Q_B], you can just searcg Q_A firstly. Example: When Tom arrived at Shanghai 3 years ago-> [Tom arrived at Shanghai,3 years ago]
    2. Delete: If Root Query Q = [Q_A,Q_B] and Short Memory include Q_A, focus on Q_B and New query Q'=Q-Q_A.
    Do not let new_queries as same as and Fail query.
    You can try more types of action to avoid the same failed query.
5.new_queries: If can_answer is false, suggest {queries_num} new queries that are more likely to retrieve the missing information. These should be focused and based on the gaps identified in the report.
Output a JSON object exactly following this structure:
{{
"thinking": ...,
"useful_id": ...,
"can_answer": ...,
"action": ...,
"new_queries": ...,
}}
Output ONLY valid JSON.
)";

const char* kResponder =
    R"(You are answering a question using retrieved conversation memory.

{known_information}

Question: {query}

Instructions:
- Answer using only the information above.
- Be concise: give the answer directly, without restating the question.
- If the memory names an exact date, time, place, or count, use it verbatim.
- If the information above is insufficient, give the most likely answer supported by it.
)";

const std::pair<const char*, std::string PromptSet::*> kSlots[] = {
    {"zoom_in", &PromptSet::zoom_in},   {"zoom_out", &PromptSet::zoom_out},
    {"visual", &PromptSet::visual},     {"judge", &PromptSet::judge},
    {"responder", &PromptSet::responder},
};

}  // namespace

PromptSet PromptSet::builtin() {
    PromptSet p;
    p.zoom_in = kZoomIn;
    p.zoom_out = kZoomOut;
    p.visual = kVisual;
    p.judge = kJudge;
    p.responder = kResponder;
    return p;
}

PromptSet PromptSet::load_dir(const std::string& dir) {
    PromptSet p = builtin();
    for (const auto& [name, slot] : kSlots) {
        std::filesystem::path file = std::filesystem::path(dir) / (std::string(name) + ".txt");
        std::ifstream in(file);
        if (!in) continue;
        std::ostringstream buf;
        buf << in.rdbuf();
        p.*slot = buf.str();
    }
    return p;
}

void PromptSet::dump_dir(const std::string& dir) const {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    for (const auto& [name, slot] : kSlots) {
        std::filesystem::path file = std::filesystem::path(dir) / (std::string(name) + ".txt");
        std::ofstream out(file, std::ios::trunc);
        if (!out) throw IoError("cannot write prompt file: " + file.string());
        out << this->*slot;
    }
}

std::string render_prompt(const std::string& tmpl,
                          const std::map<std::string, std::string>& vars) {
    std::string out;
    out.reserve(tmpl.size());
    for (std::size_t i = 0; i < tmpl.size(); ++i) {
        char c = tmpl[i];
        if (c == '{' && i + 1 < tmpl.size() && tmpl[i + 1] == '{') {
            out.push_back('{');
            ++i;
            continue;
        }
        if (c == '}' && i + 1 < tmpl.size() && tmpl[i + 1] == '}') {
            out.push_back('}');
            ++i;
            continue;
        }
        if (c == '{') {
            std::size_t end = i + 1;
            while (end < tmpl.size() &&
                   (std::isalnum(static_cast<unsigned char>(tmpl[end])) || tmpl[end] == '_')) {
                ++end;
            }
            if (end < tmpl.size() && tmpl[end] == '}' && end > i + 1) {
                const std::string name = tmpl.substr(i + 1, end - i - 1);
                auto it = vars.find(name);
                if (it != vars.end()) {
                    out += it->second;
                    i = end;
                    continue;
                }
            }
        }
        out.push_back(c);
    }
    return out;
}

}  // namespace memloop
