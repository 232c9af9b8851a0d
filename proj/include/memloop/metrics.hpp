#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "memloop/corpus.hpp"
#include "memloop/llm.hpp"

namespace memloop {

enum class Category { single_hop, multi_hop, temporal, open_domain, other };
const char* to_string(Category c);
Category category_from(const std::string& s);

struct EvalItem {
    std::string query_id;
    std::string question;
    std::string gold_answer;
    Category category = Category::other;
    std::vector<std::string> evidence_dia_ids;  // gold evidence, optional
};

/// Parse an eval items JSON array; throws EvalError / IoError.
std::vector<EvalItem> load_eval_items(const std::string& path);

/// Token-level F1 with the usual extractive-QA normalization: lowercase,
/// strip punctuation, drop articles, collapse whitespace, then bag-of-token
/// overlap. 1 when both sides normalize to empty, 0 when only one does.
double f1(const std::string& prediction, const std::string& gold);

/// Fraction of gold dia_ids covered by a retained evidence chunk (or by a
/// visual evidence id). nullopt when gold is empty or any gold id is
/// unknown — callers skip those items and flag them.
std::optional<double> recall(const std::vector<std::size_t>& evidence_chunks,
                             const std::vector<std::string>& gold_dia_ids,
                             const MemoryStore& store,
                             const std::vector<std::string>& visual_dia_ids = {});

/// Distribution of distances between falsely retrieved chunks and the
/// nearest gold chunk.
struct DistanceProfile {
    std::map<long, long> counts;  // distance -> observations
    long total = 0;
    long bucket_1_10 = 0;     // [1, 10]
    long bucket_11_100 = 0;   // (10, 100]
    long bucket_over_100 = 0;  // (100, inf)

    double share_1_10() const;
    double share_11_100() const;
    double share_over_100() const;
    /// Share of observations at distance <= d.
    double cumulative_pct(long d) const;
    /// "distance,count,cumulative_pct" rows, ascending distance.
    std::string to_csv() const;
};

/// One (retrieved, gold) pair per run; every retrieved chunk not in gold
/// contributes min |retrieved - gold| over the gold set. Gold must be
/// non-empty for every run.
DistanceProfile chunk_distance_profile(
    const std::vector<std::pair<std::vector<long>, std::vector<long>>>& runs);

/// What one query's run produced, as the harness sees it.
struct RunOutcome {
    std::string query_id;
    std::string answer_text;
    int iterations = 0;
    std::vector<std::size_t> evidence;
    std::vector<std::string> visual;
    TokenLedger usage;
    bool failed = false;
    std::string error;
};

struct CategoryStats {
    std::size_t n = 0;
    double f1_mean = 0.0;
};

struct EvalReport {
    std::size_t n_items = 0;
    double overall_f1 = 0.0;
    std::map<std::string, CategoryStats> per_category;
    std::optional<double> mean_recall;
    std::size_t recall_items = 0;
    std::vector<std::string> flagged_recall;  // items with unknown gold ids
    double mean_iterations = 0.0;
    double tokens_mean = 0.0;
    long tokens_max = 0;
    std::map<std::string, TokenUsage> tokens_per_tag;
    std::vector<std::string> failed_items;
    std::vector<std::string> notes;

    nlohmann::json to_json() const;
    std::string to_table() const;
};

/// Join items with outcomes by query_id and compute every report field.
/// Misaligned ids are a hard error listing the orphans on both sides.
EvalReport aggregate(const std::vector<EvalItem>& items,
                     const std::vector<RunOutcome>& outcomes, const MemoryStore& store);

}  // namespace memloop
