#include "memloop/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "memloop/errors.hpp"

namespace memloop {

using nlohmann::json;

const char* to_string(Category c) {
    switch (c) {
        case Category::single_hop: return "single_hop";
        case Category::multi_hop: return "multi_hop";
        case Category::temporal: return "temporal";
        case Category::open_domain: return "open_domain";
        case Category::other: return "other";
    }
    return "other";
}

Category category_from(const std::string& s) {
    if (s == "single_hop") return Category::single_hop;
    if (s == "multi_hop") return Category::multi_hop;
    if (s == "temporal") return Category::temporal;
    if (s == "open_domain") return Category::open_domain;
    if (s == "other") return Category::other;
    throw EvalError("unknown category '" + s + "'");
}

std::vector<EvalItem> load_eval_items(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open items file: " + path);
    json doc = json::parse(in, nullptr, false);
    if (doc.is_discarded() || !doc.is_array()) {
        throw EvalError("items file must be a JSON array: " + path);
    }
    std::vector<EvalItem> items;
    std::set<std::string> ids;
    for (std::size_t i = 0; i < doc.size(); ++i) {
        const json& j = doc[i];
        EvalItem item;
        try {
            item.query_id = j.at("query_id").get<std::string>();
            item.question = j.at("question").get<std::string>();
            item.gold_answer = j.at("gold_answer").get<std::string>();
            item.category = category_from(j.at("category").get<std::string>());
        } catch (const json::exception& e) {
            throw EvalError("items[" + std::to_string(i) + "]: " + e.what());
        }
        if (item.gold_answer.empty()) {
            throw EvalError("items[" + std::to_string(i) + "]: gold_answer is empty");
        }
        if (!ids.insert(item.query_id).second) {
            throw EvalError("duplicate query_id '" + item.query_id + "'");
        }
        if (j.contains("evidence_dia_ids")) {
            item.evidence_dia_ids = j["evidence_dia_ids"].get<std::vector<std::string>>();
        }
        items.push_back(std::move(item));
    }
    return items;
}

namespace {

std::vector<std::string> answer_tokens(const std::string& s) {
    std::string cleaned;
    cleaned.reserve(s.size());
    for (unsigned char c : s) {
        if (std::isspace(c)) {
            cleaned.push_back(' ');
        } else if (std::ispunct(c)) {
            continue;  // removed, not replaced: "don't" -> "dont"
        } else {
            cleaned.push_back(static_cast<char>(std::tolower(c)));
        }
    }
    std::vector<std::string> tokens;
    std::istringstream in(cleaned);
    std::string tok;
    while (in >> tok) {
        if (tok == "a" || tok == "an" || tok == "the") continue;
        tokens.push_back(tok);
    }
    return tokens;
}

}  // namespace

double f1(const std::string& prediction, const std::string& gold) {
    const auto p = answer_tokens(prediction);
    const auto g = answer_tokens(gold);
    if (p.empty() && g.empty()) return 1.0;
    if (p.empty() || g.empty()) return 0.0;

    std::map<std::string, long> p_counts;
    for (const auto& t : p) ++p_counts[t];
    long overlap = 0;
    std::map<std::string, long> g_counts;
    for (const auto& t : g) ++g_counts[t];
    for (const auto& [tok, count] : p_counts) {
        auto it = g_counts.find(tok);
        if (it != g_counts.end()) overlap += std::min(count, it->second);
    }
    if (overlap == 0) return 0.0;
    const double precision = static_cast<double>(overlap) / static_cast<double>(p.size());
    const double rec = static_cast<double>(overlap) / static_cast<double>(g.size());
    return 2.0 * precision * rec / (precision + rec);
}

std::optional<double> recall(const std::vector<std::size_t>& evidence_chunks,
                             const std::vector<std::string>& gold_dia_ids,
                             const MemoryStore& store,
                             const std::vector<std::string>& visual_dia_ids) {
    if (gold_dia_ids.empty()) return std::nullopt;
    for (const std::string& g : gold_dia_ids) {
        if (!store.has_utterance(g)) return std::nullopt;  // flagged by the caller
    }
    std::size_t covered = 0;
    for (const std::string& g : gold_dia_ids) {
        bool hit = std::find(visual_dia_ids.begin(), visual_dia_ids.end(), g) !=
                   visual_dia_ids.end();
        for (std::size_t c : evidence_chunks) {
            if (hit) break;
            const auto& ids = store.chunks.at(c).utterance_ids;
            hit = std::find(ids.begin(), ids.end(), g) != ids.end();
        }
        if (hit) ++covered;
    }
    return static_cast<double>(covered) / static_cast<double>(gold_dia_ids.size());
}

double DistanceProfile::share_1_10() const {
    return total == 0 ? 0.0 : 100.0 * static_cast<double>(bucket_1_10) / static_cast<double>(total);
}
double DistanceProfile::share_11_100() const {
    return total == 0 ? 0.0
                      : 100.0 * static_cast<double>(bucket_11_100) / static_cast<double>(total);
}
double DistanceProfile::share_over_100() const {
    return total == 0 ? 0.0
                      : 100.0 * static_cast<double>(bucket_over_100) / static_cast<double>(total);
}

double DistanceProfile::cumulative_pct(long d) const {
    if (total == 0) return 0.0;
    long cum = 0;
    for (const auto& [dist, count] : counts) {
        if (dist > d) break;
        cum += count;
    }
    return 100.0 * static_cast<double>(cum) / static_cast<double>(total);
}

std::string DistanceProfile::to_csv() const {
    std::string out = "distance,count,cumulative_pct\n";
    long cum = 0;
    char buf[64];
    for (const auto& [dist, count] : counts) {
        cum += count;
        const double pct = 100.0 * static_cast<double>(cum) / static_cast<double>(total);
        std::snprintf(buf, sizeof(buf), "%ld,%ld,%.2f\n", dist, count, pct);
        out += buf;
    }
    return out;
}

DistanceProfile chunk_distance_profile(
    const std::vector<std::pair<std::vector<long>, std::vector<long>>>& runs) {
    DistanceProfile profile;
    for (const auto& [retrieved, gold] : runs) {
        if (gold.empty()) throw EvalError("chunk_distance_profile: empty gold set");
        for (long r : retrieved) {
            if (std::find(gold.begin(), gold.end(), r) != gold.end()) continue;
            long best = -1;
            for (long g : gold) {
                const long d = std::labs(r - g);
                if (best < 0 || d < best) best = d;
            }
            ++profile.counts[best];
            ++profile.total;
            if (best <= 10) {
                ++profile.bucket_1_10;
            } else if (best <= 100) {
                ++profile.bucket_11_100;
            } else {
                ++profile.bucket_over_100;
            }
        }
    }
    return profile;
}

json EvalReport::to_json() const {
    json cats = json::object();
    for (const auto& [name, stats] : per_category) {
        cats[name] = json{{"n", stats.n}, {"f1", stats.f1_mean}};
    }
    json tags = json::object();
    for (const auto& [tag, u] : tokens_per_tag) {
        tags[tag] = json{{"prompt_tokens", u.prompt_tokens},
                         {"completion_tokens", u.completion_tokens},
                         {"total_tokens", u.total_tokens}};
    }
    return json{{"version", 1},
                {"n_items", n_items},
                {"overall_f1", overall_f1},
                {"per_category", std::move(cats)},
                {"mean_recall", mean_recall ? json(*mean_recall) : json()},
                {"recall_items", recall_items},
                {"flagged_recall", flagged_recall},
                {"mean_iterations", mean_iterations},
                {"tokens", json{{"mean_total", tokens_mean},
                                {"max_total", tokens_max},
                                {"per_tag", std::move(tags)}}},
                {"failed_items", failed_items},
                {"notes", notes}};
}

std::string EvalReport::to_table() const {
    char buf[128];
    std::string out = "category          n      F1\n";
    for (const auto& [name, stats] : per_category) {
        std::snprintf(buf, sizeof(buf), "%-15s %3zu  %.4f\n", name.c_str(), stats.n,
                      stats.f1_mean);
        out += buf;
    }
    std::snprintf(buf, sizeof(buf), "%-15s %3zu  %.4f\n", "overall", n_items, overall_f1);
    out += buf;
    if (mean_recall) {
        std::snprintf(buf, sizeof(buf), "mean recall     : %.4f over %zu items\n", *mean_recall,
                      recall_items);
        out += buf;
    }
    std::snprintf(buf, sizeof(buf), "mean iterations : %.2f\n", mean_iterations);
    out += buf;
    std::snprintf(buf, sizeof(buf), "tokens mean/max : %.1f / %ld\n", tokens_mean, tokens_max);
    out += buf;
    if (!failed_items.empty()) {
        std::snprintf(buf, sizeof(buf), "failed items    : %zu\n", failed_items.size());
        out += buf;
    }
    return out;
}

EvalReport aggregate(const std::vector<EvalItem>& items,
                     const std::vector<RunOutcome>& outcomes, const MemoryStore& store) {
    std::map<std::string, const RunOutcome*> by_id;
    for (const RunOutcome& o : outcomes) by_id[o.query_id] = &o;

    std::vector<std::string> missing_outcomes;
    std::set<std::string> item_ids;
    for (const EvalItem& item : items) {
        item_ids.insert(item.query_id);
        if (!by_id.count(item.query_id)) missing_outcomes.push_back(item.query_id);
    }
    std::vector<std::string> orphan_outcomes;
    for (const RunOutcome& o : outcomes) {
        if (!item_ids.count(o.query_id)) orphan_outcomes.push_back(o.query_id);
    }
    if (!missing_outcomes.empty() || !orphan_outcomes.empty()) {
        std::string msg = "misaligned eval ids;";
        if (!missing_outcomes.empty()) {
            msg += " items without outcome:";
            for (const auto& id : missing_outcomes) msg += " " + id;
            msg += ";";
        }
        if (!orphan_outcomes.empty()) {
            msg += " outcomes without item:";
            for (const auto& id : orphan_outcomes) msg += " " + id;
        }
        throw EvalError(msg);
    }

    EvalReport report;
    report.n_items = items.size();
    report.notes.push_back("recall denominator: all gold evidence dia_ids per item");

    std::map<std::string, std::pair<std::size_t, double>> cat_acc;  // n, f1 sum
    double f1_sum = 0.0;
    double recall_sum = 0.0;
    double iter_sum = 0.0;
    long token_sum = 0;

    for (const EvalItem& item : items) {
        const RunOutcome& o = *by_id.at(item.query_id);
        const double item_f1 = f1(o.answer_text, item.gold_answer);
        f1_sum += item_f1;
        auto& [n, sum] = cat_acc[to_string(item.category)];
        ++n;
        sum += item_f1;

        if (!item.evidence_dia_ids.empty()) {
            auto r = recall(o.evidence, item.evidence_dia_ids, store, o.visual);
            if (r) {
                recall_sum += *r;
                ++report.recall_items;
            } else {
                report.flagged_recall.push_back(item.query_id);
            }
        }
        iter_sum += o.iterations;
        token_sum += o.usage.totals.total_tokens;
        report.tokens_max = std::max(report.tokens_max, o.usage.totals.total_tokens);
        for (const auto& [tag, usage] : o.usage.per_tag) {
            TokenUsage& slot = report.tokens_per_tag[tag];
            slot.prompt_tokens += usage.prompt_tokens;
            slot.completion_tokens += usage.completion_tokens;
            slot.total_tokens += usage.total_tokens;
        }
        if (o.failed) report.failed_items.push_back(item.query_id);
    }

    for (const auto& [name, acc] : cat_acc) {
        report.per_category[name] =
            CategoryStats{acc.first, acc.second / static_cast<double>(acc.first)};
    }
    if (!items.empty()) {
        report.overall_f1 = f1_sum / static_cast<double>(items.size());
        report.mean_iterations = iter_sum / static_cast<double>(items.size());
        report.tokens_mean = static_cast<double>(token_sum) / static_cast<double>(items.size());
    }
    if (report.recall_items > 0) {
        report.mean_recall = recall_sum / static_cast<double>(report.recall_items);
    }
    return report;
}

}  // namespace memloop
