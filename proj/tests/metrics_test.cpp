#include <doctest.h>

#include <random>

#include "memloop/errors.hpp"
#include "memloop/metrics.hpp"
#include "test_support.hpp"

using namespace memloop;
using memloop::test::store_from_texts;

TEST_CASE("f1 hand-computed pairs") {
    CHECK(f1("Paris", "paris.") == doctest::Approx(1.0));
    CHECK(f1("blue car", "red car") == doctest::Approx(0.5));
    CHECK(f1("", "x") == doctest::Approx(0.0));
    CHECK(f1("", "") == doctest::Approx(1.0));
    CHECK(f1("the cat sat", "cat sat") == doctest::Approx(1.0));
    CHECK(f1("John went to Paris", "Paris") == doctest::Approx(0.4));
    CHECK(f1("red red blue", "red blue blue") == doctest::Approx(2.0 / 3.0));
    CHECK(f1("sat cat", "cat sat") == doctest::Approx(1.0));  // bag semantics
    CHECK(f1("quick brown fox", "lazy dog") == doctest::Approx(0.0));
    CHECK(f1("a an the", "x") == doctest::Approx(0.0));  // pred normalizes to empty
    CHECK(f1("a an the", "the a an") == doctest::Approx(1.0));
}

TEST_CASE("f1 invariants on random strings") {
    std::mt19937 rng(55);
    const std::vector<std::string> words = {"red", "blue", "car", "tree", "sky", "run"};
    for (int i = 0; i < 60; ++i) {
        auto make = [&](int n) {
            std::string s;
            for (int w = 0; w < n; ++w) {
                if (w) s += ' ';
                s += words[rng() % words.size()];
            }
            return s;
        };
        std::string x = make(1 + static_cast<int>(rng() % 6));
        std::string y = make(1 + static_cast<int>(rng() % 6));
        double v = f1(x, y);
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
        CHECK(f1(x, x) == doctest::Approx(1.0));
        CHECK(f1(x, y) == doctest::Approx(f1(y, x)));
    }
}

TEST_CASE("recall counts covered gold dia ids") {
    MemoryStore store = store_from_texts({"a", "b", "c", "d"});
    // Chunk 1 holds D0:1, chunk 2 holds D0:2 ...
    CHECK(recall({1}, {"D0:1"}, store) == doctest::Approx(1.0));
    CHECK(recall({1}, {"D0:1", "D0:3"}, store) == doctest::Approx(0.5));
    CHECK(recall({}, {"D0:1"}, store) == doctest::Approx(0.0));
    CHECK_FALSE(recall({1}, {}, store).has_value());          // undefined: skip
    CHECK_FALSE(recall({1}, {"D9:9"}, store).has_value());    // unknown id: flagged
    // Visual evidence covers gold ids directly.
    CHECK(recall({}, {"D0:3"}, store, {"D0:3"}) == doctest::Approx(1.0));
}

TEST_CASE("chunk distance profile arithmetic") {
    // retrieved == gold: no false retrievals.
    auto empty = chunk_distance_profile({{{5}, {5}}});
    CHECK(empty.total == 0);
    CHECK(empty.counts.empty());

    auto one = chunk_distance_profile({{{5}, {7}}});
    CHECK(one.total == 1);
    CHECK(one.counts.at(2) == 1);
    CHECK(one.share_1_10() == doctest::Approx(100.0));

    auto two = chunk_distance_profile({{{5, 300}, {7}}});
    CHECK(two.total == 2);
    CHECK(two.counts.at(2) == 1);
    CHECK(two.counts.at(293) == 1);
    CHECK(two.share_1_10() == doctest::Approx(50.0));
    CHECK(two.share_11_100() == doctest::Approx(0.0));
    CHECK(two.share_over_100() == doctest::Approx(50.0));
    CHECK(two.cumulative_pct(10) == doctest::Approx(50.0));
    CHECK(two.cumulative_pct(293) == doctest::Approx(100.0));
    CHECK(two.to_csv() == "distance,count,cumulative_pct\n2,1,50.00\n293,1,100.00\n");

    CHECK_THROWS_AS(chunk_distance_profile({{{1}, {}}}), EvalError);
}

TEST_CASE("chunk distance profile equals a brute-force oracle") {
    std::mt19937 rng(808);
    for (int round = 0; round < 50; ++round) {
        std::vector<std::pair<std::vector<long>, std::vector<long>>> runs;
        const int n_runs = 1 + static_cast<int>(rng() % 5);
        std::map<long, long> oracle;
        long oracle_total = 0;
        for (int r = 0; r < n_runs; ++r) {
            std::vector<long> retrieved, gold;
            const int n_gold = 1 + static_cast<int>(rng() % 4);
            for (int g = 0; g < n_gold; ++g) gold.push_back(static_cast<long>(rng() % 900));
            const int n_ret = static_cast<int>(rng() % 8);
            for (int i = 0; i < n_ret; ++i) retrieved.push_back(static_cast<long>(rng() % 900));
            for (long rr : retrieved) {
                bool in_gold = false;
                long best = 1 << 30;
                for (long g : gold) {
                    if (g == rr) in_gold = true;
                    best = std::min(best, std::labs(rr - g));
                }
                if (!in_gold) {
                    ++oracle[best];
                    ++oracle_total;
                }
            }
            runs.emplace_back(std::move(retrieved), std::move(gold));
        }
        auto profile = chunk_distance_profile(runs);
        CHECK(profile.counts == oracle);
        CHECK(profile.total == oracle_total);
        if (profile.total > 0) {
            CHECK(profile.share_1_10() + profile.share_11_100() + profile.share_over_100() ==
                  doctest::Approx(100.0));
        }
    }
}

namespace {

RunOutcome outcome(const std::string& id, const std::string& answer, int iterations,
                   long tokens) {
    RunOutcome o;
    o.query_id = id;
    o.answer_text = answer;
    o.iterations = iterations;
    o.usage.add(TokenUsage{tokens, 0, tokens}, "judge");
    return o;
}

EvalItem item(const std::string& id, const std::string& gold, Category cat,
              std::vector<std::string> evidence = {}) {
    EvalItem it;
    it.query_id = id;
    it.question = "question " + id;
    it.gold_answer = gold;
    it.category = cat;
    it.evidence_dia_ids = std::move(evidence);
    return it;
}

}  // namespace

TEST_CASE("aggregate weights categories by item count") {
    MemoryStore store = store_from_texts({"a", "b"});
    std::vector<EvalItem> items = {item("q1", "yes", Category::single_hop),
                                   item("q2", "no", Category::multi_hop)};
    std::vector<RunOutcome> outcomes = {outcome("q1", "yes", 1, 100),
                                        outcome("q2", "completely wrong", 3, 300)};
    auto report = aggregate(items, outcomes, store);
    CHECK(report.overall_f1 == doctest::Approx(0.5));
    CHECK(report.per_category.at("single_hop").f1_mean == doctest::Approx(1.0));
    CHECK(report.per_category.at("multi_hop").f1_mean == doctest::Approx(0.0));
    CHECK(report.mean_iterations == doctest::Approx(2.0));
    CHECK(report.tokens_mean == doctest::Approx(200.0));
    CHECK(report.tokens_max == 300);
    CHECK(report.tokens_per_tag.at("judge").total_tokens == 400);
}

TEST_CASE("aggregate mean iterations over three items") {
    MemoryStore store = store_from_texts({"a"});
    std::vector<EvalItem> items = {item("q1", "x", Category::other),
                                   item("q2", "x", Category::other),
                                   item("q3", "x", Category::other)};
    std::vector<RunOutcome> outcomes = {outcome("q1", "x", 1, 10), outcome("q2", "x", 2, 10),
                                        outcome("q3", "x", 3, 10)};
    CHECK(aggregate(items, outcomes, store).mean_iterations == doctest::Approx(2.0));
}

TEST_CASE("aggregate per-category means match a brute-force recomputation") {
    MemoryStore store = store_from_texts({"a"});
    std::mt19937 rng(404);
    const std::vector<Category> cats = {Category::single_hop, Category::multi_hop,
                                        Category::temporal, Category::open_domain};
    const std::vector<std::string> answers = {"red car", "blue car", "red", "something else"};
    std::vector<EvalItem> items;
    std::vector<RunOutcome> outcomes;
    for (int i = 0; i < 40; ++i) {
        const std::string id = "q" + std::to_string(i);
        items.push_back(item(id, answers[rng() % answers.size()], cats[rng() % cats.size()]));
        outcomes.push_back(outcome(id, answers[rng() % answers.size()], 1, 10));
    }
    auto report = aggregate(items, outcomes, store);

    std::map<std::string, std::pair<int, double>> expected;
    double total = 0.0;
    for (std::size_t i = 0; i < items.size(); ++i) {
        const double v = f1(outcomes[i].answer_text, items[i].gold_answer);
        auto& [n, sum] = expected[to_string(items[i].category)];
        ++n;
        sum += v;
        total += v;
    }
    for (const auto& [cat, acc] : expected) {
        CHECK(report.per_category.at(cat).n == static_cast<std::size_t>(acc.first));
        CHECK(report.per_category.at(cat).f1_mean == doctest::Approx(acc.second / acc.first));
    }
    CHECK(report.overall_f1 == doctest::Approx(total / 40.0));

    // Overall equals the weighted category mean.
    double weighted = 0.0;
    for (const auto& [cat, stats] : report.per_category) {
        weighted += static_cast<double>(stats.n) * stats.f1_mean;
    }
    CHECK(report.overall_f1 == doctest::Approx(weighted / 40.0));
}

TEST_CASE("aggregate flags unknown gold ids and averages recall over the rest") {
    MemoryStore store = store_from_texts({"a", "b", "c"});
    std::vector<EvalItem> items = {
        item("q1", "x", Category::other, {"D0:1"}),
        item("q2", "x", Category::other, {"D9:9"}),  // unknown id
        item("q3", "x", Category::other),            // no gold evidence
    };
    std::vector<RunOutcome> outcomes = {outcome("q1", "x", 1, 10), outcome("q2", "x", 1, 10),
                                        outcome("q3", "x", 1, 10)};
    outcomes[0].evidence = {1};
    auto report = aggregate(items, outcomes, store);
    REQUIRE(report.mean_recall.has_value());
    CHECK(*report.mean_recall == doctest::Approx(1.0));
    CHECK(report.recall_items == 1);
    CHECK(report.flagged_recall == std::vector<std::string>{"q2"});
}

TEST_CASE("aggregate rejects misaligned ids listing the orphans") {
    MemoryStore store = store_from_texts({"a"});
    std::vector<EvalItem> items = {item("q1", "x", Category::other),
                                   item("q2", "x", Category::other)};
    std::vector<RunOutcome> outcomes = {outcome("q1", "x", 1, 10),
                                        outcome("q9", "x", 1, 10)};
    CHECK_THROWS_WITH_AS(aggregate(items, outcomes, store), doctest::Contains("q2"), EvalError);
    try {
        aggregate(items, outcomes, store);
    } catch (const EvalError& e) {
        CHECK(std::string(e.what()).find("q9") != std::string::npos);
    }
}

TEST_CASE("report serialization carries the recall note") {
    MemoryStore store = store_from_texts({"a"});
    auto report = aggregate({item("q1", "x", Category::other)}, {outcome("q1", "x", 1, 5)},
                            store);
    auto j = report.to_json();
    CHECK(j["version"] == 1);
    CHECK(j["n_items"] == 1);
    REQUIRE(j["notes"].size() == 1);
    CHECK(j["notes"][0].get<std::string>().find("recall denominator") != std::string::npos);
    CHECK(report.to_table().find("overall") != std::string::npos);
}
