#include "memloop/retrieval.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "memloop/errors.hpp"

namespace memloop {

using nlohmann::json;

std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> terms;
    std::string cur;
    for (unsigned char c : text) {
        if (std::isalnum(c)) {
            cur.push_back(static_cast<char>(std::tolower(c)));
        } else if (!cur.empty()) {
            terms.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) terms.push_back(std::move(cur));
    return terms;
}

namespace {

// Smoothed idf; strictly positive so identical texts always cosine to 1.
double idf(std::size_t num_docs, std::size_t df) {
    return std::log((1.0 + static_cast<double>(num_docs)) / (1.0 + static_cast<double>(df))) +
           1.0;
}

std::map<std::string, std::size_t> term_counts(const std::string& text) {
    std::map<std::string, std::size_t> counts;
    for (const std::string& t : tokenize(text)) ++counts[t];
    return counts;
}

void unit_normalize(std::vector<double>& v) {
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm == 0.0) return;
    for (double& x : v) x /= norm;
}

}  // namespace

RetrievalIndex build_index(const MemoryStore& store, const RetrieverKind& kind,
                           std::shared_ptr<Backend> backend) {
    RetrievalIndex index;
    index.type_ = kind.type;
    index.num_chunks_ = store.size();

    if (kind.type == RetrieverKind::Type::lexical) {
        for (const Chunk& c : store.chunks) {
            for (const auto& [term, tf] : term_counts(c.text)) {
                index.postings_[term].emplace_back(c.index, tf);
                ++index.doc_freq_[term];
            }
        }
        index.doc_norm_.assign(store.size(), 0.0);
        for (const auto& [term, posting] : index.postings_) {
            const double w = idf(store.size(), index.doc_freq_[term]);
            for (const auto& [chunk, tf] : posting) {
                const double x = static_cast<double>(tf) * w;
                index.doc_norm_[chunk] += x * x;
            }
        }
        for (double& n : index.doc_norm_) n = std::sqrt(n);
        return index;
    }

    if (kind.dim == 0) throw Error("embedding retriever requires dim > 0");
    if (!backend) throw Error("embedding retriever requires a backend");
    index.dim_ = kind.dim;
    index.backend_ = backend;
    index.vectors_.reserve(store.size());
    for (const Chunk& c : store.chunks) {
        std::vector<double> v;
        try {
            v = backend->embed(c.text);
        } catch (const Error& e) {
            throw Error("embedding backend failed on chunk " + std::to_string(c.index) + ": " +
                        e.what());
        }
        if (v.size() != kind.dim) {
            throw Error("embedding dim mismatch on chunk " + std::to_string(c.index) +
                        ": expected " + std::to_string(kind.dim) + ", got " +
                        std::to_string(v.size()));
        }
        unit_normalize(v);
        index.vectors_.push_back(std::move(v));
    }
    return index;
}

std::vector<RetrievalHit> search(const RetrievalIndex& index, const std::string& query,
                                 std::size_t k) {
    if (k == 0) throw Error("search requires k >= 1");
    const std::size_t n = index.num_chunks_;
    if (n == 0) return {};

    std::vector<double> scores(n, 0.0);
    if (index.type_ == RetrieverKind::Type::lexical) {
        const auto q_counts = term_counts(query);
        double q_norm = 0.0;
        for (const auto& [term, tf] : q_counts) {
            auto df_it = index.doc_freq_.find(term);
            const std::size_t df = df_it == index.doc_freq_.end() ? 0 : df_it->second;
            const double wq = static_cast<double>(tf) * idf(n, df);
            q_norm += wq * wq;
            auto post_it = index.postings_.find(term);
            if (post_it == index.postings_.end()) continue;
            const double w_term = idf(n, df);
            for (const auto& [chunk, dtf] : post_it->second) {
                scores[chunk] += wq * static_cast<double>(dtf) * w_term;
            }
        }
        q_norm = std::sqrt(q_norm);
        for (std::size_t i = 0; i < n; ++i) {
            const double denom = q_norm * index.doc_norm_[i];
            scores[i] = denom == 0.0 ? 0.0 : scores[i] / denom;
        }
    } else {
        std::vector<double> q = index.backend_->embed(query);
        if (q.size() != index.dim_) {
            throw Error("query embedding dim mismatch: expected " + std::to_string(index.dim_) +
                        ", got " + std::to_string(q.size()));
        }
        unit_normalize(q);
        for (std::size_t i = 0; i < n; ++i) {
            double dot = 0.0;
            const std::vector<double>& v = index.vectors_[i];
            for (std::size_t d = 0; d < index.dim_; ++d) dot += q[d] * v[d];
            scores[i] = dot;
        }
    }

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return a < b;
    });

    std::vector<RetrievalHit> hits;
    const std::size_t take = std::min(k, n);
    hits.reserve(take);
    for (std::size_t i = 0; i < take; ++i) {
        hits.push_back(RetrievalHit{order[i], scores[order[i]]});
    }
    return hits;
}

namespace {
constexpr const char* kIndexFormat = "memloop.index";
constexpr int kIndexVersion = 1;
}  // namespace

void save_index(const RetrievalIndex& index, const std::string& path) {
    json j{{"format", kIndexFormat}, {"version", kIndexVersion}, {"chunks", index.num_chunks_}};
    if (index.type_ == RetrieverKind::Type::lexical) {
        j["kind"] = "lexical";
        json postings = json::object();
        for (const auto& [term, posting] : index.postings_) {
            json rows = json::array();
            for (const auto& [chunk, tf] : posting) rows.push_back(json::array({chunk, tf}));
            postings[term] = std::move(rows);
        }
        j["postings"] = std::move(postings);
        j["doc_norm"] = index.doc_norm_;
    } else {
        j["kind"] = "embedding";
        j["dim"] = index.dim_;
        j["vectors"] = index.vectors_;
    }
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write index file: " + path);
    out << j.dump() << '\n';
    if (!out) throw IoError("write failed: " + path);
}

RetrievalIndex load_index(const std::string& path, std::shared_ptr<Backend> backend) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open index file: " + path);
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded() || j.value("format", std::string{}) != kIndexFormat) {
        throw VersionError("not an index file: " + path);
    }
    if (j.value("version", -1) != kIndexVersion) {
        throw VersionError("unsupported index version " + std::to_string(j.value("version", -1)) +
                           " in " + path);
    }

    RetrievalIndex index;
    index.num_chunks_ = j.at("chunks").get<std::size_t>();
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "lexical") {
        index.type_ = RetrieverKind::Type::lexical;
        for (const auto& [term, rows] : j.at("postings").items()) {
            auto& posting = index.postings_[term];
            for (const json& row : rows) {
                posting.emplace_back(row.at(0).get<std::size_t>(), row.at(1).get<std::size_t>());
            }
            index.doc_freq_[term] = posting.size();
        }
        index.doc_norm_ = j.at("doc_norm").get<std::vector<double>>();
    } else if (kind == "embedding") {
        index.type_ = RetrieverKind::Type::embedding;
        index.dim_ = j.at("dim").get<std::size_t>();
        index.vectors_ = j.at("vectors").get<std::vector<std::vector<double>>>();
        index.backend_ = std::move(backend);
    } else {
        throw VersionError("unknown index kind '" + kind + "' in " + path);
    }
    return index;
}

}  // namespace memloop
