#pragma once

#include <cstddef>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "memloop/corpus.hpp"
#include "memloop/llm.hpp"

namespace memloop {

struct RetrievalHit {
    std::size_t chunk_index = 0;
    double score = 0.0;

    bool operator==(const RetrievalHit&) const = default;
};

struct RetrieverKind {
    enum class Type { lexical, embedding };
    Type type = Type::lexical;
    std::string provider;  // backend id, embedding only
    std::size_t dim = 0;   // > 0 when embedding

    static RetrieverKind lexical() { return RetrieverKind{}; }
    static RetrieverKind embedding(std::string provider, std::size_t dim) {
        return RetrieverKind{Type::embedding, std::move(provider), dim};
    }
};

/// Lowercased, punctuation-stripped terms.
std::vector<std::string> tokenize(const std::string& text);

/// Immutable similarity index over a MemoryStore. Lexical kind is a tf-idf
/// inverted index scored by cosine; embedding kind stores one unit vector per
/// chunk and scores by dot product. Built once, searched concurrently.
class RetrievalIndex {
public:
    RetrieverKind::Type type() const { return type_; }
    std::size_t size() const { return num_chunks_; }

    friend RetrievalIndex build_index(const MemoryStore& store, const RetrieverKind& kind,
                                      std::shared_ptr<Backend> backend);
    friend std::vector<RetrievalHit> search(const RetrievalIndex& index,
                                            const std::string& query, std::size_t k);
    friend void save_index(const RetrievalIndex& index, const std::string& path);
    friend RetrievalIndex load_index(const std::string& path, std::shared_ptr<Backend> backend);

    /// Stored per-chunk vector (embedding kind), exposed for tests.
    const std::vector<double>& vector_of(std::size_t chunk) const {
        return vectors_.at(chunk);
    }

private:
    RetrieverKind::Type type_ = RetrieverKind::Type::lexical;
    std::size_t num_chunks_ = 0;

    // lexical
    std::map<std::string, std::vector<std::pair<std::size_t, std::size_t>>> postings_;
    std::map<std::string, std::size_t> doc_freq_;
    std::vector<double> doc_norm_;

    // embedding
    std::size_t dim_ = 0;
    std::vector<std::vector<double>> vectors_;
    std::shared_ptr<Backend> backend_;
};

/// Build an index. Embedding kind requires a backend with an embed call;
/// backend failures surface as Error with diagnostics.
RetrievalIndex build_index(const MemoryStore& store, const RetrieverKind& kind,
                           std::shared_ptr<Backend> backend = nullptr);

/// Top-k chunks by score, ties broken by ascending chunk index. Returns
/// min(k, store size) hits; zero scores are part of the ranking.
std::vector<RetrievalHit> search(const RetrievalIndex& index, const std::string& query,
                                 std::size_t k);

void save_index(const RetrievalIndex& index, const std::string& path);
RetrievalIndex load_index(const std::string& path, std::shared_ptr<Backend> backend = nullptr);

}  // namespace memloop
