#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace memloop {

/// Pointer to an image attached to an utterance. The engine never decodes
/// pixels; max_edge_px is carried to the vision backend as the requested
/// compression target.
struct ImageRef {
    std::string uri;
    std::string caption;
    int max_edge_px = 1024;

    bool operator==(const ImageRef&) const = default;
};

struct Utterance {
    std::string dia_id;
    std::string speaker;
    std::string text;  // whitespace-normalized at ingest
    std::string session;
    std::string timestamp;  // as given in the source, may be empty
    std::optional<ImageRef> image;

    bool operator==(const Utterance&) const = default;
};

/// A positionally indexed slice of consecutive utterances. The atomic unit
/// all retrieval and window arithmetic operates on.
struct Chunk {
    std::size_t index = 0;
    std::vector<std::string> utterance_ids;
    std::string text;  // one rendered line per utterance, '\n'-joined
    std::size_t token_estimate = 0;
    bool has_image_cue = false;

    bool operator==(const Chunk&) const = default;
};

/// Half-open chunk-index range [lo, hi).
struct SessionRange {
    std::size_t lo = 0;
    std::size_t hi = 0;

    bool operator==(const SessionRange&) const = default;
};

/// The long-term memory store. Immutable once built; safe to share across
/// concurrent readers.
struct MemoryStore {
    std::vector<Chunk> chunks;
    std::map<std::string, Utterance> utterances;
    // Session ranges in corpus order; they partition [0, chunks.size()).
    std::vector<std::pair<std::string, SessionRange>> session_index;

    std::size_t size() const { return chunks.size(); }
    bool has_utterance(const std::string& dia_id) const {
        return utterances.count(dia_id) > 0;
    }
    /// Session label owning the given chunk index.
    const std::string& session_of(std::size_t chunk_index) const;

    bool operator==(const MemoryStore&) const = default;
};

/// Deterministic zero-dependency token estimate: ceil(chars / 4).
std::size_t estimate_tokens(const std::string& text);

/// Collapse whitespace runs to single spaces and trim the ends.
std::string normalize_ws(const std::string& text);

/// Render an utterance the way it appears inside chunk text:
///   "<dia_id>- <speaker>: <text>" plus an " [image: ...]" marker when an
/// image is attached.
std::string render_utterance_line(const Utterance& u);

/// Segment a parsed corpus document into a MemoryStore. Packing is greedy
/// and never splits an utterance; chunks never cross session boundaries.
/// Throws SchemaError / IngestError on malformed input.
MemoryStore ingest(const nlohmann::json& corpus_doc, std::size_t chunk_budget = 200);

/// Convenience: read + parse a corpus JSON file, then ingest.
MemoryStore ingest_file(const std::string& path, std::size_t chunk_budget = 200);

/// Persist / restore a store as versioned line-delimited JSON.
/// load_store(save_store(s)) == s field-for-field.
void save_store(const MemoryStore& store, const std::string& path);
MemoryStore load_store(const std::string& path);

}  // namespace memloop
