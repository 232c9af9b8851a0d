#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "memloop/config.hpp"
#include "memloop/corpus.hpp"
#include "memloop/llm.hpp"
#include "memloop/retrieval.hpp"

namespace memloop {

/// Inclusive chunk-index window [lo, hi].
struct WindowSpan {
    std::size_t lo = 0;
    std::size_t hi = 0;

    bool operator==(const WindowSpan&) const = default;
};

/// Output of one filtered view (zoom-in or zoom-out).
struct ViewOutcome {
    std::vector<std::size_t> useful;  // deduplicated, ascending
    std::string missing;
    std::vector<std::size_t> candidates;  // chunks actually shown to the filter
    int dropped_ids = 0;                  // out-of-range / unparseable ids
};

/// Aggregated multi-view perception for one sub-query.
struct PerceptionResult {
    std::vector<std::size_t> zoom_in;
    std::vector<std::size_t> zoom_out;
    std::vector<std::string> visual;  // dia_ids
    std::string missing_information;
    std::vector<std::size_t> raw_candidates;
    int dropped_ids = 0;
    std::vector<std::string> notes;  // soft failures, vision skips
};

/// Top-k retrieval followed by LLM usefulness filtering. Display ids shown
/// to the model are 1-based; out-of-range ids are dropped and counted.
/// Throws PerceptionError on backend or parse failure.
ViewOutcome zoom_in(const RetrievalIndex& index, const MemoryStore& store,
                    const std::string& query, std::size_t k, Backend& backend,
                    double temperature, const std::string& known, const PromptSet& prompts,
                    TokenLedger& ledger);

/// Positional expansion of seed chunks by w on each side, clipped to
/// [0, store_size); overlapping or adjacent spans merge. Sorted by lo.
std::vector<WindowSpan> expand_windows(const std::vector<std::size_t>& seeds, std::size_t w,
                                       std::size_t store_size);

/// Window-level usefulness filtering. Display ids are 0-based; a selected
/// window contributes every chunk index it covers.
ViewOutcome zoom_out(const MemoryStore& store, const std::vector<WindowSpan>& spans,
                     const std::string& query, const std::string& known, Backend& backend,
                     double temperature, const PromptSet& prompts, TokenLedger& ledger);

/// Conditional multimodal grounding over the sessions of the cue chunks.
/// Never throws: missing capability or failure appends a note and yields [].
/// Returned dia_ids all resolve in the store.
std::vector<std::string> visual_ground(const MemoryStore& store,
                                       const std::vector<std::size_t>& cue_chunks,
                                       const std::string& query, const std::string& known,
                                       Backend* backend, const PromptSet& prompts,
                                       TokenLedger& ledger, std::vector<std::string>& notes);

/// The full multi-view pass: zoom-in, window expansion, zoom-out, and — when
/// a selected chunk carries an image cue — visual grounding. Partial view
/// failures yield a partial result; only a failed zoom-in (which starves
/// every other view) propagates as PerceptionError.
PerceptionResult perceive(const std::string& query, const LoopConfig& config,
                          const MemoryStore& store, const RetrievalIndex& index,
                          const BackendSet& backends, const std::string& known,
                          TokenLedger& ledger);

}  // namespace memloop
