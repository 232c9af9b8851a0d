#pragma once

#include <string>

#include <nlohmann/json.hpp>

#include "memloop/prompts.hpp"

namespace memloop {

/// Knobs of the memory-reasoning loop. Defaults: top-10 focal retrieval,
/// window of 4 chunks each side, at most 8 iterations, deterministic judge.
struct LoopConfig {
    int top_k = 10;
    int window_w = 4;  // 15 suits corpora with widely scattered sessions
    int max_iterations = 8;
    int queries_num = 1;
    double temp_perception = 1.0;
    double temp_judge = 0.0;
    double temp_responder = 1.0;
    bool vision_enabled = true;
    long known_budget = 4000;
    // A chunk whose text matches this pattern counts as carrying an image
    // cue even without an attached ImageRef.
    std::string cue_pattern = "\\[image";
    PromptSet prompts = PromptSet::builtin();

    /// Throws Error when an invariant is violated (k >= 1, j >= 1,
    /// temperatures in [0, 2], ...).
    void validate() const;

    /// Snapshot for trace files; prompt text is omitted.
    nlohmann::json to_json() const;
};

}  // namespace memloop
