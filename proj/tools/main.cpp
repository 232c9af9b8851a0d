#include <CLI11.hpp>
#include <iostream>
#include <optional>

#include "memloop/cli.hpp"
#include "memloop/errors.hpp"
#include "memloop/prompts.hpp"

namespace {

struct Flags {
    std::optional<std::string> config;
    memloop::CliOverrides overrides;
};

void add_common_flags(CLI::App* cmd, Flags& flags) {
    cmd->add_option("--config", flags.config, "Config file (JSON)");
    cmd->add_option("--corpus", flags.overrides.corpus, "Corpus JSON path");
    cmd->add_option("--store", flags.overrides.store, "Store file path");
    cmd->add_option("--index", flags.overrides.index_path, "Index file path");
    cmd->add_option("--k", flags.overrides.k, "Top-k for focal retrieval");
    cmd->add_option("--w", flags.overrides.w, "Adjacent window size");
    cmd->add_option("--j", flags.overrides.j, "Max loop iterations");
    cmd->add_option("--retriever", flags.overrides.retriever, "lexical | embedding");
    cmd->add_option("--backend-profile", flags.overrides.backend_profile,
                    "http | scripted:<script.json>");
    cmd->add_option("--jobs", flags.overrides.jobs, "Parallel eval workers");
    cmd->add_option("--trace-dir", flags.overrides.trace_dir, "Trace output directory");
    cmd->add_option("--report", flags.overrides.report, "Report output path");
    cmd->add_option("--prompt-dir", flags.overrides.prompt_dir, "Prompt template overrides");
    cmd->add_option("--chunk-budget", flags.overrides.chunk_budget,
                    "Token budget per chunk at ingest");
    cmd->add_option("--known-budget", flags.overrides.known_budget,
                    "Token budget for rendered known information");
    cmd->add_option("--queries-num", flags.overrides.queries_num,
                    "New queries requested from the judge");
    cmd->add_flag("--vision,!--no-vision", flags.overrides.vision,
                  "Enable or disable the visual grounding view");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"memloop: iterative memory-reasoning engine over conversational corpora"};
    app.require_subcommand(1);

    Flags flags;
    std::string question;
    std::string items_path;
    std::string prompts_out;

    CLI::App* index = app.add_subcommand("index", "Ingest a corpus and build the search index");
    add_common_flags(index, flags);

    CLI::App* ask = app.add_subcommand("ask", "Answer one question against the indexed store");
    add_common_flags(ask, flags);
    ask->add_option("question", question, "The question to answer")->required();

    CLI::App* eval = app.add_subcommand("eval", "Run an eval items file and write a report");
    add_common_flags(eval, flags);
    eval->add_option("--items", items_path, "Eval items JSON file")->required();

    CLI::App* analyze =
        app.add_subcommand("analyze", "Chunk-distance profile of retrieval misses from traces");
    add_common_flags(analyze, flags);
    analyze->add_option("--items", items_path, "Eval items JSON file with gold evidence")
        ->required();

    CLI::App* prompts = app.add_subcommand("prompts", "Write the built-in prompt templates");
    prompts->add_option("--out", prompts_out, "Output directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (prompts->parsed()) {
            memloop::PromptSet::builtin().dump_dir(prompts_out);
            std::cout << "templates written to " << prompts_out << "\n";
            return memloop::kExitOk;
        }
        memloop::RunConfig cfg = memloop::resolve_config(flags.config, flags.overrides);
        if (index->parsed()) return memloop::cmd_index(cfg);
        if (ask->parsed()) return memloop::cmd_ask(cfg, question);
        if (eval->parsed()) return memloop::cmd_eval(cfg, items_path);
        if (analyze->parsed()) return memloop::cmd_analyze(cfg, items_path);
    } catch (const memloop::BackendError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return memloop::kExitBackendError;
    } catch (const memloop::ScriptError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return memloop::kExitBackendError;
    } catch (const memloop::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return memloop::kExitInputError;
    }
    return memloop::kExitOk;
}
