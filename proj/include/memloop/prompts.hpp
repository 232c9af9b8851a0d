#pragma once

#include <map>
#include <string>

namespace memloop {

/// The agent prompt templates. Placeholders use {name} syntax; literal
/// braces are written {{ and }}. Unknown placeholders render untouched so
/// user-supplied templates stay lenient.
struct PromptSet {
    std::string zoom_in;
    std::string zoom_out;
    std::string visual;
    std::string judge;
    std::string responder;

    static PromptSet builtin();

    /// Override individual templates from <dir>/{zoom_in,zoom_out,visual,
    /// judge,responder}.txt. Missing files keep the built-in text.
    static PromptSet load_dir(const std::string& dir);

    /// Write the templates as text assets under dir (created if needed).
    void dump_dir(const std::string& dir) const;
};

std::string render_prompt(const std::string& tmpl,
                          const std::map<std::string, std::string>& vars);

}  // namespace memloop
