#include "memloop/corpus.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "memloop/errors.hpp"

namespace memloop {

using nlohmann::json;

std::size_t estimate_tokens(const std::string& text) {
    return (text.size() + 3) / 4;
}

std::string normalize_ws(const std::string& text) {
    std::string out;
    out.reserve(text.size());
    bool in_space = false;
    for (unsigned char c : text) {
        if (std::isspace(c)) {
            in_space = true;
            continue;
        }
        if (in_space && !out.empty()) out.push_back(' ');
        in_space = false;
        out.push_back(static_cast<char>(c));
    }
    return out;
}

std::string render_utterance_line(const Utterance& u) {
    std::string line = u.dia_id + "- " + u.speaker + ": " + u.text;
    if (u.image) {
        const std::string& label = u.image->caption.empty() ? u.image->uri : u.image->caption;
        line += " [image: " + label + "]";
    }
    return line;
}

const std::string& MemoryStore::session_of(std::size_t chunk_index) const {
    for (const auto& [session, range] : session_index) {
        if (chunk_index >= range.lo && chunk_index < range.hi) return session;
    }
    throw Error("chunk index " + std::to_string(chunk_index) + " not covered by any session");
}

namespace {

const json* get_field(const json& obj, const char* key) {
    auto it = obj.find(key);
    return it == obj.end() ? nullptr : &*it;
}

std::string require_string(const json& obj, const char* key, const std::string& path) {
    const json* v = get_field(obj, key);
    if (!v || !v->is_string()) {
        throw SchemaError("corpus schema: " + path + "/" + key + ": expected string");
    }
    return v->get<std::string>();
}

std::optional<std::string> optional_string(const json& obj, const char* key,
                                           const std::string& path) {
    const json* v = get_field(obj, key);
    if (!v || v->is_null()) return std::nullopt;
    if (!v->is_string()) {
        throw SchemaError("corpus schema: " + path + "/" + key + ": expected string");
    }
    return v->get<std::string>();
}

}  // namespace

MemoryStore ingest(const json& corpus_doc, std::size_t chunk_budget) {
    if (chunk_budget < 16) {
        throw Error("chunk_budget must be >= 16, got " + std::to_string(chunk_budget));
    }
    if (!corpus_doc.is_object()) {
        throw SchemaError("corpus schema: /: expected object");
    }
    const json* sessions = get_field(corpus_doc, "sessions");
    if (!sessions || !sessions->is_array()) {
        throw SchemaError("corpus schema: /sessions: expected array");
    }

    MemoryStore store;
    std::vector<std::string> cur_ids;
    std::vector<std::string> cur_lines;
    std::size_t cur_tokens = 0;
    bool cur_cue = false;

    auto flush = [&]() {
        if (cur_ids.empty()) return;
        Chunk c;
        c.index = store.chunks.size();
        c.utterance_ids = std::move(cur_ids);
        std::string text;
        for (std::size_t i = 0; i < cur_lines.size(); ++i) {
            if (i) text += '\n';
            text += cur_lines[i];
        }
        c.text = std::move(text);
        c.token_estimate = cur_tokens;
        c.has_image_cue = cur_cue;
        store.chunks.push_back(std::move(c));
        cur_ids.clear();
        cur_lines.clear();
        cur_tokens = 0;
        cur_cue = false;
    };

    for (std::size_t si = 0; si < sessions->size(); ++si) {
        const std::string spath = "/sessions/" + std::to_string(si);
        const json& sess = (*sessions)[si];
        if (!sess.is_object()) throw SchemaError("corpus schema: " + spath + ": expected object");
        std::string session_id = require_string(sess, "session_id", spath);
        if (session_id.empty()) {
            throw SchemaError("corpus schema: " + spath + "/session_id: expected non-empty string");
        }
        for (const auto& [prev, range] : store.session_index) {
            (void)range;
            if (prev == session_id) {
                throw SchemaError("corpus schema: " + spath + "/session_id: duplicate session '" +
                                  session_id + "'");
            }
        }
        auto datetime = optional_string(sess, "datetime", spath);
        const json* turns = get_field(sess, "turns");
        if (!turns || !turns->is_array()) {
            throw SchemaError("corpus schema: " + spath + "/turns: expected array");
        }

        std::size_t lo = store.chunks.size();
        for (std::size_t ti = 0; ti < turns->size(); ++ti) {
            const std::string tpath = spath + "/turns/" + std::to_string(ti);
            const json& turn = (*turns)[ti];
            if (!turn.is_object()) throw SchemaError("corpus schema: " + tpath + ": expected object");

            Utterance u;
            u.dia_id = require_string(turn, "dia_id", tpath);
            if (u.dia_id.empty()) {
                throw SchemaError("corpus schema: " + tpath + "/dia_id: expected non-empty string");
            }
            u.speaker = require_string(turn, "speaker", tpath);
            u.text = normalize_ws(require_string(turn, "text", tpath));
            if (u.text.empty()) {
                throw SchemaError("corpus schema: " + tpath +
                                  "/text: empty after whitespace normalization");
            }
            u.session = session_id;
            u.timestamp = datetime.value_or("");
            if (auto img = optional_string(turn, "img_url", tpath)) {
                ImageRef ref;
                ref.uri = *img;
                ref.caption = optional_string(turn, "caption", tpath).value_or("");
                u.image = std::move(ref);
            }
            if (store.utterances.count(u.dia_id)) {
                throw IngestError("duplicate dia_id '" + u.dia_id + "'");
            }

            std::string line = render_utterance_line(u);
            std::size_t est = estimate_tokens(line);
            if (!cur_ids.empty() && cur_tokens + est > chunk_budget) flush();
            cur_ids.push_back(u.dia_id);
            cur_lines.push_back(std::move(line));
            cur_tokens += est;
            cur_cue = cur_cue || u.image.has_value();
            store.utterances.emplace(u.dia_id, std::move(u));
        }
        flush();
        store.session_index.emplace_back(session_id,
                                         SessionRange{lo, store.chunks.size()});
    }
    return store;
}

MemoryStore ingest_file(const std::string& path, std::size_t chunk_budget) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open corpus file: " + path);
    json doc = json::parse(in, nullptr, false);
    if (doc.is_discarded()) throw SchemaError("corpus schema: " + path + ": invalid JSON");
    return ingest(doc, chunk_budget);
}

namespace {

constexpr const char* kStoreFormat = "memloop.store";
constexpr int kStoreVersion = 1;

json utterance_to_json(const Utterance& u) {
    json j{{"type", "utterance"},
           {"dia_id", u.dia_id},
           {"speaker", u.speaker},
           {"text", u.text},
           {"session", u.session}};
    if (!u.timestamp.empty()) j["timestamp"] = u.timestamp;
    if (u.image) {
        j["image"] = json{{"uri", u.image->uri},
                          {"caption", u.image->caption},
                          {"max_edge_px", u.image->max_edge_px}};
    }
    return j;
}

Utterance utterance_from_json(const json& j) {
    Utterance u;
    u.dia_id = j.at("dia_id").get<std::string>();
    u.speaker = j.at("speaker").get<std::string>();
    u.text = j.at("text").get<std::string>();
    u.session = j.at("session").get<std::string>();
    u.timestamp = j.value("timestamp", std::string{});
    if (j.contains("image")) {
        ImageRef ref;
        ref.uri = j["image"].at("uri").get<std::string>();
        ref.caption = j["image"].value("caption", std::string{});
        ref.max_edge_px = j["image"].value("max_edge_px", 1024);
        u.image = std::move(ref);
    }
    return u;
}

}  // namespace

void save_store(const MemoryStore& store, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write store file: " + path);

    out << json{{"format", kStoreFormat}, {"version", kStoreVersion}}.dump() << '\n';
    for (const auto& [session, range] : store.session_index) {
        out << json{{"type", "session"}, {"session", session}, {"lo", range.lo}, {"hi", range.hi}}
                   .dump()
            << '\n';
    }
    // Utterances in corpus order (chunk traversal), so diffs follow the text.
    for (const Chunk& c : store.chunks) {
        for (const std::string& id : c.utterance_ids) {
            out << utterance_to_json(store.utterances.at(id)).dump() << '\n';
        }
    }
    for (const Chunk& c : store.chunks) {
        out << json{{"type", "chunk"},
                    {"index", c.index},
                    {"utterance_ids", c.utterance_ids},
                    {"text", c.text},
                    {"token_estimate", c.token_estimate},
                    {"has_image_cue", c.has_image_cue}}
                   .dump()
            << '\n';
    }
    if (!out) throw IoError("write failed: " + path);
}

MemoryStore load_store(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open store file: " + path);

    std::string line;
    if (!std::getline(in, line)) throw IoError("empty store file: " + path);
    json header = json::parse(line, nullptr, false);
    if (header.is_discarded() || !header.is_object() ||
        header.value("format", std::string{}) != kStoreFormat) {
        throw VersionError("not a store file: " + path);
    }
    if (header.value("version", -1) != kStoreVersion) {
        throw VersionError("unsupported store version " +
                           std::to_string(header.value("version", -1)) + " in " + path);
    }

    MemoryStore store;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded()) {
            throw IoError("corrupt store line " + std::to_string(lineno) + " in " + path);
        }
        const std::string type = j.value("type", std::string{});
        if (type == "session") {
            store.session_index.emplace_back(
                j.at("session").get<std::string>(),
                SessionRange{j.at("lo").get<std::size_t>(), j.at("hi").get<std::size_t>()});
        } else if (type == "utterance") {
            Utterance u = utterance_from_json(j);
            store.utterances.emplace(u.dia_id, std::move(u));
        } else if (type == "chunk") {
            Chunk c;
            c.index = j.at("index").get<std::size_t>();
            c.utterance_ids = j.at("utterance_ids").get<std::vector<std::string>>();
            c.text = j.at("text").get<std::string>();
            c.token_estimate = j.at("token_estimate").get<std::size_t>();
            c.has_image_cue = j.at("has_image_cue").get<bool>();
            store.chunks.push_back(std::move(c));
        } else {
            throw IoError("unknown record type '" + type + "' at line " +
                          std::to_string(lineno) + " in " + path);
        }
    }
    return store;
}

}  // namespace memloop
