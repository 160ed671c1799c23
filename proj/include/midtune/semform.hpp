#ifndef MIDTUNE_SEMFORM_HPP
#define MIDTUNE_SEMFORM_HPP

#include <algorithm>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "midtune/errors.hpp"

namespace midtune {

// ordered_json keeps object keys in document order, which we rely on for
// deterministic role ordering.
using json = nlohmann::ordered_json;

// One labeled role of a semantic form. The filler is absent (not empty) when
// a corruption deleted it; it then linearizes as the empty-filler token.
struct RoleSlot {
    std::string label;
    std::optional<std::vector<std::string>> filler;

    bool operator==(const RoleSlot&) const = default;
};

// A structured meaning representation: frame, triggering predicate, and an
// ordered list of labeled roles. PropBank and FrameNet parses both map onto
// this shape; they differ only in the label/frame inventories.
struct SemanticForm {
    std::string frame_name;
    std::string predicate;
    std::vector<RoleSlot> roles;
    std::string source_sentence_id;

    bool operator==(const SemanticForm&) const = default;

    // Structural identity ignoring provenance; used when checking that a
    // corrupted negative really differs from its positive.
    bool same_structure(const SemanticForm& o) const {
        return frame_name == o.frame_name && predicate == o.predicate && roles == o.roles;
    }
};

// One sentence plus every semantic form extracted from it.
struct SentenceRecord {
    std::string sentence_id;
    std::string text;
    std::vector<SemanticForm> forms;

    bool operator==(const SentenceRecord&) const = default;
};

struct Violation {
    std::string invariant;
    std::string path;
};

// ----------------------------------------------------------------------
// Validation

inline std::vector<Violation> validate_form(const SemanticForm& form) {
    std::vector<Violation> out;
    if (form.predicate.empty()) out.push_back({"empty predicate", "predicate"});
    for (std::size_t i = 0; i < form.roles.size(); ++i) {
        const RoleSlot& r = form.roles[i];
        std::string path = "roles[" + std::to_string(i) + "]";
        if (r.label.empty()) out.push_back({"empty role label", path + ".label"});
        for (std::size_t j = 0; j < i; ++j) {
            if (form.roles[j].label == r.label) {
                out.push_back({"duplicate role label", path + ".label"});
                break;
            }
        }
        if (r.filler && (r.filler->empty() ||
                         std::any_of(r.filler->begin(), r.filler->end(),
                                     [](const std::string& t) { return t.empty(); }))) {
            out.push_back({"empty filler token sequence", path + ".filler"});
        }
    }
    return out;
}

inline void require_valid(const SemanticForm& form) {
    auto violations = validate_form(form);
    if (!violations.empty()) {
        throw ValidationError("invalid semantic form: " + violations.front().invariant + " at " +
                              violations.front().path);
    }
}

// ----------------------------------------------------------------------
// JSONL ingestion. One record per line:
//   {"id": "...", "text": "...",
//    "forms": [{"frame": "...", "predicate": "...", "roles": {LABEL: FILLER}}]}
// Role fillers are whitespace-split into token lists; a JSON null filler
// means the filler is absent. Standalone form objects (corruption corpora)
// additionally carry "source_id".

namespace detail {

inline std::vector<std::string> split_ws(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream in(s);
    std::string tok;
    while (in >> tok) out.push_back(tok);
    return out;
}

inline std::string join_ws(const std::vector<std::string>& toks) {
    std::string out;
    for (std::size_t i = 0; i < toks.size(); ++i) {
        if (i) out += ' ';
        out += toks[i];
    }
    return out;
}

inline const json& need_key(const json& obj, const char* key, const char* ctx) {
    auto it = obj.find(key);
    if (it == obj.end())
        throw SchemaError(std::string("missing key \"") + key + "\" in " + ctx);
    return *it;
}

}  // namespace detail

inline SemanticForm form_from_json(const json& j, const std::string& source_id) {
    SemanticForm form;
    form.frame_name = detail::need_key(j, "frame", "form").get<std::string>();
    form.predicate = detail::need_key(j, "predicate", "form").get<std::string>();
    form.source_sentence_id = j.contains("source_id") ? j["source_id"].get<std::string>() : source_id;
    const json& roles = detail::need_key(j, "roles", "form");
    if (!roles.is_object()) throw SchemaError("\"roles\" must be an object");
    for (auto it = roles.begin(); it != roles.end(); ++it) {
        RoleSlot slot;
        slot.label = it.key();
        if (!it.value().is_null()) slot.filler = detail::split_ws(it.value().get<std::string>());
        form.roles.push_back(std::move(slot));
    }
    require_valid(form);
    return form;
}

inline json form_to_json(const SemanticForm& form, bool with_source = false) {
    json j;
    j["frame"] = form.frame_name;
    j["predicate"] = form.predicate;
    json roles = json::object();
    for (const RoleSlot& r : form.roles) {
        if (r.filler)
            roles[r.label] = detail::join_ws(*r.filler);
        else
            roles[r.label] = nullptr;
    }
    j["roles"] = std::move(roles);
    if (with_source) j["source_id"] = form.source_sentence_id;
    return j;
}

inline SentenceRecord parse_jsonl_record(const std::string& line) {
    json j;
    try {
        j = json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("malformed JSON: ") + e.what(), e.byte);
    }
    if (!j.is_object()) throw SchemaError("record line must be a JSON object");
    SentenceRecord rec;
    rec.sentence_id = detail::need_key(j, "id", "record").get<std::string>();
    rec.text = detail::need_key(j, "text", "record").get<std::string>();
    if (rec.text.empty()) throw ValidationError("record text is empty: " + rec.sentence_id);
    const json& forms = detail::need_key(j, "forms", "record");
    if (!forms.is_array()) throw SchemaError("\"forms\" must be an array");
    for (const json& f : forms) rec.forms.push_back(form_from_json(f, rec.sentence_id));
    return rec;
}

inline json record_to_json(const SentenceRecord& rec) {
    json j;
    j["id"] = rec.sentence_id;
    j["text"] = rec.text;
    json forms = json::array();
    for (const SemanticForm& f : rec.forms) forms.push_back(form_to_json(f));
    j["forms"] = std::move(forms);
    return j;
}

inline std::string serialize_record(const SentenceRecord& rec) { return record_to_json(rec).dump(); }

// ----------------------------------------------------------------------
// CoNLL-style SRL column ingestion. Tab-separated lines, one token per line:
// column 0 is the token, every further column is a BIO tag sequence for one
// predicate. B-V/I-V spans mark the predicate itself; other B-X/I-X spans
// become role fillers. A blank line ends the sentence (the caller splits
// blocks; this function takes the lines of a single sentence).

inline std::vector<SemanticForm> parse_conll_block(const std::vector<std::string>& lines,
                                                   const std::string& source_id = "",
                                                   std::size_t first_line_number = 1) {
    std::vector<std::vector<std::string>> rows;
    std::size_t n_cols = 0;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        std::vector<std::string> cols;
        std::string field;
        std::istringstream in(lines[i]);
        while (std::getline(in, field, '\t')) cols.push_back(field);
        if (cols.size() < 2)
            throw SchemaError("expected token plus at least one tag column at line " +
                              std::to_string(first_line_number + i));
        if (n_cols == 0) {
            n_cols = cols.size();
        } else if (cols.size() != n_cols) {
            throw SchemaError("ragged column count at line " +
                              std::to_string(first_line_number + i) + ": expected " +
                              std::to_string(n_cols) + ", got " + std::to_string(cols.size()));
        }
        rows.push_back(std::move(cols));
    }

    std::vector<SemanticForm> forms;
    for (std::size_t col = 1; col < n_cols; ++col) {
        SemanticForm form;
        form.source_sentence_id = source_id;
        std::vector<std::string> pred_tokens;
        std::string open_label;             // label of the span being built
        std::vector<std::string> open_span;
        auto close_span = [&]() {
            if (open_label.empty()) return;
            if (open_label == "V") {
                pred_tokens.insert(pred_tokens.end(), open_span.begin(), open_span.end());
            } else {
                form.roles.push_back({open_label, open_span});
            }
            open_label.clear();
            open_span.clear();
        };
        for (std::size_t i = 0; i < rows.size(); ++i) {
            const std::string& tok = rows[i][0];
            const std::string& tag = rows[i][col];
            std::size_t line_no = first_line_number + i;
            if (tag == "O" || tag.empty()) {
                close_span();
            } else if (tag.rfind("B-", 0) == 0) {
                close_span();
                open_label = tag.substr(2);
                open_span = {tok};
            } else if (tag.rfind("I-", 0) == 0) {
                std::string label = tag.substr(2);
                if (open_label != label)
                    throw TagSequenceError("I-" + label + " tag without open B-" + label + " span",
                                           line_no);
                open_span.push_back(tok);
            } else {
                throw SchemaError("unknown tag \"" + tag + "\" at line " + std::to_string(line_no));
            }
        }
        close_span();
        form.predicate = detail::join_ws(pred_tokens);
        // The column carries no frame inventory, so the predicate doubles as
        // the frame name.
        form.frame_name = form.predicate;
        require_valid(form);
        forms.push_back(std::move(form));
    }
    return forms;
}

}  // namespace midtune

#endif  // MIDTUNE_SEMFORM_HPP
