#ifndef MIDTUNE_LINEARIZE_HPP
#define MIDTUNE_LINEARIZE_HPP

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <fstream>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "midtune/errors.hpp"
#include "midtune/semform.hpp"

namespace midtune {

// Reserved vocabulary slots. Markers lead every sequence so the (possibly
// weight-tied) encoders can tell sentences from semantic forms apart.
namespace tokens {
inline constexpr std::size_t kPadId = 0;
inline constexpr std::size_t kUnkId = 1;
inline constexpr std::size_t kSentenceMarkerId = 2;
inline constexpr std::size_t kFormMarkerId = 3;
inline constexpr const char* kPad = "_PAD_";
inline constexpr const char* kUnk = "_UNK_";
inline constexpr const char* kSentenceMarker = "_EN_";
inline constexpr const char* kFormMarker = "_SRLMR_";
inline constexpr const char* kFrameSep = ":";
inline constexpr const char* kRoleEq = "=";
inline constexpr const char* kRoleSep = "|";
inline constexpr const char* kEmptyFiller = "\xe2\x88\x85";  // U+2205
inline const std::vector<std::string>& reserved() {
    static const std::vector<std::string> r = {kPad,      kUnk,    kSentenceMarker, kFormMarker,
                                               kFrameSep, kRoleEq, kRoleSep,        kEmptyFiller};
    return r;
}
}  // namespace tokens

namespace detail {

inline std::string lower_ascii(const std::string& s) {
    std::string out = s;
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

inline bool is_ascii_punct(unsigned char c) { return c < 0x80 && std::ispunct(c); }

}  // namespace detail

// Lowercasing whitespace+punctuation tokenizer. ASCII punctuation marks
// become single-character tokens; bytes >= 0x80 are treated as word
// characters so UTF-8 text stays intact.
inline std::vector<std::string> tokenize_text(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    auto flush = [&]() {
        if (!cur.empty()) {
            out.push_back(detail::lower_ascii(cur));
            cur.clear();
        }
    };
    for (unsigned char c : text) {
        if (c < 0x80 && std::isspace(c)) {
            flush();
        } else if (detail::is_ascii_punct(c)) {
            flush();
            out.push_back(std::string(1, static_cast<char>(c)));
        } else {
            cur.push_back(static_cast<char>(c));
        }
    }
    flush();
    return out;
}

inline std::vector<std::string> linearize_sentence(const std::string& text) {
    if (text.empty()) throw EmptyInputError("cannot linearize an empty sentence");
    std::vector<std::string> toks = tokenize_text(text);
    if (toks.empty()) throw EmptyInputError("sentence has no tokens: \"" + text + "\"");
    toks.insert(toks.begin(), tokens::kSentenceMarker);
    return toks;
}

// Grammar: _SRLMR_ FRAME ":" (LABEL "=" FILLER.. "|")* with the last "|"
// dropped and deleted fillers rendered as the empty-filler token. The frame
// name stays a single token (sense suffix included) so PropBank senses
// survive tokenization.
inline std::vector<std::string> linearize_form(const SemanticForm& form) {
    require_valid(form);
    std::vector<std::string> toks = {tokens::kFormMarker, detail::lower_ascii(form.frame_name),
                                     tokens::kFrameSep};
    for (std::size_t i = 0; i < form.roles.size(); ++i) {
        const RoleSlot& r = form.roles[i];
        toks.push_back(detail::lower_ascii(r.label));
        toks.push_back(tokens::kRoleEq);
        if (r.filler) {
            for (const std::string& t : *r.filler) toks.push_back(detail::lower_ascii(t));
        } else {
            toks.push_back(tokens::kEmptyFiller);
        }
        if (i + 1 < form.roles.size()) toks.push_back(tokens::kRoleSep);
    }
    return toks;
}

// ----------------------------------------------------------------------

class Vocabulary {
  public:
    Vocabulary() {
        for (const std::string& t : tokens::reserved()) push(t);
    }

    std::size_t size() const { return id_to_token_.size(); }

    // id for a token, UNK when absent.
    std::size_t lookup(const std::string& token) const {
        auto it = token_to_id_.find(token);
        return it == token_to_id_.end() ? tokens::kUnkId : it->second;
    }

    bool contains(const std::string& token) const { return token_to_id_.count(token) > 0; }

    const std::string& token_of(std::size_t id) const {
        if (id >= id_to_token_.size())
            throw RangeError("token id out of range: " + std::to_string(id));
        return id_to_token_[id];
    }

    void push(const std::string& token) {
        if (token_to_id_.count(token))
            throw ValidationError("duplicate vocabulary token: " + token);
        token_to_id_.emplace(token, id_to_token_.size());
        id_to_token_.push_back(token);
    }

    // One token per line, line number == id.
    void save(const std::string& path) const {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw IoError("cannot write vocabulary file: " + path);
        for (const std::string& t : id_to_token_) out << t << '\n';
    }

    static Vocabulary load(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw IoError("cannot read vocabulary file: " + path);
        Vocabulary v;
        v.token_to_id_.clear();
        v.id_to_token_.clear();
        std::string line;
        while (std::getline(in, line)) v.push(line);
        const auto& res = tokens::reserved();
        if (v.size() < res.size())
            throw SchemaError("vocabulary file too short for reserved tokens: " + path);
        for (std::size_t i = 0; i < res.size(); ++i) {
            if (v.id_to_token_[i] != res[i])
                throw SchemaError("vocabulary file does not start with reserved tokens: " + path);
        }
        return v;
    }

  private:
    std::unordered_map<std::string, std::size_t> token_to_id_;
    std::vector<std::string> id_to_token_;
};

// Reserved tokens first, then tokens with frequency >= min_count ordered by
// (frequency desc, token asc). Fully deterministic.
inline Vocabulary build_vocab(const std::vector<std::vector<std::string>>& corpora,
                              std::size_t min_count = 1) {
    if (min_count < 1) throw ConfigError("min_count must be >= 1");
    std::map<std::string, std::size_t> freq;
    for (const auto& toks : corpora)
        for (const std::string& t : toks) ++freq[t];

    std::vector<std::pair<std::string, std::size_t>> entries;
    Vocabulary vocab;
    for (const auto& [tok, count] : freq) {
        if (count >= min_count && !vocab.contains(tok)) entries.emplace_back(tok, count);
    }
    std::stable_sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    for (const auto& [tok, count] : entries) vocab.push(tok);
    return vocab;
}

// ----------------------------------------------------------------------

struct EncodedInput {
    std::vector<std::size_t> ids;   // length == max_len (or natural length)
    std::vector<int> mask;          // 1 = real token, 0 = pad
    std::size_t marker = 0;         // ids[0], one of the two marker ids

    std::size_t real_length() const {
        std::size_t n = 0;
        for (int m : mask) n += static_cast<std::size_t>(m);
        return n;
    }
};

// Truncate to max_len, then right-pad with PAD. Unknown tokens map to UNK.
inline EncodedInput encode(const std::vector<std::string>& toks, const Vocabulary& vocab,
                           std::size_t max_len) {
    if (max_len < 2) throw ConfigError("max_len must be >= 2");
    if (toks.empty()) throw EmptyInputError("cannot encode an empty token list");
    EncodedInput out;
    std::size_t n = std::min(toks.size(), max_len);
    out.ids.resize(max_len, tokens::kPadId);
    out.mask.resize(max_len, 0);
    for (std::size_t i = 0; i < n; ++i) {
        out.ids[i] = vocab.lookup(toks[i]);
        out.mask[i] = 1;
    }
    out.marker = out.ids[0];
    return out;
}

// Same mapping without padding: length == min(len(toks), max_len). Padding
// never changes the encoder output, so training and evaluation use this form
// to avoid burning time on pad positions.
inline EncodedInput encode_unpadded(const std::vector<std::string>& toks, const Vocabulary& vocab,
                                    std::size_t max_len) {
    if (max_len < 2) throw ConfigError("max_len must be >= 2");
    if (toks.empty()) throw EmptyInputError("cannot encode an empty token list");
    EncodedInput out;
    std::size_t n = std::min(toks.size(), max_len);
    out.ids.resize(n);
    out.mask.assign(n, 1);
    for (std::size_t i = 0; i < n; ++i) out.ids[i] = vocab.lookup(toks[i]);
    out.marker = out.ids[0];
    return out;
}

}  // namespace midtune

#endif  // MIDTUNE_LINEARIZE_HPP
