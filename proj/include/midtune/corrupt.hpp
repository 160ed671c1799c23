#ifndef MIDTUNE_CORRUPT_HPP
#define MIDTUNE_CORRUPT_HPP

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "midtune/errors.hpp"
#include "midtune/linearize.hpp"
#include "midtune/rng.hpp"
#include "midtune/semform.hpp"

namespace midtune {

enum class CorruptionKind { DeleteRole, DeleteFiller, SwapFillers, Mismatch };

inline const char* corruption_kind_name(CorruptionKind k) {
    switch (k) {
        case CorruptionKind::DeleteRole: return "delete_role";
        case CorruptionKind::DeleteFiller: return "delete_filler";
        case CorruptionKind::SwapFillers: return "swap_fillers";
        case CorruptionKind::Mismatch: return "mismatch";
    }
    return "?";
}

inline CorruptionKind corruption_kind_from_name(const std::string& name) {
    if (name == "delete_role") return CorruptionKind::DeleteRole;
    if (name == "delete_filler") return CorruptionKind::DeleteFiller;
    if (name == "swap_fillers") return CorruptionKind::SwapFillers;
    if (name == "mismatch") return CorruptionKind::Mismatch;
    throw SchemaError("unknown corruption kind: " + name);
}

inline constexpr std::size_t kNumCorruptionKinds = 4;

// ----------------------------------------------------------------------
// Corruption operations. All are pure: the input form is copied, never
// mutated, and the RNG is the only source of randomness.

// Remove one uniformly chosen role (label and filler together).
inline SemanticForm delete_role(const SemanticForm& form, Rng& rng) {
    if (form.roles.size() < 2)
        throw TooFewRolesError("delete_role needs >= 2 roles, form has " +
                               std::to_string(form.roles.size()));
    SemanticForm out = form;
    out.roles.erase(out.roles.begin() + static_cast<std::ptrdiff_t>(rng.below(out.roles.size())));
    return out;
}

// Keep a uniformly chosen filled role's label but drop its filler.
inline SemanticForm delete_filler(const SemanticForm& form, Rng& rng) {
    std::vector<std::size_t> filled;
    for (std::size_t i = 0; i < form.roles.size(); ++i)
        if (form.roles[i].filler) filled.push_back(i);
    if (filled.empty()) throw NoFillerError("delete_filler needs a role with a present filler");
    SemanticForm out = form;
    out.roles[filled[rng.below(filled.size())]].filler.reset();
    return out;
}

// Exchange the fillers of two roles, chosen uniformly among the pairs of
// filled roles whose fillers differ (equal fillers would reproduce the
// input).
inline SemanticForm swap_fillers(const SemanticForm& form, Rng& rng) {
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t i = 0; i < form.roles.size(); ++i) {
        if (!form.roles[i].filler) continue;
        for (std::size_t j = i + 1; j < form.roles.size(); ++j) {
            if (!form.roles[j].filler) continue;
            if (*form.roles[i].filler != *form.roles[j].filler) pairs.emplace_back(i, j);
        }
    }
    if (pairs.empty())
        throw NotSwappableError("swap_fillers needs two filled roles with distinct fillers");
    auto [a, b] = pairs[rng.below(pairs.size())];
    SemanticForm out = form;
    std::swap(out.roles[a].filler, out.roles[b].filler);
    return out;
}

// Uniformly chosen form from a different sentence.
inline SemanticForm sample_mismatch(const std::vector<SentenceRecord>& corpus,
                                    const std::string& anchor_id, Rng& rng) {
    std::vector<const SemanticForm*> eligible;
    for (const SentenceRecord& rec : corpus) {
        if (rec.sentence_id == anchor_id) continue;
        for (const SemanticForm& f : rec.forms) eligible.push_back(&f);
    }
    if (eligible.empty())
        throw CorpusTooSmallError("no mismatch candidate outside sentence " + anchor_id);
    return *eligible[rng.below(eligible.size())];
}

// ----------------------------------------------------------------------
// Training corpora.

struct PairExample {
    std::string sentence_id;
    SemanticForm form;
    int label = 1;  // 1 = matched, 0 = mismatched
};

struct TripletExample {
    std::string sentence_id;  // anchor
    SemanticForm positive;
    SemanticForm negative;
    CorruptionKind negative_kind = CorruptionKind::Mismatch;
};

using SentenceFormPair = std::pair<std::string, SemanticForm>;

inline std::vector<SentenceFormPair> pairs_from_records(const std::vector<SentenceRecord>& corpus) {
    std::vector<SentenceFormPair> out;
    for (const SentenceRecord& rec : corpus)
        for (const SemanticForm& f : rec.forms) out.emplace_back(rec.sentence_id, f);
    return out;
}

namespace detail {

// Mismatch sampling over a flat pair list; `exclude_structure` additionally
// rejects forms whose linearization equals the anchor's positive (triplet
// corpora must satisfy negative != positive, classification corpora only
// need a foreign sentence id).
inline SemanticForm sample_mismatch_pairs(const std::vector<SentenceFormPair>& pairs,
                                          const std::string& anchor_id,
                                          const SemanticForm* exclude_structure, Rng& rng) {
    std::vector<const SemanticForm*> eligible;
    for (const auto& [sid, form] : pairs) {
        if (sid == anchor_id) continue;
        if (exclude_structure && form.same_structure(*exclude_structure)) continue;
        eligible.push_back(&form);
    }
    if (eligible.empty())
        throw CorpusTooSmallError("no mismatch candidate outside sentence " + anchor_id);
    return *eligible[rng.below(eligible.size())];
}

}  // namespace detail

// Balanced binary corpus: one matched and one mismatched example per input
// pair, shuffled. Exactly |pairs| examples of each label.
inline std::vector<PairExample> build_classification_corpus(
    const std::vector<SentenceFormPair>& pairs, Rng& rng) {
    std::vector<PairExample> out;
    out.reserve(pairs.size() * 2);
    for (const auto& [sid, form] : pairs) out.push_back({sid, form, 1});
    for (const auto& [sid, form] : pairs)
        out.push_back({sid, detail::sample_mismatch_pairs(pairs, sid, nullptr, rng), 0});
    rng.shuffle(out);
    return out;
}

struct CorruptionMix {
    // Weights in CorruptionKind declaration order; uniform by default.
    std::array<double, kNumCorruptionKinds> weights = {1.0, 1.0, 1.0, 1.0};

    CorruptionKind draw(Rng& rng) const {
        double total = 0.0;
        for (double w : weights) {
            if (w < 0.0) throw ConfigError("corruption mix weights must be >= 0");
            total += w;
        }
        if (total <= 0.0) throw ConfigError("corruption mix weights must sum to > 0");
        double u = rng.uniform() * total;
        double acc = 0.0;
        for (std::size_t i = 0; i < weights.size(); ++i) {
            acc += weights[i];
            if (u < acc) return static_cast<CorruptionKind>(i);
        }
        return CorruptionKind::Mismatch;
    }
};

struct TripletCorpusStats {
    std::size_t fallbacks = 0;  // corruption draws that degraded to Mismatch
};

// negatives_per_anchor triplets per pair. A drawn corruption that is not
// applicable to the anchor's form falls back to Mismatch so the corpus size
// stays |pairs| * negatives_per_anchor.
inline std::vector<TripletExample> build_triplet_corpus(const std::vector<SentenceFormPair>& pairs,
                                                        const CorruptionMix& mix,
                                                        std::size_t negatives_per_anchor, Rng& rng,
                                                        TripletCorpusStats* stats = nullptr) {
    if (negatives_per_anchor < 1) throw ConfigError("negatives_per_anchor must be >= 1");
    std::vector<TripletExample> out;
    out.reserve(pairs.size() * negatives_per_anchor);
    for (const auto& [sid, form] : pairs) {
        for (std::size_t k = 0; k < negatives_per_anchor; ++k) {
            CorruptionKind kind = mix.draw(rng);
            TripletExample ex;
            ex.sentence_id = sid;
            ex.positive = form;
            bool fell_back = false;
            try {
                switch (kind) {
                    case CorruptionKind::DeleteRole: ex.negative = delete_role(form, rng); break;
                    case CorruptionKind::DeleteFiller: ex.negative = delete_filler(form, rng); break;
                    case CorruptionKind::SwapFillers: ex.negative = swap_fillers(form, rng); break;
                    case CorruptionKind::Mismatch:
                        ex.negative = detail::sample_mismatch_pairs(pairs, sid, &form, rng);
                        break;
                }
            } catch (const TooFewRolesError&) {
                fell_back = true;
            } catch (const NoFillerError&) {
                fell_back = true;
            } catch (const NotSwappableError&) {
                fell_back = true;
            }
            if (fell_back) {
                kind = CorruptionKind::Mismatch;
                ex.negative = detail::sample_mismatch_pairs(pairs, sid, &form, rng);
                if (stats) ++stats->fallbacks;
            }
            ex.negative_kind = kind;
            out.push_back(std::move(ex));
        }
    }
    return out;
}

// ----------------------------------------------------------------------
// JSONL schemas: {sentence_id, form, label} and
// {anchor_id, positive, negative, kind}. Embedded forms carry source_id.

inline std::string serialize_pair_example(const PairExample& ex) {
    json j;
    j["sentence_id"] = ex.sentence_id;
    j["form"] = form_to_json(ex.form, /*with_source=*/true);
    j["label"] = ex.label;
    return j.dump();
}

inline PairExample parse_pair_example(const std::string& line) {
    json j;
    try {
        j = json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("malformed JSON: ") + e.what(), e.byte);
    }
    PairExample ex;
    ex.sentence_id = detail::need_key(j, "sentence_id", "pair example").get<std::string>();
    ex.form = form_from_json(detail::need_key(j, "form", "pair example"), ex.sentence_id);
    ex.label = detail::need_key(j, "label", "pair example").get<int>();
    if (ex.label != 0 && ex.label != 1)
        throw ValidationError("pair label must be 0 or 1, got " + std::to_string(ex.label));
    return ex;
}

inline std::string serialize_triplet_example(const TripletExample& ex) {
    json j;
    j["anchor_id"] = ex.sentence_id;
    j["positive"] = form_to_json(ex.positive, /*with_source=*/true);
    j["negative"] = form_to_json(ex.negative, /*with_source=*/true);
    j["kind"] = corruption_kind_name(ex.negative_kind);
    return j.dump();
}

inline TripletExample parse_triplet_example(const std::string& line) {
    json j;
    try {
        j = json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("malformed JSON: ") + e.what(), e.byte);
    }
    TripletExample ex;
    ex.sentence_id = detail::need_key(j, "anchor_id", "triplet example").get<std::string>();
    ex.positive = form_from_json(detail::need_key(j, "positive", "triplet example"), ex.sentence_id);
    ex.negative = form_from_json(detail::need_key(j, "negative", "triplet example"), "");
    ex.negative_kind =
        corruption_kind_from_name(detail::need_key(j, "kind", "triplet example").get<std::string>());
    return ex;
}

}  // namespace midtune

#endif  // MIDTUNE_CORRUPT_HPP
