#ifndef MIDTUNE_EVALKIT_HPP
#define MIDTUNE_EVALKIT_HPP

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "midtune/corrupt.hpp"
#include "midtune/encoder.hpp"
#include "midtune/errors.hpp"
#include "midtune/linearize.hpp"
#include "midtune/objectives.hpp"
#include "midtune/optim.hpp"
#include "midtune/rng.hpp"
#include "midtune/semform.hpp"
#include "midtune/tensor.hpp"

namespace midtune {

// ----------------------------------------------------------------------
// Synthetic corpus. Each sentence is "SUBJ VERB OBJ [MODIFIER]." and its
// exactly-correct form is built from the same slots, so every record is its
// own ground truth. This stands in for the Wikipedia+SRL corpus at desk
// scale.

struct SyntheticSpec {
    std::size_t n_sentences = 500;
    std::uint64_t seed = 0;
    bool unique = true;
    std::vector<std::string> subjects;
    std::vector<std::string> verbs;
    std::vector<std::string> objects;
    std::vector<std::string> modifiers;
    std::vector<std::string> modifier_labels;  // parallel to modifiers

    static SyntheticSpec defaults() {
        SyntheticSpec s;
        s.subjects = {"the dog",    "the cat",   "a child",     "the teacher",
                      "a farmer",   "the robot", "the artist",  "a doctor",
                      "the musician", "a student", "the chef",  "an engineer"};
        s.verbs = {"chased",  "found",   "painted", "repaired", "carried",
                   "watched", "admired", "dropped", "borrowed", "cleaned"};
        s.objects = {"the ball",   "a book",    "the fence",   "a guitar",
                     "the basket", "a ladder",  "the painting", "a bicycle",
                     "the table",  "a lantern", "the machine", "a letter"};
        s.modifiers = {"yesterday", "quietly", "at noon", "in the garden", "last week", "eagerly"};
        s.modifier_labels = {"ARGM-TMP", "ARGM-MNR", "ARGM-TMP",
                             "ARGM-LOC", "ARGM-TMP", "ARGM-MNR"};
        return s;
    }

    std::size_t capacity() const {
        return subjects.size() * verbs.size() * objects.size() * (modifiers.size() + 1);
    }
};

inline std::vector<SentenceRecord> generate_synthetic_corpus(const SyntheticSpec& spec) {
    if (spec.subjects.empty() || spec.verbs.empty() || spec.objects.empty())
        throw ConfigError("synthetic slot vocabularies must be non-empty");
    if (spec.modifiers.size() != spec.modifier_labels.size())
        throw ConfigError("modifiers and modifier_labels must be parallel");
    if (spec.unique && spec.n_sentences > spec.capacity())
        throw CapacityError("requested " + std::to_string(spec.n_sentences) +
                            " unique sentences but the slot space holds only " +
                            std::to_string(spec.capacity()));

    Rng rng(spec.seed);
    std::set<std::array<std::size_t, 4>> used;
    std::vector<SentenceRecord> out;
    out.reserve(spec.n_sentences);
    while (out.size() < spec.n_sentences) {
        std::array<std::size_t, 4> combo = {rng.below(spec.subjects.size()),
                                            rng.below(spec.verbs.size()),
                                            rng.below(spec.objects.size()),
                                            rng.below(spec.modifiers.size() + 1)};
        if (spec.unique && !used.insert(combo).second) continue;

        const std::string& subj = spec.subjects[combo[0]];
        const std::string& verb = spec.verbs[combo[1]];
        const std::string& obj = spec.objects[combo[2]];
        bool has_mod = combo[3] < spec.modifiers.size();

        std::string text = subj + " " + verb + " " + obj;
        if (has_mod) text += " " + spec.modifiers[combo[3]];
        text += ".";
        text[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(text[0])));

        SemanticForm form;
        form.frame_name = verb + ".01";
        form.predicate = verb;
        form.roles.push_back({"ARG0", detail::split_ws(subj)});
        form.roles.push_back({"ARG1", detail::split_ws(obj)});
        if (has_mod)
            form.roles.push_back(
                {spec.modifier_labels[combo[3]], detail::split_ws(spec.modifiers[combo[3]])});

        SentenceRecord rec;
        char idbuf[16];
        std::snprintf(idbuf, sizeof idbuf, "syn-%06zu", out.size());
        rec.sentence_id = idbuf;
        form.source_sentence_id = rec.sentence_id;
        rec.text = std::move(text);
        rec.forms.push_back(std::move(form));
        out.push_back(std::move(rec));
    }
    return out;
}

// ----------------------------------------------------------------------
// Correlation metrics.

inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size())
        throw ShapeError("pearson: length mismatch " + std::to_string(x.size()) + " vs " +
                         std::to_string(y.size()));
    std::size_t n = x.size();
    if (n < 2) throw DegenerateError("pearson needs at least 2 points");
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) throw DegenerateError("pearson: zero variance input");
    return sxy / std::sqrt(sxx * syy);
}

// Average ranks, 1-based; ties share the mean of the positions they occupy.
inline std::vector<double> average_ranks(const std::vector<double>& x) {
    std::size_t n = x.size();
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (x[a] != x[b]) return x[a] < x[b];
        return a < b;
    });
    std::vector<double> ranks(n, 0.0);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && x[order[j + 1]] == x[order[i]]) ++j;
        double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
        i = j + 1;
    }
    return ranks;
}

inline double spearman(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size())
        throw ShapeError("spearman: length mismatch " + std::to_string(x.size()) + " vs " +
                         std::to_string(y.size()));
    return pearson(average_ranks(x), average_ranks(y));
}

// ----------------------------------------------------------------------
// Linear probe over frozen embeddings: k-fold cross-validated softmax
// regression trained with Adam. The embedding matrix is read-only here; no
// gradient ever reaches the encoder.

struct ProbeConfig {
    std::size_t folds = 5;
    std::size_t steps = 300;
    double lr = 0.1;
};

struct ProbeResult {
    double accuracy = 0.0;                 // micro average over all points
    std::vector<double> fold_accuracies;
};

namespace detail {

inline std::size_t argmax_row(const std::vector<double>& v, std::size_t row, std::size_t cols) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < cols; ++j)
        if (v[row * cols + j] > v[row * cols + best]) best = j;
    return best;
}

}  // namespace detail

inline ProbeResult train_probe(const std::vector<std::vector<double>>& embeddings,
                               const std::vector<int>& labels, std::uint64_t seed,
                               const ProbeConfig& cfg = {}) {
    if (embeddings.size() != labels.size())
        throw ShapeError("train_probe: embedding/label count mismatch");
    std::size_t n = embeddings.size();
    if (n < cfg.folds) throw DegenerateError("train_probe: fewer points than folds");
    std::set<int> classes(labels.begin(), labels.end());
    if (classes.size() < 2) throw DegenerateError("train_probe needs at least 2 classes");
    int max_label = *classes.rbegin();
    if (*classes.begin() < 0) throw ConfigError("labels must be non-negative");
    std::size_t n_classes = static_cast<std::size_t>(max_label) + 1;
    std::size_t d = embeddings[0].size();

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng(seed);
    rng.shuffle(order);

    ProbeResult result;
    std::size_t correct_total = 0;
    for (std::size_t fold = 0; fold < cfg.folds; ++fold) {
        std::vector<std::size_t> train_idx, test_idx;
        for (std::size_t i = 0; i < n; ++i)
            (i % cfg.folds == fold ? test_idx : train_idx).push_back(order[i]);

        // Full-batch softmax regression; weights start at zero, so the fit
        // is deterministic in (seed, fold) alone.
        std::size_t m = train_idx.size();
        std::vector<double> xs(m * d);
        std::vector<double> onehot(m * n_classes, 0.0);
        for (std::size_t i = 0; i < m; ++i) {
            const auto& e = embeddings[train_idx[i]];
            if (e.size() != d) throw ShapeError("train_probe: ragged embedding matrix");
            std::copy(e.begin(), e.end(), xs.begin() + static_cast<std::ptrdiff_t>(i * d));
            onehot[i * n_classes + static_cast<std::size_t>(labels[train_idx[i]])] = 1.0;
        }
        Tensor x({m, d}, xs);
        Tensor target({m, n_classes}, onehot);
        ParamMap params;
        params.emplace("w", Tensor::zeros({d, n_classes}, true));
        params.emplace("b", Tensor::zeros({n_classes}, true));
        AdamState opt;
        opt.lr = cfg.lr;
        for (std::size_t step = 0; step < cfg.steps; ++step) {
            Tensor logits = add_row_broadcast(matmul(x, params.at("w")), params.at("b"));
            Tensor ce = scale(sum(multiply(target, log(softmax(logits)))),
                              -1.0 / static_cast<double>(m));
            backward(ce);
            adam_step(params, opt);
        }

        std::size_t correct = 0;
        for (std::size_t idx : test_idx) {
            const auto& e = embeddings[idx];
            std::vector<double> logits(n_classes, 0.0);
            const auto& w = params.at("w").values();
            const auto& b = params.at("b").values();
            for (std::size_t c = 0; c < n_classes; ++c) {
                double acc = b[c];
                for (std::size_t j = 0; j < d; ++j) acc += e[j] * w[j * n_classes + c];
                logits[c] = acc;
            }
            std::size_t pred = detail::argmax_row(logits, 0, n_classes);
            if (pred == static_cast<std::size_t>(labels[idx])) ++correct;
        }
        correct_total += correct;
        result.fold_accuracies.push_back(
            test_idx.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(test_idx.size()));
    }
    result.accuracy = static_cast<double>(correct_total) / static_cast<double>(n);
    return result;
}

// ----------------------------------------------------------------------
// Alignment diagnostics.

struct AlignmentReport {
    std::size_t n_pairs = 0;
    double mean_dist_positive = 0.0;
    // Kind name -> mean squared distance to that kind of negative; a kind is
    // absent when no held-out form supported it.
    std::map<std::string, double> mean_dist_negative;
    double retrieval_at_1 = 0.0;
};

namespace detail {

inline double sq_dist(const std::vector<double>& a, const std::vector<double>& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
    return acc;
}

}  // namespace detail

// Distances use the squared Euclidean form, matching the triplet objective.
// retrieval@1 ranks every held-out form for every held-out sentence.
inline AlignmentReport alignment_report(const DualEncoder& model, const Vocabulary& vocab,
                                        const std::vector<SentenceRecord>& heldout, Rng& rng) {
    std::vector<SentenceFormPair> pool = pairs_from_records(heldout);
    if (pool.empty()) throw EmptyInputError("held-out corpus has no (sentence, form) pairs");

    std::size_t max_len = model.config.max_len;
    std::vector<std::vector<double>> sent_emb(pool.size());
    std::vector<std::vector<double>> form_emb(pool.size());
    std::map<std::string, const std::string*> text_by_id;
    for (const SentenceRecord& r : heldout) text_by_id.emplace(r.sentence_id, &r.text);
    for (std::size_t i = 0; i < pool.size(); ++i) {
        const auto& [sid, form] = pool[i];
        sent_emb[i] = embed_values(
            model, Side::E1, encode_unpadded(linearize_sentence(*text_by_id.at(sid)), vocab, max_len));
        form_emb[i] = embed_values(model, Side::E2,
                                   encode_unpadded(linearize_form(form), vocab, max_len));
    }

    AlignmentReport report;
    report.n_pairs = pool.size();
    double pos_sum = 0.0;
    std::map<std::string, std::pair<double, std::size_t>> neg_acc;  // sum, count
    std::size_t hits = 0;
    for (std::size_t i = 0; i < pool.size(); ++i) {
        const auto& [sid, form] = pool[i];
        pos_sum += detail::sq_dist(sent_emb[i], form_emb[i]);

        auto add_negative = [&](CorruptionKind kind) {
            SemanticForm neg;
            try {
                switch (kind) {
                    case CorruptionKind::DeleteRole: neg = delete_role(form, rng); break;
                    case CorruptionKind::DeleteFiller: neg = delete_filler(form, rng); break;
                    case CorruptionKind::SwapFillers: neg = swap_fillers(form, rng); break;
                    case CorruptionKind::Mismatch: neg = sample_mismatch(heldout, sid, rng); break;
                }
            } catch (const Error&) {
                return;  // kind not applicable to this form
            }
            std::vector<double> e = embed_values(
                model, Side::E2, encode_unpadded(linearize_form(neg), vocab, max_len));
            auto& [sum, count] = neg_acc[corruption_kind_name(kind)];
            sum += detail::sq_dist(sent_emb[i], e);
            ++count;
        };
        add_negative(CorruptionKind::DeleteRole);
        add_negative(CorruptionKind::DeleteFiller);
        add_negative(CorruptionKind::SwapFillers);
        add_negative(CorruptionKind::Mismatch);

        std::size_t best = 0;
        double best_d = detail::sq_dist(sent_emb[i], form_emb[0]);
        for (std::size_t j = 1; j < pool.size(); ++j) {
            double dj = detail::sq_dist(sent_emb[i], form_emb[j]);
            if (dj < best_d) {
                best_d = dj;
                best = j;
            }
        }
        if (best == i) ++hits;
    }
    report.mean_dist_positive = pos_sum / static_cast<double>(pool.size());
    for (const auto& [kind, acc] : neg_acc)
        report.mean_dist_negative[kind] = acc.first / static_cast<double>(acc.second);
    report.retrieval_at_1 = static_cast<double>(hits) / static_cast<double>(pool.size());
    return report;
}

inline nlohmann::ordered_json alignment_report_to_json(const AlignmentReport& r) {
    nlohmann::ordered_json j;
    j["n_pairs"] = r.n_pairs;
    j["mean_dist_positive"] = r.mean_dist_positive;
    j["mean_dist_negative"] = nlohmann::ordered_json::object();
    for (const auto& [kind, d] : r.mean_dist_negative) j["mean_dist_negative"][kind] = d;
    j["retrieval_at_1"] = r.retrieval_at_1;
    return j;
}

// Accuracy of the sigmoid pair classifier over labeled pair examples
// (prediction = logit > 0). `texts` maps sentence ids to raw text.
inline double pair_classification_accuracy(const DualEncoder& model, const ClassifierHead& head,
                                           const Vocabulary& vocab,
                                           const std::vector<PairExample>& examples,
                                           const std::map<std::string, std::string>& texts) {
    if (examples.empty()) throw EmptyInputError("no pair examples to evaluate");
    std::size_t max_len = model.config.max_len;
    std::size_t correct = 0;
    for (const PairExample& ex : examples) {
        auto it = texts.find(ex.sentence_id);
        if (it == texts.end())
            throw ValidationError("pair example references unknown sentence id: " + ex.sentence_id);
        Tensor s = encode_sequence(model, Side::E1,
                                   encode_unpadded(linearize_sentence(it->second), vocab, max_len));
        Tensor r = encode_sequence(model, Side::E2,
                                   encode_unpadded(linearize_form(ex.form), vocab, max_len));
        int pred = classifier_logit(s, r, head).value() > 0.0 ? 1 : 0;
        if (pred == ex.label) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(examples.size());
}

// ----------------------------------------------------------------------
// Probe label builders for the synthetic corpus.

// Token-count buckets split at the median (strictly-above goes to class 1).
inline std::vector<int> length_probe_labels(const std::vector<SentenceRecord>& records) {
    std::vector<double> lengths;
    lengths.reserve(records.size());
    for (const SentenceRecord& r : records)
        lengths.push_back(static_cast<double>(tokenize_text(r.text).size()));
    std::vector<double> sorted = lengths;
    std::sort(sorted.begin(), sorted.end());
    double median = sorted[sorted.size() / 2];
    std::vector<int> labels;
    labels.reserve(records.size());
    for (double len : lengths) labels.push_back(len > median ? 1 : 0);
    return labels;
}

// Which ARG1 filler the sentence's first form carries, as a class id over
// the distinct fillers present (sorted for determinism). -1 when absent.
inline std::vector<int> role_content_probe_labels(const std::vector<SentenceRecord>& records) {
    auto arg1_of = [](const SentenceRecord& r) -> std::string {
        for (const SemanticForm& f : r.forms)
            for (const RoleSlot& slot : f.roles)
                if (slot.label == "ARG1" && slot.filler) return detail::join_ws(*slot.filler);
        return "";
    };
    std::set<std::string> distinct;
    for (const SentenceRecord& r : records) {
        std::string a = arg1_of(r);
        if (!a.empty()) distinct.insert(a);
    }
    std::map<std::string, int> class_of;
    int next = 0;
    for (const std::string& a : distinct) class_of[a] = next++;
    std::vector<int> labels;
    labels.reserve(records.size());
    for (const SentenceRecord& r : records) {
        std::string a = arg1_of(r);
        labels.push_back(a.empty() ? -1 : class_of[a]);
    }
    return labels;
}

// E1 embeddings for a record list, in corpus order.
inline std::vector<std::vector<double>> embed_records(const DualEncoder& model,
                                                      const Vocabulary& vocab,
                                                      const std::vector<SentenceRecord>& records) {
    std::vector<std::vector<double>> out;
    out.reserve(records.size());
    for (const SentenceRecord& r : records)
        out.push_back(embed_values(
            model, Side::E1, encode_unpadded(linearize_sentence(r.text), vocab, model.config.max_len)));
    return out;
}

// ----------------------------------------------------------------------
// Desk-scale similarity correlation: model cosine similarity of sentence
// pairs against a slot-overlap gold similarity (Jaccard over predicate and
// role entries of the first forms).

struct SimilarityCorrelation {
    double pearson_r = 0.0;
    double spearman_r = 0.0;
    std::size_t n_pairs = 0;
};

inline SimilarityCorrelation similarity_correlation(const DualEncoder& model,
                                                    const Vocabulary& vocab,
                                                    const std::vector<SentenceRecord>& records) {
    auto gold_sets = [&](const SentenceRecord& r) {
        std::set<std::string> s;
        for (const SemanticForm& f : r.forms) {
            s.insert("pred:" + f.predicate);
            for (const RoleSlot& slot : f.roles)
                s.insert(slot.label + "=" + (slot.filler ? detail::join_ws(*slot.filler) : ""));
        }
        return s;
    };
    std::vector<std::set<std::string>> sets;
    for (const SentenceRecord& r : records) sets.push_back(gold_sets(r));
    std::vector<std::vector<double>> emb = embed_records(model, vocab, records);

    std::vector<double> gold, sim;
    for (std::size_t i = 0; i < records.size(); ++i) {
        for (std::size_t j = i + 1; j < records.size(); ++j) {
            std::vector<std::string> inter;
            std::set_intersection(sets[i].begin(), sets[i].end(), sets[j].begin(), sets[j].end(),
                                  std::back_inserter(inter));
            std::size_t uni = sets[i].size() + sets[j].size() - inter.size();
            gold.push_back(uni == 0 ? 0.0 : static_cast<double>(inter.size()) /
                                            static_cast<double>(uni));
            double dot = 0.0, na = 0.0, nb = 0.0;
            for (std::size_t k = 0; k < emb[i].size(); ++k) {
                dot += emb[i][k] * emb[j][k];
                na += emb[i][k] * emb[i][k];
                nb += emb[j][k] * emb[j][k];
            }
            sim.push_back(dot / std::sqrt(na * nb));
        }
    }
    SimilarityCorrelation out;
    out.n_pairs = gold.size();
    out.pearson_r = pearson(sim, gold);
    out.spearman_r = spearman(sim, gold);
    return out;
}

}  // namespace midtune

#endif  // MIDTUNE_EVALKIT_HPP
