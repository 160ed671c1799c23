#ifndef MIDTUNE_TRAIN_HPP
#define MIDTUNE_TRAIN_HPP

#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "midtune/checkpoint.hpp"
#include "midtune/corrupt.hpp"
#include "midtune/digest.hpp"
#include "midtune/encoder.hpp"
#include "midtune/errors.hpp"
#include "midtune/linearize.hpp"
#include "midtune/objectives.hpp"
#include "midtune/optim.hpp"
#include "midtune/rng.hpp"

namespace midtune {

struct TrainConfig {
    std::string objective = "triplet";  // "triplet" or "classification"
    std::size_t batch_size = 64;
    std::size_t epochs = 1;
    std::optional<double> lr;       // unset = objective default
    std::optional<double> head_lr;  // unset = default; classifier head only
    std::uint64_t seed = 0;
    bool tied = true;
    double margin = 1.0;
    std::string dataset_path;     // triplet/pair JSONL
    std::string corpus_path;      // sentence records, for anchor text lookup
    std::string vocab_path;
    std::string checkpoint_path;  // written at each epoch end
    std::string metrics_path;     // CSV step,epoch,loss,wall_ms
    EncoderConfig encoder;        // encoder.vocab_size is filled at load time

    // From-scratch toy encoders want a faster schedule than pre-trained-scale
    // rates; the classification head needs to outpace the encoders to fit
    // within a 1-epoch budget.
    double resolved_lr() const {
        if (lr) return *lr;
        return objective == "classification" ? 3e-3 : 1e-3;
    }
    double resolved_head_lr() const { return head_lr ? *head_lr : 0.05; }

    void validate() const {
        if (objective != "triplet" && objective != "classification")
            throw ConfigError("objective must be \"triplet\" or \"classification\", got \"" +
                              objective + "\"");
        if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
        if (epochs < 1) throw ConfigError("epochs must be >= 1");
        if (lr && *lr < 0.0) throw ConfigError("lr must be >= 0");
        if (head_lr && *head_lr < 0.0) throw ConfigError("head_lr must be >= 0");
        if (margin < 0.0) throw ConfigError("margin must be >= 0");
    }
};

inline nlohmann::ordered_json train_config_to_json(const TrainConfig& c) {
    nlohmann::ordered_json j;
    j["objective"] = c.objective;
    j["batch_size"] = c.batch_size;
    j["epochs"] = c.epochs;
    if (c.lr)
        j["lr"] = *c.lr;
    else
        j["lr"] = nullptr;
    if (c.head_lr)
        j["head_lr"] = *c.head_lr;
    else
        j["head_lr"] = nullptr;
    j["seed"] = c.seed;
    j["tied"] = c.tied;
    j["margin"] = c.margin;
    j["dataset"] = c.dataset_path;
    j["corpus"] = c.corpus_path;
    j["vocab"] = c.vocab_path;
    j["checkpoint"] = c.checkpoint_path;
    j["metrics"] = c.metrics_path;
    j["encoder"] = encoder_config_to_json(c.encoder);
    return j;
}

inline void train_config_merge_json(TrainConfig& c, const nlohmann::ordered_json& j) {
    if (j.contains("objective")) c.objective = j["objective"].get<std::string>();
    if (j.contains("batch_size")) c.batch_size = j["batch_size"].get<std::size_t>();
    if (j.contains("epochs")) c.epochs = j["epochs"].get<std::size_t>();
    if (j.contains("lr") && !j["lr"].is_null()) c.lr = j["lr"].get<double>();
    if (j.contains("head_lr") && !j["head_lr"].is_null()) c.head_lr = j["head_lr"].get<double>();
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("tied")) c.tied = j["tied"].get<bool>();
    if (j.contains("margin")) c.margin = j["margin"].get<double>();
    if (j.contains("dataset")) c.dataset_path = j["dataset"].get<std::string>();
    if (j.contains("corpus")) c.corpus_path = j["corpus"].get<std::string>();
    if (j.contains("vocab")) c.vocab_path = j["vocab"].get<std::string>();
    if (j.contains("checkpoint")) c.checkpoint_path = j["checkpoint"].get<std::string>();
    if (j.contains("metrics")) c.metrics_path = j["metrics"].get<std::string>();
    if (j.contains("encoder")) {
        const auto& e = j["encoder"];
        if (e.contains("d_model")) c.encoder.d_model = e["d_model"].get<std::size_t>();
        if (e.contains("n_heads")) c.encoder.n_heads = e["n_heads"].get<std::size_t>();
        if (e.contains("n_layers")) c.encoder.n_layers = e["n_layers"].get<std::size_t>();
        if (e.contains("d_ff")) c.encoder.d_ff = e["d_ff"].get<std::size_t>();
        if (e.contains("max_len")) c.encoder.max_len = e["max_len"].get<std::size_t>();
    }
}

// Either a pair corpus or a triplet corpus, plus the sentence texts the
// examples reference.
struct TrainData {
    std::vector<PairExample> pairs;
    std::vector<TripletExample> triplets;
    std::map<std::string, std::string> sentence_text;  // id -> raw text

    const std::string& text_of(const std::string& id) const {
        auto it = sentence_text.find(id);
        if (it == sentence_text.end())
            throw ValidationError("dataset references unknown sentence id: " + id);
        return it->second;
    }
};

struct TrainReport {
    std::vector<double> step_losses;
    double wall_ms = 0.0;
    std::uint64_t checkpoint_digest = 0;
    TrainConfig config;
};

// Index batches for one epoch: a seeded permutation of 0..n-1 derived from
// (seed, epoch), chunked; the final short batch is kept.
inline std::vector<std::vector<std::size_t>> shuffle_batches(std::size_t n, std::size_t batch_size,
                                                             std::uint64_t seed,
                                                             std::size_t epoch) {
    if (n < 1) throw ConfigError("shuffle_batches: empty corpus");
    if (batch_size < 1) throw ConfigError("shuffle_batches: batch_size must be >= 1");
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    Rng rng = Rng(seed).derive(epoch);
    rng.shuffle(perm);
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t start = 0; start < n; start += batch_size) {
        std::size_t end = std::min(n, start + batch_size);
        batches.emplace_back(perm.begin() + static_cast<std::ptrdiff_t>(start),
                             perm.begin() + static_cast<std::ptrdiff_t>(end));
    }
    return batches;
}

// ----------------------------------------------------------------------
// Checkpoint sidecar: JSON next to the binary parameter table, recording the
// encoder config, tying, and payload digest.

inline void save_model(const std::string& path, const DualEncoder& model) {
    save_params(path, model.params);
    nlohmann::ordered_json sidecar;
    sidecar["config"] = encoder_config_to_json(model.config);
    sidecar["tied"] = model.tied;
    sidecar["params_digest"] = digest_hex(params_digest(model.params));
    std::ofstream out(path + ".json", std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint sidecar: " + path + ".json");
    out << sidecar.dump(2) << '\n';
}

struct LoadedModel {
    DualEncoder model;
    std::optional<ClassifierHead> head;
};

inline LoadedModel load_model(const std::string& path) {
    std::ifstream side_in(path + ".json", std::ios::binary);
    if (!side_in) throw IoError("cannot read checkpoint sidecar: " + path + ".json");
    nlohmann::ordered_json sidecar = nlohmann::ordered_json::parse(side_in);
    LoadedModel out;
    out.model.config = encoder_config_from_json(sidecar.at("config"));
    out.model.tied = sidecar.at("tied").get<bool>();
    ParamMap params = load_params(path);
    auto w = params.find("cls_head.weight");
    auto b = params.find("cls_head.bias");
    if (w != params.end() && b != params.end()) {
        ClassifierHead head;
        head.weight = w->second;
        head.bias = b->second;
        out.head = head;
        params.erase(w);
        params.erase(b);
    }
    out.model.params = std::move(params);
    return out;
}

// E1 parameters only (the mid-tuned sentence encoder), for downstream
// embedding and evaluation. include_e2 keeps the form encoder too. For a
// tied model both sides are the same parameter set, so the file does not
// depend on which side was asked for.
inline void export_sentence_encoder(const DualEncoder& model, const std::string& path,
                                    bool include_e2 = false) {
    DualEncoder exported;
    exported.config = model.config;
    exported.tied = model.tied;
    if (model.tied) {
        exported.params = model.params;
    } else {
        for (const auto& [name, p] : model.params) {
            if (name.rfind("e1.", 0) == 0 || (include_e2 && name.rfind("e2.", 0) == 0))
                exported.params.emplace(name, p);
        }
    }
    save_model(path, exported);
}

// ----------------------------------------------------------------------
// The mid-tuning loop.

namespace detail {

struct EncodedTriplet {
    EncodedInput anchor, positive, negative;
};

struct EncodedPair {
    EncodedInput sentence, form;
    int label;
};

}  // namespace detail

// Mid-tunes `model` (and, for classification, `head`) in place. Batches are
// reshuffled each epoch from (seed, epoch); the batch loss is the arithmetic
// mean of per-example losses; a checkpoint is written at the end of every
// epoch when checkpoint_path is set. Throws DivergenceError on the first
// non-finite batch loss.
inline TrainReport run_midtune(const TrainConfig& config, const TrainData& data, DualEncoder& model,
                           const Vocabulary& vocab, ClassifierHead* head = nullptr) {
    config.validate();
    bool is_triplet = config.objective == "triplet";
    if (is_triplet && data.triplets.empty())
        throw ConfigError("objective is triplet but the dataset holds no triplet examples");
    if (!is_triplet && data.pairs.empty())
        throw ConfigError("objective is classification but the dataset holds no pair examples");
    if (!vocab.contains(tokens::kSentenceMarker) || !vocab.contains(tokens::kFormMarker))
        throw ConfigError("vocabulary is missing the input marker tokens");

    auto t_start = std::chrono::steady_clock::now();
    std::size_t max_len = model.config.max_len;

    // Token ids are fixed for the whole run; encode once. Pad positions are
    // provably inert (see the pad-invariance tests), so sequences stay at
    // natural length.
    std::vector<detail::EncodedTriplet> triplets;
    std::vector<detail::EncodedPair> pairs;
    if (is_triplet) {
        triplets.reserve(data.triplets.size());
        for (const TripletExample& ex : data.triplets) {
            detail::EncodedTriplet enc;
            enc.anchor =
                encode_unpadded(linearize_sentence(data.text_of(ex.sentence_id)), vocab, max_len);
            enc.positive = encode_unpadded(linearize_form(ex.positive), vocab, max_len);
            enc.negative = encode_unpadded(linearize_form(ex.negative), vocab, max_len);
            triplets.push_back(std::move(enc));
        }
    } else {
        pairs.reserve(data.pairs.size());
        for (const PairExample& ex : data.pairs) {
            detail::EncodedPair enc;
            enc.sentence =
                encode_unpadded(linearize_sentence(data.text_of(ex.sentence_id)), vocab, max_len);
            enc.form = encode_unpadded(linearize_form(ex.form), vocab, max_len);
            enc.label = ex.label;
            pairs.push_back(std::move(enc));
        }
        if (head == nullptr)
            throw ConfigError("classification objective needs a classifier head");
    }

    TripletConfig triplet_cfg{config.margin};
    AdamState opt;
    opt.lr = config.resolved_lr();
    AdamState head_opt;
    head_opt.lr = config.resolved_head_lr();

    ParamMap trainable = model.params;
    ParamMap head_params;
    if (!is_triplet) {
        head_params.emplace("cls_head.weight", head->weight);
        head_params.emplace("cls_head.bias", head->bias);
    }

    std::ofstream metrics;
    if (!config.metrics_path.empty()) {
        metrics.open(config.metrics_path, std::ios::binary);
        if (!metrics) throw IoError("cannot write metrics file: " + config.metrics_path);
        metrics << "step,epoch,loss,wall_ms\n";
    }

    TrainReport report;
    report.config = config;
    std::size_t n = is_triplet ? triplets.size() : pairs.size();
    std::size_t step = 0;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        auto batches = shuffle_batches(n, config.batch_size, config.seed, epoch);
        for (const auto& batch : batches) {
            Tensor total;
            for (std::size_t idx : batch) {
                Tensor loss;
                if (is_triplet) {
                    const auto& ex = triplets[idx];
                    Tensor s = encode_sequence(model, Side::E1, ex.anchor);
                    Tensor rp = encode_sequence(model, Side::E2, ex.positive);
                    Tensor rn = encode_sequence(model, Side::E2, ex.negative);
                    loss = triplet_loss(s, rp, rn, triplet_cfg);
                } else {
                    const auto& ex = pairs[idx];
                    Tensor s = encode_sequence(model, Side::E1, ex.sentence);
                    Tensor r = encode_sequence(model, Side::E2, ex.form);
                    loss = bce_loss(classifier_logit(s, r, *head), ex.label);
                }
                total = total.defined() ? add(total, loss) : loss;
            }
            Tensor batch_loss = scale(total, 1.0 / static_cast<double>(batch.size()));
            ++step;
            double loss_value = batch_loss.value();
            if (!std::isfinite(loss_value))
                throw DivergenceError("non-finite training loss; last good checkpoint: " +
                                          (epoch > 0 && !config.checkpoint_path.empty()
                                               ? config.checkpoint_path
                                               : std::string("none")),
                                      step);
            backward(batch_loss);
            adam_step(trainable, opt);
            if (!head_params.empty()) adam_step(head_params, head_opt);
            report.step_losses.push_back(loss_value);
            if (metrics.is_open()) {
                double wall = std::chrono::duration<double, std::milli>(
                                  std::chrono::steady_clock::now() - t_start)
                                  .count();
                metrics << step << ',' << epoch << ',';
                metrics.precision(17);
                metrics << loss_value << ',';
                metrics.precision(3);
                metrics << std::fixed << wall << "\n";
                metrics.unsetf(std::ios::fixed);
            }
        }
        if (!config.checkpoint_path.empty()) {
            DualEncoder snapshot;
            snapshot.config = model.config;
            snapshot.tied = model.tied;
            snapshot.params = trainable;
            for (const auto& [name, p] : head_params) snapshot.params.emplace(name, p);
            save_model(config.checkpoint_path, snapshot);
        }
    }

    report.wall_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t_start)
            .count();
    if (!config.checkpoint_path.empty())
        report.checkpoint_digest = digest_file(config.checkpoint_path);
    return report;
}

// ----------------------------------------------------------------------
// Dataset / corpus file loaders shared by the CLI and the evaluation kit.

inline std::vector<SentenceRecord> load_corpus_jsonl(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read corpus: " + path);
    std::vector<SentenceRecord> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            out.push_back(parse_jsonl_record(line));
        } catch (const Error& e) {
            throw ValidationError(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    for (std::size_t i = 0; i < out.size(); ++i)
        for (std::size_t j = i + 1; j < out.size(); ++j)
            if (out[i].sentence_id == out[j].sentence_id)
                throw ValidationError("duplicate sentence id in " + path + ": " +
                                      out[i].sentence_id);
    return out;
}

inline void save_corpus_jsonl(const std::string& path, const std::vector<SentenceRecord>& recs) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write corpus: " + path);
    for (const SentenceRecord& r : recs) out << serialize_record(r) << '\n';
}

inline TrainData load_train_data(const TrainConfig& config) {
    TrainData data;
    for (const SentenceRecord& rec : load_corpus_jsonl(config.corpus_path))
        data.sentence_text.emplace(rec.sentence_id, rec.text);
    std::ifstream in(config.dataset_path, std::ios::binary);
    if (!in) throw IoError("cannot read dataset: " + config.dataset_path);
    std::string line;
    std::size_t line_no = 0;
    bool is_triplet = config.objective == "triplet";
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            if (is_triplet)
                data.triplets.push_back(parse_triplet_example(line));
            else
                data.pairs.push_back(parse_pair_example(line));
        } catch (const SchemaError& e) {
            throw ConfigError("dataset " + config.dataset_path + " does not match objective \"" +
                              config.objective + "\" at line " + std::to_string(line_no) + ": " +
                              e.what());
        } catch (const Error& e) {
            throw ValidationError(config.dataset_path + ":" + std::to_string(line_no) + ": " +
                                  e.what());
        }
    }
    return data;
}

}  // namespace midtune

#endif  // MIDTUNE_TRAIN_HPP
