// midtune: desk-scale semantic-form mid-tuning pipeline.
//
// Subcommands wire the library into the end-to-end workflow:
//   synth -> vocab -> build-dataset -> midtune -> embed -> knn / eval
// plus `ingest` for external JSONL/CoNLL corpora.
//
// Exit codes: 0 success, 1 usage error, 2 data/validation error,
// 3 numerical divergence during training.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "midtune/corrupt.hpp"
#include "midtune/encoder.hpp"
#include "midtune/errors.hpp"
#include "midtune/evalkit.hpp"
#include "midtune/linearize.hpp"
#include "midtune/manifest.hpp"
#include "midtune/retrieval.hpp"
#include "midtune/semform.hpp"
#include "midtune/train.hpp"

namespace {

using namespace midtune;

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
    return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read file: " + path);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) lines.push_back(line);
    return lines;
}

// All linearized token lists of a corpus (sentences and forms), the input to
// vocabulary construction.
std::vector<std::vector<std::string>> corpus_token_lists(const std::vector<SentenceRecord>& recs) {
    std::vector<std::vector<std::string>> out;
    for (const SentenceRecord& r : recs) {
        out.push_back(linearize_sentence(r.text));
        for (const SemanticForm& f : r.forms) out.push_back(linearize_form(f));
    }
    return out;
}

// ----------------------------------------------------------------------

int cmd_ingest(const std::string& in_path, const std::string& format,
               const std::string& out_path) {
    auto start = Clock::now();
    std::vector<SentenceRecord> records;
    if (format == "jsonl") {
        records = load_corpus_jsonl(in_path);
    } else if (format == "conll") {
        std::vector<std::string> lines = read_lines(in_path);
        std::vector<std::string> block;
        std::size_t block_start = 1, counter = 0;
        auto flush = [&](std::size_t end_line) {
            if (block.empty()) return;
            SentenceRecord rec;
            char idbuf[24];
            std::snprintf(idbuf, sizeof idbuf, "conll-%06zu", counter++);
            rec.sentence_id = idbuf;
            std::string text;
            for (const std::string& l : block) {
                std::string tok = l.substr(0, l.find('\t'));
                if (!text.empty()) text += ' ';
                text += tok;
            }
            rec.text = text;
            rec.forms = parse_conll_block(block, rec.sentence_id, block_start);
            records.push_back(std::move(rec));
            block.clear();
            (void)end_line;
        };
        for (std::size_t i = 0; i < lines.size(); ++i) {
            if (lines[i].empty()) {
                flush(i);
                block_start = i + 2;
            } else {
                if (block.empty()) block_start = i + 1;
                block.push_back(lines[i]);
            }
        }
        flush(lines.size());
    } else {
        throw ConfigError("unknown ingest format: " + format);
    }
    for (const SentenceRecord& rec : records)
        for (const SemanticForm& f : rec.forms) require_valid(f);
    save_corpus_jsonl(out_path, records);

    RunManifest m;
    m.subcommand = "ingest";
    m.config = {{"in", in_path}, {"format", format}, {"out", out_path}};
    m.inputs = {in_path};
    m.outputs = {out_path};
    m.wall_ms = ms_since(start);
    write_manifest(out_path, m);
    std::cout << "ingested " << records.size() << " sentence record(s) -> " << out_path << "\n";
    return 0;
}

int cmd_synth(std::size_t n, std::size_t heldout_n, std::uint64_t seed, const std::string& out,
              const std::string& heldout_out) {
    auto start = Clock::now();
    if (heldout_n > 0 && heldout_out.empty())
        throw ConfigError("--heldout requires --heldout-out");
    SyntheticSpec spec = SyntheticSpec::defaults();
    spec.n_sentences = n + heldout_n;
    spec.seed = seed;
    std::vector<SentenceRecord> all = generate_synthetic_corpus(spec);
    std::vector<SentenceRecord> train(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n));
    save_corpus_jsonl(out, train);

    RunManifest m;
    m.subcommand = "synth";
    m.config = {{"n", n}, {"heldout", heldout_n}, {"seed", seed},
                {"out", out}, {"heldout_out", heldout_out}};
    m.seed = seed;
    m.outputs = {out};
    if (heldout_n > 0) {
        std::vector<SentenceRecord> held(all.begin() + static_cast<std::ptrdiff_t>(n), all.end());
        save_corpus_jsonl(heldout_out, held);
        m.outputs.push_back(heldout_out);
    }
    m.wall_ms = ms_since(start);
    write_manifest(out, m);
    std::cout << "wrote " << n << " training record(s) -> " << out;
    if (heldout_n > 0) std::cout << " and " << heldout_n << " held-out -> " << heldout_out;
    std::cout << "\n";
    return 0;
}

int cmd_vocab(const std::string& corpus_path, const std::string& out, std::size_t min_count) {
    auto start = Clock::now();
    std::vector<SentenceRecord> records = load_corpus_jsonl(corpus_path);
    Vocabulary vocab = build_vocab(corpus_token_lists(records), min_count);
    vocab.save(out);

    RunManifest m;
    m.subcommand = "vocab";
    m.config = {{"corpus", corpus_path}, {"out", out}, {"min_count", min_count}};
    m.inputs = {corpus_path};
    m.outputs = {out};
    m.wall_ms = ms_since(start);
    write_manifest(out, m);
    std::cout << "vocabulary of " << vocab.size() << " tokens -> " << out << "\n";
    return 0;
}

CorruptionMix parse_mix(const std::string& spec) {
    CorruptionMix mix;
    if (spec.empty()) return mix;
    std::istringstream in(spec);
    std::string field;
    std::size_t i = 0;
    while (std::getline(in, field, ',')) {
        if (i >= kNumCorruptionKinds) throw ConfigError("--mix takes exactly 4 weights");
        mix.weights[i++] = std::stod(field);
    }
    if (i != kNumCorruptionKinds) throw ConfigError("--mix takes exactly 4 weights");
    return mix;
}

int cmd_build_dataset(const std::string& corpus_path, const std::string& objective,
                      const std::string& out, std::uint64_t seed, const std::string& mix_spec,
                      std::size_t negatives_per_anchor) {
    auto start = Clock::now();
    std::vector<SentenceRecord> records = load_corpus_jsonl(corpus_path);
    std::vector<SentenceFormPair> pairs = pairs_from_records(records);
    Rng rng(seed);
    std::ofstream outf(out, std::ios::binary);
    if (!outf) throw IoError("cannot write dataset: " + out);
    std::size_t count = 0;
    TripletCorpusStats stats;
    if (objective == "classification") {
        for (const PairExample& ex : build_classification_corpus(pairs, rng)) {
            outf << serialize_pair_example(ex) << '\n';
            ++count;
        }
    } else if (objective == "triplet") {
        CorruptionMix mix = parse_mix(mix_spec);
        for (const TripletExample& ex :
             build_triplet_corpus(pairs, mix, negatives_per_anchor, rng, &stats)) {
            outf << serialize_triplet_example(ex) << '\n';
            ++count;
        }
    } else {
        throw ConfigError("objective must be \"triplet\" or \"classification\", got \"" +
                          objective + "\"");
    }
    outf.close();

    RunManifest m;
    m.subcommand = "build-dataset";
    m.config = {{"corpus", corpus_path},
                {"objective", objective},
                {"out", out},
                {"seed", seed},
                {"mix", mix_spec},
                {"negatives_per_anchor", negatives_per_anchor}};
    m.seed = seed;
    m.inputs = {corpus_path};
    m.outputs = {out};
    m.wall_ms = ms_since(start);
    write_manifest(out, m);
    std::cout << "wrote " << count << " " << objective << " example(s) -> " << out;
    if (stats.fallbacks > 0) std::cout << " (" << stats.fallbacks << " mismatch fallback(s))";
    std::cout << "\n";
    return 0;
}

int cmd_midtune(TrainConfig config, const std::string& export_path) {
    auto start = Clock::now();
    config.validate();
    if (config.dataset_path.empty() || config.corpus_path.empty() || config.vocab_path.empty())
        throw ConfigError("midtune needs --dataset, --corpus and --vocab");
    Vocabulary vocab = Vocabulary::load(config.vocab_path);
    config.encoder.vocab_size = vocab.size();
    config.encoder.seed = config.seed;
    config.encoder.validate();

    TrainData data = load_train_data(config);
    DualEncoder model = init_model(config.encoder, config.tied);
    ClassifierHead head = ClassifierHead::zeros(config.encoder.d_model);
    TrainReport report = run_midtune(config, data, model, vocab,
                                     config.objective == "classification" ? &head : nullptr);
    if (!export_path.empty()) export_sentence_encoder(model, export_path);

    double first = report.step_losses.front(), last = report.step_losses.back();
    std::cout << "trained " << report.step_losses.size() << " step(s); loss " << first << " -> "
              << last << "\n";
    if (!config.checkpoint_path.empty()) {
        RunManifest m;
        m.subcommand = "midtune";
        m.config = train_config_to_json(config);
        m.config["export"] = export_path;
        m.seed = config.seed;
        m.inputs = {config.dataset_path, config.corpus_path, config.vocab_path};
        m.outputs = {config.checkpoint_path};
        if (!config.metrics_path.empty()) m.outputs.push_back(config.metrics_path);
        if (!export_path.empty()) m.outputs.push_back(export_path);
        m.wall_ms = ms_since(start);
        write_manifest(config.checkpoint_path, m);
        std::cout << "checkpoint -> " << config.checkpoint_path << "\n";
    }
    return 0;
}

int cmd_embed(const std::string& corpus_path, const std::string& checkpoint_path,
              const std::string& vocab_path, const std::string& out) {
    auto start = Clock::now();
    std::vector<SentenceRecord> records = load_corpus_jsonl(corpus_path);
    Vocabulary vocab = Vocabulary::load(vocab_path);
    LoadedModel loaded = load_model(checkpoint_path);
    EmbeddingIndex index = build_index(records, loaded.model, vocab);
    save_index(out, index);

    RunManifest m;
    m.subcommand = "embed";
    m.config = {{"corpus", corpus_path}, {"checkpoint", checkpoint_path},
                {"vocab", vocab_path}, {"out", out}};
    m.inputs = {corpus_path, checkpoint_path, vocab_path};
    m.outputs = {out, out + ".meta.jsonl"};
    m.wall_ms = ms_since(start);
    write_manifest(out, m);
    std::cout << "indexed " << index.size() << " sentence(s), d=" << index.dim << " -> " << out
              << "\n";
    return 0;
}

int cmd_knn(const std::string& index_path, const std::string& query, std::size_t k,
            const std::string& checkpoint_path, const std::string& vocab_path) {
    EmbeddingIndex index = load_index(index_path);
    Vocabulary vocab = Vocabulary::load(vocab_path);
    LoadedModel loaded = load_model(checkpoint_path);
    if (index.model_digest != params_digest(loaded.model.params))
        throw ValidationError("index " + index_path +
                              " was built with a different model than " + checkpoint_path);
    std::vector<Neighbor> hits = knn(index, query, k, loaded.model, vocab);
    for (std::size_t r = 0; r < hits.size(); ++r) {
        std::printf("%zu  %.6f  %s\n", r + 1, hits[r].score, hits[r].text.c_str());
    }
    return 0;
}

int cmd_eval(const std::string& heldout_path, const std::string& checkpoint_path,
             const std::string& vocab_path, std::uint64_t seed, const std::string& out,
             const std::string& probe_csv, std::size_t folds) {
    auto start = Clock::now();
    std::vector<SentenceRecord> heldout = load_corpus_jsonl(heldout_path);
    Vocabulary vocab = Vocabulary::load(vocab_path);
    LoadedModel loaded = load_model(checkpoint_path);

    Rng rng(seed);
    AlignmentReport alignment = alignment_report(loaded.model, vocab, heldout, rng);
    SimilarityCorrelation corr = similarity_correlation(loaded.model, vocab, heldout);

    nlohmann::ordered_json report;
    report["alignment"] = alignment_report_to_json(alignment);
    report["similarity"] = {{"pearson", corr.pearson_r},
                            {"spearman", corr.spearman_r},
                            {"n_pairs", corr.n_pairs}};

    std::vector<std::vector<double>> embeddings = embed_records(loaded.model, vocab, heldout);
    ProbeConfig probe_cfg;
    probe_cfg.folds = folds;
    nlohmann::ordered_json probes = nlohmann::ordered_json::object();
    std::vector<std::pair<std::string, ProbeResult>> probe_rows;
    auto run_probe = [&](const std::string& name, const std::vector<int>& labels) {
        std::vector<std::vector<double>> xs;
        std::vector<int> ys;
        for (std::size_t i = 0; i < labels.size(); ++i) {
            if (labels[i] >= 0) {
                xs.push_back(embeddings[i]);
                ys.push_back(labels[i]);
            }
        }
        ProbeResult res = train_probe(xs, ys, Rng(seed).derive(digest_string(name)).seed(),
                                      probe_cfg);
        int n_classes = *std::max_element(ys.begin(), ys.end()) + 1;
        probes[name] = {{"accuracy", res.accuracy},
                        {"chance", 1.0 / n_classes},
                        {"folds", res.fold_accuracies}};
        probe_rows.emplace_back(name, res);
    };
    run_probe("length", length_probe_labels(heldout));
    run_probe("role_content", role_content_probe_labels(heldout));
    report["probes"] = probes;

    if (loaded.head) {
        Rng pair_rng = Rng(seed).derive(1);
        std::vector<PairExample> pairs =
            build_classification_corpus(pairs_from_records(heldout), pair_rng);
        std::map<std::string, std::string> texts;
        for (const SentenceRecord& r : heldout) texts[r.sentence_id] = r.text;
        report["classification_accuracy"] =
            pair_classification_accuracy(loaded.model, *loaded.head, vocab, pairs, texts);
    }
    report["model_digest"] = digest_hex(params_digest(loaded.model.params));
    report["config_digest"] = digest_hex(digest_file(checkpoint_path + ".json"));

    {
        std::ofstream outf(out, std::ios::binary);
        if (!outf) throw IoError("cannot write report: " + out);
        outf << report.dump(2) << '\n';
    }
    if (!probe_csv.empty()) {
        std::ofstream csv(probe_csv, std::ios::binary);
        if (!csv) throw IoError("cannot write probe csv: " + probe_csv);
        csv << "probe,fold,accuracy\n";
        for (const auto& [name, res] : probe_rows) {
            for (std::size_t f = 0; f < res.fold_accuracies.size(); ++f) {
                csv << name << ',' << f << ',';
                csv.precision(17);
                csv << res.fold_accuracies[f] << '\n';
            }
        }
    }

    RunManifest m;
    m.subcommand = "eval";
    m.config = {{"heldout", heldout_path}, {"checkpoint", checkpoint_path},
                {"vocab", vocab_path},     {"seed", seed},
                {"out", out},              {"probe_csv", probe_csv},
                {"folds", folds}};
    m.seed = seed;
    m.inputs = {heldout_path, checkpoint_path, vocab_path};
    m.outputs = {out};
    if (!probe_csv.empty()) m.outputs.push_back(probe_csv);
    m.wall_ms = ms_since(start);
    write_manifest(out, m);
    std::cout << "report -> " << out << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"semantic-form mid-tuning pipeline"};
    app.require_subcommand(1);

    // ingest
    auto* ingest = app.add_subcommand("ingest", "validate and canonicalize a corpus file");
    std::string ingest_in, ingest_format = "jsonl", ingest_out;
    ingest->add_option("--in", ingest_in, "input file")->required();
    ingest->add_option("--format", ingest_format, "jsonl or conll");
    ingest->add_option("--out", ingest_out, "canonical JSONL output")->required();

    // synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic corpus");
    std::size_t synth_n = 500, synth_heldout = 0;
    std::uint64_t synth_seed = 0;
    std::string synth_out, synth_heldout_out;
    synth->add_option("--n", synth_n, "number of training sentences");
    synth->add_option("--heldout", synth_heldout, "additional held-out sentences");
    synth->add_option("--seed", synth_seed, "generator seed");
    synth->add_option("--out", synth_out, "training corpus path")->required();
    synth->add_option("--heldout-out", synth_heldout_out, "held-out corpus path");

    // vocab
    auto* vocab_cmd = app.add_subcommand("vocab", "build a vocabulary from a corpus");
    std::string vocab_corpus, vocab_out;
    std::size_t vocab_min_count = 1;
    vocab_cmd->add_option("--corpus", vocab_corpus, "corpus JSONL")->required();
    vocab_cmd->add_option("--out", vocab_out, "vocabulary file")->required();
    vocab_cmd->add_option("--min-count", vocab_min_count, "minimum token frequency");

    // build-dataset
    auto* build = app.add_subcommand("build-dataset", "build a training dataset");
    std::string build_corpus, build_objective = "triplet", build_out, build_mix;
    std::uint64_t build_seed = 0;
    std::size_t build_npa = 12;
    build->add_option("--corpus", build_corpus, "corpus JSONL")->required();
    build->add_option("--objective", build_objective, "triplet or classification");
    build->add_option("--out", build_out, "dataset JSONL")->required();
    build->add_option("--seed", build_seed, "sampling seed");
    build->add_option("--mix", build_mix,
                      "corruption mix weights: delete_role,delete_filler,swap_fillers,mismatch");
    build->add_option("--negatives-per-anchor", build_npa, "triplets per (sentence, form) pair");

    // midtune
    auto* tune = app.add_subcommand("midtune", "mid-tune the dual encoder");
    TrainConfig tc;
    std::string tune_config_path, tune_export;
    bool tune_untied = false;
    tune->add_option("--config", tune_config_path, "JSON config (flags override)");
    tune->add_option("--objective", tc.objective, "triplet or classification");
    tune->add_option("--dataset", tc.dataset_path, "dataset JSONL");
    tune->add_option("--corpus", tc.corpus_path, "sentence corpus JSONL");
    tune->add_option("--vocab", tc.vocab_path, "vocabulary file");
    tune->add_option("--checkpoint-out", tc.checkpoint_path, "checkpoint output path");
    tune->add_option("--metrics-out", tc.metrics_path, "metrics CSV output path");
    double tune_lr = 0.0, tune_head_lr = 0.0;
    tune->add_option("--batch-size", tc.batch_size, "batch size");
    tune->add_option("--epochs", tc.epochs, "training epochs");
    auto* tune_lr_opt = tune->add_option("--lr", tune_lr, "learning rate (default per objective)");
    auto* tune_head_lr_opt =
        tune->add_option("--head-lr", tune_head_lr, "classifier head learning rate");
    tune->add_option("--seed", tc.seed, "training seed");
    tune->add_option("--margin", tc.margin, "triplet margin");
    tune->add_flag("--untied", tune_untied, "train separate E1/E2 parameter sets");
    tune->add_option("--d-model", tc.encoder.d_model, "model width");
    tune->add_option("--n-heads", tc.encoder.n_heads, "attention heads");
    tune->add_option("--n-layers", tc.encoder.n_layers, "transformer layers");
    tune->add_option("--d-ff", tc.encoder.d_ff, "feed-forward width");
    tune->add_option("--max-len", tc.encoder.max_len, "maximum sequence length");
    tune->add_option("--export", tune_export, "also export the sentence encoder here");

    // embed
    auto* embed = app.add_subcommand("embed", "embed a corpus into an index");
    std::string embed_corpus, embed_ckpt, embed_vocab, embed_out;
    embed->add_option("--corpus", embed_corpus, "corpus JSONL")->required();
    embed->add_option("--checkpoint", embed_ckpt, "model checkpoint")->required();
    embed->add_option("--vocab", embed_vocab, "vocabulary file")->required();
    embed->add_option("--out", embed_out, "index output path")->required();

    // knn
    auto* knn_cmd = app.add_subcommand("knn", "query an index");
    std::string knn_index, knn_query, knn_ckpt, knn_vocab;
    std::size_t knn_k = 3;
    knn_cmd->add_option("--index", knn_index, "index path")->required();
    knn_cmd->add_option("--query", knn_query, "query sentence")->required();
    knn_cmd->add_option("--k", knn_k, "neighbors to return");
    knn_cmd->add_option("--checkpoint", knn_ckpt, "model checkpoint")->required();
    knn_cmd->add_option("--vocab", knn_vocab, "vocabulary file")->required();

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "alignment report, correlations and probes");
    std::string eval_heldout, eval_ckpt, eval_vocab, eval_out, eval_probe_csv;
    std::uint64_t eval_seed = 0;
    std::size_t eval_folds = 5;
    eval_cmd->add_option("--heldout", eval_heldout, "held-out corpus JSONL")->required();
    eval_cmd->add_option("--checkpoint", eval_ckpt, "model checkpoint")->required();
    eval_cmd->add_option("--vocab", eval_vocab, "vocabulary file")->required();
    eval_cmd->add_option("--seed", eval_seed, "evaluation seed");
    eval_cmd->add_option("--out", eval_out, "report JSON output")->required();
    eval_cmd->add_option("--probe-csv", eval_probe_csv, "probe results CSV");
    eval_cmd->add_option("--folds", eval_folds, "cross-validation folds");

    // A JSON config file provides midtune defaults; explicit flags override.
    // The config is applied before the main parse by pre-scanning argv.
    for (int i = 1; i + 1 < argc; ++i) {
        if (std::string(argv[i]) == "--config") {
            std::ifstream cfg_in(argv[i + 1], std::ios::binary);
            if (cfg_in) {
                try {
                    train_config_merge_json(tc, nlohmann::ordered_json::parse(cfg_in));
                } catch (const nlohmann::json::parse_error& e) {
                    std::cerr << "error: bad config file " << argv[i + 1] << ": " << e.what()
                              << "\n";
                    return 1;
                }
            }
            break;
        }
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_name() == "CallForHelp" || e.get_name() == "CallForAllHelp")
            return app.exit(e);
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    }

    try {
        if (*ingest) return cmd_ingest(ingest_in, ingest_format, ingest_out);
        if (*synth) return cmd_synth(synth_n, synth_heldout, synth_seed, synth_out,
                                     synth_heldout_out);
        if (*vocab_cmd) return cmd_vocab(vocab_corpus, vocab_out, vocab_min_count);
        if (*build)
            return cmd_build_dataset(build_corpus, build_objective, build_out, build_seed,
                                     build_mix, build_npa);
        if (*tune) {
            tc.tied = !tune_untied;
            if (tune_lr_opt->count() > 0) tc.lr = tune_lr;
            if (tune_head_lr_opt->count() > 0) tc.head_lr = tune_head_lr;
            return cmd_midtune(tc, tune_export);
        }
        if (*embed) return cmd_embed(embed_corpus, embed_ckpt, embed_vocab, embed_out);
        if (*knn_cmd) {
            if (knn_k < 1) throw RangeError("--k must be >= 1");
            return cmd_knn(knn_index, knn_query, knn_k, knn_ckpt, knn_vocab);
        }
        if (*eval_cmd)
            return cmd_eval(eval_heldout, eval_ckpt, eval_vocab, eval_seed, eval_out,
                            eval_probe_csv, eval_folds);
    } catch (const DivergenceError& e) {
        std::cerr << "divergence: " << e.what() << "\n";
        return 3;
    } catch (const RangeError& e) {
        // k out of range is flag misuse
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
