#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <set>

#include "midtune/evalkit.hpp"
#include "midtune/train.hpp"
#include "testutil.hpp"

using namespace midtune;

TEST_CASE("synthetic corpus covers the slot space") {
    SyntheticSpec spec;
    spec.subjects = {"the dog", "a cat"};
    spec.verbs = {"chased", "found"};
    spec.objects = {"the ball", "a stick"};
    spec.modifiers = {};
    spec.modifier_labels = {};
    spec.n_sentences = 8;
    spec.seed = 1;
    auto corpus = generate_synthetic_corpus(spec);
    REQUIRE(corpus.size() == 8);
    std::set<std::string> texts;
    for (const auto& r : corpus) {
        texts.insert(r.text);
        REQUIRE(r.forms.size() == 1);
        CHECK(validate_form(r.forms[0]).empty());
        CHECK(r.forms[0].roles.size() == 2);
    }
    CHECK(texts.size() == 8);  // all combinations, no repeats

    SECTION("capacity errors") {
        spec.n_sentences = 9;
        CHECK_THROWS_AS(generate_synthetic_corpus(spec), CapacityError);
    }
    SECTION("determinism") {
        spec.n_sentences = 8;
        CHECK(generate_synthetic_corpus(spec) == generate_synthetic_corpus(spec));
        SyntheticSpec other = spec;
        other.seed = 2;
        CHECK(generate_synthetic_corpus(other) != generate_synthetic_corpus(spec));
    }
}

TEST_CASE("synthetic defaults produce modifier roles with matching labels") {
    SyntheticSpec spec = SyntheticSpec::defaults();
    spec.n_sentences = 200;
    spec.seed = 6;
    bool saw_modifier = false, saw_bare = false;
    for (const auto& rec : generate_synthetic_corpus(spec)) {
        const auto& roles = rec.forms[0].roles;
        if (roles.size() == 3) {
            saw_modifier = true;
            CHECK(roles[2].label.rfind("ARGM-", 0) == 0);
        } else {
            saw_bare = true;
            CHECK(roles.size() == 2);
        }
    }
    CHECK(saw_modifier);
    CHECK(saw_bare);
}

// ----------------------------------------------------------------------

TEST_CASE("pearson on exact examples") {
    CHECK(pearson({1, 2, 3}, {2, 4, 6}) == Catch::Approx(1.0).margin(1e-12));
    CHECK(pearson({1, 2, 3}, {6, 4, 2}) == Catch::Approx(-1.0).margin(1e-12));
    // cov = 0.5, sigma_x = sigma_y = 1 over the sample
    CHECK(pearson({1, 2, 3}, {1, 3, 2}) == Catch::Approx(0.5).margin(1e-12));
    CHECK_THROWS_AS(pearson({1, 1, 1}, {1, 2, 3}), DegenerateError);
    CHECK_THROWS_AS(pearson({1}, {1}), DegenerateError);
    CHECK_THROWS_AS(pearson({1, 2}, {1, 2, 3}), ShapeError);
}

TEST_CASE("spearman on exact examples") {
    CHECK(spearman({1, 2, 3}, {10, 20, 30}) == Catch::Approx(1.0).margin(1e-12));
    CHECK(spearman({1, 2, 3}, {-1, 5, 200}) == Catch::Approx(1.0).margin(1e-12));
    // sum d^2 = 2: 1 - 6*2/(3*8) = 0.5
    CHECK(spearman({1, 2, 3}, {1, 3, 2}) == Catch::Approx(0.5).margin(1e-12));
}

TEST_CASE("average ranks handle ties") {
    auto ranks = average_ranks({1, 1, 2});
    CHECK(ranks == std::vector<double>{1.5, 1.5, 3.0});
    // tied input against a strict order, cross-checked against the
    // rank-then-pearson definition
    double got = spearman({1, 1, 2}, {1, 2, 3});
    double expect = pearson({1.5, 1.5, 3.0}, {1, 2, 3});
    CHECK(got == Catch::Approx(expect).margin(1e-15));
}

TEST_CASE("correlation properties on random vectors") {
    Rng rng(71);
    for (int iter = 0; iter < 100; ++iter) {
        std::size_t n = 5 + rng.below(30);
        std::vector<double> x(n), y(n);
        for (std::size_t i = 0; i < n; ++i) {
            x[i] = rng.uniform(-10, 10);
            y[i] = rng.uniform(-10, 10);
        }
        double p = pearson(x, y);
        double s = spearman(x, y);
        CHECK(p == Catch::Approx(pearson(y, x)).margin(1e-12));
        CHECK(s == Catch::Approx(spearman(y, x)).margin(1e-12));

        // positive affine transforms change neither
        double a = rng.uniform(0.1, 5.0), b = rng.uniform(-4, 4);
        std::vector<double> xt(n);
        for (std::size_t i = 0; i < n; ++i) xt[i] = a * x[i] + b;
        CHECK(pearson(xt, y) == Catch::Approx(p).margin(1e-12));
        CHECK(spearman(xt, y) == Catch::Approx(s).margin(1e-12));

        // rank equivalence by definition
        CHECK(s == Catch::Approx(pearson(average_ranks(x), average_ranks(y))).margin(1e-15));
    }
}

// ----------------------------------------------------------------------

TEST_CASE("probe separates linearly separable blobs") {
    Rng rng(72);
    std::vector<std::vector<double>> xs;
    std::vector<int> ys;
    for (int i = 0; i < 120; ++i) {
        int cls = static_cast<int>(rng.below(2));
        double cx = cls == 0 ? -3.0 : 3.0;
        xs.push_back({cx + rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5)});
        ys.push_back(cls);
    }
    ProbeResult res = train_probe(xs, ys, 1);
    CHECK(res.accuracy >= 0.95);
    CHECK(res.fold_accuracies.size() == 5);

    SECTION("embeddings stay frozen") {
        auto copy = xs;
        train_probe(xs, ys, 2);
        CHECK(xs == copy);
    }
}

TEST_CASE("probe on shuffled labels sits at chance") {
    Rng rng(73);
    std::vector<std::vector<double>> xs;
    std::vector<int> ys;
    for (int i = 0; i < 200; ++i) {
        xs.push_back({rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)});
        ys.push_back(static_cast<int>(rng.below(2)));
    }
    ProbeResult res = train_probe(xs, ys, 3);
    CHECK(std::fabs(res.accuracy - 0.5) <= 0.1);
}

TEST_CASE("probe degenerate cases") {
    SECTION("identical embeddings fall back to the majority class") {
        std::vector<std::vector<double>> xs(60, {1.0, 2.0});
        std::vector<int> ys;
        for (int i = 0; i < 60; ++i) ys.push_back(i < 40 ? 1 : 0);  // majority 1 at 2/3
        ProbeResult res = train_probe(xs, ys, 4);
        CHECK(res.accuracy == Catch::Approx(2.0 / 3.0).margin(0.1));
    }
    SECTION("a single class is degenerate") {
        std::vector<std::vector<double>> xs(20, {1.0});
        std::vector<int> ys(20, 1);
        CHECK_THROWS_AS(train_probe(xs, ys, 5), DegenerateError);
    }
}

// ----------------------------------------------------------------------

namespace {

struct EvalFixture {
    std::vector<SentenceRecord> heldout;
    Vocabulary vocab;
    DualEncoder model;

    EvalFixture() {
        SyntheticSpec spec = SyntheticSpec::defaults();
        spec.n_sentences = 30;
        spec.seed = 14;
        heldout = generate_synthetic_corpus(spec);
        std::vector<std::vector<std::string>> token_lists;
        for (const auto& r : heldout) {
            token_lists.push_back(linearize_sentence(r.text));
            for (const auto& f : r.forms) token_lists.push_back(linearize_form(f));
        }
        vocab = build_vocab(token_lists, 1);
        EncoderConfig cfg;
        cfg.vocab_size = vocab.size();
        cfg.d_model = 16;
        cfg.n_heads = 2;
        cfg.n_layers = 1;
        cfg.d_ff = 32;
        cfg.max_len = 24;
        cfg.seed = 9;
        model = init_model(cfg);
    }
};

}  // namespace

TEST_CASE("alignment_report structure") {
    EvalFixture fx;
    Rng rng(15);
    AlignmentReport rep = alignment_report(fx.model, fx.vocab, fx.heldout, rng);
    CHECK(rep.n_pairs == fx.heldout.size());
    CHECK(rep.retrieval_at_1 >= 0.0);
    CHECK(rep.retrieval_at_1 <= 1.0);
    CHECK(rep.mean_dist_positive >= 0.0);
    // every kind applies to the synthetic forms
    for (const char* kind : {"delete_role", "delete_filler", "swap_fillers", "mismatch"}) {
        REQUIRE(rep.mean_dist_negative.count(kind) == 1);
        CHECK(rep.mean_dist_negative.at(kind) >= 0.0);
    }
    nlohmann::ordered_json j = alignment_report_to_json(rep);
    CHECK(j["n_pairs"] == fx.heldout.size());

    SECTION("kinds that never apply are marked absent") {
        // strip every filler so swap_fillers and delete_filler cannot apply
        auto stripped = fx.heldout;
        for (auto& rec : stripped)
            for (auto& f : rec.forms)
                for (auto& role : f.roles) role.filler.reset();
        std::vector<std::vector<std::string>> tl;
        for (const auto& r : stripped) {
            tl.push_back(linearize_sentence(r.text));
            for (const auto& f : r.forms) tl.push_back(linearize_form(f));
        }
        Vocabulary v2 = build_vocab(tl, 1);
        EncoderConfig cfg2 = fx.model.config;
        cfg2.vocab_size = v2.size();
        DualEncoder m2 = init_model(cfg2);
        Rng rng2(16);
        AlignmentReport rep2 = alignment_report(m2, v2, stripped, rng2);
        CHECK(rep2.mean_dist_negative.count("delete_filler") == 0);
        CHECK(rep2.mean_dist_negative.count("swap_fillers") == 0);
        CHECK(rep2.mean_dist_negative.count("delete_role") == 1);
    }
}

TEST_CASE("untrained zero-head classifier sits at exactly one half on balanced pairs") {
    EvalFixture fx;
    Rng rng(17);
    auto pairs = build_classification_corpus(pairs_from_records(fx.heldout), rng);
    std::map<std::string, std::string> texts;
    for (const auto& r : fx.heldout) texts[r.sentence_id] = r.text;
    ClassifierHead head = ClassifierHead::zeros(fx.model.config.d_model);
    CHECK(pair_classification_accuracy(fx.model, head, fx.vocab, pairs, texts) == 0.5);
}

TEST_CASE("probe label builders") {
    SyntheticSpec spec = SyntheticSpec::defaults();
    spec.n_sentences = 60;
    spec.seed = 18;
    auto records = generate_synthetic_corpus(spec);

    SECTION("length labels split at the median") {
        auto labels = length_probe_labels(records);
        REQUIRE(labels.size() == records.size());
        std::size_t ones = 0;
        for (int l : labels) {
            CHECK((l == 0 || l == 1));
            ones += static_cast<std::size_t>(l);
        }
        CHECK(ones > 0);
        CHECK(ones < labels.size());
    }
    SECTION("role-content labels identify the ARG1 filler") {
        auto labels = role_content_probe_labels(records);
        REQUIRE(labels.size() == records.size());
        std::map<std::string, int> seen;
        for (std::size_t i = 0; i < records.size(); ++i) {
            REQUIRE(labels[i] >= 0);
            std::string arg1;
            for (const RoleSlot& r : records[i].forms[0].roles)
                if (r.label == "ARG1") arg1 = detail::join_ws(*r.filler);
            auto it = seen.find(arg1);
            if (it == seen.end())
                seen.emplace(arg1, labels[i]);
            else
                CHECK(it->second == labels[i]);  // same filler, same class
        }
    }
}

TEST_CASE("similarity correlation runs on a synthetic set") {
    EvalFixture fx;
    SimilarityCorrelation corr = similarity_correlation(fx.model, fx.vocab, fx.heldout);
    CHECK(corr.n_pairs == fx.heldout.size() * (fx.heldout.size() - 1) / 2);
    CHECK(std::fabs(corr.pearson_r) <= 1.0);
    CHECK(std::fabs(corr.spearman_r) <= 1.0);
}
