#include <catch2/catch_amalgamated.hpp>

#include "midtune/evalkit.hpp"
#include "midtune/semform.hpp"
#include "testutil.hpp"

using namespace midtune;

static const char* kStatueLine =
    R"({"id":"q1","text":"The Statue of Liberty was built in 1875.","forms":[{"frame":"build.01","predicate":"built","roles":{"ARG1":"The Statue of Liberty","ARGM-TMP":"in 1875"}}]})";

TEST_CASE("parse_jsonl_record reads a full record") {
    SentenceRecord rec = parse_jsonl_record(kStatueLine);
    CHECK(rec.sentence_id == "q1");
    CHECK(rec.text == "The Statue of Liberty was built in 1875.");
    REQUIRE(rec.forms.size() == 1);
    const SemanticForm& f = rec.forms[0];
    CHECK(f.frame_name == "build.01");
    CHECK(f.predicate == "built");
    CHECK(f.source_sentence_id == "q1");
    REQUIRE(f.roles.size() == 2);
    CHECK(f.roles[0].label == "ARG1");
    CHECK(*f.roles[0].filler == std::vector<std::string>{"The", "Statue", "of", "Liberty"});
    CHECK(f.roles[1].label == "ARGM-TMP");
    CHECK(*f.roles[1].filler == std::vector<std::string>{"in", "1875"});
}

TEST_CASE("parse_jsonl_record accepts zero forms") {
    SentenceRecord rec = parse_jsonl_record(R"({"id":"e0","text":"X.","forms":[]})");
    CHECK(rec.forms.empty());
}

TEST_CASE("parse_jsonl_record error paths") {
    SECTION("truncated JSON is a ParseError with a byte offset") {
        try {
            parse_jsonl_record(R"({"id":"b","text":"Y.")");
            FAIL("expected ParseError");
        } catch (const ParseError& e) {
            CHECK(e.byte_offset > 0);
        }
    }
    SECTION("missing key is a SchemaError naming the key") {
        try {
            parse_jsonl_record(R"({"id":"a","forms":[]})");
            FAIL("expected SchemaError");
        } catch (const SchemaError& e) {
            CHECK(std::string(e.what()).find("text") != std::string::npos);
        }
    }
    SECTION("empty predicate is a ValidationError") {
        CHECK_THROWS_AS(
            parse_jsonl_record(
                R"({"id":"a","text":"T.","forms":[{"frame":"f","predicate":"","roles":{}}]})"),
            ValidationError);
    }
    SECTION("empty filler string is a ValidationError") {
        CHECK_THROWS_AS(
            parse_jsonl_record(
                R"({"id":"a","text":"T.","forms":[{"frame":"f","predicate":"p","roles":{"ARG0":""}}]})"),
            ValidationError);
    }
    SECTION("roles must be an object") {
        CHECK_THROWS_AS(
            parse_jsonl_record(
                R"({"id":"a","text":"T.","forms":[{"frame":"f","predicate":"p","roles":[]}]})"),
            SchemaError);
    }
}

TEST_CASE("role order follows document order") {
    SentenceRecord rec = parse_jsonl_record(
        R"({"id":"a","text":"T.","forms":[{"frame":"f","predicate":"p","roles":{"ARGM-TMP":"x","ARG0":"y","ARG1":"z"}}]})");
    REQUIRE(rec.forms[0].roles.size() == 3);
    CHECK(rec.forms[0].roles[0].label == "ARGM-TMP");
    CHECK(rec.forms[0].roles[1].label == "ARG0");
    CHECK(rec.forms[0].roles[2].label == "ARG1");
}

TEST_CASE("null filler round-trips as an absent filler") {
    SentenceRecord rec = parse_jsonl_record(
        R"({"id":"a","text":"T.","forms":[{"frame":"f","predicate":"p","roles":{"ARG0":null}}]})");
    CHECK_FALSE(rec.forms[0].roles[0].filler.has_value());
    SentenceRecord again = parse_jsonl_record(serialize_record(rec));
    CHECK(again == rec);
}

// ----------------------------------------------------------------------

TEST_CASE("parse_conll_block decodes BIO spans") {
    std::vector<std::string> lines = {"The\tB-ARG0", "dog\tI-ARG0", "barked\tB-V"};
    std::vector<SemanticForm> forms = parse_conll_block(lines, "s1");
    REQUIRE(forms.size() == 1);
    CHECK(forms[0].predicate == "barked");
    CHECK(forms[0].frame_name == "barked");
    CHECK(forms[0].source_sentence_id == "s1");
    REQUIRE(forms[0].roles.size() == 1);
    CHECK(forms[0].roles[0].label == "ARG0");
    CHECK(*forms[0].roles[0].filler == std::vector<std::string>{"The", "dog"});
}

TEST_CASE("one form per predicate column") {
    std::vector<std::string> lines = {
        "The\tB-ARG0\tO",
        "dog\tI-ARG0\tB-ARG1",
        "barked\tB-V\tO",
        "loudly\tO\tB-V",
    };
    std::vector<SemanticForm> forms = parse_conll_block(lines);
    REQUIRE(forms.size() == 2);
    CHECK(forms[0].predicate == "barked");
    CHECK(forms[1].predicate == "loudly");
    CHECK(forms[1].roles[0].label == "ARG1");
}

TEST_CASE("conll error paths") {
    SECTION("I- without a B- is a TagSequenceError with the line number") {
        std::vector<std::string> lines = {"The\tI-ARG0", "dog\tB-V"};
        try {
            parse_conll_block(lines, "", 10);
            FAIL("expected TagSequenceError");
        } catch (const TagSequenceError& e) {
            CHECK(e.line == 10);
        }
    }
    SECTION("label switch inside a span is a TagSequenceError") {
        std::vector<std::string> lines = {"a\tB-ARG0", "b\tI-ARG1", "c\tB-V"};
        CHECK_THROWS_AS(parse_conll_block(lines), TagSequenceError);
    }
    SECTION("ragged columns are a SchemaError") {
        std::vector<std::string> lines = {"a\tB-V\tO", "b\tO"};
        CHECK_THROWS_AS(parse_conll_block(lines), SchemaError);
    }
    SECTION("unknown tag is a SchemaError") {
        std::vector<std::string> lines = {"a\tQ-ARG0"};
        CHECK_THROWS_AS(parse_conll_block(lines), SchemaError);
    }
    SECTION("no V span leaves an empty predicate, a ValidationError") {
        std::vector<std::string> lines = {"a\tB-ARG0"};
        CHECK_THROWS_AS(parse_conll_block(lines), ValidationError);
    }
}

// ----------------------------------------------------------------------

TEST_CASE("validate_form flags broken invariants") {
    SemanticForm form;
    form.frame_name = "f";
    form.predicate = "p";
    form.roles = {{"ARG0", std::vector<std::string>{"x"}}, {"ARG0", std::vector<std::string>{"y"}}};
    auto violations = validate_form(form);
    REQUIRE(violations.size() == 1);
    CHECK(violations[0].invariant == "duplicate role label");

    form.roles.pop_back();
    CHECK(validate_form(form).empty());

    form.predicate = "";
    violations = validate_form(form);
    REQUIRE(violations.size() == 1);
    CHECK(violations[0].invariant == "empty predicate");
}

TEST_CASE("synthetic records are always valid and round-trip") {
    SyntheticSpec spec = SyntheticSpec::defaults();
    spec.n_sentences = 100;
    spec.seed = 3;
    for (const SentenceRecord& rec : generate_synthetic_corpus(spec)) {
        for (const SemanticForm& f : rec.forms) CHECK(validate_form(f).empty());
        SentenceRecord reparsed = parse_jsonl_record(serialize_record(rec));
        CHECK(reparsed == rec);
    }
}

TEST_CASE("conll form count equals predicate column count") {
    Rng rng(17);
    static const std::vector<std::string> role_labels = {"ARG0", "ARG1", "ARG2", "ARGM-TMP"};
    for (int iter = 0; iter < 50; ++iter) {
        std::size_t n_tokens = 3 + rng.below(8);
        std::size_t n_preds = 1 + rng.below(3);
        std::vector<std::string> lines;
        for (std::size_t t = 0; t < n_tokens; ++t) {
            std::string line = "tok" + std::to_string(t);
            for (std::size_t p = 0; p < n_preds; ++p) {
                if (t == p)
                    line += "\tB-V";
                else if (rng.below(2) == 0)
                    line += "\tB-" + role_labels[rng.below(role_labels.size())];
                else
                    line += "\tO";
            }
            lines.push_back(line);
        }
        try {
            std::vector<SemanticForm> forms = parse_conll_block(lines);
            CHECK(forms.size() == n_preds);
            for (const SemanticForm& f : forms) CHECK(validate_form(f).empty());
        } catch (const ValidationError&) {
            // a random column repeated a B- label; uniqueness, not parsing
        }
    }
}
