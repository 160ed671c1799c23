#ifndef MIDTUNE_TESTUTIL_HPP
#define MIDTUNE_TESTUTIL_HPP

#include <filesystem>
#include <string>
#include <vector>

#include "midtune/rng.hpp"
#include "midtune/semform.hpp"

namespace testutil {

// Random valid SemanticForm for property tests: 2-5 roles with unique
// labels, most fillers present (1-3 tokens each).
inline midtune::SemanticForm random_form(midtune::Rng& rng, bool allow_absent_fillers = true) {
    static const std::vector<std::string> labels = {"ARG0",     "ARG1",     "ARG2",
                                                    "ARGM-TMP", "ARGM-LOC", "ARGM-MNR"};
    static const std::vector<std::string> words = {"dog",  "cat",  "ball",  "park", "red",
                                                   "fast", "tree", "house", "song", "road"};
    static const std::vector<std::string> preds = {"chase", "see", "build", "paint", "move"};

    midtune::SemanticForm form;
    std::size_t pred = rng.below(preds.size());
    form.predicate = preds[pred];
    form.frame_name = preds[pred] + ".0" + std::to_string(1 + rng.below(3));
    form.source_sentence_id = "t" + std::to_string(rng.below(100000));
    std::size_t n_roles = 2 + rng.below(4);
    std::vector<std::size_t> label_order(labels.size());
    for (std::size_t i = 0; i < label_order.size(); ++i) label_order[i] = i;
    rng.shuffle(label_order);
    for (std::size_t r = 0; r < n_roles; ++r) {
        midtune::RoleSlot slot;
        slot.label = labels[label_order[r]];
        bool absent = allow_absent_fillers && rng.below(5) == 0;
        if (!absent) {
            std::size_t n_tokens = 1 + rng.below(3);
            std::vector<std::string> filler;
            for (std::size_t t = 0; t < n_tokens; ++t) filler.push_back(words[rng.below(words.size())]);
            slot.filler = filler;
        }
        form.roles.push_back(std::move(slot));
    }
    return form;
}

// Scratch directory fresh for each use, removed on destruction.
class TempDir {
  public:
    explicit TempDir(const std::string& tag) {
        path_ = std::filesystem::temp_directory_path() / ("midtune-test-" + tag);
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    std::string file(const std::string& name) const { return (path_ / name).string(); }
    const std::filesystem::path& path() const { return path_; }

  private:
    std::filesystem::path path_;
};

}  // namespace testutil

#endif  // MIDTUNE_TESTUTIL_HPP
