#ifndef MIDTUNE_RETRIEVAL_HPP
#define MIDTUNE_RETRIEVAL_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "midtune/checkpoint.hpp"
#include "midtune/digest.hpp"
#include "midtune/encoder.hpp"
#include "midtune/errors.hpp"
#include "midtune/linearize.hpp"
#include "midtune/semform.hpp"

namespace midtune {

// Flat store of unit-normalized sentence embeddings. Search is an exact scan
// (a dot product per stored vector, since everything is normalized at insert
// time); at desk scale that is both fast enough and trivially testable
// against the brute-force oracle.
struct EmbeddingIndex {
    std::size_t dim = 0;
    std::uint64_t model_digest = 0;
    std::vector<double> matrix;  // row-major, one unit vector per entry
    std::vector<std::string> ids;
    std::vector<std::string> texts;

    std::size_t size() const { return ids.size(); }

    void insert(const std::string& id, const std::string& text, std::vector<double> vec) {
        if (dim == 0) dim = vec.size();
        if (vec.size() != dim)
            throw ShapeError("index vectors must share a dimension; got " +
                             std::to_string(vec.size()) + " after " + std::to_string(dim));
        double norm2 = 0.0;
        for (double x : vec) norm2 += x * x;
        if (norm2 <= 0.0 || !std::isfinite(norm2))
            throw DegenerateEmbeddingError("zero or non-finite embedding for sentence " + id);
        double inv = 1.0 / std::sqrt(norm2);
        for (double& x : vec) x *= inv;
        matrix.insert(matrix.end(), vec.begin(), vec.end());
        ids.push_back(id);
        texts.push_back(text);
    }
};

struct Neighbor {
    std::string sentence_id;
    std::string text;
    double score = 0.0;  // cosine similarity
    std::size_t index = 0;
};

// Exact top-k by cosine similarity, descending; ties broken by ascending
// insertion order.
inline std::vector<Neighbor> knn_search(const EmbeddingIndex& index,
                                        const std::vector<double>& query, std::size_t k) {
    if (k < 1 || k > index.size())
        throw RangeError("k must be in [1, " + std::to_string(index.size()) + "], got " +
                         std::to_string(k));
    if (query.size() != index.dim)
        throw ShapeError("query dimension " + std::to_string(query.size()) +
                         " does not match index dimension " + std::to_string(index.dim));
    double qnorm2 = 0.0;
    for (double x : query) qnorm2 += x * x;
    if (qnorm2 <= 0.0 || !std::isfinite(qnorm2))
        throw DegenerateEmbeddingError("zero or non-finite query embedding");
    double qinv = 1.0 / std::sqrt(qnorm2);

    std::vector<std::pair<double, std::size_t>> scored(index.size());
    for (std::size_t i = 0; i < index.size(); ++i) {
        const double* row = index.matrix.data() + i * index.dim;
        double dot = 0.0;
        for (std::size_t j = 0; j < index.dim; ++j) dot += row[j] * query[j];
        scored[i] = {dot * qinv, i};
    }
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(k),
                      scored.end(), [](const auto& a, const auto& b) {
                          if (a.first != b.first) return a.first > b.first;
                          return a.second < b.second;
                      });
    std::vector<Neighbor> out;
    out.reserve(k);
    for (std::size_t r = 0; r < k; ++r) {
        auto [score, i] = scored[r];
        out.push_back({index.ids[i], index.texts[i], score, i});
    }
    return out;
}

// Embeds every record's sentence with E1 and stores it. Insertion order is
// corpus order, so the build is deterministic given corpus and checkpoint.
inline EmbeddingIndex build_index(const std::vector<SentenceRecord>& records,
                                  const DualEncoder& model, const Vocabulary& vocab) {
    if (records.empty()) throw EmptyInputError("cannot build an index from an empty corpus");
    EmbeddingIndex index;
    index.dim = model.config.d_model;
    index.model_digest = params_digest(model.params);
    for (const SentenceRecord& rec : records) {
        EncodedInput in =
            encode_unpadded(linearize_sentence(rec.text), vocab, model.config.max_len);
        index.insert(rec.sentence_id, rec.text, embed_values(model, Side::E1, in));
    }
    return index;
}

inline std::vector<Neighbor> knn(const EmbeddingIndex& index, const std::string& query_text,
                                 std::size_t k, const DualEncoder& model,
                                 const Vocabulary& vocab) {
    EncodedInput in =
        encode_unpadded(linearize_sentence(query_text), vocab, model.config.max_len);
    return knn_search(index, embed_values(model, Side::E1, in), k);
}

// ----------------------------------------------------------------------
// Index file format:
//   magic "MTINDEX1" | u64 count | u64 dim | u64 model_digest
//   | count*dim f64 little-endian
// plus a JSONL sidecar (path + ".meta.jsonl") of {"id", "text"} rows.

namespace detail {

inline constexpr char kIndexMagic[8] = {'M', 'T', 'I', 'N', 'D', 'E', 'X', '1'};

}  // namespace detail

inline void save_index(const std::string& path, const EmbeddingIndex& index) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write index: " + path);
    out.write(detail::kIndexMagic, sizeof detail::kIndexMagic);
    std::uint64_t count = index.size(), dim = index.dim, digest = index.model_digest;
    out.write(reinterpret_cast<const char*>(&count), sizeof count);
    out.write(reinterpret_cast<const char*>(&dim), sizeof dim);
    out.write(reinterpret_cast<const char*>(&digest), sizeof digest);
    out.write(reinterpret_cast<const char*>(index.matrix.data()),
              static_cast<std::streamsize>(index.matrix.size() * sizeof(double)));
    if (!out) throw IoError("short write on index: " + path);

    std::ofstream meta(path + ".meta.jsonl", std::ios::binary);
    if (!meta) throw IoError("cannot write index sidecar: " + path + ".meta.jsonl");
    for (std::size_t i = 0; i < index.size(); ++i) {
        json j;
        j["id"] = index.ids[i];
        j["text"] = index.texts[i];
        meta << j.dump() << '\n';
    }
}

inline EmbeddingIndex load_index(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read index: " + path);
    char magic[8];
    if (!in.read(magic, sizeof magic) ||
        std::memcmp(magic, detail::kIndexMagic, sizeof magic) != 0)
        throw IoError("not an index file: " + path);
    std::uint64_t count = 0, dim = 0, digest = 0;
    in.read(reinterpret_cast<char*>(&count), sizeof count);
    in.read(reinterpret_cast<char*>(&dim), sizeof dim);
    in.read(reinterpret_cast<char*>(&digest), sizeof digest);
    if (!in) throw IoError("truncated index header: " + path);
    EmbeddingIndex index;
    index.dim = static_cast<std::size_t>(dim);
    index.model_digest = digest;
    index.matrix.resize(static_cast<std::size_t>(count * dim));
    in.read(reinterpret_cast<char*>(index.matrix.data()),
            static_cast<std::streamsize>(index.matrix.size() * sizeof(double)));
    if (!in) throw IoError("truncated index payload: " + path);

    std::ifstream meta(path + ".meta.jsonl", std::ios::binary);
    if (!meta) throw IoError("cannot read index sidecar: " + path + ".meta.jsonl");
    std::string line;
    while (std::getline(meta, line)) {
        if (line.empty()) continue;
        json j = json::parse(line);
        index.ids.push_back(j.at("id").get<std::string>());
        index.texts.push_back(j.at("text").get<std::string>());
    }
    if (index.ids.size() != count)
        throw IoError("index sidecar row count does not match header: " + path);
    return index;
}

}  // namespace midtune

#endif  // MIDTUNE_RETRIEVAL_HPP
