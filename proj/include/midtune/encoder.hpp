#ifndef MIDTUNE_ENCODER_HPP
#define MIDTUNE_ENCODER_HPP

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "midtune/errors.hpp"
#include "midtune/linearize.hpp"
#include "midtune/optim.hpp"
#include "midtune/rng.hpp"
#include "midtune/tensor.hpp"

namespace midtune {

struct EncoderConfig {
    std::size_t vocab_size = 0;
    std::size_t d_model = 64;
    std::size_t n_heads = 4;
    std::size_t n_layers = 2;
    std::size_t d_ff = 128;
    std::size_t max_len = 128;
    std::uint64_t seed = 0;

    void validate() const {
        if (vocab_size < 1 || d_model < 1 || n_heads < 1 || n_layers < 1 || d_ff < 1)
            throw ConfigError("encoder sizes must all be >= 1");
        if (d_model % n_heads != 0)
            throw ConfigError("d_model (" + std::to_string(d_model) +
                              ") must be divisible by n_heads (" + std::to_string(n_heads) + ")");
        if (max_len < 2) throw ConfigError("max_len must be >= 2");
    }

    bool operator==(const EncoderConfig&) const = default;
};

inline nlohmann::ordered_json encoder_config_to_json(const EncoderConfig& c) {
    return {{"vocab_size", c.vocab_size}, {"d_model", c.d_model}, {"n_heads", c.n_heads},
            {"n_layers", c.n_layers},     {"d_ff", c.d_ff},       {"max_len", c.max_len},
            {"seed", c.seed}};
}

inline EncoderConfig encoder_config_from_json(const nlohmann::ordered_json& j) {
    EncoderConfig c;
    c.vocab_size = j.at("vocab_size").get<std::size_t>();
    c.d_model = j.at("d_model").get<std::size_t>();
    c.n_heads = j.at("n_heads").get<std::size_t>();
    c.n_layers = j.at("n_layers").get<std::size_t>();
    c.d_ff = j.at("d_ff").get<std::size_t>();
    c.max_len = j.at("max_len").get<std::size_t>();
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
}

// Which half of the dual encoder to run: E1 reads sentences, E2 reads
// linearized semantic forms. When the encoders are weight-tied the two sides
// share one parameter set and the distinction only matters for the leading
// marker token.
enum class Side { E1, E2 };

struct DualEncoder {
    EncoderConfig config;
    bool tied = true;
    ParamMap params;

    std::string prefix(Side side) const {
        if (tied) return "enc.";
        return side == Side::E1 ? "e1." : "e2.";
    }

    const Tensor& param(Side side, const std::string& name) const {
        auto it = params.find(prefix(side) + name);
        if (it == params.end())
            throw ConfigError("missing encoder parameter: " + prefix(side) + name);
        return it->second;
    }
};

// ----------------------------------------------------------------------
// Initialization. Weight matrices (including the token embedding) are drawn
// uniformly from (-1/sqrt(d_model), +1/sqrt(d_model)); layernorm gains start
// at 1 and all biases at 0. Parameters are created in a fixed order from a
// seeded stream, so the same config and seed reproduce the same model bit
// for bit.

namespace detail {

inline Tensor init_uniform(std::vector<std::size_t> shape, double bound, Rng& rng) {
    std::vector<double> v(shape_numel(shape));
    for (double& x : v) x = rng.uniform(-bound, bound);
    return Tensor(std::move(shape), std::move(v), /*requires_grad=*/true);
}

inline Tensor init_const(std::vector<std::size_t> shape, double value) {
    std::vector<double> v(shape_numel(shape), value);
    return Tensor(std::move(shape), std::move(v), /*requires_grad=*/true);
}

inline void init_encoder_side(ParamMap& params, const std::string& prefix,
                              const EncoderConfig& cfg, Rng& rng) {
    double bound = 1.0 / std::sqrt(static_cast<double>(cfg.d_model));
    std::size_t d = cfg.d_model;
    std::size_t dh = cfg.d_model / cfg.n_heads;
    params.emplace(prefix + "tok_embed", init_uniform({cfg.vocab_size, d}, bound, rng));
    for (std::size_t l = 0; l < cfg.n_layers; ++l) {
        std::string lp = prefix + "layer" + std::to_string(l) + ".";
        params.emplace(lp + "attn.norm.gain", init_const({d}, 1.0));
        params.emplace(lp + "attn.norm.bias", init_const({d}, 0.0));
        for (std::size_t h = 0; h < cfg.n_heads; ++h) {
            std::string hp = lp + "attn.head" + std::to_string(h) + ".";
            params.emplace(hp + "wq", init_uniform({d, dh}, bound, rng));
            params.emplace(hp + "wk", init_uniform({d, dh}, bound, rng));
            params.emplace(hp + "wv", init_uniform({d, dh}, bound, rng));
            params.emplace(hp + "bq", init_const({dh}, 0.0));
            params.emplace(hp + "bk", init_const({dh}, 0.0));
            params.emplace(hp + "bv", init_const({dh}, 0.0));
        }
        params.emplace(lp + "attn.wo", init_uniform({d, d}, bound, rng));
        params.emplace(lp + "attn.bo", init_const({d}, 0.0));
        params.emplace(lp + "ffn.norm.gain", init_const({d}, 1.0));
        params.emplace(lp + "ffn.norm.bias", init_const({d}, 0.0));
        params.emplace(lp + "ffn.w1", init_uniform({d, cfg.d_ff}, bound, rng));
        params.emplace(lp + "ffn.b1", init_const({cfg.d_ff}, 0.0));
        params.emplace(lp + "ffn.w2", init_uniform({cfg.d_ff, d}, bound, rng));
        params.emplace(lp + "ffn.b2", init_const({d}, 0.0));
    }
    params.emplace(prefix + "final_norm.gain", init_const({d}, 1.0));
    params.emplace(prefix + "final_norm.bias", init_const({d}, 0.0));
}

}  // namespace detail

inline DualEncoder init_model(const EncoderConfig& config, bool tied = true) {
    config.validate();
    DualEncoder model;
    model.config = config;
    model.tied = tied;
    Rng rng(config.seed);
    if (tied) {
        detail::init_encoder_side(model.params, "enc.", config, rng);
    } else {
        detail::init_encoder_side(model.params, "e1.", config, rng);
        detail::init_encoder_side(model.params, "e2.", config, rng);
    }
    return model;
}

// ----------------------------------------------------------------------
// Forward pass

// Sinusoidal position encodings, as a constant (no-grad) tensor.
inline Tensor position_encodings(std::size_t len, std::size_t d_model) {
    std::vector<double> v(len * d_model);
    for (std::size_t pos = 0; pos < len; ++pos) {
        for (std::size_t j = 0; j < d_model; ++j) {
            double exponent = static_cast<double>(j - (j % 2)) / static_cast<double>(d_model);
            double angle = static_cast<double>(pos) / std::pow(10000.0, exponent);
            v[pos * d_model + j] = (j % 2 == 0) ? std::sin(angle) : std::cos(angle);
        }
    }
    return Tensor({len, d_model}, std::move(v));
}

// Additive attention bias: 0 over real key positions, -1e30 over pads. The
// -1e30 entries underflow to exactly zero probability after softmax, which
// is what makes padding bit-invisible.
inline Tensor attention_mask_bias(const std::vector<int>& mask) {
    std::size_t len = mask.size();
    std::vector<double> v(len * len, 0.0);
    for (std::size_t i = 0; i < len; ++i)
        for (std::size_t j = 0; j < len; ++j)
            if (!mask[j]) v[i * len + j] = -1e30;
    return Tensor({len, len}, std::move(v));
}

// Optional hook collecting per-head attention distributions (tests use this
// to check that rows are proper distributions over unmasked positions).
struct AttentionProbe {
    std::vector<Tensor> head_probs;
};

namespace detail {

struct LayerParams {
    Tensor attn_norm_gain, attn_norm_bias;
    std::vector<Tensor> wq, wk, wv, bq, bk, bv;
    Tensor wo, bo;
    Tensor ffn_norm_gain, ffn_norm_bias;
    Tensor w1, b1, w2, b2;
};

inline LayerParams layer_params(const DualEncoder& model, Side side, std::size_t layer) {
    std::string lp = "layer" + std::to_string(layer) + ".";
    LayerParams p;
    p.attn_norm_gain = model.param(side, lp + "attn.norm.gain");
    p.attn_norm_bias = model.param(side, lp + "attn.norm.bias");
    for (std::size_t h = 0; h < model.config.n_heads; ++h) {
        std::string hp = lp + "attn.head" + std::to_string(h) + ".";
        p.wq.push_back(model.param(side, hp + "wq"));
        p.wk.push_back(model.param(side, hp + "wk"));
        p.wv.push_back(model.param(side, hp + "wv"));
        p.bq.push_back(model.param(side, hp + "bq"));
        p.bk.push_back(model.param(side, hp + "bk"));
        p.bv.push_back(model.param(side, hp + "bv"));
    }
    p.wo = model.param(side, lp + "attn.wo");
    p.bo = model.param(side, lp + "attn.bo");
    p.ffn_norm_gain = model.param(side, lp + "ffn.norm.gain");
    p.ffn_norm_bias = model.param(side, lp + "ffn.norm.bias");
    p.w1 = model.param(side, lp + "ffn.w1");
    p.b1 = model.param(side, lp + "ffn.b1");
    p.w2 = model.param(side, lp + "ffn.w2");
    p.b2 = model.param(side, lp + "ffn.b2");
    return p;
}

inline Tensor apply_norm(const Tensor& x, const Tensor& gain, const Tensor& bias) {
    return add_row_broadcast(multiply_row_broadcast(layernorm(x), gain), bias);
}

}  // namespace detail

// One pre-norm transformer block: multi-head scaled dot-product attention
// with residual, then a GELU feed-forward with residual. `mask_bias` is the
// additive key mask from attention_mask_bias().
inline Tensor attention_block(const Tensor& x, const Tensor& mask_bias,
                              const detail::LayerParams& p, std::size_t n_heads,
                              AttentionProbe* probe = nullptr) {
    std::size_t d = x.cols();
    std::size_t dh = d / n_heads;
    double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));

    Tensor h = detail::apply_norm(x, p.attn_norm_gain, p.attn_norm_bias);
    std::vector<Tensor> contexts;
    contexts.reserve(n_heads);
    for (std::size_t head = 0; head < n_heads; ++head) {
        Tensor q = add_row_broadcast(matmul(h, p.wq[head]), p.bq[head]);
        Tensor k = add_row_broadcast(matmul(h, p.wk[head]), p.bk[head]);
        Tensor v = add_row_broadcast(matmul(h, p.wv[head]), p.bv[head]);
        Tensor scores = add(scale(matmul(q, k, /*transpose_b=*/true), inv_sqrt_dh), mask_bias);
        Tensor probs = softmax(scores);
        if (probe) probe->head_probs.push_back(probs);
        contexts.push_back(matmul(probs, v));
    }
    Tensor attn_out = add_row_broadcast(matmul(concat(contexts), p.wo), p.bo);
    Tensor x1 = add(x, attn_out);

    Tensor f = detail::apply_norm(x1, p.ffn_norm_gain, p.ffn_norm_bias);
    Tensor f1 = gelu(add_row_broadcast(matmul(f, p.w1), p.b1));
    Tensor f2 = add_row_broadcast(matmul(f1, p.w2), p.b2);
    return add(x1, f2);
}

// Runs one side of the dual encoder over an encoded input and mean-pools the
// final-layer vectors over real (mask=1) positions only. Returns the pooled
// embedding as a 1-D tensor wired into the autodiff graph.
inline Tensor encode_sequence(const DualEncoder& model, Side side, const EncodedInput& input,
                              AttentionProbe* probe = nullptr) {
    if (input.ids.empty()) throw EmptyInputError("cannot encode an empty input");
    if (input.ids.size() != input.mask.size())
        throw ShapeError("ids and mask lengths differ");
    for (std::size_t id : input.ids)
        if (id >= model.config.vocab_size)
            throw VocabError("token id " + std::to_string(id) + " out of range for vocab size " +
                             std::to_string(model.config.vocab_size));
    std::size_t n_real = input.real_length();
    if (n_real == 0) throw EmptyInputError("input mask selects no tokens");

    std::size_t d = model.config.d_model;
    Tensor x = scale(embedding_lookup(model.param(side, "tok_embed"), input.ids),
                     std::sqrt(static_cast<double>(d)));
    x = add(x, position_encodings(input.ids.size(), d));
    Tensor mask_bias = attention_mask_bias(input.mask);
    for (std::size_t l = 0; l < model.config.n_layers; ++l) {
        x = attention_block(x, mask_bias, detail::layer_params(model, side, l),
                            model.config.n_heads, probe);
    }
    x = detail::apply_norm(x, model.param(side, "final_norm.gain"),
                           model.param(side, "final_norm.bias"));

    std::vector<double> mask_d(input.mask.begin(), input.mask.end());
    Tensor pooled = sum_axis0(multiply_col_broadcast(x, Tensor({mask_d.size()}, mask_d)));
    return scale(pooled, 1.0 / static_cast<double>(n_real));
}

// Pooled embedding as plain values (evaluation paths that do not train).
inline std::vector<double> embed_values(const DualEncoder& model, Side side,
                                        const EncodedInput& input) {
    return encode_sequence(model, side, input).values();
}

}  // namespace midtune

#endif  // MIDTUNE_ENCODER_HPP
