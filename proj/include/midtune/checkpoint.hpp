#ifndef MIDTUNE_CHECKPOINT_HPP
#define MIDTUNE_CHECKPOINT_HPP

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "midtune/digest.hpp"
#include "midtune/errors.hpp"
#include "midtune/optim.hpp"
#include "midtune/tensor.hpp"

namespace midtune {

// Named-parameter-table checkpoint. Layout (all integers little-endian):
//   magic "MTCKPT1\n" | u64 param_count | u64 payload_digest | payload
// payload, per parameter in name order:
//   u32 name_len | name bytes | u32 ndim | u64 dims[ndim] | f64 values[...]
// The digest is FNV-1a over the payload bytes; loading verifies it, so a
// round trip is bit-exact or fails loudly.

namespace detail {

static_assert(std::endian::native == std::endian::little,
              "checkpoint writer assumes a little-endian host");

inline constexpr char kCheckpointMagic[8] = {'M', 'T', 'C', 'K', 'P', 'T', '1', '\n'};

template <typename T>
inline void put(std::string& buf, T v) {
    char tmp[sizeof(T)];
    std::memcpy(tmp, &v, sizeof(T));
    buf.append(tmp, sizeof(T));
}

template <typename T>
inline T take(const std::string& buf, std::size_t& off) {
    if (off + sizeof(T) > buf.size()) throw IoError("truncated checkpoint payload");
    T v;
    std::memcpy(&v, buf.data() + off, sizeof(T));
    off += sizeof(T);
    return v;
}

}  // namespace detail

inline void save_params(const std::string& path, const ParamMap& params) {
    std::string payload;
    for (const auto& [name, p] : params) {
        detail::put<std::uint32_t>(payload, static_cast<std::uint32_t>(name.size()));
        payload.append(name);
        detail::put<std::uint32_t>(payload, static_cast<std::uint32_t>(p.shape().size()));
        for (std::size_t d : p.shape()) detail::put<std::uint64_t>(payload, d);
        for (double x : p.values()) detail::put<double>(payload, x);
    }
    std::uint64_t digest = digest_string(payload);

    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint: " + path);
    out.write(detail::kCheckpointMagic, sizeof detail::kCheckpointMagic);
    std::uint64_t count = params.size();
    out.write(reinterpret_cast<const char*>(&count), sizeof count);
    out.write(reinterpret_cast<const char*>(&digest), sizeof digest);
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    if (!out) throw IoError("short write on checkpoint: " + path);
}

// The parameters come back marked requires_grad so a loaded model can be
// trained or evaluated directly.
inline ParamMap load_params(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read checkpoint: " + path);
    char magic[8];
    if (!in.read(magic, sizeof magic) ||
        std::memcmp(magic, detail::kCheckpointMagic, sizeof magic) != 0)
        throw IoError("not a checkpoint file: " + path);
    std::uint64_t count = 0, digest = 0;
    in.read(reinterpret_cast<char*>(&count), sizeof count);
    in.read(reinterpret_cast<char*>(&digest), sizeof digest);
    if (!in) throw IoError("truncated checkpoint header: " + path);
    std::string payload((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (digest_string(payload) != digest)
        throw IoError("checkpoint digest mismatch (corrupt file?): " + path);

    ParamMap params;
    std::size_t off = 0;
    for (std::uint64_t k = 0; k < count; ++k) {
        auto name_len = detail::take<std::uint32_t>(payload, off);
        if (off + name_len > payload.size()) throw IoError("truncated checkpoint payload");
        std::string name = payload.substr(off, name_len);
        off += name_len;
        auto ndim = detail::take<std::uint32_t>(payload, off);
        std::vector<std::size_t> shape;
        std::size_t numel = 1;
        for (std::uint32_t d = 0; d < ndim; ++d) {
            shape.push_back(static_cast<std::size_t>(detail::take<std::uint64_t>(payload, off)));
            numel *= shape.back();
        }
        std::vector<double> values(numel);
        for (std::size_t i = 0; i < numel; ++i) values[i] = detail::take<double>(payload, off);
        params.emplace(std::move(name), Tensor(std::move(shape), std::move(values), true));
    }
    if (off != payload.size()) throw IoError("trailing bytes in checkpoint: " + path);
    return params;
}

// Digest of the parameter payload only (what an index records as the model
// identity).
inline std::uint64_t params_digest(const ParamMap& params) {
    Fnv1a h;
    for (const auto& [name, p] : params) {
        h.update(name);
        for (std::size_t d : p.shape()) {
            std::uint64_t v = d;
            h.update(&v, sizeof v);
        }
        h.update(p.values().data(), p.values().size() * sizeof(double));
    }
    return h.value();
}

}  // namespace midtune

#endif  // MIDTUNE_CHECKPOINT_HPP
