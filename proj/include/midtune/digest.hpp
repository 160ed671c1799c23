#ifndef MIDTUNE_DIGEST_HPP
#define MIDTUNE_DIGEST_HPP

#include <cstddef>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "midtune/errors.hpp"

namespace midtune {

// 64-bit FNV-1a. Used for checkpoint/index integrity headers and for the
// artifact digests reported in manifests; not a cryptographic hash.
class Fnv1a {
  public:
    void update(const void* data, std::size_t n) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < n; ++i) {
            state_ ^= p[i];
            state_ *= 0x100000001b3ULL;
        }
    }

    void update(const std::string& s) { update(s.data(), s.size()); }

    std::uint64_t value() const { return state_; }

  private:
    std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

inline std::uint64_t digest_bytes(const void* data, std::size_t n) {
    Fnv1a h;
    h.update(data, n);
    return h.value();
}

inline std::uint64_t digest_string(const std::string& s) {
    return digest_bytes(s.data(), s.size());
}

inline std::uint64_t digest_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open file for digest: " + path);
    Fnv1a h;
    char buf[1 << 16];
    while (in.read(buf, sizeof buf) || in.gcount() > 0) {
        h.update(buf, static_cast<std::size_t>(in.gcount()));
        if (!in) break;
    }
    return h.value();
}

inline std::string digest_hex(std::uint64_t d) {
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << d;
    return os.str();
}

}  // namespace midtune

#endif  // MIDTUNE_DIGEST_HPP
