#pragma once

#include <cmath>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace greenleaf {

enum class ErrorKind {
    argument,       // bad value passed by caller
    dimension,      // tensor shape mismatch
    parameter,      // hyperparameter out of range
    configuration,  // invalid model/block configuration
    io,             // filesystem failure
    decode,         // unreadable image or file payload
    dataset,        // empty or inconsistent dataset
    diverged,       // training produced a non-finite loss
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
    ErrorKind kind() const { return kind_; }

private:
    ErrorKind kind_;
};

namespace detail {
inline void concat_into(std::ostringstream&) {}
template <typename T, typename... Rest>
void concat_into(std::ostringstream& os, const T& v, const Rest&... rest) {
    os << v;
    concat_into(os, rest...);
}
} // namespace detail

template <typename... Args>
std::string concat(const Args&... args) {
    std::ostringstream os;
    detail::concat_into(os, args...);
    return os.str();
}

template <typename... Args>
[[noreturn]] void fail(ErrorKind kind, const Args&... args) {
    throw Error(kind, concat(args...));
}

// Deterministic PRNG (xoshiro256** seeded via splitmix64). The standard
// library distributions are implementation-defined, so everything that must
// reproduce bit-exactly across builds (weight init, dropout masks, shuffles,
// augmentation draws) goes through this.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed) {
        std::uint64_t x = seed;
        for (auto& s : state_) s = splitmix64(x);
    }

    std::uint64_t seed() const { return seed_; }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // uniform in [0,1), 53-bit resolution
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    double normal() {
        // Box-Muller, no cached spare so the draw count stays predictable
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
    }

    // unbiased integer in [0, n)
    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t v = next_u64();
        while (v >= limit) v = next_u64();
        return v % n;
    }

    // Child stream keyed on (base seed, stream id); independent of how many
    // draws were already taken from this generator.
    Rng derive(std::uint64_t stream) const {
        std::uint64_t x = seed_ ^ 0x9e3779b97f4a7c15ULL;
        std::uint64_t a = splitmix64(x);
        x ^= stream + 0xbf58476d1ce4e5b9ULL;
        return Rng(a ^ splitmix64(x));
    }

    Rng derive(std::string_view tag) const { return derive(fnv1a(tag)); }

    static std::uint64_t fnv1a(std::string_view s) {
        std::uint64_t h = 0xcbf29ce484222325ULL;
        for (const char ch : s) {
            h ^= static_cast<unsigned char>(ch);
            h *= 0x100000001b3ULL;
        }
        return h;
    }

private:
    static std::uint64_t splitmix64(std::uint64_t& x) {
        x += 0x9e3779b97f4a7c15ULL;
        std::uint64_t z = x;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }
    static std::uint64_t rotl(std::uint64_t v, int k) { return (v << k) | (v >> (64 - k)); }

    std::uint64_t seed_;
    std::uint64_t state_[4];
};

template <typename T>
void shuffle(std::vector<T>& items, Rng& rng) {
    for (std::size_t i = items.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng.below(i));
        std::swap(items[i - 1], items[j]);
    }
}

} // namespace greenleaf
