#ifndef CHURN_RNG_HPP
#define CHURN_RNG_HPP

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace churn {

// All randomness in the toolkit flows from one master seed. Independent
// streams are derived with derive_seed(master, tag) so that adding a new
// consumer never shifts the draws of an existing one.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::uint64_t derive_seed(std::uint64_t base, std::string_view tag) {
    std::uint64_t s = base ^ fnv1a64(tag);
    return splitmix64(s);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
    std::uint64_t s = base ^ (0x9e3779b97f4a7c15ULL * (index + 1));
    return splitmix64(s);
}

// mt19937_64 with hand-rolled distributions. The std:: distributions are
// implementation-defined, which would make seeds non-portable across
// standard libraries; these are pinned algorithms.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    // [0, 1) with 53 random bits
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // [0, bound), unbiased via rejection
    std::uint64_t uniform_int(std::uint64_t bound) {
        if (bound == 0) return 0;
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
        std::uint64_t x;
        do {
            x = gen_();
        } while (x >= limit);
        return x % bound;
    }

    bool bernoulli(double p) { return uniform() < p; }

    // Knuth's product method; large means are split since the product
    // underflows past lambda ~ 700 and slows long before that.
    std::uint64_t poisson(double lambda) {
        std::uint64_t total = 0;
        while (lambda > 30.0) {
            // poisson(a + b) = poisson(a) + poisson(b) for independent draws
            total += poisson_small(lambda / 2.0);
            lambda -= lambda / 2.0;
        }
        return total + poisson_small(lambda);
    }

    Rng fork(std::string_view tag) { return Rng(derive_seed(gen_(), tag)); }

private:
    std::uint64_t poisson_small(double lambda) {
        if (lambda <= 0.0) return 0;
        const double floor_l = std::exp(-lambda);
        double p = 1.0;
        std::uint64_t k = 0;
        do {
            ++k;
            p *= uniform();
        } while (p > floor_l);
        return k - 1;
    }

    std::mt19937_64 gen_;
};

// Fisher-Yates with the pinned uniform_int; std::shuffle is
// implementation-defined.
template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::size_t j = static_cast<std::size_t>(rng.uniform_int(i));
        std::swap(v[i - 1], v[j]);
    }
}

} // namespace churn

#endif
