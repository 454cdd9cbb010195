#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

namespace ihan {

// Deterministic random stream with named sub-streams. Distributions are
// hand-rolled on top of splitmix64 so output never depends on the standard
// library implementation.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : root_(seed), state_(seed) {}

    std::uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // uniform in [0, 1)
    double uniform01() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) {
        return lo + (hi - lo) * uniform01();
    }

    // uniform in [0, n), unbiased via rejection
    std::uint64_t below(std::uint64_t n) {
        if (n == 0) return 0;
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x;
        do {
            x = next_u64();
        } while (x >= limit);
        return x % n;
    }

    // inclusive range
    int uniform_int(int lo, int hi) {
        return lo + static_cast<int>(below(static_cast<std::uint64_t>(hi - lo + 1)));
    }

    bool bernoulli(double p) {
        return uniform01() < p;
    }

    // standard normal, Box-Muller
    double normal() {
        double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53; // (0, 1]
        double u2 = uniform01();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(below(i));
            using std::swap;
            swap(v[i - 1], v[j]);
        }
    }

    // Independent stream derived from the root seed and a label; order of
    // child() calls does not matter.
    Rng child(std::string_view name) const {
        std::uint64_t h = 1469598103934665603ULL; // FNV-1a
        for (char c : name) {
            h ^= static_cast<unsigned char>(c);
            h *= 1099511628211ULL;
        }
        Rng r(root_ ^ h);
        r.next_u64(); // decorrelate from a plain Rng(root ^ h) user
        r.root_ = r.state_;
        return r;
    }

    std::uint64_t root_seed() const { return root_; }

private:
    std::uint64_t root_;
    std::uint64_t state_;
};

} // namespace ihan
