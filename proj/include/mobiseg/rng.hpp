#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>
#include <span>

namespace mobiseg {

constexpr std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// Folds a list of integer keys into a substream key. Used to derive one
/// independent stream per (purpose, device, stay, repetition) tuple.
constexpr std::uint64_t derive_key(std::uint64_t master, std::initializer_list<std::uint64_t> keys)
{
    std::uint64_t h = splitmix64(master);
    for (std::uint64_t k : keys)
        h = splitmix64(h ^ splitmix64(k + 0x632BE59BD9B4E019ULL));
    return h;
}

/// Counter-based generator: output n is a pure function of (key, n), so any
/// stream can be reconstructed without replaying other streams.
class Stream {
  public:
    using result_type = std::uint64_t;

    explicit constexpr Stream(std::uint64_t key) : key_(key) {}

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return ~result_type{0}; }

    constexpr result_type operator()() { return next(); }

    constexpr std::uint64_t next()
    {
        ++counter_;
        return splitmix64(key_ ^ splitmix64(counter_ * 0xD1B54A32D192ED03ULL));
    }

    /// Uniform double in [0, 1).
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n); n must be positive. Lemire's method with
    /// rejection, so the result is unbiased.
    std::uint64_t below(std::uint64_t n)
    {
        unsigned __int128 m = static_cast<unsigned __int128>(next()) * n;
        auto low = static_cast<std::uint64_t>(m);
        if (low < n) {
            const std::uint64_t threshold = (0 - n) % n;
            while (low < threshold) {
                m = static_cast<unsigned __int128>(next()) * n;
                low = static_cast<std::uint64_t>(m);
            }
        }
        return static_cast<std::uint64_t>(m >> 64);
    }

    /// Standard normal deviate (Box-Muller, one value per call).
    double normal()
    {
        double u1 = uniform();
        while (u1 <= 0.0)
            u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    double exponential(double mean)
    {
        double u = uniform();
        while (u <= 0.0)
            u = uniform();
        return -mean * std::log(u);
    }

  private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

template <class T>
void shuffle(std::span<T> items, Stream& rng)
{
    for (std::size_t i = items.size(); i > 1; --i) {
        const std::size_t j = rng.below(i);
        std::swap(items[i - 1], items[j]);
    }
}

} // namespace mobiseg
