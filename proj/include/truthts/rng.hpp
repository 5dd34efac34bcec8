#pragma once

#include <cstdint>
#include <limits>
#include <random>

namespace truthts {

/// Purpose tags for random streams. Every stochastic call site uses its own tag
/// so adding draws at one site never shifts the numbers seen at another.
enum class Purpose : std::uint64_t {
    GroundTruth = 1,
    Context = 2,
    Arm = 3,
    Noise = 4,
    ThompsonMc = 5,
    InstanceContexts = 6,
    Tiebreak = 7,
    Test = 99,
};

struct StreamKey {
    std::uint64_t replication = 0;
    std::uint64_t step = 0;
    Purpose purpose = Purpose::Test;
    std::uint64_t sub = 0;
};

namespace detail {

inline constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ULL;

constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

}  // namespace detail

/// Counter-based generator: the n-th output is a pure function of
/// (seed, key, n). Models std::uniform_random_bit_generator.
class RngStream {
public:
    using result_type = std::uint64_t;

    RngStream(std::uint64_t seed, StreamKey key) noexcept
        : key_(derive_key(seed, key)) {}

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    result_type operator()() noexcept {
        ++counter_;
        return detail::mix64(key_ + counter_ * detail::kGamma);
    }

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

    double normal() { return std::normal_distribution<double>{}(*this); }

    /// Laplace(0, scale) as the difference of two unit exponentials.
    double laplace(double scale) {
        std::exponential_distribution<double> e{1.0};
        const double a = e(*this);
        const double b = e(*this);
        return scale * (a - b);
    }

    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) {
        return std::uniform_int_distribution<std::uint64_t>{0, n - 1}(*this);
    }

    std::uint64_t draws() const noexcept { return counter_; }

private:
    static std::uint64_t derive_key(std::uint64_t seed, StreamKey key) noexcept {
        std::uint64_t h = detail::mix64(seed + detail::kGamma);
        h = detail::mix64(h ^ detail::mix64(key.replication + 0x632BE59BD9B4E019ULL));
        h = detail::mix64(h ^ detail::mix64(key.step + 0x8CB92BA72F3D8DD7ULL));
        h = detail::mix64(h ^ detail::mix64(static_cast<std::uint64_t>(key.purpose) + 0xD6E8FEB86659FD93ULL));
        h = detail::mix64(h ^ detail::mix64(key.sub + 0xA0761D6478BD642FULL));
        return h;
    }

    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

}  // namespace truthts
