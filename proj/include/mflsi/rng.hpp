#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace mflsi {

/// Philox4x32-10 counter-based generator (Salmon et al., SC'11). Every draw is a
/// pure function of (key, counter), so streams can be addressed by
/// (seed, replica, step, particle) without any shared state.
class Philox4x32 {
public:
    using Counter = std::array<std::uint32_t, 4>;
    using Key = std::array<std::uint32_t, 2>;

    static Counter generate(Counter ctr, Key key) {
        for (int round = 0; round < 10; ++round) {
            ctr = single_round(ctr, key);
            key[0] += kWeyl0;
            key[1] += kWeyl1;
        }
        return ctr;
    }

private:
    static constexpr std::uint32_t kMul0 = 0xD2511F53u;
    static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
    static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
    static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

    static Counter single_round(const Counter& c, const Key& k) {
        const std::uint64_t p0 = static_cast<std::uint64_t>(kMul0) * c[0];
        const std::uint64_t p1 = static_cast<std::uint64_t>(kMul1) * c[2];
        const auto hi0 = static_cast<std::uint32_t>(p0 >> 32), lo0 = static_cast<std::uint32_t>(p0);
        const auto hi1 = static_cast<std::uint32_t>(p1 >> 32), lo1 = static_cast<std::uint32_t>(p1);
        return {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
    }
};

/// Random streams for one replica of a chain.
class StreamRng {
public:
    /// Stream tags separate independent uses of the same (step, index).
    enum Tag : std::uint32_t { kProposal = 0, kAccept = 1, kInitial = 2, kAux = 3 };

    StreamRng(std::uint64_t seed, std::uint32_t replica)
        : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)}, replica_(replica) {}

    std::uint32_t replica() const { return replica_; }

    /// Two independent standard normals for (step, index, tag).
    std::array<double, 2> normal_pair(std::uint64_t step, std::uint32_t index, Tag tag = kProposal) const {
        const auto u = uniforms(step, index, tag);
        const double r = std::sqrt(-2.0 * std::log(u[0]));
        const double theta = 2.0 * std::numbers::pi * u[1];
        return {r * std::cos(theta), r * std::sin(theta)};
    }

    double normal(std::uint64_t step, std::uint32_t index, Tag tag = kProposal) const {
        return normal_pair(step, index, tag)[0];
    }

    /// Uniform on (0, 1].
    double uniform(std::uint64_t step, std::uint32_t index, Tag tag = kAccept) const {
        return uniforms(step, index, tag)[0];
    }

private:
    std::array<double, 2> uniforms(std::uint64_t step, std::uint32_t index, Tag tag) const {
        const Philox4x32::Counter ctr{index, static_cast<std::uint32_t>(step), static_cast<std::uint32_t>(step >> 32),
                                      replica_ ^ (static_cast<std::uint32_t>(tag) << 28)};
        const auto out = Philox4x32::generate(ctr, key_);
        const std::uint64_t a = (static_cast<std::uint64_t>(out[0]) << 32 | out[1]) >> 11;
        const std::uint64_t b = (static_cast<std::uint64_t>(out[2]) << 32 | out[3]) >> 11;
        constexpr double scale = 1.0 / 9007199254740992.0;  // 2^-53
        return {(static_cast<double>(a) + 1.0) * scale, (static_cast<double>(b) + 1.0) * scale};
    }

    Philox4x32::Key key_;
    std::uint32_t replica_;
};

} // namespace mflsi
