/*
   Copyright 2026 The sticky-flow authors

   Licensed under the Apache License, Version 2.0 (the "License");
   you may not use this file except in compliance with the License.
   You may obtain a copy of the License at

       http://www.apache.org/licenses/LICENSE-2.0

   Unless required by applicable law or agreed to in writing, software
   distributed under the License is distributed on an "AS IS" BASIS,
   WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
   See the License for the specific language governing permissions and
   limitations under the License.
*/
#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <string>
#include <vector>

#include "core.hpp"

namespace sticky {

using Philox4x32Ctr = std::array<std::uint32_t, 4>;
using Philox4x32Key = std::array<std::uint32_t, 2>;

// Philox4x32-10 (Salmon et al., SC'11).
inline Philox4x32Ctr philox4x32_10(Philox4x32Ctr c, Philox4x32Key k) {
    constexpr std::uint32_t M0 = 0xD2511F53u, M1 = 0xCD9E8D57u;
    constexpr std::uint32_t W0 = 0x9E3779B9u, W1 = 0xBB67AE85u;
    for (int r = 0; r < 10; ++r) {
        const std::uint64_t p0 = static_cast<std::uint64_t>(M0) * c[0];
        const std::uint64_t p1 = static_cast<std::uint64_t>(M1) * c[2];
        const std::uint32_t hi0 = static_cast<std::uint32_t>(p0 >> 32), lo0 = static_cast<std::uint32_t>(p0);
        const std::uint32_t hi1 = static_cast<std::uint32_t>(p1 >> 32), lo1 = static_cast<std::uint32_t>(p1);
        c = {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
        k[0] += W0;
        k[1] += W1;
    }
    return c;
}

inline double u64_to_open_unit(std::uint64_t x) {
    // (0,1), 52 bits; 53 would round the top cell to 1
    return (static_cast<double>(x >> 12) + 0.5) * 0x1.0p-52;
}

// Keyed counter stream. A path element p at depth d re-keys by
// key' = philox((lo p, hi p, d, tag), key); collisions need a 64-bit key clash.
class RngStream {
public:
    RngStream() : RngStream(0, {}) {}
    RngStream(std::uint64_t master, std::vector<std::uint64_t> path)
        : master_(master), path_(std::move(path)) {
        key_ = {static_cast<std::uint32_t>(master_), static_cast<std::uint32_t>(master_ >> 32)};
        for (std::size_t d = 0; d < path_.size(); ++d) rekey(path_[d], d);
    }

    RngStream child(std::uint64_t id) const {
        RngStream s = *this;
        s.path_.push_back(id);
        s.rekey(id, s.path_.size() - 1);
        return s;
    }
    RngStream child(std::initializer_list<std::uint64_t> ids) const {
        RngStream s = *this;
        for (auto id : ids) s = s.child(id);
        return s;
    }

    // Four 32-bit words at counter (a, b).
    Philox4x32Ctr block(std::uint64_t a, std::uint64_t b) const {
        return philox4x32_10({static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                              static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32)},
                             key_);
    }

    std::uint64_t master() const { return master_; }
    const std::vector<std::uint64_t>& path() const { return path_; }
    std::uint64_t key() const { return (static_cast<std::uint64_t>(key_[1]) << 32) | key_[0]; }

    std::string descriptor() const {
        std::string s = std::to_string(master_) + ":[";
        for (std::size_t i = 0; i < path_.size(); ++i) {
            if (i) s += ',';
            s += std::to_string(path_[i]);
        }
        return s + "]";
    }

private:
    void rekey(std::uint64_t p, std::size_t depth) {
        const auto r = philox4x32_10({static_cast<std::uint32_t>(p), static_cast<std::uint32_t>(p >> 32),
                                      static_cast<std::uint32_t>(depth), 0x5EEDC0DEu},
                                     key_);
        key_ = {r[0] ^ r[2], r[1] ^ r[3]};
    }

    std::uint64_t master_;
    std::vector<std::uint64_t> path_;
    Philox4x32Key key_{};
};

inline RngStream derive_stream(std::uint64_t master, std::vector<std::uint64_t> path) {
    return RngStream(master, std::move(path));
}

// Stream purposes, used as path tags.
enum class Purpose : std::uint64_t {
    environment = 1,
    walkers = 2,
    brownian = 3,
    sign = 4,
    bridge = 5,
    replica = 6,
};
inline constexpr std::uint64_t tag(Purpose p) { return static_cast<std::uint64_t>(p); }

// Sequential reader over a stream: counter (i, lane), 4 words per block.
class SequentialRng {
public:
    using result_type = std::uint64_t;
    explicit SequentialRng(const RngStream& s, std::uint64_t lane = 0) : s_(s), lane_(lane) {}

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }
    result_type operator()() { return next_u64(); }

    std::uint64_t next_u64() {
        if (pos_ == 2) {
            buf_ = s_.block(ctr_++, lane_);
            pos_ = 0;
        }
        const std::uint64_t v = (static_cast<std::uint64_t>(buf_[2 * pos_ + 1]) << 32) | buf_[2 * pos_];
        ++pos_;
        return v;
    }
    double uniform() { return u64_to_open_unit(next_u64()); }

    // Box-Muller, pairs cached.
    double normal() {
        if (has_cached_) {
            has_cached_ = false;
            return cached_;
        }
        const double u1 = uniform(), u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * pi * u2;
        cached_ = r * std::sin(a);
        has_cached_ = true;
        return r * std::cos(a);
    }
    int sign() { return (next_u64() >> 63) ? 1 : -1; }

private:
    RngStream s_;
    std::uint64_t lane_;
    std::uint64_t ctr_ = 0;
    Philox4x32Ctr buf_{};
    int pos_ = 2;
    bool has_cached_ = false;
    double cached_ = 0.0;
};

}  // namespace sticky
