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

#include <algorithm>
#include <boost/math/special_functions/beta.hpp>
#include <cmath>
#include <limits>
#include <cstdint>
#include <string>
#include <vector>

#include "core.hpp"
#include "rng.hpp"

namespace sticky {

enum class EnvKind { two_point, beta_symmetric, constant };

// Space-time i.i.d. environment: omega(n, x) is the probability of a +1 step.
struct EnvModel {
    EnvKind kind = EnvKind::constant;
    double param = 0.5;  // delta | beta | constant value
    std::int64_t N = 1;

    static EnvModel two_point(double delta, std::int64_t N = 1) {
        if (!(delta > 0.0 && delta <= 0.5)) throw domain_error("two_point: delta must lie in (0, 1/2]");
        return {EnvKind::two_point, delta, N};
    }
    static EnvModel beta_symmetric(double beta, std::int64_t N = 1) {
        if (!(beta > 0.0) || !std::isfinite(beta)) throw domain_error("beta_symmetric: beta must be > 0");
        return {EnvKind::beta_symmetric, beta, N};
    }
    static EnvModel constant_half(std::int64_t N = 1) { return {EnvKind::constant, 0.5, N}; }
    // Deterministic omega = p everywhere; not symmetric unless p = 1/2.
    static EnvModel constant(double p, std::int64_t N = 1) {
        if (!(p >= 0.0 && p <= 1.0)) throw domain_error("constant: p must lie in [0,1]");
        return {EnvKind::constant, p, N};
    }

    bool is_free() const { return kind == EnvKind::constant && param == 0.5; }

    // q = E[omega (1 - omega)]
    double q() const {
        switch (kind) {
            case EnvKind::two_point: return param * (1.0 - param);
            case EnvKind::beta_symmetric: return param / (2.0 * (2.0 * param + 1.0));
            case EnvKind::constant: return param * (1.0 - param);
        }
        return 0.0;
    }
    // Diffusive-scale stickiness sqrt(N) q (pair walk martingale at scale sqrt(N)).
    double nu_eff() const { return std::sqrt(static_cast<double>(N)) * q(); }
    // Stickiness seen by the moderate-deviation fields: the tilted pair walk
    // picks up a factor 1 + (1 - 4q) N^{-1/2} per coincident step.
    double nu_field() const {
        const double r = 1.0 - 4.0 * q();
        return r > 0.0 ? q() / r : std::numeric_limits<double>::infinity();
    }
    double sigma_field() const { return (1.0 - 4.0 * q()) / (2.0 * q()); }

    std::string describe() const {
        switch (kind) {
            case EnvKind::two_point: return "two_point(" + std::to_string(param) + ")";
            case EnvKind::beta_symmetric: return "beta_symmetric(" + std::to_string(param) + ")";
            case EnvKind::constant: return param == 0.5 ? "constant_half" : "constant(" + std::to_string(param) + ")";
        }
        return "?";
    }
};

// q solving q / (1 - 4q) = nu, i.e. the field stickiness equals nu.
inline double field_q_for(double nu) { return nu / (1.0 + 4.0 * nu); }

inline EnvModel two_point_for_field(double nu, std::int64_t N) {
    const double q = field_q_for(nu);
    return EnvModel::two_point(0.5 * (1.0 - std::sqrt(1.0 - 4.0 * q)), N);
}
inline EnvModel beta_for_field(double nu, std::int64_t N) { return EnvModel::beta_symmetric(2.0 * nu, N); }

inline EnvModel two_point_for_diffusive(double nu, std::int64_t N) {
    const double q = nu / std::sqrt(static_cast<double>(N));
    if (!(q > 0.0 && q <= 0.25)) throw domain_error("two_point_for_diffusive: nu/sqrt(N) must lie in (0, 1/4]");
    return EnvModel::two_point(0.5 * (1.0 - std::sqrt(1.0 - 4.0 * q)), N);
}

namespace detail {
inline std::int64_t floor_div(std::int64_t a, std::int64_t b) {
    std::int64_t q = a / b;
    if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
    return q;
}
}  // namespace detail

// omega at sites lo, lo + stride, ..., count of them, at time n. Two-point
// draws take bit (x mod 128) of the block at (n, floor(x / 128)); continuous
// draws take 64 bits per site from blocks of two sites.
inline void env_row(const EnvModel& m, const RngStream& s, std::int64_t n, std::int64_t lo, std::int64_t count,
                    std::int64_t stride, std::vector<double>& out) {
    out.resize(static_cast<std::size_t>(std::max<std::int64_t>(count, 0)));
    if (count <= 0) return;
    if (m.kind == EnvKind::constant) {
        std::fill(out.begin(), out.end(), m.param);
        return;
    }
    if (m.kind == EnvKind::two_point) {
        const double val[2] = {m.param, 1.0 - m.param};
        double* o = out.data();
        std::int64_t i = 0, x = lo;
        while (i < count) {
            const std::int64_t b = detail::floor_div(x, 128);
            const auto w = s.block(static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(b));
            const std::uint64_t bits[2] = {(static_cast<std::uint64_t>(w[1]) << 32) | w[0],
                                           (static_cast<std::uint64_t>(w[3]) << 32) | w[2]};
            std::int64_t r = x - b * 128;
            const std::int64_t take = std::min(count - i, (128 - r + stride - 1) / stride);
            if (stride < 64) {
                for (std::int64_t j = 0; j < take;) {
                    const std::int64_t h = r >> 6;
                    std::uint64_t cur = bits[h] >> (r & 63);
                    const std::int64_t in_word = std::min(take - j, (64 * (h + 1) - r + stride - 1) / stride);
                    for (std::int64_t k = 0; k < in_word; ++k, cur >>= stride) o[i + j + k] = val[cur & 1u];
                    j += in_word;
                    r += in_word * stride;
                }
            } else {
                for (std::int64_t j = 0; j < take; ++j, r += stride) o[i + j] = val[(bits[r >> 6] >> (r & 63)) & 1u];
            }
            i += take;
            x += take * stride;
        }
        return;
    }
    for (std::int64_t i = 0; i < count; ++i) {
        const std::int64_t x = lo + i * stride;
        const std::int64_t b = detail::floor_div(x, 2);
        const auto w = s.block(static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(b));
        const std::size_t j = static_cast<std::size_t>(x - 2 * b);
        const std::uint64_t bits = (static_cast<std::uint64_t>(w[2 * j + 1]) << 32) | w[2 * j];
        out[static_cast<std::size_t>(i)] = boost::math::ibeta_inv(m.param, m.param, u64_to_open_unit(bits));
    }
}

// Contiguous sites [lo, hi].
inline void env_row(const EnvModel& m, const RngStream& s, std::int64_t n, std::int64_t lo, std::int64_t hi,
                    std::vector<double>& out) {
    env_row(m, s, n, lo, hi - lo + 1, 1, out);
}

inline double env_prob(const EnvModel& m, const RngStream& s, std::int64_t n, std::int64_t x) {
    thread_local std::vector<double> v;
    env_row(m, s, n, x, 1, 1, v);
    return v[0];
}

struct QuenchedKernel {
    std::int64_t n = 0;
    std::int64_t offset = 0;
    std::vector<double> probs{1.0};
    // slots [nz_first, nz_last] hold all nonzero mass; -1 = not tracked
    std::int64_t nz_first = -1, nz_last = -1;

    static QuenchedKernel delta0() { return {}; }
    int parity() const { return static_cast<int>(((n % 2) + 2) % 2); }
    std::int64_t lo() const { return offset; }
    std::int64_t hi() const { return offset + static_cast<std::int64_t>(probs.size()) - 1; }
    double at(std::int64_t u) const {
        if (u < lo() || u > hi()) return 0.0;
        return probs[static_cast<std::size_t>(u - offset)];
    }
    double mass() const {
        double s = 0.0;
        for (double p : probs) s += p;
        return s;
    }
};

// Values below this are flushed to zero (keeps the arithmetic out of subnormals).
inline constexpr double kernel_flush = 1e-300;

// In place; `row` is scratch for omega on the occupied sites.
inline void step_kernel_inplace(QuenchedKernel& K, const EnvModel& m, const RngStream& s, std::vector<double>& row) {
    const std::int64_t old_size = static_cast<std::int64_t>(K.probs.size());
    std::int64_t first = K.nz_first, last = K.nz_last;
    if (first < 0 || last < first || last >= old_size) {
        first = 0;
        last = old_size - 1;
        while (first <= last && K.probs[static_cast<std::size_t>(first)] == 0.0) ++first;
        while (last >= first && K.probs[static_cast<std::size_t>(last)] == 0.0) --last;
    }
    K.probs.resize(static_cast<std::size_t>(old_size + 2), 0.0);
    if (first > last) {  // empty kernel stays empty
        K.offset -= 1;
        K.n += 1;
        K.nz_first = K.nz_last = -1;
        return;
    }
    // nonzero slots share the kernel's parity, so [first, last] steps by 2
    const std::int64_t occ = (last - first) / 2 + 1;
    env_row(m, s, K.n, K.offset + first, occ, 2, row);
    double* p = K.probs.data() + first;
    const double* w = row.data();
    // slot first + 2k becomes p_k (1 - w_k) + p_{k-1} w_{k-1}; descending keeps p_{k-1} old
    p[2 * occ] = p[2 * occ - 2] * w[occ - 1];
    for (std::int64_t k = occ - 1; k >= 1; --k) {
        const double a = p[2 * k], b = p[2 * k - 2];
        p[2 * k] = (a - a * w[k]) + b * w[k - 1];
    }
    p[0] = p[0] - p[0] * w[0];
    last += 2;
    // the far tails are the only place values get this small
    auto& v = K.probs;
    while (first < last && v[static_cast<std::size_t>(first)] < kernel_flush) v[static_cast<std::size_t>(first)] = 0.0, first += 2;
    while (last > first && v[static_cast<std::size_t>(last)] < kernel_flush) v[static_cast<std::size_t>(last)] = 0.0, last -= 2;
    K.nz_first = first;
    K.nz_last = last;
    K.offset -= 1;
    K.n += 1;
}

inline QuenchedKernel step_kernel(QuenchedKernel K, const EnvModel& m, const RngStream& s) {
    std::vector<double> row;
    step_kernel_inplace(K, m, s, row);
    return K;
}

inline std::size_t& kernel_memory_cap() {
    static std::size_t cap = std::size_t{1} << 31;  // bytes
    return cap;
}

inline void check_kernel_budget(std::int64_t n_steps) {
    if (n_steps < 0) throw domain_error("evolve: n_steps must be >= 0");
    const long double bytes = 2.0L * (2.0L * static_cast<long double>(n_steps) + 3.0L) * sizeof(double);
    if (bytes > static_cast<long double>(kernel_memory_cap()))
        throw resource_error("evolve: window of " + std::to_string(n_steps) + " steps exceeds the kernel memory cap");
}

// visit(K_m) for m = 0..n_steps, in order.
template <class Visit>
QuenchedKernel evolve_visit(const EnvModel& m, const RngStream& s, std::int64_t n_steps, Visit&& visit) {
    check_kernel_budget(n_steps);
    QuenchedKernel K;
    K.probs.reserve(static_cast<std::size_t>(2 * n_steps + 3));
    std::vector<double> row;
    row.reserve(static_cast<std::size_t>(n_steps + 2));
    visit(static_cast<const QuenchedKernel&>(K));
    for (std::int64_t i = 0; i < n_steps; ++i) {
        step_kernel_inplace(K, m, s, row);
        visit(static_cast<const QuenchedKernel&>(K));
    }
    return K;
}

inline QuenchedKernel evolve(const EnvModel& m, const RngStream& s, std::int64_t n_steps) {
    return evolve_visit(m, s, n_steps, [](const QuenchedKernel&) {});
}

inline double kernel_tail(const QuenchedKernel& K, std::int64_t u) {
    if (u <= K.lo()) return K.mass();
    double s = 0.0;
    for (std::int64_t y = K.hi(); y >= u; --y) s += K.probs[static_cast<std::size_t>(y - K.offset)];
    return s;
}

// Suffix sums for repeated tail queries.
class TailTable {
public:
    explicit TailTable(const QuenchedKernel& K) : lo_(K.lo()), suffix_(K.probs.size() + 1, 0.0) {
        for (std::size_t i = K.probs.size(); i-- > 0;) suffix_[i] = suffix_[i + 1] + K.probs[i];
    }
    double tail(std::int64_t u) const {
        if (u <= lo_) return suffix_[0];
        const std::int64_t i = u - lo_;
        if (i >= static_cast<std::int64_t>(suffix_.size())) return 0.0;
        return suffix_[static_cast<std::size_t>(i)];
    }

private:
    std::int64_t lo_;
    std::vector<double> suffix_;
};

}  // namespace sticky
