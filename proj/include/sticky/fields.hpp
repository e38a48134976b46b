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

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <boost/math/distributions/binomial.hpp>

#include "core.hpp"
#include "env_lattice.hpp"

namespace sticky {

struct TestFunction {
    std::string name;
    std::function<double(double)> f;
    double lo = -std::numeric_limits<double>::infinity();
    double hi = std::numeric_limits<double>::infinity();
    std::string smoothness;

    double operator()(double x) const { return (x < lo || x > hi) ? 0.0 : f(x); }

    static TestFunction constant(double c) {
        return {"constant", [c](double) { return c; }, -std::numeric_limits<double>::infinity(),
                std::numeric_limits<double>::infinity(), "C-infinity"};
    }
    static TestFunction indicator(double a, double b) {
        return {"indicator", [](double) { return 1.0; }, a, b, "discontinuous"};
    }
    // exp(-(x-c)^2 / (2 w^2)), cut at 12 widths
    static TestFunction gaussian(double c, double w) {
        return {"gaussian", [c, w](double x) { const double z = (x - c) / w; return std::exp(-0.5 * z * z); },
                c - 12.0 * w, c + 12.0 * w, "C-infinity (cut below 1e-31)"};
    }
    // exp(1 - 1/(1 - r^2)) on |x - c| < radius
    static TestFunction bump(double c, double radius) {
        return {"bump",
                [c, radius](double x) {
                    const double r = (x - c) / radius;
                    const double s = 1.0 - r * r;
                    return s > 0.0 ? std::exp(1.0 - 1.0 / s) : 0.0;
                },
                c - radius, c + radius, "C-infinity, compact"};
    }
};

enum class Centering { lattice_cosh, continuum };
enum class Tilt { quarter_power, drift_matched };
enum class TailRule { inclusive, interpolated };

struct FieldConvention {
    Centering centering = Centering::lattice_cosh;
    Tilt tilt = Tilt::quarter_power;
    TailRule tail = TailRule::inclusive;
};

inline double tilt_theta(const ModerateDeviationScaling& s, Tilt tilt) {
    return tilt == Tilt::quarter_power ? s.theta() : std::atanh(s.theta());
}

inline double log_cosh(double th) {
    const double a = std::abs(th);
    return a + std::log1p(std::exp(-2.0 * a)) - std::log(2.0);
}

// Log of the centering subtracted from theta * u at step m (t = m / N for continuum).
inline double centering_log(const ModerateDeviationScaling& s, const FieldConvention& c, std::int64_t m) {
    if (c.centering == Centering::lattice_cosh) return static_cast<double>(m) * log_cosh(tilt_theta(s, c.tilt));
    return 0.5 * static_cast<double>(m) / static_cast<double>(s.N()) * s.sqrtN();
}

inline void require_time(const QuenchedKernel& K, const ModerateDeviationScaling& s, const char* who) {
    if (K.n != s.n())
        throw contract_error(std::string(who) + ": kernel has n = " + std::to_string(K.n) +
                             " but the scaling expects round(N t) = " + std::to_string(s.n()));
}

// Sum over sites u of exp(theta u - centering) phi(x(u)) K(u).
inline double x_field(const QuenchedKernel& K, const ModerateDeviationScaling& s, const TestFunction& phi,
                      const FieldConvention& conv = {}) {
    require_time(K, s, "x_field");
    const double th = tilt_theta(s, conv.tilt);
    const double cent = centering_log(s, conv, K.n);
    // restrict to sites whose image lies in the support of phi
    std::int64_t a = K.lo(), b = K.hi();
    if (std::isfinite(phi.lo)) a = std::max<std::int64_t>(a, static_cast<std::int64_t>(std::floor(s.u(phi.lo))));
    if (std::isfinite(phi.hi)) b = std::min<std::int64_t>(b, static_cast<std::int64_t>(std::ceil(s.u(phi.hi))));
    double acc = 0.0;
    for (std::int64_t u = a; u <= b; ++u) {
        const double k = K.probs[static_cast<std::size_t>(u - K.offset)];
        if (k == 0.0) continue;
        acc += std::exp(th * static_cast<double>(u) - cent) * phi(s.x_of(static_cast<double>(u))) * k;
    }
    return acc;
}

// E_env of x_field: the annealed kernel is the simple random walk.
inline double tilted_binomial_sum(const ModerateDeviationScaling& s, const TestFunction& phi,
                                  const FieldConvention& conv = {}) {
    const std::int64_t n = s.n();
    const double th = tilt_theta(s, conv.tilt);
    // C(n,j) 2^-n e^{th u} = Bin(n, p)(j) cosh^n th
    const double p = 1.0 / (1.0 + std::exp(-2.0 * th));
    const boost::math::binomial_distribution<double> bin(static_cast<double>(n), p);
    const double scale = std::exp(static_cast<double>(n) * log_cosh(th) - centering_log(s, conv, n));
    double acc = 0.0;
    for (std::int64_t j = 0; j <= n; ++j) {
        const double ph = phi(s.x_of(static_cast<double>(2 * j - n)));
        if (ph == 0.0) continue;
        acc += boost::math::pdf(bin, static_cast<double>(j)) * ph;
    }
    return acc * scale;
}

// Joint law of two walkers in a common environment, under the tilted measure
// e^{theta (X_m + Y_m) - 2 m log cosh theta}. Positions are kept in a band of
// +-band_sd sqrt(n) sites around the tilted mean; `dropped` is the mass lost.
struct PairDistribution {
    std::int64_t n = 0;
    std::int64_t lo = 0;  // position of index 0
    std::size_t width = 1;
    std::vector<double> w;  // w[i * width + j] at positions lo + 2i, lo + 2j
    double dropped = 0.0;
    double theta = 0.0;
    double position(std::size_t i) const { return static_cast<double>(lo + 2 * static_cast<std::int64_t>(i)); }
};

inline PairDistribution annealed_pair_distribution(const EnvModel& m, const ModerateDeviationScaling& s,
                                                   const FieldConvention& conv = {}, double band_sd = 9.0) {
    const std::int64_t n = s.n();
    const double th = tilt_theta(s, conv.tilt);
    const double q = m.q();
    const double ch = std::cosh(th), ch2 = ch * ch;
    const double p_up = std::exp(th) / (2.0 * ch), p_dn = 1.0 - p_up;
    const double uu = (0.5 - q) * std::exp(2.0 * th) / ch2, dd = (0.5 - q) * std::exp(-2.0 * th) / ch2,
                 split = q / ch2;
    const double drift = std::tanh(th);
    const std::int64_t band = static_cast<std::int64_t>(std::ceil(band_sd * std::sqrt(static_cast<double>(std::max<std::int64_t>(n, 1))))) + 2;
    auto window = [&](std::int64_t t, std::int64_t& lo, std::size_t& width) {
        const double c = static_cast<double>(t) * drift;
        std::int64_t a = std::max<std::int64_t>(-t, static_cast<std::int64_t>(std::floor(c)) - band);
        std::int64_t b = std::min<std::int64_t>(t, static_cast<std::int64_t>(std::ceil(c)) + band);
        if (((a + t) % 2 + 2) % 2) ++a;
        if (((b + t) % 2 + 2) % 2) --b;
        lo = a;
        width = static_cast<std::size_t>((b - a) / 2 + 1);
    };
    PairDistribution P;
    P.theta = th;
    window(0, P.lo, P.width);
    P.w.assign(1, 1.0);
    std::vector<double> nxt;
    for (std::int64_t t = 0; t < n; ++t) {
        std::int64_t lo2;
        std::size_t w2;
        window(t + 1, lo2, w2);
        nxt.assign(w2 * w2, 0.0);
        const std::size_t w1 = P.width;
        // index shift: position lo + 2i + 1 maps to (lo + 1 - lo2)/2 + i
        const std::int64_t up0 = (P.lo + 1 - lo2) / 2, dn0 = (P.lo - 1 - lo2) / 2;
        auto idx = [&](std::int64_t base, std::size_t i) -> std::int64_t { return base + static_cast<std::int64_t>(i); };
        const std::int64_t W2 = static_cast<std::int64_t>(w2);
        double lost = 0.0;
        auto put = [&](std::int64_t a, std::int64_t b, double v) {
            if (a < 0 || b < 0 || a >= W2 || b >= W2) {
                lost += v;
                return;
            }
            nxt[static_cast<std::size_t>(a) * w2 + static_cast<std::size_t>(b)] += v;
        };
        for (std::size_t i = 0; i < w1; ++i) {
            const std::int64_t iu = idx(up0, i), id = idx(dn0, i);
            const double* row = &P.w[i * w1];
            for (std::size_t j = 0; j < w1; ++j) {
                const double v = row[j];
                if (v == 0.0) continue;
                const std::int64_t ju = idx(up0, j), jd = idx(dn0, j);
                if (i == j) {
                    put(iu, ju, v * uu);
                    put(id, jd, v * dd);
                    put(iu, jd, v * split);
                    put(id, ju, v * split);
                } else {
                    put(iu, ju, v * p_up * p_up);
                    put(id, jd, v * p_dn * p_dn);
                    put(iu, jd, v * p_up * p_dn);
                    put(id, ju, v * p_dn * p_up);
                }
            }
        }
        P.dropped += lost;
        P.w.swap(nxt);
        P.lo = lo2;
        P.width = w2;
        P.n = t + 1;
    }
    return P;
}

// sum_{y,y'} P(y, y') h(y) h(y'), with h evaluated on positions.
template <class H>
double pair_expectation(const PairDistribution& P, H&& h) {
    std::vector<double> hv(P.width);
    for (std::size_t i = 0; i < P.width; ++i) hv[i] = h(P.position(i));
    double acc = 0.0;
    for (std::size_t i = 0; i < P.width; ++i) {
        if (hv[i] == 0.0) continue;
        double row = 0.0;
        for (std::size_t j = 0; j < P.width; ++j) row += P.w[i * P.width + j] * hv[j];
        acc += hv[i] * row;
    }
    return acc;
}

// Exact annealed E[x_field^2].
inline double annealed_x_field_second_moment(const PairDistribution& P, const ModerateDeviationScaling& s,
                                             const TestFunction& phi, const FieldConvention& conv = {}) {
    const double shift = 2.0 * (static_cast<double>(P.n) * log_cosh(P.theta) - centering_log(s, conv, P.n));
    return std::exp(shift) * pair_expectation(P, [&](double y) { return phi(s.x_of(y)); });
}

inline double annealed_second_moment_exact(const EnvModel& m, const ModerateDeviationScaling& s,
                                           const TestFunction& phi, const FieldConvention& conv = {}) {
    return annealed_x_field_second_moment(annealed_pair_distribution(m, s, conv), s, phi, conv);
}

// Q field: N^{-1/2} sum_{m<n} sum_u exp(2 theta u - 2 c_m) psi(x_m(u)) K_m(u)^2.
class QFieldAccumulator {
public:
    QFieldAccumulator(const ModerateDeviationScaling& s, TestFunction psi, FieldConvention conv = {})
        : s_(s), psi_(std::move(psi)), conv_(conv) {}

    void push(const QuenchedKernel& K) {
        if (K.n >= s_.n()) return;  // left Riemann sum over m < n
        const double th = tilt_theta(s_, conv_.tilt);
        const double cent = 2.0 * centering_log(s_, conv_, K.n);
        const double center = s_.quarterN() * s_.sqrtN() * static_cast<double>(K.n) / static_cast<double>(s_.N());
        double acc = 0.0;
        for (std::size_t i = 0; i < K.probs.size(); ++i) {
            const double k = K.probs[i];
            if (k == 0.0) continue;
            const double u = static_cast<double>(K.offset + static_cast<std::int64_t>(i));
            const double ps = psi_((u - center) / s_.sqrtN());
            if (ps == 0.0) continue;
            acc += std::exp(2.0 * th * u - cent) * ps * k * k;
        }
        value_ += acc / s_.sqrtN();
    }
    double value() const { return value_; }

private:
    ModerateDeviationScaling s_;
    TestFunction psi_;
    FieldConvention conv_;
    double value_ = 0.0;
};

inline double q_field_accumulate(std::span<const QuenchedKernel> kernels, const ModerateDeviationScaling& s,
                                 const TestFunction& psi, const FieldConvention& conv = {}) {
    QFieldAccumulator acc(s, psi, conv);
    for (const auto& K : kernels) acc.push(K);
    return acc.value();
}

// Tail probability at a real location under the chosen rounding rule.
inline double rounded_tail(const TailTable& T, std::int64_t n, double u, TailRule rule) {
    if (rule == TailRule::inclusive) return T.tail(static_cast<std::int64_t>(std::ceil(u)));
    // linear between midpoints p - 1 of consecutive sites p of the right parity
    std::int64_t p = static_cast<std::int64_t>(std::floor(u + 1.0));
    if (((p - n) % 2 + 2) % 2 != 0) p -= 1;
    const double upper = T.tail(p + 2);
    const double atom = T.tail(p) - upper;
    return upper + atom * (static_cast<double>(p) + 1.0 - u) * 0.5;
}

inline double tail_field(const TailTable& T, std::int64_t n, const ModerateDeviationScaling& s, double x,
                         const FieldConvention& conv = {}) {
    const double th = tilt_theta(s, conv.tilt);
    const double u = s.u(x);
    const double tail = rounded_tail(T, n, u, conv.tail);
    if (tail <= 0.0) return 0.0;
    return s.quarterN() * std::exp(th * u - centering_log(s, conv, n)) * tail;
}

inline double tail_field(const QuenchedKernel& K, const ModerateDeviationScaling& s, double x,
                         const FieldConvention& conv = {}) {
    require_time(K, s, "tail_field");
    return tail_field(TailTable(K), K.n, s, x, conv);
}

// E_env of tail_field, exactly (binomial annealed kernel).
inline double annealed_tail_field(const ModerateDeviationScaling& s, double x, const FieldConvention& conv = {}) {
    const std::int64_t n = s.n();
    QuenchedKernel B;
    B.n = n;
    B.offset = -n;
    B.probs.assign(static_cast<std::size_t>(2 * n + 1), 0.0);
    const double lgn = std::lgamma(static_cast<double>(n) + 1.0);
    for (std::int64_t j = 0; j <= n; ++j)
        B.probs[static_cast<std::size_t>(2 * j)] =
            std::exp(lgn - std::lgamma(static_cast<double>(j) + 1.0) - std::lgamma(static_cast<double>(n - j) + 1.0) -
                     static_cast<double>(n) * std::log(2.0));
    return tail_field(B, s, x, conv);
}

// Exact annealed E[F(x) F(y)] from the pair law.
inline double annealed_tail_second_moment(const PairDistribution& P, const ModerateDeviationScaling& s, double x,
                                          double y, const FieldConvention& conv = {}) {
    const double shift = 2.0 * (static_cast<double>(P.n) * log_cosh(P.theta)) -
                         2.0 * centering_log(s, conv, P.n);
    // weight of site v in the rounded tail at real location u, times e^{theta (u - v)}
    auto h_at = [&](double u) {
        return [&, u](double v) {
            double g;
            if (conv.tail == TailRule::inclusive) {
                g = v >= std::ceil(u) ? 1.0 : 0.0;
            } else {
                std::int64_t p = static_cast<std::int64_t>(std::floor(u + 1.0));
                if (((p - P.n) % 2 + 2) % 2 != 0) p -= 1;
                const double pv = static_cast<double>(p);
                g = v >= pv + 2.0 ? 1.0 : (v == pv ? (pv + 1.0 - u) * 0.5 : 0.0);
            }
            return g == 0.0 ? 0.0 : g * std::exp(P.theta * (u - v));
        };
    };
    const auto hx = h_at(s.u(x));
    const auto hy = h_at(s.u(y));
    std::vector<double> ax(P.width), ay(P.width);
    for (std::size_t i = 0; i < P.width; ++i) {
        ax[i] = hx(P.position(i));
        ay[i] = hy(P.position(i));
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < P.width; ++i) {
        if (ax[i] == 0.0) continue;
        double row = 0.0;
        for (std::size_t j = 0; j < P.width; ++j) row += P.w[i * P.width + j] * ay[j];
        acc += ax[i] * row;
    }
    return s.sqrtN() * std::exp(shift) * acc;
}

// (1 - K[m+1, inf))^k
inline double max_cdf_from_tail(double tail, std::int64_t k) {
    if (k < 1) throw domain_error("max_cdf: k must be >= 1");
    if (tail >= 1.0) return 0.0;
    if (k == 1) return 1.0 - tail;
    return std::exp(static_cast<double>(k) * std::log1p(-tail));
}

inline double max_cdf(const QuenchedKernel& K, std::int64_t k, std::int64_t m) {
    return max_cdf_from_tail(kernel_tail(K, m + 1), k);
}

struct FieldSample {
    double x_field = 0.0;
    double q_field = 0.0;
    std::map<double, double> tail_values;
    std::string env_seed;
};

}  // namespace sticky
