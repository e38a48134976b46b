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
#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "core.hpp"
#include "parallel.hpp"
#include "rng.hpp"

namespace sticky {

// Local time of the rate-1 B in the clock T(u) = u + kappa * L(u) / lambda.
// kappa = sqrt(2) makes E|D_t| = lambda E[V_t] hold (local time of D = sqrt(2) B
// against d<D,D> is sqrt(2) L^B).
inline constexpr double default_clock_factor = sqrt2;

inline double clock_slope(const CharacteristicMeasure& m, double kappa = default_clock_factor) {
    return kappa / m.lambda;
}

enum class MaxRule {
    bridge_exact,  // running max includes the exact bridge maximum inside each step
    grid,          // running max over grid points only
};

struct ReflectedPathWithLocalTime {
    std::vector<double> grid;
    std::vector<double> b_abs;
    std::vector<double> ell;
    std::vector<int> excursion_signs;  // sign of the excursion in progress at each grid point
};

// Uniform grid of ceil(t_max/dt) steps ending exactly at t_max.
inline std::int64_t grid_steps(double t_max, double dt) {
    if (!(dt > 0.0)) throw domain_error("dt must be > 0");
    if (!(t_max >= 0.0)) throw domain_error("t_max must be >= 0");
    return std::max<std::int64_t>(1, static_cast<std::int64_t>(std::ceil(t_max / dt - 1e-9)));
}

// Levy: (M - W, M) =d (|B|, L^B). Calls step(k, u, b_abs, ell, sign) for k = 0..n.
template <class Step>
void reflected_walk(double t_max, double dt, const RngStream& stream, MaxRule rule, Step&& step) {
    const std::int64_t n = grid_steps(t_max, dt);
    const double h = t_max / static_cast<double>(n);
    const double sh = std::sqrt(h);
    SequentialRng w_rng(stream, 0), m_rng(stream, 1), s_rng(stream, 2);
    double W = 0.0, M = 0.0;
    int sign = s_rng.sign();
    step(std::int64_t{0}, 0.0, 0.0, 0.0, sign);
    for (std::int64_t k = 1; k <= n; ++k) {
        const double W1 = W + sh * w_rng.normal();
        double top = std::max(W, W1);
        if (rule == MaxRule::bridge_exact) {
            const double d = W1 - W;
            top = 0.5 * (W + W1 + std::sqrt(d * d - 2.0 * h * std::log(m_rng.uniform())));
        }
        if (top > M) {
            M = top;
            sign = s_rng.sign();
        }
        W = W1;
        step(k, static_cast<double>(k) * h, M - W, M, sign);
    }
}

inline ReflectedPathWithLocalTime sample_reflected_with_local_time(double t_max, double dt, const RngStream& stream,
                                                                   MaxRule rule = MaxRule::bridge_exact) {
    ReflectedPathWithLocalTime p;
    const std::size_t n = static_cast<std::size_t>(grid_steps(t_max, dt)) + 1;
    p.grid.reserve(n);
    p.b_abs.reserve(n);
    p.ell.reserve(n);
    p.excursion_signs.reserve(n);
    reflected_walk(t_max, dt, stream, rule, [&](std::int64_t, double u, double b, double l, int s) {
        p.grid.push_back(u);
        p.b_abs.push_back(b);
        p.ell.push_back(l);
        p.excursion_signs.push_back(s);
    });
    return p;
}

struct TwoPointSbmPath {
    std::vector<double> grid;
    std::vector<double> x, y;
    std::vector<double> v;  // time spent together
    std::vector<double> g;  // G = (1/2) int 1{X=Y} dS
    CharacteristicMeasure meta;
};

struct TwoPointState {
    double t = 0.0, d = 0.0, s = 0.0, v = 0.0, g = 0.0;
    double x() const { return 0.5 * (s + d); }
    double y() const { return 0.5 * (s - d); }
};

// D = sqrt(2) sgn (M - W)(T^{-1} t), M the running max of W, T(u) = u + c M(u),
// emitted on the image grid t_k = T(u_k). The step in which T passes t_max is
// refined by bisection: given only that the crossing happens inside, the
// midpoint and both half-maxima are redrawn by rejection, and the half that
// contains the crossing is kept. At width h / 2^refine_depth the end is read
// off linearly. S runs at clock 2t + 2V:
// dS = 2 sqrt(dV) Z1 + sqrt(2 (dt - dV)) Z2, dG = sqrt(dV) Z1.
inline constexpr int refine_depth = 24;

template <class Visit>
void simulate_two_point(const CharacteristicMeasure& m, double t_max, double dt, const RngStream& stream, Visit&& visit,
                        double kappa = default_clock_factor, MaxRule rule = MaxRule::bridge_exact) {
    const double c = clock_slope(m, kappa);
    const std::int64_t n = grid_steps(t_max, dt);
    const double h = t_max / static_cast<double>(n);
    SequentialRng w_rng(stream, 0), m_rng(stream, 1), g_rng(stream, 2), s_rng(stream, 3), e_rng(stream, 4);
    TwoPointState cur;
    visit(static_cast<const TwoPointState&>(cur));
    if (t_max <= 0.0) return;
    double W = 0.0, M = 0.0, u = 0.0;
    int sign = g_rng.sign();
    auto top_of = [&](double w0, double w1, double len, SequentialRng& r) {
        if (rule == MaxRule::grid) return std::max(w0, w1);
        const double d = w1 - w0;
        return 0.5 * (w0 + w1 + std::sqrt(d * d - 2.0 * len * std::log(r.uniform())));
    };
    // advance to (u1, w1) with running max m1; frac < 1 reads the piece at t_max
    auto emit = [&](double u1, double w1, double m1, double frac) {
        if (m1 > M) {
            M = m1;
            sign = g_rng.sign();
        }
        const double v_next = c * M;
        const double d_next = sqrt2 * sign * (M - w1);
        const double dv = std::max(0.0, frac * (v_next - cur.v));
        const double dfree = std::max(0.0, frac * (u1 - u));
        const double z1 = s_rng.normal(), z2 = s_rng.normal();
        TwoPointState nx;
        nx.t = frac < 1.0 ? t_max : std::min(u1 + v_next, t_max);
        nx.d = cur.d + frac * (d_next - cur.d);
        nx.v = frac < 1.0 ? cur.v + dv : v_next;
        nx.s = cur.s + 2.0 * std::sqrt(dv) * z1 + std::sqrt(2.0 * dfree) * z2;
        nx.g = cur.g + std::sqrt(dv) * z1;
        cur = nx;
        W = w1;
        u = u1;
        visit(static_cast<const TwoPointState&>(cur));
    };
    auto crosses = [&](double u1, double top) { return u1 + c * std::max(M, top) >= t_max; };
    // T^{-1}(t_max) <= t_max = u_n, so some step k <= n crosses
    for (std::int64_t k = 1;; ++k) {
        const double u1 = static_cast<double>(k) * h;
        const double W1 = W + std::sqrt(h) * w_rng.normal();
        const double top = top_of(W, W1, h, m_rng);
        if (!crosses(u1, top)) {
            emit(u1, W1, top, 1.0);
            continue;
        }
        double b = u1, Wb = W1, top_b = top;
        if (rule == MaxRule::bridge_exact) {
            for (int level = 0; level < refine_depth; ++level) {
                const double len = b - u, mid = u + 0.5 * len;
                double Wm, tl, tr;
                std::int64_t tries = 0;
                do {
                    if (++tries > 100000000) throw numeric_error("simulate_two_point: refinement rejection stalled");
                    Wm = 0.5 * (W + Wb) + std::sqrt(0.25 * len) * e_rng.normal();
                    tl = top_of(W, Wm, 0.5 * len, e_rng);
                    tr = top_of(Wm, Wb, 0.5 * len, e_rng);
                } while (!crosses(b, std::max(tl, tr)));
                if (crosses(mid, tl)) {
                    b = mid;
                    Wb = Wm;
                    top_b = tl;
                } else {
                    emit(mid, Wm, tl, 1.0);
                    top_b = tr;
                }
            }
        }
        const double t_end = b + c * std::max(M, top_b);
        emit(b, Wb, top_b, (t_max - cur.t) / (t_end - cur.t));
        return;
    }
}

inline TwoPointState sample_two_point_terminal(const CharacteristicMeasure& m, double t_max, double dt,
                                               const RngStream& stream, double kappa = default_clock_factor) {
    TwoPointState last;
    simulate_two_point(m, t_max, dt, stream, [&](const TwoPointState& s) { last = s; }, kappa);
    return last;
}

inline TwoPointSbmPath sample_two_point_sbm(const CharacteristicMeasure& m, double t_max, double dt,
                                            const RngStream& stream, double kappa = default_clock_factor) {
    TwoPointSbmPath p;
    p.meta = m;
    simulate_two_point(
        m, t_max, dt, stream,
        [&](const TwoPointState& s) {
            p.grid.push_back(s.t);
            p.x.push_back(s.x());
            p.y.push_back(s.y());
            p.v.push_back(s.v);
            p.g.push_back(s.g);
        },
        kappa);
    return p;
}

// Piecewise-linear read of a path at time t.
inline double path_at(const std::vector<double>& grid, const std::vector<double>& vals, double t) {
    if (t <= grid.front()) return vals.front();
    if (t >= grid.back()) return vals.back();
    const auto it = std::upper_bound(grid.begin(), grid.end(), t);
    const std::size_t i = static_cast<std::size_t>(it - grid.begin());
    const double a = (t - grid[i - 1]) / (grid[i] - grid[i - 1]);
    return vals[i - 1] + a * (vals[i] - vals[i - 1]);
}

struct GirsanovResult {
    MomentEstimate lhs, rhs, diff;
};

using Functional2 = std::function<double(double, double)>;

// LHS = E[e^{lam(X+Y) - lam^2 t} f(X - lam t, Y - lam t)],
// RHS = E[e^{lam G - lam^2 V / 2} e^{lam^2 V} f(X, Y)], same ensemble.
inline GirsanovResult girsanov_two_point_check(const CharacteristicMeasure& m, double lam, double t,
                                               const Functional2& f, double dt, std::size_t reps,
                                               const RngStream& stream, unsigned threads = 1) {
    auto acc = replicate_vec(reps, 3, threads, [&](std::size_t r) {
        const TwoPointState z = sample_two_point_terminal(m, t, dt, stream.child(r));
        const double X = z.x(), Y = z.y();
        const double l = std::exp(lam * (X + Y) - lam * lam * t) * f(X - lam * t, Y - lam * t);
        const double rr = std::exp(lam * z.g - 0.5 * lam * lam * z.v + lam * lam * z.v) * f(X, Y);
        return std::vector<double>{l, rr, l - rr};
    });
    const std::string d = stream.descriptor();
    return {acc[0].estimate(d), acc[1].estimate(d), acc[2].estimate(d)};
}

// C_p = E[(sqrt(2) M_1)^p] = 2^p Gamma((p+1)/2) / sqrt(pi).
inline double half_normal_moment_constant(double p) {
    return std::pow(2.0, p) * std::tgamma(0.5 * (p + 1.0)) / std::sqrt(pi);
}

struct MomentBoundResult {
    MomentEstimate estimate;
    double bound = 0.0;
};

// E[(lambda (V_t - V_s))^p] against C_p |t - s|^{p/2}.
inline MomentBoundResult intersection_moment_bounds(const CharacteristicMeasure& m, double p, double s, double t,
                                                    std::size_t reps, double dt, const RngStream& stream,
                                                    unsigned threads = 1) {
    if (!(s >= 0.0 && s <= t)) throw domain_error("intersection_moment_bounds: need 0 <= s <= t");
    if (!(p >= 1.0)) throw domain_error("intersection_moment_bounds: need p >= 1");
    const double bound = half_normal_moment_constant(p) * std::pow(t - s, 0.5 * p);
    if (s == t) return {{0.0, 0.0, static_cast<std::int64_t>(reps), stream.descriptor()}, 0.0};
    auto acc = replicate(reps, threads, [&](std::size_t r) {
        double vs = 0.0, vt = 0.0, prev_t = 0.0, prev_v = 0.0;
        bool got_s = s == 0.0;
        simulate_two_point(m, t, dt, stream.child(r), [&](const TwoPointState& z) {
            if (!got_s && z.t >= s) {
                const double a = z.t > prev_t ? (s - prev_t) / (z.t - prev_t) : 1.0;
                vs = prev_v + a * (z.v - prev_v);
                got_s = true;
            }
            prev_t = z.t;
            prev_v = z.v;
            vt = z.v;
        });
        return std::pow(m.lambda * (vt - vs), p);
    });
    return {acc.estimate(stream.descriptor()), bound};
}

}  // namespace sticky
