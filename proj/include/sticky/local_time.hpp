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
#include <boost/math/quadrature/gauss.hpp>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "core.hpp"
#include "rng.hpp"

namespace sticky {

// Brownian bridge a -> a + b on [0,1], rate 1; theta is the exponential-moment parameter.
struct BridgeSpec {
    double a = 0.0;
    double b = 0.0;
    double theta = 0.0;
};

inline double bridge_lt_log_tail(const BridgeSpec& s, double v) {
    const double A = std::abs(s.a) + std::abs(s.a + s.b) + v;
    return 0.5 * s.b * s.b - 0.5 * A * A;
}

// P(L > v) = e^{b^2/2} e^{-(|a| + |a+b| + v)^2 / 2}
inline double bridge_lt_tail(const BridgeSpec& s, double v) {
    if (v < 0.0) throw domain_error("bridge_lt_tail: v must be >= 0");
    return std::clamp(std::exp(bridge_lt_log_tail(s, v)), 0.0, 1.0);
}

inline double bridge_hit_probability(const BridgeSpec& s) { return bridge_lt_tail(s, 0.0); }

// Inverse CDF with the atom at zero.
inline double bridge_lt_from_uniform(const BridgeSpec& s, double u) {
    const double log_p0 = std::min(0.0, bridge_lt_log_tail(s, 0.0));
    const double lu = std::log(u);
    if (lu >= log_p0) return 0.0;
    const double A = std::abs(s.a) + std::abs(s.a + s.b);
    return std::max(0.0, std::sqrt(s.b * s.b - 2.0 * lu) - A);
}

inline double sample_bridge_local_time(const BridgeSpec& s, SequentialRng& rng) {
    return bridge_lt_from_uniform(s, rng.uniform());
}
inline double sample_bridge_local_time(const BridgeSpec& s, const RngStream& stream) {
    SequentialRng rng(stream);
    return sample_bridge_local_time(s, rng);
}

// E[L] = int_0^inf P(L > v) dv in closed form.
inline double bridge_lt_mean(const BridgeSpec& s) {
    const double A = std::abs(s.a) + std::abs(s.a + s.b);
    return std::exp(0.5 * s.b * s.b) * std::sqrt(2.0 * pi) * normal_sf(A);
}

// E[e^{theta L}] = 1 + theta sqrt(2 pi) e^{b^2/2 + theta^2/2 - theta A} Q(A - theta).
inline double bridge_exp_moment_closed(const BridgeSpec& s) {
    const double th = s.theta;
    if (th == 0.0) return 1.0;
    const double A = std::abs(s.a) + std::abs(s.a + s.b);
    const double z = A - th;
    // log Q(z) stays finite for large z via erfcx-style asymptotics
    double log_q;
    if (z < 30.0) {
        log_q = std::log(normal_sf(z));
    } else {
        const double z2 = z * z;
        log_q = -0.5 * z2 - std::log(z * std::sqrt(2.0 * pi)) + std::log1p(-1.0 / z2 + 3.0 / (z2 * z2));
    }
    return 1.0 + th * std::sqrt(2.0 * pi) * std::exp(0.5 * s.b * s.b + 0.5 * th * th - th * A + log_q);
}

struct QuadratureResult {
    double value = 0.0;
    double error_estimate = 0.0;
    double truncation = 0.0;
    int panels = 0;
};

// 1 + theta int_0^{v*} e^{theta v} P(L > v) dv, v* where the integrand is below
// 1e-16 of its peak; Gauss-Legendre panels, error from 15 vs 20 points.
inline QuadratureResult bridge_exp_moment_quad(const BridgeSpec& s) {
    const double th = s.theta;
    if (th == 0.0) return {1.0, 0.0, 0.0, 0};
    const double A = std::abs(s.a) + std::abs(s.a + s.b);
    auto log_f = [&](double v) { return th * v + bridge_lt_log_tail(s, v); };
    // log integrand is concave, peak at v = max(0, theta - A)
    const double v_peak = std::max(0.0, th - A);
    const double log_peak = log_f(v_peak);
    const double drop = std::log(1e16);
    double v_star = v_peak + 1.0;
    while (log_f(v_star) > log_peak - drop) v_star = v_peak + 2.0 * (v_star - v_peak);
    const int panels = std::max(8, static_cast<int>(std::ceil(v_star / 0.25)));
    const double h = v_star / panels;
    auto f = [&](double v) { return std::exp(log_f(v)); };
    double acc15 = 0.0, acc20 = 0.0;
    for (int p = 0; p < panels; ++p) {
        const double lo = p * h, hi = lo + h;
        acc15 += boost::math::quadrature::gauss<double, 15>::integrate(f, lo, hi);
        acc20 += boost::math::quadrature::gauss<double, 20>::integrate(f, lo, hi);
    }
    const double err = std::abs(acc20 - acc15) * std::abs(th);
    QuadratureResult r{1.0 + th * acc20, err, v_star, panels};
    if (!std::isfinite(r.value) || err > 1e-10 * std::max(1.0, std::abs(r.value)))
        throw numeric_error("bridge_exp_moment: quadrature did not converge (a=" + std::to_string(s.a) +
                            ", b=" + std::to_string(s.b) + ", theta=" + std::to_string(th) +
                            ", v*=" + std::to_string(v_star) + ", err=" + std::to_string(err) + ")");
    return r;
}

inline double bridge_exp_moment(const BridgeSpec& s) { return bridge_exp_moment_quad(s).value; }

// Envelope 1 + theta sqrt(2 pi) e^{theta^2/2}.
inline double bridge_exp_moment_bound(double theta) {
    return 1.0 + theta * std::sqrt(2.0 * pi) * std::exp(0.5 * theta * theta);
}

struct RescaledBridge {
    BridgeSpec spec;
    double scale = 1.0;
};

// Rate-r bridge 0 -> z on [0,t]: L = sqrt(r t) * L_std in law, local time
// against d<X,X>.
inline RescaledBridge rescale_bridge_lt(double t, double rate, double z) {
    if (!(t > 0.0) || !(rate > 0.0)) throw domain_error("rescale_bridge_lt: t and rate must be > 0");
    const double sc = std::sqrt(rate * t);
    return {{0.0, z / sc, 0.0}, sc};
}

struct OccupationResult {
    std::vector<double> values;  // cumulative, one per grid point
    bool eps_too_small = false;
};

// (rate / 2 eps) sum dt 1{|path| < eps}, left-point rule.
inline OccupationResult occupation_local_time(std::span<const double> path, double dt, double quad_var_rate,
                                              double eps) {
    if (!(dt > 0.0) || !(quad_var_rate > 0.0) || !(eps > 0.0))
        throw domain_error("occupation_local_time: dt, rate and eps must be > 0");
    OccupationResult r;
    r.eps_too_small = eps < 4.0 * std::sqrt(quad_var_rate * dt);
    r.values.resize(path.size());
    const double w = quad_var_rate * dt / (2.0 * eps);
    double acc = 0.0;
    for (std::size_t i = 0; i < path.size(); ++i) {
        r.values[i] = acc;
        if (std::abs(path[i]) < eps) acc += w;
    }
    return r;
}

// Conditional E[e^{theta L}] over one grid step of a rate-r process going
// d0 -> d1 in time dt (a Brownian bridge given its endpoints).
inline double step_exp_moment(double d0, double d1, double dt, double rate, double theta) {
    const double sc = std::sqrt(rate * dt);
    const double A = (std::abs(d0) + std::abs(d1)) / sc;
    const double b = (d1 - d0) / sc;
    if (0.5 * (A * A - b * b) > 40.0) return 1.0;  // hit probability below e^{-40}
    return bridge_exp_moment_closed({d0 / sc, b, theta * sc});
}

// Exact conditional local time increment over one grid step, sampled.
inline double step_local_time(double d0, double d1, double dt, double rate, double u) {
    const double sc = std::sqrt(rate * dt);
    return sc * bridge_lt_from_uniform({d0 / sc, (d1 - d0) / sc, 0.0}, u);
}

}  // namespace sticky
