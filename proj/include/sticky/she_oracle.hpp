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
#include <complex>
#include <span>
#include <vector>

#include "core.hpp"
#include "fields.hpp"
#include "local_time.hpp"
#include "parallel.hpp"
#include "rng.hpp"

namespace sticky {

inline double heat_kernel(double t, double x) {
    if (!(t > 0.0)) throw domain_error("heat_kernel: t must be > 0");
    return std::exp(-0.5 * x * x / t) / std::sqrt(2.0 * pi * t);
}

// Pair difference of two rate-1 bridges: rate-2 bridge 0 -> x - y on [0,t].
inline BridgeSpec she_pair_spec(double t, double x, double y, double sigma) {
    RescaledBridge rb = rescale_bridge_lt(t, 2.0, x - y);
    rb.spec.theta = 0.5 * sigma * rb.scale;
    return rb.spec;
}

// E[Z_t(x) Z_t(y)] = p_t(x) p_t(y) E[e^{(sigma/2) L}].
inline double she_moment2_bridge(double t, double x, double y, double sigma) {
    if (!(sigma >= 0.0)) throw domain_error("she_moment2_bridge: sigma must be >= 0");
    return heat_kernel(t, x) * heat_kernel(t, y) * bridge_exp_moment(she_pair_spec(t, x, y, sigma));
}

// Closed-form evaluation of the same quantity (used in inner loops).
inline double she_moment2_closed(double t, double x, double y, double sigma) {
    return heat_kernel(t, x) * heat_kernel(t, y) * bridge_exp_moment_closed(she_pair_spec(t, x, y, sigma));
}

struct ContourSpec {
    double r1 = 0.0;
    double r2 = 2.0;
    double z_max = 8.0;
    int n_nodes = 4001;
};

inline ContourSpec default_contour(double t, double sigma) {
    ContourSpec c;
    c.r1 = 0.0;
    c.r2 = sigma + 1.0;
    c.z_max = std::max(8.0, std::sqrt(90.0 / t));
    c.n_nodes = 4001;
    return c;
}

struct ContourResult {
    double value = 0.0;
    double imag = 0.0;
    double truncation_bound = 0.0;
};

// Double trapezoid on z_k = r_k + i w, |w| <= z_max, of
// (z2 - z1)/(z2 - z1 - sigma) e^{(t/2)(z1^2 + z2^2) + x z1 + y z2} dw1 dw2 / (2 pi)^2.
// factorized = true drops the ratio. The representation holds with z2 paired
// to the smaller point, so the arguments are ordered first.
inline ContourResult she_moment2_contour_full(double t, double x, double y, double sigma, const ContourSpec& c,
                                              bool factorized = false) {
    if (y > x) std::swap(x, y);
    if (!(t > 0.0)) throw domain_error("she_moment2_contour: t must be > 0");
    if (!(c.r2 > c.r1 + sigma))
        throw contract_error("she_moment2_contour: need r2 > r1 + sigma (the contour would cross the pole)");
    if (!(c.z_max > 0.0) || c.n_nodes < 3) throw contract_error("she_moment2_contour: z_max and n_nodes must be positive");
    using cd = std::complex<double>;
    const int n = c.n_nodes;
    const double h = 2.0 * c.z_max / static_cast<double>(n - 1);
    std::vector<cd> e1(n), e2(n);
    std::vector<double> w(n);
    for (int i = 0; i < n; ++i) {
        w[i] = -c.z_max + h * i;
        const double tw = (i == 0 || i == n - 1) ? 0.5 : 1.0;
        const cd z1(c.r1, w[i]), z2(c.r2, w[i]);
        e1[i] = tw * std::exp(0.5 * t * z1 * z1 + x * z1);
        e2[i] = tw * std::exp(0.5 * t * z2 * z2 + y * z2);
    }
    const double norm = h * h / (4.0 * pi * pi);
    cd f1 = 0.0, f2 = 0.0;
    for (int i = 0; i < n; ++i) {
        f1 += e1[i];
        f2 += e2[i];
    }
    cd total = f1 * f2;
    if (!factorized) {
        // ratio = 1 + sigma / (z2 - z1 - sigma); the correction depends on w2 - w1 only
        const double gap = c.r2 - c.r1 - sigma;
        std::vector<cd> kern(2 * n - 1);
        for (int m = -(n - 1); m <= n - 1; ++m) kern[m + n - 1] = sigma / cd(gap, h * m);
        cd corr = 0.0;
        for (int i = 0; i < n; ++i) {
            cd row = 0.0;
            const cd* kp = kern.data() + (n - 1) - i;
            for (int j = 0; j < n; ++j) row += kp[j] * e2[j];
            corr += e1[i] * row;
        }
        total += corr;
    }
    total *= norm;
    ContourResult r;
    r.value = total.real();
    r.imag = total.imag();
    // Gaussian tails beyond z_max on each line
    const double tail1 = std::exp(0.5 * t * c.r1 * c.r1 + x * c.r1) * std::exp(-0.5 * t * c.z_max * c.z_max) /
                         (t * c.z_max);
    const double tail2 = std::exp(0.5 * t * c.r2 * c.r2 + y * c.r2) * std::exp(-0.5 * t * c.z_max * c.z_max) /
                         (t * c.z_max);
    const double ratio_max = 1.0 + sigma / std::max(c.r2 - c.r1 - sigma, 1e-300);
    r.truncation_bound = ratio_max * (tail1 * std::abs(f2) + tail2 * std::abs(f1)) * h / (2.0 * pi * pi);
    return r;
}

inline double she_moment2_contour(double t, double x, double y, double sigma, const ContourSpec& c) {
    return she_moment2_contour_full(t, x, y, sigma, c).value;
}
inline double she_moment2_contour(double t, double x, double y, double sigma) {
    return she_moment2_contour(t, x, y, sigma, default_contour(t, sigma));
}

enum class PairLocalTime {
    bridge_increment,  // exact conditional E[e^{theta L}] per grid step given the endpoints
    occupation,        // (rate/2eps) occupation time of (-eps, eps)
};

namespace detail {
// Weight exp((sigma/2) sum_{i<j} L^{ij}) for k paths stored column-wise: paths[j][step].
inline double pair_weight(const std::vector<std::vector<double>>& paths, double dt, double sigma, PairLocalTime est,
                          double eps) {
    const std::size_t k = paths.size();
    if (k < 2) return 1.0;
    const std::size_t steps = paths[0].size() - 1;
    double log_w = 0.0;
    std::vector<double> diff(steps + 1);
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = i + 1; j < k; ++j) {
            for (std::size_t s = 0; s <= steps; ++s) diff[s] = paths[i][s] - paths[j][s];
            if (est == PairLocalTime::occupation) {
                double occ = 0.0;
                for (std::size_t s = 0; s < steps; ++s)
                    if (std::abs(diff[s]) < eps) occ += 1.0;
                log_w += 0.5 * sigma * occ * 2.0 * dt / (2.0 * eps);
            } else {
                for (std::size_t s = 0; s < steps; ++s)
                    log_w += std::log(step_exp_moment(diff[s], diff[s + 1], dt, 2.0, 0.5 * sigma));
            }
        }
    }
    return std::exp(log_w);
}
}  // namespace detail

struct KMomentOptions {
    PairLocalTime estimator = PairLocalTime::bridge_increment;
    unsigned threads = 1;
};

// E[prod Z_t(x_i)] = prod p_t(x_i) E[exp((sigma/2) sum_{i<j} L^{ij})] over
// independent bridges 0 -> x_i on [0,t], one joint ensemble per replica.
inline MomentEstimate she_moment_k_mc(double t, std::span<const double> points, double sigma, double dt, double eps,
                                      std::size_t reps, const RngStream& stream, KMomentOptions opt = {}) {
    if (points.empty()) throw domain_error("she_moment_k_mc: need at least one point");
    double prod_p = 1.0;
    for (double x : points) prod_p *= heat_kernel(t, x);
    if (points.size() == 1) return {prod_p, 0.0, static_cast<std::int64_t>(reps), stream.descriptor()};
    const std::int64_t n = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::ceil(t / dt - 1e-9)));
    const double h = t / static_cast<double>(n);
    const std::vector<double> pts(points.begin(), points.end());
    auto acc = replicate(reps, opt.threads, [&](std::size_t r) {
        SequentialRng rng(stream.child(r));
        std::vector<std::vector<double>> paths(pts.size(), std::vector<double>(static_cast<std::size_t>(n + 1)));
        const double sh = std::sqrt(h);
        for (std::size_t j = 0; j < pts.size(); ++j) {
            auto& p = paths[j];
            p[0] = 0.0;
            for (std::int64_t s = 1; s <= n; ++s) p[s] = p[s - 1] + sh * rng.normal();
            const double wt = p[n];
            for (std::int64_t s = 0; s <= n; ++s) {
                const double f = static_cast<double>(s) / static_cast<double>(n);
                p[s] += f * (pts[j] - wt);
            }
        }
        return detail::pair_weight(paths, h, sigma, opt.estimator, eps);
    });
    MomentEstimate e = acc.estimate(stream.descriptor());
    e.mean *= prod_p;
    e.std_err *= prod_p;
    return e;
}

// E[prod phi(B^j_t) exp((sigma/2) sum L^{ij})] over independent free BMs.
inline MomentEstimate she_pairing_moment_mc(double t, const TestFunction& phi, std::size_t k, double sigma, double dt,
                                            std::size_t reps, const RngStream& stream, KMomentOptions opt = {},
                                            double eps = 0.01) {
    const std::int64_t n = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::ceil(t / dt - 1e-9)));
    const double h = t / static_cast<double>(n);
    auto acc = replicate(reps, opt.threads, [&](std::size_t r) {
        SequentialRng rng(stream.child(r));
        std::vector<std::vector<double>> paths(k, std::vector<double>(static_cast<std::size_t>(n + 1)));
        const double sh = std::sqrt(h);
        double prod = 1.0;
        for (std::size_t j = 0; j < k; ++j) {
            auto& p = paths[j];
            p[0] = 0.0;
            for (std::int64_t s = 1; s <= n; ++s) p[s] = p[s - 1] + sh * rng.normal();
            prod *= phi(p[n]);
        }
        if (prod == 0.0) return 0.0;
        return prod * detail::pair_weight(paths, h, sigma, opt.estimator, eps);
    });
    return acc.estimate(stream.descriptor());
}

// int int phi(x) phi(y) E[Z_t(x) Z_t(y)] dx dy in (s, d) = (x + y, x - y)
// coordinates, so the cusp at x = y sits on a panel edge.
inline double she_pairing_moment2(double t, const TestFunction& phi, double sigma, int panels = 60) {
    const double reach = 12.0 * std::sqrt(t);
    const double a = std::max(phi.lo, -reach), b = std::min(phi.hi, reach);
    if (!(b > a)) return 0.0;
    const double width = b - a;
    using GL = boost::math::quadrature::gauss<double, 20>;
    auto inner = [&](double d) {
        // s ranges so that x = (s + d)/2 and y = (s - d)/2 lie in [a, b]
        const double s_lo = 2.0 * a + d, s_hi = 2.0 * b - d;
        if (!(s_hi > s_lo)) return 0.0;
        const int ps = std::max(4, static_cast<int>(std::ceil(panels * (s_hi - s_lo) / (2.0 * width))));
        const double hs = (s_hi - s_lo) / ps;
        double acc = 0.0;
        for (int i = 0; i < ps; ++i) {
            acc += GL::integrate(
                [&](double s) {
                    const double x = 0.5 * (s + d), y = 0.5 * (s - d);
                    return phi(x) * phi(y) * she_moment2_closed(t, x, y, sigma);
                },
                s_lo + i * hs, s_lo + (i + 1) * hs);
        }
        return acc;
    };
    const double hd = width / panels;
    double acc = 0.0;
    for (int i = 0; i < panels; ++i) acc += GL::integrate(inner, i * hd, (i + 1) * hd);
    // d and -d both counted; Jacobian 1/2
    return acc;
}

// N^{1/4} E[e^{-N^{1/4}(B_t - x)} 1{B_t >= x}] = int_0^inf e^{-s} p_t(x + s / kappa) ds.
inline double tail_first_moment_oracle(double t, double x, double kappa) {
    if (!(kappa > 0.0)) throw domain_error("tail_first_moment_oracle: kappa must be > 0");
    using GL = boost::math::quadrature::gauss<double, 20>;
    double acc = 0.0;
    for (int i = 0; i < 60; ++i)
        acc += GL::integrate([&](double s) { return std::exp(-s) * heat_kernel(t, x + s / kappa); }, i, i + 1.0);
    return acc;
}

// int phi p_t
inline double heat_pairing(double t, const TestFunction& phi) {
    const double reach = 14.0 * std::sqrt(t);
    const double a = std::max(phi.lo, -reach), b = std::min(phi.hi, reach);
    if (!(b > a)) return 0.0;
    const int panels = 400;
    const double h = (b - a) / panels;
    double acc = 0.0;
    for (int i = 0; i < panels; ++i)
        acc += boost::math::quadrature::gauss<double, 20>::integrate(
            [&](double x) { return phi(x) * heat_kernel(t, x); }, a + i * h, a + (i + 1) * h);
    return acc;
}

}  // namespace sticky
