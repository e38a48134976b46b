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
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>

namespace sticky {

// error taxonomy
struct domain_error : std::domain_error {
    using std::domain_error::domain_error;
};
struct contract_error : std::logic_error {
    using std::logic_error::logic_error;
};
struct resource_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct numeric_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct calibration_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline constexpr double pi = 3.14159265358979323846;
inline constexpr double sqrt2 = 1.41421356237309504880;

struct CharacteristicMeasure {
    double nu_total = 0.5;
    double lambda = 2.0;  // 4 nu
    double sigma = 1.0;   // 1 / (2 nu)
};

inline CharacteristicMeasure derive_constants(double nu_total) {
    if (!(nu_total > 0.0) || !std::isfinite(nu_total))
        throw domain_error("derive_constants: nu_total must be finite and > 0 "
                           "(degenerate characteristic measure)");
    return {nu_total, 4.0 * nu_total, 1.0 / (2.0 * nu_total)};
}

// Window (Nt, N^{3/4} t + N^{1/2} x).
class ModerateDeviationScaling {
public:
    ModerateDeviationScaling(std::int64_t N, double t) : N_(N), t_(t) {
        if (N < 1) throw domain_error("ModerateDeviationScaling: N must be >= 1");
        if (!(t >= 0.0) || !std::isfinite(t)) throw domain_error("ModerateDeviationScaling: t must be >= 0");
        n_ = std::llround(static_cast<double>(N) * t);
        if (t > 0.0 && n_ < 1) throw domain_error("ModerateDeviationScaling: round(N t) must be >= 1");
        sqrtN_ = std::sqrt(static_cast<double>(N));
        quarterN_ = std::sqrt(sqrtN_);
    }
    std::int64_t N() const { return N_; }
    double t() const { return t_; }
    std::int64_t n() const { return n_; }
    double theta() const { return 1.0 / quarterN_; }
    double sqrtN() const { return sqrtN_; }
    double quarterN() const { return quarterN_; }
    double u(double x) const { return quarterN_ * sqrtN_ * t_ + sqrtN_ * x; }
    double x_of(double u) const { return (u - quarterN_ * sqrtN_ * t_) / sqrtN_; }

private:
    std::int64_t N_;
    double t_;
    std::int64_t n_ = 0;
    double sqrtN_ = 1.0, quarterN_ = 1.0;
};

struct MomentEstimate {
    double mean = 0.0;
    double std_err = 0.0;
    std::int64_t n_replicas = 0;
    std::string seed;  // stream descriptor
};

// Welford accumulator; merge is Chan's pairwise update.
class MomentAccumulator {
public:
    void add(double v) {
        ++n_;
        const double d = v - mean_;
        mean_ += d / static_cast<double>(n_);
        m2_ += d * (v - mean_);
    }
    void merge(const MomentAccumulator& o) {
        if (o.n_ == 0) return;
        if (n_ == 0) {
            *this = o;
            return;
        }
        const double na = static_cast<double>(n_), nb = static_cast<double>(o.n_);
        const double d = o.mean_ - mean_;
        const double n = na + nb;
        mean_ += d * nb / n;
        m2_ += o.m2_ + d * d * na * nb / n;
        n_ += o.n_;
    }
    std::int64_t count() const { return n_; }
    double mean() const { return mean_; }
    double variance() const { return n_ > 1 ? std::max(0.0, m2_) / static_cast<double>(n_ - 1) : 0.0; }
    double std_err() const { return n_ > 0 ? std::sqrt(variance() / static_cast<double>(n_)) : 0.0; }
    MomentEstimate estimate(std::string seed = {}) const {
        return {mean_, std_err(), n_, std::move(seed)};
    }

private:
    std::int64_t n_ = 0;
    double mean_ = 0.0;
    double m2_ = 0.0;
};

inline double z_score(double estimate, double oracle, double se) {
    const double diff = estimate - oracle;
    if (se > 0.0) return diff / se;
    if (diff == 0.0) return 0.0;
    return diff > 0 ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / sqrt2); }
inline double normal_sf(double x) { return 0.5 * std::erfc(x / sqrt2); }

}  // namespace sticky
