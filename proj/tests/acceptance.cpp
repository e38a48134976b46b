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
// Acceptance suite: one PASS/FAIL line per criterion. Arguments select a
// subset, e.g. `acceptance 3 11`.
#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include "sticky/config.hpp"

using namespace sticky;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string secs(double s) {
    char b[32];
    std::snprintf(b, sizeof b, "%.1f s", s);
    return b;
}

template <class Cdf>
double ks_distance(std::vector<double> xs, Cdf&& F) {
    std::sort(xs.begin(), xs.end());
    const double n = static_cast<double>(xs.size());
    double d = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double f = F(xs[i]);
        d = std::max({d, std::abs(static_cast<double>(i + 1) / n - f), std::abs(f - static_cast<double>(i) / n)});
    }
    return d;
}

// sup (G - F_n)
template <class Cdf>
double ks_shortfall(std::vector<double> xs, Cdf&& G) {
    std::sort(xs.begin(), xs.end());
    const double n = static_cast<double>(xs.size());
    double d = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) d = std::max(d, G(xs[i]) - static_cast<double>(i) / n);
    return d;
}

void print_checks(const ExperimentReport& r, const std::function<bool(const ContractCheck&)>& keep) {
    for (const auto& c : r.checks)
        if (keep(c)) std::printf("    %s %s: %s\n", c.pass ? "ok  " : "FAIL", c.name.c_str(), c.detail.c_str());
}

bool all_of_checks(const ExperimentReport& r, const std::function<bool(const ContractCheck&)>& keep) {
    bool ok = true, any = false;
    for (const auto& c : r.checks)
        if (keep(c)) {
            any = true;
            ok = ok && c.pass;
        }
    return ok && any;
}

const unsigned threads = default_threads();

Outcome c1_conservation() {
    const auto t0 = std::chrono::steady_clock::now();
    const auto m = two_point_for_field(0.5, 4096);
    const auto base = derive_stream(1001, {});
    const auto dev = parallel_map(100, threads, [&](std::size_t r) {
        return std::abs(evolve(m, base.child(r), 10000).mass() - 1.0);
    });
    const double worst = *std::max_element(dev.begin(), dev.end());
    const double el = seconds_since(t0);
    return {worst <= 1e-12 && el < 10.0, "max |sum K - 1| = " + fmt_num(worst) + " over 100 environments, " + secs(el) +
                                             " (limit 10 s, " + std::to_string(threads) + " threads)"};
}

Outcome c2_first_moment() {
    auto c = default_config("first-moment");
    c.threads = threads;
    const auto r = run_experiment(c);
    print_checks(r, [](const ContractCheck&) { return true; });
    return {r.pass(), std::to_string(c.N.size() * c.test_functions.size()) + "-cell grid, " +
                          std::to_string(c.env_replicas) + " replicas"};
}

Outcome c3_she_oracle() {
    const auto t0 = std::chrono::steady_clock::now();
    auto c = default_config("she-oracle");
    const auto r = run_experiment(c);
    const double el = seconds_since(t0);
    print_checks(r, [](const ContractCheck&) { return true; });
    return {r.pass() && el < 30.0, "3x3x3 grid, " + secs(el) + " (limit 30 s)"};
}

Outcome c4_two_point() {
    const auto m = derive_constants(0.5);
    const auto base = derive_stream(1004, {});
    const std::size_t reps = 100000;
    const auto z = parallel_map(reps, threads, [&](std::size_t r) {
        const auto s = sample_two_point_terminal(m, 1.0, 1e-3, base.child(r));
        return std::pair<double, double>{std::abs(s.d), m.lambda * s.v};
    });
    MomentAccumulator diff, d, lv;
    std::vector<double> lvs;
    lvs.reserve(reps);
    for (const auto& [a, b] : z) {
        diff.add(a - b);
        d.add(a);
        lv.add(b);
        lvs.push_back(b);
    }
    const bool mart = std::abs(diff.mean()) <= 4.0 * diff.std_err();
    const double ks = ks_shortfall(lvs, [](double x) { return 2.0 * normal_cdf(x / sqrt2) - 1.0; });
    return {mart && ks <= 0.01, "E|X-Y| = " + fmt_num(d.mean()) + ", lambda E[V] = " + fmt_num(lv.mean()) +
                                    ", difference " + fmt_num(diff.mean()) + " +- " + fmt_num(diff.std_err()) +
                                    "; one-sided KS vs sqrt(2) max B = " + fmt_num(ks)};
}

Outcome c5_girsanov() {
    const auto m = derive_constants(0.5);
    const std::vector<std::pair<std::string, Functional2>> fs{
        {"1", [](double, double) { return 1.0; }},
        {"1{x+y>0}", [](double x, double y) { return x + y > 0.0 ? 1.0 : 0.0; }},
        {"exp(-(x-y)^2)", [](double x, double y) { return std::exp(-(x - y) * (x - y)); }},
    };
    bool ok = true;
    std::string detail;
    for (const auto& [name, f] : fs) {
        // one ensemble, shared by the three functionals
        const auto r = girsanov_two_point_check(m, 0.5, 1.0, f, 1e-3, 200000, derive_stream(1005, {}), threads);
        const double se = std::sqrt(r.lhs.std_err * r.lhs.std_err + r.rhs.std_err * r.rhs.std_err);
        const bool pass = std::abs(r.lhs.mean - r.rhs.mean) <= 4.0 * se;
        ok = ok && pass;
        std::printf("    %s f = %s: LHS %s, RHS %s, combined se %s\n", pass ? "ok  " : "FAIL", name.c_str(),
                    fmt_num(r.lhs.mean).c_str(), fmt_num(r.rhs.mean).c_str(), fmt_num(se).c_str());
        detail += (detail.empty() ? "" : "; ") + name + " z=" + fmt_num((r.lhs.mean - r.rhs.mean) / se);
    }
    return {ok, detail};
}

Outcome c6_pitman() {
    SequentialRng g(derive_stream(1006, {}));
    std::vector<double> v(100000);
    for (auto& x : v) x = sample_bridge_local_time({0, 0, 0}, g);
    const double ks = ks_distance(v, [](double x) { return 1.0 - std::exp(-0.5 * x * x); });
    bool ok = ks <= 0.01;
    std::string detail = "KS " + fmt_num(ks);
    const BridgeSpec sp{0.0, 0.0, 1.0};
    const auto base = derive_stream(1006, {1});
    const auto acc = replicate(100000, threads, [&](std::size_t r) {
        SequentialRng h(base.child(r));
        return std::exp(sample_bridge_local_time(sp, h));
    });
    const double q = bridge_exp_moment(sp);
    const bool mom = std::abs(acc.mean() - q) <= 4.0 * acc.std_err();
    ok = ok && mom;
    detail += "; E[e^L] MC " + fmt_num(acc.mean()) + " +- " + fmt_num(acc.std_err()) + " vs quadrature " + fmt_num(q);
    int viol = 0, grid = 0;
    for (double th = 0.05; th <= 5.0 + 1e-9; th += 0.05)
        for (double a : {0.0, -0.3, 0.7, 2.0})
            for (double b : {0.0, 0.5, -1.5}) {
                ++grid;
                if (bridge_exp_moment({a, b, th}) > bridge_exp_moment_bound(th)) ++viol;
            }
    ok = ok && viol == 0;
    detail += "; bound violated at " + std::to_string(viol) + "/" + std::to_string(grid) + " grid points";
    return {ok, detail};
}

ExperimentReport& tail_report() {
    static ExperimentReport r = [] {
        auto c = default_config("tail");
        c.threads = threads;
        return run_experiment(c);
    }();
    return r;
}

bool is_pair_check(const ContractCheck& c) {
    return c.name.find("E[F(x)F(y)]") != std::string::npos || c.name.find("two-point") != std::string::npos;
}

Outcome c7_tail_first_moment() {
    auto& r = tail_report();
    auto keep = [](const ContractCheck& c) { return !is_pair_check(c) && c.name.rfind("contour oracle", 0) != 0; };
    print_checks(r, keep);
    return {all_of_checks(r, keep), "N = 4096, t = 1, x in {-0.5, 0, 0.5}, " +
                                        tail_report().budgets.at("env_replicas") + " environments"};
}

Outcome c8_tail_two_point() {
    auto& r = tail_report();
    auto keep = [](const ContractCheck& c) { return is_pair_check(c) || c.name.rfind("contour oracle", 0) == 0; };
    print_checks(r, keep);
    return {all_of_checks(r, keep), "N in {256, 1024, 4096}, nu = 0.5, " + r.budgets.at("env_replicas") + " environments"};
}

Outcome c9_moments() {
    auto c = default_config("moments");
    c.threads = threads;
    const auto r = run_experiment(c);
    print_checks(r, [](const ContractCheck&) { return true; });
    return {r.pass(), "k = 2 and 3, " + r.budgets.at("env_replicas") + " environments, oracle " +
                          r.budgets.at("path_replicas") + " paths"};
}

Outcome c10_max() {
    auto c = default_config("max");
    c.threads = threads;
    const auto r = run_experiment(c);
    print_checks(r, [](const ContractCheck&) { return true; });
    return {r.pass(), "N = 1024, k = floor(e^16)"};
}

Outcome c11_determinism() {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<unsigned> counts{1, 4, std::max(1u, default_threads())};
    std::vector<std::string> csv;
    for (unsigned t : counts) {
        auto c = default_config("selftest");
        c.threads = t;
        const auto r = run_experiment(c);
        std::string all = report_csv(r);
        for (const auto& [name, tab] : r.tables) all += table_csv(tab);
        csv.push_back(all);
    }
    const bool same = csv[0] == csv[1] && csv[0] == csv[2];
    const double el = seconds_since(t0);
    return {same && el < 180.0, std::string(same ? "byte-identical" : "DIFFERENT") + " CSV for threads {1, 4, " +
                                    std::to_string(counts[2]) + "}, " + std::to_string(csv[0].size()) + " bytes, " +
                                    secs(el)};
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> all{
        {"kernel conservation", c1_conservation},
        {"first-moment exactness", c2_first_moment},
        {"SHE second-moment oracle triangle", c3_she_oracle},
        {"two-point SBM identities", c4_two_point},
        {"Girsanov identity", c5_girsanov},
        {"bridge local-time law", c6_pitman},
        {"tail-field first moment", c7_tail_first_moment},
        {"two-point tail correlation", c8_tail_two_point},
        {"moment convergence", c9_moments},
        {"max statistics", c10_max},
        {"determinism", c11_determinism},
    };
    std::set<int> pick;
    for (int i = 1; i < argc; ++i) pick.insert(std::atoi(argv[i]));
    int failed = 0;
    std::vector<std::string> lines;
    for (std::size_t i = 0; i < all.size(); ++i) {
        const int id = static_cast<int>(i + 1);
        if (!pick.empty() && !pick.count(id)) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = all[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        char head[160];
        std::snprintf(head, sizeof head, "criterion %2d %s: %s", id, o.pass ? "PASS" : "FAIL", all[i].first.c_str());
        const std::string line = std::string(head) + " (" + o.detail + ") [" + secs(seconds_since(t0)) + "]";
        std::printf("%s\n", line.c_str());
        std::fflush(stdout);
        lines.push_back(line);
        failed += o.pass ? 0 : 1;
    }
    std::printf("\nsummary\n");
    for (const auto& l : lines) std::printf("%s\n", l.c_str());
    std::printf("%d of %zu criteria failed\n", failed, lines.size());
    return failed == 0 ? 0 : 1;
}
