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
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <type_traits>
#include <vector>

#include "core.hpp"

namespace sticky {

inline unsigned default_threads() {
    const unsigned h = std::thread::hardware_concurrency();
    return h == 0 ? 1u : h;
}

// Result i depends only on i, so output is schedule independent.
template <class F>
auto parallel_map(std::size_t n, unsigned threads, F&& f) -> std::vector<std::invoke_result_t<F&, std::size_t>> {
    using R = std::invoke_result_t<F&, std::size_t>;
    std::vector<R> out(n);
    if (threads <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) out[i] = f(i);
        return out;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr err;
    std::mutex err_mu;
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n) return;
            try {
                out[i] = f(i);
            } catch (...) {
                std::lock_guard<std::mutex> lk(err_mu);
                if (!err) err = std::current_exception();
                next.store(n);
            }
        }
    };
    const unsigned w = static_cast<unsigned>(std::min<std::size_t>(threads, n));
    std::vector<std::thread> pool;
    pool.reserve(w);
    for (unsigned k = 0; k < w; ++k) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    if (err) std::rethrow_exception(err);
    return out;
}

inline constexpr std::size_t replica_chunk = 64;

// Monte Carlo over replicas: sample(r) gives one double per replica.
// Chunks of fixed size merged left to right.
template <class F>
MomentAccumulator replicate(std::size_t reps, unsigned threads, F&& sample) {
    const std::size_t chunks = (reps + replica_chunk - 1) / replica_chunk;
    auto parts = parallel_map(chunks, threads, [&](std::size_t c) {
        MomentAccumulator a;
        const std::size_t lo = c * replica_chunk, hi = std::min(reps, lo + replica_chunk);
        for (std::size_t r = lo; r < hi; ++r) a.add(sample(r));
        return a;
    });
    MomentAccumulator total;
    for (const auto& p : parts) total.merge(p);
    return total;
}

// Several observables per replica.
template <class F>
std::vector<MomentAccumulator> replicate_vec(std::size_t reps, std::size_t width, unsigned threads, F&& sample) {
    const std::size_t chunks = (reps + replica_chunk - 1) / replica_chunk;
    auto parts = parallel_map(chunks, threads, [&](std::size_t c) {
        std::vector<MomentAccumulator> a(width);
        const std::size_t lo = c * replica_chunk, hi = std::min(reps, lo + replica_chunk);
        for (std::size_t r = lo; r < hi; ++r) {
            const std::vector<double> v = sample(r);
            for (std::size_t j = 0; j < width; ++j) a[j].add(v[j]);
        }
        return a;
    });
    std::vector<MomentAccumulator> total(width);
    for (const auto& p : parts)
        for (std::size_t j = 0; j < width; ++j) total[j].merge(p[j]);
    return total;
}

}  // namespace sticky
