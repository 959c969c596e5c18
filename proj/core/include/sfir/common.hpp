// Copyright 2026 the sfir authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace sfir {

/// Validation failures: bad arguments, violated invariants, shape mismatches.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Filesystem and serialization failures; carries the offending path in the message.
class IoError : public Error {
public:
    explicit IoError(const std::string& msg) : Error(msg) {}
};

#define SFIR_CHECK(cond, msg)                      \
    do {                                           \
        if (!(cond)) throw ::sfir::Error(msg);     \
    } while (0)

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Deterministic RNG. All distributions are implemented here (not via
/// std::*_distribution, whose output is implementation-defined) so fixed
/// seeds give bit-identical streams.
class Rng {
public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    uint64_t next_u64() { return gen_(); }

    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n). Lemire reduction, bias < n / 2^64.
    int uniform_int(int n) {
        return static_cast<int>((static_cast<unsigned __int128>(next_u64()) *
                                 static_cast<uint64_t>(n)) >> 64);
    }

    /// Standard normal via Box-Muller.
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    /// Normal(0, sigma) resampled until |x| <= 2 sigma.
    double trunc_normal(double sigma) {
        for (;;) {
            const double z = normal();
            if (std::abs(z) <= 2.0) return z * sigma;
        }
    }

    /// Derive an independent seed for a named sub-stream.
    uint64_t fork(uint64_t salt) { return splitmix64(gen_() ^ splitmix64(salt)); }

private:
    std::mt19937_64 gen_;
};

}  // namespace sfir
