// Shared infrastructure: error taxonomy, deterministic RNG streams,
// content hashing, fixed-point helpers and a bounded parallel_for.
#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace qnpe {

enum class ErrKind {
    Format,
    Value,
    EmptyInput,
    Parameter,
    Invariant,
    Bounds,
    ZeroNorm,
    Unitarity,
    ImpossibleOutcome,
    Representation,
    NoOverlap,
    ZeroDifference,
    Span,
    RealAmplitude,
    NoNeighbors,
    Precision,
    Exhausted,
    DegenerateRow,
    IsolatedPoint,
    Comparison,
    Io,
    Internal,
};

std::string_view to_string(ErrKind k);

// Structured error. `step` carries the pipeline step number when the failure
// happened inside a staged algorithm run.
class Error : public std::runtime_error {
public:
    Error(ErrKind kind, std::string msg)
        : std::runtime_error(std::move(msg)), kind_(kind) {}
    Error(ErrKind kind, std::string msg, int step)
        : std::runtime_error(std::move(msg)), kind_(kind), step_(step) {}

    ErrKind kind() const { return kind_; }
    std::optional<int> step() const { return step_; }
    Error with_step(int step) const { return Error(kind_, what(), step); }

private:
    ErrKind kind_;
    std::optional<int> step_;
};

// ---------------------------------------------------------------------------
// Deterministic seeding. Every stochastic component draws from a stream
// derived from (master seed, stream label, branch index), so results do not
// depend on thread scheduling or call interleaving.

uint64_t splitmix64(uint64_t x);
uint64_t derive_seed(uint64_t master, std::string_view stream, uint64_t index = 0);

class Rng {
public:
    explicit Rng(uint64_t seed) : s_(seed == 0 ? 0x9e3779b97f4a7c15ULL : seed) {
        for (int i = 0; i < 4; ++i) next();
    }

    uint64_t next() {
        s_ += 0x9e3779b97f4a7c15ULL;
        uint64_t z = s_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0,1).
    double uniform() { return double(next() >> 11) * 0x1.0p-53; }

    uint64_t uniform_int(uint64_t n);          // [0, n)
    size_t sample_pmf(const std::vector<double>& pmf);  // inverse-CDF draw

private:
    uint64_t s_;
};

// ---------------------------------------------------------------------------

uint64_t fnv1a64(std::string_view data);
uint64_t fnv1a64_file(const std::string& path);
std::string hex64(uint64_t v);

// Round-to-nearest fixed point with `frac_bits` fractional bits.
inline double fixed_point_round(double v, int frac_bits) {
    const double scale = std::ldexp(1.0, frac_bits);
    return std::nearbyint(v * scale) / scale;
}

// Number of workers: min(QNPE_THREADS or hardware, n), at least 1.
unsigned worker_count(size_t n);

// Index-deterministic parallel loop; fn(i) must not depend on execution order.
void parallel_for(size_t n, const std::function<void(size_t)>& fn);

inline int ceil_log2(uint64_t n) {
    int b = 0;
    while ((1ULL << b) < n) ++b;
    return b;
}

inline uint64_t next_pow2(uint64_t n) { return n <= 1 ? 1 : (1ULL << ceil_log2(n)); }

}  // namespace qnpe
