#include "qnpe/common.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

namespace qnpe {

std::string_view to_string(ErrKind k) {
    switch (k) {
        case ErrKind::Format: return "format_error";
        case ErrKind::Value: return "value_error";
        case ErrKind::EmptyInput: return "empty_input_error";
        case ErrKind::Parameter: return "parameter_error";
        case ErrKind::Invariant: return "invariant_error";
        case ErrKind::Bounds: return "bounds_error";
        case ErrKind::ZeroNorm: return "zero_norm_error";
        case ErrKind::Unitarity: return "unitarity_error";
        case ErrKind::ImpossibleOutcome: return "impossible_outcome_error";
        case ErrKind::Representation: return "representation_error";
        case ErrKind::NoOverlap: return "no_overlap_error";
        case ErrKind::ZeroDifference: return "zero_difference_error";
        case ErrKind::Span: return "span_error";
        case ErrKind::RealAmplitude: return "real_amplitude_error";
        case ErrKind::NoNeighbors: return "no_neighbors_error";
        case ErrKind::Precision: return "precision_error";
        case ErrKind::Exhausted: return "exhausted_error";
        case ErrKind::DegenerateRow: return "degenerate_row_error";
        case ErrKind::IsolatedPoint: return "isolated_point_error";
        case ErrKind::Comparison: return "comparison_error";
        case ErrKind::Io: return "io_error";
        case ErrKind::Internal: return "internal_error";
    }
    return "unknown_error";
}

uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

uint64_t derive_seed(uint64_t master, std::string_view stream, uint64_t index) {
    uint64_t h = splitmix64(master ^ 0x51c6f5a1b2e9d3c7ULL);
    h = splitmix64(h ^ fnv1a64(stream));
    h = splitmix64(h ^ index);
    return h == 0 ? 0x2545f4914f6cdd1dULL : h;
}

uint64_t Rng::uniform_int(uint64_t n) {
    if (n == 0) throw Error(ErrKind::Parameter, "uniform_int: n must be positive");
    // Rejection sampling avoids modulo bias.
    const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t v = next();
    while (v >= limit) v = next();
    return v % n;
}

size_t Rng::sample_pmf(const std::vector<double>& pmf) {
    double total = 0.0;
    for (double p : pmf) total += p;
    if (!(total > 0.0))
        throw Error(ErrKind::Value, "sample_pmf: probability mass is not positive");
    double u = uniform() * total;
    double acc = 0.0;
    for (size_t i = 0; i < pmf.size(); ++i) {
        acc += pmf[i];
        if (u < acc) return i;
    }
    // Fall back to the last nonzero cell (u landed on accumulated rounding).
    for (size_t i = pmf.size(); i-- > 0;)
        if (pmf[i] > 0.0) return i;
    return pmf.size() - 1;
}

uint64_t fnv1a64(std::string_view data) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

uint64_t fnv1a64_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrKind::Io, "cannot open file for hashing: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return fnv1a64(ss.str());
}

std::string hex64(uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[size_t(i)] = digits[v & 0xF];
        v >>= 4;
    }
    return out;
}

unsigned worker_count(size_t n) {
    unsigned hw = std::thread::hardware_concurrency();
    if (hw == 0) hw = 1;
    if (const char* env = std::getenv("QNPE_THREADS")) {
        char* end = nullptr;
        long v = std::strtol(env, &end, 10);
        if (end != env && v > 0) hw = unsigned(v);
    }
    if (n < hw) hw = unsigned(n);
    return hw == 0 ? 1 : hw;
}

void parallel_for(size_t n, const std::function<void(size_t)>& fn) {
    if (n == 0) return;
    const unsigned workers = worker_count(n);
    if (workers == 1) {
        for (size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<size_t> cursor{0};
    std::exception_ptr first_error;
    std::atomic<bool> failed{false};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    std::atomic<int> error_guard{0};
    for (unsigned w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (;;) {
                size_t i = cursor.fetch_add(1);
                if (i >= n || failed.load()) return;
                try {
                    fn(i);
                } catch (...) {
                    if (error_guard.fetch_add(1) == 0) first_error = std::current_exception();
                    failed.store(true);
                    return;
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (failed.load() && first_error) std::rethrow_exception(first_error);
}

}  // namespace qnpe
