#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace msfem {

/// Raised for malformed configuration input (CLI exit code 2).
class config_error : public std::runtime_error {
public:
    explicit config_error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Raised for numerical failures such as non-convergence (CLI exit code 3).
class numeric_error : public std::runtime_error {
public:
    explicit numeric_error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Half-open rectangle of fine-cell indices [x0,x1) x [y0,y1).
struct CellRect {
    int x0 = 0, x1 = 0, y0 = 0, y1 = 0;

    int width() const { return x1 - x0; }
    int height() const { return y1 - y0; }
    int cell_count() const { return width() * height(); }
    bool contains(const CellRect& other) const {
        return other.x0 >= x0 && other.x1 <= x1 && other.y0 >= y0 && other.y1 <= y1;
    }
    bool contains_cell(int cx, int cy) const {
        return cx >= x0 && cx < x1 && cy >= y0 && cy < y1;
    }
    bool intersects(const CellRect& other) const {
        return other.x0 < x1 && other.x1 > x0 && other.y0 < y1 && other.y1 > y0;
    }
    bool operator==(const CellRect& other) const = default;

    /// Node grid covering the rect: (width+1) x (height+1) corners.
    int node_count() const { return (width() + 1) * (height() + 1); }

    CellRect grown(int layers, int nx, int ny) const {
        CellRect r{x0 - layers, x1 + layers, y0 - layers, y1 + layers};
        if (r.x0 < 0) r.x0 = 0;
        if (r.y0 < 0) r.y0 = 0;
        if (r.x1 > nx) r.x1 = nx;
        if (r.y1 > ny) r.y1 = ny;
        return r;
    }
};

inline uint64_t splitmix64(uint64_t& state) {
    state += 0x9e3779b97f4a7c15ULL;
    uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Deterministic random stream. Seeded by mixing an arbitrary key tuple so
/// that per-region streams are independent of evaluation order. Doubles are
/// produced from raw engine output; std distributions are avoided because
/// their output is not pinned down across standard library implementations.
class Rng {
public:
    explicit Rng(uint64_t seed) : engine_(seed) {}

    /// Stream keyed by (seed, a, b, c), e.g. (run seed, level, vertex, snapshot).
    /// Each component is folded in through a full avalanche pass so that
    /// nearby tuples cannot alias each other's streams.
    static Rng keyed(uint64_t seed, uint64_t a, uint64_t b, uint64_t c) {
        uint64_t s = seed;
        s = splitmix64(s) ^ a;
        s = splitmix64(s) ^ b;
        s = splitmix64(s) ^ c;
        return Rng(splitmix64(s));
    }

    uint64_t next_u64() { return engine_(); }

    /// Uniform in [0,1) with 53-bit resolution.
    double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Uniform in (-1,1).
    double uniform_sym() { return 2.0 * uniform01() - 1.0; }

    /// Uniform integer in [lo, hi] inclusive (rejection-free modulo is fine
    /// for the small ranges used here; bias < 2^-50).
    int64_t uniform_int(int64_t lo, int64_t hi) {
        uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
        return lo + static_cast<int64_t>(engine_() % span);
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace msfem
