#include "sni_sight/rng.hpp"

#include <cmath>
#include <sstream>

#include "sni_sight/error.hpp"

namespace sni_sight {

std::uint64_t Rng::uniform_index(std::uint64_t bound) {
    if (bound == 0) throw Error(ErrorCode::BadConfig, "uniform_index bound must be positive");
    // Rejection sampling on the top of the range keeps the draw unbiased.
    const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % bound);
    std::uint64_t x = engine_();
    while (x >= limit) x = engine_();
    return x % bound;
}

double Rng::exponential(double mean) {
    double u = uniform01();
    return -mean * std::log1p(-u);
}

std::string Rng::state() const {
    std::ostringstream out;
    out << engine_;
    return out.str();
}

void Rng::restore(const std::string& state) {
    std::istringstream in(state);
    in >> engine_;
    if (!in) throw Error(ErrorCode::BadConfig, "unreadable rng state");
}

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t basis) {
    std::uint64_t h = basis;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t derive_seed(std::uint64_t parent, std::string_view tag, std::uint64_t index) {
    std::uint64_t z = parent ^ fnv1a64(tag) ^ (index * 0x9e3779b97f4a7c15ULL);
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace sni_sight
