#pragma once

#include <cstdint>

namespace cstat {

// One step of the splitmix64 sequence; advances state and returns the output.
std::uint64_t splitmix64_next(std::uint64_t& state);

// Mixes a stream key with an index into a new key. Chaining calls gives
// nested, decorrelated streams (experiment cell -> replicate -> bootstrap
// member) that do not depend on thread scheduling.
std::uint64_t derive_stream(std::uint64_t key, std::uint64_t index);

// xoshiro256++ generator seeded through splitmix64. The output sequence is
// fixed by the seed alone, identical across platforms and build types, which
// is why this is hand-rolled rather than taken from <random>: the standard
// distributions are implementation-defined and break byte-level
// reproducibility of reports.
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    std::uint64_t next_u64();

    // Uniform on [0, 1) with 53 random bits.
    double next_double();

    // Uniform integer in [0, bound). Used for event assignment in thinning.
    std::uint64_t next_below(std::uint64_t bound);

    // Exact Poisson sampler: sequential inversion for rate < 30, transformed
    // rejection (PTRS) above. Deterministic given the generator state.
    long long poisson(double rate);

private:
    long long poisson_inversion(double rate);
    long long poisson_ptrs(double rate);

    std::uint64_t s_[4];
};

} // namespace cstat
