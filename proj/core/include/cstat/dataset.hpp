#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

namespace cstat {

// Binned counts with strictly increasing bin edges (edges.size() == n + 1).
// exposure scales expected counts; background, when present, is a fixed
// per-bin expectation added before the exposure factor is applied.
struct BinnedDataset {
    std::vector<long long> counts;
    std::vector<double> edges;
    double exposure = 1.0;
    std::optional<std::vector<double>> background;

    std::size_t n_bins() const { return counts.size(); }
    long long total_counts() const;

    // Throws validation_error on negative counts, non-monotone edges,
    // size mismatches, or a non-positive exposure.
    void validate() const;
};

struct RebinResult {
    BinnedDataset data;
    // The trailing group could not reach the minimum and was merged into
    // its left neighbour.
    bool merged_tail = false;
};

// Groups adjacent bins left to right until each group holds at least
// min_count counts. Background is summed alongside counts.
RebinResult rebin_min_counts(const BinnedDataset& d, long long min_count);

// Splits a dataset into k segments by assigning each recorded event to a
// segment uniformly at random (binomial thinning). Counts sum exactly to
// the original; each segment carries exposure / k and background / k.
// Cost is proportional to the total number of events.
std::vector<BinnedDataset> segment_dataset(const BinnedDataset& d,
                                           std::size_t k,
                                           std::uint64_t seed);

} // namespace cstat
