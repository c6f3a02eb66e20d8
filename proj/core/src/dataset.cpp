#include "cstat/dataset.hpp"

#include "cstat/common.hpp"
#include "cstat/rng.hpp"

#include <cmath>
#include <string>

namespace cstat {

long long BinnedDataset::total_counts() const {
    long long total = 0;
    for (long long c : counts) total += c;
    return total;
}

void BinnedDataset::validate() const {
    const std::size_t n = counts.size();
    if (n == 0) throw validation_error("E_SHAPE", "dataset: no bins");
    if (edges.size() != n + 1) {
        throw validation_error("E_SHAPE", "dataset: edges must have n + 1 entries, got " +
                                              std::to_string(edges.size()) + " for n = " +
                                              std::to_string(n));
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (counts[i] < 0) {
            throw validation_error("E_DOMAIN", "dataset: negative count in bin " +
                                                   std::to_string(i + 1));
        }
    }
    for (std::size_t i = 0; i + 1 < edges.size(); ++i) {
        if (!std::isfinite(edges[i]) || !std::isfinite(edges[i + 1]) ||
            !(edges[i] < edges[i + 1])) {
            throw validation_error("E_DOMAIN", "dataset: edges must be finite and strictly "
                                               "increasing at position " + std::to_string(i));
        }
    }
    if (!std::isfinite(exposure) || !(exposure > 0.0)) {
        throw validation_error("E_DOMAIN", "dataset: exposure must be positive");
    }
    if (background) {
        if (background->size() != n) {
            throw validation_error("E_SHAPE", "dataset: background must have one entry per bin");
        }
        for (std::size_t i = 0; i < n; ++i) {
            double b = (*background)[i];
            if (!std::isfinite(b) || b < 0.0) {
                throw validation_error("E_DOMAIN", "dataset: background must be finite and "
                                                   "non-negative in bin " + std::to_string(i + 1));
            }
        }
    }
}

RebinResult rebin_min_counts(const BinnedDataset& d, long long min_count) {
    d.validate();
    if (min_count < 1) {
        throw validation_error("E_DOMAIN", "rebin: min_count must be at least 1");
    }
    RebinResult out;
    BinnedDataset& r = out.data;
    r.exposure = d.exposure;
    if (d.background) r.background.emplace();
    r.edges.push_back(d.edges.front());

    long long acc_counts = 0;
    double acc_bg = 0.0;
    for (std::size_t i = 0; i < d.n_bins(); ++i) {
        acc_counts += d.counts[i];
        if (d.background) acc_bg += (*d.background)[i];
        if (acc_counts >= min_count) {
            r.counts.push_back(acc_counts);
            if (d.background) r.background->push_back(acc_bg);
            r.edges.push_back(d.edges[i + 1]);
            acc_counts = 0;
            acc_bg = 0.0;
        }
    }
    if (acc_counts > 0 || r.edges.back() != d.edges.back()) {
        if (r.counts.empty()) {
            // Nothing reached the minimum; the whole dataset becomes one bin.
            r.counts.push_back(acc_counts);
            if (d.background) r.background->push_back(acc_bg);
            r.edges.push_back(d.edges.back());
        } else {
            r.counts.back() += acc_counts;
            if (d.background) r.background->back() += acc_bg;
            r.edges.back() = d.edges.back();
            out.merged_tail = true;
        }
    }
    return out;
}

std::vector<BinnedDataset> segment_dataset(const BinnedDataset& d,
                                           std::size_t k,
                                           std::uint64_t seed) {
    d.validate();
    if (k < 2) throw validation_error("E_DOMAIN", "segment: need at least 2 segments");

    const std::size_t n = d.n_bins();
    std::vector<BinnedDataset> segments(k);
    for (std::size_t seg = 0; seg < k; ++seg) {
        segments[seg].counts.assign(n, 0);
        segments[seg].edges = d.edges;
        segments[seg].exposure = d.exposure / static_cast<double>(k);
        if (d.background) {
            segments[seg].background.emplace(n);
            for (std::size_t i = 0; i < n; ++i) {
                (*segments[seg].background)[i] = (*d.background)[i] / static_cast<double>(k);
            }
        }
    }
    Rng rng(seed);
    for (std::size_t i = 0; i < n; ++i) {
        for (long long e = 0; e < d.counts[i]; ++e) {
            std::uint64_t seg = rng.next_below(k);
            ++segments[seg].counts[i];
        }
    }
    return segments;
}

} // namespace cstat
