#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace cstat {

// Exact moments of the per-bin Cash contribution C = c(N, s) under
// N ~ Poisson(s):
//
//   k1  = E[C]                      k11 = E[(C - k1)(N - s)]
//   k2  = Var[C]                    k12 = E[(C - k1)(N - s)^2]
//   k3  = E[(C - k1)^3]             k21 = E[(C - k1)^2 (N - s)]
//   k03 = E[(N - s)^3]  (equals s; computed by summation as a check)
struct CumulantSet {
    double k1 = 0, k2 = 0, k3 = 0;
    double k11 = 0, k12 = 0, k21 = 0;
    double k03 = 0;
};

// Evaluates the cumulants by summing the Poisson series. The sum runs from
// t = 0 up past the mean to the first K >= s where the next term's
// contribution to E[C], relative to the partial sum, drops below tau.
CumulantSet cumulants_direct(double s, double tau = 1e-30);

// Precomputed cumulant grid over s in [s_min, s_max] with uniform step,
// read back through a four-point cubic. Queries below the grid or above it
// fall back to direct summation.
class CumulantTable {
public:
    struct Header {
        double s_min = 1e-3;
        double s_max = 100.0;
        double step = 1e-3;
        std::uint64_t row_count = 0;
        double tau = 1e-30;
        std::int64_t build_unix_time = 0;
    };

    CumulantTable() = default;

    // Builds the grid, in parallel over rows, then probes midpoints between
    // grid nodes in the interpolated region and throws computation_error if
    // any probed component misses direct summation by more than 1e-5
    // relative. The build timestamp is captured once, before the parallel
    // loop, so the file does not depend on the thread count; tests may pin
    // it via the timestamp argument (-1 means wall clock).
    static CumulantTable build(double s_min, double s_max, double step,
                               double tau, int n_threads,
                               std::int64_t timestamp = -1);

    // Grid nodes return the stored row exactly. Between nodes the behavior
    // splits: below interpolation_cutoff the curvature of the cumulants in
    // s is too strong for the grid spacing, so the query is answered by
    // direct summation (a handful of series terms there); from the cutoff
    // up, a cubic through the two rows on each side of the query (k11
    // changes sign near s = 1.34, and the cubic's O(step^4) error keeps a
    // strict relative bound there where a linear read-off cannot). Grids
    // with fewer than four rows fall back to linear. Outside the grid
    // entirely: direct summation.
    static constexpr double interpolation_cutoff = 0.5;
    CumulantSet at(double s) const;

    const Header& header() const { return header_; }
    std::size_t rows() const { return rows_.size(); }
    // FNV-1a 64 checksum of header and payload bytes, as stored on disk.
    std::uint64_t checksum() const { return checksum_; }
    std::string checksum_hex() const;

    void save(const std::string& path) const;
    // Verifies magic, version, shape, and checksum; throws validation_error
    // on any mismatch.
    static CumulantTable load(const std::string& path);

    void export_csv(const std::string& path) const;

private:
    Header header_;
    std::vector<CumulantSet> rows_;
    std::uint64_t checksum_ = 0;

    void recompute_checksum();
};

// Table lookup when a table is present, direct summation otherwise.
class CumulantProvider {
public:
    CumulantProvider() = default;
    explicit CumulantProvider(const CumulantTable* table, double tau = 1e-30)
        : table_(table), tau_(tau) {}

    CumulantSet at(double s) const {
        return table_ ? table_->at(s) : cumulants_direct(s, tau_);
    }
    bool has_table() const { return table_ != nullptr; }
    const CumulantTable* table() const { return table_; }

private:
    const CumulantTable* table_ = nullptr;
    double tau_ = 1e-30;
};

} // namespace cstat
