#pragma once

#include <Eigen/Core>

#include <cstddef>

namespace cstat {

// Instrument response: a J x n redistribution matrix mapping model-grid
// fluxes to detector channels, an effective area per model bin, and the
// model-grid edges (J + 1 ascending values).
struct InstrumentResponse {
    Eigen::MatrixXd rmf;         // J rows (model bins) x n columns (channels)
    Eigen::VectorXd area;        // J
    Eigen::VectorXd model_edges; // J + 1

    std::size_t n_model_bins() const { return static_cast<std::size_t>(area.size()); }
    std::size_t n_channels() const { return static_cast<std::size_t>(rmf.cols()); }

    Eigen::VectorXd midpoints() const;
    Eigen::VectorXd widths() const;

    // Shape and finiteness checks always run; with strict_row_sums the row
    // sums must also lie in [0, 1] within tolerance. Loaded files are
    // checked strictly; synthetic stress responses built in code may
    // deliberately break the row-sum bound.
    void validate(bool strict_row_sums) const;
};

enum class ResponseCase {
    identity,    // R = I
    tridiagonal, // 0.8 or 0.9 on the diagonal, 0.1 on the off-diagonals
    dispersed,   // (ones + n * I) / (2n)
    all_ones,    // every entry 1; violates the row-sum bound on purpose
};

// Square J = n response on the uniform grid with edges 1 + j/n, unit area.
InstrumentResponse make_case_response(ResponseCase which, std::size_t n);

} // namespace cstat
