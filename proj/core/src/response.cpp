#include "cstat/response.hpp"

#include "cstat/common.hpp"

#include <cmath>
#include <string>

namespace cstat {

Eigen::VectorXd InstrumentResponse::midpoints() const {
    Eigen::VectorXd m(model_edges.size() - 1);
    for (Eigen::Index j = 0; j + 1 < model_edges.size(); ++j) {
        m[j] = 0.5 * (model_edges[j] + model_edges[j + 1]);
    }
    return m;
}

Eigen::VectorXd InstrumentResponse::widths() const {
    Eigen::VectorXd w(model_edges.size() - 1);
    for (Eigen::Index j = 0; j + 1 < model_edges.size(); ++j) {
        w[j] = model_edges[j + 1] - model_edges[j];
    }
    return w;
}

void InstrumentResponse::validate(bool strict_row_sums) const {
    const Eigen::Index J = rmf.rows();
    const Eigen::Index n = rmf.cols();
    if (J == 0 || n == 0) {
        throw validation_error("E_SHAPE", "response: empty matrix");
    }
    if (area.size() != J) {
        throw validation_error("E_SHAPE", "response: area must have one entry per model bin");
    }
    if (model_edges.size() != J + 1) {
        throw validation_error("E_SHAPE", "response: model_edges must have J + 1 entries");
    }
    for (Eigen::Index j = 0; j + 1 < model_edges.size(); ++j) {
        if (!std::isfinite(model_edges[j]) || !(model_edges[j] < model_edges[j + 1])) {
            throw validation_error("E_DOMAIN",
                                   "response: model edges must be finite and strictly increasing");
        }
    }
    if (!std::isfinite(model_edges[model_edges.size() - 1])) {
        throw validation_error("E_DOMAIN", "response: model edges must be finite");
    }
    for (Eigen::Index j = 0; j < J; ++j) {
        if (!std::isfinite(area[j]) || area[j] < 0.0) {
            throw validation_error("E_DOMAIN", "response: area must be finite and non-negative "
                                               "in model bin " + std::to_string(j + 1));
        }
        double row_sum = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            double r = rmf(j, i);
            if (!std::isfinite(r) || r < 0.0) {
                throw validation_error("E_DOMAIN", "response: matrix entries must be finite and "
                                                   "non-negative (row " + std::to_string(j + 1) +
                                                   ")");
            }
            row_sum += r;
        }
        if (strict_row_sums && row_sum > 1.0 + 1e-9) {
            throw validation_error("E_DOMAIN",
                                   "response: row " + std::to_string(j + 1) + " sums to " +
                                       std::to_string(row_sum) +
                                       "; redistribution probabilities must sum to at most 1");
        }
    }
}

InstrumentResponse make_case_response(ResponseCase which, std::size_t n) {
    if (n < 2) throw validation_error("E_DOMAIN", "case response: need at least 2 bins");
    const auto ni = static_cast<Eigen::Index>(n);
    InstrumentResponse resp;
    resp.area = Eigen::VectorXd::Ones(ni);
    resp.model_edges.resize(ni + 1);
    for (Eigen::Index j = 0; j <= ni; ++j) {
        resp.model_edges[j] = 1.0 + static_cast<double>(j) / static_cast<double>(n);
    }
    switch (which) {
        case ResponseCase::identity:
            resp.rmf = Eigen::MatrixXd::Identity(ni, ni);
            break;
        case ResponseCase::tridiagonal: {
            resp.rmf = Eigen::MatrixXd::Zero(ni, ni);
            for (Eigen::Index j = 0; j < ni; ++j) {
                bool edge_row = (j == 0 || j == ni - 1);
                resp.rmf(j, j) = edge_row ? 0.9 : 0.8;
                if (j > 0) resp.rmf(j, j - 1) = 0.1;
                if (j + 1 < ni) resp.rmf(j, j + 1) = 0.1;
            }
            break;
        }
        case ResponseCase::dispersed: {
            double off = 1.0 / (2.0 * static_cast<double>(n));
            resp.rmf = Eigen::MatrixXd::Constant(ni, ni, off);
            for (Eigen::Index j = 0; j < ni; ++j) resp.rmf(j, j) += 0.5;
            break;
        }
        case ResponseCase::all_ones:
            resp.rmf = Eigen::MatrixXd::Ones(ni, ni);
            break;
    }
    return resp;
}

} // namespace cstat
