#include "cstat/model.hpp"

#include "cstat/common.hpp"
#include "cstat/rng.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <string>

namespace cstat {

namespace {

double clamp_into(double x, double lo, double hi) {
    return std::min(std::max(x, lo), hi);
}

// Least squares of y on (1, x); returns {intercept, slope}.
std::pair<double, double> simple_ls(const std::vector<double>& x,
                                    const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    if (sxx <= 0.0) return {my, 0.0};
    double slope = sxy / sxx;
    return {my - slope * mx, slope};
}

std::vector<double> uniform_unit_edges(std::size_t n, double lo, double hi) {
    std::vector<double> e(n + 1);
    for (std::size_t j = 0; j <= n; ++j) {
        e[j] = lo + (hi - lo) * static_cast<double>(j) / static_cast<double>(n);
    }
    return e;
}

} // namespace

// ---- SpectralModel base ------------------------------------------------------

void SpectralModel::check_parameters(const Eigen::VectorXd& theta) const {
    const auto& info = parameters();
    if (static_cast<std::size_t>(theta.size()) != info.size()) {
        throw validation_error("E_PARAMS", name() + ": expected " +
                                               std::to_string(info.size()) + " parameters, got " +
                                               std::to_string(theta.size()));
    }
    for (std::size_t k = 0; k < info.size(); ++k) {
        double v = theta[static_cast<Eigen::Index>(k)];
        if (!std::isfinite(v)) {
            throw validation_error("E_PARAMS", name() + ": parameter " + info[k].name +
                                                   " is not finite");
        }
        if (v < info[k].lower || v > info[k].upper) {
            throw validation_error("E_PARAMS", name() + ": parameter " + info[k].name + " = " +
                                                   std::to_string(v) + " outside [" +
                                                   std::to_string(info[k].lower) + ", " +
                                                   std::to_string(info[k].upper) + "]");
        }
    }
}

Eigen::VectorXd SpectralModel::expected_counts(const Eigen::VectorXd& theta,
                                               ClampReport* report) const {
    check_parameters(theta);
    Eigen::VectorXd s(static_cast<Eigen::Index>(n_bins()));
    eval_counts(theta, s);
    if (report) report->bins.clear();
    for (Eigen::Index i = 0; i < s.size(); ++i) {
        double v = s[i];
        if (!std::isfinite(v) || v < 0.0) {
            throw computation_error("E_MODEL_VIOLATION",
                                    name() + ": expected counts must be finite and non-negative; "
                                             "bin " + std::to_string(i + 1) + " produced " +
                                        std::to_string(v));
        }
        if (v < eps_floor) {
            s[i] = eps_floor;
            if (report) report->bins.push_back(static_cast<std::size_t>(i));
        }
    }
    return s;
}

Eigen::MatrixXd SpectralModel::gradient(const Eigen::VectorXd& theta) const {
    check_parameters(theta);
    Eigen::MatrixXd X(static_cast<Eigen::Index>(n_bins()),
                      static_cast<Eigen::Index>(n_params()));
    eval_gradient(theta, X);
    return X;
}

std::vector<double> SpectralModel::grid_edges() const {
    return uniform_unit_edges(n_bins(), 0.0, static_cast<double>(n_bins()));
}

ModelEvaluation evaluate_model(const SpectralModel& model, const Eigen::VectorXd& theta) {
    ModelEvaluation e;
    ClampReport rep;
    e.s = model.expected_counts(theta, &rep);
    e.X = model.gradient(theta);
    for (std::size_t b : rep.bins) e.X.row(static_cast<Eigen::Index>(b)).setZero();
    e.clamped = rep.clamped();
    return e;
}

BinnedDataset simulate_counts(const SpectralModel& model,
                              const Eigen::VectorXd& theta,
                              std::uint64_t seed) {
    Eigen::VectorXd s = model.expected_counts(theta);
    Rng rng(seed);
    BinnedDataset d;
    d.counts.resize(model.n_bins());
    for (Eigen::Index i = 0; i < s.size(); ++i) {
        d.counts[static_cast<std::size_t>(i)] = rng.poisson(s[i]);
    }
    d.edges = model.grid_edges();
    d.exposure = 1.0;
    return d;
}

// ---- ConstantModel -----------------------------------------------------------

ConstantModel::ConstantModel(std::size_t n) : n_(n) {
    if (n == 0) throw validation_error("E_SHAPE", "constant: need at least one bin");
    params_ = {{"theta", 1e-8, 1e12, true}};
}

void ConstantModel::eval_counts(const Eigen::VectorXd& theta, Eigen::VectorXd& s) const {
    s.setConstant(theta[0]);
}

void ConstantModel::eval_gradient(const Eigen::VectorXd&, Eigen::MatrixXd& X) const {
    X.setOnes();
}

Eigen::VectorXd ConstantModel::default_init(const BinnedDataset& data) const {
    if (data.n_bins() != n_) {
        throw validation_error("E_SHAPE", "constant: dataset has wrong bin count");
    }
    double mean = static_cast<double>(data.total_counts()) / static_cast<double>(n_);
    Eigen::VectorXd init(1);
    init[0] = clamp_into(std::max(mean, 1e-6), params_[0].lower, params_[0].upper);
    return init;
}

// ---- PowerLawModel -----------------------------------------------------------

PowerLawModel::PowerLawModel(std::size_t n) {
    if (n < 2) throw validation_error("E_SHAPE", "powerlaw: need at least 2 bins");
    energy_.resize(static_cast<Eigen::Index>(n));
    for (std::size_t i = 1; i <= n; ++i) {
        energy_[static_cast<Eigen::Index>(i - 1)] =
            1.0 + static_cast<double>(i) / static_cast<double>(n);
    }
    edges_ = uniform_unit_edges(n, 1.0, 2.0);
    finish_setup();
}

PowerLawModel::PowerLawModel(Eigen::VectorXd energies, std::vector<double> edges)
    : energy_(std::move(energies)), edges_(std::move(edges)) {
    if (energy_.size() < 1) throw validation_error("E_SHAPE", "powerlaw: no bins");
    if (!edges_.empty() && edges_.size() != static_cast<std::size_t>(energy_.size()) + 1) {
        throw validation_error("E_SHAPE", "powerlaw: edges must have n + 1 entries");
    }
    if (edges_.empty()) {
        edges_ = uniform_unit_edges(static_cast<std::size_t>(energy_.size()), 0.0,
                                    static_cast<double>(energy_.size()));
    }
    finish_setup();
}

void PowerLawModel::finish_setup() {
    for (Eigen::Index i = 0; i < energy_.size(); ++i) {
        if (!std::isfinite(energy_[i]) || energy_[i] <= 0.0) {
            throw validation_error("E_DOMAIN", "powerlaw: energies must be positive");
        }
    }
    log_energy_ = energy_.array().log().matrix();
    params_ = {{"K", 1e-8, 1e12, true}, {"Gamma", -50.0, 50.0, false}};
}

void PowerLawModel::eval_counts(const Eigen::VectorXd& theta, Eigen::VectorXd& s) const {
    const double K = theta[0], G = theta[1];
    s = (K * (-G * log_energy_.array()).exp()).matrix();
}

void PowerLawModel::eval_gradient(const Eigen::VectorXd& theta, Eigen::MatrixXd& X) const {
    const double K = theta[0], G = theta[1];
    Eigen::ArrayXd f = (-G * log_energy_.array()).exp();
    X.col(0) = f.matrix();
    X.col(1) = (-K * f * log_energy_.array()).matrix();
}

Eigen::VectorXd PowerLawModel::default_init(const BinnedDataset& data) const {
    if (data.n_bins() != n_bins()) {
        throw validation_error("E_SHAPE", "powerlaw: dataset has wrong bin count");
    }
    std::vector<double> x, y;
    x.reserve(data.n_bins());
    y.reserve(data.n_bins());
    for (std::size_t i = 0; i < data.n_bins(); ++i) {
        x.push_back(log_energy_[static_cast<Eigen::Index>(i)]);
        y.push_back(std::log(static_cast<double>(data.counts[i]) + 0.5));
    }
    auto [a, b] = simple_ls(x, y);
    Eigen::VectorXd init(2);
    init[0] = clamp_into(std::exp(a), 1e-6, 1e10);
    init[1] = clamp_into(-b, params_[1].lower + 1.0, params_[1].upper - 1.0);
    return init;
}

// ---- PowerLawLineModel -------------------------------------------------------

PowerLawLineModel::PowerLawLineModel(std::size_t n, std::size_t m1, std::size_t m2)
    : m1_(m1), m2_(m2) {
    if (n < 2) throw validation_error("E_SHAPE", "powerlaw_line: need at least 2 bins");
    if (!(m1 < m2 && m2 <= n)) {
        throw validation_error("E_DOMAIN", "powerlaw_line: line bins require m1 < m2 <= n");
    }
    energy_.resize(static_cast<Eigen::Index>(n));
    for (std::size_t i = 1; i <= n; ++i) {
        energy_[static_cast<Eigen::Index>(i - 1)] =
            1.0 + static_cast<double>(i) / static_cast<double>(n);
    }
    log_energy_ = energy_.array().log().matrix();
    edges_ = uniform_unit_edges(n, 1.0, 2.0);
    params_ = {{"K", 1e-8, 1e12, true},
               {"Gamma", -50.0, 50.0, false},
               {"Psi", 1e-8, 1e12, true}};
}

void PowerLawLineModel::eval_counts(const Eigen::VectorXd& theta, Eigen::VectorXd& s) const {
    const double K = theta[0], G = theta[1], Psi = theta[2];
    for (Eigen::Index i = 0; i < energy_.size(); ++i) {
        std::size_t idx = static_cast<std::size_t>(i);
        s[i] = on_line(idx) ? Psi : K * std::exp(-G * log_energy_[i]);
    }
}

void PowerLawLineModel::eval_gradient(const Eigen::VectorXd& theta, Eigen::MatrixXd& X) const {
    const double K = theta[0], G = theta[1];
    X.setZero();
    for (Eigen::Index i = 0; i < energy_.size(); ++i) {
        std::size_t idx = static_cast<std::size_t>(i);
        if (on_line(idx)) {
            X(i, 2) = 1.0;
        } else {
            double f = std::exp(-G * log_energy_[i]);
            X(i, 0) = f;
            X(i, 1) = -K * f * log_energy_[i];
        }
    }
}

Eigen::VectorXd PowerLawLineModel::default_init(const BinnedDataset& data) const {
    if (data.n_bins() != n_bins()) {
        throw validation_error("E_SHAPE", "powerlaw_line: dataset has wrong bin count");
    }
    std::vector<double> x, y;
    double line_sum = 0.0;
    std::size_t line_bins = 0;
    for (std::size_t i = 0; i < data.n_bins(); ++i) {
        if (on_line(i)) {
            line_sum += static_cast<double>(data.counts[i]);
            ++line_bins;
        } else {
            x.push_back(log_energy_[static_cast<Eigen::Index>(i)]);
            y.push_back(std::log(static_cast<double>(data.counts[i]) + 0.5));
        }
    }
    if (x.size() < 3) {
        for (std::size_t i = 0; i < data.n_bins(); ++i) {
            x.push_back(log_energy_[static_cast<Eigen::Index>(i)]);
            y.push_back(std::log(static_cast<double>(data.counts[i]) + 0.5));
        }
    }
    auto [a, b] = simple_ls(x, y);
    Eigen::VectorXd init(3);
    init[0] = clamp_into(std::exp(a), 1e-6, 1e10);
    init[1] = clamp_into(-b, params_[1].lower + 1.0, params_[1].upper - 1.0);
    init[2] = std::max(line_sum / static_cast<double>(std::max<std::size_t>(line_bins, 1)), 1e-6);
    return init;
}

// ---- LogLinearModel ----------------------------------------------------------

LogLinearModel::LogLinearModel(Eigen::MatrixXd design)
    : LogLinearModel(std::move(design), {}) {}

LogLinearModel::LogLinearModel(Eigen::MatrixXd design, std::vector<double> edges)
    : design_(std::move(design)), edges_(std::move(edges)) {
    if (design_.rows() < 1 || design_.cols() < 1) {
        throw validation_error("E_SHAPE", "loglinear: empty design matrix");
    }
    if (!design_.allFinite()) {
        throw validation_error("E_DOMAIN", "loglinear: design matrix must be finite");
    }
    if (!edges_.empty() && edges_.size() != static_cast<std::size_t>(design_.rows()) + 1) {
        throw validation_error("E_SHAPE", "loglinear: edges must have n + 1 entries");
    }
    params_.reserve(static_cast<std::size_t>(design_.cols()));
    for (Eigen::Index k = 0; k < design_.cols(); ++k) {
        params_.push_back({"theta" + std::to_string(k + 1), -100.0, 100.0, false});
    }
}

std::vector<double> LogLinearModel::grid_edges() const {
    if (!edges_.empty()) return edges_;
    return SpectralModel::grid_edges();
}

void LogLinearModel::eval_counts(const Eigen::VectorXd& theta, Eigen::VectorXd& s) const {
    s = (design_ * theta).array().exp().matrix();
}

void LogLinearModel::eval_gradient(const Eigen::VectorXd& theta, Eigen::MatrixXd& X) const {
    Eigen::VectorXd s = (design_ * theta).array().exp().matrix();
    X = s.asDiagonal() * design_;
}

Eigen::VectorXd LogLinearModel::default_init(const BinnedDataset& data) const {
    if (data.n_bins() != n_bins()) {
        throw validation_error("E_SHAPE", "loglinear: dataset has wrong bin count");
    }
    Eigen::VectorXd y(design_.rows());
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        y[i] = std::log(static_cast<double>(data.counts[static_cast<std::size_t>(i)]) + 0.5);
    }
    Eigen::VectorXd init = design_.colPivHouseholderQr().solve(y);
    for (Eigen::Index k = 0; k < init.size(); ++k) {
        const auto& p = params_[static_cast<std::size_t>(k)];
        init[k] = clamp_into(init[k], p.lower + 1e-6, p.upper - 1e-6);
    }
    return init;
}

// ---- FoldedModel -------------------------------------------------------------

FoldedModel::FoldedModel(std::shared_ptr<const SpectralModel> continuum,
                         InstrumentResponse resp,
                         Eigen::VectorXd background,
                         double exposure)
    : continuum_(std::move(continuum)),
      resp_(std::move(resp)),
      background_(std::move(background)),
      exposure_(exposure) {
    if (!continuum_) throw validation_error("E_SHAPE", "folded: missing continuum model");
    resp_.validate(false);
    if (continuum_->n_bins() != resp_.n_model_bins()) {
        throw validation_error("E_SHAPE",
                               "folded: continuum bins (" + std::to_string(continuum_->n_bins()) +
                                   ") must match response model bins (" +
                                   std::to_string(resp_.n_model_bins()) + ")");
    }
    const auto n = static_cast<Eigen::Index>(resp_.n_channels());
    if (background_.size() == 0) {
        background_ = Eigen::VectorXd::Zero(n);
    } else if (background_.size() != n) {
        throw validation_error("E_SHAPE", "folded: background must have one entry per channel");
    }
    for (Eigen::Index i = 0; i < background_.size(); ++i) {
        if (!std::isfinite(background_[i]) || background_[i] < 0.0) {
            throw validation_error("E_DOMAIN",
                                   "folded: background must be finite and non-negative");
        }
    }
    if (!std::isfinite(exposure_) || !(exposure_ > 0.0)) {
        throw validation_error("E_DOMAIN", "folded: exposure must be positive");
    }
    bin_width_ = resp_.widths();
}

std::vector<double> FoldedModel::grid_edges() const {
    // Channels live on their own axis; without channel metadata use the
    // model grid when shapes agree, else unit channel edges.
    if (resp_.n_channels() == resp_.n_model_bins()) {
        std::vector<double> e(resp_.model_edges.size());
        for (Eigen::Index j = 0; j < resp_.model_edges.size(); ++j) e[static_cast<std::size_t>(j)] = resp_.model_edges[j];
        return e;
    }
    return SpectralModel::grid_edges();
}

void FoldedModel::eval_counts(const Eigen::VectorXd& theta, Eigen::VectorXd& s) const {
    Eigen::VectorXd g = continuum_->expected_counts(theta);
    Eigen::VectorXd m(g.size());
    for (Eigen::Index j = 0; j < g.size(); ++j) {
        m[j] = resp_.area[j] * g[j] * bin_width_[j];
    }
    for (Eigen::Index i = 0; i < s.size(); ++i) {
        s[i] = exposure_ * (resp_.rmf.col(i).dot(m) + background_[i]);
    }
}

void FoldedModel::eval_gradient(const Eigen::VectorXd& theta, Eigen::MatrixXd& X) const {
    ClampReport rep;
    continuum_->expected_counts(theta, &rep);
    Eigen::MatrixXd G = continuum_->gradient(theta);
    for (std::size_t b : rep.bins) G.row(static_cast<Eigen::Index>(b)).setZero();
    Eigen::VectorXd aw(bin_width_.size());
    for (Eigen::Index j = 0; j < aw.size(); ++j) aw[j] = resp_.area[j] * bin_width_[j];
    X = exposure_ * (resp_.rmf.transpose() * (aw.asDiagonal() * G));
}

Eigen::VectorXd FoldedModel::default_init(const BinnedDataset& data) const {
    if (data.n_bins() != n_bins()) {
        throw validation_error("E_SHAPE", "folded: dataset has wrong bin count");
    }
    // Continuum heuristics run on pseudo counts mapped to the model grid.
    const std::size_t J = resp_.n_model_bins();
    BinnedDataset pseudo;
    pseudo.edges.assign(resp_.model_edges.data(), resp_.model_edges.data() + J + 1);
    if (J == data.n_bins()) {
        pseudo.counts = data.counts;
    } else {
        long long flat = data.total_counts() / static_cast<long long>(J);
        pseudo.counts.assign(J, std::max<long long>(flat, 0));
    }
    Eigen::VectorXd init = continuum_->default_init(pseudo);

    // Rescale any pure scale parameter so totals match after folding.
    Eigen::VectorXd s0 = expected_counts(init);
    double signal0 = s0.sum() / exposure_ - background_.sum();
    double target = static_cast<double>(data.total_counts()) / exposure_ - background_.sum();
    if (signal0 > 1e-12 && target > 1e-12) {
        double rho = target / signal0;
        const auto& info = parameters();
        for (std::size_t k = 0; k < info.size(); ++k) {
            if (!info[k].log_scale) continue;
            Eigen::VectorXd probe = init;
            probe[static_cast<Eigen::Index>(k)] =
                clamp_into(probe[static_cast<Eigen::Index>(k)] * 2.0, info[k].lower, info[k].upper);
            if (probe[static_cast<Eigen::Index>(k)] == init[static_cast<Eigen::Index>(k)]) continue;
            double factor = probe[static_cast<Eigen::Index>(k)] / init[static_cast<Eigen::Index>(k)];
            Eigen::VectorXd s1 = expected_counts(probe);
            double signal1 = s1.sum() / exposure_ - background_.sum();
            if (std::abs(signal1 - factor * signal0) <= 1e-6 * std::abs(signal1) + 1e-12) {
                init[static_cast<Eigen::Index>(k)] =
                    clamp_into(init[static_cast<Eigen::Index>(k)] * rho, info[k].lower, info[k].upper);
                break;
            }
        }
    }
    return init;
}

// ---- FixedParamsModel --------------------------------------------------------

FixedParamsModel::FixedParamsModel(std::shared_ptr<const SpectralModel> inner,
                                   std::vector<bool> fixed_mask,
                                   Eigen::VectorXd fixed_values)
    : inner_(std::move(inner)),
      fixed_mask_(std::move(fixed_mask)),
      fixed_values_(std::move(fixed_values)) {
    if (!inner_) throw validation_error("E_SHAPE", "fixed: missing inner model");
    const std::size_t D = inner_->n_params();
    if (fixed_mask_.size() != D ||
        static_cast<std::size_t>(fixed_values_.size()) != D) {
        throw validation_error("E_SHAPE", "fixed: mask and values must cover every parameter");
    }
    const auto& info = inner_->parameters();
    for (std::size_t k = 0; k < D; ++k) {
        if (fixed_mask_[k]) {
            double v = fixed_values_[static_cast<Eigen::Index>(k)];
            if (!std::isfinite(v) || v < info[k].lower || v > info[k].upper) {
                throw validation_error("E_PARAMS", "fixed: frozen value for " + info[k].name +
                                                       " outside its bounds");
            }
        } else {
            free_index_.push_back(k);
            params_.push_back(info[k]);
        }
    }
}

Eigen::VectorXd FixedParamsModel::expand(const Eigen::VectorXd& theta_free) const {
    if (static_cast<std::size_t>(theta_free.size()) != free_index_.size()) {
        throw validation_error("E_PARAMS", "fixed: wrong number of free parameters");
    }
    Eigen::VectorXd full = fixed_values_;
    for (std::size_t k = 0; k < free_index_.size(); ++k) {
        full[static_cast<Eigen::Index>(free_index_[k])] = theta_free[static_cast<Eigen::Index>(k)];
    }
    return full;
}

void FixedParamsModel::eval_counts(const Eigen::VectorXd& theta, Eigen::VectorXd& s) const {
    s = inner_->expected_counts(expand(theta));
}

void FixedParamsModel::eval_gradient(const Eigen::VectorXd& theta, Eigen::MatrixXd& X) const {
    Eigen::MatrixXd full = inner_->gradient(expand(theta));
    for (std::size_t k = 0; k < free_index_.size(); ++k) {
        X.col(static_cast<Eigen::Index>(k)) = full.col(static_cast<Eigen::Index>(free_index_[k]));
    }
}

Eigen::VectorXd FixedParamsModel::default_init(const BinnedDataset& data) const {
    Eigen::VectorXd full = inner_->default_init(data);
    Eigen::VectorXd init(static_cast<Eigen::Index>(free_index_.size()));
    for (std::size_t k = 0; k < free_index_.size(); ++k) {
        init[static_cast<Eigen::Index>(k)] = full[static_cast<Eigen::Index>(free_index_[k])];
    }
    return init;
}

} // namespace cstat
