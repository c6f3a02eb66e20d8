#pragma once

#include "cstat/dataset.hpp"
#include "cstat/response.hpp"

#include <Eigen/Core>

#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace cstat {

struct ParameterInfo {
    std::string name;
    double lower;
    double upper;
    // Fitted on a log scale. Requires lower > 0.
    bool log_scale;
};

// Bins whose expected counts were clamped up to eps_floor in one evaluation.
// The objective is flat in theta at a clamped bin, so gradient rows for
// these bins are zeroed wherever the clamped counts are used.
struct ClampReport {
    std::vector<std::size_t> bins;
    std::size_t clamped() const { return bins.size(); }
};

// A spectral model maps a parameter vector theta (dimension d) to a vector
// of expected counts s(theta) (dimension n) together with the n x d Jacobian
// X, row i holding the gradient of s_i. Expected counts are floored at
// eps_floor; a negative or non-finite model value is a model violation and
// throws, while values in [0, eps_floor) are clamped and counted.
class SpectralModel {
public:
    static constexpr double eps_floor = 1e-10;

    virtual ~SpectralModel() = default;

    virtual std::size_t n_bins() const = 0;
    virtual std::size_t n_params() const = 0;
    virtual const std::vector<ParameterInfo>& parameters() const = 0;
    virtual std::string name() const = 0;

    Eigen::VectorXd expected_counts(const Eigen::VectorXd& theta,
                                    ClampReport* report = nullptr) const;
    Eigen::MatrixXd gradient(const Eigen::VectorXd& theta) const;

    // Bin edges of the observable grid, used when simulating datasets.
    virtual std::vector<double> grid_edges() const;

    // Heuristic starting point for a fit of this model to the given data.
    virtual Eigen::VectorXd default_init(const BinnedDataset& data) const = 0;

    // Throws validation_error if theta has the wrong size, is non-finite,
    // or leaves the parameter box.
    void check_parameters(const Eigen::VectorXd& theta) const;

protected:
    virtual void eval_counts(const Eigen::VectorXd& theta, Eigen::VectorXd& s) const = 0;
    virtual void eval_gradient(const Eigen::VectorXd& theta, Eigen::MatrixXd& X) const = 0;
};

// Draws one Poisson dataset from the model at theta. Edges come from
// grid_edges(); exposure and background are already inside s(theta), so the
// dataset carries exposure 1 and no background column.
BinnedDataset simulate_counts(const SpectralModel& model,
                              const Eigen::VectorXd& theta,
                              std::uint64_t seed);

// Expected counts and Jacobian at theta, with Jacobian rows of clamped
// bins zeroed (matching the flat objective there). This is the (s, X) pair
// the moment corrections consume at a fitted point.
struct ModelEvaluation {
    Eigen::VectorXd s;
    Eigen::MatrixXd X;
    std::size_t clamped = 0;
};
ModelEvaluation evaluate_model(const SpectralModel& model, const Eigen::VectorXd& theta);

// Flat rate: s_i = theta for every bin. d = 1.
class ConstantModel : public SpectralModel {
public:
    explicit ConstantModel(std::size_t n);

    std::size_t n_bins() const override { return n_; }
    std::size_t n_params() const override { return 1; }
    const std::vector<ParameterInfo>& parameters() const override { return params_; }
    std::string name() const override { return "constant"; }
    Eigen::VectorXd default_init(const BinnedDataset& data) const override;

protected:
    void eval_counts(const Eigen::VectorXd& theta, Eigen::VectorXd& s) const override;
    void eval_gradient(const Eigen::VectorXd& theta, Eigen::MatrixXd& X) const override;

private:
    std::size_t n_;
    std::vector<ParameterInfo> params_;
};

// Power law evaluated at per-bin energies: s_i = K * E_i^(-Gamma), d = 2.
// The single-argument constructor uses the uniform grid on (1, 2] with
// E_i = 1 + i/n, the upper edge of bin i (1-based).
class PowerLawModel : public SpectralModel {
public:
    explicit PowerLawModel(std::size_t n);
    PowerLawModel(Eigen::VectorXd energies, std::vector<double> edges);

    std::size_t n_bins() const override { return static_cast<std::size_t>(energy_.size()); }
    std::size_t n_params() const override { return 2; }
    const std::vector<ParameterInfo>& parameters() const override { return params_; }
    std::string name() const override { return "powerlaw"; }
    std::vector<double> grid_edges() const override { return edges_; }
    Eigen::VectorXd default_init(const BinnedDataset& data) const override;

    const Eigen::VectorXd& energies() const { return energy_; }

protected:
    void eval_counts(const Eigen::VectorXd& theta, Eigen::VectorXd& s) const override;
    void eval_gradient(const Eigen::VectorXd& theta, Eigen::MatrixXd& X) const override;

private:
    void finish_setup();

    Eigen::VectorXd energy_;
    Eigen::VectorXd log_energy_;
    std::vector<double> edges_;
    std::vector<ParameterInfo> params_;
};

// Power law with a flat spectral line of strength Psi replacing the
// continuum on bins m1 < i <= m2 (1-based): d = 3 (K, Gamma, Psi).
class PowerLawLineModel : public SpectralModel {
public:
    PowerLawLineModel(std::size_t n, std::size_t m1, std::size_t m2);

    std::size_t n_bins() const override { return static_cast<std::size_t>(energy_.size()); }
    std::size_t n_params() const override { return 3; }
    const std::vector<ParameterInfo>& parameters() const override { return params_; }
    std::string name() const override { return "powerlaw_line"; }
    std::vector<double> grid_edges() const override { return edges_; }
    Eigen::VectorXd default_init(const BinnedDataset& data) const override;

    std::size_t line_lo() const { return m1_; }
    std::size_t line_hi() const { return m2_; }

protected:
    void eval_counts(const Eigen::VectorXd& theta, Eigen::VectorXd& s) const override;
    void eval_gradient(const Eigen::VectorXd& theta, Eigen::MatrixXd& X) const override;

private:
    bool on_line(std::size_t i) const { return i + 1 > m1_ && i + 1 <= m2_; }

    Eigen::VectorXd energy_;
    Eigen::VectorXd log_energy_;
    std::vector<double> edges_;
    std::size_t m1_, m2_;
    std::vector<ParameterInfo> params_;
};

// Log-linear model: log s = design * theta, d = design.cols(). The design
// matrix is the user's responsibility; a leading column of ones gives an
// intercept.
class LogLinearModel : public SpectralModel {
public:
    explicit LogLinearModel(Eigen::MatrixXd design);
    LogLinearModel(Eigen::MatrixXd design, std::vector<double> edges);

    std::size_t n_bins() const override { return static_cast<std::size_t>(design_.rows()); }
    std::size_t n_params() const override { return static_cast<std::size_t>(design_.cols()); }
    const std::vector<ParameterInfo>& parameters() const override { return params_; }
    std::string name() const override { return "loglinear"; }
    std::vector<double> grid_edges() const override;
    Eigen::VectorXd default_init(const BinnedDataset& data) const override;

    const Eigen::MatrixXd& design() const { return design_; }

protected:
    void eval_counts(const Eigen::VectorXd& theta, Eigen::VectorXd& s) const override;
    void eval_gradient(const Eigen::VectorXd& theta, Eigen::MatrixXd& X) const override;

private:
    Eigen::MatrixXd design_;
    std::vector<double> edges_;
    std::vector<ParameterInfo> params_;
};

// A continuum model pushed through an instrument response:
//
//   s_i = T * ( sum_j R_ji * A_j * g_j(theta) * w_j  +  B_i )
//
// where g_j is the continuum evaluated at the model-bin midpoint, w_j the
// model-bin width, A_j the effective area, B_i a fixed per-channel
// background expectation, and T the exposure. The per-bin products are
// formed left to right as (A_j * g_j) * w_j and the channel sums as a
// straight dot product, so a fold through the identity response with unit
// area and width reproduces the continuum values bit for bit.
class FoldedModel : public SpectralModel {
public:
    // The continuum must have one bin per response model bin, evaluated at
    // the response midpoints (use PowerLawModel(resp.midpoints(), ...)).
    FoldedModel(std::shared_ptr<const SpectralModel> continuum,
                InstrumentResponse resp,
                Eigen::VectorXd background, // size n, or empty for none
                double exposure);

    std::size_t n_bins() const override { return resp_.n_channels(); }
    std::size_t n_params() const override { return continuum_->n_params(); }
    const std::vector<ParameterInfo>& parameters() const override {
        return continuum_->parameters();
    }
    std::string name() const override { return "folded_" + continuum_->name(); }
    std::vector<double> grid_edges() const override;
    Eigen::VectorXd default_init(const BinnedDataset& data) const override;

    const InstrumentResponse& response() const { return resp_; }

protected:
    void eval_counts(const Eigen::VectorXd& theta, Eigen::VectorXd& s) const override;
    void eval_gradient(const Eigen::VectorXd& theta, Eigen::MatrixXd& X) const override;

private:
    std::shared_ptr<const SpectralModel> continuum_;
    InstrumentResponse resp_;
    Eigen::VectorXd background_; // size n (zeros when none supplied)
    double exposure_;
    Eigen::VectorXd bin_width_;
};

// Wraps a model with some parameters frozen at fixed values; the free
// parameters (possibly none) form the reduced vector seen by callers.
class FixedParamsModel : public SpectralModel {
public:
    // fixed_mask[k] true means inner parameter k is frozen at fixed_values[k];
    // entries of fixed_values at free positions are ignored.
    FixedParamsModel(std::shared_ptr<const SpectralModel> inner,
                     std::vector<bool> fixed_mask,
                     Eigen::VectorXd fixed_values);

    std::size_t n_bins() const override { return inner_->n_bins(); }
    std::size_t n_params() const override { return free_index_.size(); }
    const std::vector<ParameterInfo>& parameters() const override { return params_; }
    std::string name() const override { return inner_->name() + "_fixed"; }
    std::vector<double> grid_edges() const override { return inner_->grid_edges(); }
    Eigen::VectorXd default_init(const BinnedDataset& data) const override;

    // Expands a free-parameter vector to the inner model's full vector.
    Eigen::VectorXd expand(const Eigen::VectorXd& theta_free) const;

protected:
    void eval_counts(const Eigen::VectorXd& theta, Eigen::VectorXd& s) const override;
    void eval_gradient(const Eigen::VectorXd& theta, Eigen::MatrixXd& X) const override;

private:
    std::shared_ptr<const SpectralModel> inner_;
    std::vector<bool> fixed_mask_;
    Eigen::VectorXd fixed_values_;
    std::vector<std::size_t> free_index_;
    std::vector<ParameterInfo> params_;
};

} // namespace cstat
