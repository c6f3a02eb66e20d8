#include "cstat/fit.hpp"

#include "cstat/cash.hpp"
#include "cstat/common.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <vector>

namespace cstat {

namespace {

struct Transform {
    // v = log(theta) for positive-scale parameters, identity otherwise;
    // bounds mapped alongside. to_theta re-clamps in the original
    // coordinates because exp(log(bound)) can land one ulp outside.
    std::vector<bool> log_scale;
    Eigen::VectorXd lower, upper;
    Eigen::VectorXd lower_theta, upper_theta;

    explicit Transform(const std::vector<ParameterInfo>& info) {
        const auto d = static_cast<Eigen::Index>(info.size());
        lower.resize(d);
        upper.resize(d);
        lower_theta.resize(d);
        upper_theta.resize(d);
        log_scale.resize(info.size());
        for (Eigen::Index k = 0; k < d; ++k) {
            const auto& p = info[static_cast<std::size_t>(k)];
            log_scale[static_cast<std::size_t>(k)] = p.log_scale;
            lower[k] = p.log_scale ? std::log(p.lower) : p.lower;
            upper[k] = p.log_scale ? std::log(p.upper) : p.upper;
            lower_theta[k] = p.lower;
            upper_theta[k] = p.upper;
        }
    }

    Eigen::VectorXd to_v(const Eigen::VectorXd& theta) const {
        Eigen::VectorXd v = theta;
        for (Eigen::Index k = 0; k < v.size(); ++k) {
            if (log_scale[static_cast<std::size_t>(k)]) v[k] = std::log(theta[k]);
        }
        return v;
    }

    Eigen::VectorXd to_theta(const Eigen::VectorXd& v) const {
        Eigen::VectorXd theta = v;
        for (Eigen::Index k = 0; k < v.size(); ++k) {
            if (log_scale[static_cast<std::size_t>(k)]) theta[k] = std::exp(v[k]);
            theta[k] = std::min(std::max(theta[k], lower_theta[k]), upper_theta[k]);
        }
        return theta;
    }

    Eigen::VectorXd clamp(Eigen::VectorXd v) const {
        for (Eigen::Index k = 0; k < v.size(); ++k) {
            v[k] = std::min(std::max(v[k], lower[k]), upper[k]);
        }
        return v;
    }

    // Chain rule dC/dv from dC/dtheta.
    Eigen::VectorXd grad_v(const Eigen::VectorXd& g_theta, const Eigen::VectorXd& theta) const {
        Eigen::VectorXd g = g_theta;
        for (Eigen::Index k = 0; k < g.size(); ++k) {
            if (log_scale[static_cast<std::size_t>(k)]) g[k] *= theta[k];
        }
        return g;
    }
};

struct Evaluation {
    double c = std::numeric_limits<double>::infinity();
    Eigen::VectorXd g_theta;   // dC/dtheta
    Eigen::VectorXd s;         // clamped expected counts
    Eigen::MatrixXd X;         // Jacobian with clamped rows zeroed
    std::size_t clamped = 0;
    bool ok = false;
};

Evaluation evaluate(const SpectralModel& model,
                    const Eigen::VectorXd& counts,
                    const Eigen::VectorXd& theta) {
    Evaluation e;
    try {
        ClampReport rep;
        e.s = model.expected_counts(theta, &rep);
        e.X = model.gradient(theta);
        for (std::size_t b : rep.bins) e.X.row(static_cast<Eigen::Index>(b)).setZero();
        e.clamped = rep.clamped();
        e.c = c_total(counts, e.s);
        e.g_theta = c_gradient(counts, e.s, e.X);
        e.ok = std::isfinite(e.c);
    } catch (const computation_error&) {
        // A model violation inside a trial step just makes the step
        // unacceptable; the line search will back off.
        e.ok = false;
    }
    return e;
}

// Infinity norm of the gradient with components pointing out of the box
// zeroed (first-order optimality at a bound).
double projected_grad_norm(const Eigen::VectorXd& g_theta,
                           const Eigen::VectorXd& theta,
                           const std::vector<ParameterInfo>& info) {
    double norm = 0.0;
    for (Eigen::Index k = 0; k < g_theta.size(); ++k) {
        const auto& p = info[static_cast<std::size_t>(k)];
        double g = g_theta[k];
        if (theta[k] <= p.lower && g > 0.0) g = 0.0;
        if (theta[k] >= p.upper && g < 0.0) g = 0.0;
        norm = std::max(norm, std::abs(g));
    }
    return norm;
}

struct StartOutcome {
    FitResult result;
    bool valid = false;
};

StartOutcome run_bfgs(const SpectralModel& model,
                      const Eigen::VectorXd& counts,
                      const Eigen::VectorXd& theta0,
                      const FitOptions& options) {
    const auto& info = model.parameters();
    const auto d = static_cast<Eigen::Index>(info.size());
    Transform tr(info);

    StartOutcome out;
    Eigen::VectorXd v = tr.clamp(tr.to_v(theta0));
    Eigen::VectorXd theta = tr.to_theta(v);
    Evaluation cur = evaluate(model, counts, theta);
    if (!cur.ok) return out;

    Eigen::MatrixXd H = Eigen::MatrixXd::Identity(d, d);
    Eigen::VectorXd g_v = tr.grad_v(cur.g_theta, theta);

    int iter = 0;
    bool converged = false;
    auto check_converged = [&]() {
        return projected_grad_norm(cur.g_theta, theta, info) <
               options.tol_grad * (1.0 + std::abs(cur.c));
    };
    converged = check_converged();

    while (!converged && iter < options.max_iter) {
        ++iter;
        Eigen::VectorXd dir = -(H * g_v);
        if (dir.dot(g_v) >= 0.0) {
            H.setIdentity();
            dir = -g_v;
        }

        double alpha = 1.0;
        const double c1 = 1e-4;
        Eigen::VectorXd v_new, g_v_new;
        Evaluation next;
        bool accepted = false;
        for (int halvings = 0; halvings < 64; ++halvings) {
            v_new = tr.clamp(v + alpha * dir);
            Eigen::VectorXd step = v_new - v;
            if (step.lpNorm<Eigen::Infinity>() == 0.0) break;
            Eigen::VectorXd theta_new = tr.to_theta(v_new);
            next = evaluate(model, counts, theta_new);
            if (next.ok) {
                double slope = g_v.dot(step);
                if (next.c <= cur.c + c1 * std::min(slope, 0.0)) {
                    accepted = true;
                    theta = theta_new;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if (!accepted) {
            converged = check_converged();
            break;
        }

        g_v_new = tr.grad_v(next.g_theta, theta);
        Eigen::VectorXd sv = v_new - v;
        Eigen::VectorXd yv = g_v_new - g_v;
        double ys = yv.dot(sv);
        if (ys > 1e-12 * yv.norm() * sv.norm()) {
            double rho = 1.0 / ys;
            Eigen::MatrixXd I = Eigen::MatrixXd::Identity(d, d);
            H = (I - rho * sv * yv.transpose()) * H * (I - rho * yv * sv.transpose()) +
                rho * sv * sv.transpose();
        }
        v = v_new;
        g_v = g_v_new;
        cur = next;
        converged = check_converged();
    }

    FitResult r;
    r.theta_hat = theta;
    r.param_names.reserve(info.size());
    for (const auto& p : info) r.param_names.push_back(p.name);
    r.c_min = cur.c;
    r.converged = converged;
    r.n_iter = iter;
    r.grad_norm = projected_grad_norm(cur.g_theta, theta, info);
    r.clamped_bins = cur.clamped;
    for (Eigen::Index k = 0; k < d; ++k) {
        const auto& p = info[static_cast<std::size_t>(k)];
        if (theta[k] <= p.lower || theta[k] >= p.upper) r.at_boundary = true;
    }
    Eigen::MatrixXd XtVinvX(d, d);
    if (d > 0) {
        Eigen::MatrixXd Xw = cur.X;
        for (Eigen::Index i = 0; i < cur.s.size(); ++i) Xw.row(i) /= cur.s[i];
        XtVinvX = cur.X.transpose() * Xw;
        XtVinvX = 0.5 * (XtVinvX + XtVinvX.transpose()).eval();
    }
    r.fisher = XtVinvX;
    out.result = std::move(r);
    out.valid = true;
    return out;
}

// Prefer converged fits, then lower C, then lexicographically smaller theta
// so multistart winners are reproducible under exact ties.
bool better_than(const FitResult& a, const FitResult& b) {
    if (a.converged != b.converged) return a.converged;
    double scale = 1.0 + std::min(std::abs(a.c_min), std::abs(b.c_min));
    if (std::abs(a.c_min - b.c_min) > 1e-12 * scale) return a.c_min < b.c_min;
    for (Eigen::Index k = 0; k < a.theta_hat.size(); ++k) {
        if (a.theta_hat[k] != b.theta_hat[k]) return a.theta_hat[k] < b.theta_hat[k];
    }
    return false;
}

} // namespace

FitResult fit_mle(const BinnedDataset& data,
                  const SpectralModel& model,
                  std::optional<Eigen::VectorXd> init,
                  const FitOptions& options) {
    data.validate();
    if (data.n_bins() != model.n_bins()) {
        throw validation_error("E_SHAPE", "fit: dataset has " + std::to_string(data.n_bins()) +
                                              " bins but the model expects " +
                                              std::to_string(model.n_bins()));
    }
    Eigen::VectorXd counts(static_cast<Eigen::Index>(data.n_bins()));
    for (std::size_t i = 0; i < data.n_bins(); ++i) {
        counts[static_cast<Eigen::Index>(i)] = static_cast<double>(data.counts[i]);
    }

    // Zero free parameters: the statistic is fully determined.
    if (model.n_params() == 0) {
        Eigen::VectorXd empty(0);
        ClampReport rep;
        Eigen::VectorXd s = model.expected_counts(empty, &rep);
        FitResult r;
        r.theta_hat = empty;
        r.c_min = c_total(counts, s);
        r.fisher = Eigen::MatrixXd(0, 0);
        r.converged = true;
        r.clamped_bins = rep.clamped();
        return r;
    }

    Eigen::VectorXd base = init ? *init : model.default_init(data);
    model.check_parameters(base);

    std::vector<Eigen::VectorXd> starts{base};
    if (options.multistart) {
        const auto& info = model.parameters();
        for (double factor : {2.0, 0.5}) {
            Eigen::VectorXd alt = base;
            for (Eigen::Index k = 0; k < alt.size(); ++k) {
                const auto& p = info[static_cast<std::size_t>(k)];
                alt[k] = std::min(std::max(alt[k] * factor, p.lower), p.upper);
            }
            starts.push_back(alt);
        }
    }

    bool have_best = false;
    FitResult best;
    for (const auto& start : starts) {
        StartOutcome o = run_bfgs(model, counts, start, options);
        if (!o.valid) continue;
        if (!have_best || better_than(o.result, best)) {
            best = o.result;
            have_best = true;
        }
    }
    if (!have_best) {
        FitResult empty;
        throw fit_failure("fit: objective could not be evaluated at any start", empty);
    }
    if (!best.converged && options.throw_on_failure) {
        throw fit_failure("fit: no start converged within " +
                              std::to_string(options.max_iter) + " iterations (best grad norm " +
                              std::to_string(best.grad_norm) + ")",
                          best);
    }
    return best;
}

Eigen::MatrixXd fisher_information(const Eigen::MatrixXd& X, const Eigen::VectorXd& s) {
    if (X.rows() != s.size()) {
        throw validation_error("E_SHAPE", "fisher: X rows must match s length");
    }
    for (Eigen::Index i = 0; i < s.size(); ++i) {
        if (!(s[i] > 0.0)) {
            throw validation_error("E_DOMAIN", "fisher: expected counts must be positive");
        }
    }
    Eigen::MatrixXd Xw = X;
    for (Eigen::Index i = 0; i < s.size(); ++i) Xw.row(i) /= s[i];
    Eigen::MatrixXd I_n = X.transpose() * Xw;
    I_n = 0.5 * (I_n + I_n.transpose()).eval();
    if (I_n.rows() == 0) return I_n;

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(I_n);
    if (es.info() != Eigen::Success) {
        throw computation_error("E_FISHER_SINGULAR", "fisher: eigendecomposition failed");
    }
    double lo = es.eigenvalues().minCoeff();
    double hi = es.eigenvalues().maxCoeff();
    if (!(lo > 0.0) || hi / lo > 1e12) {
        throw computation_error("E_FISHER_SINGULAR",
                                "fisher: information matrix is singular or ill-conditioned "
                                "(consider reparameterizing the model)");
    }
    return I_n;
}

} // namespace cstat
