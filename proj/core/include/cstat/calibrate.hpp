#pragma once

#include "cstat/cumulants.hpp"
#include "cstat/gof.hpp"
#include "cstat/model.hpp"
#include "cstat/response.hpp"

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace cstat {

// Shape of the generating truth in a calibration experiment. Emission and
// absorption place a flat line over bins (m1, m1 + width] with strength
// 2K and K/10 respectively; the null fit is always the bare family.
enum class TruthFamily {
    constant,
    powerlaw,
    powerlaw_emission,
    powerlaw_absorption,
};

struct ExperimentGrid {
    TruthFamily family = TruthFamily::powerlaw;
    double gamma = 3.0;
    std::vector<double> K_values;
    std::vector<std::size_t> n_values;
    std::vector<double> alphas{0.1};
    std::size_t M = 3000; // Monte Carlo replicates per (n, K) cell
    int B = 300;          // bootstrap size inside each replicate
    int B1 = 300, B2 = 300;
    double line_start_frac = 0.1; // m1 = round(frac * n)
    double line_width_frac = 0.1;
    std::uint64_t seed = 0;
    int n_threads = 1;
    FitOptions fit;
};

// One aggregated cell of a calibration run. metric is "type1" or "power";
// value is the rejection rate over the replicates that produced a p-value,
// se its binomial standard error, q_alpha the mean estimated critical
// value. A cell is flagged when more than 1% of replicates failed.
struct CellResult {
    std::string algorithm;
    std::size_t n = 0;
    double K = 0;
    double alpha = 0;
    std::string metric;
    double value = 0;
    double se = 0;
    double q_alpha = 0; // mean estimated critical value over replicates
    double q_se = 0;
    std::size_t m_used = 0;
    std::size_t n_failed = 0;
    bool flagged = false;
};

struct CalibrationReport {
    ExperimentGrid grid;
    std::vector<GofMethod> methods;
    std::vector<CellResult> cells;
};

// Rejection-rate experiment over the (n, K) grid. Within a cell every
// algorithm and every alpha sees the same M simulated datasets and the
// same null fit (common random numbers); replicates whose null fit fails
// are dropped for all algorithms, replicates where a single algorithm
// degenerates are dropped for that algorithm only. The metric is "type1"
// when the truth family equals the null family and "power" otherwise.
CalibrationReport calibration_run(const ExperimentGrid& grid,
                                  const std::vector<GofMethod>& methods,
                                  const CumulantProvider& cum);

// Null distribution sample of C(theta_hat): M simulate-and-refit draws at
// theta_star. Failed fits are dropped and counted.
std::vector<double> null_sample(const SpectralModel& model,
                                const Eigen::VectorXd& theta_star,
                                std::size_t M,
                                std::uint64_t seed,
                                const FitOptions& fit_options,
                                int n_threads,
                                std::size_t* n_failed = nullptr);

// Monte Carlo study of response-matrix effects: the same power-law truth,
// folded through a case response versus the identity, compared by the
// two-sample KS distance of the C(theta_hat) samples.
struct ResponseStudyResult {
    std::vector<double> c_case;
    std::vector<double> c_identity;
    double ks = 0;
    std::size_t failed_case = 0;
    std::size_t failed_identity = 0;
};
ResponseStudyResult response_case_study(ResponseCase which,
                                        std::size_t n,
                                        double K_over_n,
                                        double gamma,
                                        std::size_t M,
                                        std::uint64_t seed,
                                        const FitOptions& fit_options,
                                        int n_threads);

// Wall-clock comparison of the corrected Z test against the parametric
// bootstrap on power-law data, timed single-threaded end to end (fit plus
// test). Seconds are means over the repeats.
struct BenchRow {
    std::size_t n = 0;
    double bootstrap_seconds = 0;
    double corrected_seconds = 0;
};
std::vector<BenchRow> runtime_comparison(const std::vector<std::size_t>& n_values,
                                         double K,
                                         double gamma,
                                         int B,
                                         int repeats,
                                         std::uint64_t seed,
                                         const CumulantProvider& cum);

// Named presets for the experiment grids used in the docs; throws
// validation_error for an unknown name.
ExperimentGrid preset_grid(const std::string& name);
std::vector<GofMethod> preset_methods(const std::string& name);
std::vector<std::string> preset_names();

std::string calibration_to_csv(const CalibrationReport& report);

} // namespace cstat
