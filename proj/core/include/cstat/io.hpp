#pragma once

#include "cstat/dataset.hpp"
#include "cstat/fit.hpp"
#include "cstat/gof.hpp"
#include "cstat/model.hpp"
#include "cstat/response.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace cstat {

// ---- files -----------------------------------------------------------------

// Dataset CSV with header channel,lo,hi,count[,background]. Channels must
// be contiguous from 1 and edges must chain (each lo equals the previous
// hi).
BinnedDataset read_dataset_csv(const std::string& path);
std::string dataset_to_csv(const BinnedDataset& d);
void write_dataset_csv(const BinnedDataset& d, const std::string& path);

// Response pair: rmf CSV holds the dense J x n matrix (one row per model
// bin, no header); arf CSV has header j,x_mid,width,area. Validated
// strictly, including row sums.
InstrumentResponse read_response_csv(const std::string& rmf_path,
                                     const std::string& arf_path);

// Model configuration JSON, for example:
//
//   {"model": "powerlaw", "params": {"K": 1.0, "Gamma": 3.0},
//    "line": {"m1": 10, "m2": 20, "Psi": 2.0},
//    "grid": {"n": 100}}
//
// The observable grid comes from, in order of precedence: an explicit
// "edges" array, "grid": {"n": N}, the dataset, or the response. With a
// response the model is folded through it; "fixed": ["Gamma"] freezes
// parameters at their "params" values.
struct LoadedModel {
    std::shared_ptr<SpectralModel> model;
    Eigen::VectorXd init; // parameter values from the file, reduced to free
};
LoadedModel load_model_json(const std::string& path,
                            const BinnedDataset* data,
                            const InstrumentResponse* response);
LoadedModel parse_model_json(const std::string& text,
                             const BinnedDataset* data,
                             const InstrumentResponse* response);

// ---- reports ---------------------------------------------------------------

// Echo of the run configuration embedded in every report.
struct RunConfig {
    std::string command;
    std::string data_path, rmf_path, arf_path, model_path, table_path;
    std::vector<std::string> methods;
    int B = 300, B1 = 300, B2 = 300;
    double alpha = 0.05;
    std::optional<std::uint64_t> seed;
    bool smooth = false;
    bool subtract_d = true;
    int threads = 1;
};

struct AnalysisReport {
    std::string schema = report_schema();
    std::string version; // library version
    RunConfig config;
    std::optional<FitResult> fit;
    std::vector<GofResult> gof;
    std::string table_checksum; // empty when no table was used
    std::size_t clamped_bins = 0;

    static std::string report_schema();
};

// JSON serialization round-trips losslessly: every double is written in
// shortest round-trip form, and the strict reader rejects unknown keys,
// missing keys, and schema mismatches with validation_error.
std::string report_to_json(const AnalysisReport& report);
AnalysisReport report_from_json(const std::string& text);

// CSV projection of the goodness-of-fit block (one row per method).
std::string gof_to_csv(const AnalysisReport& report);

} // namespace cstat
