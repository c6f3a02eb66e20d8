#include "cstat/calibrate.hpp"
#include "cstat/common.hpp"
#include "cstat/cumulants.hpp"
#include "cstat/fit.hpp"
#include "cstat/gof.hpp"
#include "cstat/io.hpp"
#include "cstat/rng.hpp"
#include "cstat/threads.hpp"
#include "cstat/version.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <cstdlib>
#include <optional>
#include <set>
#include <string>
#include <vector>

using namespace cstat;
using nlohmann::json;

namespace {

void emit(const std::string& text, const std::string& out_path) {
    if (out_path.empty()) {
        std::fwrite(text.data(), 1, text.size(), stdout);
    } else {
        atomic_write_file(out_path, text);
    }
}

std::vector<std::string> split_list(const std::string& csv) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= csv.size()) {
        std::size_t pos = csv.find(',', start);
        if (pos == std::string::npos) pos = csv.size();
        std::string token = csv.substr(start, pos - start);
        if (!token.empty()) out.push_back(token);
        start = pos + 1;
    }
    if (out.empty()) {
        throw validation_error("E_CONFIG", "empty list: '" + csv + "'");
    }
    return out;
}

std::vector<GofMethod> parse_method_list(const std::string& csv) {
    std::vector<GofMethod> out;
    for (const auto& token : split_list(csv)) out.push_back(parse_method(token));
    return out;
}

bool uses_cumulants(const std::vector<GofMethod>& methods) {
    for (GofMethod m : methods) {
        if (m == GofMethod::naive_z_highorder || m == GofMethod::corrected_z_first ||
            m == GofMethod::corrected_z_high) {
            return true;
        }
    }
    return false;
}

bool uses_bootstrap(const std::vector<GofMethod>& methods) {
    for (GofMethod m : methods) {
        if (m == GofMethod::parametric_bootstrap || m == GofMethod::naive_z_boot ||
            m == GofMethod::double_bootstrap) {
            return true;
        }
    }
    return false;
}

// Resolves the table path: the flag wins; otherwise the CSTAT_TABLE
// environment variable, consulted only when the run actually needs
// cumulants.
std::string table_path_or_env(const std::string& flag, bool needed) {
    if (!flag.empty()) return flag;
    if (!needed) return {};
    if (const char* env = std::getenv("CSTAT_TABLE")) {
        if (*env) return env;
    }
    return {};
}

std::uint64_t require_seed(const std::optional<std::uint64_t>& seed) {
    if (!seed) {
        throw validation_error("E_SEED_REQUIRED",
                               "--seed is required for stochastic commands");
    }
    return *seed;
}

struct ResponseArgs {
    std::string rmf, arf;

    std::optional<InstrumentResponse> load() const {
        if (rmf.empty() != arf.empty()) {
            throw validation_error("E_CONFIG", "give both --rmf and --arf or neither");
        }
        if (rmf.empty()) return std::nullopt;
        return read_response_csv(rmf, arf);
    }
};

std::string json_seed(const std::optional<std::uint64_t>& seed) {
    return seed ? std::to_string(*seed) : std::string();
}

// ---- calibrate grid config -------------------------------------------------

TruthFamily parse_family(const std::string& name) {
    if (name == "constant") return TruthFamily::constant;
    if (name == "powerlaw") return TruthFamily::powerlaw;
    if (name == "powerlaw_emission" || name == "powerlaw+emission") {
        return TruthFamily::powerlaw_emission;
    }
    if (name == "powerlaw_absorption" || name == "powerlaw+absorption") {
        return TruthFamily::powerlaw_absorption;
    }
    throw validation_error("E_CONFIG", "unknown truth family '" + name + "'");
}

std::string family_name(TruthFamily f) {
    switch (f) {
        case TruthFamily::constant: return "constant";
        case TruthFamily::powerlaw: return "powerlaw";
        case TruthFamily::powerlaw_emission: return "powerlaw_emission";
        case TruthFamily::powerlaw_absorption: return "powerlaw_absorption";
    }
    return "";
}

[[noreturn]] void bad_grid(const std::string& what) {
    throw validation_error("E_CONFIG", "grid config: " + what);
}

ExperimentGrid parse_grid_json(const std::string& text, std::vector<GofMethod>* methods) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw validation_error("E_JSON", std::string("grid config: ") + e.what());
    }
    if (!j.is_object()) bad_grid("top level must be an object");
    static const std::set<std::string> allowed = {
        "family", "gamma", "K", "n", "alpha", "M", "B", "B1", "B2",
        "line_start_frac", "line_width_frac", "methods"};
    for (const auto& item : j.items()) {
        if (!allowed.count(item.key())) bad_grid("unknown key '" + item.key() + "'");
    }

    ExperimentGrid g;
    if (!j.contains("family") || !j.at("family").is_string()) {
        bad_grid("'family' must name a truth family");
    }
    g.family = parse_family(j.at("family").get<std::string>());

    auto number = [](const json& v, const char* key) {
        if (!v.is_number()) bad_grid(std::string("'") + key + "' must be a number");
        return v.get<double>();
    };
    auto number_list = [&](const char* key, bool required) {
        std::vector<double> out;
        if (!j.contains(key)) {
            if (required) bad_grid(std::string("missing '") + key + "'");
            return out;
        }
        const json& a = j.at(key);
        if (!a.is_array() || a.empty()) {
            bad_grid(std::string("'") + key + "' must be a nonempty array");
        }
        for (const auto& v : a) out.push_back(number(v, key));
        return out;
    };

    g.K_values = number_list("K", true);
    for (double v : number_list("n", true)) {
        if (v < 1 || v != std::floor(v)) bad_grid("'n' entries must be positive integers");
        g.n_values.push_back(static_cast<std::size_t>(v));
    }
    if (j.contains("alpha")) g.alphas = number_list("alpha", false);
    if (j.contains("gamma")) g.gamma = number(j.at("gamma"), "gamma");
    if (j.contains("M")) {
        double m = number(j.at("M"), "M");
        if (m < 1 || m != std::floor(m)) bad_grid("'M' must be a positive integer");
        g.M = static_cast<std::size_t>(m);
    }
    auto int_field = [&](const char* key, int* slot) {
        if (!j.contains(key)) return;
        double v = number(j.at(key), key);
        if (v < 1 || v != std::floor(v)) {
            bad_grid(std::string("'") + key + "' must be a positive integer");
        }
        *slot = static_cast<int>(v);
    };
    int_field("B", &g.B);
    int_field("B1", &g.B1);
    int_field("B2", &g.B2);
    if (j.contains("line_start_frac")) {
        g.line_start_frac = number(j.at("line_start_frac"), "line_start_frac");
    }
    if (j.contains("line_width_frac")) {
        g.line_width_frac = number(j.at("line_width_frac"), "line_width_frac");
    }
    if (j.contains("methods")) {
        const json& m = j.at("methods");
        if (!m.is_array() || m.empty()) bad_grid("'methods' must be a nonempty array");
        methods->clear();
        for (const auto& v : m) {
            if (!v.is_string()) bad_grid("'methods' must list method names");
            methods->push_back(parse_method(v.get<std::string>()));
        }
    }
    return g;
}

// ---- subcommand argument bags ------------------------------------------------

struct FitArgs {
    std::string data, model, out, format = "json";
    ResponseArgs resp;
};

struct GofArgs {
    std::string data, model, method, table, out, format = "json";
    ResponseArgs resp;
    int B = 300, B1 = 300, B2 = 300;
    double alpha = 0.05;
    std::optional<std::uint64_t> seed;
    bool smooth = false;
    bool no_subtract_d = false;
    int threads = 1;
};

struct SimulateArgs {
    std::string data, model, out;
    ResponseArgs resp;
    std::size_t segments = 0;
    std::optional<std::uint64_t> seed;
};

struct TableBuildArgs {
    std::string out;
    double smin = 1e-3, smax = 100.0, step = 1e-3, tau = 1e-30;
    int threads = 0;
};

struct CalibrateArgs {
    std::string preset, grid_path, method, table, out, format = "json";
    std::optional<std::size_t> M;
    std::optional<int> B, B1, B2;
    std::optional<double> alpha;
    std::optional<std::uint64_t> seed;
    int threads = 1;
    bool null_samples = false;
};

struct BenchArgs {
    std::string n_list = "10,30,50,75,100";
    int B = 100, repeats = 5;
    double K = 1.0, gamma = 3.0;
    std::string table, out, format = "json";
    std::optional<std::uint64_t> seed;
};

// ---- subcommand runners --------------------------------------------------------

RunConfig base_config(const std::string& command) {
    RunConfig c;
    c.command = command;
    return c;
}

void write_report(const AnalysisReport& report, const std::string& format,
                  const std::string& out) {
    if (format == "csv") {
        emit(gof_to_csv(report), out);
    } else {
        emit(report_to_json(report), out);
    }
}

int run_fit(const FitArgs& a) {
    BinnedDataset data = read_dataset_csv(a.data);
    std::optional<InstrumentResponse> resp = a.resp.load();
    LoadedModel lm = load_model_json(a.model, &data, resp ? &*resp : nullptr);
    std::optional<Eigen::VectorXd> init;
    if (lm.init.size() > 0) init = lm.init;
    FitResult fr = fit_mle(data, *lm.model, init);

    AnalysisReport report;
    report.version = version_string;
    report.config = base_config("fit");
    report.config.data_path = a.data;
    report.config.rmf_path = a.resp.rmf;
    report.config.arf_path = a.resp.arf;
    report.config.model_path = a.model;
    report.fit = fr;
    report.clamped_bins = fr.clamped_bins;
    write_report(report, a.format, a.out);
    return 0;
}

int run_gof(const GofArgs& a) {
    std::vector<GofMethod> methods = parse_method_list(a.method);
    if (uses_bootstrap(methods)) require_seed(a.seed);

    BinnedDataset data = read_dataset_csv(a.data);
    std::optional<InstrumentResponse> resp = a.resp.load();
    LoadedModel lm = load_model_json(a.model, &data, resp ? &*resp : nullptr);
    std::optional<Eigen::VectorXd> init;
    if (lm.init.size() > 0) init = lm.init;
    FitResult fr = fit_mle(data, *lm.model, init);
    ModelEvaluation eval = evaluate_model(*lm.model, fr.theta_hat);
    const std::size_t n = lm.model->n_bins();
    const std::size_t d = lm.model->n_params();

    std::optional<CumulantTable> table;
    CumulantProvider cum;
    const std::string table_path = table_path_or_env(a.table, uses_cumulants(methods));
    if (!table_path.empty()) {
        table = CumulantTable::load(table_path);
        cum = CumulantProvider(&*table);
    }

    const int threads = resolve_threads(a.threads);
    std::optional<BootstrapSample> boot;
    auto boot_sample = [&]() -> const BootstrapSample& {
        if (!boot) {
            BootstrapOptions bo;
            bo.B = a.B;
            bo.seed = derive_stream(*a.seed, 1);
            bo.n_threads = threads;
            boot = bootstrap_null_sample(*lm.model, fr.theta_hat, bo);
        }
        return *boot;
    };

    std::vector<GofResult> results;
    for (GofMethod m : methods) {
        switch (m) {
            case GofMethod::lr_chi2:
                results.push_back(lr_chi2_test(fr.c_min, n, d));
                break;
            case GofMethod::naive_z_highorder:
                results.push_back(
                    naive_z_highorder_test(fr.c_min, eval.s, d, cum, !a.no_subtract_d));
                break;
            case GofMethod::corrected_z_first:
                results.push_back(corrected_z_first_test(fr.c_min, eval.s, eval.X, cum));
                break;
            case GofMethod::corrected_z_high:
                results.push_back(corrected_z_high_test(fr.c_min, eval.s, eval.X, cum));
                break;
            case GofMethod::naive_z_boot:
                results.push_back(naive_z_boot_from_sample(fr.c_min, boot_sample(), a.B));
                break;
            case GofMethod::parametric_bootstrap:
                results.push_back(
                    parametric_bootstrap_from_sample(fr.c_min, boot_sample(), a.B, a.smooth));
                break;
            case GofMethod::double_bootstrap: {
                FitOptions fo;
                results.push_back(double_bootstrap_test(fr.c_min, *lm.model, fr.theta_hat,
                                                        a.B1, a.B2,
                                                        derive_stream(*a.seed, 2), fo,
                                                        threads));
                break;
            }
        }
    }

    AnalysisReport report;
    report.version = version_string;
    report.config = base_config("gof");
    report.config.data_path = a.data;
    report.config.rmf_path = a.resp.rmf;
    report.config.arf_path = a.resp.arf;
    report.config.model_path = a.model;
    report.config.table_path = table_path;
    for (GofMethod m : methods) report.config.methods.push_back(method_name(m));
    report.config.B = a.B;
    report.config.B1 = a.B1;
    report.config.B2 = a.B2;
    report.config.alpha = a.alpha;
    report.config.seed = a.seed;
    report.config.smooth = a.smooth;
    report.config.subtract_d = !a.no_subtract_d;
    report.fit = fr;
    report.gof = std::move(results);
    if (table) report.table_checksum = table->checksum_hex();
    report.clamped_bins = fr.clamped_bins;
    write_report(report, a.format, a.out);
    return 0;
}

int run_simulate(const SimulateArgs& a) {
    std::uint64_t seed = require_seed(a.seed);
    BinnedDataset data;
    if (!a.data.empty()) {
        if (!a.model.empty()) {
            throw validation_error("E_CONFIG", "give --data or --model, not both");
        }
        if (a.segments == 0) {
            throw validation_error("E_CONFIG",
                                   "--data without --segments has nothing to do");
        }
        data = read_dataset_csv(a.data);
    } else {
        if (a.model.empty()) {
            throw validation_error("E_CONFIG", "simulate needs --model or --data");
        }
        std::optional<InstrumentResponse> resp = a.resp.load();
        LoadedModel lm = load_model_json(a.model, nullptr, resp ? &*resp : nullptr);
        if (lm.model->n_params() > 0 && lm.init.size() == 0) {
            throw validation_error("E_MODEL_CONFIG",
                                   "simulate needs parameter values; give 'params' in the "
                                   "model config");
        }
        data = simulate_counts(*lm.model, lm.init, derive_stream(seed, 0));
    }

    if (a.segments > 0) {
        if (a.out.empty()) {
            throw validation_error("E_CONFIG", "--segments needs --out for the file stem");
        }
        std::vector<BinnedDataset> segs =
            segment_dataset(data, a.segments, derive_stream(seed, 1));
        std::size_t dot = a.out.find_last_of('.');
        std::size_t slash = a.out.find_last_of('/');
        if (dot == std::string::npos || (slash != std::string::npos && dot < slash)) {
            dot = a.out.size();
        }
        const std::string stem = a.out.substr(0, dot);
        const std::string ext = a.out.substr(dot);
        for (std::size_t i = 0; i < segs.size(); ++i) {
            write_dataset_csv(segs[i], stem + "." + std::to_string(i + 1) + ext);
        }
        return 0;
    }
    if (a.out.empty()) {
        emit(dataset_to_csv(data), "");
    } else {
        write_dataset_csv(data, a.out);
    }
    return 0;
}

int run_table_build(const TableBuildArgs& a) {
    CumulantTable table =
        CumulantTable::build(a.smin, a.smax, a.step, a.tau, resolve_threads(a.threads));
    table.save(a.out);
    std::printf("table written: %s rows=%zu checksum=%s\n", a.out.c_str(), table.rows(),
                table.checksum_hex().c_str());
    return 0;
}

int run_table_verify(const std::string& path) {
    CumulantTable table = CumulantTable::load(path);
    std::printf("table ok: rows=%zu s=[%s,%s] step=%s tau=%s checksum=%s\n", table.rows(),
                format_double(table.header().s_min).c_str(),
                format_double(table.header().s_max).c_str(),
                format_double(table.header().step).c_str(),
                format_double(table.header().tau).c_str(), table.checksum_hex().c_str());
    return 0;
}

int run_table_export(const std::string& path, const std::string& out) {
    CumulantTable table = CumulantTable::load(path);
    table.export_csv(out);
    return 0;
}

int run_calibrate(const CalibrateArgs& a) {
    if (a.preset.empty() == a.grid_path.empty()) {
        throw validation_error("E_CONFIG", "give exactly one of --preset or --grid");
    }
    ExperimentGrid grid;
    std::vector<GofMethod> methods;
    if (!a.preset.empty()) {
        grid = preset_grid(a.preset);
        methods = preset_methods(a.preset);
    } else {
        methods = preset_methods("fig2-desk"); // default algorithm set
        grid = parse_grid_json(read_file(a.grid_path), &methods);
    }
    if (!a.method.empty()) methods = parse_method_list(a.method);
    if (a.M) grid.M = *a.M;
    if (a.B) grid.B = *a.B;
    if (a.B1) grid.B1 = *a.B1;
    if (a.B2) grid.B2 = *a.B2;
    if (a.alpha) grid.alphas = {*a.alpha};
    grid.seed = require_seed(a.seed);
    grid.n_threads = resolve_threads(a.threads);

    std::optional<CumulantTable> table;
    CumulantProvider cum;
    const std::string table_path = table_path_or_env(a.table, uses_cumulants(methods));
    if (!table_path.empty()) {
        table = CumulantTable::load(table_path);
        cum = CumulantProvider(&*table);
    }

    const bool null_family =
        grid.family == TruthFamily::constant || grid.family == TruthFamily::powerlaw;
    if (a.null_samples && !null_family) {
        throw validation_error("E_CONFIG",
                               "--null-sample applies to null families "
                               "(constant, powerlaw) only");
    }

    CalibrationReport report = calibration_run(grid, methods, cum);

    if (a.format == "csv") {
        emit(calibration_to_csv(report), a.out);
        return 0;
    }

    json j;
    j["schema"] = "cstat-calibration-1";
    j["version"] = version_string;
    j["preset"] = a.preset;
    j["family"] = family_name(grid.family);
    j["gamma"] = grid.gamma;
    j["K"] = grid.K_values;
    j["n"] = grid.n_values;
    j["alpha"] = grid.alphas;
    j["M"] = grid.M;
    j["B"] = grid.B;
    j["B1"] = grid.B1;
    j["B2"] = grid.B2;
    j["line_start_frac"] = grid.line_start_frac;
    j["line_width_frac"] = grid.line_width_frac;
    j["seed"] = std::to_string(grid.seed);
    json method_names = json::array();
    for (GofMethod m : methods) method_names.push_back(method_name(m));
    j["methods"] = std::move(method_names);
    j["table_checksum"] = table ? table->checksum_hex() : "";
    json cells = json::array();
    for (const CellResult& c : report.cells) {
        json cj;
        cj["algorithm"] = c.algorithm;
        cj["n"] = c.n;
        cj["K"] = c.K;
        cj["alpha"] = c.alpha;
        cj["metric"] = c.metric;
        cj["value"] = c.value;
        cj["se"] = c.se;
        cj["q_alpha"] = c.q_alpha;
        cj["q_se"] = c.q_se;
        cj["m_used"] = c.m_used;
        cj["n_failed"] = c.n_failed;
        cj["flagged"] = c.flagged;
        cells.push_back(std::move(cj));
    }
    j["cells"] = std::move(cells);

    if (a.null_samples) {
        json samples = json::array();
        std::size_t cell_idx = 0;
        for (std::size_t n : grid.n_values) {
            for (double K : grid.K_values) {
                std::shared_ptr<SpectralModel> model;
                Eigen::VectorXd theta_star;
                if (grid.family == TruthFamily::constant) {
                    model = std::make_shared<ConstantModel>(n);
                    theta_star.resize(1);
                    theta_star << K;
                } else {
                    model = std::make_shared<PowerLawModel>(n);
                    theta_star.resize(2);
                    theta_star << K, grid.gamma;
                }
                // Reuses the calibration cells' replicate seed streams, so
                // the embedded sample matches the cells replicate for
                // replicate.
                std::size_t failed = 0;
                std::vector<double> c_values =
                    null_sample(*model, theta_star, grid.M,
                                derive_stream(grid.seed, cell_idx), grid.fit,
                                grid.n_threads, &failed);
                json sj;
                sj["n"] = n;
                sj["K"] = K;
                sj["n_failed"] = failed;
                sj["c_values"] = c_values;
                samples.push_back(std::move(sj));
                ++cell_idx;
            }
        }
        j["null_samples"] = std::move(samples);
    } else {
        j["null_samples"] = nullptr;
    }
    emit(j.dump(2) + "\n", a.out);
    return 0;
}

int run_bench(const BenchArgs& a) {
    std::uint64_t seed = require_seed(a.seed);
    std::vector<std::size_t> n_values;
    for (const auto& token : split_list(a.n_list)) {
        char* end = nullptr;
        long v = std::strtol(token.c_str(), &end, 10);
        if (end == token.c_str() || *end != '\0' || v < 1) {
            throw validation_error("E_CONFIG",
                                   "--n entries must be positive integers: '" + token + "'");
        }
        n_values.push_back(static_cast<std::size_t>(v));
    }

    std::optional<CumulantTable> table;
    CumulantProvider cum;
    const std::string table_path = table_path_or_env(a.table, true);
    if (!table_path.empty()) {
        table = CumulantTable::load(table_path);
        cum = CumulantProvider(&*table);
    }

    std::vector<BenchRow> rows =
        runtime_comparison(n_values, a.K, a.gamma, a.B, a.repeats, seed, cum);

    if (a.format == "csv") {
        std::string out = "n,bootstrap_seconds,corrected_seconds,ratio\n";
        for (const BenchRow& r : rows) {
            out += std::to_string(r.n);
            out += ',';
            out += format_double(r.bootstrap_seconds);
            out += ',';
            out += format_double(r.corrected_seconds);
            out += ',';
            out += format_double(r.bootstrap_seconds / r.corrected_seconds);
            out += '\n';
        }
        emit(out, a.out);
        return 0;
    }
    json j;
    j["schema"] = "cstat-bench-1";
    j["version"] = version_string;
    j["B"] = a.B;
    j["repeats"] = a.repeats;
    j["K"] = a.K;
    j["gamma"] = a.gamma;
    j["seed"] = std::to_string(seed);
    json jrows = json::array();
    for (const BenchRow& r : rows) {
        json rj;
        rj["n"] = r.n;
        rj["bootstrap_seconds"] = r.bootstrap_seconds;
        rj["corrected_seconds"] = r.corrected_seconds;
        rj["ratio"] = r.bootstrap_seconds / r.corrected_seconds;
        jrows.push_back(std::move(rj));
    }
    j["rows"] = std::move(jrows);
    emit(j.dump(2) + "\n", a.out);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Cash-statistic spectral fitting with calibrated goodness of fit"};
    app.set_version_flag("--version", version_string);
    app.require_subcommand(1);

    FitArgs fit_args;
    auto* fit_cmd = app.add_subcommand("fit", "Fit a model by minimizing the Cash statistic");
    fit_cmd->add_option("--data", fit_args.data, "Dataset CSV")->required();
    fit_cmd->add_option("--model", fit_args.model, "Model config JSON")->required();
    fit_cmd->add_option("--rmf", fit_args.resp.rmf, "Redistribution matrix CSV");
    fit_cmd->add_option("--arf", fit_args.resp.arf, "Effective area CSV");
    fit_cmd->add_option("--out", fit_args.out, "Report path (stdout when omitted)");
    fit_cmd->add_option("--format", fit_args.format, "Report format")
        ->check(CLI::IsMember({"json"}));

    GofArgs gof_args;
    auto* gof_cmd = app.add_subcommand("gof", "Goodness-of-fit tests for a fitted model");
    gof_cmd->add_option("--data", gof_args.data, "Dataset CSV")->required();
    gof_cmd->add_option("--model", gof_args.model, "Model config JSON")->required();
    gof_cmd->add_option("--method", gof_args.method, "Comma-separated method list")
        ->required();
    gof_cmd->add_option("--rmf", gof_args.resp.rmf, "Redistribution matrix CSV");
    gof_cmd->add_option("--arf", gof_args.resp.arf, "Effective area CSV");
    gof_cmd->add_option("--table", gof_args.table,
                        "Cumulant table (default: CSTAT_TABLE, else direct summation)");
    gof_cmd->add_option("--B", gof_args.B, "Bootstrap replicates");
    gof_cmd->add_option("--B1", gof_args.B1, "Double-bootstrap outer replicates");
    gof_cmd->add_option("--B2", gof_args.B2, "Double-bootstrap inner replicates");
    gof_cmd->add_option("--alpha", gof_args.alpha, "Level echoed in the report");
    gof_cmd->add_option("--seed", gof_args.seed, "Random seed (required for bootstraps)");
    gof_cmd->add_flag("--smooth", gof_args.smooth, "Smoothed bootstrap p-value");
    gof_cmd->add_flag("--no-subtract-d", gof_args.no_subtract_d,
                      "Do not subtract d from the naive Z reference mean");
    gof_cmd->add_option("--threads", gof_args.threads, "Worker threads (0 = auto)");
    gof_cmd->add_option("--out", gof_args.out, "Report path (stdout when omitted)");
    gof_cmd->add_option("--format", gof_args.format, "Report format")
        ->check(CLI::IsMember({"json", "csv"}));

    SimulateArgs sim_args;
    auto* sim_cmd =
        app.add_subcommand("simulate", "Draw Poisson counts from a model, or split a dataset");
    sim_cmd->add_option("--model", sim_args.model, "Model config JSON (with params)");
    sim_cmd->add_option("--data", sim_args.data, "Dataset CSV to segment");
    sim_cmd->add_option("--rmf", sim_args.resp.rmf, "Redistribution matrix CSV");
    sim_cmd->add_option("--arf", sim_args.resp.arf, "Effective area CSV");
    sim_cmd->add_option("--segments", sim_args.segments,
                        "Split into this many segments by binomial thinning");
    sim_cmd->add_option("--seed", sim_args.seed, "Random seed")->required();
    sim_cmd->add_option("--out", sim_args.out, "Output CSV (stem when segmenting)");

    auto* table_cmd = app.add_subcommand("table", "Cumulant lookup table maintenance");
    table_cmd->require_subcommand(1);
    TableBuildArgs tb_args;
    auto* tb_cmd = table_cmd->add_subcommand("build", "Build and save a table");
    tb_cmd->add_option("--out", tb_args.out, "Output table file")->required();
    tb_cmd->add_option("--smin", tb_args.smin, "Grid start");
    tb_cmd->add_option("--smax", tb_args.smax, "Grid end");
    tb_cmd->add_option("--step", tb_args.step, "Grid step");
    tb_cmd->add_option("--tau", tb_args.tau, "Series truncation tolerance");
    tb_cmd->add_option("--threads", tb_args.threads, "Worker threads (0 = auto)");
    std::string tv_path, te_path, te_out;
    auto* tv_cmd = table_cmd->add_subcommand("verify", "Check a table file's integrity");
    tv_cmd->add_option("--table", tv_path, "Table file")->required();
    auto* te_cmd = table_cmd->add_subcommand("export", "Export a table to CSV");
    te_cmd->add_option("--table", te_path, "Table file")->required();
    te_cmd->add_option("--out", te_out, "Output CSV")->required();

    CalibrateArgs cal_args;
    auto* cal_cmd =
        app.add_subcommand("calibrate", "Monte Carlo Type-I error and power experiments");
    cal_cmd->add_option("--preset", cal_args.preset,
                        "Named experiment preset (fig2-desk, fig2-full, fig4-desk, fig4-full)");
    cal_cmd->add_option("--grid", cal_args.grid_path, "Experiment grid config JSON");
    cal_cmd->add_option("--method", cal_args.method, "Comma-separated method list override");
    cal_cmd->add_option("--M", cal_args.M, "Replicates per cell");
    cal_cmd->add_option("--B", cal_args.B, "Bootstrap replicates");
    cal_cmd->add_option("--B1", cal_args.B1, "Double-bootstrap outer replicates");
    cal_cmd->add_option("--B2", cal_args.B2, "Double-bootstrap inner replicates");
    cal_cmd->add_option("--alpha", cal_args.alpha, "Single test level override");
    cal_cmd->add_option("--seed", cal_args.seed, "Master seed")->required();
    cal_cmd->add_option("--table", cal_args.table,
                        "Cumulant table (default: CSTAT_TABLE, else direct summation)");
    cal_cmd->add_option("--threads", cal_args.threads, "Worker threads (0 = auto)");
    cal_cmd->add_flag("--null-sample", cal_args.null_samples,
                      "Embed per-cell null C samples in the JSON report");
    cal_cmd->add_option("--out", cal_args.out, "Report path (stdout when omitted)");
    cal_cmd->add_option("--format", cal_args.format, "Report format")
        ->check(CLI::IsMember({"json", "csv"}));

    BenchArgs bench_args;
    auto* bench_cmd =
        app.add_subcommand("bench", "Wall-clock comparison: corrected Z vs bootstrap");
    bench_cmd->add_option("--n", bench_args.n_list, "Comma-separated bin counts");
    bench_cmd->add_option("--B", bench_args.B, "Bootstrap replicates");
    bench_cmd->add_option("--repeats", bench_args.repeats, "Datasets per bin count");
    bench_cmd->add_option("--K", bench_args.K, "Power-law normalization");
    bench_cmd->add_option("--seed", bench_args.seed, "Random seed")->required();
    bench_cmd->add_option("--table", bench_args.table,
                          "Cumulant table (default: CSTAT_TABLE, else direct summation)");
    bench_cmd->add_option("--out", bench_args.out, "Report path (stdout when omitted)");
    bench_cmd->add_option("--format", bench_args.format, "Report format")
        ->check(CLI::IsMember({"json", "csv"}));

    try {
        app.parse(argc, argv);
        if (*fit_cmd) return run_fit(fit_args);
        if (*gof_cmd) return run_gof(gof_args);
        if (*sim_cmd) return run_simulate(sim_args);
        if (*tb_cmd) return run_table_build(tb_args);
        if (*tv_cmd) return run_table_verify(tv_path);
        if (*te_cmd) return run_table_export(te_path, te_out);
        if (*cal_cmd) return run_calibrate(cal_args);
        if (*bench_cmd) return run_bench(bench_args);
        return 2;
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    } catch (const validation_error& e) {
        std::fprintf(stderr, "error [%s]: %s\n", e.code().c_str(), e.what());
        return 2;
    } catch (const computation_error& e) {
        std::fprintf(stderr, "error [%s]: %s\n", e.code().c_str(), e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error [E_INTERNAL]: %s\n", e.what());
        return 1;
    }
}
