#include "cstat/io.hpp"

#include "cstat/common.hpp"
#include "cstat/threads.hpp"
#include "cstat/version.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>
#include <utility>

namespace cstat {

using nlohmann::json;

int resolve_threads(int requested) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("CSTAT_THREADS")) {
        char* end = nullptr;
        long v = std::strtol(env, &end, 10);
        if (end != env && *end == '\0' && v > 0) return static_cast<int>(v);
    }
    unsigned hc = std::thread::hardware_concurrency();
    return hc > 0 ? static_cast<int>(hc) : 1;
}

// ---- common helpers ---------------------------------------------------------

std::string format_double(double x) {
    std::array<char, 40> buf;
    auto [p, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), x);
    return std::string(buf.data(), p);
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw validation_error("E_NO_FILE", "cannot open " + path + " for reading");
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) {
        throw computation_error("E_IO", "read failed on " + path);
    }
    return std::move(ss).str();
}

void atomic_write_file(const std::string& path, const std::string& contents) {
    namespace fs = std::filesystem;
    fs::path target(path);
    fs::path tmp = target;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw computation_error("E_IO",
                                    "cannot open " + tmp.string() + " for writing");
        }
        out.write(contents.data(),
                  static_cast<std::streamsize>(contents.size()));
        out.flush();
        if (!out) {
            std::error_code ignored;
            fs::remove(tmp, ignored);
            throw computation_error("E_IO", "write failed on " + tmp.string());
        }
    }
    std::error_code ec;
    fs::rename(tmp, target, ec);
    if (ec) {
        std::error_code ignored;
        fs::remove(tmp, ignored);
        throw computation_error("E_IO", "cannot rename " + tmp.string() + " to " + path +
                                            ": " + ec.message());
    }
}

// ---- CSV machinery ----------------------------------------------------------

namespace {

std::vector<std::string> split_lines(const std::string& text) {
    std::vector<std::string> lines;
    std::string cur;
    for (char ch : text) {
        if (ch == '\n') {
            if (!cur.empty() && cur.back() == '\r') cur.pop_back();
            lines.push_back(std::move(cur));
            cur.clear();
        } else {
            cur.push_back(ch);
        }
    }
    if (!cur.empty() && cur.back() == '\r') cur.pop_back();
    if (!cur.empty()) lines.push_back(std::move(cur));
    return lines;
}

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t");
    if (b == std::string::npos) return {};
    std::size_t e = s.find_last_not_of(" \t");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        std::size_t pos = line.find(',', start);
        if (pos == std::string::npos) {
            out.push_back(trim(line.substr(start)));
            break;
        }
        out.push_back(trim(line.substr(start, pos - start)));
        start = pos + 1;
    }
    return out;
}

[[noreturn]] void bad_csv(const std::string& path, std::size_t line_no,
                          const std::string& what) {
    throw validation_error("E_CSV", path + ":" + std::to_string(line_no) + ": " + what);
}

double parse_double_field(const std::string& field, const std::string& path,
                          std::size_t line_no) {
    const char* first = field.data();
    const char* last = field.data() + field.size();
    if (first != last && *first == '+') ++first;
    double value = 0;
    auto [p, ec] = std::from_chars(first, last, value);
    if (ec != std::errc{} || p != last || field.empty()) {
        bad_csv(path, line_no, "expected a number, got '" + field + "'");
    }
    return value;
}

long long parse_int_field(const std::string& field, const std::string& path,
                          std::size_t line_no) {
    const char* first = field.data();
    const char* last = field.data() + field.size();
    if (first != last && *first == '+') ++first;
    long long value = 0;
    auto [p, ec] = std::from_chars(first, last, value);
    if (ec != std::errc{} || p != last || field.empty()) {
        bad_csv(path, line_no, "expected an integer, got '" + field + "'");
    }
    return value;
}

} // namespace

// ---- dataset CSV ------------------------------------------------------------

BinnedDataset read_dataset_csv(const std::string& path) {
    std::vector<std::string> lines = split_lines(read_file(path));
    if (lines.empty()) {
        throw validation_error("E_CSV", path + ": empty file");
    }
    std::vector<std::string> header = split_fields(lines[0]);
    bool with_background;
    if (header == std::vector<std::string>{"channel", "lo", "hi", "count"}) {
        with_background = false;
    } else if (header ==
               std::vector<std::string>{"channel", "lo", "hi", "count", "background"}) {
        with_background = true;
    } else {
        bad_csv(path, 1, "expected header channel,lo,hi,count[,background]");
    }

    BinnedDataset d;
    if (with_background) d.background.emplace();
    for (std::size_t li = 1; li < lines.size(); ++li) {
        if (trim(lines[li]).empty()) continue;
        std::vector<std::string> f = split_fields(lines[li]);
        if (f.size() != header.size()) {
            bad_csv(path, li + 1, "expected " + std::to_string(header.size()) + " fields");
        }
        long long channel = parse_int_field(f[0], path, li + 1);
        if (channel != static_cast<long long>(d.counts.size()) + 1) {
            bad_csv(path, li + 1,
                    "channels must be contiguous from 1; expected " +
                        std::to_string(d.counts.size() + 1));
        }
        double lo = parse_double_field(f[1], path, li + 1);
        double hi = parse_double_field(f[2], path, li + 1);
        if (d.edges.empty()) {
            d.edges.push_back(lo);
        } else if (lo != d.edges.back()) {
            bad_csv(path, li + 1, "lo must equal the previous hi (edges must chain)");
        }
        if (!(hi > lo)) {
            bad_csv(path, li + 1, "hi must exceed lo");
        }
        d.edges.push_back(hi);
        d.counts.push_back(parse_int_field(f[3], path, li + 1));
        if (with_background) {
            d.background->push_back(parse_double_field(f[4], path, li + 1));
        }
    }
    if (d.counts.empty()) {
        throw validation_error("E_CSV", path + ": no data rows");
    }
    d.validate();
    return d;
}

std::string dataset_to_csv(const BinnedDataset& d) {
    d.validate();
    std::string out = d.background ? "channel,lo,hi,count,background\n"
                                   : "channel,lo,hi,count\n";
    for (std::size_t i = 0; i < d.n_bins(); ++i) {
        out += std::to_string(i + 1);
        out += ',';
        out += format_double(d.edges[i]);
        out += ',';
        out += format_double(d.edges[i + 1]);
        out += ',';
        out += std::to_string(d.counts[i]);
        if (d.background) {
            out += ',';
            out += format_double((*d.background)[i]);
        }
        out += '\n';
    }
    return out;
}

void write_dataset_csv(const BinnedDataset& d, const std::string& path) {
    atomic_write_file(path, dataset_to_csv(d));
}

// ---- response CSV pair -------------------------------------------------------

InstrumentResponse read_response_csv(const std::string& rmf_path,
                                     const std::string& arf_path) {
    std::vector<std::string> rmf_lines = split_lines(read_file(rmf_path));
    std::vector<std::vector<double>> rows;
    for (std::size_t li = 0; li < rmf_lines.size(); ++li) {
        if (trim(rmf_lines[li]).empty()) continue;
        std::vector<std::string> f = split_fields(rmf_lines[li]);
        std::vector<double> row;
        row.reserve(f.size());
        for (const auto& field : f) {
            row.push_back(parse_double_field(field, rmf_path, li + 1));
        }
        if (!rows.empty() && row.size() != rows.front().size()) {
            bad_csv(rmf_path, li + 1, "ragged row: expected " +
                                          std::to_string(rows.front().size()) + " columns");
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) {
        throw validation_error("E_CSV", rmf_path + ": no matrix rows");
    }

    std::vector<std::string> arf_lines = split_lines(read_file(arf_path));
    if (arf_lines.empty() ||
        split_fields(arf_lines[0]) != std::vector<std::string>{"j", "x_mid", "width", "area"}) {
        bad_csv(arf_path, 1, "expected header j,x_mid,width,area");
    }

    InstrumentResponse resp;
    const auto J = static_cast<Eigen::Index>(rows.size());
    const auto n = static_cast<Eigen::Index>(rows.front().size());
    resp.rmf.resize(J, n);
    for (Eigen::Index j = 0; j < J; ++j) {
        for (Eigen::Index i = 0; i < n; ++i) {
            resp.rmf(j, i) = rows[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)];
        }
    }

    std::vector<double> areas, edges;
    for (std::size_t li = 1; li < arf_lines.size(); ++li) {
        if (trim(arf_lines[li]).empty()) continue;
        std::vector<std::string> f = split_fields(arf_lines[li]);
        if (f.size() != 4) bad_csv(arf_path, li + 1, "expected 4 fields");
        long long j = parse_int_field(f[0], arf_path, li + 1);
        if (j != static_cast<long long>(areas.size()) + 1) {
            bad_csv(arf_path, li + 1, "model bins must be contiguous from 1");
        }
        double x_mid = parse_double_field(f[1], arf_path, li + 1);
        double width = parse_double_field(f[2], arf_path, li + 1);
        if (!(width > 0)) bad_csv(arf_path, li + 1, "width must be positive");
        double lo = x_mid - 0.5 * width;
        double hi = x_mid + 0.5 * width;
        if (edges.empty()) {
            edges.push_back(lo);
        } else if (std::abs(lo - edges.back()) >
                   1e-9 * std::max(1.0, std::abs(edges.back()))) {
            bad_csv(arf_path, li + 1, "model bins must tile: lo must equal the previous hi");
        }
        edges.push_back(hi);
        areas.push_back(parse_double_field(f[3], arf_path, li + 1));
    }
    if (areas.size() != static_cast<std::size_t>(J)) {
        throw validation_error("E_SHAPE", arf_path + ": " + std::to_string(areas.size()) +
                                              " model bins but " + rmf_path + " has " +
                                              std::to_string(J) + " rows");
    }
    resp.area = Eigen::Map<const Eigen::VectorXd>(areas.data(),
                                                  static_cast<Eigen::Index>(areas.size()));
    resp.model_edges = Eigen::Map<const Eigen::VectorXd>(
        edges.data(), static_cast<Eigen::Index>(edges.size()));
    resp.validate(true);
    return resp;
}

// ---- model config JSON -------------------------------------------------------

namespace {

[[noreturn]] void bad_model(const std::string& what) {
    throw validation_error("E_MODEL_CONFIG", "model config: " + what);
}

void check_keys(const json& obj, const std::set<std::string>& allowed,
                const std::string& ctx) {
    for (const auto& item : obj.items()) {
        if (!allowed.count(item.key())) {
            bad_model("unknown key '" + item.key() + "' in " + ctx);
        }
    }
}

double number_at(const json& obj, const char* key, const std::string& ctx) {
    if (!obj.contains(key)) bad_model("missing key '" + std::string(key) + "' in " + ctx);
    const json& v = obj.at(key);
    if (!v.is_number()) bad_model("'" + std::string(key) + "' in " + ctx + " must be a number");
    return v.get<double>();
}

std::size_t index_at(const json& obj, const char* key, const std::string& ctx) {
    double x = number_at(obj, key, ctx);
    if (x < 0 || x != std::floor(x)) {
        bad_model("'" + std::string(key) + "' in " + ctx + " must be a nonnegative integer");
    }
    return static_cast<std::size_t>(x);
}

struct GridSpec {
    std::vector<double> edges; // empty unless edges resolved
    std::size_t n = 0;         // bin count; 0 when undetermined
    bool explicit_edges = false;
};

} // namespace

LoadedModel parse_model_json(const std::string& text,
                             const BinnedDataset* data,
                             const InstrumentResponse* response) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw validation_error("E_JSON", std::string("model config: ") + e.what());
    }
    if (!j.is_object()) bad_model("top level must be an object");
    check_keys(j, {"model", "params", "line", "grid", "edges", "design", "fixed"},
               "model config");

    if (!j.contains("model") || !j.at("model").is_string()) {
        bad_model("'model' must name a model");
    }
    const std::string kind = j.at("model").get<std::string>();
    const bool has_line = j.contains("line");

    if (response && (j.contains("grid") || j.contains("edges"))) {
        bad_model("with a response the model grid comes from the response; "
                  "drop 'grid'/'edges'");
    }

    // Resolve the observable grid for unfolded models.
    GridSpec grid;
    if (j.contains("edges")) {
        const json& e = j.at("edges");
        if (!e.is_array() || e.size() < 2) bad_model("'edges' must list at least 2 numbers");
        for (const auto& v : e) {
            if (!v.is_number()) bad_model("'edges' must list numbers");
            grid.edges.push_back(v.get<double>());
        }
        for (std::size_t i = 0; i + 1 < grid.edges.size(); ++i) {
            if (!(grid.edges[i] < grid.edges[i + 1])) {
                bad_model("'edges' must be strictly increasing");
            }
        }
        grid.n = grid.edges.size() - 1;
        grid.explicit_edges = true;
        if (j.contains("grid")) bad_model("give either 'edges' or 'grid', not both");
    } else if (j.contains("grid")) {
        const json& g = j.at("grid");
        if (!g.is_object()) bad_model("'grid' must be an object");
        check_keys(g, {"n"}, "'grid'");
        grid.n = index_at(g, "n", "'grid'");
        if (grid.n == 0) bad_model("'grid'.n must be positive");
    } else if (data && !response) {
        grid.n = data->n_bins();
        grid.edges = data->edges;
    }

    // Base (continuum) model.
    std::shared_ptr<SpectralModel> base;
    if (kind == "constant") {
        if (has_line) bad_model("'line' requires a power-law continuum");
        std::size_t n = response ? response->n_model_bins() : grid.n;
        if (grid.explicit_edges) {
            bad_model("constant model takes 'grid': {\"n\": ...}, not explicit edges");
        }
        if (n == 0) bad_model("cannot determine the grid; give 'grid': {\"n\": ...}");
        base = std::make_shared<ConstantModel>(n);
    } else if (kind == "powerlaw" || kind == "powerlaw_line") {
        if (kind == "powerlaw_line" && !has_line) {
            bad_model("'powerlaw_line' needs a 'line' block");
        }
        if (has_line) {
            if (response) bad_model("a line model cannot be folded through a response");
            if (grid.explicit_edges) {
                // Line models live on the uniform grid only.
                bad_model("a line model takes 'grid': {\"n\": ...}, not explicit edges");
            }
            if (grid.n == 0) bad_model("cannot determine the grid; give 'grid': {\"n\": ...}");
            const json& line = j.at("line");
            if (!line.is_object()) bad_model("'line' must be an object");
            check_keys(line, {"m1", "m2", "Psi"}, "'line'");
            std::size_t m1 = index_at(line, "m1", "'line'");
            std::size_t m2 = index_at(line, "m2", "'line'");
            number_at(line, "Psi", "'line'");
            base = std::make_shared<PowerLawLineModel>(grid.n, m1, m2);
        } else if (response) {
            base = std::make_shared<PowerLawModel>(
                response->midpoints(),
                std::vector<double>(response->model_edges.data(),
                                    response->model_edges.data() +
                                        response->model_edges.size()));
        } else {
            if (grid.n == 0) bad_model("cannot determine the grid; give 'grid': {\"n\": ...}");
            if (grid.edges.empty()) {
                base = std::make_shared<PowerLawModel>(grid.n);
            } else {
                Eigen::VectorXd energies(static_cast<Eigen::Index>(grid.n));
                for (std::size_t i = 0; i < grid.n; ++i) {
                    energies[static_cast<Eigen::Index>(i)] = grid.edges[i + 1];
                }
                base = std::make_shared<PowerLawModel>(std::move(energies), grid.edges);
            }
        }
    } else if (kind == "loglinear") {
        if (has_line) bad_model("'line' requires a power-law continuum");
        if (!j.contains("design")) bad_model("'loglinear' needs a 'design' matrix");
        const json& dj = j.at("design");
        if (!dj.is_array() || dj.empty() || !dj.front().is_array()) {
            bad_model("'design' must be an array of rows");
        }
        const std::size_t rows = dj.size();
        const std::size_t cols = dj.front().size();
        if (cols == 0) bad_model("'design' rows must be nonempty");
        Eigen::MatrixXd design(static_cast<Eigen::Index>(rows),
                               static_cast<Eigen::Index>(cols));
        for (std::size_t r = 0; r < rows; ++r) {
            const json& row = dj.at(r);
            if (!row.is_array() || row.size() != cols) {
                bad_model("'design' rows must all have " + std::to_string(cols) + " entries");
            }
            for (std::size_t c = 0; c < cols; ++c) {
                if (!row.at(c).is_number()) bad_model("'design' entries must be numbers");
                design(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
                    row.at(c).get<double>();
            }
        }
        if (grid.n > 0 && grid.n != rows) {
            bad_model("'design' has " + std::to_string(rows) + " rows but the grid has " +
                      std::to_string(grid.n) + " bins");
        }
        if (response && response->n_model_bins() != rows) {
            bad_model("'design' has " + std::to_string(rows) +
                      " rows but the response has " +
                      std::to_string(response->n_model_bins()) + " model bins");
        }
        if (!grid.edges.empty()) {
            base = std::make_shared<LogLinearModel>(std::move(design), grid.edges);
        } else {
            base = std::make_shared<LogLinearModel>(std::move(design));
        }
    } else {
        bad_model("unknown model '" + kind + "'");
    }
    if (j.contains("design") && kind != "loglinear") {
        bad_model("'design' applies to the loglinear model only");
    }

    // Initial values, in the base model's parameter order.
    Eigen::VectorXd init;
    const std::vector<ParameterInfo>& info = base->parameters();
    if (j.contains("params") || has_line) {
        init.resize(static_cast<Eigen::Index>(base->n_params()));
        json params = j.contains("params") ? j.at("params") : json::object();
        if (!params.is_object()) bad_model("'params' must be an object");
        if (has_line) {
            if (params.contains("Psi")) {
                bad_model("give Psi in the 'line' block, not in 'params'");
            }
            params["Psi"] = j.at("line").at("Psi");
        }
        std::set<std::string> names;
        for (const auto& p : info) names.insert(p.name);
        check_keys(params, names, "'params'");
        for (std::size_t k = 0; k < info.size(); ++k) {
            init[static_cast<Eigen::Index>(k)] =
                number_at(params, info[k].name.c_str(), "'params'");
        }
    }

    // Fold through the response, wiring in the dataset's background and
    // exposure when present.
    std::shared_ptr<SpectralModel> model = base;
    if (response) {
        Eigen::VectorXd background;
        double exposure = 1.0;
        if (data) {
            exposure = data->exposure;
            if (data->background) {
                if (data->background->size() != response->n_channels()) {
                    throw validation_error(
                        "E_SHAPE", "dataset background has " +
                                       std::to_string(data->background->size()) +
                                       " bins but the response has " +
                                       std::to_string(response->n_channels()) + " channels");
                }
                background = Eigen::Map<const Eigen::VectorXd>(
                    data->background->data(),
                    static_cast<Eigen::Index>(data->background->size()));
            }
        }
        model = std::make_shared<FoldedModel>(base, *response, std::move(background),
                                              exposure);
    } else if (data && (data->background || data->exposure != 1.0)) {
        bad_model("dataset background and exposure are applied by the response fold; "
                  "supply --rmf/--arf (an identity response works) or drop them");
    }

    // Freeze named parameters at their supplied values.
    if (j.contains("fixed")) {
        const json& fj = j.at("fixed");
        if (!fj.is_array()) bad_model("'fixed' must be an array of parameter names");
        if (init.size() == 0) bad_model("'fixed' needs values in 'params'");
        std::vector<bool> mask(model->n_params(), false);
        for (const auto& v : fj) {
            if (!v.is_string()) bad_model("'fixed' must be an array of parameter names");
            const std::string name = v.get<std::string>();
            bool found = false;
            for (std::size_t k = 0; k < info.size(); ++k) {
                if (info[k].name == name) {
                    if (mask[k]) bad_model("parameter '" + name + "' fixed twice");
                    mask[k] = true;
                    found = true;
                    break;
                }
            }
            if (!found) bad_model("unknown parameter '" + name + "' in 'fixed'");
        }
        auto fixed = std::make_shared<FixedParamsModel>(model, mask, init);
        Eigen::VectorXd reduced(static_cast<Eigen::Index>(fixed->n_params()));
        Eigen::Index at = 0;
        for (std::size_t k = 0; k < mask.size(); ++k) {
            if (!mask[k]) reduced[at++] = init[static_cast<Eigen::Index>(k)];
        }
        init = std::move(reduced);
        model = std::move(fixed);
    }

    if (data && model->n_bins() != data->n_bins()) {
        throw validation_error("E_SHAPE",
                               "model has " + std::to_string(model->n_bins()) +
                                   " bins but the dataset has " +
                                   std::to_string(data->n_bins()));
    }

    LoadedModel out;
    out.model = std::move(model);
    out.init = std::move(init);
    return out;
}

LoadedModel load_model_json(const std::string& path,
                            const BinnedDataset* data,
                            const InstrumentResponse* response) {
    return parse_model_json(read_file(path), data, response);
}

// ---- reports -----------------------------------------------------------------

std::string AnalysisReport::report_schema() { return "cstat-report-1"; }

namespace {

[[noreturn]] void bad_report(const std::string& what) {
    throw validation_error("E_SCHEMA", "report: " + what);
}

const json& member(const json& obj, const char* key, const char* ctx) {
    if (!obj.is_object() || !obj.contains(key)) {
        bad_report("missing key '" + std::string(key) + "' in " + ctx);
    }
    return obj.at(key);
}

void check_exact_keys(const json& obj, const std::set<std::string>& required,
                      const char* ctx) {
    if (!obj.is_object()) bad_report(std::string(ctx) + " must be an object");
    for (const auto& item : obj.items()) {
        if (!required.count(item.key())) {
            bad_report("unknown key '" + item.key() + "' in " + ctx);
        }
    }
    for (const auto& key : required) {
        if (!obj.contains(key)) bad_report("missing key '" + key + "' in " + ctx);
    }
}

double as_number(const json& v, const char* ctx) {
    if (!v.is_number()) bad_report(std::string(ctx) + " must be a number");
    return v.get<double>();
}

std::string as_string(const json& v, const char* ctx) {
    if (!v.is_string()) bad_report(std::string(ctx) + " must be a string");
    return v.get<std::string>();
}

bool as_bool(const json& v, const char* ctx) {
    if (!v.is_boolean()) bad_report(std::string(ctx) + " must be a boolean");
    return v.get<bool>();
}

int as_int(const json& v, const char* ctx) {
    if (!v.is_number_integer()) bad_report(std::string(ctx) + " must be an integer");
    return v.get<int>();
}

std::size_t as_size(const json& v, const char* ctx) {
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
        bad_report(std::string(ctx) + " must be a nonnegative integer");
    }
    return v.get<std::size_t>();
}

json optional_to_json(const std::optional<double>& v) {
    return v ? json(*v) : json(nullptr);
}

std::optional<double> optional_from_json(const json& v, const char* ctx) {
    if (v.is_null()) return std::nullopt;
    return as_number(v, ctx);
}

json config_to_json(const RunConfig& c) {
    json j;
    j["command"] = c.command;
    j["data"] = c.data_path;
    j["rmf"] = c.rmf_path;
    j["arf"] = c.arf_path;
    j["model"] = c.model_path;
    j["table"] = c.table_path;
    j["methods"] = c.methods;
    j["B"] = c.B;
    j["B1"] = c.B1;
    j["B2"] = c.B2;
    j["alpha"] = c.alpha;
    j["seed"] = c.seed ? json(std::to_string(*c.seed)) : json(nullptr);
    j["smooth"] = c.smooth;
    j["subtract_d"] = c.subtract_d;
    // The worker-thread count is deliberately not echoed: it never changes
    // a result, and reports must be byte-identical across thread counts.
    return j;
}

RunConfig config_from_json(const json& j) {
    check_exact_keys(j,
                     {"command", "data", "rmf", "arf", "model", "table", "methods", "B",
                      "B1", "B2", "alpha", "seed", "smooth", "subtract_d"},
                     "config");
    RunConfig c;
    c.command = as_string(j.at("command"), "config.command");
    c.data_path = as_string(j.at("data"), "config.data");
    c.rmf_path = as_string(j.at("rmf"), "config.rmf");
    c.arf_path = as_string(j.at("arf"), "config.arf");
    c.model_path = as_string(j.at("model"), "config.model");
    c.table_path = as_string(j.at("table"), "config.table");
    const json& m = j.at("methods");
    if (!m.is_array()) bad_report("config.methods must be an array");
    for (const auto& v : m) c.methods.push_back(as_string(v, "config.methods[]"));
    c.B = as_int(j.at("B"), "config.B");
    c.B1 = as_int(j.at("B1"), "config.B1");
    c.B2 = as_int(j.at("B2"), "config.B2");
    c.alpha = as_number(j.at("alpha"), "config.alpha");
    const json& seed = j.at("seed");
    if (!seed.is_null()) {
        const std::string s = as_string(seed, "config.seed");
        std::uint64_t value = 0;
        auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
        if (ec != std::errc{} || p != s.data() + s.size() || s.empty()) {
            bad_report("config.seed must be a decimal integer string");
        }
        c.seed = value;
    }
    c.smooth = as_bool(j.at("smooth"), "config.smooth");
    c.subtract_d = as_bool(j.at("subtract_d"), "config.subtract_d");
    return c;
}

json fit_to_json(const FitResult& f) {
    json j;
    j["theta_hat"] = std::vector<double>(f.theta_hat.data(),
                                         f.theta_hat.data() + f.theta_hat.size());
    j["param_names"] = f.param_names;
    j["c_min"] = f.c_min;
    json fisher = json::array();
    for (Eigen::Index r = 0; r < f.fisher.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < f.fisher.cols(); ++c) row.push_back(f.fisher(r, c));
        fisher.push_back(std::move(row));
    }
    j["fisher"] = std::move(fisher);
    j["converged"] = f.converged;
    j["n_iter"] = f.n_iter;
    j["grad_norm"] = f.grad_norm;
    j["at_boundary"] = f.at_boundary;
    j["clamped_bins"] = f.clamped_bins;
    return j;
}

FitResult fit_from_json(const json& j) {
    check_exact_keys(j,
                     {"theta_hat", "param_names", "c_min", "fisher", "converged", "n_iter",
                      "grad_norm", "at_boundary", "clamped_bins"},
                     "fit");
    FitResult f;
    const json& th = j.at("theta_hat");
    if (!th.is_array()) bad_report("fit.theta_hat must be an array");
    f.theta_hat.resize(static_cast<Eigen::Index>(th.size()));
    for (std::size_t k = 0; k < th.size(); ++k) {
        f.theta_hat[static_cast<Eigen::Index>(k)] = as_number(th.at(k), "fit.theta_hat[]");
    }
    const json& names = j.at("param_names");
    if (!names.is_array()) bad_report("fit.param_names must be an array");
    for (const auto& v : names) f.param_names.push_back(as_string(v, "fit.param_names[]"));
    f.c_min = as_number(j.at("c_min"), "fit.c_min");
    const json& fisher = j.at("fisher");
    if (!fisher.is_array()) bad_report("fit.fisher must be an array of rows");
    const auto d = static_cast<Eigen::Index>(fisher.size());
    f.fisher.resize(d, d);
    for (Eigen::Index r = 0; r < d; ++r) {
        const json& row = fisher.at(static_cast<std::size_t>(r));
        if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != d) {
            bad_report("fit.fisher must be square");
        }
        for (Eigen::Index c = 0; c < d; ++c) {
            f.fisher(r, c) = as_number(row.at(static_cast<std::size_t>(c)), "fit.fisher[][]");
        }
    }
    f.converged = as_bool(j.at("converged"), "fit.converged");
    f.n_iter = as_int(j.at("n_iter"), "fit.n_iter");
    f.grad_norm = as_number(j.at("grad_norm"), "fit.grad_norm");
    f.at_boundary = as_bool(j.at("at_boundary"), "fit.at_boundary");
    f.clamped_bins = as_size(j.at("clamped_bins"), "fit.clamped_bins");
    return f;
}

json gof_to_json(const GofResult& g) {
    json j;
    j["method"] = method_name(g.method);
    j["statistic"] = g.statistic;
    j["p_value"] = g.p_value;
    j["z"] = optional_to_json(g.z);
    j["ref_mean"] = optional_to_json(g.ref_mean);
    j["ref_var"] = optional_to_json(g.ref_var);
    j["q_form"] = optional_to_json(g.q_form);
    j["B"] = g.B;
    j["B1"] = g.B1;
    j["B2"] = g.B2;
    j["n_failed"] = g.n_failed;
    j["smoothed"] = g.smoothed;
    j["subtract_d"] = g.subtract_d;
    return j;
}

GofResult gof_from_json(const json& j) {
    check_exact_keys(j,
                     {"method", "statistic", "p_value", "z", "ref_mean", "ref_var", "q_form",
                      "B", "B1", "B2", "n_failed", "smoothed", "subtract_d"},
                     "gof[]");
    GofResult g;
    g.method = parse_method(as_string(j.at("method"), "gof[].method"));
    g.statistic = as_number(j.at("statistic"), "gof[].statistic");
    g.p_value = as_number(j.at("p_value"), "gof[].p_value");
    g.z = optional_from_json(j.at("z"), "gof[].z");
    g.ref_mean = optional_from_json(j.at("ref_mean"), "gof[].ref_mean");
    g.ref_var = optional_from_json(j.at("ref_var"), "gof[].ref_var");
    g.q_form = optional_from_json(j.at("q_form"), "gof[].q_form");
    g.B = as_int(j.at("B"), "gof[].B");
    g.B1 = as_int(j.at("B1"), "gof[].B1");
    g.B2 = as_int(j.at("B2"), "gof[].B2");
    g.n_failed = as_size(j.at("n_failed"), "gof[].n_failed");
    g.smoothed = as_bool(j.at("smoothed"), "gof[].smoothed");
    g.subtract_d = as_bool(j.at("subtract_d"), "gof[].subtract_d");
    return g;
}

} // namespace

std::string report_to_json(const AnalysisReport& report) {
    json j;
    j["schema"] = report.schema;
    j["version"] = report.version;
    j["config"] = config_to_json(report.config);
    j["fit"] = report.fit ? fit_to_json(*report.fit) : json(nullptr);
    json gof = json::array();
    for (const auto& g : report.gof) gof.push_back(gof_to_json(g));
    j["gof"] = std::move(gof);
    j["table_checksum"] = report.table_checksum;
    j["clamped_bins"] = report.clamped_bins;
    return j.dump(2) + "\n";
}

AnalysisReport report_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw validation_error("E_JSON", std::string("report: ") + e.what());
    }
    check_exact_keys(
        j, {"schema", "version", "config", "fit", "gof", "table_checksum", "clamped_bins"},
        "report");
    AnalysisReport r;
    r.schema = as_string(j.at("schema"), "schema");
    if (r.schema != AnalysisReport::report_schema()) {
        bad_report("schema is '" + r.schema + "', expected '" +
                   AnalysisReport::report_schema() + "'");
    }
    r.version = as_string(j.at("version"), "version");
    r.config = config_from_json(j.at("config"));
    if (!j.at("fit").is_null()) r.fit = fit_from_json(j.at("fit"));
    const json& gof = j.at("gof");
    if (!gof.is_array()) bad_report("gof must be an array");
    for (const auto& g : gof) r.gof.push_back(gof_from_json(g));
    r.table_checksum = as_string(j.at("table_checksum"), "table_checksum");
    r.clamped_bins = as_size(j.at("clamped_bins"), "clamped_bins");
    return r;
}

std::string gof_to_csv(const AnalysisReport& report) {
    std::string out = "method,statistic,p_value,z,ref_mean,ref_var,q_form,B,B1,B2,n_failed\n";
    auto opt = [](const std::optional<double>& v) {
        return v ? format_double(*v) : std::string();
    };
    for (const auto& g : report.gof) {
        out += method_name(g.method);
        out += ',';
        out += format_double(g.statistic);
        out += ',';
        out += format_double(g.p_value);
        out += ',';
        out += opt(g.z);
        out += ',';
        out += opt(g.ref_mean);
        out += ',';
        out += opt(g.ref_var);
        out += ',';
        out += opt(g.q_form);
        out += ',';
        out += std::to_string(g.B);
        out += ',';
        out += std::to_string(g.B1);
        out += ',';
        out += std::to_string(g.B2);
        out += ',';
        out += std::to_string(g.n_failed);
        out += '\n';
    }
    return out;
}

} // namespace cstat
