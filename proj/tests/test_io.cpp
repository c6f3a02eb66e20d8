#include "cstat/io.hpp"

#include "cstat/common.hpp"
#include "cstat/model.hpp"
#include "cstat/version.hpp"

#include <gtest/gtest.h>

#include <json.hpp>

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>

namespace {

using namespace cstat;

std::filesystem::path temp_path(const std::string& name) {
    return std::filesystem::path(testing::TempDir()) / name;
}

void write_text(const std::filesystem::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out << text;
    ASSERT_TRUE(out.good());
}

double parse_double(const std::string& s) {
    double x = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), x);
    EXPECT_EQ(ec, std::errc());
    EXPECT_EQ(ptr, s.data() + s.size());
    return x;
}

TEST(IoFormat, FormatDoubleRoundTripsBitwise) {
    for (double x : {0.1, 1.0 / 3.0, 1e-300, 6.02e23, -2.5, 0.0}) {
        std::string s = format_double(x);
        double back = parse_double(s);
        EXPECT_EQ(back, x) << s;
    }
    EXPECT_EQ(format_double(2.0), "2");
    EXPECT_EQ(format_double(0.5), "0.5");
}

TEST(IoFiles, MissingFileIsReported) {
    try {
        read_file((temp_path("nope") / "missing.csv").string());
        FAIL() << "expected validation_error";
    } catch (const validation_error& e) {
        EXPECT_EQ(e.code(), "E_NO_FILE");
    }
}

TEST(IoFiles, AtomicWriteRoundTrips) {
    auto p = temp_path("atomic.txt");
    atomic_write_file(p.string(), "alpha\nbeta\n");
    EXPECT_EQ(read_file(p.string()), "alpha\nbeta\n");
    atomic_write_file(p.string(), "gamma");
    EXPECT_EQ(read_file(p.string()), "gamma");
}

// ---- dataset CSV -------------------------------------------------------------

BinnedDataset sample_dataset(bool with_background) {
    BinnedDataset d;
    d.counts = {3, 0, 17};
    d.edges = {0.5, 1.25, 2.0, 4.0};
    d.exposure = 2.5;
    if (with_background) d.background = std::vector<double>{0.1, 0.0, 0.75};
    return d;
}

TEST(IoDatasetCsv, RoundTripsWithAndWithoutBackground) {
    for (bool bg : {false, true}) {
        BinnedDataset d = sample_dataset(bg);
        auto p = temp_path(bg ? "data_bg.csv" : "data.csv");
        write_dataset_csv(d, p.string());
        BinnedDataset back = read_dataset_csv(p.string());
        EXPECT_EQ(back.counts, d.counts);
        EXPECT_EQ(back.edges, d.edges);
        EXPECT_EQ(back.background.has_value(), bg);
        if (bg) EXPECT_EQ(*back.background, *d.background);
        // Exposure is not part of the CSV; readers default it.
        EXPECT_EQ(back.exposure, 1.0);
    }
}

TEST(IoDatasetCsv, AcceptsBlankLinesAndCrLf) {
    auto p = temp_path("crlf.csv");
    write_text(p, "channel,lo,hi,count\r\n1,0,1,4\r\n\r\n2,1,2,5\r\n");
    BinnedDataset d = read_dataset_csv(p.string());
    ASSERT_EQ(d.n_bins(), 2u);
    EXPECT_EQ(d.counts[1], 5);
    EXPECT_EQ(d.edges.back(), 2.0);
}

void expect_csv_error(const std::string& name, const std::string& text,
                      const std::string& needle) {
    auto p = temp_path(name);
    write_text(p, text);
    try {
        read_dataset_csv(p.string());
        FAIL() << "expected validation_error for " << name;
    } catch (const validation_error& e) {
        EXPECT_EQ(e.code(), "E_CSV");
        EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
    }
}

TEST(IoDatasetCsv, RejectsMalformedInput) {
    expect_csv_error("h.csv", "chan,lo,hi,count\n1,0,1,4\n", "header");
    expect_csv_error("gap.csv", "channel,lo,hi,count\n1,0,1,4\n3,1,2,5\n", "contiguous");
    expect_csv_error("chain.csv", "channel,lo,hi,count\n1,0,1,4\n2,1.5,2,5\n", "chain");
    expect_csv_error("order.csv", "channel,lo,hi,count\n1,1,1,4\n", "exceed");
    expect_csv_error("fields.csv", "channel,lo,hi,count\n1,0,1\n", "4 fields");
    expect_csv_error("float.csv", "channel,lo,hi,count\n1,0,1,4.5\n", "integer");
    expect_csv_error("empty.csv", "channel,lo,hi,count\n", "no data rows");
    // Error messages carry path:line so failures are easy to locate.
    expect_csv_error("lineno.csv", "channel,lo,hi,count\n1,0,1,4\n2,1,2,x\n",
                     "lineno.csv:3");
}

// ---- response CSV pair ---------------------------------------------------------

void write_identity_response(const std::filesystem::path& rmf,
                             const std::filesystem::path& arf) {
    write_text(rmf, "1,0,0\n0,1,0\n0,0,1\n");
    write_text(arf,
               "j,x_mid,width,area\n"
               "1,1.5,1,2\n"
               "2,2.5,1,2\n"
               "3,3.5,1,2\n");
}

TEST(IoResponseCsv, ReadsIdentityPair) {
    auto rmf = temp_path("rmf.csv");
    auto arf = temp_path("arf.csv");
    write_identity_response(rmf, arf);
    InstrumentResponse r = read_response_csv(rmf.string(), arf.string());
    EXPECT_EQ(r.n_model_bins(), 3);
    EXPECT_EQ(r.n_channels(), 3);
    EXPECT_TRUE(r.rmf.isIdentity(0.0));
    EXPECT_EQ(r.area[0], 2.0);
    ASSERT_EQ(r.model_edges.size(), 4);
    EXPECT_DOUBLE_EQ(r.model_edges[0], 1.0);
    EXPECT_DOUBLE_EQ(r.model_edges[3], 4.0);
}

TEST(IoResponseCsv, RejectsBadPairs) {
    auto rmf = temp_path("rmf_bad.csv");
    auto arf = temp_path("arf_bad.csv");

    write_text(rmf, "1,0\n0\n");
    write_text(arf, "j,x_mid,width,area\n1,1.5,1,1\n2,2.5,1,1\n");
    EXPECT_THROW(read_response_csv(rmf.string(), arf.string()), validation_error);

    write_text(rmf, "1,0\n0,1\n");
    write_text(arf, "head\n");
    EXPECT_THROW(read_response_csv(rmf.string(), arf.string()), validation_error);

    // Model-bin count must match the matrix rows.
    write_text(arf, "j,x_mid,width,area\n1,1.5,1,1\n");
    try {
        read_response_csv(rmf.string(), arf.string());
        FAIL() << "expected shape error";
    } catch (const validation_error& e) {
        EXPECT_EQ(e.code(), "E_SHAPE");
    }

    // Bins must tile the axis.
    write_text(arf, "j,x_mid,width,area\n1,1.5,1,1\n2,3.5,1,1\n");
    EXPECT_THROW(read_response_csv(rmf.string(), arf.string()), validation_error);

    // Strict validation applies: a row spreading more than unit probability fails.
    write_text(rmf, "1,0.5\n0,1\n");
    write_text(arf, "j,x_mid,width,area\n1,1.5,1,1\n2,2.5,1,1\n");
    EXPECT_THROW(read_response_csv(rmf.string(), arf.string()), validation_error);
}

// ---- model config JSON ---------------------------------------------------------

void expect_model_error(const std::string& text,
                        const BinnedDataset* data = nullptr,
                        const InstrumentResponse* response = nullptr) {
    try {
        parse_model_json(text, data, response);
        FAIL() << "expected validation_error for " << text;
    } catch (const validation_error& e) {
        EXPECT_TRUE(std::string(e.code()) == "E_MODEL_CONFIG" ||
                    std::string(e.code()) == "E_JSON")
            << e.code();
    }
}

TEST(IoModelJson, ConstantWithGridAndWithDataset) {
    LoadedModel m = parse_model_json(R"({"model":"constant","grid":{"n":4}})",
                                     nullptr, nullptr);
    EXPECT_EQ(m.model->n_bins(), 4u);
    EXPECT_EQ(m.model->n_params(), 1u);
    EXPECT_EQ(m.init.size(), 0);

    // Dataset-derived grids work for grid-agnostic models too.
    BinnedDataset d = sample_dataset(false);
    d.exposure = 1.0;
    LoadedModel md = parse_model_json(
        R"({"model":"constant","params":{"theta":3.5}})", &d, nullptr);
    EXPECT_EQ(md.model->n_bins(), 3u);
    ASSERT_EQ(md.init.size(), 1);
    EXPECT_EQ(md.init[0], 3.5);
}

TEST(IoModelJson, PowerLawUsesDatasetEdgesAsEnergies) {
    BinnedDataset d;
    d.counts = {5, 5};
    d.edges = {1.0, 2.0, 4.0};
    LoadedModel m = parse_model_json(
        R"({"model":"powerlaw","params":{"K":2.0,"Gamma":1.0}})", &d, nullptr);
    Eigen::VectorXd s = m.model->expected_counts(m.init);
    ASSERT_EQ(s.size(), 2);
    // Energies are the upper bin edges.
    EXPECT_NEAR(s[0], 2.0 / 2.0, 1e-12);
    EXPECT_NEAR(s[1], 2.0 / 4.0, 1e-12);
}

TEST(IoModelJson, PowerLawLineTakesPsiFromLineBlock) {
    LoadedModel m = parse_model_json(
        R"({"model":"powerlaw_line","grid":{"n":10},
            "params":{"K":1.0,"Gamma":0.0},
            "line":{"m1":3,"m2":5,"Psi":7.0}})",
        nullptr, nullptr);
    ASSERT_EQ(m.init.size(), 3);
    EXPECT_EQ(m.init[2], 7.0);
    Eigen::VectorXd s = m.model->expected_counts(m.init);
    EXPECT_DOUBLE_EQ(s[3], 7.0);
    EXPECT_DOUBLE_EQ(s[0], 1.0);

    expect_model_error(R"({"model":"powerlaw_line","grid":{"n":10},
        "params":{"K":1.0,"Gamma":0.0,"Psi":2.0},
        "line":{"m1":3,"m2":5,"Psi":7.0}})");
    expect_model_error(R"({"model":"powerlaw_line","grid":{"n":10}})");
}

TEST(IoModelJson, LoglinearTakesDesignMatrix) {
    LoadedModel m = parse_model_json(
        R"({"model":"loglinear","design":[[1,0],[1,1],[1,2]],
            "params":{"theta1":0.5,"theta2":-0.25}})",
        nullptr, nullptr);
    EXPECT_EQ(m.model->n_bins(), 3u);
    EXPECT_EQ(m.model->n_params(), 2u);
    Eigen::VectorXd s = m.model->expected_counts(m.init);
    EXPECT_NEAR(s[2], std::exp(0.5 - 0.5), 1e-14);

    expect_model_error(R"({"model":"loglinear"})");
    expect_model_error(R"({"model":"loglinear","design":[[1],[1,2]]})");
    expect_model_error(R"({"model":"loglinear","design":[[1],[1]],"grid":{"n":3}})");
    expect_model_error(R"({"model":"constant","grid":{"n":2},"design":[[1],[1]]})");
}

TEST(IoModelJson, FixedFreezesNamedParameters) {
    LoadedModel m = parse_model_json(
        R"({"model":"powerlaw","grid":{"n":8},
            "params":{"K":2.0,"Gamma":1.5},"fixed":["Gamma"]})",
        nullptr, nullptr);
    EXPECT_EQ(m.model->n_params(), 1u);
    ASSERT_EQ(m.init.size(), 1);
    EXPECT_EQ(m.init[0], 2.0);
    EXPECT_EQ(m.model->parameters()[0].name, "K");

    expect_model_error(R"({"model":"powerlaw","grid":{"n":8},"fixed":["Gamma"]})");
    expect_model_error(R"({"model":"powerlaw","grid":{"n":8},
        "params":{"K":2.0,"Gamma":1.5},"fixed":["Gamma","Gamma"]})");
    expect_model_error(R"({"model":"powerlaw","grid":{"n":8},
        "params":{"K":2.0,"Gamma":1.5},"fixed":["nope"]})");
}

TEST(IoModelJson, ResponseFoldsAndForbidsGridKeys) {
    InstrumentResponse resp = make_case_response(ResponseCase::identity, 6);
    BinnedDataset d;
    d.counts = {1, 2, 3, 4, 5, 6};
    d.edges = {0, 1, 2, 3, 4, 5, 6};
    d.exposure = 3.0;
    d.background = std::vector<double>(6, 0.5);

    LoadedModel m = parse_model_json(
        R"({"model":"powerlaw","params":{"K":1.0,"Gamma":2.0}})", &d, &resp);
    EXPECT_EQ(m.model->n_bins(), 6u);
    EXPECT_NE(m.model->name().find("folded"), std::string::npos);
    Eigen::VectorXd s = m.model->expected_counts(m.init);
    // Background and exposure are wired in from the dataset.
    EXPECT_GT(s.minCoeff(), 3.0 * 0.5 - 1e-12);

    expect_model_error(R"({"model":"powerlaw","grid":{"n":6}})", &d, &resp);
    expect_model_error(R"({"model":"powerlaw","edges":[1,2,3]})", nullptr, &resp);
    expect_model_error(R"({"model":"powerlaw_line","line":{"m1":1,"m2":2,"Psi":1}})",
                       nullptr, &resp);
}

TEST(IoModelJson, BackgroundWithoutResponseIsRejected) {
    BinnedDataset d = sample_dataset(true);
    expect_model_error(R"({"model":"constant"})", &d);
    BinnedDataset noup = sample_dataset(false);
    noup.exposure = 5.0;
    expect_model_error(R"({"model":"constant"})", &noup);
}

TEST(IoModelJson, StrictKeyAndShapeChecks) {
    expect_model_error(R"({"model":"constant","grid":{"n":2},"bogus":1})");
    expect_model_error(R"({"model":"constant","grid":{"n":2},"params":{"thet":1}})");
    expect_model_error(R"({"model":"constant","grid":{"n":2},
        "params":{"theta":1,"extra":2}})");
    expect_model_error(R"({"model":"mystery","grid":{"n":2}})");
    expect_model_error(R"({"model":"constant","edges":[1,2,3]})");
    expect_model_error(R"({"model":"constant","edges":[1,2],"grid":{"n":1}})");
    expect_model_error(R"({"model":"constant","grid":{"n":0}})");
    expect_model_error(R"({"model":"constant"})");
    expect_model_error("not json at all");
    expect_model_error(R"(["array"])");

    BinnedDataset d = sample_dataset(false);
    d.exposure = 1.0;
    try {
        parse_model_json(R"({"model":"constant","grid":{"n":7}})", &d, nullptr);
        FAIL() << "expected shape mismatch";
    } catch (const validation_error& e) {
        EXPECT_EQ(e.code(), "E_SHAPE");
    }
}

// ---- report JSON ---------------------------------------------------------------

AnalysisReport sample_report() {
    AnalysisReport r;
    r.version = version_string;
    r.config.command = "gof";
    r.config.data_path = "data.csv";
    r.config.model_path = "model.json";
    r.config.methods = {"lr-chi2", "corrected-z-high"};
    r.config.B = 100;
    r.config.alpha = 0.1;
    r.config.seed = std::uint64_t{18446744073709551615ull};
    r.config.smooth = true;

    FitResult fit;
    fit.theta_hat = Eigen::Vector2d(1.5, 0.25);
    fit.param_names = {"K", "Gamma"};
    fit.c_min = 42.125;
    fit.fisher = Eigen::Matrix2d::Identity() * 3.0;
    fit.converged = true;
    fit.n_iter = 17;
    fit.grad_norm = 1e-9;
    fit.at_boundary = false;
    r.fit = fit;

    GofResult lr;
    lr.method = GofMethod::lr_chi2;
    lr.statistic = 42.125;
    lr.p_value = 0.37;
    r.gof.push_back(lr);

    GofResult cz;
    cz.method = GofMethod::corrected_z_high;
    cz.statistic = 42.125;
    cz.p_value = 0.21;
    cz.z = 0.8;
    cz.ref_mean = 40.0;
    cz.ref_var = 7.0625;
    cz.q_form = 1.5;
    cz.subtract_d = false;
    r.gof.push_back(cz);

    r.table_checksum = "deadbeefdeadbeef";
    r.clamped_bins = 2;
    return r;
}

TEST(IoReportJson, RoundTripIsByteIdentical) {
    AnalysisReport r = sample_report();
    std::string text = report_to_json(r);
    AnalysisReport back = report_from_json(text);
    EXPECT_EQ(report_to_json(back), text);

    EXPECT_EQ(back.schema, AnalysisReport::report_schema());
    ASSERT_TRUE(back.config.seed.has_value());
    EXPECT_EQ(*back.config.seed, 18446744073709551615ull);
    ASSERT_TRUE(back.fit.has_value());
    EXPECT_EQ(back.fit->theta_hat[1], 0.25);
    EXPECT_EQ(back.fit->fisher(1, 1), 3.0);
    ASSERT_EQ(back.gof.size(), 2u);
    EXPECT_FALSE(back.gof[0].z.has_value());
    EXPECT_EQ(*back.gof[1].q_form, 1.5);
    EXPECT_FALSE(back.gof[1].subtract_d);
    EXPECT_EQ(back.clamped_bins, 2u);
}

TEST(IoReportJson, MissingSeedSerializesAsNull) {
    AnalysisReport r = sample_report();
    r.config.seed.reset();
    r.fit.reset();
    r.gof.clear();
    std::string text = report_to_json(r);
    EXPECT_NE(text.find("\"seed\": null"), std::string::npos);
    AnalysisReport back = report_from_json(text);
    EXPECT_FALSE(back.config.seed.has_value());
    EXPECT_FALSE(back.fit.has_value());
    EXPECT_TRUE(back.gof.empty());
}

void expect_schema_error(std::string text) {
    try {
        report_from_json(text);
        FAIL() << "expected E_SCHEMA";
    } catch (const validation_error& e) {
        EXPECT_EQ(e.code(), "E_SCHEMA");
    }
}

TEST(IoReportJson, StrictSchemaEnforcement) {
    std::string text = report_to_json(sample_report());

    // Unknown top-level key.
    {
        std::string t = text;
        t.insert(t.find("\"schema\""), "\"extra\": 1,\n  ");
        expect_schema_error(t);
    }
    // Wrong schema tag.
    {
        std::string t = text;
        auto pos = t.find("cstat-report-1");
        t.replace(pos, 14, "cstat-report-9");
        expect_schema_error(t);
    }
    // Missing required key inside config.
    {
        nlohmann::json j = nlohmann::json::parse(text);
        j["config"].erase("alpha");
        expect_schema_error(j.dump());
    }
    // Unknown key inside gof entry.
    {
        nlohmann::json j = nlohmann::json::parse(text);
        j["gof"][0]["surprise"] = true;
        expect_schema_error(j.dump());
    }
}

TEST(IoReportJson, GofCsvProjection) {
    std::string csv = gof_to_csv(sample_report());
    std::istringstream in(csv);
    std::string line;
    ASSERT_TRUE(std::getline(in, line));
    EXPECT_EQ(line,
              "method,statistic,p_value,z,ref_mean,ref_var,q_form,B,B1,B2,n_failed");
    ASSERT_TRUE(std::getline(in, line));
    // Absent optionals leave their cells empty.
    EXPECT_EQ(line, "lr-chi2,42.125,0.37,,,,,0,0,0,0");
    ASSERT_TRUE(std::getline(in, line));
    EXPECT_EQ(line.rfind("corrected-z-high,42.125,0.21,0.8,40,7.0625,1.5,", 0), 0u);
}

} // namespace
