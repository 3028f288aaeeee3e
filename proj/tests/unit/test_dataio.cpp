#include "fesid/dataio.hpp"
#include "support/oracles.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

using namespace fesid;
namespace fs = std::filesystem;

namespace {

class TempDir {
public:
    TempDir()
    {
        const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
        path_ = fs::temp_directory_path() / ("fesid_" + std::string(info->test_suite_name()) + "_" + info->name());
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir() { fs::remove_all(path_); }
    [[nodiscard]] std::string file(const std::string& name) const { return (path_ / name).string(); }

private:
    fs::path path_;
};

std::string write_text(const std::string& path, const std::string& text)
{
    std::ofstream(path) << text;
    return path;
}

template <class F>
std::string error_of(F&& f)
{
    try {
        f();
    } catch (const std::exception& e) {
        return e.what();
    }
    return "";
}

TimeSeries random_series(std::size_t n, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> d(0.0, 0.1);
    TimeSeries ts;
    ts.delta = 0.01;
    for (std::size_t i = 0; i < n; ++i) {
        ts.u.push_back(d(rng));
        ts.y.push_back(d(rng) * 1e-3);
    }
    return ts;
}

} // namespace

TEST(LoadCsv, SmallWellFormedFile)
{
    TempDir dir;
    DatasetSpec spec;
    spec.path = write_text(dir.file("a.csv"), "u,y\n0.1,0.2\n-0.3,4e-3\n5,6\n");
    const auto ts = load_csv(spec);
    ASSERT_EQ(ts.size(), 3u);
    EXPECT_EQ(ts.u, (std::vector<double>{0.1, -0.3, 5.0}));
    EXPECT_EQ(ts.y, (std::vector<double>{0.2, 4e-3, 6.0}));
    EXPECT_EQ(ts.delta, kSilverboxDelta);
}

TEST(LoadCsv, ColumnMappingQuotesAndBom)
{
    TempDir dir;
    DatasetSpec spec;
    spec.path = write_text(dir.file("b.csv"), "\xEF\xBB\xBF\"idx\",\"V1\",\"V2\"\r\n1,\"0.5\",0.25\r\n2,0.75,1e-2\r\n");
    spec.input_column = "V1";
    spec.output_column = "V2";
    spec.delta = 0.5;
    const auto ts = load_csv(spec);
    EXPECT_EQ(ts.u, (std::vector<double>{0.5, 0.75}));
    EXPECT_EQ(ts.y, (std::vector<double>{0.25, 0.01}));
    EXPECT_EQ(ts.delta, 0.5);
}

TEST(LoadCsv, NanRowIsNamed)
{
    TempDir dir;
    std::string text = "u,y\n";
    for (int r = 1; r <= 10; ++r) text += r == 7 ? "0.1,NaN\n" : "0.1,0.2\n";
    DatasetSpec spec;
    spec.path = write_text(dir.file("nan.csv"), text);
    const auto msg = error_of([&] { load_csv(spec); });
    EXPECT_NE(msg.find("row 7"), std::string::npos) << msg;
    EXPECT_THROW(load_csv(spec), IoError);
}

TEST(LoadCsv, Errors)
{
    TempDir dir;
    DatasetSpec spec;
    spec.path = write_text(dir.file("empty.csv"), "");
    EXPECT_NE(error_of([&] { load_csv(spec); }).find("empty file"), std::string::npos);

    spec.path = write_text(dir.file("cols.csv"), "u,x\n1,2\n");
    EXPECT_NE(error_of([&] { load_csv(spec); }).find("missing column 'y'"), std::string::npos);

    spec.path = write_text(dir.file("junk.csv"), "u,y\n1,2\n3,abc\n");
    const auto msg = error_of([&] { load_csv(spec); });
    EXPECT_NE(msg.find("row 2"), std::string::npos) << msg;
    EXPECT_NE(msg.find("unparseable"), std::string::npos) << msg;

    spec.path = write_text(dir.file("short.csv"), "u,y\n1\n");
    EXPECT_NE(error_of([&] { load_csv(spec); }).find("too few fields"), std::string::npos);

    spec.path = write_text(dir.file("inf.csv"), "u,y\ninf,2\n");
    EXPECT_NE(error_of([&] { load_csv(spec); }).find("non-finite"), std::string::npos);

    spec.path = dir.file("missing.csv");
    EXPECT_THROW(load_csv(spec), IoError);
}

TEST(LoadCsv, RoundtripWithWriter)
{
    TempDir dir;
    const auto ts = random_series(500, 1);
    write_csv(dir.file("rt.csv"), ts);
    DatasetSpec spec;
    spec.path = dir.file("rt.csv");
    spec.delta = ts.delta;
    const auto back = load_csv(spec);
    ASSERT_EQ(back.size(), ts.size());
    for (std::size_t i = 0; i < ts.size(); ++i) {
        EXPECT_LE(std::abs(back.u[i] - ts.u[i]), 1e-12 * std::max(1.0, std::abs(ts.u[i])));
        EXPECT_LE(std::abs(back.y[i] - ts.y[i]), 1e-12 * std::max(1.0, std::abs(ts.y[i])));
    }
}

TEST(Split, LengthsAndOrder)
{
    const auto ts = random_series(10, 2);
    const auto s = split(ts, 3);
    EXPECT_EQ(s.validation.size(), 3u);
    EXPECT_EQ(s.training.size(), 7u);

    auto u = s.validation.u;
    u.insert(u.end(), s.training.u.begin(), s.training.u.end());
    auto y = s.validation.y;
    y.insert(y.end(), s.training.y.begin(), s.training.y.end());
    EXPECT_EQ(u, ts.u);
    EXPECT_EQ(y, ts.y);
    EXPECT_EQ(s.training.delta, ts.delta);

    EXPECT_THROW(split(ts, 9), std::out_of_range);
    EXPECT_THROW(split(ts, 2), std::out_of_range);
    EXPECT_NO_THROW(split(ts, 7));
}

TEST(Split, BenchmarkCounts)
{
    TimeSeries ts;
    ts.u.assign(131702, 0.0);
    ts.y.assign(131702, 0.0);
    const auto s = split(ts, kSilverboxSplit);
    EXPECT_EQ(s.validation.size(), 40000u);
    EXPECT_EQ(s.training.size(), 91702u);
}

TEST(Config, EmptyFileGivesDefaults)
{
    TempDir dir;
    const auto rc = load_config(write_text(dir.file("c.json"), ""));
    const auto& p = rc.priors;
    EXPECT_EQ(p.mode, ModelMode::nlarx);
    EXPECT_EQ(p.theta_mean, Vector::Constant(3, 1.0));
    EXPECT_EQ(p.theta_cov, 10.0 * Matrix::Identity(3, 3));
    EXPECT_EQ(p.eta_mean, 1.0);
    EXPECT_EQ(p.eta_var, 10.0);
    EXPECT_EQ(p.gamma, GammaBelief(1e3, 1e1));
    EXPECT_EQ(p.xi, GammaBelief(1e8, 1e3));
    EXPECT_EQ(p.iterations_per_step, 5);
    EXPECT_EQ(p.epsilon, 1e-8);
    EXPECT_FALSE(p.state_mean.has_value());
    EXPECT_EQ(rc.dataset.delta, 1.0 / 610.35);
    EXPECT_EQ(rc.dataset.split_index, 40000u);

    EXPECT_EQ(load_config(write_text(dir.file("o.json"), "{}")).priors.xi, GammaBelief(1e8, 1e3));
}

TEST(Config, UnknownKeyIsListed)
{
    TempDir dir;
    const auto path = write_text(dir.file("typo.json"), R"({"inference": {"epsilonn": 1e-6}})");
    const auto msg = error_of([&] { load_config(path); });
    EXPECT_NE(msg.find("epsilonn"), std::string::npos) << msg;
    EXPECT_THROW(load_config(path), IoError);

    const auto top = write_text(dir.file("top.json"), R"({"prior": {}})");
    EXPECT_NE(error_of([&] { load_config(top); }).find("prior"), std::string::npos);
}

TEST(Config, InvalidValuesAndVersion)
{
    TempDir dir;
    EXPECT_THROW(load_config(write_text(dir.file("a.json"), R"({"inference": {"iterations_per_step": 0}})")), IoError);
    EXPECT_THROW(load_config(write_text(dir.file("b.json"), R"({"schema_version": 99})")), IoError);
    EXPECT_THROW(load_config(write_text(dir.file("c.json"), R"({"mode": "arx"})")), IoError);
    EXPECT_THROW(load_config(write_text(dir.file("d.json"), "{not json")), IoError);
    EXPECT_THROW(load_config(write_text(dir.file("e.json"), R"({"priors": {"theta_mean": [1, 2]}})")), IoError);
}

TEST(Config, SaveLoadRoundtrip)
{
    TempDir dir;
    RunConfig rc;
    rc.priors.mode = ModelMode::larx;
    rc.priors.theta_mean = Vector::Constant(3, 0.3);
    rc.priors.theta_cov = 2.5 * Matrix::Identity(3, 3);
    rc.priors.gamma = GammaBelief(1.0, 1e-5);
    rc.priors.xi = GammaBelief(1e8, 1e2);
    rc.priors.state_mean = Vector::Constant(2, 0.1);
    rc.priors.state_cov = 0.01 * Matrix::Identity(2, 2);
    rc.priors.iterations_per_step = 7;
    rc.priors.epsilon = 1e-6;
    rc.dataset.input_column = "V1";
    rc.dataset.output_column = "V2";
    rc.dataset.delta = 0.1;
    rc.dataset.split_index = 500;
    save_config(dir.file("rt.json"), rc);
    const auto back = load_config(dir.file("rt.json"));
    EXPECT_EQ(config_to_json(back), config_to_json(rc));
    EXPECT_EQ(back.priors.state_cov.value(), rc.priors.state_cov.value());
    EXPECT_EQ(back.dataset.split_index, 500u);
}

namespace {

RunArtifact sample_artifact()
{
    TimeSeries ts;
    ts.delta = 0.1;
    std::mt19937_64 rng(3);
    std::normal_distribution<double> n(0.0, 0.05);
    std::vector<double> u(200);
    for (auto& v : u) v = n(rng);
    SimulationOptions opt;
    opt.seed = 3;
    const auto sim = simulate({.m = 1, .c = 0.5, .a = 2, .b = 3, .tau = 10, .xi = 1e6}, u, 0.1, opt);
    RunConfig rc;
    rc.dataset.delta = 0.1;
    const auto run = identify(sim.series, rc.priors);
    auto a = make_artifact(rc, run, 7);
    a.metrics["train_onestep_mse"] = 1.234567890123e-5;
    return a;
}

} // namespace

TEST(Artifact, RoundtripIsExact)
{
    TempDir dir;
    const auto a = sample_artifact();
    ASSERT_TRUE(a.physical.has_value());
    EXPECT_EQ(a.free_energy.size(), (a.steps + 6) / 7);
    save_artifact(dir.file("art.json"), a);
    const auto b = load_artifact(dir.file("art.json"));
    EXPECT_EQ(b.posterior.theta.precision(), a.posterior.theta.precision());
    EXPECT_EQ(b.posterior.theta.potential(), a.posterior.theta.potential());
    EXPECT_EQ(b.posterior.eta.potential(), a.posterior.eta.potential());
    EXPECT_EQ(b.posterior.state.precision(), a.posterior.state.precision());
    EXPECT_EQ(b.posterior.gamma, a.posterior.gamma);
    EXPECT_EQ(b.posterior.xi, a.posterior.xi);
    EXPECT_EQ(b.free_energy, a.free_energy);
    EXPECT_EQ(b.final_free_energy, a.final_free_energy);
    EXPECT_EQ(b.metrics, a.metrics);
    EXPECT_EQ(b.physical->b, a.physical->b);
    EXPECT_EQ(b.physical->xi, a.physical->xi);
    EXPECT_EQ(artifact_to_json(b), artifact_to_json(a));
}

TEST(Artifact, VersionAndShapeChecks)
{
    TempDir dir;
    auto j = artifact_to_json(sample_artifact());
    j["schema_version"] = 2;
    detail::write_json_file(dir.file("v2.json"), j);
    EXPECT_NE(error_of([&] { load_artifact(dir.file("v2.json")); }).find("schema_version"), std::string::npos);

    j.erase("schema_version");
    detail::write_json_file(dir.file("none.json"), j);
    EXPECT_THROW(load_artifact(dir.file("none.json")), IoError);

    j = artifact_to_json(sample_artifact());
    j["config"]["mode"] = "larx";
    detail::write_json_file(dir.file("mode.json"), j);
    EXPECT_THROW(load_artifact(dir.file("mode.json")), IoError);

    j = artifact_to_json(sample_artifact());
    j["extra"] = 1;
    detail::write_json_file(dir.file("extra.json"), j);
    EXPECT_THROW(load_artifact(dir.file("extra.json")), IoError);
}
