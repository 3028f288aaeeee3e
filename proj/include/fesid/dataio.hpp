#pragma once

// Dataset ingestion and persistence.
//
//  - CSV: header row, comma separated, decimal-point reals. Native columns
//    are "u" and "y"; other names are mapped through DatasetSpec.
//  - Config and run artifacts: JSON objects carrying "schema_version".
//    Unknown keys are rejected so typos surface instead of silently
//    falling back to defaults.

#include "fesid/engine.hpp"
#include "fesid/error.hpp"

#include <json.hpp>

#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace fesid {

inline constexpr int kSchemaVersion = 1;
inline constexpr double kSilverboxDelta = 1.0 / 610.35;
inline constexpr std::size_t kSilverboxSplit = 40000;

struct DatasetSpec {
    std::string path;
    std::string input_column = "u";
    std::string output_column = "y";
    double delta = kSilverboxDelta;
    std::size_t split_index = kSilverboxSplit;
};

struct RunConfig {
    PriorConfig priors;
    DatasetSpec dataset;
};

// ---- CSV ------------------------------------------------------------------

namespace detail {

inline std::vector<std::string> split_csv_line(std::string_view line)
{
    std::vector<std::string> out;
    std::string field;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char ch = line[i];
        if (quoted) {
            if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                field += '"';
                ++i;
            } else if (ch == '"') {
                quoted = false;
            } else {
                field += ch;
            }
        } else if (ch == '"') {
            quoted = true;
        } else if (ch == ',') {
            out.push_back(std::move(field));
            field.clear();
        } else {
            field += ch;
        }
    }
    out.push_back(std::move(field));
    return out;
}

inline std::string trim(std::string_view s)
{
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

inline std::optional<double> parse_real(std::string_view s)
{
    const std::string t = trim(s);
    if (t.empty()) return std::nullopt;
    const char* first = t.data();
    if (*first == '+') ++first;
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(first, t.data() + t.size(), v);
    if (ec != std::errc() || ptr != t.data() + t.size()) return std::nullopt;
    return v;
}

inline std::size_t column_index(const std::vector<std::string>& header, const std::string& name,
                                const std::string& path)
{
    for (std::size_t i = 0; i < header.size(); ++i)
        if (trim(header[i]) == name) return i;
    throw IoError(path + ": missing column '" + name + "'");
}

} // namespace detail

/// Reads the named input/output columns. Row numbers in errors count data
/// rows from 1 (the header is not a row).
inline TimeSeries load_csv(const DatasetSpec& spec)
{
    std::ifstream in(spec.path);
    if (!in) throw IoError(spec.path + ": cannot open file");
    if (!(spec.delta > 0.0)) throw IoError(spec.path + ": delta must be positive");

    std::string line;
    if (!std::getline(in, line) || detail::trim(line).empty()) throw IoError(spec.path + ": empty file");
    if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
    const auto header = detail::split_csv_line(line);
    const std::size_t iu = detail::column_index(header, spec.input_column, spec.path);
    const std::size_t iy = detail::column_index(header, spec.output_column, spec.path);

    TimeSeries ts;
    ts.delta = spec.delta;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (detail::trim(line).empty()) continue;
        ++row;
        const auto fields = detail::split_csv_line(line);
        auto fail = [&](const std::string& why) {
            throw IoError(spec.path + ": row " + std::to_string(row) + " (line " + std::to_string(row + 1)
                          + "): " + why);
        };
        if (fields.size() <= std::max(iu, iy)) fail("too few fields");
        const auto u = detail::parse_real(fields[iu]);
        const auto y = detail::parse_real(fields[iy]);
        if (!u || !y) fail("unparseable value");
        if (!std::isfinite(*u) || !std::isfinite(*y)) fail("non-finite value");
        ts.u.push_back(*u);
        ts.y.push_back(*y);
    }
    if (ts.y.empty()) throw IoError(spec.path + ": no data rows");
    return ts;
}

/// Writes columns u, y (plus any extra named columns of equal length).
inline void write_csv(const std::string& path, const TimeSeries& ts,
                      const std::vector<std::pair<std::string, std::vector<double>>>& extra = {})
{
    std::ofstream out(path);
    if (!out) throw IoError(path + ": cannot open for writing");
    out << "u,y";
    for (const auto& [name, col] : extra) {
        if (col.size() != ts.size()) throw std::invalid_argument("write_csv: column length mismatch");
        out << ',' << name;
    }
    out << '\n' << std::setprecision(17);
    for (std::size_t k = 0; k < ts.size(); ++k) {
        out << ts.u[k] << ',' << ts.y[k];
        for (const auto& [name, col] : extra) out << ',' << col[k];
        out << '\n';
    }
    if (!out) throw IoError(path + ": write failed");
}

struct SplitSeries {
    TimeSeries validation; ///< samples [0, split)
    TimeSeries training;   ///< samples [split, T)
};

inline SplitSeries split(const TimeSeries& ts, std::size_t split_index)
{
    validate(ts);
    if (split_index < 3 || ts.size() < 6 || split_index > ts.size() - 3)
        throw std::out_of_range("split index " + std::to_string(split_index) + " out of range for T="
                                + std::to_string(ts.size()) + " (need 3 <= split <= T-3)");
    SplitSeries s;
    const auto mid = static_cast<std::ptrdiff_t>(split_index);
    s.validation.u.assign(ts.u.begin(), ts.u.begin() + mid);
    s.validation.y.assign(ts.y.begin(), ts.y.begin() + mid);
    s.training.u.assign(ts.u.begin() + mid, ts.u.end());
    s.training.y.assign(ts.y.begin() + mid, ts.y.end());
    s.validation.delta = s.training.delta = ts.delta;
    return s;
}

// ---- JSON helpers -----------------------------------------------------------

using Json = nlohmann::json;

namespace detail {

inline void reject_unknown_keys(const Json& obj, const std::set<std::string>& known, const std::string& where)
{
    if (!obj.is_object()) throw IoError(where + ": expected an object");
    std::vector<std::string> unknown;
    for (const auto& [k, _] : obj.items())
        if (!known.contains(k)) unknown.push_back(k);
    if (!unknown.empty()) {
        std::string msg = where + ": unknown key(s):";
        for (const auto& k : unknown) msg += " '" + k + "'";
        throw IoError(msg);
    }
}

inline Json to_json(const Vector& v)
{
    return std::vector<double>(v.data(), v.data() + v.size());
}

inline Json to_json(const Matrix& m)
{
    Json rows = Json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        Json row = Json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline Vector vector_from_json(const Json& j, const std::string& where)
{
    if (!j.is_array()) throw IoError(where + ": expected an array");
    Vector v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) {
        if (!j[i].is_number()) throw IoError(where + ": expected numbers");
        v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
    }
    return v;
}

inline Matrix matrix_from_json(const Json& j, const std::string& where)
{
    if (!j.is_array() || j.empty()) throw IoError(where + ": expected a non-empty array of rows");
    const auto rows = static_cast<Eigen::Index>(j.size());
    const auto cols = static_cast<Eigen::Index>(j[0].size());
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        const Vector r = vector_from_json(j[static_cast<std::size_t>(i)], where);
        if (r.size() != cols) throw IoError(where + ": ragged matrix");
        m.row(i) = r.transpose();
    }
    return m;
}

inline double number(const Json& j, const std::string& where)
{
    if (!j.is_number()) throw IoError(where + ": expected a number");
    return j.get<double>();
}

inline void check_version(const Json& j, const std::string& where, bool required)
{
    if (!j.contains("schema_version")) {
        if (required) throw IoError(where + ": missing schema_version");
        return;
    }
    const auto& v = j["schema_version"];
    if (!v.is_number_integer() || v.get<int>() != kSchemaVersion)
        throw IoError(where + ": schema_version mismatch (expected " + std::to_string(kSchemaVersion) + ", got "
                      + v.dump() + ")");
}

inline Json read_json_file(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw IoError(path + ": cannot open file");
    std::stringstream ss;
    ss << in.rdbuf();
    const std::string text = ss.str();
    if (trim(text).empty()) return Json::object();
    try {
        return Json::parse(text);
    } catch (const Json::parse_error& e) {
        throw IoError(path + ": " + e.what());
    }
}

inline void write_json_file(const std::string& path, const Json& j)
{
    std::ofstream out(path);
    if (!out) throw IoError(path + ": cannot open for writing");
    out << j.dump(2) << '\n';
    if (!out) throw IoError(path + ": write failed");
}

} // namespace detail

inline std::string to_string(ModelMode m)
{
    return m == ModelMode::nlarx ? "nlarx" : "larx";
}

inline ModelMode parse_mode(const std::string& s)
{
    if (s == "nlarx") return ModelMode::nlarx;
    if (s == "larx") return ModelMode::larx;
    throw IoError("unknown model mode '" + s + "' (expected nlarx or larx)");
}

// ---- config -----------------------------------------------------------------

inline Json config_to_json(const RunConfig& rc)
{
    const auto& p = rc.priors;
    Json j;
    j["schema_version"] = kSchemaVersion;
    j["mode"] = to_string(p.mode);
    j["priors"] = {
        {"theta_mean", detail::to_json(p.theta_mean)},
        {"theta_cov", detail::to_json(p.theta_cov)},
        {"eta_mean", p.eta_mean},
        {"eta_var", p.eta_var},
        {"gamma_shape", p.gamma.shape()},
        {"gamma_rate", p.gamma.rate()},
        {"xi_shape", p.xi.shape()},
        {"xi_rate", p.xi.rate()},
    };
    if (p.state_mean) j["priors"]["state_mean"] = detail::to_json(*p.state_mean);
    if (p.state_cov) j["priors"]["state_cov"] = detail::to_json(*p.state_cov);
    j["inference"] = {{"epsilon", p.epsilon}, {"iterations_per_step", p.iterations_per_step}};
    j["dataset"] = {
        {"input_column", rc.dataset.input_column},
        {"output_column", rc.dataset.output_column},
        {"delta", rc.dataset.delta},
        {"split_index", rc.dataset.split_index},
    };
    return j;
}

/// Missing keys keep their defaults. Gamma priors are shape/rate (mean = shape/rate).
inline RunConfig config_from_json(const Json& j, const std::string& where = "config")
{
    RunConfig rc;
    if (j.is_null()) return rc;
    detail::reject_unknown_keys(j, {"schema_version", "mode", "priors", "inference", "dataset"}, where);
    detail::check_version(j, where, false);
    auto& p = rc.priors;
    if (j.contains("mode")) {
        if (!j["mode"].is_string()) throw IoError(where + ".mode: expected a string");
        p.mode = parse_mode(j["mode"].get<std::string>());
    }
    if (j.contains("priors")) {
        const auto& pr = j["priors"];
        const std::string w = where + ".priors";
        detail::reject_unknown_keys(pr,
                                    {"theta_mean", "theta_cov", "eta_mean", "eta_var", "gamma_shape", "gamma_rate",
                                     "xi_shape", "xi_rate", "state_mean", "state_cov"},
                                    w);
        if (pr.contains("theta_mean")) p.theta_mean = detail::vector_from_json(pr["theta_mean"], w + ".theta_mean");
        if (pr.contains("theta_cov")) p.theta_cov = detail::matrix_from_json(pr["theta_cov"], w + ".theta_cov");
        if (pr.contains("eta_mean")) p.eta_mean = detail::number(pr["eta_mean"], w + ".eta_mean");
        if (pr.contains("eta_var")) p.eta_var = detail::number(pr["eta_var"], w + ".eta_var");
        double gs = p.gamma.shape(), gr = p.gamma.rate(), xs = p.xi.shape(), xr = p.xi.rate();
        if (pr.contains("gamma_shape")) gs = detail::number(pr["gamma_shape"], w + ".gamma_shape");
        if (pr.contains("gamma_rate")) gr = detail::number(pr["gamma_rate"], w + ".gamma_rate");
        if (pr.contains("xi_shape")) xs = detail::number(pr["xi_shape"], w + ".xi_shape");
        if (pr.contains("xi_rate")) xr = detail::number(pr["xi_rate"], w + ".xi_rate");
        p.gamma = GammaBelief(gs, gr);
        p.xi = GammaBelief(xs, xr);
        if (pr.contains("state_mean")) p.state_mean = detail::vector_from_json(pr["state_mean"], w + ".state_mean");
        if (pr.contains("state_cov")) p.state_cov = detail::matrix_from_json(pr["state_cov"], w + ".state_cov");
    }
    if (j.contains("inference")) {
        const auto& inf = j["inference"];
        const std::string w = where + ".inference";
        detail::reject_unknown_keys(inf, {"epsilon", "iterations_per_step"}, w);
        if (inf.contains("epsilon")) p.epsilon = detail::number(inf["epsilon"], w + ".epsilon");
        if (inf.contains("iterations_per_step")) {
            if (!inf["iterations_per_step"].is_number_integer())
                throw IoError(w + ".iterations_per_step: expected an integer");
            p.iterations_per_step = inf["iterations_per_step"].get<int>();
        }
    }
    if (j.contains("dataset")) {
        const auto& ds = j["dataset"];
        const std::string w = where + ".dataset";
        detail::reject_unknown_keys(ds, {"input_column", "output_column", "delta", "split_index"}, w);
        if (ds.contains("input_column")) rc.dataset.input_column = ds["input_column"].get<std::string>();
        if (ds.contains("output_column")) rc.dataset.output_column = ds["output_column"].get<std::string>();
        if (ds.contains("delta")) rc.dataset.delta = detail::number(ds["delta"], w + ".delta");
        if (ds.contains("split_index")) {
            if (!ds["split_index"].is_number_unsigned()) throw IoError(w + ".split_index: expected an integer");
            rc.dataset.split_index = ds["split_index"].get<std::size_t>();
        }
        if (!(rc.dataset.delta > 0.0)) throw IoError(w + ".delta: must be positive");
    }
    try {
        validate(p);
    } catch (const std::invalid_argument& e) {
        throw IoError(where + ": " + e.what());
    }
    return rc;
}

inline RunConfig load_config(const std::string& path)
{
    return config_from_json(detail::read_json_file(path), path);
}

inline void save_config(const std::string& path, const RunConfig& rc)
{
    detail::write_json_file(path, config_to_json(rc));
}

// ---- physical parameters -----------------------------------------------------

inline Json physical_to_json(const PhysicalParams& p)
{
    return {{"m", p.m}, {"c", p.c}, {"a", p.a}, {"b", p.b}, {"tau", p.tau}, {"xi", p.xi}};
}

inline PhysicalParams physical_from_json(const Json& j, const std::string& where)
{
    detail::reject_unknown_keys(j, {"m", "c", "a", "b", "tau", "xi"}, where);
    PhysicalParams p;
    for (const auto& [k, v] : j.items()) {
        const double x = detail::number(v, where + "." + k);
        if (k == "m") p.m = x;
        else if (k == "c") p.c = x;
        else if (k == "a") p.a = x;
        else if (k == "b") p.b = x;
        else if (k == "tau") p.tau = x;
        else p.xi = x;
    }
    return p;
}

inline Json coefficients_to_json(const ArCoefficients& c)
{
    return {{"theta", c.theta}, {"eta", c.eta}, {"gamma", c.gamma}};
}

// ---- run artifact -------------------------------------------------------------

struct RunArtifact {
    RunConfig config;
    BeliefSet posterior;
    std::size_t steps = 0;
    double final_free_energy = 0.0;
    std::size_t free_energy_stride = 1;
    std::vector<double> free_energy; ///< every `free_energy_stride`-th step
    std::map<std::string, double> metrics;
    std::optional<PhysicalParams> physical; ///< absent when η̄ = 0
};

inline RunArtifact make_artifact(const RunConfig& cfg, const IdentifyResult& run, std::size_t stride = 1)
{
    RunArtifact a;
    a.config = cfg;
    a.posterior = run.beliefs;
    a.steps = run.reports.size();
    a.final_free_energy = run.reports.empty() ? 0.0 : run.reports.back().free_energy;
    a.free_energy_stride = std::max<std::size_t>(stride, 1);
    for (std::size_t i = 0; i < run.reports.size(); i += a.free_energy_stride)
        a.free_energy.push_back(run.reports[i].free_energy);
    try {
        auto phys = ar_to_phys(point_estimate(run.beliefs), cfg.dataset.delta);
        phys.xi = run.beliefs.xi.mean();
        a.physical = phys;
    } catch (const InferenceError&) {
        a.physical.reset();
    }
    return a;
}

namespace detail {

inline Json gaussian_to_json(const GaussianBelief& g)
{
    Json j{{"potential", to_json(g.potential())}, {"precision", to_json(g.precision())}};
    if (g.is_proper()) {
        const auto m = gaussian_moments(g);
        j["mean"] = to_json(m.mean);
        j["cov"] = to_json(m.covariance);
    }
    return j;
}

inline GaussianBelief gaussian_from_json(const Json& j, const std::string& where)
{
    reject_unknown_keys(j, {"potential", "precision", "mean", "cov"}, where);
    if (!j.contains("potential") || !j.contains("precision"))
        throw IoError(where + ": needs potential and precision");
    const Vector h = vector_from_json(j["potential"], where + ".potential");
    const Matrix w = matrix_from_json(j["precision"], where + ".precision");
    if (w.rows() != h.size() || w.cols() != h.size()) throw IoError(where + ": dimension mismatch");
    return GaussianBelief::from_information(h, w);
}

inline Json gamma_to_json(const GammaBelief& g)
{
    Json j{{"shape", g.shape()}, {"rate", g.rate()}};
    if (g.is_proper()) j["mean"] = g.mean();
    return j;
}

inline GammaBelief gamma_from_json(const Json& j, const std::string& where)
{
    reject_unknown_keys(j, {"shape", "rate", "mean"}, where);
    if (!j.contains("shape") || !j.contains("rate")) throw IoError(where + ": needs shape and rate");
    return {number(j["shape"], where + ".shape"), number(j["rate"], where + ".rate")};
}

} // namespace detail

inline Json artifact_to_json(const RunArtifact& a)
{
    Json j;
    j["schema_version"] = kSchemaVersion;
    j["config"] = config_to_json(a.config);
    j["posterior"] = {
        {"theta", detail::gaussian_to_json(a.posterior.theta)}, {"eta", detail::gaussian_to_json(a.posterior.eta)},
        {"gamma", detail::gamma_to_json(a.posterior.gamma)},    {"xi", detail::gamma_to_json(a.posterior.xi)},
        {"state", detail::gaussian_to_json(a.posterior.state)},
    };
    j["steps"] = a.steps;
    j["final_free_energy"] = a.final_free_energy;
    j["free_energy"] = {{"stride", a.free_energy_stride}, {"values", a.free_energy}};
    j["metrics"] = a.metrics;
    j["physical"] = a.physical ? physical_to_json(*a.physical) : Json(nullptr);
    return j;
}

inline RunArtifact artifact_from_json(const Json& j, const std::string& where = "artifact")
{
    detail::reject_unknown_keys(
        j, {"schema_version", "config", "posterior", "steps", "final_free_energy", "free_energy", "metrics", "physical"},
        where);
    detail::check_version(j, where, true);
    RunArtifact a;
    if (!j.contains("config") || !j.contains("posterior")) throw IoError(where + ": needs config and posterior");
    a.config = config_from_json(j["config"], where + ".config");

    const auto& post = j["posterior"];
    detail::reject_unknown_keys(post, {"theta", "eta", "gamma", "xi", "state"}, where + ".posterior");
    for (const char* key : {"theta", "eta", "gamma", "xi", "state"})
        if (!post.contains(key)) throw IoError(where + ".posterior: missing " + std::string(key));
    a.posterior.theta = detail::gaussian_from_json(post["theta"], where + ".posterior.theta");
    a.posterior.eta = detail::gaussian_from_json(post["eta"], where + ".posterior.eta");
    a.posterior.gamma = detail::gamma_from_json(post["gamma"], where + ".posterior.gamma");
    a.posterior.xi = detail::gamma_from_json(post["xi"], where + ".posterior.xi");
    a.posterior.state = detail::gaussian_from_json(post["state"], where + ".posterior.state");
    if (a.posterior.theta.dim() != theta_dim(a.config.priors.mode))
        throw IoError(where + ": posterior theta dimension does not match mode " + to_string(a.config.priors.mode));

    if (j.contains("steps")) a.steps = j["steps"].get<std::size_t>();
    if (j.contains("final_free_energy")) a.final_free_energy = detail::number(j["final_free_energy"], where);
    if (j.contains("free_energy")) {
        const auto& fe = j["free_energy"];
        detail::reject_unknown_keys(fe, {"stride", "values"}, where + ".free_energy");
        if (fe.contains("stride")) a.free_energy_stride = fe["stride"].get<std::size_t>();
        if (fe.contains("values")) a.free_energy = fe["values"].get<std::vector<double>>();
    }
    if (j.contains("metrics")) a.metrics = j["metrics"].get<std::map<std::string, double>>();
    if (j.contains("physical") && !j["physical"].is_null())
        a.physical = physical_from_json(j["physical"], where + ".physical");
    return a;
}

inline void save_artifact(const std::string& path, const RunArtifact& a)
{
    detail::write_json_file(path, artifact_to_json(a));
}

inline RunArtifact load_artifact(const std::string& path)
{
    try {
        return artifact_from_json(detail::read_json_file(path), path);
    } catch (const Json::exception& e) {
        throw IoError(path + ": " + e.what());
    }
}

} // namespace fesid
