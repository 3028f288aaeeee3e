#pragma once

// Command-line front end: simulate | identify | predict | evaluate | report.
// stdout carries results only; errors go to stderr.
// Exit codes: 0 success, 1 inference error, 2 I/O / config / usage error.

#include "fesid/dataio.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <iomanip>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

namespace fesid::cli {

enum ExitCode : int { kOk = 0, kInferenceFailure = 1, kIoFailure = 2 };

/// Scientific notation with 4 significant digits and a bare exponent: 5.830e-5, 0.000e0.
inline std::string format_sci(double v)
{
    if (v == 0.0) return "0.000e0";
    if (!std::isfinite(v)) return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3e", v);
    std::string s(buf);
    const auto e = s.find('e');
    std::string mant = s.substr(0, e);
    const int exp = std::stoi(s.substr(e + 1));
    return mant + "e" + std::to_string(exp);
}

namespace detail {

struct SeriesSelection {
    std::optional<std::size_t> split;
    std::string input_column;
    std::string output_column;
    std::optional<double> delta;
};

inline TimeSeries load_series(const std::string& path, const RunConfig& cfg, const SeriesSelection& sel)
{
    DatasetSpec spec = cfg.dataset;
    spec.path = path;
    if (!sel.input_column.empty()) spec.input_column = sel.input_column;
    if (!sel.output_column.empty()) spec.output_column = sel.output_column;
    if (sel.delta) spec.delta = *sel.delta;
    return load_csv(spec);
}

inline std::vector<double> read_column(const std::string& path, const std::string& column)
{
    DatasetSpec spec;
    spec.path = path;
    spec.input_column = column;
    spec.output_column = column;
    return load_csv(spec).y;
}

} // namespace detail

inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Online Duffing-oscillator identification by variational message passing", "fesid"};
    app.require_subcommand(1, 1);

    // simulate
    auto* sim = app.add_subcommand("simulate", "Generate a synthetic Duffing time series");
    std::string sim_params, sim_input = "sine", sim_out, sim_input_column = "u";
    std::size_t sim_steps = 0;
    std::uint64_t sim_seed = 0;
    double sim_delta = 0.1, sim_amp = 0.1, sim_freq = 0.7, sim_noise = 0.01;
    std::vector<double> sim_x0{0.0, 0.0};
    bool sim_noise_free = false;
    sim->add_option("--params", sim_params, "JSON file with m, c, a, b, tau, xi")->required();
    sim->add_option("--input", sim_input, "'sine' or a CSV file with an input column")->capture_default_str();
    sim->add_option("--input-column", sim_input_column, "Input column when --input is a file")->capture_default_str();
    sim->add_option("--steps", sim_steps, "Number of samples (required for sine input)");
    sim->add_option("--seed", sim_seed, "RNG seed")->capture_default_str();
    sim->add_option("--delta", sim_delta, "Sample period in seconds")->capture_default_str();
    sim->add_option("--amplitude", sim_amp, "Sine amplitude")->capture_default_str();
    sim->add_option("--frequency", sim_freq, "Sine frequency in Hz")->capture_default_str();
    sim->add_option("--input-noise", sim_noise, "Std of white noise added to the sine input")->capture_default_str();
    sim->add_option("--x0", sim_x0, "Initial state x[1] x[0]")->expected(2);
    sim->add_flag("--noise-free", sim_noise_free, "Disable process and measurement noise");
    sim->add_option("--out", sim_out, "Output CSV (columns u,y); truth goes to <out>.truth.json")->required();

    // identify
    auto* idn = app.add_subcommand("identify", "Run online inference on the training segment");
    std::string idn_data, idn_config, idn_mode, idn_out;
    detail::SeriesSelection idn_sel;
    std::size_t idn_stride = 1;
    idn->add_option("--data", idn_data, "Input/output CSV")->required();
    idn->add_option("--config", idn_config, "Config JSON (priors, inference, dataset)");
    idn->add_option("--mode", idn_mode, "nlarx or larx (overrides config)")->check(CLI::IsMember({"nlarx", "larx"}));
    idn->add_option("--split", idn_sel.split, "Train on samples [split, T); validate on [0, split)");
    idn->add_option("--input-column", idn_sel.input_column, "Input column name (overrides config)");
    idn->add_option("--output-column", idn_sel.output_column, "Output column name (overrides config)");
    idn->add_option("--delta", idn_sel.delta, "Sample period in seconds (overrides config)");
    idn->add_option("--fe-stride", idn_stride, "Keep every k-th free energy in the artifact")->capture_default_str();
    idn->add_option("--out", idn_out, "Artifact JSON")->required();

    // predict
    auto* pred = app.add_subcommand("predict", "Predict with frozen posterior beliefs");
    std::string pred_artifact, pred_data, pred_protocol = "onestep", pred_out;
    detail::SeriesSelection pred_sel;
    pred->add_option("--artifact", pred_artifact, "Artifact JSON from identify")->required();
    pred->add_option("--data", pred_data, "Input/output CSV")->required();
    pred->add_option("--protocol", pred_protocol, "onestep or rollout")
        ->check(CLI::IsMember({"onestep", "rollout"}))
        ->capture_default_str();
    pred->add_option("--split", pred_sel.split, "Predict on the validation samples [0, split)");
    pred->add_option("--input-column", pred_sel.input_column, "Input column name");
    pred->add_option("--output-column", pred_sel.output_column, "Output column name");
    pred->add_option("--delta", pred_sel.delta, "Sample period in seconds");
    pred->add_option("--out", pred_out, "Output CSV (u, y, y_pred, sq_error)")->required();

    // evaluate
    auto* eval = app.add_subcommand("evaluate", "Mean squared error of a prediction file");
    std::string eval_pred, eval_data, eval_pred_column = "y_pred", eval_data_column = "y";
    eval->add_option("--pred", eval_pred, "Prediction CSV")->required();
    eval->add_option("--data", eval_data, "Reference CSV")->required();
    eval->add_option("--pred-column", eval_pred_column, "Prediction column")->capture_default_str();
    eval->add_option("--data-column", eval_data_column, "Reference column")->capture_default_str();

    // report
    auto* rep = app.add_subcommand("report", "Posterior summary of an artifact");
    std::string rep_artifact;
    rep->add_option("--artifact", rep_artifact, "Artifact JSON")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n';
        return kIoFailure;
    }

    try {
        if (*sim) {
            const auto pj = fesid::detail::read_json_file(sim_params);
            const PhysicalParams params = physical_from_json(pj, sim_params);
            std::vector<double> u;
            if (sim_input == "sine") {
                if (sim_steps < 3) throw IoError("simulate: --steps >= 3 required for sine input");
                std::mt19937_64 rng(sim_seed ^ 0x9E3779B97F4A7C15ULL);
                std::normal_distribution<double> noise(0.0, 1.0);
                u.resize(sim_steps);
                for (std::size_t k = 0; k < sim_steps; ++k) {
                    const double t = static_cast<double>(k) * sim_delta;
                    u[k] = sim_amp * std::sin(2.0 * std::numbers::pi * sim_freq * t) + sim_noise * noise(rng);
                }
            } else {
                u = detail::read_column(sim_input, sim_input_column);
                if (sim_steps > 0) {
                    if (sim_steps > u.size()) throw IoError("simulate: --steps exceeds input length");
                    u.resize(sim_steps);
                }
            }
            SimulationOptions opt;
            opt.seed = sim_seed;
            opt.x0 = {sim_x0[0], sim_x0[1]};
            opt.noise_free = sim_noise_free;
            const auto result = simulate(params, u, sim_delta, opt);
            write_csv(sim_out, result.series);
            Json truth;
            truth["schema_version"] = kSchemaVersion;
            truth["params"] = physical_to_json(params);
            truth["delta"] = sim_delta;
            truth["seed"] = sim_seed;
            truth["noise_free"] = sim_noise_free;
            truth["psi"] = coefficients_to_json(result.coefficients);
            truth["latent"] = result.latent;
            fesid::detail::write_json_file(sim_out + ".truth.json", truth);
            out << "wrote " << result.series.size() << " samples to " << sim_out << '\n';
            return kOk;
        }

        if (*idn) {
            RunConfig cfg = idn_config.empty() ? RunConfig{} : load_config(idn_config);
            if (!idn_mode.empty()) cfg.priors.mode = parse_mode(idn_mode);
            if (!idn_sel.input_column.empty()) cfg.dataset.input_column = idn_sel.input_column;
            if (!idn_sel.output_column.empty()) cfg.dataset.output_column = idn_sel.output_column;
            if (idn_sel.delta) cfg.dataset.delta = *idn_sel.delta;
            const TimeSeries all = detail::load_series(idn_data, cfg, idn_sel);

            TimeSeries train = all;
            std::optional<TimeSeries> valid;
            if (idn_sel.split) {
                cfg.dataset.split_index = *idn_sel.split;
                auto parts = split(all, *idn_sel.split);
                train = std::move(parts.training);
                valid = std::move(parts.validation);
            }
            const auto run = identify(train, cfg.priors);
            auto artifact = make_artifact(cfg, run, idn_stride);
            artifact.metrics["train_onestep_mse"] = evaluate_mse(predict_onestep(run.beliefs, train), train.y);
            if (valid) {
                artifact.metrics["validation_onestep_mse"] =
                    evaluate_mse(predict_onestep(run.beliefs, *valid), valid->y);
                try {
                    artifact.metrics["validation_rollout_mse"] =
                        evaluate_mse(simulate_rollout(run.beliefs, *valid), valid->y);
                } catch (const InferenceError& e) {
                    err << "warning: validation rollout: " << e.what() << '\n';
                }
            }
            save_artifact(idn_out, artifact);
            out << "mode " << to_string(cfg.priors.mode) << ", " << artifact.steps << " steps, final free energy "
                << std::setprecision(10) << artifact.final_free_energy << '\n';
            for (const auto& [k, v] : artifact.metrics) out << k << ' ' << format_sci(v) << '\n';
            return kOk;
        }

        if (*pred) {
            const RunArtifact artifact = load_artifact(pred_artifact);
            RunConfig cfg = artifact.config;
            const TimeSeries all = detail::load_series(pred_data, cfg, pred_sel);
            if (std::abs(all.delta - artifact.config.dataset.delta) > 1e-12 * artifact.config.dataset.delta)
                throw IoError("predict: data delta " + std::to_string(all.delta) + " does not match artifact delta "
                              + std::to_string(artifact.config.dataset.delta));
            const TimeSeries data = pred_sel.split ? split(all, *pred_sel.split).validation : all;
            const auto yhat = pred_protocol == "onestep" ? predict_onestep(artifact.posterior, data)
                                                         : simulate_rollout(artifact.posterior, data);
            std::vector<double> sq(yhat.size());
            for (std::size_t k = 0; k < sq.size(); ++k) sq[k] = (yhat[k] - data.y[k]) * (yhat[k] - data.y[k]);
            write_csv(pred_out, data, {{"y_pred", yhat}, {"sq_error", sq}});
            out << pred_protocol << " mse " << format_sci(evaluate_mse(yhat, data.y)) << '\n';
            return kOk;
        }

        if (*eval) {
            const auto p = detail::read_column(eval_pred, eval_pred_column);
            const auto y = detail::read_column(eval_data, eval_data_column);
            if (p.size() != y.size())
                throw IoError("evaluate: series misaligned (" + std::to_string(p.size()) + " predictions vs "
                              + std::to_string(y.size()) + " samples)");
            out << format_sci(evaluate_mse(p, y)) << '\n';
            return kOk;
        }

        if (*rep) {
            const RunArtifact a = load_artifact(rep_artifact);
            const auto& q = a.posterior;
            const auto th = gaussian_moments(q.theta);
            const auto et = gaussian_moments(q.eta);
            const bool nl = a.config.priors.mode == ModelMode::nlarx;
            auto row = [&](const std::string& name, double mean, double sd) {
                out << std::left << std::setw(8) << name << std::right << std::setw(16) << std::setprecision(6)
                    << std::scientific << mean << "  +- " << std::setw(14) << sd << '\n';
            };
            out << "mode " << to_string(a.config.priors.mode) << ", steps " << a.steps << ", final free energy "
                << std::setprecision(10) << std::defaultfloat << a.final_free_energy << '\n';
            out << "parameter            mean             std\n";
            const char* names3[] = {"theta1", "theta2", "theta3"};
            const char* names2[] = {"theta1", "theta3"};
            for (Eigen::Index i = 0; i < th.mean.size(); ++i)
                row(nl ? names3[i] : names2[i], th.mean[i], std::sqrt(th.covariance(i, i)));
            row("eta", et.mean[0], std::sqrt(et.covariance(0, 0)));
            row("gamma", q.gamma.mean(), std::sqrt(q.gamma.variance()));
            row("xi", q.xi.mean(), std::sqrt(q.xi.variance()));
            if (a.physical) {
                out << "recovered physical parameters (point estimates)\n";
                const auto& p = *a.physical;
                for (auto [name, v] : {std::pair{"m", p.m}, {"c", p.c}, {"a", p.a}, {"b", p.b}, {"tau", p.tau}})
                    out << std::left << std::setw(8) << name << std::right << std::setw(16) << std::scientific
                        << std::setprecision(6) << v << '\n';
            } else {
                out << "physical parameters unavailable (eta mean is zero)\n";
            }
            for (const auto& [k, v] : a.metrics) out << k << ' ' << format_sci(v) << '\n';
            return kOk;
        }
    } catch (const IoError& e) {
        err << "error: " << e.what() << '\n';
        return kIoFailure;
    } catch (const std::out_of_range& e) {
        err << "error: " << e.what() << '\n';
        return kIoFailure;
    } catch (const std::invalid_argument& e) {
        err << "error: " << e.what() << '\n';
        return kIoFailure;
    } catch (const Json::exception& e) {
        err << "error: " << e.what() << '\n';
        return kIoFailure;
    } catch (const InferenceError& e) {
        err << "inference error: " << e.what() << '\n';
        return kInferenceFailure;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kInferenceFailure;
    }
    return kOk;
}

} // namespace fesid::cli
