// ekmc: generate data, fit, predict, evaluate and benchmark kernelized
// matrix-completion forecasters on 1 Hz binary occupancy streams.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include "ekmc/ekmc.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFatal = 1;
constexpr int kExitPartial = 2;

// Flag values that override the config file when given.
struct Overrides {
    std::string config_path;
    std::string data_csv;
    std::optional<int> lag, test_columns, days_per_week, weeks;
    std::optional<ekmc::Timestamp> anchor;
    std::vector<int> horizons, per_day;
    std::string kernel;
    std::optional<double> gamma, coef0;
    std::optional<int> degree;
    std::optional<int> rank, max_sweeps;
    std::optional<double> lambda, tol, step_tol;
    std::optional<std::uint64_t> seed;
    std::optional<int> rounds;
    std::string threshold;
    std::optional<double> eps_min;
    std::string metric;
    std::optional<int> m1_resolution;
    std::optional<int> jobs;
    std::string output_dir;
    bool no_timing = false;
};

void add_model_flags(CLI::App* cmd, Overrides& o)
{
    cmd->add_option("-c,--config", o.config_path, "JSON experiment config");
    cmd->add_option("--data", o.data_csv, "event log CSV (timestamp,sensor_id,occupancy)");
    cmd->add_option("--lag", o.lag, "seconds of history per input column (L)");
    cmd->add_option("--test-columns", o.test_columns, "number of test columns (T_te)");
    cmd->add_option("--days-per-week", o.days_per_week, "days used per week (d)");
    cmd->add_option("--weeks", o.weeks, "weeks used (w)");
    cmd->add_option("--anchor", o.anchor, "UTC second of the newest test column");
    cmd->add_option("--kernel", o.kernel, "linear | rbf | polynomial");
    cmd->add_option("--gamma", o.gamma, "rbf width");
    cmd->add_option("--degree", o.degree, "polynomial degree");
    cmd->add_option("--coef0", o.coef0, "polynomial offset");
    cmd->add_option("--rank", o.rank, "factor rank r");
    cmd->add_option("--lambda", o.lambda, "regularization weight");
    cmd->add_option("--tol", o.tol, "relative objective decrease that stops the solver");
    cmd->add_option("--step-tol", o.step_tol, "also stop only once every block moves less than this");
    cmd->add_option("--max-sweeps", o.max_sweeps, "coordinate-descent sweep cap");
    cmd->add_option("--seed", o.seed, "factor initialization seed");
    cmd->add_option("--rounds", o.rounds, "ensemble round cap");
    cmd->add_option("--threshold", o.threshold, "fixed:<value> | per-column");
    cmd->add_option("--eps-min", o.eps_min, "ensemble error clamp floor");
}

ekmc::ExperimentConfig resolve(const Overrides& o)
{
    ekmc::ExperimentConfig c;
    if (!o.config_path.empty()) c = ekmc::load_experiment_config(o.config_path);
    if (!o.data_csv.empty()) c.csv_path = o.data_csv;
    if (o.lag) c.lag = *o.lag;
    if (o.test_columns) c.test_columns = *o.test_columns;
    if (o.days_per_week) c.days_per_week = *o.days_per_week;
    if (o.weeks) c.weeks = *o.weeks;
    if (o.anchor) c.anchor = *o.anchor;
    if (!o.horizons.empty()) c.horizons = o.horizons;
    if (!o.per_day.empty()) c.per_day = o.per_day;
    if (!o.kernel.empty()) c.kernel.kind = ekmc::parse_kernel_kind(o.kernel);
    if (o.gamma) c.kernel.gamma = *o.gamma;
    if (o.degree) c.kernel.degree = *o.degree;
    if (o.coef0) c.kernel.coef0 = *o.coef0;
    if (o.rank) c.solver.rank = *o.rank;
    if (o.lambda) c.solver.lambda = *o.lambda;
    if (o.tol) c.solver.tol = *o.tol;
    if (o.step_tol) c.solver.step_tol = *o.step_tol;
    if (o.max_sweeps) c.solver.max_sweeps = *o.max_sweeps;
    if (o.seed) c.solver.seed = *o.seed;
    if (o.rounds) c.ensemble.max_rounds = *o.rounds;
    if (!o.threshold.empty()) ekmc::parse_threshold_flag(o.threshold, c.ensemble);
    if (o.eps_min) c.ensemble.eps_min = *o.eps_min;
    if (!o.metric.empty()) c.metrics = ekmc::parse_metric_selection(o.metric);
    if (o.m1_resolution) c.m1_resolution = *o.m1_resolution;
    if (o.jobs) c.jobs = *o.jobs;
    if (!o.output_dir.empty()) c.output_dir = o.output_dir;
    if (o.no_timing) c.record_timing = false;
    c.validate();
    return c;
}

void write_json(const std::string& path, const nlohmann::json& j)
{
    std::ofstream out(path);
    if (!out) throw ekmc::DataError("cannot write '" + path + "'");
    out << j.dump(2) << '\n';
}

nlohmann::json read_json(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw ekmc::DataError("cannot open '" + path + "'");
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ekmc::ConfigError("'" + path + "': " + e.what());
    }
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Kernelized matrix completion forecasting for 1 Hz binary sensor streams"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(ekmc::kVersion));
    Overrides o;

    // generate
    auto* gen = app.add_subcommand("generate", "write a synthetic signal-cycle event log");
    ekmc::SyntheticSpec spec;
    std::string gen_out = "synthetic.csv";
    std::string gen_config;
    gen->add_option("-c,--config", gen_config, "JSON config; its data.synthetic block is used");
    gen->add_option("--sensors", spec.n_sensors, "number of sensors");
    gen->add_option("--days", spec.n_days, "days of data");
    gen->add_option("--cycle", spec.cycle_length, "signal cycle length (s)");
    gen->add_option("--green-ratio", spec.green_ratio, "green fraction of the cycle, one value or one per sensor");
    gen->add_option("--p-green", spec.occupancy_prob_green, "occupancy rate during green");
    gen->add_option("--p-red", spec.occupancy_prob_red, "occupancy rate during red");
    gen->add_option("--offset", spec.offset, "phase offset between consecutive sensors (s)");
    gen->add_option("--flip-noise", spec.flip_noise, "bit flip probability");
    gen->add_option("--seed", spec.seed, "generator seed");
    gen->add_option("--start", spec.start, "first UTC second");
    gen->add_option("-o,--out", gen_out, "output CSV");

    // fit
    auto* fit = app.add_subcommand("fit", "fit KMC and EKMC for one (H, T) cell and save the model");
    add_model_flags(fit, o);
    int fit_h = 1;
    int fit_t = 10;
    std::string fit_out = "model.json";
    fit->add_option("--horizon", fit_h, "prediction horizon H (s)");
    fit->add_option("--per-day", fit_t, "training columns per day T");
    fit->add_option("-o,--out", fit_out, "model JSON");

    // predict
    auto* pred = app.add_subcommand("predict", "emit a fitted model's binary predictions as an event log");
    std::string pred_model;
    std::string pred_out = "predictions.csv";
    std::string pred_method = "ekmc";
    pred->add_option("-m,--model", pred_model, "model JSON from `fit`")->required();
    pred->add_option("--method", pred_method, "ekmc | kmc")->check(CLI::IsMember({"ekmc", "kmc"}));
    pred->add_option("-o,--out", pred_out, "output CSV");

    // evaluate
    auto* eval = app.add_subcommand("evaluate", "score predicted event logs against ground truth");
    std::string eval_pred;
    std::string eval_truth;
    std::string eval_out;
    std::string eval_metric = "both";
    int eval_res = 20;
    int eval_h = 0;
    eval->add_option("-p,--pred", eval_pred, "predicted event log")->required();
    eval->add_option("-t,--truth", eval_truth, "ground-truth event log")->required();
    eval->add_option("--metric", eval_metric, "mae | m1 | both");
    eval->add_option("--m1-resolution", eval_res, "M1 densification per unit");
    eval->add_option("--horizon", eval_h, "horizon label for the output rows");
    eval->add_option("-o,--out", eval_out, "output CSV (stdout when omitted)");

    // benchmark
    auto* bench = app.add_subcommand("benchmark", "run the (H, T) grid and write results.csv / results.txt");
    add_model_flags(bench, o);
    bench->add_option("--horizons", o.horizons, "horizon grid");
    bench->add_option("--per-day", o.per_day, "T grid");
    bench->add_option("--metric", o.metric, "mae | m1 | both");
    bench->add_option("--m1-resolution", o.m1_resolution, "M1 densification per unit");
    bench->add_option("-j,--jobs", o.jobs, "cells run in parallel");
    bench->add_option("-o,--out-dir", o.output_dir, "output directory");
    bench->add_flag("--no-timing", o.no_timing, "write 0 for wall times (byte-stable output)");

    // dump-features
    auto* dump = app.add_subcommand("dump-features", "write V_te, U_tr, predictions and truth as CSV matrices");
    std::string dump_model;
    std::string dump_dir = "features";
    dump->add_option("-m,--model", dump_model, "model JSON from `fit`")->required();
    dump->add_option("-o,--out-dir", dump_dir, "output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        // --help / --version exit 0; usage errors are fatal
        return app.exit(e) == 0 ? kExitOk : kExitFatal;
    }

    try {
        if (*gen) {
            if (!gen_config.empty()) {
                auto cfg = ekmc::load_experiment_config(gen_config);
                spec = cfg.synthetic;
            }
            const auto series = ekmc::generate_synthetic(spec);
            ekmc::write_csv(gen_out, series);
            std::cerr << "wrote " << series.size() << " sensors x " << series.front().size() << " s to " << gen_out
                      << '\n';
            return kExitOk;
        }

        if (*fit) {
            auto cfg = resolve(o);
            const auto series = ekmc::load_series(cfg);
            const auto window = cfg.window(static_cast<int>(series.size()), fit_h, fit_t);
            const auto anchor = cfg.anchor ? *cfg.anchor : ekmc::default_anchor(series, fit_h);
            const auto cell = ekmc::fit_cell(series, anchor, window, cfg.kernel, cfg.solver, cfg.ensemble);
            write_json(fit_out, ekmc::to_json(ekmc::saved_model(cell)));
            std::cerr << "fit H=" << fit_h << " DT=" << cell.problem.t1() << " rounds="
                      << (cell.ekmc_degenerate ? 0 : cell.ensemble.rounds.size()) << " -> " << fit_out << '\n';
            return kExitOk;
        }

        if (*pred) {
            const auto model = ekmc::saved_model_from_json(read_json(pred_model));
            const ekmc::Matrix& binary = pred_method == "kmc" ? model.kmc_binary : model.ekmc_binary;
            ekmc::write_csv(pred_out, ekmc::prediction_series(model, binary));
            return kExitOk;
        }

        if (*eval) {
            const auto which = ekmc::parse_metric_selection(eval_metric);
            const auto predicted = ekmc::ingest_csv(eval_pred, {0, 0}).series;
            const auto truth = ekmc::ingest_csv(eval_truth).series;
            std::map<std::string, const ekmc::OccupancySeries*> by_id;
            for (const auto& s : truth) by_id[s.sensor_id()] = &s;

            std::ofstream file;
            if (!eval_out.empty()) file.open(eval_out);
            std::ostream& out = eval_out.empty() ? std::cout : file;
            out << "sensor_id,horizon,metric,value\n";
            for (const auto& p : predicted) {
                auto it = by_id.find(p.sensor_id());
                if (it == by_id.end()) throw ekmc::DataError("no ground truth for sensor '" + p.sensor_id() + "'");
                ekmc::Matrix t(1, static_cast<Eigen::Index>(p.size()));
                ekmc::Matrix y(1, static_cast<Eigen::Index>(p.size()));
                for (std::size_t i = 0; i < p.size(); ++i) {
                    const auto when = p.start() + static_cast<ekmc::Timestamp>(i);
                    t(0, static_cast<Eigen::Index>(i)) = it->second->at(when);
                    y(0, static_cast<Eigen::Index>(i)) = p.values()[i];
                }
                for (const auto& [metric, values] : ekmc::accuracy_indices(t, y, which, eval_res)) {
                    out << p.sensor_id() << ',' << eval_h << ',' << metric << ',' << ekmc::format_number(values(0))
                        << '\n';
                }
            }
            return kExitOk;
        }

        if (*bench) {
            auto cfg = resolve(o);
            const auto series = ekmc::load_series(cfg);
            const auto result = ekmc::run_experiment(cfg, series);
            ekmc::write_experiment_outputs(cfg, result);
            for (const auto& c : result.cells) {
                if (c.error) std::cerr << "cell H=" << c.horizon << " T=" << c.per_day << " failed: " << *c.error << '\n';
            }
            std::cerr << "wrote " << result.rows.size() << " rows to " << cfg.output_dir << '\n';
            return result.any_failed() ? kExitPartial : kExitOk;
        }

        if (*dump) {
            const auto model = ekmc::saved_model_from_json(read_json(dump_model));
            ekmc::dump_features({model.u_train, model.v_test, model.kmc_raw, model.truth}, dump_dir);
            return kExitOk;
        }
    } catch (const ekmc::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitFatal;
    } catch (const std::exception& e) {
        std::cerr << "fatal: " << e.what() << '\n';
        return kExitFatal;
    }
    return kExitOk;
}
