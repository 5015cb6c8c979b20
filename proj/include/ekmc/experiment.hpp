#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "ekmc/data.hpp"
#include "ekmc/ensemble.hpp"
#include "ekmc/errors.hpp"
#include "ekmc/kernels.hpp"
#include "ekmc/kmc.hpp"
#include "ekmc/metrics.hpp"
#include "ekmc/problem.hpp"

namespace ekmc {

inline constexpr const char* kVersion = "0.3.0";

enum class MetricSelection { mae, m1, both };

inline MetricSelection parse_metric_selection(const std::string& s)
{
    if (s == "mae") return MetricSelection::mae;
    if (s == "m1") return MetricSelection::m1;
    if (s == "both") return MetricSelection::both;
    throw ConfigError("unknown metric selection '" + s + "' (expected mae, m1 or both)");
}

inline const char* to_string(MetricSelection m)
{
    switch (m) {
        case MetricSelection::mae: return "mae";
        case MetricSelection::m1: return "m1";
        case MetricSelection::both: return "both";
    }
    return "both";
}

// "fixed:0.5", "fixed" or "per-column"
inline void parse_threshold_flag(const std::string& s, EnsembleConfig& cfg)
{
    if (s == "per-column" || s == "per-sensor") {
        cfg.rule = ThresholdRule::per_sensor;
        return;
    }
    if (s == "fixed") {
        cfg.rule = ThresholdRule::fixed;
        return;
    }
    if (s.rfind("fixed:", 0) == 0) {
        cfg.rule = ThresholdRule::fixed;
        try {
            cfg.threshold = std::stod(s.substr(6));
        } catch (const std::exception&) {
            throw ConfigError("bad threshold '" + s + "'");
        }
        return;
    }
    throw ConfigError("bad threshold '" + s + "' (expected fixed:<value> or per-column)");
}

inline std::string threshold_flag(const EnsembleConfig& cfg)
{
    if (cfg.rule == ThresholdRule::per_sensor) return "per-column";
    std::ostringstream os;
    os << "fixed:" << std::setprecision(17) << cfg.threshold;
    return os.str();
}

struct ExperimentConfig {
    std::optional<std::string> csv_path;  // unset: synthetic data
    IngestOptions ingest;
    SyntheticSpec synthetic;

    std::vector<int> horizons{1, 10, 60, 120};
    std::vector<int> per_day{10, 60, 120, 300};
    int days_per_week = 5;
    int weeks = 4;
    int lag = 5;
    int test_columns = 60;
    std::optional<Timestamp> anchor;  // unset: latest anchor the data allows

    KernelSpec kernel;
    SolverConfig solver;
    EnsembleConfig ensemble;
    MetricSelection metrics = MetricSelection::both;
    int m1_resolution = 20;

    std::string output_dir = "results";
    int jobs = 1;
    bool record_timing = true;

    void validate() const
    {
        if (horizons.empty() || per_day.empty()) throw ConfigError("experiment: grids must be non-empty");
        for (int h : horizons)
            if (h < 1) throw ConfigError("experiment: horizons must be >= 1");
        for (int t : per_day)
            if (t < 1) throw ConfigError("experiment: per_day values must be >= 1");
        if (m1_resolution < 1) throw ConfigError("experiment: m1_resolution must be >= 1");
        if (jobs < 1) throw ConfigError("experiment: jobs must be >= 1");
        if (!csv_path) synthetic.validate();
        kernel.validate();
        solver.validate();
        ensemble.validate();
    }

    WindowConfig window(int n, int horizon, int t) const
    {
        WindowConfig w;
        w.n = n;
        w.lag = lag;
        w.horizon = horizon;
        w.per_day = t;
        w.days_per_week = days_per_week;
        w.weeks = weeks;
        w.test_columns = test_columns;
        return w;
    }
};

// ---------------------------------------------------------------------------
// config file

inline nlohmann::json to_json(const ExperimentConfig& c)
{
    using nlohmann::json;
    json data;
    if (c.csv_path) {
        data["csv"] = *c.csv_path;
        data["timezone_offset"] = c.ingest.timezone_offset;
        data["max_gap"] = c.ingest.max_gap;
    } else {
        const auto& s = c.synthetic;
        data["synthetic"] = {{"n_sensors", s.n_sensors},
                             {"n_days", s.n_days},
                             {"cycle_length", s.cycle_length},
                             {"green_ratio", s.green_ratio},
                             {"occupancy_prob_green", s.occupancy_prob_green},
                             {"occupancy_prob_red", s.occupancy_prob_red},
                             {"offset", s.offset},
                             {"flip_noise", s.flip_noise},
                             {"seed", s.seed},
                             {"start", s.start}};
    }
    json kernel = {{"kind", to_string(c.kernel.kind)}, {"degree", c.kernel.degree}, {"coef0", c.kernel.coef0}};
    kernel["gamma"] = c.kernel.gamma ? json(*c.kernel.gamma) : json(nullptr);
    json window = {{"horizons", c.horizons},       {"per_day", c.per_day}, {"days_per_week", c.days_per_week},
                   {"weeks", c.weeks},             {"lag", c.lag},         {"test_columns", c.test_columns}};
    window["anchor"] = c.anchor ? json(*c.anchor) : json(nullptr);
    return json{{"data", data},
                {"window", window},
                {"kernel", kernel},
                {"solver",
                 {{"rank", c.solver.rank},
                  {"lambda", c.solver.lambda},
                  {"max_sweeps", c.solver.max_sweeps},
                  {"tol", c.solver.tol},
                  {"step_tol", c.solver.step_tol},
                  {"seed", c.solver.seed}}},
                {"ensemble",
                 {{"max_rounds", c.ensemble.max_rounds},
                  {"eps_min", c.ensemble.eps_min},
                  {"threshold", threshold_flag(c.ensemble)},
                  {"stop_on_weak", c.ensemble.stop_on_weak}}},
                {"metrics", to_string(c.metrics)},
                {"m1_resolution", c.m1_resolution},
                {"output_dir", c.output_dir},
                {"jobs", c.jobs},
                {"record_timing", c.record_timing}};
}

namespace detail {

// Reads known keys, rejects unknown ones so typos do not go unnoticed.
class JsonReader {
public:
    JsonReader(const nlohmann::json& j, std::string where) : j_(j), where_(std::move(where))
    {
        if (!j_.is_object()) throw ConfigError(where_ + ": expected an object");
    }

    template <class T>
    void get(const char* key, T& out)
    {
        seen_.insert(key);
        if (!j_.contains(key) || j_.at(key).is_null()) return;
        try {
            out = j_.at(key).get<T>();
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(where_ + "." + key + ": " + e.what());
        }
    }

    template <class T>
    void get(const char* key, std::optional<T>& out)
    {
        seen_.insert(key);
        if (!j_.contains(key) || j_.at(key).is_null()) return;
        T value{};
        get(key, value);
        out = value;
    }

    const nlohmann::json* child(const char* key)
    {
        seen_.insert(key);
        if (!j_.contains(key) || j_.at(key).is_null()) return nullptr;
        return &j_.at(key);
    }

    void finish() const
    {
        for (auto it = j_.begin(); it != j_.end(); ++it) {
            if (!seen_.count(it.key())) throw ConfigError(where_ + ": unknown key '" + it.key() + "'");
        }
    }

private:
    const nlohmann::json& j_;
    std::string where_;
    std::set<std::string> seen_;
};

}  // namespace detail

inline ExperimentConfig experiment_from_json(const nlohmann::json& j)
{
    ExperimentConfig c;
    detail::JsonReader root(j, "config");
    if (const auto* data = root.child("data")) {
        detail::JsonReader d(*data, "config.data");
        std::string csv;
        d.get("csv", csv);
        if (!csv.empty()) c.csv_path = csv;
        d.get("timezone_offset", c.ingest.timezone_offset);
        d.get("max_gap", c.ingest.max_gap);
        if (const auto* syn = d.child("synthetic")) {
            detail::JsonReader s(*syn, "config.data.synthetic");
            auto& spec = c.synthetic;
            s.get("n_sensors", spec.n_sensors);
            s.get("n_days", spec.n_days);
            s.get("cycle_length", spec.cycle_length);
            if (const auto* g = s.child("green_ratio")) {
                spec.green_ratio = g->is_array() ? g->get<std::vector<double>>() : std::vector<double>{g->get<double>()};
            }
            s.get("occupancy_prob_green", spec.occupancy_prob_green);
            s.get("occupancy_prob_red", spec.occupancy_prob_red);
            s.get("offset", spec.offset);
            s.get("flip_noise", spec.flip_noise);
            s.get("seed", spec.seed);
            s.get("start", spec.start);
            s.finish();
        }
        d.finish();
    }
    if (const auto* win = root.child("window")) {
        detail::JsonReader w(*win, "config.window");
        w.get("horizons", c.horizons);
        w.get("per_day", c.per_day);
        w.get("days_per_week", c.days_per_week);
        w.get("weeks", c.weeks);
        w.get("lag", c.lag);
        w.get("test_columns", c.test_columns);
        w.get("anchor", c.anchor);
        w.finish();
    }
    if (const auto* ker = root.child("kernel")) {
        detail::JsonReader k(*ker, "config.kernel");
        std::string kind = to_string(c.kernel.kind);
        k.get("kind", kind);
        c.kernel.kind = parse_kernel_kind(kind);
        k.get("gamma", c.kernel.gamma);
        k.get("degree", c.kernel.degree);
        k.get("coef0", c.kernel.coef0);
        k.finish();
    }
    if (const auto* sol = root.child("solver")) {
        detail::JsonReader s(*sol, "config.solver");
        s.get("rank", c.solver.rank);
        s.get("lambda", c.solver.lambda);
        s.get("max_sweeps", c.solver.max_sweeps);
        s.get("tol", c.solver.tol);
        s.get("step_tol", c.solver.step_tol);
        s.get("seed", c.solver.seed);
        s.finish();
    }
    if (const auto* ens = root.child("ensemble")) {
        detail::JsonReader e(*ens, "config.ensemble");
        e.get("max_rounds", c.ensemble.max_rounds);
        e.get("eps_min", c.ensemble.eps_min);
        std::string threshold;
        e.get("threshold", threshold);
        if (!threshold.empty()) parse_threshold_flag(threshold, c.ensemble);
        e.get("stop_on_weak", c.ensemble.stop_on_weak);
        e.finish();
    }
    std::string metrics;
    root.get("metrics", metrics);
    if (!metrics.empty()) c.metrics = parse_metric_selection(metrics);
    root.get("m1_resolution", c.m1_resolution);
    root.get("output_dir", c.output_dir);
    root.get("jobs", c.jobs);
    root.get("record_timing", c.record_timing);
    root.finish();
    return c;
}

inline ExperimentConfig load_experiment_config(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config '" + path + "': " + e.what());
    }
    return experiment_from_json(j);
}

// FNV-1a over the canonical JSON form.
inline std::uint64_t config_hash(const ExperimentConfig& c)
{
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char ch : to_json(c).dump()) {
        h ^= ch;
        h *= 1099511628211ULL;
    }
    return h;
}

// ---------------------------------------------------------------------------
// data access

inline std::vector<OccupancySeries> load_series(const ExperimentConfig& c)
{
    if (c.csv_path) return ingest_csv(*c.csv_path, c.ingest).series;
    return generate_synthetic(c.synthetic);
}

// Latest anchor that leaves room for `max_horizon` seconds of ground truth.
inline Timestamp default_anchor(const std::vector<OccupancySeries>& series, int max_horizon)
{
    if (series.empty()) throw DataError("no series loaded");
    Timestamp end = series.front().end();
    for (const auto& s : series) end = std::min(end, s.end());
    return end - 1 - max_horizon;
}

// n x t2 ground truth for the unknown block.
inline Matrix test_truth(const std::vector<OccupancySeries>& series, const JointProblem& p)
{
    const auto targets = p.test_target_times();
    Matrix out(p.n(), static_cast<Eigen::Index>(targets.size()));
    for (Eigen::Index s = 0; s < out.rows(); ++s) {
        for (Eigen::Index j = 0; j < out.cols(); ++j) {
            out(s, j) = series[static_cast<std::size_t>(s)].at(targets[static_cast<std::size_t>(j)]);
        }
    }
    return out;
}

// Predicts x(t + H) = x(t): the newest lag slice of each test column.
inline Matrix persistence_prediction(const JointProblem& p)
{
    const auto n = p.n();
    return p.x_test().bottomRows(n);
}

// ---------------------------------------------------------------------------
// one grid cell

struct CellFit {
    JointProblem problem;
    std::vector<std::string> sensor_ids;
    Matrix truth;               // n x t2
    FactorState kmc_factors;    // unweighted KMC
    Matrix kmc_raw;             // n x t2
    Matrix kmc_binary;
    EnsembleModel ensemble;
    Matrix ekmc_binary;
    bool ekmc_degenerate = false;
    Matrix persistence;
    double gram_ms = 0.0;
    double kmc_ms = 0.0;
    double ekmc_ms = 0.0;
};

namespace detail {

inline double elapsed_ms(std::chrono::steady_clock::time_point since)
{
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - since).count();
}

}  // namespace detail

inline CellFit fit_cell(const std::vector<OccupancySeries>& series, Timestamp anchor, const WindowConfig& window,
                        const KernelSpec& kernel, const SolverConfig& solver, const EnsembleConfig& ensemble)
{
    using clock = std::chrono::steady_clock;
    JointProblem problem = build_windows(series, anchor, window);
    CellFit cell{std::move(problem), {}, {}, {}, {}, {}, {}, {}, false, {}, 0.0, 0.0, 0.0};
    for (const auto& s : series) cell.sensor_ids.push_back(s.sensor_id());
    cell.truth = test_truth(series, cell.problem);

    auto start = clock::now();
    const GramMatrix g = gram(kernel, cell.problem);
    cell.gram_ms = detail::elapsed_ms(start);

    const Vector thresholds = sensor_thresholds(ensemble, cell.problem.y_train());
    start = clock::now();
    auto kmc = solve(cell.problem, g, solver);
    cell.kmc_factors = std::move(kmc.factors);
    cell.kmc_raw = predict(cell.kmc_factors);
    cell.kmc_binary = threshold_rows(cell.kmc_raw, thresholds);
    cell.kmc_ms = detail::elapsed_ms(start) + cell.gram_ms;

    start = clock::now();
    try {
        cell.ensemble = ekmc_fit(cell.problem, g, solver, ensemble);
        cell.ekmc_binary = cell.ensemble.thresholded;
    } catch (const DegenerateEnsembleError& e) {
        cell.ekmc_degenerate = true;
        cell.ekmc_binary = threshold_rows(e.fallback(), thresholds);
    }
    cell.ekmc_ms = detail::elapsed_ms(start) + cell.gram_ms;
    cell.persistence = persistence_prediction(cell.problem);
    return cell;
}

// ---------------------------------------------------------------------------
// results

struct ResultRow {
    std::string sensor_id;
    int horizon = 0;
    long long dt = 0;
    std::string method;  // kmc | ekmc | persistence, or "-" on a failed cell
    std::string metric;  // 1-mae | 1-m1, or "failed"
    double value = 0.0;
    double wall_time_ms = 0.0;
    std::uint64_t seed = 0;
};

inline constexpr const char* kResultHeader = "sensor_id,H,DT,method,metric,value,wall_time_ms,seed";

inline std::string format_number(double v, int precision = 10)
{
    if (std::isnan(v)) return "nan";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", precision, v);
    return buf;
}

inline void write_results_csv(std::ostream& out, const std::vector<ResultRow>& rows)
{
    out << kResultHeader << '\n';
    for (const auto& r : rows) {
        out << r.sensor_id << ',' << r.horizon << ',' << r.dt << ',' << r.method << ',' << r.metric << ','
            << format_number(r.value) << ',' << format_number(r.wall_time_ms, 6) << ',' << r.seed << '\n';
    }
}

// Per-sensor accuracy indices (1 - MAE and 1 - d_M1) for one binary prediction.
inline std::vector<std::pair<std::string, Vector>> accuracy_indices(const Matrix& truth, const Matrix& pred,
                                                                    MetricSelection which, int resolution)
{
    std::vector<std::pair<std::string, Vector>> out;
    if (which != MetricSelection::m1) {
        out.emplace_back("1-mae", (1.0 - mae(truth.transpose(), pred.transpose()).array()).matrix());
    }
    if (which != MetricSelection::mae) {
        Vector v(truth.rows());
        for (Eigen::Index s = 0; s < truth.rows(); ++s) {
            v(s) = 1.0 - m1_distance(StepSignal::from_binary(truth.row(s)), StepSignal::from_binary(pred.row(s)),
                                     resolution);
        }
        out.emplace_back("1-m1", v);
    }
    return out;
}

inline std::vector<ResultRow> cell_rows(const CellFit& cell, int horizon, const ExperimentConfig& cfg)
{
    const long long dt = cell.problem.t1();
    struct Method {
        const char* tag;
        const Matrix* pred;
        double ms;
    };
    const Method methods[] = {{"kmc", &cell.kmc_binary, cell.kmc_ms},
                              {"ekmc", &cell.ekmc_binary, cell.ekmc_ms},
                              {"persistence", &cell.persistence, 0.0}};
    std::vector<ResultRow> rows;
    for (const auto& m : methods) {
        for (const auto& [metric, values] : accuracy_indices(cell.truth, *m.pred, cfg.metrics, cfg.m1_resolution)) {
            for (Eigen::Index s = 0; s < values.size(); ++s) {
                rows.push_back({cell.sensor_ids[static_cast<std::size_t>(s)], horizon, dt, m.tag, metric, values(s),
                                cfg.record_timing ? m.ms : 0.0, cfg.solver.seed});
            }
        }
    }
    return rows;
}

struct CellOutcome {
    int horizon = 0;
    int per_day = 0;
    std::vector<ResultRow> rows;
    std::optional<std::string> error;
};

struct ExperimentResult {
    std::vector<CellOutcome> cells;  // sorted by (H, T)
    std::vector<ResultRow> rows;
    Timestamp anchor = 0;

    bool any_failed() const
    {
        return std::any_of(cells.begin(), cells.end(), [](const CellOutcome& c) { return c.error.has_value(); });
    }
};

/*
 * Every (H, T) cell: build windows, fit KMC, EKMC and persistence, score each
 * per sensor. A failing cell yields a single "failed" row and the remaining
 * cells still run.
 */
inline ExperimentResult run_experiment(const ExperimentConfig& cfg, const std::vector<OccupancySeries>& series)
{
    cfg.validate();
    const int max_h = *std::max_element(cfg.horizons.begin(), cfg.horizons.end());
    ExperimentResult result;
    result.anchor = cfg.anchor ? *cfg.anchor : default_anchor(series, max_h);

    std::vector<std::pair<int, int>> keys;
    for (int h : cfg.horizons)
        for (int t : cfg.per_day) keys.emplace_back(h, t);
    std::sort(keys.begin(), keys.end());
    keys.erase(std::unique(keys.begin(), keys.end()), keys.end());

    auto run_cell = [&](int h, int t) {
        CellOutcome out{h, t, {}, std::nullopt};
        const WindowConfig window = cfg.window(static_cast<int>(series.size()), h, t);
        try {
            const CellFit cell = fit_cell(series, result.anchor, window, cfg.kernel, cfg.solver, cfg.ensemble);
            out.rows = cell_rows(cell, h, cfg);
        } catch (const std::exception& e) {  // includes bad_alloc from oversized cells
            out.error = e.what();
            out.rows = {{"*", h, static_cast<long long>(window.days()) * t, "-", "failed",
                         std::nan(""), 0.0, cfg.solver.seed}};
        }
        return out;
    };

    result.cells.resize(keys.size());
    std::size_t next = 0;
    while (next < keys.size()) {
        std::vector<std::future<CellOutcome>> batch;
        const std::size_t stop = std::min(keys.size(), next + static_cast<std::size_t>(cfg.jobs));
        for (std::size_t i = next; i < stop; ++i) {
            batch.push_back(std::async(cfg.jobs > 1 ? std::launch::async : std::launch::deferred, run_cell,
                                       keys[i].first, keys[i].second));
        }
        for (std::size_t i = next; i < stop; ++i) result.cells[i] = batch[i - next].get();
        next = stop;
    }
    for (const auto& c : result.cells) result.rows.insert(result.rows.end(), c.rows.begin(), c.rows.end());
    return result;
}

// Human-readable layout: one DT x H grid per (method, metric, sensor), plus the sensor mean.
inline void write_results_table(std::ostream& out, const ExperimentResult& result)
{
    std::map<std::tuple<std::string, std::string, std::string>, std::map<std::pair<long long, int>, double>> grids;
    std::set<int> horizons;
    std::set<long long> dts;
    std::map<std::tuple<std::string, std::string>, std::map<std::pair<long long, int>, std::vector<double>>> means;
    for (const auto& r : result.rows) {
        horizons.insert(r.horizon);
        dts.insert(r.dt);
        if (r.metric == "failed") continue;
        grids[{r.method, r.metric, r.sensor_id}][{r.dt, r.horizon}] = r.value;
        means[{r.method, r.metric}][{r.dt, r.horizon}].push_back(r.value);
    }
    auto emit = [&](const std::string& title, auto lookup) {
        out << title << '\n' << std::setw(8) << "DT\\H";
        for (int h : horizons) out << std::setw(10) << h;
        out << '\n';
        for (long long dt : dts) {
            out << std::setw(8) << dt;
            for (int h : horizons) {
                const auto v = lookup(dt, h);
                if (v) out << std::setw(10) << std::fixed << std::setprecision(4) << *v;
                else out << std::setw(10) << "-";
            }
            out << '\n';
        }
        out << '\n';
    };
    for (const auto& [key, grid] : grids) {
        const auto& [method, metric, sensor] = key;
        emit(method + " " + metric + " sensor " + sensor, [&](long long dt, int h) -> std::optional<double> {
            auto it = grid.find({dt, h});
            if (it == grid.end()) return std::nullopt;
            return it->second;
        });
    }
    for (const auto& [key, grid] : means) {
        const auto& [method, metric] = key;
        emit(method + " " + metric + " mean", [&](long long dt, int h) -> std::optional<double> {
            auto it = grid.find({dt, h});
            if (it == grid.end() || it->second.empty()) return std::nullopt;
            double sum = 0.0;
            for (double v : it->second) sum += v;
            return sum / static_cast<double>(it->second.size());
        });
    }
    for (const auto& c : result.cells) {
        if (c.error) out << "cell H=" << c.horizon << " T=" << c.per_day << " failed: " << *c.error << '\n';
    }
}

inline nlohmann::json manifest(const ExperimentConfig& cfg, const ExperimentResult& result)
{
    char hash[17];
    std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(config_hash(cfg)));
    return {{"config_hash", hash},
            {"seed", cfg.solver.seed},
            {"version", kVersion},
            {"anchor", result.anchor},
            {"cells", result.cells.size()},
            {"failed_cells", std::count_if(result.cells.begin(), result.cells.end(),
                                           [](const CellOutcome& c) { return c.error.has_value(); })},
            {"config", to_json(cfg)}};
}

// Writes results.csv, results.txt and manifest.json into cfg.output_dir.
inline void write_experiment_outputs(const ExperimentConfig& cfg, const ExperimentResult& result)
{
    std::filesystem::create_directories(cfg.output_dir);
    const std::filesystem::path dir(cfg.output_dir);
    {
        std::ofstream out(dir / "results.csv");
        write_results_csv(out, result.rows);
    }
    {
        std::ofstream out(dir / "results.txt");
        write_results_table(out, result);
    }
    std::ofstream out(dir / "manifest.json");
    out << manifest(cfg, result).dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// matrix dumps

inline void write_matrix_csv(std::ostream& out, const Matrix& m)
{
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            if (j) out << ',';
            out << format_number(m(i, j), 17);
        }
        out << '\n';
    }
}

inline void write_matrix_csv(const std::filesystem::path& path, const Matrix& m)
{
    std::ofstream out(path);
    if (!out) throw DataError("cannot write '" + path.string() + "'");
    write_matrix_csv(out, m);
}

inline Matrix read_matrix_csv(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw DataError("cannot open '" + path.string() + "'");
    std::vector<std::vector<double>> rows;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::trim(line).empty()) continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            try {
                row.push_back(std::stod(cell));
            } catch (const std::exception&) {
                throw ParseError("bad number '" + cell + "'", line_no);
            }
        }
        if (!rows.empty() && row.size() != rows.front().size()) throw ParseError("ragged matrix row", line_no);
        rows.push_back(std::move(row));
    }
    Matrix m(static_cast<Eigen::Index>(rows.size()), rows.empty() ? 0 : static_cast<Eigen::Index>(rows[0].size()));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    return m;
}

struct FeatureDump {
    Matrix u_train;     // n x r
    Matrix v_test;      // t2 x r
    Matrix prediction;  // n x t2, raw U_tr V_te'
    Matrix truth;       // n x t2, empty when unknown
};

/// V_te.csv, U_tr.csv, prediction.csv and truth.csv, row-aligned with the test columns.
inline void dump_features(const FeatureDump& d, const std::filesystem::path& dir)
{
    std::filesystem::create_directories(dir);
    write_matrix_csv(dir / "V_te.csv", d.v_test);
    write_matrix_csv(dir / "U_tr.csv", d.u_train);
    write_matrix_csv(dir / "prediction.csv", d.prediction);
    if (d.truth.size() > 0) write_matrix_csv(dir / "truth.csv", d.truth);
}

// ---------------------------------------------------------------------------
// fitted model file (written by `fit`, read by `predict` and `dump-features`)

struct SavedModel {
    WindowConfig window;
    Timestamp anchor = 0;
    std::vector<std::string> sensor_ids;
    std::vector<Timestamp> target_times;
    Matrix u_train;        // n x r, unweighted KMC
    Matrix v_test;         // t2 x r
    Matrix kmc_raw;        // n x t2
    Matrix kmc_binary;     // n x t2
    Matrix ekmc_combined;  // n x t2
    Matrix ekmc_binary;    // n x t2
    Matrix truth;          // n x t2, empty when the data ends before the targets
    std::vector<double> epsilons;
    std::vector<double> betas;
    std::vector<double> final_weights;
    bool ekmc_degenerate = false;
};

inline nlohmann::json matrix_to_json(const Matrix& m)
{
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        std::vector<double> row(static_cast<std::size_t>(m.cols()));
        for (Eigen::Index j = 0; j < m.cols(); ++j) row[static_cast<std::size_t>(j)] = m(i, j);
        rows.push_back(row);
    }
    return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", rows}};
}

inline Matrix matrix_from_json(const nlohmann::json& j)
{
    const auto rows = j.at("rows").get<Eigen::Index>();
    const auto cols = j.at("cols").get<Eigen::Index>();
    const auto& data = j.at("data");
    if (static_cast<Eigen::Index>(data.size()) != rows) throw ParseError("matrix row count mismatch", 0);
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        const auto& row = data.at(static_cast<std::size_t>(i));
        if (static_cast<Eigen::Index>(row.size()) != cols) throw ParseError("matrix column count mismatch", 0);
        for (Eigen::Index j2 = 0; j2 < cols; ++j2) m(i, j2) = row.at(static_cast<std::size_t>(j2)).get<double>();
    }
    return m;
}

inline SavedModel saved_model(const CellFit& cell)
{
    SavedModel m;
    m.window = cell.problem.config();
    m.anchor = cell.problem.anchor().value_or(0);
    m.sensor_ids = cell.sensor_ids;
    m.target_times = cell.problem.test_target_times();
    m.u_train = cell.kmc_factors.u_train;
    m.v_test = cell.kmc_factors.v_test;
    m.kmc_raw = cell.kmc_raw;
    m.kmc_binary = cell.kmc_binary;
    m.ekmc_degenerate = cell.ekmc_degenerate;
    m.ekmc_binary = cell.ekmc_binary;
    if (!cell.ekmc_degenerate) {
        m.ekmc_combined = cell.ensemble.combined;
        m.epsilons = cell.ensemble.epsilons();
        m.betas = cell.ensemble.betas();
        m.final_weights.assign(cell.ensemble.final_weights.data(),
                               cell.ensemble.final_weights.data() + cell.ensemble.final_weights.size());
    } else {
        m.ekmc_combined = cell.kmc_raw;
    }
    m.truth = cell.truth;
    return m;
}

inline nlohmann::json to_json(const SavedModel& m)
{
    const auto& w = m.window;
    return {{"version", kVersion},
            {"window",
             {{"n", w.n},
              {"lag", w.lag},
              {"horizon", w.horizon},
              {"per_day", w.per_day},
              {"days_per_week", w.days_per_week},
              {"weeks", w.weeks},
              {"test_columns", w.test_columns},
              {"seconds_per_day", w.seconds_per_day}}},
            {"anchor", m.anchor},
            {"sensor_ids", m.sensor_ids},
            {"target_times", m.target_times},
            {"u_train", matrix_to_json(m.u_train)},
            {"v_test", matrix_to_json(m.v_test)},
            {"kmc_raw", matrix_to_json(m.kmc_raw)},
            {"kmc_binary", matrix_to_json(m.kmc_binary)},
            {"ekmc_combined", matrix_to_json(m.ekmc_combined)},
            {"ekmc_binary", matrix_to_json(m.ekmc_binary)},
            {"truth", matrix_to_json(m.truth)},
            {"epsilons", m.epsilons},
            {"betas", m.betas},
            {"final_weights", m.final_weights},
            {"ekmc_degenerate", m.ekmc_degenerate}};
}

inline SavedModel saved_model_from_json(const nlohmann::json& j)
{
    try {
        SavedModel m;
        const auto& w = j.at("window");
        m.window.n = w.at("n").get<int>();
        m.window.lag = w.at("lag").get<int>();
        m.window.horizon = w.at("horizon").get<int>();
        m.window.per_day = w.at("per_day").get<int>();
        m.window.days_per_week = w.at("days_per_week").get<int>();
        m.window.weeks = w.at("weeks").get<int>();
        m.window.test_columns = w.at("test_columns").get<int>();
        m.window.seconds_per_day = w.at("seconds_per_day").get<Timestamp>();
        m.window.validate();
        m.anchor = j.at("anchor").get<Timestamp>();
        m.sensor_ids = j.at("sensor_ids").get<std::vector<std::string>>();
        m.target_times = j.at("target_times").get<std::vector<Timestamp>>();
        m.u_train = matrix_from_json(j.at("u_train"));
        m.v_test = matrix_from_json(j.at("v_test"));
        m.kmc_raw = matrix_from_json(j.at("kmc_raw"));
        m.kmc_binary = matrix_from_json(j.at("kmc_binary"));
        m.ekmc_combined = matrix_from_json(j.at("ekmc_combined"));
        m.ekmc_binary = matrix_from_json(j.at("ekmc_binary"));
        m.truth = matrix_from_json(j.at("truth"));
        m.epsilons = j.at("epsilons").get<std::vector<double>>();
        m.betas = j.at("betas").get<std::vector<double>>();
        m.final_weights = j.at("final_weights").get<std::vector<double>>();
        m.ekmc_degenerate = j.at("ekmc_degenerate").get<bool>();
        if (static_cast<int>(m.sensor_ids.size()) != m.window.n ||
            static_cast<int>(m.target_times.size()) != m.window.test_columns ||
            m.ekmc_binary.rows() != m.window.n || m.ekmc_binary.cols() != m.window.test_columns) {
            throw DimensionError("model file: inconsistent shapes");
        }
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("model file: ") + e.what());
    }
}

// Binary predictions in the event-log schema, one row per (sensor, target second).
inline std::vector<OccupancySeries> prediction_series(const SavedModel& m, const Matrix& binary)
{
    std::vector<OccupancySeries> out;
    for (Eigen::Index s = 0; s < binary.rows(); ++s) {
        std::vector<std::uint8_t> values;
        for (Eigen::Index j = 0; j < binary.cols(); ++j) values.push_back(binary(s, j) > 0.5 ? 1 : 0);
        out.emplace_back(m.sensor_ids[static_cast<std::size_t>(s)], m.target_times.front(), std::move(values));
    }
    return out;
}

}  // namespace ekmc
