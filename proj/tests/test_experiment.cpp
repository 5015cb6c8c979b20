#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "ekmc/experiment.hpp"

using namespace ekmc;
namespace fs = std::filesystem;

namespace {

// Three sensors, five weeks, one small grid cell.
ExperimentConfig small_config()
{
    ExperimentConfig c;
    c.horizons = {1};
    c.per_day = {10};
    c.synthetic.flip_noise = 0.05;
    c.synthetic.seed = 3;
    c.record_timing = false;
    return c;
}

std::string results_csv(const ExperimentResult& r)
{
    std::ostringstream out;
    write_results_csv(out, r.rows);
    return out.str();
}

fs::path scratch_dir(const std::string& name)
{
    const auto dir = fs::temp_directory_path() / ("ekmc_test_" + name);
    fs::remove_all(dir);
    return dir;
}

}  // namespace

TEST(RunExperiment, SingleCellRowCount)
{
    const auto cfg = small_config();
    const auto series = load_series(cfg);
    const auto result = run_experiment(cfg, series);
    ASSERT_EQ(result.rows.size(), 3u * 2u * 3u);
    EXPECT_FALSE(result.any_failed());
    std::set<std::tuple<std::string, std::string, std::string>> keys;
    for (const auto& r : result.rows) {
        keys.insert({r.sensor_id, r.method, r.metric});
        EXPECT_EQ(r.horizon, 1);
        EXPECT_EQ(r.dt, 200);
        EXPECT_GE(r.value, 0.0);
        EXPECT_LE(r.value, 1.0);
    }
    EXPECT_EQ(keys.size(), 18u);
    EXPECT_EQ(results_csv(result).substr(0, results_csv(result).find('\n')), kResultHeader);
}

TEST(RunExperiment, FullGridCountsEveryCell)
{
    auto cfg = small_config();
    cfg.horizons = {1, 10, 60, 120};
    cfg.per_day = {10, 60, 120, 300};
    // counting contract only: keep each fit cheap
    cfg.solver.max_sweeps = 1;
    cfg.solver.rank = 2;
    cfg.ensemble.max_rounds = 1;
    cfg.kernel.kind = KernelKind::linear;
    const auto result = run_experiment(cfg, load_series(cfg));
    EXPECT_EQ(result.rows.size(), 4u * 4u * 3u * 2u * 3u);
    EXPECT_EQ(result.cells.size(), 16u);
    EXPECT_FALSE(result.any_failed());
}

TEST(RunExperiment, FailingCellYieldsOneRowAndOthersContinue)
{
    auto cfg = small_config();
    cfg.per_day = {10, 30 * 86400};  // second cell reaches back before the data starts
    const auto result = run_experiment(cfg, load_series(cfg));
    ASSERT_EQ(result.cells.size(), 2u);
    EXPECT_FALSE(result.cells[0].error);
    ASSERT_TRUE(result.cells[1].error);
    EXPECT_NE(result.cells[1].error->find("missing coverage"), std::string::npos);
    ASSERT_EQ(result.rows.size(), 18u + 1u);
    const auto& failed = result.rows.back();
    EXPECT_EQ(failed.metric, "failed");
    EXPECT_EQ(failed.sensor_id, "*");
    EXPECT_TRUE(std::isnan(failed.value));
    EXPECT_TRUE(result.any_failed());
}

TEST(RunExperiment, ByteIdenticalReruns)
{
    auto cfg = small_config();
    cfg.horizons = {1, 10};
    const auto series = load_series(cfg);
    EXPECT_EQ(results_csv(run_experiment(cfg, series)), results_csv(run_experiment(cfg, series)));
    cfg.jobs = 2;
    auto one = small_config();
    one.horizons = {1, 10};
    EXPECT_EQ(results_csv(run_experiment(cfg, series)), results_csv(run_experiment(one, series)));
}

TEST(RunExperiment, NoiselessNextSecondIsPredictable)
{
    // A 240 s cycle with 25% green gives two transitions per cycle, so
    // persistence is wrong on 2 of 240 seconds. The training window spans
    // one full cycle so every phase appears among the training columns.
    ExperimentConfig cfg;
    cfg.synthetic.cycle_length = 240;
    cfg.synthetic.green_ratio = {0.25};
    cfg.synthetic.n_days = 3;
    cfg.synthetic.seed = 1;
    cfg.horizons = {1};
    cfg.per_day = {240};
    cfg.days_per_week = 2;
    cfg.weeks = 1;
    cfg.test_columns = 240;
    cfg.kernel.kind = KernelKind::linear;
    cfg.metrics = MetricSelection::mae;
    const auto result = run_experiment(cfg, load_series(cfg));
    ASSERT_EQ(result.rows.size(), 9u);
    for (const auto& r : result.rows) {
        if (r.method == "persistence" || r.method == "ekmc") {
            EXPECT_GE(r.value, 0.99) << r.method << " " << r.sensor_id;
        }
    }
}

TEST(RunExperiment, OutputsOnDisk)
{
    auto cfg = small_config();
    cfg.output_dir = scratch_dir("outputs").string();
    const auto result = run_experiment(cfg, load_series(cfg));
    write_experiment_outputs(cfg, result);
    const fs::path dir(cfg.output_dir);
    EXPECT_TRUE(fs::exists(dir / "results.csv"));
    EXPECT_TRUE(fs::exists(dir / "results.txt"));
    std::ifstream in(dir / "manifest.json");
    const auto m = nlohmann::json::parse(in);
    EXPECT_EQ(m.at("version"), kVersion);
    EXPECT_EQ(m.at("seed"), cfg.solver.seed);
    EXPECT_EQ(m.at("config_hash").get<std::string>().size(), 16u);
    fs::remove_all(dir);
}

TEST(Config, JsonRoundTrip)
{
    auto cfg = small_config();
    cfg.kernel.kind = KernelKind::polynomial;
    cfg.kernel.degree = 3;
    cfg.solver.lambda = 0.25;
    cfg.ensemble.rule = ThresholdRule::per_sensor;
    cfg.anchor = 1543700000;
    cfg.synthetic.green_ratio = {0.1, 0.2, 0.3};
    const auto back = experiment_from_json(to_json(cfg));
    EXPECT_EQ(to_json(back).dump(), to_json(cfg).dump());
    EXPECT_EQ(config_hash(back), config_hash(cfg));
    cfg.solver.seed = 9;
    EXPECT_NE(config_hash(back), config_hash(cfg));
}

TEST(Config, RejectsUnknownKeysAndBadValues)
{
    EXPECT_THROW(experiment_from_json(nlohmann::json::parse(R"({"solver": {"rnak": 3}})")), ConfigError);
    EXPECT_THROW(experiment_from_json(nlohmann::json::parse(R"({"solver": {"rank": "x"}})")), ConfigError);
    EXPECT_THROW(experiment_from_json(nlohmann::json::parse(R"({"kernel": {"kind": "tanh"}})")), ConfigError);
    const auto c = experiment_from_json(nlohmann::json::parse(R"({"window": {"horizons": [5]}, "jobs": 2})"));
    EXPECT_EQ(c.horizons, std::vector<int>{5});
    EXPECT_EQ(c.jobs, 2);
    EXPECT_EQ(c.per_day, (std::vector<int>{10, 60, 120, 300}));
    EXPECT_THROW(load_experiment_config("/nonexistent/config.json"), ConfigError);
}

TEST(DumpFeatures, TwentyFeatureColumnsAndRoundTrip)
{
    const auto cfg = small_config();
    const auto series = load_series(cfg);
    const auto anchor = default_anchor(series, 1);
    const auto cell = fit_cell(series, anchor, cfg.window(3, 1, 10), cfg.kernel, cfg.solver, cfg.ensemble);
    ASSERT_EQ(cfg.solver.rank, 20);
    const auto dir = scratch_dir("dump");
    dump_features({cell.kmc_factors.u_train, cell.kmc_factors.v_test, cell.kmc_raw, cell.truth}, dir);
    const Matrix v = read_matrix_csv(dir / "V_te.csv");
    EXPECT_EQ(v.cols(), 20);
    EXPECT_EQ(v.rows(), cfg.test_columns);
    EXPECT_EQ(read_matrix_csv(dir / "prediction.csv"), predict(cell.kmc_factors));
    EXPECT_EQ(read_matrix_csv(dir / "U_tr.csv"), cell.kmc_factors.u_train);
    EXPECT_EQ(read_matrix_csv(dir / "truth.csv"), cell.truth);
    fs::remove_all(dir);
}

TEST(DumpFeatures, ZeroFactors)
{
    const auto dir = scratch_dir("zero");
    FactorState f;
    f.u_train = Matrix::Zero(2, 3);
    f.v_test = Matrix::Zero(4, 3);
    dump_features({f.u_train, f.v_test, predict(f), Matrix::Zero(2, 4)}, dir);
    for (const char* name : {"V_te.csv", "U_tr.csv", "prediction.csv", "truth.csv"}) {
        const Matrix m = read_matrix_csv(dir / name);
        EXPECT_GT(m.size(), 0) << name;
        EXPECT_TRUE(m.isZero(0.0)) << name;
    }
    fs::remove_all(dir);
}

TEST(SavedModelFile, JsonRoundTrip)
{
    const auto cfg = small_config();
    const auto series = load_series(cfg);
    const auto cell =
        fit_cell(series, default_anchor(series, 1), cfg.window(3, 1, 10), cfg.kernel, cfg.solver, cfg.ensemble);
    const auto model = saved_model(cell);
    const auto back = saved_model_from_json(nlohmann::json::parse(to_json(model).dump()));
    EXPECT_EQ(back.kmc_raw, model.kmc_raw);
    EXPECT_EQ(back.ekmc_binary, model.ekmc_binary);
    EXPECT_EQ(back.sensor_ids, model.sensor_ids);
    EXPECT_EQ(back.target_times, model.target_times);
    EXPECT_EQ(back.epsilons, model.epsilons);
    const auto preds = prediction_series(back, back.ekmc_binary);
    ASSERT_EQ(preds.size(), 3u);
    EXPECT_EQ(preds[0].start(), model.target_times.front());
    EXPECT_THROW(saved_model_from_json(nlohmann::json::parse("{}")), ConfigError);
}

TEST(Persistence, UsesNewestLagSlice)
{
    WindowConfig w;
    w.n = 2;
    w.lag = 3;
    w.per_day = 1;
    w.test_columns = 2;
    Matrix x_te(6, 2);
    x_te << 0, 0, 0, 0, 1, 0, 1, 1, 0, 1, 1, 0;
    const JointProblem p(w, Matrix::Zero(2, 1), Matrix::Zero(6, 1), x_te);
    EXPECT_EQ(persistence_prediction(p), x_te.bottomRows(2));
}
