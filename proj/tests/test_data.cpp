#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "ekmc/data.hpp"

using namespace ekmc;

namespace {

IngestResult ingest_text(const std::string& text, IngestOptions opts = {})
{
    std::istringstream in(text);
    return to_series(parse_event_log(in), opts);
}

}  // namespace

TEST(Ingest, ContiguousRows)
{
    const auto r = ingest_text("timestamp,sensor_id,occupancy\n100,a,0\n101,a,1\n102,a,1\n");
    ASSERT_EQ(r.series.size(), 1u);
    EXPECT_EQ(r.series[0], OccupancySeries("a", 100, {0, 1, 1}));
    EXPECT_TRUE(r.repairs.empty());
}

TEST(Ingest, ShortGapIsForwardFilled)
{
    const auto r = ingest_text("timestamp,sensor_id,occupancy\n100,a,0\n102,a,1\n");
    ASSERT_EQ(r.series.size(), 1u);
    EXPECT_EQ(r.series[0].values(), (std::vector<std::uint8_t>{0, 0, 1}));
    ASSERT_EQ(r.repairs.size(), 1u);
    EXPECT_EQ(r.repairs[0].first_missing, 101);
    EXPECT_EQ(r.repairs[0].last_missing, 101);
    EXPECT_EQ(r.repairs[0].fill_value, 0);
}

TEST(Ingest, LongGapNamesSpan)
{
    try {
        ingest_text("timestamp,sensor_id,occupancy\n100,a,1\n111,a,1\n");
        FAIL() << "expected a coverage error";
    } catch (const CoverageError& e) {
        EXPECT_NE(std::string(e.what()).find("from t=101 to t=110"), std::string::npos) << e.what();
    }
    IngestOptions wide;
    wide.max_gap = 10;
    EXPECT_EQ(ingest_text("timestamp,sensor_id,occupancy\n100,a,1\n111,a,1\n", wide).series[0].size(), 12u);
}

TEST(Ingest, SortsAndSplitsSensors)
{
    const auto r = ingest_text("timestamp,sensor_id,occupancy\n6,b,1\n5,b,0\n5,a,1\n6,a,1\n6,a,1\n");
    ASSERT_EQ(r.series.size(), 2u);
    EXPECT_EQ(r.series[0], OccupancySeries("a", 5, {1, 1}));
    EXPECT_EQ(r.series[1], OccupancySeries("b", 5, {0, 1}));
    EXPECT_THROW(ingest_text("timestamp,sensor_id,occupancy\n5,a,1\n5,a,0\n"), DataError);
}

TEST(Ingest, ParseErrorsCarryLineNumbers)
{
    auto line_of = [](const std::string& text) -> std::size_t {
        try {
            ingest_text(text);
        } catch (const ParseError& e) {
            return e.line();
        }
        return 0;
    };
    EXPECT_EQ(line_of("time,sensor,occ\n1,a,0\n"), 1u);
    EXPECT_EQ(line_of("timestamp,sensor_id,occupancy\n1,a,0\nxx,a,1\n"), 3u);
    EXPECT_EQ(line_of("timestamp,sensor_id,occupancy\n1,a,0\n2,a\n"), 3u);
    EXPECT_EQ(line_of("timestamp,sensor_id,occupancy\n1,a,0\n\n3,,1\n"), 4u);
    EXPECT_EQ(line_of(""), 1u);
    EXPECT_THROW(ingest_text("timestamp,sensor_id,occupancy\n1,a,3\n"), DataError);
}

TEST(Ingest, RoundTripsGapFreeLog)
{
    SyntheticSpec spec;
    spec.n_days = 1;
    spec.flip_noise = 0.2;
    const auto series = generate_synthetic(spec);
    std::stringstream first;
    write_csv(first, series);
    const auto back = to_series(parse_event_log(first));
    EXPECT_EQ(back.series, series);
    std::stringstream second;
    write_csv(second, back.series);
    EXPECT_EQ(first.str(), second.str());
}

TEST(Ingest, ReadsFromDisk)
{
    const auto path = std::filesystem::temp_directory_path() / "ekmc_test_ingest.csv";
    {
        std::ofstream out(path);
        out << "timestamp,sensor_id,occupancy\r\n7,x,1\r\n8,x,0\r\n";
    }
    const auto r = ingest_csv(path.string());
    EXPECT_EQ(r.series.at(0), OccupancySeries("x", 7, {1, 0}));
    std::filesystem::remove(path);
    EXPECT_THROW(ingest_csv(path.string()), DataError);
}

TEST(Synthetic, NoiselessSquareWave)
{
    SyntheticSpec spec;
    spec.n_sensors = 2;
    spec.n_days = 1;
    spec.cycle_length = 40;
    spec.green_ratio = {0.25};
    spec.offset = 3;
    const auto s = generate_synthetic(spec);
    ASSERT_EQ(s.size(), 2u);
    for (int j = 0; j < 2; ++j) {
        const auto& v = s[static_cast<std::size_t>(j)].values();
        ASSERT_EQ(v.size(), static_cast<std::size_t>(kSecondsPerDay));
        for (std::size_t i = 0; i < v.size(); ++i) {
            const auto phase = (static_cast<long long>(i) + 3 * j) % 40;
            ASSERT_EQ(v[i], phase < 10 ? 1 : 0) << "sensor " << j << " t " << i;
        }
    }
    EXPECT_EQ(s[0].sensor_id(), "s0");
    EXPECT_EQ(s[1].sensor_id(), "s1");
}

TEST(Synthetic, PeriodicAndImbalanced)
{
    SyntheticSpec spec;
    spec.n_days = 2;
    spec.cycle_length = 120;
    spec.green_ratio = {0.1};
    for (const auto& s : generate_synthetic(spec)) {
        const auto& v = s.values();
        for (std::size_t i = 0; i + 120 < v.size(); ++i) ASSERT_EQ(v[i], v[i + 120]);
        for (std::size_t c = 0; c + 120 <= v.size(); c += 120) {
            ASSERT_EQ(std::count(v.begin() + c, v.begin() + c + 120, 1), 12);
        }
    }
}

TEST(Synthetic, SeededAndNoisy)
{
    SyntheticSpec spec;
    spec.n_days = 1;
    spec.flip_noise = 0.05;
    spec.seed = 5;
    EXPECT_EQ(generate_synthetic(spec), generate_synthetic(spec));
    auto other = spec;
    other.seed = 6;
    EXPECT_NE(generate_synthetic(spec), generate_synthetic(other));

    spec.flip_noise = 0.0;
    const auto clean = generate_synthetic(spec);
    spec.flip_noise = 0.05;
    const auto noisy = generate_synthetic(spec);
    std::size_t flips = 0;
    for (std::size_t i = 0; i < clean[0].size(); ++i) flips += clean[0].values()[i] != noisy[0].values()[i];
    EXPECT_NEAR(static_cast<double>(flips) / clean[0].size(), 0.05, 0.005);
}

TEST(Synthetic, RejectsBadSpec)
{
    SyntheticSpec spec;
    spec.green_ratio = {0.1, 0.2};
    EXPECT_THROW(generate_synthetic(spec), ConfigError);
    spec.green_ratio = {1.5};
    EXPECT_THROW(generate_synthetic(spec), ConfigError);
}
