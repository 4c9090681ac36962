#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "activemargin/backtest.hpp"
#include "activemargin/errors.hpp"
#include "support.hpp"

using namespace activemargin;

namespace {

LoanOutcome fake(const std::string& id, int day, SystemKind kind, double m, double omega,
                 double cost, bool called = false, bool negative = false) {
    LoanOutcome o;
    o.stock_id = id;
    o.inception = std::chrono::sys_days(parse_iso_date("2020-01-01")) + std::chrono::days{day};
    o.system_kind = kind;
    o.system = MarginSystem{m, 0.1, omega, m * 10 - 0.1 * 5};
    o.p0 = 10;
    o.p0_collateral = 5;
    o.ledger.terms.horizon = 30;
    o.ledger.exit_day = 30;
    o.cost = cost;
    o.called = called;
    o.negative_return = negative;
    o.p_stock = 0.5 / (0.5 + o.system.q0);
    return o;
}

// Plain-text recomputation from the CSV dump: own parser, own statistics.
double q_interp(std::vector<double> v, double p) {
    std::sort(v.begin(), v.end());
    const double pos = p * double(v.size() - 1);
    const std::size_t lo = std::size_t(pos);
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    return v[lo] * (1 - (pos - lo)) + v[hi] * (pos - lo);
}

}  // namespace

TEST(Quantile, LinearInterpolation) {
    const std::vector<double> v{1, 2, 3, 4, 5};
    EXPECT_DOUBLE_EQ(quantile(v, 0.0), 1.0);
    EXPECT_DOUBLE_EQ(quantile(v, 0.5), 3.0);
    EXPECT_DOUBLE_EQ(quantile(v, 0.95), 4.8);
    EXPECT_DOUBLE_EQ(quantile(std::vector<double>{7}, 0.3), 7.0);
    EXPECT_THROW(quantile(std::vector<double>{}, 0.5), InvalidArgumentError);
}

TEST(TwelveStatistics, ConstantSample) {
    const std::vector<double> v(17, 0.42);
    for (double s : twelve_statistics(v)) EXPECT_DOUBLE_EQ(s, 0.42);
}

TEST(TwelveStatistics, OrderAndMonotone) {
    std::vector<double> v;
    for (int i = 0; i < 101; ++i) v.push_back(std::sin(i) * 10);
    const auto s = twelve_statistics(v);
    EXPECT_EQ(s[0], *std::min_element(v.begin(), v.end()));
    EXPECT_EQ(s[1], *std::max_element(v.begin(), v.end()));
    EXPECT_NEAR(s[6], q_interp(v, 0.5), 1e-12);
    for (std::size_t i = 4; i < 12; ++i) EXPECT_LE(s[i - 1], s[i]);
}

TEST(BuildReport, CrossStockMean) {
    std::vector<LoanOutcome> v;
    for (int d = 0; d < 4; ++d) {
        v.push_back(fake("A", d, SystemKind::deduced, 0.5, 1.2, 1.0));
        v.push_back(fake("A", d, SystemKind::required, 0.5, 1.3, 2.0, true));
        v.push_back(fake("B", d, SystemKind::deduced, 0.7, 1.4, 3.0));
        v.push_back(fake("B", d, SystemKind::required, 0.5, 1.3, 2.5));
    }
    const auto r = build_report(v, 0.05);
    ASSERT_EQ(r.stocks.size(), 2u);
    EXPECT_EQ(r.passing, 2u);
    EXPECT_DOUBLE_EQ(r.cost_deduced.rows[2][2], 2.0);  // mean row, mean column
    EXPECT_DOUBLE_EQ(r.initial_ratio.rows[2][2], 0.6);
    EXPECT_DOUBLE_EQ(r.initial_ratio.rows[2][0], 0.5);
    EXPECT_DOUBLE_EQ(r.initial_ratio.rows[2][1], 0.7);
    EXPECT_DOUBLE_EQ(r.call_counts[0][2], 2.0);  // A: 4 calls, B: 0
    EXPECT_DOUBLE_EQ(r.call_counts[1][2], 0.0);
    const double d95 = r.cost_deduced.rows[0][6], q95 = r.cost_required.rows[0][6];
    EXPECT_DOUBLE_EQ(r.cost_relative_difference[0], (d95 - q95) / q95);
}

TEST(BuildReport, FailingStocksLeaveTables) {
    std::vector<LoanOutcome> v;
    for (int d = 0; d < 10; ++d) {
        v.push_back(fake("A", d, SystemKind::deduced, 0.5, 1.2, 1.0, true, d == 0));
        v.push_back(fake("A", d, SystemKind::required, 0.5, 1.3, 1.0, true));
        v.push_back(fake("Z", d, SystemKind::deduced, 0.8, 1.2, 1.0));
        v.push_back(fake("Z", d, SystemKind::required, 0.5, 1.3, 1.0));
    }
    const auto r = build_report(v, 0.05);  // A: 1/10 negative, fails
    EXPECT_EQ(r.passing, 1u);
    EXPECT_FALSE(r.stocks[0].passes);
    EXPECT_DOUBLE_EQ(r.initial_ratio.rows[2][2], 0.8);
    EXPECT_DOUBLE_EQ(r.call_counts[0][1], 0.0);
    EXPECT_DOUBLE_EQ(r.mean_calls_required_all, 5.0);
}

TEST(BuildReport, EqualsRecomputationFromDump) {
    BacktestConfig cfg;
    cfg.window = 120;
    cfg.horizon = 10;
    cfg.loans_per_stock = 8;
    cfg.target_states = 12;
    const auto universe = generate_universe(77, 10, 140);
    const auto outcomes = run_backtest(universe, cfg, 2);
    const auto report = build_report(outcomes, cfg.cpnr_cap);

    amtest::TempDir dir("dump");
    write_outcomes_csv(outcomes, dir / "outcomes.csv");
    std::istringstream in(amtest::read_text(dir / "outcomes.csv"));
    std::string line;
    std::getline(in, line);
    std::vector<std::string> header;
    {
        std::stringstream hs(line);
        for (std::string f; std::getline(hs, f, ',');) header.push_back(f);
    }
    auto col = [&](const char* name) {
        return std::size_t(std::find(header.begin(), header.end(), name) - header.begin());
    };
    struct Acc {
        std::vector<double> m, omega, prop, cost_d, cost_r;
        int negatives = 0, calls_d = 0, calls_r = 0;
    };
    std::map<std::string, Acc> by;
    while (std::getline(in, line)) {
        std::vector<std::string> f;
        std::stringstream ls(line);
        for (std::string x; std::getline(ls, x, ',');) f.push_back(x);
        if (line.back() == ',') f.push_back("");
        auto& a = by[f[col("stock")]];
        const bool ded = f[col("system")] == "deduced";
        if (ded) {
            a.m.push_back(std::stod(f[col("m")]));
            a.omega.push_back(std::stod(f[col("omega")]));
            a.prop.push_back(std::stod(f[col("p_stock")]));
            a.cost_d.push_back(std::stod(f[col("cost")]));
            a.negatives += f[col("negative")] == "1";
            a.calls_d += f[col("called")] == "1";
        } else {
            a.cost_r.push_back(std::stod(f[col("cost")]));
            a.calls_r += f[col("called")] == "1";
        }
    }
    ASSERT_EQ(by.size(), 10u);
    std::vector<double> mean_m, q95_omega, max_prop, q50_cost, calls_d;
    for (auto& [id, a] : by) {
        if (a.negatives > 0.05 * double(a.m.size())) continue;
        double s = 0;
        for (double x : a.m) s += x;
        mean_m.push_back(s / double(a.m.size()));
        q95_omega.push_back(q_interp(a.omega, 0.95));
        max_prop.push_back(*std::max_element(a.prop.begin(), a.prop.end()));
        q50_cost.push_back(q_interp(a.cost_r, 0.5));
        calls_d.push_back(a.calls_d);
    }
    ASSERT_EQ(mean_m.size(), report.passing);
    ASSERT_GT(report.passing, 0u);
    auto mean = [](const std::vector<double>& v) {
        double s = 0;
        for (double x : v) s += x;
        return s / double(v.size());
    };
    EXPECT_NEAR(report.initial_ratio.rows[2][2], mean(mean_m), 1e-12);
    EXPECT_NEAR(report.initial_ratio.rows[2][3], q_interp(mean_m, 0.70), 1e-12);
    EXPECT_NEAR(report.maintenance_ratio.rows[11][6], q_interp(q95_omega, 0.95), 1e-12);
    EXPECT_NEAR(report.stock_proportion.rows[1][0],
                *std::min_element(max_prop.begin(), max_prop.end()), 1e-12);
    EXPECT_NEAR(report.cost_required.rows[6][4], q_interp(q50_cost, 0.8), 1e-12);
    EXPECT_NEAR(report.call_counts[1][8], q_interp(calls_d, 0.99), 1e-12);
}

TEST(OutcomesCsv, RoundTripRebuildsIdenticalReport) {
    BacktestConfig cfg;
    cfg.window = 100;
    cfg.horizon = 8;
    cfg.loans_per_stock = 5;
    const auto outcomes = run_backtest(generate_universe(3, 4, 120), cfg, 1);
    amtest::TempDir dir("rt");
    write_outcomes_csv(outcomes, dir / "outcomes.csv");
    const auto back = read_outcomes_csv(dir / "outcomes.csv");
    ASSERT_EQ(back.size(), outcomes.size());
    for (std::size_t i = 0; i < back.size(); ++i) {
        EXPECT_EQ(back[i].system, outcomes[i].system);
        EXPECT_EQ(back[i].cost, outcomes[i].cost);
        EXPECT_EQ(back[i].ledger.tau, outcomes[i].ledger.tau);
        EXPECT_EQ(back[i].inception, outcomes[i].inception);
    }
    const auto a = build_report(outcomes, 0.05);
    const auto b = build_report(back, 0.05);
    EXPECT_EQ(report_to_json(a).dump(2), report_to_json(b).dump(2));

    write_report(a, dir / "r1");
    write_report(b, dir / "r2");
    for (const char* f : {"report.json", "tables/table1_initial_margin.csv",
                          "tables/table4_costs.csv", "tables/table5_margin_calls.csv"})
        EXPECT_EQ(amtest::read_text(dir / "r1" / f), amtest::read_text(dir / "r2" / f)) << f;
    std::ostringstream text;
    print_report(a, text);
    EXPECT_NE(text.str().find("margin calls per stock"), std::string::npos);
}

TEST(OutcomesCsv, RejectsForeignFile) {
    amtest::TempDir dir("bad");
    amtest::write_text(dir / "x.csv", "date,close\n2020-01-01,1\n");
    EXPECT_THROW(read_outcomes_csv(dir / "x.csv"), CsvFormatError);
}
