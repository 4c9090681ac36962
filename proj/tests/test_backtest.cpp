#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <sstream>

#include "activemargin/backtest.hpp"
#include "activemargin/errors.hpp"
#include "support.hpp"

using namespace activemargin;

namespace {

PricePair pair_from(const std::vector<double>& p, const std::vector<double>& c,
                    const std::string& id = "T") {
    std::vector<Date> dates;
    Date d = parse_iso_date("2015-03-02");
    for (std::size_t i = 0; i < p.size(); ++i) {
        dates.push_back(d);
        d = std::chrono::sys_days(d) + std::chrono::days{1};
    }
    return PricePair{PriceSeries(id, dates, p), PriceSeries(id + "C", dates, c)};
}

BacktestConfig small_config() {
    BacktestConfig cfg;
    cfg.window = 120;
    cfg.horizon = 10;
    cfg.loans_per_stock = 6;
    cfg.stride = 2;
    cfg.target_states = 15;
    return cfg;
}

LoanOutcome outcome_with(double p0, double q0, double delta, double p0c, double r, double R,
                         std::size_t exit_day) {
    LoanOutcome o;
    o.ledger.terms.p0 = p0;
    o.ledger.terms.q0 = q0;
    o.ledger.terms.delta = delta;
    o.ledger.terms.p0_collateral = p0c;
    o.ledger.terms.r = r;
    o.ledger.terms.loan_rate = R;
    o.ledger.exit_day = exit_day;
    return o;
}

std::string csv_of(const std::vector<LoanOutcome>& v) {
    amtest::TempDir dir("csv");
    write_outcomes_csv(v, dir / "o.csv");
    return amtest::read_text(dir / "o.csv");
}

}  // namespace

TEST(Config, MinLength) {
    BacktestConfig cfg;
    EXPECT_EQ(cfg.min_length(), 800u + 199u + 30u + 1u);
    cfg.stride = 0;
    EXPECT_THROW(cfg.validate(), InvalidArgumentError);
}

TEST(LoanCost, ZeroRatesAndWorkedValue) {
    EXPECT_EQ(loan_cost(outcome_with(100, 50, 0.5, 10, 0, 0, 30)), 0.0);
    const double g = std::pow(1.0001, 30) - 1.0;
    EXPECT_NEAR(loan_cost(outcome_with(100, 50, 0.5, 10, 0.0001, 0.0001, 30)), 155.0 * g, 1e-12);
    EXPECT_NEAR(155.0 * g, 0.4657, 1e-4);
    EXPECT_GT(loan_cost(outcome_with(100, 0, 0, 10, 0, 0.0001, 1)), 0.0);
}

TEST(StockPasses, BoundaryIsInclusive) {
    auto make = [](std::size_t negatives) {
        std::vector<LoanOutcome> v(200);
        for (std::size_t i = 0; i < negatives; ++i) v[i].negative_return = true;
        return v;
    };
    EXPECT_TRUE(stock_passes(make(0), 0.05));
    EXPECT_TRUE(stock_passes(make(10), 0.05));
    EXPECT_FALSE(stock_passes(make(11), 0.05));
}

TEST(RunStock, ConstantPricesNeverCall) {
    const auto pair = pair_from(std::vector<double>(150, 20.0), std::vector<double>(150, 8.0));
    const auto out = run_stock(pair, small_config());
    ASSERT_EQ(out.size(), 12u);
    for (const auto& o : out) {
        EXPECT_FALSE(o.called);
        EXPECT_FALSE(o.negative_return);
        EXPECT_EQ(o.ledger.exit_day, 10u);
    }
    // A constant window cannot form a chain, so every deduced slot falls back.
    EXPECT_EQ(std::count_if(out.begin(), out.end(), [](auto& o) { return o.fallback; }), 6);
    EXPECT_EQ(margin_call_count(out, SystemKind::required), 0u);
}

TEST(RunStock, CrashEveryDayCallsEveryLoan) {
    std::vector<double> p;
    double x = 1e6;
    for (int i = 0; i < 40; ++i) p.push_back(x *= 0.1);
    BacktestConfig cfg;
    cfg.window = 20;
    cfg.horizon = 3;
    cfg.loans_per_stock = 5;
    const auto out = run_stock(pair_from(p, std::vector<double>(40, 1.0)), cfg);
    for (const auto& o : out) {
        EXPECT_TRUE(o.called);
        EXPECT_EQ(*o.ledger.tau, 1u);
    }
    EXPECT_EQ(margin_call_count(out, SystemKind::required), 5u);
    EXPECT_EQ(margin_call_count(out, SystemKind::deduced), 5u);
}

TEST(RunStock, HandCountedCrossings) {
    // Window prices wander between 90 and 110; then the loans at rows 20..24
    // (P0 = 100, 100, 79, 100, 100) see the marked closes over two days.
    // Required system with cash only: call when P_i <= 0.8 P0.
    std::vector<double> p{95, 103, 91, 108, 99, 110, 94, 101, 97, 106,
                          92, 104, 100, 98, 109, 93, 105, 96, 102, 107};
    for (double v : {100.0, 100.0, 79.0, 100.0, 100.0, 100.0, 50.0}) p.push_back(v);
    BacktestConfig cfg;
    cfg.window = 20;
    cfg.horizon = 2;
    cfg.loans_per_stock = 5;
    cfg.r = cfg.loan_rate = 0.0;
    cfg.required_delta = RequiredDeltaPolicy::cash;
    const auto out = run_stock(pair_from(p, std::vector<double>(p.size(), 30.0)), cfg);
    std::vector<bool> called;
    for (const auto& o : out)
        if (o.system_kind == SystemKind::required) called.push_back(o.called);
    EXPECT_EQ(called, (std::vector<bool>{true, true, false, false, true}));
    EXPECT_EQ(margin_call_count(out, SystemKind::required), 3u);
}

TEST(RunStock, InsufficientData) {
    const auto pair = pair_from(std::vector<double>(50, 1.0), std::vector<double>(50, 1.0));
    EXPECT_THROW(run_stock(pair, small_config()), InsufficientDataError);
}

TEST(RunBacktest, OrderAndWorkerIndependence) {
    auto universe = generate_universe(13, 3, 150);
    std::swap(universe[0], universe[2]);
    const auto cfg = small_config();
    const auto one = run_backtest(universe, cfg, 1);
    const auto three = run_backtest(universe, cfg, 3);
    ASSERT_EQ(one.size(), 2u * 3u * 6u);
    EXPECT_EQ(csv_of(one), csv_of(three));
    EXPECT_EQ(csv_of(one), csv_of(run_backtest(universe, cfg, 1)));
    for (std::size_t i = 0; i < one.size(); ++i) {
        EXPECT_EQ(one[i].system_kind, i % 2 ? SystemKind::required : SystemKind::deduced);
        if (i + 1 < one.size()) EXPECT_LE(one[i].stock_id, one[i + 1].stock_id);
    }
    EXPECT_EQ(one.front().stock_id, "S0001");
}

TEST(RunBacktest, RequiredSystemShape) {
    const auto universe = generate_universe(2, 1, 150);
    const auto out = run_backtest(universe, small_config(), 1);
    for (std::size_t i = 0; i < out.size(); i += 2) {
        const auto& ded = out[i];
        const auto& req = out[i + 1];
        EXPECT_EQ(req.system.m, 0.5);
        EXPECT_EQ(req.system.omega, 1.3);
        EXPECT_GE(req.system.q0, 0.0);
        EXPECT_LE(req.system.delta, ded.system.delta);
        EXPECT_EQ(ded.inception, req.inception);
        if (!ded.fallback) EXPECT_LE(ded.system.omega, 1.0 + ded.system.m + 1e-12);
        EXPECT_NEAR(ded.p_stock,
                    ded.system.delta * ded.p0_collateral /
                        (ded.system.delta * ded.p0_collateral + ded.system.q0),
                    1e-15);
        EXPECT_NEAR(ded.cost, loan_cost(ded), 0.0);
    }
}
