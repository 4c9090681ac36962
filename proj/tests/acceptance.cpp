// Acceptance suite: one PASS/FAIL line per criterion. Exit status is nonzero
// when any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>

#include <json.hpp>

#include "activemargin/backtest.hpp"
#include "activemargin/cli.hpp"
#include "activemargin/errors.hpp"
#include "oracles/paper_formula.hpp"
#include "oracles/selection.hpp"
#include "support.hpp"

using namespace activemargin;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
    bool pass;
    std::string detail;
};

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v) {
    std::ostringstream s;
    s.precision(3);
    s << v;
    return s.str();
}

int run_cli_args(std::vector<std::string> args, std::string& out, std::string& err) {
    args.insert(args.begin(), "activemargin");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream o, e;
    const int code = run_cli(static_cast<int>(argv.size()), argv.data(), o, e);
    out = o.str();
    err = e.str();
    return code;
}

// 1 ------------------------------------------------------------------------
Outcome exact_matches_brute_force() {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(1001);
    double worst = 0.0;
    int instances = 0;
    while (instances < 600) {
        const std::size_t n = 2 + rng() % 4;
        const std::size_t T = 1 + rng() % 5;
        const std::size_t h = rng() % n;
        const auto chain = amtest::chain_from_rows(amtest::random_stochastic(rng, n));
        const auto k = amtest::random_thresholds(rng, n, T);
        const auto a = amtest::random_thresholds(rng, n, T);
        const auto ex = CpnrEvaluator(chain, h, T).exact(k, a);
        const auto bf = brute_force(chain, h, k, a);
        worst = std::max({worst, std::abs(ex.prob_c - bf.prob_c), std::abs(ex.prob_nc - bf.prob_nc),
                          std::abs(ex.cpnr - bf.cpnr)});
        ++instances;
    }
    const double secs = seconds_since(t0);
    return {worst <= 1e-12 && secs < 60.0,
            std::to_string(instances) + " instances, max |diff| " + fmt(worst) + ", " +
                fmt(secs) + " s"};
}

// 2 ------------------------------------------------------------------------
Outcome paper_matches_literal_formula() {
    std::mt19937_64 rng(2002);
    double worst = 0.0;
    int instances = 0;
    while (instances < 600) {
        const std::size_t n = 2 + rng() % 7;
        const std::size_t T = 1 + rng() % 6;
        const std::size_t h = rng() % n;
        const auto rows = amtest::random_stochastic(rng, n);
        const auto chain = amtest::chain_from_rows(rows);
        const auto k = amtest::random_thresholds(rng, n, T);
        const auto a = amtest::random_thresholds(rng, n, T);
        const auto got = CpnrEvaluator(chain, h, T).paper(k, a);
        const auto want = oracle::paper_formula(rows, h + 1, k, a);
        worst = std::max({worst, std::abs(got.prob_c - want.prob_c),
                          std::abs(got.prob_nc - want.prob_nc)});
        for (std::size_t t = 0; t < T; ++t)
            worst = std::max(worst, std::abs(got.per_day_call[t] - want.per_day_call[t]));
        ++instances;
    }
    return {worst <= 1e-12, std::to_string(instances) + " instances, max |diff| " + fmt(worst)};
}

// 3 ------------------------------------------------------------------------
Outcome zero_rule() {
    std::mt19937_64 rng(3003);
    int instances = 0, violations = 0;
    for (int rep = 0; rep < 200; ++rep) {
        const std::size_t n = 2 + rng() % 5;
        const auto chain = amtest::chain_from_rows(amtest::random_stochastic(rng, n), 10.0);
        LoanTerms t;
        t.p0 = 10.0 + 0.01 * static_cast<double>(rng() % 100);
        t.omega = 1.0 + 0.01 * static_cast<double>(rng() % 51);
        t.q0 = t.omega * t.p0 - 9.5 + 0.1 * static_cast<double>(rng() % 5);  // threshold < 10
        t.horizon = 1 + rng() % 5;
        const std::size_t h = rng() % n;
        for (auto m : {CpnrMethod::paper_recursion, CpnrMethod::exact_first_passage,
                       CpnrMethod::brute_force}) {
            const auto r = cpnr(chain, t, h, m);
            bool zero_k = true;
            for (auto k : r.k) zero_k = zero_k && k == 0;
            if (!zero_k || r.prob_c != 0.0 || r.cpnr != 0.0) ++violations;
            ++instances;
        }
    }
    return {violations == 0,
            std::to_string(instances) + " evaluations, " + std::to_string(violations) + " violations"};
}

// 4 ------------------------------------------------------------------------
Outcome ledger_identity() {
    std::mt19937_64 rng(4004);
    std::normal_distribution<double> z;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double worst = 0.0;
    int mismatches = 0, paths = 0, calls = 0;
    for (int rep = 0; rep < 2000; ++rep) {
        LoanTerms t;
        t.p0 = 5.0 + 45.0 * u(rng);
        t.p0_collateral = 5.0 + 45.0 * u(rng);
        t.delta = u(rng);
        t.q0 = 0.8 * t.p0 * u(rng);
        t.omega = 1.0 + 0.5 * u(rng);
        t.r = t.loan_rate = 0.0005 * u(rng);
        t.horizon = 1 + rng() % 30;
        std::vector<double> p(t.horizon), c(t.horizon);
        double x = t.p0, y = t.p0_collateral;
        const double vol = 0.01 + 0.05 * u(rng);
        for (std::size_t i = 0; i < t.horizon; ++i) {
            p[i] = x *= std::exp(vol * z(rng) - 0.005);
            c[i] = y *= std::exp(vol * z(rng));
        }
        const auto l = run_ledger(t, p, c);
        for (std::size_t i = 1; i <= t.horizon; ++i) {
            const double lhs = t.q0 * std::pow(1.0 + t.r, static_cast<double>(i));
            worst = std::max(worst, std::abs(lhs - (l.sigma[i - 1] + l.remaining[i - 1])));
        }
        if (call_event(t, p, c) != l.called()) ++mismatches;
        calls += l.called();
        ++paths;
    }
    return {worst <= 1e-12 && mismatches == 0,
            std::to_string(paths) + " paths (" + std::to_string(calls) +
                " called), max identity error " + fmt(worst) + ", predicate mismatches " +
                std::to_string(mismatches)};
}

// 5 ------------------------------------------------------------------------
Outcome selection_matches_double_loop() {
    std::mt19937_64 rng(5005);
    int sets = 0, mismatches = 0, tie_sets = 0;
    for (int rep = 0; rep < 300; ++rep) {
        std::vector<MarginPoint> pts;
        const bool symmetric = rep % 3 == 0;
        const std::size_t size = 1 + rng() % (symmetric ? 100 : 200);
        for (std::size_t i = 0; i < size; ++i) {
            MarginPoint p{(30 + rng() % 51) / 100.0, 0.014 * static_cast<double>(rng() % 51),
                          (100 + rng() % 51) / 100.0, 0.0, 0.0};
            pts.push_back(p);
            if (symmetric) {
                // Mirror through (0.55, 0.35, 1.25): every point has a twin at
                // the same distance from the centroid.
                pts.push_back({std::round((1.10 - p.m) * 100) / 100.0, 0.70 - p.delta,
                               std::round((2.50 - p.omega) * 100) / 100.0, 0.0, 0.0});
            }
        }
        const auto got = select_deduced(pts);
        const auto want = oracle::select_by_double_loop(pts, kSelectionTieTolerance);
        // Count sets where the minimum is shared by distinct points.
        std::vector<double> f(pts.size(), 0.0);
        for (std::size_t i = 0; i < pts.size(); ++i)
            for (const auto& q : pts)
                f[i] += std::pow(pts[i].m - q.m, 2) + std::pow(pts[i].delta - q.delta, 2) +
                        std::pow(pts[i].omega - q.omega, 2);
        const double best = *std::min_element(f.begin(), f.end());
        std::size_t at_min = 0;
        for (std::size_t i = 0; i < pts.size(); ++i)
            if (f[i] <= best + kSelectionTieTolerance && !(pts[i] == want)) ++at_min;
        tie_sets += at_min > 0;
        mismatches += !(got == want);
        ++sets;
    }
    return {mismatches == 0 && tie_sets > 0,
            std::to_string(sets) + " sets (" + std::to_string(tie_sets) + " with ties), " +
                std::to_string(mismatches) + " mismatches"};
}

// 6, 7, 9 share the full synthetic run ------------------------------------
struct FullRun {
    bool ok = false;
    std::string error;
    double seconds = 0.0;
    std::filesystem::path dir;
};

FullRun full_backtest(const std::filesystem::path& dir, int workers) {
    FullRun run;
    run.dir = dir;
    const auto t0 = Clock::now();
    std::string out, err;
    const int code = run_cli_args({"backtest", "--synthetic-stocks", "20", "--days", "1100",
                                   "--seed", "2024", "--workers", std::to_string(workers),
                                   "--out", dir.string(), "--quiet"},
                                  out, err);
    run.seconds = seconds_since(t0);
    run.ok = code == 0;
    run.error = err;
    return run;
}

Outcome directional_claim(const FullRun& run) {
    if (!run.ok) return {false, "backtest failed: " + run.error};
    const auto j = nlohmann::json::parse(amtest::read_text(run.dir / "report.json"));
    const double req = j["mean_calls_required_all"].get<double>();
    const double ded = j["mean_calls_deduced_all"].get<double>();
    const auto stocks = j["stock_count"].get<std::size_t>();
    const auto passing = j["passing"].get<std::size_t>();
    const double share = static_cast<double>(passing) / static_cast<double>(stocks);
    const bool pass = stocks >= 20 && ded < req && share >= 0.8 && run.seconds < 15 * 60;
    return {pass, std::to_string(stocks) + " pairs x 1100 days: mean calls deduced " + fmt(ded) +
                      " vs required " + fmt(req) + "; passing " + std::to_string(passing) + "/" +
                      std::to_string(stocks) + "; " + fmt(run.seconds) + " s single-threaded; " +
                      std::to_string(j["fallbacks"].get<std::size_t>()) + " fallbacks"};
}

Outcome determinism(const FullRun& a, const FullRun& b) {
    if (!a.ok || !b.ok) return {false, "backtest failed: " + a.error + b.error};
    const bool same_outcomes =
        amtest::read_text(a.dir / "outcomes.csv") == amtest::read_text(b.dir / "outcomes.csv");
    const bool same_report =
        amtest::read_text(a.dir / "report.json") == amtest::read_text(b.dir / "report.json");
    return {same_outcomes && same_report,
            std::string("workers 1 vs 4: outcomes.csv ") + (same_outcomes ? "identical" : "DIFFER") +
                ", report.json " + (same_report ? "identical" : "DIFFER") + " (" +
                fmt(b.seconds) + " s)"};
}

// 8 ------------------------------------------------------------------------
Outcome stochasticity() {
    const auto universe = generate_universe(2024, 20, 1100);
    double worst = 0.0;
    std::size_t chains = 0, powers = 0;
    for (const auto& pair : universe) {
        const auto grid = make_grid(pair.purchased.closes()[1000], pair.collateral.closes()[1000]);
        for (std::size_t t0 : {800u, 900u, 999u}) {
            for (std::size_t s = 0; s < grid.delta_values.size(); s += 10) {
                std::vector<double> values;
                fill_index(pair, grid.delta_values[s], t0 - 800, 800, values);
                const auto chain = estimate(values, default_g(values, 40));
                worst = std::max(worst, max_row_sum_error(chain.p1()));
                ++chains;
                for (std::size_t d = 1; d <= 30; ++d) {
                    worst = std::max(worst, max_row_sum_error(chain.power(d)));
                    ++powers;
                }
            }
        }
    }
    // A violation must abort with the named error.
    bool named = false;
    Matrix bad(2, 2);
    bad(0, 0) = 0.7;
    bad(0, 1) = 0.3 + 1e-6;
    bad(1, 0) = 1.0;
    try {
        MarkovChain(amtest::unit_states(2), {{0, 0}, {0, 0}}, bad);
    } catch (const StochasticityError&) {
        named = true;
    }
    return {worst <= kStochasticTolerance && named,
            std::to_string(chains) + " chains, " + std::to_string(powers) +
                " cached powers, max row-sum error " + fmt(worst) +
                (named ? "; injected violation raised StochasticityError"
                       : "; injected violation NOT reported")};
}

// 9 ------------------------------------------------------------------------
Outcome report_round_trip(const FullRun& run, const std::filesystem::path& rebuilt) {
    if (!run.ok) return {false, "backtest failed: " + run.error};
    std::string out, err;
    if (run_cli_args({"report", "--outcomes", (run.dir / "outcomes.csv").string(), "--out",
                      rebuilt.string(), "--json"},
                     out, err) != 0)
        return {false, "report failed: " + err};
    bool identical = true;
    for (const char* f : {"report.json", "tables/table1_initial_margin.csv",
                          "tables/table2_maintenance_margin.csv",
                          "tables/table3_stock_proportion.csv", "tables/table4_costs.csv",
                          "tables/table5_margin_calls.csv"})
        identical = identical && amtest::read_text(run.dir / f) == amtest::read_text(rebuilt / f);

    const auto j = nlohmann::json::parse(amtest::read_text(rebuilt / "report.json"));
    bool rows_ok = true, monotone = true;
    for (const char* t : {"initial_margin_ratio", "maintenance_margin_ratio", "stock_proportion",
                          "cost_deduced", "cost_required"}) {
        const auto& rows = j["tables"][t]["rows"];
        rows_ok = rows_ok && rows.size() == 12;
        for (const char* name : kStatisticNames) rows_ok = rows_ok && rows.contains(name);
        if (!rows_ok) break;
        for (std::size_t col = 0; col < 7; ++col) {
            if (rows["minimum"][col].is_null()) continue;
            double prev = rows["minimum"][col].get<double>();
            for (std::size_t s = 3; s < 12; ++s) {
                const double v = rows[kStatisticNames[s]][col].get<double>();
                monotone = monotone && v >= prev - 1e-12;
                prev = v;
            }
            monotone = monotone && rows["maximum"][col].get<double>() >= prev - 1e-12;
        }
    }
    return {identical && rows_ok && monotone,
            std::string("rebuilt report ") + (identical ? "byte-identical" : "DIFFERS") +
                "; 12 rows per table " + (rows_ok ? "present" : "MISSING") + "; quantile rows " +
                (monotone ? "monotone" : "NOT monotone")};
}

}  // namespace

int main() {
    int failures = 0;
    auto report = [&](int id, const std::string& name, const std::function<Outcome()>& fn) {
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failures += !o.pass;
        std::cout << (o.pass ? "PASS" : "FAIL") << "  criterion " << id << "  " << name << ": "
                  << o.detail << std::endl;
    };

    report(1, "exact first passage equals brute force", exact_matches_brute_force);
    report(2, "recursion equals literal formula", paper_matches_literal_formula);
    report(3, "zero rule", zero_rule);
    report(4, "ledger identity and call predicate", ledger_identity);
    report(5, "selection equals double-loop argmin", selection_matches_double_loop);

    amtest::TempDir dir("acceptance");
    FullRun serial, parallel;
    report(6, "directional backtest claim", [&] {
        serial = full_backtest(dir / "workers1", 1);
        return directional_claim(serial);
    });
    report(7, "determinism across worker counts", [&] {
        parallel = full_backtest(dir / "workers4", 4);
        return determinism(serial, parallel);
    });
    report(8, "stochasticity", stochasticity);
    report(9, "report round-trip", [&] { return report_round_trip(serial, dir / "rebuilt"); });

    std::cout << (failures == 0 ? "ALL CRITERIA PASS" : std::to_string(failures) + " FAILED")
              << std::endl;
    return failures == 0 ? 0 : 1;
}
