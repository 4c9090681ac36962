#pragma once

// Out-of-sample protocol: for every loan date, estimate on the preceding
// window, derive the deduced system, and run it next to the required
// (50% / 130%) system over the following horizon.

#include <array>
#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "activemargin/margin.hpp"
#include "activemargin/marketdata.hpp"

namespace activemargin {

enum class RequiredDeltaPolicy {
    deduced,  // same collateral share as the deduced system at that date
    cash,     // delta = 0
};

struct BacktestConfig {
    std::size_t window = 800;
    std::size_t horizon = 30;
    std::size_t loans_per_stock = 200;
    std::size_t stride = 1;
    double cpnr_cap = 0.05;
    std::size_t g = 0;  // 0: roughly 40 states per window
    std::size_t target_states = 40;
    CpnrMethod method = CpnrMethod::paper_recursion;
    double r = 0.0001;
    double loan_rate = 0.0001;
    double required_m = kRequiredInitialRatio;
    double required_omega = kRequiredMaintenanceRatio;
    RequiredDeltaPolicy required_delta = RequiredDeltaPolicy::deduced;
    StateOptions states;

    /// window + (loans - 1) * stride + horizon + 1; 1030 at the defaults.
    std::size_t min_length() const;
    SearchConfig search_config() const;
    void validate() const;
};

enum class SystemKind { deduced, required };
std::string_view to_string(SystemKind kind);

struct LoanOutcome {
    std::string stock_id;
    Date inception{};
    SystemKind system_kind = SystemKind::deduced;
    MarginSystem system;
    double p0 = 0.0;
    double p0_collateral = 0.0;
    /// Full day-by-day arrays only when produced by run_stock; a reloaded
    /// outcome carries terms, tau, tau_star, exit_day and the return.
    LoanLedger ledger;
    bool called = false;
    bool negative_return = false;
    double cost = 0.0;
    double p_stock = 0.0;  // delta P0' / (delta P0' + Q0)
    bool fallback = false;  // deduced slot filled by the required system
};

/// Loan interest plus forgone risk-free interest on the posted collateral:
///   P0 ((1+R)^d - 1) + (Q0 + delta P0') ((1+r)^d - 1), d = holding days.
double loan_cost(const LoanOutcome& outcome);

/// 2 * loans_per_stock outcomes, per date the deduced loan then the required
/// one. Loan dates run on up to `workers` OpenMP threads.
std::vector<LoanOutcome> run_stock(const PricePair& pair, const BacktestConfig& config,
                                   int workers = 1);

/// All stocks, merged in (stock_id, date, system) order.
std::vector<LoanOutcome> run_backtest(std::span<const PricePair> pairs,
                                      const BacktestConfig& config, int workers = 1);

/// Negative-return frequency of the outcomes at or below the cap.
bool stock_passes(std::span<const LoanOutcome> deduced_outcomes, double cpnr_cap);

std::size_t margin_call_count(std::span<const LoanOutcome> outcomes, SystemKind kind);

// ---------------------------------------------------------------------------
// Reporting

inline constexpr std::array<const char*, 12> kStatisticNames = {
    "minimum", "maximum", "mean", "q20", "q30", "q40", "q50", "q60", "q70", "q80", "q90", "q95"};
inline constexpr std::array<const char*, 7> kCrossStockColumns = {"min", "max", "mean", "q70",
                                                                  "q80", "q90", "q95"};
inline constexpr std::array<const char*, 9> kCallCountColumns = {
    "min", "max", "mean", "q30", "q50", "q80", "q90", "q95", "q99"};

/// Linear interpolation between order statistics: position (N - 1) p.
double quantile(std::span<const double> sorted, double p);

/// min, max, mean and the q20..q95 quantiles, in kStatisticNames order.
std::array<double, 12> twelve_statistics(std::span<const double> values);

struct QuantileTable {
    std::string name;
    /// rows[statistic][column] over passing stocks (kCrossStockColumns).
    std::array<std::array<double, 7>, 12> rows{};
};

struct StockSummary {
    std::string id;
    std::size_t loans = 0;
    std::size_t negatives_deduced = 0;
    std::size_t negatives_required = 0;
    double negative_frequency = 0.0;
    bool passes = false;
    std::size_t fallbacks = 0;
    std::size_t calls_required = 0;
    std::size_t calls_deduced = 0;
    std::array<double, 12> initial_ratio{};
    std::array<double, 12> maintenance_ratio{};
    std::array<double, 12> stock_proportion{};
    std::array<double, 12> cost_deduced{};
    std::array<double, 12> cost_required{};
};

struct BacktestReport {
    double cpnr_cap = 0.05;
    std::vector<StockSummary> stocks;  // sorted by id
    std::size_t passing = 0;
    QuantileTable initial_ratio;
    QuantileTable maintenance_ratio;
    QuantileTable stock_proportion;
    QuantileTable cost_deduced;
    QuantileTable cost_required;
    /// (deduced - required) / required at the q95 column, per statistic row.
    std::array<double, 12> cost_relative_difference{};
    /// rows 0 = required, 1 = deduced; columns kCallCountColumns.
    std::array<std::array<double, 9>, 2> call_counts{};
    double mean_calls_required_all = 0.0;  // over every stock, passing or not
    double mean_calls_deduced_all = 0.0;
    std::size_t fallbacks = 0;
};

/// Pure function of the outcome set. Cross-stock tables use passing stocks only.
BacktestReport build_report(std::span<const LoanOutcome> outcomes, double cpnr_cap);

nlohmann::json report_to_json(const BacktestReport& report);

/// report.json plus tables/table{1..5}_*.csv.
void write_report(const BacktestReport& report, const std::filesystem::path& out_dir);

/// Plain-text rendering of the tables.
void print_report(const BacktestReport& report, std::ostream& os);

void write_outcomes_csv(std::span<const LoanOutcome> outcomes, const std::filesystem::path& path);
std::vector<LoanOutcome> read_outcomes_csv(const std::filesystem::path& path);

}  // namespace activemargin
