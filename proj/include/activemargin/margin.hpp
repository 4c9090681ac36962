#pragma once

// Loan mechanics and the active (m, delta, omega) margin system.

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "activemargin/cpnr.hpp"
#include "activemargin/marketdata.hpp"
#include "activemargin/markov_chain.hpp"

namespace activemargin {

/// Regulator minimums: 50% initial margin, 130% maintenance margin.
inline constexpr double kRequiredInitialRatio = 0.50;
inline constexpr double kRequiredMaintenanceRatio = 1.30;

/// Cap on delta * P0' / P0 (stock discount rate).
inline constexpr double kMaxStockShareOfPrice = 0.7;

/// Slack for the deterministic ratio filters; keeps grid points that sit
/// exactly on a boundary from being lost to rounding.
inline constexpr double kRatioTolerance = 1e-12;

struct MarginSystem {
    double m = kRequiredInitialRatio;
    double delta = 0.0;
    double omega = kRequiredMaintenanceRatio;
    double q0 = 0.0;  // m * P0 - delta * P0'

    friend bool operator==(const MarginSystem&, const MarginSystem&) = default;
};

/// Cash implied by (m, delta) at the given inception prices.
MarginSystem make_system(double m, double delta, double omega, double p0, double p0_collateral);

/// m0 = (Q0 + delta * P0') / P0; the inception maintenance ratio is m0 + 1.
double initial_ratio(const LoanTerms& terms);

/// (Q0 + delta * P0' + P0) / P0 >= omega, up to kRatioTolerance.
bool check_adequacy(const LoanTerms& terms);

/// Day-by-day account of one loan.
struct LoanLedger {
    LoanTerms terms;
    std::vector<double> sigma;      // required margin, days 1..T at index i - 1
    std::vector<double> remaining;  // remaining margin L_i
    std::optional<std::size_t> tau;
    std::optional<std::size_t> tau_star;
    /// Holding period: tau_star when called, T otherwise.
    std::size_t exit_day = 0;
    /// Q0 (1+r)^d + X_d - P0 (1+R)^d at the exit day.
    double realized_return = 0.0;

    bool called() const { return tau.has_value(); }
    bool negative_return() const { return realized_return < 0.0; }
};

/// Runs the ledger over prices for days 1..T. Throws InvalidArgumentError on
/// wrong lengths and PriceError on nonpositive prices.
LoanLedger run_ledger(const LoanTerms& terms, std::span<const double> purchased,
                      std::span<const double> collateral);

/// The call event stated directly on prices: some day i has
/// P_i + delta P'_i <= (omega P0 - Q0)(1 + r)^i.
bool call_event(const LoanTerms& terms, std::span<const double> purchased,
                std::span<const double> collateral);

enum class OmegaSearchStrategy { automatic, linear, binary };

struct OmegaSearchResult {
    std::optional<double> omega;
    bool used_binary_search = false;
};

/// Smallest omega in the ascending grid that keeps the loan adequate and
/// its CPNR at or below the cap. `automatic` uses bisection only when a
/// sampled probe finds CPNR non-increasing in omega.
OmegaSearchResult individualized_omega(const MarkovChain& chain, const LoanTerms& base_terms,
                                       double cpnr_cap, std::span<const double> omega_grid,
                                       CpnrMethod method = CpnrMethod::paper_recursion,
                                       OmegaSearchStrategy strategy = OmegaSearchStrategy::automatic);

/// Candidate values of m, delta and omega for one loan date.
struct SearchGrid {
    std::vector<double> m_values;
    std::vector<double> delta_values;
    std::vector<double> omega_values;
    bool delta_clamped = false;  // the upper end was capped at delta = 1
};

/// m = k/100 (k = 30..80), omega = k/100 (k = 100..150),
/// delta = (b - a)/50 * k (k = 0..50) with a = 0.01 and b = min(1, 0.7 P0 / P0').
SearchGrid make_grid(double p0, double p0_collateral);

struct SearchConfig {
    std::size_t window = 800;
    std::size_t horizon = 30;
    double cpnr_cap = 0.05;
    std::size_t g = 0;  // 0: default_g(window, target_states)
    std::size_t target_states = 40;
    CpnrMethod method = CpnrMethod::paper_recursion;
    double r = 0.0001;
    double loan_rate = 0.0001;
    StateOptions states;
};

struct MarginPoint {
    double m = 0.0;
    double delta = 0.0;
    double omega = 0.0;
    double q0 = 0.0;
    double cpnr = 0.0;

    friend bool operator==(const MarginPoint&, const MarginPoint&) = default;
};

struct SliceFailure {
    double delta = 0.0;
    std::string reason;
};

struct FeasibleSet {
    SearchGrid grid;
    std::vector<MarginPoint> points;  // delta-major, then m, then omega
    std::vector<SliceFailure> failures;
    std::size_t deterministic_count = 0;  // grid points passing the Q0 / adequacy / 1+m filters
};

/// Evaluates every grid point for a loan starting at `loan_index`: the chain
/// of each delta-slice is estimated on the `window` index values before it.
/// The delta-slices run on up to `workers` OpenMP threads; output order does
/// not depend on scheduling.
FeasibleSet feasible_set(const PricePair& pair, std::size_t loan_index, const SearchConfig& config,
                         int workers = 1);

/// Reference implementation: one cpnr() call per grid point, no sharing.
FeasibleSet feasible_set_serial(const PricePair& pair, std::size_t loan_index,
                                const SearchConfig& config);

/// Objective value sum_i |x_i - x|^2 used for selection; ties are values
/// within this distance of the minimum.
inline constexpr double kSelectionTieTolerance = 1e-9;

/// The feasible point minimising the summed squared distance to all feasible
/// points; ties go to the lexicographically smallest (m, delta, omega).
/// Throws NoFeasibleSystemError on an empty set.
MarginPoint select_deduced(std::span<const MarginPoint> feasible);

}  // namespace activemargin
