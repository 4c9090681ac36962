#include "activemargin/backtest.hpp"

#include <algorithm>
#include <cmath>
#include <exception>

#include <omp.h>

#include "activemargin/errors.hpp"

namespace activemargin {

std::size_t BacktestConfig::min_length() const {
    return window + (loans_per_stock - 1) * stride + horizon + 1;
}

SearchConfig BacktestConfig::search_config() const {
    SearchConfig s;
    s.window = window;
    s.horizon = horizon;
    s.cpnr_cap = cpnr_cap;
    s.g = g;
    s.target_states = target_states;
    s.method = method;
    s.r = r;
    s.loan_rate = loan_rate;
    s.states = states;
    return s;
}

void BacktestConfig::validate() const {
    if (window < 2) throw InvalidArgumentError("window must hold at least two prices");
    if (horizon < 1) throw InvalidArgumentError("horizon must be at least one day");
    if (loans_per_stock < 1) throw InvalidArgumentError("need at least one loan per stock");
    if (stride < 1) throw InvalidArgumentError("stride must be at least one day");
    if (!(cpnr_cap >= 0.0 && cpnr_cap <= 1.0))
        throw InvalidArgumentError("CPNR cap must lie in [0, 1]");
    if (!(r >= 0.0) || !(loan_rate >= 0.0)) throw InvalidArgumentError("rates must be nonnegative");
    if (!(required_m >= 0.0) || !(required_omega >= 1.0))
        throw InvalidArgumentError("required system must have m >= 0 and omega >= 1");
}

std::string_view to_string(SystemKind kind) {
    return kind == SystemKind::deduced ? "deduced" : "required";
}

double loan_cost(const LoanOutcome& outcome) {
    const auto& t = outcome.ledger.terms;
    const double d = static_cast<double>(outcome.ledger.exit_day);
    return t.p0 * (std::pow(1.0 + t.loan_rate, d) - 1.0) +
           (t.q0 + t.delta * t.p0_collateral) * (std::pow(1.0 + t.r, d) - 1.0);
}

namespace {

LoanOutcome make_outcome(const PricePair& pair, std::size_t t0, const BacktestConfig& config,
                         SystemKind kind, const MarginSystem& system, bool fallback) {
    const auto& p = pair.purchased.closes();
    const auto& c = pair.collateral.closes();
    LoanTerms terms;
    terms.q0 = system.q0;
    terms.delta = system.delta;
    terms.p0 = p[t0];
    terms.p0_collateral = c[t0];
    terms.horizon = config.horizon;
    terms.r = config.r;
    terms.loan_rate = config.loan_rate;
    terms.omega = system.omega;

    LoanOutcome out;
    out.stock_id = pair.id();
    out.inception = pair.dates()[t0];
    out.system_kind = kind;
    out.system = system;
    out.p0 = terms.p0;
    out.p0_collateral = terms.p0_collateral;
    out.ledger = run_ledger(terms, std::span(p).subspan(t0 + 1, config.horizon),
                            std::span(c).subspan(t0 + 1, config.horizon));
    out.called = out.ledger.called();
    out.negative_return = out.ledger.negative_return();
    out.cost = loan_cost(out);
    const double stock_value = system.delta * terms.p0_collateral;
    const double total = stock_value + system.q0;
    out.p_stock = total > 0.0 ? stock_value / total : 0.0;
    out.fallback = fallback;
    return out;
}

MarginSystem required_system(const BacktestConfig& config, double delta, double p0, double p0c) {
    if (config.required_delta == RequiredDeltaPolicy::cash) delta = 0.0;
    // Keep the required loan's cash nonnegative.
    delta = std::min(delta, config.required_m * p0 / p0c);
    MarginSystem s = make_system(config.required_m, delta, config.required_omega, p0, p0c);
    s.q0 = std::max(0.0, s.q0);
    return s;
}

std::pair<LoanOutcome, LoanOutcome> run_loan(const PricePair& pair, std::size_t t0,
                                             const BacktestConfig& config,
                                             const SearchConfig& search) {
    const double p0 = pair.purchased.closes()[t0];
    const double p0c = pair.collateral.closes()[t0];
    FeasibleSet set = feasible_set(pair, t0, search, 1);
    if (set.points.empty()) {
        MarginSystem fallback = required_system(config, 0.0, p0, p0c);
        return {make_outcome(pair, t0, config, SystemKind::deduced, fallback, true),
                make_outcome(pair, t0, config, SystemKind::required, fallback, false)};
    }
    const MarginPoint star = select_deduced(set.points);
    const MarginSystem deduced{star.m, star.delta, star.omega, star.q0};
    return {make_outcome(pair, t0, config, SystemKind::deduced, deduced, false),
            make_outcome(pair, t0, config, SystemKind::required,
                         required_system(config, star.delta, p0, p0c), false)};
}

}  // namespace

std::vector<LoanOutcome> run_stock(const PricePair& pair, const BacktestConfig& config,
                                   int workers) {
    return run_backtest(std::span(&pair, 1), config, workers);
}

std::vector<LoanOutcome> run_backtest(std::span<const PricePair> pairs,
                                      const BacktestConfig& config, int workers) {
    config.validate();
    for (const auto& pair : pairs)
        if (pair.size() < config.min_length())
            throw InsufficientDataError("'" + pair.id() + "' has " + std::to_string(pair.size()) +
                                        " aligned prices; need " +
                                        std::to_string(config.min_length()));

    std::vector<std::size_t> order(pairs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return pairs[a].id() < pairs[b].id();
    });

    const std::size_t loans = config.loans_per_stock;
    const std::size_t jobs = pairs.size() * loans;
    const SearchConfig search = config.search_config();
    std::vector<LoanOutcome> out(2 * jobs);
    std::vector<std::exception_ptr> errors(jobs);

#pragma omp parallel for schedule(dynamic) num_threads(std::max(1, workers)) if (workers > 1)
    for (std::ptrdiff_t job = 0; job < static_cast<std::ptrdiff_t>(jobs); ++job) {
        const std::size_t stock = static_cast<std::size_t>(job) / loans;
        const std::size_t loan = static_cast<std::size_t>(job) % loans;
        const std::size_t t0 = config.window + loan * config.stride;
        try {
            auto [deduced, required] = run_loan(pairs[order[stock]], t0, config, search);
            out[2 * job] = std::move(deduced);
            out[2 * job + 1] = std::move(required);
        } catch (...) {
            errors[job] = std::current_exception();
        }
    }
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);
    return out;
}

bool stock_passes(std::span<const LoanOutcome> deduced_outcomes, double cpnr_cap) {
    if (deduced_outcomes.empty()) throw InvalidArgumentError("no outcomes to test");
    std::size_t negatives = 0;
    for (const auto& o : deduced_outcomes) negatives += o.negative_return ? 1 : 0;
    return static_cast<double>(negatives) / static_cast<double>(deduced_outcomes.size()) <=
           cpnr_cap;
}

std::size_t margin_call_count(std::span<const LoanOutcome> outcomes, SystemKind kind) {
    return static_cast<std::size_t>(std::count_if(outcomes.begin(), outcomes.end(), [&](const auto& o) {
        return o.system_kind == kind && o.called;
    }));
}

}  // namespace activemargin
