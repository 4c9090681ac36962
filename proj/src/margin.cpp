#include "activemargin/margin.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <map>
#include <tuple>

#include <omp.h>

#include "activemargin/errors.hpp"

namespace activemargin {

MarginSystem make_system(double m, double delta, double omega, double p0, double p0_collateral) {
    return MarginSystem{m, delta, omega, m * p0 - delta * p0_collateral};
}

double initial_ratio(const LoanTerms& terms) {
    if (!(terms.p0 > 0.0)) throw InvalidArgumentError("P0 must be positive");
    return (terms.q0 + terms.delta * terms.p0_collateral) / terms.p0;
}

bool check_adequacy(const LoanTerms& terms) {
    const double ratio = (terms.q0 + terms.delta * terms.p0_collateral + terms.p0) / terms.p0;
    return ratio >= terms.omega - kRatioTolerance;
}

LoanLedger run_ledger(const LoanTerms& terms, std::span<const double> purchased,
                      std::span<const double> collateral) {
    terms.validate();
    const std::size_t T = terms.horizon;
    if (purchased.size() != T || collateral.size() != T)
        throw InvalidArgumentError("ledger needs exactly T = " + std::to_string(T) +
                                   " future prices");
    LoanLedger ledger;
    ledger.terms = terms;
    ledger.sigma.resize(T);
    ledger.remaining.resize(T);
    for (std::size_t i = 1; i <= T; ++i) {
        const double p = purchased[i - 1];
        const double pc = collateral[i - 1];
        if (!(p > 0.0) || !(pc > 0.0))
            throw PriceError("nonpositive price on loan day " + std::to_string(i));
        const double cash = terms.q0 * std::pow(1.0 + terms.r, static_cast<double>(i));
        const double owed = terms.omega * terms.p0 *
                            std::pow(1.0 + terms.loan_rate, static_cast<double>(i));
        const double index = p + terms.delta * pc;
        ledger.sigma[i - 1] = owed - index;
        ledger.remaining[i - 1] = cash - owed + index;
        if (!ledger.tau && ledger.remaining[i - 1] <= 0.0) ledger.tau = i;
    }
    if (ledger.tau) ledger.tau_star = std::min(*ledger.tau + 1, T);
    ledger.exit_day = ledger.tau_star.value_or(T);

    const double d = static_cast<double>(ledger.exit_day);
    const double index = purchased[ledger.exit_day - 1] +
                         terms.delta * collateral[ledger.exit_day - 1];
    ledger.realized_return = terms.q0 * std::pow(1.0 + terms.r, d) + index -
                             terms.p0 * std::pow(1.0 + terms.loan_rate, d);
    return ledger;
}

bool call_event(const LoanTerms& terms, std::span<const double> purchased,
                std::span<const double> collateral) {
    const std::size_t T = std::min(purchased.size(), collateral.size());
    for (std::size_t i = 1; i <= T; ++i) {
        const double threshold = (terms.omega * terms.p0 - terms.q0) *
                                 std::pow(1.0 + terms.r, static_cast<double>(i));
        if (purchased[i - 1] + terms.delta * collateral[i - 1] <= threshold) return true;
    }
    return false;
}

OmegaSearchResult individualized_omega(const MarkovChain& chain, const LoanTerms& base_terms,
                                       double cpnr_cap, std::span<const double> omega_grid,
                                       CpnrMethod method, OmegaSearchStrategy strategy) {
    if (!(cpnr_cap >= 0.0 && cpnr_cap <= 1.0))
        throw InvalidArgumentError("CPNR cap must lie in [0, 1]");
    if (!std::is_sorted(omega_grid.begin(), omega_grid.end()))
        throw InvalidArgumentError("omega grid must be ascending");

    const std::size_t h = classify(chain.states(), base_terms.initial_index());
    auto terms_at = [&](double omega) {
        LoanTerms t = base_terms;
        t.omega = omega;
        return t;
    };
    // Adequacy holds exactly on a prefix of the ascending grid.
    // Values below 1 are not maintenance ratios and are skipped.
    std::size_t start = 0;
    while (start < omega_grid.size() && omega_grid[start] < 1.0) ++start;
    std::size_t adequate = start;
    while (adequate < omega_grid.size() && check_adequacy(terms_at(omega_grid[adequate])))
        ++adequate;

    std::map<std::size_t, double> memo;
    auto value = [&](std::size_t i) {
        auto it = memo.find(i);
        if (it != memo.end()) return it->second;
        double v = cpnr(chain, terms_at(omega_grid[i]), h, method).cpnr;
        memo.emplace(i, v);
        return v;
    };

    OmegaSearchResult result;
    if (start >= adequate) return result;

    bool binary = strategy == OmegaSearchStrategy::binary;
    if (strategy == OmegaSearchStrategy::automatic) {
        binary = true;
        const std::size_t span = adequate - start;
        const std::size_t probes = std::min<std::size_t>(9, span);
        double prev = 0.0;
        for (std::size_t s = 0; s < probes; ++s) {
            const std::size_t i =
                start + (probes == 1 ? 0 : s * (span - 1) / (probes - 1));
            const double v = value(i);
            if (s > 0 && v > prev) {
                binary = false;
                break;
            }
            prev = v;
        }
    }

    if (binary) {
        std::size_t lo = start, hi = adequate;
        while (lo < hi) {
            const std::size_t mid = lo + (hi - lo) / 2;
            if (value(mid) <= cpnr_cap)
                hi = mid;
            else
                lo = mid + 1;
        }
        result.used_binary_search = true;
        if (lo < adequate) result.omega = omega_grid[lo];
        return result;
    }
    for (std::size_t i = start; i < adequate; ++i) {
        if (value(i) <= cpnr_cap) {
            result.omega = omega_grid[i];
            break;
        }
    }
    return result;
}

SearchGrid make_grid(double p0, double p0_collateral) {
    if (!(p0 > 0.0) || !(p0_collateral > 0.0))
        throw InvalidArgumentError("grid needs positive inception prices");
    SearchGrid grid;
    for (int k = 30; k <= 80; ++k) grid.m_values.push_back(k / 100.0);
    for (int k = 100; k <= 150; ++k) grid.omega_values.push_back(k / 100.0);

    constexpr double a = 0.01;
    double b = kMaxStockShareOfPrice * p0 / p0_collateral;
    if (b > 1.0) {
        b = 1.0;
        grid.delta_clamped = true;
    }
    if (b <= a) {
        grid.delta_values.push_back(0.0);
    } else {
        const double step = (b - a) / 50.0;
        for (int k = 0; k <= 50; ++k) grid.delta_values.push_back(step * k);
    }
    return grid;
}

namespace {

struct SliceOutput {
    std::vector<MarginPoint> points;
    std::optional<SliceFailure> failure;
    std::size_t deterministic_count = 0;
};

bool passes_filters(double m, double omega, const LoanTerms& terms) {
    if (terms.q0 < 0.0) return false;
    if (1.0 + m < omega - kRatioTolerance) return false;
    return check_adequacy(terms);
}

LoanTerms point_terms(double m, double delta, double omega, double p0, double p0c,
                      const SearchConfig& config) {
    LoanTerms t;
    t.q0 = m * p0 - delta * p0c;
    t.delta = delta;
    t.p0 = p0;
    t.p0_collateral = p0c;
    t.horizon = config.horizon;
    t.r = config.r;
    t.loan_rate = config.loan_rate;
    t.omega = omega;
    return t;
}

void check_window(const PricePair& pair, std::size_t loan_index, const SearchConfig& config) {
    if (loan_index < config.window || loan_index >= pair.size())
        throw InsufficientDataError("loan at index " + std::to_string(loan_index) + " needs " +
                                    std::to_string(config.window) + " prior prices");
    if (config.horizon < 1) throw InvalidArgumentError("horizon must be at least one day");
    if (!(config.cpnr_cap >= 0.0 && config.cpnr_cap <= 1.0))
        throw InvalidArgumentError("CPNR cap must lie in [0, 1]");
}

std::optional<MarkovChain> slice_chain(const PricePair& pair, std::size_t loan_index,
                                       const SearchConfig& config, double delta,
                                       SliceOutput& out) {
    std::vector<double> values;
    fill_index(pair, delta, loan_index - config.window, config.window, values);
    try {
        const std::size_t g = config.g ? config.g : default_g(values, config.target_states);
        return estimate(values, g, config.states);
    } catch (const StateSpaceError& e) {
        out.failure = SliceFailure{delta, e.what()};
    } catch (const InvalidArgumentError& e) {
        out.failure = SliceFailure{delta, e.what()};
    }
    return std::nullopt;
}

SliceOutput evaluate_slice(const PricePair& pair, std::size_t loan_index,
                           const SearchConfig& config, const SearchGrid& grid, double delta) {
    SliceOutput out;
    const double p0 = pair.purchased.closes()[loan_index];
    const double p0c = pair.collateral.closes()[loan_index];
    for (double m : grid.m_values)
        for (double omega : grid.omega_values)
            if (passes_filters(m, omega, point_terms(m, delta, omega, p0, p0c, config)))
                ++out.deterministic_count;

    auto chain = slice_chain(pair, loan_index, config, delta, out);
    if (!chain) return out;

    const StateSpace& states = chain->states();
    const std::size_t h = classify(states, p0 + delta * p0c);
    const std::size_t T = config.horizon;
    const auto growth = growth_factors(config.r, T);
    const CpnrEvaluator eval(*chain, h, T);
    const bool paper = config.method == CpnrMethod::paper_recursion;

    std::map<std::vector<std::size_t>, std::vector<double>> paper_calls;
    std::map<std::vector<std::size_t>, ExactCallProfile> exact_calls;
    std::vector<std::vector<double>> loss_tables;

    for (double m : grid.m_values) {
        const double q0 = m * p0 - delta * p0c;
        if (q0 < 0.0) continue;
        const auto a = threshold_indices(states, p0 - q0, growth);
        loss_tables.clear();
        for (double omega : grid.omega_values) {
            const LoanTerms terms = point_terms(m, delta, omega, p0, p0c, config);
            if (!passes_filters(m, omega, terms)) continue;
            auto k = threshold_indices(states, terms.omega * terms.p0 - terms.q0, growth);

            CpnrResult result;
            if (paper) {
                auto it = paper_calls.find(k);
                if (it == paper_calls.end())
                    it = paper_calls.emplace(k, eval.paper_call_by_day(k)).first;
                if (loss_tables.empty()) {
                    loss_tables.reserve(T);
                    for (std::size_t t = 1; t <= T; ++t)
                        loss_tables.push_back(eval.paper_loss_given_call_table(t, a[t - 1]));
                }
                result.per_day_call = it->second;
                CpnrEvaluator::combine(
                    result, [&](std::size_t t) { return loss_tables[t - 1][k[t - 1]]; });
            } else {
                auto it = exact_calls.find(k);
                if (it == exact_calls.end())
                    it = exact_calls.emplace(k, eval.exact_call_profile(k)).first;
                result = eval.exact(it->second, a);
            }
            if (result.cpnr <= config.cpnr_cap)
                out.points.push_back(MarginPoint{m, delta, omega, terms.q0, result.cpnr});
        }
    }
    return out;
}

SliceOutput evaluate_slice_reference(const PricePair& pair, std::size_t loan_index,
                                     const SearchConfig& config, const SearchGrid& grid,
                                     double delta) {
    SliceOutput out;
    const double p0 = pair.purchased.closes()[loan_index];
    const double p0c = pair.collateral.closes()[loan_index];
    auto chain = slice_chain(pair, loan_index, config, delta, out);
    const std::size_t h = chain ? classify(chain->states(), p0 + delta * p0c) : 0;
    for (double m : grid.m_values) {
        for (double omega : grid.omega_values) {
            const LoanTerms terms = point_terms(m, delta, omega, p0, p0c, config);
            if (!passes_filters(m, omega, terms)) continue;
            ++out.deterministic_count;
            if (!chain) continue;
            const double value = cpnr(*chain, terms, h, config.method).cpnr;
            if (value <= config.cpnr_cap)
                out.points.push_back(MarginPoint{m, delta, omega, terms.q0, value});
        }
    }
    return out;
}

FeasibleSet merge(SearchGrid grid, std::vector<SliceOutput>& slices) {
    FeasibleSet set;
    set.grid = std::move(grid);
    for (auto& s : slices) {
        set.deterministic_count += s.deterministic_count;
        set.points.insert(set.points.end(), s.points.begin(), s.points.end());
        if (s.failure) set.failures.push_back(*s.failure);
    }
    return set;
}

}  // namespace

FeasibleSet feasible_set(const PricePair& pair, std::size_t loan_index, const SearchConfig& config,
                         int workers) {
    check_window(pair, loan_index, config);
    SearchGrid grid = make_grid(pair.purchased.closes()[loan_index],
                                pair.collateral.closes()[loan_index]);
    const auto slice_count = static_cast<std::ptrdiff_t>(grid.delta_values.size());
    std::vector<SliceOutput> slices(grid.delta_values.size());
    std::vector<std::exception_ptr> errors(grid.delta_values.size());

#pragma omp parallel for schedule(dynamic) num_threads(std::max(1, workers)) if (workers > 1)
    for (std::ptrdiff_t s = 0; s < slice_count; ++s) {
        try {
            slices[s] = evaluate_slice(pair, loan_index, config, grid, grid.delta_values[s]);
        } catch (...) {
            errors[s] = std::current_exception();
        }
    }
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);
    return merge(std::move(grid), slices);
}

FeasibleSet feasible_set_serial(const PricePair& pair, std::size_t loan_index,
                                const SearchConfig& config) {
    check_window(pair, loan_index, config);
    SearchGrid grid = make_grid(pair.purchased.closes()[loan_index],
                                pair.collateral.closes()[loan_index]);
    std::vector<SliceOutput> slices;
    for (double delta : grid.delta_values)
        slices.push_back(evaluate_slice_reference(pair, loan_index, config, grid, delta));
    return merge(std::move(grid), slices);
}

MarginPoint select_deduced(std::span<const MarginPoint> feasible) {
    if (feasible.empty()) throw NoFeasibleSystemError("feasible set is empty");
    const double count = static_cast<double>(feasible.size());
    double cm = 0.0, cd = 0.0, cw = 0.0;
    for (const auto& p : feasible) {
        cm += p.m;
        cd += p.delta;
        cw += p.omega;
    }
    cm /= count;
    cd /= count;
    cw /= count;

    // sum_i |x_i - x|^2 = N |x - c|^2 + const, so compare N |x - c|^2.
    std::vector<double> score(feasible.size());
    double best = 0.0;
    for (std::size_t i = 0; i < feasible.size(); ++i) {
        const auto& p = feasible[i];
        const double dm = p.m - cm, dd = p.delta - cd, dw = p.omega - cw;
        score[i] = count * (dm * dm + dd * dd + dw * dw);
        if (i == 0 || score[i] < best) best = score[i];
    }
    const MarginPoint* chosen = nullptr;
    for (std::size_t i = 0; i < feasible.size(); ++i) {
        if (score[i] > best + kSelectionTieTolerance) continue;
        const auto& p = feasible[i];
        if (!chosen || std::tie(p.m, p.delta, p.omega) <
                           std::tie(chosen->m, chosen->delta, chosen->omega))
            chosen = &p;
    }
    return *chosen;
}

}  // namespace activemargin
