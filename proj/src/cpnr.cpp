#include "activemargin/cpnr.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "activemargin/errors.hpp"

namespace activemargin {

void LoanTerms::validate() const {
    if (!(q0 >= 0.0)) throw InvalidArgumentError("Q0 must be nonnegative");
    if (!(delta >= 0.0)) throw InvalidArgumentError("delta must be nonnegative");
    if (!(p0 > 0.0) || !(p0_collateral > 0.0))
        throw InvalidArgumentError("inception prices must be positive");
    if (horizon < 1) throw InvalidArgumentError("horizon must be at least one day");
    if (!(r >= 0.0) || !(loan_rate >= 0.0)) throw InvalidArgumentError("rates must be nonnegative");
    if (!(omega >= 1.0)) throw InvalidArgumentError("omega must be at least 1");
}

std::string_view to_string(CpnrMethod method) {
    switch (method) {
        case CpnrMethod::paper_recursion: return "paper_recursion";
        case CpnrMethod::exact_first_passage: return "exact_first_passage";
        case CpnrMethod::brute_force: return "brute_force";
    }
    return "unknown";
}

CpnrMethod parse_method(std::string_view text) {
    if (text == "paper" || text == "paper_recursion") return CpnrMethod::paper_recursion;
    if (text == "exact" || text == "exact_first_passage") return CpnrMethod::exact_first_passage;
    if (text == "brute" || text == "brute_force") return CpnrMethod::brute_force;
    throw InvalidArgumentError("unknown CPNR method '" + std::string(text) + "'");
}

std::vector<double> growth_factors(double r, std::size_t horizon) {
    std::vector<double> g(horizon + 1);
    for (std::size_t d = 0; d <= horizon; ++d)
        g[d] = std::pow(1.0 + r, static_cast<double>(d));
    return g;
}

std::size_t threshold_index(const StateSpace& states, double threshold, ThresholdComparison cmp) {
    const auto& s = states.rep_prices;
    auto it = cmp == ThresholdComparison::strict
                  ? std::lower_bound(s.begin(), s.end(), threshold)
                  : std::upper_bound(s.begin(), s.end(), threshold);
    return static_cast<std::size_t>(it - s.begin());
}

std::size_t call_threshold_index(const MarkovChain& chain, const LoanTerms& terms,
                                 std::size_t day, ThresholdComparison cmp) {
    const double growth = std::pow(1.0 + terms.r, static_cast<double>(day));
    return threshold_index(chain.states(), (terms.omega * terms.p0 - terms.q0) * growth, cmp);
}

std::size_t loss_threshold_index(const MarkovChain& chain, const LoanTerms& terms,
                                 std::size_t day, ThresholdComparison cmp) {
    const double growth = std::pow(1.0 + terms.r, static_cast<double>(day));
    return threshold_index(chain.states(), (terms.p0 - terms.q0) * growth, cmp);
}

std::vector<std::size_t> threshold_indices(const StateSpace& states, double base,
                                           std::span<const double> growth,
                                           ThresholdComparison cmp) {
    std::vector<std::size_t> out(growth.size() - 1);
    for (std::size_t d = 1; d < growth.size(); ++d)
        out[d - 1] = threshold_index(states, base * growth[d], cmp);
    return out;
}

CpnrEvaluator::CpnrEvaluator(const MarkovChain& chain, std::size_t h, std::size_t horizon)
    : chain_(&chain), h_(h), horizon_(horizon), n_(chain.size()) {
    if (horizon < 1) throw InvalidArgumentError("horizon must be at least one day");
    rows_ = chain.forward_distributions(h, horizon);
    prefix_.assign(horizon + 1, std::vector<double>(n_ + 1, 0.0));
    suffix_.assign(horizon + 1, std::vector<double>(n_ + 1, 0.0));
    for (std::size_t d = 0; d <= horizon; ++d) {
        for (std::size_t j = 0; j < n_; ++j) prefix_[d][j + 1] = prefix_[d][j] + rows_[d][j];
        for (std::size_t j = n_; j-- > 0;) suffix_[d][j] = suffix_[d][j + 1] + rows_[d][j];
    }
    cum_.assign(n_, std::vector<double>(n_ + 1, 0.0));
    const Matrix& p1 = chain.p1();
    for (std::size_t i = 0; i < n_; ++i)
        for (std::size_t j = 0; j < n_; ++j) cum_[i][j + 1] = cum_[i][j] + p1(i, j);
}

std::vector<double> CpnrEvaluator::paper_call_by_day(std::span<const std::size_t> k) const {
    if (k.size() != horizon_) throw InvalidArgumentError("threshold vector length != horizon");
    std::vector<double> per_day(horizon_, 0.0);
    // Day 1: Prob(D_1) = sum_{i<k_1} p_hi(1); survival Prob(D̄_1) = 1 - that.
    per_day[0] = prefix_[1][k[0]];
    double survive = 1.0 - per_day[0];
    for (std::size_t m = 2; m <= horizon_; ++m) {
        const std::size_t prev_k = k[m - 2];
        const std::size_t cur_k = k[m - 1];
        const auto& row = rows_[m - 1];
        const double den = suffix_[m - 1][prev_k];
        double num = 0.0;
        for (std::size_t i = prev_k; i < n_; ++i) num += row[i] * cum_[i][cur_k];
        const double q = den > 0.0 ? num / den : 0.0;
        per_day[m - 1] = survive * q;
        survive *= 1.0 - q;
    }
    return per_day;
}

double CpnrEvaluator::paper_loss_given_call(std::size_t day, std::size_t k_day,
                                            std::size_t a_day) const {
    if (day == horizon_) {
        const double den = prefix_[day][k_day];
        return den > 0.0 ? prefix_[day][a_day] / den : 0.0;
    }
    const auto& row = rows_[day];
    double num = 0.0;
    for (std::size_t j = 0; j < k_day; ++j) num += row[j] * cum_[j][a_day];
    const double den = prefix_[day][k_day];
    return den > 0.0 ? num / den : 0.0;
}

std::vector<double> CpnrEvaluator::paper_loss_given_call_table(std::size_t day,
                                                               std::size_t a_day) const {
    std::vector<double> out(n_ + 1, 0.0);
    if (day == horizon_) {
        for (std::size_t k = 0; k <= n_; ++k) {
            const double den = prefix_[day][k];
            out[k] = den > 0.0 ? prefix_[day][a_day] / den : 0.0;
        }
        return out;
    }
    const auto& row = rows_[day];
    double num = 0.0;
    for (std::size_t k = 0; k <= n_; ++k) {
        const double den = prefix_[day][k];
        out[k] = den > 0.0 ? num / den : 0.0;
        if (k < n_) num += row[k] * cum_[k][a_day];
    }
    return out;
}

CpnrResult CpnrEvaluator::paper(std::span<const std::size_t> k,
                                std::span<const std::size_t> a) const {
    if (a.size() != horizon_) throw InvalidArgumentError("threshold vector length != horizon");
    CpnrResult result;
    result.method = CpnrMethod::paper_recursion;
    result.k.assign(k.begin(), k.end());
    result.a.assign(a.begin(), a.end());
    result.per_day_call = paper_call_by_day(k);
    combine(result, [&](std::size_t t) { return paper_loss_given_call(t, k[t - 1], a[t - 1]); });
    return result;
}

ExactCallProfile CpnrEvaluator::exact_call_profile(std::span<const std::size_t> k) const {
    if (k.size() != horizon_) throw InvalidArgumentError("threshold vector length != horizon");
    ExactCallProfile profile;
    profile.k.assign(k.begin(), k.end());
    profile.call_mass.resize(horizon_);
    profile.per_day_call.assign(horizon_, 0.0);

    const Matrix& p1 = chain_->p1();
    std::vector<double> survivors(n_, 0.0), next(n_, 0.0);
    survivors[h_] = 1.0;
    for (std::size_t d = 1; d <= horizon_; ++d) {
        std::fill(next.begin(), next.end(), 0.0);
        for (std::size_t i = 0; i < n_; ++i) {
            const double w = survivors[i];
            if (w == 0.0) continue;
            auto r = p1.row(i);
            for (std::size_t j = 0; j < n_; ++j) next[j] += w * r[j];
        }
        const std::size_t kd = k[d - 1];
        auto& mass = profile.call_mass[d - 1];
        mass.assign(next.begin(), next.begin() + static_cast<std::ptrdiff_t>(kd));
        double called = 0.0;
        for (double v : mass) called += v;
        profile.per_day_call[d - 1] = called;
        std::fill(next.begin(), next.begin() + static_cast<std::ptrdiff_t>(kd), 0.0);
        std::swap(survivors, next);
    }
    return profile;
}

CpnrResult CpnrEvaluator::exact(const ExactCallProfile& profile,
                                std::span<const std::size_t> a) const {
    if (a.size() != horizon_) throw InvalidArgumentError("threshold vector length != horizon");
    CpnrResult result;
    result.method = CpnrMethod::exact_first_passage;
    result.k = profile.k;
    result.a.assign(a.begin(), a.end());
    result.per_day_call = profile.per_day_call;
    result.per_day_nc.assign(horizon_, 0.0);
    for (std::size_t d = 1; d <= horizon_; ++d) {
        const auto& mass = profile.call_mass[d - 1];
        double nc = 0.0;
        if (d < horizon_) {
            // Liquidation the next day: one more step into the loss set of day d + 1.
            const std::size_t loss = a[d];
            for (std::size_t j = 0; j < mass.size(); ++j) nc += mass[j] * cum_[j][loss];
        } else {
            const std::size_t loss = std::min(a[d - 1], mass.size());
            for (std::size_t j = 0; j < loss; ++j) nc += mass[j];
        }
        result.per_day_nc[d - 1] = nc;
    }
    for (std::size_t t = 0; t < horizon_; ++t) {
        result.prob_c += result.per_day_call[t];
        result.prob_nc += result.per_day_nc[t];
    }
    result.cpnr = result.prob_c > 0.0 ? result.prob_nc / result.prob_c : 0.0;
    return result;
}

CpnrResult CpnrEvaluator::exact(std::span<const std::size_t> k,
                                std::span<const std::size_t> a) const {
    return exact(exact_call_profile(k), a);
}

namespace {

struct Thresholds {
    std::vector<std::size_t> k, a;
};

Thresholds thresholds_for(const MarkovChain& chain, const LoanTerms& terms,
                          ThresholdComparison cmp) {
    terms.validate();
    const auto growth = growth_factors(terms.r, terms.horizon);
    return {threshold_indices(chain.states(), terms.omega * terms.p0 - terms.q0, growth, cmp),
            threshold_indices(chain.states(), terms.p0 - terms.q0, growth, cmp)};
}

void require_state(const MarkovChain& chain, std::size_t h) {
    if (h >= chain.size())
        throw InvalidArgumentError("initial state " + std::to_string(h) + " out of range");
}

}  // namespace

std::pair<double, std::vector<double>> prob_call_paper(const MarkovChain& chain,
                                                       const LoanTerms& terms, std::size_t h) {
    require_state(chain, h);
    auto th = thresholds_for(chain, terms, ThresholdComparison::strict);
    CpnrEvaluator eval(chain, h, terms.horizon);
    auto per_day = eval.paper_call_by_day(th.k);
    double total = 0.0;
    for (double v : per_day) total += v;
    return {total, std::move(per_day)};
}

double prob_call_and_loss_paper(const MarkovChain& chain, const LoanTerms& terms,
                                std::size_t h) {
    require_state(chain, h);
    auto th = thresholds_for(chain, terms, ThresholdComparison::strict);
    return CpnrEvaluator(chain, h, terms.horizon).paper(th.k, th.a).prob_nc;
}

CpnrResult prob_exact(const MarkovChain& chain, const LoanTerms& terms, std::size_t h) {
    require_state(chain, h);
    auto th = thresholds_for(chain, terms, ThresholdComparison::strict);
    return CpnrEvaluator(chain, h, terms.horizon).exact(th.k, th.a);
}

CpnrResult brute_force(const MarkovChain& chain, std::size_t h, std::span<const std::size_t> k,
                       std::span<const std::size_t> a) {
    require_state(chain, h);
    const std::size_t n = chain.size();
    const std::size_t T = k.size();
    if (T < 1 || a.size() != T) throw InvalidArgumentError("threshold vectors must match");
    if (std::pow(static_cast<double>(n), static_cast<double>(T)) > kBruteForcePathLimit)
        throw PathCountError("brute force would enumerate " + std::to_string(n) + "^" +
                             std::to_string(T) + " paths");

    const Matrix& p1 = chain.p1();
    CpnrResult result;
    result.method = CpnrMethod::brute_force;
    result.k.assign(k.begin(), k.end());
    result.a.assign(a.begin(), a.end());
    result.per_day_call.assign(T, 0.0);
    result.per_day_nc.assign(T, 0.0);

    std::vector<std::size_t> path(T, 0);  // path[d - 1] = state on day d
    while (true) {
        double prob = 1.0;
        std::size_t prev = h;
        for (std::size_t d = 0; d < T; ++d) {
            prob *= p1(prev, path[d]);
            prev = path[d];
        }
        std::size_t tau = 0;
        for (std::size_t d = 1; d <= T; ++d) {
            if (path[d - 1] < k[d - 1]) {
                tau = d;
                break;
            }
        }
        if (tau > 0) {
            const std::size_t liquidation = std::min(tau + 1, T);
            result.per_day_call[tau - 1] += prob;
            if (path[liquidation - 1] < a[liquidation - 1]) result.per_day_nc[tau - 1] += prob;
        }
        // advance the odometer
        bool wrapped = true;
        for (std::size_t pos = T; pos-- > 0;) {
            if (++path[pos] < n) {
                wrapped = false;
                break;
            }
            path[pos] = 0;
        }
        if (wrapped) break;
    }
    for (std::size_t t = 0; t < T; ++t) {
        result.prob_c += result.per_day_call[t];
        result.prob_nc += result.per_day_nc[t];
    }
    result.cpnr = result.prob_c > 0.0 ? result.prob_nc / result.prob_c : 0.0;
    return result;
}

CpnrResult prob_brute_force(const MarkovChain& chain, const LoanTerms& terms, std::size_t h) {
    auto th = thresholds_for(chain, terms, ThresholdComparison::strict);
    return brute_force(chain, h, th.k, th.a);
}

CpnrResult cpnr(const MarkovChain& chain, const LoanTerms& terms, std::size_t h,
                CpnrMethod method, ThresholdComparison cmp) {
    require_state(chain, h);
    auto th = thresholds_for(chain, terms, cmp);
    switch (method) {
        case CpnrMethod::paper_recursion:
            return CpnrEvaluator(chain, h, terms.horizon).paper(th.k, th.a);
        case CpnrMethod::exact_first_passage:
            return CpnrEvaluator(chain, h, terms.horizon).exact(th.k, th.a);
        case CpnrMethod::brute_force:
            return brute_force(chain, h, th.k, th.a);
    }
    throw InvalidArgumentError("unknown CPNR method");
}

}  // namespace activemargin
