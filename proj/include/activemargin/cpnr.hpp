#pragma once

// Conditional probability of negative return (CPNR) of a margin loan under a
// MarkovChain on the collateral index X = P + delta * P'.
//
// A margin call on day d happens when the index sits in one of the states
// [0, k_d), where k_d counts representative prices below the call threshold
// (omega * P0 - Q0) * (1 + r)^d. After a call on day t the collateral is sold
// on day min(t + 1, T); the loan loses money when the index is then below the
// loss threshold (P0 - Q0) * (1 + r)^day, i.e. in states [0, a_day).
//
// Three evaluators are provided:
//   paper_recursion      the marginalised recursion over p_hi(m-1) rows,
//   exact_first_passage  taboo-set propagation of the surviving mass,
//   brute_force          enumeration of every path (test oracle).

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "activemargin/markov_chain.hpp"

namespace activemargin {

/// Contract parameters of one margin loan. All currency values per share.
struct LoanTerms {
    double q0 = 0.0;             // cash margin
    double delta = 0.0;          // shares of collateral stock pledged
    double p0 = 1.0;             // purchased stock price at inception
    double p0_collateral = 1.0;  // collateral stock price at inception
    std::size_t horizon = 30;    // T, trading days
    double r = 0.0;              // risk-free rate per day
    double loan_rate = 0.0;      // R, loan rate per day
    double omega = 1.3;          // required maintenance margin ratio

    /// Range checks; adequacy is a separate question (see check_adequacy).
    void validate() const;

    double initial_index() const { return p0 + delta * p0_collateral; }
};

enum class CpnrMethod { paper_recursion, exact_first_passage, brute_force };

std::string_view to_string(CpnrMethod method);
CpnrMethod parse_method(std::string_view text);

/// Strict `S_k < threshold` is the default; inclusive `<=` exists for tests
/// that probe the discretisation of the call event.
enum class ThresholdComparison { strict, inclusive };

struct CpnrResult {
    double prob_c = 0.0;
    double prob_nc = 0.0;
    double cpnr = 0.0;
    std::vector<double> per_day_call;  // Prob{C_t}, t = 1..T at index t - 1
    std::vector<double> per_day_nc;    // Prob{NC_t}
    CpnrMethod method = CpnrMethod::paper_recursion;
    std::vector<std::size_t> k;  // call threshold index per day
    std::vector<std::size_t> a;  // loss threshold index per day
};

/// (1 + r)^d for d = 0..horizon.
std::vector<double> growth_factors(double r, std::size_t horizon);

/// Number of states whose representative price is below (or at) `threshold`.
std::size_t threshold_index(const StateSpace& states, double threshold,
                            ThresholdComparison cmp = ThresholdComparison::strict);

std::size_t call_threshold_index(const MarkovChain& chain, const LoanTerms& terms,
                                 std::size_t day,
                                 ThresholdComparison cmp = ThresholdComparison::strict);
std::size_t loss_threshold_index(const MarkovChain& chain, const LoanTerms& terms,
                                 std::size_t day,
                                 ThresholdComparison cmp = ThresholdComparison::strict);

/// k_d (or a_d) for d = 1..horizon given the day-0 threshold base and the
/// growth factors from growth_factors().
std::vector<std::size_t> threshold_indices(const StateSpace& states, double base,
                                           std::span<const double> growth,
                                           ThresholdComparison cmp = ThresholdComparison::strict);

/// Call-day masses of the exact evaluator for one k-vector.
struct ExactCallProfile {
    std::vector<std::size_t> k;
    std::vector<std::vector<double>> call_mass;  // per day d: mass in states [0, k_d)
    std::vector<double> per_day_call;
};

/// Evaluates CPNR for many threshold vectors against one (chain, h, T).
/// Holds the forward distributions e_h * P(d) and cumulative row sums of p1
/// so that each threshold configuration costs O(T * n).
class CpnrEvaluator {
public:
    CpnrEvaluator(const MarkovChain& chain, std::size_t h, std::size_t horizon);

    std::size_t horizon() const { return horizon_; }
    std::size_t states() const { return n_; }

    /// Prob{C_t} from the recursion, t = 1..T.
    std::vector<double> paper_call_by_day(std::span<const std::size_t> k) const;

    /// Prob(N | C_t) of the recursion for one day; zero denominators give 0.
    double paper_loss_given_call(std::size_t day, std::size_t k_day, std::size_t a_day) const;

    /// paper_loss_given_call(day, k, a_day) for every k in 0..n.
    std::vector<double> paper_loss_given_call_table(std::size_t day, std::size_t a_day) const;

    CpnrResult paper(std::span<const std::size_t> k, std::span<const std::size_t> a) const;

    /// Combines a precomputed call profile with loss conditionals.
    /// `loss_given_call(t)` must return the day-t conditional (t = 1..T).
    template <typename LossFn>
    static void combine(CpnrResult& result, LossFn&& loss_given_call);

    ExactCallProfile exact_call_profile(std::span<const std::size_t> k) const;
    CpnrResult exact(const ExactCallProfile& profile, std::span<const std::size_t> a) const;
    CpnrResult exact(std::span<const std::size_t> k, std::span<const std::size_t> a) const;

private:
    const MarkovChain* chain_;
    std::size_t h_;
    std::size_t horizon_;
    std::size_t n_;
    std::vector<std::vector<double>> rows_;    // e_h P(d), d = 0..T
    std::vector<std::vector<double>> prefix_;  // prefix_[d][k] = sum_{j<k} rows_[d][j]
    std::vector<std::vector<double>> suffix_;  // suffix_[d][k] = sum_{j>=k} rows_[d][j]
    std::vector<std::vector<double>> cum_;     // cum_[i][k] = sum_{j<k} p1(i, j)
};

template <typename LossFn>
void CpnrEvaluator::combine(CpnrResult& result, LossFn&& loss_given_call) {
    result.per_day_nc.assign(result.per_day_call.size(), 0.0);
    result.prob_c = 0.0;
    result.prob_nc = 0.0;
    for (std::size_t t = 0; t < result.per_day_call.size(); ++t) {
        result.per_day_nc[t] = result.per_day_call[t] * loss_given_call(t + 1);
        result.prob_c += result.per_day_call[t];
        result.prob_nc += result.per_day_nc[t];
    }
    result.cpnr = result.prob_c > 0.0 ? result.prob_nc / result.prob_c : 0.0;
}

/// Literal recursion: returns (Prob{C}, Prob{C_t} per day).
std::pair<double, std::vector<double>> prob_call_paper(const MarkovChain& chain,
                                                       const LoanTerms& terms, std::size_t h);
double prob_call_and_loss_paper(const MarkovChain& chain, const LoanTerms& terms,
                                std::size_t h);
CpnrResult prob_exact(const MarkovChain& chain, const LoanTerms& terms, std::size_t h);

/// Guard for prob_brute_force: n^T may not exceed this.
inline constexpr double kBruteForcePathLimit = 1e7;

/// Enumerates every path of T states from h. Throws PathCountError above the guard.
CpnrResult prob_brute_force(const MarkovChain& chain, const LoanTerms& terms, std::size_t h);

/// Same enumeration on explicit threshold vectors (used by tests on random instances).
CpnrResult brute_force(const MarkovChain& chain, std::size_t h,
                       std::span<const std::size_t> k, std::span<const std::size_t> a);

/// Dispatches on `method`; CPNR is 0 whenever Prob{C} is 0.
CpnrResult cpnr(const MarkovChain& chain, const LoanTerms& terms, std::size_t h,
                CpnrMethod method = CpnrMethod::paper_recursion,
                ThresholdComparison cmp = ThresholdComparison::strict);

}  // namespace activemargin
