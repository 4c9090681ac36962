#pragma once

// Markov chain over the collateral index: binning of observed prices into
// states, transition counting and n-step transition matrices.
//
// State indices are 0-based throughout. A "threshold index" k elsewhere in
// the library is a count of states, so the states it selects are [0, k).

#include <cstddef>
#include <map>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace activemargin {

/// Dense row-major matrix of doubles.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    static Matrix identity(std::size_t n);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    std::span<const double> row(std::size_t i) const {
        return {data_.data() + i * cols_, cols_};
    }

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

Matrix multiply(const Matrix& a, const Matrix& b);

/// Largest |row sum - 1| over all rows.
double max_row_sum_error(const Matrix& m);

/// Throws StochasticityError naming `what` when any row sum is off by more than `tol`.
void require_stochastic(const Matrix& m, double tol, const std::string& what);

enum class RepresentativePrice { mean, median };

struct StateOptions {
    RepresentativePrice representative = RepresentativePrice::mean;
    /// Distance of the outer bin edges from the extreme observed values.
    double tick = 0.01;
};

struct StateSpace {
    std::size_t g = 1;
    std::vector<double> bin_edges;   // n + 1 entries
    std::vector<double> rep_prices;  // n entries, strictly increasing

    std::size_t size() const { return rep_prices.size(); }
};

/// Sorts the distinct observed values and groups every `g` consecutive ones
/// into a state (the last group may be short). Throws StateSpaceError when
/// fewer than two states result or g is zero.
StateSpace build_states(std::span<const double> values, std::size_t g,
                        const StateOptions& options = {});

/// State holding `price`; prices outside the observed range clamp to the
/// first or last state.
std::size_t classify(const StateSpace& states, double price);

/// Number of distinct values divided by `target_states`, rounded up (at least 1).
std::size_t default_g(std::span<const double> values, std::size_t target_states = 40);

/// Row-sum tolerance applied to every estimated chain and cached power.
inline constexpr double kStochasticTolerance = 1e-9;

/// A chain estimated by transition counting. Immutable apart from the
/// internally synchronised power cache, so one instance may be shared by
/// concurrent readers.
class MarkovChain {
public:
    /// Builds p1 from counts; rows without observed transitions get the
    /// uniform distribution and are listed in uniform_rows().
    MarkovChain(StateSpace states, std::vector<std::vector<std::size_t>> counts);

    /// Restores a chain with a given transition matrix (used when reloading a dump).
    MarkovChain(StateSpace states, std::vector<std::vector<std::size_t>> counts, Matrix p1);

    MarkovChain(const MarkovChain& other);
    MarkovChain& operator=(const MarkovChain& other);

    const StateSpace& states() const { return states_; }
    std::size_t size() const { return states_.size(); }
    const std::vector<std::vector<std::size_t>>& counts() const { return counts_; }
    const Matrix& p1() const { return p1_; }
    const std::vector<std::size_t>& uniform_rows() const { return uniform_rows_; }

    /// p1 raised to `steps` by repeated multiplication, memoised.
    /// Throws InvalidArgumentError for steps == 0 and StochasticityError when
    /// a product drifts from row-stochastic.
    const Matrix& power(std::size_t steps) const;

    /// Distributions e_h * p1^d for d = 0..steps (row h of P(d)), computed by
    /// forward propagation. Each is checked to sum to 1.
    std::vector<std::vector<double>> forward_distributions(std::size_t h,
                                                           std::size_t steps) const;

private:
    void validate() const;

    StateSpace states_;
    std::vector<std::vector<std::size_t>> counts_;
    Matrix p1_;
    std::vector<std::size_t> uniform_rows_;

    mutable std::mutex cache_mutex_;
    mutable std::map<std::size_t, Matrix> power_cache_;
};

/// Counts transitions between classified consecutive observations.
/// Throws StateSpaceError / InvalidArgumentError on degenerate input.
MarkovChain estimate(std::span<const double> values, std::size_t g,
                     const StateOptions& options = {});

/// Dump layout: {"g", "rep_prices", "bin_edges", "counts", "p1"}.
nlohmann::json chain_to_json(const MarkovChain& chain);
MarkovChain chain_from_json(const nlohmann::json& j);

}  // namespace activemargin
