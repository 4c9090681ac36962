#include "activemargin/markov_chain.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "activemargin/errors.hpp"

namespace activemargin {

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Matrix multiply(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) throw InvalidArgumentError("matrix shapes do not conform");
    Matrix c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += aik * b(k, j);
        }
    }
    return c;
}

double max_row_sum_error(const Matrix& m) {
    double worst = 0.0;
    for (std::size_t i = 0; i < m.rows(); ++i) {
        auto r = m.row(i);
        double s = std::accumulate(r.begin(), r.end(), 0.0);
        worst = std::max(worst, std::abs(s - 1.0));
    }
    return worst;
}

void require_stochastic(const Matrix& m, double tol, const std::string& what) {
    for (std::size_t i = 0; i < m.rows(); ++i) {
        auto r = m.row(i);
        double s = 0.0;
        for (double v : r) {
            if (!(v >= 0.0 && v <= 1.0 + tol))
                throw StochasticityError(what + ": entry outside [0,1] in row " +
                                         std::to_string(i));
            s += v;
        }
        if (!(std::abs(s - 1.0) <= tol))
            throw StochasticityError(what + ": row " + std::to_string(i) + " sums to " +
                                     std::to_string(s));
    }
}

StateSpace build_states(std::span<const double> values, std::size_t g,
                        const StateOptions& options) {
    if (g == 0) throw StateSpaceError("g must be positive");
    std::vector<double> distinct(values.begin(), values.end());
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());

    const std::size_t n = (distinct.size() + g - 1) / g;
    if (n < 2)
        throw StateSpaceError("only " + std::to_string(distinct.size()) +
                              " distinct values; cannot form two states with g = " +
                              std::to_string(g));

    StateSpace s;
    s.g = g;
    s.rep_prices.resize(n);
    s.bin_edges.resize(n + 1);
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t lo = k * g;
        const std::size_t hi = std::min(lo + g, distinct.size());
        if (options.representative == RepresentativePrice::mean) {
            double sum = 0.0;
            for (std::size_t i = lo; i < hi; ++i) sum += distinct[i];
            s.rep_prices[k] = sum / static_cast<double>(hi - lo);
        } else {
            const std::size_t len = hi - lo;
            s.rep_prices[k] = len % 2 == 1
                                  ? distinct[lo + len / 2]
                                  : 0.5 * (distinct[lo + len / 2 - 1] + distinct[lo + len / 2]);
        }
        if (k > 0) s.bin_edges[k] = 0.5 * (distinct[lo - 1] + distinct[lo]);
    }
    s.bin_edges.front() = distinct.front() - options.tick;
    s.bin_edges.back() = distinct.back() + options.tick;
    return s;
}

std::size_t classify(const StateSpace& states, double price) {
    // Interior edges e_1..e_{n-1}: the state is the number of them at or below price.
    auto first = states.bin_edges.begin() + 1;
    auto last = states.bin_edges.end() - 1;
    return static_cast<std::size_t>(std::upper_bound(first, last, price) - first);
}

std::size_t default_g(std::span<const double> values, std::size_t target_states) {
    std::vector<double> distinct(values.begin(), values.end());
    std::sort(distinct.begin(), distinct.end());
    const auto count = static_cast<std::size_t>(
        std::unique(distinct.begin(), distinct.end()) - distinct.begin());
    return std::max<std::size_t>(1, (count + target_states - 1) / target_states);
}

MarkovChain::MarkovChain(StateSpace states, std::vector<std::vector<std::size_t>> counts)
    : states_(std::move(states)), counts_(std::move(counts)) {
    const std::size_t n = states_.size();
    if (counts_.size() != n) throw InvalidArgumentError("count matrix has wrong shape");
    p1_ = Matrix(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        if (counts_[i].size() != n) throw InvalidArgumentError("count matrix has wrong shape");
        const std::size_t total = std::accumulate(counts_[i].begin(), counts_[i].end(),
                                                  std::size_t{0});
        if (total == 0) {
            uniform_rows_.push_back(i);
            for (std::size_t j = 0; j < n; ++j) p1_(i, j) = 1.0 / static_cast<double>(n);
        } else {
            for (std::size_t j = 0; j < n; ++j)
                p1_(i, j) = static_cast<double>(counts_[i][j]) / static_cast<double>(total);
        }
    }
    validate();
}

MarkovChain::MarkovChain(StateSpace states, std::vector<std::vector<std::size_t>> counts,
                         Matrix p1)
    : states_(std::move(states)), counts_(std::move(counts)), p1_(std::move(p1)) {
    const std::size_t n = states_.size();
    if (p1_.rows() != n || p1_.cols() != n || counts_.size() != n)
        throw InvalidArgumentError("chain matrices have wrong shape");
    for (std::size_t i = 0; i < n; ++i) {
        if (counts_[i].size() != n) throw InvalidArgumentError("count matrix has wrong shape");
        if (std::accumulate(counts_[i].begin(), counts_[i].end(), std::size_t{0}) == 0)
            uniform_rows_.push_back(i);
    }
    validate();
}

MarkovChain::MarkovChain(const MarkovChain& other)
    : states_(other.states_),
      counts_(other.counts_),
      p1_(other.p1_),
      uniform_rows_(other.uniform_rows_) {}

MarkovChain& MarkovChain::operator=(const MarkovChain& other) {
    if (this != &other) {
        states_ = other.states_;
        counts_ = other.counts_;
        p1_ = other.p1_;
        uniform_rows_ = other.uniform_rows_;
        std::lock_guard lock(cache_mutex_);
        power_cache_.clear();
    }
    return *this;
}

void MarkovChain::validate() const {
    const auto& s = states_;
    if (s.size() < 2) throw StateSpaceError("a chain needs at least two states");
    if (s.bin_edges.size() != s.size() + 1)
        throw StateSpaceError("bin edges must number states + 1");
    for (std::size_t k = 0; k < s.size(); ++k) {
        if (k > 0 && !(s.rep_prices[k - 1] < s.rep_prices[k]))
            throw StateSpaceError("representative prices must increase strictly");
        if (!(s.bin_edges[k] < s.bin_edges[k + 1]))
            throw StateSpaceError("bin edges must increase strictly");
        if (!(s.rep_prices[k] >= s.bin_edges[k] && s.rep_prices[k] < s.bin_edges[k + 1]))
            throw StateSpaceError("representative price outside its bin");
    }
    require_stochastic(p1_, 1e-12, "one-step transition matrix");
}

const Matrix& MarkovChain::power(std::size_t steps) const {
    if (steps == 0) throw InvalidArgumentError("matrix power needs at least one step");
    std::lock_guard lock(cache_mutex_);
    if (power_cache_.empty()) power_cache_.emplace(1, p1_);
    auto it = power_cache_.find(steps);
    if (it != power_cache_.end()) return it->second;
    auto last = std::prev(power_cache_.end());
    std::size_t have = last->first;
    while (have < steps) {
        Matrix next = multiply(power_cache_.at(have), p1_);
        ++have;
        require_stochastic(next, kStochasticTolerance,
                           "transition matrix power " + std::to_string(have));
        power_cache_.emplace(have, std::move(next));
    }
    return power_cache_.at(steps);
}

std::vector<std::vector<double>> MarkovChain::forward_distributions(std::size_t h,
                                                                    std::size_t steps) const {
    const std::size_t n = size();
    if (h >= n) throw InvalidArgumentError("initial state out of range");
    std::vector<std::vector<double>> rows(steps + 1, std::vector<double>(n, 0.0));
    rows[0][h] = 1.0;
    for (std::size_t d = 1; d <= steps; ++d) {
        const auto& prev = rows[d - 1];
        auto& cur = rows[d];
        for (std::size_t i = 0; i < n; ++i) {
            const double w = prev[i];
            if (w == 0.0) continue;
            auto r = p1_.row(i);
            for (std::size_t j = 0; j < n; ++j) cur[j] += w * r[j];
        }
        double s = 0.0;
        for (double v : cur) s += v;
        if (!(std::abs(s - 1.0) <= kStochasticTolerance))
            throw StochasticityError("distribution after " + std::to_string(d) +
                                     " steps sums to " + std::to_string(s));
    }
    return rows;
}

MarkovChain estimate(std::span<const double> values, std::size_t g,
                     const StateOptions& options) {
    if (values.size() < 2) throw InvalidArgumentError("estimation needs at least two prices");
    StateSpace states = build_states(values, g, options);
    const std::size_t n = states.size();
    std::vector<std::vector<std::size_t>> counts(n, std::vector<std::size_t>(n, 0));
    std::size_t prev = classify(states, values[0]);
    for (std::size_t t = 1; t < values.size(); ++t) {
        const std::size_t cur = classify(states, values[t]);
        ++counts[prev][cur];
        prev = cur;
    }
    return MarkovChain(std::move(states), std::move(counts));
}

nlohmann::json chain_to_json(const MarkovChain& chain) {
    nlohmann::json p1 = nlohmann::json::array();
    for (std::size_t i = 0; i < chain.size(); ++i) {
        auto r = chain.p1().row(i);
        p1.push_back(std::vector<double>(r.begin(), r.end()));
    }
    return nlohmann::json{{"g", chain.states().g},
                          {"rep_prices", chain.states().rep_prices},
                          {"bin_edges", chain.states().bin_edges},
                          {"counts", chain.counts()},
                          {"p1", std::move(p1)}};
}

MarkovChain chain_from_json(const nlohmann::json& j) {
    try {
        StateSpace s;
        s.g = j.value("g", std::size_t{1});
        s.rep_prices = j.at("rep_prices").get<std::vector<double>>();
        s.bin_edges = j.at("bin_edges").get<std::vector<double>>();
        auto counts = j.at("counts").get<std::vector<std::vector<std::size_t>>>();
        auto rows = j.at("p1").get<std::vector<std::vector<double>>>();
        Matrix p1(rows.size(), rows.empty() ? 0 : rows.front().size());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            if (rows[i].size() != p1.cols()) throw InvalidArgumentError("ragged p1 in dump");
            for (std::size_t k = 0; k < rows[i].size(); ++k) p1(i, k) = rows[i][k];
        }
        return MarkovChain(std::move(s), std::move(counts), std::move(p1));
    } catch (const nlohmann::json::exception& e) {
        throw InvalidArgumentError(std::string("malformed chain dump: ") + e.what());
    }
}

}  // namespace activemargin
